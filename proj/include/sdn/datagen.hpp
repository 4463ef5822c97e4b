#pragma once

#include <sdn/geometry.hpp>

#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

namespace sdn {

enum class TemplateKind { biped, quadruped, tube };

TemplateKind parse_template_kind(const std::string& name);
std::string to_string(TemplateKind kind);

struct Joint {
    int parent = -1; // -1 only for joint 0
    Vec3 position = Vec3::Zero();
};

/// (joint, weight) pairs; weights are non-negative and sum to 1.
using SkinWeights = std::vector<std::pair<int, double>>;

struct ArticulatedTemplate {
    TemplateKind kind = TemplateKind::biped;
    int resolution = 0;
    Mesh mesh;
    std::vector<Joint> skeleton;
    std::vector<SkinWeights> weights; // one entry per mesh vertex
    /// Joints that sample from the wide range in hard-pose mode.
    std::vector<int> key_joints;
};

/// Closed genus-0 template of capsule-like limbs on a torso, built by quad
/// extrusion and `resolution + 1` Catmull-Clark steps, then triangulated.
/// resolution must lie in [0, 4].
ArticulatedTemplate make_template(TemplateKind kind, int resolution);

/// Throws PreconditionError unless skeleton and weights are well formed.
void validate_rig(const ArticulatedTemplate& rig);

struct PoseBounds {
    double max_angle = 0.5;      // per-joint rotation magnitude bound (radians)
    double root_max_angle = 0.2; // root tilt bound; the root never yaws
    double scale_min = 0.8;
    double scale_max = 1.2;
    bool hard = false;
    double hard_max_angle = 1.4; // bound for key joints in hard mode

    void validate() const;
};

struct PoseSample {
    std::vector<Vec3> rotations; // axis-angle per joint
    double scale = 1.0;
    std::uint64_t seed = 0;
};

PoseSample identity_pose(const ArticulatedTemplate& rig);
PoseSample sample_pose(const ArticulatedTemplate& rig, const PoseBounds& bounds, std::uint64_t seed);

/// Linear blend skinning, then scaling about the origin. Vertex order is kept.
Mesh pose_shape(const ArticulatedTemplate& rig, const PoseSample& pose);

struct ManifestEntry {
    std::filesystem::path path; // relative to the manifest directory
    std::uint64_t seed = 0;
    PoseSample pose;
};

struct Manifest {
    std::filesystem::path template_path;
    std::vector<ManifestEntry> shapes;
};

/// Writes template.ply, rig.json, shape_NNNNN.ply and manifest.json to out_dir.
/// Each shape is posed, then centered; if it would leave [-0.95, 0.95]^3 it is
/// shrunk about the origin until it fits.
Manifest generate_dataset(const ArticulatedTemplate& rig, int n, const PoseBounds& bounds, std::uint64_t seed,
                          const std::filesystem::path& out_dir, int threads = 0);

Manifest read_manifest(const std::filesystem::path& manifest_path);

void save_rig(const ArticulatedTemplate& rig, const std::filesystem::path& path);
/// Skeleton and weights from `path`, mesh from `mesh_path`.
ArticulatedTemplate load_rig(const std::filesystem::path& path, const std::filesystem::path& mesh_path);

/// A dataset loaded from a manifest: template and shapes in manifest order.
struct Dataset {
    Mesh templ;
    std::vector<Mesh> shapes;
};

Dataset load_dataset(const std::filesystem::path& manifest_path);

} // namespace sdn
