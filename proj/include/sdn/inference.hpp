#pragma once

#include <sdn/geometry.hpp>
#include <sdn/losses.hpp>
#include <sdn/network.hpp>

#include <cstdint>
#include <filesystem>
#include <functional>
#include <vector>

namespace sdn {

struct RefinementConfig {
    int iterations = 3000;
    double lr = 5e-4;
    ChamferMode chamfer_mode = ChamferMode::symmetric;
    /// Template points decoded during refinement; 0 = all template vertices,
    /// otherwise that many area-uniform surface samples.
    int template_sample_count = 0;

    void validate() const;
};

struct OrientationResult {
    int index = 0;
    double angle = 0.0;
    LatentCode code;
    double chamfer = 0.0;
    /// Symmetric Chamfer for every evaluated angle 2*pi*k/n.
    std::vector<double> chamfers;
};

/// Rotation search about +Y: rotates the (centered) shape by 2*pi*k/n for
/// k = 0..n-1, encodes it, decodes `template_points` and keeps the angle with the
/// lowest symmetric Chamfer (ties to the smallest k).
OrientationResult best_orientation(const NetworkParams& params, const Points& template_points,
                                   const PointCloud& shape, int n_orientations = 50, int threads = 1);

struct RefinementResult {
    LatentCode code;
    double chamfer = 0.0;
    double initial_chamfer = 0.0;
    int best_iteration = 0; // 0 = the initial code
};

/// Adam on the latent code only (network frozen), minimizing
/// chamfer(decode(template_points, x), shape, mode). Returns the best iterate seen,
/// so the result never has a higher loss than `init`.
RefinementResult refine_latent(const NetworkParams& params, const Points& template_points, const PointCloud& shape,
                               const LatentCode& init, const RefinementConfig& config);

struct Correspondence {
    Vec3 reference;
    Vec3 target;
    Vec3 template_point;
    int target_index = -1;
};

struct CorrespondenceSet {
    std::vector<Correspondence> pairs;
};

/// Maps template samples to deformed positions for a latent code.
using Deformer = std::function<Points(const Points& template_samples, const LatentCode& code)>;

/// Template-mediated matching: for each q_r in shape_r, find the template sample p
/// whose deformation under code_r is closest to q_r, then the point of shape_t closest
/// to the deformation of p under code_t. `template_resolution` area-uniform samples
/// of the template are used.
CorrespondenceSet extract_correspondences(const NetworkParams& params, const Mesh& templ, const PointCloud& shape_r,
                                          const LatentCode& code_r, const PointCloud& shape_t,
                                          const LatentCode& code_t, int template_resolution,
                                          std::uint64_t seed = 0);
/// Same, with an explicit deformation in place of the decoder.
CorrespondenceSet extract_correspondences(const Deformer& deform, const Mesh& templ, const PointCloud& shape_r,
                                          const LatentCode& code_r, const PointCloud& shape_t,
                                          const LatentCode& code_t, int template_resolution,
                                          std::uint64_t seed = 0);

struct CorrespondenceError {
    double mean = 0.0;
    std::vector<double> per_pair;
};

/// Mean Euclidean distance between predicted and true targets; ground_truth[i]
/// is the true target of pair i. Throws MissingGroundTruth if it is too short.
CorrespondenceError correspondence_error(const CorrespondenceSet& pred, const std::vector<Vec3>& ground_truth);

void write_correspondences_csv(const CorrespondenceSet& set, const std::filesystem::path& path);
CorrespondenceSet read_correspondences_csv(const std::filesystem::path& path);

// Full pipeline ----------------------------------------------------------------

struct MatchConfig {
    int orientations = 50;
    RefinementConfig refinement;
    /// Template samples for the matching step; 0 = 20 x template vertex count.
    int template_resolution = 0;
    std::uint64_t seed = 0;
    int threads = 1;
};

/// A shape brought into the network's frame: centered, rotated, encoded, refined.
struct ShapeFit {
    Vec3 translation = Vec3::Zero(); // added by centering
    double angle = 0.0;              // then rotated about +Y by this angle
    PointCloud canonical;            // the shape after both steps
    LatentCode encoder_code;
    LatentCode code;
    double encoder_chamfer = 0.0;
    double refined_chamfer = 0.0;
};

/// Template points used for refinement under `config`.
Points refinement_template_points(const Mesh& templ, const RefinementConfig& config, std::uint64_t seed);

ShapeFit fit_shape(const NetworkParams& params, const Mesh& templ, const PointCloud& shape,
                   const MatchConfig& config);

/// Correspondences between two fitted shapes, reported in the original input frames.
CorrespondenceSet match_fitted(const NetworkParams& params, const Mesh& templ, const PointCloud& reference,
                               const ShapeFit& ref_fit, const PointCloud& target, const ShapeFit& target_fit,
                               const MatchConfig& config);

CorrespondenceSet match_shapes(const NetworkParams& params, const Mesh& templ, const PointCloud& reference,
                               const PointCloud& target, const MatchConfig& config);

} // namespace sdn
