#include <sdn/datagen.hpp>
#include <sdn/error.hpp>
#include <sdn/mesh_io.hpp>
#include <sdn/parallel.hpp>
#include <sdn/rng.hpp>

#include <Eigen/Geometry>
#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <numbers>

namespace sdn {

TemplateKind parse_template_kind(const std::string& name)
{
    if (name == "biped") return TemplateKind::biped;
    if (name == "quadruped") return TemplateKind::quadruped;
    if (name == "tube") return TemplateKind::tube;
    throw PreconditionError("unknown template kind '" + name + "' (biped, quadruped, tube)");
}

std::string to_string(TemplateKind kind)
{
    switch (kind) {
    case TemplateKind::biped: return "biped";
    case TemplateKind::quadruped: return "quadruped";
    case TemplateKind::tube: return "tube";
    }
    return "biped";
}

namespace {

using Quad = std::array<int, 4>;

// Closed, consistently oriented quad mesh (outward normals, counter-clockwise).
struct QuadMesh {
    std::vector<Vec3> v;
    std::vector<Quad> f;

    Vec3 center(int face) const
    {
        Vec3 c = Vec3::Zero();
        for (int i : f[static_cast<std::size_t>(face)]) c += v[static_cast<std::size_t>(i)];
        return c / 4.0;
    }

    Vec3 normal(int face) const
    {
        const Quad& q = f[static_cast<std::size_t>(face)];
        const auto& p = [&](int k) -> const Vec3& { return v[static_cast<std::size_t>(q[static_cast<std::size_t>(k)])]; };
        return (p(2) - p(0)).cross(p(3) - p(1));
    }
};

// Surface of an axis-aligned box split into n[0] x n[1] x n[2] cells.
QuadMesh grid_box(const Vec3& lo, const Vec3& hi, std::array<int, 3> n)
{
    QuadMesh m;
    std::map<std::array<int, 3>, int> index;
    auto vertex = [&](std::array<int, 3> c) {
        auto [it, fresh] = index.try_emplace(c, static_cast<int>(m.v.size()));
        if (fresh) {
            Vec3 p;
            for (int a = 0; a < 3; ++a) p[a] = lo[a] + (hi[a] - lo[a]) * c[static_cast<std::size_t>(a)] / n[static_cast<std::size_t>(a)];
            m.v.push_back(p);
        }
        return it->second;
    };
    for (int a = 0; a < 3; ++a) {
        const int b = (a + 1) % 3;
        const int c = (a + 2) % 3;
        for (int side = 0; side < 2; ++side) {
            for (int u = 0; u < n[static_cast<std::size_t>(b)]; ++u) {
                for (int w = 0; w < n[static_cast<std::size_t>(c)]; ++w) {
                    auto at = [&](int du, int dw) {
                        std::array<int, 3> cell{};
                        cell[static_cast<std::size_t>(a)] = side * n[static_cast<std::size_t>(a)];
                        cell[static_cast<std::size_t>(b)] = u + du;
                        cell[static_cast<std::size_t>(c)] = w + dw;
                        return vertex(cell);
                    };
                    Quad q{at(0, 0), at(1, 0), at(1, 1), at(0, 1)};
                    if (side == 0) std::swap(q[1], q[3]);
                    m.f.push_back(q);
                }
            }
        }
    }
    return m;
}

int find_face(const QuadMesh& m, const Vec3& near)
{
    int best = 0;
    for (int i = 1; i < static_cast<int>(m.f.size()); ++i) {
        if ((m.center(i) - near).squaredNorm() < (m.center(best) - near).squaredNorm()) best = i;
    }
    return best;
}

int face_toward(const QuadMesh& m, const std::vector<int>& faces, const Vec3& dir)
{
    int best = faces.front();
    for (int f : faces) {
        if (m.normal(f).normalized().dot(dir) > m.normal(best).normalized().dot(dir)) best = f;
    }
    return best;
}

// Replaces `face` by a cap moved by `offset` and scaled about its center, joined
// by four side quads. Returns the side faces.
std::vector<int> extrude(QuadMesh& m, int face, const Vec3& offset, double scale)
{
    const Quad old = m.f[static_cast<std::size_t>(face)];
    const Vec3 c = m.center(face);
    Quad cap{};
    for (std::size_t k = 0; k < 4; ++k) {
        cap[k] = static_cast<int>(m.v.size());
        m.v.push_back(c + offset + scale * (m.v[static_cast<std::size_t>(old[k])] - c));
    }
    m.f[static_cast<std::size_t>(face)] = cap;
    std::vector<int> sides;
    for (std::size_t k = 0; k < 4; ++k) {
        const std::size_t n = (k + 1) % 4;
        sides.push_back(static_cast<int>(m.f.size()));
        m.f.push_back({old[k], old[n], cap[n], cap[k]});
    }
    return sides;
}

std::vector<int> extrude_chain(QuadMesh& m, int face, const std::vector<std::pair<Vec3, double>>& steps)
{
    std::vector<int> sides;
    for (const auto& [offset, scale] : steps) sides = extrude(m, face, offset, scale);
    return sides;
}

QuadMesh catmull_clark(const QuadMesh& m)
{
    const std::size_t nv = m.v.size();
    const std::size_t nf = m.f.size();
    std::vector<Vec3> face_point(nf);
    for (std::size_t f = 0; f < nf; ++f) face_point[f] = m.center(static_cast<int>(f));

    struct EdgeInfo {
        int id = 0;
        std::vector<int> faces;
    };
    std::map<std::pair<int, int>, EdgeInfo> edges;
    for (std::size_t f = 0; f < nf; ++f) {
        for (std::size_t k = 0; k < 4; ++k) {
            const int a = m.f[f][k];
            const int b = m.f[f][(k + 1) % 4];
            edges[{std::min(a, b), std::max(a, b)}].faces.push_back(static_cast<int>(f));
        }
    }
    QuadMesh out;
    out.v.resize(nv + edges.size() + nf);

    std::vector<Vec3> face_sum(nv, Vec3::Zero()), mid_sum(nv, Vec3::Zero());
    std::vector<int> valence(nv, 0);
    int next = static_cast<int>(nv);
    for (auto& [key, info] : edges) {
        if (info.faces.size() != 2) throw InvalidTopology("extruded mesh is not closed");
        info.id = next++;
        const Vec3& a = m.v[static_cast<std::size_t>(key.first)];
        const Vec3& b = m.v[static_cast<std::size_t>(key.second)];
        out.v[static_cast<std::size_t>(info.id)] =
            (a + b + face_point[static_cast<std::size_t>(info.faces[0])] + face_point[static_cast<std::size_t>(info.faces[1])]) / 4.0;
        for (int end : {key.first, key.second}) {
            mid_sum[static_cast<std::size_t>(end)] += (a + b) / 2.0;
            ++valence[static_cast<std::size_t>(end)];
        }
    }
    for (std::size_t f = 0; f < nf; ++f) {
        for (int i : m.f[f]) face_sum[static_cast<std::size_t>(i)] += face_point[f];
    }
    for (std::size_t i = 0; i < nv; ++i) {
        const double n = valence[i];
        out.v[i] = (face_sum[i] / n + 2.0 * mid_sum[i] / n + (n - 3.0) * m.v[i]) / n;
    }
    for (std::size_t f = 0; f < nf; ++f) {
        const int fp = static_cast<int>(nv + edges.size() + f);
        out.v[static_cast<std::size_t>(fp)] = face_point[f];
        auto edge_id = [&](int a, int b) { return edges.at({std::min(a, b), std::max(a, b)}).id; };
        const Quad& q = m.f[f];
        for (std::size_t k = 0; k < 4; ++k) {
            const int cur = q[k];
            const int nxt = q[(k + 1) % 4];
            const int prv = q[(k + 3) % 4];
            out.f.push_back({cur, edge_id(cur, nxt), fp, edge_id(prv, cur)});
        }
    }
    return out;
}

Mesh triangulate(const QuadMesh& m)
{
    Points p(static_cast<Eigen::Index>(m.v.size()), 3);
    for (std::size_t i = 0; i < m.v.size(); ++i) p.row(static_cast<Eigen::Index>(i)) = m.v[i].transpose();
    std::vector<Face> faces;
    faces.reserve(2 * m.f.size());
    for (const Quad& q : m.f) {
        const auto at = [&](std::size_t k) { return m.v[static_cast<std::size_t>(q[k])]; };
        if ((at(0) - at(2)).squaredNorm() <= (at(1) - at(3)).squaredNorm()) {
            faces.push_back({q[0], q[1], q[2]});
            faces.push_back({q[0], q[2], q[3]});
        } else {
            faces.push_back({q[0], q[1], q[3]});
            faces.push_back({q[1], q[2], q[3]});
        }
    }
    return Mesh(std::move(p), std::move(faces));
}

double segment_distance(const Vec3& p, const Vec3& a, const Vec3& b)
{
    const Vec3 ab = b - a;
    const double len2 = ab.squaredNorm();
    const double t = len2 > 0.0 ? std::clamp((p - a).dot(ab) / len2, 0.0, 1.0) : 0.0;
    return (p - (a + t * ab)).norm();
}

struct Blueprint {
    QuadMesh base;
    std::vector<Joint> skeleton;
    std::vector<Vec3> bone_end; // bone of joint j runs from its position to bone_end[j]
    std::vector<int> key_joints;
    double falloff = 0.06;
    std::size_t max_influences = 4;
};

Blueprint biped()
{
    Blueprint bp;
    QuadMesh& m = bp.base;
    m = grid_box({-0.18, -0.05, -0.09}, {0.18, 0.45, 0.09}, {3, 2, 1});
    for (double s : {1.0, -1.0}) {
        const int hip = find_face(m, {s * 0.12, -0.05, 0.0});
        const auto sides = extrude_chain(m, hip, {{{0, -0.17, 0}, 0.95}, {{0, -0.20, 0}, 0.95},
                                                  {{0, -0.18, 0}, 1.0}, {{0, -0.16, 0}, 1.0}});
        extrude(m, face_toward(m, sides, {0, 0, 1}), {0, -0.02, 0.14}, 0.9);
        const int shoulder = find_face(m, {s * 0.18, 0.325, 0.0});
        extrude_chain(m, shoulder, {{{s * 0.12, 0, 0}, 0.8}, {{s * 0.16, 0, 0}, 1.0},
                                    {{s * 0.16, 0, 0}, 0.95}, {{s * 0.14, 0, 0}, 0.9}});
    }
    const int neck = find_face(m, {0.0, 0.45, 0.0});
    const auto head = extrude_chain(m, neck, {{{0, 0.06, 0}, 0.8}, {{0, 0.08, 0}, 1.5}, {{0, 0.16, 0}, 1.0}});
    extrude(m, face_toward(m, head, {0, 0, 1}), {0, 0, 0.05}, 0.5);

    auto add = [&](int parent, Vec3 pos, Vec3 end) {
        bp.skeleton.push_back({parent, pos});
        bp.bone_end.push_back(end);
        return static_cast<int>(bp.skeleton.size()) - 1;
    };
    const int pelvis = add(-1, {0, 0.05, 0}, {0, 0.28, 0});
    const int chest = add(pelvis, {0, 0.28, 0}, {0, 0.45, 0});
    add(chest, {0, 0.45, 0}, {0, 0.75, 0});
    bp.key_joints.push_back(chest);
    for (double s : {1.0, -1.0}) {
        const int shoulder = add(chest, {s * 0.20, 0.325, 0}, {s * 0.46, 0.325, 0});
        const int elbow = add(shoulder, {s * 0.46, 0.325, 0}, {s * 0.76, 0.325, 0});
        bp.key_joints.push_back(shoulder);
        bp.key_joints.push_back(elbow);
    }
    for (double s : {1.0, -1.0}) {
        const int hip = add(pelvis, {s * 0.12, -0.08, 0}, {s * 0.12, -0.42, 0});
        const int knee = add(hip, {s * 0.12, -0.42, 0}, {s * 0.12, -0.70, 0});
        add(knee, {s * 0.12, -0.70, 0}, {s * 0.12, -0.72, 0.22});
        bp.key_joints.push_back(knee);
    }
    return bp;
}

Blueprint quadruped()
{
    Blueprint bp;
    QuadMesh& m = bp.base;
    m = grid_box({-0.15, 0.0, -0.45}, {0.15, 0.25, 0.45}, {3, 1, 3});
    for (double z : {0.3, -0.3}) {
        for (double x : {0.1, -0.1}) {
            extrude_chain(m, find_face(m, {x, 0.0, z}),
                          {{{0, -0.15, 0}, 0.9}, {{0, -0.15, 0}, 0.9}, {{0, -0.2, 0}, 0.9}});
        }
    }
    extrude_chain(m, find_face(m, {0.0, 0.125, 0.45}),
                  {{{0, 0.05, 0.1}, 0.8}, {{0, 0.08, 0.1}, 1.3}, {{0, 0.02, 0.14}, 0.9}});
    extrude_chain(m, find_face(m, {0.0, 0.125, -0.45}),
                  {{{0, 0.02, -0.1}, 0.5}, {{0, 0.03, -0.12}, 0.8}, {{0, 0.03, -0.12}, 0.8}});

    auto add = [&](int parent, Vec3 pos, Vec3 end) {
        bp.skeleton.push_back({parent, pos});
        bp.bone_end.push_back(end);
        return static_cast<int>(bp.skeleton.size()) - 1;
    };
    const int root = add(-1, {0, 0.125, -0.2}, {0, 0.125, 0.2});
    const int chest = add(root, {0, 0.125, 0.2}, {0, 0.125, 0.45});
    const int neck = add(chest, {0, 0.125, 0.45}, {0, 0.28, 0.79});
    const int tail = add(root, {0, 0.125, -0.45}, {0, 0.2, -0.79});
    bp.key_joints = {chest, neck, tail};
    for (double z : {0.3, -0.3}) {
        for (double x : {0.1, -0.1}) {
            const int hip = add(z > 0 ? chest : root, {x, 0.05, z}, {x, -0.25, z});
            bp.key_joints.push_back(add(hip, {x, -0.25, z}, {x, -0.5, z}));
        }
    }
    return bp;
}

Blueprint tube()
{
    Blueprint bp;
    bp.base = grid_box({-0.1, -0.7, -0.1}, {0.1, -0.5, 0.1}, {1, 1, 1});
    const int top = find_face(bp.base, {0.0, -0.5, 0.0});
    extrude_chain(bp.base, top, std::vector<std::pair<Vec3, double>>(12, {{0, 0.1, 0}, 1.0}));
    for (int k = 0; k <= 6; ++k) {
        const double y = -0.6 + 0.2 * k;
        bp.skeleton.push_back({k - 1, {0, y, 0}});
        bp.bone_end.push_back({0, k == 6 ? 0.7 : y + 0.2, 0});
        if (k > 0) bp.key_joints.push_back(k);
    }
    bp.max_influences = 2;
    return bp;
}

// Shrinks the blueprint so posed and scaled shapes stay well inside the unit cube.
constexpr double blueprint_scale = 0.8;

} // namespace

ArticulatedTemplate make_template(TemplateKind kind, int resolution)
{
    require(resolution >= 0 && resolution <= 4, "template resolution must lie in [0, 4]");
    Blueprint bp = kind == TemplateKind::biped ? biped() : kind == TemplateKind::quadruped ? quadruped() : tube();
    for (Vec3& v : bp.base.v) v *= blueprint_scale;
    for (Joint& j : bp.skeleton) j.position *= blueprint_scale;
    for (Vec3& e : bp.bone_end) e *= blueprint_scale;
    const double falloff = bp.falloff * blueprint_scale;

    QuadMesh q = bp.base;
    for (int level = 0; level <= resolution; ++level) q = catmull_clark(q);

    ArticulatedTemplate rig;
    rig.kind = kind;
    rig.resolution = resolution;
    rig.mesh = triangulate(q);
    rig.skeleton = bp.skeleton;
    rig.key_joints = bp.key_joints;
    if (euler_characteristic(rig.mesh) != 2) throw InvalidTopology("template is not a closed genus-0 surface");

    const std::size_t nj = rig.skeleton.size();
    rig.weights.resize(static_cast<std::size_t>(rig.mesh.num_vertices()));
    std::vector<double> dist(nj);
    std::vector<int> order(nj);
    for (int i = 0; i < rig.mesh.num_vertices(); ++i) {
        const Vec3 p = rig.mesh.vertex(i);
        for (std::size_t j = 0; j < nj; ++j) dist[j] = segment_distance(p, rig.skeleton[j].position, bp.bone_end[j]);
        for (std::size_t j = 0; j < nj; ++j) order[j] = static_cast<int>(j);
        std::stable_sort(order.begin(), order.end(),
                         [&](int a, int b) { return dist[static_cast<std::size_t>(a)] < dist[static_cast<std::size_t>(b)]; });
        const double nearest = dist[static_cast<std::size_t>(order[0])];
        SkinWeights w;
        double total = 0.0;
        for (std::size_t k = 0; k < std::min(bp.max_influences, nj); ++k) {
            const double d = (dist[static_cast<std::size_t>(order[k])] - nearest) / falloff;
            const double weight = std::exp(-d * d);
            if (weight < 1e-6) break;
            w.emplace_back(order[k], weight);
            total += weight;
        }
        for (auto& [joint, weight] : w) weight /= total;
        rig.weights[static_cast<std::size_t>(i)] = std::move(w);
    }
    validate_rig(rig);
    return rig;
}

void validate_rig(const ArticulatedTemplate& rig)
{
    const int nj = static_cast<int>(rig.skeleton.size());
    require(nj >= 1, "skeleton needs at least one joint");
    require(rig.skeleton[0].parent == -1, "joint 0 must be the root");
    for (int j = 1; j < nj; ++j) {
        const int p = rig.skeleton[static_cast<std::size_t>(j)].parent;
        require(p >= 0 && p < j, "joint " + std::to_string(j) + " must have an earlier parent");
    }
    require(static_cast<int>(rig.weights.size()) == rig.mesh.num_vertices(), "one weight set per vertex is required");
    for (std::size_t i = 0; i < rig.weights.size(); ++i) {
        const auto& w = rig.weights[i];
        require(!w.empty() && w.size() <= 4, "vertex " + std::to_string(i) + " needs 1 to 4 influences");
        double sum = 0.0;
        for (const auto& [joint, weight] : w) {
            require(joint >= 0 && joint < nj, "vertex " + std::to_string(i) + " references a missing joint");
            require(weight >= 0.0, "vertex " + std::to_string(i) + " has a negative weight");
            sum += weight;
        }
        require(std::abs(sum - 1.0) <= 1e-9, "weights of vertex " + std::to_string(i) + " do not sum to 1");
    }
    for (int k : rig.key_joints) require(k >= 0 && k < nj, "key joint out of range");
}

void PoseBounds::validate() const
{
    require(max_angle >= 0.0 && root_max_angle >= 0.0 && hard_max_angle >= 0.0, "angle bounds must be non-negative");
    require(scale_min >= 0.8 && scale_max <= 1.2 && scale_min <= scale_max, "scale bounds must lie in [0.8, 1.2]");
}

PoseSample identity_pose(const ArticulatedTemplate& rig)
{
    return {std::vector<Vec3>(rig.skeleton.size(), Vec3::Zero()), 1.0, 0};
}

PoseSample sample_pose(const ArticulatedTemplate& rig, const PoseBounds& bounds, std::uint64_t seed)
{
    bounds.validate();
    Rng rng(seed);
    PoseSample pose;
    pose.seed = seed;
    for (std::size_t j = 0; j < rig.skeleton.size(); ++j) {
        Vec3 axis;
        double bound = bounds.max_angle;
        if (j == 0) {
            const double phi = rng.uniform(0.0, 2.0 * std::numbers::pi);
            axis = {std::cos(phi), 0.0, std::sin(phi)};
            bound = bounds.root_max_angle;
        } else {
            const double z = rng.uniform(-1.0, 1.0);
            const double phi = rng.uniform(0.0, 2.0 * std::numbers::pi);
            const double r = std::sqrt(std::max(0.0, 1.0 - z * z));
            axis = {r * std::cos(phi), r * std::sin(phi), z};
            const bool key = std::find(rig.key_joints.begin(), rig.key_joints.end(), static_cast<int>(j)) !=
                             rig.key_joints.end();
            if (bounds.hard && key) bound = bounds.hard_max_angle;
        }
        pose.rotations.push_back(axis * rng.uniform(0.0, bound));
    }
    pose.scale = rng.uniform(bounds.scale_min, bounds.scale_max);
    return pose;
}

Mesh pose_shape(const ArticulatedTemplate& rig, const PoseSample& pose)
{
    const std::size_t nj = rig.skeleton.size();
    require(pose.rotations.size() == nj, "pose has " + std::to_string(pose.rotations.size()) +
                                             " rotations for a " + std::to_string(nj) + "-joint skeleton");
    std::vector<Eigen::Matrix3d> rot(nj);
    std::vector<Vec3> shift(nj);
    for (std::size_t j = 0; j < nj; ++j) {
        const Vec3& aa = pose.rotations[j];
        const double angle = aa.norm();
        const Eigen::Matrix3d local =
            angle > 0.0 ? Eigen::AngleAxisd(angle, aa / angle).toRotationMatrix() : Eigen::Matrix3d::Identity();
        const Vec3& c = rig.skeleton[j].position;
        const int p = rig.skeleton[j].parent;
        if (p < 0) {
            rot[j] = local;
            shift[j] = c - local * c;
        } else {
            const auto pp = static_cast<std::size_t>(p);
            rot[j] = rot[pp] * local;
            shift[j] = rot[pp] * (c - local * c) + shift[pp];
        }
    }
    const Points& rest = rig.mesh.vertices();
    Points out(rest.rows(), 3);
    for (Eigen::Index i = 0; i < rest.rows(); ++i) {
        const Vec3 v = rest.row(i).transpose();
        Vec3 acc = Vec3::Zero();
        for (const auto& [joint, w] : rig.weights[static_cast<std::size_t>(i)]) {
            const auto j = static_cast<std::size_t>(joint);
            acc += w * (rot[j] * v + shift[j]);
        }
        out.row(i) = (pose.scale * acc).transpose();
    }
    return rig.mesh.with_vertices(std::move(out));
}

namespace {

nlohmann::json vec_json(const Vec3& v) { return nlohmann::json::array({v.x(), v.y(), v.z()}); }

Vec3 json_vec(const nlohmann::json& j)
{
    if (!j.is_array() || j.size() != 3) throw ParseError("expected a 3-vector");
    return {j[0].get<double>(), j[1].get<double>(), j[2].get<double>()};
}

void write_text(const std::filesystem::path& path, const std::string& text)
{
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot open " + path.string() + " for writing");
    out << text;
    if (!out) throw IoError("write failed for " + path.string());
}

nlohmann::json read_json(const std::filesystem::path& path)
{
    std::ifstream in(path);
    if (!in) throw IoError("cannot open " + path.string());
    try {
        return nlohmann::json::parse(in);
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(path.string() + ": " + e.what());
    }
}

} // namespace

void save_rig(const ArticulatedTemplate& rig, const std::filesystem::path& path)
{
    nlohmann::json j;
    j["kind"] = to_string(rig.kind);
    j["resolution"] = rig.resolution;
    j["key_joints"] = rig.key_joints;
    for (const Joint& joint : rig.skeleton) {
        j["joints"].push_back({{"parent", joint.parent}, {"position", vec_json(joint.position)}});
    }
    for (const SkinWeights& w : rig.weights) {
        nlohmann::json row = nlohmann::json::array();
        for (const auto& [joint, weight] : w) row.push_back({joint, weight});
        j["weights"].push_back(row);
    }
    write_text(path, j.dump() + "\n");
}

ArticulatedTemplate load_rig(const std::filesystem::path& path, const std::filesystem::path& mesh_path)
{
    const nlohmann::json j = read_json(path);
    ArticulatedTemplate rig;
    try {
        rig.kind = parse_template_kind(j.at("kind").get<std::string>());
        rig.resolution = j.at("resolution").get<int>();
        rig.key_joints = j.at("key_joints").get<std::vector<int>>();
        for (const auto& joint : j.at("joints")) {
            rig.skeleton.push_back({joint.at("parent").get<int>(), json_vec(joint.at("position"))});
        }
        for (const auto& row : j.at("weights")) {
            SkinWeights w;
            for (const auto& pair : row) w.emplace_back(pair.at(0).get<int>(), pair.at(1).get<double>());
            rig.weights.push_back(std::move(w));
        }
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(path.string() + ": " + e.what());
    }
    rig.mesh = load_mesh(mesh_path);
    if (static_cast<int>(rig.weights.size()) != rig.mesh.num_vertices()) {
        throw DataError("rig has " + std::to_string(rig.weights.size()) + " weight sets for a " +
                        std::to_string(rig.mesh.num_vertices()) + "-vertex mesh");
    }
    validate_rig(rig);
    return rig;
}

Manifest generate_dataset(const ArticulatedTemplate& rig, int n, const PoseBounds& bounds, std::uint64_t seed,
                          const std::filesystem::path& out_dir, int threads)
{
    require(n >= 1, "dataset size must be at least 1");
    validate_rig(rig);
    bounds.validate();
    std::error_code ec;
    std::filesystem::create_directories(out_dir, ec);
    if (ec) throw IoError("cannot create " + out_dir.string() + ": " + ec.message());

    Manifest manifest;
    manifest.template_path = "template.ply";
    save_mesh(rig.mesh, out_dir / manifest.template_path, MeshFormat::ply_ascii);
    save_rig(rig, out_dir / "rig.json");

    manifest.shapes.resize(static_cast<std::size_t>(n));
    parallel_for(n, threads, [&](int i) {
        ManifestEntry& entry = manifest.shapes[static_cast<std::size_t>(i)];
        entry.seed = derive_seed(seed, Stream::dataset, static_cast<std::uint64_t>(i));
        entry.pose = sample_pose(rig, bounds, entry.seed);
        const Mesh posed = pose_shape(rig, entry.pose);
        Points p = translate(posed.vertices(), -bounding_box_center(posed.vertices()));
        const double extent = p.cwiseAbs().maxCoeff();
        if (extent > 0.95) p *= 0.95 / extent;
        char name[32];
        std::snprintf(name, sizeof name, "shape_%05d.ply", i);
        entry.path = name;
        save_mesh(posed.with_vertices(std::move(p)), out_dir / entry.path, MeshFormat::ply_ascii);
    });

    nlohmann::json j;
    j["template"] = manifest.template_path.generic_string();
    j["rig"] = "rig.json";
    j["correspondence"] = "by-vertex-index";
    j["shapes"] = nlohmann::json::array();
    for (const ManifestEntry& e : manifest.shapes) {
        nlohmann::json pose = nlohmann::json::array();
        for (const Vec3& r : e.pose.rotations) pose.push_back(vec_json(r));
        j["shapes"].push_back({{"path", e.path.generic_string()}, {"seed", e.seed}, {"pose", pose}, {"scale", e.pose.scale}});
    }
    write_text(out_dir / "manifest.json", j.dump(2) + "\n");
    return manifest;
}

Manifest read_manifest(const std::filesystem::path& manifest_path)
{
    const nlohmann::json j = read_json(manifest_path);
    Manifest m;
    try {
        if (j.at("correspondence").get<std::string>() != "by-vertex-index") {
            throw DataError(manifest_path.string() + ": unsupported correspondence encoding");
        }
        m.template_path = j.at("template").get<std::string>();
        for (const auto& s : j.at("shapes")) {
            ManifestEntry e;
            e.path = s.at("path").get<std::string>();
            e.seed = s.value("seed", std::uint64_t{0});
            if (s.contains("pose")) {
                for (const auto& r : s.at("pose")) e.pose.rotations.push_back(json_vec(r));
            }
            e.pose.scale = s.value("scale", 1.0);
            e.pose.seed = e.seed;
            m.shapes.push_back(std::move(e));
        }
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(manifest_path.string() + ": " + e.what());
    }
    if (m.shapes.empty()) throw DataError(manifest_path.string() + ": manifest lists no shapes");
    return m;
}

Dataset load_dataset(const std::filesystem::path& manifest_path)
{
    const Manifest m = read_manifest(manifest_path);
    const std::filesystem::path dir = manifest_path.parent_path();
    Dataset d;
    d.templ = load_mesh(dir / m.template_path);
    for (const ManifestEntry& e : m.shapes) {
        Mesh shape = load_mesh(dir / e.path);
        if (shape.num_vertices() != d.templ.num_vertices()) {
            throw DataError(e.path.string() + " has " + std::to_string(shape.num_vertices()) +
                            " vertices; the template has " + std::to_string(d.templ.num_vertices()));
        }
        d.shapes.push_back(std::move(shape));
    }
    return d;
}

} // namespace sdn
