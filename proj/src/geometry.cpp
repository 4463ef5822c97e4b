#include <sdn/error.hpp>
#include <sdn/geometry.hpp>
#include <sdn/rng.hpp>

#include <Eigen/Geometry>

#include <algorithm>
#include <cmath>
#include <string>

namespace sdn {

PointCloud::PointCloud(Points points)
    : m_points(std::move(points))
{
    require(m_points.rows() > 0, "point cloud must be non-empty");
    if (!m_points.allFinite()) throw NonFiniteValue("point cloud has non-finite coordinates");
}

PointCloud::PointCloud(const std::vector<Vec3>& points)
{
    Points p(static_cast<Eigen::Index>(points.size()), 3);
    for (std::size_t i = 0; i < points.size(); ++i) p.row(static_cast<Eigen::Index>(i)) = points[i];
    *this = PointCloud(std::move(p));
}

Mesh::Mesh(Points vertices, std::vector<Face> faces)
    : m_vertices(std::move(vertices))
    , m_faces(std::move(faces))
{
    const int nv = num_vertices();
    m_edges.reserve(m_faces.size() * 3);
    for (std::size_t f = 0; f < m_faces.size(); ++f) {
        const Face& t = m_faces[f];
        for (int k = 0; k < 3; ++k) {
            if (t[k] < 0 || t[k] >= nv) {
                throw InvalidTopology(
                    "face " + std::to_string(f) + " references vertex " + std::to_string(t[k]) +
                    " but mesh has " + std::to_string(nv) + " vertices");
            }
        }
        if (t[0] == t[1] || t[1] == t[2] || t[0] == t[2]) {
            throw InvalidTopology("face " + std::to_string(f) + " repeats a vertex index");
        }
        for (int k = 0; k < 3; ++k) {
            const int a = t[k], b = t[(k + 1) % 3];
            m_edges.push_back({std::min(a, b), std::max(a, b)});
        }
    }
    std::sort(m_edges.begin(), m_edges.end());
    m_edges.erase(std::unique(m_edges.begin(), m_edges.end()), m_edges.end());
}

double Mesh::face_area(int f) const
{
    const Face& t = m_faces[static_cast<std::size_t>(f)];
    const Vec3 a = vertex(t[0]), b = vertex(t[1]), c = vertex(t[2]);
    return 0.5 * (b - a).cross(c - a).norm();
}

Mesh Mesh::with_vertices(Points vertices) const
{
    require(vertices.rows() == m_vertices.rows(), "vertex count must be preserved");
    Mesh out = *this;
    out.m_vertices = std::move(vertices);
    return out;
}

void validate_template(const Mesh& mesh)
{
    require(mesh.num_vertices() >= 4, "template needs at least 4 vertices");
    require(mesh.num_faces() >= 1, "template needs at least one face");
}

int euler_characteristic(const Mesh& mesh)
{
    return mesh.num_vertices() - mesh.num_edges() + mesh.num_faces();
}

SurfaceSamples sample_surface(const Mesh& mesh, int n, SamplingMode mode, std::uint64_t seed)
{
    require(n >= 1, "sample count must be >= 1");
    Points pts(n, 3);
    Points bary = Points::Zero(n, 3);
    std::vector<int> face(static_cast<std::size_t>(n), -1);

    if (mode == SamplingMode::vertex_only) {
        const int nv = mesh.num_vertices();
        require(nv > 0, "mesh has no vertices");
        // One incident face per vertex, for provenance.
        std::vector<std::pair<int, int>> incident(static_cast<std::size_t>(nv), {-1, 0});
        for (int f = mesh.num_faces() - 1; f >= 0; --f) {
            for (int k = 0; k < 3; ++k) incident[static_cast<std::size_t>(mesh.faces()[f][k])] = {f, k};
        }
        for (int i = 0; i < n; ++i) {
            const int v = i % nv;
            pts.row(i) = mesh.vertices().row(v);
            const auto [f, k] = incident[static_cast<std::size_t>(v)];
            face[static_cast<std::size_t>(i)] = f;
            if (f >= 0) bary(i, k) = 1.0;
        }
        return {PointCloud(std::move(pts)), std::move(face), std::move(bary)};
    }

    require(mesh.num_faces() > 0, "area sampling needs faces");
    std::vector<double> cumulative(static_cast<std::size_t>(mesh.num_faces()));
    double total = 0.0;
    for (int f = 0; f < mesh.num_faces(); ++f) {
        total += mesh.face_area(f);
        cumulative[static_cast<std::size_t>(f)] = total;
    }
    require(total > 0.0, "mesh has zero surface area");

    Rng rng(seed);
    for (int i = 0; i < n; ++i) {
        const double u = rng.uniform() * total;
        auto it = std::upper_bound(cumulative.begin(), cumulative.end(), u);
        if (it == cumulative.end()) --it;
        const int f = static_cast<int>(it - cumulative.begin());
        const double r1 = std::sqrt(rng.uniform());
        const double r2 = rng.uniform();
        const Vec3 b(1.0 - r1, r1 * (1.0 - r2), r1 * r2);
        const Face& t = mesh.faces()[static_cast<std::size_t>(f)];
        pts.row(i) = b[0] * mesh.vertices().row(t[0]) + b[1] * mesh.vertices().row(t[1]) +
                     b[2] * mesh.vertices().row(t[2]);
        bary.row(i) = b.transpose();
        face[static_cast<std::size_t>(i)] = f;
    }
    return {PointCloud(std::move(pts)), std::move(face), std::move(bary)};
}

Vec3 bounding_box_center(const Points& points)
{
    require(points.rows() > 0, "bounding box of empty set");
    const Vec3 lo = points.colwise().minCoeff().transpose();
    const Vec3 hi = points.colwise().maxCoeff().transpose();
    return 0.5 * (lo + hi);
}

Points translate(const Points& points, const Vec3& offset)
{
    Points out = points;
    out.rowwise() += offset.transpose();
    return out;
}

std::pair<PointCloud, Vec3> normalize_shape(const PointCloud& cloud)
{
    const Vec3 t = -bounding_box_center(cloud.points());
    return {PointCloud(translate(cloud.points(), t)), t};
}

Points rotate_y(const Points& points, double angle)
{
    const double c = std::cos(angle), s = std::sin(angle);
    Points out(points.rows(), 3);
    for (Eigen::Index i = 0; i < points.rows(); ++i) {
        const double x = points(i, 0), z = points(i, 2);
        out(i, 0) = c * x + s * z;
        out(i, 1) = points(i, 1);
        out(i, 2) = -s * x + c * z;
    }
    return out;
}

PointCloud rotate_y(const PointCloud& cloud, double angle)
{
    return PointCloud(rotate_y(cloud.points(), angle));
}

} // namespace sdn
