#pragma once

#include <Eigen/Core>

#include <array>
#include <cstdint>
#include <utility>
#include <vector>

namespace sdn {

using Vec3 = Eigen::Vector3d;
/// N x 3 row-major coordinate block; row i is point i.
using Points = Eigen::Matrix<double, Eigen::Dynamic, 3, Eigen::RowMajor>;
using Face = std::array<int, 3>;
using Edge = std::array<int, 2>;

/// Unordered, non-empty set of finite 3D points.
class PointCloud {
public:
    PointCloud() = default;
    explicit PointCloud(Points points);
    explicit PointCloud(const std::vector<Vec3>& points);

    int size() const { return static_cast<int>(m_points.rows()); }
    bool empty() const { return m_points.rows() == 0; }
    Vec3 operator[](int i) const { return m_points.row(i).transpose(); }
    const Points& points() const { return m_points; }

private:
    Points m_points;
};

/// Triangle mesh. Edges are derived from faces: sorted (i < j) and deduplicated,
/// in lexicographic order.
class Mesh {
public:
    Mesh() = default;
    Mesh(Points vertices, std::vector<Face> faces);

    int num_vertices() const { return static_cast<int>(m_vertices.rows()); }
    int num_faces() const { return static_cast<int>(m_faces.size()); }
    int num_edges() const { return static_cast<int>(m_edges.size()); }

    const Points& vertices() const { return m_vertices; }
    const std::vector<Face>& faces() const { return m_faces; }
    const std::vector<Edge>& edges() const { return m_edges; }
    Vec3 vertex(int i) const { return m_vertices.row(i).transpose(); }

    PointCloud vertex_cloud() const { return PointCloud(m_vertices); }
    double face_area(int f) const;

    /// Same connectivity, new positions.
    Mesh with_vertices(Points vertices) const;

private:
    Points m_vertices;
    std::vector<Face> m_faces;
    std::vector<Edge> m_edges;
};

/// Throws PreconditionError unless the mesh can serve as a template
/// (at least 4 vertices and 1 face).
void validate_template(const Mesh& mesh);

/// V - E + F.
int euler_characteristic(const Mesh& mesh);

enum class SamplingMode { uniform_area, vertex_only };

/// Surface samples with provenance: point i lies on face[i] at barycentric[i].
struct SurfaceSamples {
    PointCloud cloud;
    std::vector<int> face;
    Points barycentric;
};

SurfaceSamples sample_surface(const Mesh& mesh, int n, SamplingMode mode, std::uint64_t seed);

/// Centers the bounding box at the origin. The returned translation was added
/// to every point, so subtracting it restores the input.
std::pair<PointCloud, Vec3> normalize_shape(const PointCloud& cloud);

Vec3 bounding_box_center(const Points& points);

/// Right-handed rotation about +Y: (1,0,0) at pi/2 maps to (0,0,-1).
PointCloud rotate_y(const PointCloud& cloud, double angle);
Points rotate_y(const Points& points, double angle);

Points translate(const Points& points, const Vec3& offset);

} // namespace sdn
