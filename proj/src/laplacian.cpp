#include <sdn/error.hpp>
#include <sdn/laplacian.hpp>

#include <Eigen/Geometry>

#include <algorithm>
#include <string>

namespace sdn {

namespace {

int edge_id(const std::vector<Edge>& edges, int a, int b)
{
    const Edge key{std::min(a, b), std::max(a, b)};
    const auto it = std::lower_bound(edges.begin(), edges.end(), key);
    return static_cast<int>(it - edges.begin());
}

double cotangent(const Vec3& apex, const Vec3& a, const Vec3& b)
{
    const Vec3 u = a - apex, v = b - apex;
    const double sin_norm = u.cross(v).norm();
    return sin_norm > 0.0 ? u.dot(v) / sin_norm : 0.0;
}

} // namespace

LaplacianOperator build_laplacian(const Mesh& mesh, LaplacianVariant variant)
{
    const auto& edges = mesh.edges();
    const int n = mesh.num_vertices();

    std::vector<int> incidence(edges.size(), 0);
    std::vector<double> cot_sum(edges.size(), 0.0);
    std::vector<double> area(static_cast<std::size_t>(n), 0.0);
    for (int f = 0; f < mesh.num_faces(); ++f) {
        const Face& t = mesh.faces()[static_cast<std::size_t>(f)];
        const double third = mesh.face_area(f) / 3.0;
        for (int k = 0; k < 3; ++k) {
            const int i = t[static_cast<std::size_t>(k)];
            const int j = t[static_cast<std::size_t>((k + 1) % 3)];
            const int apex = t[static_cast<std::size_t>((k + 2) % 3)];
            const int e = edge_id(edges, i, j);
            if (++incidence[static_cast<std::size_t>(e)] > 2) {
                throw NonManifoldEdge("edge (" + std::to_string(edges[static_cast<std::size_t>(e)][0]) + ", " +
                                      std::to_string(edges[static_cast<std::size_t>(e)][1]) +
                                      ") has more than two incident faces");
            }
            cot_sum[static_cast<std::size_t>(e)] += cotangent(mesh.vertex(apex), mesh.vertex(i), mesh.vertex(j));
            area[static_cast<std::size_t>(i)] += third;
        }
    }

    LaplacianOperator op;
    op.variant = variant;
    op.edge_weights.resize(edges.size());
    for (std::size_t e = 0; e < edges.size(); ++e) {
        op.edge_weights[e] = variant == LaplacianVariant::uniform ? 1.0 : std::max(0.0, 0.5 * cot_sum[e]);
    }
    if (variant == LaplacianVariant::cotangent) op.cell_areas = area;

    std::vector<Eigen::Triplet<double>> triplets;
    triplets.reserve(4 * edges.size());
    for (std::size_t e = 0; e < edges.size(); ++e) {
        const auto [i, j] = edges[e];
        const double w = op.edge_weights[e];
        const double si = variant == LaplacianVariant::uniform ? 1.0 : 1.0 / area[static_cast<std::size_t>(i)];
        const double sj = variant == LaplacianVariant::uniform ? 1.0 : 1.0 / area[static_cast<std::size_t>(j)];
        triplets.emplace_back(i, i, w * si);
        triplets.emplace_back(i, j, -w * si);
        triplets.emplace_back(j, j, w * sj);
        triplets.emplace_back(j, i, -w * sj);
    }
    op.matrix.resize(n, n);
    op.matrix.setFromTriplets(triplets.begin(), triplets.end());
    return op;
}

} // namespace sdn
