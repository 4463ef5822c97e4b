#pragma once

#include <sdn/geometry.hpp>

#include <Eigen/SparseCore>

#include <vector>

namespace sdn {

enum class LaplacianVariant { uniform, cotangent };

using SparseMatrix = Eigen::SparseMatrix<double, Eigen::RowMajor>;

/// Discrete Laplacian of a triangle mesh, with zero row sums.
///
/// uniform:   L_ii = deg(i), L_ij = -1 for every edge (i, j).
/// cotangent: [L V]_i = 1/area_i * sum_j w_ij (V_i - V_j), where
///            w_ij = max(0, (cot a_ij + cot b_ij) / 2) over the angles opposite
///            edge (i, j) (one angle on boundary edges) and area_i is one third
///            of the area of the faces around vertex i.
struct LaplacianOperator {
    LaplacianVariant variant = LaplacianVariant::uniform;
    SparseMatrix matrix;
    /// Unnormalized per-edge weights aligned with Mesh::edges() (1 for uniform).
    std::vector<double> edge_weights;
    /// Per-vertex cell areas (cotangent only; empty for uniform).
    std::vector<double> cell_areas;

    int size() const { return static_cast<int>(matrix.rows()); }
    Points apply(const Points& v) const { return matrix * v; }
};

/// Throws NonManifoldEdge if an edge has more than two incident faces.
LaplacianOperator build_laplacian(const Mesh& mesh, LaplacianVariant variant);

} // namespace sdn
