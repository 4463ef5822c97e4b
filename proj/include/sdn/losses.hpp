#pragma once

#include <sdn/autodiff.hpp>
#include <sdn/geometry.hpp>
#include <sdn/laplacian.hpp>

#include <string>

namespace sdn {

enum class ChamferMode { symmetric, a_to_b, b_to_a };

ChamferMode parse_chamfer_mode(const std::string& name);
std::string to_string(ChamferMode mode);

/// Regularization weights of the unsupervised loss.
struct LossWeights {
    double lambda_lap = 5e-3;
    double lambda_edges = 5e-3;
};

/// Sum over j of |predicted_j - target_j|^2. Both inputs N x 3.
ad::Var supervised_loss(ad::Var predicted, ad::Var target);
double supervised_loss(const Points& predicted, const Points& target);

/// Chamfer distance with squared distances:
///   a_to_b = sum_{p in a} min_{q in b} |p - q|^2,  b_to_a likewise, symmetric = both.
/// Nearest neighbors are found on the current values with a k-d tree; the
/// gradient flows through the selected pairs only.
ad::Var chamfer(ad::Var a, ad::Var b, ChamferMode mode);
double chamfer(const Points& a, const Points& b, ChamferMode mode);

/// Mean over template edges of | |V'_i - V'_j| / |V_i - V_j| - 1 |.
/// Throws DegenerateEdge for template edges shorter than 1e-12.
ad::Var edge_loss(const Mesh& templ, ad::Var deformed);
double edge_loss(const Mesh& templ, const Points& deformed);

/// (1/|V|) sum_i |(L V')_i - (L V)_i|^2.
ad::Var laplacian_loss(const LaplacianOperator& op, const Points& template_vertices, ad::Var deformed);
double laplacian_loss(const LaplacianOperator& op, const Points& template_vertices, const Points& deformed);

/// chamfer(deformed, target, symmetric) + lambda_lap * laplacian + lambda_edges * edges.
ad::Var unsupervised_loss(const Mesh& templ, ad::Var deformed, ad::Var target, const LossWeights& weights,
                          const LaplacianOperator& laplacian);
double unsupervised_loss(const Mesh& templ, const Points& deformed, const Points& target,
                         const LossWeights& weights, const LaplacianOperator& laplacian);

} // namespace sdn
