#include <sdn/error.hpp>
#include <sdn/losses.hpp>
#include <sdn/nn_index.hpp>

#include <cmath>

namespace sdn {

ChamferMode parse_chamfer_mode(const std::string& name)
{
    if (name == "symmetric") return ChamferMode::symmetric;
    if (name == "a_to_b") return ChamferMode::a_to_b;
    if (name == "b_to_a") return ChamferMode::b_to_a;
    throw PreconditionError("unknown chamfer mode '" + name + "' (symmetric, a_to_b, b_to_a)");
}

std::string to_string(ChamferMode mode)
{
    switch (mode) {
    case ChamferMode::symmetric: return "symmetric";
    case ChamferMode::a_to_b: return "a_to_b";
    case ChamferMode::b_to_a: return "b_to_a";
    }
    return "?";
}

namespace {

void check_points(ad::Var v, const char* what)
{
    if (v.value().cols() != 3) throw ShapeMismatch(std::string(what) + " must be N x 3");
}

template <typename F>
double evaluate(F&& f)
{
    ad::Tape tape;
    return f(tape).value().item();
}

// sum_{p in from} |p - nearest(to, p)|^2
ad::Var directed_chamfer(ad::Var from, ad::Var to)
{
    const NearestNeighborIndex index(Points(to.mat()));
    std::vector<int> nearest(static_cast<std::size_t>(from.value().rows()));
    for (Eigen::Index i = 0; i < from.value().rows(); ++i) {
        nearest[static_cast<std::size_t>(i)] = index.query(from.mat().row(i).transpose()).index;
    }
    return ad::sum(ad::square(ad::sub(from, ad::gather_rows(to, nearest))));
}

} // namespace

ad::Var supervised_loss(ad::Var predicted, ad::Var target)
{
    check_points(predicted, "predicted");
    check_points(target, "target");
    if (predicted.value().rows() != target.value().rows()) {
        throw CardinalityMismatch("predicted has " + std::to_string(predicted.value().rows()) + " points, target has " +
                                  std::to_string(target.value().rows()));
    }
    return ad::sum(ad::square(ad::sub(predicted, target)));
}

double supervised_loss(const Points& predicted, const Points& target)
{
    return evaluate([&](ad::Tape& t) {
        return supervised_loss(t.constant(Tensor(Matrix(predicted))), t.constant(Tensor(Matrix(target))));
    });
}

ad::Var chamfer(ad::Var a, ad::Var b, ChamferMode mode)
{
    check_points(a, "chamfer input a");
    check_points(b, "chamfer input b");
    require(a.value().rows() > 0 && b.value().rows() > 0, "chamfer inputs must be non-empty");
    switch (mode) {
    case ChamferMode::a_to_b: return directed_chamfer(a, b);
    case ChamferMode::b_to_a: return directed_chamfer(b, a);
    case ChamferMode::symmetric: break;
    }
    return ad::add(directed_chamfer(a, b), directed_chamfer(b, a));
}

double chamfer(const Points& a, const Points& b, ChamferMode mode)
{
    return evaluate([&](ad::Tape& t) {
        return chamfer(t.constant(Tensor(Matrix(a))), t.constant(Tensor(Matrix(b))), mode);
    });
}

ad::Var edge_loss(const Mesh& templ, ad::Var deformed)
{
    check_points(deformed, "deformed");
    if (deformed.value().rows() != templ.num_vertices()) {
        throw CardinalityMismatch("deformed has " + std::to_string(deformed.value().rows()) +
                                  " vertices, template has " + std::to_string(templ.num_vertices()));
    }
    const auto& edges = templ.edges();
    require(!edges.empty(), "edge loss needs a template with edges");
    const Matrix& v = deformed.mat();
    const double inv_count = 1.0 / static_cast<double>(edges.size());

    // Per edge: rest length and signed gradient factor sign(r) / (|E| L0 l).
    auto factors = std::make_shared<std::vector<double>>(edges.size());
    double total = 0.0;
    for (std::size_t e = 0; e < edges.size(); ++e) {
        const auto [i, j] = edges[e];
        const double rest = (templ.vertex(i) - templ.vertex(j)).norm();
        if (rest < 1e-12) {
            throw DegenerateEdge("template edge (" + std::to_string(i) + ", " + std::to_string(j) + ") has length " +
                                 std::to_string(rest));
        }
        const double len = (v.row(i) - v.row(j)).norm();
        const double r = len / rest - 1.0;
        total += std::abs(r);
        const double sign = r > 0.0 ? 1.0 : (r < 0.0 ? -1.0 : 0.0);
        (*factors)[e] = len > 0.0 ? sign * inv_count / (rest * len) : 0.0;
    }
    const Tensor* values = &deformed.value();
    return deformed.tape->record(
        Tensor::scalar(total * inv_count), {deformed},
        [&edges, factors, values](const Matrix& g, ad::GradSink& s) {
            Matrix& d = s.at(0);
            const Matrix& v = values->mat();
            for (std::size_t e = 0; e < edges.size(); ++e) {
                const auto [i, j] = edges[e];
                const Eigen::RowVector3d step = (g(0, 0) * (*factors)[e]) * (v.row(i) - v.row(j));
                d.row(i) += step;
                d.row(j) -= step;
            }
        },
        "edge_loss");
}

double edge_loss(const Mesh& templ, const Points& deformed)
{
    return evaluate([&](ad::Tape& t) { return edge_loss(templ, t.constant(Tensor(Matrix(deformed)))); });
}

ad::Var laplacian_loss(const LaplacianOperator& op, const Points& template_vertices, ad::Var deformed)
{
    check_points(deformed, "deformed");
    const Eigen::Index n = op.matrix.rows();
    if (deformed.value().rows() != n || template_vertices.rows() != n) {
        throw CardinalityMismatch("laplacian of size " + std::to_string(n) + " applied to " +
                                  std::to_string(deformed.value().rows()) + " deformed and " +
                                  std::to_string(template_vertices.rows()) + " template vertices");
    }
    const Matrix diff = deformed.mat() - Matrix(template_vertices);
    auto residual = std::make_shared<Matrix>(op.matrix * diff);
    const double inv_n = 1.0 / static_cast<double>(n);
    const double value = residual->squaredNorm() * inv_n;
    const SparseMatrix* m = &op.matrix;
    return deformed.tape->record(
        Tensor::scalar(value), {deformed},
        [m, residual, inv_n](const Matrix& g, ad::GradSink& s) {
            s.at(0).noalias() += (2.0 * inv_n * g(0, 0)) * (m->transpose() * (*residual));
        },
        "laplacian_loss");
}

double laplacian_loss(const LaplacianOperator& op, const Points& template_vertices, const Points& deformed)
{
    return evaluate(
        [&](ad::Tape& t) { return laplacian_loss(op, template_vertices, t.constant(Tensor(Matrix(deformed)))); });
}

ad::Var unsupervised_loss(const Mesh& templ, ad::Var deformed, ad::Var target, const LossWeights& weights,
                          const LaplacianOperator& laplacian)
{
    require(weights.lambda_lap >= 0.0 && weights.lambda_edges >= 0.0, "loss weights must be non-negative");
    ad::Var loss = chamfer(deformed, target, ChamferMode::symmetric);
    if (weights.lambda_lap != 0.0) {
        loss = ad::add(loss, ad::scale(laplacian_loss(laplacian, templ.vertices(), deformed), weights.lambda_lap));
    }
    if (weights.lambda_edges != 0.0) {
        loss = ad::add(loss, ad::scale(edge_loss(templ, deformed), weights.lambda_edges));
    }
    return loss;
}

double unsupervised_loss(const Mesh& templ, const Points& deformed, const Points& target, const LossWeights& weights,
                         const LaplacianOperator& laplacian)
{
    return evaluate([&](ad::Tape& t) {
        return unsupervised_loss(templ, t.constant(Tensor(Matrix(deformed))), t.constant(Tensor(Matrix(target))),
                                 weights, laplacian);
    });
}

} // namespace sdn
