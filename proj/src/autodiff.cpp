#include <sdn/autodiff.hpp>
#include <sdn/error.hpp>

#include <cmath>
#include <limits>

namespace sdn::ad {

const Tensor& Var::value() const
{
    return tape->value(id);
}

void check_finite(const Matrix& m, const std::string& what)
{
    if (!m.allFinite()) throw NonFiniteValue(what + " produced NaN or Inf");
}

bool GradSink::wants(std::size_t k) const
{
    return m_tape.requires_grad(m_inputs[k]);
}

Matrix& GradSink::at(std::size_t k)
{
    auto& n = m_tape.node(m_inputs[k]);
    if (!n.has_grad) {
        const Tensor& v = m_tape.value(m_inputs[k]);
        n.grad = Matrix::Zero(v.rows(), v.cols());
        n.has_grad = true;
    }
    return n.grad;
}

Var Tape::push(Node n)
{
    m_nodes.push_back(std::move(n));
    return Var{this, static_cast<int>(m_nodes.size()) - 1};
}

Var Tape::constant(Tensor value)
{
    Node n;
    n.owned = std::make_unique<Tensor>(std::move(value));
    n.op = "constant";
    return push(std::move(n));
}

Var Tape::leaf(Tensor value)
{
    Node n;
    n.owned = std::make_unique<Tensor>(std::move(value));
    n.requires_grad = true;
    n.op = "leaf";
    return push(std::move(n));
}

Var Tape::param(const Tensor& value, bool requires_grad)
{
    Node n;
    n.external = &value;
    n.requires_grad = requires_grad;
    n.op = "param";
    return push(std::move(n));
}

Var Tape::record(Tensor value, std::vector<Var> inputs, BackwardFn backward, const char* op)
{
    check_finite(value.mat(), op);
    Node n;
    n.owned = std::make_unique<Tensor>(std::move(value));
    n.op = op;
    for (const Var& v : inputs) {
        if (v.tape != this) throw ShapeMismatch(std::string(op) + ": input belongs to another tape");
        n.inputs.push_back(v.id);
        n.requires_grad = n.requires_grad || requires_grad(v.id);
    }
    if (n.requires_grad) n.backward = std::move(backward);
    return push(std::move(n));
}

const Tensor& Tape::value(int id) const
{
    const Node& n = m_nodes[static_cast<std::size_t>(id)];
    return n.external ? *n.external : *n.owned;
}

void Tape::backward(Var loss)
{
    if (value(loss.id).numel() != 1) {
        throw ShapeMismatch("backward() needs a scalar loss, got " + value(loss.id).shape_string());
    }
    backward(loss, Matrix::Ones(1, 1));
}

void Tape::backward(Var output, const Matrix& seed)
{
    for (auto& n : m_nodes) {
        n.has_grad = false;
        n.grad.resize(0, 0);
    }
    const Tensor& out = value(output.id);
    if (seed.rows() != out.rows() || seed.cols() != out.cols()) throw ShapeMismatch("backward seed shape");
    if (!requires_grad(output.id)) return;
    node(output.id).grad = seed;
    node(output.id).has_grad = true;

    for (int id = output.id; id >= 0; --id) {
        Node& n = node(id);
        if (!n.has_grad || !n.backward) continue;
        GradSink sink(*this, n.inputs);
        n.backward(n.grad, sink);
        for (std::size_t k = 0; k < n.inputs.size(); ++k) {
            const Node& in = node(n.inputs[k]);
            if (in.has_grad) check_finite(in.grad, std::string("gradient of ") + in.op);
        }
        // Interior gradients are no longer needed once propagated.
        if (!n.inputs.empty()) {
            n.grad.resize(0, 0);
            n.has_grad = false;
        }
    }
}

Tensor Tape::grad(Var var) const
{
    const Node& n = m_nodes[static_cast<std::size_t>(var.id)];
    const Tensor& v = value(var.id);
    if (!n.has_grad) return Tensor(v.shape());
    return Tensor(v.shape(), n.grad);
}

bool Tape::has_grad(Var var) const
{
    return m_nodes[static_cast<std::size_t>(var.id)].has_grad;
}

void Tape::add_grad_to(Var var, Matrix& dst, double s) const
{
    const Node& n = m_nodes[static_cast<std::size_t>(var.id)];
    if (!n.has_grad) return;
    if (dst.rows() != n.grad.rows() || dst.cols() != n.grad.cols()) throw ShapeMismatch("add_grad_to: shape");
    dst += s * n.grad;
}

Matrix Tape::take_grad(Var var)
{
    Node& n = node(var.id);
    if (!n.has_grad) {
        const Tensor& v = value(var.id);
        return Matrix::Zero(v.rows(), v.cols());
    }
    n.has_grad = false;
    return std::move(n.grad);
}

namespace {

void same_shape(Var a, Var b, const char* op)
{
    const Tensor &x = a.value(), &y = b.value();
    if (x.rows() != y.rows() || x.cols() != y.cols()) {
        throw ShapeMismatch(std::string(op) + ": " + x.shape_string() + " vs " + y.shape_string());
    }
}

Tensor like(Var a, Matrix m)
{
    return Tensor(a.value().shape(), std::move(m));
}

} // namespace

Var add(Var a, Var b)
{
    same_shape(a, b, "add");
    return a.tape->record(like(a, a.mat() + b.mat()), {a, b},
                          [](const Matrix& g, GradSink& s) {
                              if (s.wants(0)) s.at(0) += g;
                              if (s.wants(1)) s.at(1) += g;
                          },
                          "add");
}

Var sub(Var a, Var b)
{
    same_shape(a, b, "sub");
    return a.tape->record(like(a, a.mat() - b.mat()), {a, b},
                          [](const Matrix& g, GradSink& s) {
                              if (s.wants(0)) s.at(0) += g;
                              if (s.wants(1)) s.at(1) -= g;
                          },
                          "sub");
}

Var mul(Var a, Var b)
{
    same_shape(a, b, "mul");
    const Tensor *x = &a.value(), *y = &b.value();
    return a.tape->record(like(a, a.mat().cwiseProduct(b.mat())), {a, b},
                          [x, y](const Matrix& g, GradSink& s) {
                              if (s.wants(0)) s.at(0) += g.cwiseProduct(y->mat());
                              if (s.wants(1)) s.at(1) += g.cwiseProduct(x->mat());
                          },
                          "mul");
}

Var scale(Var a, double k)
{
    return a.tape->record(like(a, a.mat() * k), {a},
                          [k](const Matrix& g, GradSink& s) { s.at(0) += k * g; }, "scale");
}

Var matmul(Var a, Var b)
{
    const Tensor *x = &a.value(), *y = &b.value();
    if (x->cols() != y->rows()) {
        throw ShapeMismatch("matmul: " + x->shape_string() + " x " + y->shape_string());
    }
    Matrix out(x->rows(), y->cols());
    out.noalias() = x->mat() * y->mat();
    return a.tape->record(Tensor(std::move(out)), {a, b},
                          [x, y](const Matrix& g, GradSink& s) {
                              if (s.wants(0)) s.at(0).noalias() += g * y->mat().transpose();
                              if (s.wants(1)) s.at(1).noalias() += x->mat().transpose() * g;
                          },
                          "matmul");
}

Var matmul_rows(Var a, Var b, Eigen::Index begin, Eigen::Index count)
{
    const Tensor *x = &a.value(), *y = &b.value();
    if (begin < 0 || count < 0 || begin + count > y->rows() || x->cols() != count) {
        throw ShapeMismatch("matmul_rows: " + x->shape_string() + " x rows [" + std::to_string(begin) + ", " +
                            std::to_string(begin + count) + ") of " + y->shape_string());
    }
    Matrix out(x->rows(), y->cols());
    out.noalias() = x->mat() * y->mat().middleRows(begin, count);
    return a.tape->record(Tensor(std::move(out)), {a, b},
                          [x, y, begin, count](const Matrix& g, GradSink& s) {
                              if (s.wants(0)) s.at(0).noalias() += g * y->mat().middleRows(begin, count).transpose();
                              if (s.wants(1)) s.at(1).middleRows(begin, count).noalias() += x->mat().transpose() * g;
                          },
                          "matmul_rows");
}

Var add_row(Var a, Var row)
{
    const Tensor &x = a.value(), &r = row.value();
    if (r.rows() != 1 || r.cols() != x.cols()) {
        throw ShapeMismatch("add_row: " + x.shape_string() + " + " + r.shape_string());
    }
    Matrix out = x.mat();
    out.rowwise() += r.mat().row(0);
    return a.tape->record(like(a, std::move(out)), {a, row},
                          [](const Matrix& g, GradSink& s) {
                              if (s.wants(0)) s.at(0) += g;
                              if (s.wants(1)) s.at(1) += g.colwise().sum();
                          },
                          "add_row");
}

Var tanh(Var a)
{
    Matrix out = a.mat().array().tanh().matrix();
    auto y = std::make_shared<Matrix>(out);
    return a.tape->record(like(a, std::move(out)), {a},
                          [y](const Matrix& g, GradSink& s) {
                              s.at(0).array() += g.array() * (1.0 - y->array().square());
                          },
                          "tanh");
}

Var relu(Var a)
{
    return a.tape->record(like(a, a.mat().cwiseMax(0.0)), {a},
                          [x = &a.value()](const Matrix& g, GradSink& s) {
                              s.at(0).array() += (x->mat().array() > 0.0).select(g.array(), 0.0);
                          },
                          "relu");
}

Var square(Var a)
{
    return a.tape->record(like(a, a.mat().array().square().matrix()), {a},
                          [x = &a.value()](const Matrix& g, GradSink& s) {
                              s.at(0).array() += 2.0 * x->mat().array() * g.array();
                          },
                          "square");
}

Var sqrt(Var a)
{
    if ((a.mat().array() < 0.0).any()) throw NonFiniteValue("sqrt of negative value");
    Matrix out = a.mat().array().sqrt().matrix();
    auto y = std::make_shared<Matrix>(out);
    return a.tape->record(like(a, std::move(out)), {a},
                          [y](const Matrix& g, GradSink& s) {
                              s.at(0).array() += 0.5 * g.array() / y->array();
                          },
                          "sqrt");
}

Var abs(Var a)
{
    return a.tape->record(like(a, a.mat().cwiseAbs()), {a},
                          [x = &a.value()](const Matrix& g, GradSink& s) {
                              s.at(0).array() += x->mat().array().sign() * g.array();
                          },
                          "abs");
}

Var sum(Var a)
{
    return a.tape->record(Tensor::scalar(a.mat().sum()), {a},
                          [](const Matrix& g, GradSink& s) { s.at(0).array() += g(0, 0); }, "sum");
}

Var mean(Var a)
{
    const double n = static_cast<double>(a.value().numel());
    if (n == 0) throw ShapeMismatch("mean of empty tensor");
    return a.tape->record(Tensor::scalar(a.mat().sum() / n), {a},
                          [n](const Matrix& g, GradSink& s) { s.at(0).array() += g(0, 0) / n; }, "mean");
}

Var row_sum(Var a)
{
    Matrix out = a.mat().rowwise().sum();
    return a.tape->record(Tensor(std::move(out)), {a},
                          [](const Matrix& g, GradSink& s) {
                              Matrix& d = s.at(0);
                              d.colwise() += g.col(0);
                          },
                          "row_sum");
}

Var reshape(Var a, std::vector<std::int64_t> shape)
{
    const Tensor& x = a.value();
    Tensor out(std::move(shape), x.mat());
    const Eigen::Index rows = x.rows(), cols = x.cols();
    return a.tape->record(std::move(out), {a},
                          [rows, cols](const Matrix& g, GradSink& s) {
                              s.at(0) += Eigen::Map<const Matrix>(g.data(), rows, cols);
                          },
                          "reshape");
}

Var slice_rows(Var a, Eigen::Index begin, Eigen::Index count)
{
    const Tensor& x = a.value();
    if (begin < 0 || count < 0 || begin + count > x.rows()) {
        throw ShapeMismatch("slice_rows out of range for " + x.shape_string());
    }
    Matrix out = x.mat().middleRows(begin, count);
    return a.tape->record(Tensor(std::move(out)), {a},
                          [begin, count](const Matrix& g, GradSink& s) {
                              s.at(0).middleRows(begin, count) += g;
                          },
                          "slice_rows");
}

Var gather_rows(Var a, const std::vector<int>& rows)
{
    const Tensor& x = a.value();
    Matrix out(static_cast<Eigen::Index>(rows.size()), x.cols());
    for (std::size_t i = 0; i < rows.size(); ++i) {
        if (rows[i] < 0 || rows[i] >= x.rows()) throw ShapeMismatch("gather_rows index out of range");
        out.row(static_cast<Eigen::Index>(i)) = x.mat().row(rows[i]);
    }
    return a.tape->record(Tensor(std::move(out)), {a},
                          [rows](const Matrix& g, GradSink& s) {
                              Matrix& d = s.at(0);
                              for (std::size_t i = 0; i < rows.size(); ++i) {
                                  d.row(rows[i]) += g.row(static_cast<Eigen::Index>(i));
                              }
                          },
                          "gather_rows");
}

namespace {

template <typename Better>
Reduction reduce_rows(Var a, Better better, const char* op)
{
    const Tensor& x = a.value();
    if (x.rows() == 0) throw ShapeMismatch(std::string(op) + " over zero rows");
    Matrix out = x.mat().row(0);
    std::vector<int> idx(static_cast<std::size_t>(x.cols()), 0);
    for (Eigen::Index r = 1; r < x.rows(); ++r) {
        for (Eigen::Index c = 0; c < x.cols(); ++c) {
            if (better(x.mat()(r, c), out(0, c))) {
                out(0, c) = x.mat()(r, c);
                idx[static_cast<std::size_t>(c)] = static_cast<int>(r);
            }
        }
    }
    Var v = a.tape->record(Tensor({x.cols()}, std::move(out)), {a},
                           [idx](const Matrix& g, GradSink& s) {
                               Matrix& d = s.at(0);
                               for (std::size_t c = 0; c < idx.size(); ++c) {
                                   d(idx[c], static_cast<Eigen::Index>(c)) += g(0, static_cast<Eigen::Index>(c));
                               }
                           },
                           op);
    return {v, std::move(idx)};
}

} // namespace

Reduction max_over_rows(Var a)
{
    return reduce_rows(a, [](double v, double best) { return v > best; }, "max_over_rows");
}

Reduction min_over_rows(Var a)
{
    return reduce_rows(a, [](double v, double best) { return v < best; }, "min_over_rows");
}

} // namespace sdn::ad
