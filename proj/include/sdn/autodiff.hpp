#pragma once

#include <sdn/tensor.hpp>

#include <functional>
#include <memory>
#include <string>
#include <vector>

namespace sdn::ad {

class Tape;

/// Handle to a node on a tape.
struct Var {
    Tape* tape = nullptr;
    int id = -1;

    const Tensor& value() const;
    const Matrix& mat() const { return value().mat(); }
    bool valid() const { return tape != nullptr && id >= 0; }
};

/// Gradient accumulators of a node's inputs, handed to its backward rule.
class GradSink {
public:
    GradSink(Tape& tape, const std::vector<int>& inputs)
        : m_tape(tape)
        , m_inputs(inputs)
    {}

    /// Whether input k needs a gradient at all.
    bool wants(std::size_t k) const;
    /// Accumulator for input k, zero-initialized on first use.
    Matrix& at(std::size_t k);

private:
    Tape& m_tape;
    const std::vector<int>& m_inputs;
};

using BackwardFn = std::function<void(const Matrix& grad_out, GradSink& sink)>;

/// Eager reverse-mode tape: primitives record their outputs and backward rules
/// as they execute, and backward() replays the rules in reverse order.
///
/// Nodes are appended in execution order, which is a topological order, so a
/// single reverse sweep visits every node once. A tape is not thread-safe;
/// independent tapes may be used from different threads.
class Tape {
public:
    Tape() = default;
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    /// Value that never receives a gradient.
    Var constant(Tensor value);
    /// Owned leaf that receives a gradient.
    Var leaf(Tensor value);
    /// Leaf referencing an external tensor without copying it; the tensor must
    /// outlive the tape. With requires_grad = false it acts as a constant.
    Var param(const Tensor& value, bool requires_grad = true);

    /// Records a computed node. The output inherits requires_grad from its inputs;
    /// `backward` is only kept when some input needs a gradient.
    Var record(Tensor value, std::vector<Var> inputs, BackwardFn backward, const char* op);

    const Tensor& value(int id) const;
    bool requires_grad(int id) const { return m_nodes[static_cast<std::size_t>(id)].requires_grad; }

    /// Reverse sweep from a scalar node. Gradients of earlier calls are cleared.
    void backward(Var loss);
    /// Same, with an arbitrary seed gradient for a non-scalar output.
    void backward(Var output, const Matrix& seed);

    /// d(loss)/d(var) after backward(); zeros if var did not influence the loss.
    Tensor grad(Var var) const;
    bool has_grad(Var var) const;
    /// dst += s * d(loss)/d(var), without materializing a copy.
    void add_grad_to(Var var, Matrix& dst, double s = 1.0) const;
    /// Moves the gradient out of the tape (zeros if there is none).
    Matrix take_grad(Var var);

    std::size_t size() const { return m_nodes.size(); }

private:
    friend class GradSink;

    struct Node {
        std::unique_ptr<Tensor> owned;
        const Tensor* external = nullptr;
        std::vector<int> inputs;
        BackwardFn backward;
        bool requires_grad = false;
        Matrix grad;
        bool has_grad = false;
        const char* op = "";
    };

    Var push(Node node);
    Node& node(int id) { return m_nodes[static_cast<std::size_t>(id)]; }

    std::vector<Node> m_nodes;
};

// Primitives. All shapes are checked (ShapeMismatch) and every output is checked
// for NaN/Inf (NonFiniteValue).

Var add(Var a, Var b);
Var sub(Var a, Var b);
/// Elementwise product.
Var mul(Var a, Var b);
Var scale(Var a, double s);
Var matmul(Var a, Var b);
/// a * b.middleRows(begin, count) without copying the block.
Var matmul_rows(Var a, Var b, Eigen::Index begin, Eigen::Index count);
/// Adds a 1 x n row to every row of an m x n input (bias broadcast).
Var add_row(Var a, Var row);
Var tanh(Var a);
Var relu(Var a);
Var square(Var a);
Var sqrt(Var a);
Var abs(Var a);
/// Sum of all entries; scalar output.
Var sum(Var a);
Var mean(Var a);
/// Sum along each row: m x n -> m x 1.
Var row_sum(Var a);
/// Same payload, new shape (element counts must agree).
Var reshape(Var a, std::vector<std::int64_t> shape);
Var slice_rows(Var a, Eigen::Index begin, Eigen::Index count);
Var gather_rows(Var a, const std::vector<int>& rows);

struct Reduction {
    Var values;               // 1 x n
    std::vector<int> indices; // winning row per column
};

/// Column-wise max over rows (m x n -> 1 x n). The gradient goes to the arg max;
/// ties go to the lowest row index.
Reduction max_over_rows(Var a);
/// Column-wise min over rows, same tie rule.
Reduction min_over_rows(Var a);

/// Fails with NonFiniteValue if the matrix has NaN or Inf entries.
void check_finite(const Matrix& m, const std::string& what);

} // namespace sdn::ad
