#include <sdn/error.hpp>
#include <sdn/tensor.hpp>

#include <cstring>
#include <numeric>

namespace sdn {

namespace {

std::pair<Eigen::Index, Eigen::Index> fold(const std::vector<std::int64_t>& shape)
{
    if (shape.empty()) return {1, 1};
    for (auto d : shape) {
        if (d < 0) throw ShapeMismatch("negative dimension");
    }
    const std::int64_t cols = shape.back();
    const std::int64_t rows =
        std::accumulate(shape.begin(), shape.end() - 1, std::int64_t{1}, std::multiplies<>());
    return {static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols)};
}

} // namespace

Tensor::Tensor(std::vector<std::int64_t> shape, double fill)
    : m_shape(std::move(shape))
{
    const auto [r, c] = fold(m_shape);
    m_data = Matrix::Constant(r, c, fill);
}

Tensor::Tensor(Matrix m)
    : m_shape{m.rows(), m.cols()}
    , m_data(std::move(m))
{}

Tensor::Tensor(std::vector<std::int64_t> shape, Matrix m)
    : m_shape(std::move(shape))
    , m_data(std::move(m))
{
    const auto [r, c] = fold(m_shape);
    if (r * c != m_data.size()) throw ShapeMismatch("payload size does not match shape " + shape_string());
    if (m_data.rows() != r) m_data = Eigen::Map<Matrix>(m_data.data(), r, c).eval();
}

Tensor Tensor::scalar(double v)
{
    return Tensor({}, v);
}

Tensor Tensor::vector(std::initializer_list<double> values)
{
    return vector(std::vector<double>(values));
}

Tensor Tensor::vector(const std::vector<double>& values)
{
    Tensor t({static_cast<std::int64_t>(values.size())});
    for (std::size_t i = 0; i < values.size(); ++i) t[static_cast<std::int64_t>(i)] = values[i];
    return t;
}

double Tensor::item() const
{
    if (numel() != 1) throw ShapeMismatch("item() on tensor of shape " + shape_string());
    return m_data(0, 0);
}

std::string Tensor::shape_string() const
{
    std::string s = "[";
    for (std::size_t i = 0; i < m_shape.size(); ++i) {
        if (i) s += ", ";
        s += std::to_string(m_shape[i]);
    }
    return s + "]";
}

bool bitwise_equal(const Tensor& a, const Tensor& b)
{
    return a.shape() == b.shape() &&
           std::memcmp(a.data(), b.data(), static_cast<std::size_t>(a.numel()) * sizeof(double)) == 0;
}

} // namespace sdn
