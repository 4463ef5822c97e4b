#pragma once

#include <Eigen/Core>

#include <cstdint>
#include <initializer_list>
#include <string>
#include <vector>

namespace sdn {

using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// Dense row-major float64 tensor.
///
/// Storage is always a matrix: the last dimension is the column count and all
/// leading dimensions are folded into rows. A scalar (shape {}) is 1x1 and a
/// vector of length n (shape {n}) is 1xn.
class Tensor {
public:
    Tensor() : Tensor(std::vector<std::int64_t>{}) {}
    explicit Tensor(std::vector<std::int64_t> shape, double fill = 0.0);
    /// 2D tensor from a matrix.
    explicit Tensor(Matrix m);
    Tensor(std::vector<std::int64_t> shape, Matrix m);

    static Tensor scalar(double v);
    static Tensor vector(std::initializer_list<double> values);
    static Tensor vector(const std::vector<double>& values);

    const std::vector<std::int64_t>& shape() const { return m_shape; }
    std::int64_t numel() const { return static_cast<std::int64_t>(m_data.size()); }
    Eigen::Index rows() const { return m_data.rows(); }
    Eigen::Index cols() const { return m_data.cols(); }

    const Matrix& mat() const { return m_data; }
    Matrix& mat() { return m_data; }
    const double* data() const { return m_data.data(); }
    double* data() { return m_data.data(); }

    double item() const;
    double operator[](std::int64_t i) const { return m_data.data()[i]; }
    double& operator[](std::int64_t i) { return m_data.data()[i]; }

    bool all_finite() const { return m_data.allFinite(); }
    bool same_shape(const Tensor& other) const { return m_shape == other.m_shape; }

    std::string shape_string() const;

private:
    std::vector<std::int64_t> m_shape;
    Matrix m_data;
};

/// Bitwise equality of shapes and payloads.
bool bitwise_equal(const Tensor& a, const Tensor& b);

} // namespace sdn
