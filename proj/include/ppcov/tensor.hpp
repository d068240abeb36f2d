#pragma once

#include <cstddef>
#include <initializer_list>
#include <random>
#include <string>
#include <vector>

namespace ppcov::nd {

// Dense row-major double tensor with value semantics.
class Tensor {
public:
    Tensor() = default;
    explicit Tensor(std::vector<std::size_t> shape);
    Tensor(std::vector<std::size_t> shape, std::vector<double> data);
    Tensor(std::initializer_list<std::size_t> shape) : Tensor(std::vector<std::size_t>(shape)) {}

    static Tensor scalar(double v) { return Tensor({1}, {v}); }
    static Tensor zeros(std::vector<std::size_t> shape) { return Tensor(std::move(shape)); }
    static Tensor full(std::vector<std::size_t> shape, double v);
    /// Uniform(-range, range) entries drawn in row-major order.
    static Tensor uniform(std::vector<std::size_t> shape, double range, std::mt19937_64& rng);

    const std::vector<std::size_t>& shape() const { return shape_; }
    std::size_t ndim() const { return shape_.size(); }
    std::size_t size() const { return data_.size(); }
    std::size_t rows() const;
    std::size_t cols() const;
    bool same_shape(const Tensor& other) const { return shape_ == other.shape_; }
    std::string shape_str() const;

    double* data() { return data_.data(); }
    const double* data() const { return data_.data(); }
    std::vector<double>& vec() { return data_; }
    const std::vector<double>& vec() const { return data_; }

    double& operator[](std::size_t i) { return data_[i]; }
    double operator[](std::size_t i) const { return data_[i]; }
    double& at(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
    double at(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

    void fill(double v);
    bool all_finite() const;

    bool operator==(const Tensor& other) const {
        return shape_ == other.shape_ && data_ == other.data_;
    }

private:
    std::vector<std::size_t> shape_;
    std::size_t cols_ = 0;  // trailing dimension, cached for at()
    std::vector<double> data_;
};

/// C (m x n) += A (m x k) * B (k x n); row-major, no aliasing.
void gemm_accumulate(std::size_t m, std::size_t k, std::size_t n, const double* a,
                     const double* b, double* c);

/// C += A^T * B where A is (k x m) and B is (k x n).
void gemm_at_b_accumulate(std::size_t m, std::size_t k, std::size_t n, const double* a,
                          const double* b, double* c);

/// C += A * B^T where A is (m x k) and B is (n x k).
void gemm_a_bt_accumulate(std::size_t m, std::size_t k, std::size_t n, const double* a,
                          const double* b, double* c);

Tensor matmul(const Tensor& a, const Tensor& b);

}  // namespace ppcov::nd
