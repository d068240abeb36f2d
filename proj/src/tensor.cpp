#include "ppcov/tensor.hpp"

#include <cmath>
#include <numeric>
#include <sstream>
#include <stdexcept>

namespace ppcov::nd {

namespace {

std::size_t shape_product(const std::vector<std::size_t>& shape) {
    std::size_t n = 1;
    for (std::size_t d : shape) {
        if (d == 0) throw std::invalid_argument("tensor dimensions must be positive");
        n *= d;
    }
    return n;
}

}  // namespace

Tensor::Tensor(std::vector<std::size_t> shape)
    : shape_(std::move(shape)), data_(shape_product(shape_), 0.0) {
    cols_ = shape_.empty() ? 1 : shape_.back();
}

Tensor::Tensor(std::vector<std::size_t> shape, std::vector<double> data)
    : shape_(std::move(shape)), data_(std::move(data)) {
    if (shape_product(shape_) != data_.size()) {
        throw std::invalid_argument("tensor data length does not match shape");
    }
    cols_ = shape_.empty() ? 1 : shape_.back();
}

Tensor Tensor::full(std::vector<std::size_t> shape, double v) {
    Tensor t(std::move(shape));
    t.fill(v);
    return t;
}

Tensor Tensor::uniform(std::vector<std::size_t> shape, double range, std::mt19937_64& rng) {
    Tensor t(std::move(shape));
    std::uniform_real_distribution<double> dist(-range, range);
    for (double& x : t.data_) x = dist(rng);
    return t;
}

std::size_t Tensor::rows() const {
    if (shape_.size() != 2) throw std::logic_error("rows() requires a 2-d tensor");
    return shape_[0];
}

std::size_t Tensor::cols() const {
    if (shape_.empty()) throw std::logic_error("cols() requires a non-empty tensor");
    return shape_.back();
}

std::string Tensor::shape_str() const {
    std::ostringstream os;
    os << "(";
    for (std::size_t i = 0; i < shape_.size(); ++i) {
        if (i) os << ", ";
        os << shape_[i];
    }
    os << ")";
    return os.str();
}

void Tensor::fill(double v) {
    for (double& x : data_) x = v;
}

bool Tensor::all_finite() const {
    for (double x : data_) {
        if (!std::isfinite(x)) return false;
    }
    return true;
}

// 4-row blocked kernel; the inner j loop vectorizes over contiguous
// rows of B.
void gemm_accumulate(std::size_t m, std::size_t k, std::size_t n, const double* a,
                     const double* b, double* c) {
    std::size_t i = 0;
    for (; i + 4 <= m; i += 4) {
        const double* a0 = a + i * k;
        const double* a1 = a0 + k;
        const double* a2 = a1 + k;
        const double* a3 = a2 + k;
        double* c0 = c + i * n;
        double* c1 = c0 + n;
        double* c2 = c1 + n;
        double* c3 = c2 + n;
        for (std::size_t kk = 0; kk < k; ++kk) {
            const double v0 = a0[kk];
            const double v1 = a1[kk];
            const double v2 = a2[kk];
            const double v3 = a3[kk];
            const double* br = b + kk * n;
            for (std::size_t j = 0; j < n; ++j) {
                const double bj = br[j];
                c0[j] += v0 * bj;
                c1[j] += v1 * bj;
                c2[j] += v2 * bj;
                c3[j] += v3 * bj;
            }
        }
    }
    for (; i < m; ++i) {
        const double* ar = a + i * k;
        double* cr = c + i * n;
        for (std::size_t kk = 0; kk < k; ++kk) {
            const double av = ar[kk];
            const double* br = b + kk * n;
            for (std::size_t j = 0; j < n; ++j) cr[j] += av * br[j];
        }
    }
}

void gemm_at_b_accumulate(std::size_t m, std::size_t k, std::size_t n, const double* a,
                          const double* b, double* c) {
    // A^T walk: row kk of A contributes to output row a[kk*m + i].
    for (std::size_t kk = 0; kk < k; ++kk) {
        const double* ar = a + kk * m;
        const double* br = b + kk * n;
        for (std::size_t i = 0; i < m; ++i) {
            const double av = ar[i];
            if (av == 0.0) continue;
            double* cr = c + i * n;
            for (std::size_t j = 0; j < n; ++j) cr[j] += av * br[j];
        }
    }
}

void gemm_a_bt_accumulate(std::size_t m, std::size_t k, std::size_t n, const double* a,
                          const double* b, double* c) {
    for (std::size_t i = 0; i < m; ++i) {
        const double* ar = a + i * k;
        double* cr = c + i * n;
        for (std::size_t j = 0; j < n; ++j) {
            const double* br = b + j * k;
            double acc = 0.0;
            for (std::size_t kk = 0; kk < k; ++kk) acc += ar[kk] * br[kk];
            cr[j] += acc;
        }
    }
}

Tensor matmul(const Tensor& a, const Tensor& b) {
    if (a.ndim() != 2 || b.ndim() != 2 || a.cols() != b.rows()) {
        throw std::invalid_argument("matmul shape mismatch: " + a.shape_str() + " x " +
                                    b.shape_str());
    }
    Tensor c({a.rows(), b.cols()});
    gemm_accumulate(a.rows(), a.cols(), b.cols(), a.data(), b.data(), c.data());
    return c;
}

}  // namespace ppcov::nd
