#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "ppcov/tensor.hpp"

namespace ppcov::nd {

// --- Plain tensor ops (forward only) ---

Tensor relu(const Tensor& x);
Tensor sigmoid(const Tensor& x);
Tensor tanh_t(const Tensor& x);

/// Softmax with max-subtraction. axis 1 normalizes each row of a 2-d
/// tensor, axis 0 each column; 1-d tensors normalize as a whole.
Tensor softmax(const Tensor& x, int axis = -1);

/// Mean over observations of -sum_c y*ln(p); probabilities floored at
/// 1e-12 before the log. Rows are observations for 2-d inputs.
double cross_entropy(const Tensor& pred, const Tensor& target);

/// Training mode zeroes each element with probability `rate` and scales
/// survivors by 1/(1-rate); inference mode is the identity.
Tensor dropout(const Tensor& x, double rate, bool training, std::uint64_t seed);

/// Bernoulli(1-rate) mask with surviving entries set to 1/(1-rate).
Tensor dropout_mask(const std::vector<std::size_t>& shape, double rate, std::mt19937_64& rng);

// --- Reverse-mode tape ---

struct Var {
    int id = -1;
    bool valid() const { return id >= 0; }
};

// Records operations in creation order; backward() sweeps them once in
// reverse, which is reverse topological order for any incrementally
// built graph.
class Tape {
public:
    Var leaf(Tensor value, bool requires_grad = true);
    Var constant(Tensor value) { return leaf(std::move(value), false); }

    Var matmul(Var a, Var b);
    Var add(Var a, Var b);
    Var sub(Var a, Var b);
    Var add_rowvec(Var a, Var bias);          // (B,N) + (N,)
    Var mul(Var a, Var b);
    Var mul_rowvec(Var a, Var v);             // (B,N) * (N,) broadcast
    Var mul_value(Var a, const Tensor& mask); // elementwise, constant factor
    Var scale(Var a, double s);
    Var scale_rows(Var a, const std::vector<double>& row_scales);
    Var sigmoid(Var a);
    Var tanh(Var a);
    Var relu(Var a);
    Var softmax_rows(Var a);
    Var cross_entropy_mean(Var pred, const Tensor& onehot);
    Var sum(Var a);
    Var mean(Var a);
    Var concat_cols(const std::vector<Var>& parts);
    Var slice_rows(Var a, std::size_t start, std::size_t count);
    Var gather_rows(Var a, std::vector<std::size_t> rows);
    /// Max over each group of `group_rows` consecutive rows, per column.
    /// Output has rows()/group_rows rows; argmax offsets are recorded.
    Var maxpool_rows(Var a, std::size_t group_rows);

    const Tensor& value(Var v) const;
    /// Gradient after backward(); zeros for nodes off the loss path.
    const Tensor& grad(Var v) const;
    /// Window offsets chosen by maxpool_rows, indexed [out_row * cols + col].
    const std::vector<std::size_t>& maxpool_argmax(Var v) const;

    /// Reverse-mode accumulation from a scalar loss node.
    void backward(Var loss);

    std::size_t node_count() const { return nodes_.size(); }

private:
    struct Node {
        Tensor value;
        Tensor grad;
        bool requires_grad = true;
        std::vector<int> inputs;
        std::function<void(Tape&, int)> backward;
        std::vector<std::size_t> aux;  // maxpool argmax offsets
    };

    int push(Tensor value, std::vector<int> inputs, std::function<void(Tape&, int)> fn);
    Tensor& grad_ref(int id);
    bool needs(int id) const;
    Node& node(Var v);
    const Node& node(Var v) const;

    std::vector<Node> nodes_;
};

}  // namespace ppcov::nd
