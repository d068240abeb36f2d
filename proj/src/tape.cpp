#include "ppcov/tape.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace ppcov::nd {

namespace {

constexpr double kProbFloor = 1e-12;

double stable_sigmoid(double x) {
    if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
    const double e = std::exp(x);
    return e / (1.0 + e);
}

void softmax_span(const double* in, double* out, std::size_t n) {
    double mx = in[0];
    for (std::size_t i = 1; i < n; ++i) mx = std::max(mx, in[i]);
    double sum = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        out[i] = std::exp(in[i] - mx);
        sum += out[i];
    }
    const double inv = 1.0 / sum;
    for (std::size_t i = 0; i < n; ++i) out[i] *= inv;
}

}  // namespace

Tensor relu(const Tensor& x) {
    Tensor y = x;
    for (double& v : y.vec()) v = std::max(0.0, v);
    return y;
}

Tensor sigmoid(const Tensor& x) {
    Tensor y = x;
    for (double& v : y.vec()) v = stable_sigmoid(v);
    return y;
}

Tensor tanh_t(const Tensor& x) {
    Tensor y = x;
    for (double& v : y.vec()) v = std::tanh(v);
    return y;
}

Tensor softmax(const Tensor& x, int axis) {
    Tensor y = x;
    if (x.ndim() <= 1 || (x.ndim() == 2 && x.rows() == 1 && axis != 0)) {
        softmax_span(x.data(), y.data(), x.size());
        return y;
    }
    if (x.ndim() != 2) throw std::invalid_argument("softmax supports 1-d and 2-d tensors");
    const std::size_t r = x.rows(), c = x.cols();
    if (axis == 0) {
        std::vector<double> col(r), out(r);
        for (std::size_t j = 0; j < c; ++j) {
            for (std::size_t i = 0; i < r; ++i) col[i] = x.at(i, j);
            softmax_span(col.data(), out.data(), r);
            for (std::size_t i = 0; i < r; ++i) y.at(i, j) = out[i];
        }
    } else {
        for (std::size_t i = 0; i < r; ++i) {
            softmax_span(x.data() + i * c, y.data() + i * c, c);
        }
    }
    return y;
}

double cross_entropy(const Tensor& pred, const Tensor& target) {
    if (!pred.same_shape(target)) {
        throw std::invalid_argument("cross_entropy shape mismatch: " + pred.shape_str() +
                                    " vs " + target.shape_str());
    }
    const std::size_t rows = pred.ndim() == 2 ? pred.rows() : 1;
    double total = 0.0;
    for (std::size_t i = 0; i < pred.size(); ++i) {
        if (target[i] != 0.0) {
            total -= target[i] * std::log(std::max(pred[i], kProbFloor));
        }
    }
    return total / static_cast<double>(rows);
}

Tensor dropout_mask(const std::vector<std::size_t>& shape, double rate, std::mt19937_64& rng) {
    if (rate < 0.0 || rate >= 1.0) throw std::invalid_argument("dropout rate must be in [0, 1)");
    Tensor mask = Tensor::full(shape, 1.0);
    if (rate == 0.0) return mask;
    std::uniform_real_distribution<double> dist(0.0, 1.0);
    const double keep_scale = 1.0 / (1.0 - rate);
    for (double& v : mask.vec()) v = dist(rng) < rate ? 0.0 : keep_scale;
    return mask;
}

Tensor dropout(const Tensor& x, double rate, bool training, std::uint64_t seed) {
    if (rate < 0.0 || rate >= 1.0) throw std::invalid_argument("dropout rate must be in [0, 1)");
    if (!training || rate == 0.0) return x;
    std::mt19937_64 rng(seed);
    Tensor mask = dropout_mask(x.shape(), rate, rng);
    Tensor y = x;
    for (std::size_t i = 0; i < y.size(); ++i) y[i] *= mask[i];
    return y;
}

// --- Tape ---

int Tape::push(Tensor value, std::vector<int> inputs, std::function<void(Tape&, int)> fn) {
    Node n;
    n.value = std::move(value);
    n.inputs = std::move(inputs);
    n.backward = std::move(fn);
    n.requires_grad = false;
    for (int input : n.inputs) {
        if (nodes_[static_cast<std::size_t>(input)].requires_grad) {
            n.requires_grad = true;
            break;
        }
    }
    nodes_.push_back(std::move(n));
    return static_cast<int>(nodes_.size()) - 1;
}

bool Tape::needs(int id) const { return nodes_[static_cast<std::size_t>(id)].requires_grad; }

Tape::Node& Tape::node(Var v) {
    if (!v.valid() || v.id >= static_cast<int>(nodes_.size())) {
        throw std::out_of_range("invalid tape node");
    }
    return nodes_[static_cast<std::size_t>(v.id)];
}

const Tape::Node& Tape::node(Var v) const {
    return const_cast<Tape*>(this)->node(v);
}

Tensor& Tape::grad_ref(int id) {
    Node& n = nodes_[static_cast<std::size_t>(id)];
    if (n.grad.size() == 0) n.grad = Tensor::zeros(n.value.shape());
    return n.grad;
}

const Tensor& Tape::value(Var v) const { return node(v).value; }

const Tensor& Tape::grad(Var v) const {
    Node& n = const_cast<Tape*>(this)->node(v);
    if (n.grad.size() == 0) n.grad = Tensor::zeros(n.value.shape());
    return n.grad;
}

const std::vector<std::size_t>& Tape::maxpool_argmax(Var v) const { return node(v).aux; }

Var Tape::leaf(Tensor value, bool requires_grad) {
    int id = push(std::move(value), {}, nullptr);
    nodes_.back().requires_grad = requires_grad;
    return Var{id};
}

Var Tape::matmul(Var a, Var b) {
    Tensor out = nd::matmul(value(a), value(b));
    int id = push(std::move(out), {a.id, b.id}, [](Tape& t, int self) {
        const Node& n = t.nodes_[self];
        const Tensor& g = n.grad;
        const Tensor& av = t.nodes_[n.inputs[0]].value;
        const Tensor& bv = t.nodes_[n.inputs[1]].value;
        // dA = g * B^T ; dB = A^T * g
        if (t.needs(n.inputs[0])) {
            gemm_a_bt_accumulate(av.rows(), bv.cols(), av.cols(), g.data(), bv.data(),
                                 t.grad_ref(n.inputs[0]).data());
        }
        if (t.needs(n.inputs[1])) {
            gemm_at_b_accumulate(av.cols(), av.rows(), bv.cols(), av.data(), g.data(),
                                 t.grad_ref(n.inputs[1]).data());
        }
    });
    return Var{id};
}

Var Tape::add(Var a, Var b) {
    const Tensor& av = value(a);
    const Tensor& bv = value(b);
    if (!av.same_shape(bv)) {
        throw std::invalid_argument("add shape mismatch: " + av.shape_str() + " vs " +
                                    bv.shape_str());
    }
    Tensor out = av;
    for (std::size_t i = 0; i < out.size(); ++i) out[i] += bv[i];
    int id = push(std::move(out), {a.id, b.id}, [](Tape& t, int self) {
        const Node& n = t.nodes_[self];
        for (int input : n.inputs) {
            if (!t.needs(input)) continue;
            Tensor& g = t.grad_ref(input);
            for (std::size_t i = 0; i < g.size(); ++i) g[i] += n.grad[i];
        }
    });
    return Var{id};
}

Var Tape::sub(Var a, Var b) {
    const Tensor& av = value(a);
    const Tensor& bv = value(b);
    if (!av.same_shape(bv)) throw std::invalid_argument("sub shape mismatch");
    Tensor out = av;
    for (std::size_t i = 0; i < out.size(); ++i) out[i] -= bv[i];
    int id = push(std::move(out), {a.id, b.id}, [](Tape& t, int self) {
        const Node& n = t.nodes_[self];
        Tensor& ga = t.grad_ref(n.inputs[0]);
        Tensor& gb = t.grad_ref(n.inputs[1]);
        for (std::size_t i = 0; i < ga.size(); ++i) {
            ga[i] += n.grad[i];
            gb[i] -= n.grad[i];
        }
    });
    return Var{id};
}

Var Tape::add_rowvec(Var a, Var bias) {
    const Tensor& av = value(a);
    const Tensor& bv = value(bias);
    if (av.ndim() != 2 || bv.size() != av.cols()) {
        throw std::invalid_argument("add_rowvec expects (B,N) + (N,)");
    }
    Tensor out = av;
    const std::size_t r = av.rows(), c = av.cols();
    for (std::size_t i = 0; i < r; ++i) {
        for (std::size_t j = 0; j < c; ++j) out[i * c + j] += bv[j];
    }
    int id = push(std::move(out), {a.id, bias.id}, [](Tape& t, int self) {
        const Node& n = t.nodes_[self];
        const Tensor& g = n.grad;
        Tensor& ga = t.grad_ref(n.inputs[0]);
        Tensor& gb = t.grad_ref(n.inputs[1]);
        const std::size_t r = g.rows(), c = g.cols();
        for (std::size_t i = 0; i < r; ++i) {
            for (std::size_t j = 0; j < c; ++j) {
                ga[i * c + j] += g[i * c + j];
                gb[j] += g[i * c + j];
            }
        }
    });
    return Var{id};
}

Var Tape::mul(Var a, Var b) {
    const Tensor& av = value(a);
    const Tensor& bv = value(b);
    if (!av.same_shape(bv)) throw std::invalid_argument("mul shape mismatch");
    Tensor out = av;
    for (std::size_t i = 0; i < out.size(); ++i) out[i] *= bv[i];
    int id = push(std::move(out), {a.id, b.id}, [](Tape& t, int self) {
        const Node& n = t.nodes_[self];
        const Tensor& av = t.nodes_[n.inputs[0]].value;
        const Tensor& bv = t.nodes_[n.inputs[1]].value;
        if (t.needs(n.inputs[0])) {
            Tensor& ga = t.grad_ref(n.inputs[0]);
            for (std::size_t i = 0; i < av.size(); ++i) ga[i] += n.grad[i] * bv[i];
        }
        if (t.needs(n.inputs[1])) {
            Tensor& gb = t.grad_ref(n.inputs[1]);
            for (std::size_t i = 0; i < av.size(); ++i) gb[i] += n.grad[i] * av[i];
        }
    });
    return Var{id};
}

Var Tape::mul_rowvec(Var a, Var v) {
    const Tensor& av = value(a);
    const Tensor& vv = value(v);
    if (av.ndim() != 2 || vv.size() != av.cols()) {
        throw std::invalid_argument("mul_rowvec expects (B,N) * (N,)");
    }
    Tensor out = av;
    const std::size_t r = av.rows(), c = av.cols();
    for (std::size_t i = 0; i < r; ++i) {
        for (std::size_t j = 0; j < c; ++j) out[i * c + j] *= vv[j];
    }
    int id = push(std::move(out), {a.id, v.id}, [](Tape& t, int self) {
        const Node& n = t.nodes_[self];
        const Tensor& g = n.grad;
        const Tensor& av = t.nodes_[n.inputs[0]].value;
        const Tensor& vv = t.nodes_[n.inputs[1]].value;
        Tensor& ga = t.grad_ref(n.inputs[0]);
        Tensor& gv = t.grad_ref(n.inputs[1]);
        const std::size_t r = g.rows(), c = g.cols();
        for (std::size_t i = 0; i < r; ++i) {
            for (std::size_t j = 0; j < c; ++j) {
                ga[i * c + j] += g[i * c + j] * vv[j];
                gv[j] += g[i * c + j] * av[i * c + j];
            }
        }
    });
    return Var{id};
}

Var Tape::mul_value(Var a, const Tensor& mask) {
    const Tensor& av = value(a);
    if (!av.same_shape(mask)) throw std::invalid_argument("mul_value shape mismatch");
    Tensor out = av;
    for (std::size_t i = 0; i < out.size(); ++i) out[i] *= mask[i];
    Tensor mask_copy = mask;
    int id = push(std::move(out), {a.id},
                  [mask = std::move(mask_copy)](Tape& t, int self) {
                      const Node& n = t.nodes_[self];
                      Tensor& ga = t.grad_ref(n.inputs[0]);
                      for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += n.grad[i] * mask[i];
                  });
    return Var{id};
}

Var Tape::scale(Var a, double s) {
    Tensor out = value(a);
    for (double& x : out.vec()) x *= s;
    int id = push(std::move(out), {a.id}, [s](Tape& t, int self) {
        const Node& n = t.nodes_[self];
        Tensor& ga = t.grad_ref(n.inputs[0]);
        for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += n.grad[i] * s;
    });
    return Var{id};
}

Var Tape::scale_rows(Var a, const std::vector<double>& row_scales) {
    const Tensor& av = value(a);
    if (av.ndim() != 2 || row_scales.size() != av.rows()) {
        throw std::invalid_argument("scale_rows expects one scale per row");
    }
    Tensor out = av;
    const std::size_t r = av.rows(), c = av.cols();
    for (std::size_t i = 0; i < r; ++i) {
        for (std::size_t j = 0; j < c; ++j) out[i * c + j] *= row_scales[i];
    }
    int id = push(std::move(out), {a.id}, [row_scales](Tape& t, int self) {
        const Node& n = t.nodes_[self];
        Tensor& ga = t.grad_ref(n.inputs[0]);
        const std::size_t r = ga.rows(), c = ga.cols();
        for (std::size_t i = 0; i < r; ++i) {
            for (std::size_t j = 0; j < c; ++j) ga[i * c + j] += n.grad[i * c + j] * row_scales[i];
        }
    });
    return Var{id};
}

Var Tape::sigmoid(Var a) {
    Tensor out = nd::sigmoid(value(a));
    int id = push(std::move(out), {a.id}, [](Tape& t, int self) {
        const Node& n = t.nodes_[self];
        Tensor& ga = t.grad_ref(n.inputs[0]);
        for (std::size_t i = 0; i < ga.size(); ++i) {
            const double y = n.value[i];
            ga[i] += n.grad[i] * y * (1.0 - y);
        }
    });
    return Var{id};
}

Var Tape::tanh(Var a) {
    Tensor out = nd::tanh_t(value(a));
    int id = push(std::move(out), {a.id}, [](Tape& t, int self) {
        const Node& n = t.nodes_[self];
        Tensor& ga = t.grad_ref(n.inputs[0]);
        for (std::size_t i = 0; i < ga.size(); ++i) {
            const double y = n.value[i];
            ga[i] += n.grad[i] * (1.0 - y * y);
        }
    });
    return Var{id};
}

Var Tape::relu(Var a) {
    Tensor out = nd::relu(value(a));
    int id = push(std::move(out), {a.id}, [](Tape& t, int self) {
        const Node& n = t.nodes_[self];
        const Tensor& av = t.nodes_[n.inputs[0]].value;
        Tensor& ga = t.grad_ref(n.inputs[0]);
        // Subgradient 0 at exactly 0.
        for (std::size_t i = 0; i < ga.size(); ++i) {
            if (av[i] > 0.0) ga[i] += n.grad[i];
        }
    });
    return Var{id};
}

Var Tape::softmax_rows(Var a) {
    Tensor out = nd::softmax(value(a), value(a).ndim() == 2 ? 1 : -1);
    int id = push(std::move(out), {a.id}, [](Tape& t, int self) {
        const Node& n = t.nodes_[self];
        const Tensor& p = n.value;
        const Tensor& g = n.grad;
        Tensor& ga = t.grad_ref(n.inputs[0]);
        const std::size_t rows = p.ndim() == 2 ? p.rows() : 1;
        const std::size_t c = p.size() / rows;
        for (std::size_t i = 0; i < rows; ++i) {
            const double* pr = p.data() + i * c;
            const double* gr = g.data() + i * c;
            double dot = 0.0;
            for (std::size_t j = 0; j < c; ++j) dot += pr[j] * gr[j];
            double* out_g = ga.data() + i * c;
            for (std::size_t j = 0; j < c; ++j) out_g[j] += pr[j] * (gr[j] - dot);
        }
    });
    return Var{id};
}

Var Tape::cross_entropy_mean(Var pred, const Tensor& onehot) {
    const double loss = nd::cross_entropy(value(pred), onehot);
    Tensor target = onehot;
    int id = push(Tensor::scalar(loss), {pred.id},
                  [target = std::move(target)](Tape& t, int self) {
                      const Node& n = t.nodes_[self];
                      const double g = n.grad[0];
                      const Tensor& p = t.nodes_[n.inputs[0]].value;
                      Tensor& gp = t.grad_ref(n.inputs[0]);
                      const std::size_t rows = p.ndim() == 2 ? p.rows() : 1;
                      const double inv_rows = 1.0 / static_cast<double>(rows);
                      for (std::size_t i = 0; i < p.size(); ++i) {
                          if (target[i] != 0.0) {
                              gp[i] -= g * target[i] / std::max(p[i], kProbFloor) * inv_rows;
                          }
                      }
                  });
    return Var{id};
}

Var Tape::sum(Var a) {
    double s = 0.0;
    for (double x : value(a).vec()) s += x;
    int id = push(Tensor::scalar(s), {a.id}, [](Tape& t, int self) {
        const Node& n = t.nodes_[self];
        Tensor& ga = t.grad_ref(n.inputs[0]);
        for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += n.grad[0];
    });
    return Var{id};
}

Var Tape::mean(Var a) {
    const std::size_t count = value(a).size();
    double s = 0.0;
    for (double x : value(a).vec()) s += x;
    int id = push(Tensor::scalar(s / static_cast<double>(count)), {a.id},
                  [count](Tape& t, int self) {
                      const Node& n = t.nodes_[self];
                      Tensor& ga = t.grad_ref(n.inputs[0]);
                      const double g = n.grad[0] / static_cast<double>(count);
                      for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += g;
                  });
    return Var{id};
}

Var Tape::concat_cols(const std::vector<Var>& parts) {
    if (parts.empty()) throw std::invalid_argument("concat_cols: no inputs");
    const std::size_t rows = value(parts[0]).rows();
    std::size_t total_cols = 0;
    std::vector<int> input_ids;
    for (Var p : parts) {
        if (value(p).rows() != rows) throw std::invalid_argument("concat_cols row mismatch");
        total_cols += value(p).cols();
        input_ids.push_back(p.id);
    }
    Tensor out({rows, total_cols});
    std::size_t offset = 0;
    for (Var p : parts) {
        const Tensor& pv = value(p);
        for (std::size_t i = 0; i < rows; ++i) {
            for (std::size_t j = 0; j < pv.cols(); ++j) {
                out.at(i, offset + j) = pv.at(i, j);
            }
        }
        offset += pv.cols();
    }
    int id = push(std::move(out), std::move(input_ids), [](Tape& t, int self) {
        const Node& n = t.nodes_[self];
        const Tensor& g = n.grad;
        std::size_t offset = 0;
        for (int input : n.inputs) {
            const std::size_t c = t.nodes_[input].value.cols();
            Tensor& gi = t.grad_ref(input);
            for (std::size_t i = 0; i < g.rows(); ++i) {
                for (std::size_t j = 0; j < c; ++j) gi.at(i, j) += g.at(i, offset + j);
            }
            offset += c;
        }
    });
    return Var{id};
}

Var Tape::slice_rows(Var a, std::size_t start, std::size_t count) {
    const Tensor& av = value(a);
    if (av.ndim() != 2 || start + count > av.rows()) {
        throw std::invalid_argument("slice_rows out of range");
    }
    const std::size_t c = av.cols();
    Tensor out({count, c});
    std::copy(av.data() + start * c, av.data() + (start + count) * c, out.data());
    int id = push(std::move(out), {a.id}, [start, count](Tape& t, int self) {
        const Node& n = t.nodes_[self];
        Tensor& ga = t.grad_ref(n.inputs[0]);
        const std::size_t c = ga.cols();
        for (std::size_t i = 0; i < count * c; ++i) ga[start * c + i] += n.grad[i];
    });
    return Var{id};
}

Var Tape::gather_rows(Var a, std::vector<std::size_t> rows) {
    const Tensor& av = value(a);
    if (av.ndim() != 2) throw std::invalid_argument("gather_rows expects a 2-d tensor");
    const std::size_t c = av.cols();
    Tensor out({rows.size(), c});
    for (std::size_t i = 0; i < rows.size(); ++i) {
        if (rows[i] >= av.rows()) throw std::out_of_range("gather_rows index out of range");
        std::copy(av.data() + rows[i] * c, av.data() + (rows[i] + 1) * c, out.data() + i * c);
    }
    int id = push(std::move(out), {a.id}, [rows = std::move(rows)](Tape& t, int self) {
        const Node& n = t.nodes_[self];
        Tensor& ga = t.grad_ref(n.inputs[0]);
        const std::size_t c = ga.cols();
        for (std::size_t i = 0; i < rows.size(); ++i) {
            for (std::size_t j = 0; j < c; ++j) ga[rows[i] * c + j] += n.grad[i * c + j];
        }
    });
    return Var{id};
}

Var Tape::maxpool_rows(Var a, std::size_t group_rows) {
    const Tensor& av = value(a);
    if (av.ndim() != 2 || group_rows == 0 || av.rows() % group_rows != 0) {
        throw std::invalid_argument("maxpool_rows: rows must divide into groups");
    }
    const std::size_t groups = av.rows() / group_rows;
    const std::size_t c = av.cols();
    Tensor out({groups, c});
    std::vector<std::size_t> argmax(groups * c, 0);
    for (std::size_t g = 0; g < groups; ++g) {
        for (std::size_t j = 0; j < c; ++j) {
            double best = av.at(g * group_rows, j);
            std::size_t best_w = 0;
            for (std::size_t w = 1; w < group_rows; ++w) {
                const double v = av.at(g * group_rows + w, j);
                if (v > best) {
                    best = v;
                    best_w = w;
                }
            }
            out.at(g, j) = best;
            argmax[g * c + j] = best_w;
        }
    }
    int id = push(std::move(out), {a.id}, [group_rows](Tape& t, int self) {
        const Node& n = t.nodes_[self];
        Tensor& ga = t.grad_ref(n.inputs[0]);
        const std::size_t c = ga.cols();
        const std::size_t groups = n.value.rows();
        for (std::size_t g = 0; g < groups; ++g) {
            for (std::size_t j = 0; j < c; ++j) {
                const std::size_t w = n.aux[g * c + j];
                ga.at(g * group_rows + w, j) += n.grad.at(g, j);
            }
        }
    });
    nodes_.back().aux = std::move(argmax);
    return Var{id};
}

void Tape::backward(Var loss) {
    Node& ln = node(loss);
    if (ln.value.size() != 1) {
        throw std::invalid_argument("backward requires a scalar loss, got " +
                                    ln.value.shape_str());
    }
    grad_ref(loss.id)[0] += 1.0;
    for (int id = loss.id; id >= 0; --id) {
        Node& n = nodes_[static_cast<std::size_t>(id)];
        if (n.backward && n.requires_grad && n.grad.size() != 0) n.backward(*this, id);
    }
}

}  // namespace ppcov::nd
