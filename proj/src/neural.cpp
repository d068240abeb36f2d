#include "ppcov/neural.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <functional>
#include <limits>
#include <numeric>

#include "json.hpp"
#include "ppcov/errors.hpp"

using nlohmann::json;

namespace ppcov::neural {

namespace {

nd::Tensor with_bias(nd::Tensor m, const nd::Tensor& bias) {
    for (std::size_t r = 0; r < m.rows(); ++r) {
        for (std::size_t c = 0; c < m.cols(); ++c) m.at(r, c) += bias[c];
    }
    return m;
}

nd::Tensor peephole_term(const nd::Tensor& cell, const nd::Tensor& w) {
    nd::Tensor out = cell;
    for (std::size_t r = 0; r < out.rows(); ++r) {
        for (std::size_t c = 0; c < out.cols(); ++c) out.at(r, c) *= w[c];
    }
    return out;
}

nd::Tensor add_t(nd::Tensor a, const nd::Tensor& b) {
    for (std::size_t i = 0; i < a.size(); ++i) a[i] += b[i];
    return a;
}

}  // namespace

Architecture architecture_from_string(const std::string& name) {
    if (name == "cnn") return Architecture::kCnn;
    if (name == "lstm") return Architecture::kLstm;
    if (name == "bilstm") return Architecture::kBiLstm;
    if (name == "cnnlstm") return Architecture::kCnnLstm;
    throw UsageError("unknown architecture: " + name);
}

std::string architecture_name(Architecture architecture) {
    switch (architecture) {
        case Architecture::kCnn: return "cnn";
        case Architecture::kLstm: return "lstm";
        case Architecture::kBiLstm: return "bilstm";
        case Architecture::kCnnLstm: return "cnnlstm";
    }
    throw ModelError("bad architecture");
}

RnnStepResult rnn_step(const RnnCellParams& params, const nd::Tensor& x_t,
                       const nd::Tensor& h_prev) {
    nd::Tensor pre = add_t(nd::matmul(x_t, params.w_xh), nd::matmul(h_prev, params.w_hh));
    nd::Tensor h = nd::sigmoid(with_bias(std::move(pre), params.b_h));
    nd::Tensor y = with_bias(nd::matmul(h, params.w_hy), params.b_y);
    return {std::move(h), std::move(y)};
}

LstmStepResult lstm_step(const LstmCellParams& params, const nd::Tensor& x_t,
                         const nd::Tensor& h_prev, const nd::Tensor& c_prev) {
    nd::Tensor pre_i = add_t(add_t(nd::matmul(x_t, params.w_xi), nd::matmul(h_prev, params.w_hi)),
                             peephole_term(c_prev, params.w_ci));
    nd::Tensor i = nd::sigmoid(with_bias(std::move(pre_i), params.b_i));

    nd::Tensor pre_f = add_t(add_t(nd::matmul(x_t, params.w_xf), nd::matmul(h_prev, params.w_hf)),
                             peephole_term(c_prev, params.w_cf));
    nd::Tensor f = nd::sigmoid(with_bias(std::move(pre_f), params.b_f));

    nd::Tensor cand = nd::tanh_t(with_bias(
        add_t(nd::matmul(x_t, params.w_xc), nd::matmul(h_prev, params.w_hc)), params.b_c));

    nd::Tensor c = c_prev;
    for (std::size_t idx = 0; idx < c.size(); ++idx) {
        c[idx] = f[idx] * c_prev[idx] + i[idx] * cand[idx];
    }

    nd::Tensor pre_o = add_t(add_t(nd::matmul(x_t, params.w_xo), nd::matmul(h_prev, params.w_ho)),
                             peephole_term(c, params.w_co));
    nd::Tensor o = nd::sigmoid(with_bias(std::move(pre_o), params.b_o));

    nd::Tensor h = nd::tanh_t(c);
    for (std::size_t idx = 0; idx < h.size(); ++idx) h[idx] *= o[idx];
    return {std::move(h), std::move(c)};
}

ConvMaxpool conv_maxpool(const nd::Tensor& sentence, const nd::Tensor& filters,
                         const nd::Tensor& bias, std::size_t width) {
    const std::size_t len = sentence.rows();
    const std::size_t dim = sentence.cols();
    if (width == 0 || len < width) {
        throw ModelError("sentence shorter than filter width " + std::to_string(width));
    }
    if (filters.rows() != width * dim) {
        throw ModelError("filter rows must equal width * dimension");
    }
    const std::size_t n_filters = filters.cols();
    const std::size_t n_win = len - width + 1;

    ConvMaxpool out;
    out.feature_map = nd::Tensor::zeros({n_win, n_filters});
    out.pooled.assign(n_filters, 0.0);
    out.argmax.assign(n_filters, 0);

    for (std::size_t j = 0; j < n_win; ++j) {
        const double* window = sentence.data() + j * dim;
        for (std::size_t f = 0; f < n_filters; ++f) {
            double acc = bias[f];
            for (std::size_t k = 0; k < width * dim; ++k) {
                acc += window[k] * filters.at(k, f);
            }
            out.feature_map.at(j, f) = acc > 0.0 ? acc : 0.0;
        }
    }
    for (std::size_t f = 0; f < n_filters; ++f) {
        double best = out.feature_map.at(0, f);
        std::size_t best_j = 0;
        for (std::size_t j = 1; j < n_win; ++j) {
            if (out.feature_map.at(j, f) > best) {
                best = out.feature_map.at(j, f);
                best_j = j;
            }
        }
        out.pooled[f] = best;
        out.argmax[f] = best_j;
    }
    return out;
}

namespace {

bool is_lstm_family(Architecture a) {
    return a == Architecture::kLstm || a == Architecture::kBiLstm ||
           a == Architecture::kCnnLstm;
}

std::vector<std::string> block_prefixes(const ModelConfig& config) {
    std::vector<std::string> prefixes;
    for (std::size_t b = 0; b < config.lstm_blocks; ++b) {
        if (config.architecture == Architecture::kBiLstm) {
            prefixes.push_back("fwd" + std::to_string(b));
            prefixes.push_back("bwd" + std::to_string(b));
        } else {
            prefixes.push_back("lstm" + std::to_string(b));
        }
    }
    return prefixes;
}

double glorot_limit(std::size_t fan_in, std::size_t fan_out) {
    return std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
}

void init_lstm_block(nd::ParamMap& params, const std::string& prefix, std::size_t in_dim,
                     std::size_t units, bool peepholes, std::mt19937_64& rng) {
    const double wx = glorot_limit(in_dim, units);
    const double wh = glorot_limit(units, units);
    const double wc = glorot_limit(units, 1);
    for (const char* gate : {"i", "f", "c", "o"}) {
        std::string g(gate);
        params.emplace(prefix + ".w_x" + g, nd::Tensor::uniform({in_dim, units}, wx, rng));
        params.emplace(prefix + ".w_h" + g, nd::Tensor::uniform({units, units}, wh, rng));
        if (peepholes && g != "c") {
            params.emplace(prefix + ".w_c" + g, nd::Tensor::uniform({units}, wc, rng));
        }
        double bias = g == "f" ? 1.0 : 0.0;
        params.emplace(prefix + ".b_" + g, nd::Tensor::full({units}, bias));
    }
}

}  // namespace

Model build_model(const ModelConfig& config, features::Vocabulary vocab,
                  emb::EmbeddingTable embeddings, std::size_t max_sequence_length,
                  std::size_t n_classes) {
    if (embeddings.vectors.rows() != vocab.size()) {
        throw ModelError("embedding rows do not match vocabulary size");
    }
    if (max_sequence_length == 0) throw ModelError("max_sequence_length must be positive");
    if (config.lstm_blocks == 0 && is_lstm_family(config.architecture)) {
        throw ModelError("lstm architectures need at least one block");
    }
    if (config.lstm_units == 0 && is_lstm_family(config.architecture)) {
        throw ModelError("lstm architectures need at least one unit");
    }

    const bool uses_conv =
        config.architecture == Architecture::kCnn || config.architecture == Architecture::kCnnLstm;
    if (uses_conv) {
        if (config.cnn.filter_widths.empty() || config.cnn.filters_per_width == 0) {
            throw ModelError("cnn needs at least one filter width and one filter");
        }
        for (std::size_t w : config.cnn.filter_widths) {
            if (w == 0 || w > max_sequence_length) {
                throw ModelError("filter width " + std::to_string(w) +
                                 " exceeds sequence length " +
                                 std::to_string(max_sequence_length));
            }
        }
    }

    Model model;
    model.architecture = config.architecture;
    model.config = config;
    model.n_classes = n_classes;
    model.max_sequence_length = max_sequence_length;
    model.vocab = std::move(vocab);
    model.embeddings = std::move(embeddings);

    const std::size_t d = model.embeddings.dimension;
    const std::size_t units = config.lstm_units;
    std::mt19937_64 rng(config.seed);

    std::size_t total_filters = 0;
    if (uses_conv) {
        std::vector<std::size_t> widths = config.cnn.filter_widths;
        std::sort(widths.begin(), widths.end());
        for (std::size_t w : widths) {
            const std::size_t rows = w * d;
            const double limit = glorot_limit(rows, config.cnn.filters_per_width);
            model.params.emplace("conv" + std::to_string(w) + ".w",
                                 nd::Tensor::uniform({rows, config.cnn.filters_per_width},
                                                     limit, rng));
            model.params.emplace("conv" + std::to_string(w) + ".b",
                                 nd::Tensor::zeros({config.cnn.filters_per_width}));
            total_filters += config.cnn.filters_per_width;
        }
    }

    std::size_t head_in = 0;
    switch (config.architecture) {
        case Architecture::kCnn:
            head_in = total_filters;
            break;
        case Architecture::kLstm:
        case Architecture::kBiLstm: {
            std::size_t in_dim = d;
            for (const std::string& prefix : block_prefixes(config)) {
                bool backward = prefix.rfind("bwd", 0) == 0;
                std::size_t block_in = backward || prefix.back() == '0' ? in_dim : units;
                init_lstm_block(model.params, prefix, block_in, units, config.peepholes, rng);
            }
            head_in = units;
            break;
        }
        case Architecture::kCnnLstm: {
            std::size_t in_dim = total_filters;
            for (const std::string& prefix : block_prefixes(config)) {
                std::size_t block_in = prefix.back() == '0' ? in_dim : units;
                init_lstm_block(model.params, prefix, block_in, units, config.peepholes, rng);
            }
            head_in = units;
            break;
        }
    }

    model.params.emplace("head.w",
                         nd::Tensor::uniform({head_in, n_classes},
                                             glorot_limit(head_in, n_classes), rng));
    model.params.emplace("head.b", nd::Tensor::zeros({n_classes}));
    return model;
}

std::size_t parameter_count(const Model& model) {
    std::size_t count = 0;
    for (const auto& [name, tensor] : model.params) count += tensor.size();
    return count;
}

namespace {

struct GateVars {
    nd::Var w_x;
    nd::Var w_h;
    nd::Var w_c;  // invalid without peepholes
    nd::Var b;
};

struct BlockVars {
    GateVars i, f, c, o;
};

BlockVars collect_block(const std::map<std::string, nd::Var>& pv, const std::string& prefix,
                        bool peepholes) {
    auto get = [&](const std::string& suffix) { return pv.at(prefix + suffix); };
    BlockVars block;
    block.i = {get(".w_xi"), get(".w_hi"), peepholes ? get(".w_ci") : nd::Var{}, get(".b_i")};
    block.f = {get(".w_xf"), get(".w_hf"), peepholes ? get(".w_cf") : nd::Var{}, get(".b_f")};
    block.c = {get(".w_xc"), get(".w_hc"), nd::Var{}, get(".b_c")};
    block.o = {get(".w_xo"), get(".w_ho"), peepholes ? get(".w_co") : nd::Var{}, get(".b_o")};
    return block;
}

using XProduct = std::function<nd::Var(int gate, std::size_t step)>;

std::vector<nd::Var> run_lstm_block(nd::Tape& tape, std::size_t steps, std::size_t batch,
                                    std::size_t units, const XProduct& x_product,
                                    const BlockVars& block, const nd::Tensor* recurrent_mask) {
    nd::Var h = tape.constant(nd::Tensor::zeros({batch, units}));
    nd::Var c = tape.constant(nd::Tensor::zeros({batch, units}));
    std::vector<nd::Var> hs;
    hs.reserve(steps);
    for (std::size_t t = 0; t < steps; ++t) {
        nd::Var hd = recurrent_mask != nullptr ? tape.mul_value(h, *recurrent_mask) : h;

        nd::Var pre_i = tape.add(x_product(0, t), tape.matmul(hd, block.i.w_h));
        if (block.i.w_c.valid()) pre_i = tape.add(pre_i, tape.mul_rowvec(c, block.i.w_c));
        nd::Var gi = tape.sigmoid(tape.add_rowvec(pre_i, block.i.b));

        nd::Var pre_f = tape.add(x_product(1, t), tape.matmul(hd, block.f.w_h));
        if (block.f.w_c.valid()) pre_f = tape.add(pre_f, tape.mul_rowvec(c, block.f.w_c));
        nd::Var gf = tape.sigmoid(tape.add_rowvec(pre_f, block.f.b));

        nd::Var cand = tape.tanh(
            tape.add_rowvec(tape.add(x_product(2, t), tape.matmul(hd, block.c.w_h)), block.c.b));
        nd::Var c_new = tape.add(tape.mul(gf, c), tape.mul(gi, cand));

        nd::Var pre_o = tape.add(x_product(3, t), tape.matmul(hd, block.o.w_h));
        if (block.o.w_c.valid()) pre_o = tape.add(pre_o, tape.mul_rowvec(c_new, block.o.w_c));
        nd::Var go = tape.sigmoid(tape.add_rowvec(pre_o, block.o.b));

        nd::Var h_new = tape.mul(go, tape.tanh(c_new));
        hs.push_back(h_new);
        h = h_new;
        c = c_new;
    }
    return hs;
}

// Sum of per-step h rows masked down to each sequence's final step.
nd::Var select_final(nd::Tape& tape, const std::vector<nd::Var>& hs,
                     const std::vector<std::size_t>& final_step, std::size_t batch) {
    std::map<std::size_t, std::vector<double>> masks;
    for (std::size_t b = 0; b < batch; ++b) {
        auto [it, fresh] = masks.try_emplace(final_step[b], std::vector<double>(batch, 0.0));
        it->second[b] = 1.0;
    }
    nd::Var acc;
    for (const auto& [step, scales] : masks) {
        nd::Var part = tape.scale_rows(hs[step], scales);
        acc = acc.valid() ? tape.add(acc, part) : part;
    }
    return acc;
}

// Stacks LSTM blocks; block 0 consumes x_product over the input
// sequence, upper blocks consume the hidden sequence below.
std::vector<nd::Var> run_lstm_stack(nd::Tape& tape, const Model& model,
                                    const std::vector<std::string>& prefixes,
                                    const std::map<std::string, nd::Var>& pv,
                                    const XProduct& base_product, std::size_t steps,
                                    std::size_t batch, bool training,
                                    std::mt19937_64* dropout_rng) {
    const ModelConfig& cfg = model.config;
    const std::size_t units = cfg.lstm_units;
    std::vector<nd::Var> hs;
    for (std::size_t level = 0; level < prefixes.size(); ++level) {
        BlockVars block = collect_block(pv, prefixes[level], cfg.peepholes);
        nd::Tensor mask;
        bool masked = training && cfg.recurrent_dropout > 0.0 && dropout_rng != nullptr;
        if (masked) {
            mask = nd::dropout_mask({batch, units}, cfg.recurrent_dropout, *dropout_rng);
        }
        if (level == 0) {
            hs = run_lstm_block(tape, steps, batch, units, base_product, block,
                                masked ? &mask : nullptr);
        } else {
            std::vector<nd::Var> lower = std::move(hs);
            std::array<nd::Var, 4> wx = {block.i.w_x, block.f.w_x, block.c.w_x, block.o.w_x};
            XProduct product = [&tape, lower, wx](int gate, std::size_t t) {
                return tape.matmul(lower[t], wx[static_cast<std::size_t>(gate)]);
            };
            hs = run_lstm_block(tape, steps, batch, units, product, block,
                                masked ? &mask : nullptr);
        }
    }
    return hs;
}

// Big-GEMM input products: one matmul per gate over all timesteps of a
// constant time-major input, sliced per step.
XProduct gemm_product(nd::Tape& tape, nd::Var input_all, const BlockVars& block,
                      std::size_t batch) {
    std::array<nd::Var, 4> all = {
        tape.matmul(input_all, block.i.w_x),
        tape.matmul(input_all, block.f.w_x),
        tape.matmul(input_all, block.c.w_x),
        tape.matmul(input_all, block.o.w_x),
    };
    return [&tape, all, batch](int gate, std::size_t t) {
        return tape.slice_rows(all[static_cast<std::size_t>(gate)], t * batch, batch);
    };
}

std::size_t effective_length(const features::EncodedSequence& seq, std::size_t max_len) {
    std::size_t len = std::min(seq.true_length, max_len);
    return len == 0 ? 1 : len;
}

// Flattened windows of `width` consecutive sentence rows. Row order is
// (seq, window) when seq_major, else (window, seq).
nd::Tensor window_matrix(const std::vector<nd::Tensor>& sentences, std::size_t width,
                         std::size_t n_win, bool seq_major) {
    const std::size_t batch = sentences.size();
    const std::size_t dim = sentences.front().cols();
    nd::Tensor out = nd::Tensor::zeros({batch * n_win, width * dim});
    for (std::size_t b = 0; b < batch; ++b) {
        for (std::size_t j = 0; j < n_win; ++j) {
            const std::size_t row = seq_major ? b * n_win + j : j * batch + b;
            std::copy(sentences[b].data() + j * dim, sentences[b].data() + (j + width) * dim,
                      out.data() + row * width * dim);
        }
    }
    return out;
}

std::vector<std::size_t> sorted_widths(const CnnConfig& cnn) {
    std::vector<std::size_t> widths = cnn.filter_widths;
    std::sort(widths.begin(), widths.end());
    return widths;
}

}  // namespace

ForwardGraph build_forward(nd::Tape& tape, const Model& model,
                           const std::vector<features::EncodedSequence>& batch, bool training,
                           std::mt19937_64* dropout_rng) {
    if (batch.empty()) throw ModelError("empty batch");
    const std::size_t max_len = model.max_sequence_length;
    for (const auto& seq : batch) {
        if (seq.indices.size() != max_len) {
            throw ModelError("sequence length " + std::to_string(seq.indices.size()) +
                             " does not match model length " + std::to_string(max_len));
        }
    }

    const ModelConfig& cfg = model.config;
    const std::size_t B = batch.size();
    const std::size_t d = model.embeddings.dimension;

    ForwardGraph graph;
    graph.batch = B;
    for (const auto& [name, tensor] : model.params) {
        bool trainable = !cfg.freeze_body || name.rfind("head.", 0) == 0;
        graph.params.emplace(name, tape.leaf(tensor, trainable));
    }
    const auto& pv = graph.params;

    std::vector<nd::Tensor> sentences;
    sentences.reserve(B);
    for (const auto& seq : batch) sentences.push_back(emb::lookup(model.embeddings, seq));
    if (training && dropout_rng != nullptr) {
        for (auto& s : sentences) {
            if (cfg.embedding_dropout > 0.0) {
                nd::Tensor mask = nd::dropout_mask(s.shape(), cfg.embedding_dropout, *dropout_rng);
                for (std::size_t i = 0; i < s.size(); ++i) s[i] *= mask[i];
            }
            if (cfg.input_dropout > 0.0) {
                nd::Tensor mask = nd::dropout_mask(s.shape(), cfg.input_dropout, *dropout_rng);
                for (std::size_t i = 0; i < s.size(); ++i) s[i] *= mask[i];
            }
        }
    }

    std::vector<std::size_t> eff(B);
    for (std::size_t b = 0; b < B; ++b) eff[b] = effective_length(batch[b], max_len);

    nd::Var head_in;
    switch (model.architecture) {
        case Architecture::kLstm:
        case Architecture::kBiLstm: {
            auto time_major = [&](bool reversed) {
                nd::Tensor x = nd::Tensor::zeros({max_len * B, d});
                for (std::size_t b = 0; b < B; ++b) {
                    for (std::size_t t = 0; t < max_len; ++t) {
                        std::size_t src = t;
                        if (reversed) src = t < eff[b] ? eff[b] - 1 - t : t;
                        std::copy(sentences[b].data() + src * d,
                                  sentences[b].data() + (src + 1) * d,
                                  x.data() + (t * B + b) * d);
                    }
                }
                return x;
            };
            std::vector<std::size_t> final_step(B);
            for (std::size_t b = 0; b < B; ++b) final_step[b] = eff[b] - 1;

            if (model.architecture == Architecture::kLstm) {
                std::vector<std::string> prefixes = block_prefixes(cfg);
                nd::Var x_all = tape.constant(time_major(false));
                BlockVars first = collect_block(pv, prefixes.front(), cfg.peepholes);
                XProduct product = gemm_product(tape, x_all, first, B);
                std::vector<nd::Var> hs = run_lstm_stack(tape, model, prefixes, pv, product,
                                                         max_len, B, training, dropout_rng);
                head_in = select_final(tape, hs, final_step, B);
            } else {
                std::vector<std::string> fwd_prefixes;
                std::vector<std::string> bwd_prefixes;
                for (std::size_t b = 0; b < cfg.lstm_blocks; ++b) {
                    fwd_prefixes.push_back("fwd" + std::to_string(b));
                    bwd_prefixes.push_back("bwd" + std::to_string(b));
                }
                nd::Var x_fwd = tape.constant(time_major(false));
                BlockVars first_f = collect_block(pv, fwd_prefixes.front(), cfg.peepholes);
                std::vector<nd::Var> hs_f =
                    run_lstm_stack(tape, model, fwd_prefixes, pv,
                                   gemm_product(tape, x_fwd, first_f, B), max_len, B, training,
                                   dropout_rng);
                nd::Var fwd_final = select_final(tape, hs_f, final_step, B);

                nd::Var x_bwd = tape.constant(time_major(true));
                BlockVars first_b = collect_block(pv, bwd_prefixes.front(), cfg.peepholes);
                std::vector<nd::Var> hs_b =
                    run_lstm_stack(tape, model, bwd_prefixes, pv,
                                   gemm_product(tape, x_bwd, first_b, B), max_len, B, training,
                                   dropout_rng);
                nd::Var bwd_final = select_final(tape, hs_b, final_step, B);

                graph.fwd_final = fwd_final;
                graph.bwd_final = bwd_final;
                head_in = tape.add(fwd_final, bwd_final);
            }
            break;
        }
        case Architecture::kCnn: {
            std::vector<nd::Var> pooled;
            for (std::size_t w : sorted_widths(cfg.cnn)) {
                const std::size_t n_win = max_len - w + 1;
                nd::Var windows =
                    tape.constant(window_matrix(sentences, w, n_win, /*seq_major=*/true));
                std::string key = "conv" + std::to_string(w);
                nd::Var conv = tape.relu(
                    tape.add_rowvec(tape.matmul(windows, pv.at(key + ".w")), pv.at(key + ".b")));
                nd::Var pool = tape.maxpool_rows(conv, n_win);
                graph.pool_widths.push_back(w);
                graph.pool_vars.push_back(pool);
                pooled.push_back(pool);
            }
            nd::Var features_var =
                pooled.size() == 1 ? pooled.front() : tape.concat_cols(pooled);
            if (training && dropout_rng != nullptr && cfg.cnn.dropout_rate > 0.0) {
                nd::Tensor mask = nd::dropout_mask(tape.value(features_var).shape(),
                                                   cfg.cnn.dropout_rate, *dropout_rng);
                features_var = tape.mul_value(features_var, mask);
            }
            head_in = features_var;
            break;
        }
        case Architecture::kCnnLstm: {
            std::vector<std::size_t> widths = sorted_widths(cfg.cnn);
            const std::size_t max_w = widths.back();
            const std::size_t n_win = max_len - max_w + 1;
            graph.n_windows = n_win;

            std::vector<nd::Var> conv_parts;
            for (std::size_t w : widths) {
                nd::Var windows =
                    tape.constant(window_matrix(sentences, w, n_win, /*seq_major=*/false));
                std::string key = "conv" + std::to_string(w);
                conv_parts.push_back(tape.relu(
                    tape.add_rowvec(tape.matmul(windows, pv.at(key + ".w")), pv.at(key + ".b"))));
            }
            nd::Var conv_seq =
                conv_parts.size() == 1 ? conv_parts.front() : tape.concat_cols(conv_parts);

            std::vector<std::string> prefixes = block_prefixes(cfg);
            BlockVars first = collect_block(pv, prefixes.front(), cfg.peepholes);
            XProduct product = gemm_product(tape, conv_seq, first, B);
            std::vector<nd::Var> hs = run_lstm_stack(tape, model, prefixes, pv, product, n_win,
                                                     B, training, dropout_rng);

            std::vector<std::size_t> final_step(B);
            for (std::size_t b = 0; b < B; ++b) {
                std::size_t windows_in_range =
                    eff[b] >= max_w ? eff[b] - max_w + 1 : std::size_t{1};
                final_step[b] = std::min(windows_in_range, n_win) - 1;
            }
            head_in = select_final(tape, hs, final_step, B);
            break;
        }
    }

    graph.logits = tape.add_rowvec(tape.matmul(head_in, pv.at("head.w")), pv.at("head.b"));
    return graph;
}

namespace {

nd::Tensor one_hot(const std::vector<std::size_t>& labels, std::size_t n_classes) {
    nd::Tensor y = nd::Tensor::zeros({labels.size(), n_classes});
    for (std::size_t i = 0; i < labels.size(); ++i) y.at(i, labels[i]) = 1.0;
    return y;
}

}  // namespace

TrainResult train_model(Model& model, const std::vector<features::EncodedSequence>& sequences,
                        const std::vector<std::size_t>& labels) {
    if (sequences.empty()) throw DataError("train_model: empty training split");
    if (sequences.size() != labels.size()) {
        throw DataError("train_model: sequences and labels differ in length");
    }
    for (std::size_t y : labels) {
        if (y >= model.n_classes) throw DataError("label out of range: " + std::to_string(y));
    }

    const ModelConfig& cfg = model.config;
    std::mt19937_64 shuffle_rng(cfg.seed ^ 0x9e3779b97f4a7c15ULL);
    std::mt19937_64 dropout_rng(cfg.seed ^ 0xbf58476d1ce4e5b9ULL);

    nd::OptimizerState opt = nd::make_optimizer(cfg.optimizer);
    if (cfg.learning_rate > 0.0) opt.learning_rate = cfg.learning_rate;

    const std::size_t n = sequences.size();
    const std::size_t batch_size = cfg.batch_size == 0 ? n : std::min(cfg.batch_size, n);
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});

    TrainResult result;
    double best = std::numeric_limits<double>::infinity();
    std::size_t flat_epochs = 0;

    for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
        std::shuffle(order.begin(), order.end(), shuffle_rng);
        double loss_sum = 0.0;

        for (std::size_t start = 0; start < n; start += batch_size) {
            const std::size_t count = std::min(batch_size, n - start);
            std::vector<features::EncodedSequence> batch_seqs;
            std::vector<std::size_t> batch_labels;
            batch_seqs.reserve(count);
            batch_labels.reserve(count);
            for (std::size_t i = 0; i < count; ++i) {
                batch_seqs.push_back(sequences[order[start + i]]);
                batch_labels.push_back(labels[order[start + i]]);
            }

            nd::Tape tape;
            ForwardGraph graph = build_forward(tape, model, batch_seqs, true, &dropout_rng);
            nd::Var probs = tape.softmax_rows(graph.logits);
            nd::Var loss = tape.cross_entropy_mean(probs, one_hot(batch_labels, model.n_classes));

            const double batch_loss = tape.value(loss)[0];
            if (!std::isfinite(batch_loss)) {
                throw ModelError("training diverged at epoch " + std::to_string(epoch));
            }
            loss_sum += batch_loss * static_cast<double>(count);

            tape.backward(loss);
            nd::ParamMap grads;
            for (const auto& [name, var] : graph.params) {
                if (cfg.freeze_body && name.rfind("head.", 0) != 0) continue;
                grads.emplace(name, tape.grad(var));
            }
            nd::clip_gradients(grads, opt.clip_norm);
            nd::optimizer_step(opt, model.params, grads);
        }

        const double epoch_loss = loss_sum / static_cast<double>(n);
        if (!std::isfinite(epoch_loss)) {
            throw ModelError("training diverged at epoch " + std::to_string(epoch));
        }
        result.epoch_losses.push_back(epoch_loss);

        if (epoch_loss < best - cfg.min_improvement) {
            best = epoch_loss;
            flat_epochs = 0;
        } else if (++flat_epochs >= cfg.patience) {
            result.early_stopped = true;
            break;
        }
    }
    return result;
}

std::vector<std::vector<double>> predict_batch(
    const Model& model, const std::vector<features::EncodedSequence>& sequences) {
    std::vector<std::vector<double>> out;
    out.reserve(sequences.size());
    constexpr std::size_t kChunk = 256;
    for (std::size_t start = 0; start < sequences.size(); start += kChunk) {
        const std::size_t count = std::min(kChunk, sequences.size() - start);
        std::vector<features::EncodedSequence> chunk(sequences.begin() + start,
                                                     sequences.begin() + start + count);
        nd::Tape tape;
        ForwardGraph graph = build_forward(tape, model, chunk, false, nullptr);
        const nd::Tensor& probs = tape.value(tape.softmax_rows(graph.logits));
        for (std::size_t r = 0; r < count; ++r) {
            std::vector<double> row(model.n_classes);
            for (std::size_t c = 0; c < model.n_classes; ++c) row[c] = probs.at(r, c);
            out.push_back(std::move(row));
        }
    }
    return out;
}

std::vector<double> predict(const Model& model, const features::EncodedSequence& encoded) {
    return predict_batch(model, {encoded}).front();
}

BiLstmFinals bilstm_final_outputs(const Model& model,
                                  const features::EncodedSequence& encoded) {
    if (model.architecture != Architecture::kBiLstm) {
        throw ModelError("final-output inspection requires the bilstm architecture");
    }
    nd::Tape tape;
    ForwardGraph graph = build_forward(tape, model, {encoded}, false, nullptr);
    return {tape.value(graph.fwd_final), tape.value(graph.bwd_final)};
}

std::vector<UnigramCredit> trace_unigram_importance(
    const Model& model, const std::vector<features::EncodedSequence>& sequences, std::size_t cls,
    std::size_t top_n) {
    if (model.architecture != Architecture::kCnn) {
        throw ModelError("unigram trace requires the cnn architecture");
    }
    if (cls >= model.n_classes) throw ModelError("class index out of range");

    const nd::Tensor& head_w = model.params.at("head.w");
    std::map<std::string, double> credits;

    constexpr std::size_t kChunk = 128;
    for (std::size_t start = 0; start < sequences.size(); start += kChunk) {
        const std::size_t count = std::min(kChunk, sequences.size() - start);
        std::vector<features::EncodedSequence> chunk(sequences.begin() + start,
                                                     sequences.begin() + start + count);
        nd::Tape tape;
        ForwardGraph graph = build_forward(tape, model, chunk, false, nullptr);
        const nd::Tensor& probs = tape.value(tape.softmax_rows(graph.logits));

        for (std::size_t b = 0; b < count; ++b) {
            std::size_t pred = 0;
            for (std::size_t c = 1; c < model.n_classes; ++c) {
                if (probs.at(b, c) > probs.at(b, pred)) pred = c;
            }
            if (pred != cls) continue;

            const features::EncodedSequence& seq = chunk[b];
            const std::size_t limit = effective_length(seq, model.max_sequence_length);
            std::size_t feature_base = 0;
            for (std::size_t p = 0; p < graph.pool_vars.size(); ++p) {
                const std::size_t width = graph.pool_widths[p];
                const nd::Tensor& pooled = tape.value(graph.pool_vars[p]);
                const auto& argmax = tape.maxpool_argmax(graph.pool_vars[p]);
                const std::size_t n_filters = pooled.cols();
                for (std::size_t f = 0; f < n_filters; ++f) {
                    const double contribution =
                        pooled.at(b, f) * head_w.at(feature_base + f, cls);
                    if (contribution == 0.0) continue;
                    const std::size_t window = argmax[b * n_filters + f];
                    for (std::size_t pos = window; pos < window + width; ++pos) {
                        if (pos >= limit) break;
                        const std::size_t idx = seq.indices[pos];
                        if (idx == features::Vocabulary::kPadIndex) continue;
                        credits[model.vocab.token_at(idx)] += contribution;
                    }
                }
                feature_base += n_filters;
            }
        }
    }

    std::vector<UnigramCredit> ranked;
    ranked.reserve(credits.size());
    for (const auto& [token, credit] : credits) ranked.push_back({token, credit});
    std::sort(ranked.begin(), ranked.end(), [](const UnigramCredit& a, const UnigramCredit& b) {
        if (a.credit != b.credit) return a.credit > b.credit;
        return a.token < b.token;
    });
    if (ranked.size() > top_n) ranked.resize(top_n);
    return ranked;
}

namespace {

json tensor_to_json(const nd::Tensor& t) {
    json j;
    j["shape"] = t.shape();
    j["data"] = t.vec();
    return j;
}

nd::Tensor tensor_from_json(const json& j) {
    return nd::Tensor(j.at("shape").get<std::vector<std::size_t>>(),
                      j.at("data").get<std::vector<double>>());
}

emb::EmbeddingSource source_from_string(const std::string& name) {
    if (name == "trained-cbow") return emb::EmbeddingSource::kTrainedCbow;
    if (name == "trained-skipgram") return emb::EmbeddingSource::kTrainedSkipGram;
    if (name == "pretrained") return emb::EmbeddingSource::kPretrained;
    if (name == "random") return emb::EmbeddingSource::kRandom;
    throw DataError("unknown embedding source: " + name);
}

json config_to_json(const ModelConfig& cfg) {
    json j;
    j["architecture"] = architecture_name(cfg.architecture);
    j["embedding_dropout"] = cfg.embedding_dropout;
    j["input_dropout"] = cfg.input_dropout;
    j["recurrent_dropout"] = cfg.recurrent_dropout;
    j["lstm_units"] = cfg.lstm_units;
    j["lstm_blocks"] = cfg.lstm_blocks;
    j["optimizer"] = nd::optimizer_name(cfg.optimizer);
    j["learning_rate"] = cfg.learning_rate;
    j["epochs"] = cfg.epochs;
    j["batch_size"] = cfg.batch_size;
    j["patience"] = cfg.patience;
    j["min_improvement"] = cfg.min_improvement;
    j["seed"] = cfg.seed;
    j["filter_widths"] = cfg.cnn.filter_widths;
    j["filters_per_width"] = cfg.cnn.filters_per_width;
    j["cnn_dropout"] = cfg.cnn.dropout_rate;
    j["peepholes"] = cfg.peepholes;
    j["freeze_body"] = cfg.freeze_body;
    return j;
}

ModelConfig config_from_json(const json& j) {
    ModelConfig cfg;
    cfg.architecture = architecture_from_string(j.at("architecture").get<std::string>());
    cfg.embedding_dropout = j.at("embedding_dropout").get<double>();
    cfg.input_dropout = j.at("input_dropout").get<double>();
    cfg.recurrent_dropout = j.at("recurrent_dropout").get<double>();
    cfg.lstm_units = j.at("lstm_units").get<std::size_t>();
    cfg.lstm_blocks = j.at("lstm_blocks").get<std::size_t>();
    cfg.optimizer = nd::optimizer_from_string(j.at("optimizer").get<std::string>());
    cfg.learning_rate = j.at("learning_rate").get<double>();
    cfg.epochs = j.at("epochs").get<std::size_t>();
    cfg.batch_size = j.at("batch_size").get<std::size_t>();
    cfg.patience = j.at("patience").get<std::size_t>();
    cfg.min_improvement = j.at("min_improvement").get<double>();
    cfg.seed = j.at("seed").get<std::uint64_t>();
    cfg.cnn.filter_widths = j.at("filter_widths").get<std::vector<std::size_t>>();
    cfg.cnn.filters_per_width = j.at("filters_per_width").get<std::size_t>();
    cfg.cnn.dropout_rate = j.at("cnn_dropout").get<double>();
    cfg.peepholes = j.at("peepholes").get<bool>();
    cfg.freeze_body = j.at("freeze_body").get<bool>();
    return cfg;
}

constexpr int kModelVersion = 1;

}  // namespace

void save_model(const Model& model, const std::filesystem::path& path) {
    json j;
    j["format_version"] = kModelVersion;
    j["architecture"] = architecture_name(model.architecture);
    j["n_classes"] = model.n_classes;
    j["max_sequence_length"] = model.max_sequence_length;
    j["config"] = config_to_json(model.config);
    j["vocab"] = model.vocab.tokens();
    json embeddings;
    embeddings["dimension"] = model.embeddings.dimension;
    embeddings["source"] = emb::embedding_source_name(model.embeddings.source);
    embeddings["vectors"] = tensor_to_json(model.embeddings.vectors);
    j["embeddings"] = std::move(embeddings);
    json params;
    for (const auto& [name, tensor] : model.params) params[name] = tensor_to_json(tensor);
    j["params"] = std::move(params);

    std::ofstream out(path);
    if (!out) throw DataError("cannot write model file: " + path.string());
    out << j.dump() << '\n';
    if (!out) throw DataError("failed writing model file: " + path.string());
}

Model load_model(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open model file: " + path.string());
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        throw DataError("malformed model file " + path.string() + ": " + e.what());
    }
    if (j.value("format_version", -1) != kModelVersion) {
        throw DataError("unsupported model format version in " + path.string());
    }

    Model model;
    model.architecture = architecture_from_string(j.at("architecture").get<std::string>());
    model.n_classes = j.at("n_classes").get<std::size_t>();
    model.max_sequence_length = j.at("max_sequence_length").get<std::size_t>();
    model.config = config_from_json(j.at("config"));
    model.vocab =
        features::Vocabulary::from_tokens(j.at("vocab").get<std::vector<std::string>>());
    const json& embeddings = j.at("embeddings");
    model.embeddings.dimension = embeddings.at("dimension").get<std::size_t>();
    model.embeddings.source = source_from_string(embeddings.at("source").get<std::string>());
    model.embeddings.vectors = tensor_from_json(embeddings.at("vectors"));
    for (const auto& [name, value] : j.at("params").items()) {
        model.params.emplace(name, tensor_from_json(value));
    }
    return model;
}

}  // namespace ppcov::neural
