#include "ppcov/embeddings.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <limits>
#include <random>
#include <set>
#include <sstream>

#include "ppcov/errors.hpp"

namespace ppcov::emb {

namespace {

// 53-bit uniform in [0, 1); fully determined by the engine's output.
double uniform_unit(std::mt19937_64& rng) {
    return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

// logits[j] = output row j . h
void target_logits(const nd::Tensor& output_vectors, const double* h, std::vector<double>& logits) {
    const std::size_t v = output_vectors.rows();
    const std::size_t d = output_vectors.cols();
    logits.resize(v);
    for (std::size_t j = 0; j < v; ++j) {
        const double* row = output_vectors.data() + j * d;
        double acc = 0.0;
        for (std::size_t k = 0; k < d; ++k) acc += row[k] * h[k];
        logits[j] = acc;
    }
}

void softmax_inplace(std::vector<double>& logits) {
    double mx = *std::max_element(logits.begin(), logits.end());
    double sum = 0.0;
    for (double& l : logits) {
        l = std::exp(l - mx);
        sum += l;
    }
    for (double& l : logits) l /= sum;
}

std::vector<double> mean_context(const nd::Tensor& input_vectors,
                                 const std::vector<std::size_t>& context) {
    const std::size_t d = input_vectors.cols();
    std::vector<double> h(d, 0.0);
    for (std::size_t c : context) {
        const double* row = input_vectors.data() + c * d;
        for (std::size_t k = 0; k < d; ++k) h[k] += row[k];
    }
    const double inv = 1.0 / static_cast<double>(context.size());
    for (double& x : h) x *= inv;
    return h;
}

struct NegativeSampler {
    std::vector<double> cumulative;
    double total = 0.0;

    void build(const std::vector<std::vector<std::size_t>>& streams, std::size_t vocab_size) {
        std::vector<double> weight(vocab_size, 0.0);
        for (const auto& ids : streams) {
            for (std::size_t id : ids) weight[id] += 1.0;
        }
        weight[features::Vocabulary::kPadIndex] = 0.0;
        cumulative.resize(vocab_size);
        double acc = 0.0;
        for (std::size_t j = 0; j < vocab_size; ++j) {
            acc += std::pow(weight[j], 0.75);
            cumulative[j] = acc;
        }
        total = acc;
    }

    std::size_t draw(std::mt19937_64& rng, std::size_t exclude) const {
        for (int attempt = 0; attempt < 64; ++attempt) {
            double u = uniform_unit(rng) * total;
            auto it = std::upper_bound(cumulative.begin(), cumulative.end(), u);
            std::size_t idx = static_cast<std::size_t>(it - cumulative.begin());
            if (idx >= cumulative.size()) idx = cumulative.size() - 1;
            if (idx != exclude && idx != features::Vocabulary::kPadIndex) return idx;
        }
        return exclude == 1 ? 2 : 1;
    }
};

}  // namespace

EmbeddingAlgorithm embedding_algorithm_from_string(const std::string& name) {
    if (name == "cbow") return EmbeddingAlgorithm::kCbow;
    if (name == "skipgram") return EmbeddingAlgorithm::kSkipGram;
    throw UsageError("unknown embedding algorithm: " + name);
}

std::string embedding_source_name(EmbeddingSource source) {
    switch (source) {
        case EmbeddingSource::kTrainedCbow: return "trained-cbow";
        case EmbeddingSource::kTrainedSkipGram: return "trained-skipgram";
        case EmbeddingSource::kPretrained: return "pretrained";
        case EmbeddingSource::kRandom: return "random";
    }
    throw ModelError("bad embedding source");
}

double skipgram_probability(const SkipGramState& state, std::size_t target, std::size_t context) {
    const std::size_t d = state.input_vectors.cols();
    std::vector<double> logits;
    target_logits(state.output_vectors, state.input_vectors.data() + context * d, logits);
    softmax_inplace(logits);
    return logits[target];
}

double cbow_example_loss(const SkipGramState& state, const std::vector<std::size_t>& context,
                         std::size_t center) {
    std::vector<double> h = mean_context(state.input_vectors, context);
    std::vector<double> logits;
    target_logits(state.output_vectors, h.data(), logits);
    double mx = *std::max_element(logits.begin(), logits.end());
    double sum = 0.0;
    for (double l : logits) sum += std::exp(l - mx);
    return -(logits[center] - mx - std::log(sum));
}

void cbow_example_gradients(const SkipGramState& state, const std::vector<std::size_t>& context,
                            std::size_t center, nd::Tensor& input_grad, nd::Tensor& output_grad) {
    const std::size_t d = state.input_vectors.cols();
    input_grad = nd::Tensor::zeros(state.input_vectors.shape());
    output_grad = nd::Tensor::zeros(state.output_vectors.shape());

    std::vector<double> h = mean_context(state.input_vectors, context);
    std::vector<double> p;
    target_logits(state.output_vectors, h.data(), p);
    softmax_inplace(p);
    p[center] -= 1.0;

    std::vector<double> dh(d, 0.0);
    for (std::size_t j = 0; j < p.size(); ++j) {
        const double* theta = state.output_vectors.data() + j * d;
        double* gout = output_grad.data() + j * d;
        for (std::size_t k = 0; k < d; ++k) {
            gout[k] += p[j] * h[k];
            dh[k] += p[j] * theta[k];
        }
    }
    const double inv = 1.0 / static_cast<double>(context.size());
    for (std::size_t c : context) {
        double* gin = input_grad.data() + c * d;
        for (std::size_t k = 0; k < d; ++k) gin[k] += dh[k] * inv;
    }
}

EmbeddingTable train_embeddings(const std::vector<std::vector<std::string>>& token_streams,
                                const features::Vocabulary& vocab, const EmbeddingConfig& config) {
    if (token_streams.empty()) throw DataError("train_embeddings: no token streams");

    const std::size_t v = vocab.size();
    const std::size_t d = config.dimension;

    std::mt19937_64 init_rng(config.seed);
    nd::Tensor input = nd::Tensor::zeros({v, d});
    for (std::size_t i = d; i < input.size(); ++i) {
        input[i] = (uniform_unit(init_rng) - 0.5) / static_cast<double>(d);
    }
    nd::Tensor output = nd::Tensor::zeros({v, d});

    std::vector<std::vector<std::size_t>> streams;
    streams.reserve(token_streams.size());
    std::size_t total_centers = 0;
    for (const auto& tokens : token_streams) {
        std::vector<std::size_t> ids;
        ids.reserve(tokens.size());
        for (const auto& tok : tokens) {
            std::size_t id = vocab.index_of(tok);
            if (id != features::Vocabulary::kPadIndex) ids.push_back(id);
        }
        if (ids.size() >= 2) total_centers += ids.size();
        streams.push_back(std::move(ids));
    }

    EmbeddingTable table;
    table.dimension = d;
    table.source = config.algorithm == EmbeddingAlgorithm::kCbow ? EmbeddingSource::kTrainedCbow
                                                                 : EmbeddingSource::kTrainedSkipGram;
    if (total_centers == 0) {
        std::cerr << "warning: no context windows available; embeddings left at initialization\n";
        table.vectors = std::move(input);
        return table;
    }

    const bool full_softmax = v <= kFullSoftmaxVocabLimit || config.negative_samples == 0;
    NegativeSampler sampler;
    if (!full_softmax) sampler.build(streams, v);
    std::mt19937_64 train_rng(config.seed ^ 0x9e3779b97f4a7c15ULL);

    const double lr0 = config.learning_rate;
    const double total_updates = static_cast<double>(total_centers * config.epochs);
    double done = 0.0;

    std::vector<double> logits;
    std::vector<double> dh(d);
    std::vector<std::size_t> context;

    for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
        for (const auto& ids : streams) {
            if (ids.size() < 2) continue;
            for (std::size_t i = 0; i < ids.size(); ++i) {
                double lr = lr0 * std::max(1.0 - done / total_updates, 1e-4);
                done += 1.0;

                context.clear();
                std::size_t lo = i >= config.window ? i - config.window : 0;
                std::size_t hi = std::min(ids.size() - 1, i + config.window);
                for (std::size_t j = lo; j <= hi; ++j) {
                    if (j != i) context.push_back(ids[j]);
                }
                if (context.empty()) continue;
                const std::size_t center = ids[i];

                if (config.algorithm == EmbeddingAlgorithm::kCbow) {
                    std::vector<double> h = mean_context(input, context);
                    std::fill(dh.begin(), dh.end(), 0.0);
                    if (full_softmax) {
                        target_logits(output, h.data(), logits);
                        softmax_inplace(logits);
                        logits[center] -= 1.0;
                        for (std::size_t j = 0; j < v; ++j) {
                            const double g = logits[j];
                            if (g == 0.0) continue;
                            double* theta = output.data() + j * d;
                            for (std::size_t k = 0; k < d; ++k) {
                                dh[k] += g * theta[k];
                                theta[k] -= lr * g * h[k];
                            }
                        }
                    } else {
                        for (std::size_t s = 0; s <= config.negative_samples; ++s) {
                            std::size_t tgt = s == 0 ? center : sampler.draw(train_rng, center);
                            double* theta = output.data() + tgt * d;
                            double dot = 0.0;
                            for (std::size_t k = 0; k < d; ++k) dot += theta[k] * h[k];
                            double label = s == 0 ? 1.0 : 0.0;
                            double g = 1.0 / (1.0 + std::exp(-dot)) - label;
                            for (std::size_t k = 0; k < d; ++k) {
                                dh[k] += g * theta[k];
                                theta[k] -= lr * g * h[k];
                            }
                        }
                    }
                    const double inv = 1.0 / static_cast<double>(context.size());
                    for (std::size_t c : context) {
                        double* e = input.data() + c * d;
                        for (std::size_t k = 0; k < d; ++k) e[k] -= lr * dh[k] * inv;
                    }
                } else {
                    double* e = input.data() + center * d;
                    for (std::size_t t : context) {
                        std::fill(dh.begin(), dh.end(), 0.0);
                        if (full_softmax) {
                            target_logits(output, e, logits);
                            softmax_inplace(logits);
                            logits[t] -= 1.0;
                            for (std::size_t j = 0; j < v; ++j) {
                                const double g = logits[j];
                                if (g == 0.0) continue;
                                double* theta = output.data() + j * d;
                                for (std::size_t k = 0; k < d; ++k) {
                                    dh[k] += g * theta[k];
                                    theta[k] -= lr * g * e[k];
                                }
                            }
                        } else {
                            for (std::size_t s = 0; s <= config.negative_samples; ++s) {
                                std::size_t tgt = s == 0 ? t : sampler.draw(train_rng, t);
                                double* theta = output.data() + tgt * d;
                                double dot = 0.0;
                                for (std::size_t k = 0; k < d; ++k) dot += theta[k] * e[k];
                                double label = s == 0 ? 1.0 : 0.0;
                                double g = 1.0 / (1.0 + std::exp(-dot)) - label;
                                for (std::size_t k = 0; k < d; ++k) {
                                    dh[k] += g * theta[k];
                                    theta[k] -= lr * g * e[k];
                                }
                            }
                        }
                        for (std::size_t k = 0; k < d; ++k) e[k] -= lr * dh[k];
                    }
                }
            }
        }
    }

    for (std::size_t k = 0; k < d; ++k) input[k] = 0.0;
    table.vectors = std::move(input);
    return table;
}

EmbeddingTable load_pretrained(const std::filesystem::path& path, const features::Vocabulary& vocab,
                               std::uint64_t seed) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open embedding file: " + path.string());

    std::string line;
    if (!std::getline(in, line)) throw DataError("malformed embedding header: empty file");
    std::istringstream header(line);
    std::size_t count = 0;
    std::size_t dim = 0;
    if (!(header >> count >> dim) || dim == 0) {
        throw DataError("malformed embedding header: " + line);
    }

    EmbeddingTable table;
    table.dimension = dim;
    table.source = EmbeddingSource::kPretrained;
    table.vectors = nd::Tensor::zeros({vocab.size(), dim});

    std::set<std::size_t> filled;
    for (std::size_t row = 0; row < count; ++row) {
        if (!std::getline(in, line)) {
            throw DataError("embedding file truncated: expected " + std::to_string(count) +
                            " rows");
        }
        std::istringstream ls(line);
        std::string token;
        if (!(ls >> token)) throw DataError("embedding row " + std::to_string(row) + " is empty");
        std::vector<double> values;
        values.reserve(dim);
        double x = 0.0;
        while (ls >> x) values.push_back(x);
        if (values.size() != dim) {
            throw DataError("embedding dimension mismatch for token '" + token + "': expected " +
                            std::to_string(dim) + ", got " + std::to_string(values.size()));
        }
        std::size_t idx = 0;
        if (token == features::Vocabulary::kPadToken) {
            continue;  // pad stays a zero row
        } else if (token == features::Vocabulary::kUnkToken) {
            idx = features::Vocabulary::kUnkIndex;  // files we wrote carry a trained unk row
        } else if (vocab.contains(token)) {
            idx = vocab.index_of(token);
        } else {
            continue;
        }
        std::copy(values.begin(), values.end(), table.vectors.data() + idx * dim);
        filled.insert(idx);
    }

    std::mt19937_64 rng(seed);
    for (std::size_t idx = features::Vocabulary::kUnkIndex; idx < vocab.size(); ++idx) {
        if (filled.count(idx) != 0) continue;
        double* row = table.vectors.data() + idx * dim;
        for (std::size_t k = 0; k < dim; ++k) row[k] = uniform_unit(rng) * 0.5 - 0.25;
    }
    for (std::size_t k = 0; k < dim; ++k) table.vectors[k] = 0.0;
    return table;
}

void save_embeddings(const EmbeddingTable& table, const features::Vocabulary& vocab,
                     const std::filesystem::path& path) {
    if (table.vectors.rows() != vocab.size()) {
        throw ModelError("save_embeddings: table rows do not match vocabulary size");
    }
    std::ofstream out(path);
    if (!out) throw DataError("cannot write embedding file: " + path.string());
    out << vocab.size() << ' ' << table.dimension << '\n';
    out << std::setprecision(std::numeric_limits<double>::max_digits10);
    for (std::size_t i = 0; i < vocab.size(); ++i) {
        out << vocab.token_at(i);
        const double* row = table.vectors.data() + i * table.dimension;
        for (std::size_t k = 0; k < table.dimension; ++k) out << ' ' << row[k];
        out << '\n';
    }
    if (!out) throw DataError("failed writing embedding file: " + path.string());
}

nd::Tensor lookup(const EmbeddingTable& table, const features::EncodedSequence& encoded) {
    const std::size_t d = table.dimension;
    nd::Tensor out = nd::Tensor::zeros({encoded.indices.size(), d});
    for (std::size_t i = 0; i < encoded.indices.size(); ++i) {
        std::size_t idx = encoded.indices[i];
        if (idx >= table.vectors.rows()) {
            throw ModelError("embedding lookup index out of range: " + std::to_string(idx));
        }
        const double* row = table.vectors.data() + idx * d;
        std::copy(row, row + d, out.data() + i * d);
    }
    return out;
}

}  // namespace ppcov::emb
