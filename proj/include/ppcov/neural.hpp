#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <random>
#include <string>
#include <vector>

#include "ppcov/embeddings.hpp"
#include "ppcov/features.hpp"
#include "ppcov/optim.hpp"
#include "ppcov/practices.hpp"
#include "ppcov/tape.hpp"
#include "ppcov/tensor.hpp"

namespace ppcov::neural {

enum class Architecture { kCnn, kLstm, kBiLstm, kCnnLstm };

Architecture architecture_from_string(const std::string& name);
std::string architecture_name(Architecture architecture);

// --- Reference cells (row-vector convention: states are batch x units) ---

struct RnnCellParams {
    nd::Tensor w_xh;  // in x units
    nd::Tensor w_hh;  // units x units
    nd::Tensor b_h;   // units
    nd::Tensor w_hy;  // units x out
    nd::Tensor b_y;   // out
};

struct RnnStepResult {
    nd::Tensor h;
    nd::Tensor y;
};

RnnStepResult rnn_step(const RnnCellParams& params, const nd::Tensor& x_t,
                       const nd::Tensor& h_prev);

struct LstmCellParams {
    nd::Tensor w_xi, w_hi, w_ci, b_i;
    nd::Tensor w_xf, w_hf, w_cf, b_f;
    nd::Tensor w_xc, w_hc, b_c;
    nd::Tensor w_xo, w_ho, w_co, b_o;
};

struct LstmStepResult {
    nd::Tensor h;
    nd::Tensor c;
};

/// Peephole step: the input and forget gates read the previous cell
/// state, the output gate reads the updated one.
LstmStepResult lstm_step(const LstmCellParams& params, const nd::Tensor& x_t,
                         const nd::Tensor& h_prev, const nd::Tensor& c_prev);

// --- Convolution ---

struct CnnConfig {
    std::vector<std::size_t> filter_widths = {3, 4, 5};
    std::size_t filters_per_width = 100;
    double dropout_rate = 0.5;
};

struct ConvMaxpool {
    nd::Tensor feature_map;           // windows x filters, after ReLU
    std::vector<double> pooled;       // per filter
    std::vector<std::size_t> argmax;  // winning window start per filter
};

/// filters is (width * dim) x n_filters over flattened windows.
ConvMaxpool conv_maxpool(const nd::Tensor& sentence, const nd::Tensor& filters,
                         const nd::Tensor& bias, std::size_t width);

// --- Models ---

struct ModelConfig {
    Architecture architecture = Architecture::kLstm;
    double embedding_dropout = 0.0;
    double input_dropout = 0.0;
    double recurrent_dropout = 0.5;
    std::size_t lstm_units = 100;
    std::size_t lstm_blocks = 1;
    nd::OptimizerKind optimizer = nd::OptimizerKind::kAdam;
    double learning_rate = 0.0;  // 0 picks the optimizer default
    std::size_t epochs = 100;
    std::size_t batch_size = 32;
    std::size_t patience = 5;
    double min_improvement = 1e-3;
    std::uint64_t seed = 1;
    CnnConfig cnn;
    bool peepholes = true;
    bool freeze_body = false;  // train the softmax head only
};

struct Model {
    Architecture architecture = Architecture::kLstm;
    ModelConfig config;
    std::size_t n_classes = kNumPractices;
    std::size_t max_sequence_length = 0;
    features::Vocabulary vocab;
    emb::EmbeddingTable embeddings;  // frozen during training
    nd::ParamMap params;
};

Model build_model(const ModelConfig& config, features::Vocabulary vocab,
                  emb::EmbeddingTable embeddings, std::size_t max_sequence_length,
                  std::size_t n_classes = kNumPractices);

/// Trainable parameter count (embeddings excluded).
std::size_t parameter_count(const Model& model);

// Forward graph over one batch; exposed so tests can drive gradients
// through exactly the network the trainer uses.
struct ForwardGraph {
    nd::Var logits;
    std::map<std::string, nd::Var> params;
    std::vector<std::size_t> pool_widths;  // cnn: width per pool var
    std::vector<nd::Var> pool_vars;        // cnn: maxpool outputs
    nd::Var fwd_final;                     // bilstm: summed directions
    nd::Var bwd_final;
    std::size_t batch = 0;
    std::size_t n_windows = 0;  // cnn/cnnlstm: windows per sequence
};

ForwardGraph build_forward(nd::Tape& tape, const Model& model,
                           const std::vector<features::EncodedSequence>& batch, bool training,
                           std::mt19937_64* dropout_rng);

struct TrainResult {
    std::vector<double> epoch_losses;
    bool early_stopped = false;
};

TrainResult train_model(Model& model, const std::vector<features::EncodedSequence>& sequences,
                        const std::vector<std::size_t>& labels);

std::vector<double> predict(const Model& model, const features::EncodedSequence& encoded);
std::vector<std::vector<double>> predict_batch(
    const Model& model, const std::vector<features::EncodedSequence>& sequences);

struct BiLstmFinals {
    nd::Tensor forward_final;
    nd::Tensor backward_final;
};

BiLstmFinals bilstm_final_outputs(const Model& model, const features::EncodedSequence& encoded);

struct UnigramCredit {
    std::string token;
    double credit = 0.0;
};

/// Traces pooled CNN features back through the head weights to the
/// max-pool winning windows and credits their tokens.
std::vector<UnigramCredit> trace_unigram_importance(
    const Model& model, const std::vector<features::EncodedSequence>& sequences, std::size_t cls,
    std::size_t top_n);

void save_model(const Model& model, const std::filesystem::path& path);
Model load_model(const std::filesystem::path& path);

}  // namespace ppcov::neural
