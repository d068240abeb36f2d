#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "ppcov/classical.hpp"
#include "ppcov/corpus.hpp"
#include "ppcov/coverage.hpp"
#include "ppcov/cv.hpp"
#include "ppcov/embeddings.hpp"
#include "ppcov/errors.hpp"
#include "ppcov/features.hpp"
#include "ppcov/metrics.hpp"
#include "ppcov/neural.hpp"
#include "ppcov/practices.hpp"
#include "ppcov/search.hpp"

namespace {

using namespace ppcov;

struct CorpusOpts {
    std::string path;
    std::string schema = "canonical-json";
};

struct EmbeddingOpts {
    std::string pretrained;  // word2vec text file; empty = train on the corpus
    std::string algo = "cbow";
    std::size_t dim = 300;
    std::size_t window = 5;
    std::size_t epochs = 30;
    std::size_t negative = 5;
};

struct ClassicalOpts {
    std::string penalty = "l2";
    double c_lr = 1.5;
    double tol = 1e-4;
    double alpha = 1.0;
    double c_svm = 1.0;
    bool mnb_tfidf = false;
};

struct NeuralOpts {
    std::size_t units = 100;
    std::size_t blocks = 1;
    double embedding_dropout = 0.0;
    double input_dropout = 0.0;
    double recurrent_dropout = 0.5;
    std::string optimizer = "adam";
    double learning_rate = 0.0;  // 0 = optimizer default
    std::size_t epochs = 100;
    std::size_t batch_size = 32;
    std::size_t patience = 5;
    std::size_t max_len = 0;  // 0 = 95th percentile of the training split
};

corpus::Dataset load_dataset(const CorpusOpts& opts) {
    if (opts.path.empty()) throw UsageError("--corpus is required");
    corpus::LoadStats stats;
    corpus::Dataset dataset =
        corpus::load_corpus(opts.path, corpus::schema_from_string(opts.schema), &stats);
    if (stats.dropped_unannotated > 0 || stats.dropped_empty_text > 0) {
        std::cerr << "note: dropped " << stats.dropped_unannotated << " unannotated and "
                  << stats.dropped_empty_text << " empty segments\n";
    }
    return dataset;
}

std::vector<std::vector<std::string>> tokenize_segments(
    const std::vector<corpus::Segment>& segments) {
    std::vector<std::vector<std::string>> streams;
    streams.reserve(segments.size());
    for (const auto& s : segments) streams.push_back(features::tokenize(s.text));
    return streams;
}

std::vector<std::size_t> gold_labels(const std::vector<corpus::Segment>& segments) {
    std::vector<std::size_t> labels;
    labels.reserve(segments.size());
    for (const auto& s : segments) {
        labels.push_back(static_cast<std::size_t>(practice_index(s.label)));
    }
    return labels;
}

bool is_neural(const std::string& model_type) {
    return model_type == "cnn" || model_type == "lstm" || model_type == "bilstm" ||
           model_type == "cnnlstm";
}

void check_model_type(const std::string& model_type) {
    if (model_type != "mnb" && model_type != "svm" && model_type != "lr" &&
        !is_neural(model_type)) {
        throw UsageError("unknown model type: " + model_type);
    }
}

classical::ClassicalModel train_classical(const std::string& kind,
                                          const std::vector<corpus::Segment>& segments,
                                          const ClassicalOpts& opts) {
    std::vector<std::vector<std::string>> tokens = tokenize_segments(segments);
    std::vector<std::size_t> labels = gold_labels(segments);

    classical::ClassicalModel out;
    out.tfidf = features::fit_tfidf(tokens);
    out.n_classes = kNumPractices;

    std::vector<features::FeatureVector> rows;
    rows.reserve(tokens.size());
    const bool counts = kind == "mnb" && !opts.mnb_tfidf;
    for (const auto& doc : tokens) {
        rows.push_back(counts ? features::count_vector(out.tfidf, doc)
                              : features::transform_tfidf(out.tfidf, doc));
    }

    const std::size_t n_features = out.tfidf.vocab_size();
    if (kind == "mnb") {
        out.model = classical::train_mnb(rows, labels, kNumPractices, n_features, opts.alpha,
                                         opts.mnb_tfidf);
    } else if (kind == "lr") {
        out.model = classical::train_lr(rows, labels, kNumPractices, n_features,
                                        classical::penalty_from_string(opts.penalty), opts.c_lr,
                                        opts.tol);
    } else {
        out.model = classical::train_svm(rows, labels, kNumPractices, n_features, opts.c_svm);
    }
    return out;
}

std::vector<std::size_t> predict_classical(const classical::ClassicalModel& model,
                                           const std::vector<corpus::Segment>& segments) {
    const auto* mnb = std::get_if<classical::MnbModel>(&model.model);
    const bool counts = mnb != nullptr && !mnb->tfidf_features;
    std::vector<std::size_t> preds;
    preds.reserve(segments.size());
    for (const auto& s : segments) {
        std::vector<std::string> tokens = features::tokenize(s.text);
        features::FeatureVector row = counts ? features::count_vector(model.tfidf, tokens)
                                             : features::transform_tfidf(model.tfidf, tokens);
        preds.push_back(model.predict(row));
    }
    return preds;
}

// Vocabulary and embeddings come from the unlabeled corpus text once and
// are shared across folds; only the classifier sees fold splits.
struct NeuralContext {
    features::Vocabulary vocab;
    emb::EmbeddingTable table;
};

NeuralContext prepare_embeddings(const corpus::Dataset& dataset, const EmbeddingOpts& opts,
                                 std::uint64_t seed) {
    std::vector<std::vector<std::string>> tokens = tokenize_segments(dataset.segments);
    NeuralContext ctx;
    ctx.vocab = features::build_vocabulary(tokens, 1);
    if (!opts.pretrained.empty()) {
        ctx.table = emb::load_pretrained(opts.pretrained, ctx.vocab, seed);
        return ctx;
    }
    emb::EmbeddingConfig config;
    config.dimension = opts.dim;
    config.window = opts.window;
    config.epochs = opts.epochs;
    config.negative_samples = opts.negative;
    config.seed = seed;
    config.algorithm = opts.algo == "skipgram" ? emb::EmbeddingAlgorithm::kSkipGram
                                               : emb::EmbeddingAlgorithm::kCbow;
    std::cerr << "training " << opts.algo << " embeddings on the corpus text\n";
    ctx.table = emb::train_embeddings(tokens, ctx.vocab, config);
    return ctx;
}

neural::ModelConfig make_neural_config(const std::string& model_type, const NeuralOpts& opts,
                                       std::uint64_t seed) {
    neural::ModelConfig config;
    config.architecture = neural::architecture_from_string(model_type);
    config.lstm_units = opts.units;
    config.lstm_blocks = opts.blocks;
    config.embedding_dropout = opts.embedding_dropout;
    config.input_dropout = opts.input_dropout;
    config.recurrent_dropout = opts.recurrent_dropout;
    config.optimizer = nd::optimizer_from_string(opts.optimizer);
    config.learning_rate = opts.learning_rate;
    config.epochs = opts.epochs;
    config.batch_size = opts.batch_size;
    config.patience = opts.patience;
    config.seed = seed;
    return config;
}

neural::Model train_neural(const std::string& model_type, const NeuralContext& ctx,
                           const std::vector<corpus::Segment>& segments, const NeuralOpts& opts,
                           std::uint64_t seed) {
    std::vector<std::vector<std::string>> tokens = tokenize_segments(segments);
    std::size_t max_len =
        opts.max_len > 0 ? opts.max_len : features::length_percentile(tokens, 95.0);

    std::vector<features::EncodedSequence> encoded;
    encoded.reserve(tokens.size());
    for (const auto& doc : tokens) {
        encoded.push_back(features::encode_sequence(doc, ctx.vocab, max_len));
    }

    neural::Model model = neural::build_model(make_neural_config(model_type, opts, seed),
                                              ctx.vocab, ctx.table, max_len);
    neural::TrainResult result = neural::train_model(model, encoded, gold_labels(segments));
    std::cerr << "  " << model_type << ": " << result.epoch_losses.size() << " epochs"
              << (result.early_stopped ? " (early stop)" : "") << ", final loss "
              << result.epoch_losses.back() << "\n";
    return model;
}

std::vector<std::size_t> predict_neural(const neural::Model& model,
                                        const std::vector<corpus::Segment>& segments) {
    std::vector<features::EncodedSequence> encoded;
    encoded.reserve(segments.size());
    for (const auto& s : segments) {
        encoded.push_back(features::encode_sequence(features::tokenize(s.text), model.vocab,
                                                    model.max_sequence_length));
    }
    std::vector<std::vector<double>> probs = neural::predict_batch(model, encoded);
    std::vector<std::size_t> preds;
    preds.reserve(probs.size());
    for (const auto& row : probs) {
        std::size_t best = 0;
        for (std::size_t c = 1; c < row.size(); ++c) {
            if (row[c] > row[best]) best = c;
        }
        preds.push_back(best);
    }
    return preds;
}

void write_output(const std::string& path, const std::string& content) {
    if (path.empty() || path == "-") {
        std::cout << content;
        return;
    }
    std::ofstream out(path);
    if (!out) throw DataError("cannot write output file: " + path);
    out << content;
    if (!out) throw DataError("failed writing output file: " + path);
}

std::string classical_fingerprint(const std::string& kind, const ClassicalOpts& opts) {
    std::ostringstream s;
    s << "model=" << kind;
    if (kind == "mnb") s << " alpha=" << opts.alpha << " tfidf=" << (opts.mnb_tfidf ? 1 : 0);
    if (kind == "lr") {
        s << " penalty=" << opts.penalty << " c=" << opts.c_lr << " tol=" << opts.tol;
    }
    if (kind == "svm") s << " c=" << opts.c_svm;
    return s.str();
}

std::string neural_fingerprint(const std::string& kind, const NeuralOpts& opts) {
    std::ostringstream s;
    s << "model=" << kind << " units=" << opts.units << " blocks=" << opts.blocks
      << " optimizer=" << opts.optimizer << " rdrop=" << opts.recurrent_dropout
      << " idrop=" << opts.input_dropout << " edrop=" << opts.embedding_dropout
      << " batch=" << opts.batch_size << " epochs=" << opts.epochs;
    return s.str();
}

void add_corpus_flags(CLI::App* cmd, CorpusOpts& opts) {
    cmd->add_option("--corpus", opts.path, "corpus directory")->envname("PPCOV_CORPUS");
    cmd->add_option("--schema", opts.schema, "canonical-json or opp115-raw")
        ->envname("PPCOV_SCHEMA");
}

void add_embedding_flags(CLI::App* cmd, EmbeddingOpts& opts) {
    cmd->add_option("--embeddings", opts.pretrained, "pretrained word2vec text file")
        ->envname("PPCOV_EMBEDDINGS");
    cmd->add_option("--algo", opts.algo, "cbow or skipgram")->envname("PPCOV_ALGO");
    cmd->add_option("--dim", opts.dim, "embedding dimension")->envname("PPCOV_DIM");
    cmd->add_option("--window", opts.window, "context window")->envname("PPCOV_WINDOW");
    cmd->add_option("--embed-epochs", opts.epochs, "embedding training epochs")
        ->envname("PPCOV_EMBED_EPOCHS");
    cmd->add_option("--negative", opts.negative, "negative samples, 0 = full softmax")
        ->envname("PPCOV_NEGATIVE");
}

void add_classical_flags(CLI::App* cmd, ClassicalOpts& opts) {
    cmd->add_option("--penalty", opts.penalty, "lr penalty: none, l1, l2, elasticnet")
        ->envname("PPCOV_PENALTY");
    cmd->add_option("--c-value", opts.c_lr, "lr inverse regularization strength")
        ->envname("PPCOV_C_VALUE");
    cmd->add_option("--tol", opts.tol, "lr convergence tolerance")->envname("PPCOV_TOL");
    cmd->add_option("--alpha", opts.alpha, "mnb smoothing")->envname("PPCOV_ALPHA");
    cmd->add_flag("--mnb-tfidf", opts.mnb_tfidf, "feed mnb tf-idf weights instead of counts")
        ->envname("PPCOV_MNB_TFIDF");
    cmd->add_option("--svm-c", opts.c_svm, "svm regularization parameter")
        ->envname("PPCOV_SVM_C");
}

void add_neural_flags(CLI::App* cmd, NeuralOpts& opts) {
    cmd->add_option("--units", opts.units, "lstm units per block")->envname("PPCOV_UNITS");
    cmd->add_option("--blocks", opts.blocks, "stacked lstm blocks")->envname("PPCOV_BLOCKS");
    cmd->add_option("--embedding-dropout", opts.embedding_dropout, "embedding dropout rate")
        ->envname("PPCOV_EMBEDDING_DROPOUT");
    cmd->add_option("--input-dropout", opts.input_dropout, "input dropout rate")
        ->envname("PPCOV_INPUT_DROPOUT");
    cmd->add_option("--recurrent-dropout", opts.recurrent_dropout, "recurrent dropout rate")
        ->envname("PPCOV_RECURRENT_DROPOUT");
    cmd->add_option("--optimizer", opts.optimizer,
                    "adam, adam_lr_0.01, nadam, rmsprop, or sgd")
        ->envname("PPCOV_OPTIMIZER");
    cmd->add_option("--learning-rate", opts.learning_rate,
                    "override the optimizer's default learning rate")
        ->envname("PPCOV_LEARNING_RATE");
    cmd->add_option("--epochs", opts.epochs, "max training epochs")->envname("PPCOV_EPOCHS");
    cmd->add_option("--batch-size", opts.batch_size, "minibatch size")
        ->envname("PPCOV_BATCH_SIZE");
    cmd->add_option("--patience", opts.patience, "early stopping patience")
        ->envname("PPCOV_PATIENCE");
    cmd->add_option("--max-len", opts.max_len,
                    "sequence length, 0 = 95th percentile of training lengths")
        ->envname("PPCOV_MAX_LEN");
}

int run_train(const std::string& model_type, const CorpusOpts& corpus_opts,
              const EmbeddingOpts& emb_opts, const ClassicalOpts& classical_opts,
              const NeuralOpts& neural_opts, std::uint64_t seed, const std::string& out_path) {
    check_model_type(model_type);
    if (out_path.empty()) throw UsageError("--out is required");
    corpus::Dataset dataset = load_dataset(corpus_opts);
    if (is_neural(model_type)) {
        NeuralContext ctx = prepare_embeddings(dataset, emb_opts, seed);
        neural::Model model =
            train_neural(model_type, ctx, dataset.segments, neural_opts, seed);
        neural::save_model(model, out_path);
    } else {
        classical::ClassicalModel model =
            train_classical(model_type, dataset.segments, classical_opts);
        classical::save_classical_model(model, out_path);
    }
    std::cerr << "saved " << model_type << " model to " << out_path << "\n";
    return 0;
}

eval::CvReport evaluate_model(const std::string& model_type, const corpus::Dataset& dataset,
                              const EmbeddingOpts& emb_opts,
                              const ClassicalOpts& classical_opts,
                              const NeuralOpts& neural_opts, std::size_t folds,
                              std::uint64_t seed) {
    check_model_type(model_type);
    eval::FoldRunner runner;
    std::string fingerprint;
    std::optional<NeuralContext> ctx;
    if (is_neural(model_type)) {
        ctx = prepare_embeddings(dataset, emb_opts, seed);
        fingerprint = neural_fingerprint(model_type, neural_opts);
        runner = [&, model_type, folds](const std::vector<corpus::Segment>& train,
                                        const std::vector<corpus::Segment>& test,
                                        std::size_t fold) {
            std::cerr << "fold " << (fold + 1) << "/" << folds << "\n";
            neural::Model model =
                train_neural(model_type, *ctx, train, neural_opts, seed + fold);
            return predict_neural(model, test);
        };
    } else {
        fingerprint = classical_fingerprint(model_type, classical_opts);
        runner = [&, model_type](const std::vector<corpus::Segment>& train,
                                 const std::vector<corpus::Segment>& test, std::size_t) {
            classical::ClassicalModel model =
                train_classical(model_type, train, classical_opts);
            return predict_classical(model, test);
        };
    }
    return eval::run_cv(dataset, folds, seed, runner, fingerprint);
}

int run_evaluate(const std::string& model_type, const CorpusOpts& corpus_opts,
                 const EmbeddingOpts& emb_opts, const ClassicalOpts& classical_opts,
                 const NeuralOpts& neural_opts, std::size_t folds, std::uint64_t seed,
                 const std::string& report_path, const std::string& format,
                 bool include_timings) {
    corpus::Dataset dataset = load_dataset(corpus_opts);
    eval::CvReport report = evaluate_model(model_type, dataset, emb_opts, classical_opts,
                                           neural_opts, folds, seed);
    if (format == "text") {
        std::vector<std::string> names;
        for (DataPractice p : all_practices()) names.emplace_back(practice_name(p));
        std::vector<std::size_t> order;
        for (DataPractice p : report_row_order()) {
            order.push_back(static_cast<std::size_t>(practice_index(p)));
        }
        write_output(report_path,
                     eval::render_cv_report_text(
                         report, names, order,
                         static_cast<std::size_t>(practice_index(DataPractice::kOther))));
    } else if (format == "json") {
        write_output(report_path, eval::render_cv_report_json(report, include_timings));
    } else {
        throw UsageError("unknown report format: " + format);
    }
    return 0;
}

eval::SearchSpace load_search_space(const std::string& path) {
    if (path.empty()) throw UsageError("--space is required");
    std::ifstream in(path);
    if (!in) throw DataError("cannot open search space file: " + path);
    nlohmann::ordered_json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw DataError("malformed search space file: " + std::string(e.what()));
    }
    if (!j.is_object() || j.empty()) {
        throw DataError("search space must be a non-empty object of candidate lists");
    }
    eval::SearchSpace space;
    for (const auto& [name, values] : j.items()) {
        if (!values.is_array() || values.empty()) {
            throw DataError("search space parameter '" + name +
                            "' must be a non-empty array");
        }
        std::vector<std::string> candidates;
        for (const auto& v : values) {
            candidates.push_back(v.is_string() ? v.get<std::string>() : v.dump());
        }
        space.parameters.emplace_back(name, std::move(candidates));
    }
    return space;
}

double parse_double(const std::string& name, const std::string& value) {
    try {
        std::size_t used = 0;
        double out = std::stod(value, &used);
        if (used != value.size()) throw std::invalid_argument(value);
        return out;
    } catch (const std::exception&) {
        throw UsageError("parameter '" + name + "' needs a numeric value, got '" + value + "'");
    }
}

std::size_t parse_size(const std::string& name, const std::string& value) {
    double d = parse_double(name, value);
    if (d < 0 || d != static_cast<double>(static_cast<std::size_t>(d))) {
        throw UsageError("parameter '" + name + "' needs a non-negative integer, got '" +
                         value + "'");
    }
    return static_cast<std::size_t>(d);
}

void apply_trial(const std::string& model_type, const eval::TrialConfig& config,
                 ClassicalOpts& classical_opts, NeuralOpts& neural_opts) {
    for (const auto& [name, value] : config) {
        if (name == "penalty") {
            classical_opts.penalty = value;
        } else if (name == "c") {
            classical_opts.c_lr = parse_double(name, value);
            classical_opts.c_svm = classical_opts.c_lr;
        } else if (name == "tol") {
            classical_opts.tol = parse_double(name, value);
        } else if (name == "alpha") {
            classical_opts.alpha = parse_double(name, value);
        } else if (name == "mnb_tfidf") {
            classical_opts.mnb_tfidf = value == "1" || value == "true";
        } else if (name == "optimizer") {
            neural_opts.optimizer = value;
        } else if (name == "learning_rate") {
            neural_opts.learning_rate = parse_double(name, value);
        } else if (name == "units") {
            neural_opts.units = parse_size(name, value);
        } else if (name == "blocks") {
            neural_opts.blocks = parse_size(name, value);
        } else if (name == "embedding_dropout") {
            neural_opts.embedding_dropout = parse_double(name, value);
        } else if (name == "input_dropout") {
            neural_opts.input_dropout = parse_double(name, value);
        } else if (name == "recurrent_dropout") {
            neural_opts.recurrent_dropout = parse_double(name, value);
        } else if (name == "batch_size") {
            neural_opts.batch_size = parse_size(name, value);
        } else if (name == "epochs") {
            neural_opts.epochs = parse_size(name, value);
        } else {
            throw UsageError("unknown search parameter for " + model_type + ": " + name);
        }
    }
}

int run_tune(const std::string& model_type, const CorpusOpts& corpus_opts,
             const EmbeddingOpts& emb_opts, const ClassicalOpts& base_classical,
             const NeuralOpts& base_neural, const std::string& strategy,
             const std::string& space_path, std::size_t budget, std::size_t folds,
             std::uint64_t seed, const std::string& report_path, bool include_timings) {
    check_model_type(model_type);
    eval::SearchSpace space = load_search_space(space_path);
    corpus::Dataset dataset = load_dataset(corpus_opts);

    eval::Objective objective = [&](const eval::TrialConfig& config) {
        ClassicalOpts classical_opts = base_classical;
        NeuralOpts neural_opts = base_neural;
        apply_trial(model_type, config, classical_opts, neural_opts);
        eval::CvReport report = evaluate_model(model_type, dataset, emb_opts, classical_opts,
                                               neural_opts, folds, seed);
        return report.micro.f;
    };

    eval::SearchResult result;
    if (strategy == "grid") {
        result = eval::grid_search(space, objective);
    } else if (strategy == "random") {
        if (budget == 0) throw UsageError("--budget is required for random search");
        result = eval::random_search(space, budget, seed, objective);
    } else {
        throw UsageError("unknown search strategy: " + strategy);
    }

    nlohmann::json j;
    j["format_version"] = 1;
    j["model_type"] = model_type;
    j["strategy"] = strategy;
    j["objective"] = "micro_f";
    j["best"] = {{"config", eval::config_fingerprint(result.best.config)},
                 {"objective", result.best.objective}};
    nlohmann::json trials = nlohmann::json::array();
    for (const auto& t : result.trials) {
        nlohmann::json row;
        row["config"] = eval::config_fingerprint(t.config);
        row["objective"] = t.objective;
        row["seed"] = t.seed;
        if (include_timings) row["seconds"] = t.seconds;
        if (t.failed) row["error"] = t.error;
        trials.push_back(std::move(row));
    }
    j["trials"] = std::move(trials);
    write_output(report_path, j.dump(2) + "\n");
    return 0;
}

int run_embed(const CorpusOpts& corpus_opts, const EmbeddingOpts& emb_opts, std::uint64_t seed,
              const std::string& out_path) {
    if (out_path.empty()) throw UsageError("--out is required");
    if (emb_opts.algo != "cbow" && emb_opts.algo != "skipgram") {
        throw UsageError("unknown embedding algorithm: " + emb_opts.algo);
    }
    corpus::Dataset dataset = load_dataset(corpus_opts);
    NeuralContext ctx = prepare_embeddings(dataset, emb_opts, seed);
    emb::save_embeddings(ctx.table, ctx.vocab, out_path);
    std::cerr << "saved " << ctx.vocab.size() << " vectors to " << out_path << "\n";
    return 0;
}

int run_analyze(const std::string& model_path, const std::string& policy_path,
                const std::string& format, const std::string& out_path) {
    if (model_path.empty()) throw UsageError("--model is required");
    if (policy_path.empty()) throw UsageError("--policy is required");
    std::unique_ptr<coverage::SegmentClassifier> model =
        coverage::load_classifier(model_path);

    std::ifstream in(policy_path);
    if (!in) throw DataError("cannot open policy file: " + policy_path);
    std::stringstream buffer;
    buffer << in.rdbuf();
    std::string text = buffer.str();

    std::string policy_id = std::filesystem::path(policy_path).stem().string();
    std::vector<std::string> segments;
    nlohmann::json j = nlohmann::json::parse(text, nullptr, false);
    if (j.is_object() && j.contains("segments")) {
        policy_id = j.value("policy_id", policy_id);
        for (const auto& s : j.at("segments")) {
            segments.push_back(s.at("text").get<std::string>());
        }
    } else {
        segments = coverage::segment_text(text);
    }

    coverage::CoverageReport report = coverage::analyze_policy(policy_id, segments, *model);
    if (format == "json") {
        write_output(out_path, coverage::render_report_json(report));
    } else if (format == "text") {
        write_output(out_path, coverage::render_report_text(report));
    } else {
        throw UsageError("unknown report format: " + format);
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"privacy-policy data-practice coverage toolkit"};
    app.require_subcommand(1);

    std::string model_type = "lr";
    CorpusOpts corpus_opts;
    EmbeddingOpts emb_opts;
    ClassicalOpts classical_opts;
    NeuralOpts neural_opts;
    std::uint64_t seed = 1;
    std::string out_path;
    std::string report_path;
    std::string format = "json";
    std::size_t folds = 10;
    bool include_timings = false;

    CLI::App* train = app.add_subcommand("train", "train a model on a corpus");
    train->add_option("--model-type", model_type, "mnb, svm, lr, cnn, lstm, bilstm, cnnlstm")
        ->envname("PPCOV_MODEL_TYPE");
    add_corpus_flags(train, corpus_opts);
    add_embedding_flags(train, emb_opts);
    add_classical_flags(train, classical_opts);
    add_neural_flags(train, neural_opts);
    train->add_option("--seed", seed, "random seed")->envname("PPCOV_SEED");
    train->add_option("--out", out_path, "model artifact path")->envname("PPCOV_OUT");

    CLI::App* evaluate = app.add_subcommand("evaluate", "stratified k-fold cross-validation");
    evaluate->add_option("--model-type", model_type, "mnb, svm, lr, cnn, lstm, bilstm, cnnlstm")
        ->envname("PPCOV_MODEL_TYPE");
    add_corpus_flags(evaluate, corpus_opts);
    add_embedding_flags(evaluate, emb_opts);
    add_classical_flags(evaluate, classical_opts);
    add_neural_flags(evaluate, neural_opts);
    evaluate->add_option("--folds", folds, "number of folds")->envname("PPCOV_FOLDS");
    evaluate->add_option("--seed", seed, "random seed")->envname("PPCOV_SEED");
    evaluate->add_option("--report", report_path, "report path, - for stdout")
        ->envname("PPCOV_REPORT");
    evaluate->add_option("--format", format, "json or text")->envname("PPCOV_FORMAT");
    evaluate->add_flag("--include-timings", include_timings, "add fold timings to the report")
        ->envname("PPCOV_INCLUDE_TIMINGS");

    std::string strategy = "grid";
    std::string space_path;
    std::size_t budget = 0;
    CLI::App* tune = app.add_subcommand("tune", "hyperparameter search over a config space");
    tune->add_option("--model-type", model_type, "mnb, svm, lr, cnn, lstm, bilstm, cnnlstm")
        ->envname("PPCOV_MODEL_TYPE");
    add_corpus_flags(tune, corpus_opts);
    add_embedding_flags(tune, emb_opts);
    add_classical_flags(tune, classical_opts);
    add_neural_flags(tune, neural_opts);
    tune->add_option("--strategy", strategy, "grid or random")->envname("PPCOV_STRATEGY");
    tune->add_option("--space", space_path, "json file of candidate lists")
        ->envname("PPCOV_SPACE");
    tune->add_option("--budget", budget, "random search trial count")->envname("PPCOV_BUDGET");
    tune->add_option("--folds", folds, "folds per trial")->envname("PPCOV_FOLDS");
    tune->add_option("--seed", seed, "random seed")->envname("PPCOV_SEED");
    tune->add_option("--report", report_path, "report path, - for stdout")
        ->envname("PPCOV_REPORT");
    tune->add_flag("--include-timings", include_timings, "add trial timings to the report")
        ->envname("PPCOV_INCLUDE_TIMINGS");

    CLI::App* embed = app.add_subcommand("embed", "train word vectors on a corpus");
    add_corpus_flags(embed, corpus_opts);
    add_embedding_flags(embed, emb_opts);
    embed->add_option("--seed", seed, "random seed")->envname("PPCOV_SEED");
    embed->add_option("--out", out_path, "word2vec text output path")->envname("PPCOV_OUT");

    std::string model_path;
    std::string policy_path;
    std::string analyze_format = "text";
    CLI::App* analyze = app.add_subcommand("analyze", "coverage report for one policy");
    analyze->add_option("--model", model_path, "trained model artifact")
        ->envname("PPCOV_MODEL");
    analyze->add_option("--policy", policy_path, "policy text or canonical-json file")
        ->envname("PPCOV_POLICY");
    analyze->add_option("--format", analyze_format, "json or text")->envname("PPCOV_FORMAT");
    analyze->add_option("--out", report_path, "output path, - for stdout")
        ->envname("PPCOV_OUT");

    try {
        app.parse(argc, argv);
        if (train->parsed()) {
            return run_train(model_type, corpus_opts, emb_opts, classical_opts, neural_opts,
                             seed, out_path);
        }
        if (evaluate->parsed()) {
            return run_evaluate(model_type, corpus_opts, emb_opts, classical_opts, neural_opts,
                                folds, seed, report_path, format, include_timings);
        }
        if (tune->parsed()) {
            return run_tune(model_type, corpus_opts, emb_opts, classical_opts, neural_opts,
                            strategy, space_path, budget, folds, seed, report_path,
                            include_timings);
        }
        if (embed->parsed()) return run_embed(corpus_opts, emb_opts, seed, out_path);
        if (analyze->parsed()) {
            return run_analyze(model_path, policy_path, analyze_format, report_path);
        }
        throw ppcov::UsageError("no subcommand given");
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 1;
    } catch (const ppcov::UsageError& e) {
        std::cerr << "usage error: " << e.what() << "\n";
        return 1;
    } catch (const ppcov::DataError& e) {
        std::cerr << "data error: " << e.what() << "\n";
        return 2;
    } catch (const ppcov::ModelError& e) {
        std::cerr << "model error: " << e.what() << "\n";
        return 3;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 3;
    }
}
