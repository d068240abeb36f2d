#include "ppcov/classical.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>

#include "json.hpp"
#include "ppcov/errors.hpp"

using nlohmann::json;

namespace ppcov::classical {

namespace {

void check_labels(const std::vector<features::FeatureVector>& rows,
                  const std::vector<std::size_t>& labels, std::size_t n_classes) {
    if (rows.empty()) throw DataError("empty training set");
    if (rows.size() != labels.size()) throw DataError("rows and labels differ in length");
    for (std::size_t y : labels) {
        if (y >= n_classes) throw DataError("label out of range: " + std::to_string(y));
    }
}

void check_dimension(const features::FeatureVector& row, std::size_t n_features) {
    for (const auto& [idx, w] : row.weights) {
        if (idx >= n_features) {
            throw ModelError("feature index " + std::to_string(idx) +
                             " outside model dimension " + std::to_string(n_features));
        }
    }
}

std::vector<double> softmax_vec(std::vector<double> scores) {
    double mx = *std::max_element(scores.begin(), scores.end());
    double sum = 0.0;
    for (double& s : scores) {
        s = std::exp(s - mx);
        sum += s;
    }
    for (double& s : scores) s /= sum;
    return scores;
}

std::size_t argmax_vec(const std::vector<double>& scores) {
    return static_cast<std::size_t>(
        std::max_element(scores.begin(), scores.end()) - scores.begin());
}

struct LrObjective {
    const std::vector<features::FeatureVector>& rows;
    const std::vector<std::size_t>& labels;
    std::size_t n_classes;
    std::size_t n_features;
    Penalty penalty;
    double c;
    double l1_ratio;

    double reg_term(const nd::Tensor& w) const {
        double l1 = 0.0;
        double l2 = 0.0;
        for (std::size_t i = 0; i < w.size(); ++i) {
            l1 += std::abs(w[i]);
            l2 += w[i] * w[i];
        }
        switch (penalty) {
            case Penalty::kNone: return 0.0;
            case Penalty::kL1: return l1;
            case Penalty::kL2: return 0.5 * l2;
            case Penalty::kElasticNet: return l1_ratio * l1 + (1.0 - l1_ratio) * 0.5 * l2;
        }
        return 0.0;
    }

    double reg_grad(double wi) const {
        double sign = wi > 0.0 ? 1.0 : (wi < 0.0 ? -1.0 : 0.0);
        switch (penalty) {
            case Penalty::kNone: return 0.0;
            case Penalty::kL1: return sign;
            case Penalty::kL2: return wi;
            case Penalty::kElasticNet: return l1_ratio * sign + (1.0 - l1_ratio) * wi;
        }
        return 0.0;
    }

    // Mean cross-entropy plus reg/(C*n); gradients accumulated when given.
    double evaluate(const nd::Tensor& w, const std::vector<double>& b, nd::Tensor* gw,
                    std::vector<double>* gb) const {
        const double n = static_cast<double>(rows.size());
        double data_loss = 0.0;
        std::vector<double> scores(n_classes);
        for (std::size_t i = 0; i < rows.size(); ++i) {
            for (std::size_t cl = 0; cl < n_classes; ++cl) {
                double acc = b[cl];
                const double* wr = w.data() + cl * n_features;
                for (const auto& [idx, x] : rows[i].weights) acc += wr[idx] * x;
                scores[cl] = acc;
            }
            std::vector<double> p = softmax_vec(scores);
            data_loss += -std::log(std::max(p[labels[i]], 1e-12));
            if (gw != nullptr) {
                for (std::size_t cl = 0; cl < n_classes; ++cl) {
                    double delta = (p[cl] - (cl == labels[i] ? 1.0 : 0.0)) / n;
                    (*gb)[cl] += delta;
                    double* gr = gw->data() + cl * n_features;
                    for (const auto& [idx, x] : rows[i].weights) gr[idx] += delta * x;
                }
            }
        }
        data_loss /= n;

        const double reg_scale = 1.0 / (c * n);
        if (gw != nullptr) {
            for (std::size_t i = 0; i < w.size(); ++i) {
                (*gw)[i] += reg_scale * reg_grad(w[i]);
            }
        }
        return data_loss + reg_scale * reg_term(w);
    }
};

}  // namespace

Penalty penalty_from_string(const std::string& name) {
    if (name == "none") return Penalty::kNone;
    if (name == "l1") return Penalty::kL1;
    if (name == "l2") return Penalty::kL2;
    if (name == "elasticnet") return Penalty::kElasticNet;
    throw UsageError("unknown penalty: " + name);
}

std::string penalty_name(Penalty penalty) {
    switch (penalty) {
        case Penalty::kNone: return "none";
        case Penalty::kL1: return "l1";
        case Penalty::kL2: return "l2";
        case Penalty::kElasticNet: return "elasticnet";
    }
    throw ModelError("bad penalty");
}

MnbModel train_mnb(const std::vector<features::FeatureVector>& rows,
                   const std::vector<std::size_t>& labels, std::size_t n_classes,
                   std::size_t n_features, double alpha, bool tfidf_features) {
    check_labels(rows, labels, n_classes);
    if (alpha <= 0.0) throw UsageError("mnb smoothing alpha must be positive");

    MnbModel model;
    model.alpha = alpha;
    model.tfidf_features = tfidf_features;
    model.log_priors.assign(n_classes, -std::numeric_limits<double>::infinity());
    model.log_likelihoods = nd::Tensor::zeros({n_classes, n_features});

    std::vector<double> class_count(n_classes, 0.0);
    nd::Tensor term_count = nd::Tensor::zeros({n_classes, n_features});
    for (std::size_t i = 0; i < rows.size(); ++i) {
        check_dimension(rows[i], n_features);
        class_count[labels[i]] += 1.0;
        double* cr = term_count.data() + labels[i] * n_features;
        for (const auto& [idx, w] : rows[i].weights) cr[idx] += w;
    }

    const double n = static_cast<double>(rows.size());
    for (std::size_t cl = 0; cl < n_classes; ++cl) {
        if (class_count[cl] > 0.0) model.log_priors[cl] = std::log(class_count[cl] / n);
        const double* cr = term_count.data() + cl * n_features;
        double total = std::accumulate(cr, cr + n_features, 0.0);
        double denom = total + alpha * static_cast<double>(n_features);
        double* lr = model.log_likelihoods.data() + cl * n_features;
        for (std::size_t t = 0; t < n_features; ++t) {
            lr[t] = std::log((cr[t] + alpha) / denom);
        }
    }
    return model;
}

LrModel train_lr(const std::vector<features::FeatureVector>& rows,
                 const std::vector<std::size_t>& labels, std::size_t n_classes,
                 std::size_t n_features, Penalty penalty, double c, double tol,
                 std::size_t max_iter, std::vector<double>* loss_history) {
    check_labels(rows, labels, n_classes);
    if (c <= 0.0) throw UsageError("lr C must be positive");
    if (tol <= 0.0) throw UsageError("lr tol must be positive");
    for (const auto& row : rows) check_dimension(row, n_features);

    LrModel model;
    model.penalty = penalty;
    model.c = c;
    model.tol = tol;
    model.weights = nd::Tensor::zeros({n_classes, n_features});
    model.bias.assign(n_classes, 0.0);

    LrObjective obj{rows, labels, n_classes, n_features, penalty, c, model.l1_ratio};

    double eta = 1.0;
    nd::Tensor gw = nd::Tensor::zeros({n_classes, n_features});
    std::vector<double> gb(n_classes, 0.0);
    double loss = obj.evaluate(model.weights, model.bias, &gw, &gb);
    if (!std::isfinite(loss)) throw ModelError("lr training diverged at initialization");
    if (loss_history != nullptr) loss_history->push_back(loss);

    for (std::size_t iter = 0; iter < max_iter; ++iter) {
        double grad_sq = 0.0;
        for (std::size_t i = 0; i < gw.size(); ++i) grad_sq += gw[i] * gw[i];
        for (double g : gb) grad_sq += g * g;
        if (grad_sq == 0.0) break;

        nd::Tensor next_w = model.weights;
        std::vector<double> next_b = model.bias;
        double next_loss = loss;
        bool accepted = false;
        for (int halving = 0; halving < 60; ++halving) {
            for (std::size_t i = 0; i < gw.size(); ++i) next_w[i] = model.weights[i] - eta * gw[i];
            for (std::size_t cl = 0; cl < n_classes; ++cl) {
                next_b[cl] = model.bias[cl] - eta * gb[cl];
            }
            next_loss = obj.evaluate(next_w, next_b, nullptr, nullptr);
            if (std::isfinite(next_loss) && next_loss <= loss - 0.5 * eta * grad_sq) {
                accepted = true;
                break;
            }
            eta *= 0.5;
        }
        if (!accepted) break;

        model.weights = std::move(next_w);
        model.bias = std::move(next_b);
        double improvement = loss - next_loss;
        loss = next_loss;
        if (!std::isfinite(loss)) throw ModelError("lr training diverged");
        eta = std::min(eta * 1.5, 4.0);

        gw.fill(0.0);
        std::fill(gb.begin(), gb.end(), 0.0);
        loss = obj.evaluate(model.weights, model.bias, &gw, &gb);
        if (loss_history != nullptr) loss_history->push_back(loss);
        if (improvement < tol) break;
    }
    return model;
}

SvmModel train_svm(const std::vector<features::FeatureVector>& rows,
                   const std::vector<std::size_t>& labels, std::size_t n_classes,
                   std::size_t n_features, double c, std::size_t max_iter) {
    check_labels(rows, labels, n_classes);
    if (c <= 0.0) throw UsageError("svm C must be positive");
    for (const auto& row : rows) check_dimension(row, n_features);
    std::vector<std::size_t> class_count(n_classes, 0);
    for (std::size_t y : labels) class_count[y] += 1;

    SvmModel model;
    model.c = c;
    model.weights = nd::Tensor::zeros({n_classes, n_features});
    model.bias.assign(n_classes, 0.0);

    const double n = static_cast<double>(rows.size());
    const double lambda = 1.0 / (c * n);

    for (std::size_t cl = 0; cl < n_classes; ++cl) {
        if (class_count[cl] == 0) throw DataError("svm class " + std::to_string(cl) + " is empty");

        std::vector<double> w(n_features, 0.0);
        double b = 0.0;
        std::vector<double> best_w = w;
        double best_b = b;
        double best_obj = std::numeric_limits<double>::infinity();

        std::vector<double> gw(n_features);
        for (std::size_t t = 0; t < max_iter; ++t) {
            for (std::size_t i = 0; i < n_features; ++i) gw[i] = lambda * w[i];
            double gb = 0.0;
            double hinge_sum = 0.0;
            for (std::size_t i = 0; i < rows.size(); ++i) {
                double y = labels[i] == cl ? 1.0 : -1.0;
                double score = b;
                for (const auto& [idx, x] : rows[i].weights) score += w[idx] * x;
                double margin = y * score;
                if (margin < 1.0) {
                    hinge_sum += 1.0 - margin;
                    for (const auto& [idx, x] : rows[i].weights) gw[idx] -= y * x / n;
                    gb -= y / n;
                }
            }

            double wsq = 0.0;
            for (double wi : w) wsq += wi * wi;
            double objective = 0.5 * lambda * wsq + hinge_sum / n;
            if (objective < best_obj) {
                best_obj = objective;
                best_w = w;
                best_b = b;
            }

            double eta = 1.0 / std::sqrt(static_cast<double>(t) + 1.0);
            for (std::size_t i = 0; i < n_features; ++i) w[i] -= eta * gw[i];
            b -= eta * gb;
        }

        std::copy(best_w.begin(), best_w.end(), model.weights.data() + cl * n_features);
        model.bias[cl] = best_b;
    }
    return model;
}

std::vector<double> predict_proba(const MnbModel& model, const features::FeatureVector& row) {
    const std::size_t n_classes = model.log_likelihoods.rows();
    const std::size_t n_features = model.log_likelihoods.cols();
    check_dimension(row, n_features);
    std::vector<double> scores(n_classes);
    for (std::size_t cl = 0; cl < n_classes; ++cl) {
        double acc = model.log_priors[cl];
        const double* lr = model.log_likelihoods.data() + cl * n_features;
        for (const auto& [idx, w] : row.weights) acc += w * lr[idx];
        scores[cl] = acc;
    }
    return softmax_vec(std::move(scores));
}

std::vector<double> predict_proba(const LrModel& model, const features::FeatureVector& row) {
    const std::size_t n_classes = model.weights.rows();
    const std::size_t n_features = model.weights.cols();
    check_dimension(row, n_features);
    std::vector<double> scores(n_classes);
    for (std::size_t cl = 0; cl < n_classes; ++cl) {
        double acc = model.bias[cl];
        const double* wr = model.weights.data() + cl * n_features;
        for (const auto& [idx, x] : row.weights) acc += wr[idx] * x;
        scores[cl] = acc;
    }
    return softmax_vec(std::move(scores));
}

std::vector<double> decision_scores(const SvmModel& model, const features::FeatureVector& row) {
    const std::size_t n_classes = model.weights.rows();
    const std::size_t n_features = model.weights.cols();
    check_dimension(row, n_features);
    std::vector<double> scores(n_classes);
    for (std::size_t cl = 0; cl < n_classes; ++cl) {
        double acc = model.bias[cl];
        const double* wr = model.weights.data() + cl * n_features;
        for (const auto& [idx, x] : row.weights) acc += wr[idx] * x;
        scores[cl] = acc;
    }
    return scores;
}

std::size_t predict_class(const MnbModel& model, const features::FeatureVector& row) {
    return argmax_vec(predict_proba(model, row));
}

std::size_t predict_class(const LrModel& model, const features::FeatureVector& row) {
    return argmax_vec(predict_proba(model, row));
}

std::size_t predict_class(const SvmModel& model, const features::FeatureVector& row) {
    return argmax_vec(decision_scores(model, row));
}

std::string ClassicalModel::kind() const {
    if (std::holds_alternative<MnbModel>(model)) return "mnb";
    if (std::holds_alternative<LrModel>(model)) return "lr";
    return "svm";
}

std::size_t ClassicalModel::predict(const features::FeatureVector& row) const {
    return std::visit([&](const auto& m) { return predict_class(m, row); }, model);
}

namespace {

json tensor_to_json(const nd::Tensor& t) {
    json j;
    j["shape"] = t.shape();
    j["data"] = t.vec();
    return j;
}

nd::Tensor tensor_from_json(const json& j) {
    std::vector<std::size_t> shape = j.at("shape").get<std::vector<std::size_t>>();
    std::vector<double> data = j.at("data").get<std::vector<double>>();
    return nd::Tensor(std::move(shape), std::move(data));
}

json tfidf_to_json(const features::TfidfModel& m) {
    json j;
    j["n_docs"] = m.n_docs;
    j["terms"] = m.terms;
    j["doc_freq"] = m.doc_freq;
    j["idf"] = m.idf;
    return j;
}

features::TfidfModel tfidf_from_json(const json& j) {
    features::TfidfModel m;
    m.n_docs = j.at("n_docs").get<std::size_t>();
    m.terms = j.at("terms").get<std::vector<std::string>>();
    m.doc_freq = j.at("doc_freq").get<std::vector<std::size_t>>();
    m.idf = j.at("idf").get<std::vector<double>>();
    for (std::size_t i = 0; i < m.terms.size(); ++i) m.term_index[m.terms[i]] = i;
    return m;
}

constexpr int kArtifactVersion = 1;

}  // namespace

void save_classical_model(const ClassicalModel& model, const std::filesystem::path& path) {
    json j;
    j["format_version"] = kArtifactVersion;
    j["kind"] = model.kind();
    j["n_classes"] = model.n_classes;
    j["tfidf"] = tfidf_to_json(model.tfidf);

    json body;
    if (const auto* mnb = std::get_if<MnbModel>(&model.model)) {
        body["alpha"] = mnb->alpha;
        body["tfidf_features"] = mnb->tfidf_features;
        json priors = json::array();
        for (double lp : mnb->log_priors) {
            if (std::isinf(lp)) {
                priors.push_back("-inf");
            } else {
                priors.push_back(lp);
            }
        }
        body["log_priors"] = priors;
        body["log_likelihoods"] = tensor_to_json(mnb->log_likelihoods);
    } else if (const auto* lr = std::get_if<LrModel>(&model.model)) {
        body["penalty"] = penalty_name(lr->penalty);
        body["C"] = lr->c;
        body["tol"] = lr->tol;
        body["l1_ratio"] = lr->l1_ratio;
        body["weights"] = tensor_to_json(lr->weights);
        body["bias"] = lr->bias;
    } else {
        const auto& svm = std::get<SvmModel>(model.model);
        body["C"] = svm.c;
        body["weights"] = tensor_to_json(svm.weights);
        body["bias"] = svm.bias;
    }
    j["model"] = body;

    std::ofstream out(path);
    if (!out) throw DataError("cannot write model file: " + path.string());
    out << j.dump(2) << '\n';
    if (!out) throw DataError("failed writing model file: " + path.string());
}

ClassicalModel load_classical_model(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open model file: " + path.string());
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        throw DataError("malformed model file " + path.string() + ": " + e.what());
    }

    if (j.value("format_version", -1) != kArtifactVersion) {
        throw DataError("unsupported model format version in " + path.string());
    }

    ClassicalModel model;
    model.n_classes = j.at("n_classes").get<std::size_t>();
    model.tfidf = tfidf_from_json(j.at("tfidf"));
    const json& body = j.at("model");
    std::string kind = j.at("kind").get<std::string>();
    if (kind == "mnb") {
        MnbModel mnb;
        mnb.alpha = body.at("alpha").get<double>();
        mnb.tfidf_features = body.at("tfidf_features").get<bool>();
        for (const auto& lp : body.at("log_priors")) {
            if (lp.is_string()) {
                mnb.log_priors.push_back(-std::numeric_limits<double>::infinity());
            } else {
                mnb.log_priors.push_back(lp.get<double>());
            }
        }
        mnb.log_likelihoods = tensor_from_json(body.at("log_likelihoods"));
        model.model = std::move(mnb);
    } else if (kind == "lr") {
        LrModel lr;
        lr.penalty = penalty_from_string(body.at("penalty").get<std::string>());
        lr.c = body.at("C").get<double>();
        lr.tol = body.at("tol").get<double>();
        lr.l1_ratio = body.at("l1_ratio").get<double>();
        lr.weights = tensor_from_json(body.at("weights"));
        lr.bias = body.at("bias").get<std::vector<double>>();
        model.model = std::move(lr);
    } else if (kind == "svm") {
        SvmModel svm;
        svm.c = body.at("C").get<double>();
        svm.weights = tensor_from_json(body.at("weights"));
        svm.bias = body.at("bias").get<std::vector<double>>();
        model.model = std::move(svm);
    } else {
        throw DataError("unknown model kind: " + kind);
    }
    return model;
}

}  // namespace ppcov::classical
