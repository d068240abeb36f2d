#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <variant>
#include <vector>

#include "ppcov/features.hpp"
#include "ppcov/tensor.hpp"

namespace ppcov::classical {

enum class Penalty { kNone, kL1, kL2, kElasticNet };

Penalty penalty_from_string(const std::string& name);
std::string penalty_name(Penalty penalty);

struct MnbModel {
    double alpha = 1.0;
    bool tfidf_features = false;  // weights treated as pseudo-counts
    std::vector<double> log_priors;
    nd::Tensor log_likelihoods;  // classes x terms
};

struct LrModel {
    Penalty penalty = Penalty::kL2;
    double c = 1.5;
    double tol = 1e-4;
    double l1_ratio = 0.5;  // elasticnet mix
    nd::Tensor weights;     // classes x features
    std::vector<double> bias;
};

struct SvmModel {
    double c = 1.0;
    nd::Tensor weights;  // classes x features, one-vs-rest
    std::vector<double> bias;
};

MnbModel train_mnb(const std::vector<features::FeatureVector>& rows,
                   const std::vector<std::size_t>& labels, std::size_t n_classes,
                   std::size_t n_features, double alpha = 1.0, bool tfidf_features = false);

LrModel train_lr(const std::vector<features::FeatureVector>& rows,
                 const std::vector<std::size_t>& labels, std::size_t n_classes,
                 std::size_t n_features, Penalty penalty = Penalty::kL2, double c = 1.5,
                 double tol = 1e-4, std::size_t max_iter = 1000,
                 std::vector<double>* loss_history = nullptr);

SvmModel train_svm(const std::vector<features::FeatureVector>& rows,
                   const std::vector<std::size_t>& labels, std::size_t n_classes,
                   std::size_t n_features, double c = 1.0, std::size_t max_iter = 500);

std::vector<double> predict_proba(const MnbModel& model, const features::FeatureVector& row);
std::vector<double> predict_proba(const LrModel& model, const features::FeatureVector& row);
std::vector<double> decision_scores(const SvmModel& model, const features::FeatureVector& row);

std::size_t predict_class(const MnbModel& model, const features::FeatureVector& row);
std::size_t predict_class(const LrModel& model, const features::FeatureVector& row);
std::size_t predict_class(const SvmModel& model, const features::FeatureVector& row);

struct ClassicalModel {
    std::variant<MnbModel, LrModel, SvmModel> model;
    features::TfidfModel tfidf;
    std::size_t n_classes = 0;

    std::string kind() const;
    std::size_t predict(const features::FeatureVector& row) const;
};

void save_classical_model(const ClassicalModel& model, const std::filesystem::path& path);
ClassicalModel load_classical_model(const std::filesystem::path& path);

}  // namespace ppcov::classical
