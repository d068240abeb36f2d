#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace ppcov::eval {

// Rows are gold labels, columns are predictions.
struct ConfusionMatrix {
    std::size_t n = 0;
    std::vector<std::int64_t> counts;

    static ConfusionMatrix zero(std::size_t n) { return {n, std::vector<std::int64_t>(n * n, 0)}; }

    std::int64_t& at(std::size_t gold, std::size_t pred) { return counts[gold * n + pred]; }
    std::int64_t at(std::size_t gold, std::size_t pred) const { return counts[gold * n + pred]; }

    std::int64_t total() const;
    std::int64_t tp(std::size_t c) const;
    std::int64_t fp(std::size_t c) const;
    std::int64_t fn(std::size_t c) const;

    void add(const ConfusionMatrix& other);

    bool operator==(const ConfusionMatrix&) const = default;
};

ConfusionMatrix confusion_matrix(const std::vector<std::size_t>& gold,
                                 const std::vector<std::size_t>& pred, std::size_t n);

struct ClassMetrics {
    double precision = 0.0;
    double recall = 0.0;
    double f = 0.0;
    bool zero_denominator = false;

    bool operator==(const ClassMetrics&) const = default;
};

/// Harmonic mean of precision and recall; 0 when both are 0.
double f_measure(double precision, double recall);

ClassMetrics class_metrics(const ConfusionMatrix& m, std::size_t c);

struct AggregateMetrics {
    ClassMetrics micro;  // from pooled TP/FP/FN
    ClassMetrics macro;  // unweighted mean over classes
};

AggregateMetrics aggregate(const ConfusionMatrix& m);

struct CvReport {
    std::size_t k = 0;
    std::uint64_t seed = 0;
    std::size_t n_classes = 0;
    std::string config_fingerprint;
    std::vector<ConfusionMatrix> fold_confusions;
    ConfusionMatrix pooled;
    std::vector<ClassMetrics> per_class;  // from pooled counts
    ClassMetrics micro;
    ClassMetrics macro;
    ClassMetrics micro_fold_mean;  // mean of per-fold aggregates
    ClassMetrics macro_fold_mean;
    std::vector<double> fold_seconds;
};

/// Fills pooled/per_class/aggregate fields from fold_confusions.
void finalize_cv_report(CvReport& report);

/// Timings are excluded unless requested so reports are reproducible
/// byte for byte across runs with the same seed.
std::string render_cv_report_json(const CvReport& report, bool include_timings = false);
CvReport parse_cv_report_json(const std::string& text);

std::string render_cv_report_text(const CvReport& report,
                                  const std::vector<std::string>& class_names,
                                  const std::vector<std::size_t>& row_order = {},
                                  std::size_t catch_all_class = static_cast<std::size_t>(-1));

}  // namespace ppcov::eval
