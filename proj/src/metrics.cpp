#include "ppcov/metrics.hpp"

#include <iomanip>
#include <numeric>
#include <sstream>

#include "json.hpp"
#include "ppcov/errors.hpp"

using nlohmann::json;

namespace ppcov::eval {

std::int64_t ConfusionMatrix::total() const {
    return std::accumulate(counts.begin(), counts.end(), std::int64_t{0});
}

std::int64_t ConfusionMatrix::tp(std::size_t c) const { return at(c, c); }

std::int64_t ConfusionMatrix::fp(std::size_t c) const {
    std::int64_t sum = 0;
    for (std::size_t g = 0; g < n; ++g) {
        if (g != c) sum += at(g, c);
    }
    return sum;
}

std::int64_t ConfusionMatrix::fn(std::size_t c) const {
    std::int64_t sum = 0;
    for (std::size_t p = 0; p < n; ++p) {
        if (p != c) sum += at(c, p);
    }
    return sum;
}

void ConfusionMatrix::add(const ConfusionMatrix& other) {
    if (other.n != n) throw ModelError("confusion matrix size mismatch");
    for (std::size_t i = 0; i < counts.size(); ++i) counts[i] += other.counts[i];
}

ConfusionMatrix confusion_matrix(const std::vector<std::size_t>& gold,
                                 const std::vector<std::size_t>& pred, std::size_t n) {
    if (gold.size() != pred.size()) {
        throw ModelError("confusion_matrix: gold and pred lengths differ");
    }
    ConfusionMatrix m = ConfusionMatrix::zero(n);
    for (std::size_t i = 0; i < gold.size(); ++i) {
        if (gold[i] >= n || pred[i] >= n) {
            throw ModelError("confusion_matrix: label out of range at position " +
                             std::to_string(i));
        }
        m.at(gold[i], pred[i]) += 1;
    }
    return m;
}

double f_measure(double precision, double recall) {
    if (precision + recall == 0.0) return 0.0;
    // The harmonic mean of equal values is that value; computing it via
    // 2pr/(p+r) can drift an ulp and break the exact micro identity.
    if (precision == recall) return precision;
    return 2.0 * precision * recall / (precision + recall);
}

ClassMetrics class_metrics(const ConfusionMatrix& m, std::size_t c) {
    const double tp = static_cast<double>(m.tp(c));
    const double fp = static_cast<double>(m.fp(c));
    const double fn = static_cast<double>(m.fn(c));
    ClassMetrics out;
    if (tp + fp > 0.0) {
        out.precision = tp / (tp + fp);
    } else {
        out.zero_denominator = true;
    }
    if (tp + fn > 0.0) {
        out.recall = tp / (tp + fn);
    } else {
        out.zero_denominator = true;
    }
    out.f = f_measure(out.precision, out.recall);
    return out;
}

AggregateMetrics aggregate(const ConfusionMatrix& m) {
    AggregateMetrics out;
    double tp = 0.0;
    double fp = 0.0;
    double fn = 0.0;
    double p_sum = 0.0;
    double r_sum = 0.0;
    double f_sum = 0.0;
    for (std::size_t c = 0; c < m.n; ++c) {
        tp += static_cast<double>(m.tp(c));
        fp += static_cast<double>(m.fp(c));
        fn += static_cast<double>(m.fn(c));
        ClassMetrics cm = class_metrics(m, c);
        p_sum += cm.precision;
        r_sum += cm.recall;
        f_sum += cm.f;
        out.macro.zero_denominator = out.macro.zero_denominator || cm.zero_denominator;
    }
    if (tp + fp > 0.0) {
        out.micro.precision = tp / (tp + fp);
    } else {
        out.micro.zero_denominator = true;
    }
    if (tp + fn > 0.0) {
        out.micro.recall = tp / (tp + fn);
    } else {
        out.micro.zero_denominator = true;
    }
    out.micro.f = f_measure(out.micro.precision, out.micro.recall);
    if (m.n > 0) {
        out.macro.precision = p_sum / static_cast<double>(m.n);
        out.macro.recall = r_sum / static_cast<double>(m.n);
        out.macro.f = f_sum / static_cast<double>(m.n);
    }
    return out;
}

void finalize_cv_report(CvReport& report) {
    if (report.fold_confusions.empty()) throw ModelError("cv report has no folds");
    report.k = report.fold_confusions.size();
    report.n_classes = report.fold_confusions.front().n;
    report.pooled = ConfusionMatrix::zero(report.n_classes);
    for (const auto& fold : report.fold_confusions) report.pooled.add(fold);

    report.per_class.clear();
    for (std::size_t c = 0; c < report.n_classes; ++c) {
        report.per_class.push_back(class_metrics(report.pooled, c));
    }
    AggregateMetrics pooled = aggregate(report.pooled);
    report.micro = pooled.micro;
    report.macro = pooled.macro;

    ClassMetrics micro_mean;
    ClassMetrics macro_mean;
    for (const auto& fold : report.fold_confusions) {
        AggregateMetrics agg = aggregate(fold);
        micro_mean.precision += agg.micro.precision;
        micro_mean.recall += agg.micro.recall;
        micro_mean.f += agg.micro.f;
        macro_mean.precision += agg.macro.precision;
        macro_mean.recall += agg.macro.recall;
        macro_mean.f += agg.macro.f;
    }
    const double k = static_cast<double>(report.k);
    micro_mean.precision /= k;
    micro_mean.recall /= k;
    micro_mean.f /= k;
    macro_mean.precision /= k;
    macro_mean.recall /= k;
    macro_mean.f /= k;
    report.micro_fold_mean = micro_mean;
    report.macro_fold_mean = macro_mean;
}

namespace {

json metrics_to_json(const ClassMetrics& m) {
    json j;
    j["precision"] = m.precision;
    j["recall"] = m.recall;
    j["f"] = m.f;
    j["zero_denominator"] = m.zero_denominator;
    return j;
}

ClassMetrics metrics_from_json(const json& j) {
    ClassMetrics m;
    m.precision = j.at("precision").get<double>();
    m.recall = j.at("recall").get<double>();
    m.f = j.at("f").get<double>();
    m.zero_denominator = j.at("zero_denominator").get<bool>();
    return m;
}

json confusion_to_json(const ConfusionMatrix& m) {
    json rows = json::array();
    for (std::size_t g = 0; g < m.n; ++g) {
        json row = json::array();
        for (std::size_t p = 0; p < m.n; ++p) row.push_back(m.at(g, p));
        rows.push_back(std::move(row));
    }
    return rows;
}

ConfusionMatrix confusion_from_json(const json& j) {
    ConfusionMatrix m = ConfusionMatrix::zero(j.size());
    for (std::size_t g = 0; g < m.n; ++g) {
        const json& row = j.at(g);
        if (row.size() != m.n) throw DataError("confusion matrix row length mismatch");
        for (std::size_t p = 0; p < m.n; ++p) m.at(g, p) = row.at(p).get<std::int64_t>();
    }
    return m;
}

constexpr int kReportVersion = 1;

}  // namespace

std::string render_cv_report_json(const CvReport& report, bool include_timings) {
    json j;
    j["format_version"] = kReportVersion;
    j["k"] = report.k;
    j["seed"] = report.seed;
    j["n_classes"] = report.n_classes;
    j["config"] = report.config_fingerprint;
    json folds = json::array();
    for (const auto& fold : report.fold_confusions) folds.push_back(confusion_to_json(fold));
    j["fold_confusions"] = std::move(folds);
    j["pooled_confusion"] = confusion_to_json(report.pooled);
    json per_class = json::array();
    for (const auto& m : report.per_class) per_class.push_back(metrics_to_json(m));
    j["per_class"] = std::move(per_class);
    j["micro"] = metrics_to_json(report.micro);
    j["macro"] = metrics_to_json(report.macro);
    j["micro_fold_mean"] = metrics_to_json(report.micro_fold_mean);
    j["macro_fold_mean"] = metrics_to_json(report.macro_fold_mean);
    if (include_timings) j["fold_seconds"] = report.fold_seconds;
    return j.dump(2) + "\n";
}

CvReport parse_cv_report_json(const std::string& text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::exception& e) {
        throw DataError(std::string("malformed cv report: ") + e.what());
    }
    if (j.value("format_version", -1) != kReportVersion) {
        throw DataError("unsupported cv report version");
    }
    CvReport report;
    report.k = j.at("k").get<std::size_t>();
    report.seed = j.at("seed").get<std::uint64_t>();
    report.n_classes = j.at("n_classes").get<std::size_t>();
    report.config_fingerprint = j.at("config").get<std::string>();
    for (const auto& fold : j.at("fold_confusions")) {
        report.fold_confusions.push_back(confusion_from_json(fold));
    }
    report.pooled = confusion_from_json(j.at("pooled_confusion"));
    for (const auto& m : j.at("per_class")) report.per_class.push_back(metrics_from_json(m));
    report.micro = metrics_from_json(j.at("micro"));
    report.macro = metrics_from_json(j.at("macro"));
    report.micro_fold_mean = metrics_from_json(j.at("micro_fold_mean"));
    report.macro_fold_mean = metrics_from_json(j.at("macro_fold_mean"));
    if (j.contains("fold_seconds")) {
        report.fold_seconds = j.at("fold_seconds").get<std::vector<double>>();
    }
    return report;
}

std::string render_cv_report_text(const CvReport& report,
                                  const std::vector<std::string>& class_names,
                                  const std::vector<std::size_t>& row_order,
                                  std::size_t catch_all_class) {
    if (class_names.size() != report.n_classes) {
        throw ModelError("class name count does not match report");
    }
    std::vector<std::size_t> order = row_order;
    if (order.empty()) {
        order.resize(report.n_classes);
        std::iota(order.begin(), order.end(), std::size_t{0});
    }

    std::size_t name_width = std::string("Macro average").size();
    for (const auto& name : class_names) name_width = std::max(name_width, name.size() + 2);

    std::ostringstream out;
    out << std::fixed << std::setprecision(2);
    out << std::left << std::setw(static_cast<int>(name_width)) << "Class"
        << std::right << std::setw(6) << "P" << std::setw(6) << "R" << std::setw(6) << "F"
        << std::setw(10) << "Support" << '\n';
    bool marked = false;
    for (std::size_t c : order) {
        const ClassMetrics& m = report.per_class.at(c);
        std::int64_t support = 0;
        for (std::size_t p = 0; p < report.n_classes; ++p) support += report.pooled.at(c, p);
        std::string name = class_names[c];
        if (c == catch_all_class) {
            name += " *";
            marked = true;
        }
        out << std::left << std::setw(static_cast<int>(name_width)) << name
            << std::right << std::setw(6) << m.precision << std::setw(6) << m.recall
            << std::setw(6) << m.f << std::setw(10) << support << '\n';
    }
    out << std::left << std::setw(static_cast<int>(name_width)) << "Micro average"
        << std::right << std::setw(6) << report.micro.precision << std::setw(6)
        << report.micro.recall << std::setw(6) << report.micro.f << std::setw(10)
        << report.pooled.total() << '\n';
    out << std::left << std::setw(static_cast<int>(name_width)) << "Macro average"
        << std::right << std::setw(6) << report.macro.precision << std::setw(6)
        << report.macro.recall << std::setw(6) << report.macro.f << std::setw(10)
        << report.pooled.total() << '\n';
    if (marked) out << "* catch-all class\n";
    return out.str();
}

}  // namespace ppcov::eval
