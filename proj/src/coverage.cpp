#include "ppcov/coverage.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include "json.hpp"
#include "ppcov/errors.hpp"
#include "ppcov/features.hpp"

using nlohmann::json;

namespace ppcov::coverage {

namespace {

std::vector<double> softmax_vec(std::vector<double> scores) {
    double hi = *std::max_element(scores.begin(), scores.end());
    double sum = 0.0;
    for (double& s : scores) {
        s = std::exp(s - hi);
        sum += s;
    }
    for (double& s : scores) s /= sum;
    return scores;
}

class ClassicalClassifier final : public SegmentClassifier {
public:
    explicit ClassicalClassifier(classical::ClassicalModel model) : model_(std::move(model)) {}

    std::vector<double> classify(const std::string& text) const override {
        std::vector<std::string> tokens = features::tokenize(text);
        if (const auto* mnb = std::get_if<classical::MnbModel>(&model_.model)) {
            features::FeatureVector row = mnb->tfidf_features
                                              ? features::transform_tfidf(model_.tfidf, tokens)
                                              : features::count_vector(model_.tfidf, tokens);
            return classical::predict_proba(*mnb, row);
        }
        features::FeatureVector row = features::transform_tfidf(model_.tfidf, tokens);
        if (const auto* lr = std::get_if<classical::LrModel>(&model_.model)) {
            return classical::predict_proba(*lr, row);
        }
        const auto& svm = std::get<classical::SvmModel>(model_.model);
        return softmax_vec(classical::decision_scores(svm, row));
    }

    std::string kind() const override { return model_.kind(); }

private:
    classical::ClassicalModel model_;
};

class NeuralClassifier final : public SegmentClassifier {
public:
    explicit NeuralClassifier(neural::Model model) : model_(std::move(model)) {}

    std::vector<double> classify(const std::string& text) const override {
        std::vector<std::string> tokens = features::tokenize(text);
        features::EncodedSequence encoded =
            features::encode_sequence(tokens, model_.vocab, model_.max_sequence_length);
        return neural::predict(model_, encoded);
    }

    std::string kind() const override { return neural::architecture_name(model_.architecture); }

private:
    neural::Model model_;
};

}  // namespace

std::unique_ptr<SegmentClassifier> make_classifier(classical::ClassicalModel model) {
    return std::make_unique<ClassicalClassifier>(std::move(model));
}

std::unique_ptr<SegmentClassifier> make_classifier(neural::Model model) {
    return std::make_unique<NeuralClassifier>(std::move(model));
}

std::unique_ptr<SegmentClassifier> load_classifier(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open model file: " + path.string());
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        throw DataError("malformed model file " + path.string() + ": " + e.what());
    }
    if (j.contains("architecture")) return make_classifier(neural::load_model(path));
    if (j.contains("kind")) return make_classifier(classical::load_classical_model(path));
    throw DataError("unrecognized model artifact: " + path.string());
}

std::vector<std::string> segment_text(const std::string& text) {
    std::vector<std::string> segments;
    std::string current;
    std::istringstream lines(text);
    std::string line;
    auto flush = [&] {
        if (current.find_first_not_of(" \t\r\n") != std::string::npos) {
            segments.push_back(current);
        }
        current.clear();
    };
    while (std::getline(lines, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.find_first_not_of(" \t") == std::string::npos) {
            flush();
        } else {
            if (!current.empty()) current += '\n';
            current += line;
        }
    }
    flush();
    return segments;
}

CoverageReport analyze_policy(const std::string& policy_id,
                              const std::vector<std::string>& segments,
                              const SegmentClassifier& model) {
    if (segments.empty()) throw DataError("policy has no segments");

    CoverageReport report;
    report.policy_id = policy_id;
    for (std::size_t i = 0; i < segments.size(); ++i) {
        std::vector<double> probs = model.classify(segments[i]);
        if (probs.size() != static_cast<std::size_t>(kNumPractices)) {
            throw ModelError("classifier returned " + std::to_string(probs.size()) +
                             " probabilities, expected " + std::to_string(kNumPractices));
        }
        std::size_t best = 0;
        for (std::size_t c = 1; c < probs.size(); ++c) {
            if (probs[c] > probs[best]) best = c;
        }
        SegmentRecord record;
        record.segment_id = static_cast<int>(i);
        record.predicted = practice_from_index(static_cast<int>(best));
        record.confidence = probs[best];
        report.practice_segments[best].push_back(record.segment_id);
        report.covered.insert(record.predicted);
        report.segments.push_back(record);
    }
    for (DataPractice p : all_practices()) {
        if (!report.covered.contains(p)) report.missing.insert(p);
    }
    return report;
}

namespace {

constexpr int kReportVersion = 1;

json practice_set_to_json(const std::set<DataPractice>& set) {
    json arr = json::array();
    for (DataPractice p : set) arr.push_back(std::string(practice_name(p)));
    return arr;
}

std::set<DataPractice> practice_set_from_json(const json& arr) {
    std::set<DataPractice> set;
    for (const auto& name : arr) {
        auto parsed = parse_practice(name.get<std::string>());
        if (!parsed) throw DataError("unknown practice in report: " + name.get<std::string>());
        set.insert(*parsed);
    }
    return set;
}

}  // namespace

std::string render_report_json(const CoverageReport& report) {
    json j;
    j["format_version"] = kReportVersion;
    j["policy_id"] = report.policy_id;
    json segments = json::array();
    for (const SegmentRecord& record : report.segments) {
        json s;
        s["segment_id"] = record.segment_id;
        s["practice"] = std::string(practice_name(record.predicted));
        s["confidence"] = record.confidence;
        segments.push_back(std::move(s));
    }
    j["segments"] = std::move(segments);
    j["covered"] = practice_set_to_json(report.covered);
    j["missing"] = practice_set_to_json(report.missing);
    json index;
    for (DataPractice p : all_practices()) {
        index[std::string(practice_name(p))] = report.practice_segments[practice_index(p)];
    }
    j["practice_segments"] = std::move(index);
    return j.dump(2) + "\n";
}

CoverageReport parse_report_json(const std::string& text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::exception& e) {
        throw DataError(std::string("malformed coverage report: ") + e.what());
    }
    if (j.value("format_version", -1) != kReportVersion) {
        throw DataError("unsupported coverage report version");
    }
    CoverageReport report;
    report.policy_id = j.at("policy_id").get<std::string>();
    for (const auto& s : j.at("segments")) {
        SegmentRecord record;
        record.segment_id = s.at("segment_id").get<int>();
        auto parsed = parse_practice(s.at("practice").get<std::string>());
        if (!parsed) {
            throw DataError("unknown practice in report: " + s.at("practice").get<std::string>());
        }
        record.predicted = *parsed;
        record.confidence = s.at("confidence").get<double>();
        report.segments.push_back(record);
    }
    report.covered = practice_set_from_json(j.at("covered"));
    report.missing = practice_set_from_json(j.at("missing"));
    const json& index = j.at("practice_segments");
    for (DataPractice p : all_practices()) {
        const std::string name(practice_name(p));
        if (index.contains(name)) {
            report.practice_segments[practice_index(p)] =
                index.at(name).get<std::vector<int>>();
        }
    }
    return report;
}

std::string render_report_text(const CoverageReport& report) {
    std::ostringstream out;
    out << "Policy: " << report.policy_id << "\n";
    out << "Segments: " << report.segments.size() << "\n\n";
    out << "Covered practices (" << report.covered.size() << " of " << kNumPractices << "):\n";
    for (DataPractice p : all_practices()) {
        if (!report.covered.contains(p)) continue;
        out << "  " << practice_name(p) << ": segments";
        const auto& ids = report.practice_segments[practice_index(p)];
        for (std::size_t i = 0; i < ids.size(); ++i) {
            out << (i == 0 ? " " : ", ") << ids[i];
        }
        out << "\n";
    }
    out << "\nMissing practices (" << report.missing.size() << " of " << kNumPractices << "):\n";
    for (DataPractice p : all_practices()) {
        if (report.missing.contains(p)) out << "  " << practice_name(p) << "\n";
    }
    return out.str();
}

}  // namespace ppcov::coverage
