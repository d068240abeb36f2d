#pragma once

#include <array>
#include <filesystem>
#include <memory>
#include <set>
#include <string>
#include <vector>

#include "ppcov/classical.hpp"
#include "ppcov/neural.hpp"
#include "ppcov/practices.hpp"

namespace ppcov::coverage {

struct SegmentRecord {
    int segment_id = 0;
    DataPractice predicted = DataPractice::kOther;
    double confidence = 0.0;

    bool operator==(const SegmentRecord&) const = default;
};

// Which of the ten practices a policy's segments collectively address.
struct CoverageReport {
    std::string policy_id;
    std::vector<SegmentRecord> segments;
    std::set<DataPractice> covered;
    std::set<DataPractice> missing;
    // Segment ids predicted as each practice, indexed by practice.
    std::array<std::vector<int>, kNumPractices> practice_segments;

    bool operator==(const CoverageReport&) const = default;
};

// Uniform per-segment prediction surface over both model families.
class SegmentClassifier {
public:
    virtual ~SegmentClassifier() = default;
    /// Class probabilities for one segment, length kNumPractices.
    virtual std::vector<double> classify(const std::string& text) const = 0;
    virtual std::string kind() const = 0;
};

std::unique_ptr<SegmentClassifier> make_classifier(classical::ClassicalModel model);
std::unique_ptr<SegmentClassifier> make_classifier(neural::Model model);

/// Loads either model family, dispatching on the artifact contents.
std::unique_ptr<SegmentClassifier> load_classifier(const std::filesystem::path& path);

/// Blank-line-delimited blocks; whitespace-only blocks are dropped.
std::vector<std::string> segment_text(const std::string& text);

CoverageReport analyze_policy(const std::string& policy_id,
                              const std::vector<std::string>& segments,
                              const SegmentClassifier& model);

std::string render_report_json(const CoverageReport& report);
std::string render_report_text(const CoverageReport& report);
CoverageReport parse_report_json(const std::string& text);

}  // namespace ppcov::coverage
