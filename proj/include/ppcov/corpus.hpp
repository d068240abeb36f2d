#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "ppcov/practices.hpp"

namespace ppcov::corpus {

// One labelled policy segment, the unit of classification.
struct Segment {
    std::string policy_id;
    int segment_id = 0;
    std::string text;
    DataPractice label = DataPractice::kOther;
};

struct Dataset {
    std::vector<Segment> segments;
    std::set<std::string> policies;

    bool operator==(const Dataset& other) const;
};

// Ingestion bookkeeping: segments present in the policy text but never
// annotated are dropped, and the count is reported.
struct LoadStats {
    std::size_t policies = 0;
    std::size_t segments = 0;
    std::size_t dropped_unannotated = 0;
    std::size_t dropped_empty_text = 0;
};

enum class CorpusSchema { kCanonicalJson, kOpp115Raw };

CorpusSchema schema_from_string(const std::string& name);

/// Loads a corpus tree. "canonical-json" expects one JSON file per policy;
/// "opp115-raw" expects annotations/*.csv plus sanitized_policies/*.html
/// with "|||"-delimited segments. Deterministic for a fixed input tree.
Dataset load_corpus(const std::string& root_path, CorpusSchema schema,
                    LoadStats* stats = nullptr);

/// Writes a Dataset as a canonical-json tree, one file per policy.
void save_corpus(const Dataset& dataset, const std::string& dir);

/// Majority label over all annotations of one segment. Ties go to the label
/// that is globally most frequent in the corpus, then to the lowest index.
DataPractice consolidate_labels(const std::vector<DataPractice>& candidate_labels,
                                const std::array<std::int64_t, kNumPractices>& global_freq);

struct FoldAssignment {
    int k = 0;
    // Keyed by (policy_id, segment_id); values in [0, k).
    std::map<std::pair<std::string, int>, int> assignment;

    int fold_of(const Segment& s) const;
};

/// Stratified fold assignment: per-class counts across folds differ by at
/// most 1. A class smaller than k only triggers a warning on stderr.
FoldAssignment stratified_folds(const Dataset& dataset, int k, std::uint64_t seed);

std::array<std::int64_t, kNumPractices> class_distribution(const Dataset& dataset);

}  // namespace ppcov::corpus
