#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <utility>
#include <vector>

namespace ppcov::eval {

// Candidate lists keep declaration order; grid enumeration treats the
// first parameter as the outermost loop.
struct SearchSpace {
    std::vector<std::pair<std::string, std::vector<std::string>>> parameters;

    std::size_t grid_size() const;
};

using TrialConfig = std::vector<std::pair<std::string, std::string>>;

std::string config_fingerprint(const TrialConfig& config);

struct TrialResult {
    TrialConfig config;
    double objective = 0.0;
    std::uint64_t seed = 0;
    double seconds = 0.0;
    bool failed = false;
    std::string error;
};

struct SearchResult {
    TrialResult best;  // highest objective; ties go to the earliest trial
    std::vector<TrialResult> trials;
};

using Objective = std::function<double(const TrialConfig&)>;

SearchResult grid_search(const SearchSpace& space, const Objective& objective);

SearchResult random_search(const SearchSpace& space, std::size_t budget, std::uint64_t seed,
                           const Objective& objective);

}  // namespace ppcov::eval
