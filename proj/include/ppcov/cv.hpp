#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "ppcov/corpus.hpp"
#include "ppcov/metrics.hpp"

namespace ppcov::eval {

/// Trains on the train split, returns one predicted class index per test
/// segment. Feature fitting (vocabulary, TF-IDF, sequence length) belongs
/// inside the runner so nothing leaks from the held-out fold.
using FoldRunner = std::function<std::vector<std::size_t>(
    const std::vector<corpus::Segment>& train, const std::vector<corpus::Segment>& test,
    std::size_t fold_index)>;

CvReport run_cv(const corpus::Dataset& dataset, std::size_t k, std::uint64_t seed,
                const FoldRunner& runner, const std::string& config_fingerprint);

}  // namespace ppcov::eval
