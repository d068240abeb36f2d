#include "ppcov/search.hpp"

#include <algorithm>
#include <chrono>
#include <limits>
#include <numeric>
#include <random>
#include <set>

#include "ppcov/errors.hpp"

namespace ppcov::eval {

namespace {

// Decodes a flat grid index; the last parameter varies fastest.
TrialConfig config_at(const SearchSpace& space, std::size_t flat) {
    TrialConfig config;
    config.resize(space.parameters.size());
    for (std::size_t p = space.parameters.size(); p-- > 0;) {
        const auto& [name, candidates] = space.parameters[p];
        config[p] = {name, candidates[flat % candidates.size()]};
        flat /= candidates.size();
    }
    return config;
}

TrialResult run_trial(const Objective& objective, TrialConfig config, std::uint64_t seed) {
    TrialResult trial;
    trial.config = std::move(config);
    trial.seed = seed;
    auto start = std::chrono::steady_clock::now();
    try {
        trial.objective = objective(trial.config);
    } catch (const std::exception& e) {
        trial.failed = true;
        trial.error = e.what();
        trial.objective = -std::numeric_limits<double>::infinity();
    }
    auto stop = std::chrono::steady_clock::now();
    trial.seconds = std::chrono::duration<double>(stop - start).count();
    return trial;
}

SearchResult assemble(std::vector<TrialResult> trials) {
    SearchResult result;
    std::size_t best = 0;
    for (std::size_t i = 1; i < trials.size(); ++i) {
        bool better = !trials[i].failed &&
                      (trials[best].failed || trials[i].objective > trials[best].objective);
        if (better) best = i;
    }
    result.best = trials[best];
    result.trials = std::move(trials);
    return result;
}

}  // namespace

std::size_t SearchSpace::grid_size() const {
    std::size_t size = 1;
    for (const auto& [name, candidates] : parameters) size *= candidates.size();
    return size;
}

std::string config_fingerprint(const TrialConfig& config) {
    std::string out;
    for (const auto& [name, value] : config) {
        if (!out.empty()) out += ' ';
        out += name + "=" + value;
    }
    return out;
}

SearchResult grid_search(const SearchSpace& space, const Objective& objective) {
    for (const auto& [name, candidates] : space.parameters) {
        if (candidates.empty()) throw UsageError("empty candidate list for parameter " + name);
    }
    std::vector<TrialResult> trials;
    const std::size_t size = space.grid_size();
    trials.reserve(size);
    for (std::size_t flat = 0; flat < size; ++flat) {
        trials.push_back(run_trial(objective, config_at(space, flat), 0));
    }
    if (trials.empty()) throw UsageError("empty search space");
    return assemble(std::move(trials));
}

SearchResult random_search(const SearchSpace& space, std::size_t budget, std::uint64_t seed,
                           const Objective& objective) {
    for (const auto& [name, candidates] : space.parameters) {
        if (candidates.empty()) throw UsageError("empty candidate list for parameter " + name);
    }
    if (budget == 0) throw UsageError("random_search budget must be at least 1");

    const std::size_t size = space.grid_size();
    std::mt19937_64 rng(seed);
    std::vector<TrialResult> trials;
    trials.reserve(budget);

    // Replacement is avoided while distinct configurations remain; a flat
    // shuffle covers the whole grid when the budget allows it.
    constexpr std::size_t kShuffleLimit = 1u << 20;
    if (size <= kShuffleLimit) {
        std::vector<std::size_t> ids(size);
        std::iota(ids.begin(), ids.end(), std::size_t{0});
        std::shuffle(ids.begin(), ids.end(), rng);
        for (std::size_t i = 0; i < budget; ++i) {
            std::size_t flat = i < size ? ids[i] : ids[rng() % size];
            trials.push_back(run_trial(objective, config_at(space, flat), seed));
        }
    } else {
        for (std::size_t i = 0; i < budget; ++i) {
            std::size_t flat = static_cast<std::size_t>(rng() % size);
            trials.push_back(run_trial(objective, config_at(space, flat), seed));
        }
    }
    return assemble(std::move(trials));
}

}  // namespace ppcov::eval
