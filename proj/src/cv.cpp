#include "ppcov/cv.hpp"

#include <chrono>

#include "ppcov/errors.hpp"
#include "ppcov/practices.hpp"

namespace ppcov::eval {

CvReport run_cv(const corpus::Dataset& dataset, std::size_t k, std::uint64_t seed,
                const FoldRunner& runner, const std::string& config_fingerprint) {
    if (dataset.segments.empty()) throw DataError("run_cv: empty dataset");

    corpus::FoldAssignment folds =
        corpus::stratified_folds(dataset, static_cast<int>(k), seed);

    CvReport report;
    report.seed = seed;
    report.config_fingerprint = config_fingerprint;

    for (std::size_t fold = 0; fold < k; ++fold) {
        std::vector<corpus::Segment> train;
        std::vector<corpus::Segment> test;
        for (const auto& segment : dataset.segments) {
            if (static_cast<std::size_t>(folds.fold_of(segment)) == fold) {
                test.push_back(segment);
            } else {
                train.push_back(segment);
            }
        }

        auto start = std::chrono::steady_clock::now();
        std::vector<std::size_t> pred;
        try {
            pred = runner(train, test, fold);
        } catch (const std::exception& e) {
            throw ModelError("fold " + std::to_string(fold) + " failed: " + e.what());
        }
        auto stop = std::chrono::steady_clock::now();
        report.fold_seconds.push_back(std::chrono::duration<double>(stop - start).count());

        if (pred.size() != test.size()) {
            throw ModelError("fold " + std::to_string(fold) +
                             " returned wrong prediction count");
        }
        std::vector<std::size_t> gold;
        gold.reserve(test.size());
        for (const auto& segment : test) gold.push_back(practice_index(segment.label));
        report.fold_confusions.push_back(confusion_matrix(gold, pred, kNumPractices));
    }

    finalize_cv_report(report);
    return report;
}

}  // namespace ppcov::eval
