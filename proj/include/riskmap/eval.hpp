#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <vector>

#include "riskmap/init.hpp"
#include "riskmap/model.hpp"
#include "riskmap/simulate.hpp"

namespace riskmap {

/// Class matching by risk rank: result[e] is the true class holding the same
/// ascending-lambda rank as estimated class e. Ties keep index order.
std::vector<std::size_t> align_classes(const std::vector<double>& estimated_lambda,
                                       const std::vector<double>& true_lambda);

/// d_k = 2 TP / (2 TP + FP + FN); 1 when class k is absent from both maps.
double dice(const LabelMap& pred, const LabelMap& truth, int k);

/// Per-class scores, reported in ascending order of true risk ("rank" r):
/// entry r describes the true class true_class_of_rank[r] and the estimated
/// class aligned to it.
struct EvalReport {
    std::vector<double> dsc;
    std::vector<double> estimated_lambda;
    std::vector<double> true_lambda;
    std::vector<std::size_t> true_class_of_rank;
    std::vector<std::size_t> alignment;               // estimated class -> true class
    std::vector<std::vector<std::int64_t>> confusion; // [true rank][predicted rank]
    std::vector<bool> vacuous;   // class absent from both maps (DSC set to 1)
    std::vector<bool> collapsed; // aligned estimated class collapsed or empty
};

EvalReport evaluate(const LabelMap& predicted, const std::vector<double>& estimated_lambda,
                    const std::vector<int>& collapsed_classes, const LabelMap& truth,
                    const std::vector<double>& true_lambda);

struct ReplicateRow {
    std::size_t replicate = 0;
    std::uint64_t seed = 0;
    bool failed = false;
    std::string error;
    std::vector<double> dsc;              // by true-risk rank
    std::vector<double> estimated_lambda; // by true-risk rank
    double b = 0.0;
    double loglik = 0.0;
};

struct ClassSummary {
    double dsc_mean = 0.0;
    double dsc_sd = 0.0;
    double lambda_mean = 0.0;
    double lambda_sd = 0.0;
};

struct StudyResult {
    std::vector<ReplicateRow> rows;
    std::vector<ClassSummary> summary; // by true-risk rank, over successful replicates
    std::vector<double> true_lambda;   // ascending
    std::size_t failures = 0;
};

/// Builds the scenario of one replicate from its seed.
using ScenarioGenerator = std::function<Scenario(std::uint64_t)>;

/// Replicate r uses seed derive_seed(study_seed, r); counts are sampled
/// with derive_seed(seed, 1) and the search runs with derive_seed(seed, 2).
/// Replicates run in parallel over `threads`; failures are counted, not
/// rethrown. Requires R >= 2.
StudyResult replicate_study(const ScenarioGenerator& generator, std::size_t classes,
                            const StrategySpec& strategy, const FitOptions& opts, std::size_t replicates,
                            std::uint64_t study_seed, std::size_t threads);

/// Same with explicit per-replicate seeds.
StudyResult replicate_study(const ScenarioGenerator& generator, std::size_t classes,
                            const StrategySpec& strategy, const FitOptions& opts,
                            const std::vector<std::uint64_t>& replicate_seeds, std::size_t threads);

/// Unbiased sample standard deviation (0 for fewer than two values).
double sample_sd(const std::vector<double>& v);
double mean(const std::vector<double>& v);

} // namespace riskmap
