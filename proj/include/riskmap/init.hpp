#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "riskmap/inference.hpp"
#include "riskmap/parallel.hpp"

namespace riskmap {

enum class StrategyKind { Tra, Rand, Emm };

const char* to_string(StrategyKind kind);
StrategyKind parse_strategy_kind(const std::string& name);

struct StrategySpec {
    StrategyKind kind = StrategyKind::Tra;
    std::size_t restarts = 10; // M
    double rand_upper = 1.5;
    bool search2 = true;       // fixed-b first phase (Tra / Rand)
    std::uint64_t seed = 0;
    InteractionKind interaction = InteractionKind::TriDiagonal;
    std::size_t max_rejects = 10000;
    std::size_t threads = 1;
};

struct InitDraw {
    std::vector<double> lambda0;
    std::vector<double> n0;     // population shares; empty for random draws
    std::vector<double> alpha0;
    double b0 = 1.0;
    std::size_t rejected = 0;   // discarded trajectory draws before acceptance
};

/// lambda_bar = sum y / sum n. Throws EmptyPopulation when sum n == 0.
double average_risk(const ObservedData& data);

/// Trajectory-constrained draw: shares n0 ~ Dirichlet(1, ..., 1), all but one
/// risk drawn without replacement from the empirical ratios y_i / n_i
/// (n_i > 0, floored at kLambdaFloor), the remaining one solved from
/// sum_k n0_k lambda_k = lambda_bar. Non-positive solutions are discarded and
/// redrawn; after max_rejects consecutive discards throws RejectionExhausted.
InitDraw draw_tra(const ObservedData& data, std::size_t classes, Rng& rng,
                  std::size_t max_rejects = 10000);

/// Risks iid uniform on (0, upper], sorted ascending.
InitDraw draw_rand(const ObservedData& data, std::size_t classes, Rng& rng, double upper);

struct RestartRecord {
    bool failed = false;
    std::string error;
    double phase1_loglik = 0.0;
    double final_loglik = 0.0;
    std::vector<double> phase1_b_trace;
    std::size_t rejected_draws = 0;
};

struct SearchResult {
    FitResult best;
    std::size_t best_restart = 0;
    std::vector<RestartRecord> restarts;
    std::size_t failures = 0;
};

/// Search / Run / Select. Tra and Rand: each restart draws a start, runs EM
/// with b fixed at 1 (when search2), then continues with b free from that
/// state. Emm: every restart runs nonspatial EM (b = 0) from a random start,
/// and the best of those seeds one spatial fit. The fit with the highest
/// final mean-field log-likelihood wins, ties to the lowest restart index.
/// When opts.fix_b is set the b-fixed phase is skipped and b stays at that
/// value throughout. Throws AllRestartsFailed when no restart succeeds.
SearchResult search_run_select(const ObservedData& data, const SpatialGraph& g, std::size_t classes,
                               const StrategySpec& strategy, const FitOptions& opts);

struct KSelectionRow {
    std::size_t classes = 0;
    bool ok = false;
    std::string error;
    double loglik = 0.0;
    double bic = 0.0;
};

struct KSelection {
    std::vector<KSelectionRow> rows;
    std::optional<std::size_t> chosen; // argmax BIC over successful fits
    std::vector<SearchResult> fits;    // one per row (default-constructed when failed)
};

/// Fits every K in [k_min, k_max] (in parallel over K when strategy.threads
/// allows) and picks the largest BIC; ties go to the smaller K.
KSelection select_classes(const ObservedData& data, const SpatialGraph& g, std::size_t k_min,
                          std::size_t k_max, const StrategySpec& strategy, const FitOptions& opts);

} // namespace riskmap
