#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "riskmap/graph.hpp"
#include "riskmap/model.hpp"
#include "riskmap/parallel.hpp"

namespace riskmap {

/// Ground truth for a synthetic study. true_lambda is indexed by class and
/// need not be ascending.
struct Scenario {
    SpatialGraph graph;
    LabelMap true_labels;
    std::vector<double> true_lambda;
    std::vector<std::int64_t> populations;
    std::uint64_t seed = 0;
};

/// Integer populations, iid log-uniform on [lo, hi].
std::vector<std::int64_t> log_uniform_populations(std::size_t count, std::int64_t lo, std::int64_t hi, Rng& rng);

/// Region growth rule. Free growth lets any two classes meet; Gradation
/// only lets classes whose indices differ by at most one claim adjacent
/// nodes. Nodes no class may claim are filled afterwards with the midpoint
/// class of their neighbours, so with three classes low and high never
/// touch; with more classes a few such leftovers can still border classes
/// two or more apart.
enum class BlobGrowth { Free, Gradation };

/// Contiguous class regions: seeds_per_class random seed nodes per class,
/// grown by round-robin multi-source BFS (the currently smallest class with
/// a live frontier grows next) until every node is claimed. Each blob is
/// connected. Populations are log-uniform on [pop_lo, pop_hi].
Scenario make_blob_scenario(const SpatialGraph& g, std::size_t classes, const std::vector<double>& lambda,
                            std::int64_t pop_lo, std::int64_t pop_hi, std::size_t seeds_per_class, Rng& rng,
                            BlobGrowth growth = BlobGrowth::Free);

/// Blob id (seed index) of every node from the last growth, for contiguity
/// checks; returned alongside the scenario.
struct BlobScenario {
    Scenario scenario;
    std::vector<int> blob_of_node;
    std::vector<int> blob_class;
};
BlobScenario make_blob_scenario_detailed(const SpatialGraph& g, std::size_t classes,
                                         const std::vector<double>& lambda, std::int64_t pop_lo,
                                         std::int64_t pop_hi, std::size_t seeds_per_class, Rng& rng,
                                         BlobGrowth growth = BlobGrowth::Free);

/// new_lambda[k] = lambda[perm[k]] (0-based); labels unchanged.
Scenario permute_risks(const Scenario& s, const std::vector<std::size_t>& perm);

/// y_i ~ Poisson(n_i lambda_{label_i}).
ObservedData sample_counts(const Scenario& s, Rng& rng);

} // namespace riskmap
