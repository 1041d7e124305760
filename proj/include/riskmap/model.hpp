#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "riskmap/graph.hpp"

namespace riskmap {

/// N x K tables (posteriors, marginals) are stored row-major so that one
/// site's class vector is contiguous.
using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// Smallest admissible risk level; keeps every Poisson log-likelihood finite.
inline constexpr double kLambdaFloor = 1e-12;

enum class InteractionKind { StandardPotts, TriDiagonal, SmoothGradation, FullFree };

const char* to_string(InteractionKind kind);
InteractionKind parse_interaction_kind(const std::string& name);

/// Class-pair interaction matrix family. All kinds except FullFree are
/// b times a fixed structure matrix:
///   StandardPotts   B = b I
///   TriDiagonal     B(k,k) = b, B(k,k+-1) = b/2, 0 elsewhere
///   SmoothGradation B(k,l) = b (1 - |k-l| / (K-1)), requires K >= 2
struct InteractionSpec {
    InteractionKind kind = InteractionKind::TriDiagonal;
    double b = 1.0;
    std::size_t classes = 1;
    std::optional<Eigen::MatrixXd> full_matrix;
};

/// Materialised K x K interaction matrix. Throws DegenerateSpec for
/// SmoothGradation with K = 1 or a FullFree spec without a symmetric matrix.
Eigen::MatrixXd materialize_B(const InteractionSpec& spec);

/// dB/db: the kind's matrix at b = 1. Not defined for FullFree.
Eigen::MatrixXd structure_matrix(InteractionKind kind, std::size_t classes);

struct HmrfParams {
    std::vector<double> lambda; // risk per unit of population, ascending
    std::vector<double> alpha;  // external field, alpha.back() == 0
    InteractionSpec interaction;

    std::size_t classes() const noexcept { return lambda.size(); }
};

struct ObservedData {
    std::vector<std::int64_t> counts;
    std::vector<std::int64_t> populations;

    std::size_t size() const noexcept { return counts.size(); }
    /// Throws InvalidArgument on length mismatch, negative values or
    /// cases in an empty population.
    void validate() const;
    double total_counts() const;
    double total_population() const;
};

struct LabelMap {
    std::vector<int> labels;
    std::size_t classes = 1;

    std::size_t size() const noexcept { return labels.size(); }
    Eigen::VectorXd one_hot(std::size_t i) const;
};

/// log Poisson(y; rate). rate == 0 gives 0 for y == 0 and -infinity otherwise.
double poisson_log_pmf(std::int64_t y, double rate);

/// Per-site, per-class Poisson log-likelihood log P(y_i; n_i lambda_k).
RowMatrix log_likelihood_table(const ObservedData& data, const std::vector<double>& lambda);

/// H(z) = -sum_i alpha_{z_i} - sum_{i~j} B(z_i, z_j), each unordered edge
/// counted once.
double prior_energy(const LabelMap& z, const HmrfParams& params, const SpatialGraph& g);

struct ExactSolution {
    double log_W = 0.0;
    double log_evidence = 0.0;
    RowMatrix marginals;
};

/// Largest configuration count exact_oracle will enumerate.
inline constexpr double kExactEnumerationLimit = 1048576.0; // 2^20

/// Brute-force normalising constant, evidence log P(y) and posterior
/// marginals P(Z_i = k | y) by enumerating all K^N labelings. Throws
/// TooLarge beyond kExactEnumerationLimit configurations.
ExactSolution exact_oracle(const ObservedData& data, const HmrfParams& params,
                           const SpatialGraph& g);

} // namespace riskmap
