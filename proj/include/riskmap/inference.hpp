#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <vector>

#include "riskmap/graph.hpp"
#include "riskmap/model.hpp"

namespace riskmap {

/// N x K mean-field posteriors; rows are probability vectors.
using PosteriorTable = RowMatrix;

bool is_row_stochastic(const PosteriorTable& t, double tol = 1e-10);

struct FitOptions {
    std::size_t max_em_iters = 500;
    double em_rel_tol = 1e-6;
    std::size_t mf_max_sweeps = 50;
    double mf_tol = 1e-6;
    std::optional<double> fix_b;
    std::uint64_t seed = 0;

    double b_max = 10.0;
    // |alpha_k| bound; only reached when a class empties out completely
    double alpha_bound = 50.0;
    // default 1e-3 * sum(n) / (N * K)
    std::optional<double> collapse_eps;
    std::size_t beta_max_iters = 50;
};

struct FitResult {
    HmrfParams params;
    PosteriorTable posteriors;
    LabelMap labels;
    std::vector<double> ll_trace;
    std::vector<double> b_trace;
    /// |sum_k n_k lambda_k - lambda_bar| / lambda_bar per EM iteration,
    /// measured on the raw closed-form update (before flooring / sorting).
    std::vector<double> conservation_trace;
    double loglik = 0.0;
    double bic = 0.0;
    std::size_t iterations = 0;
    bool converged = false;
    std::vector<int> collapsed_classes; // at the final iteration
    std::size_t collapse_events = 0;    // summed over iterations
    std::size_t beta_no_ascent = 0;
};

/// Independent-site posteriors t_ik proportional to exp(alpha_k) P(y_i | k):
/// the b = 0 closed form, also used as the default warm start.
PosteriorTable independent_posteriors(const RowMatrix& loglik, const std::vector<double>& alpha);

/// Gauss-Seidel mean-field sweeps in index order:
///   t_i(k) proportional to exp(alpha_k + (B sum_{j~i} t_j)_k) P(y_i; n_i lambda_k)
/// until the largest absolute cell change drops below mf_tol or
/// mf_max_sweeps is reached. Throws NonFinite if a row cannot be normalised.
PosteriorTable mean_field_estep(const ObservedData& data, const HmrfParams& params,
                                const SpatialGraph& g, const PosteriorTable& warm,
                                const FitOptions& opts);

/// Same, with a precomputed log-likelihood table. `sweeps` receives the
/// number of sweeps performed.
PosteriorTable mean_field_estep(const RowMatrix& loglik, const HmrfParams& params,
                                const SpatialGraph& g, const PosteriorTable& warm,
                                const FitOptions& opts, std::size_t* sweeps = nullptr);

/// Mean-field variational free energy
///   sum_i sum_k t_ik (alpha_k + log P(y_i|k) - log t_ik) + sum_{i~j} t_i' B t_j
/// (up to the constant -log W). Every single-site update of the E-step
/// maximises it in that site's coordinates, so sweeps never decrease it.
double mean_field_free_energy(const RowMatrix& loglik, const HmrfParams& params,
                              const SpatialGraph& g, const PosteriorTable& t);

/// Mean-field approximation of the observed-data log-likelihood:
///   sum_i log sum_k p_ik P(y_i; n_i lambda_k),  p_i = softmax(alpha + B sum_{j~i} t_j).
double mean_field_loglik(const RowMatrix& loglik, const HmrfParams& params,
                         const SpatialGraph& g, const PosteriorTable& t);

struct LambdaUpdate {
    std::vector<double> lambda;       // floored at kLambdaFloor
    std::vector<double> raw;          // sum_i t_ik y_i / sum_i t_ik n_i (0 when undefined)
    std::vector<double> class_weight; // sum_i t_ik n_i
    std::vector<int> collapsed;       // classes with class_weight < collapse_eps
    double conservation_residual = 0.0;
};

/// Closed-form risk update lambda_k = sum_i t_ik y_i / sum_i t_ik n_i.
/// The residual compares sum_k (class_weight_k / n) raw_k against
/// lambda_bar = sum y / sum n, relative to lambda_bar (absolute when 0).
LambdaUpdate mstep_lambda(const PosteriorTable& t, const ObservedData& data,
                          std::optional<double> collapse_eps = std::nullopt);

/// Mean-field pseudo-likelihood surrogate for the prior parameters:
///   F(alpha, b) = sum_i [ sum_k t_ik m_ik - log sum_k exp(m_ik) ],
///   m_ik = alpha_k + b (G s_i)_k,  s_i = sum_{j~i} t_j,  G = dB/db.
/// Concave in (alpha, b).
class BetaSurrogate {
public:
    BetaSurrogate(const PosteriorTable& t, const SpatialGraph& g, InteractionKind kind);

    double value(const std::vector<double>& alpha, double b) const;
    /// K alpha partials followed by the b partial.
    std::vector<double> gradient(const std::vector<double>& alpha, double b) const;

    struct Evaluation {
        double value = 0.0;
        Eigen::VectorXd gradient; // K + 1
        Eigen::MatrixXd hessian;  // (K + 1) x (K + 1)
    };
    Evaluation evaluate(const std::vector<double>& alpha, double b, bool with_hessian) const;

    std::size_t classes() const noexcept { return K_; }

private:
    PosteriorTable t_;
    RowMatrix field_; // G s_i per site
    std::size_t K_;
};

struct BetaUpdate {
    std::vector<double> alpha;
    double b = 0.0;
    std::size_t iterations = 0;
    bool no_ascent = false;
};

/// Maximises the surrogate by projected ascent with backtracking line
/// search. alpha_K stays 0, b stays in [0, b_max], and b is untouched when
/// fix_b is set (it is then set to *fix_b exactly).
BetaUpdate mstep_beta(const PosteriorTable& t, const SpatialGraph& g, const HmrfParams& current,
                      std::optional<double> fix_b, const FitOptions& opts = {});

/// Maximum posterior marginal labels; ties go to the lowest class index.
LabelMap mpm_labels(const PosteriorTable& t);

/// Variational EM: mean-field E-step, closed-form lambda step (classes then
/// re-sorted by ascending lambda), surrogate beta step; stops on relative
/// change of the mean-field log-likelihood.
FitResult vem_fit(const ObservedData& data, const SpatialGraph& g, const HmrfParams& init,
                  const FitOptions& opts, const PosteriorTable* warm = nullptr);

/// Free parameter count: K risks + (K - 1) field values + b.
std::size_t free_parameter_count(std::size_t classes);

/// BIC = 2 l - d log N; larger is better.
double bic(const FitResult& fit, std::size_t node_count);

} // namespace riskmap
