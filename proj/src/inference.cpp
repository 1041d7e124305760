#include "riskmap/inference.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "riskmap/errors.hpp"

namespace riskmap {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

// In-place softmax of v[0..K); returns log-sum-exp.
double softmax_inplace(double* v, std::size_t K)
{
    double m = kNegInf;
    for (std::size_t k = 0; k < K; ++k)
        m = std::max(m, v[k]);
    if (!std::isfinite(m))
        return m;
    double s = 0.0;
    for (std::size_t k = 0; k < K; ++k) {
        v[k] = std::exp(v[k] - m);
        s += v[k];
    }
    const double inv = 1.0 / s;
    for (std::size_t k = 0; k < K; ++k)
        v[k] *= inv;
    return m + std::log(s);
}

double log_sum_exp(const double* v, std::size_t K)
{
    double m = kNegInf;
    for (std::size_t k = 0; k < K; ++k)
        m = std::max(m, v[k]);
    if (!std::isfinite(m))
        return m;
    double s = 0.0;
    for (std::size_t k = 0; k < K; ++k)
        s += std::exp(v[k] - m);
    return m + std::log(s);
}

// s = sum_{j~i} t_j
void neighbour_sum(const SpatialGraph& g, const PosteriorTable& t, std::size_t i, double* s)
{
    const std::size_t K = static_cast<std::size_t>(t.cols());
    std::fill(s, s + K, 0.0);
    for (std::size_t j : g.neighbors(i)) {
        const double* tj = t.data() + j * K;
        for (std::size_t k = 0; k < K; ++k)
            s[k] += tj[k];
    }
}

// out = B s for symmetric row-major-equivalent B
void apply_B(const Eigen::MatrixXd& B, const double* s, double* out, std::size_t K)
{
    for (std::size_t k = 0; k < K; ++k) {
        double acc = 0.0;
        for (std::size_t l = 0; l < K; ++l)
            acc += B(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(l)) * s[l];
        out[k] = acc;
    }
}

void check_shapes(const RowMatrix& loglik, const HmrfParams& params, const SpatialGraph& g)
{
    if (static_cast<std::size_t>(loglik.rows()) != g.node_count())
        throw Error(ErrorCode::InvalidArgument, "data and graph sizes differ");
    if (static_cast<std::size_t>(loglik.cols()) != params.classes() ||
        params.alpha.size() != params.classes() || params.interaction.classes != params.classes())
        throw Error(ErrorCode::InvalidArgument, "inconsistent class count in parameters");
}

} // namespace

bool is_row_stochastic(const PosteriorTable& t, double tol)
{
    for (Eigen::Index i = 0; i < t.rows(); ++i) {
        double s = 0.0;
        for (Eigen::Index k = 0; k < t.cols(); ++k) {
            if (!(t(i, k) >= 0.0))
                return false;
            s += t(i, k);
        }
        if (std::abs(s - 1.0) > tol)
            return false;
    }
    return true;
}

PosteriorTable independent_posteriors(const RowMatrix& loglik, const std::vector<double>& alpha)
{
    const std::size_t N = static_cast<std::size_t>(loglik.rows());
    const std::size_t K = static_cast<std::size_t>(loglik.cols());
    PosteriorTable t(N, K);
    for (std::size_t i = 0; i < N; ++i) {
        double* row = t.data() + i * K;
        for (std::size_t k = 0; k < K; ++k)
            row[k] = alpha[k] + loglik(i, k);
        if (!std::isfinite(softmax_inplace(row, K)))
            throw Error(ErrorCode::NonFinite, "posterior row " + std::to_string(i) + " cannot be normalised");
    }
    return t;
}

PosteriorTable mean_field_estep(const ObservedData& data, const HmrfParams& params,
                                const SpatialGraph& g, const PosteriorTable& warm,
                                const FitOptions& opts)
{
    return mean_field_estep(log_likelihood_table(data, params.lambda), params, g, warm, opts);
}

PosteriorTable mean_field_estep(const RowMatrix& loglik, const HmrfParams& params,
                                const SpatialGraph& g, const PosteriorTable& warm,
                                const FitOptions& opts, std::size_t* sweeps)
{
    check_shapes(loglik, params, g);
    const std::size_t N = g.node_count();
    const std::size_t K = params.classes();
    if (static_cast<std::size_t>(warm.rows()) != N || static_cast<std::size_t>(warm.cols()) != K)
        throw Error(ErrorCode::InvalidArgument, "warm start has the wrong shape");

    const Eigen::MatrixXd B = materialize_B(params.interaction);
    PosteriorTable t = warm;
    std::vector<double> s(K), field(K), row(K);
    // A site whose neighbours have all moved by less than skip_tol since its
    // last update is skipped; its own change would be far below mf_tol.
    const double skip_tol = opts.mf_tol * 1e-4;
    std::vector<char> dirty(N, 1);
    std::size_t done = 0;
    for (std::size_t sweep = 0; sweep < opts.mf_max_sweeps; ++sweep) {
        double max_change = 0.0;
        for (std::size_t i = 0; i < N; ++i) {
            if (!dirty[i])
                continue;
            dirty[i] = 0;
            neighbour_sum(g, t, i, s.data());
            apply_B(B, s.data(), field.data(), K);
            for (std::size_t k = 0; k < K; ++k)
                row[k] = params.alpha[k] + field[k] + loglik(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(k));
            if (!std::isfinite(softmax_inplace(row.data(), K)))
                throw Error(ErrorCode::NonFinite, "mean-field row " + std::to_string(i) + " cannot be normalised");
            double* ti = t.data() + i * K;
            double change = 0.0;
            for (std::size_t k = 0; k < K; ++k) {
                change = std::max(change, std::abs(row[k] - ti[k]));
                ti[k] = row[k];
            }
            max_change = std::max(max_change, change);
            if (change > skip_tol)
                for (std::size_t j : g.neighbors(i))
                    dirty[j] = 1;
        }
        ++done;
        if (max_change < opts.mf_tol)
            break;
    }
    if (sweeps)
        *sweeps = done;
    return t;
}

double mean_field_free_energy(const RowMatrix& loglik, const HmrfParams& params,
                              const SpatialGraph& g, const PosteriorTable& t)
{
    check_shapes(loglik, params, g);
    const std::size_t K = params.classes();
    const Eigen::MatrixXd B = materialize_B(params.interaction);
    double f = 0.0;
    for (std::size_t i = 0; i < g.node_count(); ++i) {
        for (std::size_t k = 0; k < K; ++k) {
            const double tik = t(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(k));
            if (tik > 0.0)
                f += tik * (params.alpha[k] + loglik(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(k)) - std::log(tik));
        }
    }
    for (auto [i, j] : g.edges())
        f += t.row(static_cast<Eigen::Index>(i)) * B * t.row(static_cast<Eigen::Index>(j)).transpose();
    return f;
}

double mean_field_loglik(const RowMatrix& loglik, const HmrfParams& params,
                         const SpatialGraph& g, const PosteriorTable& t)
{
    check_shapes(loglik, params, g);
    const std::size_t N = g.node_count();
    const std::size_t K = params.classes();
    const Eigen::MatrixXd B = materialize_B(params.interaction);
    std::vector<double> s(K), m(K);
    double total = 0.0;
    for (std::size_t i = 0; i < N; ++i) {
        neighbour_sum(g, t, i, s.data());
        apply_B(B, s.data(), m.data(), K);
        for (std::size_t k = 0; k < K; ++k)
            m[k] += params.alpha[k];
        const double lse = log_sum_exp(m.data(), K);
        for (std::size_t k = 0; k < K; ++k)
            m[k] = m[k] - lse + loglik(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(k));
        total += log_sum_exp(m.data(), K);
    }
    return total;
}

LambdaUpdate mstep_lambda(const PosteriorTable& t, const ObservedData& data,
                          std::optional<double> collapse_eps)
{
    const std::size_t N = data.size();
    const std::size_t K = static_cast<std::size_t>(t.cols());
    if (static_cast<std::size_t>(t.rows()) != N)
        throw Error(ErrorCode::InvalidArgument, "posterior table and data differ in length");

    std::vector<double> cases(K, 0.0);
    LambdaUpdate out;
    out.class_weight.assign(K, 0.0);
    for (std::size_t i = 0; i < N; ++i) {
        const double y = static_cast<double>(data.counts[i]);
        const double n = static_cast<double>(data.populations[i]);
        const double* ti = t.data() + i * K;
        for (std::size_t k = 0; k < K; ++k) {
            cases[k] += ti[k] * y;
            out.class_weight[k] += ti[k] * n;
        }
    }
    const double total_n = data.total_population();
    if (total_n <= 0.0)
        throw Error(ErrorCode::EmptyPopulation, "total population is zero");
    const double eps = collapse_eps.value_or(1e-3 * total_n / (static_cast<double>(N) * static_cast<double>(K)));

    out.raw.assign(K, 0.0);
    out.lambda.assign(K, kLambdaFloor);
    double conserved = 0.0;
    for (std::size_t k = 0; k < K; ++k) {
        if (out.class_weight[k] > 0.0)
            out.raw[k] = cases[k] / out.class_weight[k];
        out.lambda[k] = std::max(out.raw[k], kLambdaFloor);
        if (out.class_weight[k] < eps)
            out.collapsed.push_back(static_cast<int>(k));
        conserved += (out.class_weight[k] / total_n) * out.raw[k];
    }
    const double lambda_bar = data.total_counts() / total_n;
    const double diff = std::abs(conserved - lambda_bar);
    out.conservation_residual = lambda_bar > 0.0 ? diff / lambda_bar : diff;
    return out;
}

BetaSurrogate::BetaSurrogate(const PosteriorTable& t, const SpatialGraph& g, InteractionKind kind)
    : t_(t), K_(static_cast<std::size_t>(t.cols()))
{
    const std::size_t N = g.node_count();
    if (static_cast<std::size_t>(t.rows()) != N)
        throw Error(ErrorCode::InvalidArgument, "posterior table and graph differ in size");
    const Eigen::MatrixXd G = structure_matrix(kind, K_);
    field_.resize(static_cast<Eigen::Index>(N), static_cast<Eigen::Index>(K_));
    std::vector<double> s(K_);
    for (std::size_t i = 0; i < N; ++i) {
        neighbour_sum(g, t_, i, s.data());
        apply_B(G, s.data(), field_.data() + i * K_, K_);
    }
}

double BetaSurrogate::value(const std::vector<double>& alpha, double b) const
{
    return evaluate(alpha, b, false).value;
}

std::vector<double> BetaSurrogate::gradient(const std::vector<double>& alpha, double b) const
{
    const Eigen::VectorXd g = evaluate(alpha, b, false).gradient;
    return {g.data(), g.data() + g.size()};
}

BetaSurrogate::Evaluation BetaSurrogate::evaluate(const std::vector<double>& alpha, double b,
                                                  bool with_hessian) const
{
    const std::size_t N = static_cast<std::size_t>(t_.rows());
    const std::size_t K = K_;
    const auto D = static_cast<Eigen::Index>(K + 1);
    Evaluation ev;
    ev.gradient = Eigen::VectorXd::Zero(D);
    if (with_hessian)
        ev.hessian = Eigen::MatrixXd::Zero(D, D);

    std::vector<double> m(K), p(K);
    double f = 0.0;
    double hbb = 0.0;
    for (std::size_t i = 0; i < N; ++i) {
        const double* ti = t_.data() + i * K;
        const double* gi = field_.data() + i * K;
        for (std::size_t k = 0; k < K; ++k)
            p[k] = m[k] = alpha[k] + b * gi[k];
        const double lse = softmax_inplace(p.data(), K);
        double gbar = 0.0;
        for (std::size_t k = 0; k < K; ++k) {
            f += ti[k] * m[k];
            const double r = ti[k] - p[k];
            ev.gradient(static_cast<Eigen::Index>(k)) += r;
            ev.gradient(D - 1) += r * gi[k];
            gbar += p[k] * gi[k];
        }
        f -= lse;
        if (with_hessian) {
            // negative covariance of the sufficient statistics under p_i
            double g2 = 0.0;
            for (std::size_t k = 0; k < K; ++k) {
                const auto ek = static_cast<Eigen::Index>(k);
                g2 += p[k] * gi[k] * gi[k];
                for (std::size_t l = 0; l < K; ++l)
                    ev.hessian(ek, static_cast<Eigen::Index>(l)) += p[k] * p[l];
                ev.hessian(ek, ek) -= p[k];
                const double cross = p[k] * (gi[k] - gbar);
                ev.hessian(ek, D - 1) -= cross;
            }
            hbb -= g2 - gbar * gbar;
        }
    }
    ev.value = f;
    if (with_hessian) {
        ev.hessian(D - 1, D - 1) = hbb;
        for (Eigen::Index k = 0; k + 1 < D; ++k)
            ev.hessian(D - 1, k) = ev.hessian(k, D - 1);
    }
    return ev;
}

BetaUpdate mstep_beta(const PosteriorTable& t, const SpatialGraph& g, const HmrfParams& current,
                      std::optional<double> fix_b, const FitOptions& opts)
{
    const std::size_t K = current.classes();
    const InteractionKind kind = current.interaction.kind;
    if (kind == InteractionKind::FullFree)
        throw Error(ErrorCode::InvalidArgument, "prior parameters of a full interaction matrix are not estimated");

    BetaUpdate out;
    out.alpha = current.alpha;
    const double alpha_ref = out.alpha.back();
    for (double& a : out.alpha)
        a = std::clamp(a - alpha_ref, -opts.alpha_bound, opts.alpha_bound);
    out.alpha.back() = 0.0;
    out.b = fix_b ? *fix_b : std::clamp(current.interaction.b, 0.0, opts.b_max);
    if (K == 1 && fix_b)
        return out;

    const BetaSurrogate surrogate(t, g, kind);
    const bool free_b = !fix_b.has_value();

    // free coordinates: alpha_0..alpha_{K-2}, then b when free
    std::vector<Eigen::Index> coords;
    for (std::size_t k = 0; k + 1 < K; ++k)
        coords.push_back(static_cast<Eigen::Index>(k));
    if (free_b)
        coords.push_back(static_cast<Eigen::Index>(K));
    const auto D = static_cast<Eigen::Index>(coords.size());

    auto project = [&](std::vector<double>& alpha, double& b) {
        for (std::size_t k = 0; k + 1 < K; ++k)
            alpha[k] = std::clamp(alpha[k], -opts.alpha_bound, opts.alpha_bound);
        b = std::clamp(b, 0.0, opts.b_max);
    };

    const double N = static_cast<double>(t.rows());
    const double grad_tol = 1e-9 * std::max(N, 1.0);

    auto ev = surrogate.evaluate(out.alpha, out.b, true);
    for (std::size_t iter = 0; iter < opts.beta_max_iters; ++iter) {
        Eigen::VectorXd grad(D);
        Eigen::MatrixXd neg_h(D, D);
        for (Eigen::Index a = 0; a < D; ++a) {
            grad(a) = ev.gradient(coords[a]);
            for (Eigen::Index c = 0; c < D; ++c)
                neg_h(a, c) = -ev.hessian(coords[a], coords[c]);
        }
        // projected gradient: drop components pushing against an active bound
        Eigen::VectorXd pg = grad;
        for (Eigen::Index a = 0; a < D; ++a) {
            const double x = coords[a] == static_cast<Eigen::Index>(K) ? out.b : out.alpha[coords[a]];
            const double lo = coords[a] == static_cast<Eigen::Index>(K) ? 0.0 : -opts.alpha_bound;
            const double hi = coords[a] == static_cast<Eigen::Index>(K) ? opts.b_max : opts.alpha_bound;
            if ((x <= lo && grad(a) < 0.0) || (x >= hi && grad(a) > 0.0))
                pg(a) = 0.0;
        }
        if (pg.lpNorm<Eigen::Infinity>() <= grad_tol)
            break;

        // Newton-scaled ascent direction, falling back to the plain gradient
        const double ridge = 1e-10 * (1.0 + neg_h.diagonal().cwiseAbs().maxCoeff());
        Eigen::MatrixXd reg = neg_h + ridge * Eigen::MatrixXd::Identity(D, D);
        Eigen::LDLT<Eigen::MatrixXd> ldlt(reg);
        std::vector<Eigen::VectorXd> directions;
        if (ldlt.info() == Eigen::Success && ldlt.isPositive()) {
            Eigen::VectorXd d = ldlt.solve(pg);
            if (d.allFinite() && d.dot(pg) > 0.0)
                directions.push_back(d);
        }
        const double curvature = std::max(neg_h.diagonal().maxCoeff(), 1e-12);
        directions.push_back(pg / curvature);

        bool accepted = false;
        BetaSurrogate::Evaluation next;
        for (const auto& dir : directions) {
            double step = 1.0;
            for (int tries = 0; tries < 60 && !accepted; ++tries, step *= 0.5) {
                std::vector<double> alpha = out.alpha;
                double b = out.b;
                for (Eigen::Index a = 0; a < D; ++a) {
                    if (coords[a] == static_cast<Eigen::Index>(K))
                        b += step * dir(a);
                    else
                        alpha[coords[a]] += step * dir(a);
                }
                project(alpha, b);
                double predicted = 0.0;
                for (Eigen::Index a = 0; a < D; ++a) {
                    const double delta = coords[a] == static_cast<Eigen::Index>(K)
                                             ? b - out.b
                                             : alpha[coords[a]] - out.alpha[coords[a]];
                    predicted += grad(a) * delta;
                }
                if (predicted <= 0.0)
                    continue;
                auto trial = surrogate.evaluate(alpha, b, true);
                if (trial.value >= ev.value + 1e-4 * predicted) {
                    out.alpha = std::move(alpha);
                    out.b = b;
                    next = std::move(trial);
                    accepted = true;
                }
            }
            if (accepted)
                break;
        }
        if (!accepted) {
            if (iter == 0)
                out.no_ascent = true;
            break;
        }
        ++out.iterations;
        const double previous = ev.value;
        ev = std::move(next);
        if (std::abs(ev.value - previous) <= 1e-14 * std::max(1.0, std::abs(previous)))
            break;
    }
    if (fix_b)
        out.b = *fix_b;
    return out;
}

LabelMap mpm_labels(const PosteriorTable& t)
{
    LabelMap z;
    z.classes = static_cast<std::size_t>(t.cols());
    z.labels.resize(static_cast<std::size_t>(t.rows()));
    for (Eigen::Index i = 0; i < t.rows(); ++i) {
        Eigen::Index best = 0;
        for (Eigen::Index k = 1; k < t.cols(); ++k)
            if (t(i, k) > t(i, best))
                best = k;
        z.labels[static_cast<std::size_t>(i)] = static_cast<int>(best);
    }
    return z;
}

namespace {

// Reorder classes so that lambda is ascending; alpha, posterior columns and
// a full interaction matrix follow. Returns the new->old class map.
std::vector<std::size_t> sort_classes(HmrfParams& params, PosteriorTable& t)
{
    const std::size_t K = params.classes();
    std::vector<std::size_t> order(K);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return params.lambda[a] < params.lambda[b]; });
    if (std::is_sorted(order.begin(), order.end()))
        return order;

    HmrfParams sorted = params;
    const bool has_table = t.size() > 0;
    PosteriorTable moved(t.rows(), t.cols());
    for (std::size_t k = 0; k < K; ++k) {
        sorted.lambda[k] = params.lambda[order[k]];
        sorted.alpha[k] = params.alpha[order[k]];
        if (has_table)
            moved.col(static_cast<Eigen::Index>(k)) = t.col(static_cast<Eigen::Index>(order[k]));
    }
    if (params.interaction.full_matrix) {
        auto& M = *sorted.interaction.full_matrix;
        const auto& src = *params.interaction.full_matrix;
        for (std::size_t k = 0; k < K; ++k)
            for (std::size_t l = 0; l < K; ++l)
                M(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(l)) =
                    src(static_cast<Eigen::Index>(order[k]), static_cast<Eigen::Index>(order[l]));
    }
    const double ref = sorted.alpha.back();
    for (double& a : sorted.alpha)
        a -= ref;
    params = std::move(sorted);
    if (has_table)
        t = std::move(moved);
    return order;
}

} // namespace

std::size_t free_parameter_count(std::size_t classes)
{
    return classes + (classes - 1) + 1;
}

double bic(const FitResult& fit, std::size_t node_count)
{
    const double d = static_cast<double>(free_parameter_count(fit.params.classes()));
    return 2.0 * fit.loglik - d * std::log(static_cast<double>(node_count));
}

FitResult vem_fit(const ObservedData& data, const SpatialGraph& g, const HmrfParams& init,
                  const FitOptions& opts, const PosteriorTable* warm)
{
    data.validate();
    const std::size_t N = g.node_count();
    const std::size_t K = init.classes();
    if (K == 0)
        throw Error(ErrorCode::InvalidArgument, "at least one class is required");
    if (data.size() != N)
        throw Error(ErrorCode::InvalidArgument, "data and graph sizes differ");
    if (data.total_population() <= 0.0)
        throw Error(ErrorCode::EmptyPopulation, "total population is zero");

    FitResult fit;
    HmrfParams params = init;
    params.interaction.classes = K;
    if (params.alpha.empty())
        params.alpha.assign(K, 0.0);
    for (double& l : params.lambda)
        l = std::max(l, kLambdaFloor);
    if (opts.fix_b)
        params.interaction.b = *opts.fix_b;

    PosteriorTable t;
    if (warm) {
        if (static_cast<std::size_t>(warm->rows()) != N || static_cast<std::size_t>(warm->cols()) != K)
            throw Error(ErrorCode::InvalidArgument, "warm start has the wrong shape");
        t = *warm;
    }
    sort_classes(params, t);
    {
        const double ref = params.alpha.back();
        for (double& a : params.alpha)
            a -= ref;
    }

    RowMatrix loglik = log_likelihood_table(data, params.lambda);
    if (!warm)
        t = independent_posteriors(loglik, params.alpha);

    double previous = 0.0;
    for (std::size_t q = 1; q <= opts.max_em_iters; ++q) {
        t = mean_field_estep(loglik, params, g, t, opts);

        LambdaUpdate lam = mstep_lambda(t, data, opts.collapse_eps);
        fit.conservation_trace.push_back(lam.conservation_residual);
        fit.collapse_events += lam.collapsed.size();
        params.lambda = lam.lambda;
        const auto order = sort_classes(params, t);
        fit.collapsed_classes.clear();
        for (std::size_t k = 0; k < K; ++k)
            if (std::find(lam.collapsed.begin(), lam.collapsed.end(), static_cast<int>(order[k])) != lam.collapsed.end())
                fit.collapsed_classes.push_back(static_cast<int>(k));
        loglik = log_likelihood_table(data, params.lambda);

        if (params.interaction.kind != InteractionKind::FullFree) {
            BetaUpdate beta = mstep_beta(t, g, params, opts.fix_b, opts);
            params.alpha = std::move(beta.alpha);
            params.interaction.b = beta.b;
            fit.beta_no_ascent += beta.no_ascent ? 1 : 0;
        }

        const double ll = mean_field_loglik(loglik, params, g, t);
        if (!std::isfinite(ll))
            throw Error(ErrorCode::NonFinite, "mean-field log-likelihood is not finite");
        fit.ll_trace.push_back(ll);
        fit.b_trace.push_back(params.interaction.b);
        fit.iterations = q;
        if (q >= 2) {
            const double change = std::abs(ll - previous);
            if (change == 0.0 || change / std::abs(previous) < opts.em_rel_tol) {
                fit.converged = true;
                break;
            }
        }
        previous = ll;
    }

    fit.params = std::move(params);
    fit.posteriors = std::move(t);
    fit.labels = mpm_labels(fit.posteriors);
    fit.loglik = fit.ll_trace.empty() ? 0.0 : fit.ll_trace.back();
    fit.bic = bic(fit, N);
    return fit;
}

} // namespace riskmap
