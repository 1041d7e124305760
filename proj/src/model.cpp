#include "riskmap/model.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <span>

#include "riskmap/errors.hpp"

namespace riskmap {

const char* to_string(InteractionKind kind)
{
    switch (kind) {
    case InteractionKind::StandardPotts: return "potts";
    case InteractionKind::TriDiagonal: return "tridiagonal";
    case InteractionKind::SmoothGradation: return "smooth";
    case InteractionKind::FullFree: return "full";
    }
    return "unknown";
}

InteractionKind parse_interaction_kind(const std::string& name)
{
    if (name == "potts") return InteractionKind::StandardPotts;
    if (name == "tridiagonal") return InteractionKind::TriDiagonal;
    if (name == "smooth") return InteractionKind::SmoothGradation;
    if (name == "full") return InteractionKind::FullFree;
    throw Error(ErrorCode::InvalidArgument, "unknown interaction kind '" + name + "'");
}

Eigen::MatrixXd structure_matrix(InteractionKind kind, std::size_t classes)
{
    const auto K = static_cast<Eigen::Index>(classes);
    Eigen::MatrixXd G = Eigen::MatrixXd::Zero(K, K);
    switch (kind) {
    case InteractionKind::StandardPotts:
        G.setIdentity();
        break;
    case InteractionKind::TriDiagonal:
        for (Eigen::Index k = 0; k < K; ++k) {
            G(k, k) = 1.0;
            if (k + 1 < K) {
                G(k, k + 1) = 0.5;
                G(k + 1, k) = 0.5;
            }
        }
        break;
    case InteractionKind::SmoothGradation:
        if (K < 2)
            throw Error(ErrorCode::DegenerateSpec, "smooth gradation needs at least 2 classes");
        for (Eigen::Index k = 0; k < K; ++k)
            for (Eigen::Index l = 0; l < K; ++l)
                G(k, l) = 1.0 - static_cast<double>(std::abs(k - l)) / static_cast<double>(K - 1);
        break;
    case InteractionKind::FullFree:
        throw Error(ErrorCode::DegenerateSpec, "full interaction matrix has no scalar structure");
    }
    return G;
}

Eigen::MatrixXd materialize_B(const InteractionSpec& spec)
{
    if (spec.kind == InteractionKind::FullFree) {
        if (!spec.full_matrix)
            throw Error(ErrorCode::DegenerateSpec, "full interaction kind needs a matrix");
        const auto& M = *spec.full_matrix;
        const auto K = static_cast<Eigen::Index>(spec.classes);
        if (M.rows() != K || M.cols() != K || !M.isApprox(M.transpose(), 0.0))
            throw Error(ErrorCode::DegenerateSpec, "full interaction matrix must be symmetric K x K");
        return M;
    }
    return spec.b * structure_matrix(spec.kind, spec.classes);
}

void ObservedData::validate() const
{
    if (counts.size() != populations.size())
        throw Error(ErrorCode::InvalidArgument, "counts and populations differ in length");
    for (std::size_t i = 0; i < counts.size(); ++i) {
        if (counts[i] < 0 || populations[i] < 0)
            throw Error(ErrorCode::InvalidArgument, "negative count or population at node " + std::to_string(i));
        if (populations[i] == 0 && counts[i] != 0)
            throw Error(ErrorCode::InvalidArgument, "cases in empty population at node " + std::to_string(i));
    }
}

double ObservedData::total_counts() const
{
    double s = 0.0;
    for (auto y : counts)
        s += static_cast<double>(y);
    return s;
}

double ObservedData::total_population() const
{
    double s = 0.0;
    for (auto n : populations)
        s += static_cast<double>(n);
    return s;
}

Eigen::VectorXd LabelMap::one_hot(std::size_t i) const
{
    Eigen::VectorXd e = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(classes));
    e(labels[i]) = 1.0;
    return e;
}

double poisson_log_pmf(std::int64_t y, double rate)
{
    if (rate == 0.0)
        return y == 0 ? 0.0 : -std::numeric_limits<double>::infinity();
    const double yd = static_cast<double>(y);
    return yd * std::log(rate) - rate - std::lgamma(yd + 1.0);
}

RowMatrix log_likelihood_table(const ObservedData& data, const std::vector<double>& lambda)
{
    const std::size_t N = data.size();
    const std::size_t K = lambda.size();
    RowMatrix table(N, K);
    std::vector<double> log_lambda(K);
    for (std::size_t k = 0; k < K; ++k)
        log_lambda[k] = std::log(lambda[k]);
    for (std::size_t i = 0; i < N; ++i) {
        const double y = static_cast<double>(data.counts[i]);
        const double n = static_cast<double>(data.populations[i]);
        if (n == 0.0) {
            for (std::size_t k = 0; k < K; ++k)
                table(i, k) = 0.0;
            continue;
        }
        const double base = y * std::log(n) - std::lgamma(y + 1.0);
        for (std::size_t k = 0; k < K; ++k) {
            if (lambda[k] == 0.0)
                table(i, k) = poisson_log_pmf(data.counts[i], 0.0);
            else
                table(i, k) = base + y * log_lambda[k] - n * lambda[k];
        }
    }
    return table;
}

double prior_energy(const LabelMap& z, const HmrfParams& params, const SpatialGraph& g)
{
    const Eigen::MatrixXd B = materialize_B(params.interaction);
    double h = 0.0;
    for (std::size_t i = 0; i < z.size(); ++i)
        h -= params.alpha[z.labels[i]];
    for (auto [i, j] : g.edges())
        h -= B(z.labels[i], z.labels[j]);
    return h;
}

namespace {

double log_sum_exp(std::span<const double> v)
{
    double m = -std::numeric_limits<double>::infinity();
    for (double x : v)
        m = std::max(m, x);
    if (!std::isfinite(m))
        return m;
    double s = 0.0;
    for (double x : v)
        s += std::exp(x - m);
    return m + std::log(s);
}

} // namespace

ExactSolution exact_oracle(const ObservedData& data, const HmrfParams& params,
                           const SpatialGraph& g)
{
    const std::size_t N = g.node_count();
    const std::size_t K = params.classes();
    if (data.size() != N)
        throw Error(ErrorCode::InvalidArgument, "data and graph sizes differ");
    const double configs = std::pow(static_cast<double>(K), static_cast<double>(N));
    if (configs > kExactEnumerationLimit)
        throw Error(ErrorCode::TooLarge, "K^N exceeds the exact enumeration bound");

    const std::size_t total = static_cast<std::size_t>(configs);
    const Eigen::MatrixXd B = materialize_B(params.interaction);
    const RowMatrix loglik = log_likelihood_table(data, params.lambda);
    const auto edges = g.edges();

    std::vector<double> neg_energy(total);
    std::vector<double> log_joint(total);
    std::vector<int> z(N, 0);
    for (std::size_t c = 0; c < total; ++c) {
        double e = 0.0;
        double l = 0.0;
        for (std::size_t i = 0; i < N; ++i) {
            e += params.alpha[z[i]];
            l += loglik(i, z[i]);
        }
        for (auto [i, j] : edges)
            e += B(z[i], z[j]);
        neg_energy[c] = e;
        log_joint[c] = e + l;
        // mixed-radix increment, node 0 fastest
        for (std::size_t i = 0; i < N; ++i) {
            if (++z[i] < static_cast<int>(K))
                break;
            z[i] = 0;
        }
    }

    ExactSolution out;
    out.log_W = log_sum_exp(neg_energy);
    const double log_joint_total = log_sum_exp(log_joint);
    out.log_evidence = log_joint_total - out.log_W;
    out.marginals = RowMatrix::Zero(N, K);
    std::fill(z.begin(), z.end(), 0);
    for (std::size_t c = 0; c < total; ++c) {
        const double w = std::exp(log_joint[c] - log_joint_total);
        for (std::size_t i = 0; i < N; ++i)
            out.marginals(i, z[i]) += w;
        for (std::size_t i = 0; i < N; ++i) {
            if (++z[i] < static_cast<int>(K))
                break;
            z[i] = 0;
        }
    }
    return out;
}

} // namespace riskmap
