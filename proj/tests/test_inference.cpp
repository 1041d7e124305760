#include "doctest.h"

#include <cmath>
#include <random>

#include "oracles.hpp"
#include "riskmap/errors.hpp"
#include "riskmap/inference.hpp"

using namespace riskmap;

namespace {

SpatialGraph cycle4()
{
    const std::vector<std::pair<std::size_t, std::size_t>> e{{0, 1}, {1, 2}, {2, 3}, {3, 0}};
    return SpatialGraph(4, e);
}

SpatialGraph no_edges(std::size_t n)
{
    return SpatialGraph(n, std::span<const std::pair<std::size_t, std::size_t>>{});
}

HmrfParams params3(InteractionKind kind, double b)
{
    return {{0.002, 0.01, 0.05}, {0.2, -0.4, 0.0}, {kind, b, 3, std::nullopt}};
}

PosteriorTable random_table(std::size_t N, std::size_t K, std::mt19937_64& rng)
{
    std::uniform_real_distribution<double> u(0.05, 1.0);
    PosteriorTable t(N, K);
    for (std::size_t i = 0; i < N; ++i) {
        double s = 0.0;
        for (std::size_t k = 0; k < K; ++k)
            s += t(i, k) = u(rng);
        t.row(i) /= s;
    }
    return t;
}

} // namespace

TEST_SUITE("inference")
{
    TEST_CASE("b = 0 mean field equals independent posteriors")
    {
        const SpatialGraph g = cycle4();
        const HmrfParams p = params3(InteractionKind::TriDiagonal, 0.0);
        const ObservedData d{{0, 3, 7, 1}, {200, 250, 180, 90}};
        std::mt19937_64 rng(5);
        const PosteriorTable warm = random_table(4, 3, rng);
        const PosteriorTable t = mean_field_estep(d, p, g, warm, FitOptions{});
        for (std::size_t i = 0; i < 4; ++i) {
            std::vector<double> l(3);
            for (std::size_t k = 0; k < 3; ++k)
                l[k] = p.alpha[k] + oracle::log_poisson(d.counts[i], static_cast<double>(d.populations[i]) * p.lambda[k]);
            const double z = oracle::logsumexp(l);
            for (std::size_t k = 0; k < 3; ++k)
                CHECK(t(i, k) == doctest::Approx(std::exp(l[k] - z)).epsilon(1e-13));
        }
        CHECK(is_row_stochastic(t));
    }

    TEST_CASE("mean field output is a fixed point")
    {
        const SpatialGraph g = build_hex_lattice(2, 2);
        const HmrfParams p = params3(InteractionKind::TriDiagonal, 1.5);
        const ObservedData d{{1, 2, 9, 0}, {300, 150, 200, 400}};
        FitOptions opts;
        opts.mf_max_sweeps = 500;
        opts.mf_tol = 1e-13;
        std::size_t sweeps = 0;
        const RowMatrix ll = log_likelihood_table(d, p.lambda);
        const PosteriorTable t = mean_field_estep(ll, p, g, independent_posteriors(ll, p.alpha), opts, &sweeps);
        CHECK(sweeps < 500);
        const Eigen::MatrixXd B = materialize_B(p.interaction);
        for (std::size_t i = 0; i < 4; ++i) {
            Eigen::VectorXd s = Eigen::VectorXd::Zero(3);
            for (std::size_t j : g.neighbors(i))
                s += t.row(static_cast<Eigen::Index>(j)).transpose();
            const Eigen::VectorXd f = B * s;
            std::vector<double> l(3);
            for (std::size_t k = 0; k < 3; ++k)
                l[k] = p.alpha[k] + f(static_cast<Eigen::Index>(k)) + ll(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(k));
            const double z = oracle::logsumexp(l);
            for (std::size_t k = 0; k < 3; ++k)
                CHECK(t(i, k) == doctest::Approx(std::exp(l[k] - z)).epsilon(1e-10));
        }
    }

    TEST_CASE("free energy never decreases across sweeps")
    {
        const SpatialGraph g = build_hex_lattice(4, 5);
        std::mt19937_64 rng(11);
        std::uniform_int_distribution<int> cases(0, 12);
        ObservedData d;
        for (std::size_t i = 0; i < 20; ++i) {
            d.counts.push_back(cases(rng));
            d.populations.push_back(500);
        }
        for (auto kind : {InteractionKind::StandardPotts, InteractionKind::TriDiagonal}) {
            const HmrfParams p = params3(kind, 2.0);
            const RowMatrix ll = log_likelihood_table(d, p.lambda);
            FitOptions one;
            one.mf_max_sweeps = 1;
            PosteriorTable t = random_table(20, 3, rng);
            double prev = mean_field_free_energy(ll, p, g, t);
            for (int s = 0; s < 30; ++s) {
                t = mean_field_estep(ll, p, g, t, one);
                const double now = mean_field_free_energy(ll, p, g, t);
                CHECK(now >= prev - 1e-10 * std::abs(prev));
                prev = now;
            }
        }
    }

    TEST_CASE("lambda update fixture")
    {
        const ObservedData d{{2, 0}, {100, 300}};
        PosteriorTable t(2, 2);
        t << 0.5, 0.5,
             0.25, 0.75;
        const LambdaUpdate u = mstep_lambda(t, d);
        CHECK(u.lambda[0] == doctest::Approx(1.0 / 125.0).epsilon(1e-14));
        CHECK(u.lambda[1] == doctest::Approx(1.0 / 275.0).epsilon(1e-14));
        // sum_k (w_k / n) lambda_k reproduces lambda_bar = 2 / 400
        CHECK(u.class_weight[0] / 400.0 * u.lambda[0] + u.class_weight[1] / 400.0 * u.lambda[1] ==
              doctest::Approx(0.005).epsilon(1e-14));
        CHECK(u.conservation_residual < 1e-14);
        CHECK(u.collapsed.empty());
    }

    TEST_CASE("lambda update flags and floors an empty class")
    {
        const ObservedData d{{2, 0}, {100, 300}};
        PosteriorTable t(2, 2);
        t << 1.0, 0.0,
             1.0, 0.0;
        const LambdaUpdate u = mstep_lambda(t, d);
        CHECK(u.lambda[1] == kLambdaFloor);
        REQUIRE(u.collapsed.size() == 1);
        CHECK(u.collapsed[0] == 1);
        CHECK(u.conservation_residual < 1e-14);
    }

    TEST_CASE("alpha step without edges is the multinomial logit")
    {
        const SpatialGraph g = no_edges(6);
        std::mt19937_64 rng(3);
        const PosteriorTable t = random_table(6, 3, rng);
        HmrfParams p = params3(InteractionKind::TriDiagonal, 1.0);
        const BetaUpdate u = mstep_beta(t, g, p, 0.0);
        const Eigen::VectorXd pi = t.colwise().mean().transpose();
        for (std::size_t k = 0; k < 3; ++k)
            CHECK(u.alpha[k] == doctest::Approx(std::log(pi(static_cast<Eigen::Index>(k)) / pi(2))).epsilon(1e-9));
        CHECK(u.alpha[2] == 0.0);
        CHECK(u.b == 0.0);
    }

    TEST_CASE("fixed b is returned exactly and free b stays in bounds")
    {
        const SpatialGraph g = build_hex_lattice(4, 4);
        std::mt19937_64 rng(9);
        const PosteriorTable t = random_table(16, 3, rng);
        HmrfParams p = params3(InteractionKind::StandardPotts, 0.3);
        CHECK(mstep_beta(t, g, p, 1.0).b == 1.0);
        const BetaUpdate free = mstep_beta(t, g, p, std::nullopt);
        CHECK(free.b >= 0.0);
        CHECK(free.b <= FitOptions{}.b_max);
        const BetaSurrogate s(t, g, p.interaction.kind);
        CHECK(s.value(free.alpha, free.b) >= s.value(p.alpha, p.interaction.b) - 1e-12);
    }

    TEST_CASE("surrogate gradient matches central differences")
    {
        const SpatialGraph g = cycle4();
        std::mt19937_64 rng(21);
        std::uniform_real_distribution<double> u(-1.0, 1.0);
        for (auto kind : {InteractionKind::StandardPotts, InteractionKind::TriDiagonal, InteractionKind::SmoothGradation}) {
            const PosteriorTable t = random_table(4, 3, rng);
            const BetaSurrogate s(t, g, kind);
            std::vector<double> alpha{u(rng), u(rng), 0.0};
            const double b = 1.0 + u(rng);
            const auto grad = s.gradient(alpha, b);
            const double h = 1e-6;
            for (std::size_t c = 0; c < 4; ++c) {
                auto shifted = [&](double d) {
                    std::vector<double> a = alpha;
                    double bb = b;
                    (c < 3 ? a[c] : bb) += d;
                    return s.value(a, bb);
                };
                const double fd = (shifted(h) - shifted(-h)) / (2 * h);
                CHECK(grad[c] == doctest::Approx(fd).epsilon(1e-6));
            }
        }
    }

    TEST_CASE("mpm ties go to the lowest class")
    {
        PosteriorTable t(2, 3);
        t << 0.4, 0.4, 0.2,
             0.1, 0.45, 0.45;
        const LabelMap z = mpm_labels(t);
        CHECK(z.labels == std::vector<int>{0, 1});
        CHECK(z.classes == 3);
    }

    TEST_CASE("one class recovers the average risk")
    {
        const SpatialGraph g = build_hex_lattice(2, 3);
        const ObservedData d{{1, 0, 4, 2, 0, 3}, {100, 200, 300, 100, 50, 250}};
        HmrfParams init{{0.5}, {0.0}, {InteractionKind::TriDiagonal, 1.0, 1, std::nullopt}};
        const FitResult fit = vem_fit(d, g, init, FitOptions{});
        CHECK(fit.params.lambda[0] == doctest::Approx(10.0 / 1000.0).epsilon(1e-13));
        for (int z : fit.labels.labels)
            CHECK(z == 0);
    }

    TEST_CASE("single node, single class")
    {
        const SpatialGraph g = no_edges(1);
        const ObservedData d{{7}, {1000}};
        HmrfParams init{{1.0}, {0.0}, {InteractionKind::StandardPotts, 1.0, 1, std::nullopt}};
        const FitResult fit = vem_fit(d, g, init, FitOptions{});
        CHECK(fit.params.lambda[0] == doctest::Approx(0.007).epsilon(1e-14));
        CHECK(fit.labels.labels[0] == 0);
    }

    TEST_CASE("b fixed at zero reproduces an independent Poisson mixture EM")
    {
        const SpatialGraph g = build_hex_lattice(4, 4);
        std::mt19937_64 rng(17);
        std::uniform_int_distribution<std::int64_t> pop(50, 5000);
        ObservedData d;
        const double truth[3] = {1e-3, 5e-3, 2e-2};
        for (std::size_t i = 0; i < 16; ++i) {
            d.populations.push_back(pop(rng));
            std::poisson_distribution<std::int64_t> y(static_cast<double>(d.populations.back()) * truth[i % 3]);
            d.counts.push_back(y(rng));
        }
        const std::vector<double> lambda0{0.002, 0.004, 0.03};
        const std::vector<double> alpha0{0.3, -0.2, 0.0};
        const int iterations = 15;

        FitOptions opts;
        opts.fix_b = 0.0;
        opts.max_em_iters = iterations;
        opts.em_rel_tol = -1.0;
        const FitResult fit = vem_fit(d, g, {lambda0, alpha0, {InteractionKind::TriDiagonal, 0.0, 3, std::nullopt}}, opts);
        REQUIRE(fit.iterations == static_cast<std::size_t>(iterations));

        std::vector<double> pi0(3);
        const double z = std::exp(0.3) + std::exp(-0.2) + 1.0;
        pi0 = {std::exp(0.3) / z, std::exp(-0.2) / z, 1.0 / z};
        const auto ref = oracle::poisson_mixture_em(d.counts, d.populations, lambda0, pi0, iterations);
        for (std::size_t k = 0; k < 3; ++k) {
            CHECK(fit.params.lambda[k] == doctest::Approx(ref.lambda[k]).epsilon(1e-9));
            CHECK(fit.params.alpha[k] == doctest::Approx(std::log(ref.pi[k] / ref.pi[2])).epsilon(1e-8));
        }
        for (std::size_t i = 0; i < 16; ++i)
            for (std::size_t k = 0; k < 3; ++k)
                CHECK(fit.posteriors(i, k) == doctest::Approx(ref.t[i][k]).epsilon(1e-9));
        CHECK(fit.params.interaction.b == 0.0);
    }

    TEST_CASE("risks stay sorted and the conservation identity holds")
    {
        const SpatialGraph g = build_hex_lattice(5, 5);
        std::mt19937_64 rng(2);
        ObservedData d;
        for (std::size_t i = 0; i < 25; ++i) {
            d.populations.push_back(1000);
            std::poisson_distribution<std::int64_t> y(i < 12 ? 1.0 : 8.0);
            d.counts.push_back(y(rng));
        }
        // deliberately unsorted start
        const FitResult fit = vem_fit(d, g, {{0.01, 0.001}, {0.0, 0.0}, {InteractionKind::StandardPotts, 0.5, 2, std::nullopt}}, FitOptions{});
        CHECK(fit.params.lambda[0] <= fit.params.lambda[1]);
        CHECK(fit.params.alpha.back() == 0.0);
        for (double r : fit.conservation_trace)
            CHECK(r < 1e-10);
        CHECK(fit.ll_trace.size() == fit.iterations);
        CHECK(is_row_stochastic(fit.posteriors));
    }

    TEST_CASE("BIC penalises parameters and rewards likelihood")
    {
        CHECK(free_parameter_count(1) == 2);
        CHECK(free_parameter_count(3) == 6);
        FitResult a;
        a.params.lambda = {1.0, 2.0};
        a.loglik = -100.0;
        FitResult b = a;
        b.loglik = -90.0;
        CHECK(bic(b, 50) > bic(a, 50));
        CHECK(bic(a, 50) == doctest::Approx(2 * -100.0 - 4 * std::log(50.0)));
        FitResult c = a;
        c.params.lambda = {1.0, 2.0, 3.0};
        CHECK(bic(c, 50) < bic(a, 50));
    }

    TEST_CASE("mismatched shapes are rejected")
    {
        const SpatialGraph g = cycle4();
        const ObservedData d{{1, 2, 3}, {10, 10, 10}};
        HmrfParams p = params3(InteractionKind::TriDiagonal, 1.0);
        CHECK_THROWS_AS(vem_fit(d, g, p, FitOptions{}), Error);
        const ObservedData ok{{1, 2, 3, 4}, {10, 10, 10, 10}};
        PosteriorTable warm(3, 3);
        CHECK_THROWS_AS(mean_field_estep(ok, p, g, warm, FitOptions{}), Error);
    }
}
