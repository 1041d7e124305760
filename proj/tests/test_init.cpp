#include "doctest.h"

#include <algorithm>
#include <cmath>
#include <set>

#include "riskmap/errors.hpp"
#include "riskmap/init.hpp"
#include "riskmap/simulate.hpp"

using namespace riskmap;

namespace {

ObservedData small_data()
{
    return {{0, 3, 1, 12, 2, 0, 5, 9}, {400, 800, 150, 900, 1000, 50, 700, 300}};
}

struct Fixture {
    SpatialGraph g;
    ObservedData d;
};

Fixture lattice_fixture(std::uint64_t seed)
{
    Fixture f{build_hex_lattice(6, 6), {}};
    Rng rng(seed);
    const Scenario s = make_blob_scenario(f.g, 2, {1e-3, 1e-2}, 100, 2000, 1, rng);
    f.d = sample_counts(s, rng);
    return f;
}

} // namespace

TEST_SUITE("init")
{
    TEST_CASE("average risk")
    {
        CHECK(average_risk(small_data()) == doctest::Approx(32.0 / 4300.0).epsilon(1e-15));
        const ObservedData empty{{0, 0}, {0, 0}};
        try {
            (void)average_risk(empty);
            FAIL("expected EmptyPopulation");
        } catch (const Error& e) {
            CHECK(e.code() == ErrorCode::EmptyPopulation);
        }
    }

    TEST_CASE("trajectory draws satisfy the average-risk identity")
    {
        const ObservedData d = small_data();
        const double lbar = average_risk(d);
        Rng rng(99);
        for (std::size_t K = 2; K <= 5; ++K)
            for (int rep = 0; rep < 200; ++rep) {
                const InitDraw draw = draw_tra(d, K, rng);
                REQUIRE(draw.lambda0.size() == K);
                double s = 0.0, shares = 0.0;
                for (std::size_t k = 0; k < K; ++k) {
                    s += draw.n0[k] * draw.lambda0[k];
                    shares += draw.n0[k];
                    CHECK(draw.lambda0[k] > 0.0);
                    CHECK(draw.n0[k] > 0.0);
                }
                CHECK(std::abs(s - lbar) <= 1e-12 * lbar);
                CHECK(shares == doctest::Approx(1.0).epsilon(1e-14));
                CHECK(std::is_sorted(draw.lambda0.begin(), draw.lambda0.end()));
            }
    }

    TEST_CASE("trajectory draws use distinct observed ratios")
    {
        // all ratios distinct, so K - 1 of the risks must be distinct pool members
        const ObservedData d = small_data();
        std::set<double> pool;
        for (std::size_t i = 0; i < d.size(); ++i)
            pool.insert(std::max(static_cast<double>(d.counts[i]) / static_cast<double>(d.populations[i]), kLambdaFloor));
        Rng rng(4);
        for (int rep = 0; rep < 100; ++rep) {
            const InitDraw draw = draw_tra(d, 4, rng);
            int from_pool = 0;
            for (double l : draw.lambda0)
                from_pool += pool.count(l) ? 1 : 0;
            CHECK(from_pool >= 3);
        }
    }

    TEST_CASE("trajectory draws are reproducible")
    {
        Rng a(123), b(123);
        for (int rep = 0; rep < 20; ++rep) {
            const InitDraw x = draw_tra(small_data(), 3, a);
            const InitDraw y = draw_tra(small_data(), 3, b);
            CHECK(x.lambda0 == y.lambda0);
            CHECK(x.n0 == y.n0);
        }
    }

    TEST_CASE("one class gets the average risk")
    {
        Rng rng(1);
        const InitDraw draw = draw_tra(small_data(), 1, rng);
        CHECK(draw.lambda0 == std::vector<double>{32.0 / 4300.0});
    }

    TEST_CASE("hopeless trajectory draws exhaust the rejection budget")
    {
        // lambda_bar is ~1e-9 while every pool pair contains the ratio 1
        const ObservedData d{{0, 1}, {1000000000, 1}};
        Rng rng(8);
        try {
            (void)draw_tra(d, 3, rng, 50);
            FAIL("expected RejectionExhausted");
        } catch (const Error& e) {
            CHECK(e.code() == ErrorCode::RejectionExhausted);
        }
    }

    TEST_CASE("random draws lie in (0, upper] and are sorted")
    {
        Rng rng(6);
        for (int rep = 0; rep < 200; ++rep) {
            const InitDraw draw = draw_rand(small_data(), 4, rng, 1.5);
            CHECK(std::is_sorted(draw.lambda0.begin(), draw.lambda0.end()));
            for (double l : draw.lambda0) {
                CHECK(l > 0.0);
                CHECK(l <= 1.5);
            }
        }
        CHECK_THROWS_AS(draw_rand(small_data(), 2, rng, 0.0), Error);
    }

    TEST_CASE("strategy names round-trip")
    {
        for (auto k : {StrategyKind::Tra, StrategyKind::Rand, StrategyKind::Emm})
            CHECK(parse_strategy_kind(to_string(k)) == k);
        CHECK_THROWS_AS(parse_strategy_kind("best"), Error);
    }

    TEST_CASE("single restart runs the fixed-b phase at b = 1")
    {
        const Fixture f = lattice_fixture(31);
        StrategySpec s;
        s.restarts = 1;
        s.seed = 5;
        const SearchResult r = search_run_select(f.d, f.g, 2, s, FitOptions{});
        REQUIRE(r.restarts.size() == 1);
        CHECK(r.best_restart == 0);
        CHECK_FALSE(r.restarts[0].phase1_b_trace.empty());
        for (double b : r.restarts[0].phase1_b_trace)
            CHECK(b == 1.0);
        CHECK(r.best.loglik == r.restarts[0].final_loglik);
    }

    TEST_CASE("the selected restart has the highest final log-likelihood")
    {
        const Fixture f = lattice_fixture(32);
        for (auto kind : {StrategyKind::Tra, StrategyKind::Rand, StrategyKind::Emm}) {
            StrategySpec s;
            s.kind = kind;
            s.restarts = 4;
            s.seed = 77;
            s.rand_upper = 0.02;
            const SearchResult r = search_run_select(f.d, f.g, 2, s, FitOptions{});
            CHECK(r.failures == 0);
            double best = -INFINITY;
            for (const auto& rec : r.restarts)
                if (!rec.failed)
                    best = std::max(best, rec.final_loglik);
            CHECK(r.best.loglik == best);
            CHECK(r.restarts[r.best_restart].final_loglik == best);
            for (std::size_t i = 0; i < r.best_restart; ++i)
                CHECK(r.restarts[i].final_loglik < best);
        }
    }

    TEST_CASE("search is reproducible and independent of the worker count")
    {
        const Fixture f = lattice_fixture(33);
        StrategySpec s;
        s.restarts = 3;
        s.seed = 2024;
        const SearchResult a = search_run_select(f.d, f.g, 2, s, FitOptions{});
        s.threads = 3;
        const SearchResult b = search_run_select(f.d, f.g, 2, s, FitOptions{});
        CHECK(a.best_restart == b.best_restart);
        CHECK(a.best.params.lambda == b.best.params.lambda);
        CHECK(a.best.ll_trace == b.best.ll_trace);
    }

    TEST_CASE("a user-fixed b holds throughout")
    {
        const Fixture f = lattice_fixture(34);
        StrategySpec s;
        s.restarts = 2;
        FitOptions opts;
        opts.fix_b = 0.0;
        const SearchResult r = search_run_select(f.d, f.g, 2, s, opts);
        CHECK(r.best.params.interaction.b == 0.0);
        for (double b : r.best.b_trace)
            CHECK(b == 0.0);
    }

    TEST_CASE("class selection over a single K picks it")
    {
        const Fixture f = lattice_fixture(35);
        StrategySpec s;
        s.restarts = 2;
        const KSelection sel = select_classes(f.d, f.g, 2, 2, s, FitOptions{});
        REQUIRE(sel.chosen.has_value());
        CHECK(*sel.chosen == 2);
        CHECK(sel.rows.size() == 1);
        CHECK_THROWS_AS(select_classes(f.d, f.g, 3, 2, s, FitOptions{}), Error);
    }

    TEST_CASE("class selection picks the best BIC")
    {
        const Fixture f = lattice_fixture(36);
        StrategySpec s;
        s.restarts = 2;
        const KSelection sel = select_classes(f.d, f.g, 1, 3, s, FitOptions{});
        REQUIRE(sel.chosen.has_value());
        double best = -INFINITY;
        for (const auto& row : sel.rows)
            if (row.ok)
                best = std::max(best, row.bic);
        for (const auto& row : sel.rows)
            if (row.classes == *sel.chosen)
                CHECK(row.bic == best);
    }
}
