#include "riskmap/init.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "riskmap/errors.hpp"

namespace riskmap {

const char* to_string(StrategyKind kind)
{
    switch (kind) {
    case StrategyKind::Tra: return "tra";
    case StrategyKind::Rand: return "rand";
    case StrategyKind::Emm: return "emm";
    }
    return "unknown";
}

StrategyKind parse_strategy_kind(const std::string& name)
{
    if (name == "tra") return StrategyKind::Tra;
    if (name == "rand") return StrategyKind::Rand;
    if (name == "emm") return StrategyKind::Emm;
    throw Error(ErrorCode::InvalidArgument, "unknown strategy '" + name + "'");
}

double average_risk(const ObservedData& data)
{
    const double n = data.total_population();
    if (n <= 0.0)
        throw Error(ErrorCode::EmptyPopulation, "total population is zero");
    return data.total_counts() / n;
}

InitDraw draw_tra(const ObservedData& data, std::size_t classes, Rng& rng, std::size_t max_rejects)
{
    if (classes == 0)
        throw Error(ErrorCode::InvalidArgument, "at least one class is required");
    const double lambda_bar = average_risk(data);

    InitDraw draw;
    draw.alpha0.assign(classes, 0.0);
    draw.b0 = 1.0;
    if (classes == 1) {
        draw.n0 = {1.0};
        draw.lambda0 = {std::max(lambda_bar, kLambdaFloor)};
        return draw;
    }

    std::vector<double> pool;
    pool.reserve(data.size());
    for (std::size_t i = 0; i < data.size(); ++i)
        if (data.populations[i] > 0)
            pool.push_back(std::max(static_cast<double>(data.counts[i]) / static_cast<double>(data.populations[i]),
                                    kLambdaFloor));
    if (pool.size() < classes - 1)
        throw Error(ErrorCode::InvalidArgument, "too few populated units to draw " + std::to_string(classes) + " risks");

    std::exponential_distribution<double> gamma1(1.0);
    std::uniform_int_distribution<std::size_t> pick_class(0, classes - 1);
    std::vector<std::size_t> chosen;
    chosen.reserve(classes - 1);
    for (std::size_t attempt = 0; attempt < max_rejects; ++attempt) {
        // Step 1: uniform point on the simplex
        std::vector<double> n0(classes);
        double total = 0.0;
        for (double& v : n0) {
            v = gamma1(rng);
            total += v;
        }
        for (double& v : n0)
            v /= total;

        // Step 2: distinct pool entries for every class but `solved`
        const std::size_t solved = pick_class(rng);
        chosen.clear();
        std::uniform_int_distribution<std::size_t> pick(0, pool.size() - 1);
        while (chosen.size() < classes - 1) {
            const std::size_t idx = pick(rng);
            if (std::find(chosen.begin(), chosen.end(), idx) == chosen.end())
                chosen.push_back(idx);
        }
        std::vector<double> lambda(classes, 0.0);
        double partial = 0.0;
        for (std::size_t k = 0, c = 0; k < classes; ++k) {
            if (k == solved)
                continue;
            lambda[k] = pool[chosen[c++]];
            partial += n0[k] * lambda[k];
        }
        lambda[solved] = (lambda_bar - partial) / n0[solved];
        if (!(lambda[solved] > 0.0)) {
            ++draw.rejected;
            continue;
        }

        std::vector<std::size_t> order(classes);
        for (std::size_t k = 0; k < classes; ++k)
            order[k] = k;
        std::stable_sort(order.begin(), order.end(),
                         [&](std::size_t a, std::size_t b) { return lambda[a] < lambda[b]; });
        draw.lambda0.resize(classes);
        draw.n0.resize(classes);
        for (std::size_t k = 0; k < classes; ++k) {
            draw.lambda0[k] = lambda[order[k]];
            draw.n0[k] = n0[order[k]];
        }
        return draw;
    }
    throw Error(ErrorCode::RejectionExhausted,
                "trajectory draw rejected " + std::to_string(max_rejects) + " times in a row");
}

InitDraw draw_rand(const ObservedData&, std::size_t classes, Rng& rng, double upper)
{
    if (!(upper > 0.0))
        throw Error(ErrorCode::InvalidArgument, "random risk upper bound must be positive");
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    InitDraw draw;
    draw.lambda0.resize(classes);
    for (double& l : draw.lambda0)
        l = upper * (1.0 - unit(rng)); // (0, upper]
    std::sort(draw.lambda0.begin(), draw.lambda0.end());
    draw.alpha0.assign(classes, 0.0);
    draw.b0 = 1.0;
    return draw;
}

namespace {

HmrfParams params_from(const InitDraw& draw, InteractionKind kind, double b)
{
    HmrfParams p;
    p.lambda = draw.lambda0;
    p.alpha = draw.alpha0;
    p.interaction.kind = kind;
    p.interaction.classes = draw.lambda0.size();
    p.interaction.b = b;
    return p;
}

// Ties keep the earlier index.
std::size_t select_best(const std::vector<RestartRecord>& records)
{
    std::size_t best = records.size();
    for (std::size_t r = 0; r < records.size(); ++r) {
        if (records[r].failed)
            continue;
        if (best == records.size() || records[r].final_loglik > records[best].final_loglik)
            best = r;
    }
    return best;
}

} // namespace

SearchResult search_run_select(const ObservedData& data, const SpatialGraph& g, std::size_t classes,
                               const StrategySpec& strategy, const FitOptions& opts)
{
    if (strategy.restarts == 0)
        throw Error(ErrorCode::InvalidArgument, "at least one restart is required");
    if (classes == 0)
        throw Error(ErrorCode::InvalidArgument, "at least one class is required");

    const std::size_t M = strategy.restarts;
    SearchResult result;
    result.restarts.resize(M);
    std::vector<FitResult> fits(M);

    auto draw_for = [&](Rng& rng) {
        if (strategy.kind == StrategyKind::Tra)
            return draw_tra(data, classes, rng, strategy.max_rejects);
        return draw_rand(data, classes, rng, strategy.rand_upper);
    };

    auto run_restart = [&](std::size_t r) {
        auto& rec = result.restarts[r];
        try {
            Rng rng(derive_seed(strategy.seed, r));
            InitDraw draw = draw_for(rng);
            rec.rejected_draws = draw.rejected;

            if (strategy.kind == StrategyKind::Emm) {
                // nonspatial EM; the spatial phase runs after selection
                FitOptions phase1 = opts;
                phase1.fix_b = 0.0;
                fits[r] = vem_fit(data, g, params_from(draw, strategy.interaction, 0.0), phase1);
                rec.phase1_loglik = fits[r].loglik;
                rec.phase1_b_trace = fits[r].b_trace;
            } else if (opts.fix_b) {
                fits[r] = vem_fit(data, g, params_from(draw, strategy.interaction, *opts.fix_b), opts);
            } else if (strategy.search2) {
                FitOptions phase1 = opts;
                phase1.fix_b = draw.b0;
                FitResult first = vem_fit(data, g, params_from(draw, strategy.interaction, draw.b0), phase1);
                rec.phase1_loglik = first.loglik;
                rec.phase1_b_trace = first.b_trace;
                fits[r] = vem_fit(data, g, first.params, opts, &first.posteriors);
            } else {
                fits[r] = vem_fit(data, g, params_from(draw, strategy.interaction, draw.b0), opts);
            }
            rec.final_loglik = fits[r].loglik;
        } catch (const Error& e) {
            rec.failed = true;
            rec.error = e.what();
        }
    };
    parallel_for(M, strategy.threads, run_restart);

    for (const auto& rec : result.restarts)
        result.failures += rec.failed ? 1 : 0;
    std::size_t best = select_best(result.restarts);
    if (best == M)
        throw Error(ErrorCode::AllRestartsFailed, "all " + std::to_string(M) + " restarts failed");

    if (strategy.kind == StrategyKind::Emm) {
        const FitResult& seed_fit = fits[best];
        HmrfParams start = seed_fit.params;
        FitResult spatial = vem_fit(data, g, start, opts, &seed_fit.posteriors);
        result.restarts[best].final_loglik = spatial.loglik;
        result.best = std::move(spatial);
    } else {
        result.best = std::move(fits[best]);
    }
    result.best_restart = best;
    return result;
}

KSelection select_classes(const ObservedData& data, const SpatialGraph& g, std::size_t k_min,
                          std::size_t k_max, const StrategySpec& strategy, const FitOptions& opts)
{
    if (k_min == 0 || k_min > k_max)
        throw Error(ErrorCode::InvalidArgument, "need 1 <= k_min <= k_max");
    const std::size_t count = k_max - k_min + 1;
    KSelection sel;
    sel.rows.resize(count);
    sel.fits.resize(count);

    // outer parallelism over K; each search then runs its restarts serially
    const std::size_t outer = std::min(strategy.threads, count);
    StrategySpec inner = strategy;
    inner.threads = outer > 1 ? 1 : strategy.threads;

    parallel_for(count, outer, [&](std::size_t idx) {
        auto& row = sel.rows[idx];
        row.classes = k_min + idx;
        try {
            sel.fits[idx] = search_run_select(data, g, row.classes, inner, opts);
            row.ok = true;
            row.loglik = sel.fits[idx].best.loglik;
            row.bic = sel.fits[idx].best.bic;
        } catch (const Error& e) {
            row.error = e.what();
        }
    });

    for (std::size_t idx = 0; idx < count; ++idx) {
        const auto& row = sel.rows[idx];
        if (row.ok && (!sel.chosen || row.bic > sel.rows[*sel.chosen - k_min].bic))
            sel.chosen = row.classes;
    }
    return sel;
}

} // namespace riskmap
