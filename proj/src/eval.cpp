#include "riskmap/eval.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "riskmap/errors.hpp"

namespace riskmap {

namespace {

std::vector<std::size_t> rank_order(const std::vector<double>& v)
{
    std::vector<std::size_t> order(v.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
    return order;
}

} // namespace

std::vector<std::size_t> align_classes(const std::vector<double>& estimated_lambda,
                                       const std::vector<double>& true_lambda)
{
    if (estimated_lambda.size() != true_lambda.size())
        throw Error(ErrorCode::InvalidArgument, "class counts differ");
    const auto est = rank_order(estimated_lambda);
    const auto tru = rank_order(true_lambda);
    std::vector<std::size_t> perm(est.size());
    for (std::size_t r = 0; r < est.size(); ++r)
        perm[est[r]] = tru[r];
    return perm;
}

double dice(const LabelMap& pred, const LabelMap& truth, int k)
{
    if (pred.size() != truth.size())
        throw Error(ErrorCode::InvalidArgument, "label maps differ in length");
    std::size_t tp = 0, fp = 0, fn = 0;
    for (std::size_t i = 0; i < pred.size(); ++i) {
        const bool p = pred.labels[i] == k;
        const bool t = truth.labels[i] == k;
        tp += p && t;
        fp += p && !t;
        fn += !p && t;
    }
    if (tp + fp + fn == 0)
        return 1.0;
    return 2.0 * static_cast<double>(tp) / static_cast<double>(2 * tp + fp + fn);
}

EvalReport evaluate(const LabelMap& predicted, const std::vector<double>& estimated_lambda,
                    const std::vector<int>& collapsed_classes, const LabelMap& truth,
                    const std::vector<double>& true_lambda)
{
    const std::size_t K = true_lambda.size();
    if (predicted.size() != truth.size())
        throw Error(ErrorCode::InvalidArgument, "label maps differ in length");

    EvalReport rep;
    rep.alignment = align_classes(estimated_lambda, true_lambda);
    rep.true_class_of_rank = rank_order(true_lambda);
    std::vector<std::size_t> rank_of_true(K);
    for (std::size_t r = 0; r < K; ++r)
        rank_of_true[rep.true_class_of_rank[r]] = r;

    LabelMap mapped;
    mapped.classes = K;
    mapped.labels.resize(predicted.size());
    for (std::size_t i = 0; i < predicted.size(); ++i)
        mapped.labels[i] = static_cast<int>(rep.alignment[static_cast<std::size_t>(predicted.labels[i])]);

    std::vector<std::size_t> est_of_true(K);
    for (std::size_t e = 0; e < K; ++e)
        est_of_true[rep.alignment[e]] = e;

    rep.confusion.assign(K, std::vector<std::int64_t>(K, 0));
    for (std::size_t i = 0; i < truth.size(); ++i)
        ++rep.confusion[rank_of_true[static_cast<std::size_t>(truth.labels[i])]]
                       [rank_of_true[static_cast<std::size_t>(mapped.labels[i])]];

    for (std::size_t r = 0; r < K; ++r) {
        const std::size_t k = rep.true_class_of_rank[r];
        const std::size_t e = est_of_true[k];
        rep.dsc.push_back(dice(mapped, truth, static_cast<int>(k)));
        rep.estimated_lambda.push_back(estimated_lambda[e]);
        rep.true_lambda.push_back(true_lambda[k]);
        std::int64_t predicted_count = 0, true_count = 0;
        for (std::size_t c = 0; c < K; ++c) {
            predicted_count += rep.confusion[c][r];
            true_count += rep.confusion[r][c];
        }
        rep.vacuous.push_back(predicted_count == 0 && true_count == 0);
        const bool flagged = std::find(collapsed_classes.begin(), collapsed_classes.end(),
                                       static_cast<int>(e)) != collapsed_classes.end();
        rep.collapsed.push_back(flagged || predicted_count == 0);
    }
    return rep;
}

double mean(const std::vector<double>& v)
{
    if (v.empty())
        return 0.0;
    return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

double sample_sd(const std::vector<double>& v)
{
    if (v.size() < 2)
        return 0.0;
    const double m = mean(v);
    double ss = 0.0;
    for (double x : v)
        ss += (x - m) * (x - m);
    return std::sqrt(ss / static_cast<double>(v.size() - 1));
}

StudyResult replicate_study(const ScenarioGenerator& generator, std::size_t classes,
                            const StrategySpec& strategy, const FitOptions& opts, std::size_t replicates,
                            std::uint64_t study_seed, std::size_t threads)
{
    std::vector<std::uint64_t> seeds(replicates);
    for (std::size_t r = 0; r < replicates; ++r)
        seeds[r] = derive_seed(study_seed, r);
    return replicate_study(generator, classes, strategy, opts, seeds, threads);
}

StudyResult replicate_study(const ScenarioGenerator& generator, std::size_t classes,
                            const StrategySpec& strategy, const FitOptions& opts,
                            const std::vector<std::uint64_t>& replicate_seeds, std::size_t threads)
{
    const std::size_t R = replicate_seeds.size();
    if (R < 2)
        throw Error(ErrorCode::InvalidArgument, "a replicate study needs at least two replicates");

    StudyResult study;
    study.rows.resize(R);
    std::vector<std::vector<double>> truths(R);

    const std::size_t outer = std::min(std::max<std::size_t>(threads, 1), R);
    StrategySpec inner = strategy;
    inner.threads = outer > 1 ? 1 : std::max<std::size_t>(threads, 1);

    parallel_for(R, outer, [&](std::size_t r) {
        auto& row = study.rows[r];
        row.replicate = r;
        row.seed = replicate_seeds[r];
        try {
            const Scenario scenario = generator(row.seed);
            Rng count_rng(derive_seed(row.seed, 1));
            const ObservedData data = sample_counts(scenario, count_rng);
            StrategySpec s = inner;
            s.seed = derive_seed(row.seed, 2);
            const SearchResult search = search_run_select(data, scenario.graph, classes, s, opts);
            const FitResult& fit = search.best;
            const EvalReport rep = evaluate(fit.labels, fit.params.lambda, fit.collapsed_classes,
                                            scenario.true_labels, scenario.true_lambda);
            row.dsc = rep.dsc;
            row.estimated_lambda = rep.estimated_lambda;
            row.b = fit.params.interaction.b;
            row.loglik = fit.loglik;
            truths[r] = rep.true_lambda;
        } catch (const std::exception& e) {
            row.failed = true;
            row.error = e.what();
        }
    });

    std::vector<std::vector<double>> dsc(classes), lam(classes);
    for (std::size_t r = 0; r < R; ++r) {
        const auto& row = study.rows[r];
        if (row.failed) {
            ++study.failures;
            continue;
        }
        if (study.true_lambda.empty())
            study.true_lambda = truths[r];
        for (std::size_t k = 0; k < classes && k < row.dsc.size(); ++k) {
            dsc[k].push_back(row.dsc[k]);
            lam[k].push_back(row.estimated_lambda[k]);
        }
    }
    study.summary.resize(classes);
    for (std::size_t k = 0; k < classes; ++k)
        study.summary[k] = {mean(dsc[k]), sample_sd(dsc[k]), mean(lam[k]), sample_sd(lam[k])};
    return study;
}

} // namespace riskmap
