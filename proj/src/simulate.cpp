#include "riskmap/simulate.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <limits>
#include <numeric>
#include <optional>

#include "riskmap/errors.hpp"

namespace riskmap {

std::vector<std::int64_t> log_uniform_populations(std::size_t count, std::int64_t lo, std::int64_t hi, Rng& rng)
{
    if (lo < 1 || hi < lo)
        throw Error(ErrorCode::InvalidArgument, "population range must satisfy 1 <= lo <= hi");
    std::uniform_real_distribution<double> u(std::log(static_cast<double>(lo)), std::log(static_cast<double>(hi)));
    std::vector<std::int64_t> pops(count);
    for (auto& n : pops)
        n = std::clamp(static_cast<std::int64_t>(std::llround(std::exp(u(rng)))), lo, hi);
    return pops;
}

BlobScenario make_blob_scenario_detailed(const SpatialGraph& g, std::size_t classes,
                                         const std::vector<double>& lambda, std::int64_t pop_lo,
                                         std::int64_t pop_hi, std::size_t seeds_per_class, Rng& rng,
                                         BlobGrowth growth)
{
    const std::size_t N = g.node_count();
    if (classes == 0 || lambda.size() != classes)
        throw Error(ErrorCode::InvalidArgument, "need one risk level per class");
    for (double l : lambda)
        if (!std::isfinite(l) || l < 0.0)
            throw Error(ErrorCode::InvalidArgument, "risk levels must be finite and non-negative");
    if (seeds_per_class == 0)
        throw Error(ErrorCode::InvalidArgument, "need at least one seed per class");
    const std::size_t blobs = classes * seeds_per_class;
    if (blobs > N)
        throw Error(ErrorCode::InvalidArgument, "more seeds than nodes");


    BlobScenario out;
    out.blob_of_node.assign(N, -1);
    out.blob_class.resize(blobs);
    std::vector<std::deque<std::size_t>> frontier(blobs);
    std::vector<std::size_t> class_size(classes, 0);
    std::vector<std::size_t> next_blob(classes, 0); // round-robin cursor per class

    auto claim = [&](std::size_t node, std::size_t blob) {
        out.blob_of_node[node] = static_cast<int>(blob);
        ++class_size[out.blob_class[blob]];
        for (std::size_t j : g.neighbors(node))
            if (out.blob_of_node[j] < 0)
                frontier[blob].push_back(j);
    };

    auto class_of = [&](std::size_t v) { return out.blob_class[static_cast<std::size_t>(out.blob_of_node[v])]; };
    auto admissible = [&](std::size_t v, int k) {
        if (growth == BlobGrowth::Free)
            return true;
        for (std::size_t j : g.neighbors(v))
            if (out.blob_of_node[j] >= 0 && std::abs(class_of(j) - k) > 1)
                return false;
        return true;
    };
    // distinct seed nodes by partial Fisher-Yates, skipping nodes the growth
    // rule forbids for the seed's class
    std::vector<std::size_t> nodes(N);
    std::iota(nodes.begin(), nodes.end(), 0);
    std::size_t taken = 0;
    for (std::size_t s = 0; s < blobs; ++s) {
        out.blob_class[s] = static_cast<int>(s % classes);
        bool placed = false;
        while (!placed && taken < N) {
            std::uniform_int_distribution<std::size_t> pick(taken, N - 1);
            std::swap(nodes[taken], nodes[pick(rng)]);
            const std::size_t v = nodes[taken++];
            if (admissible(v, out.blob_class[s])) {
                claim(v, s);
                placed = true;
            }
        }
        if (!placed)
            throw Error(ErrorCode::InvalidArgument, "cannot place all region seeds");
    }

    auto pop_free = [&](std::size_t blob) -> std::optional<std::size_t> {
        auto& q = frontier[blob];
        while (!q.empty()) {
            const std::size_t v = q.front();
            q.pop_front();
            if (out.blob_of_node[v] < 0 && admissible(v, out.blob_class[blob]))
                return v;
        }
        return std::nullopt;
    };

    std::size_t claimed = blobs;
    std::vector<bool> blocked(classes, false);
    while (claimed < N) {
        // smallest unblocked class grows; ties to the lower class index
        std::size_t grow = classes;
        for (std::size_t k = 0; k < classes; ++k)
            if (!blocked[k] && (grow == classes || class_size[k] < class_size[grow]))
                grow = k;
        if (grow == classes)
            break; // only unreachable nodes remain (disconnected graph)

        bool grew = false;
        for (std::size_t tries = 0; tries < seeds_per_class && !grew; ++tries) {
            const std::size_t blob = grow + classes * next_blob[grow];
            next_blob[grow] = (next_blob[grow] + 1) % seeds_per_class;
            if (auto v = pop_free(blob)) {
                claim(*v, blob);
                ++claimed;
                grew = true;
            }
        }
        if (!grew)
            blocked[grow] = true;
    }
    // nodes locked out by the gradation rule take the midpoint class of
    // their claimed neighbours, joining a same-class neighbour blob if any
    for (bool progress = true; progress;) {
        progress = false;
        for (std::size_t v = 0; v < N; ++v) {
            if (out.blob_of_node[v] >= 0)
                continue;
            int lo = std::numeric_limits<int>::max(), hi = -1;
            for (std::size_t j : g.neighbors(v)) {
                if (out.blob_of_node[j] >= 0) {
                    lo = std::min(lo, class_of(j));
                    hi = std::max(hi, class_of(j));
                }
            }
            if (hi < 0)
                continue;
            const int k = (lo + hi) / 2;
            int blob = -1;
            for (std::size_t j : g.neighbors(v))
                if (out.blob_of_node[j] >= 0 && class_of(j) == k)
                    blob = out.blob_of_node[j];
            if (blob < 0) {
                out.blob_class.push_back(k);
                frontier.emplace_back();
                blob = static_cast<int>(out.blob_class.size() - 1);
            }
            out.blob_of_node[v] = blob;
            ++class_size[static_cast<std::size_t>(k)];
            progress = true;
        }
    }
    // components without a seed go to the smallest class
    for (std::size_t v = 0; v < N; ++v) {
        if (out.blob_of_node[v] >= 0)
            continue;
        const std::size_t k = static_cast<std::size_t>(
            std::min_element(class_size.begin(), class_size.end()) - class_size.begin());
        out.blob_class.push_back(static_cast<int>(k));
        const std::size_t blob = out.blob_class.size() - 1;
        frontier.emplace_back();
        std::deque<std::size_t> queue{v};
        out.blob_of_node[v] = static_cast<int>(blob);
        ++class_size[k];
        while (!queue.empty()) {
            const std::size_t u = queue.front();
            queue.pop_front();
            for (std::size_t j : g.neighbors(u)) {
                if (out.blob_of_node[j] < 0) {
                    out.blob_of_node[j] = static_cast<int>(blob);
                    ++class_size[k];
                    queue.push_back(j);
                }
            }
        }
    }

    Scenario& s = out.scenario;
    s.graph = g;
    s.true_labels.classes = classes;
    s.true_labels.labels.resize(N);
    for (std::size_t v = 0; v < N; ++v)
        s.true_labels.labels[v] = out.blob_class[static_cast<std::size_t>(out.blob_of_node[v])];
    s.true_lambda = lambda;
    s.populations = log_uniform_populations(N, pop_lo, pop_hi, rng);
    return out;
}

Scenario make_blob_scenario(const SpatialGraph& g, std::size_t classes, const std::vector<double>& lambda,
                            std::int64_t pop_lo, std::int64_t pop_hi, std::size_t seeds_per_class, Rng& rng,
                            BlobGrowth growth)
{
    return make_blob_scenario_detailed(g, classes, lambda, pop_lo, pop_hi, seeds_per_class, rng, growth).scenario;
}

Scenario permute_risks(const Scenario& s, const std::vector<std::size_t>& perm)
{
    const std::size_t K = s.true_lambda.size();
    if (perm.size() != K)
        throw Error(ErrorCode::InvalidArgument, "permutation length differs from class count");
    std::vector<bool> seen(K, false);
    for (std::size_t p : perm) {
        if (p >= K || seen[p])
            throw Error(ErrorCode::InvalidArgument, "not a permutation");
        seen[p] = true;
    }
    Scenario out = s;
    for (std::size_t k = 0; k < K; ++k)
        out.true_lambda[k] = s.true_lambda[perm[k]];
    return out;
}

ObservedData sample_counts(const Scenario& s, Rng& rng)
{
    const std::size_t N = s.populations.size();
    ObservedData data;
    data.populations = s.populations;
    data.counts.resize(N);
    for (std::size_t i = 0; i < N; ++i) {
        const double rate = static_cast<double>(s.populations[i]) * s.true_lambda[s.true_labels.labels[i]];
        if (rate <= 0.0) {
            data.counts[i] = 0;
            continue;
        }
        std::poisson_distribution<std::int64_t> pois(rate);
        data.counts[i] = pois(rng);
    }
    return data;
}

} // namespace riskmap
