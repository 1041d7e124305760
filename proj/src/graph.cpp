#include "riskmap/graph.hpp"

#include <algorithm>
#include <cmath>
#include <unordered_map>

#include "riskmap/errors.hpp"

namespace riskmap {

SpatialGraph::SpatialGraph(std::size_t node_count,
                           std::span<const std::pair<std::size_t, std::size_t>> edges,
                           std::vector<std::string> node_ids,
                           std::vector<Point> layout)
    : node_ids_(std::move(node_ids)), layout_(std::move(layout))
{
    if (!node_ids_.empty() && node_ids_.size() != node_count)
        throw Error(ErrorCode::InvalidArgument, "node id count does not match node count");
    if (!layout_.empty() && layout_.size() != node_count)
        throw Error(ErrorCode::InvalidArgument, "layout size does not match node count");

    std::vector<std::vector<std::size_t>> adj(node_count);
    for (auto [a, b] : edges) {
        if (a >= node_count || b >= node_count)
            throw Error(ErrorCode::InvalidArgument, "edge endpoint out of range");
        if (a == b)
            throw Error(ErrorCode::SelfLoop, "self-loop at node " + id(a));
        adj[a].push_back(b);
        adj[b].push_back(a);
    }

    offsets_.assign(node_count + 1, 0);
    for (std::size_t i = 0; i < node_count; ++i) {
        auto& list = adj[i];
        std::sort(list.begin(), list.end());
        list.erase(std::unique(list.begin(), list.end()), list.end());
        offsets_[i + 1] = offsets_[i] + list.size();
    }
    neighbors_.reserve(offsets_.back());
    for (const auto& list : adj)
        neighbors_.insert(neighbors_.end(), list.begin(), list.end());
}

std::vector<std::pair<std::size_t, std::size_t>> SpatialGraph::edges() const
{
    std::vector<std::pair<std::size_t, std::size_t>> out;
    out.reserve(edge_count());
    for (std::size_t i = 0; i < node_count(); ++i)
        for (std::size_t j : neighbors(i))
            if (i < j)
                out.emplace_back(i, j);
    return out;
}

std::string SpatialGraph::id(std::size_t i) const
{
    return node_ids_.empty() ? std::to_string(i) : node_ids_[i];
}

std::optional<std::size_t> SpatialGraph::index_of(const std::string& id) const
{
    if (node_ids_.empty()) {
        // numeric ids only
        std::size_t pos = 0;
        try {
            unsigned long v = std::stoul(id, &pos);
            if (pos == id.size() && v < node_count())
                return v;
        } catch (const std::exception&) {
        }
        return std::nullopt;
    }
    auto it = std::find(node_ids_.begin(), node_ids_.end(), id);
    if (it == node_ids_.end())
        return std::nullopt;
    return static_cast<std::size_t>(it - node_ids_.begin());
}

bool SpatialGraph::check_invariants() const
{
    const std::size_t n = node_count();
    for (std::size_t i = 0; i < n; ++i) {
        auto nb = neighbors(i);
        if (!std::is_sorted(nb.begin(), nb.end()))
            return false;
        for (std::size_t j : nb) {
            if (j >= n || j == i)
                return false;
            auto back = neighbors(j);
            if (!std::binary_search(back.begin(), back.end(), i))
                return false;
        }
    }
    return true;
}

std::size_t hex_lattice_edge_count(std::size_t rows, std::size_t cols)
{
    return rows * (cols - 1) + (rows - 1) * (2 * cols - 1);
}

SpatialGraph build_hex_lattice(std::size_t rows, std::size_t cols)
{
    if (rows == 0 || cols == 0)
        throw Error(ErrorCode::InvalidArgument, "hex lattice needs rows >= 1 and cols >= 1");

    auto index = [cols](std::size_t r, std::size_t c) { return r * cols + c; };
    std::vector<std::pair<std::size_t, std::size_t>> edges;
    edges.reserve(hex_lattice_edge_count(rows, cols));
    std::vector<std::string> ids;
    std::vector<Point> layout;
    ids.reserve(rows * cols);
    layout.reserve(rows * cols);

    const double row_step = std::sqrt(3.0) / 2.0;
    for (std::size_t r = 0; r < rows; ++r) {
        const bool odd = (r % 2) == 1;
        for (std::size_t c = 0; c < cols; ++c) {
            ids.push_back("r" + std::to_string(r) + "c" + std::to_string(c));
            layout.push_back({static_cast<double>(c) + (odd ? 0.5 : 0.0),
                              static_cast<double>(r) * row_step});
            if (c + 1 < cols)
                edges.emplace_back(index(r, c), index(r, c + 1));
            if (r + 1 < rows) {
                // downward diagonals only; upward ones are the same edges seen from below
                if (odd) {
                    edges.emplace_back(index(r, c), index(r + 1, c));
                    if (c + 1 < cols)
                        edges.emplace_back(index(r, c), index(r + 1, c + 1));
                } else {
                    edges.emplace_back(index(r, c), index(r + 1, c));
                    if (c >= 1)
                        edges.emplace_back(index(r, c), index(r + 1, c - 1));
                }
            }
        }
    }
    return SpatialGraph(rows * cols, edges, std::move(ids), std::move(layout));
}

namespace {

SpatialGraph assemble(std::vector<std::string> ids,
                      std::unordered_map<std::string, std::size_t> lookup,
                      std::span<const std::pair<std::string, std::string>> rows,
                      bool grow)
{
    std::vector<std::pair<std::size_t, std::size_t>> edges;
    edges.reserve(rows.size());
    auto resolve = [&](const std::string& name) -> std::size_t {
        auto it = lookup.find(name);
        if (it != lookup.end())
            return it->second;
        if (!grow)
            throw Error(ErrorCode::InvalidArgument, "edge references unknown id '" + name + "'");
        lookup.emplace(name, ids.size());
        ids.push_back(name);
        return ids.size() - 1;
    };
    for (const auto& [a, b] : rows) {
        if (a == b)
            throw Error(ErrorCode::SelfLoop, "self-loop at id '" + a + "'");
        std::size_t ia = resolve(a);
        std::size_t ib = resolve(b);
        edges.emplace_back(ia, ib);
    }
    const std::size_t n = ids.size();
    return SpatialGraph(n, edges, std::move(ids));
}

} // namespace

SpatialGraph load_edge_list(std::span<const std::pair<std::string, std::string>> rows)
{
    return assemble({}, {}, rows, true);
}

SpatialGraph graph_from_ids(std::vector<std::string> ids,
                            std::span<const std::pair<std::string, std::string>> rows)
{
    std::unordered_map<std::string, std::size_t> lookup;
    for (std::size_t i = 0; i < ids.size(); ++i)
        if (!lookup.emplace(ids[i], i).second)
            throw Error(ErrorCode::InvalidArgument, "duplicate id '" + ids[i] + "'");
    return assemble(std::move(ids), std::move(lookup), rows, false);
}

} // namespace riskmap
