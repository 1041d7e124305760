#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace riskmap {

struct Point {
    double x = 0.0;
    double y = 0.0;
};

/// Undirected neighbourhood graph over N areal units.
///
/// Adjacency is stored in compressed-row form with every neighbour list
/// sorted ascending. Construction enforces symmetry, no self-loops and
/// in-range indices; the object is immutable afterwards.
class SpatialGraph {
public:
    SpatialGraph() = default;

    /// Builds from an undirected edge set over nodes [0, node_count).
    /// Duplicate and reversed pairs are collapsed. Throws SelfLoop or
    /// InvalidArgument on bad input.
    SpatialGraph(std::size_t node_count,
                 std::span<const std::pair<std::size_t, std::size_t>> edges,
                 std::vector<std::string> node_ids = {},
                 std::vector<Point> layout = {});

    std::size_t node_count() const noexcept { return offsets_.empty() ? 0 : offsets_.size() - 1; }
    std::size_t edge_count() const noexcept { return neighbors_.size() / 2; }

    std::span<const std::size_t> neighbors(std::size_t i) const
    {
        return {neighbors_.data() + offsets_[i], offsets_[i + 1] - offsets_[i]};
    }
    std::size_t degree(std::size_t i) const { return offsets_[i + 1] - offsets_[i]; }

    /// Each unordered edge once, as (i, j) with i < j, in ascending order.
    std::vector<std::pair<std::size_t, std::size_t>> edges() const;

    const std::vector<std::string>& node_ids() const noexcept { return node_ids_; }
    /// External id of node i, or its decimal index when no ids were given.
    std::string id(std::size_t i) const;
    std::optional<std::size_t> index_of(const std::string& id) const;

    /// Drawing coordinates (hex lattices carry them; loaded graphs do not).
    const std::vector<Point>& layout() const noexcept { return layout_; }

    /// Exhaustive symmetry / self-loop / range check.
    bool check_invariants() const;

private:
    std::vector<std::size_t> offsets_;
    std::vector<std::size_t> neighbors_;
    std::vector<std::string> node_ids_;
    std::vector<Point> layout_;
};

/// Hexagonal lattice in "odd-r" offset coordinates: node (r, c) has index
/// r * cols + c and id "r<r>c<c>". Odd rows are shifted half a cell right,
/// so the diagonal neighbours of (r, c) are
///   even r: (r-1, c-1), (r-1, c), (r+1, c-1), (r+1, c)
///   odd r:  (r-1, c),   (r-1, c+1), (r+1, c), (r+1, c+1).
/// Interior nodes have degree 6 and the edge count is
///   rows * (cols - 1) + (rows - 1) * (2 * cols - 1).
SpatialGraph build_hex_lattice(std::size_t rows, std::size_t cols);

/// Closed-form edge count of build_hex_lattice(rows, cols).
std::size_t hex_lattice_edge_count(std::size_t rows, std::size_t cols);

/// Nodes are numbered in order of first appearance.
SpatialGraph load_edge_list(std::span<const std::pair<std::string, std::string>> rows);

/// Nodes follow `ids` exactly (isolated nodes allowed); every edge endpoint
/// must be one of `ids`.
SpatialGraph graph_from_ids(std::vector<std::string> ids,
                            std::span<const std::pair<std::string, std::string>> rows);

} // namespace riskmap
