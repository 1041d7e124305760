#pragma once

#include <iosfwd>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"

#include "riskmap/eval.hpp"
#include "riskmap/graph.hpp"
#include "riskmap/inference.hpp"
#include "riskmap/model.hpp"

namespace riskmap {

// CSV files are UTF-8, comma separated, one record per line. Parse errors
// throw Error(Parse) with a "<source>:<line>: " prefix.

struct AreaTable {
    std::vector<std::string> ids;
    ObservedData data;
};

/// `id,count,population` with the header row required.
AreaTable parse_data_csv(std::istream& in, const std::string& source);
AreaTable read_data_csv(const std::string& path);

/// `id_a,id_b`; the header row is optional.
std::vector<std::pair<std::string, std::string>> parse_edges_csv(std::istream& in, const std::string& source);
std::vector<std::pair<std::string, std::string>> read_edges_csv(const std::string& path);

struct TruthTable {
    std::vector<std::string> ids;
    std::vector<int> labels;
    /// Per-class risk from the optional third column `true_lambda`; empty
    /// when the column is absent.
    std::vector<double> class_lambda;
};

/// `id,true_class[,true_lambda]` with the header row required.
TruthTable parse_truth_csv(std::istream& in, const std::string& source);
TruthTable read_truth_csv(const std::string& path);

void write_data_csv(std::ostream& out, const SpatialGraph& g, const ObservedData& data);
void write_edges_csv(std::ostream& out, const SpatialGraph& g);
void write_truth_csv(std::ostream& out, const SpatialGraph& g, const LabelMap& labels,
                     const std::vector<double>& class_lambda);

/// Drawing positions: the graph's own layout, else hex positions decoded from
/// "r<row>c<col>" ids, else a square grid in node order.
std::vector<Point> resolve_layout(const SpatialGraph& g);

/// Hexagon (or square for grid layouts) choropleth coloured by class, with a
/// fixed palette ordered by ascending risk.
std::string render_svg(const SpatialGraph& g, const LabelMap& labels, const std::vector<double>& lambda);

nlohmann::json fit_to_json(const FitResult& fit, const SpatialGraph& g, bool with_posteriors);
nlohmann::json eval_to_json(const EvalReport& rep);

/// Writes `text` to `path`, throwing InvalidArgument when the file cannot be opened.
void write_text_file(const std::string& path, const std::string& text);

} // namespace riskmap
