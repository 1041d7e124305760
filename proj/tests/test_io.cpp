#include "doctest.h"

#include <sstream>

#include "riskmap/errors.hpp"
#include "riskmap/io.hpp"
#include "riskmap/simulate.hpp"

using namespace riskmap;

namespace {

// Runs `fn` and returns the Parse error message, or "" when nothing was thrown.
template <class Fn>
std::string parse_error(Fn fn)
{
    try {
        fn();
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::Parse);
        return e.what();
    }
    return {};
}

AreaTable data_from(const std::string& text)
{
    std::istringstream in(text);
    return parse_data_csv(in, "data.csv");
}

} // namespace

TEST_SUITE("io")
{
    TEST_CASE("data csv")
    {
        const AreaTable t = data_from("id,count,population\na,1,100\n\nb, 0 ,50\n");
        CHECK(t.ids == std::vector<std::string>{"a", "b"});
        CHECK(t.data.counts == std::vector<std::int64_t>{1, 0});
        CHECK(t.data.populations == std::vector<std::int64_t>{100, 50});
    }

    TEST_CASE("data csv errors carry line numbers")
    {
        CHECK(parse_error([] { data_from(""); }).find("data.csv:1:") == 0);
        CHECK(parse_error([] { data_from("area,y,n\na,1,2\n"); }).find("data.csv:1:") == 0);
        CHECK(parse_error([] { data_from("id,count,population\na,1,100\nb,x,5\n"); }).find("data.csv:3:") == 0);
        CHECK(parse_error([] { data_from("id,count,population\na,1,100\n\nb,1\n"); }).find("data.csv:4:") == 0);
        CHECK(parse_error([] { data_from("id,count,population\na,-1,100\n"); }).find("negative") != std::string::npos);
        CHECK(parse_error([] { data_from("id,count,population\na,1,100\na,2,100\n"); }).find("duplicate") != std::string::npos);
        CHECK(parse_error([] { data_from("id,count,population\na,3,0\n"); }).find("data.csv:2:") == 0);
        CHECK(parse_error([] { data_from("id,count,population\na,1.5,100\n"); }).find("data.csv:2:") == 0);
    }

    TEST_CASE("edges csv with and without header")
    {
        std::istringstream with("id_a,id_b\na,b\nb,c\n");
        CHECK(parse_edges_csv(with, "e").size() == 2);
        std::istringstream without("a,b\n");
        CHECK(parse_edges_csv(without, "e").size() == 1);
        CHECK(parse_error([] {
                  std::istringstream in("id_a,id_b\na,b,c\n");
                  parse_edges_csv(in, "edges.csv");
              }).find("edges.csv:2:") == 0);
        CHECK(parse_error([] {
                  std::istringstream in("a,a\n");
                  parse_edges_csv(in, "edges.csv");
              }).find("self-loop") != std::string::npos);
    }

    TEST_CASE("truth csv")
    {
        std::istringstream plain("id,true_class\na,0\nb,1\n");
        const TruthTable t = parse_truth_csv(plain, "t");
        CHECK(t.labels == std::vector<int>{0, 1});
        CHECK(t.class_lambda.empty());

        std::istringstream with("id,true_class,true_lambda\na,1,0.001\nb,0,1e-05\nc,1,0.001\n");
        const TruthTable u = parse_truth_csv(with, "t");
        CHECK(u.class_lambda == std::vector<double>{1e-5, 1e-3});

        CHECK(parse_error([] {
                  std::istringstream in("id,true_class,true_lambda\na,1,0.001\nb,1,0.002\n");
                  parse_truth_csv(in, "truth.csv");
              }).find("truth.csv:3:") == 0);
    }

    TEST_CASE("simulated files round-trip through ingestion")
    {
        const SpatialGraph g = build_hex_lattice(5, 6);
        Rng rng(10);
        const Scenario s = make_blob_scenario(g, 3, {1e-5, 1e-4, 1e-3}, 1, 32039, 1, rng);
        const ObservedData d = sample_counts(s, rng);

        std::ostringstream data_out, edges_out, truth_out;
        write_data_csv(data_out, g, d);
        write_edges_csv(edges_out, g);
        write_truth_csv(truth_out, g, s.true_labels, s.true_lambda);

        std::istringstream data_in(data_out.str()), edges_in(edges_out.str()), truth_in(truth_out.str());
        const AreaTable t = parse_data_csv(data_in, "d");
        const auto edges = parse_edges_csv(edges_in, "e");
        const TruthTable truth = parse_truth_csv(truth_in, "t");

        CHECK(t.data.counts == d.counts);
        CHECK(t.data.populations == d.populations);
        CHECK(truth.labels == s.true_labels.labels);
        CHECK(truth.class_lambda == s.true_lambda);
        const SpatialGraph back = graph_from_ids(t.ids, edges);
        CHECK(back.edges() == g.edges());
        CHECK(resolve_layout(back).size() == g.node_count());
    }

    TEST_CASE("fit JSON carries labels by id")
    {
        const SpatialGraph g = build_hex_lattice(1, 2);
        FitResult fit;
        fit.params = {{1e-4, 1e-3}, {0.5, 0.0}, {InteractionKind::TriDiagonal, 1.25, 2, std::nullopt}};
        fit.posteriors = PosteriorTable(2, 2);
        fit.posteriors << 0.9, 0.1, 0.2, 0.8;
        fit.labels = {{0, 1}, 2};
        fit.ll_trace = {-10.0, -9.5};
        fit.loglik = -9.5;
        const auto j = fit_to_json(fit, g, true);
        CHECK(j["labels"]["r0c0"] == 0);
        CHECK(j["labels"]["r0c1"] == 1);
        CHECK(j["b"] == 1.25);
        CHECK(j["lambda"][1] == 1e-3);
        CHECK(j["posteriors"]["r0c0"][0] == 0.9);
        CHECK_FALSE(fit_to_json(fit, g, false).contains("posteriors"));
    }

    TEST_CASE("svg map")
    {
        const SpatialGraph g = build_hex_lattice(3, 3);
        const std::string svg = render_svg(g, {{0, 1, 2, 0, 1, 2, 0, 1, 2}, 3}, {1e-5, 1e-4, 1e-3});
        CHECK(svg.rfind("<svg", 0) == 0);
        CHECK(svg.find("</svg>") != std::string::npos);
        CHECK(svg.find("<polygon") != std::string::npos);
    }
}
