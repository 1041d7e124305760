// riskmap: fit, select, simulate and score HMRF disease risk maps.
//
// Exit codes: 0 success, 2 malformed input or invalid arguments,
// 3 every restart (or every K) failed, 1 anything else.

#include <cstdint>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "riskmap/riskmap.hpp"

using namespace riskmap;
using nlohmann::json;

namespace {

constexpr int kExitInput = 2;
constexpr int kExitFailed = 3;

struct FitFlags {
    std::size_t restarts = 10;
    std::string strategy = "tra";
    std::string interaction = "tridiagonal";
    double rand_upper = 1.5;
    bool no_search2 = false;
    std::optional<double> fix_b;
    std::size_t max_iters = 500;
    double tol = 1e-6;
    std::size_t mf_sweeps = 50;
    double mf_tol = 1e-6;
    double b_max = 10.0;
    std::uint64_t seed = 0;
    std::size_t threads = 0;
};

void add_fit_flags(CLI::App* cmd, FitFlags& f)
{
    cmd->add_option("-M,--M,--restarts", f.restarts, "Number of restarts")->capture_default_str()->check(CLI::PositiveNumber);
    cmd->add_option("--strategy", f.strategy, "Initialisation: tra, rand or emm")
        ->capture_default_str()
        ->check(CLI::IsMember({"tra", "rand", "emm"}));
    cmd->add_option("--interaction,--model", f.interaction, "Interaction matrix: potts, tridiagonal, smooth")
        ->capture_default_str()
        ->check(CLI::IsMember({"potts", "tridiagonal", "smooth"}));
    cmd->add_option("--rand-upper", f.rand_upper, "Upper bound of uniform random risks")->capture_default_str();
    cmd->add_flag("--no-search2", f.no_search2, "Skip the b = 1 first phase");
    cmd->add_option("--fix-b", f.fix_b, "Hold the interaction strength at this value");
    cmd->add_option("--max-iters", f.max_iters, "EM iteration cap")->capture_default_str();
    cmd->add_option("--tol", f.tol, "Relative log-likelihood change to stop at")->capture_default_str();
    cmd->add_option("--mf-sweeps", f.mf_sweeps, "Mean-field sweep cap per E-step")->capture_default_str();
    cmd->add_option("--mf-tol", f.mf_tol, "Mean-field convergence tolerance")->capture_default_str();
    cmd->add_option("--b-max", f.b_max, "Upper bound on the interaction strength")->capture_default_str();
    cmd->add_option("--threads", f.threads, "Worker threads (default: RISKMAP_THREADS or all cores)");
}

FitOptions fit_options(const FitFlags& f)
{
    FitOptions o;
    o.max_em_iters = f.max_iters;
    o.em_rel_tol = f.tol;
    o.mf_max_sweeps = f.mf_sweeps;
    o.mf_tol = f.mf_tol;
    o.fix_b = f.fix_b;
    o.b_max = f.b_max;
    o.seed = f.seed;
    return o;
}

std::size_t threads_of(std::size_t flag)
{
    return flag > 0 ? flag : default_thread_count();
}

StrategySpec strategy_spec(const FitFlags& f)
{
    StrategySpec s;
    s.kind = parse_strategy_kind(f.strategy);
    s.restarts = f.restarts;
    s.rand_upper = f.rand_upper;
    s.search2 = !f.no_search2;
    s.seed = f.seed;
    s.interaction = parse_interaction_kind(f.interaction);
    s.threads = threads_of(f.threads);
    return s;
}

// Resolved configuration written into every output. The thread count is
// left out on purpose: results do not depend on it.
json fit_config(const FitFlags& f)
{
    json c;
    c["restarts"] = f.restarts;
    c["strategy"] = f.strategy;
    c["interaction"] = f.interaction;
    c["rand_upper"] = f.rand_upper;
    c["search2"] = !f.no_search2;
    c["fix_b"] = f.fix_b ? json(*f.fix_b) : json(nullptr);
    c["max_iters"] = f.max_iters;
    c["tol"] = f.tol;
    c["mf_sweeps"] = f.mf_sweeps;
    c["mf_tol"] = f.mf_tol;
    c["b_max"] = f.b_max;
    c["seed"] = f.seed;
    return c;
}

struct ScenarioFlags {
    std::size_t rows = 30;
    std::size_t cols = 35;
    std::vector<double> lambda{1e-5, 1e-4, 1e-3};
    std::int64_t pop_min = 1;
    std::int64_t pop_max = 32039;
    std::size_t seeds_per_class = 1;
    std::string growth = "gradation";
    std::vector<std::size_t> permute; // 1-based, as printed in tables
};

void add_scenario_flags(CLI::App* cmd, ScenarioFlags& f)
{
    cmd->add_option("--rows", f.rows, "Lattice rows")->capture_default_str()->check(CLI::PositiveNumber);
    cmd->add_option("--cols", f.cols, "Lattice columns")->capture_default_str()->check(CLI::PositiveNumber);
    cmd->add_option("--lambda", f.lambda, "Risk per class, comma separated")->delimiter(',')->capture_default_str();
    cmd->add_option("--pop-min", f.pop_min, "Smallest population")->capture_default_str();
    cmd->add_option("--pop-max", f.pop_max, "Largest population")->capture_default_str();
    cmd->add_option("--seeds-per-class", f.seeds_per_class, "Region seeds per class")->capture_default_str();
    cmd->add_option("--growth", f.growth, "Region growth: free or gradation")
        ->capture_default_str()
        ->check(CLI::IsMember({"free", "gradation"}));
    cmd->add_option("--permute", f.permute, "1-based risk permutation, e.g. 1,3,2")->delimiter(',');
}

json scenario_config(const ScenarioFlags& f)
{
    json c;
    c["rows"] = f.rows;
    c["cols"] = f.cols;
    c["lambda"] = f.lambda;
    c["pop_min"] = f.pop_min;
    c["pop_max"] = f.pop_max;
    c["seeds_per_class"] = f.seeds_per_class;
    c["growth"] = f.growth;
    c["permute"] = f.permute;
    return c;
}

Scenario build_scenario(const ScenarioFlags& f, const SpatialGraph& g, std::uint64_t seed)
{
    Rng rng(seed);
    const BlobGrowth growth = f.growth == "free" ? BlobGrowth::Free : BlobGrowth::Gradation;
    Scenario s = make_blob_scenario(g, f.lambda.size(), f.lambda, f.pop_min, f.pop_max, f.seeds_per_class, rng, growth);
    s.seed = seed;
    if (!f.permute.empty()) {
        std::vector<std::size_t> perm;
        for (std::size_t p : f.permute) {
            if (p == 0)
                throw Error(ErrorCode::InvalidArgument, "--permute entries are 1-based");
            perm.push_back(p - 1);
        }
        s = permute_risks(s, perm);
    }
    return s;
}

std::string dump(const json& j)
{
    return j.dump(2) + "\n";
}

void emit(const std::string& path, const std::string& text)
{
    if (path.empty() || path == "-")
        std::cout << text;
    else
        write_text_file(path, text);
}

struct Dataset {
    AreaTable table;
    SpatialGraph graph;
};

Dataset load_dataset(const std::string& data_path, const std::string& edges_path)
{
    Dataset d;
    d.table = read_data_csv(data_path);
    const auto edges = read_edges_csv(edges_path);
    try {
        d.graph = graph_from_ids(d.table.ids, edges);
    } catch (const Error& e) {
        throw Error(ErrorCode::Parse, edges_path + ": " + e.what());
    }
    return d;
}

json search_summary(const SearchResult& r)
{
    json j;
    j["best_restart"] = r.best_restart;
    j["failures"] = r.failures;
    json rows = json::array();
    for (const auto& rec : r.restarts) {
        json row;
        row["failed"] = rec.failed;
        if (rec.failed)
            row["error"] = rec.error;
        else {
            row["phase1_loglik"] = rec.phase1_loglik;
            row["final_loglik"] = rec.final_loglik;
        }
        row["rejected_draws"] = rec.rejected_draws;
        rows.push_back(row);
    }
    j["restarts"] = rows;
    return j;
}

// ---------------------------------------------------------------- commands

struct FitCmd {
    std::string data, edges, out, svg;
    std::size_t classes = 3;
    bool posteriors = false;
    FitFlags flags;
};

int run_fit(const FitCmd& c)
{
    const Dataset d = load_dataset(c.data, c.edges);
    const SearchResult r = search_run_select(d.table.data, d.graph, c.classes, strategy_spec(c.flags),
                                             fit_options(c.flags));
    json j = fit_to_json(r.best, d.graph, c.posteriors);
    j["seed"] = c.flags.seed;
    json config = fit_config(c.flags);
    config["command"] = "fit";
    config["data"] = c.data;
    config["edges"] = c.edges;
    config["K"] = c.classes;
    j["config"] = config;
    j["search"] = search_summary(r);
    emit(c.out, dump(j));
    if (!c.svg.empty())
        write_text_file(c.svg, render_svg(d.graph, r.best.labels, r.best.params.lambda));
    return 0;
}

struct SelectCmd {
    std::string data, edges, out;
    std::size_t k_min = 2, k_max = 7;
    FitFlags flags;
};

int run_select(const SelectCmd& c)
{
    if (c.k_min == 0 || c.k_min > c.k_max)
        throw Error(ErrorCode::InvalidArgument, "need 1 <= --k-min <= --k-max");
    const Dataset d = load_dataset(c.data, c.edges);
    const KSelection sel = select_classes(d.table.data, d.graph, c.k_min, c.k_max, strategy_spec(c.flags),
                                          fit_options(c.flags));
    json j;
    json table = json::array();
    for (const auto& row : sel.rows) {
        json r;
        r["K"] = row.classes;
        r["ok"] = row.ok;
        if (row.ok) {
            r["loglik"] = row.loglik;
            r["bic"] = row.bic;
        } else {
            r["error"] = row.error;
        }
        table.push_back(r);
    }
    j["table"] = table;
    j["chosen_K"] = sel.chosen ? json(*sel.chosen) : json(nullptr);
    j["seed"] = c.flags.seed;
    json config = fit_config(c.flags);
    config["command"] = "select-k";
    config["data"] = c.data;
    config["edges"] = c.edges;
    config["k_min"] = c.k_min;
    config["k_max"] = c.k_max;
    j["config"] = config;
    emit(c.out, dump(j));
    for (const auto& row : sel.rows)
        std::cerr << "K=" << row.classes << (row.ok ? " BIC=" + std::to_string(row.bic) : " failed: " + row.error) << "\n";
    if (!sel.chosen) {
        std::cerr << "error: every K failed\n";
        return kExitFailed;
    }
    return 0;
}

struct SimulateCmd {
    ScenarioFlags scenario;
    std::uint64_t seed = 0;
    std::string data_out, edges_out, truth_out, svg;
};

int run_simulate(const SimulateCmd& c)
{
    const SpatialGraph g = build_hex_lattice(c.scenario.rows, c.scenario.cols);
    const Scenario s = build_scenario(c.scenario, g, c.seed);
    Rng count_rng(derive_seed(c.seed, 1));
    const ObservedData data = sample_counts(s, count_rng);

    std::ostringstream d, e, t;
    write_data_csv(d, g, data);
    write_edges_csv(e, g);
    write_truth_csv(t, g, s.true_labels, s.true_lambda);
    write_text_file(c.data_out, d.str());
    write_text_file(c.edges_out, e.str());
    write_text_file(c.truth_out, t.str());
    if (!c.svg.empty())
        write_text_file(c.svg, render_svg(g, s.true_labels, s.true_lambda));
    return 0;
}

struct EvaluateCmd {
    std::string fit, truth, out;
    std::vector<double> true_lambda;
};

int run_evaluate(const EvaluateCmd& c)
{
    std::ifstream in(c.fit);
    if (!in)
        throw Error(ErrorCode::Parse, c.fit + ": cannot open file");
    json fit;
    try {
        fit = json::parse(in);
    } catch (const json::exception& e) {
        throw Error(ErrorCode::Parse, c.fit + ": " + e.what());
    }
    const TruthTable truth = read_truth_csv(c.truth);

    std::vector<double> est_lambda;
    std::vector<int> collapsed;
    std::map<std::string, int> labels;
    try {
        est_lambda = fit.at("lambda").get<std::vector<double>>();
        collapsed = fit.value("collapsed", std::vector<int>{});
        labels = fit.at("labels").get<std::map<std::string, int>>();
    } catch (const json::exception& e) {
        throw Error(ErrorCode::Parse, c.fit + ": " + e.what());
    }

    std::vector<double> true_lambda = c.true_lambda.empty() ? truth.class_lambda : c.true_lambda;
    if (true_lambda.empty())
        throw Error(ErrorCode::InvalidArgument, "true risks unknown: add a true_lambda column or pass --true-lambda");
    const std::size_t K = est_lambda.size();
    if (true_lambda.size() != K)
        throw Error(ErrorCode::InvalidArgument, "fit has " + std::to_string(K) + " classes, truth has " +
                                                    std::to_string(true_lambda.size()));
    if (labels.size() != truth.ids.size())
        throw Error(ErrorCode::InvalidArgument, "fit and truth cover different areas");

    LabelMap pred{{}, K}, real{{}, K};
    for (std::size_t i = 0; i < truth.ids.size(); ++i) {
        const auto it = labels.find(truth.ids[i]);
        if (it == labels.end())
            throw Error(ErrorCode::InvalidArgument, "id '" + truth.ids[i] + "' is missing from the fit");
        if (it->second < 0 || static_cast<std::size_t>(it->second) >= K ||
            truth.labels[i] < 0 || static_cast<std::size_t>(truth.labels[i]) >= K)
            throw Error(ErrorCode::InvalidArgument, "class out of range at id '" + truth.ids[i] + "'");
        pred.labels.push_back(it->second);
        real.labels.push_back(truth.labels[i]);
    }
    const EvalReport rep = evaluate(pred, est_lambda, collapsed, real, true_lambda);
    json j = eval_to_json(rep);
    json config;
    config["command"] = "evaluate";
    config["fit"] = c.fit;
    config["truth"] = c.truth;
    config["true_lambda"] = true_lambda;
    j["config"] = config;
    j["seed"] = fit.value("seed", json(nullptr));
    emit(c.out, dump(j));
    return 0;
}

struct StudyCmd {
    ScenarioFlags scenario;
    FitFlags flags;
    std::size_t replicates = 20;
    std::uint64_t seed = 0;
    std::string out, rows_csv;
};

int run_study(const StudyCmd& c)
{
    const SpatialGraph g = build_hex_lattice(c.scenario.rows, c.scenario.cols);
    const ScenarioFlags sf = c.scenario;
    const ScenarioGenerator gen = [&](std::uint64_t seed) { return build_scenario(sf, g, seed); };
    const std::size_t K = sf.lambda.size();
    const StudyResult r = replicate_study(gen, K, strategy_spec(c.flags), fit_options(c.flags), c.replicates,
                                          c.seed, threads_of(c.flags.threads));
    json j;
    j["true_lambda"] = r.true_lambda;
    j["failures"] = r.failures;
    json summary = json::array();
    for (const auto& s : r.summary)
        summary.push_back({{"dsc_mean", s.dsc_mean}, {"dsc_sd", s.dsc_sd},
                           {"lambda_mean", s.lambda_mean}, {"lambda_sd", s.lambda_sd}});
    j["summary"] = summary;
    json rows = json::array();
    for (const auto& row : r.rows) {
        json x{{"replicate", row.replicate}, {"seed", row.seed}, {"failed", row.failed}};
        if (row.failed)
            x["error"] = row.error;
        else {
            x["dsc"] = row.dsc;
            x["lambda"] = row.estimated_lambda;
            x["b"] = row.b;
            x["loglik"] = row.loglik;
        }
        rows.push_back(x);
    }
    j["rows"] = rows;
    j["seed"] = c.seed;
    json config = fit_config(c.flags);
    config["command"] = "study";
    config["replicates"] = c.replicates;
    config["scenario"] = scenario_config(sf);
    config["study_seed"] = c.seed;
    j["config"] = config;
    emit(c.out, dump(j));

    if (!c.rows_csv.empty()) {
        std::ostringstream csv;
        csv << std::setprecision(17) << "replicate,seed,failed,rank,dsc,lambda\n";
        for (const auto& row : r.rows) {
            if (row.failed) {
                csv << row.replicate << ',' << row.seed << ",1,,,\n";
                continue;
            }
            for (std::size_t k = 0; k < row.dsc.size(); ++k)
                csv << row.replicate << ',' << row.seed << ",0," << k << ',' << row.dsc[k] << ','
                    << row.estimated_lambda[k] << '\n';
        }
        write_text_file(c.rows_csv, csv.str());
    }
    return 0;
}

} // namespace

int main(int argc, char** argv)
{
    CLI::App app{"Disease risk mapping with hidden Markov random fields"};
    app.require_subcommand(1);

    FitCmd fit;
    auto* fit_cmd = app.add_subcommand("fit", "Fit a K-class map");
    fit_cmd->add_option("--data", fit.data, "CSV with id,count,population")->required()->check(CLI::ExistingFile);
    fit_cmd->add_option("--edges", fit.edges, "CSV with id_a,id_b")->required()->check(CLI::ExistingFile);
    fit_cmd->add_option("-K,--K,--classes", fit.classes, "Number of risk classes")->capture_default_str()->check(CLI::PositiveNumber);
    fit_cmd->add_option("--out", fit.out, "Result JSON (default: stdout)");
    fit_cmd->add_option("--svg", fit.svg, "Map SVG");
    fit_cmd->add_flag("--posteriors", fit.posteriors, "Include posterior marginals in the JSON");
    fit_cmd->add_option("--seed", fit.flags.seed, "Random seed")->capture_default_str();
    add_fit_flags(fit_cmd, fit.flags);

    SelectCmd sel;
    auto* sel_cmd = app.add_subcommand("select-k", "Choose K by BIC");
    sel_cmd->add_option("--data", sel.data, "CSV with id,count,population")->required()->check(CLI::ExistingFile);
    sel_cmd->add_option("--edges", sel.edges, "CSV with id_a,id_b")->required()->check(CLI::ExistingFile);
    sel_cmd->add_option("--k-min", sel.k_min, "Smallest K")->capture_default_str();
    sel_cmd->add_option("--k-max", sel.k_max, "Largest K")->capture_default_str();
    sel_cmd->add_option("--out", sel.out, "Result JSON (default: stdout)");
    sel_cmd->add_option("--seed", sel.flags.seed, "Random seed")->capture_default_str();
    add_fit_flags(sel_cmd, sel.flags);

    SimulateCmd sim;
    auto* sim_cmd = app.add_subcommand("simulate", "Generate a synthetic lattice study");
    add_scenario_flags(sim_cmd, sim.scenario);
    sim_cmd->add_option("--seed", sim.seed, "Random seed")->required();
    sim_cmd->add_option("--data-out", sim.data_out, "Data CSV")->required();
    sim_cmd->add_option("--edges-out", sim.edges_out, "Edge CSV")->required();
    sim_cmd->add_option("--truth-out", sim.truth_out, "Truth CSV")->required();
    sim_cmd->add_option("--svg", sim.svg, "Truth map SVG");

    EvaluateCmd ev;
    auto* ev_cmd = app.add_subcommand("evaluate", "Score a fit against the truth");
    ev_cmd->add_option("--fit", ev.fit, "Fit JSON")->required()->check(CLI::ExistingFile);
    ev_cmd->add_option("--truth", ev.truth, "Truth CSV")->required()->check(CLI::ExistingFile);
    ev_cmd->add_option("--true-lambda", ev.true_lambda, "True risk per class when the CSV has none")->delimiter(',');
    ev_cmd->add_option("--out", ev.out, "Report JSON (default: stdout)");

    StudyCmd st;
    auto* st_cmd = app.add_subcommand("study", "Replicated simulate / fit / evaluate");
    add_scenario_flags(st_cmd, st.scenario);
    add_fit_flags(st_cmd, st.flags);
    st_cmd->add_option("-R,--replicates", st.replicates, "Replicates")->capture_default_str();
    st_cmd->add_option("--seed", st.seed, "Study seed")->required();
    st_cmd->add_option("--out", st.out, "Summary JSON (default: stdout)");
    st_cmd->add_option("--rows-csv", st.rows_csv, "Per-replicate CSV");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : kExitInput;
    }

    try {
        if (*fit_cmd)
            return run_fit(fit);
        if (*sel_cmd)
            return run_select(sel);
        if (*sim_cmd)
            return run_simulate(sim);
        if (*ev_cmd)
            return run_evaluate(ev);
        if (*st_cmd)
            return run_study(st);
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return e.code() == ErrorCode::AllRestartsFailed ? kExitFailed : kExitInput;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 1;
}
