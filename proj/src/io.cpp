#include "riskmap/io.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <regex>
#include <sstream>
#include <unordered_set>

#include "riskmap/errors.hpp"

namespace riskmap {

namespace {

std::string trim(const std::string& s)
{
    const auto first = s.find_first_not_of(" \t\r\n");
    if (first == std::string::npos)
        return {};
    const auto last = s.find_last_not_of(" \t\r\n");
    return s.substr(first, last - first + 1);
}

std::vector<std::string> split(const std::string& line)
{
    std::vector<std::string> fields;
    std::string field;
    std::istringstream ss(line);
    while (std::getline(ss, field, ','))
        fields.push_back(trim(field));
    if (!line.empty() && line.back() == ',')
        fields.emplace_back();
    return fields;
}

[[noreturn]] void fail(const std::string& source, std::size_t line, const std::string& what)
{
    throw Error(ErrorCode::Parse, source + ":" + std::to_string(line) + ": " + what);
}

std::int64_t parse_count(const std::string& text, const std::string& source, std::size_t line,
                         const char* column)
{
    std::size_t pos = 0;
    long long v = 0;
    try {
        v = std::stoll(text, &pos);
    } catch (const std::exception&) {
        fail(source, line, std::string("column ") + column + " is not an integer: '" + text + "'");
    }
    if (pos != text.size())
        fail(source, line, std::string("column ") + column + " is not an integer: '" + text + "'");
    if (v < 0)
        fail(source, line, std::string("column ") + column + " is negative");
    return v;
}

double parse_real(const std::string& text, const std::string& source, std::size_t line, const char* column)
{
    std::size_t pos = 0;
    double v = 0.0;
    try {
        v = std::stod(text, &pos);
    } catch (const std::exception&) {
        fail(source, line, std::string("column ") + column + " is not a number: '" + text + "'");
    }
    if (pos != text.size())
        fail(source, line, std::string("column ") + column + " is not a number: '" + text + "'");
    return v;
}

std::ifstream open_input(const std::string& path)
{
    std::ifstream in(path);
    if (!in)
        throw Error(ErrorCode::Parse, path + ": cannot open file");
    return in;
}

// Reads non-blank lines; returns (line number, text) pairs.
std::vector<std::pair<std::size_t, std::string>> read_lines(std::istream& in)
{
    std::vector<std::pair<std::size_t, std::string>> lines;
    std::string text;
    std::size_t number = 0;
    while (std::getline(in, text)) {
        ++number;
        if (number == 1 && text.rfind("\xEF\xBB\xBF", 0) == 0)
            text.erase(0, 3);
        if (!trim(text).empty())
            lines.emplace_back(number, text);
    }
    return lines;
}

} // namespace

AreaTable parse_data_csv(std::istream& in, const std::string& source)
{
    const auto lines = read_lines(in);
    if (lines.empty())
        fail(source, 1, "missing header 'id,count,population'");
    if (split(lines[0].second) != std::vector<std::string>{"id", "count", "population"})
        fail(source, lines[0].first, "expected header 'id,count,population'");

    AreaTable table;
    std::unordered_set<std::string> seen;
    for (std::size_t r = 1; r < lines.size(); ++r) {
        const auto [number, text] = lines[r];
        const auto f = split(text);
        if (f.size() != 3)
            fail(source, number, "expected 3 columns, found " + std::to_string(f.size()));
        if (f[0].empty())
            fail(source, number, "empty id");
        if (!seen.insert(f[0]).second)
            fail(source, number, "duplicate id '" + f[0] + "'");
        const auto y = parse_count(f[1], source, number, "count");
        const auto n = parse_count(f[2], source, number, "population");
        if (n == 0 && y != 0)
            fail(source, number, "cases reported for an empty population");
        table.ids.push_back(f[0]);
        table.data.counts.push_back(y);
        table.data.populations.push_back(n);
    }
    return table;
}

AreaTable read_data_csv(const std::string& path)
{
    auto in = open_input(path);
    return parse_data_csv(in, path);
}

std::vector<std::pair<std::string, std::string>> parse_edges_csv(std::istream& in, const std::string& source)
{
    const auto lines = read_lines(in);
    std::vector<std::pair<std::string, std::string>> rows;
    for (std::size_t r = 0; r < lines.size(); ++r) {
        const auto [number, text] = lines[r];
        const auto f = split(text);
        if (r == 0 && f == std::vector<std::string>{"id_a", "id_b"})
            continue;
        if (f.size() != 2)
            fail(source, number, "expected 2 columns, found " + std::to_string(f.size()));
        if (f[0].empty() || f[1].empty())
            fail(source, number, "empty id");
        if (f[0] == f[1])
            fail(source, number, "self-loop at id '" + f[0] + "'");
        rows.emplace_back(f[0], f[1]);
    }
    return rows;
}

std::vector<std::pair<std::string, std::string>> read_edges_csv(const std::string& path)
{
    auto in = open_input(path);
    return parse_edges_csv(in, path);
}

TruthTable parse_truth_csv(std::istream& in, const std::string& source)
{
    const auto lines = read_lines(in);
    if (lines.empty())
        fail(source, 1, "missing header 'id,true_class'");
    const auto header = split(lines[0].second);
    const bool with_lambda = header == std::vector<std::string>{"id", "true_class", "true_lambda"};
    if (!with_lambda && header != std::vector<std::string>{"id", "true_class"})
        fail(source, lines[0].first, "expected header 'id,true_class[,true_lambda]'");

    TruthTable table;
    std::vector<std::pair<bool, double>> lambda_of_class;
    for (std::size_t r = 1; r < lines.size(); ++r) {
        const auto [number, text] = lines[r];
        const auto f = split(text);
        if (f.size() != header.size())
            fail(source, number, "expected " + std::to_string(header.size()) + " columns");
        const auto cls = parse_count(f[1], source, number, "true_class");
        table.ids.push_back(f[0]);
        table.labels.push_back(static_cast<int>(cls));
        if (with_lambda) {
            const double lam = parse_real(f[2], source, number, "true_lambda");
            if (lambda_of_class.size() <= static_cast<std::size_t>(cls))
                lambda_of_class.resize(static_cast<std::size_t>(cls) + 1, {false, 0.0});
            auto& slot = lambda_of_class[static_cast<std::size_t>(cls)];
            if (slot.first && slot.second != lam)
                fail(source, number, "class " + f[1] + " has conflicting true_lambda values");
            slot = {true, lam};
        }
    }
    for (const auto& [known, lam] : lambda_of_class) {
        if (!known)
            fail(source, lines.back().first, "true_lambda missing for an intermediate class");
        table.class_lambda.push_back(lam);
    }
    return table;
}

TruthTable read_truth_csv(const std::string& path)
{
    auto in = open_input(path);
    return parse_truth_csv(in, path);
}

namespace {

std::string format_real(double v)
{
    std::ostringstream ss;
    ss << std::setprecision(17) << v;
    return ss.str();
}

} // namespace

void write_data_csv(std::ostream& out, const SpatialGraph& g, const ObservedData& data)
{
    out << "id,count,population\n";
    for (std::size_t i = 0; i < data.size(); ++i)
        out << g.id(i) << ',' << data.counts[i] << ',' << data.populations[i] << '\n';
}

void write_edges_csv(std::ostream& out, const SpatialGraph& g)
{
    out << "id_a,id_b\n";
    for (auto [i, j] : g.edges())
        out << g.id(i) << ',' << g.id(j) << '\n';
}

void write_truth_csv(std::ostream& out, const SpatialGraph& g, const LabelMap& labels,
                     const std::vector<double>& class_lambda)
{
    out << (class_lambda.empty() ? "id,true_class\n" : "id,true_class,true_lambda\n");
    for (std::size_t i = 0; i < labels.size(); ++i) {
        out << g.id(i) << ',' << labels.labels[i];
        if (!class_lambda.empty())
            out << ',' << format_real(class_lambda[static_cast<std::size_t>(labels.labels[i])]);
        out << '\n';
    }
}

std::vector<Point> resolve_layout(const SpatialGraph& g)
{
    const std::size_t N = g.node_count();
    if (g.layout().size() == N && N > 0)
        return g.layout();

    static const std::regex hex_id(R"(r(\d+)c(\d+))");
    std::vector<Point> layout(N);
    bool hex = N > 0;
    for (std::size_t i = 0; i < N && hex; ++i) {
        std::smatch m;
        const std::string id = g.id(i);
        if (!std::regex_match(id, m, hex_id)) {
            hex = false;
            break;
        }
        const double r = std::stod(m[1].str());
        const double c = std::stod(m[2].str());
        const bool odd = (static_cast<long>(r) % 2) == 1;
        layout[i] = {c + (odd ? 0.5 : 0.0), r * std::sqrt(3.0) / 2.0};
    }
    if (hex)
        return layout;

    const auto side = static_cast<std::size_t>(std::ceil(std::sqrt(static_cast<double>(std::max<std::size_t>(N, 1)))));
    for (std::size_t i = 0; i < N; ++i)
        layout[i] = {static_cast<double>(i % side), static_cast<double>(i / side)};
    return layout;
}

std::string render_svg(const SpatialGraph& g, const LabelMap& labels, const std::vector<double>& lambda)
{
    // light-to-dark sequential palette; index = risk rank
    static const char* palette[] = {"#ffffcc", "#ffeda0", "#fed976", "#feb24c", "#fd8d3c",
                                    "#fc4e2a", "#e31a1c", "#bd0026", "#800026", "#4d0019"};
    constexpr std::size_t palette_size = sizeof(palette) / sizeof(palette[0]);

    const std::size_t K = lambda.size();
    std::vector<std::size_t> order(K);
    for (std::size_t k = 0; k < K; ++k)
        order[k] = k;
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return lambda[a] < lambda[b]; });
    std::vector<std::string> colour(K);
    for (std::size_t r = 0; r < K; ++r) {
        const std::size_t slot = K <= 1 ? 0 : r * (palette_size - 1) / (K - 1);
        colour[order[r]] = palette[slot];
    }

    const auto layout = resolve_layout(g);
    const bool hex = g.layout().size() == g.node_count() || [&] {
        static const std::regex hex_id(R"(r\d+c\d+)");
        for (std::size_t i = 0; i < g.node_count(); ++i)
            if (!std::regex_match(g.id(i), hex_id))
                return false;
        return g.node_count() > 0;
    }();

    const double scale = 12.0;
    const double margin = 10.0;
    double max_x = 0.0, max_y = 0.0;
    for (const auto& p : layout) {
        max_x = std::max(max_x, p.x);
        max_y = std::max(max_y, p.y);
    }
    const double legend_h = 18.0 * static_cast<double>(K) + 10.0;
    const double width = (max_x + 1.0) * scale + 2 * margin + 160.0;
    const double height = std::max((max_y + 1.0) * scale + 2 * margin, legend_h + 2 * margin);

    std::ostringstream svg;
    svg << std::fixed << std::setprecision(2);
    svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\"" << height
        << "\" viewBox=\"0 0 " << width << ' ' << height << "\">\n";
    svg << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    for (std::size_t i = 0; i < g.node_count(); ++i) {
        const double cx = margin + (layout[i].x + 0.5) * scale;
        const double cy = margin + (layout[i].y + 0.5) * scale;
        const std::string& fill = colour[static_cast<std::size_t>(labels.labels[i])];
        if (hex) {
            const double radius = scale / std::sqrt(3.0);
            svg << "<polygon points=\"";
            for (int c = 0; c < 6; ++c) {
                const double angle = (60.0 * c - 30.0) * M_PI / 180.0;
                svg << cx + radius * std::cos(angle) << ',' << cy + radius * std::sin(angle) << (c < 5 ? " " : "");
            }
            svg << "\" fill=\"" << fill << "\" stroke=\"#666\" stroke-width=\"0.3\"><title>" << g.id(i)
                << "</title></polygon>\n";
        } else {
            svg << "<rect x=\"" << cx - scale / 2 << "\" y=\"" << cy - scale / 2 << "\" width=\"" << scale
                << "\" height=\"" << scale << "\" fill=\"" << fill << "\" stroke=\"#666\" stroke-width=\"0.3\"><title>"
                << g.id(i) << "</title></rect>\n";
        }
    }
    const double lx = (max_x + 1.0) * scale + 2 * margin;
    for (std::size_t r = 0; r < K; ++r) {
        const std::size_t k = order[r];
        const double ly = margin + 18.0 * static_cast<double>(r);
        svg << "<rect x=\"" << lx << "\" y=\"" << ly << "\" width=\"14\" height=\"14\" fill=\"" << colour[k]
            << "\" stroke=\"#666\"/>\n";
        std::ostringstream label;
        label << std::setprecision(3) << lambda[k];
        svg << "<text x=\"" << lx + 20 << "\" y=\"" << ly + 11 << "\" font-family=\"sans-serif\" font-size=\"11\">class "
            << k << ": " << label.str() << "</text>\n";
    }
    svg << "</svg>\n";
    return svg.str();
}

nlohmann::json fit_to_json(const FitResult& fit, const SpatialGraph& g, bool with_posteriors)
{
    nlohmann::json j;
    j["K"] = fit.params.classes();
    j["interaction"] = to_string(fit.params.interaction.kind);
    j["lambda"] = fit.params.lambda;
    j["alpha"] = fit.params.alpha;
    j["b"] = fit.params.interaction.b;
    j["loglik"] = fit.loglik;
    j["bic"] = fit.bic;
    j["iterations"] = fit.iterations;
    j["converged"] = fit.converged;
    j["loglik_trace"] = fit.ll_trace;
    j["collapsed"] = fit.collapsed_classes;
    nlohmann::json labels = nlohmann::json::object();
    for (std::size_t i = 0; i < fit.labels.size(); ++i)
        labels[g.id(i)] = fit.labels.labels[i];
    j["labels"] = std::move(labels);
    if (with_posteriors) {
        nlohmann::json post = nlohmann::json::object();
        for (std::size_t i = 0; i < g.node_count(); ++i) {
            std::vector<double> row(fit.posteriors.row(static_cast<Eigen::Index>(i)).begin(),
                                    fit.posteriors.row(static_cast<Eigen::Index>(i)).end());
            post[g.id(i)] = row;
        }
        j["posteriors"] = std::move(post);
    }
    return j;
}

nlohmann::json eval_to_json(const EvalReport& rep)
{
    nlohmann::json j;
    j["dsc"] = rep.dsc;
    j["estimated_lambda"] = rep.estimated_lambda;
    j["true_lambda"] = rep.true_lambda;
    j["true_class_of_rank"] = rep.true_class_of_rank;
    j["alignment"] = rep.alignment;
    j["confusion"] = rep.confusion;
    j["vacuous"] = rep.vacuous;
    j["collapsed"] = rep.collapsed;
    return j;
}

void write_text_file(const std::string& path, const std::string& text)
{
    std::ofstream out(path, std::ios::binary);
    if (!out)
        throw Error(ErrorCode::InvalidArgument, path + ": cannot open for writing");
    out << text;
    if (!out)
        throw Error(ErrorCode::InvalidArgument, path + ": write failed");
}

} // namespace riskmap
