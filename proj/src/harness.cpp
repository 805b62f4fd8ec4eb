#include "cavity/harness.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <chrono>
#include <charconv>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <sstream>

namespace cavity {

namespace fs = std::filesystem;

std::string method_name(Method m) {
    switch (m) {
    case Method::exact: return "exact";
    case Method::mtef: return "mtef";
    case Method::fssh: return "fssh";
    case Method::lsc: return "lsc";
    case Method::fbts: return "fbts";
    case Method::bbgky: return "bbgky";
    }
    return "unknown";
}

Method parse_method(const std::string& name) {
    for (Method m : {Method::exact, Method::mtef, Method::fssh, Method::lsc, Method::fbts, Method::bbgky})
        if (method_name(m) == name) return m;
    throw ConfigError("run.method: unknown method '" + name + "'");
}

bool is_trajectory_method(Method m) { return m != Method::exact && m != Method::bbgky; }

namespace {

std::string format_double(double x) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", x);
    return buf;
}

std::string join_values(const std::vector<std::string>& inputs) {
    std::string out;
    for (const std::string& s : inputs) {
        if (!out.empty()) out += ' ';
        out += s;
    }
    return out;
}

std::vector<std::string> split_list(const std::string& text) {
    std::vector<std::string> out;
    std::string cur;
    for (char c : text) {
        if (c == ',' || c == ' ' || c == '\t' || c == '[' || c == ']') {
            if (!cur.empty()) out.push_back(cur);
            cur.clear();
        } else {
            cur += c;
        }
    }
    if (!cur.empty()) out.push_back(cur);
    return out;
}

double to_double(const std::string& key, const std::string& v) {
    double x = 0.0;
    const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), x);
    if (ec != std::errc() || ptr != v.data() + v.size() || !std::isfinite(x))
        throw ConfigError(key + ": expected a number, got '" + v + "'");
    return x;
}

template <typename Int>
Int to_integer(const std::string& key, const std::string& v) {
    Int x = 0;
    const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), x);
    if (ec != std::errc() || ptr != v.data() + v.size())
        throw ConfigError(key + ": expected an integer, got '" + v + "'");
    return x;
}

bool to_bool(const std::string& key, const std::string& v) {
    if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
    if (v == "false" || v == "0" || v == "no" || v == "off") return false;
    throw ConfigError(key + ": expected true or false, got '" + v + "'");
}

using Setter = std::function<void(RunConfig&, const std::string& key, const std::string& value)>;

const std::map<std::string, Setter>& setters() {
    static const std::map<std::string, Setter> table = {
        {"model.levels", [](RunConfig& c, auto& k, auto& v) { c.levels = to_integer<int>(k, v); }},
        {"model.n_modes", [](RunConfig& c, auto& k, auto& v) { c.n_modes = to_integer<int>(k, v); }},
        {"model.scale", [](RunConfig& c, auto& k, auto& v) { c.scale = to_double(k, v); }},
        {"model.rescale_coupling", [](RunConfig& c, auto& k, auto& v) { c.rescale_coupling = to_bool(k, v); }},
        {"model.rwa", [](RunConfig& c, auto& k, auto& v) { c.rwa = to_bool(k, v); }},
        {"model.single_mode", [](RunConfig& c, auto& k, auto& v) { c.single_mode = to_bool(k, v); }},
        {"model.coupling", [](RunConfig& c, auto& k, auto& v) { c.coupling = to_double(k, v); }},
        {"run.method", [](RunConfig& c, auto&, auto& v) { c.method = parse_method(v); }},
        {"run.dt", [](RunConfig& c, auto& k, auto& v) { c.dt = to_double(k, v); }},
        {"run.t_final", [](RunConfig& c, auto& k, auto& v) { c.t_final = to_double(k, v); }},
        {"run.snapshots",
         [](RunConfig& c, auto& k, auto& v) {
             c.snapshots.clear();
             for (const std::string& s : split_list(v)) c.snapshots.push_back(to_double(k, s));
         }},
        {"run.r_points", [](RunConfig& c, auto& k, auto& v) { c.r_points = to_integer<int>(k, v); }},
        {"run.output_every", [](RunConfig& c, auto& k, auto& v) { c.output_every = to_integer<int>(k, v); }},
        {"run.intensity",
         [](RunConfig& c, auto& k, auto& v) {
             if (v == "full") c.intensity = IntensityKind::full;
             else if (v == "diagonal") c.intensity = IntensityKind::diagonal;
             else throw ConfigError(k + ": expected full or diagonal, got '" + v + "'");
         }},
        {"run.n_traj", [](RunConfig& c, auto& k, auto& v) { c.n_traj = to_integer<std::uint64_t>(k, v); }},
        {"run.seed", [](RunConfig& c, auto& k, auto& v) { c.seed = to_integer<std::uint64_t>(k, v); }},
        {"run.workers", [](RunConfig& c, auto& k, auto& v) { c.workers = to_integer<int>(k, v); }},
        {"run.out",
         [](RunConfig& c, auto& k, auto& v) {
             if (v.empty()) throw ConfigError(k + ": empty path");
             c.out = v;
         }},
        {"exact.max_photons", [](RunConfig& c, auto& k, auto& v) { c.exact.max_photons = to_integer<int>(k, v); }},
        {"exact.exclude_same_mode_doubles",
         [](RunConfig& c, auto& k, auto& v) { c.exact.exclude_same_mode_doubles = to_bool(k, v); }},
        {"exact.krylov_dim", [](RunConfig& c, auto& k, auto& v) { c.exact.krylov_dim = to_integer<int>(k, v); }},
        {"exact.tolerance", [](RunConfig& c, auto& k, auto& v) { c.exact.tolerance = to_double(k, v); }},
        {"bbgky.efsc", [](RunConfig& c, auto& k, auto& v) { c.bbgky.efsc = to_bool(k, v); }},
        {"bbgky.pfsc", [](RunConfig& c, auto& k, auto& v) { c.bbgky.pfsc = to_bool(k, v); }},
        {"bbgky.tolerance", [](RunConfig& c, auto& k, auto& v) { c.bbgky_numerics.tolerance = to_double(k, v); }},
        {"bbgky.max_halvings",
         [](RunConfig& c, auto& k, auto& v) { c.bbgky_numerics.max_halvings = to_integer<int>(k, v); }},
        {"mapping.unhalved", [](RunConfig& c, auto& k, auto& v) { c.mapping.unhalved = to_bool(k, v); }},
        {"mapping.trace_stabilization",
         [](RunConfig& c, auto& k, auto& v) { c.mapping.trace_stabilization = to_bool(k, v); }},
        {"mapping.divergence_bound",
         [](RunConfig& c, auto& k, auto& v) { c.mapping.divergence_bound = to_double(k, v); }},
        {"fssh.uniform_rescale", [](RunConfig& c, auto& k, auto& v) { c.fssh.uniform_rescale = to_bool(k, v); }},
    };
    return table;
}

std::string bool_text(bool b) { return b ? "true" : "false"; }

} // namespace

std::map<std::string, std::string> RunConfig::items() const {
    std::string snaps;
    for (double t : snapshots) snaps += (snaps.empty() ? "" : ", ") + format_double(t);
    return {
        {"model.levels", std::to_string(levels)},
        {"model.n_modes", std::to_string(n_modes)},
        {"model.scale", format_double(scale)},
        {"model.rescale_coupling", bool_text(rescale_coupling)},
        {"model.rwa", bool_text(rwa)},
        {"model.single_mode", bool_text(single_mode)},
        {"model.coupling", format_double(coupling)},
        {"run.method", method_name(method)},
        {"run.dt", format_double(dt)},
        {"run.t_final", format_double(t_final)},
        {"run.snapshots", snaps},
        {"run.r_points", std::to_string(r_points)},
        {"run.output_every", std::to_string(output_every)},
        {"run.intensity", intensity == IntensityKind::full ? "full" : "diagonal"},
        {"run.n_traj", std::to_string(n_traj)},
        {"run.seed", std::to_string(seed)},
        {"run.workers", std::to_string(workers)},
        {"run.out", out},
        {"exact.max_photons", std::to_string(exact.max_photons)},
        {"exact.exclude_same_mode_doubles", bool_text(exact.exclude_same_mode_doubles)},
        {"exact.krylov_dim", std::to_string(exact.krylov_dim)},
        {"exact.tolerance", format_double(exact.tolerance)},
        {"bbgky.efsc", bool_text(bbgky.efsc)},
        {"bbgky.pfsc", bool_text(bbgky.pfsc)},
        {"bbgky.tolerance", format_double(bbgky_numerics.tolerance)},
        {"bbgky.max_halvings", std::to_string(bbgky_numerics.max_halvings)},
        {"mapping.unhalved", bool_text(mapping.unhalved)},
        {"mapping.trace_stabilization", bool_text(mapping.trace_stabilization)},
        {"mapping.divergence_bound", format_double(mapping.divergence_bound)},
        {"fssh.uniform_rescale", bool_text(fssh.uniform_rescale)},
    };
}

RunConfig parse_config(std::istream& in) {
    std::vector<CLI::ConfigItem> items;
    try {
        items = CLI::ConfigINI().from_config(in);
    } catch (const CLI::Error& e) {
        throw ConfigError(std::string("config: ") + e.what());
    }
    RunConfig cfg;
    const auto& table = setters();
    for (const CLI::ConfigItem& item : items) {
        if (item.name == "++" || item.name == "--") continue;
        const std::string key = item.fullname();
        const auto it = table.find(key);
        if (it == table.end()) throw ConfigError("config: unknown key '" + key + "'");
        it->second(cfg, key, join_values(item.inputs));
    }
    return cfg;
}

RunConfig load_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("config: cannot open '" + path + "'");
    return parse_config(in);
}

void validate_config(const RunConfig& cfg) {
    if (cfg.r_points < 2) throw ConfigError("run.r_points must be at least 2");
    if (cfg.workers < 1) throw ConfigError("run.workers must be at least 1");
    if (is_trajectory_method(cfg.method) && cfg.n_traj < 1) throw ConfigError("run.n_traj must be at least 1");
    if (cfg.single_mode && cfg.levels != 2) throw ConfigError("model.single_mode requires model.levels = 2");
    if (cfg.exact.max_photons < 0 || cfg.exact.max_photons > 2) throw ConfigError("exact.max_photons must be 0, 1 or 2");
    if (cfg.exact.krylov_dim < 2) throw ConfigError("exact.krylov_dim must be at least 2");
    if (!(cfg.exact.tolerance > 0.0)) throw ConfigError("exact.tolerance must be positive");
    if (!(cfg.bbgky_numerics.tolerance > 0.0)) throw ConfigError("bbgky.tolerance must be positive");
    if (!(cfg.mapping.divergence_bound > 0.0)) throw ConfigError("mapping.divergence_bound must be positive");
    const ModelSpec model = build_model(cfg);
    if (cfg.method == Method::bbgky && (model.levels() != 2 || model.rwa))
        throw ConfigError("run.method: bbgky needs a two-level model without RWA");
    build_plan(cfg, model).check();
}

ModelSpec build_model(const RunConfig& cfg) {
    ModelSpec model;
    if (cfg.single_mode) {
        model = build_single_mode_model();
    } else {
        if (cfg.levels != 2 && cfg.levels != 3) throw ConfigError("model.levels must be 2 or 3");
        if (cfg.n_modes < 1) throw ConfigError("model.n_modes must be at least 1");
        if (!(cfg.scale > 0.0)) throw ConfigError("model.scale must be positive");
        model = build_paper_model(cfg.levels, cfg.n_modes, cfg.scale, cfg.rescale_coupling);
    }
    if (cfg.coupling >= 0.0) model = with_coupling(model, cfg.coupling);
    model.rwa = cfg.rwa;
    validate(model);
    return model;
}

OutputPlan build_plan(const RunConfig& cfg, const ModelSpec& model) {
    OutputPlan plan;
    plan.dt = cfg.dt;
    plan.t_final = cfg.t_final;
    plan.snapshots = cfg.snapshots;
    plan.r_grid = uniform_grid(model, cfg.r_points);
    plan.output_every = cfg.output_every;
    plan.intensity = cfg.intensity;
    return plan;
}

ObservableSeries run_method(const RunConfig& cfg) {
    validate_config(cfg);
    const ModelSpec model = build_model(cfg);
    const OutputPlan plan = build_plan(cfg, model);
    EnsembleOptions ens;
    ens.n_traj = cfg.n_traj;
    ens.seed = cfg.seed;
    ens.workers = cfg.workers;
    switch (cfg.method) {
    case Method::exact: return run_exact(model, cfg.exact, plan);
    case Method::mtef: return run_mtef(model, ens, plan);
    case Method::fssh: return run_fssh(model, ens, plan, cfg.fssh);
    case Method::lsc: return run_lsc(model, ens, plan, cfg.mapping);
    case Method::fbts: return run_fbts(model, ens, plan, cfg.mapping);
    case Method::bbgky: return run_bbgky(model, cfg.bbgky, plan, cfg.bbgky_numerics);
    }
    throw ConfigError("run.method: unsupported");
}

Table read_table(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open '" + path + "'");
    std::string line;
    if (!std::getline(in, line) || line.rfind("# ", 0) != 0) throw ConfigError("'" + path + "': missing header line");
    Table t;
    std::istringstream header(line.substr(2));
    for (std::string name; header >> name;) t.columns.push_back(name);
    const std::size_t n = t.columns.size();
    std::vector<double> values;
    std::size_t rows = 0;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::istringstream row(line);
        std::size_t count = 0;
        for (std::string cell; std::getline(row, cell, '\t'); ++count) values.push_back(to_double(path, cell));
        if (count != n) throw ConfigError("'" + path + "': row " + std::to_string(rows + 1) + " has wrong width");
        ++rows;
    }
    t.data.resize(rows, n);
    for (std::size_t i = 0; i < rows; ++i)
        for (std::size_t j = 0; j < n; ++j) t.data(i, j) = values[i * n + j];
    return t;
}

void write_table(const std::string& path, const Table& table) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw ConfigError("cannot write '" + path + "'");
    out << '#';
    for (const std::string& c : table.columns) out << ' ' << c;
    out << '\n';
    for (Eigen::Index i = 0; i < table.data.rows(); ++i) {
        for (Eigen::Index j = 0; j < table.data.cols(); ++j) {
            if (j > 0) out << '\t';
            out << format_double(table.data(i, j));
        }
        out << '\n';
    }
    if (!out) throw NumericGuard("write failed for '" + path + "'");
}

Table populations_table(const ObservableSeries& s) {
    const int K = s.levels();
    Table t;
    t.columns.push_back("t");
    for (int k = 1; k <= K; ++k) t.columns.push_back("p_" + std::to_string(k));
    for (int k = 1; k <= K; ++k) t.columns.push_back("se_" + std::to_string(k));
    t.data.resize(s.times.size(), 1 + 2 * K);
    t.data.col(0) = s.times;
    t.data.middleCols(1, K) = s.populations;
    t.data.rightCols(K) = s.population_se.size() ? s.population_se : Mat::Zero(s.times.size(), K);
    return t;
}

Table intensity_table(const ObservableSeries& s, std::size_t snapshot) {
    Table t;
    t.columns = {"r", "I", "se_I"};
    const Eigen::Index n = s.r_grid.size();
    t.data.resize(n, 3);
    t.data.col(0) = s.r_grid;
    t.data.col(1) = s.intensity.at(snapshot);
    t.data.col(2) = snapshot < s.intensity_se.size() ? s.intensity_se[snapshot] : Vec::Zero(n);
    return t;
}

std::string intensity_file_name(std::size_t snapshot) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "intensity_%03zu.tsv", snapshot);
    return buf;
}

RunOutcome run(const RunConfig& cfg) {
    validate_config(cfg);
    const fs::path dir(cfg.out);
    fs::create_directories(dir);
    const fs::path manifest = dir / "manifest.json";
    fs::remove(manifest);

    nlohmann::ordered_json m;
    m["code_version"] = code_version;
    for (const auto& [key, value] : cfg.items()) m["config"][key] = value;

    RunOutcome outcome;
    const auto start = std::chrono::steady_clock::now();
    try {
        const ObservableSeries series = run_method(cfg);
        write_table((dir / "populations.tsv").string(), populations_table(series));
        outcome.files.push_back("populations.tsv");
        m["files"]["populations.tsv"] = "populations";
        for (std::size_t s = 0; s < series.intensity.size(); ++s) {
            const std::string name = intensity_file_name(s);
            write_table((dir / name).string(), intensity_table(series, s));
            outcome.files.push_back(name);
            m["files"][name] = "intensity at t = " + format_double(series.snapshot_times[s]);
            m["snapshots"][name] = series.snapshot_times[s];
        }
        for (const auto& [key, value] : series.diagnostics) m["diagnostics"][key] = value;
        m["se_summary"]["population_se_max"] =
            series.population_se.size() ? series.population_se.maxCoeff() : 0.0;
        double int_se = 0.0;
        for (const Vec& v : series.intensity_se)
            if (v.size()) int_se = std::max(int_se, v.maxCoeff());
        m["se_summary"]["intensity_se_max"] = int_se;
        m["status"] = "complete";
    } catch (const NumericGuard& e) {
        outcome.status = 3;
        outcome.message = e.what();
        m["status"] = "numeric_guard";
        m["message"] = e.what();
        for (const std::string& f : outcome.files) fs::remove(dir / f);
        outcome.files.clear();
    }
    m["wall_time_s"] = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();

    const fs::path tmp = dir / "manifest.json.tmp";
    {
        std::ofstream out(tmp, std::ios::trunc);
        out << m.dump(2) << '\n';
        if (!out) throw NumericGuard("cannot write manifest");
    }
    fs::rename(tmp, manifest);
    return outcome;
}

namespace {

void compare_tables(const std::string& label, const Table& a, const Table& b, std::vector<CompareEntry>& out) {
    if (a.columns != b.columns) throw ConfigError(label + ": column mismatch");
    if (a.data.rows() != b.data.rows() || a.data.rows() == 0) throw ConfigError(label + ": grid mismatch");
    const Vec ga = a.data.col(0), gb = b.data.col(0);
    for (Eigen::Index i = 0; i < ga.size(); ++i)
        if (std::abs(ga(i) - gb(i)) > 1e-12 * std::max(1.0, std::abs(ga(i)))) throw ConfigError(label + ": grid mismatch");
    for (std::size_t j = 1; j < a.columns.size(); ++j) {
        if (a.columns[j].rfind("se", 0) == 0) continue;
        const Vec d = a.data.col(j) - b.data.col(j);
        out.push_back({label, a.columns[j], d.norm(), d.lpNorm<Eigen::Infinity>()});
    }
}

std::vector<std::string> data_files(const fs::path& dir) {
    std::vector<std::string> out;
    for (const auto& entry : fs::directory_iterator(dir)) {
        const std::string name = entry.path().filename().string();
        if (name == "populations.tsv" || (name.rfind("intensity_", 0) == 0 && entry.path().extension() == ".tsv"))
            out.push_back(name);
    }
    std::sort(out.begin(), out.end());
    return out;
}

} // namespace

std::vector<CompareEntry> compare(const std::string& a, const std::string& b) {
    std::vector<CompareEntry> out;
    if (fs::is_directory(a) != fs::is_directory(b)) throw ConfigError("compare: one directory and one file");
    if (!fs::is_directory(a)) {
        compare_tables(fs::path(a).filename().string(), read_table(a), read_table(b), out);
        return out;
    }
    const std::vector<std::string> files = data_files(a);
    if (files.empty() || files != data_files(b)) throw ConfigError("compare: run directories hold different files");
    for (const std::string& f : files)
        compare_tables(f, read_table((fs::path(a) / f).string()), read_table((fs::path(b) / f).string()), out);
    return out;
}

std::string format_report(const std::vector<CompareEntry>& entries) {
    std::string out = "# file\tcolumn\tl2\tlinf\n";
    char buf[64];
    for (const CompareEntry& e : entries) {
        std::snprintf(buf, sizeof buf, "\t%.6e\t%.6e\n", e.l2, e.linf);
        out += e.file + '\t' + e.column + buf;
    }
    return out;
}

double loglog_slope(const std::vector<double>& x, const std::vector<double>& y) {
    if (x.size() != y.size() || x.size() < 2) throw ConfigError("loglog_slope: need at least two matching points");
    double sx = 0.0, sy = 0.0, sxx = 0.0, sxy = 0.0;
    const double n = static_cast<double>(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) {
        if (!(x[i] > 0.0) || !(y[i] > 0.0)) throw ConfigError("loglog_slope: values must be positive");
        const double lx = std::log(x[i]), ly = std::log(y[i]);
        sx += lx;
        sy += ly;
        sxx += lx * lx;
        sxy += lx * ly;
    }
    const double den = n * sxx - sx * sx;
    if (den == 0.0) throw ConfigError("loglog_slope: x values must differ");
    return (n * sxy - sx * sy) / den;
}

} // namespace cavity
