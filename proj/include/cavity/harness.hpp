#pragma once

#include <iosfwd>
#include <map>
#include <string>
#include <vector>

#include "cavity/bbgky.hpp"
#include "cavity/ci.hpp"
#include "cavity/ensemble.hpp"
#include "cavity/fssh.hpp"
#include "cavity/mapping.hpp"
#include "cavity/model.hpp"
#include "cavity/mtef.hpp"

namespace cavity {

inline constexpr const char* code_version = "cavity-sim 1.0.0";

enum class Method { exact, mtef, fssh, lsc, fbts, bbgky };

std::string method_name(Method m);
Method parse_method(const std::string& name);  // throws ConfigError
bool is_trajectory_method(Method m);

struct RunConfig {
    // [model]
    int levels{2};
    int n_modes{400};
    double scale{1.0};
    bool rescale_coupling{true};
    bool rwa{false};
    bool single_mode{false};   // resonant one-mode oracle model, ignores n_modes and scale
    double coupling{-1.0};     // |lambda| override; negative keeps the model default

    // [run]
    Method method{Method::exact};
    double dt{0.05};
    double t_final{0.0};
    std::vector<double> snapshots;
    int r_points{2048};
    int output_every{1};
    IntensityKind intensity{IntensityKind::full};
    std::uint64_t n_traj{1000};
    std::uint64_t seed{1};
    int workers{1};
    std::string out{"out"};

    ExactOptions exact;
    CorrectionFlags bbgky;
    BBGKYOptions bbgky_numerics;
    MappingOptions mapping;
    FsshOptions fssh;

    // Flat `section.key = value` echo, in key order.
    std::map<std::string, std::string> items() const;
};

// INI-style text: `key = value` lines under [model], [run], [exact], [bbgky],
// [mapping], [fssh]. Unknown sections or keys and malformed values throw
// ConfigError naming the offending field.
RunConfig parse_config(std::istream& in);
RunConfig load_config(const std::string& path);

// Cross-field checks (snapshot range, dt grid, positive sizes); throws ConfigError.
void validate_config(const RunConfig& cfg);

ModelSpec build_model(const RunConfig& cfg);
OutputPlan build_plan(const RunConfig& cfg, const ModelSpec& model);

// Dispatches to the selected propagator.
ObservableSeries run_method(const RunConfig& cfg);

// Columnar text: one `# name name ...` header line, tab separated, %.17g.
struct Table {
    std::vector<std::string> columns;
    Mat data;
};
Table read_table(const std::string& path);
void write_table(const std::string& path, const Table& table);
Table populations_table(const ObservableSeries& s);           // t, p_1..p_K, se_1..se_K
Table intensity_table(const ObservableSeries& s, std::size_t snapshot);  // r, I, se_I
std::string intensity_file_name(std::size_t snapshot);

struct RunOutcome {
    int status{0};  // 0 success, 3 numeric guard
    std::vector<std::string> files;
    std::string message;
};

// Validates, runs, writes data files into cfg.out and finally manifest.json.
// The manifest is replaced atomically and records the status; on a numeric
// guard no data files are written and the manifest says so.
RunOutcome run(const RunConfig& cfg);

struct CompareEntry {
    std::string file, column;
    double l2{0.0}, linf{0.0};
};

// Deltas of every value column (SE columns excluded) of two tables, or of the
// populations and intensity files of two run directories. Throws ConfigError
// when grids or columns differ.
std::vector<CompareEntry> compare(const std::string& a, const std::string& b);
std::string format_report(const std::vector<CompareEntry>& entries);

// Least-squares slope of log(y) against log(x).
double loglog_slope(const std::vector<double>& x, const std::vector<double>& y);

} // namespace cavity
