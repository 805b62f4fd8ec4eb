#include <CLI11.hpp>

#include <cstdio>
#include <iostream>
#include <optional>

#include "cavity/harness.hpp"

namespace {

struct Overrides {
    std::optional<std::uint64_t> seed;
    std::optional<int> workers;
    std::optional<std::string> out;

    void apply(cavity::RunConfig& cfg) const {
        if (seed) cfg.seed = *seed;
        if (workers) cfg.workers = *workers;
        if (out) cfg.out = *out;
    }
};

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Few-level atom in a multimode cavity: exact and trajectory propagators"};
    app.require_subcommand(1);
    Overrides ov;
    std::string config, file_a, file_b;
    std::optional<double> tol;

    auto add_overrides = [&](CLI::App* sub) {
        sub->add_option("--seed", ov.seed, "master seed");
        sub->add_option("--workers", ov.workers, "worker threads")->check(CLI::PositiveNumber);
        sub->add_option("--out", ov.out, "output directory");
    };
    CLI::App* run = app.add_subcommand("run", "run a configuration and write its output files");
    run->add_option("config", config, "configuration file")->required();
    add_overrides(run);
    CLI::App* validate = app.add_subcommand("validate", "check a configuration without running it");
    validate->add_option("config", config, "configuration file")->required();
    add_overrides(validate);
    CLI::App* compare = app.add_subcommand("compare", "L2 and max deltas between two runs or files");
    compare->add_option("a", file_a, "run directory or data file")->required();
    compare->add_option("b", file_b, "run directory or data file")->required();
    compare->add_option("--tol", tol, "fail when any max delta exceeds this value");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    try {
        if (*run || *validate) {
            cavity::RunConfig cfg = cavity::load_config(config);
            ov.apply(cfg);
            if (*validate) {
                cavity::validate_config(cfg);
                std::cout << "valid: method " << cavity::method_name(cfg.method) << ", "
                          << cavity::build_model(cfg).modes() << " modes\n";
                return 0;
            }
            const cavity::RunOutcome outcome = cavity::run(cfg);
            if (outcome.status != 0) {
                std::cerr << "numeric guard: " << outcome.message << '\n';
                return outcome.status;
            }
            for (const std::string& f : outcome.files) std::cout << cfg.out << '/' << f << '\n';
            return 0;
        }
        const auto entries = cavity::compare(file_a, file_b);
        std::cout << cavity::format_report(entries);
        if (tol)
            for (const auto& e : entries)
                if (e.linf > *tol) {
                    std::cerr << "tolerance exceeded: " << e.file << ' ' << e.column << '\n';
                    return 1;
                }
        return 0;
    } catch (const cavity::ConfigError& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return 2;
    } catch (const cavity::NumericGuard& e) {
        std::cerr << "numeric guard: " << e.what() << '\n';
        return 3;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
}
