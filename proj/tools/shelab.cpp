#include <cstdio>
#include <exception>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "shelab/errors.hpp"
#include "shelab/experiments.hpp"

namespace {

void print_kinds()
{
    for (auto const& kind : shelab::experiment_kinds()) {
        std::cout << kind << '\n';
        for (auto const& p : shelab::experiment_params(kind)) {
            std::cout << "  " << p.key << " = " << p.default_value << "    # " << p.help << '\n';
        }
    }
}

}  // namespace

int main(int argc, char** argv)
{
    CLI::App app{"Stochastic heat equation / KPZ experiment runner"};
    app.require_subcommand(1);

    auto* list = app.add_subcommand("list", "List experiments and their parameters with defaults");

    auto* run = app.add_subcommand("run", "Run one experiment and write its report");
    std::string kind;
    std::string config_path;
    std::string out_dir;
    std::optional<std::string> seed, workers, lambda, depths, dx, dt, replicas, horizon;
    bool persist = false;
    std::vector<std::string> sets;
    run->add_option("kind", kind, "Experiment kind (or 'kind' in the config file)");
    run->add_option("--config", config_path, "Config file (key = value with [sections])")
        ->check(CLI::ExistingFile);
    run->add_option("--out", out_dir, "Output directory (default results/<kind>)");
    run->add_option("--seed", seed, "Master seed");
    run->add_option("--workers", workers, "Worker threads");
    run->add_option("--lambda", lambda, "Slope list, comma separated");
    run->add_option("--depths", depths, "Depth list, comma separated");
    run->add_option("--dx", dx, "Lattice spacing (a list for the shape ladder)");
    run->add_option("--dt", dt, "Time step");
    run->add_option("--replicas", replicas, "Replica count");
    run->add_option("--horizon", horizon, "Horizon(s)");
    run->add_flag("--persist-noise", persist, "Also write binary noise files");
    run->add_option("--set", sets, "Any parameter as key=value (repeatable)");

    CLI11_PARSE(app, argc, argv);

    if (list->parsed()) {
        print_kinds();
        return 0;
    }

    try {
        std::map<std::string, std::string> settings;
        if (!config_path.empty()) {
            settings = shelab::read_config_file(config_path);
        }
        if (kind.empty()) {
            auto const it = settings.find("kind");
            if (it == settings.end()) {
                throw shelab::ConfigError("no experiment kind given on the command line or in the config");
            }
            kind = it->second;
        }
        auto put = [&](char const* key, std::optional<std::string> const& v) {
            if (v) {
                settings[key] = *v;
            }
        };
        put("seed", seed);
        put("workers", workers);
        put("lambda", lambda);
        put("depths", depths);
        put("dx", dx);
        put("dt", dt);
        put("replicas", replicas);
        put("horizon", horizon);
        if (persist) {
            settings["persist_noise"] = "true";
        }
        for (auto const& s : sets) {
            auto const eq = s.find('=');
            if (eq == std::string::npos || eq == 0) {
                throw shelab::ConfigError("--set expects key=value, got '" + s + "'");
            }
            settings[s.substr(0, eq)] = s.substr(eq + 1);
        }
        auto const config = shelab::resolve_config(kind, settings);
        auto const report = shelab::run_experiment(config);
        std::string const dir = out_dir.empty() ? "results/" + kind : out_dir;
        shelab::write_report(report, dir);
        for (auto const& v : report.verdicts) {
            std::cout << (v.pass ? "PASS " : "FAIL ") << v.claim_id << " | measured "
                      << shelab::format_number(v.measured) << " | " << v.threshold << '\n';
        }
        std::cout << (report.passed() ? "all verdicts pass" : "some verdicts fail") << " ("
                  << report.verdicts.size() << " verdicts, report in " << dir << ")\n";
        return report.passed() ? 0 : 1;
    } catch (shelab::ConfigError const& e) {
        std::cerr << "shelab: configuration error: " << e.what() << '\n';
        return 2;
    } catch (std::exception const& e) {
        std::cerr << "shelab: " << e.what() << '\n';
        return 3;
    }
}
