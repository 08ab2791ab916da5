#include <filesystem>
#include <fstream>
#include <sstream>

#include "doctest.h"
#include "json.hpp"
#include "shelab/errors.hpp"
#include "shelab/experiments.hpp"

using namespace shelab;

namespace {

std::string tables_text(ExperimentReport const& r)
{
    std::ostringstream out;
    for (auto const& t : r.tables) {
        write_table_csv(out, t);
    }
    write_verdicts_csv(out, r.verdicts);
    return out.str();
}

std::string slurp(std::filesystem::path const& p)
{
    std::ifstream in(p, std::ios::binary);
    std::ostringstream s;
    s << in.rdbuf();
    return s.str();
}

bool message_names(std::function<void()> const& f, std::string const& needle)
{
    try {
        f();
    } catch (ConfigError const& e) {
        return std::string(e.what()).find(needle) != std::string::npos;
    }
    return false;
}

}  // namespace

TEST_CASE("config text: sections, comments and errors")
{
    std::istringstream in("# experiment\nkind = invariance\n[grid]\ndx = 0.1   # spacing\n\n"
                          "[run]\nreplicas=20\nlambda = 0, 1\n");
    auto const m = parse_config(in);
    CHECK(m.at("kind") == "invariance");
    CHECK(m.at("dx") == "0.1");
    CHECK(m.at("replicas") == "20");
    CHECK(m.at("lambda") == "0, 1");

    std::istringstream dup("dx = 0.1\n[grid]\ndx = 0.2\n");
    CHECK(message_names([&] { parse_config(dup); }, "line 3"));
    std::istringstream bad("dx 0.1\n");
    CHECK(message_names([&] { parse_config(bad); }, "line 1"));
    std::istringstream header("[grid\n");
    CHECK_THROWS_AS(parse_config(header), ConfigError);
}

TEST_CASE("resolution echoes defaults and names offending keys")
{
    auto const c = resolve_config("invariance", {{"replicas", "20"}});
    CHECK(c.integer("replicas") == 20);
    for (auto const& p : experiment_params("invariance")) {
        CHECK(c.values().contains(p.key));
    }
    CHECK(c.numbers("lambda") == std::vector<double>{0.0, 1.0});
    CHECK(c.text("seed") == "7");

    CHECK(message_names([] { resolve_config("invariance", {{"mu", "1"}}); }, "'mu'"));
    CHECK(message_names([] { resolve_config("invariance", {{"kind", "shape"}}); }, "'kind'"));
    CHECK_THROWS_AS(resolve_config("no-such-kind", {}), ConfigError);
    CHECK(message_names([] { resolve_config("invariance", {{"dx", "abc"}}).number("dx"); }, "'dx'"));
    CHECK(message_names([] { resolve_config("invariance", {{"replicas", "2.5"}}).integer("replicas"); },
                        "'replicas'"));
    CHECK(message_names(
        [] { run_experiment(resolve_config("dual-shape", {{"depths", "50"}, {"replicas", "2"}})); },
        "'depths'"));
    CHECK(message_names([] { run_experiment(resolve_config("homogenize", {{"epsilon", "0.5"}})); },
                        "'epsilon'"));
}

TEST_CASE("every kind has a parameter list with the common keys")
{
    CHECK(experiment_kinds().size() == 11);
    for (auto const& kind : experiment_kinds()) {
        auto const c = resolve_config(kind, {});
        CHECK(c.values().contains("seed"));
        CHECK(c.values().contains("workers"));
        CHECK(c.values().contains("persist_noise"));
    }
}

TEST_CASE("number formatting round-trips")
{
    for (double v : {0.1, -1.0 / 24.0, 1e-300, 123456789.125, 0.0}) {
        CHECK(std::stod(format_number(v)) == v);
    }
    CHECK(format_number(2.0) == "2");
}

TEST_CASE("oracle check passes and reports every instance")
{
    auto const r = run_experiment(resolve_config("oracle-check", {{"instances", "20"}}));
    CHECK(r.passed());
    REQUIRE(r.tables.size() == 1);
    CHECK(r.tables[0].rows.size() == 20);
}

TEST_CASE("reports do not depend on the worker count and are byte-reproducible")
{
    std::map<std::string, std::string> s{{"replicas", "6"}, {"lambda", "0.5"}};
    auto const a = run_experiment(resolve_config("invariance", s));
    s["workers"] = "3";
    auto const b = run_experiment(resolve_config("invariance", s));
    CHECK(tables_text(a) == tables_text(b));

    std::map<std::string, std::string> d{{"replicas", "3"}, {"depths", "-6"}};
    auto const c1 = run_experiment(resolve_config("dominance", d));
    d["workers"] = "2";
    auto const c2 = run_experiment(resolve_config("dominance", d));
    CHECK(tables_text(c1) == tables_text(c2));
    CHECK(c1.passed());
}

TEST_CASE("report files: tables, verdicts, manifest and persisted noise")
{
    auto const dir = std::filesystem::temp_directory_path() / "shelab_test_report";
    std::filesystem::remove_all(dir);
    auto const cfg = resolve_config("invariance",
                                    {{"replicas", "4"}, {"persist_noise", "true"}, {"lambda", "0"}});
    auto const r = run_experiment(cfg);
    write_report(r, dir / "a");
    write_report(run_experiment(cfg), dir / "b");
    for (auto const& name : {"statistics.csv", "verdicts.csv"}) {
        CHECK(slurp(dir / "a" / name) == slurp(dir / "b" / name));
    }
    CHECK(std::filesystem::exists(dir / "a" / "noise_replica0.bin"));
    auto const persisted = read_noise(dir / "a" / "noise_replica0.bin");
    CHECK(persisted.values().size() == r.noise.front().noise.values().size());

    auto const manifest = nlohmann::json::parse(slurp(dir / "a" / "manifest.json"));
    CHECK(manifest["experiment"] == "invariance");
    CHECK(manifest["config"]["replicas"] == "4");
    CHECK(manifest["config"]["probe_dx"] == "4");
    CHECK(manifest["verdicts"].size() == r.verdicts.size());
    CHECK(manifest.contains("wall_seconds"));
    CHECK(manifest.contains("artifact_version"));
    std::filesystem::remove_all(dir);
}
