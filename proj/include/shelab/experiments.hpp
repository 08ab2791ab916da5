#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "shelab/grid_noise.hpp"

namespace shelab {

inline constexpr char const* kArtifactVersion = "1.0.0";

//! One configurable parameter of an experiment with its default.
struct ParamSpec
{
    std::string key;
    std::string default_value;
    std::string help;
};

//! Every experiment kind the runner knows, in a fixed order.
std::vector<std::string> const& experiment_kinds();

//! Parameters of one kind; throws ConfigError for an unknown kind.
std::vector<ParamSpec> const& experiment_params(std::string const& kind);

/*!
 * Fully resolved experiment configuration: every parameter of the kind has a
 * value, either from the settings or the documented default.
 */
class ExperimentConfig
{
  public:
    ExperimentConfig(std::string kind, std::map<std::string, std::string> values);

    std::string const& kind() const noexcept { return kind_; }
    std::map<std::string, std::string> const& values() const noexcept { return values_; }

    // Typed accessors; a malformed value throws ConfigError naming the key.
    std::string const& text(std::string const& key) const;
    double number(std::string const& key) const;
    int integer(std::string const& key) const;
    std::uint64_t unsigned_integer(std::string const& key) const;
    bool flag(std::string const& key) const;
    std::vector<double> numbers(std::string const& key) const;

  private:
    std::string kind_;
    std::map<std::string, std::string> values_;
};

/*!
 * Merges settings over the defaults of `kind`. Keys the kind does not use
 * are rejected with a ConfigError naming the key.
 */
ExperimentConfig resolve_config(std::string const& kind,
                                std::map<std::string, std::string> const& settings);

/*!
 * Parses "key = value" lines with optional "[section]" headers and '#'
 * comments. Section headers only group keys; keys are global and may appear
 * once. Throws ConfigError with the line number on malformed input.
 */
std::map<std::string, std::string> parse_config(std::istream& in);
std::map<std::string, std::string> read_config_file(std::filesystem::path const& path);

//! Shortest decimal text that round-trips the double.
std::string format_number(double value);

struct Table
{
    std::string name;
    std::vector<std::string> columns;
    std::vector<std::vector<std::string>> rows;

    void add(std::vector<std::string> row);
};

struct Verdict
{
    std::string claim_id;
    std::string anchor;     // statement of the mathematical claim being checked
    std::string threshold;  // human-readable pass rule
    double measured = 0.0;
    bool pass = false;
};

struct PersistedNoise
{
    std::string label;
    NoiseField noise;
};

struct ExperimentReport
{
    std::string kind;
    std::map<std::string, std::string> config;
    std::vector<Table> tables;
    std::vector<Verdict> verdicts;
    std::vector<std::string> notes;
    std::vector<PersistedNoise> noise;
    double wall_seconds = 0.0;

    bool passed() const noexcept;
};

//! Runs one experiment. Worker count never changes any table or verdict.
ExperimentReport run_experiment(ExperimentConfig const& config);

/*!
 * Writes <name>.csv per table, verdicts.csv, manifest.json and, when
 * persisted, noise_<label>.bin into `dir` (created if missing).
 */
void write_report(ExperimentReport const& report, std::filesystem::path const& dir);

void write_table_csv(std::ostream& out, Table const& table);
void write_verdicts_csv(std::ostream& out, std::vector<Verdict> const& verdicts);

}  // namespace shelab
