#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <istream>
#include <ostream>
#include <set>
#include <sstream>

#include "json.hpp"
#include "shelab/errors.hpp"
#include "shelab/experiments.hpp"

namespace shelab {

namespace {

std::string trim(std::string const& s)
{
    auto const b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) {
        return {};
    }
    auto const e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

double parse_double(std::string const& key, std::string const& text)
{
    std::string const t = trim(text);
    double v = 0.0;
    auto const [ptr, ec] = std::from_chars(t.data(), t.data() + t.size(), v);
    if (t.empty() || ec != std::errc{} || ptr != t.data() + t.size() || !std::isfinite(v)) {
        throw ConfigError("key '" + key + "': expected a number, got '" + text + "'");
    }
    return v;
}

std::string csv_field(std::string const& s)
{
    if (s.find_first_of(",\"\n") == std::string::npos) {
        return s;
    }
    std::string out = "\"";
    for (char c : s) {
        if (c == '"') {
            out += '"';
        }
        out += c;
    }
    return out + "\"";
}

}  // namespace

ExperimentConfig::ExperimentConfig(std::string kind, std::map<std::string, std::string> values)
    : kind_(std::move(kind)), values_(std::move(values))
{
}

std::string const& ExperimentConfig::text(std::string const& key) const
{
    auto const it = values_.find(key);
    if (it == values_.end()) {
        throw ConfigError("key '" + key + "' is not defined for experiment '" + kind_ + "'");
    }
    return it->second;
}

double ExperimentConfig::number(std::string const& key) const
{
    return parse_double(key, text(key));
}

int ExperimentConfig::integer(std::string const& key) const
{
    double const v = number(key);
    if (v != std::floor(v) || std::abs(v) > 2e9) {
        throw ConfigError("key '" + key + "': expected an integer, got '" + text(key) + "'");
    }
    return static_cast<int>(v);
}

std::uint64_t ExperimentConfig::unsigned_integer(std::string const& key) const
{
    std::string const t = trim(text(key));
    std::uint64_t v = 0;
    auto const [ptr, ec] = std::from_chars(t.data(), t.data() + t.size(), v);
    if (t.empty() || ec != std::errc{} || ptr != t.data() + t.size()) {
        throw ConfigError("key '" + key + "': expected a nonnegative integer, got '" + t + "'");
    }
    return v;
}

bool ExperimentConfig::flag(std::string const& key) const
{
    std::string const t = trim(text(key));
    if (t == "true" || t == "1" || t == "yes") {
        return true;
    }
    if (t == "false" || t == "0" || t == "no") {
        return false;
    }
    throw ConfigError("key '" + key + "': expected true or false, got '" + t + "'");
}

std::vector<double> ExperimentConfig::numbers(std::string const& key) const
{
    std::vector<double> out;
    std::stringstream ss(text(key));
    std::string item;
    while (std::getline(ss, item, ',')) {
        out.push_back(parse_double(key, item));
    }
    if (out.empty()) {
        throw ConfigError("key '" + key + "': expected a comma-separated list of numbers");
    }
    return out;
}

ExperimentConfig resolve_config(std::string const& kind,
                                std::map<std::string, std::string> const& settings)
{
    auto const& params = experiment_params(kind);
    std::map<std::string, std::string> values;
    for (auto const& p : params) {
        values[p.key] = p.default_value;
    }
    for (auto const& [key, value] : settings) {
        if (key == "kind") {
            if (trim(value) != kind) {
                throw ConfigError("key 'kind': config is for '" + trim(value)
                                  + "' but the experiment is '" + kind + "'");
            }
            continue;
        }
        if (!values.contains(key)) {
            throw ConfigError("key '" + key + "' is not used by experiment '" + kind + "'");
        }
        values[key] = trim(value);
    }
    return ExperimentConfig(kind, std::move(values));
}

std::map<std::string, std::string> parse_config(std::istream& in)
{
    std::map<std::string, std::string> out;
    std::string line;
    int number = 0;
    while (std::getline(in, line)) {
        ++number;
        auto const hash = line.find('#');
        std::string const body = trim(hash == std::string::npos ? line : line.substr(0, hash));
        if (body.empty()) {
            continue;
        }
        if (body.front() == '[') {
            if (body.back() != ']' || trim(body.substr(1, body.size() - 2)).empty()) {
                throw ConfigError("config line " + std::to_string(number)
                                  + ": malformed section header");
            }
            continue;
        }
        auto const eq = body.find('=');
        if (eq == std::string::npos) {
            throw ConfigError("config line " + std::to_string(number) + ": expected key = value");
        }
        std::string const key = trim(body.substr(0, eq));
        std::string const value = trim(body.substr(eq + 1));
        if (key.empty()) {
            throw ConfigError("config line " + std::to_string(number) + ": empty key");
        }
        if (!out.emplace(key, value).second) {
            throw ConfigError("config line " + std::to_string(number) + ": key '" + key
                              + "' defined twice");
        }
    }
    return out;
}

std::map<std::string, std::string> read_config_file(std::filesystem::path const& path)
{
    std::ifstream in(path);
    if (!in) {
        throw ConfigError("cannot read config file " + path.string());
    }
    return parse_config(in);
}

std::string format_number(double value)
{
    if (std::isnan(value)) {
        return "nan";
    }
    if (std::isinf(value)) {
        return value > 0 ? "inf" : "-inf";
    }
    char buf[64];
    auto const [ptr, ec] = std::to_chars(buf, buf + sizeof buf, value);
    return std::string(buf, ptr);
}

void Table::add(std::vector<std::string> row)
{
    if (row.size() != columns.size()) {
        throw ConfigError("table '" + name + "' row has the wrong number of columns");
    }
    rows.push_back(std::move(row));
}

bool ExperimentReport::passed() const noexcept
{
    return std::all_of(verdicts.begin(), verdicts.end(), [](Verdict const& v) { return v.pass; });
}

void write_table_csv(std::ostream& out, Table const& table)
{
    for (std::size_t i = 0; i < table.columns.size(); ++i) {
        out << (i ? "," : "") << csv_field(table.columns[i]);
    }
    out << '\n';
    for (auto const& row : table.rows) {
        for (std::size_t i = 0; i < row.size(); ++i) {
            out << (i ? "," : "") << csv_field(row[i]);
        }
        out << '\n';
    }
}

void write_verdicts_csv(std::ostream& out, std::vector<Verdict> const& verdicts)
{
    out << "claim_id,anchor,threshold,measured,pass\n";
    for (auto const& v : verdicts) {
        out << csv_field(v.claim_id) << ',' << csv_field(v.anchor) << ','
            << csv_field(v.threshold) << ',' << format_number(v.measured) << ','
            << (v.pass ? "pass" : "fail") << '\n';
    }
}

void write_report(ExperimentReport const& report, std::filesystem::path const& dir)
{
    std::filesystem::create_directories(dir);
    auto open = [&](std::string const& name) {
        std::ofstream out(dir / name, std::ios::binary);
        if (!out) {
            throw ConfigError("cannot write " + (dir / name).string());
        }
        return out;
    };
    for (auto const& table : report.tables) {
        auto out = open(table.name + ".csv");
        write_table_csv(out, table);
    }
    {
        auto out = open("verdicts.csv");
        write_verdicts_csv(out, report.verdicts);
    }
    for (auto const& p : report.noise) {
        write_noise(p.noise, dir / ("noise_" + p.label + ".bin"));
    }

    nlohmann::ordered_json manifest;
    manifest["experiment"] = report.kind;
    manifest["artifact_version"] = kArtifactVersion;
    manifest["seed"] = report.config.contains("seed") ? report.config.at("seed") : "";
    manifest["config"] = nlohmann::ordered_json::object();
    for (auto const& [k, v] : report.config) {
        manifest["config"][k] = v;
    }
    manifest["wall_seconds"] = report.wall_seconds;
    manifest["tables"] = nlohmann::ordered_json::array();
    for (auto const& table : report.tables) {
        manifest["tables"].push_back(table.name + ".csv");
    }
    manifest["verdicts"] = nlohmann::ordered_json::array();
    for (auto const& v : report.verdicts) {
        nlohmann::ordered_json j;
        j["claim_id"] = v.claim_id;
        j["anchor"] = v.anchor;
        j["threshold"] = v.threshold;
        j["measured"] = v.measured;
        j["pass"] = v.pass;
        manifest["verdicts"].push_back(std::move(j));
    }
    manifest["notes"] = report.notes;
    manifest["passed"] = report.passed();
    auto out = open("manifest.json");
    out << manifest.dump(2) << '\n';
}

}  // namespace shelab
