#pragma once

// Experiment description, flat key=value config files, and the tabular
// CSV / JSON output written by the command-line tool.

#include <charconv>
#include <cmath>
#include <cstdint>
#include <ctime>
#include <istream>
#include <ostream>
#include <sstream>
#include <string>
#include <string_view>
#include <system_error>
#include <type_traits>
#include <variant>
#include <vector>

#include "json.hpp"

#include "ehaoi/model.hpp"

namespace ehaoi {

enum class OutputFormat { Csv, Json };

inline OutputFormat parse_output_format(std::string_view s) {
  if (s == "csv") return OutputFormat::Csv;
  if (s == "json") return OutputFormat::Json;
  throw ConfigError("format", "format must be csv or json");
}

struct ExperimentSpec {
  ProtocolConfig config;
  std::string command;
  std::int64_t horizon = 100'000;
  std::size_t replications = 20;
  std::uint64_t base_seed = 1;
  double grid_step = 0.01;
  std::string output_path;
  OutputFormat format = OutputFormat::Csv;
  std::string parameter;       // sweep only
  std::vector<double> values;  // sweep only
  bool simulate = false;       // sweep: add simulated column
  bool physical = false;       // optimize/sweep: physical time base
  bool approx = false;         // optimize: approximate objective
  unsigned threads = 0;        // 0: hardware concurrency
};

namespace detail {

inline std::string_view trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

template <class T>
T parse_number(std::string_view text, const std::string& field) {
  T value{};
  const auto* end = text.data() + text.size();
  const auto [ptr, ec] = std::from_chars(text.data(), end, value);
  if (text.empty() || ec != std::errc() || ptr != end)
    throw ConfigError(field, field + ": cannot parse '" + std::string(text) + "'");
  return value;
}

inline bool parse_bool(std::string_view text, const std::string& field) {
  if (text == "true" || text == "1" || text == "yes") return true;
  if (text == "false" || text == "0" || text == "no") return false;
  throw ConfigError(field, field + ": expected true or false, got '" + std::string(text) + "'");
}

inline std::vector<double> parse_list(std::string_view text, const std::string& field) {
  std::vector<double> out;
  while (!text.empty()) {
    const auto comma = text.find(',');
    out.push_back(parse_number<double>(trim(text.substr(0, comma)), field));
    if (comma == std::string_view::npos) break;
    text.remove_prefix(comma + 1);
  }
  if (out.empty()) throw ConfigError(field, field + ": empty list");
  return out;
}

}  // namespace detail

inline std::vector<double> parse_value_list(std::string_view text) {
  return detail::parse_list(detail::trim(text), "values");
}

/// Assigns one key of the flat config format.
inline void apply_setting(ExperimentSpec& spec, const std::string& key, std::string_view value) {
  using detail::parse_number;
  auto& c = spec.config;
  if (key == "n") c.n = parse_number<int>(value, key);
  else if (key == "xi") c.xi = parse_number<double>(value, key);
  else if (key == "M") c.M = parse_number<int>(value, key);
  else if (key == "delta") c.delta = parse_number<double>(value, key);
  else if (key == "q") c.q = parse_number<double>(value, key);
  else if (key == "eta") c.eta = parse_number<double>(value, key);
  else if (key == "mechanism") c.mechanism = parse_mechanism(value);
  else if (key == "horizon") spec.horizon = parse_number<std::int64_t>(value, key);
  else if (key == "replications") spec.replications = parse_number<std::size_t>(value, key);
  else if (key == "seed") spec.base_seed = parse_number<std::uint64_t>(value, key);
  else if (key == "grid_step") spec.grid_step = parse_number<double>(value, key);
  else if (key == "format") spec.format = parse_output_format(value);
  else if (key == "output") spec.output_path = std::string(value);
  else if (key == "parameter") spec.parameter = std::string(value);
  else if (key == "values") spec.values = detail::parse_list(value, key);
  else if (key == "simulate") spec.simulate = detail::parse_bool(value, key);
  else if (key == "physical") spec.physical = detail::parse_bool(value, key);
  else if (key == "approx") spec.approx = detail::parse_bool(value, key);
  else if (key == "threads") spec.threads = parse_number<unsigned>(value, key);
  else throw ConfigError(key, "unknown config key '" + key + "'");
}

/// Reads `key = value` lines. Blank lines and `#` comments are skipped.
inline void read_config(std::istream& in, ExperimentSpec& spec) {
  std::string line;
  int number = 0;
  while (std::getline(in, line)) {
    ++number;
    std::string_view text = line;
    if (const auto hash = text.find('#'); hash != std::string_view::npos) text = text.substr(0, hash);
    text = detail::trim(text);
    if (text.empty()) continue;
    const auto eq = text.find('=');
    if (eq == std::string_view::npos)
      throw ConfigError("line " + std::to_string(number),
                        "config line " + std::to_string(number) + ": expected key = value");
    const std::string key(detail::trim(text.substr(0, eq)));
    if (key.empty())
      throw ConfigError("line " + std::to_string(number),
                        "config line " + std::to_string(number) + ": missing key");
    apply_setting(spec, key, detail::trim(text.substr(eq + 1)));
  }
}

/// Checks the simulation and sweep controls; the protocol parameters are
/// checked by validate_config.
inline void validate_experiment(const ExperimentSpec& spec) {
  const bool simulates = spec.command == "simulate" || spec.command == "compare" ||
                         (spec.command == "sweep" && spec.simulate);
  if (simulates && spec.horizon < 1) throw ConfigError("horizon", "horizon must be >= 1");
  if (simulates && spec.replications < 1) throw ConfigError("replications", "replications must be >= 1");
  if (!(spec.grid_step > 0.0 && spec.grid_step <= 1.0))
    throw ConfigError("grid_step", "grid_step must lie in (0, 1]");
  if (spec.command == "sweep") {
    if (spec.parameter.empty()) throw ConfigError("parameter", "sweep needs --parameter");
    if (spec.values.empty()) throw ConfigError("values", "sweep needs --values");
  }
}

/// One table cell. Doubles are written in shortest round-trip form.
using Cell = std::variant<std::string, std::int64_t, double>;

struct Table {
  std::vector<std::string> columns;
  std::vector<std::vector<Cell>> rows;
};

inline std::string format_double(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[64];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, ptr);
}

inline std::string csv_escape(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char ch : s) out += ch == '"' ? std::string("\"\"") : std::string(1, ch);
  return out + "\"";
}

inline std::string format_cell(const Cell& cell) {
  if (const auto* s = std::get_if<std::string>(&cell)) return csv_escape(*s);
  if (const auto* i = std::get_if<std::int64_t>(&cell)) return std::to_string(*i);
  return format_double(std::get<double>(cell));
}

/// Ordered key/value pairs of the resolved configuration.
inline std::vector<std::pair<std::string, std::string>> describe(const ExperimentSpec& spec) {
  const auto& c = spec.config;
  std::vector<std::pair<std::string, std::string>> kv = {
      {"command", spec.command},
      {"mechanism", std::string(to_string(c.mechanism))},
      {"n", std::to_string(c.n)},
      {"xi", format_double(c.xi)},
      {"M", std::to_string(c.M)},
      {"delta", format_double(c.delta)},
      {"q", format_double(c.q)},
      {"eta", format_double(c.eta)},
      {"horizon", std::to_string(spec.horizon)},
      {"replications", std::to_string(spec.replications)},
      {"seed", std::to_string(spec.base_seed)},
      {"grid_step", format_double(spec.grid_step)},
      {"time_base", spec.physical ? "physical" : "rounds"},
      {"objective", spec.approx ? "approx" : "exact"},
  };
  if (spec.command == "sweep") {
    std::string values;
    for (double v : spec.values) values += (values.empty() ? "" : ",") + format_double(v);
    kv.emplace_back("parameter", spec.parameter);
    kv.emplace_back("values", values);
    kv.emplace_back("simulate", spec.simulate ? "true" : "false");
  }
  return kv;
}

inline std::string utc_timestamp() {
  const std::time_t now = std::time(nullptr);
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

/// Comment header (timestamp, resolved config, seeds), then one header row
/// and one line per table row.
inline void write_csv(std::ostream& out, const ExperimentSpec& spec, const std::vector<std::uint64_t>& seeds,
                      const Table& table, const std::string& timestamp) {
  out << "# generated " << timestamp << '\n';
  out << "# config";
  for (const auto& [k, v] : describe(spec)) out << ' ' << k << '=' << v;
  out << '\n';
  out << "# seeds";
  for (auto s : seeds) out << ' ' << s;
  out << '\n';
  for (std::size_t i = 0; i < table.columns.size(); ++i) out << (i ? "," : "") << table.columns[i];
  out << '\n';
  for (const auto& row : table.rows) {
    for (std::size_t i = 0; i < row.size(); ++i) out << (i ? "," : "") << format_cell(row[i]);
    out << '\n';
  }
}

inline nlohmann::ordered_json to_json(const ExperimentSpec& spec, const std::vector<std::uint64_t>& seeds,
                                      const Table& table, const std::string& timestamp) {
  nlohmann::ordered_json j;
  j["generated"] = timestamp;
  auto& config = j["config"] = nlohmann::ordered_json::object();
  for (const auto& [k, v] : describe(spec)) config[k] = v;
  j["seeds"] = seeds;
  j["columns"] = table.columns;
  auto& rows = j["rows"] = nlohmann::ordered_json::array();
  for (const auto& row : table.rows) {
    nlohmann::ordered_json r = nlohmann::ordered_json::object();
    for (std::size_t i = 0; i < row.size(); ++i) {
      std::visit(
          [&](const auto& v) {
            using V = std::decay_t<decltype(v)>;
            if constexpr (std::is_same_v<V, double>)
              r[table.columns[i]] = std::isfinite(v) ? nlohmann::ordered_json(v) : nlohmann::ordered_json(nullptr);
            else
              r[table.columns[i]] = v;
          },
          row[i]);
    }
    rows.push_back(std::move(r));
  }
  return j;
}

inline void write_table(std::ostream& out, const ExperimentSpec& spec, const std::vector<std::uint64_t>& seeds,
                        const Table& table, const std::string& timestamp) {
  if (spec.format == OutputFormat::Csv) {
    write_csv(out, spec, seeds, table, timestamp);
  } else {
    out << to_json(spec, seeds, table, timestamp).dump(2) << '\n';
  }
}

}  // namespace ehaoi
