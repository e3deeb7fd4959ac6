#include <cstdint>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"

#include "ehaoi/energy_chain.hpp"
#include "ehaoi/experiment.hpp"
#include "ehaoi/io.hpp"
#include "ehaoi/model.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitNumerical = 1;
constexpr int kExitInvalid = 2;

struct Flags {
  std::string config_path;
  std::optional<int> n;
  std::optional<double> xi;
  std::optional<int> M;
  std::optional<double> delta;
  std::optional<std::string> mechanism;
  std::optional<double> q;
  std::optional<double> eta;
  std::optional<std::int64_t> horizon;
  std::optional<std::size_t> replications;
  std::optional<std::uint64_t> seed;
  std::optional<double> grid_step;
  std::optional<std::string> output;
  std::optional<std::string> format;
  std::optional<std::string> parameter;
  std::optional<std::string> values;
  std::optional<unsigned> threads;
  bool simulate = false;
  bool physical = false;
  bool approx = false;
};

void add_flags(CLI::App& sub, Flags& f) {
  sub.add_option("--config", f.config_path, "key=value config file; flags override its entries");
  sub.add_option("--n", f.n, "number of source nodes");
  sub.add_option("--xi", f.xi, "energy arrival probability per round");
  sub.add_option("--M", f.M, "energy units per data transmission");
  sub.add_option("--delta", f.delta, "probing slot length relative to the data slot");
  sub.add_option("--mechanism", f.mechanism, "AUC, RUC, SAFC or SA_BASELINE");
  sub.add_option("--q", f.q, "probing probability");
  sub.add_option("--eta", f.eta, "fallback access probability");
  sub.add_option("--horizon", f.horizon, "simulated rounds per replication");
  sub.add_option("--replications", f.replications, "independent replications");
  sub.add_option("--seed", f.seed, "first seed; replication k uses seed + k");
  sub.add_option("--grid-step", f.grid_step, "grid spacing for q and eta");
  sub.add_option("--output", f.output, "also write the table to this file");
  sub.add_option("--format", f.format, "csv or json");
  sub.add_option("--threads", f.threads, "worker threads (0: all cores)");
  sub.add_flag("--physical", f.physical, "optimize physical-time AoI");
  sub.add_flag("--approx", f.approx, "optimize the closed-form approximation");
}

ehaoi::ExperimentSpec resolve(const std::string& command, const Flags& f) {
  ehaoi::ExperimentSpec spec;
  if (!f.config_path.empty()) {
    std::ifstream in(f.config_path);
    if (!in) throw ehaoi::ConfigError("config", "cannot open config file '" + f.config_path + "'");
    ehaoi::read_config(in, spec);
  }
  spec.command = command;
  auto& c = spec.config;
  if (f.n) c.n = *f.n;
  if (f.xi) c.xi = *f.xi;
  if (f.M) c.M = *f.M;
  if (f.delta) c.delta = *f.delta;
  if (f.mechanism) c.mechanism = ehaoi::parse_mechanism(*f.mechanism);
  if (f.q) c.q = *f.q;
  if (f.eta) c.eta = *f.eta;
  if (f.horizon) spec.horizon = *f.horizon;
  if (f.replications) spec.replications = *f.replications;
  if (f.seed) spec.base_seed = *f.seed;
  if (f.grid_step) spec.grid_step = *f.grid_step;
  if (f.output) spec.output_path = *f.output;
  if (f.format) spec.format = ehaoi::parse_output_format(*f.format);
  if (f.parameter) spec.parameter = *f.parameter;
  if (f.values) spec.values = ehaoi::parse_value_list(*f.values);
  if (f.threads) spec.threads = *f.threads;
  spec.simulate = spec.simulate || f.simulate;
  spec.physical = spec.physical || f.physical;
  spec.approx = spec.approx || f.approx;
  return spec;
}

int run(const ehaoi::ExperimentSpec& spec) {
  const auto result = ehaoi::run_command(spec);
  const auto stamp = ehaoi::utc_timestamp();
  ehaoi::write_table(std::cout, spec, result.seeds, result.table, stamp);
  if (!spec.output_path.empty()) {
    std::ofstream out(spec.output_path);
    if (!out) throw ehaoi::ConfigError("output", "cannot write '" + spec.output_path + "'");
    ehaoi::write_table(out, spec, result.seeds, result.table, stamp);
  }
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Age of information of energy-harvesting random access"};
  app.require_subcommand(1);
  Flags flags;
  const std::pair<const char*, const char*> commands[] = {
      {"analyze", "closed-form analysis of one configuration"},
      {"simulate", "Monte-Carlo replications of one configuration"},
      {"optimize", "grid search over (q, eta)"},
      {"sweep", "re-optimize across values of n, xi or delta"},
      {"compare", "optimize, analyze and simulate every mechanism"},
  };
  for (const auto& [name, help] : commands) {
    auto* sub = app.add_subcommand(name, help);
    add_flags(*sub, flags);
    if (std::string(name) == "sweep") {
      sub->add_option("--parameter", flags.parameter, "n, xi or delta");
      sub->add_option("--values", flags.values, "comma-separated values");
      sub->add_flag("--simulate", flags.simulate, "add a simulated column at each optimum");
    }
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? kExitOk : kExitInvalid;
  }

  try {
    return run(resolve(app.get_subcommands().front()->get_name(), flags));
  } catch (const ehaoi::ConfigError& e) {
    std::cerr << "error: invalid " << e.field() << ": " << e.what() << '\n';
    return kExitInvalid;
  } catch (const ehaoi::NumericalError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitNumerical;
  } catch (const ehaoi::UnstableChainError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitNumerical;
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitInvalid;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitNumerical;
  }
}
