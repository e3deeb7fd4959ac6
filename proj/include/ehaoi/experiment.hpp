#pragma once

// The five experiment commands (analyze, simulate, optimize, sweep,
// compare), each producing a flat table plus the seeds it consumed.

#include <algorithm>
#include <cstdint>
#include <limits>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "ehaoi/aoi.hpp"
#include "ehaoi/io.hpp"
#include "ehaoi/model.hpp"
#include "ehaoi/optimizer.hpp"
#include "ehaoi/simulator.hpp"

namespace ehaoi {

struct CommandOutput {
  Table table;
  std::vector<std::uint64_t> seeds;
};

namespace detail {

inline double optional_or_nan(const std::optional<double>& v) {
  return v ? *v : std::numeric_limits<double>::quiet_NaN();
}

inline SimOptions sim_options(const ExperimentSpec& spec) {
  SimOptions o;
  o.horizon = spec.horizon;
  return o;
}

inline SimStats simulate_spec(const ValidatedConfig& vc, const ExperimentSpec& spec) {
  return simulate_seeds(vc, consecutive_seeds(spec.base_seed, spec.replications), sim_options(spec), spec.threads);
}

inline GridSpec grid_for(const ExperimentSpec& spec) {
  GridSpec g = GridSpec::uniform(spec.grid_step);
  g.objective = spec.approx ? Objective::AnalyticApprox : Objective::AnalyticExact;
  g.time_base = spec.physical ? TimeBase::Physical : TimeBase::Rounds;
  g.simulation.options = sim_options(spec);
  g.simulation.replications = spec.replications;
  g.simulation.base_seed = spec.base_seed;
  return g;
}

inline unsigned thread_count(const ExperimentSpec& spec) {
  return spec.threads ? spec.threads : std::max(1u, std::thread::hardware_concurrency());
}

}  // namespace detail

inline CommandOutput cmd_analyze(const ExperimentSpec& spec) {
  const auto vc = validate_config(spec.config);
  const auto r = vc->mechanism == Mechanism::SA_BASELINE ? sa_baseline_aoi(vc) : network_aoi(vc);
  const double nan = std::numeric_limits<double>::quiet_NaN();
  const IntervalMoments m = r.moments.value_or(IntervalMoments{nan, nan, nan, nan, nan, nan});
  CommandOutput out;
  out.table.columns = {"mechanism", "regime", "p_a",   "z",     "p_ac",  "p_cs",       "p_T",
                       "p_s",       "e_ta",   "e_ta2", "e_te",  "e_te2", "e_t",        "e_t2",
                       "aoi_rounds", "aoi_approx", "aoi_physical", "xi_effective", "fixed_point_iterations"};
  out.table.rows.push_back({std::string(to_string(r.mechanism)), std::string(to_string(r.regime)), r.p_a, r.z,
                            r.probabilities.p_ac, r.probabilities.p_cs, r.probabilities.p_T, r.probabilities.p_s,
                            m.e_ta, m.e_ta2, m.e_te, m.e_te2, m.e_t, m.e_t2, r.aoi_rounds,
                            detail::optional_or_nan(r.approx_aoi_rounds), r.aoi_physical, r.xi_effective,
                            static_cast<std::int64_t>(r.fixed_point_iterations)});
  return out;
}

inline CommandOutput cmd_simulate(const ExperimentSpec& spec) {
  const auto vc = validate_config(spec.config);
  const auto s = detail::simulate_spec(vc, spec);
  CommandOutput out;
  out.seeds = s.seeds;
  out.table.columns = {"mechanism",  "replications", "horizon",     "measured_rounds", "mean_aoi_rounds",
                       "mean_aoi_physical", "ci95",  "attempts",    "successes",       "collisions",
                       "probes",     "empirical_p_s", "empirical_p_T", "empirical_p_a", "energy_consumption_rate"};
  out.table.rows.push_back({std::string(to_string(vc->mechanism)), static_cast<std::int64_t>(s.replications),
                            s.horizon, s.measured_rounds, s.mean_aoi_rounds, s.mean_aoi_physical, s.ci95,
                            static_cast<std::int64_t>(s.attempts), static_cast<std::int64_t>(s.successes),
                            static_cast<std::int64_t>(s.collisions), static_cast<std::int64_t>(s.probes),
                            s.empirical_p_s, s.empirical_p_T, s.empirical_p_a, s.energy_consumption_rate});
  return out;
}

/// Full grid table; the optimum is flagged in the last column.
inline CommandOutput cmd_optimize(const ExperimentSpec& spec) {
  const auto vc = validate_config(spec.config);
  const auto best = grid_search(vc, detail::grid_for(spec), detail::thread_count(spec));
  CommandOutput out;
  out.table.columns = {"q", "eta", "aoi", "regime", "ok", "optimum", "error"};
  for (const auto& p : best.table) {
    const bool optimum = p.ok && p.q == best.q_star && p.eta == best.eta_star;
    out.table.rows.push_back({p.q, p.eta, p.aoi, std::string(p.ok ? to_string(p.regime) : ""),
                              static_cast<std::int64_t>(p.ok), static_cast<std::int64_t>(optimum),
                              p.error});
  }
  return out;
}

inline CommandOutput cmd_sweep(const ExperimentSpec& spec) {
  const auto parameter = parse_sweep_parameter(spec.parameter);
  SweepOptions opt;
  opt.simulate = spec.simulate;
  opt.threads = detail::thread_count(spec);
  const auto rows = sweep(spec.config, parameter, spec.values, detail::grid_for(spec), opt);
  CommandOutput out;
  if (spec.simulate) out.seeds = consecutive_seeds(spec.base_seed, spec.replications);
  out.table.columns = {std::string(to_string(parameter)), "q_star", "eta_star", "regime", "aoi_exact",
                       "aoi_approx", "aoi_simulated", "ci95"};
  for (const auto& r : rows)
    out.table.rows.push_back({r.value, r.q_star, r.eta_star, std::string(to_string(r.regime)), r.aoi_exact,
                              r.aoi_approx, r.aoi_simulated, r.ci95});
  return out;
}

/// Optimizes, analyzes and simulates every mechanism at the configured
/// (n, xi, M, delta). The mechanism, q and eta of the experiment are ignored.
inline CommandOutput cmd_compare(const ExperimentSpec& spec) {
  CommandOutput out;
  out.seeds = consecutive_seeds(spec.base_seed, spec.replications);
  out.table.columns = {"mechanism",     "q_star",         "eta_star", "regime",          "aoi_theory",
                       "aoi_approx",    "aoi_physical",   "aoi_simulated", "ci95",       "sim_aoi_physical",
                       "relative_error", "energy_consumption_rate"};
  ExperimentSpec rounds = spec;
  rounds.physical = false;
  rounds.approx = false;
  for (const auto m : {Mechanism::AUC, Mechanism::RUC, Mechanism::SAFC, Mechanism::SA_BASELINE}) {
    ProtocolConfig c = spec.config;
    c.mechanism = m;
    const auto best = grid_search(validate_config(c), detail::grid_for(rounds), detail::thread_count(spec));
    c.q = best.q_star;
    c.eta = best.eta_star;
    const auto vc = validate_config(c);
    const auto r = m == Mechanism::SA_BASELINE ? sa_baseline_aoi(vc) : network_aoi(vc);
    const auto s = detail::simulate_spec(vc, spec);
    out.table.rows.push_back({std::string(to_string(m)), c.q, c.eta, std::string(to_string(r.regime)),
                              r.aoi_rounds, detail::optional_or_nan(r.approx_aoi_rounds), r.aoi_physical,
                              s.mean_aoi_rounds, s.ci95, s.mean_aoi_physical,
                              (s.mean_aoi_rounds - r.aoi_rounds) / r.aoi_rounds, s.energy_consumption_rate});
  }
  return out;
}

inline CommandOutput run_command(const ExperimentSpec& spec) {
  validate_experiment(spec);
  if (spec.command == "analyze") return cmd_analyze(spec);
  if (spec.command == "simulate") return cmd_simulate(spec);
  if (spec.command == "optimize") return cmd_optimize(spec);
  if (spec.command == "sweep") return cmd_sweep(spec);
  if (spec.command == "compare") return cmd_compare(spec);
  throw ConfigError("command", "unknown command '" + spec.command + "'");
}

}  // namespace ehaoi
