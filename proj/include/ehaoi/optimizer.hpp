#pragma once

// Grid search over the access parameters (q, eta) and parameter sweeps.

#include <atomic>
#include <cmath>
#include <cstdint>
#include <limits>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include "ehaoi/aoi.hpp"
#include "ehaoi/model.hpp"
#include "ehaoi/simulator.hpp"

namespace ehaoi {

enum class Objective { AnalyticExact, AnalyticApprox, Simulated };

/// Rounds, or physical time (round length 1+delta, arrival rate scaled).
enum class TimeBase { Rounds, Physical };

struct SimulationBudget {
  SimOptions options;
  std::size_t replications = 20;
  std::uint64_t base_seed = 1;
};

struct GridSpec {
  std::vector<double> q_values;
  std::vector<double> eta_values;
  Objective objective = Objective::AnalyticExact;
  TimeBase time_base = TimeBase::Rounds;
  SimulationBudget simulation;  // used by the simulated objective

  /// {step, 2 step, ..., 1} for both parameters.
  static GridSpec uniform(double step) {
    if (!(step > 0.0 && step <= 1.0)) throw ConfigError("grid_step", "grid_step must lie in (0, 1]");
    GridSpec g;
    const auto count = static_cast<int>(std::llround(1.0 / step));
    for (int i = 1; i <= count; ++i) g.q_values.push_back(std::min(1.0, i * step));
    g.eta_values = g.q_values;
    return g;
  }
};

struct GridPoint {
  double q = 0.0;
  double eta = 0.0;
  double aoi = std::numeric_limits<double>::quiet_NaN();
  Regime regime = Regime::ESR;
  bool ok = false;
  std::string error;
};

struct OptimizationResult {
  double q_star = 0.0;
  double eta_star = 0.0;
  double aoi_star = std::numeric_limits<double>::infinity();
  Regime regime = Regime::ESR;
  std::vector<GridPoint> table;  // q-major, in grid order
  std::size_t failures = 0;
};

namespace detail {

inline void validate_grid(const GridSpec& g, Mechanism m) {
  if (g.eta_values.empty() && m != Mechanism::SAFC) throw ConfigError("grid", "eta grid is empty");
  if (g.q_values.empty() && m != Mechanism::SA_BASELINE) throw ConfigError("grid", "q grid is empty");
  if (m != Mechanism::SA_BASELINE)
    for (double q : g.q_values)
      if (!(q > 0.0 && q <= 1.0)) throw ConfigError("grid", "q grid values must lie in (0, 1]");
  for (double e : g.eta_values)
    if (!(e >= 0.0 && e <= 1.0)) throw ConfigError("grid", "eta grid values must lie in [0, 1]");
}

inline double simulated_objective(const ValidatedConfig& vc, const GridSpec& g, double* ci = nullptr) {
  const auto& budget = g.simulation;
  const auto seeds = consecutive_seeds(budget.base_seed, budget.replications);
  if (g.time_base == TimeBase::Rounds || vc->mechanism == Mechanism::SA_BASELINE) {
    const auto r = simulate_seeds(vc, seeds, budget.options);
    if (ci) *ci = r.ci95;
    return r.mean_aoi_rounds;
  }
  bool clamped = false;
  const auto scaled = validate_config(with_scaled_arrival(vc.get(), clamped));
  const auto r = simulate_seeds(scaled, seeds, budget.options);
  const double scale = vc.round_duration().rounds_to_physical;
  if (ci) *ci = scale * r.ci95;
  return scale * r.mean_aoi_rounds;
}

inline double analytic_objective(const ValidatedConfig& vc, Objective objective, TimeBase base,
                                 Regime* regime = nullptr) {
  AoiOptions opt;
  opt.with_physical = false;
  const bool physical = base == TimeBase::Physical && vc->mechanism != Mechanism::SA_BASELINE;
  bool clamped = false;
  const auto target = physical ? validate_config(with_scaled_arrival(vc.get(), clamped)) : vc;
  const double scale = physical ? vc.round_duration().rounds_to_physical : 1.0;
  const auto r = analyze_rounds(target, opt);
  if (regime) *regime = r.regime;
  if (objective == Objective::AnalyticExact) return scale * r.aoi_rounds;
  if (!r.approx_aoi_rounds) throw std::invalid_argument("approx objective: no approximation for SA_BASELINE");
  return scale * *r.approx_aoi_rounds;
}

inline GridPoint evaluate_point(const ProtocolConfig& base, double q, double eta, const GridSpec& g) {
  GridPoint p;
  p.q = q;
  p.eta = eta;
  try {
    ProtocolConfig c = base;
    c.q = q;
    c.eta = eta;
    const auto vc = validate_config(c);
    if (g.objective == Objective::Simulated) {
      AoiOptions opt;
      opt.with_physical = false;
      p.regime = analyze_rounds(vc, opt).regime;
      p.aoi = simulated_objective(vc, g);
    } else {
      p.aoi = analytic_objective(vc, g.objective, g.time_base, &p.regime);
    }
    p.ok = std::isfinite(p.aoi);
    if (!p.ok) p.error = "objective is not finite";
  } catch (const std::exception& e) {
    p.ok = false;
    p.error = e.what();
  }
  return p;
}

/// Whether `a` beats the incumbent `b`: lower AoI, ties to the smaller q,
/// then the smaller eta.
inline bool improves(const GridPoint& a, const GridPoint& b) {
  if (a.aoi != b.aoi) return a.aoi < b.aoi;
  if (a.q != b.q) return a.q < b.q;
  return a.eta < b.eta;
}

}  // namespace detail

/// Evaluates the objective on every grid point and returns the minimizer.
/// SAFC ignores eta and the baseline ignores q, so those axes collapse to a
/// single value (0). Ties go to the smallest q, then the smallest eta.
inline OptimizationResult grid_search(const ValidatedConfig& vc, const GridSpec& grid, unsigned threads = 1) {
  const ProtocolConfig& c = vc.get();
  detail::validate_grid(grid, c.mechanism);
  const std::vector<double> qs =
      c.mechanism == Mechanism::SA_BASELINE ? std::vector<double>{0.0} : grid.q_values;
  const std::vector<double> etas = c.mechanism == Mechanism::SAFC ? std::vector<double>{0.0} : grid.eta_values;

  OptimizationResult out;
  out.table.resize(qs.size() * etas.size());
  if (threads == 0) threads = std::max(1u, std::thread::hardware_concurrency());
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < out.table.size(); i = next++)
      out.table[i] = detail::evaluate_point(c, qs[i / etas.size()], etas[i % etas.size()], grid);
  };
  if (threads <= 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    for (unsigned w = 0; w < threads; ++w) pool.emplace_back(worker);
  }

  const GridPoint* best = nullptr;
  for (const auto& p : out.table) {
    if (!p.ok) {
      ++out.failures;
      continue;
    }
    if (!best || detail::improves(p, *best)) best = &p;
  }
  if (!best)
    throw NumericalError("grid_search: objective failed at every grid point (first error: " +
                         out.table.front().error + ")");
  out.aoi_star = best->aoi;
  out.q_star = best->q;
  out.eta_star = best->eta;
  out.regime = best->regime;
  return out;
}

enum class SweepParameter { N, Xi, Delta };

inline SweepParameter parse_sweep_parameter(std::string_view s) {
  if (s == "n") return SweepParameter::N;
  if (s == "xi") return SweepParameter::Xi;
  if (s == "delta") return SweepParameter::Delta;
  throw ConfigError("parameter", "sweep parameter must be one of n, xi, delta");
}

inline std::string_view to_string(SweepParameter p) {
  switch (p) {
    case SweepParameter::N: return "n";
    case SweepParameter::Xi: return "xi";
    case SweepParameter::Delta: return "delta";
  }
  return "?";
}

struct SweepRow {
  double value = 0.0;
  double q_star = 0.0;
  double eta_star = 0.0;
  double aoi_exact = std::numeric_limits<double>::quiet_NaN();
  double aoi_approx = std::numeric_limits<double>::quiet_NaN();
  double aoi_simulated = std::numeric_limits<double>::quiet_NaN();
  double ci95 = std::numeric_limits<double>::quiet_NaN();
  Regime regime = Regime::ESR;
};

struct SweepOptions {
  bool simulate = false;  // fill aoi_simulated with grid.simulation's budget
  unsigned threads = 1;
};

inline ProtocolConfig with_parameter(ProtocolConfig c, SweepParameter p, double value) {
  switch (p) {
    case SweepParameter::N: c.n = static_cast<int>(std::llround(value)); break;
    case SweepParameter::Xi: c.xi = value; break;
    case SweepParameter::Delta: c.delta = value; break;
  }
  return c;
}

/// Re-optimizes (q, eta) at every value of the swept parameter. Values are
/// reported in the grid's time base.
inline std::vector<SweepRow> sweep(const ProtocolConfig& base, SweepParameter parameter,
                                   const std::vector<double>& values, const GridSpec& grid,
                                   const SweepOptions& opt = {}) {
  if (values.empty()) throw ConfigError("values", "sweep needs at least one value");
  std::vector<SweepRow> rows;
  for (double v : values) {
    const auto vc = validate_config(with_parameter(base, parameter, v));
    const auto best = grid_search(vc, grid, opt.threads);
    ProtocolConfig at = vc.get();
    at.q = best.q_star;
    at.eta = best.eta_star;
    const auto vat = validate_config(at);

    SweepRow row;
    row.value = v;
    row.q_star = best.q_star;
    row.eta_star = best.eta_star;
    row.aoi_exact = detail::analytic_objective(vat, Objective::AnalyticExact, grid.time_base, &row.regime);
    if (at.mechanism != Mechanism::SA_BASELINE)
      row.aoi_approx = detail::analytic_objective(vat, Objective::AnalyticApprox, grid.time_base);
    if (opt.simulate) row.aoi_simulated = detail::simulated_objective(vat, grid, &row.ci95);
    rows.push_back(row);
  }
  return rows;
}

}  // namespace ehaoi
