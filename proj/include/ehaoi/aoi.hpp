#pragma once

// Network-average Age of Information from the energy chain: access and
// success probabilities, energy deficit after a transmission, renewal
// interval moments, exact and approximate AoI, physical-time mapping and
// the EH slotted ALOHA baseline.

#include <cmath>
#include <limits>
#include <optional>
#include <stdexcept>
#include <vector>

#include "ehaoi/energy_chain.hpp"
#include "ehaoi/model.hpp"

namespace ehaoi {

struct AccessProbabilities {
  double p_ac = 0.0;  // data-slot access probability after a failed reservation
  double p_cs = 0.0;  // contention success probability
  double p_T = 0.0;   // transmission attempt probability of an active node
  double p_s = 0.0;   // success probability of an attempt
};

/// q(1-p_a q)^{n-1} + p_ac (1 - n q p_a (1-p_a q)^{n-1})
inline double attempt_probability(double p_a, double q, int n, double p_ac) {
  const double reserve = q * std::pow(1.0 - p_a * q, n - 1);
  return reserve + p_ac * (1.0 - n * p_a * reserve);
}

inline double contention_success_probability(double p_a, int n, double p_ac) {
  return p_ac * std::pow(1.0 - p_a * p_ac, n - 1);
}

inline double success_probability(double p_a, double q, int n, double p_ac) {
  const double reserve = q * std::pow(1.0 - p_a * q, n - 1);
  const double p_T = reserve + p_ac * (1.0 - n * p_a * reserve);
  if (!(p_T > 0.0))
    throw NumericalError("success_probability: attempt probability is zero, AoI undefined");
  const double p_cs = contention_success_probability(p_a, n, p_ac);
  return (reserve + p_cs * (1.0 - n * p_a * reserve)) / p_T;
}

inline AccessProbabilities access_probabilities(double p_a, double q, int n, double p_ac) {
  AccessProbabilities a;
  a.p_ac = p_ac;
  a.p_cs = contention_success_probability(p_a, n, p_ac);
  a.p_T = attempt_probability(p_a, q, n, p_ac);
  a.p_s = success_probability(p_a, q, n, p_ac);
  return a;
}

/// Conditional shares of deep / standard / economical updates.
struct DeficitWeights {
  double deep = 0.0;
  double standard = 0.0;
  double economical = 0.0;
};

inline DeficitWeights deficit_weights(Mechanism mechanism, double q, double xi) {
  if (mechanism == Mechanism::AUC)
    return {(1.0 - xi) * q, xi * q + (1.0 - xi) * (1.0 - q), xi * (1.0 - q)};
  // Every transmission under RUC/SAFC follows a paid probe; the baseline
  // chain has the same two outcomes one unit lower.
  return {1.0 - xi, xi, 0.0};
}

/// Energy deficit Q right after a transmission: units still needed to become
/// active again. `residual` is the mass of Q <= 0 (still active).
struct DeficitDistribution {
  std::vector<double> pmf;  // pmf[l-1] = P(Q = l), l = 1..M+1
  double residual = 0.0;
  DeficitWeights omega;

  int max_deficit() const { return static_cast<int>(pmf.size()); }
  double probability(int l) const {
    return (l >= 1 && l <= max_deficit()) ? pmf[static_cast<std::size_t>(l - 1)] : 0.0;
  }
};

/// Deficit law obtained by weighting the active tail of the stationary law.
/// M is the chain's update cost (chain_update_cost()).
inline DeficitDistribution deficit_distribution(const StationarySolution& s, Mechanism mechanism,
                                                double q, double xi, int M) {
  if (s.regime != Regime::ECR)
    throw std::invalid_argument("deficit_distribution: ESR has no binding energy deficit");
  DeficitDistribution out;
  out.omega = deficit_weights(mechanism, q, xi);
  const auto& w = out.omega;
  const double pa = s.p_a;
  out.pmf.resize(static_cast<std::size_t>(M + 1));
  double total = 0.0;
  for (int l = 1; l <= M + 1; ++l) {
    double mass = w.deep * s.probability(2 * M + 2 - l);
    if (l <= M) mass += w.standard * s.probability(2 * M + 1 - l);
    if (l <= M - 1) mass += w.economical * s.probability(2 * M - l);
    out.pmf[static_cast<std::size_t>(l - 1)] = mass / pa;
    total += mass / pa;
  }
  out.residual = std::max(0.0, 1.0 - total);
  return out;
}

/// Which deficits enter the accumulation-time sums.
enum class DeficitRange {
  FullSupport,  // l = 1..M+1, the whole support of the deficit law
  UpToM,        // l = 1..M only
};

struct IntervalMoments {
  double e_ta = 0.0, e_ta2 = 0.0;  // access waiting time
  double e_te = 0.0, e_te2 = 0.0;  // energy accumulation time
  double e_t = 0.0, e_t2 = 0.0;    // update interval T = T_A + T_E
};

/// T_A is geometric in p_T; given Q = l, T_E is negative binomial (l
/// successes at rate xi). A residual deficit (Q <= 0) contributes T_E = 0.
inline IntervalMoments interval_moments(double p_T, const DeficitDistribution& deficit, double xi,
                                        DeficitRange range = DeficitRange::FullSupport) {
  if (!(p_T > 0.0 && p_T <= 1.0))
    throw std::invalid_argument("interval_moments: p_T must lie in (0, 1]");
  if (!(xi > 0.0 && xi <= 1.0)) throw std::invalid_argument("interval_moments: xi must lie in (0, 1]");
  IntervalMoments m;
  m.e_ta = 1.0 / p_T;
  m.e_ta2 = (2.0 - p_T) / (p_T * p_T);
  const int top = range == DeficitRange::FullSupport ? deficit.max_deficit() : deficit.max_deficit() - 1;
  for (int l = 1; l <= top; ++l) {
    const double p = deficit.probability(l);
    m.e_te += p * l / xi;
    m.e_te2 += p * l * (l - xi + 1.0) / (xi * xi);
  }
  m.e_t = m.e_ta + m.e_te;
  m.e_t2 = m.e_ta2 + 2.0 * m.e_ta * m.e_te + m.e_te2;
  return m;
}

/// Renewal form: E[T^2]/(2E[T]) + (1/p_s - 1) E[T] + 1/2.
inline double renewal_aoi(double p_s, double e_t, double e_t2) {
  return e_t2 / (2.0 * e_t) + (1.0 / p_s - 1.0) * e_t + 0.5;
}

/// Energy-constrained AoI in terms of p_T, p_s and the accumulation moments.
inline double ecr_aoi(double p_T, double p_s, double e_te, double e_te2) {
  return 1.0 / (p_T * p_s) + (1.0 / p_s - 1.0) * e_te + (e_te2 + e_te) / (2.0 * (1.0 / p_T + e_te));
}

/// Energy-sufficient AoI: every node always active, one success chance per round.
inline double esr_aoi(double q, int n, double p_ac) {
  const double reserve = q * std::pow(1.0 - q, n - 1);
  const double rate = reserve + p_ac * std::pow(1.0 - p_ac, n - 1) * (1.0 - n * reserve);
  if (!(rate > 0.0)) throw NumericalError("esr_aoi: per-round success probability is zero");
  return 1.0 / rate;
}

/// Mechanism-specific form of the stability condition, evaluated at p_a.
inline bool mechanism_stability_condition(const ProtocolConfig& c, double p_a) {
  const double q = c.q, eta = c.eta, xi = c.xi;
  const int n = c.n, M = c.M;
  switch (c.mechanism) {
    case Mechanism::AUC: {
      if (n == 1) return xi < q + M * (eta + q * (1.0 - eta));
      const double bracket = (1.0 - eta) * (1.0 - p_a) + p_a * (1.0 - q) * (1.0 - n * eta);
      return xi < q + M * (eta + q * std::pow(1.0 - p_a * q, n - 2) * bracket);
    }
    case Mechanism::RUC:
      return q * (1.0 + M * (eta + (1.0 - eta) * std::pow(1.0 - p_a * q, n - 1))) > xi;
    case Mechanism::SAFC:
      return q + M * q * std::pow(1.0 - p_a * q, n - 1) > xi;
    case Mechanism::SA_BASELINE:
      return M * eta > xi;
  }
  return false;
}

/// Closed forms published for AUC; used to cross-check the generic route.
namespace auc {

inline double attempt_probability(double p_a, double q, double eta, int n) {
  return eta + q * (1.0 - n * eta * p_a) * std::pow(1.0 - p_a * q, n - 1);
}

inline double success_probability(double p_a, double q, double eta, int n) {
  const double contend = eta * std::pow(1.0 - p_a * eta, n - 1);
  const double reserve = q * std::pow(1.0 - p_a * q, n - 1);
  return (contend + reserve * (1.0 - n * eta * p_a * std::pow(1.0 - p_a * eta, n - 1))) /
         attempt_probability(p_a, q, eta, n);
}

/// M + q - xi - z/(1-z)
inline double deficit_constant(int M, double q, double xi, double z) {
  return M + q - xi - z / (1.0 - z);
}

inline double mean_accumulation_time(int M, double q, double xi, double z) {
  return deficit_constant(M, q, xi, z) / xi;
}

inline double second_moment_accumulation_time(int M, double q, double xi, double z) {
  const double C = deficit_constant(M, q, xi, z);
  return (C * (C + 1.0 - xi) + z / ((1.0 - z) * (1.0 - z))) / (xi * xi);
}

/// Active probability from energy balance, given the reservation outcomes.
inline double active_probability(int M, double q, double eta, double xi, double p0, double p1) {
  return xi / (M * (q * (p0 + (1.0 - p0) * eta) + eta * (1.0 - q) * (1.0 - p1)) + q);
}

}  // namespace auc

/// Active probability of RUC written through the characteristic root.
inline double ruc_active_probability(int M, double q, double xi, double z) {
  const double w = (1.0 - xi) * z + xi;
  const double head = z * (1.0 - std::pow(z, M)) * w;
  return xi * head / (q * head + M * (1.0 - z) * (xi * (1.0 - q) - (1.0 - xi) * q * z));
}

/// Active probability of SAFC written through the characteristic root.
inline double safc_active_probability(int M, double q, double xi, double z, int n) {
  const double w = (1.0 - xi) * z + xi;
  const double ratio = (1.0 - z) * (q * w - xi) / (q * z * (std::pow(z, M) - 1.0) * w);
  return 1.0 / q - std::pow(ratio, 1.0 / (n - 1)) / q;
}

struct AoiOptions {
  FixedPointOptions fixed_point;
  DeficitRange deficit_range = DeficitRange::FullSupport;
  bool with_physical = true;  // also evaluate at the scaled arrival rate
};

struct AoiResult {
  Mechanism mechanism = Mechanism::AUC;
  Regime regime = Regime::ESR;
  double p_a = 1.0;
  double z = std::numeric_limits<double>::quiet_NaN();
  AccessProbabilities probabilities;
  std::optional<DeficitDistribution> deficit;  // ECR only
  std::optional<IntervalMoments> moments;      // ECR only
  double aoi_rounds = std::numeric_limits<double>::quiet_NaN();
  std::optional<double> approx_aoi_rounds;     // ECR, probing mechanisms
  double aoi_physical = std::numeric_limits<double>::quiet_NaN();
  double xi_effective = std::numeric_limits<double>::quiet_NaN();
  bool xi_clamped = false;
  int fixed_point_iterations = 0;
};

namespace detail {

inline double approximate_ecr(const ProtocolConfig& c, double p_a, double z) {
  const double q = c.q, eta = c.eta, xi = c.xi;
  const int n = c.n, M = c.M;
  const double C = auc::deficit_constant(M, q, xi, z);
  const double a = std::exp(-n * p_a * q);
  const double omz = 1.0 - z;
  switch (c.mechanism) {
    case Mechanism::AUC: {
      const double b = std::exp(-n * p_a * eta);
      const double not_reserved = 1.0 - n * p_a * q * a;
      const double first = (1.0 + eta / xi * (1.0 - b) * not_reserved * C) /
                           (q * a + eta * b * not_reserved);
      const double second = (eta + q * a) / (2.0 * xi * C * (1.0 + eta + q * a)) *
                            (C * (C + 1.0 / omz) + z / (omz * omz));
      return first + second;
    }
    case Mechanism::RUC: {
      const double b = std::exp(-n * q * p_a * eta);
      const double g = eta * (1.0 - a) + a;
      const double first = (xi + q * C * eta * (1.0 - a) * (1.0 - b)) /
                           (xi * q * (a + eta * b * (1.0 - a)));
      const double second = q * g / (2.0 * xi * (xi + q * C * g)) *
                            (C * (C + xi + 4.0 * z / omz) + (3.0 * z * z - z) / (omz * omz));
      return first + second;
    }
    case Mechanism::SAFC: {
      const double K = (((M + 1) * (M + 2 - 3.0 * xi) - z * (2.0 * M + 2.0 - 3.0 * xi) + xi * xi) / omz +
                        2.0 * z * z / (omz * omz) + xi * C) /
                       (xi * xi);
      return 1.0 / (q * a) + xi * q * a * K / (2.0 * (xi + q * a * C));
    }
    case Mechanism::SA_BASELINE: break;
  }
  throw std::invalid_argument("approx_aoi: no approximation for SA_BASELINE");
}

inline double approximate_esr(const ProtocolConfig& c) {
  const double q = c.q, eta = c.eta;
  const int n = c.n;
  switch (c.mechanism) {
    case Mechanism::AUC:
      return 1.0 / (q * std::pow(1.0 - q, n - 1) +
                    eta * std::pow(1.0 - eta, n - 1) * (1.0 - n * q * std::pow(1.0 - q, n - 1)));
    case Mechanism::RUC: {
      const double qe = std::pow(1.0 - q * eta, n - 1);
      return 1.0 / (q * (std::pow(1.0 - q, n - 1) * (1.0 - n * eta * q * qe) +
                         eta * qe * (1.0 - std::pow(1.0 - q, n))));
    }
    case Mechanism::SAFC:
      return 1.0 / (q * std::pow(1.0 - q, n - 1));
    case Mechanism::SA_BASELINE: break;
  }
  throw std::invalid_argument("approx_aoi: no approximation for SA_BASELINE");
}

inline double approximate_aoi(const ProtocolConfig& c, const SelfConsistentSolution& sol) {
  if (sol.regime() == Regime::ESR) return approximate_esr(c);
  return approximate_ecr(c, sol.p_a(), sol.stationary.z);
}

inline AoiResult analyze_rounds(const ValidatedConfig& vc, const AoiOptions& opt) {
  const ProtocolConfig& c = vc.get();
  const bool baseline = c.mechanism == Mechanism::SA_BASELINE;
  const double q = baseline ? 0.0 : c.q;
  const double p_ac = baseline ? c.eta : access_probability(c.mechanism, c.q, c.eta);
  if (!(q > 0.0 || p_ac > 0.0))
    throw NumericalError("network_aoi: attempt probability is zero (q = 0 and no fallback access)");

  const auto sol = solve_self_consistent(vc, opt.fixed_point);
  const int order = chain_update_cost(c);

  AoiResult r;
  r.mechanism = c.mechanism;
  r.regime = sol.regime();
  r.p_a = sol.p_a();
  r.fixed_point_iterations = sol.iterations;

  const bool chain_stable = stability_condition(sol.kernel, order);
  const bool specific = mechanism_stability_condition(c, r.p_a);
  if (chain_stable != specific && std::abs(consumption_margin(sol.kernel, order)) > 1e-9)
    throw std::logic_error("network_aoi: mechanism stability condition disagrees with the chain");

  r.probabilities = access_probabilities(r.p_a, q, c.n, p_ac);

  if (r.regime == Regime::ESR) {
    r.aoi_rounds = esr_aoi(q, c.n, p_ac);
    if (!baseline && c.q > 0.0) r.approx_aoi_rounds = approximate_esr(c);
    return r;
  }

  if (r.probabilities.p_T > 1.0)
    throw NumericalError("network_aoi: attempt probability formula exceeds 1 (n p_a < 1 with large fallback access)");
  r.z = sol.stationary.z;
  r.deficit = deficit_distribution(sol.stationary, c.mechanism, q, c.xi, order);
  r.moments = interval_moments(r.probabilities.p_T, *r.deficit, c.xi, opt.deficit_range);
  r.aoi_rounds = ecr_aoi(r.probabilities.p_T, r.probabilities.p_s, r.moments->e_te, r.moments->e_te2);
  if (!baseline && c.q > 0.0) r.approx_aoi_rounds = approximate_ecr(c, r.p_a, r.z);
  return r;
}

inline ProtocolConfig with_scaled_arrival(const ProtocolConfig& c, bool& clamped) {
  ProtocolConfig scaled = c;
  const double target = (1.0 + c.delta) * c.xi;
  clamped = target > 1.0;
  scaled.xi = clamped ? 1.0 : target;
  return scaled;
}

}  // namespace detail

struct PhysicalAoi {
  double value = 0.0;
  double xi_effective = 0.0;
  bool clamped = false;  // (1+delta) xi exceeded 1
};

/// AoI in physical time: rounds last 1+delta slots and collect energy at
/// rate (1+delta) xi (clamped to 1). The baseline has no probing phase.
inline PhysicalAoi physical_aoi(const ValidatedConfig& vc, const AoiOptions& opt = {}) {
  const ProtocolConfig& c = vc.get();
  AoiOptions inner = opt;
  inner.with_physical = false;
  if (c.mechanism == Mechanism::SA_BASELINE)
    return {detail::analyze_rounds(vc, inner).aoi_rounds, c.xi, false};
  PhysicalAoi out;
  const auto scaled = validate_config(detail::with_scaled_arrival(c, out.clamped));
  out.xi_effective = scaled->xi;
  out.value = (1.0 + c.delta) * detail::analyze_rounds(scaled, inner).aoi_rounds;
  return out;
}

/// Full analysis of a probing mechanism (or the baseline, which is
/// forwarded to the same pipeline on its own chain).
inline AoiResult network_aoi(const ValidatedConfig& vc, const AoiOptions& opt = {}) {
  AoiResult r = detail::analyze_rounds(vc, opt);
  if (opt.with_physical) {
    const auto phy = physical_aoi(vc, opt);
    r.aoi_physical = phy.value;
    r.xi_effective = phy.xi_effective;
    r.xi_clamped = phy.clamped;
  }
  return r;
}

/// Closed-form approximation with exponential collision terms; in ESR the
/// mechanism's exact energy-sufficient expression.
inline double approx_aoi(const ValidatedConfig& vc, const AoiOptions& opt = {}) {
  const ProtocolConfig& c = vc.get();
  if (c.mechanism == Mechanism::SA_BASELINE)
    throw std::invalid_argument("approx_aoi: no approximation for SA_BASELINE");
  if (!(c.q > 0.0)) throw NumericalError("approx_aoi: requires q > 0");
  return detail::approximate_aoi(c, solve_self_consistent(vc, opt.fixed_point));
}

/// EH slotted ALOHA: active at M units, transmit with probability eta,
/// success iff alone. Physical AoI equals the round AoI.
inline AoiResult sa_baseline_aoi(const ValidatedConfig& vc, const AoiOptions& opt = {}) {
  if (vc->mechanism != Mechanism::SA_BASELINE)
    throw std::invalid_argument("sa_baseline_aoi: mechanism must be SA_BASELINE");
  AoiOptions inner = opt;
  inner.with_physical = false;
  AoiResult r = detail::analyze_rounds(vc, inner);
  r.aoi_physical = r.aoi_rounds;
  r.xi_effective = vc->xi;
  return r;
}

}  // namespace ehaoi
