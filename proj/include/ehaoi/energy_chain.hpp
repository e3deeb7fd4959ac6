#pragma once

// Energy-buffer Markov chain of a typical node.
//
// States m = 0, 1, 2, ... count stored energy units. With update cost M the
// node is silent for m <= M (it only harvests) and active for m >= M+1,
// where six net jumps are possible:
//
//   h: +1        i: 0        r: -1 (probe only)
//   e: -(M-1)    u: -M       d: -(M+1)
//
// The chain is skip-free upwards, so the active tail is geometric with ratio
// z, the root in [0,1) of the characteristic polynomial
//
//   f(z) = d z^{M+2} + u z^{M+1} + e z^M + r z^2 + (i-1) z + h.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <stdexcept>

#include "ehaoi/model.hpp"

namespace ehaoi {

/// Per-round jump probabilities of the energy chain.
struct TransitionKernel {
  // silent regime
  double p_sh = 0.0;  // harvest
  double p_si = 1.0;  // idle
  // active regime
  double p_ah = 0.0;  // harvest, no spending
  double p_ai = 1.0;  // no net change
  double p_ar = 0.0;  // probe only
  double p_ae = 0.0;  // economical update, net -(M-1)
  double p_au = 0.0;  // standard update, net -M
  double p_ad = 0.0;  // deep update, net -(M+1)

  double silent_row_sum() const { return p_sh + p_si; }
  double active_row_sum() const { return p_ah + p_ai + p_ar + p_ae + p_au + p_ad; }
  /// Probability that an active node transmits in a round.
  double transmit_probability() const { return p_ae + p_au + p_ad; }

  bool operator==(const TransitionKernel&) const = default;
};

/// Thrown when the chain has no stationary distribution (energy keeps
/// accumulating). Callers switch to the energy-sufficient formulas.
class UnstableChainError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

struct ReservationOutcomes {
  double p0 = 1.0;  // no other node reserves
  double p1 = 0.0;  // exactly one other node reserves
};

/// Probabilities that zero / exactly one of the other n-1 nodes probes.
inline ReservationOutcomes reservation_outcomes(double p_a, double q, int n) {
  if (n <= 1) return {1.0, 0.0};
  const double miss = 1.0 - p_a * q;
  const double p0 = std::pow(miss, n - 1);
  const double p1 = (n - 1) * p_a * q * std::pow(miss, n - 2);
  return {p0, p1};
}

/// Energy units removed from the buffer by a standard update, as seen by the
/// chain. Probing mechanisms spend M on data; the slotted ALOHA baseline has
/// no probe, so it is the same chain shifted down by one unit.
inline int chain_update_cost(const ProtocolConfig& c) {
  return c.mechanism == Mechanism::SA_BASELINE ? c.M - 1 : c.M;
}

/// Whether the kernel depends on p_a at all.
inline bool kernel_depends_on_activity(const ProtocolConfig& c) {
  return c.n > 1 && c.mechanism != Mechanism::SA_BASELINE;
}

inline TransitionKernel build_transition_kernel(const ValidatedConfig& vc, double p_a) {
  if (!(p_a >= 0.0 && p_a <= 1.0))
    throw std::invalid_argument("build_transition_kernel: p_a must lie in [0, 1]");
  const ProtocolConfig& c = vc.get();
  const double xi = c.xi;
  const double q = c.q;
  const double eta = c.eta;

  TransitionKernel k;
  k.p_sh = xi;
  k.p_si = 1.0 - xi;

  switch (c.mechanism) {
    case Mechanism::AUC: {
      const auto [p0, p1] = reservation_outcomes(p_a, q, c.n);
      const double sends_after_probe = p0 + (1.0 - p0) * eta;
      const double quiet_after_probe = (1.0 - p0) * (1.0 - eta);
      const double fallback_without_probe = (1.0 - p1) * eta;
      const double quiet_without_probe = p1 + (1.0 - p1) * (1.0 - eta);
      k.p_ad = (1.0 - xi) * q * sends_after_probe;
      k.p_au = xi * q * sends_after_probe + (1.0 - xi) * (1.0 - q) * fallback_without_probe;
      k.p_ae = xi * (1.0 - q) * fallback_without_probe;
      k.p_ar = (1.0 - xi) * q * quiet_after_probe;
      k.p_ai = xi * q * quiet_after_probe + (1.0 - xi) * (1.0 - q) * quiet_without_probe;
      k.p_ah = xi * (1.0 - q) * quiet_without_probe;
      break;
    }
    case Mechanism::RUC:
    case Mechanism::SAFC: {
      // Only a node that probed can transmit: either it reserved the slot or
      // (RUC) it falls back with probability eta.
      const auto [p0, p1] = reservation_outcomes(p_a, q, c.n);
      (void)p1;
      const double sends = c.mechanism == Mechanism::RUC ? p0 + (1.0 - p0) * eta : p0;
      k.p_ad = (1.0 - xi) * q * sends;
      k.p_au = xi * q * sends;
      k.p_ae = 0.0;
      k.p_ar = (1.0 - xi) * q * (1.0 - sends);
      k.p_ai = xi * q * (1.0 - sends) + (1.0 - xi) * (1.0 - q);
      k.p_ah = xi * (1.0 - q);
      break;
    }
    case Mechanism::SA_BASELINE: {
      // Chain of update cost M-1: a transmission without harvest is "deep"
      // (-M), with harvest "standard" (-(M-1)).
      k.p_ad = (1.0 - xi) * eta;
      k.p_au = xi * eta;
      k.p_ae = 0.0;
      k.p_ar = 0.0;
      k.p_ai = (1.0 - xi) * (1.0 - eta);
      k.p_ah = xi * (1.0 - eta);
      break;
    }
  }
  return k;
}

/// Mean energy drained per active round minus harvest; positive iff the
/// buffer is positive recurrent.
inline double consumption_margin(const TransitionKernel& k, int M) {
  return (M + 1) * k.p_ad + M * k.p_au + (M - 1) * k.p_ae + k.p_ar - k.p_ah;
}

/// True iff a stationary distribution exists (energy-constrained regime).
/// Equality belongs to the energy-sufficient regime.
inline bool stability_condition(const TransitionKernel& k, int M) {
  return (M + 1) * k.p_ad + M * k.p_au + (M - 1) * k.p_ae + k.p_ar > k.p_ah;
}

inline double characteristic_polynomial(const TransitionKernel& k, int M, double z) {
  const double zM = std::pow(z, M);
  return k.p_ad * zM * z * z + k.p_au * zM * z + k.p_ae * zM + k.p_ar * z * z +
         (k.p_ai - 1.0) * z + k.p_ah;
}

inline double characteristic_derivative(const TransitionKernel& k, int M, double z) {
  const double zMm1 = M >= 1 ? std::pow(z, M - 1) : 1.0;
  const double zM = std::pow(z, M);
  const double de = M >= 1 ? M * k.p_ae * zMm1 : 0.0;
  return (M + 2) * k.p_ad * zM * z + (M + 1) * k.p_au * zM + de + 2.0 * k.p_ar * z +
         (k.p_ai - 1.0);
}

/// Unique root of f in [0,1). f(0) = p_ah >= 0, f is convex on (0,1) and
/// f(1) = 0 with f'(1) > 0 under stability, so f < 0 just left of 1 and the
/// interval [0, 1-1e-12] brackets the root.
inline double characteristic_root(const TransitionKernel& k, int M) {
  if (!stability_condition(k, M))
    throw UnstableChainError("characteristic_root: stability condition violated (ESR)");
  if (k.p_ah <= 0.0) return 0.0;

  double lo = 0.0;
  double hi = 1.0 - 1e-12;
  if (characteristic_polynomial(k, M, hi) >= 0.0)
    throw NumericalError("characteristic_root: root is numerically indistinguishable from 1");

  constexpr int kMaxBisection = 200;
  for (int it = 0; it < kMaxBisection && hi - lo > 4.0 * std::numeric_limits<double>::epsilon() * hi;
       ++it) {
    const double mid = 0.5 * (lo + hi);
    if (characteristic_polynomial(k, M, mid) > 0.0)
      lo = mid;
    else
      hi = mid;
  }
  double z = 0.5 * (lo + hi);
  double fz = characteristic_polynomial(k, M, z);

  // Newton polish, kept only while it stays in the bracket and improves |f|.
  for (int it = 0; it < 4 && fz != 0.0; ++it) {
    const double d = characteristic_derivative(k, M, z);
    if (d == 0.0) break;
    const double next = z - fz / d;
    if (!(next >= lo && next <= hi)) break;
    const double fnext = characteristic_polynomial(k, M, next);
    if (std::abs(fnext) >= std::abs(fz)) break;
    z = next;
    fz = fnext;
  }
  if (std::abs(fz) > 1e-13)
    throw NumericalError("characteristic_root: bisection did not reach |f(z)| <= 1e-13");
  return z;
}

/// Stationary law of the energy chain in closed form, or the ESR marker.
///
/// For ECR the distribution is piecewise: S_0, a partial geometric sum on
/// 1..M-1, S_M, and a geometric tail S_{M+1} z^{m-M-1}. In ESR there is no
/// distribution; p_a = 1 and probability() throws.
struct StationarySolution {
  Regime regime = Regime::ESR;
  TransitionKernel kernel;
  int M = 1;
  double z = 1.0;
  double s0 = 0.0;
  double p_a = 1.0;

  double probability(std::int64_t m) const {
    if (regime != Regime::ECR)
      throw std::logic_error("StationarySolution: no stationary distribution in ESR");
    if (m < 0) return 0.0;
    const TransitionKernel& k = kernel;
    if (m == 0) return s0;
    if (m >= M + 1) return s0 * k.p_sh / k.p_ad * std::pow(z, static_cast<double>(m - M - 1));
    if (m == M) {
      // S_0 p_ah / (z p_ad), with p_ah / z expanded through f(z) = 0 so z = 0 is allowed.
      const double zMm1 = std::pow(z, M - 1);
      const double h_over_z = (1.0 - k.p_ai) - k.p_ar * z - k.p_ae * zMm1 -
                              k.p_au * zMm1 * z - k.p_ad * zMm1 * z * z;
      return s0 * h_over_z / k.p_ad;
    }
    const double s1 = s0 * (1.0 + z + k.p_au / k.p_ad);
    const double slope = s0 * (k.p_ae + z * k.p_au + z * z * k.p_ad) / k.p_ad;
    return s1 + slope * partial_geometric(m - 1);
  }

  /// S_{M+1}: entry of the geometric tail.
  double tail_head() const { return s0 * kernel.p_sh / kernel.p_ad; }

  /// Sum over all states, tail summed in closed form.
  double total_mass() const {
    double s = 0.0;
    for (int m = 0; m <= M; ++m) s += probability(m);
    return s + tail_head() / (1.0 - z);
  }

 private:
  // 1 + z + ... + z^{k-1}
  double partial_geometric(std::int64_t k) const {
    if (k <= 0) return 0.0;
    if (z == 0.0) return 1.0;
    return (1.0 - std::pow(z, static_cast<double>(k))) / (1.0 - z);
  }
};

/// Marker for the energy-sufficient regime.
inline StationarySolution esr_solution(const TransitionKernel& k, int M) {
  StationarySolution s;
  s.regime = Regime::ESR;
  s.kernel = k;
  s.M = M;
  return s;
}

inline double active_probability(const StationarySolution& s) {
  if (s.regime == Regime::ESR) return 1.0;
  return std::min(s.s0 * s.kernel.p_sh / (s.kernel.p_ad * (1.0 - s.z)), 1.0);
}

inline StationarySolution stationary_distribution(const TransitionKernel& k, double z, int M) {
  if (!(z >= 0.0 && z < 1.0))
    throw std::invalid_argument("stationary_distribution: z must lie in [0, 1)");
  if (M < 0) throw std::invalid_argument("stationary_distribution: M must be >= 0");
  if (!(k.p_ad > 0.0))
    throw NumericalError(
        "stationary_distribution: deep-update probability is zero, state 0 is transient");

  const double d = k.p_ad;
  const double omz = 1.0 - z;
  double inv_s0;
  if (M == 0) {
    // Only the empty state is silent.
    inv_s0 = 1.0 + k.p_sh / (d * omz);
  } else {
    // Normalizer with the 1/z terms combined through f(z) = 0:
    //   p_ah/(z d) - (z^2 r + z(i-1) + h)/(z d (1-z)^2) = (h(z-2) - z r - (i-1)) / (d (1-z)^2)
    inv_s0 = 1.0 + (k.p_ah * (z - 2.0) - z * k.p_ar - (k.p_ai - 1.0)) / (d * omz * omz) +
             ((M - 1) * (k.p_ae + k.p_au + d) + k.p_sh) / (d * omz) -
             (k.p_ae + z * k.p_au + z * z * d) / (d * omz * omz);
  }
  if (!(inv_s0 > 0.0) || !std::isfinite(inv_s0))
    throw NumericalError("stationary_distribution: normalizer is not positive");

  StationarySolution s;
  s.regime = Regime::ECR;
  s.kernel = k;
  s.M = M;
  s.z = z;
  s.s0 = 1.0 / inv_s0;
  s.p_a = active_probability(s);
  return s;
}

enum class FixedPointMethod { Direct, Damped, Bisection };

struct FixedPointOptions {
  double initial_guess = 0.5;
  double damping = 0.5;
  double tolerance = 1e-10;
  int max_iterations = 10000;
  // Damped iteration hands over to bisection after this many iterations
  // without improving the best residual.
  int stall_window = 200;
};

struct SelfConsistentSolution {
  TransitionKernel kernel;
  StationarySolution stationary;
  int iterations = 0;
  double residual = 0.0;
  FixedPointMethod method = FixedPointMethod::Direct;

  Regime regime() const { return stationary.regime; }
  double p_a() const { return stationary.p_a; }
};

namespace detail {

struct ActivityMap {
  TransitionKernel kernel;
  StationarySolution stationary;
  double value = 1.0;
};

inline ActivityMap activity_map(const ValidatedConfig& c, double p_a) {
  const int M = chain_update_cost(c.get());
  ActivityMap out;
  out.kernel = build_transition_kernel(c, p_a);
  // A root closer to 1 than double precision resolves is the null-recurrent
  // limit, where p_a -> 1; it is classified with the boundary as ESR.
  if (!stability_condition(out.kernel, M) || characteristic_polynomial(out.kernel, M, 1.0 - 1e-12) >= 0.0) {
    out.stationary = esr_solution(out.kernel, M);
    out.value = 1.0;
    return out;
  }
  const double z = characteristic_root(out.kernel, M);
  out.stationary = stationary_distribution(out.kernel, z, M);
  out.value = out.stationary.p_a;
  return out;
}

}  // namespace detail

/// Finds p_a with Phi(p_a) = p_a, where Phi maps a guessed activity of the
/// other nodes to the active probability of the resulting chain. Damped
/// iteration first; bisection on p - Phi(p) over [0,1] if it stalls.
inline SelfConsistentSolution solve_self_consistent(const ValidatedConfig& c,
                                                    const FixedPointOptions& opt = {}) {
  SelfConsistentSolution out;

  auto finish = [&](const detail::ActivityMap& m, double p, int iterations, FixedPointMethod how) {
    out.kernel = m.kernel;
    out.stationary = m.stationary;
    out.iterations = iterations;
    out.residual = std::abs(m.value - p);
    out.method = how;
    if (out.residual > opt.tolerance)
      throw NumericalError("solve_self_consistent: no fixed point within tolerance, residual " +
                           std::to_string(out.residual));
    return out;
  };

  if (!kernel_depends_on_activity(c.get())) {
    const auto m = detail::activity_map(c, std::clamp(opt.initial_guess, 0.0, 1.0));
    return finish(m, m.value, 1, FixedPointMethod::Direct);
  }

  double p = std::clamp(opt.initial_guess, 0.0, 1.0);
  double best = std::numeric_limits<double>::infinity();
  double best_p = p;
  int since_best = 0;
  int it = 1;
  for (; it <= opt.max_iterations; ++it) {
    const auto m = detail::activity_map(c, p);
    const double residual = std::abs(m.value - p);
    if (residual <= 1e-3 * opt.tolerance) return finish(m, p, it, FixedPointMethod::Damped);
    if (residual < best) {
      best = residual;
      best_p = p;
      since_best = 0;
    } else if (++since_best >= opt.stall_window) {
      break;
    }
    p = (1.0 - opt.damping) * p + opt.damping * m.value;
  }
  if (best <= opt.tolerance)
    return finish(detail::activity_map(c, best_p), best_p, it, FixedPointMethod::Damped);

  // g(p) = p - Phi(p): g(0) <= 0 and g(1) >= 0.
  double lo = 0.0;
  double hi = 1.0;
  int steps = 0;
  for (; steps < 200 && hi - lo > 1e-15; ++steps) {
    const double mid = 0.5 * (lo + hi);
    if (mid - detail::activity_map(c, mid).value < 0.0)
      lo = mid;
    else
      hi = mid;
  }
  const double p_star = 0.5 * (lo + hi);
  return finish(detail::activity_map(c, p_star), p_star, it + steps, FixedPointMethod::Bisection);
}

}  // namespace ehaoi
