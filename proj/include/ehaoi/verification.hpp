#pragma once

// Independent checks for the closed-form stationary law: a truncated
// transition matrix solved by power iteration, and the global balance
// equations evaluated on a closed-form solution. Used by the test suites.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <utility>
#include <vector>

#include "ehaoi/energy_chain.hpp"

namespace ehaoi {

struct OracleOptions {
  std::size_t truncation = 0;  // 0 selects 200 * (M + 1)
  double tolerance = 1e-12;    // L1 change between iterates
  std::int64_t max_iterations = 5'000'000;
  double boundary_mass = 1e-10;  // enlarge truncation while the last state holds more
  std::size_t max_truncation = 1u << 16;
  bool enlarge = true;           // false keeps the truncation even if mass piles up
};

struct OracleResult {
  std::vector<double> distribution;
  std::int64_t iterations = 0;
  bool converged = false;
};

namespace detail {

// Row of the truncated chain: up to six (target, probability) pairs.
struct SparseRow {
  std::array<std::pair<std::size_t, double>, 6> entries{};
  int size = 0;
  void add(std::size_t to, double p) {
    if (p == 0.0) return;
    for (int i = 0; i < size; ++i) {
      if (entries[i].first == to) {
        entries[i].second += p;
        return;
      }
    }
    entries[size++] = {to, p};
  }
};

inline std::vector<SparseRow> truncated_rows(const TransitionKernel& k, int M, std::size_t K) {
  std::vector<SparseRow> rows(K);
  const auto clip = [K](std::int64_t to) {
    return static_cast<std::size_t>(std::clamp<std::int64_t>(to, 0, static_cast<std::int64_t>(K) - 1));
  };
  for (std::size_t m = 0; m < K; ++m) {
    const auto s = static_cast<std::int64_t>(m);
    if (s <= M) {
      rows[m].add(clip(s + 1), k.p_sh);
      rows[m].add(clip(s), k.p_si);
    } else {
      rows[m].add(clip(s + 1), k.p_ah);
      rows[m].add(clip(s), k.p_ai);
      rows[m].add(clip(s - 1), k.p_ar);
      rows[m].add(clip(s - (M - 1)), k.p_ae);
      rows[m].add(clip(s - M), k.p_au);
      rows[m].add(clip(s - (M + 1)), k.p_ad);
    }
  }
  return rows;
}

}  // namespace detail

/// Stationary vector of the chain truncated to states 0..K-1 (harvests at
/// the last state are reflected), by power iteration from state 0.
inline OracleResult oracle_stationary(const TransitionKernel& k, int M, OracleOptions opt = {}) {
  std::size_t K = opt.truncation ? opt.truncation : static_cast<std::size_t>(200 * (M + 1));
  for (;;) {
    const auto rows = detail::truncated_rows(k, M, K);
    std::vector<double> pi(K, 0.0), next(K, 0.0);
    pi[0] = 1.0;
    OracleResult out;
    for (std::int64_t it = 1; it <= opt.max_iterations; ++it) {
      std::fill(next.begin(), next.end(), 0.0);
      for (std::size_t i = 0; i < K; ++i) {
        const double w = pi[i];
        if (w == 0.0) continue;
        const auto& row = rows[i];
        for (int e = 0; e < row.size; ++e) next[row.entries[e].first] += w * row.entries[e].second;
      }
      double change = 0.0;
      for (std::size_t i = 0; i < K; ++i) change += std::abs(next[i] - pi[i]);
      pi.swap(next);
      out.iterations = it;
      if (change < opt.tolerance) {
        out.converged = true;
        break;
      }
    }
    double total = 0.0;
    for (double v : pi) total += v;
    for (double& v : pi) v /= total;
    out.distribution = std::move(pi);
    if (!opt.enlarge || out.distribution.back() < opt.boundary_mass || 2 * K > opt.max_truncation)
      return out;
    K *= 2;
  }
}

/// Largest absolute residual of each family of global balance equations,
/// evaluated on the closed-form solution. The m >= M+2 family is checked
/// on states M+2 .. M+2+tail_states.
struct BalanceResiduals {
  double state0 = 0.0;
  double state1 = 0.0;
  double interior = 0.0;  // 2 <= m <= M-1
  double stateM = 0.0;    // m = M (skipped for M = 1, where it is state 1)
  double stateM1 = 0.0;   // m = M+1
  double tail = 0.0;      // m >= M+2

  double max() const { return std::max({state0, state1, interior, stateM, stateM1, tail}); }
};

inline BalanceResiduals balance_residuals(const StationarySolution& s, int tail_states = 64) {
  const auto& k = s.kernel;
  const int M = s.M;
  const auto S = [&](std::int64_t m) { return s.probability(m); };
  const double xi = k.p_sh;
  BalanceResiduals r;

  r.state0 = std::abs((1.0 - k.p_si) * S(0) - k.p_ad * S(M + 1));
  // A probe-only round moves M+1 down to M, which is state 1 when M = 1.
  const double probe_into_1 = M == 1 ? k.p_ar * S(2) : 0.0;
  r.state1 = std::abs(xi * S(1) - (xi * S(0) + probe_into_1 + k.p_au * S(M + 1) + k.p_ad * S(M + 2)));
  for (int m = 2; m <= M - 1; ++m) {
    const double lhs = xi * S(m);
    const double rhs = xi * S(m - 1) + k.p_ae * S(m + M - 1) + k.p_au * S(m + M) + k.p_ad * S(m + M + 1);
    r.interior = std::max(r.interior, std::abs(lhs - rhs));
  }
  if (M >= 2) {
    r.stateM = std::abs(xi * S(M) - (xi * S(M - 1) + k.p_ar * S(M + 1) + k.p_ae * S(2 * M - 1) +
                                     k.p_au * S(2 * M) + k.p_ad * S(2 * M + 1)));
  }
  r.stateM1 = std::abs((1.0 - k.p_ai) * S(M + 1) -
                       (xi * S(M) + k.p_ar * S(M + 2) + k.p_ae * S(2 * M) + k.p_au * S(2 * M + 1) +
                        k.p_ad * S(2 * M + 2)));
  for (int m = M + 2; m <= M + 2 + tail_states; ++m) {
    const double lhs = (1.0 - k.p_ai) * S(m);
    const double rhs = k.p_ah * S(m - 1) + k.p_ar * S(m + 1) + k.p_ae * S(m + M - 1) +
                       k.p_au * S(m + M) + k.p_ad * S(m + M + 1);
    r.tail = std::max(r.tail, std::abs(lhs - rhs));
  }
  return r;
}

}  // namespace ehaoi
