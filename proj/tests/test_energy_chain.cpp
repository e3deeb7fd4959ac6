#include "catch_amalgamated.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <vector>

#include "ehaoi/aoi.hpp"
#include "ehaoi/energy_chain.hpp"
#include "ehaoi/verification.hpp"

using namespace ehaoi;
using Catch::Matchers::WithinAbs;
using Catch::Matchers::WithinRel;

namespace {

// Grid optimum of the AUC defaults at step 0.01.
constexpr double kAucQ = 0.44;
constexpr double kAucEta = 0.08;

ValidatedConfig config(Mechanism m, double q, double eta, int n = 50, double xi = 0.1, int M = 7) {
  return validate_config(ProtocolConfig{n, xi, M, 1.0 / 20.0, m, q, eta});
}

TransitionKernel quadratic_kernel() {
  TransitionKernel k;
  k.p_sh = 0.1;
  k.p_si = 0.9;
  k.p_au = 0.5;
  k.p_ai = 0.4;
  k.p_ah = 0.1;
  k.p_ad = 0.0;
  return k;
}

// The same chain with a small deep-update share so that state 0 is recurrent.
TransitionKernel quadratic_kernel_with_deep() {
  TransitionKernel k = quadratic_kernel();
  k.p_au = 0.4;
  k.p_ad = 0.1;
  return k;
}

double max_abs_diff(const StationarySolution& s, const std::vector<double>& oracle) {
  double worst = 0.0;
  for (std::size_t m = 0; m < oracle.size(); ++m)
    worst = std::max(worst, std::abs(s.probability(static_cast<std::int64_t>(m)) - oracle[m]));
  return worst;
}

// Random stable kernel whose root stays away from 1 so the oracle mixes quickly.
TransitionKernel random_ecr_kernel(std::mt19937_64& rng, int M) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (;;) {
    TransitionKernel k;
    k.p_sh = 0.05 + 0.95 * u(rng);
    k.p_si = 1.0 - k.p_sh;
    double w[6];
    double total = 0.0;
    for (double& x : w) total += (x = u(rng));
    w[5] = std::max(w[5], 0.05 * total);
    total = 0.0;
    for (double x : w) total += x;
    k.p_ah = w[0] / total;
    k.p_ai = w[1] / total;
    k.p_ar = w[2] / total;
    k.p_ae = M >= 2 ? w[3] / total : 0.0;
    k.p_au = w[4] / total;
    k.p_ad = w[5] / total;
    if (M < 2) k.p_ai += w[3] / total;
    if (!stability_condition(k, M)) continue;
    if (characteristic_root(k, M) > 0.9) continue;
    return k;
  }
}

// Normalizer of the closed form with the 1/z terms kept separate.
double literal_inverse_s0(const TransitionKernel& k, double z, int M) {
  const double d = k.p_ad, omz = 1.0 - z;
  return 1.0 + k.p_ah / (z * d) - (z * z * k.p_ar + z * (k.p_ai - 1.0) + k.p_ah) / (z * d * omz * omz) +
         ((M - 1) * (k.p_ae + k.p_au + d) + k.p_sh) / (d * omz) -
         (k.p_ae + z * k.p_au + z * z * d) / (d * omz * omz);
}

}  // namespace

TEST_CASE("reservation outcomes", "[chain]") {
  auto r = reservation_outcomes(0.3, 0.7, 1);
  CHECK(r.p0 == 1.0);
  CHECK(r.p1 == 0.0);
  r = reservation_outcomes(0.5, 0.4, 3);
  CHECK_THAT(r.p0, WithinAbs(0.64, 1e-15));
  CHECK_THAT(r.p1, WithinAbs(0.32, 1e-15));
  r = reservation_outcomes(1.0, 1.0, 3);
  CHECK(r.p0 == 0.0);
  CHECK(r.p1 == 0.0);
}

TEST_CASE("lone AUC node always reserves", "[chain]") {
  const auto k = build_transition_kernel(config(Mechanism::AUC, 1.0, 0.37, 1), 0.6);
  CHECK_THAT(k.p_ad, WithinAbs(0.9, 1e-15));
  CHECK_THAT(k.p_au, WithinAbs(0.1, 1e-15));
  CHECK(k.p_ae == 0.0);
  CHECK(k.p_ar == 0.0);
  CHECK(k.p_ai == 0.0);
  CHECK(k.p_ah == 0.0);
}

TEST_CASE("AUC kernel by hand for three nodes", "[chain]") {
  const auto k = build_transition_kernel(config(Mechanism::AUC, 0.4, 0.2, 3), 0.5);
  // P0 = 0.64, P1 = 0.32
  CHECK_THAT(k.p_ad, WithinAbs(0.9 * 0.4 * 0.712, 1e-15));
  CHECK_THAT(k.p_au, WithinAbs(0.1 * 0.4 * 0.712 + 0.9 * 0.6 * 0.136, 1e-15));
  CHECK_THAT(k.p_ae, WithinAbs(0.1 * 0.6 * 0.136, 1e-15));
  CHECK_THAT(k.p_ar, WithinAbs(0.9 * 0.4 * 0.288, 1e-15));
  CHECK_THAT(k.p_ai, WithinAbs(0.1 * 0.4 * 0.288 + 0.9 * 0.6 * 0.864, 1e-15));
  CHECK_THAT(k.p_ah, WithinAbs(0.1 * 0.6 * 0.864, 1e-15));
  CHECK_THAT(k.active_row_sum(), WithinAbs(1.0, 1e-12));
  CHECK_THAT(k.silent_row_sum(), WithinAbs(1.0, 1e-15));
}

TEST_CASE("SAFC kernel has no economical update and ignores eta", "[chain]") {
  for (double pa : {0.0, 0.2, 0.9}) {
    const auto a = build_transition_kernel(config(Mechanism::SAFC, 0.3, 0.1), pa);
    const auto b = build_transition_kernel(config(Mechanism::SAFC, 0.3, 0.9), pa);
    CHECK(a.p_ae == 0.0);
    CHECK(a == b);
  }
}

TEST_CASE("kernel rows sum to one for every mechanism", "[chain]") {
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int i = 0; i < 200; ++i) {
    for (auto m : {Mechanism::AUC, Mechanism::RUC, Mechanism::SAFC, Mechanism::SA_BASELINE}) {
      const auto vc = config(m, u(rng), u(rng), 1 + static_cast<int>(u(rng) * 100), 0.01 + 0.99 * u(rng),
                             1 + static_cast<int>(u(rng) * 10));
      const auto k = build_transition_kernel(vc, u(rng));
      CHECK_THAT(k.active_row_sum(), WithinAbs(1.0, 1e-12));
      CHECK_THAT(k.silent_row_sum(), WithinAbs(1.0, 1e-15));
      for (double p : {k.p_ah, k.p_ai, k.p_ar, k.p_ae, k.p_au, k.p_ad}) CHECK(p >= 0.0);
    }
  }
}

TEST_CASE("stability condition", "[chain]") {
  TransitionKernel k;
  k.p_au = 0.5;
  k.p_ah = 0.1;
  k.p_ai = 0.4;
  CHECK(stability_condition(k, 1));

  TransitionKernel accumulate;
  accumulate.p_ah = 0.3;
  accumulate.p_ai = 0.7;
  CHECK_FALSE(stability_condition(accumulate, 5));

  TransitionKernel boundary;
  boundary.p_au = 0.1;
  boundary.p_ah = 0.1;
  boundary.p_ai = 0.8;
  CHECK_FALSE(stability_condition(boundary, 1));
  CHECK_THROWS_AS(characteristic_root(boundary, 1), UnstableChainError);
}

TEST_CASE("quadratic instance has root 0.2", "[chain]") {
  const auto k = quadratic_kernel();
  const double z = characteristic_root(k, 1);
  CHECK_THAT(z, WithinAbs(0.2, 1e-12));
  CHECK(std::abs(characteristic_polynomial(k, 1, z)) < 1e-12);
  CHECK_THAT(characteristic_polynomial(k, 1, 0.7), WithinAbs(0.5 * (0.7 - 1.0) * (0.7 - 0.2), 1e-15));
}

TEST_CASE("no harvest in the active regime gives root 0", "[chain]") {
  TransitionKernel k;
  k.p_sh = 0.3;
  k.p_si = 0.7;
  k.p_ai = 0.5;
  k.p_ad = 0.5;
  CHECK(characteristic_root(k, 3) == 0.0);
  const auto s = stationary_distribution(k, 0.0, 3);
  CHECK_THAT(s.total_mass(), WithinAbs(1.0, 1e-14));
  const auto oracle = oracle_stationary(k, 3);
  CHECK(max_abs_diff(s, oracle.distribution) < 1e-10);
  CHECK(balance_residuals(s).max() < 1e-12);
}

TEST_CASE("characteristic polynomial vanishes at one", "[chain]") {
  std::mt19937_64 rng(11);
  for (int i = 0; i < 100; ++i) {
    const int M = 1 + i % 10;
    const auto k = random_ecr_kernel(rng, M);
    CHECK(std::abs(characteristic_polynomial(k, M, 1.0)) < 1e-12);
  }
}

TEST_CASE("oracle tail ratio on the quadratic instance", "[chain][oracle]") {
  const auto k = quadratic_kernel_with_deep();
  const auto oracle = oracle_stationary(k, 1);
  REQUIRE(oracle.converged);
  const double ratio = oracle.distribution[6] / oracle.distribution[5];
  const double z = characteristic_root(k, 1);
  CHECK_THAT(ratio, WithinAbs(z, 1e-9));
  // Without deep updates the root is exactly the factorized 0.2.
  const auto pure = oracle_stationary(quadratic_kernel(), 1, {.truncation = 40, .enlarge = false});
  CHECK_THAT(pure.distribution[8] / pure.distribution[7], WithinAbs(0.2, 1e-9));
}

TEST_CASE("pure harvest drifts to the truncation boundary", "[chain][oracle]") {
  TransitionKernel k;
  k.p_sh = 0.5;
  k.p_si = 0.5;
  k.p_ah = 0.5;
  k.p_ai = 0.5;
  OracleOptions opt;
  opt.truncation = 64;
  opt.enlarge = false;
  opt.max_iterations = 20000;
  const auto oracle = oracle_stationary(k, 3, opt);
  CHECK(oracle.distribution.back() > 0.99);
}

TEST_CASE("closed form matches the oracle on random kernels", "[chain][oracle]") {
  std::mt19937_64 rng(2024);
  for (int i = 0; i < 50; ++i) {
    const int M = 1 + i % 10;
    const auto k = random_ecr_kernel(rng, M);
    const double z = characteristic_root(k, M);
    CHECK(std::abs(characteristic_polynomial(k, M, z)) < 1e-12);
    const auto s = stationary_distribution(k, z, M);
    CHECK_THAT(s.total_mass(), WithinAbs(1.0, 1e-12));
    CHECK_THAT(s.probability(M + 1), WithinRel(s.probability(0) * k.p_sh / k.p_ad, 1e-13));
    const auto oracle = oracle_stationary(k, M);
    REQUIRE(oracle.converged);
    CHECK(max_abs_diff(s, oracle.distribution) < 1e-7);
    CHECK(balance_residuals(s).max() < 1e-10);
  }
}

TEST_CASE("division-free forms agree with the literal ones", "[chain]") {
  std::mt19937_64 rng(99);
  for (int i = 0; i < 100; ++i) {
    const int M = 1 + i % 10;
    const auto k = random_ecr_kernel(rng, M);
    const double z = characteristic_root(k, M);
    if (z < 1e-6) continue;
    const auto s = stationary_distribution(k, z, M);
    CHECK_THAT(1.0 / s.s0, WithinRel(literal_inverse_s0(k, z, M), 1e-9));
    if (M >= 2) CHECK_THAT(s.probability(M), WithinRel(s.s0 * k.p_ah / (z * k.p_ad), 1e-9));
  }
}

TEST_CASE("active probability is the geometric tail", "[chain]") {
  const auto sol = solve_self_consistent(config(Mechanism::AUC, kAucQ, kAucEta));
  const auto& s = sol.stationary;
  double tail = 0.0;
  for (std::int64_t m = s.M + 1; m < s.M + 4000; ++m) tail += s.probability(m);
  CHECK_THAT(active_probability(s), WithinAbs(tail, 1e-12));
  CHECK_THAT(active_probability(s), WithinAbs(s.tail_head() / (1.0 - s.z), 1e-15));

  StationarySolution inflated = s;
  inflated.s0 = 10.0;
  CHECK(active_probability(inflated) == 1.0);
}

TEST_CASE("AUC defaults agree with the oracle", "[chain][oracle]") {
  for (auto [q, eta] : {std::pair{0.2, 0.1}, std::pair{kAucQ, kAucEta}}) {
    const auto sol = solve_self_consistent(config(Mechanism::AUC, q, eta));
    REQUIRE(sol.regime() == Regime::ECR);
    const auto& s = sol.stationary;
    CHECK(std::abs(characteristic_polynomial(sol.kernel, 7, s.z)) < 1e-12);
    const auto oracle = oracle_stationary(sol.kernel, 7);
    REQUIRE(oracle.converged);
    CHECK(max_abs_diff(s, oracle.distribution) < 1e-8);
    double mass = 0.0;
    for (std::size_t m = 8; m < oracle.distribution.size(); ++m) mass += oracle.distribution[m];
    CHECK_THAT(s.p_a, WithinAbs(mass, 1e-8));
    const std::size_t far = 40;
    CHECK_THAT(oracle.distribution[far + 1] / oracle.distribution[far], WithinAbs(s.z, 1e-6));
  }
}

TEST_CASE("fixed point does not depend on the starting guess", "[chain][fixed-point]") {
  for (auto m : {Mechanism::AUC, Mechanism::RUC, Mechanism::SAFC}) {
    for (auto [q, eta] : {std::pair{0.2, 0.1}, std::pair{kAucQ, kAucEta}, std::pair{0.02, 0.5}, std::pair{0.9, 0.9}}) {
      const auto vc = config(m, q, eta);
      FixedPointOptions low, high;
      low.initial_guess = 0.01;
      high.initial_guess = 1.0;
      const auto a = solve_self_consistent(vc, low);
      const auto b = solve_self_consistent(vc, high);
      CHECK_THAT(a.p_a(), WithinAbs(b.p_a(), 1e-8));
      CHECK(a.regime() == b.regime());
    }
  }
}

TEST_CASE("single node converges in one step", "[chain][fixed-point]") {
  for (auto m : {Mechanism::AUC, Mechanism::RUC, Mechanism::SAFC}) {
    const auto sol = solve_self_consistent(config(m, 0.5, 0.3, 1));
    CHECK(sol.iterations == 1);
    CHECK(sol.method == FixedPointMethod::Direct);
  }
}

TEST_CASE("AUC fixed point satisfies the energy balance", "[chain][fixed-point]") {
  for (auto [q, eta] : {std::pair{kAucQ, kAucEta}, std::pair{0.2, 0.1}, std::pair{0.6, 0.02}}) {
    const auto sol = solve_self_consistent(config(Mechanism::AUC, q, eta));
    REQUIRE(sol.regime() == Regime::ECR);
    const double pa = sol.p_a();
    const auto [p0, p1] = reservation_outcomes(pa, q, 50);
    CHECK(std::abs(pa - auc::active_probability(7, q, eta, 0.1, p0, p1)) < 1e-8);
  }
}

TEST_CASE("RUC and SAFC fixed points match their root forms", "[chain][fixed-point]") {
  for (auto [q, eta] : {std::pair{0.2, 0.1}, std::pair{0.5, 0.3}, std::pair{0.05, 0.8}}) {
    const auto ruc = solve_self_consistent(config(Mechanism::RUC, q, eta));
    if (ruc.regime() == Regime::ECR)
      CHECK_THAT(ruc.p_a(), WithinAbs(ruc_active_probability(7, q, 0.1, ruc.stationary.z), 1e-9));
    const auto safc = solve_self_consistent(config(Mechanism::SAFC, q, 0.0));
    if (safc.regime() == Regime::ECR)
      CHECK_THAT(safc.p_a(), WithinAbs(safc_active_probability(7, q, 0.1, safc.stationary.z, 50), 1e-9));
  }
}

TEST_CASE("every solved instance has a tight root", "[chain]") {
  for (auto m : {Mechanism::AUC, Mechanism::RUC, Mechanism::SAFC, Mechanism::SA_BASELINE}) {
    for (int i = 1; i <= 10; ++i) {
      for (int j = 1; j <= 10; ++j) {
        const auto vc = config(m, i / 10.0, j / 10.0);
        const auto sol = solve_self_consistent(vc);
        if (sol.regime() == Regime::ESR) continue;
        CHECK(std::abs(characteristic_polynomial(sol.kernel, chain_update_cost(vc.get()), sol.stationary.z)) <
              1e-12);
      }
    }
  }
}

TEST_CASE("raising the arrival rate never leaves ESR", "[chain]") {
  for (auto m : {Mechanism::AUC, Mechanism::RUC, Mechanism::SAFC, Mechanism::SA_BASELINE}) {
    bool esr = false;
    for (int i = 1; i <= 100; ++i) {
      const auto sol = solve_self_consistent(config(m, 0.2, 0.1, 50, i / 100.0));
      if (esr) CHECK(sol.regime() == Regime::ESR);
      esr = esr || sol.regime() == Regime::ESR;
    }
  }
}

TEST_CASE("M = 1 chain has no interior states", "[chain]") {
  const auto sol = solve_self_consistent(config(Mechanism::AUC, 0.3, 0.2, 10, 0.1, 1));
  REQUIRE(sol.regime() == Regime::ECR);
  const auto oracle = oracle_stationary(sol.kernel, 1);
  CHECK(max_abs_diff(sol.stationary, oracle.distribution) < 1e-8);
  CHECK(balance_residuals(sol.stationary).max() < 1e-10);
}
