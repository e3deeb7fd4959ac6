#include "catch_amalgamated.hpp"

#include "ehaoi/model.hpp"

using namespace ehaoi;
using Catch::Matchers::WithinAbs;

namespace {

ProtocolConfig defaults() { return ProtocolConfig{}; }

std::string field_of(const ProtocolConfig& c) {
  try {
    (void)validate_config(c);
  } catch (const ConfigError& e) {
    return e.field();
  }
  return "";
}

}  // namespace

TEST_CASE("default configuration is valid", "[model]") {
  const auto c = defaults();
  CHECK(c.n == 50);
  CHECK(c.xi == 0.1);
  CHECK(c.M == 7);
  CHECK(c.delta == 1.0 / 20.0);
  CHECK(c.mechanism == Mechanism::AUC);
  const auto vc = validate_config(c);
  CHECK(vc.get() == c);
}

TEST_CASE("SAFC normalizes eta to zero", "[model]") {
  ProtocolConfig c{1, 1.0, 1, 0.0, Mechanism::SAFC, 1.0, 0.7};
  const auto vc = validate_config(c);
  CHECK(vc->eta == 0.0);
  CHECK(vc->q == 1.0);
  CHECK(vc->n == 1);
}

TEST_CASE("n below one is rejected with its field name", "[model]") {
  auto c = defaults();
  c.n = 0;
  CHECK_THROWS_WITH(validate_config(c), "n must be >= 1");
  CHECK(field_of(c) == "n");
}

TEST_CASE("out-of-range parameters are rejected", "[model]") {
  auto c = defaults();
  c.xi = 0.0;
  CHECK(field_of(c) == "xi");
  c = defaults();
  c.xi = 1.5;
  CHECK(field_of(c) == "xi");
  c = defaults();
  c.M = 0;
  CHECK(field_of(c) == "M");
  c = defaults();
  c.delta = -0.1;
  CHECK(field_of(c) == "delta");
  c = defaults();
  c.q = 1.01;
  CHECK(field_of(c) == "q");
  c = defaults();
  c.eta = -0.01;
  CHECK(field_of(c) == "eta");
  c = defaults();
  c.xi = std::numeric_limits<double>::quiet_NaN();
  CHECK(field_of(c) == "xi");
}

TEST_CASE("validation is idempotent", "[model]") {
  for (auto m : {Mechanism::AUC, Mechanism::RUC, Mechanism::SAFC, Mechanism::SA_BASELINE}) {
    auto c = defaults();
    c.mechanism = m;
    const auto once = validate_config(c);
    const auto twice = validate_config(once.get());
    CHECK(once == twice);
  }
}

TEST_CASE("fallback access probability per mechanism", "[model]") {
  CHECK_THAT(access_probability(Mechanism::AUC, 0.3, 0.5), WithinAbs(0.5, 1e-15));
  CHECK_THAT(access_probability(Mechanism::RUC, 0.3, 0.5), WithinAbs(0.15, 1e-15));
  CHECK(access_probability(Mechanism::SAFC, 0.3, 0.5) == 0.0);
  CHECK_THROWS_AS(access_probability(Mechanism::SA_BASELINE, 0.3, 0.5), std::invalid_argument);
}

TEST_CASE("fallback access ordering holds on a grid", "[model]") {
  for (int i = 0; i <= 20; ++i) {
    for (int j = 0; j <= 20; ++j) {
      const double q = i / 20.0, eta = j / 20.0;
      CHECK(access_probability(Mechanism::SAFC, q, eta) == 0.0);
      CHECK(access_probability(Mechanism::RUC, q, eta) <= access_probability(Mechanism::AUC, q, eta));
    }
  }
}

TEST_CASE("mechanism names round-trip", "[model]") {
  for (auto m : {Mechanism::AUC, Mechanism::RUC, Mechanism::SAFC, Mechanism::SA_BASELINE})
    CHECK(parse_mechanism(to_string(m)) == m);
  CHECK(parse_mechanism("safc") == Mechanism::SAFC);
  CHECK_THROWS_AS(parse_mechanism("CSMA"), ConfigError);
}

TEST_CASE("round duration is one data slot plus the probing slot", "[model]") {
  auto c = defaults();
  CHECK_THAT(validate_config(c).round_duration().rounds_to_physical, WithinAbs(1.05, 1e-15));
  c.delta = 0.0;
  CHECK(validate_config(c).round_duration().rounds_to_physical == 1.0);
}
