#pragma once

// Shared domain types for energy-harvesting random access networks with
// channel probing: mechanisms, protocol configuration and its validation.

#include <cmath>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>

namespace ehaoi {

/// Handling of a failed channel reservation.
///   AUC  - every active node may transmit with probability eta
///   RUC  - only nodes that probed may transmit with probability eta
///   SAFC - nobody transmits
/// SA_BASELINE is EH slotted ALOHA without probing; only the simulator and
/// the baseline analysis accept it.
enum class Mechanism { AUC, RUC, SAFC, SA_BASELINE };

enum class Regime { ECR, ESR };

inline constexpr std::string_view to_string(Mechanism m) {
  switch (m) {
    case Mechanism::AUC: return "AUC";
    case Mechanism::RUC: return "RUC";
    case Mechanism::SAFC: return "SAFC";
    case Mechanism::SA_BASELINE: return "SA_BASELINE";
  }
  return "?";
}

inline constexpr std::string_view to_string(Regime r) {
  return r == Regime::ECR ? "ECR" : "ESR";
}

/// Invalid user input. `field()` names the offending configuration key.
class ConfigError : public std::invalid_argument {
 public:
  ConfigError(std::string field, const std::string& what)
      : std::invalid_argument(what), field_(std::move(field)) {}
  const std::string& field() const noexcept { return field_; }

 private:
  std::string field_;
};

/// Numerical failure: non-convergence, degenerate closed form, undefined AoI.
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline Mechanism parse_mechanism(std::string_view s) {
  if (s == "AUC" || s == "auc") return Mechanism::AUC;
  if (s == "RUC" || s == "ruc") return Mechanism::RUC;
  if (s == "SAFC" || s == "safc") return Mechanism::SAFC;
  if (s == "SA_BASELINE" || s == "sa_baseline" || s == "SA" || s == "sa")
    return Mechanism::SA_BASELINE;
  throw ConfigError("mechanism", "mechanism must be one of AUC, RUC, SAFC, SA_BASELINE (got '" +
                                     std::string(s) + "')");
}

/// Network and protocol parameters. Time unit is one round; the data slot
/// length is fixed at 1.
struct ProtocolConfig {
  int n = 50;             // source nodes
  double xi = 0.1;        // energy arrival probability per round
  int M = 7;              // energy units per data transmission
  double delta = 1.0 / 20.0;  // probing-to-data slot ratio
  Mechanism mechanism = Mechanism::AUC;
  double q = 0.2;         // probing probability
  double eta = 0.1;       // fallback access probability

  bool operator==(const ProtocolConfig&) const = default;
};

/// Physical length of a round in data-slot units.
struct RoundDuration {
  double rounds_to_physical = 1.0;

  static RoundDuration of(const ProtocolConfig& c) { return {1.0 + c.delta}; }
};

class ValidatedConfig;
ValidatedConfig validate_config(const ProtocolConfig& config);

/// A ProtocolConfig whose invariants have been checked. Only
/// validate_config() creates one.
class ValidatedConfig {
 public:
  const ProtocolConfig& get() const noexcept { return config_; }
  const ProtocolConfig* operator->() const noexcept { return &config_; }
  operator const ProtocolConfig&() const noexcept { return config_; }

  RoundDuration round_duration() const { return RoundDuration::of(config_); }

  bool operator==(const ValidatedConfig&) const = default;

 private:
  explicit ValidatedConfig(const ProtocolConfig& c) : config_(c) {}
  friend ValidatedConfig validate_config(const ProtocolConfig& config);

  ProtocolConfig config_;
};

namespace detail {

inline void require_probability(double v, const char* field) {
  if (!std::isfinite(v) || v < 0.0 || v > 1.0)
    throw ConfigError(field, std::string(field) + " must be a probability in [0, 1]");
}

}  // namespace detail

/// Checks every field; under SAFC eta is forced to 0.
inline ValidatedConfig validate_config(const ProtocolConfig& config) {
  if (config.n < 1) throw ConfigError("n", "n must be >= 1");
  if (config.M < 1) throw ConfigError("M", "M must be >= 1");
  if (!std::isfinite(config.xi) || config.xi <= 0.0 || config.xi > 1.0)
    throw ConfigError("xi", "xi must lie in (0, 1]");
  if (!std::isfinite(config.delta) || config.delta < 0.0)
    throw ConfigError("delta", "delta must be >= 0");
  detail::require_probability(config.q, "q");
  detail::require_probability(config.eta, "eta");

  ProtocolConfig out = config;
  if (out.mechanism == Mechanism::SAFC) out.eta = 0.0;
  return ValidatedConfig(out);
}

/// Data-slot access probability after a failed reservation.
inline double access_probability(Mechanism mechanism, double q, double eta) {
  switch (mechanism) {
    case Mechanism::AUC: return eta;
    case Mechanism::RUC: return q * eta;
    case Mechanism::SAFC: return 0.0;
    case Mechanism::SA_BASELINE: break;
  }
  throw std::invalid_argument(
      "access_probability: SA_BASELINE has no reservation phase, hence no fallback access");
}

}  // namespace ehaoi
