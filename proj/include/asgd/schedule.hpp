#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <variant>

namespace asgd {

/// alpha_k = alpha * k^{-beta}
struct PolyStep {
  double alpha = 1.0;
  double beta = 0.55;
};

/// alpha = alpha0 * decay^epoch, constant within an epoch.
struct EpochBackoff {
  double alpha0 = 0.1;
  double decay = 0.95;
};

class StepsizeSchedule {
 public:
  StepsizeSchedule() = default;
  StepsizeSchedule(PolyStep p) : rule_(p) {
    if (!(p.alpha > 0.0)) throw std::invalid_argument("poly schedule: alpha must be positive");
    if (!(p.beta >= 0.0 && p.beta <= 1.0)) throw std::invalid_argument("poly schedule: beta must be in [0, 1]");
  }
  StepsizeSchedule(EpochBackoff b) : rule_(b) {
    if (!(b.alpha0 > 0.0)) throw std::invalid_argument("backoff schedule: alpha0 must be positive");
    if (!(b.decay > 0.0 && b.decay < 1.0)) throw std::invalid_argument("backoff schedule: decay must be in (0, 1)");
  }

  static StepsizeSchedule poly(double alpha, double beta) { return PolyStep{alpha, beta}; }
  static StepsizeSchedule backoff(double alpha0, double decay) { return EpochBackoff{alpha0, decay}; }
  /// Constant stepsize, i.e. poly with beta = 0.
  static StepsizeSchedule constant(double alpha) { return PolyStep{alpha, 0.0}; }

  /// Step k >= 1 (the post-increment counter value) taken during `epoch` >= 0.
  double operator()(std::uint64_t k, std::size_t epoch) const {
    if (const auto* p = std::get_if<PolyStep>(&rule_))
      return p->beta == 0.0 ? p->alpha : p->alpha * std::pow(static_cast<double>(k), -p->beta);
    const auto& b = std::get<EpochBackoff>(rule_);
    return b.alpha0 * std::pow(b.decay, static_cast<double>(epoch));
  }

  /// Non-empty when beta lies outside (1/2, 1), where averaging is not covered
  /// by the asymptotic normality result.
  std::string warning() const {
    if (const auto* p = std::get_if<PolyStep>(&rule_); p && !(p->beta > 0.5 && p->beta < 1.0))
      return "poly schedule beta=" + std::to_string(p->beta) + " is outside (1/2, 1)";
    return {};
  }

  bool is_poly() const { return std::holds_alternative<PolyStep>(rule_); }
  const std::variant<PolyStep, EpochBackoff>& rule() const { return rule_; }

  std::string describe() const {
    if (const auto* p = std::get_if<PolyStep>(&rule_))
      return "poly(alpha=" + std::to_string(p->alpha) + ",beta=" + std::to_string(p->beta) + ")";
    const auto& b = std::get<EpochBackoff>(rule_);
    return "backoff(alpha0=" + std::to_string(b.alpha0) + ",decay=" + std::to_string(b.decay) + ")";
  }

 private:
  std::variant<PolyStep, EpochBackoff> rule_{PolyStep{}};
};

inline double stepsize(const StepsizeSchedule& s, std::uint64_t k, std::size_t epoch) { return s(k, epoch); }

}  // namespace asgd
