#pragma once

// Distributions of the incorporation delay D_k: the number of steps between
// issuing update k and the update becoming fully visible.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <variant>

#include "asgd/rng.hpp"

namespace asgd {

struct NoDelay {};

/// Uniform on {0, ..., max}.
struct BoundedDelay {
  std::uint64_t max = 0;
};

/// P(D = t) = (1 - p)^t p, t >= 0.
struct GeometricDelay {
  double p = 0.5;
};

/// Lomax (shifted Pareto): P(D >= t) ~ (scale / (scale + t))^tail_order.
/// Moments of order < tail_order are finite.
struct ParetoDelay {
  double tail_order = 4.0;
  double scale = 1.0;
};

class DelayModel {
 public:
  using Variant = std::variant<NoDelay, BoundedDelay, GeometricDelay, ParetoDelay>;

  DelayModel() = default;
  DelayModel(NoDelay) {}
  DelayModel(BoundedDelay b) : v_(b) {}
  DelayModel(GeometricDelay g) : v_(g) {
    if (!(g.p > 0.0 && g.p <= 1.0)) throw std::invalid_argument("geometric delay: p must be in (0, 1]");
  }
  DelayModel(ParetoDelay p) : v_(p) {
    if (!(p.tail_order > 0.0)) throw std::invalid_argument("pareto delay: tail order must be positive");
    if (!(p.scale >= 1.0)) throw std::invalid_argument("pareto delay: scale must be >= 1");
  }

  static DelayModel none() { return {}; }
  static DelayModel bounded(std::uint64_t m) { return BoundedDelay{m}; }
  static DelayModel geometric(double p) { return GeometricDelay{p}; }
  static DelayModel pareto(double tail_order, double scale = 1.0) { return ParetoDelay{tail_order, scale}; }

  /// "none", "bounded:M", "geometric:p", "pareto:order" or "pareto:order,scale".
  static DelayModel parse(const std::string& text) {
    const auto colon = text.find(':');
    const std::string kind = text.substr(0, colon);
    const std::string arg = colon == std::string::npos ? "" : text.substr(colon + 1);
    auto number = [&](const std::string& s) {
      std::size_t used = 0;
      double v = 0.0;
      try {
        v = std::stod(s, &used);
      } catch (const std::exception&) {
        used = 0;
      }
      if (used == 0 || used != s.size()) throw std::invalid_argument("delay model '" + text + "': bad number '" + s + "'");
      return v;
    };
    if (kind == "none" && arg.empty()) return none();
    if (kind == "bounded" && !arg.empty()) {
      const double m = number(arg);
      if (m < 0.0 || m != std::floor(m)) throw std::invalid_argument("bounded delay: M must be a non-negative integer");
      return bounded(static_cast<std::uint64_t>(m));
    }
    if (kind == "geometric" && !arg.empty()) return geometric(number(arg));
    if (kind == "pareto" && !arg.empty()) {
      const auto comma = arg.find(',');
      if (comma == std::string::npos) return pareto(number(arg));
      return pareto(number(arg.substr(0, comma)), number(arg.substr(comma + 1)));
    }
    throw std::invalid_argument("unknown delay model '" + text + "'");
  }

  bool is_none() const {
    if (std::holds_alternative<NoDelay>(v_)) return true;
    if (const auto* b = std::get_if<BoundedDelay>(&v_)) return b->max == 0;
    if (const auto* g = std::get_if<GeometricDelay>(&v_)) return g->p == 1.0;
    return false;
  }

  /// True iff E[D^lambda] < infinity for some lambda > 2.
  bool assumption1_satisfied() const {
    if (const auto* p = std::get_if<ParetoDelay>(&v_)) return p->tail_order > 2.0;
    return true;
  }

  std::uint64_t sample(Stream& rng) const {
    constexpr double kCap = 0x1.0p62;
    return std::visit(
        [&](const auto& m) -> std::uint64_t {
          using T = std::decay_t<decltype(m)>;
          if constexpr (std::is_same_v<T, NoDelay>) {
            return 0;
          } else if constexpr (std::is_same_v<T, BoundedDelay>) {
            return m.max == 0 ? 0 : rng.below(m.max + 1);
          } else if constexpr (std::is_same_v<T, GeometricDelay>) {
            if (m.p == 1.0) return 0;
            const double t = std::floor(std::log(rng.uniform_pos()) / std::log1p(-m.p));
            return static_cast<std::uint64_t>(std::min(t, kCap));
          } else {
            const double x = m.scale * (std::pow(rng.uniform_pos(), -1.0 / m.tail_order) - 1.0);
            return static_cast<std::uint64_t>(std::min(std::floor(x), kCap));
          }
        },
        v_);
  }

  std::string describe() const {
    return std::visit(
        [](const auto& m) -> std::string {
          using T = std::decay_t<decltype(m)>;
          if constexpr (std::is_same_v<T, NoDelay>) return "none";
          else if constexpr (std::is_same_v<T, BoundedDelay>) return "bounded(" + std::to_string(m.max) + ")";
          else if constexpr (std::is_same_v<T, GeometricDelay>) return "geometric(" + std::to_string(m.p) + ")";
          else return "pareto(" + std::to_string(m.tail_order) + "," + std::to_string(m.scale) + ")";
        },
        v_);
  }

  const Variant& variant() const { return v_; }

 private:
  Variant v_{NoDelay{}};
};

}  // namespace asgd
