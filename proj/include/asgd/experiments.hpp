#pragma once

// Replicate harness and the affine asymptotic-normality check.

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "json.hpp"

#include "asgd/engine.hpp"
#include "asgd/nonlinear.hpp"
#include "asgd/rng.hpp"
#include "asgd/stats.hpp"

namespace asgd {

/// Seed of replicate r, derived from the base seed so replicates never share streams.
inline std::uint64_t replicate_seed(std::uint64_t base, std::size_t r) {
  Stream s(base, stream_id(StreamTag::Replicate, 0, r));
  return s.next_u64();
}

/// f(x) - f(x*) = 1/2 (x - x*)^T H (x - x*) for a quadratic with Hessian H.
inline double quadratic_excess(const Matrix& H, const Vector& x, const Vector& x_star) {
  const Vector e = x - x_star;
  return 0.5 * e.dot(H * e);
}

inline constexpr std::size_t kMaxPooledDelays = 1u << 20;

struct ReplicateRun {
  ReplicateBatch batch;
  std::vector<std::uint64_t> delays;  // pooled over replicates
  bool assumption1_satisfied = true;
  std::vector<std::string> warnings;
};

/// Runs R independent replicates and collects sqrt(n)(x_bar - x*) and
/// n (f(x_bar) - f*), where n is the number of averaged iterates and
/// `excess(x)` returns f(x) - f*.
template <DirectionSource S, class Excess>
ReplicateRun run_replicates(const S& src, const RunConfig& base, std::size_t replicates, const Vector& x_star,
                            Excess&& excess, bool keep_delays = true) {
  if (replicates < 2) throw std::invalid_argument("run_replicates: need at least 2 replicates");
  ReplicateRun out;
  out.batch.errors.resize(static_cast<Eigen::Index>(replicates), x_star.size());
  out.batch.gaps.resize(replicates);
  for (std::size_t r = 0; r < replicates; ++r) {
    RunConfig cfg = base;
    cfg.seed = replicate_seed(base.seed, r);
    cfg.trace_gap = false;
    const RunResult res = run(src, cfg);
    if (res.avg_count == 0) throw std::runtime_error("run_replicates: nothing was averaged (burn-in too long)");
    const double n = static_cast<double>(res.avg_count);
    out.batch.n = res.avg_count;
    out.batch.errors.row(static_cast<Eigen::Index>(r)) = (std::sqrt(n) * (res.x_bar - x_star)).transpose();
    out.batch.gaps[r] = n * excess(res.x_bar);
    out.assumption1_satisfied = res.assumption1_satisfied;
    if (r == 0) out.warnings = res.warnings;
    if (keep_delays && out.delays.size() < kMaxPooledDelays)
      out.delays.insert(out.delays.end(), res.delays.begin(), res.delays.end());
  }
  return out;
}

struct StatTolerances {
  double covariance = 0.20;  // relative Frobenius error vs H^{-1} Sigma H^{-1}
  double gap = 0.25;         // relative error of the mean gap vs 1/2 tr(H^{-1} Sigma)
  std::size_t low_power_below = 30;
};

struct StatReport {
  std::uint64_t n = 0;
  std::size_t replicates = 0;
  Matrix empirical;
  Matrix theoretical;
  double covariance_match = 0.0;
  GapStatistic gap;
  bool covariance_pass = false;
  bool gap_pass = false;
  bool low_power = false;
  bool assumption1_satisfied = true;
  std::string delay_model;
  std::vector<std::uint64_t> delays;
  std::vector<std::string> warnings;

  bool pass() const { return covariance_pass && gap_pass; }

  nlohmann::json to_json() const {
    auto mat = [](const Matrix& m) {
      nlohmann::json a = nlohmann::json::array();
      for (Eigen::Index i = 0; i < m.rows(); ++i) {
        nlohmann::json row = nlohmann::json::array();
        for (Eigen::Index j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
        a.push_back(row);
      }
      return a;
    };
    nlohmann::json j;
    j["n"] = n;
    j["replicates"] = replicates;
    j["low_power"] = low_power;
    j["covariance_match"] = covariance_match;
    j["covariance_pass"] = covariance_pass;
    j["empirical_covariance"] = mat(empirical);
    j["sandwich_covariance"] = mat(theoretical);
    j["gap_sample_mean"] = gap.sample_mean;
    j["gap_predicted_mean"] = gap.predicted_mean;
    j["gap_ratio"] = gap.ratio;
    j["gap_sample_variance"] = gap.sample_variance;
    j["gap_chi2_variance"] = gap.chi2_variance;
    j["gap_pass"] = gap_pass;
    j["assumption1_satisfied"] = assumption1_satisfied;
    j["delay_model"] = delay_model;
    if (!delays.empty()) {
      std::uint64_t mx = 0;
      for (auto d : delays) mx = std::max(mx, d);
      j["delay_max"] = mx;
      j["delay_moment_1"] = delay_moment(delays, 1.0);
      j["delay_moment_2"] = delay_moment(delays, 2.0);
      j["delay_moment_4"] = delay_moment(delays, 4.0);
    }
    j["warnings"] = warnings;
    j["pass"] = pass();
    return j;
  }
};

/// Compares a replicate batch with the sandwich covariance and the gap mean.
/// When the batch carries no gaps they are computed as 1/2 e^T H e.
inline StatReport evaluate_replicates(ReplicateBatch batch, const Matrix& H, const Matrix& Sigma,
                                      const StatTolerances& tol = {}) {
  batch.validate();
  if (batch.gaps.empty()) {
    batch.gaps.resize(batch.replicates());
    for (std::size_t r = 0; r < batch.replicates(); ++r) {
      const Vector e = batch.errors.row(static_cast<Eigen::Index>(r)).transpose();
      batch.gaps[r] = 0.5 * e.dot(H * e);
    }
  }
  StatReport rep;
  rep.n = batch.n;
  rep.replicates = batch.replicates();
  rep.empirical = empirical_covariance(batch.errors);
  rep.theoretical = sandwich(H, Sigma);
  rep.covariance_match = covariance_match(rep.empirical, rep.theoretical);
  rep.gap = gap_statistic(batch.gaps, H, Sigma);
  rep.covariance_pass = rep.covariance_match <= tol.covariance;
  rep.gap_pass = std::abs(rep.gap.ratio - 1.0) <= tol.gap;
  rep.low_power = rep.replicates < tol.low_power_below;
  if (rep.low_power) rep.warnings.push_back("only " + std::to_string(rep.replicates) + " replicates: low power");
  return rep;
}

/// Affine residual R(x) = H (x - x*) with N(0, Sigma) noise, i.i.d. across
/// steps, run in `cfg` (one epoch of steps_per_epoch steps unless set).
struct AffineStatSpec {
  Matrix H;
  Matrix Sigma;
  Vector x_star;
  RunConfig cfg;
  std::size_t replicates = 200;
  StatTolerances tol;
};

inline AffineStatSpec default_affine_spec(std::uint64_t n = 50000, std::size_t replicates = 200) {
  AffineStatSpec s;
  s.H = Vector::LinSpaced(4, 1.0, 4.0).asDiagonal();
  s.Sigma = Matrix::Identity(4, 4);
  s.x_star = (Vector(4) << 1.0, -1.0, 0.5, 2.0).finished();
  s.cfg.mode = Mode::Simulated;
  s.cfg.workers = 1;
  s.cfg.batch = 1;
  s.cfg.epochs = 1;
  s.cfg.steps_per_epoch = n;
  s.cfg.schedule = StepsizeSchedule::poly(1.0, 0.55);
  s.cfg.seed = 20160501;
  s.replicates = replicates;
  return s;
}

inline StatReport run_affine_stat_test(const AffineStatSpec& spec, ReplicateBatch* batch_out = nullptr) {
  const ResidualProblem problem = affine_residual(spec.H, spec.x_star, spec.Sigma);
  const ResidualSource src(problem);
  const Matrix Hsym = 0.5 * (spec.H + spec.H.transpose());
  auto rr = run_replicates(src, spec.cfg, spec.replicates, spec.x_star,
                           [&](const Vector& x) { return quadratic_excess(Hsym, x, spec.x_star); });
  StatReport rep = evaluate_replicates(rr.batch, spec.H, spec.Sigma, spec.tol);
  rep.assumption1_satisfied = spec.cfg.delay.assumption1_satisfied();
  rep.delay_model = spec.cfg.delay.describe();
  rep.delays = std::move(rr.delays);
  for (auto& w : rr.warnings) rep.warnings.push_back(w);
  if (batch_out) *batch_out = std::move(rr.batch);
  return rep;
}

}  // namespace asgd
