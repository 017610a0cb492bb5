#pragma once

// Statistics over Monte Carlo replicates of the averaged iterate.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <stdexcept>
#include <vector>

#include "asgd/model.hpp"

namespace asgd {

/// R replicates of sqrt(n) (x_bar_n - x*) (rows of `errors`) and
/// n (f(x_bar_n) - f(x*)) (`gaps`).
struct ReplicateBatch {
  std::uint64_t n = 0;
  Matrix errors;
  std::vector<double> gaps;

  std::size_t replicates() const { return static_cast<std::size_t>(errors.rows()); }

  void validate() const {
    if (errors.rows() < 2) throw std::invalid_argument("ReplicateBatch: need at least 2 replicates");
    if (!errors.allFinite()) throw std::invalid_argument("ReplicateBatch: non-finite error row");
    if (!gaps.empty() && gaps.size() != replicates())
      throw std::invalid_argument("ReplicateBatch: gaps and errors disagree on R");
  }
};

namespace detail {

inline void check_square(const Matrix& m, const char* what) {
  if (m.rows() != m.cols()) throw std::invalid_argument(std::string(what) + " must be square");
}

inline Matrix inverse_or_throw(const Matrix& H) {
  check_square(H, "H");
  Eigen::FullPivLU<Matrix> lu(H);
  if (!lu.isInvertible()) throw std::invalid_argument("H is singular");
  return lu.inverse();
}

}  // namespace detail

/// H^{-1} Sigma H^{-T}, symmetrized.
inline Matrix sandwich(const Matrix& H, const Matrix& Sigma) {
  detail::check_square(Sigma, "Sigma");
  if (H.rows() != Sigma.rows()) throw std::invalid_argument("sandwich: H and Sigma differ in size");
  const Matrix Hi = detail::inverse_or_throw(H);
  const Matrix S = Hi * Sigma * Hi.transpose();
  return 0.5 * (S + S.transpose());
}

/// Unbiased sample covariance of the rows, divisor R - 1.
inline Matrix empirical_covariance(const Matrix& rows) {
  const auto r = rows.rows();
  if (r < 2) throw std::invalid_argument("empirical_covariance: need at least 2 rows");
  const Eigen::RowVectorXd mean = rows.colwise().mean();
  const Matrix centered = rows.rowwise() - mean;
  return (centered.transpose() * centered) / static_cast<double>(r - 1);
}

/// ||empirical - theoretical||_F / ||theoretical||_F.
inline double covariance_match(const Matrix& empirical, const Matrix& theoretical) {
  if (empirical.rows() != theoretical.rows() || empirical.cols() != theoretical.cols())
    throw std::invalid_argument("covariance_match: shape mismatch");
  const double denom = theoretical.norm();
  if (!(denom > 0.0)) throw std::invalid_argument("covariance_match: theoretical matrix has zero norm");
  return (empirical - theoretical).norm() / denom;
}

struct GapStatistic {
  double sample_mean = 0.0;
  double predicted_mean = 0.0;  // (1/2) tr(H^{-1} Sigma)
  double ratio = 0.0;           // sample / predicted
  double sample_variance = 0.0;
  double chi2_variance = 0.0;  // 2 (predicted_mean)^2, the scaled chi^2_1 variance
};

inline GapStatistic gap_statistic(std::span<const double> gaps, const Matrix& H, const Matrix& Sigma) {
  if (gaps.size() < 2) throw std::invalid_argument("gap_statistic: need at least 2 replicates");
  detail::check_square(Sigma, "Sigma");
  const Matrix Hi = detail::inverse_or_throw(H);
  GapStatistic g;
  double s = 0.0;
  for (double v : gaps) s += v;
  g.sample_mean = s / static_cast<double>(gaps.size());
  double ss = 0.0;
  for (double v : gaps) ss += (v - g.sample_mean) * (v - g.sample_mean);
  g.sample_variance = ss / static_cast<double>(gaps.size() - 1);
  g.predicted_mean = 0.5 * (Hi * Sigma).trace();
  g.ratio = g.sample_mean / g.predicted_mean;
  g.chi2_variance = 2.0 * g.predicted_mean * g.predicted_mean;
  return g;
}

/// (mean of M^lambda)^{1/lambda}.
inline double delay_moment(std::span<const std::uint64_t> delays, double lambda) {
  if (delays.empty()) throw std::invalid_argument("delay_moment: empty delay list");
  if (!(lambda > 0.0)) throw std::invalid_argument("delay_moment: order must be positive");
  // Factor out the maximum so large delays and orders do not overflow.
  const double mx = static_cast<double>(*std::max_element(delays.begin(), delays.end()));
  if (mx == 0.0) return 0.0;
  double s = 0.0;
  for (auto m : delays) s += std::pow(static_cast<double>(m) / mx, lambda);
  return mx * std::pow(s / static_cast<double>(delays.size()), 1.0 / lambda);
}

inline double speedup(double single_core_epoch_seconds, double multi_core_epoch_seconds) {
  if (!(single_core_epoch_seconds > 0.0) || !(multi_core_epoch_seconds > 0.0))
    throw std::invalid_argument("speedup: epoch times must be positive");
  return single_core_epoch_seconds / multi_core_epoch_seconds;
}

struct MeanStderr {
  double mean = 0.0;
  double std_error = 0.0;
};

inline MeanStderr mean_stderr(std::span<const double> v) {
  MeanStderr r;
  if (v.empty()) return r;
  double s = 0.0;
  for (double x : v) s += x;
  r.mean = s / static_cast<double>(v.size());
  if (v.size() > 1) {
    double ss = 0.0;
    for (double x : v) ss += (x - r.mean) * (x - r.mean);
    r.std_error = std::sqrt(ss / static_cast<double>(v.size() - 1) / static_cast<double>(v.size()));
  }
  return r;
}

}  // namespace asgd
