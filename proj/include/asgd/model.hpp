#pragma once

// Finite-sample stochastic objectives f(x) = (1/N) sum_i F(x; row_i) with the
// analytic quantities used by the engine and the statistical checks.
//
// Normalization: f, its Hessian H and the gradient covariance Sigma are all
// empirical means over the N rows (the 1/N factor is always included), so
//   least squares: f = (1/2N) sum (<a_i,x> - b_i)^2,  H = (1/N) A^T A,
//   logistic:      f = (1/N) sum log(1 + exp(-b_i <a_i,x>)),
//   Sigma = (1/N) sum grad F(x*; i) grad F(x*; i)^T.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "asgd/dataset.hpp"

namespace asgd {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

inline std::span<const double> as_span(const Vector& v) {
  return {v.data(), static_cast<std::size_t>(v.size())};
}
inline std::span<const double> as_span(const std::vector<double>& v) { return {v.data(), v.size()}; }

enum class Loss { LeastSquares, Logistic };

inline const char* to_string(Loss loss) {
  return loss == Loss::LeastSquares ? "least_squares" : "logistic";
}

/// A dataset plus a loss.  Immutable and safe to share between threads.
class Problem {
 public:
  Problem(Dataset dataset, Loss loss)
      : data_(std::make_shared<const Dataset>(std::move(dataset))), loss_(loss) {
    if (loss_ == Loss::Logistic && data_->task() != Task::Binary)
      throw std::invalid_argument("Problem: logistic loss requires a binary dataset");
  }

  const Dataset& dataset() const { return *data_; }
  Loss loss() const { return loss_; }
  std::size_t dim() const { return data_->dim(); }
  std::size_t n_rows() const { return data_->n_rows(); }

 private:
  std::shared_ptr<const Dataset> data_;
  Loss loss_;
};

namespace detail {

inline void check_dim(const Problem& p, std::size_t n) {
  if (n != p.dim())
    throw std::invalid_argument("dimension mismatch: got " + std::to_string(n) + ", problem has " +
                                std::to_string(p.dim()));
}

inline void check_row(const Problem& p, std::size_t row) {
  if (row >= p.n_rows())
    throw std::out_of_range("row index " + std::to_string(row) + " out of range (n_rows = " +
                            std::to_string(p.n_rows()) + ")");
}

// log(1 + exp(-t)) without overflow.
inline double log1p_exp_neg(double t) {
  return t >= 0.0 ? std::log1p(std::exp(-t)) : -t + std::log1p(std::exp(t));
}

// 1 / (1 + exp(t)) without overflow.
inline double inv_one_plus_exp(double t) {
  if (t >= 0.0) {
    const double e = std::exp(-t);
    return e / (1.0 + e);
  }
  return 1.0 / (1.0 + std::exp(t));
}

}  // namespace detail

/// d/dz of the per-sample loss as a function of z = <a, x>; the sample
/// gradient is this scalar times a.
inline double loss_derivative(Loss loss, double z, double label) {
  if (loss == Loss::LeastSquares) return z - label;
  return -label * detail::inv_one_plus_exp(label * z);
}

inline double sample_loss(Loss loss, double z, double label) {
  if (loss == Loss::LeastSquares) return 0.5 * (z - label) * (z - label);
  return detail::log1p_exp_neg(label * z);
}

/// Dense accumulator that remembers which coordinates were touched, so sparse
/// gradients can be summed and applied without visiting all d coordinates.
class GradBuffer {
 public:
  explicit GradBuffer(std::size_t dim = 0) { resize(dim); }

  void resize(std::size_t dim) {
    values_.assign(dim, 0.0);
    marked_.assign(dim, 0);
    touched_.clear();
    touched_.reserve(dim);
  }

  void clear() {
    for (auto j : touched_) {
      values_[j] = 0.0;
      marked_[j] = 0;
    }
    touched_.clear();
  }

  void add(std::uint32_t j, double v) {
    if (!marked_[j]) {
      marked_[j] = 1;
      touched_.push_back(j);
    }
    values_[j] += v;
  }

  /// Marks every coordinate as touched (dense directions).
  void touch_all() {
    for (std::size_t j = 0; j < values_.size(); ++j) add(static_cast<std::uint32_t>(j), 0.0);
  }

  void scale(double c) {
    for (auto j : touched_) values_[j] *= c;
  }

  std::size_t dim() const { return values_.size(); }
  std::span<const std::uint32_t> touched() const { return touched_; }
  std::span<const double> values() const { return values_; }
  std::span<double> values() { return values_; }

  Vector to_dense() const { return Eigen::Map<const Vector>(values_.data(), values_.size()); }

 private:
  std::vector<double> values_;
  std::vector<char> marked_;
  std::vector<std::uint32_t> touched_;
};

/// Adds scale * grad F(x; row) into `out`.
inline void accumulate_sample_gradient(const Problem& p, std::span<const double> x, std::size_t row,
                                       double scale, GradBuffer& out) {
  const auto& r = p.dataset().row(row);
  const double coef = scale * loss_derivative(p.loss(), r.features.dot(x), r.label);
  for (const auto& e : r.features.entries()) out.add(e.index, coef * e.value);
}

inline Vector sample_gradient(const Problem& p, std::span<const double> x, std::size_t row) {
  detail::check_dim(p, x.size());
  detail::check_row(p, row);
  GradBuffer g(p.dim());
  accumulate_sample_gradient(p, x, row, 1.0, g);
  return g.to_dense();
}

/// Mean of the sample gradients over `rows`, summed left to right.
inline void accumulate_batch_gradient(const Problem& p, std::span<const double> x,
                                      std::span<const std::uint32_t> rows, GradBuffer& out) {
  for (auto r : rows) accumulate_sample_gradient(p, x, r, 1.0, out);
  out.scale(1.0 / static_cast<double>(rows.size()));
}

inline Vector batch_gradient(const Problem& p, std::span<const double> x,
                             std::span<const std::uint32_t> rows) {
  detail::check_dim(p, x.size());
  if (rows.empty()) throw std::invalid_argument("batch_gradient: empty batch");
  for (auto r : rows) detail::check_row(p, r);
  GradBuffer g(p.dim());
  accumulate_batch_gradient(p, x, rows, g);
  return g.to_dense();
}

inline double objective(const Problem& p, std::span<const double> x) {
  detail::check_dim(p, x.size());
  if (p.n_rows() == 0) throw std::invalid_argument("objective: empty dataset");
  double s = 0.0;
  for (const auto& r : p.dataset().rows()) s += sample_loss(p.loss(), r.features.dot(x), r.label);
  return s / static_cast<double>(p.n_rows());
}

inline Vector full_gradient(const Problem& p, std::span<const double> x) {
  detail::check_dim(p, x.size());
  if (p.n_rows() == 0) throw std::invalid_argument("full_gradient: empty dataset");
  Vector g = Vector::Zero(static_cast<Eigen::Index>(p.dim()));
  for (const auto& r : p.dataset().rows()) {
    const double c = loss_derivative(p.loss(), r.features.dot(x), r.label);
    for (const auto& e : r.features.entries()) g[e.index] += c * e.value;
  }
  return g / static_cast<double>(p.n_rows());
}

/// Hessian of the per-sample loss at x (dense, d x d).
inline Matrix sample_hessian(const Problem& p, std::span<const double> x, std::size_t row) {
  detail::check_dim(p, x.size());
  detail::check_row(p, row);
  const auto& r = p.dataset().row(row);
  double w = 1.0;
  if (p.loss() == Loss::Logistic) {
    const double s = detail::inv_one_plus_exp(-r.label * r.features.dot(x));
    w = s * (1.0 - s);
  }
  const auto d = static_cast<Eigen::Index>(p.dim());
  Matrix h = Matrix::Zero(d, d);
  for (const auto& a : r.features.entries())
    for (const auto& b : r.features.entries()) h(a.index, b.index) += w * a.value * b.value;
  return h;
}

struct SecondOrderInfo {
  Vector x_star;
  Matrix hessian;
  Matrix grad_cov;
  double f_star = 0.0;
  double grad_norm = 0.0;  // ||grad f(x_star)||
  std::size_t solver_iterations = 0;
};

struct SolverOptions {
  double ls_tolerance = 1e-10;
  double logistic_tolerance = 1e-8;
  std::size_t logistic_max_iterations = 100000;
};

class SolverError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

namespace detail {

inline Matrix gram(const Problem& p, const std::vector<double>* weights) {
  const auto d = static_cast<Eigen::Index>(p.dim());
  Matrix h = Matrix::Zero(d, d);
  const auto rows = p.dataset().rows();
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const double w = weights ? (*weights)[i] : 1.0;
    const auto e = rows[i].features.entries();
    for (const auto& a : e)
      for (const auto& b : e)
        if (b.index >= a.index) h(a.index, b.index) += w * a.value * b.value;
  }
  h = h.selfadjointView<Eigen::Upper>();
  return h / static_cast<double>(p.n_rows());
}

inline Matrix gradient_covariance(const Problem& p, const Vector& x) {
  const auto d = static_cast<Eigen::Index>(p.dim());
  Matrix s = Matrix::Zero(d, d);
  for (const auto& r : p.dataset().rows()) {
    const double c = loss_derivative(p.loss(), r.features.dot(as_span(x)), r.label);
    const double c2 = c * c;
    const auto e = r.features.entries();
    for (const auto& a : e)
      for (const auto& b : e)
        if (b.index >= a.index) s(a.index, b.index) += c2 * a.value * b.value;
  }
  s = s.selfadjointView<Eigen::Upper>();
  return s / static_cast<double>(p.n_rows());
}

inline SecondOrderInfo solve_least_squares(const Problem& p, const SolverOptions& opt) {
  SecondOrderInfo info;
  info.hessian = gram(p, nullptr);
  const auto d = static_cast<Eigen::Index>(p.dim());
  Vector rhs = Vector::Zero(d);
  for (const auto& r : p.dataset().rows())
    for (const auto& e : r.features.entries()) rhs[e.index] += r.label * e.value;
  rhs /= static_cast<double>(p.n_rows());

  Eigen::LLT<Matrix> llt(info.hessian);
  if (llt.info() != Eigen::Success)
    throw SolverError("second_order_info: normal-equations matrix is singular");
  const Vector diag = Matrix(llt.matrixL()).diagonal();
  const double dmax = diag.cwiseAbs().maxCoeff();
  const double dmin = diag.cwiseAbs().minCoeff();
  if (!(dmin > 0.0) || dmin * dmin < 1e3 * std::numeric_limits<double>::epsilon() * dmax * dmax * d)
    throw SolverError("second_order_info: normal-equations matrix is singular");

  info.x_star = llt.solve(rhs);
  // One round of refinement; the residual is what tol_opt is checked against.
  Vector resid = info.hessian * info.x_star - rhs;
  info.x_star -= llt.solve(resid);
  info.grad_norm = full_gradient(p, as_span(info.x_star)).norm();
  if (info.grad_norm > opt.ls_tolerance * std::max(1.0, rhs.norm()))
    throw SolverError("second_order_info: least-squares residual " + std::to_string(info.grad_norm) +
                      " exceeds tolerance");
  return info;
}

inline SecondOrderInfo solve_logistic(const Problem& p, const SolverOptions& opt) {
  SecondOrderInfo info;
  const auto d = static_cast<Eigen::Index>(p.dim());
  Vector x = Vector::Zero(d);
  double fx = objective(p, as_span(x));
  Vector g = full_gradient(p, as_span(x));
  // Lipschitz bound of the gradient: (1/4N) sum ||a_i||^2 is an upper bound on ||H||.
  double lip = 0.0;
  for (const auto& r : p.dataset().rows()) lip += r.features.squared_norm();
  lip = std::max(0.25 * lip / static_cast<double>(p.n_rows()), 1e-12);
  double step = 1.0 / lip;

  std::size_t it = 0;
  for (; it < opt.logistic_max_iterations && g.norm() > opt.logistic_tolerance; ++it) {
    const double gg = g.squaredNorm();
    step *= 2.0;
    Vector trial;
    double ft;
    for (;;) {
      trial = x - step * g;
      ft = objective(p, as_span(trial));
      if (ft <= fx - 0.5 * step * gg || step < 1e-20) break;
      step *= 0.5;
    }
    x = std::move(trial);
    fx = ft;
    g = full_gradient(p, as_span(x));
  }
  if (g.norm() > opt.logistic_tolerance)
    throw SolverError("second_order_info: logistic solver did not reach ||grad f|| <= " +
                      std::to_string(opt.logistic_tolerance) + " within " +
                      std::to_string(opt.logistic_max_iterations) + " iterations");
  info.x_star = x;
  info.solver_iterations = it;
  info.grad_norm = g.norm();
  std::vector<double> w(p.n_rows());
  for (std::size_t i = 0; i < p.n_rows(); ++i) {
    const auto& r = p.dataset().row(i);
    const double s = inv_one_plus_exp(-r.label * r.features.dot(as_span(x)));
    w[i] = s * (1.0 - s);
  }
  info.hessian = gram(p, &w);
  return info;
}

}  // namespace detail

/// Minimizer, Hessian and gradient covariance at the minimizer.
inline SecondOrderInfo second_order_info(const Problem& p, const SolverOptions& opt = {}) {
  if (p.n_rows() == 0) throw std::invalid_argument("second_order_info: empty dataset");
  SecondOrderInfo info =
      p.loss() == Loss::LeastSquares ? detail::solve_least_squares(p, opt) : detail::solve_logistic(p, opt);
  info.grad_cov = detail::gradient_covariance(p, info.x_star);
  info.f_star = objective(p, as_span(info.x_star));
  return info;
}

}  // namespace asgd
