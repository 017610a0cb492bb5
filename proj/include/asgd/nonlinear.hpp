#pragma once

// Stochastic root finding: each step receives g = R(x) + xi with xi
// conditionally mean zero, and applies x -= alpha_k g with the same
// asynchronous machinery as the gradient engine.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "asgd/engine.hpp"
#include "asgd/model.hpp"
#include "asgd/rng.hpp"

namespace asgd {

using ResidualFn = std::function<void(std::span<const double> x, std::span<double> out)>;
using NoiseFn = std::function<void(std::span<const double> x, Stream& rng, std::span<double> xi)>;
/// Produces g directly (and xi = g - R(x) when `xi` is non-null).
using DirectionFn =
    std::function<void(std::span<const double> x, WorkerStreams& rng, std::span<double> g, std::vector<double>* xi)>;

struct ResidualProblem {
  std::size_t dim = 0;
  ResidualFn residual;
  NoiseFn noise;          // empty: noiseless
  DirectionFn direction;  // empty: g = residual(x) + noise(x)
  std::optional<Vector> x_star;
  Matrix H;      // derivative of R at x_star
  Matrix Sigma;  // covariance of xi(0)
  double gamma = 1.0;
  double root_tolerance = 1e-10;  // required ||R(x_star)||
  bool assumption4 = false;  // R(x) = H(x - x*) + O(|x - x*|^{1+gamma}) with H + H^T > 0

  void validate() const {
    if (dim == 0) throw std::invalid_argument("ResidualProblem: dim must be positive");
    if (!residual) throw std::invalid_argument("ResidualProblem: residual is required");
    if (!(gamma > 0.0 && gamma <= 1.0)) throw std::invalid_argument("ResidualProblem: gamma must be in (0, 1]");
    if (x_star) {
      if (static_cast<std::size_t>(x_star->size()) != dim)
        throw std::invalid_argument("ResidualProblem: x_star has wrong dimension");
      std::vector<double> r(dim);
      residual(as_span(*x_star), r);
      double s = 0.0;
      for (double v : r) s += v * v;
      if (std::sqrt(s) > root_tolerance)
        throw std::invalid_argument("ResidualProblem: ||R(x_star)|| exceeds " + std::to_string(root_tolerance));
    }
    if (assumption4) {
      if (H.rows() != static_cast<Eigen::Index>(dim) || H.cols() != static_cast<Eigen::Index>(dim))
        throw std::invalid_argument("ResidualProblem: H must be dim x dim");
      const Matrix sym = 0.5 * (H + H.transpose());
      Eigen::SelfAdjointEigenSolver<Matrix> es(sym, Eigen::EigenvaluesOnly);
      if (!(es.eigenvalues().minCoeff() > 0.0))
        throw std::invalid_argument("ResidualProblem: symmetric part of H is not positive definite");
    }
  }
};

/// Adapts a ResidualProblem to the engine.  Gap is ||x - x*||^2 (NaN without x*).
class ResidualSource {
 public:
  explicit ResidualSource(const ResidualProblem& p) : p_(&p) { p.validate(); }

  std::size_t dim() const { return p_->dim; }
  std::size_t n_rows() const { return 0; }

  void direction(std::span<const double> x, std::span<const std::uint32_t>, WorkerStreams& rng, GradBuffer& g,
                 std::vector<double>* noise) const {
    g.touch_all();
    auto out = g.values();
    if (p_->direction) {
      p_->direction(x, rng, out, noise);
      return;
    }
    p_->residual(x, out);
    if (noise) noise->assign(p_->dim, 0.0);
    if (!p_->noise) return;
    thread_local std::vector<double> xi;
    xi.assign(p_->dim, 0.0);
    p_->noise(x, rng.noise, xi);
    for (std::size_t j = 0; j < p_->dim; ++j) out[j] += xi[j];
    if (noise) *noise = xi;
  }

  double gap(std::span<const double> x) const {
    if (!p_->x_star) return std::numeric_limits<double>::quiet_NaN();
    double s = 0.0;
    for (std::size_t j = 0; j < p_->dim; ++j) {
      const double e = x[j] - (*p_->x_star)[static_cast<Eigen::Index>(j)];
      s += e * e;
    }
    return s;
  }

 private:
  const ResidualProblem* p_;
};

/// R(x) = H (x - x*) with Gaussian xi(0) ~ N(0, Sigma) independent of x.
inline ResidualProblem affine_residual(const Matrix& H, const Vector& x_star, const Matrix& Sigma) {
  const auto d = x_star.size();
  if (H.rows() != d || H.cols() != d || Sigma.rows() != d || Sigma.cols() != d)
    throw std::invalid_argument("affine_residual: shape mismatch");
  ResidualProblem p;
  p.dim = static_cast<std::size_t>(d);
  p.x_star = x_star;
  p.H = H;
  p.Sigma = Sigma;
  p.gamma = 1.0;
  p.assumption4 = true;
  p.residual = [H, x_star](std::span<const double> x, std::span<double> out) {
    const auto n = x_star.size();
    for (Eigen::Index i = 0; i < n; ++i) {
      double s = 0.0;
      for (Eigen::Index j = 0; j < n; ++j) s += H(i, j) * (x[static_cast<std::size_t>(j)] - x_star[j]);
      out[static_cast<std::size_t>(i)] = s;
    }
  };
  if (Sigma.norm() > 0.0) {
    // Sigma = L L^T; the eigen square root covers semidefinite Sigma.
    Matrix L;
    Eigen::LLT<Matrix> llt(Sigma);
    if (llt.info() == Eigen::Success) {
      L = llt.matrixL();
    } else {
      Eigen::SelfAdjointEigenSolver<Matrix> es(Sigma);
      L = es.eigenvectors() * es.eigenvalues().cwiseMax(0.0).cwiseSqrt().asDiagonal();
    }
    p.noise = [L](std::span<const double>, Stream& rng, std::span<double> xi) {
      const auto n = L.rows();
      thread_local std::vector<double> z;
      z.resize(static_cast<std::size_t>(n));
      for (auto& v : z) v = rng.normal();
      for (Eigen::Index i = 0; i < n; ++i) {
        double s = 0.0;
        for (Eigen::Index j = 0; j < L.cols(); ++j) s += L(i, j) * z[static_cast<std::size_t>(j)];
        xi[static_cast<std::size_t>(i)] = s;
      }
    };
  }
  return p;
}

/// R = grad f for a Problem; each step draws `batch` rows uniformly with
/// replacement from the worker's sampling stream (the same draws the engine
/// makes under Sampling::Iid) and uses their mean gradient as g.
/// Sigma is grad_cov / batch.
inline ResidualProblem gradient_residual(const Problem& problem, std::size_t batch,
                                         const SecondOrderInfo* info = nullptr) {
  if (batch == 0) throw std::invalid_argument("gradient_residual: batch must be >= 1");
  if (problem.n_rows() == 0) throw std::invalid_argument("gradient_residual: empty dataset");
  ResidualProblem p;
  p.dim = problem.dim();
  p.gamma = 1.0;
  p.residual = [problem](std::span<const double> x, std::span<double> out) {
    const Vector g = full_gradient(problem, x);
    for (std::size_t j = 0; j < out.size(); ++j) out[j] = g[static_cast<Eigen::Index>(j)];
  };
  p.direction = [problem, batch](std::span<const double> x, WorkerStreams& rng, std::span<double> g,
                                 std::vector<double>* xi) {
    thread_local std::vector<std::uint32_t> rows;
    thread_local GradBuffer buf;
    rows.clear();
    for (std::size_t i = 0; i < batch; ++i)
      rows.push_back(static_cast<std::uint32_t>(rng.sampling.below(problem.n_rows())));
    if (buf.dim() != problem.dim()) buf.resize(problem.dim());
    buf.clear();
    accumulate_batch_gradient(problem, x, rows, buf);
    const auto v = buf.values();
    for (std::size_t j = 0; j < g.size(); ++j) g[j] = v[j];
    if (xi) {
      const Vector r = full_gradient(problem, x);
      xi->resize(g.size());
      for (std::size_t j = 0; j < g.size(); ++j) (*xi)[j] = g[j] - r[static_cast<Eigen::Index>(j)];
    }
  };
  if (info) {
    p.x_star = info->x_star;
    p.H = info->hessian;
    p.Sigma = info->grad_cov / static_cast<double>(batch);
    // the logistic solver stops at a looser gradient tolerance than 1e-10
    p.root_tolerance = std::max(p.root_tolerance, 2.0 * info->grad_norm);
    p.assumption4 = true;
  }
  return p;
}

inline RunResult run_nonlinear(const ResidualProblem& problem, const RunConfig& cfg) {
  const ResidualSource src(problem);
  return run(src, cfg);
}

/// Replays Delta'_{k+1} = (I - alpha_k H) Delta'_k - alpha_k xi_k for
/// k = 1..n.  Returns Delta'_1 .. Delta'_{n+1}.
inline std::vector<Vector> linearized_reference(const Matrix& H, std::span<const Vector> noise,
                                                std::span<const double> alphas, const Vector& delta1,
                                                std::size_t n) {
  const auto d = delta1.size();
  if (H.rows() != d || H.cols() != d) throw std::invalid_argument("linearized_reference: H shape mismatch");
  if (noise.size() < n || alphas.size() < n) throw std::invalid_argument("linearized_reference: trace shorter than n");
  std::vector<Vector> out;
  out.reserve(n + 1);
  out.push_back(delta1);
  for (std::size_t k = 0; k < n; ++k) {
    if (noise[k].size() != d) throw std::invalid_argument("linearized_reference: noise dimension mismatch");
    const Vector& prev = out.back();
    out.push_back(prev - alphas[k] * (H * prev) - alphas[k] * noise[k]);
  }
  return out;
}

/// Same, with alpha_k taken from a schedule (epoch = (k - 1) / steps_per_epoch).
inline std::vector<Vector> linearized_reference(const Matrix& H, std::span<const Vector> noise,
                                                const StepsizeSchedule& schedule, const Vector& delta1, std::size_t n,
                                                std::size_t steps_per_epoch = 0) {
  std::vector<double> alphas(n);
  for (std::size_t k = 1; k <= n; ++k)
    alphas[k - 1] = schedule(k, steps_per_epoch ? (k - 1) / steps_per_epoch : 0);
  return linearized_reference(H, noise, std::span<const double>(alphas), delta1, n);
}

/// max over `samples` points x = x* + u (|u| <= radius) of
/// ||R(x) - H(x - x*)|| / ||x - x*||^{1 + gamma}.  Diagnostic only.
inline double assumption4_ratio(const ResidualProblem& p, double radius, std::size_t samples, std::uint64_t seed) {
  if (!p.x_star) throw std::invalid_argument("assumption4_ratio: x_star unknown");
  Stream rng(seed, stream_id(StreamTag::Test, 4));
  const auto d = static_cast<Eigen::Index>(p.dim);
  double worst = 0.0;
  std::vector<double> x(p.dim), r(p.dim);
  for (std::size_t s = 0; s < samples; ++s) {
    Vector u(d);
    for (Eigen::Index j = 0; j < d; ++j) u[j] = rng.normal();
    u *= radius * rng.uniform_pos() / u.norm();
    for (Eigen::Index j = 0; j < d; ++j) x[static_cast<std::size_t>(j)] = (*p.x_star)[j] + u[j];
    p.residual(x, r);
    const Vector lin = p.H * u;
    double err = 0.0;
    for (Eigen::Index j = 0; j < d; ++j) err += std::pow(r[static_cast<std::size_t>(j)] - lin[j], 2);
    worst = std::max(worst, std::sqrt(err) / std::pow(u.norm(), 1.0 + p.gamma));
  }
  return worst;
}

}  // namespace asgd
