#pragma once

// Synthetic linear-regression data and quantile one-hot encoding.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "asgd/dataset.hpp"
#include "asgd/model.hpp"
#include "asgd/rng.hpp"

namespace asgd {

struct SynthSpec {
  std::size_t n_rows = 1000;
  std::size_t dim = 10;
  double density = 1.0;  // p_nz in (0, 1]
  double noise_sd = 1.0;
  std::uint64_t seed = 0;

  /// Nonzeros kept per row: max(1, round(density * dim)).
  std::size_t nonzeros_per_row() const {
    const auto s = static_cast<std::size_t>(std::llround(density * static_cast<double>(dim)));
    return std::clamp<std::size_t>(s, 1, dim);
  }

  void validate() const {
    if (n_rows == 0) throw std::invalid_argument("SynthSpec: n_rows must be positive");
    if (dim == 0) throw std::invalid_argument("SynthSpec: dim must be positive");
    if (!(density > 0.0 && density <= 1.0)) throw std::invalid_argument("SynthSpec: density must be in (0, 1]");
    if (!(noise_sd >= 0.0)) throw std::invalid_argument("SynthSpec: noise_sd must be >= 0");
  }
};

struct SyntheticData {
  Dataset dataset;
  Vector u_star;
};

/// b_i = <a_i, u*> + noise_sd * eps_i with a_i a Gaussian vector in which all
/// but s uniformly chosen coordinates are zeroed.
///
/// Streams: u* uses (DataTarget, 0); row i uses (DataRow, i) and draws, in
/// order, d normals, the s-subset (partial Fisher-Yates), then eps_i.
inline SyntheticData gen_linreg(const SynthSpec& spec) {
  spec.validate();
  const std::size_t d = spec.dim;
  const std::size_t s = spec.nonzeros_per_row();

  Vector u(static_cast<Eigen::Index>(d));
  {
    Stream rng(spec.seed, stream_id(StreamTag::DataTarget, 0));
    for (std::size_t j = 0; j < d; ++j) u[static_cast<Eigen::Index>(j)] = rng.normal();
  }

  std::vector<Row> rows;
  rows.reserve(spec.n_rows);
  std::vector<double> dense(d);
  std::vector<std::uint32_t> idx(d);
  for (std::size_t i = 0; i < spec.n_rows; ++i) {
    Stream rng(spec.seed, stream_id(StreamTag::DataRow, i >> 32, i));
    for (auto& v : dense) v = rng.normal();
    std::iota(idx.begin(), idx.end(), 0u);
    if (s < d) {
      for (std::size_t k = 0; k < s; ++k) {
        const auto j = k + static_cast<std::size_t>(rng.below(d - k));
        std::swap(idx[k], idx[j]);
      }
      std::sort(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(s));
    }
    std::vector<SparseVec::Entry> entries;
    entries.reserve(s);
    double z = 0.0;
    for (std::size_t k = 0; k < s; ++k) {
      const auto j = idx[k];
      entries.push_back({j, dense[j]});
      z += dense[j] * u[j];
    }
    const double eps = rng.normal();
    rows.push_back({SparseVec(d, std::move(entries)), z + spec.noise_sd * eps});
  }
  return {Dataset(d, std::move(rows), Task::Regression), std::move(u)};
}

struct BinnedFeatures {
  std::size_t dim = 0;
  std::vector<SparseVec> rows;
  std::vector<std::string> warnings;
};

/// One-hot encodes every column of `raw` into its empirical-quantile bin.
///
/// Edges are the nearest-rank k/bins quantiles q_k = v[ceil(k N / bins) - 1]
/// of the sorted column v, k = 1..bins-1.  Bins are right-closed, so a value
/// lands in bin #{k : q_k < value}; ties go to the lower bin.  Output column
/// for raw column c and bin b is c * bins + b.
inline BinnedFeatures quantile_bin_encode(const Matrix& raw, std::size_t bins) {
  const auto n = static_cast<std::size_t>(raw.rows());
  const auto d0 = static_cast<std::size_t>(raw.cols());
  if (bins < 2) throw std::invalid_argument("quantile_bin_encode: bins must be >= 2");
  if (n < bins) throw std::invalid_argument("quantile_bin_encode: need at least `bins` rows");

  BinnedFeatures out;
  out.dim = bins * d0;
  std::vector<std::vector<std::uint32_t>> bin_of(d0, std::vector<std::uint32_t>(n));
  std::vector<double> sorted(n);
  std::vector<double> edges(bins - 1);
  for (std::size_t c = 0; c < d0; ++c) {
    for (std::size_t i = 0; i < n; ++i) sorted[i] = raw(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(c));
    std::sort(sorted.begin(), sorted.end());
    for (std::size_t k = 1; k < bins; ++k) {
      const std::size_t rank = (k * n + bins - 1) / bins;  // ceil(k n / bins)
      edges[k - 1] = sorted[rank - 1];
    }
    if (sorted.front() == sorted.back()) {
      out.warnings.push_back("column " + std::to_string(c) + " is constant; all rows mapped to bin 0");
      continue;  // bin_of stays 0
    }
    for (std::size_t i = 0; i < n; ++i) {
      const double v = raw(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(c));
      bin_of[c][i] = static_cast<std::uint32_t>(std::lower_bound(edges.begin(), edges.end(), v) - edges.begin());
    }
  }
  out.rows.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    std::vector<SparseVec::Entry> e;
    e.reserve(d0);
    for (std::size_t c = 0; c < d0; ++c)
      e.push_back({static_cast<std::uint32_t>(c * bins + bin_of[c][i]), 1.0});
    out.rows.emplace_back(out.dim, std::move(e));
  }
  return out;
}

}  // namespace asgd
