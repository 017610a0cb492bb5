#pragma once

#include <atomic>
#include <cstdint>
#include <memory>
#include <span>
#include <vector>

#include "asgd/model.hpp"

namespace asgd {

/// Per-worker running sum of read snapshots.  Kept per worker and merged at
/// join so averaging adds no shared-memory traffic to the update path.
struct alignas(64) AverageAccumulator {
  std::vector<double> sum;
  std::uint64_t count = 0;

  explicit AverageAccumulator(std::size_t dim = 0) : sum(dim, 0.0) {}

  void add(std::span<const double> x) {
    for (std::size_t j = 0; j < x.size(); ++j) sum[j] += x[j];
    ++count;
  }
};

/// The concurrently mutated parameter vector and step counter.
///
/// Each coordinate is its own atomic: single-coordinate reads and writes are
/// atomic, but reading the whole vector is not a consistent snapshot.
class SharedState {
 public:
  SharedState(std::size_t dim, std::span<const double> x0)
      : x_(std::make_unique<std::atomic<double>[]>(dim)), dim_(dim) {
    for (std::size_t j = 0; j < dim; ++j) x_[j].store(x0.empty() ? 0.0 : x0[j], std::memory_order_relaxed);
  }

  std::size_t dim() const { return dim_; }

  void read(std::span<double> out) const {
    for (std::size_t j = 0; j < dim_; ++j) out[j] = x_[j].load(std::memory_order_relaxed);
  }

  double load(std::size_t j) const { return x_[j].load(std::memory_order_relaxed); }

  /// Read-modify-write that never drops a concurrent update.
  void add(std::size_t j, double delta) { x_[j].fetch_add(delta, std::memory_order_relaxed); }

  /// Unsynchronized read then write; concurrent updates to j may be lost.
  void add_racy(std::size_t j, double delta) {
    x_[j].store(x_[j].load(std::memory_order_relaxed) + delta, std::memory_order_relaxed);
  }

  /// Fetch-increment; returns the post-increment value k >= 1.
  std::uint64_t next_step() { return counter_.fetch_add(1, std::memory_order_relaxed) + 1; }
  std::uint64_t steps() const { return counter_.load(std::memory_order_relaxed); }

  Vector snapshot() const {
    Vector v(static_cast<Eigen::Index>(dim_));
    for (std::size_t j = 0; j < dim_; ++j) v[static_cast<Eigen::Index>(j)] = load(j);
    return v;
  }

 private:
  std::unique_ptr<std::atomic<double>[]> x_;
  std::size_t dim_;
  alignas(64) std::atomic<std::uint64_t> counter_{0};
};

}  // namespace asgd
