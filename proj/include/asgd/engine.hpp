#pragma once

// The asynchronous stochastic gradient iteration.
//
// Each worker repeatedly
//   (a) reads x coordinate by coordinate without locking,
//   (b) computes a stochastic direction g at what it read,
//   (c) fetch-increments the shared counter to k and takes alpha_k,
//   (d) applies x_j -= alpha_k g_j to every touched coordinate,
//   (e) adds its read snapshot to its running average when k > burn_in.
//
// run_threads executes this with real threads.  run_simulated executes it on
// one thread and models asynchrony explicitly: update k becomes visible
// D_k steps after it is issued, so the vector read at step k is
//   x_0 - sum_{i : i + D_i <= k - 1} alpha_i g_i.

#include <algorithm>
#include <atomic>
#include <barrier>
#include <chrono>
#include <concepts>
#include <cstdint>
#include <exception>
#include <functional>
#include <limits>
#include <mutex>
#include <queue>
#include <span>
#include <stdexcept>
#include <thread>
#include <tuple>
#include <unordered_map>
#include <utility>
#include <vector>

#include "asgd/model.hpp"
#include "asgd/rng.hpp"
#include "asgd/run.hpp"
#include "asgd/shared_state.hpp"

namespace asgd {

/// Random streams owned by one (real or logical) worker.
struct WorkerStreams {
  Stream sampling;
  Stream noise;

  WorkerStreams(std::uint64_t seed, std::size_t worker)
      : sampling(seed, stream_id(StreamTag::Sampling, 0, worker)),
        noise(seed, stream_id(StreamTag::Noise, 0, worker)) {}
};

/// Anything the engine can iterate on.  Sources with n_rows() > 0 receive the
/// engine's batch of row indices; sources with n_rows() == 0 get an empty
/// batch and draw what they need from the worker streams.
template <class S>
concept DirectionSource = requires(const S& s, std::span<const double> x, std::span<const std::uint32_t> rows,
                                   WorkerStreams& rng, GradBuffer& g, std::vector<double>* noise) {
  { s.dim() } -> std::convertible_to<std::size_t>;
  { s.n_rows() } -> std::convertible_to<std::size_t>;
  s.direction(x, rows, rng, g, noise);
  { s.gap(x) } -> std::convertible_to<double>;
};

/// Mini-batch gradients of a Problem; gap is f(x) - f_star.
class ProblemSource {
 public:
  explicit ProblemSource(const Problem& p, double f_star = 0.0) : p_(&p), f_star_(f_star) {
    if (p.n_rows() == 0) throw std::invalid_argument("ProblemSource: dataset has no rows");
  }

  std::size_t dim() const { return p_->dim(); }
  std::size_t n_rows() const { return p_->n_rows(); }
  void direction(std::span<const double> x, std::span<const std::uint32_t> rows, WorkerStreams&, GradBuffer& g,
                 std::vector<double>*) const {
    accumulate_batch_gradient(*p_, x, rows, g);
  }
  double gap(std::span<const double> x) const { return objective(*p_, x) - f_star_; }

 private:
  const Problem* p_;
  double f_star_;
};

namespace detail {

struct EpochPlan {
  std::size_t steps = 0;                // batches this epoch
  std::vector<std::uint32_t> order;     // permutation (empty for iid / rowless)
};

inline std::size_t steps_per_epoch(std::size_t n_rows, const RunConfig& cfg) {
  if (n_rows > 0) return (n_rows + cfg.batch - 1) / cfg.batch;
  if (cfg.steps_per_epoch == 0)
    throw std::invalid_argument("RunConfig: steps_per_epoch is required for sources without rows");
  return cfg.steps_per_epoch;
}

inline EpochPlan plan_epoch(std::size_t n_rows, const RunConfig& cfg, std::size_t epoch) {
  EpochPlan plan;
  plan.steps = steps_per_epoch(n_rows, cfg);
  if (n_rows > 0 && cfg.sampling == Sampling::Permutation) {
    Stream rng(cfg.seed, stream_id(StreamTag::Permutation, 0, epoch));
    plan.order = permutation(n_rows, rng);
  }
  return plan;
}

/// Contiguous shard [begin, end) of batch indices for worker w.
inline std::pair<std::size_t, std::size_t> shard(std::size_t steps, std::size_t workers, std::size_t w) {
  return {steps * w / workers, steps * (w + 1) / workers};
}

/// Fills `rows` with the rows of batch b.
inline void batch_rows(const EpochPlan& plan, std::size_t n_rows, const RunConfig& cfg, std::size_t b,
                       WorkerStreams& rng, std::vector<std::uint32_t>& rows) {
  rows.clear();
  if (n_rows == 0) return;
  if (cfg.sampling == Sampling::Permutation) {
    const std::size_t lo = b * cfg.batch;
    const std::size_t hi = std::min(n_rows, lo + cfg.batch);
    rows.assign(plan.order.begin() + static_cast<std::ptrdiff_t>(lo), plan.order.begin() + static_cast<std::ptrdiff_t>(hi));
  } else {
    for (std::size_t i = 0; i < cfg.batch; ++i) rows.push_back(static_cast<std::uint32_t>(rng.sampling.below(n_rows)));
  }
}

template <DirectionSource S>
void check_run(const S& src, const RunConfig& cfg) {
  cfg.validate();
  if (src.dim() == 0) throw std::invalid_argument("run: problem dimension must be >= 1");
  if (!cfg.x0.empty() && cfg.x0.size() != src.dim()) throw std::invalid_argument("run: x0 has wrong dimension");
  if (src.n_rows() == 0) steps_per_epoch(0, cfg);  // throws when missing
}

inline void finish(RunResult& r, std::span<AverageAccumulator> acc, std::size_t dim) {
  r.avg_sum = Vector::Zero(static_cast<Eigen::Index>(dim));
  r.avg_count = 0;
  for (const auto& a : acc) {
    for (std::size_t j = 0; j < dim; ++j) r.avg_sum[static_cast<Eigen::Index>(j)] += a.sum[j];
    r.avg_count += a.count;
  }
  if (r.avg_count > 0) r.x_bar = r.avg_sum / static_cast<double>(r.avg_count);
}

inline bool trace_this_epoch(const RunConfig& cfg, std::size_t epoch) {
  return (epoch + 1) % cfg.snapshot_every == 0 || epoch + 1 == cfg.epochs;
}

}  // namespace detail

/// Multi-threaded lock-free execution.  Workers meet at a barrier between
/// epochs; epoch time runs from just before the start barrier to the end barrier.
template <DirectionSource S>
RunResult run_threads(const S& src, const RunConfig& cfg) {
  detail::check_run(src, cfg);
  if (cfg.mode != Mode::Threads) throw std::invalid_argument("run_threads: config mode must be threads");
  const std::size_t d = src.dim();
  const std::size_t n = src.n_rows();
  const std::size_t m = cfg.workers;

  RunResult result;
  if (auto w = cfg.schedule.warning(); !w.empty()) result.warnings.push_back(w);
  SharedState state(d, cfg.x0);
  std::vector<AverageAccumulator> acc;
  acc.reserve(m);
  for (std::size_t w = 0; w < m; ++w) acc.emplace_back(d);

  detail::EpochPlan plan;
  std::size_t current_epoch = 0;
  std::atomic<bool> abort{false};
  std::exception_ptr error;
  std::mutex error_mutex;
  std::barrier sync(static_cast<std::ptrdiff_t>(m + 1));

  auto worker = [&](std::size_t w) {
    WorkerStreams rng(cfg.seed, w);
    std::vector<double> x(d);
    std::vector<std::uint32_t> rows;
    GradBuffer g(d);
    for (std::size_t e = 0; e < cfg.epochs; ++e) {
      sync.arrive_and_wait();
      if (!abort.load(std::memory_order_relaxed)) {
        try {
          const auto [lo, hi] = detail::shard(plan.steps, m, w);
          for (std::size_t b = lo; b < hi && !abort.load(std::memory_order_relaxed); ++b) {
            detail::batch_rows(plan, n, cfg, b, rng, rows);
            state.read(x);
            g.clear();
            src.direction(std::span<const double>(x), std::span<const std::uint32_t>(rows), rng, g, nullptr);
            const std::uint64_t k = state.next_step();
            const double alpha = cfg.schedule(k, current_epoch);
            if (k > cfg.average_burn_in) acc[w].add(x);
            const auto vals = g.values();
            if (cfg.racy_updates)
              for (auto j : g.touched()) state.add_racy(j, -alpha * vals[j]);
            else
              for (auto j : g.touched()) state.add(j, -alpha * vals[j]);
          }
        } catch (...) {
          std::lock_guard lock(error_mutex);
          if (!error) error = std::current_exception();
          abort.store(true);
        }
      }
      sync.arrive_and_wait();
    }
  };

  std::vector<std::jthread> threads;
  threads.reserve(m);
  for (std::size_t w = 0; w < m; ++w) threads.emplace_back(worker, w);

  std::vector<double> xs(d);
  for (std::size_t e = 0; e < cfg.epochs; ++e) {
    if (!abort.load()) {
      try {
        plan = detail::plan_epoch(n, cfg, e);
      } catch (...) {
        std::lock_guard lock(error_mutex);
        if (!error) error = std::current_exception();
        abort.store(true);
      }
    }
    current_epoch = e;
    const auto t0 = std::chrono::steady_clock::now();
    sync.arrive_and_wait();
    sync.arrive_and_wait();
    const auto t1 = std::chrono::steady_clock::now();
    const double secs = std::chrono::duration<double>(t1 - t0).count();
    result.epoch_times.push_back(secs);
    if (!abort.load() && detail::trace_this_epoch(cfg, e)) {
      TraceRecord rec;
      rec.epoch = e + 1;
      rec.steps = state.steps();
      rec.epoch_seconds = secs;
      if (cfg.trace_gap) {
        state.read(xs);
        rec.gap = src.gap(std::span<const double>(xs));
      }
      result.trace.push_back(rec);
    }
  }
  threads.clear();
  if (error) std::rethrow_exception(error);

  result.x_final = state.snapshot();
  result.total_steps = state.steps();
  detail::finish(result, acc, d);
  return result;
}

/// Single-threaded execution with modelled delays; deterministic given the seed.
template <DirectionSource S>
RunResult run_simulated(const S& src, const RunConfig& cfg) {
  detail::check_run(src, cfg);
  if (cfg.mode != Mode::Simulated) throw std::invalid_argument("run_simulated: config mode must be simulated");
  const std::size_t d = src.dim();
  const std::size_t n = src.n_rows();
  const std::size_t m = cfg.workers;

  RunResult result;
  if (auto w = cfg.schedule.warning(); !w.empty()) result.warnings.push_back(w);
  result.assumption1_satisfied = cfg.delay.assumption1_satisfied();
  if (!result.assumption1_satisfied)
    result.warnings.push_back("delay model " + cfg.delay.describe() + " has no finite moment of order > 2");

  std::vector<double> x(d, 0.0);
  if (!cfg.x0.empty()) x = cfg.x0;

  // Issued-but-invisible updates.  An update is split into parts (one part,
  // or one per touched coordinate when staggered); part p of update i lands
  // at step `due` (visible to reads at steps > due).
  struct Update {
    std::vector<std::uint32_t> idx;
    std::vector<double> delta;
  };
  struct Part {
    std::uint64_t due;
    std::uint64_t issue;
    std::uint32_t lo, hi;
    bool operator>(const Part& o) const {
      if (due != o.due) return due > o.due;
      if (issue != o.issue) return issue > o.issue;
      return lo > o.lo;
    }
  };
  std::priority_queue<Part, std::vector<Part>, std::greater<>> pending;
  std::unordered_map<std::uint64_t, std::pair<Update, std::uint32_t>> updates;  // issue -> (update, parts left)

  auto apply_part = [&](const Part& p) {
    auto it = updates.find(p.issue);
    auto& [u, left] = it->second;
    for (std::uint32_t t = p.lo; t < p.hi; ++t) x[u.idx[t]] = x[u.idx[t]] + u.delta[t];
    if (--left == 0) updates.erase(it);
  };
  auto drain = [&](std::uint64_t through) {
    while (!pending.empty() && pending.top().due <= through) {
      const Part p = pending.top();
      pending.pop();
      apply_part(p);
    }
  };

  std::vector<AverageAccumulator> acc;
  acc.reserve(m);
  std::vector<WorkerStreams> streams;
  streams.reserve(m);
  for (std::size_t w = 0; w < m; ++w) {
    acc.emplace_back(d);
    streams.emplace_back(cfg.seed, w);
  }
  Stream delay_rng(cfg.seed, stream_id(StreamTag::Delay, 0));
  std::vector<std::uint32_t> rows;
  GradBuffer g(d);
  std::uint64_t k = 0;
  std::vector<double> noise;

  for (std::size_t e = 0; e < cfg.epochs; ++e) {
    const auto t0 = std::chrono::steady_clock::now();
    const auto plan = detail::plan_epoch(n, cfg, e);
    const std::uint64_t epoch_first = k + 1;
    // Logical workers run their shards one after another, so the batch order
    // does not depend on the worker count.
    for (std::size_t w = 0; w < m; ++w) {
      const auto [lo, hi] = detail::shard(plan.steps, m, w);
      for (std::size_t b = lo; b < hi; ++b) {
        drain(k);  // step k + 1 sees every update with due <= k
        detail::batch_rows(plan, n, cfg, b, streams[w], rows);
        g.clear();
        noise.clear();
        src.direction(std::span<const double>(x), std::span<const std::uint32_t>(rows), streams[w], g,
                      cfg.record_steps ? &noise : nullptr);
        ++k;
        const double alpha = cfg.schedule(k, e);
        if (k > cfg.average_burn_in) acc[w].add(x);

        Update u;
        u.idx.assign(g.touched().begin(), g.touched().end());
        u.delta.reserve(u.idx.size());
        const auto vals = g.values();
        for (auto j : u.idx) u.delta.push_back(-alpha * vals[j]);

        if (cfg.record_steps) {
          StepRecord rec;
          rec.k = k;
          rec.alpha = alpha;
          rec.x_read = x;
          rec.direction.assign(vals.begin(), vals.end());
          rec.noise = noise;
          result.steps.push_back(std::move(rec));
        }

        const std::uint64_t delay = cfg.delay.sample(delay_rng);
        result.delays.push_back(delay);
        const auto parts = static_cast<std::uint32_t>(u.idx.size());
        if (parts == 0) continue;
        if (cfg.staggered_delays && parts > 1) {
          // the t-th smallest touched coordinate lands after floor(delay * (t + 1) / parts) steps
          std::vector<std::pair<std::uint32_t, double>> order(parts);
          for (std::uint32_t t = 0; t < parts; ++t) order[t] = {u.idx[t], u.delta[t]};
          std::sort(order.begin(), order.end());
          for (std::uint32_t t = 0; t < parts; ++t) std::tie(u.idx[t], u.delta[t]) = order[t];
          for (std::uint32_t t = 0; t < parts; ++t) {
            const auto lag = static_cast<std::uint64_t>(
                static_cast<long double>(delay) * (t + 1) / parts);
            pending.push({k + lag, k, t, t + 1});
          }
          updates.emplace(k, std::make_pair(std::move(u), parts));
        } else {
          pending.push({k + delay, k, 0, parts});
          updates.emplace(k, std::make_pair(std::move(u), 1u));
        }
      }
    }
    // Everything due by now is visible to the next read anyway; the final
    // epoch waits for all updates (quiescence).
    drain(e + 1 == cfg.epochs ? std::numeric_limits<std::uint64_t>::max() : k);
    const auto t1 = std::chrono::steady_clock::now();
    const double secs = std::chrono::duration<double>(t1 - t0).count();
    result.epoch_times.push_back(secs);
    if (detail::trace_this_epoch(cfg, e)) {
      TraceRecord rec;
      rec.epoch = e + 1;
      rec.steps = k;
      rec.epoch_seconds = secs;
      if (cfg.trace_gap) rec.gap = src.gap(std::span<const double>(x));
      if (k >= epoch_first) {
        std::uint64_t mx = 0;
        double sum = 0.0;
        for (std::uint64_t i = epoch_first; i <= k; ++i) {
          mx = std::max(mx, result.delays[i - 1]);
          sum += static_cast<double>(result.delays[i - 1]);
        }
        rec.max_delay = mx;
        rec.mean_delay = sum / static_cast<double>(k - epoch_first + 1);
      }
      result.trace.push_back(rec);
    }
  }

  result.x_final = Eigen::Map<const Vector>(x.data(), static_cast<Eigen::Index>(d));
  result.total_steps = k;
  detail::finish(result, acc, d);
  return result;
}

/// Dispatches on cfg.mode.
template <DirectionSource S>
RunResult run(const S& src, const RunConfig& cfg) {
  return cfg.mode == Mode::Threads ? run_threads(src, cfg) : run_simulated(src, cfg);
}

/// Synchronized comparator: in each round every worker computes a batch
/// gradient at the same x, the gradients are averaged under a lock and a
/// single update x -= alpha_k * mean(g) is applied before the next round.
template <DirectionSource S>
RunResult run_synchronized(const S& src, const RunConfig& cfg) {
  detail::check_run(src, cfg);
  const std::size_t d = src.dim();
  const std::size_t n = src.n_rows();
  const std::size_t m = cfg.workers;

  RunResult result;
  std::vector<double> x(d, 0.0);
  if (!cfg.x0.empty()) x = cfg.x0;
  std::vector<double> gsum(d, 0.0);
  std::size_t contributors = 0;
  std::mutex lock;
  std::uint64_t k = 0;
  std::size_t epoch = 0;
  detail::EpochPlan plan;
  AverageAccumulator acc(d);
  std::atomic<bool> abort{false};
  std::exception_ptr error;

  auto apply = [&]() noexcept {
    if (contributors == 0) return;
    ++k;
    const double alpha = cfg.schedule(k, epoch);
    if (k > cfg.average_burn_in) acc.add(x);
    const double scale = alpha / static_cast<double>(contributors);
    for (std::size_t j = 0; j < d; ++j) {
      x[j] -= scale * gsum[j];
      gsum[j] = 0.0;
    }
    contributors = 0;
  };
  std::barrier round_sync(static_cast<std::ptrdiff_t>(m), apply);
  std::barrier epoch_sync(static_cast<std::ptrdiff_t>(m + 1));

  auto worker = [&](std::size_t w) {
    WorkerStreams rng(cfg.seed, w);
    std::vector<std::uint32_t> rows;
    GradBuffer g(d);
    for (std::size_t e = 0; e < cfg.epochs; ++e) {
      epoch_sync.arrive_and_wait();
      const std::size_t rounds = (plan.steps + m - 1) / m;
      for (std::size_t r = 0; r < rounds; ++r) {
        const std::size_t b = r * m + w;
        if (b < plan.steps && !abort.load(std::memory_order_relaxed)) {
          try {
            detail::batch_rows(plan, n, cfg, b, rng, rows);
            g.clear();
            src.direction(std::span<const double>(x), std::span<const std::uint32_t>(rows), rng, g, nullptr);
            std::lock_guard guard(lock);
            const auto vals = g.values();
            for (auto j : g.touched()) gsum[j] += vals[j];
            ++contributors;
          } catch (...) {
            std::lock_guard guard(lock);
            if (!error) error = std::current_exception();
            abort.store(true);
          }
        }
        round_sync.arrive_and_wait();
      }
      epoch_sync.arrive_and_wait();
    }
  };

  std::vector<std::jthread> threads;
  threads.reserve(m);
  for (std::size_t w = 0; w < m; ++w) threads.emplace_back(worker, w);
  for (std::size_t e = 0; e < cfg.epochs; ++e) {
    plan = detail::plan_epoch(n, cfg, e);
    epoch = e;
    const auto t0 = std::chrono::steady_clock::now();
    epoch_sync.arrive_and_wait();
    epoch_sync.arrive_and_wait();
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    result.epoch_times.push_back(secs);
    if (!abort.load() && detail::trace_this_epoch(cfg, e)) {
      TraceRecord rec;
      rec.epoch = e + 1;
      rec.steps = k;
      rec.epoch_seconds = secs;
      if (cfg.trace_gap) rec.gap = src.gap(std::span<const double>(x));
      result.trace.push_back(rec);
    }
  }
  threads.clear();
  if (error) std::rethrow_exception(error);
  result.x_final = Eigen::Map<const Vector>(x.data(), static_cast<Eigen::Index>(d));
  result.total_steps = k;
  std::vector<AverageAccumulator> one{std::move(acc)};
  detail::finish(result, one, d);
  return result;
}

}  // namespace asgd
