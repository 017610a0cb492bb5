#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "asgd/delay.hpp"
#include "asgd/model.hpp"
#include "asgd/schedule.hpp"

namespace asgd {

enum class Mode { Threads, Simulated };

/// Permutation: a fresh permutation per epoch, cut into batches, batches
/// split into contiguous per-worker shards.  Iid: every batch is B uniform
/// draws with replacement from the worker's own sampling stream.
enum class Sampling { Permutation, Iid };

struct RunConfig {
  std::size_t workers = 1;
  std::size_t batch = 10;
  std::size_t epochs = 20;
  StepsizeSchedule schedule;
  std::uint64_t seed = 0;
  Mode mode = Mode::Simulated;
  DelayModel delay;                   // simulated mode only
  std::uint64_t average_burn_in = 0;  // steps k <= burn_in are not averaged
  std::size_t snapshot_every = 1;     // trace row every this many epochs (and the last)
  Sampling sampling = Sampling::Permutation;
  bool staggered_delays = false;  // simulated: coordinates of an update land one by one over its delay
  bool racy_updates = false;      // threads: plain load/store writes; benchmarking only, may lose updates
  std::size_t steps_per_epoch = 0;  // required for sources without rows
  bool record_steps = false;        // simulated: keep x_k, g_k, alpha_k, xi_k for every step
  bool trace_gap = true;
  std::vector<double> x0;  // empty: start at zero

  void validate() const {
    if (workers == 0) throw std::invalid_argument("RunConfig: workers must be >= 1");
    if (batch == 0) throw std::invalid_argument("RunConfig: batch must be >= 1");
    if (epochs == 0) throw std::invalid_argument("RunConfig: epochs must be >= 1");
    if (snapshot_every == 0) throw std::invalid_argument("RunConfig: snapshot_every must be >= 1");
    if (mode == Mode::Threads && !delay.is_none())
      throw std::invalid_argument("RunConfig: delay models apply to simulated mode only");
    if (mode == Mode::Threads && record_steps)
      throw std::invalid_argument("RunConfig: step recording is available in simulated mode only");
  }

  std::string describe() const {
    std::string s = "workers=" + std::to_string(workers) + " batch=" + std::to_string(batch) +
                    " epochs=" + std::to_string(epochs) + " schedule=" + schedule.describe() +
                    " seed=" + std::to_string(seed) + " mode=" + (mode == Mode::Threads ? "threads" : "simulated") +
                    " delay=" + delay.describe() + " burn_in=" + std::to_string(average_burn_in) +
                    " sampling=" + (sampling == Sampling::Permutation ? "permutation" : "iid");
    if (staggered_delays) s += " staggered";
    if (racy_updates) s += " racy";
    if (steps_per_epoch) s += " steps_per_epoch=" + std::to_string(steps_per_epoch);
    return s;
  }
};

struct TraceRecord {
  std::size_t epoch = 0;    // 1-based
  std::uint64_t steps = 0;  // counter value at the end of the epoch
  double gap = std::numeric_limits<double>::quiet_NaN();
  double epoch_seconds = 0.0;
  std::optional<std::uint64_t> max_delay;  // simulated mode only
  std::optional<double> mean_delay;
};

struct StepRecord {
  std::uint64_t k = 0;
  double alpha = 0.0;
  std::vector<double> x_read;
  std::vector<double> direction;
  std::vector<double> noise;  // residual sources only
};

struct RunResult {
  Vector x_final;
  Vector x_bar;  // empty when nothing was averaged
  Vector avg_sum;
  std::uint64_t avg_count = 0;
  std::uint64_t total_steps = 0;
  std::vector<TraceRecord> trace;
  std::vector<double> epoch_times;
  std::vector<std::uint64_t> delays;  // realized D_k, k = 1..total_steps (simulated)
  bool assumption1_satisfied = true;
  std::vector<StepRecord> steps;
  std::vector<std::string> warnings;
};

/// avg_sum / avg_count.
inline Vector polyak_average(const RunResult& r) {
  if (r.avg_count == 0 || r.avg_sum.size() == 0) throw std::invalid_argument("polyak_average: empty accumulator");
  return r.avg_sum / static_cast<double>(r.avg_count);
}

}  // namespace asgd
