#pragma once

// Experiment grid used by the asgd-bench tool: build a problem, run every
// (density, batch, cores, seed) cell one after another and aggregate the
// per-seed traces into mean +/- standard error rows.

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "asgd/csv.hpp"
#include "asgd/datagen.hpp"
#include "asgd/engine.hpp"
#include "asgd/model.hpp"
#include "asgd/stats.hpp"
#include "asgd/svmlight.hpp"

namespace asgd::bench {

struct ProblemSpec {
  std::optional<std::string> data_path;  // svmlight file; synthetic otherwise
  SvmlightOptions svm;
  Loss loss = Loss::LeastSquares;
  SynthSpec synth{100000, 100, 1.0, 1.0, 1};

  std::string describe() const {
    if (data_path) return std::string("file=") + *data_path + " loss=" + to_string(loss);
    return "synthetic n=" + std::to_string(synth.n_rows) + " d=" + std::to_string(synth.dim) +
           " density=" + csv::num(synth.density) + " noise_sd=" + csv::num(synth.noise_sd) +
           " data_seed=" + std::to_string(synth.seed) + " loss=" + to_string(loss);
  }
};

/// The problem plus its minimizer; solving happens before any run starts.
struct PreparedProblem {
  Problem problem;
  SecondOrderInfo info;
};

inline PreparedProblem prepare(const ProblemSpec& spec) {
  Dataset data = spec.data_path ? load_svmlight(*spec.data_path, spec.svm) : gen_linreg(spec.synth).dataset;
  Problem p(std::move(data), spec.loss);
  SecondOrderInfo info = second_order_info(p);
  return {std::move(p), std::move(info)};
}

enum class Method { Async, Synchronized };

inline const char* to_string(Method m) { return m == Method::Async ? "async" : "sync"; }

inline RunResult run_cell(const PreparedProblem& pp, RunConfig cfg, std::size_t cores, std::uint64_t seed,
                          Method method) {
  cfg.workers = cores;
  cfg.seed = seed;
  const ProblemSource src(pp.problem, pp.info.f_star);
  return method == Method::Async ? run(src, cfg) : run_synchronized(src, cfg);
}

struct CellKey {
  double density = 1.0;
  std::size_t batch = 1;
  std::size_t cores = 1;
  Method method = Method::Async;
  auto operator<=>(const CellKey&) const = default;
};

struct CellRuns {
  std::vector<std::uint64_t> seeds;
  std::vector<std::vector<TraceRecord>> traces;  // per seed
  std::vector<double> mean_epoch_seconds;        // per seed
  std::string status = "ok";
};

struct GapRow {
  CellKey key;
  std::size_t epoch = 0;
  double gap_mean = 0.0;
  double gap_stderr = 0.0;
  std::size_t seeds = 0;
};

struct TimingRow {
  CellKey key;
  double epoch_seconds_mean = 0.0;
  double epoch_seconds_stderr = 0.0;
  double speedup_mean = 0.0;
  double speedup_stderr = 0.0;
  std::size_t seeds = 0;
  std::string status = "ok";
};

inline double mean_of(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x;
  return v.empty() ? 0.0 : s / static_cast<double>(v.size());
}

/// Per-epoch mean and standard error of the gap across seeds.
inline std::vector<GapRow> aggregate_gaps(const CellKey& key, const CellRuns& runs) {
  std::vector<GapRow> rows;
  if (runs.traces.empty()) return rows;
  const std::size_t epochs = runs.traces.front().size();
  for (std::size_t e = 0; e < epochs; ++e) {
    std::vector<double> gaps;
    for (const auto& t : runs.traces)
      if (e < t.size()) gaps.push_back(t[e].gap);
    const auto ms = mean_stderr(gaps);
    rows.push_back({key, runs.traces.front()[e].epoch, ms.mean, ms.std_error, gaps.size()});
  }
  return rows;
}

/// Speedup of each seed is (single-core async epoch time of that seed) /
/// (epoch time of this cell for that seed).
inline TimingRow aggregate_timing(const CellKey& key, const CellRuns& runs, const CellRuns* baseline) {
  TimingRow row;
  row.key = key;
  row.status = runs.status;
  row.seeds = runs.mean_epoch_seconds.size();
  const auto t = mean_stderr(runs.mean_epoch_seconds);
  row.epoch_seconds_mean = t.mean;
  row.epoch_seconds_stderr = t.std_error;
  if (baseline && baseline->mean_epoch_seconds.size() == runs.mean_epoch_seconds.size()) {
    std::vector<double> ratios;
    for (std::size_t s = 0; s < runs.mean_epoch_seconds.size(); ++s)
      ratios.push_back(speedup(baseline->mean_epoch_seconds[s], runs.mean_epoch_seconds[s]));
    const auto sp = mean_stderr(ratios);
    row.speedup_mean = sp.mean;
    row.speedup_stderr = sp.std_error;
  } else {
    row.speedup_mean = std::numeric_limits<double>::quiet_NaN();
    row.speedup_stderr = std::numeric_limits<double>::quiet_NaN();
  }
  return row;
}

struct SweepSpec {
  std::string kind = "gap_vs_epoch";
  ProblemSpec problem;
  RunConfig cfg;  // template; workers and seed are overridden per cell
  std::vector<double> densities{1.0};
  std::vector<std::size_t> batches{10};
  std::vector<std::size_t> cores{1, 4, 8, 10};
  std::vector<std::uint64_t> seeds;
  bool comparator = false;  // also run the synchronized method
  bool write_traces = true;

  void validate() const {
    if (densities.empty() || batches.empty() || cores.empty() || seeds.empty())
      throw std::invalid_argument("sweep: sweep lists must be non-empty");
    for (std::size_t i = 0; i < seeds.size(); ++i)
      for (std::size_t j = i + 1; j < seeds.size(); ++j)
        if (seeds[i] == seeds[j]) throw std::invalid_argument("sweep: seeds must be distinct");
  }
};

struct SweepOutput {
  std::map<CellKey, CellRuns> cells;
  std::vector<GapRow> gaps;
  std::vector<TimingRow> timing;
};

inline void write_gap_rows(std::ostream& out, const std::vector<GapRow>& rows, const std::string& config) {
  csv::write_comment(out, config);
  out << "density,batch,cores,method,epoch,gap_mean,gap_stderr,seeds\n";
  for (const auto& r : rows)
    out << csv::num(r.key.density) << ',' << r.key.batch << ',' << r.key.cores << ',' << to_string(r.key.method) << ','
        << r.epoch << ',' << csv::num(r.gap_mean) << ',' << csv::num(r.gap_stderr) << ',' << r.seeds << '\n';
}

inline void write_timing_rows(std::ostream& out, const std::vector<TimingRow>& rows, const std::string& config) {
  csv::write_comment(out, config);
  out << "density,batch,cores,method,epoch_seconds_mean,epoch_seconds_stderr,speedup_mean,speedup_stderr,seeds,status\n";
  for (const auto& r : rows)
    out << csv::num(r.key.density) << ',' << r.key.batch << ',' << r.key.cores << ',' << to_string(r.key.method) << ','
        << csv::num(r.epoch_seconds_mean) << ',' << csv::num(r.epoch_seconds_stderr) << ',' << csv::num(r.speedup_mean)
        << ',' << csv::num(r.speedup_stderr) << ',' << r.seeds << ',' << r.status << '\n';
}

using Progress = std::function<void(const std::string&)>;

/// Runs the full grid one cell at a time.  A failing cell is recorded with
/// its error in `status` and the sweep moves on.  A single-core async cell is
/// always run per (density, batch) as the speedup baseline.
inline SweepOutput run_sweep(const SweepSpec& spec, const std::filesystem::path& out_dir, const Progress& progress = {}) {
  spec.validate();
  SweepOutput out;
  const std::string config = spec.problem.describe() + " kind=" + spec.kind + " " + spec.cfg.describe();
  for (double density : spec.densities) {
    ProblemSpec ps = spec.problem;
    ps.synth.density = density;
    std::optional<PreparedProblem> pp;
    std::string prep_error;
    try {
      pp = prepare(ps);
    } catch (const std::exception& e) {
      prep_error = e.what();
    }
    for (std::size_t batch : spec.batches) {
      RunConfig cfg = spec.cfg;
      cfg.batch = batch;
      std::vector<std::size_t> cores = spec.cores;
      if (std::find(cores.begin(), cores.end(), 1u) == cores.end()) cores.insert(cores.begin(), 1);
      for (Method method : {Method::Async, Method::Synchronized}) {
        if (method == Method::Synchronized && !spec.comparator) continue;
        for (std::size_t c : cores) {
          const CellKey key{density, batch, c, method};
          CellRuns& cell = out.cells[key];
          if (!pp) {
            cell.status = "error: " + prep_error;
            continue;
          }
          for (auto seed : spec.seeds) {
            if (progress)
              progress("density=" + csv::num(density) + " batch=" + std::to_string(batch) + " cores=" + std::to_string(c) +
                       " method=" + to_string(method) + " seed=" + std::to_string(seed));
            try {
              RunResult r = run_cell(*pp, cfg, c, seed, method);
              cell.seeds.push_back(seed);
              cell.mean_epoch_seconds.push_back(mean_of(r.epoch_times));
              if (spec.write_traces && !out_dir.empty()) {
                const auto path = out_dir / ("trace_d" + csv::num(density) + "_b" + std::to_string(batch) + "_c" +
                                             std::to_string(c) + "_" + to_string(method) + "_s" + std::to_string(seed) +
                                             ".csv");
                RunConfig used = cfg;
                used.workers = c;
                used.seed = seed;
                csv::write_file(path.string(), [&](std::ostream& o) {
                  csv::write_trace(o, r.trace, ps.describe() + " " + used.describe() + " method=" + to_string(method));
                });
              }
              cell.traces.push_back(std::move(r.trace));
            } catch (const std::exception& e) {
              cell.status = std::string("error: ") + e.what();
            }
          }
        }
      }
    }
  }
  for (const auto& [key, cell] : out.cells) {
    auto g = aggregate_gaps(key, cell);
    out.gaps.insert(out.gaps.end(), g.begin(), g.end());
    const CellKey base{key.density, key.batch, 1, Method::Async};
    const auto it = out.cells.find(base);
    out.timing.push_back(aggregate_timing(key, cell, it == out.cells.end() ? nullptr : &it->second));
  }
  if (!out_dir.empty()) {
    csv::write_file((out_dir / "sweep_gaps.csv").string(), [&](std::ostream& o) { write_gap_rows(o, out.gaps, config); });
    csv::write_file((out_dir / "sweep_timing.csv").string(),
                    [&](std::ostream& o) { write_timing_rows(o, out.timing, config); });
  }
  return out;
}

}  // namespace asgd::bench
