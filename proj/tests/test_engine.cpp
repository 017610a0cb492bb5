#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <map>
#include <thread>

#include "asgd/datagen.hpp"
#include "asgd/engine.hpp"
#include "test_util.hpp"

using namespace asgd;

namespace {

struct Fixture {
  Problem problem;
  SecondOrderInfo info;
};

Fixture least_squares(std::size_t n, std::size_t d, double density, double noise, std::uint64_t seed) {
  Problem p(gen_linreg({n, d, density, noise, seed}).dataset, Loss::LeastSquares);
  auto info = second_order_info(p);
  return {std::move(p), std::move(info)};
}

RunConfig simulated(std::size_t workers, std::size_t batch, std::size_t epochs, std::uint64_t seed) {
  RunConfig c;
  c.mode = Mode::Simulated;
  c.workers = workers;
  c.batch = batch;
  c.epochs = epochs;
  c.seed = seed;
  c.schedule = StepsizeSchedule::poly(0.5, 0.55);
  return c;
}

void expect_same_vector(const Vector& a, const Vector& b) {
  ASSERT_EQ(a.size(), b.size());
  for (Eigen::Index j = 0; j < a.size(); ++j) EXPECT_EQ(a[j], b[j]) << "coordinate " << j;
}

}  // namespace

TEST(Schedule, Examples) {
  EXPECT_EQ(stepsize(StepsizeSchedule::poly(1.0, 0.55), 1, 0), 1.0);
  EXPECT_NEAR(stepsize(StepsizeSchedule::backoff(0.1, 0.95), 1, 2), 0.09025, 1e-17);
  EXPECT_NEAR(stepsize(StepsizeSchedule::backoff(0.1, 0.95), 1, 2), 0.1 * std::pow(0.95, 2), 1e-17);
  // 1024^-0.55 = 2^-5.5 = 1 / (32 sqrt 2)
  const double oracle = 1.0 / (32.0 * std::sqrt(2.0));
  EXPECT_NEAR(stepsize(StepsizeSchedule::poly(1.0, 0.55), 1024, 0), oracle, 1e-16);
  EXPECT_NEAR(stepsize(StepsizeSchedule::poly(1.0, 0.55), 1024, 0), std::exp(-0.55 * std::log(1024.0)), 1e-16);
  EXPECT_NEAR(oracle, 0.0221, 1e-4);
  EXPECT_EQ(StepsizeSchedule::constant(0.3)(12345, 7), 0.3);
  EXPECT_EQ(stepsize(StepsizeSchedule::backoff(0.1, 0.95), 999, 0), 0.1);
}

TEST(Schedule, ValidationAndWarnings) {
  EXPECT_THROW(StepsizeSchedule::poly(0.0, 0.5), std::invalid_argument);
  EXPECT_THROW(StepsizeSchedule::poly(1.0, 1.5), std::invalid_argument);
  EXPECT_THROW(StepsizeSchedule::backoff(0.1, 1.0), std::invalid_argument);
  EXPECT_THROW(StepsizeSchedule::backoff(-0.1, 0.5), std::invalid_argument);
  EXPECT_TRUE(StepsizeSchedule::poly(1.0, 0.55).warning().empty());
  EXPECT_FALSE(StepsizeSchedule::poly(1.0, 0.5).warning().empty());
  EXPECT_FALSE(StepsizeSchedule::poly(1.0, 1.0).warning().empty());
  EXPECT_FALSE(StepsizeSchedule::constant(1.0).warning().empty());
  EXPECT_TRUE(StepsizeSchedule::backoff(0.1, 0.95).warning().empty());
}

TEST(Delay, Assumption1Flag) {
  EXPECT_TRUE(DelayModel::none().assumption1_satisfied());
  EXPECT_TRUE(DelayModel::bounded(100).assumption1_satisfied());
  EXPECT_TRUE(DelayModel::geometric(0.05).assumption1_satisfied());
  EXPECT_TRUE(DelayModel::pareto(4.0).assumption1_satisfied());
  EXPECT_FALSE(DelayModel::pareto(1.5).assumption1_satisfied());
  EXPECT_FALSE(DelayModel::pareto(2.0).assumption1_satisfied());
}

TEST(Delay, Validation) {
  EXPECT_THROW(DelayModel::geometric(0.0), std::invalid_argument);
  EXPECT_THROW(DelayModel::geometric(1.5), std::invalid_argument);
  EXPECT_THROW(DelayModel::pareto(0.0), std::invalid_argument);
  EXPECT_THROW(DelayModel::pareto(3.0, 0.5), std::invalid_argument);
}

TEST(Delay, Parse) {
  EXPECT_TRUE(DelayModel::parse("none").is_none());
  EXPECT_EQ(DelayModel::parse("bounded:100").describe(), DelayModel::bounded(100).describe());
  EXPECT_EQ(DelayModel::parse("geometric:0.05").describe(), DelayModel::geometric(0.05).describe());
  EXPECT_EQ(DelayModel::parse("pareto:4,10").describe(), DelayModel::pareto(4, 10).describe());
  EXPECT_EQ(DelayModel::parse("pareto:1.5").describe(), DelayModel::pareto(1.5).describe());
  for (const char* bad : {"", "bounded", "bounded:-1", "bounded:2.5", "geometric:x", "foo:1", "none:3"})
    EXPECT_THROW(DelayModel::parse(bad), std::invalid_argument) << bad;
}

TEST(Delay, SampleDistributions) {
  Stream rng(3, stream_id(StreamTag::Test, 20));
  const int n = 200000;
  std::vector<int> hist(11, 0);
  const auto bounded = DelayModel::bounded(10);
  for (int i = 0; i < n; ++i) {
    const auto v = bounded.sample(rng);
    ASSERT_LE(v, 10u);
    ++hist[v];
  }
  for (int h : hist) EXPECT_NEAR(h, n / 11.0, 4 * std::sqrt(n / 11.0));

  // geometric: mean (1 - p) / p, P(D = 0) = p
  const auto geo = DelayModel::geometric(0.2);
  double s = 0;
  int zeros = 0;
  for (int i = 0; i < n; ++i) {
    const auto v = geo.sample(rng);
    s += static_cast<double>(v);
    zeros += v == 0;
  }
  EXPECT_NEAR(s / n, 4.0, 0.05);
  EXPECT_NEAR(static_cast<double>(zeros) / n, 0.2, 0.005);

  // Lomax with order 4, scale 10: P(D >= t) = (10 / (10 + t))^4 for integer t
  const auto par = DelayModel::pareto(4.0, 10.0);
  int ge10 = 0;
  for (int i = 0; i < n; ++i) ge10 += par.sample(rng) >= 10;
  EXPECT_NEAR(static_cast<double>(ge10) / n, std::pow(0.5, 4), 0.004);

  EXPECT_EQ(DelayModel::none().sample(rng), 0u);
  EXPECT_EQ(DelayModel::geometric(1.0).sample(rng), 0u);
}

TEST(RunConfig, Validation) {
  const auto f = least_squares(20, 3, 1.0, 1.0, 1);
  const ProblemSource src(f.problem);
  RunConfig c;
  c.workers = 0;
  EXPECT_THROW(run(src, c), std::invalid_argument);
  c = RunConfig{};
  c.batch = 0;
  EXPECT_THROW(run(src, c), std::invalid_argument);
  c = RunConfig{};
  c.epochs = 0;
  EXPECT_THROW(run(src, c), std::invalid_argument);
  c = RunConfig{};
  c.mode = Mode::Threads;
  c.delay = DelayModel::bounded(3);
  EXPECT_THROW(run(src, c), std::invalid_argument);
  c = RunConfig{};
  c.mode = Mode::Threads;
  c.record_steps = true;
  EXPECT_THROW(run(src, c), std::invalid_argument);
  c = RunConfig{};
  c.x0 = {1.0};
  EXPECT_THROW(run(src, c), std::invalid_argument);
}

TEST(Engine, ZeroRowDatasetRejected) {
  const Problem empty(Dataset(3, {}, Task::Regression), Loss::LeastSquares);
  EXPECT_THROW(ProblemSource{empty}, std::invalid_argument);
}

TEST(Engine, SingleThreadMatchesSimulatedBitForBit) {
  const auto f = least_squares(500, 8, 0.5, 1.0, 2);
  const ProblemSource src(f.problem, f.info.f_star);
  for (std::size_t batch : {1u, 7u}) {
    RunConfig c = simulated(1, batch, 3, 42);
    const auto sim = run(src, c);
    c.mode = Mode::Threads;
    const auto thr = run(src, c);
    expect_same_vector(sim.x_final, thr.x_final);
    expect_same_vector(sim.x_bar, thr.x_bar);
    EXPECT_EQ(sim.avg_count, thr.avg_count);
    ASSERT_EQ(sim.trace.size(), thr.trace.size());
    for (std::size_t e = 0; e < sim.trace.size(); ++e) {
      EXPECT_EQ(sim.trace[e].gap, thr.trace[e].gap);
      EXPECT_EQ(sim.trace[e].steps, thr.trace[e].steps);
    }
  }
}

TEST(Engine, IidSamplingSingleThreadMatchesSimulated) {
  const auto f = least_squares(300, 5, 1.0, 1.0, 3);
  const ProblemSource src(f.problem);
  RunConfig c = simulated(1, 4, 2, 5);
  c.sampling = Sampling::Iid;
  const auto sim = run(src, c);
  c.mode = Mode::Threads;
  expect_same_vector(sim.x_final, run(src, c).x_final);
}

TEST(Engine, CounterTotals) {
  const auto f = least_squares(103, 4, 1.0, 1.0, 4);
  const ProblemSource src(f.problem);
  for (Mode mode : {Mode::Threads, Mode::Simulated}) {
    for (std::size_t m : {1u, 3u, 4u}) {
      RunConfig c = simulated(m, 10, 5, 6);
      c.mode = mode;
      const auto r = run(src, c);
      EXPECT_EQ(r.total_steps, 5u * 11u);
      EXPECT_EQ(r.avg_count, r.total_steps);
      ASSERT_EQ(r.trace.size(), 5u);
      for (std::size_t e = 0; e < 5; ++e) {
        EXPECT_EQ(r.trace[e].epoch, e + 1);
        EXPECT_EQ(r.trace[e].steps, (e + 1) * 11u);
      }
      EXPECT_EQ(r.epoch_times.size(), 5u);
    }
  }
}

TEST(Engine, BurnInAndSnapshots) {
  const auto f = least_squares(100, 4, 1.0, 1.0, 4);
  const ProblemSource src(f.problem);
  RunConfig c = simulated(1, 10, 7, 6);
  c.average_burn_in = 25;
  c.snapshot_every = 3;
  const auto r = run(src, c);
  EXPECT_EQ(r.avg_count, 70u - 25u);
  ASSERT_EQ(r.trace.size(), 3u);  // epochs 3, 6 and the last
  EXPECT_EQ(r.trace[0].epoch, 3u);
  EXPECT_EQ(r.trace[1].epoch, 6u);
  EXPECT_EQ(r.trace[2].epoch, 7u);
  c.average_burn_in = 70;
  const auto none = run(src, c);
  EXPECT_EQ(none.avg_count, 0u);
  EXPECT_EQ(none.x_bar.size(), 0);
  EXPECT_THROW(polyak_average(none), std::invalid_argument);
}

TEST(Engine, NoLostUpdatesAcrossThreadCounts) {
  const test::InjectedSource src(13, 5000);
  const auto expect = src.expected(4);
  for (std::size_t m : {1u, 2u, 4u, 8u}) {
    RunConfig c;
    c.mode = Mode::Threads;
    c.workers = m;
    c.batch = 1;
    c.epochs = 4;
    c.schedule = StepsizeSchedule::constant(1.0);
    c.seed = m;
    const auto r = run(src, c);
    for (std::size_t j = 0; j < 13; ++j) EXPECT_EQ(r.x_final[static_cast<Eigen::Index>(j)], expect[j]) << "m=" << m;
    EXPECT_EQ(r.total_steps, 20000u);
  }
}

TEST(Engine, CounterValuesAreUnique) {
  SharedState state(1, {});
  const std::size_t m = 8, per = 20000;
  std::vector<std::vector<std::uint64_t>> seen(m);
  {
    std::vector<std::jthread> threads;
    for (std::size_t w = 0; w < m; ++w)
      threads.emplace_back([&, w] {
        for (std::size_t i = 0; i < per; ++i) seen[w].push_back(state.next_step());
      });
  }
  std::vector<std::uint64_t> all;
  for (auto& v : seen) all.insert(all.end(), v.begin(), v.end());
  std::sort(all.begin(), all.end());
  for (std::size_t i = 0; i < all.size(); ++i) ASSERT_EQ(all[i], i + 1);
  EXPECT_EQ(state.steps(), m * per);
}

TEST(Engine, SimulatedStepsizesFollowCounter) {
  const auto f = least_squares(50, 3, 1.0, 1.0, 7);
  const ProblemSource src(f.problem);
  RunConfig c = simulated(3, 4, 3, 8);
  c.record_steps = true;
  c.delay = DelayModel::geometric(0.3);
  const auto r = run(src, c);
  ASSERT_EQ(r.steps.size(), r.total_steps);
  for (std::size_t i = 0; i < r.steps.size(); ++i) {
    EXPECT_EQ(r.steps[i].k, i + 1);
    const std::size_t epoch = i / 13;
    EXPECT_EQ(r.steps[i].alpha, c.schedule(i + 1, epoch));
  }
}

TEST(Engine, ReplayReproducesErrorSequence) {
  const auto f = least_squares(200, 6, 1.0, 1.0, 9);
  const ProblemSource src(f.problem);
  RunConfig c = simulated(1, 5, 3, 10);
  c.record_steps = true;
  const auto r = run(src, c);
  Vector delta = -f.info.x_star;  // x_1 = 0
  for (std::size_t i = 0; i < r.steps.size(); ++i) {
    const auto& s = r.steps[i];
    const Vector xk = Eigen::Map<const Vector>(s.x_read.data(), 6);
    EXPECT_LE((xk - f.info.x_star - delta).cwiseAbs().maxCoeff(), 1e-12) << "step " << s.k;
    const Vector g = Eigen::Map<const Vector>(s.direction.data(), 6);
    delta = delta - s.alpha * g;
  }
  EXPECT_LE((r.x_final - f.info.x_star - delta).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(Engine, SynchronousMatchesPlainGradientDescent) {
  // sigma = 0 and full batches: every step is a full gradient step
  const auto data = gen_linreg({40, 5, 0.6, 0.0, 11}).dataset;
  const Problem p(data, Loss::LeastSquares);
  const ProblemSource src(p);
  RunConfig c = simulated(1, 40, 300, 12);
  c.schedule = StepsizeSchedule::poly(0.3, 0.55);
  const auto r = run(src, c);

  Matrix A = Matrix::Zero(40, 5);
  Vector b(40);
  for (Eigen::Index i = 0; i < 40; ++i) {
    for (const auto& e : data.row(static_cast<std::size_t>(i)).features.entries()) A(i, e.index) = e.value;
    b[i] = data.row(static_cast<std::size_t>(i)).label;
  }
  Vector x = Vector::Zero(5);
  for (int k = 1; k <= 300; ++k) x -= 0.3 * std::pow(k, -0.55) * (A.transpose() * (A * x - b)) / 40.0;
  EXPECT_LE((r.x_final - x).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(Engine, MiniBatchOrderFollowsEpochPermutation) {
  const auto data = gen_linreg({23, 4, 1.0, 0.5, 13}).dataset;
  const Problem p(data, Loss::LeastSquares);
  const ProblemSource src(p);
  RunConfig c = simulated(1, 5, 2, 77);
  c.schedule = StepsizeSchedule::poly(0.3, 0.6);
  const auto r = run(src, c);

  std::vector<double> x(4, 0.0);
  std::uint64_t k = 0;
  for (std::size_t e = 0; e < 2; ++e) {
    Stream rng(77, stream_id(StreamTag::Permutation, 0, e));
    const auto order = permutation(23, rng);
    for (std::size_t lo = 0; lo < 23; lo += 5) {
      const std::size_t hi = std::min<std::size_t>(23, lo + 5);
      std::vector<double> g(4, 0.0);
      for (std::size_t t = lo; t < hi; ++t) {
        const auto& row = data.row(order[t]);
        double z = 0.0;
        for (const auto& en : row.features.entries()) z += en.value * x[en.index];
        for (const auto& en : row.features.entries()) g[en.index] += (z - row.label) * en.value;
      }
      ++k;
      const double alpha = 0.3 * std::pow(static_cast<double>(k), -0.6);
      for (std::size_t j = 0; j < 4; ++j) x[j] -= alpha * g[j] / static_cast<double>(hi - lo);
    }
  }
  EXPECT_EQ(r.total_steps, k);
  for (std::size_t j = 0; j < 4; ++j) EXPECT_NEAR(r.x_final[static_cast<Eigen::Index>(j)], x[j], 1e-12);
}

TEST(Engine, BoundedZeroEqualsNone) {
  const auto f = least_squares(120, 5, 0.4, 1.0, 14);
  const ProblemSource src(f.problem);
  RunConfig c = simulated(2, 3, 2, 15);
  const auto a = run(src, c);
  c.delay = DelayModel::bounded(0);
  const auto b = run(src, c);
  expect_same_vector(a.x_final, b.x_final);
  expect_same_vector(a.x_bar, b.x_bar);
}

TEST(Engine, BoundedDelaysRespectBound) {
  const auto f = least_squares(120, 5, 0.4, 1.0, 14);
  const ProblemSource src(f.problem);
  RunConfig c = simulated(2, 3, 2, 15);
  c.delay = DelayModel::bounded(6);
  const auto r = run(src, c);
  ASSERT_EQ(r.delays.size(), r.total_steps);
  EXPECT_LE(*std::max_element(r.delays.begin(), r.delays.end()), 6u);
  for (const auto& t : r.trace) {
    ASSERT_TRUE(t.max_delay.has_value());
    EXPECT_LE(*t.max_delay, 6u);
  }
}

TEST(Engine, StaleReadsMatchDelayedSum) {
  const auto f = least_squares(60, 4, 0.5, 1.0, 16);
  const ProblemSource src(f.problem);
  for (bool staggered : {false, true}) {
    RunConfig c = simulated(1, 2, 3, 17);
    c.delay = DelayModel::geometric(0.25);
    c.record_steps = true;
    c.staggered_delays = staggered;
    const auto r = run(src, c);
    const std::size_t K = r.steps.size();
    // landing time of each coordinate of each update, then replay in landing order
    struct Landing {
      std::uint64_t due, issue;
      std::size_t pos;
      std::uint32_t j;
    };
    std::vector<Landing> landings;
    for (std::size_t i = 0; i < K; ++i) {
      std::vector<std::uint32_t> touched;
      for (std::uint32_t j = 0; j < 4; ++j)
        if (r.steps[i].direction[j] != 0.0) touched.push_back(j);
      for (std::size_t t = 0; t < touched.size(); ++t) {
        const std::uint64_t D = r.delays[i];
        const std::uint64_t lag = staggered && touched.size() > 1 ? D * (t + 1) / touched.size() : D;
        landings.push_back({i + 1 + lag, i + 1, staggered ? t : 0, touched[t]});
      }
    }
    std::sort(landings.begin(), landings.end(), [](const Landing& a, const Landing& b) {
      return std::tie(a.due, a.issue, a.pos) < std::tie(b.due, b.issue, b.pos);
    });
    std::vector<double> x(4, 0.0);
    std::size_t next = 0;
    for (std::size_t k = 1; k <= K; ++k) {
      while (next < landings.size() && landings[next].due <= k - 1) {
        const auto& l = landings[next++];
        x[l.j] += -r.steps[l.issue - 1].alpha * r.steps[l.issue - 1].direction[l.j];
      }
      for (std::size_t j = 0; j < 4; ++j) ASSERT_EQ(r.steps[k - 1].x_read[j], x[j]) << "k=" << k << " j=" << j;
    }
    // quiescence: everything lands by the end
    while (next < landings.size()) {
      const auto& l = landings[next++];
      x[l.j] += -r.steps[l.issue - 1].alpha * r.steps[l.issue - 1].direction[l.j];
    }
    for (std::size_t j = 0; j < 4; ++j) EXPECT_EQ(r.x_final[static_cast<Eigen::Index>(j)], x[j]);
  }
}

TEST(Engine, AverageInvariantToLogicalWorkers) {
  const auto f = least_squares(90, 5, 0.6, 1.0, 18);
  const ProblemSource src(f.problem);
  const auto one = run(src, simulated(1, 4, 3, 19));
  for (std::size_t m : {2u, 3u, 7u}) {
    const auto many = run(src, simulated(m, 4, 3, 19));
    // per-worker partial sums are added in a different order
    EXPECT_LE((one.x_bar - many.x_bar).cwiseAbs().maxCoeff(), 1e-14 * one.x_bar.cwiseAbs().maxCoeff());
    expect_same_vector(one.x_final, many.x_final);
    EXPECT_EQ(one.avg_count, many.avg_count);
  }
}

TEST(Engine, SimulatedIsDeterministic) {
  const auto f = least_squares(90, 5, 0.6, 1.0, 18);
  const ProblemSource src(f.problem);
  RunConfig c = simulated(3, 4, 3, 19);
  c.delay = DelayModel::pareto(1.5, 2.0);
  const auto a = run(src, c), b = run(src, c);
  expect_same_vector(a.x_final, b.x_final);
  EXPECT_EQ(a.delays, b.delays);
  EXPECT_FALSE(a.assumption1_satisfied);
  EXPECT_FALSE(a.warnings.empty());
}

TEST(Polyak, Examples) {
  RunResult r;
  r.avg_sum = (Vector(2) << 2.0, 0.0).finished();
  r.avg_count = 2;
  EXPECT_EQ(polyak_average(r), (Vector(2) << 1.0, 0.0).finished());
  r.avg_sum = (Vector(2) << 3.0 * 1.5, 3.0 * -2.0).finished();
  r.avg_count = 3;
  EXPECT_EQ(polyak_average(r), (Vector(2) << 1.5, -2.0).finished());
  RunResult empty;
  EXPECT_THROW(polyak_average(empty), std::invalid_argument);
}

TEST(Polyak, BurnInLeavesLastSnapshot) {
  const auto f = least_squares(50, 3, 1.0, 1.0, 20);
  const ProblemSource src(f.problem);
  RunConfig c = simulated(1, 5, 2, 21);
  c.record_steps = true;
  c.average_burn_in = 19;
  const auto r = run(src, c);
  ASSERT_EQ(r.total_steps, 20u);
  EXPECT_EQ(r.avg_count, 1u);
  const Vector last = Eigen::Map<const Vector>(r.steps.back().x_read.data(), 3);
  expect_same_vector(polyak_average(r), last);
}

TEST(Polyak, AccumulatesReadSnapshots) {
  const auto f = least_squares(30, 3, 1.0, 1.0, 22);
  const ProblemSource src(f.problem);
  RunConfig c = simulated(1, 3, 2, 23);
  c.record_steps = true;
  c.delay = DelayModel::bounded(4);
  const auto r = run(src, c);
  Vector s = Vector::Zero(3);
  for (const auto& st : r.steps) s += Eigen::Map<const Vector>(st.x_read.data(), 3);
  EXPECT_LE((polyak_average(r) - s / static_cast<double>(r.steps.size())).cwiseAbs().maxCoeff(), 1e-15);
}

TEST(Engine, MultiThreadedRunConverges) {
  const auto f = least_squares(4000, 10, 1.0, 0.5, 24);
  const ProblemSource src(f.problem, f.info.f_star);
  RunConfig c;
  c.mode = Mode::Threads;
  c.workers = 4;
  c.batch = 10;
  c.epochs = 5;
  c.seed = 25;
  const auto r = run(src, c);
  ASSERT_EQ(r.trace.size(), 5u);
  EXPECT_LT(r.trace.back().gap, 0.01);
  EXPECT_LT((r.x_final - f.info.x_star).norm(), 0.1);
}

TEST(Engine, RacyModeSingleThreadMatchesAtomic) {
  const auto f = least_squares(200, 6, 0.5, 1.0, 26);
  const ProblemSource src(f.problem);
  RunConfig c;
  c.mode = Mode::Threads;
  c.epochs = 2;
  c.seed = 27;
  const auto a = run(src, c);
  c.racy_updates = true;
  expect_same_vector(a.x_final, run(src, c).x_final);
}

namespace {

struct ThrowingSource {
  std::size_t dim() const { return 2; }
  std::size_t n_rows() const { return 100; }
  void direction(std::span<const double>, std::span<const std::uint32_t> rows, WorkerStreams&, GradBuffer&,
                 std::vector<double>*) const {
    if (rows[0] == 50) throw std::runtime_error("worker failure");
  }
  double gap(std::span<const double>) const { return 0.0; }
};

}  // namespace

TEST(Engine, WorkerExceptionPropagates) {
  RunConfig c;
  c.mode = Mode::Threads;
  c.workers = 4;
  c.batch = 1;
  c.epochs = 3;
  EXPECT_THROW(run(ThrowingSource{}, c), std::runtime_error);
  EXPECT_THROW(run_synchronized(ThrowingSource{}, c), std::runtime_error);
  c.mode = Mode::Simulated;
  EXPECT_THROW(run(ThrowingSource{}, c), std::runtime_error);
}

TEST(Synchronized, SingleWorkerEqualsSequentialRun) {
  const auto f = least_squares(150, 5, 1.0, 1.0, 28);
  const ProblemSource src(f.problem, f.info.f_star);
  RunConfig c = simulated(1, 10, 3, 29);
  const auto seq = run(src, c);
  const auto syn = run_synchronized(src, c);
  expect_same_vector(seq.x_final, syn.x_final);
  EXPECT_EQ(syn.total_steps, seq.total_steps);
}

TEST(Synchronized, RoundsAverageWorkerGradients) {
  const auto f = least_squares(160, 5, 1.0, 1.0, 30);
  const ProblemSource src(f.problem, f.info.f_star);
  RunConfig c = simulated(4, 10, 4, 31);
  const auto r = run_synchronized(src, c);
  EXPECT_EQ(r.total_steps, 4u * 4u);  // 16 batches per epoch, 4 per round
  ASSERT_EQ(r.trace.size(), 4u);
  EXPECT_LT(r.trace.back().gap, r.trace.front().gap);
}
