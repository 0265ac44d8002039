#include <gtest/gtest.h>

#include <algorithm>
#include <random>
#include <sstream>

#include "feq/fem.hpp"
#include "feq/ttt.hpp"

using namespace feq;

namespace {

EnergyDistribution dist_of(std::vector<double> e, std::optional<int> sweeps = std::nullopt) {
  EnergyDistribution d;
  d.energies = std::move(e);
  d.sweeps = sweeps;
  return d;
}

StandardIsing random_ising(int n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  StandardIsing H;
  H.J = DenseMatrix::Zero(n, n);
  H.h = Vector(n);
  for (int i = 0; i < n; ++i) {
    H.h[i] = u(rng);
    for (int j = i + 1; j < n; ++j) H.J(i, j) = u(rng);
  }
  return H;
}

// Nearest-rank percentile by sorting.
double nearest_rank(std::vector<double> e, double q) {
  std::sort(e.begin(), e.end());
  const auto n = e.size();
  std::size_t rank = 1;
  while (100.0 * static_cast<double>(rank) < q * static_cast<double>(n)) ++rank;
  return e[rank - 1];
}

}  // namespace

TEST(Percentile, NearestRank) {
  std::vector<double> e(100);
  for (int k = 0; k < 100; ++k) e[static_cast<std::size_t>(k)] = 100 - k;
  EXPECT_DOUBLE_EQ(target_energy(dist_of(e), 10.0), 10.0);
  EXPECT_DOUBLE_EQ(target_energy(dist_of({4.5}), 37.0), 4.5);
  EXPECT_DOUBLE_EQ(target_energy(dist_of(std::vector<double>(17, -2.0)), 90.0), -2.0);

  std::mt19937_64 rng(51);
  std::normal_distribution<double> g;
  std::vector<double> big(1000);
  for (auto& x : big) x = g(rng);
  std::vector<double> sorted = big;
  std::sort(sorted.begin(), sorted.end());
  EXPECT_EQ(target_energy(dist_of(big), 10.0), sorted[99]);
  for (double q : {0.1, 1.0, 33.3, 50.0, 99.9}) EXPECT_EQ(target_energy(dist_of(big), q), nearest_rank(big, q)) << q;

  EXPECT_THROW(target_energy(dist_of({}), 10.0), InvalidArgument);
  EXPECT_THROW(target_energy(dist_of({1.0}), 0.0), InvalidArgument);
  EXPECT_THROW(target_energy(dist_of({1.0}), 100.0), InvalidArgument);
}

TEST(Stt, Arithmetic) {
  const auto d = dist_of({-1, 0, 1, 2});
  const SttResult r = stt(d, -1.0);
  EXPECT_DOUBLE_EQ(r.p_hat, 0.25);
  ASSERT_TRUE(r.stt.has_value());
  EXPECT_DOUBLE_EQ(*r.stt, 4.0);
  EXPECT_TRUE(stt(d, -1.5).infinite());
  EXPECT_DOUBLE_EQ(stt(d, 5.0).p_hat, 1.0);

  std::vector<double> e(1000);
  std::mt19937_64 rng(52);
  std::uniform_real_distribution<double> u(-3.0, 3.0);
  for (auto& x : e) x = u(rng);
  const auto ref = dist_of(e);
  const auto self = stt(ref, target_energy(ref, 10.0));
  EXPECT_GE(self.p_hat, 0.10);
  EXPECT_LE(*self.stt, 10.0);
}

TEST(Stt, NonIncreasingInTarget) {
  std::mt19937_64 rng(53);
  std::normal_distribution<double> g;
  std::vector<double> e(500);
  for (auto& x : e) x = g(rng);
  const auto d = dist_of(e);
  double prev = std::numeric_limits<double>::infinity();
  for (double t = -4.0; t <= 4.0; t += 0.05) {
    const auto r = stt(d, t);
    const double v = r.stt.value_or(std::numeric_limits<double>::infinity());
    EXPECT_LE(v, prev);
    prev = v;
  }
}

TEST(Ttt, SyntheticExample) {
  const auto ref = dist_of(std::vector<double>(100, -10.0));
  std::vector<double> half(100, 0.0);
  std::fill(half.begin(), half.begin() + 50, -10.0);
  TimingModel timing;
  const auto rep = ttt_from_distributions(ref, 20e-6, {dist_of(half, 10)}, {1e-6}, 10.0, timing);
  EXPECT_DOUBLE_EQ(rep.target, -10.0);
  ASSERT_TRUE(rep.best.has_value());
  EXPECT_DOUBLE_EQ(rep.grid[0].p_hat, 0.5);
  EXPECT_NEAR(*rep.grid[0].ttt, 20e-6, 1e-18);
  EXPECT_NEAR(*rep.reference.ttt, 20e-6, 1e-18);
  EXPECT_NEAR(*rep.ratio(), 1.0, 1e-12);

  timing.per_read_overhead = 1e-6;
  timing.per_job_overhead = 5e-3;
  const auto with_overhead = ttt_from_distributions(ref, 20e-6, {dist_of(half, 10)}, {1e-6}, 10.0, timing);
  EXPECT_NEAR(*with_overhead.grid[0].ttt, 2.0 * 11e-6 + 5e-3, 1e-15);
}

TEST(Ttt, OptimumAndInfiniteEntries) {
  const auto ref = dist_of({-5, -4, -3, -2, -1, 0, 1, 2, 3, 4});
  // p = 0, 0.1, 1.0 at 10, 100, 1000 sweeps with t_s = 1 us:
  // TTT = inf, 10 * 100 us = 1 ms, 1 * 1 ms = 1 ms. Ties keep the first.
  std::vector<EnergyDistribution> cmp = {dist_of(std::vector<double>(10, 0.0), 10),
                                         dist_of({-5, 0, 0, 0, 0, 0, 0, 0, 0, 0}, 100),
                                         dist_of(std::vector<double>(10, -9.0), 1000)};
  const auto rep = ttt_from_distributions(ref, 1e-6, cmp, {1e-6, 1e-6, 1e-6});
  EXPECT_DOUBLE_EQ(rep.target, -5.0);
  EXPECT_FALSE(rep.grid[0].ttt.has_value());
  ASSERT_TRUE(rep.best.has_value());
  EXPECT_EQ(*rep.best, 1u);
  EXPECT_EQ(rep.best_entry()->sweeps, 100);

  const auto none = ttt_from_distributions(ref, 1e-6, {cmp[0]}, {1e-6});
  EXPECT_FALSE(none.best.has_value());
  EXPECT_FALSE(none.ratio().has_value());

  std::ostringstream csv;
  write_ttt_csv(csv, rep);
  EXPECT_EQ(csv.str().substr(0, csv.str().find('\n')), "sweeps,p_hat,stt,sample_time_s,ttt_s");
  EXPECT_NE(csv.str().find("10,0,inf,"), std::string::npos);

  EXPECT_THROW(ttt_from_distributions(ref, 1e-6, {}, {}), InvalidArgument);
  EXPECT_THROW(ttt_from_distributions(ref, 1e-6, cmp, {1e-6}), InvalidArgument);
}

TEST(Ttt, LinearInTimeConstant) {
  const auto ref = dist_of({-3, -2, -1, 0, 1, 2, 3, 4, 5, 6});
  const auto cmp = dist_of({-3, -3, 0, 0, 0, 0, 0, 0, 0, 0}, 40);
  const auto a = ttt_from_distributions(ref, 2e-6, {cmp}, {1e-6});
  const auto b = ttt_from_distributions(ref, 6e-6, {cmp}, {3e-6});
  EXPECT_NEAR(*b.grid[0].ttt, 3.0 * *a.grid[0].ttt, 1e-18);
  EXPECT_NEAR(*b.reference.ttt, 3.0 * *a.reference.ttt, 1e-18);
}

TEST(Ttt, SelfComparisonRatio) {
  const StandardIsing H = random_ising(30, 54);
  SaConfig base;
  base.sweeps = 50;
  SimulatedAnnealingSampler ref(base);
  TimingModel timing;
  timing.sweep_time = 1e-6;
  timing.reference_sample_time = 50e-6;
  const auto rep = ttt_compare(H, ref, base, {50}, 1000, 10.0, timing, 7);
  ASSERT_TRUE(rep.ratio().has_value());
  EXPECT_GE(*rep.ratio(), 0.5);
  EXPECT_LE(*rep.ratio(), 2.0);
  EXPECT_EQ(rep.reads, 1000);
}

TEST(Ttt, MoreSweepsLowerMedianStt) {
  const StandardIsing H = random_ising(30, 55);
  SaConfig base;
  std::vector<double> lo, hi;
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    SaConfig ref_cfg;
    ref_cfg.sweeps = 1000;
    SimulatedAnnealingSampler ref(ref_cfg);
    TimingModel timing;
    timing.sweep_time = 1e-6;
    const auto rep = ttt_compare(H, ref, base, {10, 200}, 200, 10.0, timing, seed);
    lo.push_back(rep.grid[0].stt.value_or(std::numeric_limits<double>::infinity()));
    hi.push_back(rep.grid[1].stt.value_or(std::numeric_limits<double>::infinity()));
  }
  std::sort(lo.begin(), lo.end());
  std::sort(hi.begin(), hi.end());
  EXPECT_LE(hi[2], lo[2]);
}

TEST(Ttt, RecordedReferenceUsesAnnealTime) {
  const StandardIsing H = random_ising(8, 56);
  ExhaustiveSampler ex;
  const auto ref = distribution_from_samples(ex.sample_batch(H, 100, 0), "recorded");
  TimingModel timing;
  timing.sweep_time = 1e-6;
  const auto rep = ttt_compare(H, ref, SaConfig{}, {100}, 100, 10.0, timing, 3);
  EXPECT_DOUBLE_EQ(rep.reference.sample_time, 20e-6);
  EXPECT_DOUBLE_EQ(rep.grid[0].sample_time, 100e-6);
  EXPECT_EQ(rep.reference.label, "recorded");
}

TEST(Ttt, GridValidation) {
  const StandardIsing H = random_ising(4, 57);
  ExhaustiveSampler ex;
  EXPECT_THROW(ttt_compare(H, ex, SaConfig{}, {}, 1000), InvalidArgument);
  EXPECT_THROW(ttt_compare(H, ex, SaConfig{}, {0}, 1000), InvalidArgument);
  EXPECT_THROW(ttt_compare(H, ex, SaConfig{}, {10}, 99), InvalidArgument);
}

TEST(Batch, IterationSelection) {
  EXPECT_EQ(select_iterations(5, 20, 1), (std::vector<int>{1, 2, 3, 4, 5}));
  EXPECT_EQ(select_iterations(100, 1, 9), select_iterations(100, 1, 9));
  const auto pick = select_iterations(100, 20, 3);
  EXPECT_EQ(pick.size(), 20u);
  EXPECT_TRUE(std::is_sorted(pick.begin(), pick.end()));
  EXPECT_EQ(std::adjacent_find(pick.begin(), pick.end()), pick.end());
  EXPECT_GE(pick.front(), 1);
  EXPECT_LE(pick.back(), 100);
  EXPECT_THROW(select_iterations(10, 0, 1), InvalidArgument);
}

TEST(Batch, AggregateIdenticalReports) {
  const auto ref = dist_of(std::vector<double>(100, -10.0));
  std::vector<double> half(100, 0.0);
  std::fill(half.begin(), half.begin() + 50, -10.0);
  const auto one = ttt_from_distributions(ref, 20e-6, {dist_of(half, 10)}, {1e-6});
  const auto agg = aggregate({1, 2, 3}, {one, one, one});
  EXPECT_DOUBLE_EQ(agg.best_ttt.mean, *one.grid[0].ttt);
  EXPECT_DOUBLE_EQ(agg.best_ttt.stddev, 0.0);
  EXPECT_DOUBLE_EQ(agg.ratio.mean, 1.0);
  EXPECT_EQ(agg.infinite, 0u);
  const Spread s = spread({1.0, 2.0, 3.0});
  EXPECT_DOUBLE_EQ(s.mean, 2.0);
  EXPECT_DOUBLE_EQ(s.stddev, 1.0);
  EXPECT_DOUBLE_EQ(s.min, 1.0);
  EXPECT_DOUBLE_EQ(s.max, 3.0);
}

TEST(Batch, ReplaysRecordedRun) {
  const LinearSystem sys = poisson1d_problem(8);
  SearchConfig cfg;
  cfg.record_iterates = true;
  cfg.max_iterations = 5;
  cfg.psi_min = 1e-12;
  ExhaustiveSampler ex;
  std::vector<StandardIsing> seen;
  const SearchTrace trace = run(sys, cfg, ex, std::nullopt,
                                [&](const SearchFrame&, const StandardIsing& H) { seen.push_back(H); });
  ASSERT_EQ(trace.iterations(), 5);
  // The two Hamiltonians rebuilt from the trace are the ones the search sampled.
  for (int it = 1; it <= 5; ++it) {
    const auto hs = replay_hamiltonians(sys, trace, it);
    ASSERT_EQ(hs.size(), 2u);
    for (int k = 0; k < 2; ++k) {
      const auto& want = seen[static_cast<std::size_t>(2 * (it - 1) + k)];
      EXPECT_NEAR((hs[static_cast<std::size_t>(k)].J - want.J).norm(), 0.0, 1e-12);
      EXPECT_NEAR((hs[static_cast<std::size_t>(k)].h - want.h).norm(), 0.0, 1e-12);
      EXPECT_NEAR(hs[static_cast<std::size_t>(k)].offset, want.offset, 1e-12);
    }
  }
  EXPECT_THROW(replay_hamiltonians(sys, trace, 0), InvalidArgument);
  EXPECT_THROW(replay_hamiltonians(sys, trace, 6), InvalidArgument);

  TimingModel timing;
  timing.sweep_time = 1e-6;
  const auto batch = batch_ttt_over_iterations(sys, trace, 20, 2, ex, SaConfig{}, {10, 100}, 100, 10.0, timing, 4);
  EXPECT_EQ(batch.iterations, (std::vector<int>{1, 2, 3, 4, 5}));
  EXPECT_EQ(batch.reports.size(), 10u);
  const auto again = batch_ttt_over_iterations(sys, trace, 20, 2, ex, SaConfig{}, {10, 100}, 100, 10.0, timing, 4);
  EXPECT_EQ(report_to_json(again)["reports"][3]["grid"], report_to_json(batch)["reports"][3]["grid"]);
  const auto one = batch_ttt_over_iterations(sys, trace, 20, 1, ex, SaConfig{}, {10}, 100, 10.0, timing, 4);
  EXPECT_EQ(one.reports.size(), 5u);
  EXPECT_THROW(batch_ttt_over_iterations(sys, trace, 20, 3, ex, SaConfig{}, {10}, 100), InvalidArgument);

  SearchConfig bare = cfg;
  bare.record_iterates = false;
  const SearchTrace no_iterates = run(sys, bare, ex);
  EXPECT_THROW(replay_hamiltonians(sys, no_iterates, 1), InvalidArgument);
}

TEST(Report, Json) {
  const auto ref = dist_of({-5, -4, -3, -2, -1, 0, 1, 2, 3, 4});
  const auto rep = ttt_from_distributions(ref, 1e-6, {dist_of(std::vector<double>(10, 0.0), 10)}, {1e-6});
  const auto j = report_to_json(rep);
  EXPECT_DOUBLE_EQ(j.at("target").get<double>(), -5.0);
  EXPECT_TRUE(j.at("grid")[0].at("ttt_s").is_null());
  EXPECT_EQ(j.at("reads"), 10);
}
