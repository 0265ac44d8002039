#pragma once

// Time-to-target benchmarking. A reference sampler fixes the target energy as
// a percentile of its distribution; every sampler is then scored by
//   STT = 1 / p_hat,   TTT = STT * (per-sample time)
// where p_hat is the fraction of its samples at or below the target.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <optional>
#include <ostream>
#include <random>
#include <string>
#include <vector>

#include <json.hpp>

#include "feq/samplers.hpp"
#include "feq/search.hpp"

namespace feq {

struct EnergyDistribution {
  std::vector<double> energies;
  std::string sampler;
  std::optional<int> sweeps;
  std::optional<double> anneal_time_us;
  std::uint64_t seed = 0;

  std::size_t sample_count() const { return energies.size(); }
};

inline EnergyDistribution distribution_from_samples(const std::vector<Sample>& samples, std::string sampler = {},
                                                    std::uint64_t seed = 0) {
  EnergyDistribution d;
  d.sampler = std::move(sampler);
  d.seed = seed;
  d.energies.reserve(samples.size());
  for (const auto& s : samples) d.energies.push_back(s.energy);
  return d;
}

/// Nearest-rank percentile: the ceil(q/100 n)-th smallest energy.
inline double target_energy(const EnergyDistribution& ref, double q = 10.0) {
  if (ref.energies.empty()) throw InvalidArgument("target_energy: empty distribution");
  if (!(q > 0.0 && q < 100.0)) throw InvalidArgument("target_energy: percentile must be in (0, 100)");
  const auto n = static_cast<double>(ref.energies.size());
  auto rank = static_cast<std::size_t>(std::ceil(q * n / 100.0 - 1e-9));
  rank = std::clamp<std::size_t>(rank, 1, ref.energies.size());
  std::vector<double> e = ref.energies;
  std::nth_element(e.begin(), e.begin() + static_cast<std::ptrdiff_t>(rank - 1), e.end());
  return e[rank - 1];
}

struct SttResult {
  double p_hat = 0.0;
  std::optional<double> stt;  // empty: p_hat = 0, infinitely many samples

  bool infinite() const { return !stt.has_value(); }
};

inline SttResult stt(const EnergyDistribution& dist, double target) {
  SttResult r;
  if (dist.energies.empty()) return r;
  const auto hits = std::count_if(dist.energies.begin(), dist.energies.end(), [&](double e) { return e <= target; });
  r.p_hat = static_cast<double>(hits) / static_cast<double>(dist.energies.size());
  if (hits > 0) r.stt = 1.0 / r.p_hat;
  return r;
}

/// Accounting constants, in seconds. The per-read overhead is added to each
/// sample's time, the per-job overhead once per TTT figure.
struct TimingModel {
  double anneal_time = 20e-6;               // t_a for a recorded hardware reference
  std::optional<double> sweep_time;         // t_s; measured when unset
  std::optional<double> reference_sample_time;  // measured when unset and the reference is sampled live
  double per_job_overhead = 0.0;
  double per_read_overhead = 0.0;
};

struct TTTEntry {
  std::string label;
  std::optional<int> sweeps;
  double p_hat = 0.0;
  std::optional<double> stt;
  double sample_time = 0.0;
  std::optional<double> ttt;
};

inline TTTEntry score(const EnergyDistribution& dist, double target, double sample_time, const TimingModel& timing,
                      std::string label = {}) {
  TTTEntry e;
  e.label = std::move(label);
  e.sweeps = dist.sweeps;
  const SttResult r = stt(dist, target);
  e.p_hat = r.p_hat;
  e.stt = r.stt;
  e.sample_time = sample_time;
  if (r.stt) e.ttt = *r.stt * (sample_time + timing.per_read_overhead) + timing.per_job_overhead;
  return e;
}

struct TTTReport {
  double q = 10.0;
  double target = 0.0;
  int reads = 0;
  TTTEntry reference;
  std::vector<TTTEntry> grid;  // one per sweep count
  std::optional<std::size_t> best;

  const TTTEntry* best_entry() const { return best ? &grid[*best] : nullptr; }
  /// best comparison TTT / reference TTT
  std::optional<double> ratio() const {
    if (!best || !reference.ttt || *reference.ttt == 0.0) return std::nullopt;
    return *grid[*best].ttt / *reference.ttt;
  }
};

/// Index of the smallest finite TTT (first on ties).
inline std::optional<std::size_t> select_optimum(const std::vector<TTTEntry>& grid) {
  std::optional<std::size_t> best;
  for (std::size_t k = 0; k < grid.size(); ++k)
    if (grid[k].ttt && (!best || *grid[k].ttt < *grid[*best].ttt)) best = k;
  return best;
}

/// Pure arithmetic core: scores precomputed distributions. Each comparison
/// distribution carries its sweep count; its per-sample time is
/// sweeps * sweep_times[k].
inline TTTReport ttt_from_distributions(const EnergyDistribution& ref, double ref_sample_time,
                                        const std::vector<EnergyDistribution>& cmp,
                                        const std::vector<double>& sweep_times, double q = 10.0,
                                        const TimingModel& timing = {}) {
  if (cmp.empty()) throw InvalidArgument("ttt: empty sweep grid");
  if (sweep_times.size() != cmp.size()) throw InvalidArgument("ttt: one sweep time per comparison distribution");
  TTTReport rep;
  rep.q = q;
  rep.target = target_energy(ref, q);
  rep.reads = static_cast<int>(ref.sample_count());
  rep.reference = score(ref, rep.target, ref_sample_time, timing, ref.sampler.empty() ? "reference" : ref.sampler);
  for (std::size_t k = 0; k < cmp.size(); ++k) {
    const int sweeps = cmp[k].sweeps.value_or(1);
    rep.grid.push_back(score(cmp[k], rep.target, sweeps * sweep_times[k], timing, cmp[k].sampler));
  }
  rep.best = select_optimum(rep.grid);
  return rep;
}

namespace detail {

inline std::vector<EnergyDistribution> sweep_grid_distributions(const StandardIsing& H, const SaConfig& base,
                                                                const std::vector<int>& sweep_grid, int reads,
                                                                std::uint64_t seed, const TimingModel& timing,
                                                                std::vector<double>& sweep_times) {
  std::vector<EnergyDistribution> out;
  sweep_times.clear();
  for (std::size_t k = 0; k < sweep_grid.size(); ++k) {
    SaConfig cfg = base;
    cfg.sweeps = sweep_grid[k];
    SimulatedAnnealingSampler sa(cfg);
    const std::uint64_t s = derive_seed(seed, 1 + k);
    auto dist = distribution_from_samples(sa.sample_batch(H, reads, s), "sa", s);
    dist.sweeps = cfg.sweeps;
    out.push_back(std::move(dist));
    sweep_times.push_back(timing.sweep_time.value_or(sa.last_sweep_seconds()));
  }
  return out;
}

inline void check_grid(const std::vector<int>& sweep_grid, int reads) {
  if (sweep_grid.empty()) throw InvalidArgument("ttt: empty sweep grid");
  for (int k : sweep_grid)
    if (k < 1) throw InvalidArgument("ttt: sweep counts must be positive");
  if (reads < 100) throw InvalidArgument("ttt: need at least 100 reads for a stable percentile");
}

}  // namespace detail

/// Reference sampled live; its per-sample time is measured unless
/// timing.reference_sample_time is set. SA runs at every grid sweep count.
inline TTTReport ttt_compare(const StandardIsing& H, Sampler& reference, const SaConfig& base,
                             const std::vector<int>& sweep_grid, int reads = 1000, double q = 10.0,
                             const TimingModel& timing = {}, std::uint64_t seed = 0) {
  detail::check_grid(sweep_grid, reads);
  const auto t0 = std::chrono::steady_clock::now();
  auto ref = distribution_from_samples(reference.sample_batch(H, reads, derive_seed(seed, 0)), reference.name(),
                                       derive_seed(seed, 0));
  const double measured = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count() / reads;
  std::vector<double> sweep_times;
  auto cmp = detail::sweep_grid_distributions(H, base, sweep_grid, reads, seed, timing, sweep_times);
  return ttt_from_distributions(ref, timing.reference_sample_time.value_or(measured), cmp, sweep_times, q, timing);
}

/// Reference given as a recorded distribution (e.g. a hardware trace), timed
/// at timing.anneal_time per sample.
inline TTTReport ttt_compare(const StandardIsing& H, const EnergyDistribution& reference, const SaConfig& base,
                             const std::vector<int>& sweep_grid, int reads = 1000, double q = 10.0,
                             const TimingModel& timing = {}, std::uint64_t seed = 0) {
  detail::check_grid(sweep_grid, reads);
  std::vector<double> sweep_times;
  auto cmp = detail::sweep_grid_distributions(H, base, sweep_grid, reads, seed, timing, sweep_times);
  return ttt_from_distributions(reference, timing.reference_sample_time.value_or(timing.anneal_time), cmp,
                                sweep_times, q, timing);
}

// ---------------------------------------------------------------------------
// Averaging over the Hamiltonians met during a search

/// Both hyperoctant Hamiltonians of recorded iteration `iter`.
inline std::vector<StandardIsing> replay_hamiltonians(const LinearSystem& sys, const SearchTrace& trace, int iter) {
  if (trace.method != PollMethod::Hyperoctant) throw InvalidArgument("replay: only hyperoctant runs can be replayed");
  if (iter < 1 || iter > trace.iterations()) throw InvalidArgument("replay: iteration out of range");
  const auto& rec = trace.records[static_cast<std::size_t>(iter)];
  if (!rec.center || !rec.first_step_best)
    throw InvalidArgument("replay: trace was recorded without iterates");
  const auto [first, second] = hyperoctant_frames(sys, *rec.center, rec.alpha, *rec.first_step_best);
  return {to_standard(map_functional(sys, first, trace.functional)),
          to_standard(map_functional(sys, second, trace.functional))};
}

/// Iterations drawn uniformly without replacement; all of them when the run
/// has fewer than `count`. Returned in increasing order.
inline std::vector<int> select_iterations(int available, int count, std::uint64_t seed) {
  if (count < 1) throw InvalidArgument("select_iterations: count must be >= 1");
  std::vector<int> all(static_cast<std::size_t>(std::max(available, 0)));
  std::iota(all.begin(), all.end(), 1);
  if (available <= count) return all;
  std::mt19937_64 rng(seed);
  std::shuffle(all.begin(), all.end(), rng);
  all.resize(static_cast<std::size_t>(count));
  std::sort(all.begin(), all.end());
  return all;
}

struct Spread {
  double mean = 0.0;
  double stddev = 0.0;
  double min = 0.0;
  double max = 0.0;
  std::size_t count = 0;
};

inline Spread spread(const std::vector<double>& v) {
  Spread s;
  s.count = v.size();
  if (v.empty()) return s;
  s.mean = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
  double ss = 0.0;
  for (double x : v) ss += (x - s.mean) * (x - s.mean);
  s.stddev = v.size() > 1 ? std::sqrt(ss / static_cast<double>(v.size() - 1)) : 0.0;
  auto [lo, hi] = std::minmax_element(v.begin(), v.end());
  s.min = *lo;
  s.max = *hi;
  return s;
}

struct BatchTTTReport {
  std::vector<int> iterations;
  std::vector<TTTReport> reports;  // hamiltonians_per_iteration per selected iteration
  Spread reference_ttt;
  Spread best_ttt;
  Spread ratio;
  std::size_t infinite = 0;  // reports with no finite comparison TTT
};

inline BatchTTTReport aggregate(std::vector<int> iterations, std::vector<TTTReport> reports) {
  BatchTTTReport out;
  out.iterations = std::move(iterations);
  out.reports = std::move(reports);
  std::vector<double> ref, best, ratio;
  for (const auto& r : out.reports) {
    if (r.reference.ttt) ref.push_back(*r.reference.ttt);
    if (const auto* b = r.best_entry()) best.push_back(*b->ttt);
    else ++out.infinite;
    if (auto x = r.ratio()) ratio.push_back(*x);
  }
  out.reference_ttt = spread(ref);
  out.best_ttt = spread(best);
  out.ratio = spread(ratio);
  return out;
}

/// Re-materialises the Hamiltonians of `iteration_count` randomly chosen
/// iterations of a recorded hyperoctant run and scores each one.
inline BatchTTTReport batch_ttt_over_iterations(const LinearSystem& sys, const SearchTrace& trace,
                                                int iteration_count, int hamiltonians_per_iteration,
                                                Sampler& reference, const SaConfig& base,
                                                const std::vector<int>& sweep_grid, int reads = 1000,
                                                double q = 10.0, const TimingModel& timing = {},
                                                std::uint64_t seed = 0) {
  if (hamiltonians_per_iteration < 1 || hamiltonians_per_iteration > 2)
    throw InvalidArgument("batch_ttt: a hyperoctant iteration has one or two Hamiltonians");
  detail::check_grid(sweep_grid, reads);
  const auto iters = select_iterations(trace.iterations(), iteration_count, seed);
  std::vector<TTTReport> reports;
  for (int it : iters) {
    const auto hs = replay_hamiltonians(sys, trace, it);
    for (int k = 0; k < hamiltonians_per_iteration; ++k)
      reports.push_back(ttt_compare(hs[static_cast<std::size_t>(k)], reference, base, sweep_grid, reads, q, timing,
                                    derive_seed(seed, static_cast<std::uint64_t>(2 * it + k))));
  }
  return aggregate(iters, std::move(reports));
}

// ---------------------------------------------------------------------------
// Serialization

namespace detail {
inline nlohmann::json opt_json(const std::optional<double>& v) { return v ? nlohmann::json(*v) : nlohmann::json(nullptr); }
}  // namespace detail

inline nlohmann::json entry_to_json(const TTTEntry& e) {
  nlohmann::json j = {{"label", e.label}, {"p_hat", e.p_hat}, {"sample_time_s", e.sample_time}};
  j["sweeps"] = e.sweeps ? nlohmann::json(*e.sweeps) : nlohmann::json(nullptr);
  j["stt"] = detail::opt_json(e.stt);
  j["ttt_s"] = detail::opt_json(e.ttt);
  return j;
}

inline nlohmann::json report_to_json(const TTTReport& r) {
  nlohmann::json j = {{"q", r.q}, {"target", r.target}, {"reads", r.reads}, {"reference", entry_to_json(r.reference)}};
  j["grid"] = nlohmann::json::array();
  for (const auto& e : r.grid) j["grid"].push_back(entry_to_json(e));
  j["best_sweeps"] = r.best ? nlohmann::json(*r.grid[*r.best].sweeps) : nlohmann::json(nullptr);
  j["best_ttt_s"] = r.best ? nlohmann::json(*r.grid[*r.best].ttt) : nlohmann::json(nullptr);
  j["ratio"] = detail::opt_json(r.ratio());
  return j;
}

inline nlohmann::json spread_to_json(const Spread& s) {
  return {{"mean", s.mean}, {"stddev", s.stddev}, {"min", s.min}, {"max", s.max}, {"count", s.count}};
}

inline nlohmann::json report_to_json(const BatchTTTReport& b) {
  nlohmann::json j = {{"iterations", b.iterations},
                      {"reference_ttt_s", spread_to_json(b.reference_ttt)},
                      {"best_ttt_s", spread_to_json(b.best_ttt)},
                      {"ratio", spread_to_json(b.ratio)},
                      {"infinite", b.infinite}};
  j["reports"] = nlohmann::json::array();
  for (const auto& r : b.reports) j["reports"].push_back(report_to_json(r));
  return j;
}

/// One row per sweep count: sweeps,p_hat,stt,sample_time_s,ttt_s (inf when p_hat = 0).
inline void write_ttt_csv(std::ostream& out, const TTTReport& r) {
  out << "sweeps,p_hat,stt,sample_time_s,ttt_s\n";
  out.precision(17);
  for (const auto& e : r.grid) {
    out << e.sweeps.value_or(0) << ',' << e.p_hat << ',';
    if (e.stt) out << *e.stt; else out << "inf";
    out << ',' << e.sample_time << ',';
    if (e.ttt) out << *e.ttt; else out << "inf";
    out << '\n';
  }
}

}  // namespace feq
