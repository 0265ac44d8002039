#pragma once

// Low-energy sample sources for a StandardIsing: Metropolis simulated
// annealing and an exhaustive oracle. Both implement Sampler so the search
// driver never knows which one it talks to.

#include <algorithm>
#include <bit>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <memory>
#include <numeric>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "feq/ising.hpp"

namespace feq {

struct Sample {
  Spins spins;
  double energy = 0.0;  // E~(spins) + offset
};

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

/// Seed for read j of a batch started with `seed`.
inline std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t j) {
  return splitmix64(seed ^ splitmix64(j + 0x632be59bd9b4e019ULL));
}

class Sampler {
 public:
  virtual ~Sampler() = default;

  /// Exactly `reads` samples; deterministic for a fixed seed.
  virtual std::vector<Sample> sample_batch(const StandardIsing& H, int reads, std::uint64_t seed) = 0;
  virtual std::string name() const = 0;
};

inline std::vector<Sample> sample_batch(Sampler& sampler, const StandardIsing& H, int reads, std::uint64_t seed) {
  if (reads < 1) throw InvalidArgument("sample_batch: need at least one read");
  return sampler.sample_batch(H, reads, seed);
}

// ---------------------------------------------------------------------------
// Simulated annealing

struct SaConfig {
  int sweeps = 1000;  // k_max
  // Geometric schedule; when unset T_hot is the largest local field bound and
  // T_cold = 1e-3 T_hot.
  std::optional<double> t_hot;
  std::optional<double> t_cold;
  std::uint64_t seed = 0;

  void validate() const {
    if (sweeps < 1) throw InvalidArgument("SaConfig: sweeps must be positive");
    if (t_hot && !(*t_hot > 0.0)) throw InvalidArgument("SaConfig: T_hot must be positive");
    if (t_cold && !(*t_cold > 0.0)) throw InvalidArgument("SaConfig: T_cold must be positive");
    if (t_hot && t_cold && *t_hot < *t_cold) throw InvalidArgument("SaConfig: T_hot < T_cold");
  }
};

namespace detail {

/// Symmetric sparse view of J~ for O(degree) field updates.
struct Adjacency {
  std::vector<std::size_t> start;
  std::vector<std::int64_t> neighbor;
  std::vector<double> weight;

  explicit Adjacency(const StandardIsing& H) {
    const Index n = H.size();
    std::vector<std::vector<std::pair<Index, double>>> rows(static_cast<std::size_t>(n));
    for (Index i = 0; i < n; ++i)
      for (Index j = i + 1; j < n; ++j)
        if (const double w = H.J(i, j); w != 0.0) {
          rows[static_cast<std::size_t>(i)].push_back({j, w});
          rows[static_cast<std::size_t>(j)].push_back({i, w});
        }
    start.push_back(0);
    for (const auto& r : rows) {
      for (const auto& [j, w] : r) {
        neighbor.push_back(j);
        weight.push_back(w);
      }
      start.push_back(neighbor.size());
    }
  }
};

}  // namespace detail

/// max_i (|h_i| + sum_j |J~_ij| + |J~_ji|), or 1 for an empty Hamiltonian.
inline double default_hot_temperature(const StandardIsing& H) {
  double t = 0.0;
  for (Index i = 0; i < H.size(); ++i) {
    double local = std::abs(H.h[i]);
    for (Index j = 0; j < H.size(); ++j) local += std::abs(H.J(i, j)) + std::abs(H.J(j, i));
    t = std::max(t, local);
  }
  return t > 0.0 ? t : 1.0;
}

class SimulatedAnnealingSampler final : public Sampler {
 public:
  explicit SimulatedAnnealingSampler(SaConfig cfg = {}) : cfg_(cfg) { cfg_.validate(); }

  const SaConfig& config() const { return cfg_; }
  std::string name() const override { return "simulated_annealing"; }

  /// Mean wall time of a single sweep over the last batch, in seconds.
  double last_sweep_seconds() const { return last_sweep_seconds_; }

  std::vector<Sample> sample_batch(const StandardIsing& H, int reads, std::uint64_t seed) override {
    if (reads < 1) throw InvalidArgument("sample_batch: need at least one read");
    const detail::Adjacency adj(H);
    const double t_hot = cfg_.t_hot.value_or(default_hot_temperature(H));
    const double t_cold = cfg_.t_cold.value_or(1e-3 * t_hot);
    const std::vector<double> schedule = temperatures(t_hot, std::min(t_hot, t_cold));

    std::vector<Sample> out;
    out.reserve(static_cast<std::size_t>(reads));
    const auto t0 = std::chrono::steady_clock::now();
    for (int j = 0; j < reads; ++j) out.push_back(anneal(H, adj, schedule, derive_seed(seed, static_cast<std::uint64_t>(j))));
    const double elapsed = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    last_sweep_seconds_ = elapsed / (static_cast<double>(reads) * cfg_.sweeps);
    return out;
  }

  /// One Metropolis run (uniform random start) of `sweeps` sweeps.
  Sample anneal_once(const StandardIsing& H, std::uint64_t seed) const {
    const detail::Adjacency adj(H);
    const double t_hot = cfg_.t_hot.value_or(default_hot_temperature(H));
    const double t_cold = cfg_.t_cold.value_or(1e-3 * t_hot);
    return anneal(H, adj, temperatures(t_hot, std::min(t_hot, t_cold)), seed);
  }

 private:
  std::vector<double> temperatures(double t_hot, double t_cold) const {
    std::vector<double> t(static_cast<std::size_t>(cfg_.sweeps));
    const int k_max = cfg_.sweeps;
    for (int k = 0; k < k_max; ++k) {
      const double frac = k_max == 1 ? 1.0 : static_cast<double>(k) / (k_max - 1);
      t[static_cast<std::size_t>(k)] = t_hot * std::pow(t_cold / t_hot, frac);
    }
    return t;
  }

  Sample anneal(const StandardIsing& H, const detail::Adjacency& adj, const std::vector<double>& schedule,
                std::uint64_t seed) const {
    const auto n = static_cast<std::size_t>(H.size());
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    Spins q(n);
    for (auto& s : q) s = (rng() & 1ULL) ? Spin{1} : Spin{-1};
    std::vector<double> field(n);
    for (std::size_t i = 0; i < n; ++i) {
      double f = H.h[static_cast<Index>(i)];
      for (std::size_t k = adj.start[i]; k < adj.start[i + 1]; ++k)
        f += adj.weight[k] * q[static_cast<std::size_t>(adj.neighbor[k])];
      field[i] = f;
    }
    for (const double T : schedule) {
      for (std::size_t i = 0; i < n; ++i) {
        const double dE = -2.0 * q[i] * field[i];
        if (dE > 0.0 && std::exp(-dE / T) < unif(rng)) continue;
        q[i] = static_cast<Spin>(-q[i]);
        const double step = 2.0 * q[i];
        for (std::size_t k = adj.start[i]; k < adj.start[i + 1]; ++k)
          field[static_cast<std::size_t>(adj.neighbor[k])] += adj.weight[k] * step;
      }
    }
    Sample s;
    s.energy = total_energy(H, q);
    s.spins = std::move(q);
    return s;
  }

  SaConfig cfg_;
  double last_sweep_seconds_ = 0.0;
};

// ---------------------------------------------------------------------------
// Exhaustive enumeration

inline constexpr Index kMaxExhaustiveSpins = 24;

/// Spin vector of lexicographic rank `code` (spin 0 most significant, -1 < +1).
inline Spins spins_from_code(std::uint64_t code, Index n) {
  Spins q(static_cast<std::size_t>(n));
  for (Index k = 0; k < n; ++k) q[static_cast<std::size_t>(k)] = ((code >> (n - 1 - k)) & 1ULL) ? 1 : -1;
  return q;
}

namespace detail {

/// Energies E~ of all 2^n states indexed by lexicographic rank, via a Gray
/// code walk with periodic exact re-evaluation.
inline std::vector<double> all_energies(const StandardIsing& H) {
  const Index n = H.size();
  const std::uint64_t count = std::uint64_t{1} << n;
  std::vector<double> energies(count);
  if (n == 0) {
    energies[0] = 0.0;
    return energies;
  }
  const Adjacency adj(H);
  Spins q(static_cast<std::size_t>(n), -1);
  std::vector<double> field(static_cast<std::size_t>(n));
  auto refresh = [&] {
    for (std::size_t i = 0; i < q.size(); ++i) {
      double f = H.h[static_cast<Index>(i)];
      for (std::size_t k = adj.start[i]; k < adj.start[i + 1]; ++k)
        f += adj.weight[k] * q[static_cast<std::size_t>(adj.neighbor[k])];
      field[i] = f;
    }
  };
  refresh();
  double e = ising_energy(H, q);
  std::uint64_t code = 0;
  energies[0] = e;
  for (std::uint64_t step = 1; step < count; ++step) {
    const int bit = std::countr_zero(step);
    const auto i = static_cast<std::size_t>(n - 1 - bit);
    e += -2.0 * q[i] * field[i];
    q[i] = static_cast<Spin>(-q[i]);
    for (std::size_t k = adj.start[i]; k < adj.start[i + 1]; ++k)
      field[static_cast<std::size_t>(adj.neighbor[k])] += 2.0 * q[i] * adj.weight[k];
    code ^= std::uint64_t{1} << bit;
    if ((step & 1023U) == 0) {
      refresh();
      e = ising_energy(H, q);
    }
    energies[code] = e;
  }
  return energies;
}

}  // namespace detail

/// All 2^n states, ascending by energy, ties broken by lexicographic spin order.
inline std::vector<Sample> exhaustive(const StandardIsing& H) {
  const Index n = H.size();
  if (n > kMaxExhaustiveSpins) throw InvalidArgument("exhaustive: more than 24 spins");
  const std::uint64_t count = std::uint64_t{1} << n;
  std::vector<Sample> out;
  out.reserve(count);
  for (std::uint64_t code = 0; code < count; ++code) {
    Sample s;
    s.spins = spins_from_code(code, n);
    s.energy = total_energy(H, s.spins);
    out.push_back(std::move(s));
  }
  std::stable_sort(out.begin(), out.end(), [](const Sample& a, const Sample& b) { return a.energy < b.energy; });
  return out;
}

/// Oracle sampler: returns the `reads` lowest states (cycling when reads > 2^n).
class ExhaustiveSampler final : public Sampler {
 public:
  std::string name() const override { return "exhaustive"; }

  std::vector<Sample> sample_batch(const StandardIsing& H, int reads, std::uint64_t /*seed*/) override {
    if (reads < 1) throw InvalidArgument("sample_batch: need at least one read");
    const Index n = H.size();
    if (n > kMaxExhaustiveSpins) throw InvalidArgument("exhaustive sampler: more than 24 spins");
    const std::vector<double> energies = detail::all_energies(H);
    const std::size_t keep = std::min<std::size_t>(energies.size(), static_cast<std::size_t>(reads));
    std::vector<std::uint64_t> order(energies.size());
    std::iota(order.begin(), order.end(), std::uint64_t{0});
    std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(keep), order.end(),
                      [&](std::uint64_t a, std::uint64_t b) {
                        return energies[a] < energies[b] || (energies[a] == energies[b] && a < b);
                      });
    std::vector<Sample> out;
    out.reserve(static_cast<std::size_t>(reads));
    for (int j = 0; j < reads; ++j) {
      Sample s;
      s.spins = spins_from_code(order[static_cast<std::size_t>(j) % keep], n);
      s.energy = total_energy(H, s.spins);
      out.push_back(std::move(s));
    }
    return out;
  }
};

}  // namespace feq
