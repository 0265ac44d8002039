#pragma once

// Positive spanning sets realised by spin registers and their cosine
// measures
//   cm(D) = min_{v != 0} max_{0 != d in D} v.d / (|v| |d|).
//
// Vector k of a radix-d set is the base-d expansion of k (first component
// most significant) shifted to be centred: D2 -> {-1, +1}, D3 -> {-1, 0, +1},
// D4 -> {-1.5, -0.5, 0.5, 1.5} (the grid polled by nested 4^n search).
// D4Literal keeps the uncentred digits minus one, {-1, 0, 1, 2}.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <optional>
#include <ostream>
#include <random>
#include <string>
#include <vector>

#include <json.hpp>

#include "feq/linear_system.hpp"

namespace feq {

enum class SetKind { Dplus, D2, D3, D4, D4Literal, Custom };

inline const char* to_string(SetKind k) {
  switch (k) {
    case SetKind::Dplus: return "dplus";
    case SetKind::D2: return "d2";
    case SetKind::D3: return "d3";
    case SetKind::D4: return "d4";
    case SetKind::D4Literal: return "d4-literal";
    case SetKind::Custom: return "custom";
  }
  return "?";
}

inline SetKind set_kind_from_string(const std::string& s) {
  if (s == "dplus" || s == "d+") return SetKind::Dplus;
  if (s == "d2") return SetKind::D2;
  if (s == "d3") return SetKind::D3;
  if (s == "d4") return SetKind::D4;
  if (s == "d4-literal") return SetKind::D4Literal;
  throw InvalidArgument("unknown spanning set kind '" + s + "'");
}

struct SpanningSet {
  Index dim = 0;
  std::vector<Vector> vectors;
  SetKind kind = SetKind::Custom;
};

/// Radix sets are capped below 2^24 vectors.
inline constexpr std::uint64_t kMaxSetSize = (std::uint64_t{1} << 24) - 1;

inline SpanningSet generate(SetKind kind, Index dim) {
  if (dim < 1) throw InvalidArgument("generate: dimension must be >= 1");
  SpanningSet set;
  set.dim = dim;
  set.kind = kind;
  if (kind == SetKind::Dplus) {
    for (Index j = -dim; j <= dim; ++j) {
      if (j == 0) continue;
      Vector d = Vector::Zero(dim);
      d[std::abs(j) - 1] = j > 0 ? 1.0 : -1.0;
      set.vectors.push_back(std::move(d));
    }
    return set;
  }
  std::uint64_t radix = 0;
  double shift = 0.0, scale = 1.0;
  switch (kind) {
    case SetKind::D2: radix = 2, shift = 0.5, scale = 2.0; break;
    case SetKind::D3: radix = 3, shift = 1.0; break;
    case SetKind::D4: radix = 4, shift = 1.5; break;
    case SetKind::D4Literal: radix = 4, shift = 1.0; break;
    default: throw InvalidArgument("generate: custom sets cannot be generated");
  }
  std::uint64_t count = 1;
  for (Index l = 0; l < dim; ++l) {
    if (count > kMaxSetSize / radix) throw InvalidArgument("generate: set size exceeds the 2^24 cap");
    count *= radix;
  }
  set.vectors.reserve(count);
  for (std::uint64_t k = 0; k < count; ++k) {
    Vector d(dim);
    std::uint64_t rest = k;
    for (Index l = dim - 1; l >= 0; --l) {
      d[l] = scale * (static_cast<double>(rest % radix) - shift);
      rest /= radix;
    }
    set.vectors.push_back(std::move(d));
  }
  return set;
}

/// Indices (a, b) into D2 with (d_a + d_b)/2 = sign(j) e_|j| (j = +-1..+-N).
inline std::pair<std::uint64_t, std::uint64_t> d2_coordinate_pair(Index j, Index dim) {
  if (j == 0 || std::abs(j) > dim) throw InvalidArgument("d2_coordinate_pair: j out of range");
  const std::uint64_t all = (std::uint64_t{1} << dim) - 1;
  const std::uint64_t bit = std::uint64_t{1} << (dim - std::abs(j));
  if (j > 0) return {bit, all};
  return {all - bit, 0};
}

// ---------------------------------------------------------------------------
// Positive spanning test

namespace detail {

/// Lawson-Hanson non-negative least squares  min |E x - f|, x >= 0.
inline Vector nnls(const DenseMatrix& E, const Vector& f, double tol = 1e-12, int max_outer = 0) {
  const Index K = E.cols();
  if (max_outer <= 0) max_outer = static_cast<int>(3 * E.rows() + 30);
  Vector x = Vector::Zero(K);
  std::vector<bool> passive(static_cast<std::size_t>(K), false);
  Vector w = E.transpose() * f;
  for (int outer = 0; outer < max_outer; ++outer) {
    Index j = -1;
    double wmax = tol;
    for (Index k = 0; k < K; ++k)
      if (!passive[static_cast<std::size_t>(k)] && w[k] > wmax) wmax = w[k], j = k;
    if (j < 0) break;
    passive[static_cast<std::size_t>(j)] = true;
    for (int inner = 0; inner < 10 * max_outer; ++inner) {
      std::vector<Index> P;
      for (Index k = 0; k < K; ++k)
        if (passive[static_cast<std::size_t>(k)]) P.push_back(k);
      DenseMatrix EP(E.rows(), static_cast<Index>(P.size()));
      for (std::size_t c = 0; c < P.size(); ++c) EP.col(static_cast<Index>(c)) = E.col(P[c]);
      const Vector zP = EP.colPivHouseholderQr().solve(f);
      bool feasible = true;
      for (Index c = 0; c < zP.size(); ++c) feasible = feasible && zP[c] > 0.0;
      if (feasible) {
        x.setZero();
        for (std::size_t c = 0; c < P.size(); ++c) x[P[c]] = zP[static_cast<Index>(c)];
        break;
      }
      double step = 1.0;
      for (std::size_t c = 0; c < P.size(); ++c) {
        const double z = zP[static_cast<Index>(c)];
        if (z <= 0.0) step = std::min(step, x[P[c]] / (x[P[c]] - z));
      }
      for (std::size_t c = 0; c < P.size(); ++c) {
        x[P[c]] += step * (zP[static_cast<Index>(c)] - x[P[c]]);
        if (x[P[c]] <= 1e-15) {
          x[P[c]] = 0.0;
          passive[static_cast<std::size_t>(P[c])] = false;
        }
      }
    }
    w = E.transpose() * (f - E * x);
  }
  return x;
}

}  // namespace detail

struct SpanningCertificate {
  bool spanning = false;
  // coefficients[t] reproduces target t: +e_1..+e_N then -e_1..-e_N.
  std::vector<Vector> coefficients;
  std::vector<double> residuals;
};

/// D positively spans R^N iff every +-e_i is a non-negative combination of D.
inline SpanningCertificate is_positive_spanning(const SpanningSet& set) {
  const Index N = set.dim;
  if (N < 1 || N > 12) throw InvalidArgument("is_positive_spanning: dimension must be in 1..12");
  DenseMatrix E(N, static_cast<Index>(set.vectors.size()));
  for (std::size_t k = 0; k < set.vectors.size(); ++k) {
    if (set.vectors[k].size() != N) throw InvalidArgument("is_positive_spanning: vector of wrong dimension");
    E.col(static_cast<Index>(k)) = set.vectors[k];
  }
  SpanningCertificate cert;
  cert.spanning = true;
  for (int sign : {1, -1})
    for (Index i = 0; i < N; ++i) {
      Vector target = Vector::Zero(N);
      target[i] = sign;
      Vector x = set.vectors.empty() ? Vector{} : detail::nnls(E, target);
      const double res = set.vectors.empty() ? 1.0 : (E * x - target).norm();
      cert.spanning = cert.spanning && res <= 1e-9;
      cert.coefficients.push_back(std::move(x));
      cert.residuals.push_back(res);
    }
  return cert;
}

// ---------------------------------------------------------------------------
// Cosine measure

/// 1 / sqrt(sum_j (sqrt j - sqrt(j-1))^2)
inline double cm_d3_closed_form(Index N) {
  if (N < 1) throw InvalidArgument("cm_d3_closed_form: N must be >= 1");
  double sum = 0.0;
  for (Index j = 1; j <= N; ++j) {
    const double s = std::sqrt(static_cast<double>(j)) + std::sqrt(static_cast<double>(j - 1));
    sum += 1.0 / (s * s);
  }
  return 1.0 / std::sqrt(sum);
}

/// First N in [1, n_max] where cm_d3_closed_form(N) < 1/sqrt(ln N + 1), if any.
inline std::optional<Index> d3_log_bound_violation(Index n_max) {
  double sum = 0.0;
  for (Index j = 1; j <= n_max; ++j) {
    const double s = std::sqrt(static_cast<double>(j)) + std::sqrt(static_cast<double>(j - 1));
    sum += 1.0 / (s * s);
    if (1.0 / std::sqrt(sum) < 1.0 / std::sqrt(std::log(static_cast<double>(j)) + 1.0)) return j;
  }
  return std::nullopt;
}

/// Unit vector with equal angles to the N vectors of the D3 cone containing
/// v: sort |v| descending, put sign(v) * (sqrt i - sqrt(i-1)) at rank i.
inline Vector minimizer_witness_d3(const Vector& v) {
  const Index N = v.size();
  if (N == 0 || v.isZero(0.0)) throw InvalidArgument("minimizer_witness_d3: v must be nonzero");
  std::vector<Index> order(static_cast<std::size_t>(N));
  std::iota(order.begin(), order.end(), Index{0});
  std::stable_sort(order.begin(), order.end(), [&](Index a, Index b) { return std::abs(v[a]) > std::abs(v[b]); });
  Vector r(N);
  for (Index rank = 0; rank < N; ++rank) {
    const Index k = order[static_cast<std::size_t>(rank)];
    const double mag = std::sqrt(static_cast<double>(rank + 1)) - std::sqrt(static_cast<double>(rank));
    r[k] = v[k] < 0.0 ? -mag : mag;
  }
  return r.normalized();
}

/// Nonzero set vectors, normalised, as rows.
inline DenseMatrix unit_directions(const SpanningSet& set) {
  std::vector<Index> keep;
  for (std::size_t k = 0; k < set.vectors.size(); ++k)
    if (set.vectors[k].norm() > 0.0) keep.push_back(static_cast<Index>(k));
  DenseMatrix D(static_cast<Index>(keep.size()), set.dim);
  for (std::size_t r = 0; r < keep.size(); ++r)
    D.row(static_cast<Index>(r)) = set.vectors[static_cast<std::size_t>(keep[r])].normalized().transpose();
  return D;
}

/// max over nonzero d of v.d / (|v| |d|)
inline double inner_max(const DenseMatrix& directions, const Vector& v) {
  return (directions * v).maxCoeff() / v.norm();
}

struct CosineMeasureReport {
  Index dim = 0;
  SetKind kind = SetKind::Custom;
  double estimate = 0.0;
  std::optional<double> closed_form;
  Vector witness;                       // minimising direction found
  std::vector<double> witness_values;   // inner max at the known theoretical minimisers
  int restarts = 0;
  double tolerance = 0.0;

  bool matches_closed_form(double tol) const { return !closed_form || std::abs(estimate - *closed_form) <= tol; }
};

namespace detail {

/// Log-sum-exp smoothed max, continued towards the exact max; projected
/// gradient with backtracking on the unit sphere.
inline Vector refine_minimax(const DenseMatrix& D, Vector v, double final_tau) {
  v.normalize();
  auto smooth = [&](const Vector& x, double tau, Vector* grad) {
    const Vector s = D * x;
    const double m = s.maxCoeff();
    const Vector w = ((s.array() - m) / tau).exp().matrix();
    const double z = w.sum();
    if (grad) *grad = D.transpose() * (w / z);
    return m + tau * std::log(z);
  };
  double step = 0.1;
  for (double tau = 0.1; tau >= final_tau * 0.999; tau *= 0.3) {
    for (int it = 0; it < 80; ++it) {
      Vector g;
      const double f0 = smooth(v, tau, &g);
      g -= g.dot(v) * v;
      if (g.norm() < 1e-14) break;
      bool moved = false;
      for (int bt = 0; bt < 40; ++bt) {
        Vector trial = (v - step * g).normalized();
        if (smooth(trial, tau, nullptr) < f0) {
          v = std::move(trial);
          step *= 1.5;
          moved = true;
          break;
        }
        step *= 0.5;
      }
      if (!moved) break;
    }
  }
  return v;
}

}  // namespace detail

inline std::optional<double> cosine_closed_form(SetKind kind, Index N) {
  switch (kind) {
    case SetKind::Dplus:
    case SetKind::D2: return 1.0 / std::sqrt(static_cast<double>(N));
    case SetKind::D3: return cm_d3_closed_form(N);
    default: return std::nullopt;
  }
}

/// Multi-start estimate of cm(D). Starts: +-e_i, the diagonals, the D3
/// equal-angle witnesses for random cones, and `restarts` random directions;
/// every start is refined, and the reported value is the exact inner max at
/// the best refined point. `tol` is the final smoothing temperature.
inline CosineMeasureReport cosine_measure(const SpanningSet& set, int restarts = 1000, double tol = 1e-5,
                                          std::uint64_t seed = 12345) {
  const Index N = set.dim;
  const DenseMatrix D = unit_directions(set);
  if (D.rows() == 0) throw InvalidArgument("cosine_measure: set has no nonzero vectors");
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> gauss;
  auto random_direction = [&] {
    Vector v(N);
    for (Index k = 0; k < N; ++k) v[k] = gauss(rng);
    return v.norm() > 0.0 ? Vector(v.normalized()) : Vector(Vector::Unit(N, 0));
  };

  std::vector<Vector> starts;
  std::vector<Vector> theory;
  for (Index i = 0; i < N; ++i)
    for (double s : {1.0, -1.0}) starts.push_back(s * Vector::Unit(N, i));
  starts.push_back(Vector::Ones(N).normalized());
  starts.push_back(-Vector::Ones(N).normalized());
  for (int k = 0; k < std::max(8, restarts / 10); ++k) starts.push_back(minimizer_witness_d3(random_direction()));
  for (int k = 0; k < restarts; ++k) starts.push_back(random_direction());

  if (set.kind == SetKind::Dplus || set.kind == SetKind::D2) {
    theory.push_back(Vector::Unit(N, 0));
  } else if (set.kind == SetKind::D3) {
    Vector v(N);
    for (Index k = 0; k < N; ++k) v[k] = static_cast<double>(N - k);
    theory.push_back(minimizer_witness_d3(v));
  }

  CosineMeasureReport rep;
  rep.dim = N;
  rep.kind = set.kind;
  rep.closed_form = set.kind == SetKind::Custom ? std::nullopt : cosine_closed_form(set.kind, N);
  rep.restarts = restarts;
  rep.tolerance = tol;
  rep.estimate = std::numeric_limits<double>::infinity();
  auto consider = [&](const Vector& v) {
    const double val = inner_max(D, v);
    if (val < rep.estimate) {
      rep.estimate = val;
      rep.witness = v.normalized();
    }
  };
  for (const auto& t : theory) {
    rep.witness_values.push_back(inner_max(D, t));
    consider(t);
  }
  for (const auto& s : starts) {
    consider(s);
    consider(detail::refine_minimax(D, s, tol));
  }
  return rep;
}

/// max |d| / min |d| over nonzero vectors.
inline double length_ratio(const SpanningSet& set) {
  double lo = std::numeric_limits<double>::infinity(), hi = 0.0;
  for (const auto& d : set.vectors) {
    const double n = d.norm();
    if (n == 0.0) continue;
    lo = std::min(lo, n);
    hi = std::max(hi, n);
  }
  return hi / lo;
}

inline nlohmann::json report_to_json(const CosineMeasureReport& r) {
  nlohmann::json j = {{"n", r.dim},
                      {"kind", to_string(r.kind)},
                      {"estimate", r.estimate},
                      {"witness", std::vector<double>(r.witness.data(), r.witness.data() + r.witness.size())},
                      {"witness_values", r.witness_values},
                      {"restarts", r.restarts},
                      {"tolerance", r.tolerance}};
  j["closed_form"] = r.closed_form ? nlohmann::json(*r.closed_form) : nlohmann::json(nullptr);
  return j;
}

inline void write_report_table(std::ostream& out, const CosineMeasureReport& r) {
  out.precision(8);
  out << "kind         " << to_string(r.kind) << '\n'
      << "N            " << r.dim << '\n'
      << "estimate     " << std::fixed << r.estimate << '\n';
  if (r.closed_form) out << "closed form  " << *r.closed_form << "  (diff " << std::scientific << r.estimate - *r.closed_form << ")\n";
  out << std::defaultfloat;
  for (double w : r.witness_values) out << "at witness   " << w << '\n';
  out << "restarts     " << r.restarts << '\n';
}

}  // namespace feq
