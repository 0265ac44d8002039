#pragma once

// Maps quadratic functionals around an iterate to (modified) Ising
// Hamiltonians over the non-Dirichlet dofs, and decodes spin vectors back.
//
// With u_next = u + shift + alpha * q (q restricted to active dofs):
//   energy functional F:  E(q) = q^T J q + q^T h + trace(S) + c  ==  F(u_next)
//   least squares     G2: E(q)                                   ==  ||A u_next - b||^2

#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "feq/linear_system.hpp"

namespace feq {

using Spin = std::int8_t;
using Spins = std::vector<Spin>;

/// E(q) = q^T J q + q^T h + q^T diag(S) q + c, J hollow.
struct ModifiedIsing {
  DenseMatrix J;
  Vector h;
  Vector S;
  double c = 0.0;

  Index size() const { return h.size(); }
};

/// E~(q) = q^T J q + q^T h with J strictly upper triangular. `offset` is the
/// constant trace(S) + c dropped by the reduction, kept so energies of the
/// originating functional can be recovered.
struct StandardIsing {
  DenseMatrix J;
  Vector h;
  double offset = 0.0;

  Index size() const { return h.size(); }
};

struct SearchFrame {
  Vector u;      // current iterate, Dirichlet entries equal u_g
  Vector shift;  // neighbourhood translation, zero on Dirichlet entries
  double alpha = 0.0;
  std::vector<bool> dirichlet;  // diagonal of the boundary selector
  std::vector<Index> active;    // spin k drives global dof active[k]

  Index spin_count() const { return static_cast<Index>(active.size()); }
};

enum class NestedGrid { D3, D4 };

/// Two polls sharing the iterate: u_next = u + a1 q1 + a2 q2, with a2 = a1 for
/// the 3^n grid and a2 = a1/2 for the 4^n grid.
struct NestedFrame {
  SearchFrame first;
  SearchFrame second;
  NestedGrid grid = NestedGrid::D4;

  void validate() const {
    if (first.active != second.active || first.u.size() != second.u.size())
      throw InvalidArgument("nested frames must share the same dofs");
    if (first.u != second.u) throw InvalidArgument("nested frames must share the iterate");
    if (!first.shift.isZero(0.0) || !second.shift.isZero(0.0))
      throw InvalidArgument("nested frames require zero translations");
    const double expected = grid == NestedGrid::D3 ? first.alpha : 0.5 * first.alpha;
    if (std::abs(second.alpha - expected) > 1e-12 * std::abs(expected))
      throw InvalidArgument("nested level scales do not match the requested grid");
  }
};

inline SearchFrame build_frame(const LinearSystem& sys, const Vector& u, double alpha, const Vector& shift) {
  const Index n = sys.size();
  if (!(alpha > 0.0) || !std::isfinite(alpha)) throw InvalidArgument("build_frame: alpha must be positive");
  if (u.size() != n || shift.size() != n) throw InvalidArgument("build_frame: dimension mismatch");
  SearchFrame f;
  f.u = u;
  f.shift = shift;
  f.alpha = alpha;
  f.dirichlet = sys.dirichlet_mask();
  for (const auto& [node, value] : sys.boundary.dirichlet) {
    if (std::abs(u[node] - value) > 1e-12)
      throw InvalidArgument("build_frame: iterate violates dirichlet value at node " + std::to_string(node));
    if (shift[node] != 0.0) throw InvalidArgument("build_frame: translation must vanish on dirichlet nodes");
  }
  f.active = sys.active_dofs();
  return f;
}

inline SearchFrame build_frame(const LinearSystem& sys, const Vector& u, double alpha) {
  return build_frame(sys, u, alpha, Vector::Zero(sys.size()));
}

inline NestedFrame build_nested_frame(const LinearSystem& sys, const Vector& u, double alpha, NestedGrid grid) {
  NestedFrame nf;
  nf.first = build_frame(sys, u, alpha);
  nf.second = build_frame(sys, u, grid == NestedGrid::D3 ? alpha : 0.5 * alpha);
  nf.grid = grid;
  return nf;
}

/// u + shift + alpha * q on the active dofs; Dirichlet entries untouched.
inline Vector decode(const SearchFrame& frame, std::span<const Spin> q) {
  if (static_cast<Index>(q.size()) != frame.spin_count())
    throw InvalidArgument("decode: spin vector has wrong length");
  Vector out = frame.u;
  for (std::size_t k = 0; k < q.size(); ++k) {
    const Index dof = frame.active[k];
    out[dof] = frame.u[dof] + frame.shift[dof] + frame.alpha * static_cast<double>(q[k]);
  }
  return out;
}

/// Stacked spins (q1, q2) of length 2n.
inline Vector decode(const NestedFrame& frame, std::span<const Spin> q) {
  const auto n = static_cast<std::size_t>(frame.first.spin_count());
  if (q.size() != 2 * n) throw InvalidArgument("decode: nested spin vector has wrong length");
  Vector out = frame.first.u;
  for (std::size_t k = 0; k < n; ++k) {
    const Index dof = frame.first.active[k];
    out[dof] += frame.first.alpha * static_cast<double>(q[k]) + frame.second.alpha * static_cast<double>(q[n + k]);
  }
  return out;
}

namespace detail {

inline ModifiedIsing from_quadratic_form(DenseMatrix P, Vector h, double c) {
  ModifiedIsing m;
  m.S = P.diagonal();
  P.diagonal().setZero();
  m.J = std::move(P);
  m.h = std::move(h);
  m.c = c;
  return m;
}

inline Vector gather(const Vector& v, const std::vector<Index>& idx) {
  Vector out(static_cast<Index>(idx.size()));
  for (std::size_t k = 0; k < idx.size(); ++k) out[static_cast<Index>(k)] = v[idx[k]];
  return out;
}

inline DenseMatrix normal_block(const SparseMatrix& A, const std::vector<Index>& active) {
  SparseMatrix AtA = SparseMatrix(A.transpose()) * A;
  return dense_block(AtA, active, active);
}

}  // namespace detail

/// Energy functional F for SPD systems.
inline ModifiedIsing map_spd(const LinearSystem& sys, const SearchFrame& frame) {
  if (!sys.spd) throw InvalidArgument("map_spd: system is not SPD; use map_lsq");
  const Vector w = frame.u + frame.shift;
  const Vector Aw = sys.A * w;
  const Vector r = Aw - sys.b;
  const double a = frame.alpha;
  DenseMatrix P = (0.5 * a * a) * dense_block(sys.A, frame.active, frame.active);
  return detail::from_quadratic_form(std::move(P), a * detail::gather(r, frame.active), w.dot(0.5 * Aw - sys.b));
}

/// Squared residual ||A u - b||^2; any square A.
inline ModifiedIsing map_lsq(const LinearSystem& sys, const SearchFrame& frame) {
  const Vector w = frame.u + frame.shift;
  const Vector r = sys.A * w - sys.b;
  const Vector Atr = sys.A.transpose() * r;
  const double a = frame.alpha;
  DenseMatrix P = (a * a) * detail::normal_block(sys.A, frame.active);
  return detail::from_quadratic_form(std::move(P), (2.0 * a) * detail::gather(Atr, frame.active), r.squaredNorm());
}

inline ModifiedIsing map_functional(const LinearSystem& sys, const SearchFrame& frame, Functional which) {
  return which == Functional::Energy ? map_spd(sys, frame) : map_lsq(sys, frame);
}

/// 2n-spin Hamiltonian over (q1, q2). The quadratic form is block lower
/// triangular: [[P11, 0], [P21, P22]] where P21 carries the full cross-level
/// coupling.
inline ModifiedIsing nested_compose(const LinearSystem& sys, const NestedFrame& frame, Functional which) {
  frame.validate();
  const SearchFrame& f1 = frame.first;
  const Index n = f1.spin_count();
  const double a1 = f1.alpha, a2 = frame.second.alpha;
  const Vector& u = f1.u;
  const Vector r = sys.A * u - sys.b;

  DenseMatrix base;
  Vector grad;
  double c = 0.0;
  double quad = 0.0, cross = 0.0, lin = 0.0;
  if (which == Functional::Energy) {
    if (!sys.spd) throw InvalidArgument("nested_compose: energy functional needs an SPD system");
    base = dense_block(sys.A, f1.active, f1.active);
    grad = detail::gather(r, f1.active);
    c = functional_eval(sys, u, Functional::Energy);
    quad = 0.5, cross = 1.0, lin = 1.0;
  } else {
    base = detail::normal_block(sys.A, f1.active);
    grad = detail::gather(Vector(sys.A.transpose() * r), f1.active);
    c = r.squaredNorm();
    quad = 1.0, cross = 2.0, lin = 2.0;
  }
  DenseMatrix P = DenseMatrix::Zero(2 * n, 2 * n);
  P.topLeftCorner(n, n) = (quad * a1 * a1) * base;
  P.bottomRightCorner(n, n) = (quad * a2 * a2) * base;
  P.bottomLeftCorner(n, n) = (cross * a1 * a2) * base;
  Vector h(2 * n);
  h.head(n) = (lin * a1) * grad;
  h.tail(n) = (lin * a2) * grad;

  ModifiedIsing m;
  m.S = P.diagonal();
  P.topLeftCorner(n, n).diagonal().setZero();
  P.bottomRightCorner(n, n).diagonal().setZero();
  m.J = std::move(P);
  m.h = std::move(h);
  m.c = c;
  return m;
}

inline double energy(const ModifiedIsing& m, std::span<const Spin> q) {
  if (static_cast<Index>(q.size()) != m.size()) throw InvalidArgument("energy: spin vector has wrong length");
  const Index n = m.size();
  double e = m.S.sum() + m.c;
  for (Index i = 0; i < n; ++i) {
    const double qi = q[static_cast<std::size_t>(i)];
    double row = 0.0;
    for (Index j = 0; j < n; ++j) row += m.J(i, j) * static_cast<double>(q[static_cast<std::size_t>(j)]);
    e += qi * (row + m.h[i]);
  }
  return e;
}

/// J~ = upper(J) + lower(J)^T, h~ = h, offset = trace(S) + c.
inline StandardIsing to_standard(const ModifiedIsing& m) {
  const Index n = m.size();
  StandardIsing s;
  s.J = DenseMatrix::Zero(n, n);
  for (Index i = 0; i < n; ++i)
    for (Index j = i + 1; j < n; ++j) s.J(i, j) = m.J(i, j) + m.J(j, i);
  s.h = m.h;
  s.offset = m.S.sum() + m.c;
  return s;
}

/// E~(q), without the offset.
inline double ising_energy(const StandardIsing& H, std::span<const Spin> q) {
  if (static_cast<Index>(q.size()) != H.size()) throw InvalidArgument("ising_energy: spin vector has wrong length");
  const Index n = H.size();
  double e = 0.0;
  for (Index i = 0; i < n; ++i) {
    const double qi = q[static_cast<std::size_t>(i)];
    double row = H.h[i];
    for (Index j = i + 1; j < n; ++j) row += H.J(i, j) * static_cast<double>(q[static_cast<std::size_t>(j)]);
    e += qi * row;
  }
  return e;
}

/// E~(q) + offset, i.e. the value of the originating functional.
inline double total_energy(const StandardIsing& H, std::span<const Spin> q) { return ising_energy(H, q) + H.offset; }

/// Linear rescale so every bias and coupling lies in [-1, 1]. Energies of the
/// scaled problem times `factor` give the original energies.
struct RescaledIsing {
  StandardIsing scaled;
  double factor = 1.0;
};

inline RescaledIsing rescale_to_unit_range(const StandardIsing& H) {
  double m = 0.0;
  if (H.size() > 0) m = std::max(H.h.cwiseAbs().maxCoeff(), H.J.cwiseAbs().maxCoeff());
  RescaledIsing out{H, 1.0};
  if (m > 0.0) {
    out.factor = m;
    out.scaled.J /= m;
    out.scaled.h /= m;
    out.scaled.offset /= m;
  }
  return out;
}

/// {linear: {"i": bias}, quadratic: {"i,j": coupling}, offset}
inline nlohmann::json ising_to_json(const StandardIsing& H) {
  nlohmann::json j;
  j["linear"] = nlohmann::json::object();
  j["quadratic"] = nlohmann::json::object();
  for (Index i = 0; i < H.size(); ++i) j["linear"][std::to_string(i)] = H.h[i];
  for (Index i = 0; i < H.size(); ++i)
    for (Index k = i + 1; k < H.size(); ++k)
      if (H.J(i, k) != 0.0) j["quadratic"][std::to_string(i) + "," + std::to_string(k)] = H.J(i, k);
  j["offset"] = H.offset;
  return j;
}

inline StandardIsing ising_from_json(const nlohmann::json& j) {
  try {
    Index n = 0;
    for (const auto& [key, value] : j.at("linear").items()) n = std::max<Index>(n, std::stoll(key) + 1);
    std::vector<std::pair<std::pair<Index, Index>, double>> quad;
    for (const auto& [key, value] : j.at("quadratic").items()) {
      const auto comma = key.find(',');
      if (comma == std::string::npos) throw InvalidArgument("quadratic key must be \"i,j\"");
      Index a = std::stoll(key.substr(0, comma)), b = std::stoll(key.substr(comma + 1));
      if (a == b || a < 0 || b < 0) throw InvalidArgument("invalid quadratic key " + key);
      if (a > b) std::swap(a, b);
      n = std::max(n, b + 1);
      quad.push_back({{a, b}, value.get<double>()});
    }
    StandardIsing H;
    H.J = DenseMatrix::Zero(n, n);
    H.h = Vector::Zero(n);
    for (const auto& [key, value] : j.at("linear").items()) {
      const Index i = std::stoll(key);
      if (i < 0) throw InvalidArgument("negative linear index");
      H.h[i] = value.get<double>();
    }
    for (const auto& [ij, v] : quad) H.J(ij.first, ij.second) += v;
    H.offset = j.value("offset", 0.0);
    return H;
  } catch (const nlohmann::json::exception& e) {
    throw InvalidArgument(std::string("malformed Ising document: ") + e.what());
  } catch (const std::logic_error& e) {  // stoll
    throw InvalidArgument(std::string("malformed Ising index: ") + e.what());
  }
}

}  // namespace feq
