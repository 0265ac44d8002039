#pragma once

// Linear and bilinear finite element assembly for the benchmark problems:
// 1D Poisson, 2D Poisson on a structured quad grid, and the 1D wave equation
// with lumped mass.

#include <array>
#include <cmath>
#include <functional>
#include <numbers>
#include <string>
#include <vector>

#include "feq/linear_system.hpp"

namespace feq {

class Mesh1D {
 public:
  Mesh1D(double length, Index node_count) : length_(length), node_count_(node_count) {
    if (node_count < 2) throw InvalidArgument("Mesh1D needs at least 2 nodes");
    if (!(length > 0.0) || !std::isfinite(length)) throw InvalidArgument("Mesh1D length must be positive");
  }

  double length() const { return length_; }
  Index node_count() const { return node_count_; }
  Index element_count() const { return node_count_ - 1; }
  double spacing() const { return length_ / static_cast<double>(node_count_ - 1); }
  double x(Index node) const { return length_ * static_cast<double>(node) / static_cast<double>(node_count_ - 1); }

  Vector coordinates() const {
    Vector xs(node_count_);
    for (Index k = 0; k < node_count_; ++k) xs[k] = x(k);
    return xs;
  }

  /// Samples f at every node.
  Vector sample(const std::function<double(double)>& f) const {
    Vector out(node_count_);
    for (Index k = 0; k < node_count_; ++k) out[k] = f(x(k));
    return out;
  }

 private:
  double length_;
  Index node_count_;
};

/// Structured grid of (n-1)^2 square bilinear elements on (0, L)^2.
/// Node (i, j) at (i h, j h) has index j n + i.
class Mesh2D {
 public:
  Mesh2D(double length, Index nodes_per_side) : length_(length), n_(nodes_per_side) {
    if (nodes_per_side < 2) throw InvalidArgument("Mesh2D needs at least 2 nodes per side");
    if (!(length > 0.0) || !std::isfinite(length)) throw InvalidArgument("Mesh2D length must be positive");
  }

  double length() const { return length_; }
  Index nodes_per_side() const { return n_; }
  Index node_count() const { return n_ * n_; }
  Index element_count() const { return (n_ - 1) * (n_ - 1); }
  double spacing() const { return length_ / static_cast<double>(n_ - 1); }
  Index node(Index i, Index j) const { return j * n_ + i; }
  double x(Index node) const { return spacing() * static_cast<double>(node % n_); }
  double y(Index node) const { return spacing() * static_cast<double>(node / n_); }

  /// Counter-clockwise corners of element (ei, ej).
  std::array<Index, 4> element_nodes(Index ei, Index ej) const {
    return {node(ei, ej), node(ei + 1, ej), node(ei + 1, ej + 1), node(ei, ej + 1)};
  }

 private:
  double length_;
  Index n_;
};

/// Linear elements for  d/dx(k du/dx) - f = 0. Consistent load from the
/// piecewise-linear interpolant of the nodal forcing samples. Neumann point
/// segments contribute -flux (outward flux convention -q n = h).
inline LinearSystem assemble_poisson_1d(const Mesh1D& mesh, const Vector& forcing, const BoundarySpec& boundary,
                                        double conductivity = 1.0) {
  const Index n = mesh.node_count();
  if (forcing.size() != n) throw InvalidArgument("forcing must have one sample per node");
  for (Index k = 0; k < n; ++k)
    if (!std::isfinite(forcing[k])) throw InvalidArgument("non-finite forcing sample");
  if (!(conductivity > 0.0)) throw InvalidArgument("conductivity must be positive");
  boundary.validate(n);

  const double h = mesh.spacing();
  std::vector<Triplet> triplets;
  triplets.reserve(static_cast<std::size_t>(4 * mesh.element_count()));
  Vector b = Vector::Zero(n);
  for (Index e = 0; e < mesh.element_count(); ++e) {
    const Index a = e, c = e + 1;
    const double k = conductivity / h;
    triplets.emplace_back(a, a, k);
    triplets.emplace_back(a, c, -k);
    triplets.emplace_back(c, a, -k);
    triplets.emplace_back(c, c, k);
    b[a] -= h / 6.0 * (2.0 * forcing[a] + forcing[c]);
    b[c] -= h / 6.0 * (forcing[a] + 2.0 * forcing[c]);
  }
  for (const auto& seg : boundary.neumann)
    for (Index node : seg.nodes) b[node] -= seg.flux;

  SparseMatrix A(n, n);
  A.setFromTriplets(triplets.begin(), triplets.end());
  return make_system(A, b, boundary, true);
}

/// Bilinear quads for  div(k grad u) - f = 0 with constant f (exact
/// integration). Neumann edges contribute -flux * length / 2 to each end node.
inline LinearSystem assemble_poisson_2d(const Mesh2D& mesh, double forcing, const BoundarySpec& boundary,
                                        double conductivity = 1.0) {
  const Index n = mesh.node_count();
  if (!std::isfinite(forcing)) throw InvalidArgument("non-finite forcing");
  if (!(conductivity > 0.0)) throw InvalidArgument("conductivity must be positive");
  boundary.validate(n);

  static constexpr double kElem[4][4] = {
      {4, -1, -2, -1}, {-1, 4, -1, -2}, {-2, -1, 4, -1}, {-1, -2, -1, 4}};
  const double h = mesh.spacing();
  const Index side = mesh.nodes_per_side();
  std::vector<Triplet> triplets;
  triplets.reserve(static_cast<std::size_t>(16 * mesh.element_count()));
  Vector b = Vector::Zero(n);
  for (Index ej = 0; ej + 1 < side; ++ej)
    for (Index ei = 0; ei + 1 < side; ++ei) {
      const auto nodes = mesh.element_nodes(ei, ej);
      for (int r = 0; r < 4; ++r) {
        for (int c = 0; c < 4; ++c) triplets.emplace_back(nodes[r], nodes[c], conductivity * kElem[r][c] / 6.0);
        b[nodes[r]] -= forcing * h * h / 4.0;
      }
    }
  for (const auto& seg : boundary.neumann) {
    const double share = seg.nodes.size() == 1 ? 1.0 : seg.length / static_cast<double>(seg.nodes.size());
    for (Index node : seg.nodes) b[node] -= seg.flux * share;
  }

  SparseMatrix A(n, n);
  A.setFromTriplets(triplets.begin(), triplets.end());
  return make_system(A, b, boundary, true);
}

// ---------------------------------------------------------------------------
// Benchmark problems

/// Forcing f(x) = -128 x / L + 64 with homogeneous Dirichlet ends.
inline double poisson1d_forcing(double x, double L) { return -128.0 * x / L + 64.0; }

/// Exact solution of u'' = -128 x / L + 64, u(0) = u(L) = 0.
inline double poisson1d_exact(double x, double L) {
  return -64.0 / (3.0 * L) * x * x * x + 32.0 * x * x - 32.0 / 3.0 * L * x;
}

inline LinearSystem poisson1d_problem(Index node_count, double length = 1.0) {
  Mesh1D mesh(length, node_count);
  BoundarySpec bc;
  bc.dirichlet[0] = 0.0;
  bc.dirichlet[node_count - 1] = 0.0;
  return assemble_poisson_1d(mesh, mesh.sample([&](double x) { return poisson1d_forcing(x, length); }), bc);
}

/// Case 1: g = 4x^2/L^2 - 4x/L on y = 0 and y = L, zero flux on x = 0 and
/// x = L, f = 0.02. Case 2: g = 1 on y = L (corners included), g = 0 on the
/// other sides, f = 0.
inline BoundarySpec poisson2d_boundary(const Mesh2D& mesh, int which) {
  const Index side = mesh.nodes_per_side();
  const double L = mesh.length();
  BoundarySpec bc;
  if (which == 1) {
    for (Index i = 0; i < side; ++i) {
      const double x = mesh.x(mesh.node(i, 0));
      const double g = 4.0 * x * x / (L * L) - 4.0 * x / L;
      bc.dirichlet[mesh.node(i, 0)] = g;
      bc.dirichlet[mesh.node(i, side - 1)] = g;
    }
    for (Index j = 0; j + 1 < side; ++j)
      for (Index i : {Index{0}, side - 1}) {
        NeumannSegment seg;
        seg.nodes = {mesh.node(i, j), mesh.node(i, j + 1)};
        seg.flux = 0.0;
        seg.length = mesh.spacing();
        bool all_fixed = bc.is_dirichlet(seg.nodes[0]) && bc.is_dirichlet(seg.nodes[1]);
        if (!all_fixed) bc.neumann.push_back(seg);
      }
  } else if (which == 2) {
    for (Index i = 0; i < side; ++i) {
      bc.dirichlet[mesh.node(i, 0)] = 0.0;
      bc.dirichlet[mesh.node(0, i)] = 0.0;
      bc.dirichlet[mesh.node(side - 1, i)] = 0.0;
    }
    for (Index i = 0; i < side; ++i) bc.dirichlet[mesh.node(i, side - 1)] = 1.0;
  } else {
    throw InvalidArgument("2D Poisson case must be 1 or 2");
  }
  return bc;
}

inline double poisson2d_forcing(int which) { return which == 1 ? 0.02 : 0.0; }

inline LinearSystem poisson2d_problem(int which, Index nodes_per_side, double length = 1.0) {
  Mesh2D mesh(length, nodes_per_side);
  return assemble_poisson_2d(mesh, poisson2d_forcing(which), poisson2d_boundary(mesh, which));
}

/// Continuous L2 norm of (u_h - u) on the mesh, u_h the piecewise-linear
/// interpolant of the nodal values. 5-point Gauss per element.
inline double l2_error_1d(const Mesh1D& mesh, const Vector& nodal, const std::function<double(double)>& exact) {
  static constexpr std::array<double, 5> pts = {-0.9061798459386640, -0.5384693101056831, 0.0, 0.5384693101056831,
                                                0.9061798459386640};
  static constexpr std::array<double, 5> wts = {0.2369268850561891, 0.4786286704993665, 0.5688888888888889,
                                                0.4786286704993665, 0.2369268850561891};
  const double h = mesh.spacing();
  double sum = 0.0;
  for (Index e = 0; e < mesh.element_count(); ++e) {
    const double x0 = mesh.x(e);
    for (std::size_t g = 0; g < pts.size(); ++g) {
      const double s = 0.5 * (pts[g] + 1.0);
      const double uh = (1.0 - s) * nodal[e] + s * nodal[e + 1];
      const double diff = uh - exact(x0 + s * h);
      sum += wts[g] * 0.5 * h * diff * diff;
    }
  }
  return std::sqrt(sum);
}

// ---------------------------------------------------------------------------
// 1D wave equation  u_tt - c^2 u_xx = 0

struct WaveProblem {
  Mesh1D mesh;
  double wave_speed = 1.0;
  SparseMatrix K;  // c^2 times the linear-element stiffness
  Vector mass;     // lumped (row-sum) mass
  BoundarySpec boundary;
  Vector u0;
  Vector v0;
};

/// Cases 1-3: sin(pi x/L), sin(2 pi x/L), sin(25 pi x/L) with both ends fixed
/// at zero. Cases 4-5: sin(pi x/2L), sin(50 pi x/2L) with u(t, 0) = 0 and
/// zero velocity at x = L, i.e. u(t, L) held at its initial value.
inline WaveProblem wave_problem(int which, Index node_count, double length = 1.0, double wave_speed = 1.0) {
  if (which < 1 || which > 5) throw InvalidArgument("wave case must be in 1..5");
  if (!(wave_speed > 0.0)) throw InvalidArgument("wave speed must be positive");
  static constexpr std::array<double, 5> k = {1.0, 2.0, 25.0, 0.5, 25.0};
  Mesh1D mesh(length, node_count);
  const double pi = std::numbers::pi;
  const double kk = k[static_cast<std::size_t>(which - 1)];
  Vector u0 = mesh.sample([&](double x) { return std::sin(kk * pi * x / length); });
  u0[0] = 0.0;
  if (which <= 3) u0[node_count - 1] = 0.0;

  const double h = mesh.spacing();
  std::vector<Triplet> triplets;
  Vector mass = Vector::Zero(node_count);
  const double ks = wave_speed * wave_speed / h;
  for (Index e = 0; e < mesh.element_count(); ++e) {
    triplets.emplace_back(e, e, ks);
    triplets.emplace_back(e, e + 1, -ks);
    triplets.emplace_back(e + 1, e, -ks);
    triplets.emplace_back(e + 1, e + 1, ks);
    mass[e] += 0.5 * h;
    mass[e + 1] += 0.5 * h;
  }
  SparseMatrix K(node_count, node_count);
  K.setFromTriplets(triplets.begin(), triplets.end());

  BoundarySpec bc;
  bc.dirichlet[0] = 0.0;
  bc.dirichlet[node_count - 1] = u0[node_count - 1];
  return WaveProblem{mesh, wave_speed, std::move(K), std::move(mass), std::move(bc), std::move(u0),
                     Vector::Zero(node_count)};
}

}  // namespace feq
