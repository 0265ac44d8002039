#pragma once

#include <functional>

#include "feq/fem.hpp"

namespace feq {

/// Solves a linear system; the search-driven solver and the direct solver
/// both fit here.
using SystemSolver = std::function<Vector(const LinearSystem&)>;

inline SystemSolver direct_solver() {
  return [](const LinearSystem& sys) { return direct_solve(sys); };
}

struct NewmarkState {
  Vector u, v, a;
  double dt = 0.0;
  double beta = 0.25;
  double gamma = 0.5;
  Vector mass;  // lumped
  double wave_speed = 1.0;
  double time = 0.0;

  void validate() const {
    const Index n = u.size();
    if (v.size() != n || a.size() != n || mass.size() != n) throw InvalidArgument("NewmarkState: size mismatch");
    if (!(dt > 0.0)) throw InvalidArgument("NewmarkState: time step must be positive");
    if (!(beta > 0.0 && beta <= 1.0) || !(gamma > 0.0 && gamma <= 1.0))
      throw InvalidArgument("NewmarkState: beta and gamma must lie in (0, 1]");
    for (Index k = 0; k < n; ++k)
      if (!(mass[k] > 0.0)) throw InvalidArgument("NewmarkState: lumped mass must be positive");
  }
};

/// Initial state at rest-consistent acceleration a0 = -M^{-1} K u0 on free
/// nodes, zero on constrained nodes.
inline NewmarkState newmark_initial(const WaveProblem& problem, double dt, double beta = 0.25, double gamma = 0.5) {
  NewmarkState s;
  s.u = problem.u0;
  s.v = problem.v0;
  Vector Ku = problem.K * problem.u0;
  s.a = -Ku.cwiseQuotient(problem.mass);
  for (const auto& [node, value] : problem.boundary.dirichlet) s.a[node] = 0.0;
  s.dt = dt;
  s.beta = beta;
  s.gamma = gamma;
  s.mass = problem.mass;
  s.wave_speed = problem.wave_speed;
  s.validate();
  return s;
}

/// Effective acceleration system (M + beta dt^2 K) a = -K u_pred with zero
/// acceleration on constrained nodes.
inline LinearSystem newmark_effective_system(const NewmarkState& s, const SparseMatrix& K,
                                             const BoundarySpec& boundary) {
  s.validate();
  const double dt = s.dt;
  Vector u_pred = s.u + dt * s.v + dt * dt * (0.5 - s.beta) * s.a;
  SparseMatrix M(s.u.size(), s.u.size());
  std::vector<Triplet> diag;
  for (Index k = 0; k < s.u.size(); ++k) diag.emplace_back(k, k, s.mass[k]);
  M.setFromTriplets(diag.begin(), diag.end());
  SparseMatrix A = M + (s.beta * dt * dt) * K;
  Vector b = -(K * u_pred);
  BoundarySpec accel_bc;
  for (const auto& [node, value] : boundary.dirichlet) accel_bc.dirichlet[node] = 0.0;
  return make_system(A, b, accel_bc, true);
}

inline NewmarkState newmark_step(const NewmarkState& s, const SparseMatrix& K, const BoundarySpec& boundary,
                                 const SystemSolver& solve) {
  const LinearSystem eff = newmark_effective_system(s, K, boundary);
  const Vector a_next = solve(eff);
  if (a_next.size() != s.u.size()) throw InvalidArgument("newmark_step: solver returned wrong size");
  const double dt = s.dt;
  NewmarkState next = s;
  next.u = s.u + dt * s.v + dt * dt * ((0.5 - s.beta) * s.a + s.beta * a_next);
  next.v = s.v + dt * ((1.0 - s.gamma) * s.a + s.gamma * a_next);
  next.a = a_next;
  next.time = s.time + dt;
  // Constrained displacements stay at their prescribed values.
  for (const auto& [node, value] : boundary.dirichlet) {
    next.u[node] = value;
    next.v[node] = 0.0;
  }
  return next;
}

/// Discrete energy 1/2 v^T M v + 1/2 u^T K u.
inline double newmark_energy(const NewmarkState& s, const SparseMatrix& K) {
  return 0.5 * s.v.dot(s.mass.cwiseProduct(s.v)) + 0.5 * s.u.dot(K * s.u);
}

}  // namespace feq
