#include <gtest/gtest.h>

#include <cmath>
#include <random>
#include <set>
#include <sstream>

#include "feq/fem.hpp"
#include "feq/search.hpp"
#include "oracles.hpp"

using namespace feq;

namespace {

SparseMatrix sparse(const DenseMatrix& D) { return D.sparseView(); }

LinearSystem one_dof() {
  DenseMatrix A(1, 1);
  A << 2.0;
  Vector b(1);
  b << 2.0;
  return make_system(sparse(A), b, {}, true);
}

LinearSystem two_dof() {
  DenseMatrix A(2, 2);
  A << 2.0, -1.0, -1.0, 2.0;
  return make_system(sparse(A), Vector::Ones(2), {}, true);
}

std::set<std::vector<double>> as_set(const std::vector<Vector>& vs) {
  std::set<std::vector<double>> out;
  for (const auto& v : vs) out.insert(to_std(v));
  return out;
}

// Every point u + alpha * (c_0, ..., c_{n-1}) with c_k drawn from `levels`.
std::set<std::vector<double>> lattice(const Vector& u, double alpha, const std::vector<double>& levels) {
  std::set<std::vector<double>> out;
  const auto n = static_cast<std::size_t>(u.size());
  std::vector<std::size_t> digit(n, 0);
  for (;;) {
    std::vector<double> p(n);
    for (std::size_t k = 0; k < n; ++k) p[k] = u[static_cast<Index>(k)] + alpha * levels[digit[k]];
    out.insert(p);
    std::size_t k = 0;
    while (k < n && ++digit[k] == levels.size()) digit[k++] = 0;
    if (k == n) break;
  }
  return out;
}

}  // namespace

TEST(PollStep, OneDofReachesExactSolution) {
  const LinearSystem sys = one_dof();
  ExhaustiveSampler ex;
  const auto out = poll_step(sys, Vector::Zero(1), 1.0, PollMethod::Poll2, ex, 2);
  ASSERT_TRUE(out.success());
  EXPECT_DOUBLE_EQ((*out.best)[0], 1.0);
  EXPECT_DOUBLE_EQ(out.best_value, -1.0);

  const auto again = poll_step(sys, Vector::Ones(1), 1.0, PollMethod::Poll2, ex, 2);
  EXPECT_FALSE(again.success());
}

TEST(PollStep, TwoDofPoll2) {
  const LinearSystem sys = two_dof();
  ExhaustiveSampler ex;
  const auto out = poll_step(sys, Vector::Zero(2), 1.0, PollMethod::Poll2, ex, 4);
  ASSERT_TRUE(out.success());
  EXPECT_EQ(to_std(*out.best), (std::vector<double>{1.0, 1.0}));
  EXPECT_DOUBLE_EQ(out.best_value, -1.0);
  EXPECT_EQ(as_set(out.candidates), lattice(Vector::Zero(2), 1.0, {-1.0, 1.0}));
}

TEST(PollStep, NestedGridsCoverTheirLattices) {
  std::mt19937_64 rng(31);
  const DenseMatrix A = oracle::random_spd(3, rng);
  const Vector b = oracle::random_vector(3, rng);
  const LinearSystem sys = make_system(sparse(A), b, {}, true);
  const Vector u = oracle::random_vector(3, rng);
  const double alpha = 0.3;
  ExhaustiveSampler ex;

  const auto p3 = poll_step(sys, u, alpha, PollMethod::Poll3, ex, 64);
  const auto l3 = lattice(u, alpha, {-2.0, 0.0, 2.0});
  std::set<std::vector<double>> got3;
  for (const auto& c : p3.candidates) {
    std::vector<double> r = to_std(c);
    // Round away accumulated error from u + a q1 + a q2.
    for (std::size_t k = 0; k < r.size(); ++k)
      r[k] = u[static_cast<Index>(k)] + alpha * std::round((r[k] - u[static_cast<Index>(k)]) / alpha);
    got3.insert(r);
  }
  EXPECT_EQ(got3.size(), 27u);
  EXPECT_EQ(p3.candidates.size(), 64u);

  const auto p4 = poll_step(sys, u, alpha, PollMethod::Poll4, ex, 64);
  EXPECT_EQ(as_set(p4.candidates).size(), 64u);

  // Best candidate of each grid equals brute-force minimization of F over the lattice.
  auto best_over = [&](const std::set<std::vector<double>>& pts) {
    double best = oracle::energy_functional(A, b, u);
    for (const auto& p : pts) best = std::min(best, oracle::energy_functional(A, b, from_std(p)));
    return best;
  };
  ASSERT_TRUE(p3.success());
  EXPECT_NEAR(p3.best_value, best_over(l3), 1e-12);
  ASSERT_TRUE(p4.success());
  EXPECT_NEAR(p4.best_value, best_over(lattice(u, alpha, {-1.5, -0.5, 0.5, 1.5})), 1e-12);
}

TEST(PollStep, ZeroDisplacementIsNotAnImprovement) {
  const LinearSystem sys = two_dof();
  ExhaustiveSampler ex;
  const Vector exact = Vector::Ones(2);
  // Poll3 contains u itself (q1 = -q2) but that never counts as success.
  EXPECT_FALSE(poll_step(sys, exact, 0.5, PollMethod::Poll3, ex, 16).success());
  EXPECT_FALSE(poll_step(sys, exact, 0.5, PollMethod::Poll4, ex, 16).success());
  EXPECT_THROW(poll_step(sys, exact, 0.5, PollMethod::Hyperoctant, ex, 4), InvalidArgument);
}

TEST(Hyperoctant, OneDofBothSteps) {
  const LinearSystem sys = one_dof();
  ExhaustiveSampler ex;
  const auto out = hyperoctant_step(sys, Vector::Zero(1), 1.0, ex, 2);
  ASSERT_TRUE(out.success());
  ASSERT_TRUE(out.first_step_best.has_value());
  EXPECT_DOUBLE_EQ((*out.first_step_best)[0], 1.0);
  ASSERT_EQ(out.candidates.size(), 4u);
  EXPECT_EQ(as_set({out.candidates[2], out.candidates[3]}), (std::set<std::vector<double>>{{0.0}, {1.0}}));
  EXPECT_DOUBLE_EQ((*out.best)[0], 1.0);

  EXPECT_FALSE(hyperoctant_step(sys, Vector::Ones(1), 1.0, ex, 2).success());
}

TEST(Hyperoctant, TwoDofScales) {
  const LinearSystem sys = two_dof();
  ExhaustiveSampler ex;
  // alpha = 2: step 1 corners (+-2, +-2), best (2, 2) with F = 0 = F(u); step 2
  // polls {0, 2}^2 around (1, 1) and cannot improve either.
  const auto wide = hyperoctant_step(sys, Vector::Zero(2), 2.0, ex, 4);
  EXPECT_EQ(as_set({wide.candidates.begin(), wide.candidates.begin() + 4}), lattice(Vector::Zero(2), 2.0, {-1.0, 1.0}));
  EXPECT_EQ(to_std(*wide.first_step_best), (std::vector<double>{2.0, 2.0}));
  EXPECT_EQ(as_set({wide.candidates.begin() + 4, wide.candidates.end()}), lattice(Vector::Ones(2), 1.0, {-1.0, 1.0}));
  EXPECT_FALSE(wide.success());

  const auto unit = hyperoctant_step(sys, Vector::Zero(2), 1.0, ex, 4);
  ASSERT_TRUE(unit.success());
  EXPECT_EQ(to_std(*unit.best), (std::vector<double>{1.0, 1.0}));
  EXPECT_DOUBLE_EQ(unit.best_value, -1.0);
}

TEST(Hyperoctant, SecondStepStaysInSelectedOrthant) {
  std::mt19937_64 rng(32);
  for (int trial = 0; trial < 20; ++trial) {
    const int n = 2 + trial % 5;
    const LinearSystem sys =
        make_system(sparse(oracle::random_spd(n, rng)), oracle::random_vector(n, rng), {}, true);
    const Vector u = oracle::random_vector(n, rng);
    const double alpha = 0.1 + 0.05 * trial;
    ExhaustiveSampler ex;
    const int reads = 1 << n;
    const auto out = hyperoctant_step(sys, u, alpha, ex, reads);
    const Vector dir = *out.first_step_best - u;
    for (std::size_t c = static_cast<std::size_t>(reads); c < out.candidates.size(); ++c) {
      const Vector d = out.candidates[c] - u;
      for (Index k = 0; k < n; ++k) {
        if (std::abs(d[k]) > 1e-12 * alpha) {
          EXPECT_GT(d[k] * dir[k], 0.0);
        }
      }
    }
  }
}

TEST(Run, ConvergesOnPoisson1dWithAnnealing) {
  const LinearSystem sys = poisson1d_problem(25);
  SearchConfig cfg;
  cfg.method = PollMethod::Hyperoctant;
  cfg.psi_min = 1e-5;
  cfg.reads = 10;
  cfg.seed = 7;
  SimulatedAnnealingSampler sa;
  const SearchTrace t = run(sys, cfg, sa);
  EXPECT_TRUE(t.converged()) << to_string(t.reason) << " after " << t.iterations();
  EXPECT_LE(t.final_residual() / t.initial_residual(), 1e-5);
  EXPECT_NEAR(t.records.back().residual, residual_norm(sys, t.solution), 1e-15);
  EXPECT_EQ(t.solution[0], 0.0);
  EXPECT_EQ(t.solution[24], 0.0);
}

TEST(Run, ExhaustiveMonotoneAndDirichletExact) {
  std::mt19937_64 rng(33);
  const DenseMatrix A = oracle::random_spd(9, rng);
  const Vector b = oracle::random_vector(9, rng);
  BoundarySpec bc;
  bc.dirichlet[0] = 0.3;
  bc.dirichlet[5] = -1.7;
  const LinearSystem sys = make_system(sparse(A), b, bc, true);
  for (PollMethod m : {PollMethod::Poll2, PollMethod::Poll3, PollMethod::Poll4, PollMethod::Hyperoctant}) {
    SearchConfig cfg;
    cfg.method = m;
    cfg.reads = 4;
    cfg.psi_min = 1e-6;
    cfg.max_iterations = 400;
    ExhaustiveSampler ex;
    int polls = 0;
    const auto observe = [&](const SearchFrame& f, const StandardIsing& H) {
      ++polls;
      EXPECT_EQ(f.u[0], 0.3);
      EXPECT_EQ(f.u[5], -1.7);
      for (Index dof : f.active) EXPECT_FALSE(dof == 0 || dof == 5);
      const Index spins = m == PollMethod::Poll3 || m == PollMethod::Poll4 ? 14 : 7;
      EXPECT_EQ(H.size(), spins);
    };
    const SearchTrace t = run(sys, cfg, ex, std::nullopt, observe);
    EXPECT_GT(polls, 0);
    EXPECT_TRUE(t.converged()) << to_string(m);
    for (std::size_t k = 1; k < t.records.size(); ++k) {
      const auto& r = t.records[k];
      if (r.success) {
        EXPECT_LT(r.functional, t.records[k - 1].functional) << to_string(m) << " iter " << k;
      } else {
        EXPECT_EQ(r.functional, t.records[k - 1].functional) << to_string(m) << " iter " << k;
      }
    }
    EXPECT_EQ(t.solution[0], 0.3);
    EXPECT_EQ(t.solution[5], -1.7);
  }
}

TEST(Run, StepSizeControl) {
  // One active dof between two Dirichlet nodes.
  DenseMatrix A(3, 3);
  A << 1, 0, 0, -1, 2, -1, 0, 0, 1;
  Vector b(3);
  b << 0.0, 0.7, 0.0;
  BoundarySpec bc;
  bc.dirichlet[0] = 0.0;
  bc.dirichlet[2] = 0.0;
  const LinearSystem sys = make_system(sparse(A), b, bc, false);
  SearchConfig cfg;
  cfg.method = PollMethod::Poll2;
  cfg.functional = Functional::LeastSquares;
  cfg.alpha0 = 0.01;
  cfg.psi_min = 1e-9;
  cfg.residual_mode = ResidualMode::Absolute;
  cfg.reads = 2;
  ExhaustiveSampler ex;
  const SearchTrace t = run(sys, cfg, ex);

  bool contracted = false;
  for (std::size_t k = 1; k < t.records.size(); ++k) {
    const auto& prev = t.records[k - 1];
    const auto& r = t.records[k];
    if (k > 1) {
      const double expected = prev.phase == Phase::Expansion && prev.success ? 2.0 * prev.alpha
                              : !prev.success                                ? 0.5 * prev.alpha
                                                                             : prev.alpha;
      EXPECT_DOUBLE_EQ(r.alpha, expected) << "iter " << k;
    }
    if (contracted) {
      EXPECT_EQ(r.phase, Phase::Contraction);
    }
    if (!r.success) contracted = true;
  }
  EXPECT_EQ(t.records[1].phase, Phase::Expansion);
  EXPECT_TRUE(contracted);
  EXPECT_EQ(t.records[0].phase, Phase::Initial);
  // Exact answer 0.35; the final grid spacing bounds the error.
  const double alpha_final = 0.5 * t.records.back().alpha;
  EXPECT_LE(std::abs(t.solution[1] - 0.35), std::max(alpha_final, 1e-9));
  EXPECT_TRUE(t.converged());

  SearchConfig no_expand = cfg;
  no_expand.expansion = false;
  const SearchTrace c = run(sys, no_expand, ex);
  for (std::size_t k = 1; k < c.records.size(); ++k) EXPECT_EQ(c.records[k].phase, Phase::Contraction);
}

TEST(Run, StartsAtSolution) {
  std::mt19937_64 rng(34);
  const DenseMatrix A = oracle::random_spd(4, rng);
  const Vector u0 = Vector::Zero(4);
  const LinearSystem sys = make_system(sparse(A), A * u0, {}, true);
  ExhaustiveSampler ex;
  const SearchTrace t = run(sys, SearchConfig{}, ex);
  EXPECT_TRUE(t.converged());
  EXPECT_EQ(t.iterations(), 0);
}

TEST(Run, TerminationReasons) {
  const LinearSystem sys = two_dof();
  ExhaustiveSampler ex;
  SearchConfig cfg;
  cfg.max_iterations = 3;
  cfg.psi_min = 1e-300;
  cfg.alpha0 = 0.3;
  const SearchTrace capped = run(sys, cfg, ex);
  EXPECT_EQ(capped.reason, Termination::MaxIterations);
  EXPECT_EQ(capped.iterations(), 3);

  cfg.max_iterations = 100000;
  const SearchTrace under = run(sys, cfg, ex);
  EXPECT_EQ(under.reason, Termination::AlphaUnderflow);
  EXPECT_LT(under.records.back().alpha * 0.5, 1e-14 * 0.3 * 1.0000001);
}

TEST(Run, LeastSquaresOnNonsymmetric) {
  DenseMatrix A(2, 2);
  A << 0, 1, 1, 0;
  Vector b(2);
  b << 1, 2;
  const LinearSystem sys = make_system(sparse(A), b, {}, false);
  ExhaustiveSampler ex;
  SearchConfig cfg;
  EXPECT_THROW(run(sys, cfg, ex), InvalidArgument);
  cfg.functional = Functional::LeastSquares;
  cfg.method = PollMethod::Poll4;
  cfg.psi_min = 1e-8;
  const SearchTrace t = run(sys, cfg, ex);
  EXPECT_TRUE(t.converged());
  EXPECT_NEAR(t.solution[0], 2.0, 1e-7);
  EXPECT_NEAR(t.solution[1], 1.0, 1e-7);
}

TEST(Run, DeterministicForSeed) {
  const LinearSystem sys = poisson1d_problem(11);
  SearchConfig cfg;
  cfg.seed = 99;
  cfg.psi_min = 1e-4;
  SimulatedAnnealingSampler sa(SaConfig{200});
  const SearchTrace a = run(sys, cfg, sa);
  const SearchTrace b = run(sys, cfg, sa);
  std::ostringstream ca, cb;
  write_trace_csv(ca, a);
  write_trace_csv(cb, b);
  EXPECT_EQ(ca.str(), cb.str());
  EXPECT_EQ(to_std(a.solution), to_std(b.solution));
}

TEST(Run, ConfigValidation) {
  const LinearSystem sys = two_dof();
  ExhaustiveSampler ex;
  auto bad = [&](auto mutate) {
    SearchConfig c;
    mutate(c);
    EXPECT_THROW(run(sys, c, ex), InvalidArgument);
  };
  bad([](SearchConfig& c) { c.alpha0 = 0.0; });
  bad([](SearchConfig& c) { c.psi_min = -1.0; });
  bad([](SearchConfig& c) { c.reads = 0; });
  bad([](SearchConfig& c) { c.shrink = 1.0; });
  bad([](SearchConfig& c) { c.growth = 1.0; });
  bad([](SearchConfig& c) { c.max_iterations = -1; });
  EXPECT_THROW(run(sys, SearchConfig{}, ex, Vector::Zero(3)), InvalidArgument);
  EXPECT_EQ(poll_method_from_string("poll3"), PollMethod::Poll3);
  EXPECT_THROW(poll_method_from_string("poll5"), InvalidArgument);
}

TEST(Trace, CsvAndJsonRoundTrip) {
  const LinearSystem sys = two_dof();
  ExhaustiveSampler ex;
  SearchConfig cfg;
  cfg.record_iterates = true;
  cfg.psi_min = 1e-6;
  const SearchTrace t = run(sys, cfg, ex);

  std::ostringstream csv;
  write_trace_csv(csv, t);
  std::istringstream lines(csv.str());
  std::string header, first;
  std::getline(lines, header);
  std::getline(lines, first);
  EXPECT_EQ(header, "iter,alpha,functional,residual,success,phase");
  EXPECT_EQ(first.substr(0, 2), "0,");
  EXPECT_NE(first.find(",initial"), std::string::npos);
  std::size_t rows = 0;
  for (std::string l; std::getline(lines, l);) ++rows;
  EXPECT_EQ(rows + 1, t.records.size());

  const SearchTrace back = trace_from_json(nlohmann::json::parse(trace_to_json(t).dump()));
  ASSERT_EQ(back.records.size(), t.records.size());
  EXPECT_EQ(back.reason, t.reason);
  EXPECT_EQ(back.method, t.method);
  EXPECT_EQ(to_std(back.solution), to_std(t.solution));
  for (std::size_t k = 0; k < t.records.size(); ++k) {
    EXPECT_EQ(back.records[k].alpha, t.records[k].alpha);
    EXPECT_EQ(back.records[k].phase, t.records[k].phase);
    EXPECT_EQ(back.records[k].center.has_value(), t.records[k].center.has_value());
    if (k > 0) {
      ASSERT_TRUE(back.records[k].first_step_best.has_value());
      EXPECT_EQ(to_std(*back.records[k].first_step_best), to_std(*t.records[k].first_step_best));
    }
  }
  EXPECT_THROW(trace_from_json(nlohmann::json::parse(R"({"method": "poll2"})")), InvalidArgument);
}
