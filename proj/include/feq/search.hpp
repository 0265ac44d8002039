#pragma once

// Direct search driven by Ising samples. Each poll maps the functional around
// the current iterate to a Hamiltonian, asks the sampler for low-energy
// spins, decodes them to candidate iterates and accepts the best candidate
// only on strict improvement of the classically evaluated functional.
//
// Step-size control: an expansion phase multiplies alpha by `growth` after
// every successful poll until the first failure; afterwards successes keep
// alpha and failures multiply it by `shrink`.

#include <cmath>
#include <functional>
#include <limits>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include <json.hpp>

#include "feq/samplers.hpp"

namespace feq {

enum class PollMethod { Poll2, Poll3, Poll4, Hyperoctant };
enum class ResidualMode { Normalized, Absolute };
enum class Phase { Initial, Expansion, Contraction };
enum class Termination { Converged, AlphaUnderflow, MaxIterations };

inline const char* to_string(PollMethod m) {
  switch (m) {
    case PollMethod::Poll2: return "poll2";
    case PollMethod::Poll3: return "poll3";
    case PollMethod::Poll4: return "poll4";
    case PollMethod::Hyperoctant: return "hyperoctant";
  }
  return "?";
}

inline PollMethod poll_method_from_string(const std::string& s) {
  if (s == "poll2") return PollMethod::Poll2;
  if (s == "poll3") return PollMethod::Poll3;
  if (s == "poll4") return PollMethod::Poll4;
  if (s == "hyperoctant") return PollMethod::Hyperoctant;
  throw InvalidArgument("unknown search method '" + s + "'");
}

inline const char* to_string(Phase p) {
  switch (p) {
    case Phase::Initial: return "initial";
    case Phase::Expansion: return "expansion";
    case Phase::Contraction: return "contraction";
  }
  return "?";
}

inline const char* to_string(Termination t) {
  switch (t) {
    case Termination::Converged: return "converged";
    case Termination::AlphaUnderflow: return "alpha_underflow";
    case Termination::MaxIterations: return "max_iterations";
  }
  return "?";
}

struct SearchConfig {
  PollMethod method = PollMethod::Hyperoctant;
  Functional functional = Functional::Energy;
  std::optional<double> alpha0;  // default: max|b| / max|A| over free rows
  double psi_min = 1e-5;
  ResidualMode residual_mode = ResidualMode::Normalized;
  int reads = 10;  // j_max
  bool expansion = true;
  double growth = 2.0;
  double shrink = 0.5;
  int max_iterations = 100000;
  std::uint64_t seed = 0;
  bool record_iterates = false;  // keep the data needed to replay each poll's Hamiltonians

  void validate() const {
    if (alpha0 && !(*alpha0 > 0.0)) throw InvalidArgument("SearchConfig: alpha0 must be positive");
    if (!(psi_min > 0.0)) throw InvalidArgument("SearchConfig: psi_min must be positive");
    if (reads < 1) throw InvalidArgument("SearchConfig: reads must be >= 1");
    if (!(shrink > 0.0 && shrink < 1.0 && growth > 1.0))
      throw InvalidArgument("SearchConfig: need 0 < shrink < 1 < growth");
    if (max_iterations < 0) throw InvalidArgument("SearchConfig: max_iterations must be >= 0");
  }
};

/// Called with every frame and the reduced Hamiltonian built from it.
using HamiltonianObserver = std::function<void(const SearchFrame&, const StandardIsing&)>;

struct PollOutcome {
  std::optional<Vector> best;  // set only when the poll strictly improved L
  double best_value = std::numeric_limits<double>::infinity();
  std::vector<Sample> samples;  // all samples, step 1 then step 2 for hyperoctant
  std::vector<Vector> candidates;
  std::optional<Vector> first_step_best;  // hyperoctant u_a

  bool success() const { return best.has_value(); }
};

namespace detail {

inline void pick_best(const LinearSystem& sys, Functional which, double current, PollOutcome& out) {
  double best = current;
  std::optional<std::size_t> idx;
  for (std::size_t k = 0; k < out.candidates.size(); ++k) {
    const double v = functional_eval(sys, out.candidates[k], which);
    if (v < best) {
      best = v;
      idx = k;
    }
  }
  if (idx) {
    out.best = out.candidates[*idx];
    out.best_value = best;
  }
}

}  // namespace detail

/// 2^n, 3^n (nested, a2 = a1) or 4^n (nested, a2 = a1/2) poll around u.
inline PollOutcome poll_step(const LinearSystem& sys, const Vector& u, double alpha, PollMethod method,
                             Sampler& sampler, int reads, Functional which = Functional::Energy,
                             std::uint64_t seed = 0, const HamiltonianObserver& observe = {}) {
  if (method == PollMethod::Hyperoctant) throw InvalidArgument("poll_step: use hyperoctant_step");
  PollOutcome out;
  if (method == PollMethod::Poll2) {
    const SearchFrame frame = build_frame(sys, u, alpha);
    const StandardIsing H = to_standard(map_functional(sys, frame, which));
    if (observe) observe(frame, H);
    out.samples = sample_batch(sampler, H, reads, seed);
    for (const auto& s : out.samples) out.candidates.push_back(decode(frame, s.spins));
  } else {
    const NestedFrame frame =
        build_nested_frame(sys, u, alpha, method == PollMethod::Poll3 ? NestedGrid::D3 : NestedGrid::D4);
    const StandardIsing H = to_standard(nested_compose(sys, frame, which));
    if (observe) observe(frame.first, H);
    out.samples = sample_batch(sampler, H, reads, seed);
    for (const auto& s : out.samples) out.candidates.push_back(decode(frame, s.spins));
  }
  detail::pick_best(sys, which, functional_eval(sys, u, which), out);
  return out;
}

/// Frames of the two hyperoctant polls: (u, alpha) and, around the midpoint of
/// u and u_a, (u + (u_a - u)/2, alpha/2).
inline std::pair<SearchFrame, SearchFrame> hyperoctant_frames(const LinearSystem& sys, const Vector& u, double alpha,
                                                              const Vector& u_a) {
  return {build_frame(sys, u, alpha), build_frame(sys, u, 0.5 * alpha, 0.5 * (u_a - u))};
}

inline PollOutcome hyperoctant_step(const LinearSystem& sys, const Vector& u, double alpha, Sampler& sampler,
                                    int reads, Functional which = Functional::Energy, std::uint64_t seed = 0,
                                    const HamiltonianObserver& observe = {}) {
  PollOutcome out;
  const SearchFrame first = build_frame(sys, u, alpha);
  const StandardIsing H1 = to_standard(map_functional(sys, first, which));
  if (observe) observe(first, H1);
  auto samples_a = sample_batch(sampler, H1, reads, derive_seed(seed, 0));
  Vector u_a = u;
  double best_a = std::numeric_limits<double>::infinity();
  for (const auto& s : samples_a) {
    Vector cand = decode(first, s.spins);
    const double v = functional_eval(sys, cand, which);
    if (v < best_a) {
      best_a = v;
      u_a = cand;
    }
    out.candidates.push_back(std::move(cand));
  }
  out.first_step_best = u_a;

  const SearchFrame second = build_frame(sys, u, 0.5 * alpha, 0.5 * (u_a - u));
  const StandardIsing H2 = to_standard(map_functional(sys, second, which));
  if (observe) observe(second, H2);
  auto samples_b = sample_batch(sampler, H2, reads, derive_seed(seed, 1));
  for (const auto& s : samples_b) out.candidates.push_back(decode(second, s.spins));

  out.samples = std::move(samples_a);
  out.samples.insert(out.samples.end(), std::make_move_iterator(samples_b.begin()),
                     std::make_move_iterator(samples_b.end()));
  detail::pick_best(sys, which, functional_eval(sys, u, which), out);
  return out;
}

struct IterationRecord {
  int iter = 0;
  double alpha = 0.0;       // scale used by this poll
  double functional = 0.0;  // at the iterate after the poll
  double residual = 0.0;    // ||A u - b|| after the poll
  bool success = false;
  Phase phase = Phase::Initial;
  // Replay data (record_iterates): the poll centre and the hyperoctant u_a.
  std::optional<Vector> center;
  std::optional<Vector> first_step_best;
};

struct SearchTrace {
  PollMethod method = PollMethod::Hyperoctant;
  Functional functional = Functional::Energy;
  std::vector<IterationRecord> records;  // records[0] is the initial state
  Vector solution;
  Termination reason = Termination::MaxIterations;
  double threshold = 0.0;  // absolute residual target

  bool converged() const { return reason == Termination::Converged; }
  int iterations() const { return static_cast<int>(records.size()) - 1; }
  double initial_residual() const { return records.front().residual; }
  double final_residual() const { return records.back().residual; }
};

inline double default_alpha0(const LinearSystem& sys) {
  double bmax = 0.0, amax = 0.0;
  for (Index k : sys.active_dofs()) {
    bmax = std::max(bmax, std::abs(sys.b[k]));
    for (SparseMatrix::InnerIterator it(sys.A, k); it; ++it) amax = std::max(amax, std::abs(it.value()));
  }
  if (bmax > 0.0 && amax > 0.0) return bmax / amax;
  return 1.0;
}

inline SearchTrace run(const LinearSystem& sys, const SearchConfig& cfg, Sampler& sampler,
                       std::optional<Vector> initial = std::nullopt, const HamiltonianObserver& observe = {}) {
  cfg.validate();
  if (cfg.functional == Functional::Energy && !sys.spd)
    throw InvalidArgument("run: energy functional requires an SPD system");
  SearchTrace trace;
  trace.method = cfg.method;
  trace.functional = cfg.functional;
  Vector u = initial ? *initial : sys.initial_guess();
  if (u.size() != sys.size()) throw InvalidArgument("run: initial guess has wrong size");
  for (const auto& [node, value] : sys.boundary.dirichlet) u[node] = value;

  const double alpha0 = cfg.alpha0.value_or(default_alpha0(sys));
  double alpha = alpha0;
  const double psi0 = residual_norm(sys, u);
  trace.threshold = cfg.residual_mode == ResidualMode::Normalized ? cfg.psi_min * psi0 : cfg.psi_min;
  IterationRecord init;
  init.alpha = alpha;
  init.functional = functional_eval(sys, u, cfg.functional);
  init.residual = psi0;
  trace.records.push_back(init);

  Phase phase = cfg.expansion ? Phase::Expansion : Phase::Contraction;
  if (psi0 <= trace.threshold) {
    trace.reason = Termination::Converged;
    trace.solution = u;
    return trace;
  }
  for (int i = 1;; ++i) {
    if (i > cfg.max_iterations) {
      trace.reason = Termination::MaxIterations;
      break;
    }
    const std::uint64_t poll_seed = derive_seed(cfg.seed, static_cast<std::uint64_t>(i));
    PollOutcome outcome =
        cfg.method == PollMethod::Hyperoctant
            ? hyperoctant_step(sys, u, alpha, sampler, cfg.reads, cfg.functional, poll_seed, observe)
            : poll_step(sys, u, alpha, cfg.method, sampler, cfg.reads, cfg.functional, poll_seed, observe);

    IterationRecord rec;
    rec.iter = i;
    rec.alpha = alpha;
    rec.success = outcome.success();
    rec.phase = phase;
    if (cfg.record_iterates) {
      rec.center = u;
      rec.first_step_best = outcome.first_step_best;
    }
    if (outcome.success()) {
      u = std::move(*outcome.best);
      if (phase == Phase::Expansion) alpha *= cfg.growth;
    } else {
      phase = Phase::Contraction;
      alpha *= cfg.shrink;
    }
    rec.functional = functional_eval(sys, u, cfg.functional);
    rec.residual = residual_norm(sys, u);
    trace.records.push_back(std::move(rec));

    if (trace.records.back().residual <= trace.threshold) {
      trace.reason = Termination::Converged;
      break;
    }
    if (alpha < 1e-14 * alpha0) {
      trace.reason = Termination::AlphaUnderflow;
      break;
    }
  }
  trace.solution = u;
  return trace;
}

// ---------------------------------------------------------------------------
// Serialization

inline void write_trace_csv(std::ostream& out, const SearchTrace& trace) {
  out << "iter,alpha,functional,residual,success,phase\n";
  out.precision(17);
  for (const auto& r : trace.records)
    out << r.iter << ',' << r.alpha << ',' << r.functional << ',' << r.residual << ',' << (r.success ? 1 : 0) << ','
        << to_string(r.phase) << '\n';
}

inline std::vector<double> to_std(const Vector& v) { return {v.data(), v.data() + v.size()}; }

inline Vector from_std(const std::vector<double>& v) {
  return Eigen::Map<const Vector>(v.data(), static_cast<Index>(v.size()));
}

inline nlohmann::json trace_to_json(const SearchTrace& trace) {
  nlohmann::json j;
  j["method"] = to_string(trace.method);
  j["functional"] = to_string(trace.functional);
  j["termination"] = to_string(trace.reason);
  j["iterations"] = trace.iterations();
  j["threshold"] = trace.threshold;
  j["solution"] = to_std(trace.solution);
  auto& recs = j["records"] = nlohmann::json::array();
  for (const auto& r : trace.records) {
    nlohmann::json jr = {{"iter", r.iter},          {"alpha", r.alpha},     {"functional", r.functional},
                         {"residual", r.residual}, {"success", r.success}, {"phase", to_string(r.phase)}};
    if (r.center) jr["center"] = to_std(*r.center);
    if (r.first_step_best) jr["first_step_best"] = to_std(*r.first_step_best);
    recs.push_back(std::move(jr));
  }
  return j;
}

inline SearchTrace trace_from_json(const nlohmann::json& j) {
  try {
    SearchTrace t;
    t.method = poll_method_from_string(j.at("method").get<std::string>());
    t.functional = j.at("functional").get<std::string>() == "G" ? Functional::LeastSquares : Functional::Energy;
    const auto reason = j.at("termination").get<std::string>();
    t.reason = reason == "converged"         ? Termination::Converged
               : reason == "alpha_underflow" ? Termination::AlphaUnderflow
                                             : Termination::MaxIterations;
    t.threshold = j.value("threshold", 0.0);
    t.solution = from_std(j.at("solution").get<std::vector<double>>());
    for (const auto& jr : j.at("records")) {
      IterationRecord r;
      r.iter = jr.at("iter").get<int>();
      r.alpha = jr.at("alpha").get<double>();
      r.functional = jr.at("functional").get<double>();
      r.residual = jr.at("residual").get<double>();
      r.success = jr.at("success").get<bool>();
      const auto phase = jr.at("phase").get<std::string>();
      r.phase = phase == "expansion" ? Phase::Expansion : phase == "contraction" ? Phase::Contraction : Phase::Initial;
      if (jr.contains("center")) r.center = from_std(jr.at("center").get<std::vector<double>>());
      if (jr.contains("first_step_best")) r.first_step_best = from_std(jr.at("first_step_best").get<std::vector<double>>());
      t.records.push_back(std::move(r));
    }
    if (t.records.empty()) throw InvalidArgument("trace has no records");
    return t;
  } catch (const nlohmann::json::exception& e) {
    throw InvalidArgument(std::string("malformed trace document: ") + e.what());
  }
}

}  // namespace feq
