#pragma once

// Run configuration, output files and the four command entry points used by
// the feq executable.

#include <chrono>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "feq/feq.hpp"
#include "feq/remote_sampler.hpp"

namespace feq {

inline constexpr const char* kVersion = "0.3.0";

/// Exit statuses of the command-line tool.
enum ExitCode : int { kExitOk = 0, kExitConfig = 2, kExitSampler = 3, kExitTolerance = 4 };

class ConfigError : public InvalidArgument {
 public:
  using InvalidArgument::InvalidArgument;
};

struct ProblemConfig {
  std::string kind = "poisson1d";  // poisson1d | wave1d | poisson2d | file
  Index nodes = 25;                // per side for poisson2d
  double length = 1.0;
  int case_id = 1;
  std::string file;
  // wave1d
  int steps = 4;
  std::optional<double> dt;  // default 0.1 L / c
  double wave_speed = 1.0;
};

struct SamplerConfig {
  std::string kind = "sa";  // sa | exhaustive | remote
  SaConfig sa;
  nlohmann::json remote = nlohmann::json::object();
};

struct RunConfig {
  ProblemConfig problem;
  SearchConfig search;
  SamplerConfig sampler;
  std::string output_dir = "feq-out";
  std::uint64_t seed = 0;
};

namespace detail {

template <class T>
void read_field(const nlohmann::json& j, const char* key, T& out) {
  if (j.contains(key)) out = j.at(key).get<T>();
}

template <class T>
void read_field(const nlohmann::json& j, const char* key, std::optional<T>& out) {
  if (j.contains(key) && !j.at(key).is_null()) out = j.at(key).get<T>();
}

inline void reject_unknown(const nlohmann::json& j, std::initializer_list<const char*> keys, const std::string& where) {
  if (!j.is_object()) throw ConfigError(where + " must be an object");
  for (const auto& [k, v] : j.items()) {
    bool ok = false;
    for (const char* allowed : keys) ok = ok || k == allowed;
    if (!ok) throw ConfigError("unknown key '" + k + "' in " + where);
  }
}

inline Functional functional_from_string(const std::string& s) {
  if (s == "F" || s == "energy") return Functional::Energy;
  if (s == "G" || s == "least_squares") return Functional::LeastSquares;
  throw ConfigError("unknown functional '" + s + "'");
}

}  // namespace detail

/// Parses the JSON run document. Missing fields keep their defaults.
inline RunConfig run_config_from_json(const nlohmann::json& j) {
  using detail::read_field;
  RunConfig cfg;
  try {
    detail::reject_unknown(j, {"problem", "search", "sampler", "output_dir", "seed"}, "config");
    read_field(j, "output_dir", cfg.output_dir);
    read_field(j, "seed", cfg.seed);
    if (j.contains("problem")) {
      const auto& p = j.at("problem");
      detail::reject_unknown(p, {"kind", "nodes", "length", "case", "file", "steps", "dt", "wave_speed"}, "problem");
      read_field(p, "kind", cfg.problem.kind);
      read_field(p, "nodes", cfg.problem.nodes);
      read_field(p, "length", cfg.problem.length);
      read_field(p, "case", cfg.problem.case_id);
      read_field(p, "file", cfg.problem.file);
      read_field(p, "steps", cfg.problem.steps);
      read_field(p, "dt", cfg.problem.dt);
      read_field(p, "wave_speed", cfg.problem.wave_speed);
    }
    if (j.contains("search")) {
      const auto& s = j.at("search");
      detail::reject_unknown(s,
                             {"method", "functional", "alpha0", "psi_min", "residual", "reads", "expansion", "growth",
                              "shrink", "max_iterations"},
                             "search");
      if (s.contains("method")) cfg.search.method = poll_method_from_string(s.at("method").get<std::string>());
      if (s.contains("functional"))
        cfg.search.functional = detail::functional_from_string(s.at("functional").get<std::string>());
      read_field(s, "alpha0", cfg.search.alpha0);
      read_field(s, "psi_min", cfg.search.psi_min);
      if (s.contains("residual")) {
        const auto mode = s.at("residual").get<std::string>();
        if (mode == "normalized") cfg.search.residual_mode = ResidualMode::Normalized;
        else if (mode == "absolute") cfg.search.residual_mode = ResidualMode::Absolute;
        else throw ConfigError("residual must be 'normalized' or 'absolute'");
      }
      read_field(s, "reads", cfg.search.reads);
      read_field(s, "expansion", cfg.search.expansion);
      read_field(s, "growth", cfg.search.growth);
      read_field(s, "shrink", cfg.search.shrink);
      read_field(s, "max_iterations", cfg.search.max_iterations);
    }
    if (j.contains("sampler")) {
      const auto& s = j.at("sampler");
      if (!s.is_object()) throw ConfigError("sampler must be an object");
      read_field(s, "kind", cfg.sampler.kind);
      if (cfg.sampler.kind == "remote") {
        cfg.sampler.remote = s;
      } else {
        detail::reject_unknown(s, {"kind", "sweeps", "t_hot", "t_cold"}, "sampler");
        read_field(s, "sweeps", cfg.sampler.sa.sweeps);
        read_field(s, "t_hot", cfg.sampler.sa.t_hot);
        read_field(s, "t_cold", cfg.sampler.sa.t_cold);
      }
    }
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
  return cfg;
}

inline nlohmann::json run_config_to_json(const RunConfig& cfg) {
  nlohmann::json p = {{"kind", cfg.problem.kind},   {"nodes", cfg.problem.nodes}, {"length", cfg.problem.length},
                      {"case", cfg.problem.case_id}, {"steps", cfg.problem.steps},
                      {"wave_speed", cfg.problem.wave_speed}};
  if (!cfg.problem.file.empty()) p["file"] = cfg.problem.file;
  if (cfg.problem.dt) p["dt"] = *cfg.problem.dt;
  nlohmann::json s = {{"method", to_string(cfg.search.method)},
                      {"functional", to_string(cfg.search.functional)},
                      {"psi_min", cfg.search.psi_min},
                      {"residual", cfg.search.residual_mode == ResidualMode::Normalized ? "normalized" : "absolute"},
                      {"reads", cfg.search.reads},
                      {"expansion", cfg.search.expansion},
                      {"growth", cfg.search.growth},
                      {"shrink", cfg.search.shrink},
                      {"max_iterations", cfg.search.max_iterations}};
  if (cfg.search.alpha0) s["alpha0"] = *cfg.search.alpha0;
  nlohmann::json sm;
  if (cfg.sampler.kind == "remote") {
    sm = cfg.sampler.remote;
    sm.erase("token");
    sm["kind"] = "remote";
  } else {
    sm = {{"kind", cfg.sampler.kind}, {"sweeps", cfg.sampler.sa.sweeps}};
    if (cfg.sampler.sa.t_hot) sm["t_hot"] = *cfg.sampler.sa.t_hot;
    if (cfg.sampler.sa.t_cold) sm["t_cold"] = *cfg.sampler.sa.t_cold;
  }
  return {{"problem", p}, {"search", s}, {"sampler", sm}, {"output_dir", cfg.output_dir}, {"seed", cfg.seed}};
}

inline RunConfig load_run_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("config " + path + ": " + e.what());
  }
  return run_config_from_json(j);
}

inline void validate(const RunConfig& cfg) {
  const auto& p = cfg.problem;
  if (p.kind == "poisson1d") {
    if (p.nodes < 3) throw ConfigError("poisson1d needs at least 3 nodes");
  } else if (p.kind == "wave1d") {
    if (p.case_id < 1 || p.case_id > 5) throw ConfigError("wave1d case must be 1..5");
    if (p.nodes < 3) throw ConfigError("wave1d needs at least 3 nodes");
    if (p.steps < 1) throw ConfigError("wave1d needs at least one step");
    if (p.dt && !(*p.dt > 0.0)) throw ConfigError("dt must be positive");
  } else if (p.kind == "poisson2d") {
    if (p.case_id < 1 || p.case_id > 2) throw ConfigError("poisson2d case must be 1 or 2");
    if (p.nodes < 3) throw ConfigError("poisson2d needs at least 3 nodes per side");
  } else if (p.kind == "file") {
    if (p.file.empty()) throw ConfigError("problem kind 'file' needs a file");
  } else {
    throw ConfigError("unknown problem kind '" + p.kind + "'");
  }
  if (!(p.length > 0.0)) throw ConfigError("length must be positive");
  if (cfg.sampler.kind != "sa" && cfg.sampler.kind != "exhaustive" && cfg.sampler.kind != "remote")
    throw ConfigError("unknown sampler '" + cfg.sampler.kind + "'");
  try {
    cfg.search.validate();
    cfg.sampler.sa.validate();
  } catch (const ConfigError&) {
    throw;
  } catch (const InvalidArgument& e) {
    throw ConfigError(e.what());
  }
  if (cfg.output_dir.empty()) throw ConfigError("output_dir must not be empty");
}

inline std::unique_ptr<Sampler> make_sampler(const SamplerConfig& cfg) {
  if (cfg.kind == "sa") return std::make_unique<SimulatedAnnealingSampler>(cfg.sa);
  if (cfg.kind == "exhaustive") return std::make_unique<ExhaustiveSampler>();
  if (cfg.kind == "remote") {
    try {
      return std::make_unique<RemoteSampler>(endpoint_from_json(cfg.remote));
    } catch (const nlohmann::json::exception& e) {
      throw ConfigError(std::string("remote sampler: ") + e.what());
    } catch (const InvalidArgument& e) {
      throw ConfigError(e.what());
    }
  }
  throw ConfigError("unknown sampler '" + cfg.kind + "'");
}

/// Static systems (everything except wave1d).
inline LinearSystem build_system(const ProblemConfig& p) {
  if (p.kind == "poisson1d") return poisson1d_problem(p.nodes, p.length);
  if (p.kind == "poisson2d") return poisson2d_problem(p.case_id, p.nodes, p.length);
  if (p.kind == "file") return load_system(p.file);
  throw ConfigError("problem kind '" + p.kind + "' has no single linear system");
}

inline double wave_time_step(const ProblemConfig& p) { return p.dt.value_or(0.1 * p.length / p.wave_speed); }

// ---------------------------------------------------------------------------
// Manifest

struct RunManifest {
  nlohmann::json config;
  std::string version = kVersion;
  std::string started;
  std::string finished;
  std::vector<std::string> outputs;
  std::optional<double> final_residual;
  int iterations = 0;
  std::string status = "running";
  std::string failure;
  int exit_code = kExitOk;
};

inline std::string utc_timestamp() {
  const std::time_t t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&t, &tm);
  std::ostringstream s;
  s << std::put_time(&tm, "%Y-%m-%dT%H:%M:%SZ");
  return s.str();
}

inline nlohmann::json manifest_to_json(const RunManifest& m) {
  nlohmann::json j = {{"config", m.config},     {"version", m.version},     {"started", m.started},
                      {"finished", m.finished}, {"outputs", m.outputs},     {"iterations", m.iterations},
                      {"status", m.status},     {"exit_code", m.exit_code}};
  j["final_residual"] = m.final_residual ? nlohmann::json(*m.final_residual) : nlohmann::json(nullptr);
  if (!m.failure.empty()) j["failure"] = m.failure;
  return j;
}

/// Writes manifest.json, listing only outputs that exist on disk.
inline void write_manifest(const std::filesystem::path& dir, RunManifest& m) {
  m.finished = utc_timestamp();
  std::vector<std::string> present;
  for (const auto& f : m.outputs)
    if (std::filesystem::exists(dir / f)) present.push_back(f);
  m.outputs = std::move(present);
  std::ofstream out(dir / "manifest.json");
  out << manifest_to_json(m).dump(2) << '\n';
}

namespace detail {

inline void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path.string());
  out << text;
}

inline std::string solution_csv(const Vector& u) {
  std::ostringstream s;
  s.precision(17);
  s << "node,u\n";
  for (Index k = 0; k < u.size(); ++k) s << k << ',' << u[k] << '\n';
  return s.str();
}

inline std::string trace_csv(const SearchTrace& t) {
  std::ostringstream s;
  write_trace_csv(s, t);
  return s.str();
}

}  // namespace detail

struct SolveResult {
  RunManifest manifest;
  std::vector<SearchTrace> traces;  // one per solve (one per time step for wave1d)
  std::vector<Vector> snapshots;    // wave1d: initial state plus one per step
  int exit_code = kExitOk;
};

/// Runs the configured problem, writing into cfg.output_dir:
///   trace.csv / trace_stepK.csv, solution.csv or snapshots.csv,
///   replay.json (system + trace, for the ttt command), manifest.json.
inline SolveResult cmd_solve(const RunConfig& cfg) {
  validate(cfg);
  namespace fs = std::filesystem;
  const fs::path dir(cfg.output_dir);
  SolveResult result;
  RunManifest& m = result.manifest;
  m.config = run_config_to_json(cfg);
  m.started = utc_timestamp();
  auto sampler = make_sampler(cfg.sampler);
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw ConfigError("cannot create output directory " + dir.string() + ": " + ec.message());

  SearchConfig search = cfg.search;
  search.seed = cfg.seed;
  try {
    if (cfg.problem.kind == "wave1d") {
      const WaveProblem wp = wave_problem(cfg.problem.case_id, cfg.problem.nodes, cfg.problem.length,
                                          cfg.problem.wave_speed);
      NewmarkState state = newmark_initial(wp, wave_time_step(cfg.problem));
      result.snapshots.push_back(state.u);
      int step = 0;
      const SystemSolver solver = [&](const LinearSystem& eff) {
        SearchConfig sc = search;
        sc.seed = derive_seed(cfg.seed, static_cast<std::uint64_t>(step));
        SearchTrace t = run(eff, sc, *sampler);
        const std::string name = "trace_step" + std::to_string(step) + ".csv";
        detail::write_text(dir / name, detail::trace_csv(t));
        m.outputs.push_back(name);
        m.iterations += t.iterations();
        m.final_residual = t.final_residual();
        Vector a = t.solution;
        result.traces.push_back(std::move(t));
        return a;
      };
      for (step = 1; step <= cfg.problem.steps; ++step) {
        state = newmark_step(state, wp.K, wp.boundary, solver);
        result.snapshots.push_back(state.u);
      }
      std::ostringstream s;
      s.precision(17);
      s << "x";
      for (std::size_t k = 0; k < result.snapshots.size(); ++k) s << ",t" << k;
      s << '\n';
      for (Index i = 0; i < wp.mesh.node_count(); ++i) {
        s << wp.mesh.x(i);
        for (const auto& snap : result.snapshots) s << ',' << snap[i];
        s << '\n';
      }
      detail::write_text(dir / "snapshots.csv", s.str());
      m.outputs.push_back("snapshots.csv");
    } else {
      const LinearSystem sys = build_system(cfg.problem);
      search.record_iterates = search.method == PollMethod::Hyperoctant;
      SearchTrace t = run(sys, search, *sampler);
      detail::write_text(dir / "trace.csv", detail::trace_csv(t));
      m.outputs.push_back("trace.csv");
      detail::write_text(dir / "solution.csv", detail::solution_csv(t.solution));
      m.outputs.push_back("solution.csv");
      nlohmann::json replay = {{"system", to_json(sys)}, {"trace", trace_to_json(t)}};
      detail::write_text(dir / "replay.json", replay.dump() + "\n");
      m.outputs.push_back("replay.json");
      m.iterations = t.iterations();
      m.final_residual = t.final_residual();
      result.traces.push_back(std::move(t));
    }
  } catch (const SamplerError& e) {
    m.status = "failed";
    m.failure = std::string("sampler error: ") + e.what();
    m.exit_code = result.exit_code = kExitSampler;
    write_manifest(dir, m);
    return result;
  }
  bool ok = !result.traces.empty();
  for (const auto& t : result.traces) ok = ok && t.converged();
  if (ok) {
    m.status = "converged";
  } else {
    m.status = "tolerance_not_reached";
    m.failure = "residual tolerance not reached";
    m.exit_code = result.exit_code = kExitTolerance;
  }
  write_manifest(dir, m);
  return result;
}

// ---------------------------------------------------------------------------
// cosine

struct CosineResult {
  CosineMeasureReport report;
  int exit_code = kExitOk;
};

/// Estimates cm for a generated set; exit 0 iff the closed form, when one
/// exists, is matched within 1e-3.
inline CosineResult cmd_cosine(SetKind kind, Index n, int restarts, const std::string& output_dir = {},
                               std::ostream* table = nullptr) {
  if (restarts < 1) throw ConfigError("restarts must be >= 1");
  const SpanningSet set = generate(kind, n);
  CosineResult r;
  r.report = cosine_measure(set, restarts);
  r.exit_code = r.report.matches_closed_form(1e-3) ? kExitOk : kExitTolerance;
  if (table) write_report_table(*table, r.report);
  if (!output_dir.empty()) {
    std::filesystem::create_directories(output_dir);
    detail::write_text(std::filesystem::path(output_dir) / "cosine.json", report_to_json(r.report).dump(2) + "\n");
  }
  return r;
}

// ---------------------------------------------------------------------------
// ttt

struct TTTOptions {
  std::vector<int> sweep_grid = {10, 20, 40, 100, 200, 400, 1000, 2000, 4000, 10000};
  int reads = 1000;
  double q = 10.0;
  std::string reference = "sa";  // sa | exhaustive
  int reference_sweeps = 1000;
  int iterations = 20;
  int hamiltonians_per_iteration = 2;
  TimingModel timing;
  std::uint64_t seed = 0;
  std::string output_dir = "feq-ttt";
};

struct TTTResult {
  std::optional<TTTReport> single;
  std::optional<BatchTTTReport> batch;
  int exit_code = kExitOk;
};

/// `input` holds either a Hamiltonian ({linear, quadratic, offset}) or a
/// replay file written by `solve` ({system, trace}).
inline TTTResult cmd_ttt(const std::string& input, const TTTOptions& opt) {
  if (opt.sweep_grid.empty()) throw ConfigError("ttt: empty sweep grid");
  if (opt.reads < 100) throw ConfigError("ttt: need at least 100 reads");
  if (!(opt.q > 0.0 && opt.q < 100.0)) throw ConfigError("ttt: percentile must be in (0, 100)");
  nlohmann::json doc;
  {
    std::ifstream in(input);
    if (!in) throw ConfigError("cannot read " + input);
    try {
      in >> doc;
    } catch (const nlohmann::json::exception& e) {
      throw ConfigError("ttt input " + input + ": " + e.what());
    }
  }
  std::unique_ptr<Sampler> reference;
  if (opt.reference == "sa") {
    SaConfig rc;
    rc.sweeps = opt.reference_sweeps;
    reference = std::make_unique<SimulatedAnnealingSampler>(rc);
  } else if (opt.reference == "exhaustive") {
    reference = std::make_unique<ExhaustiveSampler>();
  } else {
    throw ConfigError("unknown reference sampler '" + opt.reference + "'");
  }
  namespace fs = std::filesystem;
  fs::create_directories(opt.output_dir);
  const fs::path dir(opt.output_dir);
  TTTResult r;
  try {
    if (doc.contains("trace")) {
      const LinearSystem sys = system_from_json(doc.at("system"));
      const SearchTrace trace = trace_from_json(doc.at("trace"));
      r.batch = batch_ttt_over_iterations(sys, trace, opt.iterations, opt.hamiltonians_per_iteration, *reference,
                                          SaConfig{}, opt.sweep_grid, opt.reads, opt.q, opt.timing, opt.seed);
      detail::write_text(dir / "ttt.json", report_to_json(*r.batch).dump(2) + "\n");
      std::ostringstream csv;
      csv << "hamiltonian,iteration,sweeps,p_hat,stt,sample_time_s,ttt_s\n";
      for (std::size_t k = 0; k < r.batch->reports.size(); ++k) {
        std::ostringstream one;
        write_ttt_csv(one, r.batch->reports[k]);
        std::string line;
        std::istringstream lines(one.str());
        std::getline(lines, line);  // header
        const int iter = r.batch->iterations[k / static_cast<std::size_t>(opt.hamiltonians_per_iteration)];
        while (std::getline(lines, line)) csv << k << ',' << iter << ',' << line << '\n';
      }
      detail::write_text(dir / "ttt.csv", csv.str());
    } else {
      const StandardIsing H = ising_from_json(doc);
      r.single = ttt_compare(H, *reference, SaConfig{}, opt.sweep_grid, opt.reads, opt.q, opt.timing, opt.seed);
      detail::write_text(dir / "ttt.json", report_to_json(*r.single).dump(2) + "\n");
      std::ostringstream csv;
      write_ttt_csv(csv, *r.single);
      detail::write_text(dir / "ttt.csv", csv.str());
    }
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("ttt input: ") + e.what());
  }
  return r;
}

// ---------------------------------------------------------------------------
// gen-system

/// Writes the system of a static problem (JSON), or with a .mtx extension
/// the matrix alone in 0-based Matrix Market.
inline void cmd_gen_system(const ProblemConfig& p, const std::string& path) {
  const LinearSystem sys = build_system(p);
  if (std::filesystem::path(path).extension() == ".mtx") {
    std::ofstream out(path);
    if (!out) throw ConfigError("cannot write " + path);
    write_matrix_market(out, sys.A);
  } else {
    save_system(path, sys);
  }
}

}  // namespace feq
