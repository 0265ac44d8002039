// feq: iterative annealing solver for finite-element systems.
//
//   feq solve --config run.json [--nodes 51 --sampler sa --seed 3 ...]
//   feq cosine --kind d3 --n 4
//   feq ttt --input out/replay.json --sweeps 10,100,1000
//   feq gen-system --problem poisson2d --case 1 --nodes 10 --out sys.json

#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "feq/app.hpp"

namespace {

struct SolveFlags {
  std::string config;
  std::optional<std::string> problem, method, functional, sampler, output, residual, file;
  std::optional<Eigen::Index> nodes;
  std::optional<int> case_id, reads, sweeps, steps, max_iterations;
  std::optional<double> alpha0, psi_min, length, dt;
  std::optional<std::uint64_t> seed;
  bool no_expansion = false;
};

feq::RunConfig resolve(const SolveFlags& f) {
  feq::RunConfig cfg = f.config.empty() ? feq::RunConfig{} : feq::load_run_config(f.config);
  if (f.problem) cfg.problem.kind = *f.problem;
  if (f.nodes) cfg.problem.nodes = *f.nodes;
  if (f.case_id) cfg.problem.case_id = *f.case_id;
  if (f.length) cfg.problem.length = *f.length;
  if (f.file) cfg.problem.file = *f.file;
  if (f.steps) cfg.problem.steps = *f.steps;
  if (f.dt) cfg.problem.dt = *f.dt;
  if (f.method) cfg.search.method = feq::poll_method_from_string(*f.method);
  if (f.functional) cfg.search.functional = feq::detail::functional_from_string(*f.functional);
  if (f.alpha0) cfg.search.alpha0 = *f.alpha0;
  if (f.psi_min) cfg.search.psi_min = *f.psi_min;
  if (f.residual) {
    if (*f.residual == "normalized") cfg.search.residual_mode = feq::ResidualMode::Normalized;
    else if (*f.residual == "absolute") cfg.search.residual_mode = feq::ResidualMode::Absolute;
    else throw feq::ConfigError("--residual must be normalized or absolute");
  }
  if (f.reads) cfg.search.reads = *f.reads;
  if (f.max_iterations) cfg.search.max_iterations = *f.max_iterations;
  if (f.no_expansion) cfg.search.expansion = false;
  if (f.sampler) cfg.sampler.kind = *f.sampler;
  if (f.sweeps) cfg.sampler.sa.sweeps = *f.sweeps;
  if (f.output) cfg.output_dir = *f.output;
  if (f.seed) cfg.seed = *f.seed;
  return cfg;
}

std::vector<int> parse_grid(const std::string& text) {
  std::vector<int> grid;
  std::istringstream in(text);
  for (std::string item; std::getline(in, item, ',');) {
    if (item.empty()) continue;
    std::size_t used = 0;
    int value = 0;
    try {
      value = std::stoi(item, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used != item.size()) throw feq::ConfigError("ttt: bad sweep count '" + item + "'");
    grid.push_back(value);
  }
  if (grid.empty()) throw feq::ConfigError("ttt: empty sweep grid");
  return grid;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Iterative annealing solver for finite-element linear systems"};
  app.set_version_flag("--version", std::string(feq::kVersion));
  app.require_subcommand(1);

  SolveFlags sf;
  auto* solve = app.add_subcommand("solve", "Solve a problem by iterative annealing");
  solve->add_option("-c,--config", sf.config, "JSON run configuration");
  solve->add_option("--problem", sf.problem, "poisson1d | wave1d | poisson2d | file");
  solve->add_option("--nodes", sf.nodes, "Nodes (per side for poisson2d)");
  solve->add_option("--case", sf.case_id, "Problem case");
  solve->add_option("--length", sf.length, "Domain length");
  solve->add_option("--file", sf.file, "System file for --problem file");
  solve->add_option("--steps", sf.steps, "Time steps (wave1d)");
  solve->add_option("--dt", sf.dt, "Time step (wave1d)");
  solve->add_option("--method", sf.method, "poll2 | poll3 | poll4 | hyperoctant");
  solve->add_option("--functional", sf.functional, "F (energy) or G (least squares)");
  solve->add_option("--alpha0", sf.alpha0, "Initial poll scale");
  solve->add_option("--psi-min", sf.psi_min, "Residual tolerance");
  solve->add_option("--residual", sf.residual, "normalized | absolute");
  solve->add_option("--reads", sf.reads, "Samples per Hamiltonian");
  solve->add_option("--max-iterations", sf.max_iterations, "Iteration cap");
  solve->add_flag("--no-expansion", sf.no_expansion, "Start in the contraction phase");
  solve->add_option("--sampler", sf.sampler, "sa | exhaustive | remote");
  solve->add_option("--sweeps", sf.sweeps, "Simulated annealing sweeps");
  solve->add_option("-o,--output", sf.output, "Output directory");
  solve->add_option("--seed", sf.seed, "Random seed");

  std::string kind = "d3";
  Eigen::Index n = 3;
  int restarts = 1000;
  std::string cosine_out;
  bool as_json = false;
  auto* cosine = app.add_subcommand("cosine", "Estimate the cosine measure of a spin-register spanning set");
  cosine->add_option("--kind", kind, "dplus | d2 | d3 | d4 | d4-literal");
  cosine->add_option("--n", n, "Dimension")->required();
  cosine->add_option("--restarts", restarts, "Random starts");
  cosine->add_option("-o,--output", cosine_out, "Directory for cosine.json");
  cosine->add_flag("--json", as_json, "Print JSON instead of a table");

  feq::TTTOptions topt;
  std::string ttt_input;
  std::string grid_text;
  std::optional<double> t_s, t_ref;
  auto* ttt = app.add_subcommand("ttt", "Time-to-target benchmark of a Hamiltonian or a recorded run");
  ttt->add_option("-i,--input", ttt_input, "Hamiltonian JSON or replay.json from solve")->required();
  ttt->add_option("--sweeps", grid_text, "Comma-separated sweep grid");
  ttt->add_option("--reads", topt.reads, "Samples per distribution");
  ttt->add_option("--q", topt.q, "Target percentile");
  ttt->add_option("--reference", topt.reference, "sa | exhaustive");
  ttt->add_option("--reference-sweeps", topt.reference_sweeps, "Sweeps of the SA reference");
  ttt->add_option("--iterations", topt.iterations, "Iterations sampled from a replay");
  ttt->add_option("--per-iteration", topt.hamiltonians_per_iteration, "Hamiltonians per iteration (1 or 2)");
  ttt->add_option("--sweep-time", t_s, "Seconds per sweep (measured when omitted)");
  ttt->add_option("--reference-time", t_ref, "Seconds per reference sample (measured when omitted)");
  ttt->add_option("--job-overhead", topt.timing.per_job_overhead, "Seconds added once per TTT");
  ttt->add_option("--read-overhead", topt.timing.per_read_overhead, "Seconds added per sample");
  ttt->add_option("--seed", topt.seed, "Random seed");
  ttt->add_option("-o,--output", topt.output_dir, "Output directory");

  feq::ProblemConfig gp;
  std::string gen_out;
  auto* gen = app.add_subcommand("gen-system", "Write the linear system of a benchmark problem");
  gen->add_option("--problem", gp.kind, "poisson1d | poisson2d");
  gen->add_option("--nodes", gp.nodes, "Nodes (per side for poisson2d)");
  gen->add_option("--case", gp.case_id, "Problem case");
  gen->add_option("--length", gp.length, "Domain length");
  gen->add_option("-o,--out", gen_out, "Output file (.json, or .mtx for the matrix alone)")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : feq::kExitConfig;
  }

  try {
    if (*solve) {
      const feq::RunConfig cfg = resolve(sf);
      const auto result = feq::cmd_solve(cfg);
      const auto& m = result.manifest;
      std::cout << m.status << ": " << m.iterations << " iterations";
      if (m.final_residual) std::cout << ", residual " << *m.final_residual;
      std::cout << "\noutputs in " << cfg.output_dir << '\n';
      if (!m.failure.empty()) std::cerr << m.failure << '\n';
      return result.exit_code;
    }
    if (*cosine) {
      const auto set_kind = feq::set_kind_from_string(kind);
      if (as_json) {
        auto r = feq::cmd_cosine(set_kind, n, restarts, cosine_out);
        std::cout << feq::report_to_json(r.report).dump(2) << '\n';
        return r.exit_code;
      }
      return feq::cmd_cosine(set_kind, n, restarts, cosine_out, &std::cout).exit_code;
    }
    if (*ttt) {
      if (ttt->count("--sweeps")) topt.sweep_grid = parse_grid(grid_text);
      topt.timing.sweep_time = t_s;
      topt.timing.reference_sample_time = t_ref;
      const auto r = feq::cmd_ttt(ttt_input, topt);
      if (r.single) std::cout << feq::report_to_json(*r.single).dump(2) << '\n';
      if (r.batch) {
        std::cout << "iterations used: " << r.batch->iterations.size() << ", Hamiltonians: " << r.batch->reports.size()
                  << "\nbest TTT mean " << r.batch->best_ttt.mean << " s (sd " << r.batch->best_ttt.stddev << ")"
                  << "\nratio mean " << r.batch->ratio.mean << " (sd " << r.batch->ratio.stddev << ")\n";
      }
      std::cout << "report in " << topt.output_dir << '\n';
      return r.exit_code;
    }
    if (*gen) {
      feq::cmd_gen_system(gp, gen_out);
      std::cout << "wrote " << gen_out << '\n';
      return feq::kExitOk;
    }
  } catch (const feq::SamplerError& e) {
    std::cerr << "sampler error: " << e.what() << '\n';
    return feq::kExitSampler;
  } catch (const feq::InvalidArgument& e) {
    std::cerr << "error: " << e.what() << '\n';
    return feq::kExitConfig;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return feq::kExitConfig;
}
