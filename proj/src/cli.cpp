#include "glmtilt/cli.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <limits>
#include <optional>
#include <sstream>

#include <CLI11.hpp>

#include "glmtilt/diagnostics.hpp"
#include "glmtilt/io.hpp"
#include "glmtilt/predictor.hpp"
#include "glmtilt/scalar_system.hpp"
#include "glmtilt/simulator.hpp"

namespace glmtilt::cli {

namespace {

using io::Json;

constexpr int kMaxDeskN = 5000;

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::vector<std::string> split_list(const std::string& text) {
  std::vector<std::string> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

double parse_real(const std::string& s, const char* what) {
  try {
    std::size_t used = 0;
    const double x = std::stod(s, &used);
    if (used != s.size()) throw std::invalid_argument(s);
    return x;
  } catch (const std::exception&) {
    throw InvalidArgument(std::string("bad number '") + s + "' in " + what);
  }
}

std::vector<double> parse_real_list(const std::string& text, const char* what) {
  std::vector<double> out;
  for (const std::string& s : split_list(text)) out.push_back(parse_real(s, what));
  return out;
}

std::vector<Eigen::Index> parse_index_list(const std::string& text) {
  std::vector<Eigen::Index> out;
  for (const std::string& s : split_list(text)) {
    const double x = parse_real(s, "--tracked");
    if (x < 0 || x != std::floor(x)) throw InvalidArgument("--tracked: indices must be >= 0");
    out.push_back(static_cast<Eigen::Index>(x));
  }
  return out;
}

struct ProblemOptions {
  std::string model = "linear";
  std::string prior = "gauss:1";
  std::string signal = "gauss:1";
  double delta = kDefaultSmoothing;
  std::optional<double> gamma2;

  void add(CLI::App* app) {
    app->add_option("--model", model, "linear | logistic | binomial:m")->capture_default_str();
    app->add_option("--prior", prior, "gauss:variance | beta:a,b")->capture_default_str();
    app->add_option("--signal", signal,
                    "gauss:variance | rademacher:scale | beta:a,b | point:c | mixture:...")
        ->capture_default_str();
    app->add_option("--delta", delta, "smoothing width of binary-outcome models")
        ->capture_default_str();
    app->add_option("--gamma2", gamma2, "signal strength; defaults to the signal's E[B*^2]");
  }

  Json to_json() const {
    Json j;
    j["model"] = model;
    j["prior"] = prior;
    j["signal"] = signal;
    j["delta"] = delta;
    if (gamma2) j["gamma2"] = *gamma2;
    return j;
  }
};

struct Problem {
  ModelSpec model;
  PriorSpec prior;
  SignalSpec signal;
};

Problem make_problem(const ProblemOptions& o) {
  return {parse_model(o.model, o.delta), parse_prior(o.prior), parse_signal(o.signal)};
}

ProblemParams make_params(const ProblemOptions& o, const SignalSpec& signal, double kappa) {
  ProblemParams p;
  p.kappa = kappa;
  p.gamma2 = o.gamma2.value_or(signal.second_moment);
  p.delta = o.delta;
  p.validate();
  return p;
}

struct SolverOptions {
  SolverConfig config;
  bool no_mc_check = false;

  void add(CLI::App* app) {
    app->add_option("--outer-count", config.outer_count, "outer Monte Carlo draws")
        ->capture_default_str();
    app->add_option("--damping", config.damping, "damping in (0, 1]")->capture_default_str();
    app->add_option("--tol", config.tol, "convergence tolerance")->capture_default_str();
    app->add_option("--max-iter", config.max_iter, "iteration cap")->capture_default_str();
    app->add_option("--mc-tol", config.mc_tol, "allowed shift under a fresh outer set")
        ->capture_default_str();
    app->add_option("--max-outer-count", config.max_outer_count,
                    "largest outer_count reached by the Monte Carlo check")
        ->capture_default_str();
    app->add_flag("--no-mc-check", no_mc_check, "skip the fresh-outer-set re-solve");
  }

  SolverConfig resolved(std::uint64_t seed, int threads) const {
    SolverConfig c = config;
    c.seed = seed;
    c.threads = threads;
    c.mc_check = !no_mc_check;
    return c;
  }
};

struct Common {
  std::string config_path;
  std::uint64_t seed = 1;
  int threads = 1;

  void add(CLI::App* app) {
    app->add_option("--config", config_path, "flat key=value file; flags take precedence");
    app->add_option("--seed", seed, "random seed")->capture_default_str();
    app->add_option("--threads", threads, "worker threads")
        ->capture_default_str()
        ->check(CLI::PositiveNumber);
  }
};

void write_failure(const std::string& path, const std::string& command, const std::string& error,
                   const std::vector<std::string>& trace, const Json& config) {
  if (path.empty()) return;
  Json j;
  j["command"] = command;
  j["status"] = "failed";
  j["error"] = error;
  j["trace"] = trace;
  j["config"] = config;
  try {
    io::write_text(path, io::dump_json(j));
  } catch (const std::exception& e) {
    std::cerr << "error: could not write diagnostics: " << e.what() << "\n";
  }
}

void write_meta(const std::string& data_path, const Json& meta) {
  if (data_path == "-") return;
  io::write_text(data_path + ".meta.json", io::dump_json(meta));
}

// solve ----------------------------------------------------------------------

struct SolveCommand {
  Common common;
  ProblemOptions problem;
  SolverOptions solver;
  double kappa = std::numeric_limits<double>::quiet_NaN();
  std::string out = "solution.json";

  void add(CLI::App* app) {
    common.add(app);
    problem.add(app);
    solver.add(app);
    app->add_option("--kappa", kappa, "aspect ratio p/n")->required();
    app->add_option("--out", out, "output JSON ('-' for stdout)")->capture_default_str();
  }

  Json config_json() const {
    Json j = problem.to_json();
    j["kappa"] = kappa;
    j["seed"] = common.seed;
    j["threads"] = common.threads;
    j["out"] = out;
    j["solver"] = io::to_json(solver.resolved(common.seed, common.threads));
    return j;
  }

  int run() {
    const Problem pr = make_problem(problem);
    const ProblemParams params = make_params(problem, pr.signal, kappa);
    const SolverConfig cfg = solver.resolved(common.seed, common.threads);
    SolutionRecord rec;
    try {
      rec = solve_fixed_point(pr.model, pr.prior, pr.signal, params, cfg);
    } catch (const NumericalError& e) {
      write_failure(out, "solve", e.what(), e.trace(), config_json());
      std::cerr << "numerical failure: " << e.what() << "\n";
      return kExitNumerical;
    }
    Json j = io::to_json(rec, cfg);
    j["config"] = config_json();
    io::write_text(out, io::dump_json(j));
    if (!rec.converged()) {
      std::cerr << "not converged: " << rec.message << "\n";
      return kExitNumerical;
    }
    return kExitOk;
  }
};

// sweep ----------------------------------------------------------------------

struct SweepCommand {
  Common common;
  ProblemOptions problem;
  SolverOptions solver;
  std::string kappa_grid;
  std::string out = "sweep.csv";
  std::string bayes_out;
  std::string mle_csv;
  int bayes_draws = BayesTableOptions{}.draws;
  bool no_warm_start = false;

  void add(CLI::App* app) {
    common.add(app);
    problem.add(app);
    solver.add(app);
    app->add_option("--kappa-grid", kappa_grid, "comma-separated, strictly monotone")
        ->required();
    app->add_option("--out", out, "MSE table CSV")->capture_default_str();
    app->add_option("--bayes-out", bayes_out, "optional Bayes-versus-debiased table CSV");
    app->add_option("--mle-csv", mle_csv, "external MLE constants (kappa, alpha_mle, sigma_mle)");
    app->add_option("--bayes-draws", bayes_draws, "draws for non-Gaussian Bayes coefficients")
        ->capture_default_str();
    app->add_flag("--no-warm-start", no_warm_start, "solve every kappa from the default start");
  }

  Json config_json() const {
    Json j = problem.to_json();
    j["kappa_grid"] = parse_real_list(kappa_grid, "--kappa-grid");
    j["seed"] = common.seed;
    j["threads"] = common.threads;
    j["warm_start"] = !no_warm_start;
    j["out"] = out;
    if (!bayes_out.empty()) {
      j["bayes_out"] = bayes_out;
      j["bayes_draws"] = bayes_draws;
    }
    if (!mle_csv.empty()) j["mle_csv"] = mle_csv;
    j["solver"] = io::to_json(solver.resolved(common.seed, common.threads));
    return j;
  }

  int run() {
    const std::vector<double> grid = parse_real_list(kappa_grid, "--kappa-grid");
    if (grid.empty()) throw InvalidArgument("--kappa-grid is empty");
    const Problem pr = make_problem(problem);
    const ProblemParams base = make_params(problem, pr.signal, grid.front());
    const std::vector<MleConstants> mle =
        mle_csv.empty() ? std::vector<MleConstants>{} : io::read_mle_csv(mle_csv);
    const SolverConfig cfg = solver.resolved(common.seed, common.threads);
    const SweepResult sweep =
        mse_curve(pr.model, pr.prior, pr.signal, grid, base, cfg, !no_warm_start);

    const Json meta = config_json();
    io::write_csv(out, io::mse_table(sweep.rows));
    write_meta(out, meta);

    int failed = 0;
    for (const MseRow& r : sweep.rows) {
      if (r.status != "converged") {
        ++failed;
        std::cerr << "kappa " << io::format_double(r.kappa) << ": " << r.status
                  << (r.message.empty() ? "" : " (" + r.message + ")") << "\n";
      }
    }
    if (!bayes_out.empty()) {
      std::vector<SolutionRecord> ok;
      for (const SolutionRecord& rec : sweep.records) {
        if (rec.converged()) ok.push_back(rec);
      }
      BayesTableOptions bopt;
      bopt.draws = bayes_draws;
      bopt.seed = common.seed;
      const auto rows = bayes_vs_debiased_table(ok, pr.prior, pr.signal, mle, bopt);
      io::write_csv(bayes_out, io::bayes_table(rows));
      write_meta(bayes_out, meta);
    }
    return kExitOk;
  }
};

// simulate -------------------------------------------------------------------

struct SimulateCommand {
  Common common;
  ProblemOptions problem;
  int n = 0;
  double kappa = std::numeric_limits<double>::quiet_NaN();
  HmcConfig hmc;
  std::string tracked = "0";
  bool observed_only = false;
  std::string out_dir = "simulation";

  void add(CLI::App* app) {
    common.add(app);
    problem.add(app);
    app->add_option("--n", n, "observations (at most 5000)")->required();
    app->add_option("--kappa", kappa, "aspect ratio p/n")->required();
    app->add_option("--chains", hmc.chains, "chains")->capture_default_str();
    app->add_option("--draws", hmc.draws, "kept draws per chain")->capture_default_str();
    app->add_option("--tune", hmc.tune, "tuning iterations per chain")->capture_default_str();
    app->add_option("--target-accept", hmc.target_accept, "dual-averaging target")
        ->capture_default_str();
    app->add_option("--leapfrog-steps", hmc.leapfrog_steps, "fixed L; 0 for automatic")
        ->capture_default_str();
    app->add_option("--trajectory-length", hmc.trajectory_length,
                    "fixed integration time; 0 for automatic")
        ->capture_default_str();
    app->add_option("--tracked", tracked, "comma-separated coordinates to record")
        ->capture_default_str();
    app->add_flag("--observed-only", observed_only, "use y instead of the smoothed statistic");
    app->add_option("--out-dir", out_dir, "output directory")->capture_default_str();
  }

  Json config_json() const {
    Json j = problem.to_json();
    j["n"] = n;
    j["kappa"] = kappa;
    j["chains"] = hmc.chains;
    j["draws"] = hmc.draws;
    j["tune"] = hmc.tune;
    j["target_accept"] = hmc.target_accept;
    j["leapfrog_steps"] = hmc.leapfrog_steps;
    j["trajectory_length"] = hmc.trajectory_length;
    j["tracked"] = parse_index_list(tracked);
    j["statistic"] = observed_only ? "observed" : "smoothed";
    j["seed"] = common.seed;
    j["threads"] = common.threads;
    j["out_dir"] = out_dir;
    return j;
  }

  int run() {
    if (n < 10 || n > kMaxDeskN) throw InvalidArgument("--n must lie in [10, 5000]");
    if (hmc.chains < 1 || hmc.draws < 1 || hmc.tune < 0) {
      throw InvalidArgument("--chains and --draws must be positive, --tune non-negative");
    }
    const Problem pr = make_problem(problem);
    make_params(problem, pr.signal, kappa);
    SimulationConfig cfg;
    cfg.hmc = hmc;
    cfg.hmc.seed = common.seed;
    cfg.tracked_coords = parse_index_list(tracked);
    cfg.mode = observed_only ? StatisticMode::ObservedOnly : StatisticMode::Smoothed;

    std::filesystem::create_directories(out_dir);
    const std::string meta_path = (std::filesystem::path(out_dir) / "simulation.meta.json").string();
    const Dataset data = generate_dataset(pr.model, pr.signal, n, kappa, common.seed);
    for (Eigen::Index j : cfg.tracked_coords) {
      if (j >= data.p) throw InvalidArgument("--tracked: coordinate beyond p");
    }
    std::vector<ChainOutput> chains;
    try {
      chains = run_chains(data, pr.model, pr.prior, cfg);
    } catch (const NumericalError& e) {
      write_failure(meta_path, "simulate", e.what(), e.trace(), config_json());
      std::cerr << "numerical failure: " << e.what() << "\n";
      return kExitNumerical;
    }

    Json meta;
    meta["config"] = config_json();
    meta["p"] = data.p;
    meta["data_seed"] = data.seed;
    Json beta_star = Json::object();
    for (Eigen::Index j : cfg.tracked_coords) beta_star[std::to_string(j)] = data.beta_star(j);
    meta["beta_star"] = beta_star;
    meta["beta_star_sq_mean"] = data.beta_star.squaredNorm() / data.p;
    Json chain_meta = Json::array();
    for (const ChainOutput& c : chains) {
      const std::string file = "chain_" + std::to_string(c.chain_id) + ".csv";
      io::write_csv((std::filesystem::path(out_dir) / file).string(), io::chain_table(c));
      double max_energy = 0.0;
      for (double e : c.energy_errors) max_energy = std::max(max_energy, e);
      chain_meta.push_back({{"chain_id", c.chain_id},
                            {"file", file},
                            {"seed", c.seed},
                            {"stream", c.chain_id},
                            {"acceptance_rate", c.acceptance_rate},
                            {"step_size", c.step_size},
                            {"leapfrog_steps", c.leapfrog_steps},
                            {"divergences_tune", c.divergences_tune},
                            {"divergences", c.divergences},
                            {"max_energy_error", max_energy},
                            {"q12_partner", c.q12_partner},
                            {"status", c.status}});
      if (c.status != "ok") {
        std::cerr << "chain " << c.chain_id << ": " << c.divergences << " divergent transitions\n";
      }
    }
    meta["chains"] = chain_meta;
    const OverlapEstimates ov = estimate_overlaps(chains);
    meta["overlaps"] = {{"q11", ov.q11.mean},       {"q11_se", ov.q11.se},
                        {"q1star", ov.q1star.mean}, {"q1star_se", ov.q1star.se}};
    if (ov.q12_available) {
      meta["overlaps"]["q12"] = ov.q12.mean;
      meta["overlaps"]["q12_se"] = ov.q12.se;
    }
    io::write_text(meta_path, io::dump_json(meta));
    return kExitOk;
  }
};

// compare --------------------------------------------------------------------

struct CompareCommand {
  Common common;
  std::string sim_dir;
  std::string chain_files;
  std::string solution;
  std::optional<long> coordinate;
  std::optional<double> beta_star;
  std::string mode = "both";
  int theory_draws = 100000;
  double ks_gate = 0.1;
  std::string out = "compare.json";
  std::string qq_out;

  void add(CLI::App* app) {
    common.add(app);
    app->add_option("--sim-dir", sim_dir, "output directory of simulate");
    app->add_option("--chain-files", chain_files, "comma-separated chain CSVs");
    app->add_option("--solution", solution, "solution JSON written by solve")->required();
    app->add_option("--coordinate", coordinate, "tracked coordinate; all of them pooled if absent");
    app->add_option("--beta-star", beta_star, "true value of the coordinate");
    app->add_option("--mode", mode,
                    "mixture | conditional | both; both gates on the mixture and adds the "
                    "conditional report for a single coordinate")
        ->capture_default_str();
    app->add_option("--theory-draws", theory_draws, "draws from the predicted law")
        ->capture_default_str();
    app->add_option("--ks-gate", ks_gate, "largest KS distance that passes")
        ->capture_default_str();
    app->add_option("--out", out, "report JSON")->capture_default_str();
    app->add_option("--qq-out", qq_out, "QQ pairs CSV; defaults to <out> with .qq.csv");
  }

  Json config_json() const {
    Json j;
    if (!sim_dir.empty()) j["sim_dir"] = sim_dir;
    if (!chain_files.empty()) j["chain_files"] = split_list(chain_files);
    j["solution"] = solution;
    if (coordinate) j["coordinate"] = *coordinate;
    if (beta_star) j["beta_star"] = *beta_star;
    j["mode"] = mode;
    j["theory_draws"] = theory_draws;
    j["ks_gate"] = ks_gate;
    j["seed"] = common.seed;
    j["out"] = out;
    j["qq_out"] = qq_path();
    return j;
  }

  std::string qq_path() const {
    if (!qq_out.empty()) return qq_out;
    std::string base = out;
    if (base.size() > 5 && base.substr(base.size() - 5) == ".json") {
      base.resize(base.size() - 5);
    }
    return base + ".qq.csv";
  }

  int run() {
    if (mode != "mixture" && mode != "conditional" && mode != "both") {
      throw InvalidArgument("--mode must be mixture, conditional or both");
    }
    if (sim_dir.empty() && chain_files.empty()) {
      throw InvalidArgument("compare needs --sim-dir or --chain-files");
    }
    Json sim_meta;
    if (!sim_dir.empty()) {
      const std::string path = (std::filesystem::path(sim_dir) / "simulation.meta.json").string();
      try {
        sim_meta = Json::parse(io::read_text(path));
      } catch (const Json::exception& e) {
        throw InvalidArgument("cannot parse " + path + ": " + e.what());
      }
    }
    std::vector<std::string> files = split_list(chain_files);
    if (files.empty()) {
      for (const Json& c : sim_meta.at("chains")) {
        files.push_back(
            (std::filesystem::path(sim_dir) / c.at("file").get<std::string>()).string());
      }
    }
    Json sol;
    try {
      sol = Json::parse(io::read_text(solution));
    } catch (const Json::exception& e) {
      throw InvalidArgument("cannot parse " + solution + ": " + e.what());
    }
    const SolutionRecord rec = io::record_from_json(sol);
    const PriorSpec prior = parse_prior(rec.prior);

    std::vector<ChainOutput> chains;
    for (const std::string& f : files) chains.push_back(io::chain_from_table(io::read_csv(f)));
    const std::vector<Eigen::Index>& tracked = chains.front().tracked_coords;
    for (const ChainOutput& c : chains) {
      if (c.tracked_coords != tracked) {
        throw InvalidArgument("chain files track different coordinates");
      }
    }
    std::vector<Eigen::Index> coords = tracked;
    if (coordinate) coords = {*coordinate};
    std::vector<double> truth;
    std::vector<std::vector<double>> draws;
    for (Eigen::Index j : coords) {
      const auto it = std::find(tracked.begin(), tracked.end(), j);
      if (it == tracked.end()) throw InvalidArgument("coordinate not tracked by the chains");
      const Eigen::Index col = it - tracked.begin();
      std::vector<double> d;
      for (const ChainOutput& c : chains) {
        for (Eigen::Index r = 0; r < c.draws.rows(); ++r) d.push_back(c.draws(r, col));
      }
      draws.push_back(std::move(d));
      if (beta_star && coords.size() == 1) {
        truth.push_back(*beta_star);
      } else if (!sim_meta.is_null() && sim_meta.at("beta_star").contains(std::to_string(j))) {
        truth.push_back(sim_meta["beta_star"][std::to_string(j)].get<double>());
      } else {
        throw InvalidArgument("beta_star of coordinate " + std::to_string(j) +
                              " unknown; pass --beta-star or --sim-dir");
      }
    }

    ComparisonReport report;
    std::optional<ComparisonReport> conditional;
    if (coords.size() == 1 && mode == "conditional") {
      report = compare_marginal_conditional(draws[0], rec, prior, truth[0], theory_draws,
                                            common.seed, static_cast<long>(coords[0]));
    } else if (coords.size() == 1) {
      report = compare_marginal(draws[0], rec, prior, truth[0], theory_draws, common.seed,
                                static_cast<long>(coords[0]));
      if (mode == "both") {
        conditional = compare_marginal_conditional(draws[0], rec, prior, truth[0], theory_draws,
                                                   common.seed, static_cast<long>(coords[0]));
      }
    } else {
      if (mode == "conditional") {
        throw InvalidArgument("conditional mode needs a single --coordinate");
      }
      report = compare_pooled(draws, truth, rec, prior, theory_draws, common.seed);
    }
    Json j = io::to_json(report);
    j["ks_gate"] = ks_gate;
    j["passed"] = report.ks_distance < ks_gate;
    if (conditional) j["conditional"] = io::to_json(*conditional);
    j["config"] = config_json();
    io::write_text(out, io::dump_json(j));
    io::write_csv(qq_path(), io::qq_table(report.qq_pairs));
    write_meta(qq_path(), config_json());
    std::cout << "ks_distance " << io::format_double(report.ks_distance) << " gate "
              << io::format_double(ks_gate) << (report.ks_distance < ks_gate ? " PASS" : " FAIL")
              << "\n";
    if (conditional) {
      std::cout << "conditional ks_distance " << io::format_double(conditional->ks_distance)
                << " z " << io::format_double(conditional->z_matched) << "\n";
    }
    return report.ks_distance < ks_gate ? kExitOk : kExitGateFailed;
  }
};

// validate -------------------------------------------------------------------

struct ValidateCommand {
  Common common;
  std::string kappa_grid = "0.5,1,2";
  int outer_count = 20000;

  void add(CLI::App* app) {
    common.add(app);
    app->add_option("--kappa-grid", kappa_grid, "kappas for the linear checks")
        ->capture_default_str();
    app->add_option("--outer-count", outer_count, "outer draws per solve")->capture_default_str();
  }

  struct Row {
    std::string name;
    double value;
    double tol;
  };

  int run() {
    std::vector<Row> rows;
    const std::vector<double> grid = parse_real_list(kappa_grid, "--kappa-grid");
    const ModelSpec linear = linear_model();
    const PriorSpec gauss = gaussian_prior(1.0);
    const SignalSpec signal = gaussian_signal(1.0);
    SolverConfig cfg;
    cfg.outer_count = outer_count;
    cfg.seed = common.seed;
    cfg.threads = common.threads;
    cfg.mc_check = false;
    for (double kappa : grid) {
      ProblemParams params;
      params.kappa = kappa;
      params.gamma2 = 1.0;
      const SolutionRecord rec = solve_fixed_point(linear, gauss, signal, params, cfg);
      const double closed = std::sqrt(0.25 * kappa * kappa + 1.0) - 0.5 * kappa;
      const std::string k = io::format_double(kappa);
      rows.push_back({"linear r1 closed form, kappa=" + k, std::abs(rec.tilt.r1 - closed), 1e-3});
      rows.push_back({"linear r2 = r1 - 1, kappa=" + k,
                      std::abs(rec.tilt.r2 - (rec.tilt.r1 - 1.0)), 1e-3});
      const RmtOracle oracle = rmt_linear_oracle(kappa);
      rows.push_back({"RMT marginal variance, kappa=" + k,
                      std::abs(1.0 / (rec.tilt.r1 + 1.0) - oracle.marginal_variance), 1e-3});
    }

    Rng rng = make_stream(common.seed, 7);
    for (const char* m : {"linear", "logistic", "binomial:3"}) {
      const RegularityReport rep = check_model(parse_model(m), rng);
      rows.push_back({std::string("model regularity ") + m, rep.ok() ? 0.0 : 1.0, 0.5});
    }
    for (const char* p : {"gauss:1", "beta:2,2", "beta:2,5"}) {
      const RegularityReport rep = check_prior(parse_prior(p), rng);
      rows.push_back({std::string("prior regularity ") + p, rep.ok() ? 0.0 : 1.0, 0.5});
    }

    {
      const ModelSpec model = logistic_model();
      const PriorSpec prior = beta_prior(2.0, 2.0);
      const Dataset data = generate_dataset(model, beta_signal(2.0, 5.0), 200, 0.5, common.seed);
      const PosteriorTarget target(data, model, prior, StatisticMode::Smoothed);
      std::uniform_real_distribution<double> unif(0.05, 0.95);
      double worst = 0.0;
      Eigen::VectorXd g;
      Eigen::VectorXd tmp;
      for (int k = 0; k < 20; ++k) {
        Eigen::VectorXd b(data.p);
        for (Eigen::Index j = 0; j < data.p; ++j) b(j) = unif(rng);
        target.logdensity_and_grad(b, g);
        Eigen::VectorXd fd(data.p);
        for (Eigen::Index j = 0; j < data.p; ++j) {
          const double h = 1e-5;
          Eigen::VectorXd up = b;
          Eigen::VectorXd dn = b;
          up(j) += h;
          dn(j) -= h;
          fd(j) = (target.logdensity_and_grad(up, tmp) - target.logdensity_and_grad(dn, tmp)) /
                  (2 * h);
        }
        worst = std::max(worst, (g - fd).norm() / std::max(g.norm(), 1e-12));
      }
      rows.push_back({"posterior gradient vs finite differences", worst, 1e-5});
    }

    {
      double worst = 0.0;
      SolutionRecord rec;
      rec.tilt = TiltConstants::from_scores(1.3, 0.4, 0.8, 0.2);
      rec.status = SolveStatus::Converged;
      for (const char* p : {"gauss:1", "beta:2,2", "beta:2,5"}) {
        const PriorSpec prior = parse_prior(p);
        const double lo = std::isfinite(prior.lo) ? prior.lo : -15.0;
        const double hi = std::isfinite(prior.hi) ? prior.hi : 15.0;
        const QuadratureGrid q = simpson_grid(lo, hi, 8192);
        for (double z : {-2.0, 0.0, 1.5}) {
          const Eigen::VectorXd d = marginal_density(rec, prior, 0.5, z, q.nodes);
          worst = std::max(worst, std::abs(q.weights.dot(d) - 1.0));
        }
      }
      rows.push_back({"conditional marginal normalization", worst, 1e-6});
    }

    bool all = true;
    for (const Row& r : rows) {
      const bool pass = r.value < r.tol;
      all = all && pass;
      std::printf("%s  %-48s %.3e (tol %.0e)\n", pass ? "PASS" : "FAIL", r.name.c_str(), r.value,
                  r.tol);
    }
    std::fflush(stdout);
    return all ? kExitOk : kExitNumerical;
  }
};

std::vector<std::string> with_config(const std::vector<std::string>& args) {
  if (args.empty()) return args;
  std::vector<std::string> out = {args.front()};
  std::vector<std::string> rest;
  std::string path;
  for (std::size_t i = 1; i < args.size(); ++i) {
    const std::string& a = args[i];
    if (a == "--config" && i + 1 < args.size()) {
      path = args[++i];
    } else if (a.rfind("--config=", 0) == 0) {
      path = a.substr(9);
    } else {
      rest.push_back(a);
    }
  }
  if (!path.empty()) {
    const auto file_args = config_file_arguments(path);
    out.insert(out.end(), file_args.begin(), file_args.end());
  }
  out.insert(out.end(), rest.begin(), rest.end());
  return out;
}

}  // namespace

std::vector<std::string> config_file_arguments(const std::string& path) {
  std::istringstream in(io::read_text(path));
  std::vector<std::string> out;
  std::string line;
  int number = 0;
  while (std::getline(in, line)) {
    ++number;
    line = trim(line);
    if (line.empty() || line[0] == '#') continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw InvalidArgument(path + ":" + std::to_string(number) + ": expected key=value");
    }
    std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    std::replace(key.begin(), key.end(), '_', '-');
    if (key.empty() || key == "config") {
      throw InvalidArgument(path + ":" + std::to_string(number) + ": bad key");
    }
    out.push_back("--" + key + "=" + value);
  }
  return out;
}

int run(const std::vector<std::string>& raw_args) {
  CLI::App app("Gaussian-tilt predictions and posterior sampling for Bayesian GLMs",
               "glmtilt");
  app.require_subcommand(1);
  app.option_defaults()->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);

  SolveCommand solve;
  SweepCommand sweep;
  SimulateCommand simulate;
  CompareCommand compare;
  ValidateCommand validate;
  CLI::App* s_solve = app.add_subcommand("solve", "solve the fixed-point system at one kappa");
  CLI::App* s_sweep = app.add_subcommand("sweep", "solve over a kappa grid; MSE table CSV");
  CLI::App* s_sim = app.add_subcommand("simulate", "sample posteriors of a synthetic dataset");
  CLI::App* s_cmp = app.add_subcommand("compare", "compare chain draws with the predicted law");
  CLI::App* s_val = app.add_subcommand("validate", "run the oracle checks");
  solve.add(s_solve);
  sweep.add(s_sweep);
  simulate.add(s_sim);
  compare.add(s_cmp);
  validate.add(s_val);

  try {
    std::vector<std::string> args = with_config(raw_args);
    if (!args.empty() && args.front()[0] != '-' && !app.get_subcommand_no_throw(args.front())) {
      std::cerr << "error: unknown command '" << args.front() << "'\n";
      return kExitUsage;
    }
    if (!args.empty() && args.front()[0] != '-') {
      CLI::App* sub = app.get_subcommand(args.front());
      for (std::size_t i = 1; i < args.size(); ++i) {
        const std::string& a = args[i];
        if (a.rfind("--", 0) != 0 || a.find('=') == std::string::npos) continue;
        const std::string name = a.substr(0, a.find('='));
        if (sub->get_option_no_throw(name) == nullptr) {
          std::cerr << "error: unknown key '" << name.substr(2) << "' for " << args.front()
                    << "\n";
          return kExitUsage;
        }
      }
    }
    std::reverse(args.begin(), args.end());
    app.parse(args);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitUsage;
  } catch (const InvalidArgument& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  }

  try {
    if (s_solve->parsed()) return solve.run();
    if (s_sweep->parsed()) return sweep.run();
    if (s_sim->parsed()) return simulate.run();
    if (s_cmp->parsed()) return compare.run();
    if (s_val->parsed()) return validate.run();
  } catch (const InvalidArgument& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const NumericalError& e) {
    std::cerr << "numerical failure: " << e.what() << "\n";
    return kExitNumerical;
  } catch (const std::filesystem::filesystem_error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  }
  return kExitUsage;
}

}  // namespace glmtilt::cli
