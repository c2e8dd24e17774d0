// cprpca: recover, simulate, fullcp, generate.

#include <algorithm>
#include <atomic>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <mutex>
#include <sstream>
#include <thread>

#include "CLI11.hpp"
#include "json.hpp"

#include "cprpca/config.hpp"
#include "cprpca/error.hpp"
#include "cprpca/experiment.hpp"
#include "cprpca/matrix_io.hpp"

namespace fs = std::filesystem;
using namespace cprpca;

namespace {

enum Exit { kOk = 0, kInput = 2, kDegenerate = 3, kBudget = 4, kInternal = 5 };

struct BudgetExceeded : std::runtime_error {
  using std::runtime_error::runtime_error;
};

int exit_code_for(const std::exception& e) {
  if (dynamic_cast<const BudgetExceeded*>(&e)) return kBudget;
  if (dynamic_cast<const InsufficientData*>(&e) || dynamic_cast<const InvalidScale*>(&e))
    return kDegenerate;
  if (dynamic_cast<const InvalidInput*>(&e) || dynamic_cast<const InvalidParameter*>(&e) ||
      dynamic_cast<const UnknownSetting*>(&e) || dynamic_cast<const DimensionError*>(&e))
    return kInput;
  return kInternal;
}

// Shared run options. Values start at defaults, a config file may override
// them, and flags given on the command line override both.
struct RunOptions {
  std::string settings = "1";
  int d = 200;
  int d1 = 0, d2 = 0;
  std::string ranks = "8";
  int rank_true = 8;
  double beta = -1.0;  // negative: the setting's own value
  int reps = 20;
  double alpha = 0.1;
  double q = 0.7;
  int B = 50;
  std::uint64_t seed = 1;
  std::string method = "split";
  std::string obs_model;  // empty: the setting's directive
  std::string out = "out";
  int jobs = 1;
  std::string config;
  bool paper_scale = false;
  bool timing = false;
  int logistic_k = 5;
  std::vector<std::string> solver_overrides;  // key=value
};

void apply_config_file(RunOptions& o, SolverConfig& solver, const CLI::App& app) {
  if (o.config.empty()) return;
  const auto sections = config::load_ini(o.config);
  auto given = [&](const char* flag) { return app.count(flag) > 0; };
  if (auto it = sections.find("run"); it != sections.end()) {
    for (const auto& kv : it->second) {
      const auto& k = kv.key;
      if (k == "setting") { if (!given("--setting")) o.settings = kv.value; }
      else if (k == "d") { if (!given("--d")) o.d = config::to_int(kv, o.config); }
      else if (k == "d1") { if (!given("--d1")) o.d1 = config::to_int(kv, o.config); }
      else if (k == "d2") { if (!given("--d2")) o.d2 = config::to_int(kv, o.config); }
      else if (k == "r") { if (!given("--r")) o.ranks = kv.value; }
      else if (k == "rank_true") { if (!given("--rank-true")) o.rank_true = config::to_int(kv, o.config); }
      else if (k == "beta") { if (!given("--beta")) o.beta = config::to_double(kv, o.config); }
      else if (k == "reps") { if (!given("--reps")) o.reps = config::to_int(kv, o.config); }
      else if (k == "alpha") { if (!given("--alpha")) o.alpha = config::to_double(kv, o.config); }
      else if (k == "q") { if (!given("--q")) o.q = config::to_double(kv, o.config); }
      else if (k == "B") { if (!given("--B")) o.B = config::to_int(kv, o.config); }
      else if (k == "seed") { if (!given("--seed")) o.seed = static_cast<std::uint64_t>(config::to_int(kv, o.config)); }
      else if (k == "method") { if (!given("--method")) o.method = kv.value; }
      else if (k == "obs_model") { if (!given("--obs-model")) o.obs_model = kv.value; }
      else if (k == "jobs") { if (!given("--jobs")) o.jobs = config::to_int(kv, o.config); }
      else throw ParseError(o.config, kv.line, "unknown key '" + k + "' in [run]");
    }
  }
  if (auto it = sections.find("solver"); it != sections.end())
    for (const auto& kv : it->second) {
      try {
        set_solver_option(solver, kv.key, kv.value);
      } catch (const InvalidParameter& e) {
        throw ParseError(o.config, kv.line, e.what());
      }
    }
}

void apply_overrides(const RunOptions& o, SolverConfig& solver) {
  for (const auto& kv : o.solver_overrides) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) throw InvalidInput("--solver expects key=value, got '" + kv + "'");
    set_solver_option(solver, kv.substr(0, eq), kv.substr(eq + 1));
  }
}

void apply_env_seed(RunOptions& o) {
  if (const char* env = std::getenv("CPRPCA_SEED"); env && *env) {
    char* end = nullptr;
    const unsigned long long v = std::strtoull(env, &end, 10);
    if (!end || *end != '\0') throw InvalidInput(std::string("CPRPCA_SEED is not an integer: ") + env);
    o.seed = v;
  }
}

void ensure_writable_dir(const std::string& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw InvalidInput("cannot create output directory '" + dir + "': " + ec.message());
  const fs::path probe = fs::path(dir) / ".cprpca_write_test";
  {
    std::ofstream f(probe);
    if (!f) throw InvalidInput("output directory '" + dir + "' is not writable");
  }
  fs::remove(probe, ec);
}

std::ofstream open_out(const fs::path& p) {
  std::ofstream f(p, std::ios::binary);
  if (!f) throw InvalidInput("cannot write " + p.string());
  return f;
}

nlohmann::json run_options_json(const RunOptions& o, const SolverConfig& s) {
  return {{"settings", o.settings}, {"d1", o.d1},          {"d2", o.d2},
          {"r", o.ranks},           {"rank_true", o.rank_true},
          {"beta", o.beta < 0 ? nlohmann::json("setting") : nlohmann::json(o.beta)},
          {"reps", o.reps},         {"alpha", o.alpha},    {"q", o.q},
          {"B", o.B},               {"seed", o.seed},      {"method", o.method},
          {"obs_model", o.obs_model.empty() ? "setting" : o.obs_model},
          {"jobs", o.jobs},         {"paper_scale", o.paper_scale},
          {"solver", to_json(s)}};
}

void finalize_dims(RunOptions& o) {
  if (o.d1 <= 0) o.d1 = o.d;
  if (o.d2 <= 0) o.d2 = o.d;
  if (o.d1 < 1 || o.d2 < 1) throw InvalidInput("dimensions must be positive");
}

void add_common(CLI::App* c, RunOptions& o) {
  c->add_option("--r", o.ranks, "Assumed rank: single, list or a..b[:step]");
  c->add_option("--beta", o.beta, "Sparsity level");
  c->add_option("--alpha", o.alpha, "Miscoverage level");
  c->add_option("--q", o.q, "Training fraction");
  c->add_option("--B", o.B, "Bootstrap resamples");
  c->add_option("--seed", o.seed, "Base seed (CPRPCA_SEED overrides)");
  c->add_option("--obs-model", o.obs_model, "uniform | logistic | rank1");
  c->add_option("--logistic-k", o.logistic_k, "Latent rank of the logistic model");
  c->add_option("--out", o.out, "Output directory");
  c->add_option("--config", o.config, "INI config file ([run] and [solver])");
  c->add_option("--solver", o.solver_overrides, "Solver override key=value (repeatable)");
}

// ---------------------------------------------------------------------------
// simulate

int cmd_simulate(RunOptions o, SolverConfig solver, const CLI::App& app) {
  apply_config_file(o, solver, app);
  apply_overrides(o, solver);
  apply_env_seed(o);
  if (o.paper_scale) {
    if (!app.count("--d") && !app.count("--d1") && !app.count("--d2")) o.d = 500;
    if (!app.count("--reps")) o.reps = 50;
    if (!app.count("--r")) o.ranks = "4..16:2";
  }
  finalize_dims(o);
  if (o.reps < 1) throw InvalidInput("--reps must be >= 1");
  if (o.jobs < 1) throw InvalidInput("--jobs must be >= 1");
  const std::vector<int> settings = parse_int_list(o.settings);
  const std::vector<int> ranks = parse_int_list(o.ranks);
  if (ranks.empty()) throw InvalidInput("empty rank list");
  const Method method = parse_method(o.method);

  std::vector<SettingSpec> specs;
  for (int id : settings) {
    SettingSpec s = setting_spec(id);
    s.d1 = o.d1;
    s.d2 = o.d2;
    s.rank_true = o.rank_true;
    if (o.beta >= 0.0) s.beta = o.beta;
    s.logistic_k = o.logistic_k;
    s.seed = o.seed;
    specs.push_back(s);
  }
  for (int r : ranks)
    if (r < 1 || r > std::min(o.d1, o.d2)) throw InvalidInput("rank " + std::to_string(r) + " out of range");
  ensure_writable_dir(o.out);

  ExperimentOptions eo;
  eo.method = method;
  eo.alpha = o.alpha;
  eo.q = o.q;
  eo.bootstrap_resamples = o.B;
  eo.solver = solver;
  if (!o.obs_model.empty()) eo.obs_model = parse_observation_kind(o.obs_model);

  struct Task {
    std::size_t spec;
    int r;
    int rep;
  };
  std::vector<Task> tasks;
  for (std::size_t s = 0; s < specs.size(); ++s)
    for (int r : ranks)
      for (int rep = 0; rep < o.reps; ++rep) tasks.push_back({s, r, rep});

  struct Outcome {
    bool ok = false;
    int code = kOk;
    std::string error;
    ReplicateOutput out;
  };
  std::vector<Outcome> results(tasks.size());
  std::atomic<std::size_t> next{0};
  std::mutex log_mu;
  auto worker = [&] {
    for (std::size_t k = next++; k < tasks.size(); k = next++) {
      const Task& t = tasks[k];
      try {
        results[k].out = run_replicate(specs[t.spec], t.r, t.rep, eo);
        results[k].ok = true;
      } catch (const std::exception& e) {
        results[k].code = exit_code_for(e);
        results[k].error = e.what();
        std::lock_guard lock(log_mu);
        std::cerr << "replicate failed: setting=" << specs[t.spec].id << " r=" << t.r
                  << " rep=" << t.rep << ": " << e.what() << '\n';
      }
    }
  };
  const int n_threads = std::min<int>(o.jobs, static_cast<int>(tasks.size()));
  std::vector<std::thread> pool;
  for (int k = 1; k < n_threads; ++k) pool.emplace_back(worker);
  worker();
  for (auto& th : pool) th.join();

  // Task order is fixed by (setting, r, rep), so output bytes do not depend
  // on --jobs. Wall time goes to timings.csv unless --timing asks for it here.
  const fs::path out_dir(o.out);
  auto csv = open_out(out_dir / "results.csv");
  csv << kMetricsHeader << '\n';
  auto times = open_out(out_dir / "timings.csv");
  times << "setting,rep,r,avg_time_s\n";
  std::vector<MetricsRecord> recs;
  std::map<std::pair<int, int>, std::size_t> failures;
  int worst = kOk;
  for (std::size_t k = 0; k < tasks.size(); ++k) {
    if (results[k].ok) {
      const MetricsRecord& m = results[k].out.metrics;
      write_metrics_row(csv, m, o.timing);
      times << m.setting << ',' << m.rep << ',' << m.r << ',' << io::format_double(m.avg_time_s) << '\n';
      recs.push_back(results[k].out.metrics);
    } else {
      ++failures[{specs[tasks[k].spec].id, tasks[k].r}];
      worst = std::max(worst, results[k].code);
    }
  }

  nlohmann::json summary;
  summary["config"] = run_options_json(o, solver);
  summary["cells"] = nlohmann::json::array();
  for (auto c : summarize(recs)) {
    c.failures = failures[{c.setting, c.r}];
    summary["cells"].push_back(to_json(c));
  }
  std::size_t n_fail = 0;
  for (const auto& [key, n] : failures) n_fail += n;
  summary["failures"] = n_fail;
  summary["replicates"] = tasks.size();
  open_out(out_dir / "summary.json") << summary.dump(2) << '\n';

  nlohmann::json manifest;
  manifest["command"] = "simulate";
  manifest["config"] = summary["config"];
  manifest["settings"] = nlohmann::json::array();
  for (const auto& s : specs) manifest["settings"].push_back(to_json(s));
  open_out(out_dir / "manifest.json") << manifest.dump(2) << '\n';

  if (n_fail > 0) {
    std::cerr << n_fail << " of " << tasks.size() << " replicates failed\n";
    return worst == kOk ? kInternal : worst;
  }
  return kOk;
}

// ---------------------------------------------------------------------------
// recover

struct InputFiles {
  std::string y, mask;
};

IndexSet load_mask(const std::string& path, const Matrix& Y) {
  return io::load_index_set(path, static_cast<int>(Y.rows()), static_cast<int>(Y.cols()));
}

int cmd_recover(RunOptions o, SolverConfig solver, const InputFiles& in, const CLI::App& app) {
  apply_config_file(o, solver, app);
  apply_overrides(o, solver);
  apply_env_seed(o);
  const Matrix Y = io::load_matrix(in.y);
  const IndexSet obs = load_mask(in.mask, Y);
  const auto ranks = parse_int_list(o.ranks);
  if (ranks.size() != 1) throw InvalidInput("recover takes a single --r");
  solver.rank = ranks.front();
  if (o.beta >= 0.0) solver.sparsity_beta = o.beta;
  ensure_writable_dir(o.out);
  if (obs.empty()) throw InsufficientData("observation set is empty");
  // Unobserved entries may hold anything in the file; only obs is read.

  SplitCpOptions so;
  so.alpha = o.alpha;
  so.q = o.q;
  so.solver = solver;
  so.bootstrap.resamples = o.B;
  so.obs_model = o.obs_model.empty() ? ObservationKind::Uniform : parse_observation_kind(o.obs_model);
  so.logistic_k = o.logistic_k;
  Rng rng = make_rng(o.seed, 0, 0, Stage::Split);
  const SplitCpResult res = split_cp(Y, obs, so, rng);

  const fs::path dir(o.out);
  io::save_matrix((dir / "Xhat.csv").string(), res.estimate.Xhat);
  io::save_matrix((dir / "Shat.csv").string(), res.estimate.Shat);
  {
    auto f = open_out(dir / "intervals.csv");
    write_intervals_csv(f, res.intervals);
  }
  nlohmann::json report;
  report["calibration"] = to_json(res.calibration);
  report["calibration"].erase("atoms");
  report["n_observed"] = obs.size();
  report["n_targets"] = res.intervals.size();
  report["n_flagged"] = res.omega_star_hat.size();
  report["solver_iterations"] = res.estimate.iters_run;
  report["solver_converged"] = res.estimate.converged;
  report["observation_model"] = to_string(so.obs_model);
  report["warnings"] = res.warnings;
  if (res.intervals.size() == 0) {
    report["notes"] = {"all entries observed: no intervals; average coverage is 1 by convention"};
  }
  report["config"] = run_options_json(o, solver);
  open_out(dir / "report.json") << report.dump(2) << '\n';
  for (const auto& w : res.warnings) std::cerr << "warning: " << w << '\n';
  return kOk;
}

// ---------------------------------------------------------------------------
// fullcp

int cmd_fullcp(RunOptions o, SolverConfig solver, const InputFiles& in, const std::string& targets_path,
               int grid_points, long budget, const CLI::App& app) {
  apply_config_file(o, solver, app);
  apply_overrides(o, solver);
  apply_env_seed(o);
  const Matrix Y = io::load_matrix(in.y);
  const IndexSet obs = load_mask(in.mask, Y);
  const auto ranks = parse_int_list(o.ranks);
  if (ranks.size() != 1) throw InvalidInput("fullcp takes a single --r");
  solver.rank = ranks.front();
  if (o.beta >= 0.0) solver.sparsity_beta = o.beta;
  if (grid_points < 2) throw InvalidInput("--grid must be >= 2");
  ensure_writable_dir(o.out);
  if (obs.empty()) throw InsufficientData("observation set is empty");
  const IndexSet targets = targets_path.empty() ? obs.complement() : load_mask(targets_path, Y);

  const fs::path dir(o.out);
  auto acc = open_out(dir / "accepted.csv");
  auto hull = open_out(dir / "intervals.csv");
  if (targets.empty()) {
    std::cerr << "warning: empty target list, nothing to do\n";
    return kOk;
  }
  const long refits = static_cast<long>(targets.size()) * grid_points;
  if (refits > budget)
    throw BudgetExceeded("full CP needs " + std::to_string(refits) + " refits, budget is " +
                         std::to_string(budget) + "; use fewer targets or a coarser --grid");

  FullCpOptions fo;
  fo.alpha = o.alpha;
  fo.solver = solver;
  fo.obs_model = o.obs_model.empty() ? ObservationKind::Uniform : parse_observation_kind(o.obs_model);
  fo.logistic_k = o.logistic_k;
  Rng rng = make_rng(o.seed, 0, 0, Stage::Misc);
  const auto grid = default_grid(Y, obs, grid_points);
  const auto sets = full_cp(Y, obs, targets, grid, fo, rng);
  for (const auto& s : sets) {
    for (double y : s.accepted)
      acc << s.target.row + 1 << ',' << s.target.col + 1 << ',' << io::format_double(y) << '\n';
    hull << s.target.row + 1 << ',' << s.target.col + 1 << ',';
    if (s.empty())
      hull << "nan,nan\n";
    else
      hull << io::format_double(s.lo()) << ',' << io::format_double(s.hi()) << '\n';
  }
  nlohmann::json report = {{"refits", refits},
                           {"grid_points", grid_points},
                           {"n_targets", sets.size()},
                           {"config", run_options_json(o, solver)}};
  open_out(dir / "report.json") << report.dump(2) << '\n';
  return kOk;
}

// ---------------------------------------------------------------------------
// generate

int cmd_generate(RunOptions o, int rep, const CLI::App& app) {
  SolverConfig unused;
  apply_config_file(o, unused, app);
  apply_env_seed(o);
  finalize_dims(o);
  SettingSpec s = setting_spec(parse_int_list(o.settings).at(0));
  s.d1 = o.d1;
  s.d2 = o.d2;
  s.rank_true = o.rank_true;
  if (o.beta >= 0.0) s.beta = o.beta;
  s.seed = o.seed;
  ensure_writable_dir(o.out);
  dump_ground_truth(gen_setting(s, static_cast<std::uint64_t>(rep)), o.out,
                    static_cast<std::uint64_t>(rep));
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Conformal prediction intervals for robust PCA"};
  app.require_subcommand(1);

  RunOptions sim_o, rec_o, full_o, gen_o;
  SolverConfig base;

  auto* sim = app.add_subcommand("simulate", "Run simulation sweeps");
  sim->add_option("--setting", sim_o.settings, "Setting ids (1-14), list or range");
  sim->add_option("--d", sim_o.d, "Square dimension");
  sim->add_option("--d1", sim_o.d1, "Rows");
  sim->add_option("--d2", sim_o.d2, "Columns");
  sim->add_option("--rank-true", sim_o.rank_true, "True rank");
  sim->add_option("--reps", sim_o.reps, "Replicates per cell");
  sim->add_option("--method", sim_o.method, "split | full | bootstrap-baseline");
  sim->add_option("--jobs", sim_o.jobs, "Worker threads over replicates");
  sim->add_flag("--timing", sim_o.timing, "Also write wall time into results.csv");
  sim->add_flag("--paper-scale", sim_o.paper_scale, "d=500, 50 replicates, r=4..16:2");
  add_common(sim, sim_o);

  InputFiles rec_in;
  auto* rec = app.add_subcommand("recover", "Fit and produce intervals for a data matrix");
  rec->add_option("--Y", rec_in.y, "Data matrix (CSV or .bin)")->required();
  rec->add_option("--mask", rec_in.mask, "Observed entries, 1-based i,j CSV")->required();
  add_common(rec, rec_o);

  InputFiles full_in;
  std::string targets_path;
  int grid_points = 41;
  long budget = 2000;
  auto* full = app.add_subcommand("fullcp", "Full conformal sets for selected entries");
  full->add_option("--Y", full_in.y, "Data matrix (CSV or .bin)")->required();
  full->add_option("--mask", full_in.mask, "Observed entries, 1-based i,j CSV")->required();
  full->add_option("--targets", targets_path, "Target entries, 1-based i,j CSV (default: all unobserved)");
  full->add_option("--grid", grid_points, "Candidate grid size");
  full->add_option("--budget", budget, "Maximum number of refits");
  add_common(full, full_o);

  int gen_rep = 0;
  auto* gen = app.add_subcommand("generate", "Write one simulated data set");
  gen->add_option("--setting", gen_o.settings, "Setting id");
  gen->add_option("--d", gen_o.d, "Square dimension");
  gen->add_option("--d1", gen_o.d1, "Rows");
  gen->add_option("--d2", gen_o.d2, "Columns");
  gen->add_option("--rank-true", gen_o.rank_true, "True rank");
  gen->add_option("--beta", gen_o.beta, "Sparsity level");
  gen->add_option("--seed", gen_o.seed, "Seed (CPRPCA_SEED overrides)");
  gen->add_option("--rep", gen_rep, "Replicate index");
  gen->add_option("--out", gen_o.out, "Output directory");
  gen->add_option("--config", gen_o.config, "INI config file");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kOk : kInput;
  }

  try {
    if (*sim) return cmd_simulate(sim_o, base, *sim);
    if (*rec) return cmd_recover(rec_o, base, rec_in, *rec);
    if (*full) return cmd_fullcp(full_o, base, full_in, targets_path, grid_points, budget, *full);
    if (*gen) return cmd_generate(gen_o, gen_rep, *gen);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return exit_code_for(e);
  }
  return kInternal;
}
