#include "cprpca/experiment.hpp"

#include <algorithm>
#include <charconv>
#include <chrono>
#include <iterator>

#include "cprpca/error.hpp"

namespace cprpca {

Method parse_method(const std::string& s) {
  if (s == "split") return Method::Split;
  if (s == "full") return Method::Full;
  if (s == "bootstrap-baseline" || s == "baseline") return Method::Baseline;
  throw InvalidParameter("unknown method '" + s + "'");
}

std::string to_string(Method m) {
  switch (m) {
    case Method::Split: return "split";
    case Method::Full: return "full";
    case Method::Baseline: return "bootstrap-baseline";
  }
  return "?";
}

std::vector<int> parse_int_list(const std::string& s) {
  auto to_int = [&](std::string_view t) {
    int v = 0;
    const auto* end = t.data() + t.size();
    const auto [ptr, ec] = std::from_chars(t.data(), end, v);
    if (ec != std::errc() || ptr != end || t.empty())
      throw InvalidInput("bad integer list '" + s + "'");
    return v;
  };
  std::vector<int> out;
  if (const auto dots = s.find(".."); dots != std::string::npos) {
    const std::string_view rest = std::string_view(s).substr(dots + 2);
    const auto colon = rest.find(':');
    const int a = to_int(std::string_view(s).substr(0, dots));
    const int b = to_int(rest.substr(0, colon));
    const int step = colon == std::string_view::npos ? 1 : to_int(rest.substr(colon + 1));
    if (step < 1 || b < a) throw InvalidInput("bad range '" + s + "'");
    for (int v = a; v <= b; v += step) out.push_back(v);
    return out;
  }
  std::size_t start = 0;
  while (start <= s.size()) {
    const auto comma = s.find(',', start);
    const auto end = comma == std::string::npos ? s.size() : comma;
    out.push_back(to_int(std::string_view(s).substr(start, end - start)));
    if (comma == std::string::npos) break;
    start = comma + 1;
  }
  return out;
}

nlohmann::json to_json(const SolverConfig& c) {
  nlohmann::json j = {{"rank", c.rank},
                      {"sparsity_beta", c.sparsity_beta},
                      {"gamma", c.gamma},
                      {"budget_slack", c.budget_slack},
                      {"max_iters", c.max_iters},
                      {"tol", c.tol},
                      {"init_iters", c.init_iters},
                      {"init_eta", c.init_eta},
                      {"lambda", c.lambda},
                      {"zeta_c0", c.zeta_c0},
                      {"dykstra_sweeps", c.dykstra_sweeps},
                      {"flag_gamma", c.flag_gamma}};
  j["eta"] = c.eta ? nlohmann::json(*c.eta) : nlohmann::json("auto");
  j["init_step"] = c.init_step ? nlohmann::json(*c.init_step) : nlohmann::json("auto");
  return j;
}

namespace {

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::vector<Entry> sample_entries(const IndexSet& s, int n, Rng& rng) {
  std::vector<Entry> all = s.entries();
  if (static_cast<int>(all.size()) <= n) return all;
  std::vector<Entry> out;
  std::sample(all.begin(), all.end(), std::back_inserter(out), n, rng);
  return out;
}

}  // namespace

ReplicateOutput run_replicate(const SettingSpec& spec, int r, int rep,
                              const ExperimentOptions& opt) {
  const GroundTruth g = gen_setting(spec, static_cast<std::uint64_t>(rep));
  const Matrix truth = g.target();
  const auto sid = static_cast<std::uint64_t>(spec.id);
  const auto urep = static_cast<std::uint64_t>(rep);

  ReplicateOutput out;
  MetricsRecord& m = out.metrics;
  m.setting = spec.id;
  m.rep = rep;
  m.r = r;
  m.seed = spec.seed;

  SolverConfig cfg = opt.solver;
  cfg.rank = r;
  cfg.sparsity_beta = spec.beta;
  const ObservationKind kind = opt.obs_model.value_or(spec.estimate_with);
  // Keyed by replicate only, so every rank in a sweep sees the same split.
  Rng rng = make_rng(spec.seed, sid, urep, Stage::Split);

  const auto t0 = std::chrono::steady_clock::now();
  switch (opt.method) {
    case Method::Split: {
      SplitCpOptions so;
      so.alpha = opt.alpha;
      so.q = opt.q;
      so.solver = cfg;
      so.bootstrap.resamples = opt.bootstrap_resamples;
      so.obs_model = kind;
      so.logistic_k = spec.logistic_k;
      if (kind == ObservationKind::Explicit) so.known_model = g.model;
      const SplitCpResult res = split_cp(g.Y, g.mask, so, rng);
      m.avg_time_s = seconds_since(t0);
      out.warnings = res.warnings;
      m.n_targets = res.intervals.size();
      m.avg_cov = avg_cov(truth, res.intervals);
      if (res.intervals.size() > 0) {
        const LengthSummary len = avg_length(res.intervals);
        m.avg_length = len.value;
        m.length_infinite = len.infinite;
      }
      m.omega_max = res.calibration.omega_max;
      const IndexSet& trimmed = res.calibration.trimmed_cal;
      if (res.fitted_model && !trimmed.empty()) {
        Rng tp = make_rng(spec.seed, sid, urep, Stage::TestPoints);
        const auto tests = sample_entries(res.intervals.targets, opt.delta_test_points, tp);
        double acc = 0.0;
        for (const Entry t : tests) acc += delta_gap(*g.model, *res.fitted_model, trimmed, t);
        m.delta_hat = tests.empty() ? 0.0 : acc / static_cast<double>(tests.size());
        m.xi_hat = xi_gap(trimmed, res.calibration.cal_weights,
                          trimmed.intersect(IndexSet::support(g.Sstar)));
      }
      break;
    }
    case Method::Baseline: {
      BootstrapOptions bo;
      bo.resamples = opt.bootstrap_resamples;
      // Its scale sets the interval width, so refits start from scratch.
      bo.warm_start = false;
      const BaselineResult res = bootstrap_baseline(g.Y, g.mask, opt.alpha, cfg, bo, rng);
      m.avg_time_s = seconds_since(t0);
      m.n_targets = res.intervals.size();
      m.avg_cov = avg_cov(truth, res.intervals);
      if (res.intervals.size() > 0) m.avg_length = avg_length(res.intervals).value;
      break;
    }
    case Method::Full: {
      FullCpOptions fo;
      fo.alpha = opt.alpha;
      fo.solver = cfg;
      fo.obs_model = kind;
      fo.logistic_k = spec.logistic_k;
      if (kind == ObservationKind::Explicit) fo.known_model = g.model;
      Rng tp = make_rng(spec.seed, sid, urep, Stage::TestPoints);
      const auto picked = sample_entries(g.mask.complement(), opt.full_targets, tp);
      const IndexSet targets = IndexSet::from_entries(g.Y.rows(), g.Y.cols(), picked);
      const auto grid = default_grid(g.Y, g.mask, opt.full_grid);
      const auto sets = full_cp(g.Y, g.mask, targets, grid, fo, rng);
      m.avg_time_s = seconds_since(t0);
      m.n_targets = sets.size();
      std::size_t hit = 0;
      double len = 0.0;
      for (const auto& s : sets) {
        const double x = truth(s.target.row, s.target.col);
        if (!s.empty() && x >= s.lo() && x <= s.hi()) ++hit;
        if (!s.empty()) len += s.hi() - s.lo();
      }
      m.avg_cov = sets.empty() ? 1.0 : static_cast<double>(hit) / sets.size();
      m.avg_length = sets.empty() ? 0.0 : len / sets.size();
      break;
    }
  }
  return out;
}

}  // namespace cprpca
