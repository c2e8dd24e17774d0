#include "cprpca/conformal.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <ostream>
#include <thread>

#include <boost/math/distributions/normal.hpp>

#include "cprpca/error.hpp"
#include "cprpca/matrix_io.hpp"

namespace cprpca {

// ---------------------------------------------------------------------------
// Weighted score sets and the quantile

WeightedScoreSet::WeightedScoreSet(std::vector<ScoreAtom> atoms) : atoms_(std::move(atoms)) {
  double total = 0.0;
  int n_inf = 0;
  for (const auto& a : atoms_) {
    if (!(a.weight >= 0.0) || !std::isfinite(a.weight))
      throw InvalidInput("WeightedScoreSet: weights must be finite and nonnegative");
    if (a.infinite) {
      ++n_inf;
    } else if (!std::isfinite(a.score) || a.score < 0.0) {
      throw InvalidInput("WeightedScoreSet: finite atoms need nonnegative finite scores");
    }
    total += a.weight;
  }
  if (n_inf > 1) throw InvalidInput("WeightedScoreSet: more than one +inf atom");
  if (!atoms_.empty() && std::abs(total - 1.0) > 1e-9)
    throw InvalidInput("WeightedScoreSet: weights do not sum to one");
}

WeightedScoreSet WeightedScoreSet::with_infinite_atom(const std::vector<double>& scores,
                                                      const std::vector<double>& weights,
                                                      double infinite_weight) {
  if (scores.size() != weights.size())
    throw DimensionError("WeightedScoreSet: scores and weights differ in length");
  std::vector<ScoreAtom> atoms;
  atoms.reserve(scores.size() + 1);
  for (std::size_t k = 0; k < scores.size(); ++k) atoms.push_back({scores[k], weights[k], false});
  atoms.push_back({0.0, infinite_weight, true});
  return WeightedScoreSet(std::move(atoms));
}

double WeightedScoreSet::max_weight() const {
  double m = 0.0;
  for (const auto& a : atoms_) m = std::max(m, a.weight);
  return m;
}

Threshold weighted_quantile(const WeightedScoreSet& set, double level) {
  if (set.empty()) throw InvalidInput("weighted_quantile: empty score set");
  if (!(level > 0.0 && level < 1.0))
    throw InvalidParameter("weighted_quantile: level must lie in (0, 1)");
  const auto& atoms = set.atoms();
  std::vector<std::size_t> order;
  order.reserve(atoms.size());
  for (std::size_t k = 0; k < atoms.size(); ++k)
    if (!atoms[k].infinite) order.push_back(k);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return atoms[a].score < atoms[b].score; });
  double cum = 0.0;
  for (std::size_t k : order) {
    cum += atoms[k].weight;
    if (cum + kQuantileSlack >= level) return {atoms[k].score, false};
  }
  return Threshold::inf();
}

// ---------------------------------------------------------------------------
// Splitting, scores, variance pieces

DataSplit split_data(const IndexSet& obs, double q, Rng& rng) {
  if (!(q > 0.0 && q < 1.0)) throw InvalidParameter("split_data: q must lie in (0, 1)");
  std::bernoulli_distribution coin(q);
  DataSplit s{IndexSet(obs.rows(), obs.cols()), IndexSet(obs.rows(), obs.cols())};
  obs.for_each([&](int i, int j) {
    if (coin(rng))
      s.train.insert(i, j);
    else
      s.cal.insert(i, j);
  });
  return s;
}

std::vector<double> residual_scores(const Matrix& Y, const Matrix& Xhat, const Matrix& sigma,
                                    const IndexSet& idx) {
  if (Y.rows() != Xhat.rows() || Y.cols() != Xhat.cols() || sigma.rows() != Y.rows() ||
      sigma.cols() != Y.cols() || idx.rows() != Y.rows() || idx.cols() != Y.cols())
    throw DimensionError("residual_scores: shape mismatch");
  std::vector<double> out;
  out.reserve(idx.size());
  idx.for_each([&](int i, int j) {
    const double s = sigma(i, j);
    if (!(s > 0.0) || !std::isfinite(s))
      throw InvalidScale("residual_scores: nonpositive scale at (" + std::to_string(i + 1) +
                         "," + std::to_string(j + 1) + ")");
    out.push_back(std::abs(Y(i, j) - Xhat(i, j)) / s);
  });
  return out;
}

double noise_variance(const Matrix& Y, const Matrix& Xhat, const IndexSet& idx) {
  if (idx.empty()) throw InsufficientData("noise_variance: empty index set");
  double acc = 0.0;
  idx.for_each([&](int i, int j) {
    const double r = Y(i, j) - Xhat(i, j);
    acc += r * r;
  });
  return acc / static_cast<double>(idx.size());
}

namespace {

IndexSet resample_with_replacement(const std::vector<Entry>& pool, int rows, int cols, Rng& rng) {
  IndexSet out(rows, cols);
  std::uniform_int_distribution<std::size_t> pick(0, pool.size() - 1);
  for (std::size_t k = 0; k < pool.size(); ++k) {
    const Entry e = pool[pick(rng)];
    out.insert(e.row, e.col);
  }
  return out;
}

}  // namespace

BootstrapStats bootstrap_stats(const Matrix& Y, const IndexSet& idx, const SolverConfig& cfg,
                               const RpcaEstimate& reference, const BootstrapOptions& opt,
                               Rng& rng, const IndexSet* exclude) {
  if (opt.resamples < 2) throw InvalidParameter("bootstrap: need at least 2 resamples");
  if (idx.empty()) throw InsufficientData("bootstrap: empty index set");
  const std::vector<Entry> pool = idx.entries();
  const int B = opt.resamples;

  // Every resample owns a stream fixed up front, so results do not depend on
  // the thread count.
  std::vector<std::uint64_t> keys(static_cast<std::size_t>(B));
  for (auto& k : keys) k = rng();

  std::vector<Matrix> fits(static_cast<std::size_t>(B));
  std::vector<double> oob(static_cast<std::size_t>(B), 0.0);
  auto work = [&](int b) {
    Rng local(stream_key({keys[static_cast<std::size_t>(b)], 0xB007ull}));
    const IndexSet sub =
        resample_with_replacement(pool, static_cast<int>(Y.rows()), static_cast<int>(Y.cols()), local);
    Matrix fit = opt.warm_start ? solve_warm(Y, sub, cfg, reference).Xhat : solve(Y, sub, cfg).Xhat;
    IndexSet held = idx.minus(sub);
    if (exclude) held = held.minus(*exclude);
    if (!held.empty()) oob[static_cast<std::size_t>(b)] = noise_variance(Y, fit, held);
    fits[static_cast<std::size_t>(b)] = std::move(fit);
  };
  const int threads = std::clamp(opt.threads, 1, B);
  if (threads == 1) {
    for (int b = 0; b < B; ++b) work(b);
  } else {
    std::vector<std::thread> pool_threads;
    std::vector<std::exception_ptr> errors(static_cast<std::size_t>(threads));
    for (int t = 0; t < threads; ++t)
      pool_threads.emplace_back([&, t] {
        try {
          for (int b = t; b < B; b += threads) work(b);
        } catch (...) {
          errors[static_cast<std::size_t>(t)] = std::current_exception();
        }
      });
    for (auto& th : pool_threads) th.join();
    for (auto& e : errors)
      if (e) std::rethrow_exception(e);
  }

  Matrix mean = Matrix::Zero(Y.rows(), Y.cols());
  for (const auto& f : fits) mean += f;
  mean /= static_cast<double>(B);
  Matrix var = Matrix::Zero(Y.rows(), Y.cols());
  for (const auto& f : fits) var += (f - mean).cwiseAbs2();
  BootstrapStats out;
  out.var = var / static_cast<double>(B - 1);
  for (double v : oob) out.oob_mse += v;
  out.oob_mse /= static_cast<double>(B);
  return out;
}

Matrix bootstrap_variance(const Matrix& Y, const IndexSet& idx, const SolverConfig& cfg,
                          const RpcaEstimate& reference, const BootstrapOptions& opt, Rng& rng) {
  return bootstrap_stats(Y, idx, cfg, reference, opt, rng).var;
}

SigmaEstimate estimate_sigma(const Matrix& Y, const IndexSet& train, const IndexSet& pure_train,
                             const RpcaEstimate& est, const SolverConfig& cfg,
                             const BootstrapOptions& opt, Rng& rng) {
  if (pure_train.empty())
    throw InsufficientData("estimate_sigma: no uncontaminated training entries");
  SigmaEstimate s;
  s.sigma_noise_sq = noise_variance(Y, est.Xhat, pure_train);
  s.entry_var = bootstrap_variance(Y, train, cfg, est, opt, rng);
  s.sigma_model_sq = s.entry_var.mean();
  s.sigma = Matrix::Constant(Y.rows(), Y.cols(), std::sqrt(s.sigma_model_sq + s.sigma_noise_sq));
  return s;
}

// ---------------------------------------------------------------------------
// Intervals

bool IntervalField::covers(std::size_t k, double x) const {
  return q_hat.infinite || std::abs(x - centers[k]) <= halfwidths[k];
}

double IntervalField::lo(std::size_t k) const {
  return q_hat.infinite ? -std::numeric_limits<double>::infinity() : centers[k] - halfwidths[k];
}

double IntervalField::hi(std::size_t k) const {
  return q_hat.infinite ? std::numeric_limits<double>::infinity() : centers[k] + halfwidths[k];
}

namespace {

IntervalField make_field(const IndexSet& targets, const Matrix& centers, const Matrix& halfwidth,
                         double alpha, Threshold q) {
  IntervalField f;
  f.targets = targets;
  f.entries = targets.entries();
  f.alpha = alpha;
  f.q_hat = q;
  f.centers.reserve(f.entries.size());
  f.halfwidths.reserve(f.entries.size());
  for (const auto& e : f.entries) {
    f.centers.push_back(centers(e.row, e.col));
    f.halfwidths.push_back(q.infinite ? 0.0 : halfwidth(e.row, e.col));
  }
  return f;
}

}  // namespace

ObservationModel fit_observation_model(const IndexSet& train, double q, const SplitCpOptions& opt) {
  switch (opt.obs_model) {
    case ObservationKind::Uniform:
      return estimate_uniform(train, q);
    case ObservationKind::Logistic:
      return estimate_logistic(train, opt.logistic_k, q, opt.logistic);
    case ObservationKind::RankOne:
      return estimate_rank_one(train, q);
    case ObservationKind::Explicit:
      if (!opt.known_model) throw InvalidParameter("explicit observation model not supplied");
      return *opt.known_model;
  }
  throw InvalidParameter("unknown observation model kind");
}

SplitCpResult split_cp(const Matrix& Y, const IndexSet& obs, const SplitCpOptions& opt, Rng& rng) {
  if (!(opt.alpha > 0.0 && opt.alpha < 1.0))
    throw InvalidParameter("split_cp: alpha must lie in (0, 1)");
  if (obs.empty()) throw InsufficientData("split_cp: no observed entries");
  if (obs.rows() != Y.rows() || obs.cols() != Y.cols())
    throw DimensionError("split_cp: observation set does not match data shape");
  opt.solver.validate();

  SplitCpResult res;
  Rng split_rng = fork_rng(rng, static_cast<std::uint64_t>(Stage::Split));
  Rng boot_rng = fork_rng(rng, static_cast<std::uint64_t>(Stage::Bootstrap));
  res.split = split_data(obs, opt.q, split_rng);
  const IndexSet& train = res.split.train;
  const IndexSet& cal = res.split.cal;
  if (train.empty()) throw InsufficientData("split_cp: empty training set");

  res.estimate = solve(Y, train, opt.solver);
  res.omega_star_hat =
      flag_corruptions(Y, res.estimate.Xhat, obs, opt.solver).unite(res.estimate.omega_star_hat);
  const IndexSet pure = obs.minus(res.omega_star_hat);
  const IndexSet trimmed = cal.minus(res.omega_star_hat);
  const IndexSet targets = obs.complement();

  auto& c = res.calibration;
  c.trimmed_cal = trimmed;
  if (cal.empty()) throw InsufficientData("split_cp: empty calibration set");

  if (trimmed.empty()) {
    res.warnings.push_back("degenerate calibration: trimmed calibration set is empty");
    c.q_hat = Threshold::inf();
    c.scores = WeightedScoreSet({{0.0, 1.0, true}});
    c.omega_max = 1.0;
    c.test_weight = 1.0;
    res.intervals = make_field(targets, res.estimate.Xhat, Matrix::Zero(Y.rows(), Y.cols()),
                               opt.alpha, c.q_hat);
    return res;
  }

  const SigmaEstimate sig = estimate_sigma(Y, train, pure.intersect(train), res.estimate,
                                           opt.solver, opt.bootstrap, boot_rng);
  c.sigma_model_sq = sig.sigma_model_sq;
  c.sigma_noise_sq = sig.sigma_noise_sq;

  res.fitted_model = fit_observation_model(train, opt.q, opt);
  const std::vector<double> scores = residual_scores(Y, res.estimate.Xhat, sig.sigma, trimmed);
  if (targets.empty()) {
    // Nothing to cover; calibrate against the largest calibration odds so the
    // threshold is still reported.
    const auto w = one_shot_weights(*res.fitted_model, trimmed, trimmed);
    c.cal_weights = w.cal;
    c.test_weight = w.test;
  } else {
    const auto w = one_shot_weights(*res.fitted_model, trimmed, targets);
    c.cal_weights = w.cal;
    c.test_weight = w.test;
  }
  c.scores = WeightedScoreSet::with_infinite_atom(scores, c.cal_weights, c.test_weight);
  c.omega_max = c.scores.max_weight();
  c.q_hat = weighted_quantile(c.scores, 1.0 - opt.alpha);
  if (c.q_hat.infinite) res.warnings.push_back("threshold saturated at +inf");

  const Matrix halfwidth = c.q_hat.infinite ? Matrix::Zero(Y.rows(), Y.cols())
                                            : Matrix(sig.sigma * c.q_hat.value);
  res.intervals = make_field(targets, res.estimate.Xhat, halfwidth, opt.alpha, c.q_hat);
  return res;
}

// ---------------------------------------------------------------------------
// Full conformal

std::vector<double> default_grid(const Matrix& Y, const IndexSet& obs, int points) {
  if (obs.empty()) throw InsufficientData("default_grid: no observed entries");
  if (points < 2) throw InvalidParameter("default_grid: need at least 2 points");
  double lo = std::numeric_limits<double>::infinity(), hi = -lo;
  obs.for_each([&](int i, int j) {
    lo = std::min(lo, Y(i, j));
    hi = std::max(hi, Y(i, j));
  });
  const double range = hi - lo;
  const double a = lo - 0.5 * range, b = hi + 0.5 * range;
  std::vector<double> grid(static_cast<std::size_t>(points));
  for (int k = 0; k < points; ++k) grid[static_cast<std::size_t>(k)] = a + (b - a) * k / (points - 1);
  return grid;
}

std::vector<FullCpSet> full_cp(const Matrix& Y, const IndexSet& obs, const IndexSet& targets,
                               const std::vector<double>& grid, const FullCpOptions& opt,
                               Rng& rng) {
  if (grid.empty()) throw InvalidInput("full_cp: empty candidate grid");
  if (!std::is_sorted(grid.begin(), grid.end()))
    throw InvalidInput("full_cp: candidate grid must be sorted");
  if (!(opt.alpha > 0.0 && opt.alpha < 1.0))
    throw InvalidParameter("full_cp: alpha must lie in (0, 1)");
  if (obs.empty()) throw InsufficientData("full_cp: no observed entries");
  if (!targets.intersect(obs).empty())
    throw InvalidInput("full_cp: targets must be unobserved entries");
  opt.solver.validate();

  // One observation-model fit from the observed set serves every refit.
  SplitCpOptions fit_opt;
  fit_opt.obs_model = opt.obs_model;
  fit_opt.logistic_k = opt.logistic_k;
  fit_opt.logistic = opt.logistic;
  fit_opt.known_model = opt.known_model;
  const ObservationModel model = fit_observation_model(obs, 1.0, fit_opt);

  std::vector<FullCpSet> out;
  for (const Entry t : targets.entries()) {
    FullCpSet set{t, {}};
    IndexSet aug = obs;
    aug.insert(t.row, t.col);
    const double h_t = model.odds(t.row, t.col);
    for (double y : grid) {
      Matrix Yy = Y;
      Yy(t.row, t.col) = y;
      const RpcaEstimate est = solve(Yy, aug, opt.solver);
      const IndexSet flagged =
          flag_corruptions(Yy, est.Xhat, aug, opt.solver).unite(est.omega_star_hat);
      IndexSet pure = obs.minus(flagged);
      if (pure.empty()) {
        // No calibration atoms: the test atom alone decides, and it always
        // admits its own score.
        set.accepted.push_back(y);
        continue;
      }
      double scale_sq = noise_variance(Yy, est.Xhat, pure);
      if (opt.bootstrap_resamples >= 2) {
        BootstrapOptions bo;
        bo.resamples = opt.bootstrap_resamples;
        Rng brng = fork_rng(rng, static_cast<std::uint64_t>(Stage::Bootstrap));
        scale_sq += bootstrap_variance(Yy, aug, opt.solver, est, bo, brng).mean();
      }
      // Every score shares the scale, so a zero scale can be replaced by one
      // without changing the decision.
      const double scale = scale_sq > 0.0 ? std::sqrt(scale_sq) : 1.0;

      std::vector<ScoreAtom> atoms;
      atoms.reserve(pure.size() + 1);
      double total = h_t;
      pure.for_each([&](int i, int j) {
        const double h = model.odds(i, j);
        atoms.push_back({std::abs(Yy(i, j) - est.Xhat(i, j)) / scale, h, false});
        total += h;
      });
      const double r_t = std::abs(y - est.Xhat(t.row, t.col)) / scale;
      atoms.push_back({r_t, h_t, false});
      for (auto& a : atoms) a.weight /= total;
      const Threshold q = weighted_quantile(WeightedScoreSet(std::move(atoms)), 1.0 - opt.alpha);
      if (q.admits(r_t)) set.accepted.push_back(y);
    }
    out.push_back(std::move(set));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Bootstrap-Gaussian baseline

double normal_quantile(double p) {
  if (!(p > 0.0 && p < 1.0)) throw InvalidParameter("normal_quantile: p must lie in (0, 1)");
  return boost::math::quantile(boost::math::normal_distribution<double>(), p);
}

BaselineResult bootstrap_baseline(const Matrix& Y, const IndexSet& obs, double alpha,
                                  const SolverConfig& cfg, const BootstrapOptions& opt, Rng& rng) {
  if (!(alpha > 0.0 && alpha < 1.0))
    throw InvalidParameter("bootstrap_baseline: alpha must lie in (0, 1)");
  BaselineResult res;
  res.estimate = solve(Y, obs, cfg);
  const IndexSet flagged =
      flag_corruptions(Y, res.estimate.Xhat, obs, cfg).unite(res.estimate.omega_star_hat);
  const IndexSet pure = obs.minus(flagged);
  if (pure.empty()) throw InsufficientData("bootstrap_baseline: no uncontaminated entries");
  Rng boot_rng = fork_rng(rng, static_cast<std::uint64_t>(Stage::Bootstrap));
  const BootstrapStats st = bootstrap_stats(Y, obs, cfg, res.estimate, opt, boot_rng, &flagged);
  res.sigma_noise_sq = st.oob_mse;
  res.z = normal_quantile(1.0 - alpha / 2.0);
  const Matrix halfwidth = (st.var.array() + res.sigma_noise_sq).sqrt().matrix() * res.z;
  res.intervals = make_field(obs.complement(), res.estimate.Xhat, halfwidth, alpha, {1.0, false});
  return res;
}

// ---------------------------------------------------------------------------
// Serialization

namespace {

nlohmann::json threshold_json(const Threshold& t) {
  if (t.infinite) return "inf";
  return t.value;
}

}  // namespace

nlohmann::json to_json(const CalibrationResult& c) {
  nlohmann::json j;
  j["q_hat"] = threshold_json(c.q_hat);
  j["omega_max"] = c.omega_max;
  j["sigma_model_sq"] = c.sigma_model_sq;
  j["sigma_noise_sq"] = c.sigma_noise_sq;
  j["trimmed_cal_size"] = c.trimmed_cal.size();
  j["test_weight"] = c.test_weight;
  nlohmann::json atoms = nlohmann::json::array();
  for (const auto& a : c.scores.atoms())
    atoms.push_back({{"score", a.infinite ? nlohmann::json("inf") : nlohmann::json(a.score)},
                     {"weight", a.weight}});
  j["atoms"] = std::move(atoms);
  return j;
}

nlohmann::json to_json(const IntervalField& f) {
  nlohmann::json j;
  j["alpha"] = f.alpha;
  j["q_hat"] = threshold_json(f.q_hat);
  j["n_targets"] = f.size();
  nlohmann::json rows = nlohmann::json::array();
  for (std::size_t k = 0; k < f.size(); ++k) {
    nlohmann::json r = {{"i", f.entries[k].row + 1},
                        {"j", f.entries[k].col + 1},
                        {"center", f.centers[k]}};
    if (f.infinite()) {
      r["lo"] = "-inf";
      r["hi"] = "inf";
    } else {
      r["lo"] = f.lo(k);
      r["hi"] = f.hi(k);
    }
    rows.push_back(std::move(r));
  }
  j["intervals"] = std::move(rows);
  return j;
}

void write_intervals_csv(std::ostream& out, const IntervalField& f) {
  for (std::size_t k = 0; k < f.size(); ++k) {
    out << f.entries[k].row + 1 << ',' << f.entries[k].col + 1 << ','
        << io::format_double(f.centers[k]) << ',';
    if (f.infinite())
      out << "-inf,inf\n";
    else
      out << io::format_double(f.lo(k)) << ',' << io::format_double(f.hi(k)) << '\n';
  }
}

}  // namespace cprpca
