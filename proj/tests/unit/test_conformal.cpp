#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <sstream>

#include "cprpca/conformal.hpp"
#include "cprpca/error.hpp"
#include "cprpca/evaluation.hpp"

using namespace cprpca;

namespace {

// Exhaustive search: smallest candidate score t with total weight on {s <= t}
// reaching the level.
Threshold quantile_oracle(const std::vector<double>& s, const std::vector<double>& w,
                          double level) {
  std::vector<double> cand = s;
  std::sort(cand.begin(), cand.end());
  for (double t : cand) {
    double mass = 0.0;
    for (std::size_t i = 0; i < s.size(); ++i)
      if (s[i] <= t) mass += w[i];
    if (mass >= level - kQuantileSlack) return {t, false};
  }
  return Threshold::inf();
}

struct LowRankProblem {
  Matrix Y;
  Matrix truth;
  IndexSet obs;
};

LowRankProblem make_problem(int d, int r, double p, double noise, std::uint64_t seed) {
  std::mt19937_64 g(seed);
  std::normal_distribution<double> n(0.0, 1.0 / std::sqrt(static_cast<double>(r)));
  Matrix U(d, r), V(d, r);
  for (int k = 0; k < U.size(); ++k) U.data()[k] = n(g);
  for (int k = 0; k < V.size(); ++k) V.data()[k] = n(g);
  LowRankProblem pr;
  pr.truth = U * V.transpose();
  std::normal_distribution<double> e(0.0, noise);
  pr.Y = pr.truth;
  for (int k = 0; k < pr.Y.size(); ++k) pr.Y.data()[k] += e(g);
  pr.truth = pr.Y;
  pr.obs = IndexSet(d, d);
  std::bernoulli_distribution b(p);
  for (int i = 0; i < d; ++i)
    for (int j = 0; j < d; ++j)
      if (b(g)) pr.obs.insert(i, j);
  return pr;
}

}  // namespace

TEST(WeightedScoreSet, Validation) {
  EXPECT_THROW(WeightedScoreSet({{1.0, 0.5, false}}), InvalidInput);
  EXPECT_THROW(WeightedScoreSet({{-1.0, 1.0, false}}), InvalidInput);
  EXPECT_THROW(WeightedScoreSet({{0.0, 0.5, true}, {0.0, 0.5, true}}), InvalidInput);
  EXPECT_THROW(WeightedScoreSet::with_infinite_atom({1.0}, {0.5, 0.5}, 0.0), DimensionError);
  EXPECT_NO_THROW(WeightedScoreSet({{0.3, 0.25, false}, {0.0, 0.75, true}}));
}

TEST(WeightedQuantile, Examples) {
  EXPECT_TRUE(weighted_quantile(WeightedScoreSet({{0.0, 1.0, true}}), 0.5).infinite);
  std::vector<double> s{1, 2, 3, 4, 5, 6, 7, 8, 9}, w(9, 0.1);
  const auto q = weighted_quantile(WeightedScoreSet::with_infinite_atom(s, w, 0.1), 0.9);
  EXPECT_FALSE(q.infinite);
  EXPECT_EQ(q.value, 9.0);
  const auto q2 = weighted_quantile(
      WeightedScoreSet::with_infinite_atom({0.2, 0.5, 0.8}, {0.5, 0.3, 0.2}, 0.0), 0.6);
  EXPECT_EQ(q2.value, 0.5);
  EXPECT_THROW(weighted_quantile(WeightedScoreSet(), 0.5), InvalidInput);
  EXPECT_THROW(weighted_quantile(WeightedScoreSet({{0.0, 1.0, true}}), 1.0), InvalidParameter);
}

TEST(WeightedQuantile, MatchesOracleOnRandomSets) {
  std::mt19937_64 g(31);
  std::uniform_int_distribution<int> nd(1, 20), grid(0, 6);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int t = 0; t < 300; ++t) {
    const int n = nd(g);
    std::vector<double> s(n), w(n + 1);
    for (int i = 0; i < n; ++i) s[i] = grid(g) * 0.5;  // forces ties
    for (double& x : w) x = u(g);
    const double tot = std::accumulate(w.begin(), w.end(), 0.0);
    for (double& x : w) x /= tot;
    const double winf = w.back();
    w.pop_back();
    const double level = u(g) * 0.98 + 0.01;
    const auto got = weighted_quantile(WeightedScoreSet::with_infinite_atom(s, w, winf), level);
    const auto want = quantile_oracle(s, w, level);
    ASSERT_EQ(got.infinite, want.infinite);
    if (!got.infinite) EXPECT_EQ(got.value, want.value);
  }
}

TEST(WeightedQuantile, FlatWeightsGiveOrderStatistic) {
  std::mt19937_64 g(32);
  std::uniform_real_distribution<double> u(0.0, 5.0);
  for (int n : {5, 19, 50, 99}) {
    std::vector<double> s(n);
    for (double& x : s) x = u(g);
    for (double alpha : {0.05, 0.1, 0.2, 0.5}) {
      const auto q = weighted_quantile(
          WeightedScoreSet::with_infinite_atom(s, std::vector<double>(n, 1.0 / (n + 1)), 1.0 / (n + 1)),
          1.0 - alpha);
      const auto k = static_cast<std::size_t>(std::ceil((1.0 - alpha) * (n + 1) - 1e-9));
      std::vector<double> sorted = s;
      std::sort(sorted.begin(), sorted.end());
      if (k > static_cast<std::size_t>(n)) {
        EXPECT_TRUE(q.infinite);
      } else {
        ASSERT_FALSE(q.infinite);
        EXPECT_EQ(q.value, sorted[k - 1]);
      }
    }
  }
}

TEST(WeightedQuantile, MonotoneInLevel) {
  std::vector<double> s{0.3, 0.1, 0.9, 0.4, 0.2}, w{0.1, 0.3, 0.1, 0.2, 0.2};
  const auto set = WeightedScoreSet::with_infinite_atom(s, w, 0.1);
  double prev = -1.0;
  for (double lv = 0.05; lv < 0.9; lv += 0.05) {
    const auto q = weighted_quantile(set, lv);
    ASSERT_FALSE(q.infinite);
    EXPECT_GE(q.value, prev);
    prev = q.value;
  }
  EXPECT_TRUE(weighted_quantile(set, 0.95).infinite);
}

TEST(SplitData, PartitionAndRate) {
  IndexSet obs = IndexSet::full(400, 250);
  Rng a(9), b(9);
  const auto s1 = split_data(obs, 0.7, a), s2 = split_data(obs, 0.7, b);
  EXPECT_EQ(s1.train.unite(s1.cal), obs);
  EXPECT_TRUE(s1.train.intersect(s1.cal).empty());
  EXPECT_NEAR(s1.train.size() / 1e5, 0.7, 0.006);
  EXPECT_EQ(s1.train, s2.train);
  Rng c(1);
  EXPECT_TRUE(split_data(IndexSet::full(10, 10), 1.0 - 1e-12, c).cal.empty());
  EXPECT_THROW(split_data(obs, 1.0, c), InvalidParameter);
}

TEST(ResidualScores, Arithmetic) {
  Matrix Y(1, 3), X(1, 3), s(1, 3);
  Y << 1.3, 2.0, -1.0;
  X << 1.0, 2.0, -1.5;
  s << 0.15, 1.0, 0.25;
  const auto r = residual_scores(Y, X, s, IndexSet::full(1, 3));
  EXPECT_NEAR(r[0], 2.0, 1e-12);
  EXPECT_EQ(r[1], 0.0);
  EXPECT_NEAR(r[2], 2.0, 1e-12);
  const auto half = residual_scores(Y, X, 2.0 * s, IndexSet::full(1, 3));
  for (int k = 0; k < 3; ++k) EXPECT_EQ(half[k], r[k] / 2.0);
  s(0, 1) = 0.0;
  EXPECT_THROW(residual_scores(Y, X, s, IndexSet::full(1, 3)), InvalidScale);
}

TEST(NoiseVariance, Arithmetic) {
  Matrix Y(1, 4), X = Matrix::Zero(1, 4);
  Y << 1, -1, 2, 100;
  EXPECT_DOUBLE_EQ(noise_variance(Y, X, IndexSet::from_entries(1, 4, {{0, 0}, {0, 1}, {0, 2}})), 2.0);
  EXPECT_THROW(noise_variance(Y, X, IndexSet(1, 4)), InsufficientData);
}

TEST(EstimateSigma, ExactFitDegeneracy) {
  Vector u = Vector::LinSpaced(12, 0.5, 1.5), v = Vector::LinSpaced(12, -1.0, 1.0);
  const Matrix Y = u * v.transpose();
  SolverConfig cfg;
  cfg.rank = 1;
  cfg.sparsity_beta = 0.0;
  const IndexSet train = IndexSet::full(12, 12);
  const auto est = solve(Y, train, cfg);
  // Hand the bootstrap the exact truth as its reference so every refit stays put.
  RpcaEstimate exact = est;
  exact.Xhat = Y;
  exact.factors.U = u;
  exact.factors.V = v;
  BootstrapOptions opt;
  opt.resamples = 2;
  Rng rng(1);
  const auto sig = estimate_sigma(Y, train, train, exact, cfg, opt, rng);
  EXPECT_EQ(sig.sigma_noise_sq, 0.0);
  EXPECT_LT(sig.sigma_model_sq, 1e-20);
  EXPECT_THROW(estimate_sigma(Y, train, IndexSet(12, 12), exact, cfg, opt, rng), InsufficientData);
}

TEST(IntervalField, MembershipInvariantToScale) {
  const auto pr = make_problem(30, 2, 0.6, 0.1, 41);
  SplitCpOptions opt;
  opt.solver.rank = 2;
  opt.solver.sparsity_beta = 0.0;
  opt.bootstrap.resamples = 2;
  Rng rng(2);
  const auto res = split_cp(pr.Y, pr.obs, opt, rng);
  const auto& cal = res.calibration;
  const Matrix sigma = Matrix::Constant(30, 30, 0.7);
  for (double c : {0.5, 3.0}) {
    const auto s1 = residual_scores(pr.Y, res.estimate.Xhat, sigma, cal.trimmed_cal);
    const auto s2 = residual_scores(pr.Y, res.estimate.Xhat, c * sigma, cal.trimmed_cal);
    const auto q1 = weighted_quantile(WeightedScoreSet::with_infinite_atom(s1, cal.cal_weights, cal.test_weight), 0.9);
    const auto q2 = weighted_quantile(WeightedScoreSet::with_infinite_atom(s2, cal.cal_weights, cal.test_weight), 0.9);
    int agree = 0, n = 0;
    res.intervals.targets.for_each([&](int i, int j) {
      const double dev = std::abs(pr.truth(i, j) - res.estimate.Xhat(i, j));
      agree += (dev <= q1.value * 0.7) == (dev <= q2.value * c * 0.7);
      ++n;
    });
    EXPECT_EQ(agree, n);
  }
}

TEST(SplitCp, StructureOnSmallInstance) {
  const auto pr = make_problem(30, 2, 0.6, 0.1, 42);
  SplitCpOptions opt;
  opt.solver.rank = 2;
  opt.solver.sparsity_beta = 0.05;
  opt.bootstrap.resamples = 3;
  Rng rng(3);
  const auto res = split_cp(pr.Y, pr.obs, opt, rng);
  EXPECT_EQ(res.intervals.targets, pr.obs.complement());
  EXPECT_EQ(res.split.train.unite(res.split.cal), pr.obs);
  EXPECT_TRUE(res.calibration.trimmed_cal.intersect(res.omega_star_hat).empty());
  EXPECT_EQ(res.calibration.trimmed_cal, res.split.cal.minus(res.omega_star_hat));
  double s = res.calibration.test_weight;
  for (double w : res.calibration.cal_weights) s += w;
  EXPECT_NEAR(s, 1.0, 1e-12);
  EXPECT_GE(res.calibration.omega_max, res.calibration.test_weight);
  for (std::size_t k = 0; k < res.intervals.size(); ++k) {
    EXPECT_GE(res.intervals.halfwidths[k], 0.0);
    EXPECT_NEAR(res.intervals.hi(k) - res.intervals.lo(k), 2 * res.intervals.halfwidths[k], 1e-12);
  }
  Rng again(3);
  const auto res2 = split_cp(pr.Y, pr.obs, opt, again);
  EXPECT_EQ(res2.intervals.halfwidths, res.intervals.halfwidths);
  EXPECT_EQ(res2.intervals.centers, res.intervals.centers);
}

TEST(SplitCp, TinyAlphaSaturates) {
  const auto pr = make_problem(20, 1, 0.6, 0.1, 43);
  SplitCpOptions opt;
  opt.alpha = 1e-9;
  opt.solver.rank = 1;
  opt.solver.sparsity_beta = 0.0;
  opt.bootstrap.resamples = 2;
  Rng rng(4);
  const auto res = split_cp(pr.Y, pr.obs, opt, rng);
  EXPECT_TRUE(res.calibration.q_hat.infinite);
  EXPECT_EQ(avg_cov(pr.truth, res.intervals), 1.0);
  EXPECT_TRUE(avg_length(res.intervals).infinite);
}

TEST(SplitCp, EmptyCalibrationIsAnError) {
  const auto pr = make_problem(10, 1, 0.8, 0.1, 44);
  SplitCpOptions opt;
  opt.q = 1.0 - 1e-12;
  opt.solver.rank = 1;
  opt.bootstrap.resamples = 2;
  Rng rng(5);
  EXPECT_THROW(split_cp(pr.Y, pr.obs, opt, rng), InsufficientData);
}

TEST(SplitCp, FullyTrimmedCalibrationGivesRealLine) {
  // A flag budget wider than any row marks every observed entry.
  const auto pr = make_problem(12, 1, 0.9, 0.1, 45);
  SplitCpOptions opt;
  opt.solver.rank = 1;
  opt.solver.sparsity_beta = 0.02;
  opt.solver.flag_gamma = 100.0;
  opt.bootstrap.resamples = 2;
  Rng rng(6);
  const auto res = split_cp(pr.Y, pr.obs, opt, rng);
  EXPECT_TRUE(res.calibration.trimmed_cal.empty());
  EXPECT_TRUE(res.intervals.infinite());
  EXPECT_EQ(avg_cov(pr.truth, res.intervals), 1.0);
  ASSERT_FALSE(res.warnings.empty());
  EXPECT_NE(res.warnings[0].find("degenerate"), std::string::npos);
}

TEST(SplitCp, ExplicitModelNeedsMatrix) {
  const auto pr = make_problem(10, 1, 0.8, 0.1, 46);
  SplitCpOptions opt;
  opt.obs_model = ObservationKind::Explicit;
  EXPECT_THROW(fit_observation_model(pr.obs, 0.7, opt), InvalidParameter);
}

TEST(FullCp, AcceptsHeldOutTruthOnExactInstance) {
  Vector u = Vector::LinSpaced(8, 0.5, 1.5), v = Vector::LinSpaced(8, -1.0, 1.0);
  const Matrix Y = u * v.transpose();
  IndexSet obs = IndexSet::full(8, 8);
  obs.erase(2, 3);
  obs.erase(5, 1);
  FullCpOptions opt;
  opt.solver.rank = 1;
  opt.solver.sparsity_beta = 0.0;
  Rng rng(7);
  const IndexSet targets = IndexSet::from_entries(8, 8, {{2, 3}});
  const double truth = Y(2, 3);
  std::vector<double> grid{truth - 3.0, truth - 1.0, truth, truth + 1.0, truth + 3.0};
  const auto sets = full_cp(Y, obs, targets, grid, opt, rng);
  ASSERT_EQ(sets.size(), 1u);
  EXPECT_TRUE(std::find(sets[0].accepted.begin(), sets[0].accepted.end(), truth) != sets[0].accepted.end());
  EXPECT_FALSE(std::find(sets[0].accepted.begin(), sets[0].accepted.end(), truth + 3.0) != sets[0].accepted.end());
}

TEST(FullCp, InputValidation) {
  const Matrix Y = Matrix::Ones(4, 4);
  IndexSet obs = IndexSet::full(4, 4);
  obs.erase(0, 0);
  FullCpOptions opt;
  opt.solver.rank = 1;
  Rng rng(8);
  const IndexSet t = IndexSet::from_entries(4, 4, {{0, 0}});
  EXPECT_THROW(full_cp(Y, obs, t, {}, opt, rng), InvalidInput);
  EXPECT_THROW(full_cp(Y, obs, t, {1.0, 0.0}, opt, rng), InvalidInput);
  EXPECT_THROW(full_cp(Y, obs, IndexSet::from_entries(4, 4, {{1, 1}}), {0.0, 1.0}, opt, rng), InvalidInput);
}

TEST(FullCp, DefaultGrid) {
  Matrix Y(1, 3);
  Y << -1.0, 3.0, 100.0;
  const auto g = default_grid(Y, IndexSet::from_entries(1, 3, {{0, 0}, {0, 1}}));
  ASSERT_EQ(g.size(), 100u);
  EXPECT_DOUBLE_EQ(g.front(), -3.0);
  EXPECT_DOUBLE_EQ(g.back(), 5.0);
  EXPECT_TRUE(std::is_sorted(g.begin(), g.end()));
}

TEST(FullCp, HullsOverlapSplitIntervals) {
  const auto pr = make_problem(10, 1, 0.8, 0.1, 47);
  SplitCpOptions sopt;
  sopt.solver.rank = 1;
  sopt.solver.sparsity_beta = 0.0;
  sopt.bootstrap.resamples = 2;
  Rng r1(9);
  const auto split = split_cp(pr.Y, pr.obs, sopt, r1);
  ASSERT_FALSE(split.intervals.infinite());
  FullCpOptions fopt;
  fopt.solver = sopt.solver;
  Rng r2(10);
  const auto grid = default_grid(pr.Y, pr.obs, 61);
  const auto sets = full_cp(pr.Y, pr.obs, split.intervals.targets, grid, fopt, r2);
  ASSERT_EQ(sets.size(), split.intervals.size());
  int overlap = 0;
  for (std::size_t k = 0; k < sets.size(); ++k)
    if (!sets[k].empty() && sets[k].lo() <= split.intervals.hi(k) && split.intervals.lo(k) <= sets[k].hi())
      ++overlap;
  EXPECT_GE(overlap, static_cast<int>(std::ceil(0.95 * sets.size())));
}

TEST(Baseline, NormalQuantileAndDegenerateVariance) {
  EXPECT_NEAR(normal_quantile(0.75), 0.6744897501960817, 1e-12);
  EXPECT_NEAR(normal_quantile(0.95), 1.6448536269514722, 1e-12);
  const auto pr = make_problem(20, 1, 0.7, 0.1, 48);
  SolverConfig cfg;
  cfg.rank = 1;
  cfg.sparsity_beta = 0.0;
  BootstrapOptions opt;
  opt.resamples = 4;
  Rng rng(11);
  const auto base = bootstrap_baseline(pr.Y, pr.obs, 0.5, cfg, opt, rng);
  EXPECT_NEAR(base.z, 0.6744897501960817, 1e-12);
  ASSERT_GT(base.intervals.size(), 0u);
  for (double h : base.intervals.halfwidths) EXPECT_GE(h, base.z * std::sqrt(base.sigma_noise_sq) - 1e-12);
  opt.resamples = 1;
  EXPECT_THROW(bootstrap_baseline(pr.Y, pr.obs, 0.5, cfg, opt, rng), InvalidParameter);
}

TEST(Serialization, IntervalsCsvAndJson) {
  IntervalField f;
  f.targets = IndexSet::from_entries(2, 2, {{0, 1}, {1, 0}});
  f.entries = f.targets.entries();
  f.centers = {1.0, -2.0};
  f.halfwidths = {0.5, 0.25};
  f.q_hat = {2.0, false};
  std::stringstream ss;
  write_intervals_csv(ss, f);
  EXPECT_EQ(ss.str(), "1,2,1,0.5,1.5\n2,1,-2,-2.25,-1.75\n");
  const auto j = to_json(f);
  EXPECT_EQ(j.at("alpha").get<double>(), 0.1);
  f.q_hat = Threshold::inf();
  std::stringstream inf;
  write_intervals_csv(inf, f);
  EXPECT_NE(inf.str().find("-inf,inf"), std::string::npos);
}
