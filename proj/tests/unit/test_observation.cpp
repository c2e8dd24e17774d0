#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <random>

#include "cprpca/error.hpp"
#include "cprpca/observation.hpp"
#include "cprpca/simgen.hpp"

using namespace cprpca;

TEST(ObservationModel, RejectsBoundaryProbabilities) {
  Matrix P = Matrix::Constant(2, 2, 0.5);
  P(0, 1) = 1.0;
  EXPECT_THROW(ObservationModel::explicit_matrix(P), InvalidInput);
  EXPECT_THROW(ObservationModel::uniform(3, 3, 0.0), InvalidInput);
  EXPECT_THROW(ObservationModel::rank_one(Vector::Constant(2, 0.5), Vector::Constant(3, 0.0)), InvalidInput);
}

TEST(ObservationModel, OddsDecreaseInP) {
  const Vector p = Vector::LinSpaced(9, 0.1, 0.9);
  Matrix P(1, 9);
  P.row(0) = p.transpose();
  const auto m = ObservationModel::explicit_matrix(P);
  for (int j = 0; j < 9; ++j) {
    EXPECT_NEAR(m.odds(0, j), (1 - p(j)) / p(j), 1e-15);
    if (j > 0) EXPECT_LT(m.odds(0, j), m.odds(0, j - 1));
  }
}

TEST(SampleMask, NearCertainUniform) {
  const auto m = ObservationModel::uniform(20, 20, 1.0 - 1e-12);
  for (std::uint64_t s = 0; s < 5; ++s) {
    Rng rng(s);
    EXPECT_EQ(sample_mask(m, rng).size(), 400u);
  }
}

TEST(SampleMask, UniformRateConcentrates) {
  const auto m = ObservationModel::uniform(500, 500, 0.5);
  Rng rng(17);
  const double rate = sample_mask(m, rng).size() / 250000.0;
  EXPECT_NEAR(rate, 0.5, 0.01);
}

TEST(SampleMask, RankOneProductRate) {
  const auto m = ObservationModel::rank_one(Vector::Constant(500, 0.6), Vector::Constant(500, 0.5));
  Rng rng(18);
  EXPECT_NEAR(sample_mask(m, rng).size() / 250000.0, 0.30, 0.01);
  Rng a(5), b(5);
  EXPECT_EQ(sample_mask(m, a), sample_mask(m, b));
}

TEST(EstimateUniform, FormulaAndClamp) {
  IndexSet train(10, 10);
  for (int k = 0; k < 35; ++k) train.insert(k / 10, k % 10);
  EXPECT_DOUBLE_EQ(estimate_uniform(train, 0.7).prob(3, 3), 0.5);
  IndexSet full70(10, 10);
  for (int k = 0; k < 70; ++k) full70.insert(k / 10, k % 10);
  EXPECT_DOUBLE_EQ(estimate_uniform(full70, 0.7).prob(0, 0), 1.0 - 1e-6);
  EXPECT_THROW(estimate_uniform(IndexSet(4, 4), 0.7), InsufficientData);
}

TEST(EstimateUniform, ConcentratesAtLargeGrid) {
  const auto m = ObservationModel::uniform(500, 500, 0.5);
  Rng rng(3);
  const IndexSet obs = sample_mask(m, rng);
  IndexSet train(500, 500);
  std::bernoulli_distribution keep(0.7);
  obs.for_each([&](int i, int j) {
    if (keep(rng)) train.insert(i, j);
  });
  EXPECT_NEAR(estimate_uniform(train, 0.7).prob(0, 0), 0.5, 0.01);
}

TEST(EstimateUniform, UnbiasedOverSeeds) {
  const double p0 = 0.4;
  const auto m = ObservationModel::uniform(200, 200, p0);
  double acc = 0.0;
  for (std::uint64_t s = 0; s < 200; ++s) {
    Rng rng(1000 + s);
    acc += estimate_uniform(sample_mask(m, rng), 1.0).prob(0, 0);
  }
  EXPECT_NEAR(acc / 200.0, p0, 0.005);
}

TEST(EstimateLogistic, ZeroLogitBox) {
  const auto m = ObservationModel::uniform(30, 30, 0.35);
  Rng rng(4);
  LogisticFitOptions opt;
  opt.a_lo = opt.a_hi = 0.0;
  const auto fit = estimate_logistic(sample_mask(m, rng), 1, 0.7, opt);
  EXPECT_LT((fit.probabilities().array() - 0.5).abs().maxCoeff(), 1e-12);
}

TEST(EstimateLogistic, LogLikelihoodNondecreasing) {
  SettingSpec s = setting_spec(3);
  s.d1 = s.d2 = 60;
  s.seed = 9;
  const auto gt = gen_setting(s);
  LogisticFitOptions opt;
  opt.iters = 60;
  const auto fit = fit_logistic(gt.mask, 5, 1.0, opt);
  ASSERT_GE(fit.loglik_trace.size(), 2u);
  for (std::size_t t = 1; t < fit.loglik_trace.size(); ++t)
    EXPECT_GE(fit.loglik_trace[t], fit.loglik_trace[t - 1]);
  const Matrix& P = fit.model.probabilities();
  EXPECT_GT(P.minCoeff(), 0.0);
  EXPECT_LT(P.maxCoeff(), 1.0);
}

// Tolerance from the module's stated target. At d=200 the constrained MLE
// overfits the 5-factor model; the measured error is about 0.085.
TEST(EstimateLogistic, PlantedSettingThreeRecovery) {
  SettingSpec s = setting_spec(3);
  s.d1 = s.d2 = 200;
  s.seed = 1;
  const auto gt = gen_setting(s);
  const auto fit = estimate_logistic(gt.mask, 5, 1.0);
  const double mae = (fit.probabilities() - gt.P).cwiseAbs().mean();
  EXPECT_LE(mae, 0.05);
}

TEST(EstimateRankOne, ConstantCaseMatchesUniform) {
  const auto truth = ObservationModel::rank_one(Vector::Constant(100, 0.7), Vector::Constant(100, 0.7));
  Rng rng(6);
  const auto fit = estimate_rank_one(sample_mask(truth, rng), 1.0);
  EXPECT_NEAR(fit.probabilities().mean(), 0.49, 0.01);
}

TEST(EstimateRankOne, PlantedSettingFive) {
  SettingSpec s = setting_spec(5);
  s.d1 = s.d2 = 500;
  s.seed = 2;
  const auto gt = gen_setting(s);
  const auto fit = estimate_rank_one(gt.mask, 1.0);
  EXPECT_LE((fit.probabilities() - gt.P).cwiseAbs().mean(), 0.03);
}

TEST(EstimateRankOne, TwoByTwoClamp) {
  const IndexSet train = IndexSet::from_entries(2, 2, {{0, 0}, {0, 1}, {1, 0}});
  const auto fit = estimate_rank_one(train, 1.0);
  EXPECT_DOUBLE_EQ(fit.prob(0, 0), 1.0 - 1e-6);
  // (1/2)(2/2)/(3/4) = 2/3
  EXPECT_NEAR(fit.prob(1, 0), 2.0 / 3.0, 1e-15);
}

TEST(EstimateRankOne, EmptyRowFallsBack) {
  const IndexSet train = IndexSet::from_entries(3, 3, {{0, 0}, {0, 1}, {1, 2}, {1, 0}});
  const auto fit = estimate_rank_one(train, 1.0);
  EXPECT_TRUE(fit.fallback_used);
  const Matrix& P = fit.probabilities();
  EXPECT_GT(P.minCoeff(), 0.0);
  EXPECT_LT(P.maxCoeff(), 1.0);
}

TEST(Weights, UniformIsFlat) {
  const auto m = ObservationModel::uniform(6, 6, 0.3);
  IndexSet cal(6, 6), tgt(6, 6);
  for (int k = 0; k < 9; ++k) cal.insert(k / 6, k % 6);
  tgt.insert(5, 5);
  tgt.insert(4, 4);
  const auto w = one_shot_weights(m, cal, tgt);
  for (double x : w.cal) EXPECT_NEAR(x, 0.1, 1e-15);
  EXPECT_NEAR(w.test, 0.1, 1e-15);
}

TEST(Weights, HandArithmetic) {
  Matrix P(1, 4);
  P << 0.5, 0.25, 0.2, 0.9;  // odds 1, 3, 4, 1/9
  const auto m = ObservationModel::explicit_matrix(P);
  const IndexSet cal = IndexSet::from_entries(1, 4, {{0, 0}, {0, 1}});
  const IndexSet tgt = IndexSet::from_entries(1, 4, {{0, 2}, {0, 3}});
  const auto w = one_shot_weights(m, cal, tgt);
  ASSERT_EQ(w.cal.size(), 2u);
  EXPECT_NEAR(w.cal[0], 1.0 / 8.0, 1e-15);
  EXPECT_NEAR(w.cal[1], 3.0 / 8.0, 1e-15);
  EXPECT_NEAR(w.test, 0.5, 1e-15);
  EXPECT_THROW(one_shot_weights(m, cal, IndexSet(1, 4)), InvalidInput);
}

TEST(Weights, SumToOneForRandomModels) {
  std::mt19937_64 g(12);
  std::uniform_real_distribution<double> u(0.01, 0.99);
  std::bernoulli_distribution half(0.5);
  for (int t = 0; t < 100; ++t) {
    Matrix P(7, 5);
    for (int k = 0; k < 35; ++k) P.data()[k] = u(g);
    IndexSet cal(7, 5);
    for (int k = 0; k < 35; ++k)
      if (half(g)) cal.insert(k / 5, k % 5);
    const IndexSet tgt = cal.complement();
    if (tgt.empty()) continue;
    const auto w = one_shot_weights(ObservationModel::explicit_matrix(P), cal, tgt);
    double s = w.test;
    for (double x : w.cal) s += x;
    EXPECT_NEAR(s, 1.0, 1e-12);
  }
}

TEST(ObservationJson, RoundTripAllVariants) {
  const auto dir = std::filesystem::temp_directory_path() / "cprpca_obs_json";
  std::filesystem::create_directories(dir);
  Matrix A(3, 2), B(2, 4);
  A << 0.1, 0.2, 0.3, 0.4, 0.5, 0.6;
  B << 0.1, -0.2, 0.3, -0.4, 0.0, 0.25, -0.5, 0.5;
  Matrix P = Matrix::Constant(3, 4, 0.3);
  P(1, 2) = 0.77;
  const std::vector<ObservationModel> models = {
      ObservationModel::uniform(3, 4, 0.42),
      ObservationModel::logistic(A, B),
      ObservationModel::rank_one(Vector::Constant(3, 0.5), Vector::LinSpaced(4, 0.3, 0.9)),
      ObservationModel::explicit_matrix(P)};
  for (const auto& m : models) {
    const auto j = to_json(m, (dir / "P.csv").string());
    const auto back = observation_model_from_json(j, dir.string());
    EXPECT_EQ(back.kind(), m.kind());
    EXPECT_EQ(back.probabilities(), m.probabilities());
  }
  EXPECT_THROW(observation_model_from_json(nlohmann::json{{"variant", "bogus"}}), InvalidInput);
}
