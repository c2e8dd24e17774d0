#pragma once

#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

#include "cprpca/index_set.hpp"
#include "cprpca/observation.hpp"
#include "cprpca/rng.hpp"
#include "cprpca/solver.hpp"

namespace cprpca {

// A calibration threshold that may be +infinity. Infinity is carried as a
// flag, never as a floating-point value.
struct Threshold {
  double value = 0.0;
  bool infinite = false;

  static Threshold inf() { return {0.0, true}; }
  bool admits(double score) const { return infinite || score <= value; }
};

struct ScoreAtom {
  double score = 0.0;
  double weight = 0.0;
  bool infinite = false;
};

// Discrete weighted score distribution: finite atoms plus at most one +inf
// atom. Weights are nonnegative and sum to one.
class WeightedScoreSet {
 public:
  static constexpr double kWeightTolerance = 1e-12;

  WeightedScoreSet() = default;
  explicit WeightedScoreSet(std::vector<ScoreAtom> atoms);

  // Finite scores with their weights plus an optional +inf atom.
  static WeightedScoreSet with_infinite_atom(const std::vector<double>& scores,
                                             const std::vector<double>& weights,
                                             double infinite_weight);

  const std::vector<ScoreAtom>& atoms() const noexcept { return atoms_; }
  bool empty() const noexcept { return atoms_.empty(); }
  double max_weight() const;

 private:
  std::vector<ScoreAtom> atoms_;
};

// Cumulative sums within this slack of the level count as reaching it, so
// sums like 9 * 0.1 are not lost to rounding.
inline constexpr double kQuantileSlack = 1e-12;

// inf{t : sum_i w_i 1{s_i <= t} >= level}; finite atoms are scanned in
// ascending score order (stable), +inf when no finite prefix reaches level.
Threshold weighted_quantile(const WeightedScoreSet& set, double level);

struct DataSplit {
  IndexSet train;
  IndexSet cal;
};

// Each observed entry goes to train independently with probability q.
DataSplit split_data(const IndexSet& obs, double q, Rng& rng);

// R_ij = |Y_ij - Xhat_ij| / sigma_ij over idx, in row-major order.
std::vector<double> residual_scores(const Matrix& Y, const Matrix& Xhat, const Matrix& sigma,
                                    const IndexSet& idx);

// Mean squared residual over idx.
double noise_variance(const Matrix& Y, const Matrix& Xhat, const IndexSet& idx);

struct BootstrapOptions {
  int resamples = 50;
  // Refits start from the reference fit instead of re-running initialization.
  bool warm_start = true;
  int threads = 1;
};

// Per-entry sample variance of Xhat over `resamples` refits on index sets
// drawn from idx with replacement (duplicates collapse).
Matrix bootstrap_variance(const Matrix& Y, const IndexSet& idx, const SolverConfig& cfg,
                          const RpcaEstimate& reference, const BootstrapOptions& opt, Rng& rng);

struct BootstrapStats {
  Matrix var;
  // Mean squared residual of each refit on the idx entries it did not see,
  // excluding `exclude`, averaged over refits.
  double oob_mse = 0.0;
};

BootstrapStats bootstrap_stats(const Matrix& Y, const IndexSet& idx, const SolverConfig& cfg,
                               const RpcaEstimate& reference, const BootstrapOptions& opt,
                               Rng& rng, const IndexSet* exclude = nullptr);

struct SigmaEstimate {
  double sigma_model_sq = 0.0;
  double sigma_noise_sq = 0.0;
  Matrix sigma;         // constant sqrt(model + noise) over the grid
  Matrix entry_var;     // per-entry bootstrap variance
};

// Noise variance over pure_train; model variance as the grid mean of the
// per-entry bootstrap variance of refits on `train`.
SigmaEstimate estimate_sigma(const Matrix& Y, const IndexSet& train, const IndexSet& pure_train,
                             const RpcaEstimate& est, const SolverConfig& cfg,
                             const BootstrapOptions& opt, Rng& rng);

struct IntervalField {
  IndexSet targets;
  std::vector<Entry> entries;  // row-major members of targets
  std::vector<double> centers;
  std::vector<double> halfwidths;
  double alpha = 0.1;
  Threshold q_hat;

  std::size_t size() const { return entries.size(); }
  bool infinite() const { return q_hat.infinite; }
  bool covers(std::size_t k, double x) const;
  double lo(std::size_t k) const;
  double hi(std::size_t k) const;
};

struct CalibrationResult {
  Threshold q_hat;
  WeightedScoreSet scores;
  double omega_max = 0.0;
  double sigma_model_sq = 0.0;
  double sigma_noise_sq = 0.0;
  IndexSet trimmed_cal;
  std::vector<double> cal_weights;  // aligned with trimmed_cal.entries()
  double test_weight = 0.0;
};

struct SplitCpOptions {
  double alpha = 0.1;
  double q = 0.7;
  SolverConfig solver;
  BootstrapOptions bootstrap;
  ObservationKind obs_model = ObservationKind::Uniform;
  int logistic_k = 5;
  LogisticFitOptions logistic;
  // Known observation probabilities; required for ObservationKind::Explicit.
  std::optional<ObservationModel> known_model;
};

struct SplitCpResult {
  IntervalField intervals;
  CalibrationResult calibration;
  RpcaEstimate estimate;
  DataSplit split;
  IndexSet omega_star_hat;  // flagged corrupted entries of the observed set
  std::optional<ObservationModel> fitted_model;
  std::vector<std::string> warnings;
};

SplitCpResult split_cp(const Matrix& Y, const IndexSet& obs, const SplitCpOptions& opt, Rng& rng);

// Fitted observation model of the requested kind from a training set drawn
// at rate q from the observed set.
ObservationModel fit_observation_model(const IndexSet& train, double q, const SplitCpOptions& opt);

struct FullCpOptions {
  double alpha = 0.1;
  SolverConfig solver;
  // Resamples for the model-variance term; 0 uses the noise variance alone.
  // The accept/reject decision does not depend on a common scale.
  int bootstrap_resamples = 0;
  ObservationKind obs_model = ObservationKind::Uniform;
  int logistic_k = 5;
  LogisticFitOptions logistic;
  std::optional<ObservationModel> known_model;
};

struct FullCpSet {
  Entry target;
  std::vector<double> accepted;  // accepted grid values, ascending
  bool empty() const { return accepted.empty(); }
  double lo() const { return accepted.front(); }
  double hi() const { return accepted.back(); }
};

// 100 equispaced values over [min - range/2, max + range/2] of observed Y.
std::vector<double> default_grid(const Matrix& Y, const IndexSet& obs, int points = 100);

std::vector<FullCpSet> full_cp(const Matrix& Y, const IndexSet& obs, const IndexSet& targets,
                               const std::vector<double>& grid, const FullCpOptions& opt,
                               Rng& rng);

struct BaselineResult {
  IntervalField intervals;
  RpcaEstimate estimate;
  double sigma_noise_sq = 0.0;
  double z = 0.0;
};

// Xhat_ij +/- z_{1 - alpha/2} sqrt(bootstrap variance_ij + noise variance),
// with the noise variance taken out of bag over flagged-free entries.
BaselineResult bootstrap_baseline(const Matrix& Y, const IndexSet& obs, double alpha,
                                  const SolverConfig& cfg, const BootstrapOptions& opt, Rng& rng);

double normal_quantile(double p);

nlohmann::json to_json(const CalibrationResult& c);
nlohmann::json to_json(const IntervalField& f);
// "i,j,center,lo,hi" rows, 1-based; infinite bounds print as -inf/inf.
void write_intervals_csv(std::ostream& out, const IntervalField& f);

}  // namespace cprpca
