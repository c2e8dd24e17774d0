#pragma once

#include <string>
#include <variant>
#include <vector>

#include "json.hpp"

#include "cprpca/index_set.hpp"
#include "cprpca/rng.hpp"

namespace cprpca {

// Probability band every estimated p_ij is clamped into.
inline constexpr double kProbFloor = 1e-6;
inline constexpr double kProbCeil = 1.0 - 1e-6;

struct UniformModel {
  double p = 0.5;
};

// logit p_ij = sum_l A_il B_lj
struct LogisticFactorModel {
  Matrix A;  // d1 x k
  Matrix B;  // k x d2
};

// p_ij = a_i b_j, optionally clamped into [1e-6, 1 - 1e-6] (estimated fits).
struct RankOneModel {
  Vector a;
  Vector b;
  bool clamped = false;
};

struct ExplicitModel {
  Matrix P;
};

enum class ObservationKind { Uniform, Logistic, RankOne, Explicit };

ObservationKind parse_observation_kind(const std::string& s);
std::string to_string(ObservationKind k);

// Entrywise observation law on a d1 x d2 grid. Every implied probability lies
// strictly inside (0, 1); construction validates this.
class ObservationModel {
 public:
  using Variant = std::variant<UniformModel, LogisticFactorModel, RankOneModel, ExplicitModel>;

  ObservationModel(int rows, int cols, Variant v);

  static ObservationModel uniform(int rows, int cols, double p);
  static ObservationModel logistic(Matrix A, Matrix B);
  static ObservationModel rank_one(Vector a, Vector b, bool clamped = false);
  static ObservationModel explicit_matrix(Matrix P);

  int rows() const noexcept { return rows_; }
  int cols() const noexcept { return cols_; }
  ObservationKind kind() const;
  const Variant& variant() const noexcept { return v_; }

  double prob(int i, int j) const { return P_(i, j); }
  // h_ij = (1 - p_ij) / p_ij
  double odds(int i, int j) const { return (1.0 - P_(i, j)) / P_(i, j); }
  const Matrix& probabilities() const noexcept { return P_; }

  // Flags set by estimators: the logistic fit hit its iteration cap, or the
  // rank-one fit had to fall back on empty rows/columns.
  bool converged = true;
  bool fallback_used = false;

 private:
  int rows_;
  int cols_;
  Variant v_;
  Matrix P_;
};

// Each (i, j) is included independently with probability p_ij.
IndexSet sample_mask(const ObservationModel& model, Rng& rng);

// p_hat = |train| / (d1 d2 q), clamped into [1e-6, 1 - 1e-6].
ObservationModel estimate_uniform(const IndexSet& train, double q);

struct LogisticFitOptions {
  int iters = 300;
  double step = 1.0;  // initial step before backtracking
  double tol = 1e-9;  // relative log-likelihood improvement
  double a_lo = 0.0, a_hi = 1.0;
  double b_lo = -0.5, b_hi = 0.5;
  std::uint64_t seed = 1;
};

struct LogisticFit {
  ObservationModel model;
  std::vector<double> loglik_trace;
  bool converged = false;
};

// Constrained maximum likelihood for the indicator "in train", whose success
// probability is q * sigmoid(A B) on every grid cell. Projected gradient
// ascent with backtracking, so the log-likelihood never decreases.
LogisticFit fit_logistic(const IndexSet& train, int k, double q, const LogisticFitOptions& opt = {});
ObservationModel estimate_logistic(const IndexSet& train, int k, double q,
                                   const LogisticFitOptions& opt = {});

// Method of moments: r_i = n_i / (d2 q), c_j = n_j / (d1 q), m = n / (d1 d2 q),
// p_hat_ij = clamp(r_i c_j / m). Empty rows/columns fall back to m.
ObservationModel estimate_rank_one(const IndexSet& train, double q);

struct CalibrationWeights {
  std::vector<double> cal;  // aligned with cal_set.entries()
  double test = 0.0;
  double max_target_odds = 0.0;
};

// One-shot weights: w_ij = h_ij / (sum_cal h + max_target h), and
// w_test = max_target h / (same denominator).
CalibrationWeights one_shot_weights(const ObservationModel& model, const IndexSet& cal_set,
                                    const IndexSet& target_set);

// {"variant": ..., params}. The Explicit variant stores its matrix in
// `matrix_path` (CSV or CPRM binary by extension) and references it by name.
nlohmann::json to_json(const ObservationModel& model, const std::string& matrix_path = "");
// Relative matrix references resolve against `base_dir`.
ObservationModel observation_model_from_json(const nlohmann::json& j,
                                             const std::string& base_dir = "");

}  // namespace cprpca
