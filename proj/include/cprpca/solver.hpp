#pragma once

#include <iosfwd>
#include <optional>
#include <string>

#include "cprpca/index_set.hpp"

namespace cprpca {

struct FactorPair {
  Matrix U;  // d1 x r
  Matrix V;  // d2 x r

  int rank() const { return static_cast<int>(U.cols()); }
  Matrix product() const { return U * V.transpose(); }
};

struct SolverConfig {
  int rank = 8;
  double sparsity_beta = 0.1;
  // Per-row/column truncation budget is floor(gamma * m + budget_slack * sqrt(m))
  // with m = p_hat * beta * d, the expected corruption count of a row/column.
  double gamma = 2.0;
  double budget_slack = 3.0;
  // Factor step size; empty means 1 / ||[U0; V0]||_2^2.
  std::optional<double> eta;
  int max_iters = 300;
  double tol = 1e-7;

  int init_iters = 20;
  // Sparse-component step in the initialization; empty means p_hat, which
  // turns the step into a replacement by the observed residual.
  std::optional<double> init_step;
  // Low-rank step in the initialization, in units of 1 / p_hat.
  double init_eta = 0.5;
  double lambda = 1.5;
  double zeta_c0 = 1.5;
  int dykstra_sweeps = 1;

  // Budget multiplier used when flagging corrupted entries across the whole
  // observed set after a fit (see flag_corruptions).
  double flag_gamma = 1.1;

  void validate() const;
};

// Reads the [solver] section of a key=value config. Keys outside that section
// are ignored; unknown keys inside it are an error.
SolverConfig parse_solver_config(std::istream& in, SolverConfig base = {},
                                 const std::string& name = "<config>");
// Applies one key=value pair; throws InvalidParameter on unknown keys.
void set_solver_option(SolverConfig& cfg, const std::string& key, const std::string& value);

struct RpcaEstimate {
  FactorPair factors;
  Matrix Xhat;
  Matrix Shat;
  IndexSet omega_star_hat;  // supp(Shat), inside the fitted index set
  IndexSet omega_pure_hat;  // fitted set minus omega_star_hat
  int iters_run = 0;
  double final_objective = 0.0;
  bool converged = false;

  // Constraint radii and step size the iterations used; reused by warm starts.
  double radius_u = 0.0;
  double radius_v = 0.0;
  double eta = 0.0;
};

struct LossGradients {
  double loss = 0.0;
  Matrix gradU;
  Matrix gradV;
};

// Partially observed squared loss (1 / (2 p_hat)) * sum_obs (U V' + S - Y)^2
// and its exact gradients in U and V.
LossGradients loss_and_gradients(const FactorPair& f, const Matrix& S, const Matrix& Y,
                                 const IndexSet& obs, double p_hat);

// (1/64) ||U'U - V'V||_F^2 and its gradients.
LossGradients balance_penalty(const FactorPair& f);

struct InitResult {
  FactorPair factors;
  Matrix S0;
  double mu_hat = 1.0;  // incoherence of the final rank-r SVD
  double zeta = 0.0;    // clamp level used in the last round
};

InitResult initialize(const Matrix& Y, const IndexSet& obs, const SolverConfig& cfg);

RpcaEstimate solve(const Matrix& Y, const IndexSet& obs, const SolverConfig& cfg);

// Runs the factor iterations from `start`, reusing the constraint radii and
// step size of `reference` instead of re-initializing.
RpcaEstimate solve_warm(const Matrix& Y, const IndexSet& obs, const SolverConfig& cfg,
                        const RpcaEstimate& reference);

// Entries of `obs` whose residual |Y - Xhat| survives truncation with budget
// floor(flag_gamma * p_obs * beta * d) per row and column, where p_obs is the
// observed fraction of the grid.
IndexSet flag_corruptions(const Matrix& Y, const Matrix& Xhat, const IndexSet& obs,
                          const SolverConfig& cfg);

}  // namespace cprpca
