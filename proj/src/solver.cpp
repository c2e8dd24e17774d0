#include "cprpca/solver.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <limits>
#include <sstream>

#include "cprpca/config.hpp"
#include "cprpca/error.hpp"
#include "cprpca/matrix_ops.hpp"

namespace cprpca {

void SolverConfig::validate() const {
  if (rank < 1) throw InvalidParameter("solver: rank must be >= 1");
  if (!(sparsity_beta >= 0.0 && sparsity_beta < 1.0))
    throw InvalidParameter("solver: sparsity_beta must lie in [0, 1)");
  if (!(gamma > 0.0)) throw InvalidParameter("solver: gamma must be > 0");
  if (!(budget_slack >= 0.0)) throw InvalidParameter("solver: budget_slack must be >= 0");
  if (eta && !(*eta > 0.0)) throw InvalidParameter("solver: eta must be > 0");
  if (max_iters < 0) throw InvalidParameter("solver: max_iters must be >= 0");
  if (!(tol > 0.0)) throw InvalidParameter("solver: tol must be > 0");
  if (init_iters < 1) throw InvalidParameter("solver: init_iters must be >= 1");
  if (init_step && !(*init_step > 0.0)) throw InvalidParameter("solver: init_step must be > 0");
  if (!(init_eta > 0.0)) throw InvalidParameter("solver: init_eta must be > 0");
  if (!(lambda >= 1.0)) throw InvalidParameter("solver: lambda must be >= 1");
  if (!(zeta_c0 > 0.0)) throw InvalidParameter("solver: zeta_c0 must be > 0");
  if (dykstra_sweeps < 1) throw InvalidParameter("solver: dykstra_sweeps must be >= 1");
  if (!(flag_gamma >= 0.0)) throw InvalidParameter("solver: flag_gamma must be >= 0");
}

void set_solver_option(SolverConfig& cfg, const std::string& key, const std::string& value) {
  const config::KeyValue kv{key, value, 0};
  const std::string src = "solver option";
  auto opt_auto = [&](std::optional<double>& field) {
    if (value == "auto")
      field.reset();
    else
      field = config::to_double(kv, src);
  };
  if (key == "rank") cfg.rank = config::to_int(kv, src);
  else if (key == "sparsity_beta") cfg.sparsity_beta = config::to_double(kv, src);
  else if (key == "gamma") cfg.gamma = config::to_double(kv, src);
  else if (key == "budget_slack") cfg.budget_slack = config::to_double(kv, src);
  else if (key == "eta") opt_auto(cfg.eta);
  else if (key == "max_iters") cfg.max_iters = config::to_int(kv, src);
  else if (key == "tol") cfg.tol = config::to_double(kv, src);
  else if (key == "init_iters") cfg.init_iters = config::to_int(kv, src);
  else if (key == "init_step") opt_auto(cfg.init_step);
  else if (key == "init_eta") cfg.init_eta = config::to_double(kv, src);
  else if (key == "lambda") cfg.lambda = config::to_double(kv, src);
  else if (key == "zeta_c0") cfg.zeta_c0 = config::to_double(kv, src);
  else if (key == "dykstra_sweeps") cfg.dykstra_sweeps = config::to_int(kv, src);
  else if (key == "flag_gamma") cfg.flag_gamma = config::to_double(kv, src);
  else throw InvalidParameter("solver: unknown key '" + key + "'");
}

SolverConfig parse_solver_config(std::istream& in, SolverConfig base, const std::string& name) {
  const auto sections = config::parse_ini(in, name);
  if (auto it = sections.find("solver"); it != sections.end()) {
    for (const auto& kv : it->second) {
      try {
        set_solver_option(base, kv.key, kv.value);
      } catch (const InvalidParameter& e) {
        throw ParseError(name, kv.line, e.what());
      } catch (const ParseError&) {
        throw ParseError(name, kv.line, "bad value for '" + kv.key + "'");
      }
    }
  }
  base.validate();
  return base;
}

namespace {

void check_problem(const Matrix& Y, const IndexSet& obs) {
  if (obs.rows() != Y.rows() || obs.cols() != Y.cols())
    throw DimensionError("solver: observation set does not match data shape");
  if (obs.empty()) throw InsufficientData("solver: no observed entries");
  require_finite(Y, "solver input");
}

double observed_fraction(const IndexSet& obs) {
  return static_cast<double>(obs.size()) / static_cast<double>(obs.grid_size());
}

// Row/column truncation budgets floor(g * m + c * sqrt(m)), m = p * beta * d.
std::pair<int, int> truncation_budget(double g, double c, double p, double beta,
                                      Eigen::Index d1, Eigen::Index d2) {
  auto k = [&](Eigen::Index d) {
    const double m = p * beta * static_cast<double>(d);
    return static_cast<int>(std::floor(g * m + c * std::sqrt(m)));
  };
  return {k(d2), k(d1)};
}

// mu_hat = max(d1/r * ||U_bar||_{2,inf}^2, d2/r * ||V_bar||_{2,inf}^2).
double incoherence(const PartialSvd& svd) {
  const double r = static_cast<double>(svd.values.size());
  const double u = norm_2inf(svd.U), v = norm_2inf(svd.V);
  return std::max(static_cast<double>(svd.U.rows()) / r * u * u,
                  static_cast<double>(svd.V.rows()) / r * v * v);
}

double stacked_spectral_norm(const FactorPair& f) {
  // ||[U; V]||_2^2 is the top eigenvalue of U'U + V'V.
  const Matrix gram = f.U.transpose() * f.U + f.V.transpose() * f.V;
  Eigen::SelfAdjointEigenSolver<Matrix> es(gram, Eigen::EigenvaluesOnly);
  return std::sqrt(std::max(0.0, es.eigenvalues().maxCoeff()));
}

struct IterationOutcome {
  FactorPair factors;
  Matrix S;
  int iters = 0;
  double objective = 0.0;
  bool converged = false;
};

IterationOutcome run_iterations(const Matrix& Y, const IndexSet& obs, const SolverConfig& cfg,
                                FactorPair f, double radius_u, double radius_v, double eta) {
  const Matrix W = obs.indicator();
  const double p_hat = observed_fraction(obs);
  const auto [k_row, k_col] =
      truncation_budget(cfg.gamma, cfg.budget_slack, p_hat, cfg.sparsity_beta, Y.rows(), Y.cols());

  auto objective_of = [&](const Matrix& R, const Matrix& D) {
    return R.squaredNorm() / (2.0 * p_hat) + D.squaredNorm() / 64.0;
  };

  IterationOutcome out;
  double prev = std::numeric_limits<double>::quiet_NaN();
  double first = std::numeric_limits<double>::quiet_NaN();
  for (int t = 0; t < cfg.max_iters; ++t) {
    const Matrix E = W.cwiseProduct(Y - f.U * f.V.transpose());
    const Matrix S = truncate_sparse_counts(E, k_row, k_col);
    const Matrix R = S - E;  // observed residual of U V' + S - Y
    const Matrix D = f.U.transpose() * f.U - f.V.transpose() * f.V;
    const double obj = objective_of(R, D);
    if (!std::isfinite(obj) || (t > 0 && obj > 1e12 * std::max(first, 1e-300)))
      throw DivergenceError("solver diverged at iteration " + std::to_string(t), t);
    if (t == 0) first = obj;
    out.iters = t;
    if (obj <= 1e-300 || (t > 0 && std::abs(prev - obj) < cfg.tol * prev)) {
      out.converged = true;
      break;
    }
    prev = obj;

    const Matrix gU = (R * f.V) / p_hat + f.U * D / 16.0;
    const Matrix gV = (R.transpose() * f.U) / p_hat - f.V * D / 16.0;
    f.U = project_incoherent(f.U - eta * gU, radius_u);
    f.V = project_incoherent(f.V - eta * gV, radius_v);
    out.iters = t + 1;
  }

  const Matrix E = W.cwiseProduct(Y - f.U * f.V.transpose());
  out.S = truncate_sparse_counts(E, k_row, k_col);
  const Matrix D = f.U.transpose() * f.U - f.V.transpose() * f.V;
  out.objective = objective_of(out.S - E, D);
  out.factors = std::move(f);
  return out;
}

RpcaEstimate package(const IndexSet& obs, IterationOutcome&& it, double ru, double rv,
                     double eta) {
  RpcaEstimate est;
  est.Xhat = it.factors.product();
  est.Shat = std::move(it.S);
  est.factors = std::move(it.factors);
  est.omega_star_hat = IndexSet::support(est.Shat).intersect(obs);
  est.omega_pure_hat = obs.minus(est.omega_star_hat);
  est.iters_run = it.iters;
  est.final_objective = it.objective;
  est.converged = it.converged;
  est.radius_u = ru;
  est.radius_v = rv;
  est.eta = eta;
  return est;
}

}  // namespace

LossGradients loss_and_gradients(const FactorPair& f, const Matrix& S, const Matrix& Y,
                                 const IndexSet& obs, double p_hat) {
  const auto d1 = Y.rows(), d2 = Y.cols();
  if (f.U.rows() != d1 || f.V.rows() != d2 || f.U.cols() != f.V.cols() || S.rows() != d1 ||
      S.cols() != d2 || obs.rows() != d1 || obs.cols() != d2)
    throw DimensionError("loss_and_gradients: shape mismatch");
  if (!(p_hat > 0.0 && p_hat <= 1.0))
    throw InvalidParameter("loss_and_gradients: p_hat must lie in (0, 1]");
  const Matrix R = obs.restrict(f.U * f.V.transpose() + S - Y);
  LossGradients out;
  out.loss = R.squaredNorm() / (2.0 * p_hat);
  out.gradU = R * f.V / p_hat;
  out.gradV = R.transpose() * f.U / p_hat;
  return out;
}

LossGradients balance_penalty(const FactorPair& f) {
  const Matrix D = f.U.transpose() * f.U - f.V.transpose() * f.V;
  LossGradients out;
  out.loss = D.squaredNorm() / 64.0;
  out.gradU = f.U * D / 16.0;
  out.gradV = -f.V * D / 16.0;
  return out;
}

InitResult initialize(const Matrix& Y, const IndexSet& obs, const SolverConfig& cfg) {
  cfg.validate();
  check_problem(Y, obs);
  const auto d1 = Y.rows(), d2 = Y.cols();
  const int r = cfg.rank;
  if (r > std::min(d1, d2)) throw DimensionError("initialize: rank exceeds min(d1, d2)");

  const Matrix W = obs.indicator();
  const double p_hat = observed_fraction(obs);
  const double tau = cfg.init_step.value_or(p_hat);
  const long s_budget = static_cast<long>(std::floor(
      cfg.lambda * std::floor(cfg.sparsity_beta * static_cast<double>(obs.size()))));
  const long k_sparse = std::min<long>(s_budget, static_cast<long>(Y.size()));
  const double root_area = std::sqrt(static_cast<double>(d1) * static_cast<double>(d2));

  InitResult out;
  Matrix X = Matrix::Zero(d1, d2);
  Matrix S = Matrix::Zero(d1, d2);
  for (int l = 0; l < cfg.init_iters; ++l) {
    // Sparse step first, so the low-rank step already sees this round's S.
    S = hard_threshold(S - tau * (W.cwiseProduct(X + S - Y) / p_hat), k_sparse);
    const Matrix grad = W.cwiseProduct(X + S - Y) / p_hat;
    const Matrix step = X - cfg.init_eta * grad;
    const PartialSvd svd = partial_svd(step, r);
    const double s1 = svd.values(0), sr = svd.values(r - 1);
    double zeta = std::numeric_limits<double>::infinity();
    if (s1 == 0.0) {
      zeta = 0.0;
    } else if (sr > 0.0) {
      // zeta* = c0 * sigma_1 * mu * r * kappa / sqrt(d1 d2)
      zeta = cfg.zeta_c0 * s1 * incoherence(svd) * r * (s1 / sr) / root_area;
    }
    if (cfg.dykstra_sweeps == 1 || !std::isfinite(zeta)) {
      X = svd.reconstruct();
      if (std::isfinite(zeta)) X = clamp_entries(X, zeta);
    } else {
      X = project_rank_clamped(step, r, zeta, cfg.dykstra_sweeps);
    }
    out.zeta = zeta;
  }

  const PartialSvd svd = partial_svd(X, r);
  const Vector root = svd.values.cwiseSqrt();
  out.factors.U = svd.U * root.asDiagonal();
  out.factors.V = svd.V * root.asDiagonal();
  out.mu_hat = svd.values(0) > 0.0 ? incoherence(svd) : 1.0;
  out.S0 = std::move(S);
  return out;
}

RpcaEstimate solve(const Matrix& Y, const IndexSet& obs, const SolverConfig& cfg) {
  InitResult init = initialize(Y, obs, cfg);
  const double g = stacked_spectral_norm(init.factors);
  const double r = static_cast<double>(cfg.rank);
  const double ru = std::sqrt(init.mu_hat * r / static_cast<double>(Y.rows())) * g;
  const double rv = std::sqrt(init.mu_hat * r / static_cast<double>(Y.cols())) * g;
  const double eta = cfg.eta.value_or(g > 0.0 ? 1.0 / (g * g) : 1.0);
  auto it = run_iterations(Y, obs, cfg, std::move(init.factors), ru, rv, eta);
  return package(obs, std::move(it), ru, rv, eta);
}

RpcaEstimate solve_warm(const Matrix& Y, const IndexSet& obs, const SolverConfig& cfg,
                        const RpcaEstimate& reference) {
  cfg.validate();
  check_problem(Y, obs);
  if (reference.factors.U.rows() != Y.rows() || reference.factors.V.rows() != Y.cols())
    throw DimensionError("solve_warm: reference factors do not match data shape");
  auto it = run_iterations(Y, obs, cfg, reference.factors, reference.radius_u,
                           reference.radius_v, reference.eta);
  return package(obs, std::move(it), reference.radius_u, reference.radius_v, reference.eta);
}

IndexSet flag_corruptions(const Matrix& Y, const Matrix& Xhat, const IndexSet& obs,
                          const SolverConfig& cfg) {
  if (Xhat.rows() != Y.rows() || Xhat.cols() != Y.cols())
    throw DimensionError("flag_corruptions: shape mismatch");
  check_problem(Y, obs);
  const auto [k_row, k_col] = truncation_budget(cfg.flag_gamma, 0.0, observed_fraction(obs),
                                                cfg.sparsity_beta, Y.rows(), Y.cols());
  const Matrix kept = truncate_sparse_counts(obs.restrict(Y - Xhat), k_row, k_col);
  return IndexSet::support(kept).intersect(obs);
}

}  // namespace cprpca
