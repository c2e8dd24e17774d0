#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <cmath>
#include <limits>

#include "cprpca/conformal.hpp"
#include "cprpca/error.hpp"
#include "cprpca/experiment.hpp"
#include "cprpca/matrix_ops.hpp"
#include "cprpca/simgen.hpp"
#include "cprpca/solver.hpp"

namespace py = pybind11;
using namespace cprpca;

namespace {

// Nonzero entries of a dense 0/1 array are observed.
IndexSet mask_from(const Matrix& m) { return IndexSet::support(m); }

SolverConfig make_config(int rank, double beta, const py::dict& extra) {
  SolverConfig cfg;
  cfg.rank = rank;
  cfg.sparsity_beta = beta;
  for (auto kv : extra) set_solver_option(cfg, py::str(kv.first), py::str(kv.second));
  cfg.validate();
  return cfg;
}

py::dict estimate_dict(const RpcaEstimate& e) {
  py::dict d;
  d["Xhat"] = e.Xhat;
  d["Shat"] = e.Shat;
  d["U"] = e.factors.U;
  d["V"] = e.factors.V;
  d["iterations"] = e.iters_run;
  d["converged"] = e.converged;
  d["objective"] = e.final_objective;
  return d;
}

py::dict metrics_dict(const MetricsRecord& m) {
  py::dict d;
  d["setting"] = m.setting;
  d["rep"] = m.rep;
  d["r"] = m.r;
  d["seed"] = m.seed;
  d["avg_cov"] = m.avg_cov;
  d["avg_length"] = m.length_infinite ? std::numeric_limits<double>::infinity() : m.avg_length;
  d["avg_time_s"] = m.avg_time_s;
  d["delta_hat"] = m.delta_hat;
  d["xi_hat"] = m.xi_hat;
  d["omega_max"] = m.omega_max;
  d["n_targets"] = m.n_targets;
  return d;
}

}  // namespace

PYBIND11_MODULE(_cprpca, m) {
  m.doc() = "Conformal prediction intervals for robust PCA";

  py::register_exception<InvalidInput>(m, "InvalidInput", PyExc_ValueError);
  py::register_exception<InvalidParameter>(m, "InvalidParameter", PyExc_ValueError);
  py::register_exception<DimensionError>(m, "DimensionError", PyExc_ValueError);
  py::register_exception<InsufficientData>(m, "InsufficientData", PyExc_RuntimeError);
  py::register_exception<UnknownSetting>(m, "UnknownSetting", PyExc_KeyError);

  m.def("truncate_sparse", &truncate_sparse, py::arg("S"), py::arg("beta"));
  m.def("hard_threshold", &hard_threshold, py::arg("M"), py::arg("k"));
  m.def("project_incoherent", &project_incoherent, py::arg("F"), py::arg("radius"));

  m.def(
      "weighted_quantile",
      [](const std::vector<double>& scores, const std::vector<double>& weights, double inf_weight,
         double level) {
        const Threshold t = weighted_quantile(
            WeightedScoreSet::with_infinite_atom(scores, weights, inf_weight), level);
        return t.infinite ? std::numeric_limits<double>::infinity() : t.value;
      },
      py::arg("scores"), py::arg("weights"), py::arg("inf_weight") = 0.0, py::arg("level"));

  m.def(
      "solve",
      [](const Matrix& Y, const Matrix& mask, int rank, double beta, const py::dict& options) {
        return estimate_dict(solve(Y, mask_from(mask), make_config(rank, beta, options)));
      },
      py::arg("Y"), py::arg("mask"), py::arg("rank"), py::arg("beta") = 0.1,
      py::arg("options") = py::dict());

  m.def(
      "split_cp",
      [](const Matrix& Y, const Matrix& mask, int rank, double beta, double alpha, double q,
         int bootstrap, std::uint64_t seed, const std::string& obs_model, const py::dict& options) {
        SplitCpOptions so;
        so.alpha = alpha;
        so.q = q;
        so.solver = make_config(rank, beta, options);
        so.bootstrap.resamples = bootstrap;
        so.obs_model = parse_observation_kind(obs_model);
        Rng rng = make_rng(seed, 0, 0, Stage::Split);
        const SplitCpResult res = split_cp(Y, mask_from(mask), so, rng);
        const double nan = std::numeric_limits<double>::quiet_NaN();
        Matrix lo = Matrix::Constant(Y.rows(), Y.cols(), nan);
        Matrix hi = lo;
        const IntervalField& f = res.intervals;
        for (std::size_t k = 0; k < f.size(); ++k) {
          const Entry e = f.entries[k];
          lo(e.row, e.col) = f.infinite() ? -INFINITY : f.lo(k);
          hi(e.row, e.col) = f.infinite() ? INFINITY : f.hi(k);
        }
        py::dict d = estimate_dict(res.estimate);
        d["lower"] = lo;
        d["upper"] = hi;
        d["q_hat"] = f.infinite() ? INFINITY : f.q_hat.value;
        d["omega_max"] = res.calibration.omega_max;
        d["sigma_model_sq"] = res.calibration.sigma_model_sq;
        d["sigma_noise_sq"] = res.calibration.sigma_noise_sq;
        d["flagged"] = res.omega_star_hat.indicator();
        d["warnings"] = res.warnings;
        return d;
      },
      py::arg("Y"), py::arg("mask"), py::arg("rank"), py::arg("beta") = 0.1,
      py::arg("alpha") = 0.1, py::arg("q") = 0.7, py::arg("bootstrap") = 50,
      py::arg("seed") = 1, py::arg("obs_model") = "uniform", py::arg("options") = py::dict());

  m.def(
      "generate",
      [](int setting, int d, int rank_true, std::uint64_t seed, std::uint64_t rep, double beta) {
        SettingSpec s = setting_spec(setting);
        s.d1 = s.d2 = d;
        s.rank_true = rank_true;
        s.seed = seed;
        if (beta >= 0.0) s.beta = beta;
        const GroundTruth g = gen_setting(s, rep);
        py::dict out;
        out["Xstar"] = g.Xstar;
        out["Sstar"] = g.Sstar;
        out["E"] = g.E;
        out["Y"] = g.Y;
        out["P"] = g.P;
        out["mask"] = g.mask.indicator();
        out["target"] = g.target();
        return out;
      },
      py::arg("setting"), py::arg("d"), py::arg("rank_true") = 8, py::arg("seed") = 1,
      py::arg("rep") = 0, py::arg("beta") = -1.0);

  m.def(
      "run_replicate",
      [](int setting, int d, int r, int rep, std::uint64_t seed, const std::string& method,
         int bootstrap, int rank_true) {
        SettingSpec s = setting_spec(setting);
        s.d1 = s.d2 = d;
        s.seed = seed;
        if (rank_true > 0) s.rank_true = rank_true;
        ExperimentOptions opt;
        opt.method = parse_method(method);
        opt.bootstrap_resamples = bootstrap;
        return metrics_dict(run_replicate(s, r, rep, opt).metrics);
      },
      py::arg("setting"), py::arg("d"), py::arg("r"), py::arg("rep") = 0, py::arg("seed") = 1,
      py::arg("method") = "split", py::arg("bootstrap") = 10, py::arg("rank_true") = 0);
}
