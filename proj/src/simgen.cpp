#include "cprpca/simgen.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>

#include "cprpca/error.hpp"
#include "cprpca/matrix_io.hpp"
#include "cprpca/matrix_ops.hpp"

namespace cprpca {

std::string to_string(Mechanism m) {
  switch (m) {
    case Mechanism::Uniform: return "uniform";
    case Mechanism::Logistic: return "logistic";
    case Mechanism::RankOne: return "rank1";
  }
  return "?";
}

std::string to_string(NoiseKind n) {
  switch (n) {
    case NoiseKind::Gaussian: return "gaussian";
    case NoiseKind::StudentT3: return "student_t3";
    case NoiseKind::HeteroAdversarial: return "hetero_adversarial";
    case NoiseKind::HeteroRandom: return "hetero_random";
  }
  return "?";
}

SettingSpec setting_spec(int id) {
  SettingSpec s;
  s.id = id;
  auto set = [&](Mechanism m, NoiseKind n) {
    s.mechanism = m;
    s.noise = n;
    s.estimate_with = m == Mechanism::Uniform    ? ObservationKind::Uniform
                      : m == Mechanism::Logistic ? ObservationKind::Logistic
                                                 : ObservationKind::RankOne;
  };
  switch (id) {
    case 1: set(Mechanism::Uniform, NoiseKind::Gaussian); break;
    case 2: set(Mechanism::Uniform, NoiseKind::StudentT3); break;
    case 3: set(Mechanism::Logistic, NoiseKind::Gaussian); break;
    case 4: set(Mechanism::Logistic, NoiseKind::StudentT3); break;
    case 5: set(Mechanism::RankOne, NoiseKind::Gaussian); break;
    case 6: set(Mechanism::RankOne, NoiseKind::StudentT3); break;
    case 7: set(Mechanism::Logistic, NoiseKind::HeteroAdversarial); break;
    case 8: set(Mechanism::Logistic, NoiseKind::HeteroRandom); break;
    case 9: set(Mechanism::Uniform, NoiseKind::Gaussian); s.p = 0.3; break;
    case 10: set(Mechanism::Uniform, NoiseKind::Gaussian); s.p = 0.7; break;
    case 11: set(Mechanism::Uniform, NoiseKind::Gaussian); s.beta = 0.05; break;
    case 12: set(Mechanism::Uniform, NoiseKind::Gaussian); s.beta = 0.2; break;
    case 13:
      set(Mechanism::RankOne, NoiseKind::HeteroAdversarial);
      s.estimate_with = ObservationKind::Logistic;
      break;
    case 14:
      set(Mechanism::Logistic, NoiseKind::HeteroAdversarial);
      s.estimate_with = ObservationKind::Uniform;
      break;
    default:
      throw UnknownSetting("unknown setting " + std::to_string(id));
  }
  return s;
}

Matrix gen_lowrank(int d1, int d2, int r_star, Rng& rng, FactorLaw law) {
  if (r_star < 1 || r_star > std::min(d1, d2))
    throw InvalidParameter("gen_lowrank: rank must lie in [1, min(d1, d2)]");
  std::normal_distribution<double> g(0.0, 1.0 / std::sqrt(static_cast<double>(r_star)));
  Matrix U(d1, r_star), V(d2, r_star);
  for (int k = 0; k < r_star; ++k)
    for (int i = 0; i < d1; ++i) U(i, k) = g(rng);
  for (int k = 0; k < r_star; ++k)
    for (int j = 0; j < d2; ++j) V(j, k) = g(rng);
  if (law == FactorLaw::Orthonormal) {
    // Orthonormal columns rescaled so entries keep the i.i.d. variance.
    Eigen::HouseholderQR<Matrix> qu(U), qv(V);
    U = qu.householderQ() * Matrix::Identity(d1, r_star) * std::sqrt(d1 / static_cast<double>(r_star));
    V = qv.householderQ() * Matrix::Identity(d2, r_star) * std::sqrt(d2 / static_cast<double>(r_star));
  }
  return U * V.transpose();
}

Matrix gen_sparse(const Matrix& Xstar, double beta, Rng& rng, double mult, double dead_zone) {
  if (!(beta >= 0.0 && beta < 1.0)) throw InvalidParameter("gen_sparse: beta must lie in [0, 1)");
  Matrix S = Matrix::Zero(Xstar.rows(), Xstar.cols());
  if (beta == 0.0) return S;
  const double scale = norm_max(Xstar);
  const double hi = mult * scale, lo = dead_zone * scale;
  std::bernoulli_distribution hit(beta);
  // |value| uniform on [lo, hi] with a random sign, i.e. Uniform(-hi, hi)
  // conditioned on leaving the dead zone.
  std::uniform_real_distribution<double> mag(lo, hi);
  std::bernoulli_distribution sign(0.5);
  for (Eigen::Index i = 0; i < S.rows(); ++i)
    for (Eigen::Index j = 0; j < S.cols(); ++j)
      if (hit(rng)) {
        const double m = mag(rng);
        S(i, j) = sign(rng) ? m : -m;
      }
  return S;
}

Matrix noise_scale(const SettingSpec& spec, const Matrix& P, Rng& rng) {
  Matrix sd = (0.5 * P.array().inverse()).matrix();
  if (spec.noise == NoiseKind::HeteroRandom) {
    std::vector<double> vals(sd.data(), sd.data() + sd.size());
    std::shuffle(vals.begin(), vals.end(), rng);
    std::copy(vals.begin(), vals.end(), sd.data());
  }
  return sd;
}

Matrix gen_noise(const SettingSpec& spec, const Matrix& Xstar, const Matrix& P, Rng& rng) {
  const Eigen::Index d1 = Xstar.rows(), d2 = Xstar.cols();
  Matrix E(d1, d2);
  std::normal_distribution<double> z(0.0, 1.0);
  switch (spec.noise) {
    case NoiseKind::Gaussian: {
      const double sd = spec.noise_mult * norm_max(Xstar);
      for (Eigen::Index i = 0; i < d1; ++i)
        for (Eigen::Index j = 0; j < d2; ++j) E(i, j) = sd * z(rng);
      break;
    }
    case NoiseKind::StudentT3: {
      std::student_t_distribution<double> t(3.0);
      for (Eigen::Index i = 0; i < d1; ++i)
        for (Eigen::Index j = 0; j < d2; ++j) E(i, j) = t(rng);
      break;
    }
    case NoiseKind::HeteroAdversarial:
    case NoiseKind::HeteroRandom: {
      if (P.rows() != d1 || P.cols() != d2) throw DimensionError("gen_noise: P shape mismatch");
      const Matrix sd = noise_scale(spec, P, rng);
      for (Eigen::Index i = 0; i < d1; ++i)
        for (Eigen::Index j = 0; j < d2; ++j) E(i, j) = sd(i, j) * z(rng);
      break;
    }
  }
  return E;
}

ObservationModel gen_mechanism(const SettingSpec& spec, Rng& rng) {
  switch (spec.mechanism) {
    case Mechanism::Uniform:
      return ObservationModel::uniform(spec.d1, spec.d2, spec.p);
    case Mechanism::Logistic: {
      std::uniform_real_distribution<double> ua(0.0, 1.0), ub(-0.5, 0.5);
      Matrix A(spec.d1, spec.logistic_k), B(spec.logistic_k, spec.d2);
      for (Eigen::Index i = 0; i < A.size(); ++i) A.data()[i] = ua(rng);
      for (Eigen::Index i = 0; i < B.size(); ++i) B.data()[i] = ub(rng);
      return ObservationModel::logistic(std::move(A), std::move(B));
    }
    case Mechanism::RankOne: {
      std::uniform_real_distribution<double> u(0.3, 0.9);
      Vector a(spec.d1), b(spec.d2);
      for (Eigen::Index i = 0; i < a.size(); ++i) a(i) = u(rng);
      for (Eigen::Index j = 0; j < b.size(); ++j) b(j) = u(rng);
      return ObservationModel::rank_one(std::move(a), std::move(b));
    }
  }
  throw InvalidParameter("gen_mechanism: unknown mechanism");
}

GroundTruth gen_setting(const SettingSpec& spec, std::uint64_t replicate) {
  if (spec.d1 < 1 || spec.d2 < 1) throw InvalidParameter("gen_setting: empty grid");
  const auto sid = static_cast<std::uint64_t>(spec.id);
  auto rng_for = [&](Stage st) { return make_rng(spec.seed, sid, replicate, st); };
  GroundTruth g;
  g.spec = spec;
  Rng r_low = rng_for(Stage::LowRank);
  g.Xstar = gen_lowrank(spec.d1, spec.d2, spec.rank_true, r_low, spec.factors);
  Rng r_sp = rng_for(Stage::Sparse);
  g.Sstar = gen_sparse(g.Xstar, spec.beta, r_sp, spec.corruption_mult, spec.dead_zone);
  Rng r_mech = rng_for(Stage::Mechanism);
  g.model = gen_mechanism(spec, r_mech);
  g.P = g.model->probabilities();
  Rng r_noise = rng_for(Stage::Noise);
  g.E = gen_noise(spec, g.Xstar, g.P, r_noise);
  g.Y = g.Xstar + g.Sstar + g.E;
  Rng r_mask = rng_for(Stage::Mask);
  g.mask = sample_mask(*g.model, r_mask);
  return g;
}

nlohmann::json to_json(const SettingSpec& s) {
  return {{"id", s.id},
          {"d1", s.d1},
          {"d2", s.d2},
          {"rank_true", s.rank_true},
          {"beta", s.beta},
          {"mechanism", to_string(s.mechanism)},
          {"p", s.p},
          {"logistic_k", s.logistic_k},
          {"noise", to_string(s.noise)},
          {"noise_mult", s.noise_mult},
          {"corruption_mult", s.corruption_mult},
          {"dead_zone", s.dead_zone},
          {"estimate_with", to_string(s.estimate_with)},
          {"factors", s.factors == FactorLaw::Iid ? "iid" : "orthonormal"},
          {"seed", s.seed}};
}

void dump_ground_truth(const GroundTruth& g, const std::string& dir, std::uint64_t replicate) {
  namespace fs = std::filesystem;
  fs::create_directories(dir);
  const fs::path base(dir);
  io::save_matrix((base / "Xstar.csv").string(), g.Xstar);
  io::save_matrix((base / "Sstar.csv").string(), g.Sstar);
  io::save_matrix((base / "E.csv").string(), g.E);
  io::save_matrix((base / "Y.csv").string(), g.Y);
  io::save_matrix((base / "P.csv").string(), g.P);
  io::save_matrix((base / "target.csv").string(), g.target());
  io::save_index_set((base / "mask.csv").string(), g.mask);
  nlohmann::json m;
  m["spec"] = to_json(g.spec);
  m["replicate"] = replicate;
  m["files"] = {{"Xstar", "Xstar.csv"}, {"Sstar", "Sstar.csv"}, {"E", "E.csv"},
                {"Y", "Y.csv"},         {"P", "P.csv"},         {"mask", "mask.csv"},
                {"target", "target.csv"}};
  std::ofstream out(base / "manifest.json");
  if (!out) throw InvalidInput("cannot write " + (base / "manifest.json").string());
  out << m.dump(2) << '\n';
}

}  // namespace cprpca
