#pragma once

#include <optional>
#include <string>

#include "json.hpp"

#include "cprpca/index_set.hpp"
#include "cprpca/observation.hpp"
#include "cprpca/rng.hpp"

namespace cprpca {

enum class Mechanism { Uniform, Logistic, RankOne };
enum class NoiseKind { Gaussian, StudentT3, HeteroAdversarial, HeteroRandom };
enum class FactorLaw { Iid, Orthonormal };

std::string to_string(Mechanism m);
std::string to_string(NoiseKind n);

struct SettingSpec {
  int id = 1;
  int d1 = 500;
  int d2 = 500;
  int rank_true = 8;
  double beta = 0.1;
  Mechanism mechanism = Mechanism::Uniform;
  double p = 0.5;      // uniform mechanism only
  int logistic_k = 5;  // logistic mechanism only
  NoiseKind noise = NoiseKind::Gaussian;
  double noise_mult = 0.1;  // gaussian sd in units of max|X*|
  double corruption_mult = 5.0;
  double dead_zone = 0.1;
  // Model the estimator should assume; differs from the mechanism for the
  // misspecified settings.
  ObservationKind estimate_with = ObservationKind::Uniform;
  FactorLaw factors = FactorLaw::Iid;
  std::uint64_t seed = 0;
};

// Defaults for settings 1 to 14; unknown ids raise UnknownSetting.
SettingSpec setting_spec(int id);

struct GroundTruth {
  SettingSpec spec;
  Matrix Xstar;
  Matrix Sstar;
  Matrix P;
  Matrix E;
  Matrix Y;
  IndexSet mask;
  std::optional<ObservationModel> model;

  // Target of the intervals: the uncorrupted observation X* + E.
  Matrix target() const { return Xstar + E; }
};

Matrix gen_lowrank(int d1, int d2, int r_star, Rng& rng, FactorLaw law = FactorLaw::Iid);
Matrix gen_sparse(const Matrix& Xstar, double beta, Rng& rng, double mult = 5.0,
                  double dead_zone = 0.1);
// Per-entry noise sd for the heteroscedastic kinds: 1/(2 p_ij), shuffled over
// the grid for HeteroRandom.
Matrix noise_scale(const SettingSpec& spec, const Matrix& P, Rng& rng);
Matrix gen_noise(const SettingSpec& spec, const Matrix& Xstar, const Matrix& P, Rng& rng);
ObservationModel gen_mechanism(const SettingSpec& spec, Rng& rng);

GroundTruth gen_setting(const SettingSpec& spec, std::uint64_t replicate = 0);

nlohmann::json to_json(const SettingSpec& s);

// Writes Xstar/Sstar/E/Y/P and target (X* + E) as CSV, the mask as 1-based "i,j" and a
// manifest.json with the spec and seed.
void dump_ground_truth(const GroundTruth& g, const std::string& dir, std::uint64_t replicate = 0);

}  // namespace cprpca
