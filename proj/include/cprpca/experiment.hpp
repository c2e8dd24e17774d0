#pragma once

#include <string>

#include "cprpca/conformal.hpp"
#include "cprpca/evaluation.hpp"
#include "cprpca/simgen.hpp"

namespace cprpca {

enum class Method { Split, Full, Baseline };
Method parse_method(const std::string& s);
std::string to_string(Method m);

struct ExperimentOptions {
  Method method = Method::Split;
  double alpha = 0.1;
  double q = 0.7;
  int bootstrap_resamples = 50;
  SolverConfig solver;  // rank is overwritten per run
  std::optional<ObservationKind> obs_model;  // default: the setting's directive
  int delta_test_points = 50;
  // Full CP in sweeps: targets sampled per replicate and grid size.
  int full_targets = 10;
  int full_grid = 41;
};

struct ReplicateOutput {
  MetricsRecord metrics;
  std::vector<std::string> warnings;
};

// "8", "4,8,16" or "a..b[:step]" (inclusive). Throws InvalidInput.
std::vector<int> parse_int_list(const std::string& s);

nlohmann::json to_json(const SolverConfig& c);

// One replicate: generate, fit, calibrate, score against X* + E.
ReplicateOutput run_replicate(const SettingSpec& spec, int r, int rep,
                              const ExperimentOptions& opt);

}  // namespace cprpca
