#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "json.hpp"

#include "cprpca/conformal.hpp"
#include "cprpca/observation.hpp"

namespace cprpca {

struct MetricsRecord {
  int setting = 0;
  int rep = 0;
  int r = 0;
  std::uint64_t seed = 0;
  double avg_cov = 0.0;
  double avg_length = 0.0;
  bool length_infinite = false;
  double avg_time_s = 0.0;
  double delta_hat = 0.0;
  double xi_hat = 0.0;
  double omega_max = 0.0;
  std::size_t n_targets = 0;
};

inline constexpr const char* kMetricsHeader =
    "setting,rep,r,seed,avg_cov,avg_length,avg_time_s,delta_hat,xi_hat,omega_max,n_targets";

// Wall time varies between runs; with_time=false leaves that field empty so
// the row is reproducible byte for byte.
void write_metrics_row(std::ostream& out, const MetricsRecord& m, bool with_time = true);

// Fraction of targets whose truth falls inside its interval; 1 when there are
// no targets.
double avg_cov(const Matrix& truth, const IntervalField& f);

struct LengthSummary {
  double value = 0.0;
  bool infinite = false;
};

LengthSummary avg_length(const IntervalField& f);

// Half the l1 distance between two weight vectors, each normalized by its own
// sum.
double total_variation(const std::vector<double>& a, const std::vector<double>& b);

// TV distance between odds-proportional weights over cal plus the test point.
double delta_gap(const ObservationModel& truth, const ObservationModel& fitted,
                 const IndexSet& cal, Entry test);

// Weight mass on calibration atoms that are truly corrupted. Weights are
// aligned with cal.entries().
double xi_gap(const IndexSet& cal, const std::vector<double>& weights,
              const IndexSet& contaminated);

enum class BandVerdict { Within, Below, Above };
std::string to_string(BandVerdict v);

struct BandCheck {
  BandVerdict verdict = BandVerdict::Within;
  double mean_cov = 0.0;
  double se = 0.0;
  double lower = 0.0;
  double upper = 0.0;
  double mean_delta = 0.0;
  double mean_xi = 0.0;
  double mean_omega_max = 0.0;
};

// Mean coverage against [1-a-D-X-eps, 1-a+k*W+D+X+eps], eps = 3 standard
// errors of the mean; k = 2 for the split bound, 1 for the sharper variant.
BandCheck theorem_band(const std::vector<MetricsRecord>& recs, double alpha,
                       double omega_factor = 2.0);

struct CellSummary {
  int setting = 0;
  int r = 0;
  std::size_t n = 0;
  std::size_t failures = 0;
  double mean_cov = 0.0, se_cov = 0.0;
  double mean_length = 0.0, se_length = 0.0;
  std::size_t infinite_lengths = 0;
  double mean_time = 0.0;
  double mean_delta = 0.0;
  double mean_xi = 0.0;
  double mean_omega_max = 0.0;
};

double mean_of(const std::vector<double>& v);
// Standard error of the mean (sample sd / sqrt n); 0 for fewer than 2 values.
double standard_error(const std::vector<double>& v);

// Groups records by (setting, r), sorted. Infinite lengths are excluded from
// the length mean and counted separately.
std::vector<CellSummary> summarize(const std::vector<MetricsRecord>& recs);
nlohmann::json to_json(const CellSummary& c);

}  // namespace cprpca
