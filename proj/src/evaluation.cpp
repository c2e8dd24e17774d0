#include "cprpca/evaluation.hpp"

#include <cmath>
#include <map>
#include <ostream>

#include "cprpca/error.hpp"
#include "cprpca/matrix_io.hpp"

namespace cprpca {

void write_metrics_row(std::ostream& out, const MetricsRecord& m, bool with_time) {
  out << m.setting << ',' << m.rep << ',' << m.r << ',' << m.seed << ','
      << io::format_double(m.avg_cov) << ','
      << (m.length_infinite ? std::string("inf") : io::format_double(m.avg_length)) << ','
      << (with_time ? io::format_double(m.avg_time_s) : std::string()) << ',' << io::format_double(m.delta_hat) << ','
      << io::format_double(m.xi_hat) << ',' << io::format_double(m.omega_max) << ','
      << m.n_targets << '\n';
}

double avg_cov(const Matrix& truth, const IntervalField& f) {
  if (f.targets.rows() != truth.rows() || f.targets.cols() != truth.cols())
    throw DimensionError("avg_cov: truth does not match the interval grid");
  if (f.size() != f.centers.size() || f.size() != f.halfwidths.size())
    throw DimensionError("avg_cov: malformed interval field");
  if (f.size() == 0) return 1.0;
  std::size_t hit = 0;
  for (std::size_t k = 0; k < f.size(); ++k)
    if (f.covers(k, truth(f.entries[k].row, f.entries[k].col))) ++hit;
  return static_cast<double>(hit) / static_cast<double>(f.size());
}

LengthSummary avg_length(const IntervalField& f) {
  if (f.size() == 0) throw InvalidInput("avg_length: empty interval field");
  if (f.infinite()) return {0.0, true};
  double acc = 0.0;
  for (double h : f.halfwidths) acc += 2.0 * h;
  return {acc / static_cast<double>(f.size()), false};
}

double total_variation(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.size() != b.size()) throw DimensionError("total_variation: length mismatch");
  double sa = 0.0, sb = 0.0;
  for (double x : a) sa += x;
  for (double x : b) sb += x;
  if (!(sa > 0.0) || !(sb > 0.0)) throw InvalidInput("total_variation: zero total weight");
  double acc = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) acc += std::abs(a[k] / sa - b[k] / sb);
  return std::min(1.0, 0.5 * acc);
}

double delta_gap(const ObservationModel& truth, const ObservationModel& fitted,
                 const IndexSet& cal, Entry test) {
  std::vector<double> h, g;
  h.reserve(cal.size() + 1);
  g.reserve(cal.size() + 1);
  cal.for_each([&](int i, int j) {
    h.push_back(truth.odds(i, j));
    g.push_back(fitted.odds(i, j));
  });
  h.push_back(truth.odds(test.row, test.col));
  g.push_back(fitted.odds(test.row, test.col));
  return total_variation(g, h);
}

double xi_gap(const IndexSet& cal, const std::vector<double>& weights,
              const IndexSet& contaminated) {
  if (weights.size() != cal.size()) throw DimensionError("xi_gap: weights do not match cal");
  double acc = 0.0;
  std::size_t k = 0;
  cal.for_each([&](int i, int j) {
    if (contaminated.contains(i, j)) acc += weights[k];
    ++k;
  });
  return acc;
}

std::string to_string(BandVerdict v) {
  switch (v) {
    case BandVerdict::Within: return "within";
    case BandVerdict::Below: return "below";
    case BandVerdict::Above: return "above";
  }
  return "?";
}

double mean_of(const std::vector<double>& v) {
  if (v.empty()) return 0.0;
  double acc = 0.0;
  for (double x : v) acc += x;
  return acc / static_cast<double>(v.size());
}

double standard_error(const std::vector<double>& v) {
  if (v.size() < 2) return 0.0;
  const double m = mean_of(v);
  double ss = 0.0;
  for (double x : v) ss += (x - m) * (x - m);
  return std::sqrt(ss / static_cast<double>(v.size() - 1) / static_cast<double>(v.size()));
}

BandCheck theorem_band(const std::vector<MetricsRecord>& recs, double alpha,
                       double omega_factor) {
  if (recs.size() < 2) throw InsufficientData("theorem_band: need at least 2 replicates");
  std::vector<double> cov, delta, xi, om;
  for (const auto& r : recs) {
    cov.push_back(r.avg_cov);
    delta.push_back(r.delta_hat);
    xi.push_back(r.xi_hat);
    om.push_back(r.omega_max);
  }
  BandCheck b;
  b.mean_cov = mean_of(cov);
  b.se = standard_error(cov);
  b.mean_delta = mean_of(delta);
  b.mean_xi = mean_of(xi);
  b.mean_omega_max = mean_of(om);
  const double eps = 3.0 * b.se;
  b.lower = 1.0 - alpha - b.mean_delta - b.mean_xi - eps;
  b.upper = 1.0 - alpha + omega_factor * b.mean_omega_max + b.mean_delta + b.mean_xi + eps;
  if (b.mean_cov < b.lower)
    b.verdict = BandVerdict::Below;
  else if (b.mean_cov > b.upper)
    b.verdict = BandVerdict::Above;
  else
    b.verdict = BandVerdict::Within;
  return b;
}

std::vector<CellSummary> summarize(const std::vector<MetricsRecord>& recs) {
  std::map<std::pair<int, int>, std::vector<const MetricsRecord*>> cells;
  for (const auto& r : recs) cells[{r.setting, r.r}].push_back(&r);
  std::vector<CellSummary> out;
  for (const auto& [key, rs] : cells) {
    CellSummary c;
    c.setting = key.first;
    c.r = key.second;
    c.n = rs.size();
    std::vector<double> cov, len, time, delta, xi, om;
    for (const auto* r : rs) {
      cov.push_back(r->avg_cov);
      if (r->length_infinite)
        ++c.infinite_lengths;
      else
        len.push_back(r->avg_length);
      time.push_back(r->avg_time_s);
      delta.push_back(r->delta_hat);
      xi.push_back(r->xi_hat);
      om.push_back(r->omega_max);
    }
    c.mean_cov = mean_of(cov);
    c.se_cov = standard_error(cov);
    c.mean_length = mean_of(len);
    c.se_length = standard_error(len);
    c.mean_time = mean_of(time);
    c.mean_delta = mean_of(delta);
    c.mean_xi = mean_of(xi);
    c.mean_omega_max = mean_of(om);
    out.push_back(c);
  }
  return out;
}

nlohmann::json to_json(const CellSummary& c) {
  return {{"setting", c.setting},
          {"r", c.r},
          {"n", c.n},
          {"failures", c.failures},
          {"avg_cov", {{"mean", c.mean_cov}, {"se", c.se_cov}}},
          {"avg_length", {{"mean", c.mean_length}, {"se", c.se_length}, {"infinite", c.infinite_lengths}}},
          {"avg_time_s", c.mean_time},
          {"delta_hat", c.mean_delta},
          {"xi_hat", c.mean_xi},
          {"omega_max", c.mean_omega_max}};
}

}  // namespace cprpca
