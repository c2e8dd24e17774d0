#include "cprpca/observation.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>

#include "cprpca/error.hpp"
#include "cprpca/matrix_io.hpp"

namespace cprpca {

namespace {

double sigmoid(double x) {
  return x >= 0.0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x));
}

double clamp_prob(double p) { return std::clamp(p, kProbFloor, kProbCeil); }

void check_open_unit(const Matrix& P, const char* what) {
  if (!P.allFinite() || (P.array() <= 0.0).any() || (P.array() >= 1.0).any())
    throw InvalidInput(std::string(what) + ": probabilities must lie strictly inside (0, 1)");
}

Matrix implied_probabilities(int rows, int cols, const ObservationModel::Variant& v) {
  return std::visit(
      [&](const auto& m) -> Matrix {
        using T = std::decay_t<decltype(m)>;
        if constexpr (std::is_same_v<T, UniformModel>) {
          return Matrix::Constant(rows, cols, m.p);
        } else if constexpr (std::is_same_v<T, LogisticFactorModel>) {
          if (m.A.rows() != rows || m.B.cols() != cols || m.A.cols() != m.B.rows())
            throw DimensionError("logistic model: factor shapes do not match grid");
          return (m.A * m.B).unaryExpr([](double x) { return sigmoid(x); });
        } else if constexpr (std::is_same_v<T, RankOneModel>) {
          if (m.a.size() != rows || m.b.size() != cols)
            throw DimensionError("rank-one model: vector lengths do not match grid");
          Matrix P = m.a * m.b.transpose();
          if (m.clamped) P = P.unaryExpr([](double p) { return clamp_prob(p); });
          return P;
        } else {
          if (m.P.rows() != rows || m.P.cols() != cols)
            throw DimensionError("explicit model: matrix shape does not match grid");
          return m.P;
        }
      },
      v);
}

void check_split_fraction(double q) {
  if (!(q > 0.0 && q <= 1.0)) throw InvalidParameter("split fraction q must lie in (0, 1]");
}

}  // namespace

ObservationKind parse_observation_kind(const std::string& s) {
  if (s == "uniform") return ObservationKind::Uniform;
  if (s == "logistic") return ObservationKind::Logistic;
  if (s == "rank1" || s == "rank-one" || s == "rank_one") return ObservationKind::RankOne;
  if (s == "explicit") return ObservationKind::Explicit;
  throw InvalidParameter("unknown observation model '" + s + "'");
}

std::string to_string(ObservationKind k) {
  switch (k) {
    case ObservationKind::Uniform: return "uniform";
    case ObservationKind::Logistic: return "logistic";
    case ObservationKind::RankOne: return "rank1";
    case ObservationKind::Explicit: return "explicit";
  }
  return "unknown";
}

ObservationModel::ObservationModel(int rows, int cols, Variant v)
    : rows_(rows), cols_(cols), v_(std::move(v)) {
  if (rows < 1 || cols < 1) throw DimensionError("observation model: empty grid");
  P_ = implied_probabilities(rows, cols, v_);
  check_open_unit(P_, "observation model");
}

ObservationModel ObservationModel::uniform(int rows, int cols, double p) {
  return ObservationModel(rows, cols, UniformModel{p});
}

ObservationModel ObservationModel::logistic(Matrix A, Matrix B) {
  const int rows = static_cast<int>(A.rows()), cols = static_cast<int>(B.cols());
  return ObservationModel(rows, cols, LogisticFactorModel{std::move(A), std::move(B)});
}

ObservationModel ObservationModel::rank_one(Vector a, Vector b, bool clamped) {
  const int rows = static_cast<int>(a.size()), cols = static_cast<int>(b.size());
  return ObservationModel(rows, cols, RankOneModel{std::move(a), std::move(b), clamped});
}

ObservationModel ObservationModel::explicit_matrix(Matrix P) {
  const int rows = static_cast<int>(P.rows()), cols = static_cast<int>(P.cols());
  return ObservationModel(rows, cols, ExplicitModel{std::move(P)});
}

ObservationKind ObservationModel::kind() const {
  return static_cast<ObservationKind>(v_.index());
}

IndexSet sample_mask(const ObservationModel& model, Rng& rng) {
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  IndexSet mask(model.rows(), model.cols());
  for (int i = 0; i < model.rows(); ++i)
    for (int j = 0; j < model.cols(); ++j)
      if (unif(rng) < model.prob(i, j)) mask.insert(i, j);
  return mask;
}

ObservationModel estimate_uniform(const IndexSet& train, double q) {
  check_split_fraction(q);
  if (train.empty()) throw InsufficientData("estimate_uniform: empty training set");
  const double p = static_cast<double>(train.size()) /
                   (static_cast<double>(train.grid_size()) * q);
  return ObservationModel::uniform(train.rows(), train.cols(), clamp_prob(p));
}

LogisticFit fit_logistic(const IndexSet& train, int k, double q, const LogisticFitOptions& opt) {
  if (k < 1) throw InvalidParameter("estimate_logistic: k must be >= 1");
  check_split_fraction(q);
  if (opt.a_lo > opt.a_hi || opt.b_lo > opt.b_hi)
    throw InvalidParameter("estimate_logistic: empty box constraint");
  const int d1 = train.rows(), d2 = train.cols();
  const Matrix Z = train.indicator();

  Rng rng(stream_key({opt.seed, 0x6c6f6769ull}));
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  Matrix A(d1, k), B(k, d2);
  for (Eigen::Index t = 0; t < A.size(); ++t)
    A.data()[t] = opt.a_lo + (opt.a_hi - opt.a_lo) * unif(rng);
  // Small start for B keeps the initial logits near zero.
  for (Eigen::Index t = 0; t < B.size(); ++t)
    B.data()[t] = std::clamp(0.1 * (2.0 * unif(rng) - 1.0), opt.b_lo, opt.b_hi);

  const double n = static_cast<double>(d1) * d2;
  auto loglik = [&](const Matrix& a, const Matrix& b) {
    const Matrix theta = a * b;
    double ll = 0.0;
    for (Eigen::Index t = 0; t < theta.size(); ++t) {
      const double p = q * sigmoid(theta.data()[t]);
      ll += Z.data()[t] > 0.0 ? std::log(p) : std::log1p(-p);
    }
    return ll / n;
  };
  auto project = [&](Matrix& a, Matrix& b) {
    a = a.cwiseMax(opt.a_lo).cwiseMin(opt.a_hi);
    b = b.cwiseMax(opt.b_lo).cwiseMin(opt.b_hi);
  };

  LogisticFit fit{ObservationModel::uniform(d1, d2, 0.5), {}, false};
  double ll = loglik(A, B);
  fit.loglik_trace.push_back(ll);
  double step = opt.step;
  for (int it = 0; it < opt.iters; ++it) {
    const Matrix theta = A * B;
    Matrix G(d1, d2);
    for (Eigen::Index t = 0; t < theta.size(); ++t) {
      const double s = sigmoid(theta.data()[t]);
      G.data()[t] = Z.data()[t] > 0.0 ? 1.0 - s : -q * s * (1.0 - s) / (1.0 - q * s);
    }
    // Row- and column-averaged gradients keep the step scale free of d1, d2.
    const Matrix gA = G * B.transpose() / d2;
    const Matrix gB = A.transpose() * G / d1;

    bool accepted = false;
    double ll_new = ll;
    Matrix A_new, B_new;
    for (int bt = 0; bt < 40; ++bt) {
      A_new = A + step * gA;
      B_new = B + step * gB;
      project(A_new, B_new);
      ll_new = loglik(A_new, B_new);
      if (ll_new >= ll) {
        accepted = true;
        break;
      }
      step *= 0.5;
    }
    if (!accepted) {
      fit.converged = true;
      break;
    }
    const double gain = ll_new - ll;
    A = std::move(A_new);
    B = std::move(B_new);
    ll = ll_new;
    fit.loglik_trace.push_back(ll);
    step *= 2.0;
    if (gain <= opt.tol * std::abs(ll)) {
      fit.converged = true;
      break;
    }
  }
  fit.model = ObservationModel::logistic(std::move(A), std::move(B));
  fit.model.converged = fit.converged;
  return fit;
}

ObservationModel estimate_logistic(const IndexSet& train, int k, double q,
                                   const LogisticFitOptions& opt) {
  return fit_logistic(train, k, q, opt).model;
}

ObservationModel estimate_rank_one(const IndexSet& train, double q) {
  check_split_fraction(q);
  if (train.empty()) throw InsufficientData("estimate_rank_one: empty training set");
  const int d1 = train.rows(), d2 = train.cols();
  Vector row_n = Vector::Zero(d1), col_n = Vector::Zero(d2);
  train.for_each([&](int i, int j) {
    row_n(i) += 1.0;
    col_n(j) += 1.0;
  });
  const double m = static_cast<double>(train.size()) / (static_cast<double>(d1) * d2 * q);
  bool fallback = false;
  Vector r(d1), c(d2);
  for (int i = 0; i < d1; ++i) {
    if (row_n(i) == 0.0) fallback = true;
    r(i) = row_n(i) > 0.0 ? row_n(i) / (d2 * q) : m;
  }
  for (int j = 0; j < d2; ++j) {
    if (col_n(j) == 0.0) fallback = true;
    c(j) = col_n(j) > 0.0 ? col_n(j) / (d1 * q) : m;
  }
  const double root_m = std::sqrt(m);
  auto model = ObservationModel::rank_one(r / root_m, c / root_m, /*clamped=*/true);
  model.fallback_used = fallback;
  return model;
}

CalibrationWeights one_shot_weights(const ObservationModel& model, const IndexSet& cal_set,
                                    const IndexSet& target_set) {
  if (cal_set.rows() != model.rows() || cal_set.cols() != model.cols() ||
      target_set.rows() != model.rows() || target_set.cols() != model.cols())
    throw DimensionError("one_shot_weights: index sets do not match the model grid");
  if (target_set.empty()) throw InvalidInput("one_shot_weights: empty target set");
  double hmax = 0.0;
  target_set.for_each([&](int i, int j) { hmax = std::max(hmax, model.odds(i, j)); });
  CalibrationWeights w;
  w.cal.reserve(cal_set.size());
  double total = hmax;
  cal_set.for_each([&](int i, int j) {
    const double h = model.odds(i, j);
    w.cal.push_back(h);
    total += h;
  });
  for (auto& h : w.cal) h /= total;
  w.test = hmax / total;
  w.max_target_odds = hmax;
  return w;
}

nlohmann::json to_json(const ObservationModel& model, const std::string& matrix_path) {
  auto mat = [](const Matrix& m) {
    nlohmann::json rows = nlohmann::json::array();
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
      nlohmann::json row = nlohmann::json::array();
      for (Eigen::Index j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
      rows.push_back(std::move(row));
    }
    return rows;
  };
  auto vec = [](const Vector& v) { return std::vector<double>(v.data(), v.data() + v.size()); };

  nlohmann::json j;
  j["variant"] = to_string(model.kind());
  j["rows"] = model.rows();
  j["cols"] = model.cols();
  std::visit(
      [&](const auto& m) {
        using T = std::decay_t<decltype(m)>;
        if constexpr (std::is_same_v<T, UniformModel>) {
          j["p"] = m.p;
        } else if constexpr (std::is_same_v<T, LogisticFactorModel>) {
          j["A"] = mat(m.A);
          j["B"] = mat(m.B);
        } else if constexpr (std::is_same_v<T, RankOneModel>) {
          j["a"] = vec(m.a);
          j["b"] = vec(m.b);
          j["clamped"] = m.clamped;
        } else {
          if (matrix_path.empty())
            throw InvalidParameter("explicit observation model needs a matrix file path");
          io::save_matrix(matrix_path, m.P);
          j["matrix"] = std::filesystem::path(matrix_path).filename().string();
        }
      },
      model.variant());
  return j;
}

ObservationModel observation_model_from_json(const nlohmann::json& j,
                                             const std::string& base_dir) {
  try {
    const auto kind = parse_observation_kind(j.at("variant").get<std::string>());
    const int rows = j.at("rows").get<int>(), cols = j.at("cols").get<int>();
    auto mat = [](const nlohmann::json& a) {
      const auto n = static_cast<Eigen::Index>(a.size());
      const auto m = n ? static_cast<Eigen::Index>(a.at(0).size()) : 0;
      Matrix out(n, m);
      for (Eigen::Index i = 0; i < n; ++i)
        for (Eigen::Index k = 0; k < m; ++k) out(i, k) = a.at(i).at(k).get<double>();
      return out;
    };
    auto vec = [](const nlohmann::json& a) {
      const auto v = a.get<std::vector<double>>();
      return Vector(Eigen::Map<const Vector>(v.data(), static_cast<Eigen::Index>(v.size())));
    };
    switch (kind) {
      case ObservationKind::Uniform:
        return ObservationModel::uniform(rows, cols, j.at("p").get<double>());
      case ObservationKind::Logistic:
        return ObservationModel::logistic(mat(j.at("A")), mat(j.at("B")));
      case ObservationKind::RankOne:
        return ObservationModel::rank_one(vec(j.at("a")), vec(j.at("b")),
                                          j.value("clamped", false));
      case ObservationKind::Explicit: {
        std::filesystem::path p = j.at("matrix").get<std::string>();
        if (p.is_relative() && !base_dir.empty()) p = std::filesystem::path(base_dir) / p;
        return ObservationModel::explicit_matrix(io::load_matrix(p.string()));
      }
    }
  } catch (const nlohmann::json::exception& e) {
    throw InvalidInput(std::string("observation model JSON: ") + e.what());
  } catch (const InvalidParameter& e) {
    throw InvalidInput(std::string("observation model JSON: ") + e.what());
  }
  throw InvalidInput("observation model JSON: unknown variant");
}

}  // namespace cprpca
