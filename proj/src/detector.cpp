#include "ensemhal/detector.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <limits>
#include <string>

#include "ensemhal/error.hpp"

namespace ensemhal {

using nlohmann::json;

// ---------------------------------------------------------------------------
// Preprocessing

Matrix Preprocessing::apply(const Matrix& X) const {
  Matrix out = input_scaler ? apply_standardizer(*input_scaler, X) : X;
  if (pca) out = pca_transform(*pca, out);
  if (output_scaler) out = apply_standardizer(*output_scaler, out);
  return out;
}

Eigen::Index Preprocessing::input_dim() const {
  if (input_scaler) return input_scaler->dim();
  if (pca) return pca->input_dim();
  return -1;
}

Eigen::Index Preprocessing::output_dim() const {
  if (output_scaler) return output_scaler->dim();
  if (pca) return pca->output_dim();
  if (input_scaler) return input_scaler->dim();
  return -1;
}

// ---------------------------------------------------------------------------
// Logistic loss

double sigmoid(double z) {
  constexpr double lo = std::numeric_limits<double>::min();
  constexpr double hi = 1.0 - std::numeric_limits<double>::epsilon() / 2;
  double p;
  if (z >= 0) {
    p = 1.0 / (1.0 + std::exp(-z));
  } else {
    const double e = std::exp(z);
    p = e / (1.0 + e);
  }
  return std::clamp(p, lo, hi);
}

namespace {

// log(1 + exp(m)) without overflow.
double log1pexp(double m) { return m > 0 ? m + std::log1p(std::exp(-m)) : std::log1p(std::exp(m)); }

void check_labels(std::span<const std::uint8_t> y, Eigen::Index rows) {
  if (static_cast<Eigen::Index>(y.size()) != rows)
    throw Error(ErrorCode::DimensionMismatch, "label count " + std::to_string(y.size()) + " differs from row count " +
                                                  std::to_string(rows));
  bool pos = false, neg = false;
  for (auto v : y) (v ? pos : neg) = true;
  if (!pos || !neg) throw Error(ErrorCode::SingleClassTraining, "training labels contain a single class");
}

struct Problem {
  const Matrix& X;
  Vector sign;  // +1 / -1
  double C;

  double value_and_grad(const Vector& theta, Vector& grad) const {
    const Eigen::Index d = X.cols();
    const auto w = theta.head(d);
    const double b = theta(d);
    const Vector margin = (X * w).array() + b;
    double f = 0.5 * w.squaredNorm() / C;
    Vector coef(X.rows());
    for (Eigen::Index i = 0; i < X.rows(); ++i) {
      const double m = -sign(i) * margin(i);
      f += log1pexp(m);
      // d/dz log(1 + exp(-s z)) = -s * sigmoid(-s z)
      const double s = m >= 0 ? 1.0 / (1.0 + std::exp(-m)) : std::exp(m) / (1.0 + std::exp(m));
      coef(i) = -sign(i) * s;
    }
    grad.resize(d + 1);
    grad.head(d) = X.transpose() * coef + w / C;
    grad(d) = coef.sum();
    return f;
  }
};

Vector to_sign(std::span<const std::uint8_t> y) {
  Vector s(static_cast<Eigen::Index>(y.size()));
  for (std::size_t i = 0; i < y.size(); ++i) s(static_cast<Eigen::Index>(i)) = y[i] ? 1.0 : -1.0;
  return s;
}

}  // namespace

double logistic_objective(const Matrix& X, std::span<const std::uint8_t> y, const Vector& w, double b, double C) {
  if (w.size() != X.cols()) throw Error(ErrorCode::DimensionMismatch, "weight length differs from column count");
  Problem p{X, to_sign(y), C};
  Vector theta(w.size() + 1);
  theta << w, b;
  Vector g;
  return p.value_and_grad(theta, g);
}

Vector logistic_gradient(const Matrix& X, std::span<const std::uint8_t> y, const Vector& w, double b, double C) {
  if (w.size() != X.cols()) throw Error(ErrorCode::DimensionMismatch, "weight length differs from column count");
  Problem p{X, to_sign(y), C};
  Vector theta(w.size() + 1);
  theta << w, b;
  Vector g;
  p.value_and_grad(theta, g);
  return g;
}

// ---------------------------------------------------------------------------
// L-BFGS

LogisticFit fit_logistic(const Matrix& X, std::span<const std::uint8_t> y, double C, int max_iter, double tol) {
  if (!(C > 0)) throw Error(ErrorCode::ConfigError, "C must be positive");
  if (max_iter < 1) throw Error(ErrorCode::ConfigError, "max_iter must be at least 1");
  check_labels(y, X.rows());

  constexpr int kHistory = 10;
  constexpr double kArmijo = 1e-4;
  const Problem problem{X, to_sign(y), C};
  const Eigen::Index n_params = X.cols() + 1;

  Vector theta = Vector::Zero(n_params);
  Vector grad;
  double f = problem.value_and_grad(theta, grad);
  std::deque<std::pair<Vector, Vector>> history;  // (s, y) pairs
  std::deque<double> rho;

  LogisticFit fit;
  fit.meta.C = C;
  fit.meta.max_iter = max_iter;
  int iter = 0;
  bool converged = grad.lpNorm<Eigen::Infinity>() <= tol;

  while (!converged && iter < max_iter) {
    // Two-loop recursion for the search direction.
    Vector q = grad;
    std::vector<double> alpha(history.size());
    for (std::size_t k = history.size(); k-- > 0;) {
      alpha[k] = rho[k] * history[k].first.dot(q);
      q -= alpha[k] * history[k].second;
    }
    double gamma = 1.0;
    if (!history.empty()) {
      const auto& [s, yv] = history.back();
      gamma = s.dot(yv) / yv.squaredNorm();
    } else {
      gamma = 1.0 / std::max(1.0, grad.norm());
    }
    q *= gamma;
    for (std::size_t k = 0; k < history.size(); ++k) {
      const double beta = rho[k] * history[k].second.dot(q);
      q += (alpha[k] - beta) * history[k].first;
    }
    Vector direction = -q;
    double slope = grad.dot(direction);
    if (!(slope < 0)) {
      history.clear();
      rho.clear();
      direction = -grad * (1.0 / std::max(1.0, grad.norm()));
      slope = grad.dot(direction);
    }

    // Backtracking line search on the Armijo condition.
    const double f_noise = 8 * std::numeric_limits<double>::epsilon() * std::max(1.0, std::abs(f));
    double step = 1.0;
    Vector next_theta, next_grad;
    double next_f = f;
    bool accepted = false;
    for (int ls = 0; ls < 60; ++ls) {
      next_theta = theta + step * direction;
      next_f = problem.value_and_grad(next_theta, next_grad);
      if (!std::isfinite(next_f)) {
        step *= 0.5;
        continue;
      }
      // Near the optimum f is flat to rounding; fall back to the curvature test.
      const bool armijo = next_f <= f + kArmijo * step * slope;
      const bool flat = next_f <= f + f_noise && std::abs(next_grad.dot(direction)) <= 0.9 * std::abs(slope);
      if (armijo || flat) {
        accepted = true;
        break;
      }
      step *= 0.5;
    }
    ++iter;
    if (!accepted) break;

    Vector s = next_theta - theta;
    Vector yv = next_grad - grad;
    const double sy = s.dot(yv);
    if (sy > 1e-12 * yv.squaredNorm() && sy > 0) {
      history.emplace_back(std::move(s), std::move(yv));
      rho.push_back(1.0 / sy);
      if (static_cast<int>(history.size()) > kHistory) {
        history.pop_front();
        rho.pop_front();
      }
    }
    theta = std::move(next_theta);
    grad = std::move(next_grad);
    f = next_f;
    converged = grad.lpNorm<Eigen::Infinity>() <= tol;
  }

  fit.weights = theta.head(X.cols());
  fit.bias = theta(X.cols());
  fit.meta.iterations = iter;
  fit.meta.converged = converged;
  fit.meta.final_grad_norm = grad.lpNorm<Eigen::Infinity>();
  fit.meta.objective = f;
  return fit;
}

// ---------------------------------------------------------------------------
// Detector

DetectorModel train_detector(const Matrix& X, std::span<const std::uint8_t> y, const DetectorConfig& config,
                             const RepresentationId& repr) {
  check_labels(y, X.rows());
  DetectorModel model;
  model.repr = repr;

  Matrix features = X;
  if (config.standardize) {
    model.preproc.input_scaler = fit_standardizer(features);
    features = apply_standardizer(*model.preproc.input_scaler, features);
  }
  if (config.pca_k) {
    const Eigen::Index k = std::min<Eigen::Index>({*config.pca_k, features.cols(), features.rows()});
    model.preproc.pca = fit_pca(features, k);
    features = pca_transform(*model.preproc.pca, features);
    if (config.standardize) {
      model.preproc.output_scaler = fit_standardizer(features);
      features = apply_standardizer(*model.preproc.output_scaler, features);
    }
  }

  auto fit = fit_logistic(features, y, config.C, config.max_iter, config.tol);
  model.weights = std::move(fit.weights);
  model.bias = fit.bias;
  model.meta = fit.meta;
  return model;
}

Vector decision_function(const DetectorModel& model, const Matrix& X) {
  if (X.cols() != model.input_dim())
    throw Error(ErrorCode::DimensionMismatch, to_string(model.repr) + " expects " + std::to_string(model.input_dim()) +
                                                  " columns, got " + std::to_string(X.cols()));
  const Matrix features = model.preproc.apply(X);
  return (features * model.weights).array() + model.bias;
}

Vector predict_proba(const DetectorModel& model, const Matrix& X) {
  return decision_function(model, X).unaryExpr([](double z) { return sigmoid(z); });
}

std::vector<std::uint8_t> predict_label(const DetectorModel& model, const Matrix& X) {
  const Vector p = predict_proba(model, X);
  std::vector<std::uint8_t> out(static_cast<std::size_t>(p.size()));
  for (Eigen::Index i = 0; i < p.size(); ++i) out[static_cast<std::size_t>(i)] = p(i) >= 0.5 ? 1 : 0;
  return out;
}

// ---------------------------------------------------------------------------
// JSON

namespace {

json vec_json(const Vector& v) { return std::vector<double>(v.data(), v.data() + v.size()); }

Vector json_vec(const json& j) {
  const auto values = j.get<std::vector<double>>();
  return Eigen::Map<const Vector>(values.data(), static_cast<Eigen::Index>(values.size()));
}

}  // namespace

json to_json(const Standardizer& s) { return {{"mean", vec_json(s.mean)}, {"scale", vec_json(s.scale)}}; }

json to_json(const PcaModel& p) {
  json rows = json::array();
  for (Eigen::Index r = 0; r < p.components.rows(); ++r) rows.push_back(vec_json(p.components.row(r).transpose()));
  return {{"mean", vec_json(p.mean)},
          {"components", rows},
          {"explained_variance", vec_json(p.explained_variance)},
          {"rank_deficient", p.rank_deficient}};
}

json to_json(const DetectorModel& model) {
  json preproc = json::object();
  if (model.preproc.input_scaler) preproc["input_scaler"] = to_json(*model.preproc.input_scaler);
  if (model.preproc.pca) preproc["pca"] = to_json(*model.preproc.pca);
  if (model.preproc.output_scaler) preproc["output_scaler"] = to_json(*model.preproc.output_scaler);
  return {{"repr", to_string(model.repr)},
          {"weights", vec_json(model.weights)},
          {"bias", model.bias},
          {"preproc", preproc},
          {"train_meta",
           {{"C", model.meta.C},
            {"max_iter", model.meta.max_iter},
            {"iterations", model.meta.iterations},
            {"converged", model.meta.converged},
            {"final_grad_norm", model.meta.final_grad_norm},
            {"objective", model.meta.objective}}}};
}

Standardizer standardizer_from_json(const json& j) {
  return {json_vec(j.at("mean")), json_vec(j.at("scale"))};
}

PcaModel pca_from_json(const json& j) {
  PcaModel p;
  p.mean = json_vec(j.at("mean"));
  const auto& rows = j.at("components");
  p.components.resize(static_cast<Eigen::Index>(rows.size()), p.mean.size());
  for (std::size_t r = 0; r < rows.size(); ++r) {
    const Vector row = json_vec(rows[r]);
    if (row.size() != p.mean.size()) throw Error(ErrorCode::FormatError, "PCA component length mismatch");
    p.components.row(static_cast<Eigen::Index>(r)) = row.transpose();
  }
  p.explained_variance = json_vec(j.at("explained_variance"));
  p.rank_deficient = j.value("rank_deficient", false);
  return p;
}

DetectorModel detector_from_json(const json& j) {
  try {
    DetectorModel m;
    m.repr = parse_representation(j.at("repr").get<std::string>());
    m.weights = json_vec(j.at("weights"));
    m.bias = j.at("bias").get<double>();
    const auto& pre = j.at("preproc");
    if (pre.contains("input_scaler")) m.preproc.input_scaler = standardizer_from_json(pre.at("input_scaler"));
    if (pre.contains("pca")) m.preproc.pca = pca_from_json(pre.at("pca"));
    if (pre.contains("output_scaler")) m.preproc.output_scaler = standardizer_from_json(pre.at("output_scaler"));
    const auto& meta = j.at("train_meta");
    m.meta.C = meta.at("C").get<double>();
    m.meta.max_iter = meta.at("max_iter").get<int>();
    m.meta.iterations = meta.value("iterations", 0);
    m.meta.converged = meta.at("converged").get<bool>();
    m.meta.final_grad_norm = meta.at("final_grad_norm").get<double>();
    m.meta.objective = meta.value("objective", 0.0);
    if (m.preproc.output_dim() >= 0 && m.preproc.output_dim() != m.weights.size())
      throw Error(ErrorCode::FormatError, "detector weights do not match preprocessing output dimension");
    return m;
  } catch (const json::exception& e) {
    throw Error(ErrorCode::FormatError, std::string("detector json: ") + e.what());
  }
}

}  // namespace ensemhal
