#pragma once

#include <cstdint>
#include <optional>
#include <span>

#include "ensemhal/linalg.hpp"
#include "ensemhal/representation.hpp"
#include "json.hpp"

namespace ensemhal {

struct DetectorConfig {
  double C = 1.0;
  int max_iter = 300;
  double tol = 1e-6;
  bool standardize = true;
  /// Target PCA dimension; nullopt disables PCA.
  std::optional<int> pca_k;
};

/// Fitted input pipeline: input scaler -> PCA -> output scaler, each optional.
/// The output scaler only exists when PCA does.
struct Preprocessing {
  std::optional<Standardizer> input_scaler;
  std::optional<PcaModel> pca;
  std::optional<Standardizer> output_scaler;

  Matrix apply(const Matrix& X) const;
  Eigen::Index input_dim() const;
  Eigen::Index output_dim() const;
};

struct TrainMeta {
  double C = 1.0;
  int max_iter = 300;
  int iterations = 0;
  bool converged = false;
  double final_grad_norm = 0.0;
  double objective = 0.0;
};

/// Weights and bias of a binary logistic model on already-preprocessed inputs.
struct LogisticFit {
  Vector weights;
  double bias = 0.0;
  TrainMeta meta;
};

struct DetectorModel {
  RepresentationId repr;
  Vector weights;
  double bias = 0.0;
  Preprocessing preproc;
  TrainMeta meta;

  Eigen::Index input_dim() const { return preproc.input_dim() >= 0 ? preproc.input_dim() : weights.size(); }
};

/// Numerically stable logistic function, clamped into the open interval (0, 1).
double sigmoid(double z);

/// (1/(2C)) ||w||^2 + sum_i log(1 + exp(-s_i (w.x_i + b))), s_i = 2 y_i - 1.
double logistic_objective(const Matrix& X, std::span<const std::uint8_t> y, const Vector& w, double b, double C);

/// Gradient of logistic_objective; entries [0, d) are dJ/dw, entry d is dJ/db.
Vector logistic_gradient(const Matrix& X, std::span<const std::uint8_t> y, const Vector& w, double b, double C);

/// Minimise logistic_objective with L-BFGS from the zero vector.
/// converged is true iff the gradient infinity-norm reached tol within
/// max_iter iterations. Throws SingleClassTraining if y holds one class.
LogisticFit fit_logistic(const Matrix& X, std::span<const std::uint8_t> y, double C = 1.0, int max_iter = 300,
                         double tol = 1e-6);

/// Fit the preprocessing pipeline on X, then the logistic model on its output.
DetectorModel train_detector(const Matrix& X, std::span<const std::uint8_t> y, const DetectorConfig& config,
                             const RepresentationId& repr = {});

/// w . preproc(x) + b per row.
Vector decision_function(const DetectorModel& model, const Matrix& X);
Vector predict_proba(const DetectorModel& model, const Matrix& X);
/// 1 iff probability >= 0.5.
std::vector<std::uint8_t> predict_label(const DetectorModel& model, const Matrix& X);

nlohmann::json to_json(const Standardizer& s);
nlohmann::json to_json(const PcaModel& p);
nlohmann::json to_json(const DetectorModel& model);
Standardizer standardizer_from_json(const nlohmann::json& j);
PcaModel pca_from_json(const nlohmann::json& j);
DetectorModel detector_from_json(const nlohmann::json& j);

}  // namespace ensemhal
