#pragma once

#include <Eigen/Dense>

namespace ensemhal {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

inline constexpr double kScaleFloor = 1e-8;

/// Per-column affine map x -> (x - mean) / scale.
struct Standardizer {
  Vector mean;
  Vector scale;  // max(sample std, kScaleFloor)

  Eigen::Index dim() const { return mean.size(); }
};

/// Fit on rows of X (n >= 2, divisor n - 1).
Standardizer fit_standardizer(const Matrix& X);
Matrix apply_standardizer(const Standardizer& s, const Matrix& X);

struct PcaModel {
  Vector mean;                 // d_in
  Matrix components;           // k x d_in, orthonormal rows
  Vector explained_variance;   // k, non-increasing
  bool rank_deficient = false; // some kept eigenvalue fell below 1e-12

  Eigen::Index input_dim() const { return mean.size(); }
  Eigen::Index output_dim() const { return components.rows(); }
};

/// Top-k eigenvectors of the sample covariance of X, largest eigenvalue
/// first. Each component is sign-fixed so that its largest-magnitude entry
/// is positive.
PcaModel fit_pca(const Matrix& X, Eigen::Index k);

/// (X - mean) * components^T. Throws DimensionMismatch on column count.
Matrix pca_transform(const PcaModel& model, const Matrix& X);

/// Z * components + mean.
Matrix pca_inverse(const PcaModel& model, const Matrix& Z);

/// Sample covariance with divisor n - 1.
Matrix covariance(const Matrix& X);

}  // namespace ensemhal
