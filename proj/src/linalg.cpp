#include "ensemhal/linalg.hpp"

#include <algorithm>
#include <string>

#include "ensemhal/error.hpp"

namespace ensemhal {

Standardizer fit_standardizer(const Matrix& X) {
  if (X.rows() < 2) throw Error(ErrorCode::DegenerateDataset, "standardizer needs at least 2 rows");
  Standardizer s;
  s.mean = X.colwise().mean().transpose();
  const Matrix centered = X.rowwise() - s.mean.transpose();
  s.scale = (centered.colwise().squaredNorm().transpose() / static_cast<double>(X.rows() - 1)).cwiseSqrt();
  s.scale = s.scale.cwiseMax(kScaleFloor);
  return s;
}

Matrix apply_standardizer(const Standardizer& s, const Matrix& X) {
  if (X.cols() != s.dim())
    throw Error(ErrorCode::DimensionMismatch, "standardizer expects " + std::to_string(s.dim()) + " columns, got " +
                                                  std::to_string(X.cols()));
  return (X.rowwise() - s.mean.transpose()).array().rowwise() / s.scale.transpose().array();
}

Matrix covariance(const Matrix& X) {
  if (X.rows() < 2) throw Error(ErrorCode::DegenerateDataset, "covariance needs at least 2 rows");
  const Matrix centered = X.rowwise() - X.colwise().mean();
  return (centered.transpose() * centered) / static_cast<double>(X.rows() - 1);
}

PcaModel fit_pca(const Matrix& X, Eigen::Index k) {
  const Eigen::Index n = X.rows();
  const Eigen::Index d = X.cols();
  if (n < 2) throw Error(ErrorCode::DegenerateDataset, "PCA needs at least 2 rows");
  if (k < 1 || k > std::min(d, n))
    throw Error(ErrorCode::ConfigError, "PCA dimension " + std::to_string(k) + " outside [1, min(d, n)] = [1, " +
                                            std::to_string(std::min(d, n)) + "]");

  PcaModel model;
  model.mean = X.colwise().mean().transpose();
  // Eigen returns eigenvalues in ascending order.
  Eigen::SelfAdjointEigenSolver<Matrix> solver(covariance(X));
  if (solver.info() != Eigen::Success) throw Error(ErrorCode::DegenerateDataset, "covariance eigensolver failed");

  model.components.resize(k, d);
  model.explained_variance.resize(k);
  for (Eigen::Index r = 0; r < k; ++r) {
    const Eigen::Index src = d - 1 - r;
    Vector v = solver.eigenvectors().col(src);
    Eigen::Index arg = 0;
    v.cwiseAbs().maxCoeff(&arg);
    if (v(arg) < 0) v = -v;
    model.components.row(r) = v.transpose();
    model.explained_variance(r) = std::max(solver.eigenvalues()(src), 0.0);
  }
  model.rank_deficient = model.explained_variance(k - 1) < 1e-12;
  return model;
}

Matrix pca_transform(const PcaModel& model, const Matrix& X) {
  if (X.cols() != model.input_dim())
    throw Error(ErrorCode::DimensionMismatch, "PCA expects " + std::to_string(model.input_dim()) + " columns, got " +
                                                  std::to_string(X.cols()));
  return (X.rowwise() - model.mean.transpose()) * model.components.transpose();
}

Matrix pca_inverse(const PcaModel& model, const Matrix& Z) {
  if (Z.cols() != model.output_dim())
    throw Error(ErrorCode::DimensionMismatch, "PCA inverse expects " + std::to_string(model.output_dim()) + " columns");
  return (Z * model.components).rowwise() + model.mean.transpose();
}

}  // namespace ensemhal
