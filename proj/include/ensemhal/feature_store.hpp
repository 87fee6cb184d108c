#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "ensemhal/representation.hpp"

namespace ensemhal {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using FloatMatrix = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Labels = std::vector<std::uint8_t>;

struct RepresentationSpec {
  RepresentationId id;
  int dim = 0;
};

struct Manifest {
  std::string model_name;
  int num_layers = 0;
  int num_heads = 0;
  int head_dim = 0;
  int hidden_dim = 0;
  std::size_t num_samples = 0;
  std::vector<RepresentationSpec> representations;

  /// Checks geometry: ids in range, hidden-state heads fixed at 0, no duplicates.
  void check() const;
  const RepresentationSpec* find(const RepresentationId& id) const;
};

/// Per-class sample indices for the four pipeline splits, each sorted ascending.
struct SplitAssignment {
  std::vector<std::size_t> train;
  std::vector<std::size_t> val1;
  std::vector<std::size_t> val2;
  std::vector<std::size_t> test;

  /// Throws DegenerateDataset unless the four lists partition [0, n).
  void check_partition(std::size_t n) const;
  bool operator==(const SplitAssignment&) const = default;
};

struct SplitRatios {
  double train = 0.8;
  double val = 0.1;
  double test = 0.1;
};

/// One generation's per-token vectors for a single representation.
struct TokenTrace {
  RepresentationId repr;
  std::vector<std::vector<double>> vectors;
};

/// Arithmetic mean over the token axis. Throws EmptyTrace when there are no
/// tokens and DimensionMismatch when token vectors disagree in length.
std::vector<double> token_average(const TokenTrace& trace);

/// Stratified train/val/test split with val halved into val1/val2.
///
/// Each class is shuffled independently with a seeded generator and its count
/// distributed over (train, val, test) by largest remainder, with train
/// winning ties. Every class keeps at least two validation samples and one
/// test sample. Throws DegenerateDataset for fewer than 20 samples or when a
/// class has fewer than 4 members.
SplitAssignment stratified_split(std::span<const std::uint8_t> labels, const SplitRatios& ratios,
                                 std::uint64_t seed);

/// Immutable in-memory dataset: one float32 matrix (num_samples x dim) per
/// representation plus binary labels and an optional stored split.
class FeatureDataset {
 public:
  FeatureDataset() = default;
  FeatureDataset(Manifest manifest, Labels labels, std::map<RepresentationId, FloatMatrix> features,
                 std::optional<SplitAssignment> splits = std::nullopt);

  const Manifest& manifest() const { return manifest_; }
  const Labels& labels() const { return labels_; }
  std::size_t size() const { return labels_.size(); }
  const std::optional<SplitAssignment>& splits() const { return splits_; }

  bool has(const RepresentationId& id) const { return features_.contains(id); }
  /// Throws MissingRepresentation for an id absent from the dataset.
  const FloatMatrix& features(const RepresentationId& id) const;
  std::vector<RepresentationId> ids() const;

  /// Selected rows of one representation, widened to double.
  Matrix rows(const RepresentationId& id, std::span<const std::size_t> index) const;
  Labels labels_at(std::span<const std::size_t> index) const;

 private:
  Manifest manifest_;
  Labels labels_;
  std::map<RepresentationId, FloatMatrix> features_;
  std::optional<SplitAssignment> splits_;
};

/// Build a dataset from per-token traces: traces[sample][k] is representation
/// k of that sample, averaged on ingestion.
FeatureDataset dataset_from_traces(Manifest manifest, Labels labels,
                                   const std::vector<std::vector<TokenTrace>>& traces);

std::filesystem::path feature_file(const std::filesystem::path& dir, const RepresentationId& id);

void save_dataset(const FeatureDataset& ds, const std::filesystem::path& dir);
FeatureDataset load_dataset(const std::filesystem::path& dir);
/// Reads only the given representations and rows from a dataset directory
/// (seeking into each feature file). Row k of the result is rows[k].
FeatureDataset load_rows(const std::filesystem::path& dir, std::span<const RepresentationId> ids,
                         std::span<const std::size_t> rows);

/// Non-throwing structural check of a dataset directory. Returns one message
/// per violation; empty means clean.
std::vector<std::string> validate_dataset_dir(const std::filesystem::path& dir);

}  // namespace ensemhal
