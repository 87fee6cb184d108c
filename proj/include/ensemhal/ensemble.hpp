#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "ensemhal/detector.hpp"
#include "ensemhal/feature_store.hpp"
#include "ensemhal/metrics.hpp"

namespace ensemhal {

enum class FeatureFamily { AH, HS, MIX };
enum class Strategy { Top1, Concat, Average, Weighted, Stack };

inline constexpr FeatureFamily kAllFamilies[] = {FeatureFamily::AH, FeatureFamily::HS, FeatureFamily::MIX};
inline constexpr Strategy kAllStrategies[] = {Strategy::Top1, Strategy::Concat, Strategy::Average, Strategy::Weighted,
                                              Strategy::Stack};

std::string to_string(FeatureFamily family);
std::string to_string(Strategy strategy);
/// Case-insensitive; throws ConfigError on unknown names.
FeatureFamily parse_family(std::string_view text);
Strategy parse_strategy(std::string_view text);

struct EnsembleConfig {
  FeatureFamily family = FeatureFamily::MIX;
  Strategy strategy = Strategy::Stack;
  int top_k_ah = 30;
  int top_k_hs = 10;
  int max_selected = 10;
  /// Minimum validation-2 AUC gain required to accept another detector.
  double selection_tolerance = 0.0;
  /// Concat over every top-K candidate instead of the greedy selection.
  bool concat_all_candidates = false;
  /// Base detector settings; pca_k is ignored here (see hs_pca / pca_k below).
  DetectorConfig detector;
  bool hs_pca = true;
  /// Hidden-state PCA dimension; defaults to hidden_dim / num_heads.
  std::optional<int> pca_k;
  SplitRatios ratios;

  void check() const;
};

nlohmann::json to_json(const EnsembleConfig& config);
EnsembleConfig ensemble_config_from_json(const nlohmann::json& j);

struct RankedCandidate {
  RepresentationId id;
  double val1_auc = 0.0;
};

struct GreedyStep {
  RepresentationId id;
  double val2_auc = 0.0;  // AUC of the averaged set after accepting id
};

struct Combiner {
  Strategy strategy = Strategy::Top1;
  /// Weighted: one non-negative weight per selected detector, summing to 1.
  Vector weights;
  /// Stack: meta logistic regression over selected detector probabilities.
  Vector meta_weights;
  double meta_bias = 0.0;
  TrainMeta meta;
  /// Concat: logistic model over concatenated preprocessed features of
  /// concat_inputs (in order).
  std::optional<DetectorModel> concat;
  std::vector<RepresentationId> concat_inputs;
};

struct EnsembleModel {
  EnsembleConfig config;
  /// Greedy acceptance order.
  std::vector<DetectorModel> selected;
  /// Extra detectors whose preprocessing feeds Concat when it spans all
  /// candidates; empty otherwise.
  std::vector<DetectorModel> concat_sources;
  Combiner combiner;
  std::vector<RankedCandidate> ranking;
  std::vector<GreedyStep> trace;

  /// Representations the combiner reads at prediction time: the first
  /// selected detector for Top1, the concat inputs for Concat, else all
  /// selected detectors.
  std::vector<RepresentationId> inputs() const;
};

// ---------------------------------------------------------------------------
// Building blocks

/// Representation ids of the dataset belonging to `family`. Throws
/// MissingRepresentation when the family (or, for MIX, either half) is empty.
std::vector<RepresentationId> family_ids(const Manifest& manifest, FeatureFamily family);

/// Detector settings for one representation: PCA only on hidden states.
DetectorConfig detector_config_for(const RepresentationId& id, const Manifest& manifest, const EnsembleConfig& config);

/// Train one detector per id on the train split, in parallel.
std::map<RepresentationId, DetectorModel> train_grid(const FeatureDataset& ds, std::span<const std::size_t> train,
                                                     std::span<const RepresentationId> ids,
                                                     const EnsembleConfig& config);

/// Sort by AUC descending, ties by (layer, head) ascending, then keep the
/// top_k_ah attention heads and top_k_hs hidden states. MIX merges the two
/// truncated lists, again ordered by AUC.
std::vector<RankedCandidate> rank_candidates(std::vector<RankedCandidate> scored, FeatureFamily family, int top_k_ah,
                                             int top_k_hs);

/// Score every detector of the family on val1 and rank.
std::vector<RankedCandidate> rank_detectors(const std::map<RepresentationId, DetectorModel>& detectors,
                                            const FeatureDataset& ds, std::span<const std::size_t> val1,
                                            const EnsembleConfig& config);

struct GreedyResult {
  std::vector<std::size_t> chosen;  // indices into the candidate list
  std::vector<double> aucs;         // set AUC after each acceptance
};

/// Greedy forward selection with probability averaging as the set score.
/// `scores[c]` holds candidate c's validation-2 probabilities; candidates are
/// given in rank order, which also breaks ties.
GreedyResult greedy_select(std::span<const Vector> scores, std::span<const std::uint8_t> labels, int max_selected,
                           double tolerance);

/// Weights proportional to max(auc - 0.5, 1e-6), normalised to sum 1.
Vector auc_weights(std::span<const double> aucs);

/// n x k matrix of the selected detectors' probabilities on `rows`.
Matrix detector_probabilities(std::span<const DetectorModel> detectors, const FeatureDataset& ds,
                              std::span<const std::size_t> rows);

/// Row-wise concatenation of each detector's preprocessed features.
Matrix concat_features(std::span<const DetectorModel> detectors, const FeatureDataset& ds,
                       std::span<const std::size_t> rows);

/// Fit the final combiner. Concat trains on `train` over `concat_sources`
/// when given, else over `selected`; every other strategy reads validation 2.
Combiner fit_combiner(Strategy strategy, std::span<const DetectorModel> selected,
                      std::span<const DetectorModel> concat_sources, const FeatureDataset& ds,
                      const SplitAssignment& split, const EnsembleConfig& config);

/// Combine a probability matrix (one column per selected detector).
Vector combine(const Combiner& combiner, const Matrix& probabilities);

/// Throws MissingRepresentation when the dataset lacks an input the model needs.
Vector predict_ensemble(const EnsembleModel& model, const FeatureDataset& ds, std::span<const std::size_t> rows);

// ---------------------------------------------------------------------------
// Pipeline

/// Rank, select and combine from an already trained grid.
EnsembleModel build_ensemble(const std::map<RepresentationId, DetectorModel>& grid, const FeatureDataset& ds,
                             const SplitAssignment& split, const EnsembleConfig& config);

/// Test-split report for a built model, with per-detector test AUCs.
EvalReport evaluate_ensemble(const EnsembleModel& model, const FeatureDataset& ds, std::span<const std::size_t> rows);

/// Stored split when the dataset has one, else a stratified split at `seed`.
SplitAssignment resolve_split(const FeatureDataset& ds, const SplitRatios& ratios, std::uint64_t seed);

struct PipelineResult {
  EnsembleModel model;
  EvalReport report;
  SplitAssignment split;
};

PipelineResult run_pipeline(const FeatureDataset& ds, const EnsembleConfig& config, std::uint64_t seed);

// ---------------------------------------------------------------------------
// Bundle and report files

nlohmann::json to_json(const EnsembleModel& model);

/// Writes ensemble.json and detectors/<repr>.json under dir.
void save_bundle(const EnsembleModel& model, const std::filesystem::path& dir);
/// Throws MissingArtifact if dir/ensemble.json does not exist.
EnsembleModel load_bundle(const std::filesystem::path& dir);

struct ReportRow {
  std::string model;
  std::string dataset;
  FeatureFamily family = FeatureFamily::MIX;
  Strategy strategy = Strategy::Stack;
  std::uint64_t seed = 0;
  EvalReport report;
};

std::string report_csv_header();
std::string report_csv_line(const ReportRow& row);
nlohmann::json to_json(const ReportRow& row);

/// report.json + report.csv under dir.
void save_report(const ReportRow& row, const std::filesystem::path& dir);

}  // namespace ensemhal
