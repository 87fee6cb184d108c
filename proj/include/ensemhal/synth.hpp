#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "ensemhal/feature_store.hpp"
#include "json.hpp"

namespace ensemhal {

/// shared: every signal representation sees the same latent (same noise
/// along the signal directions), so combining them adds nothing.
/// disjoint: each hallucinated sample is caused by exactly one signal
/// representation, so each one only explains part of the label.
enum class Complementarity { Shared, Disjoint };

struct SignalSpec {
  RepresentationId id;
  double strength = 3.0;  // distance between class means along the signal subspace
  int subspace_dim = 1;
};

struct SynthConfig {
  std::string model_name = "synthetic";
  std::size_t n_samples = 2000;
  double hallucination_rate = 0.8;
  int num_layers = 4;
  int num_heads = 4;
  int head_dim = 16;
  int hidden_dim = 64;
  std::vector<SignalSpec> signals;
  double noise_scale = 1.0;
  Complementarity complementarity = Complementarity::Disjoint;
  std::uint64_t seed = 0;

  /// Throws ConfigError naming the offending field.
  void check() const;
};

/// Named configurations: "planted-single", "planted-disjoint",
/// "planted-shared" and "null". Throws ConfigError for other names.
SynthConfig synth_preset(std::string_view name);

nlohmann::json to_json(const SynthConfig& config);
SynthConfig synth_config_from_json(const nlohmann::json& j);

/// Planted-signal dataset with L*H attention heads and L hidden states.
/// Every coordinate carries unit Gaussian noise (times noise_scale); signal
/// representations add a label-driven mean shift along random orthonormal
/// directions. Deterministic in config.seed.
FeatureDataset generate(const SynthConfig& config);

/// Writes the dataset plus synth.json recording the config.
void write_synth(const SynthConfig& config, const std::filesystem::path& dir);

/// AUC of the equal-variance Gaussian shift model: Phi(delta / sqrt 2).
double bayes_auc_oracle(double delta);

}  // namespace ensemhal
