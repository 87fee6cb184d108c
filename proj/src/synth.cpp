#include "ensemhal/synth.hpp"

#include <cmath>
#include <fstream>
#include <random>
#include <set>

#include "ensemhal/error.hpp"

namespace ensemhal {

using nlohmann::json;

namespace {

Error config_error(const std::string& field, const std::string& msg) {
  return Error(ErrorCode::ConfigError, field + ": " + msg);
}

int dim_of(const SynthConfig& c, const RepresentationId& id) { return id.is_attention() ? c.head_dim : c.hidden_dim; }

}  // namespace

void SynthConfig::check() const {
  if (n_samples < 20) throw config_error("n_samples", "must be at least 20");
  if (!(hallucination_rate > 0.0 && hallucination_rate < 1.0))
    throw config_error("hallucination_rate", "must lie strictly between 0 and 1, got " + std::to_string(hallucination_rate));
  if (num_layers < 1) throw config_error("num_layers", "must be positive");
  if (num_heads < 1) throw config_error("num_heads", "must be positive");
  if (head_dim < 1) throw config_error("head_dim", "must be positive");
  if (hidden_dim < 1) throw config_error("hidden_dim", "must be positive");
  if (!(noise_scale > 0)) throw config_error("noise_scale", "must be positive");
  if (signals.empty()) throw config_error("signal_reprs", "at least one signal representation is required");
  std::set<RepresentationId> seen;
  for (const auto& s : signals) {
    const std::string name = to_string(s.id);
    if (s.id.layer < 0 || s.id.layer >= num_layers) throw config_error("signal_reprs", name + " layer out of range");
    if (s.id.is_attention() && (s.id.head < 0 || s.id.head >= num_heads))
      throw config_error("signal_reprs", name + " head out of range");
    if (!s.id.is_attention() && s.id.head != 0) throw config_error("signal_reprs", name + " hidden state needs head 0");
    if (!(s.strength >= 0)) throw config_error("signal_strength", name + " must be non-negative");
    if (s.subspace_dim < 1 || s.subspace_dim > dim_of(*this, s.id))
      throw config_error("signal_subspace_dim", name + " must lie in [1, representation dim]");
    if (!seen.insert(s.id).second) throw config_error("signal_reprs", name + " listed twice");
  }
}

SynthConfig synth_preset(std::string_view name) {
  SynthConfig c;
  if (name == "planted-single") {
    c.signals = {{RepresentationId::attention(2, 1), 3.0, 1}};
  } else if (name == "planted-disjoint") {
    c.n_samples = 4000;
    c.signals = {{RepresentationId::attention(1, 2), 3.0, 1}, {RepresentationId::hidden(2), 3.0, 1}};
  } else if (name == "planted-shared") {
    c.n_samples = 4000;
    c.complementarity = Complementarity::Shared;
    c.signals = {{RepresentationId::attention(1, 2), 3.0, 1}, {RepresentationId::hidden(2), 3.0, 1}};
  } else if (name == "null") {
    c.signals = {{RepresentationId::attention(0, 0), 0.0, 1}};
  } else {
    throw config_error("preset", "unknown preset '" + std::string(name) +
                                     "' (expected planted-single, planted-disjoint, planted-shared or null)");
  }
  return c;
}

json to_json(const SynthConfig& c) {
  json signals = json::array();
  for (const auto& s : c.signals)
    signals.push_back({{"repr", to_string(s.id)}, {"strength", s.strength}, {"subspace_dim", s.subspace_dim}});
  return {{"model_name", c.model_name},
          {"n_samples", c.n_samples},
          {"hallucination_rate", c.hallucination_rate},
          {"num_layers", c.num_layers},
          {"num_heads", c.num_heads},
          {"head_dim", c.head_dim},
          {"hidden_dim", c.hidden_dim},
          {"signals", signals},
          {"noise_scale", c.noise_scale},
          {"complementarity", c.complementarity == Complementarity::Shared ? "shared" : "disjoint"},
          {"seed", c.seed}};
}

SynthConfig synth_config_from_json(const json& j) {
  SynthConfig c;
  try {
    c.model_name = j.value("model_name", c.model_name);
    c.n_samples = j.value("n_samples", c.n_samples);
    c.hallucination_rate = j.value("hallucination_rate", c.hallucination_rate);
    c.num_layers = j.value("num_layers", c.num_layers);
    c.num_heads = j.value("num_heads", c.num_heads);
    c.head_dim = j.value("head_dim", c.head_dim);
    c.hidden_dim = j.value("hidden_dim", c.hidden_dim);
    c.noise_scale = j.value("noise_scale", c.noise_scale);
    c.seed = j.value("seed", c.seed);
    if (j.contains("complementarity")) {
      const auto mode = j["complementarity"].get<std::string>();
      if (mode == "shared") c.complementarity = Complementarity::Shared;
      else if (mode == "disjoint") c.complementarity = Complementarity::Disjoint;
      else throw config_error("complementarity", "expected shared or disjoint, got '" + mode + "'");
    }
    if (j.contains("signals")) {
      c.signals.clear();
      for (const auto& s : j["signals"])
        c.signals.push_back({parse_representation(s.at("repr").get<std::string>()), s.value("strength", 3.0),
                             s.value("subspace_dim", 1)});
    }
  } catch (const json::exception& e) {
    throw Error(ErrorCode::ConfigError, std::string("synth config: ") + e.what());
  } catch (const Error& e) {
    if (e.code() == ErrorCode::ConfigError) throw;
    throw Error(ErrorCode::ConfigError, e.what());
  }
  return c;
}

FeatureDataset generate(const SynthConfig& config) {
  config.check();
  std::mt19937_64 rng(config.seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  std::bernoulli_distribution coin(config.hallucination_rate);
  const auto n = static_cast<Eigen::Index>(config.n_samples);
  const int m = static_cast<int>(config.signals.size());

  Labels labels(config.n_samples);
  std::vector<int> cause(config.n_samples, -1);  // disjoint mode: which signal repr fires
  std::uniform_int_distribution<int> pick(0, m - 1);
  for (std::size_t i = 0; i < config.n_samples; ++i) {
    labels[i] = coin(rng) ? 1 : 0;
    if (labels[i] && config.complementarity == Complementarity::Disjoint) cause[i] = pick(rng);
  }

  int max_k = 1;
  for (const auto& s : config.signals) max_k = std::max(max_k, s.subspace_dim);
  Matrix shared_noise(n, max_k);
  for (Eigen::Index i = 0; i < n; ++i)
    for (int k = 0; k < max_k; ++k) shared_noise(i, k) = config.noise_scale * gauss(rng);

  Manifest manifest;
  manifest.model_name = config.model_name;
  manifest.num_layers = config.num_layers;
  manifest.num_heads = config.num_heads;
  manifest.head_dim = config.head_dim;
  manifest.hidden_dim = config.hidden_dim;
  manifest.num_samples = config.n_samples;
  for (int l = 0; l < config.num_layers; ++l)
    for (int h = 0; h < config.num_heads; ++h) manifest.representations.push_back({RepresentationId::attention(l, h), config.head_dim});
  for (int l = 0; l < config.num_layers; ++l) manifest.representations.push_back({RepresentationId::hidden(l), config.hidden_dim});

  std::map<RepresentationId, FloatMatrix> features;
  for (const auto& spec : manifest.representations) {
    const int d = spec.dim;
    Matrix X(n, d);
    for (Eigen::Index i = 0; i < n; ++i)
      for (int j = 0; j < d; ++j) X(i, j) = config.noise_scale * gauss(rng);

    int signal = -1;
    for (int s = 0; s < m; ++s)
      if (config.signals[static_cast<std::size_t>(s)].id == spec.id) signal = s;
    if (signal >= 0) {
      const auto& sig = config.signals[static_cast<std::size_t>(signal)];
      const int k = sig.subspace_dim;
      // Random orthonormal directions spanning the signal subspace (rows of U).
      Matrix G(d, k);
      for (int r = 0; r < d; ++r)
        for (int c = 0; c < k; ++c) G(r, c) = gauss(rng);
      const Matrix Q = Eigen::HouseholderQR<Matrix>(G).householderQ() * Matrix::Identity(d, k);
      const Matrix U = Q.transpose();
      const double per_dir = sig.strength / std::sqrt(static_cast<double>(k));
      for (Eigen::Index i = 0; i < n; ++i) {
        const bool active = config.complementarity == Complementarity::Shared
                                ? labels[static_cast<std::size_t>(i)] == 1
                                : cause[static_cast<std::size_t>(i)] == signal;
        Vector along = U * X.row(i).transpose();
        if (config.complementarity == Complementarity::Shared) along = shared_noise.row(i).head(k).transpose();
        Vector target = along;
        if (active) target.array() += per_dir;
        X.row(i) += ((target - U * X.row(i).transpose()).transpose() * U);
      }
    }
    features[spec.id] = X.cast<float>();
  }
  return FeatureDataset(std::move(manifest), std::move(labels), std::move(features));
}

void write_synth(const SynthConfig& config, const std::filesystem::path& dir) {
  const auto ds = generate(config);
  save_dataset(ds, dir);
  std::ofstream out(dir / "synth.json", std::ios::binary | std::ios::trunc);
  out << to_json(config).dump(2) << "\n";
  if (!out) throw Error(ErrorCode::FormatError, "cannot write synth.json");
}

double bayes_auc_oracle(double delta) {
  if (delta < 0) throw Error(ErrorCode::ConfigError, "delta must be non-negative");
  // Phi(x) = erfc(-x / sqrt 2) / 2 with x = delta / sqrt 2.
  return 0.5 * std::erfc(-delta / 2.0);
}

}  // namespace ensemhal
