#include <cmath>
#include <filesystem>
#include <fstream>

#include "doctest.h"
#include "ensemhal/detector.hpp"
#include "ensemhal/error.hpp"
#include "ensemhal/metrics.hpp"
#include "ensemhal/synth.hpp"
#include "oracles.hpp"

using namespace ensemhal;
namespace fs = std::filesystem;

namespace {

std::string config_message(const SynthConfig& c) {
  try {
    c.check();
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::ConfigError);
    return e.what();
  }
  FAIL("expected ConfigError");
  return {};
}

// Difference of class means, one entry per column.
Vector mean_shift(const FeatureDataset& ds, const RepresentationId& id) {
  const auto& X = ds.features(id);
  Vector pos = Vector::Zero(X.cols()), neg = Vector::Zero(X.cols());
  double np = 0, nn = 0;
  for (Eigen::Index i = 0; i < X.rows(); ++i) {
    if (ds.labels()[static_cast<std::size_t>(i)]) {
      pos += X.row(i).cast<double>().transpose();
      np += 1;
    } else {
      neg += X.row(i).cast<double>().transpose();
      nn += 1;
    }
  }
  return pos / np - neg / nn;
}

// Each sample projected on the representation's estimated signal direction.
Vector projection(const FeatureDataset& ds, const RepresentationId& id) {
  const Vector u = mean_shift(ds, id).normalized();
  return ds.features(id).cast<double>() * u;
}

double correlation(const Vector& a, const Vector& b) {
  const Vector x = a.array() - a.mean();
  const Vector y = b.array() - b.mean();
  return x.dot(y) / (x.norm() * y.norm());
}

std::vector<std::size_t> range(std::size_t lo, std::size_t hi) {
  std::vector<std::size_t> out;
  for (auto i = lo; i < hi; ++i) out.push_back(i);
  return out;
}

}  // namespace

TEST_CASE("bayes_auc_oracle") {
  CHECK(bayes_auc_oracle(0.0) == 0.5);
  CHECK(bayes_auc_oracle(6.0) > 0.9999);
  CHECK(std::abs(bayes_auc_oracle(1.0) - oracle::normal_cdf_series(1.0 / std::sqrt(2.0))) < 1e-4);
  for (double delta : {0.25, 1.0, 2.0, 3.0, 4.5})
    CHECK(std::abs(bayes_auc_oracle(delta) - oracle::normal_cdf_series(delta / std::sqrt(2.0))) < 1e-12);
  CHECK(std::abs(bayes_auc_oracle(3.0) - 0.983) < 5e-4);
  CHECK_THROWS_AS(bayes_auc_oracle(-1.0), Error);
}

TEST_CASE("config validation names the field") {
  SynthConfig c = synth_preset("planted-single");
  CHECK_NOTHROW(c.check());

  auto bad = c;
  bad.hallucination_rate = 0.0;
  CHECK(config_message(bad).find("hallucination_rate") != std::string::npos);
  bad.hallucination_rate = 1.0;
  CHECK(config_message(bad).find("hallucination_rate") != std::string::npos);

  bad = c;
  bad.signals.push_back(bad.signals.front());
  CHECK(config_message(bad).find("signal_reprs") != std::string::npos);

  bad = c;
  bad.signals = {{RepresentationId::attention(4, 0), 3.0, 1}};
  CHECK(config_message(bad).find("signal_reprs") != std::string::npos);

  bad = c;
  bad.signals.front().subspace_dim = c.head_dim + 1;
  CHECK(config_message(bad).find("signal_subspace_dim") != std::string::npos);

  bad = c;
  bad.noise_scale = 0.0;
  CHECK(config_message(bad).find("noise_scale") != std::string::npos);

  bad = c;
  bad.n_samples = 10;
  CHECK(config_message(bad).find("n_samples") != std::string::npos);

  CHECK_THROWS_AS(synth_preset("planted-everything"), Error);
}

TEST_CASE("config JSON round-trip") {
  for (const char* name : {"planted-single", "planted-disjoint", "planted-shared", "null"}) {
    auto c = synth_preset(name);
    c.seed = 11;
    const auto j = to_json(c);
    CHECK(to_json(synth_config_from_json(j)) == j);
  }
  nlohmann::json j = to_json(synth_preset("planted-single"));
  j["complementarity"] = "sometimes";
  CHECK_THROWS_AS(synth_config_from_json(j), Error);
}

TEST_CASE("generate is deterministic in the seed") {
  auto c = synth_preset("planted-single");
  c.n_samples = 200;
  const auto a = generate(c);
  const auto b = generate(c);
  c.seed = 1;
  const auto other = generate(c);
  CHECK(a.labels() == b.labels());
  bool any_diff = false;
  for (const auto& id : a.ids()) {
    CHECK((a.features(id) - b.features(id)).cwiseAbs().maxCoeff() == 0.0f);
    any_diff = any_diff || (a.features(id) - other.features(id)).cwiseAbs().maxCoeff() > 0.0f;
  }
  CHECK(any_diff);
}

TEST_CASE("geometry and label rate") {
  const auto c = synth_preset("planted-single");
  const auto ds = generate(c);
  CHECK(ds.manifest().representations.size() == static_cast<std::size_t>(c.num_layers * (c.num_heads + 1)));
  CHECK(ds.features(RepresentationId::attention(0, 0)).cols() == c.head_dim);
  CHECK(ds.features(RepresentationId::hidden(3)).cols() == c.hidden_dim);

  double positives = 0;
  for (auto y : ds.labels()) positives += y;
  const double rate = positives / static_cast<double>(c.n_samples);
  const double sigma = std::sqrt(c.hallucination_rate * (1 - c.hallucination_rate) / static_cast<double>(c.n_samples));
  CHECK(std::abs(rate - c.hallucination_rate) <= 3 * sigma);
}

TEST_CASE("planted shift has the configured magnitude") {
  auto c = synth_preset("planted-single");
  c.n_samples = 4000;
  c.signals.front().subspace_dim = 3;
  const auto ds = generate(c);
  // Per-coordinate standard error of a mean difference is about 0.04 here.
  CHECK(std::abs(mean_shift(ds, c.signals.front().id).norm() - 3.0) < 0.3);
  CHECK(mean_shift(ds, RepresentationId::attention(0, 0)).norm() < 0.4);
  CHECK(mean_shift(ds, RepresentationId::hidden(2)).norm() < 0.6);

  // noise_scale scales the noise, not the shift.
  c.noise_scale = 2.0;
  const auto noisy = generate(c);
  CHECK(std::abs(mean_shift(noisy, c.signals.front().id).norm() - 3.0) < 0.5);
  const auto& X = noisy.features(RepresentationId::attention(0, 0));
  const double var = (X.cast<double>().array() - X.cast<double>().mean()).square().mean();
  CHECK(std::abs(var - 4.0) < 0.2);
}

TEST_CASE("disjoint mode splits the shift, shared mode ties the signals together") {
  auto disjoint = synth_preset("planted-disjoint");
  auto shared = synth_preset("planted-shared");
  const auto a = generate(disjoint);
  const auto b = generate(shared);
  const auto ah = RepresentationId::attention(1, 2), hs = RepresentationId::hidden(2);

  // Each cause fires for half of the positives.
  CHECK(std::abs(mean_shift(a, ah).norm() - 1.5) < 0.3);
  CHECK(std::abs(mean_shift(a, hs).norm() - 1.5) < 0.4);
  CHECK(std::abs(mean_shift(b, ah).norm() - 3.0) < 0.3);
  CHECK(std::abs(mean_shift(b, hs).norm() - 3.0) < 0.4);

  CHECK(correlation(projection(b, ah), projection(b, hs)) > 0.9);
  CHECK(correlation(projection(a, ah), projection(a, hs)) < 0.2);
}

TEST_CASE("single planted signal reaches the Bayes AUC, noise stays near chance") {
  const auto c = synth_preset("planted-single");
  const auto ds = generate(c);
  const auto train = range(0, 1600), test = range(1600, c.n_samples);
  const auto y_train = ds.labels_at(train), y_test = ds.labels_at(test);
  for (const auto& id : ds.ids()) {
    const auto model = train_detector(ds.rows(id, train), y_train, DetectorConfig{}, id);
    const Vector p = predict_proba(model, ds.rows(id, test));
    const double auc = roc_auc(std::span<const double>(p.data(), static_cast<std::size_t>(p.size())), y_test);
    if (id == c.signals.front().id) {
      CHECK(std::abs(auc - bayes_auc_oracle(3.0)) < 0.02);
    } else {
      CHECK(auc >= 0.35);
      CHECK(auc <= 0.65);
    }
  }
}

TEST_CASE("write_synth emits a valid dataset directory") {
  const auto dir = fs::temp_directory_path() / "ensemhal_synth_write";
  fs::remove_all(dir);
  auto c = synth_preset("planted-disjoint");
  c.n_samples = 120;
  write_synth(c, dir);
  CHECK(validate_dataset_dir(dir).empty());
  std::ifstream in(dir / "synth.json");
  CHECK(to_json(synth_config_from_json(nlohmann::json::parse(in))) == to_json(c));
  const auto back = load_dataset(dir);
  const auto fresh = generate(c);
  CHECK(back.labels() == fresh.labels());
  for (const auto& id : fresh.ids()) CHECK((back.features(id) - fresh.features(id)).cwiseAbs().maxCoeff() == 0.0f);
  fs::remove_all(dir);
}
