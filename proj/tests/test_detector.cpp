#include <cmath>
#include <random>

#include "doctest.h"
#include "ensemhal/detector.hpp"
#include "ensemhal/error.hpp"
#include "oracles.hpp"

using namespace ensemhal;

namespace {

struct Instance {
  Matrix X;
  std::vector<std::uint8_t> y;
};

Instance random_instance(std::mt19937_64& rng, int n, int d) {
  std::normal_distribution<double> g;
  Instance inst{Matrix(n, d), std::vector<std::uint8_t>(static_cast<std::size_t>(n))};
  for (int i = 0; i < n; ++i) {
    inst.y[static_cast<std::size_t>(i)] = (i % 2 == 0) ? 1 : 0;
    for (int j = 0; j < d; ++j) inst.X(i, j) = g(rng) + (inst.y[static_cast<std::size_t>(i)] ? 0.7 : -0.7);
  }
  return inst;
}

oracle::Mat rows_of(const Matrix& X) {
  oracle::Mat out(static_cast<std::size_t>(X.rows()));
  for (Eigen::Index i = 0; i < X.rows(); ++i)
    for (Eigen::Index j = 0; j < X.cols(); ++j) out[i].push_back(X(i, j));
  return out;
}

DetectorModel raw_model(Vector w, double b) {
  DetectorModel m;
  m.weights = std::move(w);
  m.bias = b;
  return m;
}

DetectorConfig raw_config() {
  DetectorConfig c;
  c.standardize = false;
  return c;
}

}  // namespace

TEST_CASE("sigmoid is stable and exact at simple points") {
  CHECK(sigmoid(0.0) == 0.5);
  CHECK(std::abs(sigmoid(std::log(3.0)) - 0.75) < 1e-12);
  const double tiny = sigmoid(-800.0);
  CHECK(tiny > 0.0);
  CHECK(std::isfinite(tiny));
  CHECK(sigmoid(800.0) < 1.0);
  for (double z : {-1e4, -50.0, -1.0, 1.0, 50.0, 1e4}) {
    CHECK(sigmoid(z) > 0.0);
    CHECK(sigmoid(z) < 1.0);
  }
}

TEST_CASE("predict_proba and predict_label") {
  Matrix X(3, 2);
  X << 1, 2, -3, 4, 100, -100;
  SUBCASE("zero model gives one half and label 1") {
    auto m = raw_model(Vector::Zero(2), 0.0);
    const Vector p = predict_proba(m, X);
    for (Eigen::Index i = 0; i < 3; ++i) CHECK(p(i) == 0.5);
    CHECK(predict_label(m, X) == std::vector<std::uint8_t>{1, 1, 1});
  }
  SUBCASE("threshold inclusivity") {
    Matrix one(1, 1);
    one << 1.0;
    CHECK(predict_label(raw_model(Vector::Zero(1), 0.0), one)[0] == 1);
    // logit(0.4999) lands just below one half.
    CHECK(predict_label(raw_model(Vector::Zero(1), std::log(0.4999 / 0.5001)), one)[0] == 0);
  }
  SUBCASE("closed-form logit") {
    Matrix one(1, 1);
    one << 1.0;
    CHECK(std::abs(predict_proba(raw_model(Vector::Constant(1, std::log(3.0)), 0.0), one)(0) - 0.75) < 1e-12);
  }
  SUBCASE("dimension mismatch") {
    auto m = raw_model(Vector::Zero(3), 0.0);
    CHECK_THROWS_AS(predict_proba(m, X), Error);
  }
  SUBCASE("monotone in the margin") {
    std::mt19937_64 rng(2);
    auto inst = random_instance(rng, 40, 3);
    auto m = train_detector(inst.X, inst.y, DetectorConfig{});
    const Vector z = decision_function(m, inst.X);
    const Vector p = predict_proba(m, inst.X);
    for (Eigen::Index i = 0; i < z.size(); ++i)
      for (Eigen::Index j = 0; j < z.size(); ++j)
        if (z(i) > z(j)) CHECK(p(i) >= p(j));
  }
}

TEST_CASE("symmetric 1-D data gives a zero bias") {
  Matrix X(2, 1);
  X << -1, 1;
  const std::vector<std::uint8_t> y{0, 1};
  for (bool standardize : {false, true}) {
    DetectorConfig c;
    c.standardize = standardize;
    auto m = train_detector(X, y, c);
    CHECK(m.weights(0) > 0);
    CHECK(m.meta.converged);
    Matrix origin(1, 1);
    origin << 0.0;
    CHECK(std::abs(predict_proba(m, origin)(0) - 0.5) < 1e-9);
  }
}

TEST_CASE("trainer reaches the grid-search optimum on a 6x2 instance") {
  Matrix X(6, 2);
  X << 0.5, 1.2, -0.3, 0.8, 1.5, -0.4, -1.1, -0.9, 0.2, 0.1, -0.6, 1.4;
  const std::vector<std::uint8_t> y{1, 1, 0, 0, 1, 0};
  auto fit = fit_logistic(X, y);
  const double trained = oracle::logistic_objective(rows_of(X), y, {fit.weights(0), fit.weights(1)}, fit.bias, 1.0);
  const auto grid = oracle::grid_search_logistic(rows_of(X), y, 1.0);
  CHECK(fit.meta.converged);
  CHECK(trained <= grid.objective + 1e-4);
  CHECK(std::abs(fit.meta.objective - trained) < 1e-10);
}

TEST_CASE("analytic gradient matches central differences") {
  std::mt19937_64 rng(17);
  std::normal_distribution<double> g;
  for (int trial = 0; trial < 20; ++trial) {
    auto inst = random_instance(rng, 3 + trial % 8, 1 + trial % 3);
    const auto d = inst.X.cols();
    Vector w(d);
    for (auto& v : w) v = g(rng);
    const double b = g(rng);
    const double C = 0.5 + trial * 0.25;
    const Vector grad = logistic_gradient(inst.X, inst.y, w, b, C);
    const auto rows = rows_of(inst.X);
    auto f = [&](const Vector& ww, double bb) {
      return oracle::logistic_objective(rows, inst.y, std::vector<double>(ww.data(), ww.data() + d), bb, C);
    };
    const double h = 1e-5;
    for (Eigen::Index k = 0; k <= d; ++k) {
      double fd;
      if (k < d) {
        Vector up = w, dn = w;
        up(k) += h;
        dn(k) -= h;
        fd = (f(up, b) - f(dn, b)) / (2 * h);
      } else {
        fd = (f(w, b + h) - f(w, b - h)) / (2 * h);
      }
      CHECK(std::abs(grad(k) - fd) <= 1e-4 * std::max(1.0, std::abs(fd)));
    }
  }
}

TEST_CASE("weaker regularisation never raises the optimal objective") {
  std::mt19937_64 rng(23);
  for (int trial = 0; trial < 10; ++trial) {
    auto inst = random_instance(rng, 8, 2);
    const auto rows = rows_of(inst.X);
    auto fit_lo = fit_logistic(inst.X, inst.y, 0.5);
    auto fit_hi = fit_logistic(inst.X, inst.y, 2.0);
    auto J = [&](const LogisticFit& fit, double C) {
      return oracle::logistic_objective(rows, inst.y, {fit.weights(0), fit.weights(1)}, fit.bias, C);
    };
    CHECK(J(fit_hi, 2.0) <= J(fit_lo, 2.0) + 1e-9);
    CHECK(J(fit_hi, 2.0) <= J(fit_lo, 0.5) + 1e-9);
    CHECK(J(fit_hi, 2.0) <= oracle::grid_search_logistic(rows, inst.y, 2.0).objective + 1e-4);
  }
}

TEST_CASE("standardisation absorbs feature scale") {
  std::mt19937_64 rng(31);
  auto inst = random_instance(rng, 60, 4);
  DetectorConfig c;
  auto a = train_detector(inst.X, inst.y, c);
  auto b = train_detector(inst.X * 10.0, inst.y, c);
  const Vector pa = predict_proba(a, inst.X);
  const Vector pb = predict_proba(b, inst.X * 10.0);
  CHECK((pa - pb).cwiseAbs().maxCoeff() < 1e-8);
}

TEST_CASE("training is deterministic") {
  std::mt19937_64 rng(37);
  auto inst = random_instance(rng, 80, 6);
  DetectorConfig c;
  c.pca_k = 3;
  auto a = train_detector(inst.X, inst.y, c, RepresentationId::hidden(1));
  auto b = train_detector(inst.X, inst.y, c, RepresentationId::hidden(1));
  CHECK(to_json(a).dump() == to_json(b).dump());
  CHECK(a.weights.size() == 3);
  CHECK(a.preproc.input_scaler.has_value());
  CHECK(a.preproc.pca.has_value());
  CHECK(a.preproc.output_scaler.has_value());
}

TEST_CASE("raw features without standardisation use no preprocessing") {
  std::mt19937_64 rng(41);
  auto inst = random_instance(rng, 30, 2);
  auto m = train_detector(inst.X, inst.y, raw_config());
  CHECK_FALSE(m.preproc.input_scaler.has_value());
  CHECK(m.input_dim() == 2);
  auto fit = fit_logistic(inst.X, inst.y);
  CHECK((m.weights - fit.weights).norm() == 0.0);
}

TEST_CASE("max_iter bounds the optimiser and reports non-convergence") {
  std::mt19937_64 rng(43);
  auto inst = random_instance(rng, 200, 10);
  DetectorConfig c;
  c.max_iter = 2;
  auto m = train_detector(inst.X, inst.y, c);
  CHECK(m.meta.iterations <= 2);
  CHECK_FALSE(m.meta.converged);
  CHECK(m.meta.final_grad_norm > c.tol);
  auto full = train_detector(inst.X, inst.y, DetectorConfig{});
  CHECK(full.meta.converged);
  CHECK(full.meta.iterations < 300);
  CHECK(full.meta.objective <= m.meta.objective);
}

TEST_CASE("single-class labels are rejected") {
  Matrix X = Matrix::Random(5, 2);
  std::vector<std::uint8_t> y(5, 1);
  try {
    train_detector(X, y, DetectorConfig{});
    FAIL("expected SingleClassTraining");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::SingleClassTraining);
  }
}

TEST_CASE("detector JSON round-trip preserves every double") {
  std::mt19937_64 rng(47);
  auto inst = random_instance(rng, 50, 5);
  DetectorConfig c;
  c.pca_k = 2;
  auto m = train_detector(inst.X, inst.y, c, RepresentationId::hidden(3));
  const auto text = to_json(m).dump();
  auto back = detector_from_json(nlohmann::json::parse(text));
  CHECK(back.repr == m.repr);
  CHECK(back.bias == m.bias);
  CHECK((back.weights - m.weights).cwiseAbs().maxCoeff() == 0.0);
  CHECK((back.preproc.pca->components - m.preproc.pca->components).cwiseAbs().maxCoeff() == 0.0);
  CHECK((predict_proba(back, inst.X) - predict_proba(m, inst.X)).cwiseAbs().maxCoeff() == 0.0);
  CHECK(to_json(back).dump() == text);
}
