#include "ensemhal/metrics.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <numeric>

#include "ensemhal/error.hpp"

namespace ensemhal {

using nlohmann::json;

double roc_auc(std::span<const double> scores, std::span<const std::uint8_t> labels) {
  if (scores.size() != labels.size())
    throw Error(ErrorCode::DimensionMismatch, "scores and labels differ in length");
  const std::size_t n = scores.size();
  std::size_t n_pos = 0;
  for (auto y : labels) n_pos += y ? 1 : 0;
  const std::size_t n_neg = n - n_pos;
  if (n_pos == 0 || n_neg == 0) throw Error(ErrorCode::SingleClassEval, "AUC needs both classes present");

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });

  // Sum of positive midranks, kept doubled so it stays an exact integer.
  std::uint64_t twice_rank_sum = 0;
  for (std::size_t i = 0; i < n;) {
    std::size_t j = i;
    while (j + 1 < n && scores[order[j + 1]] == scores[order[i]]) ++j;
    const std::uint64_t twice_midrank = (i + 1) + (j + 1);
    for (std::size_t k = i; k <= j; ++k)
      if (labels[order[k]]) twice_rank_sum += twice_midrank;
    i = j + 1;
  }
  // U = R_pos - n_pos (n_pos + 1) / 2; AUC = U / (n_pos n_neg).
  const std::uint64_t twice_u = twice_rank_sum - static_cast<std::uint64_t>(n_pos) * (n_pos + 1);
  return static_cast<double>(twice_u) / (2.0 * static_cast<double>(n_pos) * static_cast<double>(n_neg));
}

double accuracy_at_half(std::span<const double> scores, std::span<const std::uint8_t> labels) {
  if (scores.size() != labels.size())
    throw Error(ErrorCode::DimensionMismatch, "scores and labels differ in length");
  if (scores.empty()) return 0.0;
  std::size_t hits = 0;
  for (std::size_t i = 0; i < scores.size(); ++i) hits += ((scores[i] >= 0.5) == (labels[i] != 0)) ? 1 : 0;
  return static_cast<double>(hits) / static_cast<double>(scores.size());
}

EvalReport evaluate(std::span<const double> scores, std::span<const std::uint8_t> labels) {
  EvalReport r;
  r.auc = roc_auc(scores, labels);
  r.accuracy = accuracy_at_half(scores, labels);
  for (auto y : labels) (y ? r.n_pos : r.n_neg)++;
  return r;
}

std::string RunSummary::formatted() const {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.3f ± %.3f", mean, std);
  return buf;
}

RunSummary aggregate_values(std::span<const double> values) {
  if (values.size() < 2)
    throw Error(ErrorCode::InsufficientRuns, "need at least 2 runs, got " + std::to_string(values.size()));
  RunSummary s;
  s.runs = values.size();
  s.mean = std::accumulate(values.begin(), values.end(), 0.0) / static_cast<double>(values.size());
  double ss = 0.0;
  for (double v : values) ss += (v - s.mean) * (v - s.mean);
  s.std = std::sqrt(ss / static_cast<double>(values.size() - 1));
  return s;
}

RunSummary aggregate_runs(std::span<const EvalReport> reports) {
  std::vector<double> aucs;
  aucs.reserve(reports.size());
  for (const auto& r : reports) aucs.push_back(r.auc);
  return aggregate_values(aucs);
}

TimingStats time_detection(const std::function<void()>& work, int repetitions, int warmup) {
  using clock = std::chrono::steady_clock;
  repetitions = std::max(repetitions, 1);
  for (int i = 0; i < warmup; ++i) work();
  std::vector<double> samples;
  samples.reserve(static_cast<std::size_t>(repetitions));
  for (int i = 0; i < repetitions; ++i) {
    const auto start = clock::now();
    work();
    samples.push_back(std::chrono::duration<double>(clock::now() - start).count());
  }
  TimingStats t;
  t.repetitions = repetitions;
  t.mean_s = std::accumulate(samples.begin(), samples.end(), 0.0) / repetitions;
  if (repetitions > 1) {
    double ss = 0.0;
    for (double s : samples) ss += (s - t.mean_s) * (s - t.mean_s);
    t.std_s = std::sqrt(ss / (repetitions - 1));
  }
  t.cv = t.mean_s > 0 ? t.std_s / t.mean_s : 0.0;
  return t;
}

json to_json(const EvalReport& report) {
  json per = json::object();
  for (const auto& [id, auc] : report.per_detector) per[to_string(id)] = auc;
  return {{"auc", report.auc},
          {"accuracy", report.accuracy},
          {"n_pos", report.n_pos},
          {"n_neg", report.n_neg},
          {"timing", {{"feature_load_s", report.timing.feature_load_s}, {"detect_s", report.timing.detect_s}}},
          {"per_detector", per}};
}

EvalReport report_from_json(const json& j) {
  EvalReport r;
  r.auc = j.at("auc").get<double>();
  r.accuracy = j.at("accuracy").get<double>();
  r.n_pos = j.at("n_pos").get<std::size_t>();
  r.n_neg = j.at("n_neg").get<std::size_t>();
  if (j.contains("timing")) {
    r.timing.feature_load_s = j["timing"].value("feature_load_s", 0.0);
    r.timing.detect_s = j["timing"].value("detect_s", 0.0);
  }
  if (j.contains("per_detector"))
    for (const auto& [name, auc] : j["per_detector"].items()) r.per_detector[parse_representation(name)] = auc.get<double>();
  return r;
}

}  // namespace ensemhal
