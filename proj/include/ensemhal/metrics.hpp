#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "ensemhal/representation.hpp"
#include "json.hpp"

namespace ensemhal {

struct Timing {
  double feature_load_s = 0.0;
  double detect_s = 0.0;
};

struct EvalReport {
  double auc = 0.0;
  double accuracy = 0.0;
  std::size_t n_pos = 0;
  std::size_t n_neg = 0;
  Timing timing;
  std::map<RepresentationId, double> per_detector;
};

/// Mann-Whitney AUC from midranks; ties between classes count one half.
/// Throws SingleClassEval unless both classes are present.
double roc_auc(std::span<const double> scores, std::span<const std::uint8_t> labels);

/// Fraction of rows where (score >= 0.5) == label.
double accuracy_at_half(std::span<const double> scores, std::span<const std::uint8_t> labels);

EvalReport evaluate(std::span<const double> scores, std::span<const std::uint8_t> labels);

struct RunSummary {
  double mean = 0.0;
  double std = 0.0;  // sample std, divisor n - 1
  std::size_t runs = 0;

  /// "0.800 ± 0.141"
  std::string formatted() const;
};

/// Throws InsufficientRuns for fewer than two reports.
RunSummary aggregate_runs(std::span<const EvalReport> reports);
RunSummary aggregate_values(std::span<const double> values);

struct TimingStats {
  double mean_s = 0.0;
  double std_s = 0.0;
  double cv = 0.0;
  int repetitions = 0;
};

/// Wall-clock seconds of `work`, averaged over `repetitions` runs after
/// `warmup` untimed passes.
TimingStats time_detection(const std::function<void()>& work, int repetitions = 10, int warmup = 2);

nlohmann::json to_json(const EvalReport& report);
EvalReport report_from_json(const nlohmann::json& j);

}  // namespace ensemhal
