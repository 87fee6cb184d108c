#include "ensemhal/ensemble.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <set>
#include <stdexcept>

#include "ensemhal/error.hpp"
#include "parallel.hpp"

namespace ensemhal {

namespace fs = std::filesystem;
using nlohmann::json;

// ---------------------------------------------------------------------------
// Names

std::string to_string(FeatureFamily family) {
  switch (family) {
    case FeatureFamily::AH: return "AH";
    case FeatureFamily::HS: return "HS";
    case FeatureFamily::MIX: return "MIX";
  }
  return "?";
}

std::string to_string(Strategy strategy) {
  switch (strategy) {
    case Strategy::Top1: return "top1";
    case Strategy::Concat: return "concat";
    case Strategy::Average: return "average";
    case Strategy::Weighted: return "weighted";
    case Strategy::Stack: return "stack";
  }
  return "?";
}

namespace {

std::string lower(std::string_view text) {
  std::string out(text);
  std::transform(out.begin(), out.end(), out.begin(), [](unsigned char c) { return std::tolower(c); });
  return out;
}

}  // namespace

FeatureFamily parse_family(std::string_view text) {
  const auto t = lower(text);
  for (auto f : kAllFamilies)
    if (lower(to_string(f)) == t) return f;
  throw Error(ErrorCode::ConfigError, "family: unknown value '" + std::string(text) + "' (expected AH, HS or MIX)");
}

Strategy parse_strategy(std::string_view text) {
  const auto t = lower(text);
  for (auto s : kAllStrategies)
    if (to_string(s) == t) return s;
  throw Error(ErrorCode::ConfigError, "strategy: unknown value '" + std::string(text) +
                                          "' (expected top1, concat, average, weighted or stack)");
}

// ---------------------------------------------------------------------------
// Config

void EnsembleConfig::check() const {
  auto fail = [](const std::string& msg) { return Error(ErrorCode::ConfigError, msg); };
  if (top_k_ah < 1) throw fail("top_k_ah must be at least 1");
  if (top_k_hs < 1) throw fail("top_k_hs must be at least 1");
  if (max_selected < 1) throw fail("max_selected must be at least 1");
  if (!(detector.C > 0)) throw fail("C must be positive");
  if (detector.max_iter < 1) throw fail("max_iter must be at least 1");
  if (!(detector.tol >= 0)) throw fail("tol must be non-negative");
  if (pca_k && *pca_k < 1) throw fail("pca_k must be at least 1");
}

json to_json(const EnsembleConfig& c) {
  json j = {{"family", to_string(c.family)},
            {"strategy", to_string(c.strategy)},
            {"top_k_ah", c.top_k_ah},
            {"top_k_hs", c.top_k_hs},
            {"max_selected", c.max_selected},
            {"selection_tolerance", c.selection_tolerance},
            {"concat_all_candidates", c.concat_all_candidates},
            {"C", c.detector.C},
            {"max_iter", c.detector.max_iter},
            {"tol", c.detector.tol},
            {"standardize", c.detector.standardize},
            {"hs_pca", c.hs_pca},
            {"ratios", {c.ratios.train, c.ratios.val, c.ratios.test}}};
  j["pca_k"] = c.pca_k ? json(*c.pca_k) : json(nullptr);
  return j;
}

EnsembleConfig ensemble_config_from_json(const json& j) {
  EnsembleConfig c;
  try {
    if (j.contains("family")) c.family = parse_family(j["family"].get<std::string>());
    if (j.contains("strategy")) c.strategy = parse_strategy(j["strategy"].get<std::string>());
    c.top_k_ah = j.value("top_k_ah", c.top_k_ah);
    c.top_k_hs = j.value("top_k_hs", c.top_k_hs);
    c.max_selected = j.value("max_selected", c.max_selected);
    c.selection_tolerance = j.value("selection_tolerance", c.selection_tolerance);
    c.concat_all_candidates = j.value("concat_all_candidates", c.concat_all_candidates);
    c.detector.C = j.value("C", c.detector.C);
    c.detector.max_iter = j.value("max_iter", c.detector.max_iter);
    c.detector.tol = j.value("tol", c.detector.tol);
    c.detector.standardize = j.value("standardize", c.detector.standardize);
    c.hs_pca = j.value("hs_pca", c.hs_pca);
    if (j.contains("pca_k") && !j["pca_k"].is_null()) c.pca_k = j["pca_k"].get<int>();
    if (j.contains("ratios")) {
      const auto r = j["ratios"].get<std::vector<double>>();
      if (r.size() != 3) throw Error(ErrorCode::ConfigError, "ratios must have three entries");
      c.ratios = {r[0], r[1], r[2]};
    }
  } catch (const json::exception& e) {
    throw Error(ErrorCode::ConfigError, std::string("ensemble config: ") + e.what());
  }
  c.check();
  return c;
}

std::vector<RepresentationId> EnsembleModel::inputs() const {
  std::set<RepresentationId> ids;
  if (combiner.strategy == Strategy::Top1 && !selected.empty()) {
    ids.insert(selected.front().repr);
  } else if (combiner.strategy == Strategy::Concat) {
    ids.insert(combiner.concat_inputs.begin(), combiner.concat_inputs.end());
  } else {
    for (const auto& d : selected) ids.insert(d.repr);
  }
  return {ids.begin(), ids.end()};
}

// ---------------------------------------------------------------------------
// Grid training and ranking

std::vector<RepresentationId> family_ids(const Manifest& manifest, FeatureFamily family) {
  std::vector<RepresentationId> ah, hs;
  for (const auto& spec : manifest.representations) (spec.id.is_attention() ? ah : hs).push_back(spec.id);
  std::sort(ah.begin(), ah.end());
  std::sort(hs.begin(), hs.end());
  auto need = [](const std::vector<RepresentationId>& v, const char* what) {
    if (v.empty()) throw Error(ErrorCode::MissingRepresentation, std::string("dataset has no ") + what + " representations");
  };
  switch (family) {
    case FeatureFamily::AH: need(ah, "attention-head"); return ah;
    case FeatureFamily::HS: need(hs, "hidden-state"); return hs;
    case FeatureFamily::MIX:
      need(ah, "attention-head");
      need(hs, "hidden-state");
      ah.insert(ah.end(), hs.begin(), hs.end());
      return ah;
  }
  return {};
}

DetectorConfig detector_config_for(const RepresentationId& id, const Manifest& manifest, const EnsembleConfig& config) {
  DetectorConfig dc = config.detector;
  dc.pca_k.reset();
  if (!id.is_attention() && config.hs_pca)
    dc.pca_k = config.pca_k.value_or(std::max(1, manifest.hidden_dim / manifest.num_heads));
  return dc;
}

std::map<RepresentationId, DetectorModel> train_grid(const FeatureDataset& ds, std::span<const std::size_t> train,
                                                     std::span<const RepresentationId> ids,
                                                     const EnsembleConfig& config) {
  const Labels y = ds.labels_at(train);
  std::vector<DetectorModel> models(ids.size());
  detail::parallel_for(ids.size(), [&](std::size_t i) {
    const Matrix X = ds.rows(ids[i], train);
    models[i] = train_detector(X, y, detector_config_for(ids[i], ds.manifest(), config), ids[i]);
  });
  std::map<RepresentationId, DetectorModel> out;
  for (auto& m : models) out.emplace(m.repr, std::move(m));
  return out;
}

namespace {

bool candidate_before(const RankedCandidate& a, const RankedCandidate& b) {
  if (a.val1_auc != b.val1_auc) return a.val1_auc > b.val1_auc;
  if (a.id.layer != b.id.layer) return a.id.layer < b.id.layer;
  if (a.id.head != b.id.head) return a.id.head < b.id.head;
  return a.id.kind < b.id.kind;
}

}  // namespace

std::vector<RankedCandidate> rank_candidates(std::vector<RankedCandidate> scored, FeatureFamily family, int top_k_ah,
                                             int top_k_hs) {
  std::vector<RankedCandidate> ah, hs;
  for (auto& c : scored) (c.id.is_attention() ? ah : hs).push_back(c);
  std::sort(ah.begin(), ah.end(), candidate_before);
  std::sort(hs.begin(), hs.end(), candidate_before);
  if (static_cast<int>(ah.size()) > top_k_ah) ah.resize(static_cast<std::size_t>(top_k_ah));
  if (static_cast<int>(hs.size()) > top_k_hs) hs.resize(static_cast<std::size_t>(top_k_hs));
  switch (family) {
    case FeatureFamily::AH: return ah;
    case FeatureFamily::HS: return hs;
    case FeatureFamily::MIX: break;
  }
  ah.insert(ah.end(), hs.begin(), hs.end());
  std::sort(ah.begin(), ah.end(), candidate_before);
  return ah;
}

std::vector<RankedCandidate> rank_detectors(const std::map<RepresentationId, DetectorModel>& detectors,
                                            const FeatureDataset& ds, std::span<const std::size_t> val1,
                                            const EnsembleConfig& config) {
  const Labels y = ds.labels_at(val1);
  const auto ids = family_ids(ds.manifest(), config.family);
  std::vector<RankedCandidate> scored(ids.size());
  detail::parallel_for(ids.size(), [&](std::size_t i) {
    auto it = detectors.find(ids[i]);
    if (it == detectors.end()) throw Error(ErrorCode::MissingRepresentation, "no trained detector for " + to_string(ids[i]));
    const Vector p = predict_proba(it->second, ds.rows(ids[i], val1));
    scored[i] = {ids[i], roc_auc(std::span<const double>(p.data(), static_cast<std::size_t>(p.size())), y)};
  });
  return rank_candidates(std::move(scored), config.family, config.top_k_ah, config.top_k_hs);
}

// ---------------------------------------------------------------------------
// Greedy forward selection

namespace {

double auc_of(const Vector& scores, std::span<const std::uint8_t> labels) {
  return roc_auc(std::span<const double>(scores.data(), static_cast<std::size_t>(scores.size())), labels);
}

}  // namespace

GreedyResult greedy_select(std::span<const Vector> scores, std::span<const std::uint8_t> labels, int max_selected,
                           double tolerance) {
  GreedyResult result;
  if (scores.empty()) return result;
  const Eigen::Index n = scores.front().size();
  Vector sum = Vector::Zero(n);
  std::vector<bool> used(scores.size(), false);
  double current = 0.0;

  while (static_cast<int>(result.chosen.size()) < max_selected) {
    std::vector<double> trial(scores.size(), -1.0);
    detail::parallel_for(scores.size(), [&](std::size_t c) {
      if (used[c]) return;
      // The AUC of a mean equals the AUC of the sum.
      trial[c] = auc_of(sum + scores[c], labels);
    });
    std::size_t best = scores.size();
    for (std::size_t c = 0; c < scores.size(); ++c)
      if (!used[c] && (best == scores.size() || trial[c] > trial[best])) best = c;
    if (best == scores.size()) break;
    // First acceptance is unconditional; later ones need a real gain.
    if (!result.chosen.empty() && !(trial[best] - current > tolerance)) break;
    used[best] = true;
    sum += scores[best];
    current = trial[best];
    result.chosen.push_back(best);
    result.aucs.push_back(current);
  }
  return result;
}

// ---------------------------------------------------------------------------
// Combiners

Vector auc_weights(std::span<const double> aucs) {
  Vector w(static_cast<Eigen::Index>(aucs.size()));
  for (std::size_t i = 0; i < aucs.size(); ++i) w(static_cast<Eigen::Index>(i)) = std::max(aucs[i] - 0.5, 1e-6);
  return w / w.sum();
}

Matrix detector_probabilities(std::span<const DetectorModel> detectors, const FeatureDataset& ds,
                              std::span<const std::size_t> rows) {
  Matrix P(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(detectors.size()));
  for (std::size_t k = 0; k < detectors.size(); ++k)
    P.col(static_cast<Eigen::Index>(k)) = predict_proba(detectors[k], ds.rows(detectors[k].repr, rows));
  return P;
}

Matrix concat_features(std::span<const DetectorModel> detectors, const FeatureDataset& ds,
                       std::span<const std::size_t> rows) {
  std::vector<Matrix> blocks;
  Eigen::Index width = 0;
  for (const auto& d : detectors) {
    blocks.push_back(d.preproc.apply(ds.rows(d.repr, rows)));
    width += blocks.back().cols();
  }
  Matrix out(static_cast<Eigen::Index>(rows.size()), width);
  Eigen::Index col = 0;
  for (const auto& b : blocks) {
    out.middleCols(col, b.cols()) = b;
    col += b.cols();
  }
  return out;
}

Combiner fit_combiner(Strategy strategy, std::span<const DetectorModel> selected,
                      std::span<const DetectorModel> concat_sources, const FeatureDataset& ds,
                      const SplitAssignment& split, const EnsembleConfig& config) {
  if (selected.empty()) throw std::invalid_argument("fit_combiner: empty selection");
  Combiner c;
  c.strategy = strategy;
  switch (strategy) {
    case Strategy::Top1:
    case Strategy::Average:
      break;
    case Strategy::Weighted: {
      const Labels y = ds.labels_at(split.val2);
      const Matrix P = detector_probabilities(selected, ds, split.val2);
      std::vector<double> aucs;
      for (Eigen::Index k = 0; k < P.cols(); ++k) aucs.push_back(auc_of(P.col(k), y));
      c.weights = auc_weights(aucs);
      break;
    }
    case Strategy::Stack: {
      const Labels y = ds.labels_at(split.val2);
      const Matrix P = detector_probabilities(selected, ds, split.val2);
      auto fit = fit_logistic(P, y, config.detector.C, config.detector.max_iter, config.detector.tol);
      c.meta_weights = std::move(fit.weights);
      c.meta_bias = fit.bias;
      c.meta = fit.meta;
      break;
    }
    case Strategy::Concat: {
      std::span<const DetectorModel> inputs = concat_sources.empty() ? selected : concat_sources;
      const Labels y = ds.labels_at(split.train);
      const Matrix X = concat_features(inputs, ds, split.train);
      auto fit = fit_logistic(X, y, config.detector.C, config.detector.max_iter, config.detector.tol);
      DetectorModel concat;
      concat.repr = inputs.front().repr;
      concat.weights = std::move(fit.weights);
      concat.bias = fit.bias;
      concat.meta = fit.meta;
      c.concat = std::move(concat);
      for (const auto& d : inputs) c.concat_inputs.push_back(d.repr);
      break;
    }
  }
  return c;
}

Vector combine(const Combiner& c, const Matrix& P) {
  switch (c.strategy) {
    case Strategy::Top1: return P.col(0);
    case Strategy::Average: return P.rowwise().mean();
    case Strategy::Weighted:
      if (c.weights.size() != P.cols()) throw Error(ErrorCode::DimensionMismatch, "weighted combiner size mismatch");
      return P * c.weights;
    case Strategy::Stack: {
      if (c.meta_weights.size() != P.cols()) throw Error(ErrorCode::DimensionMismatch, "stack combiner size mismatch");
      const Vector z = (P * c.meta_weights).array() + c.meta_bias;
      return z.unaryExpr([](double v) { return sigmoid(v); });
    }
    case Strategy::Concat: break;
  }
  throw std::invalid_argument("combine: concat combiner works on features, not probabilities");
}

Vector predict_ensemble(const EnsembleModel& model, const FeatureDataset& ds, std::span<const std::size_t> rows) {
  for (const auto& id : model.inputs())
    if (!ds.has(id)) throw Error(ErrorCode::MissingRepresentation, to_string(id) + " required by the ensemble");

  if (model.combiner.strategy == Strategy::Top1)
    return detector_probabilities(std::span(model.selected).first(1), ds, rows).col(0);
  if (model.combiner.strategy != Strategy::Concat)
    return combine(model.combiner, detector_probabilities(model.selected, ds, rows));

  std::vector<DetectorModel> inputs;
  for (const auto& id : model.combiner.concat_inputs) {
    const DetectorModel* found = nullptr;
    for (const auto* pool : {&model.selected, &model.concat_sources})
      for (const auto& d : *pool)
        if (d.repr == id) found = &d;
    if (!found) throw Error(ErrorCode::MissingRepresentation, "concat input " + to_string(id) + " missing from bundle");
    inputs.push_back(*found);
  }
  const Matrix X = concat_features(inputs, ds, rows);
  const auto& head = *model.combiner.concat;
  const Vector z = (X * head.weights).array() + head.bias;
  return z.unaryExpr([](double v) { return sigmoid(v); });
}

// ---------------------------------------------------------------------------
// Pipeline

EnsembleModel build_ensemble(const std::map<RepresentationId, DetectorModel>& grid, const FeatureDataset& ds,
                             const SplitAssignment& split, const EnsembleConfig& config) {
  config.check();
  EnsembleModel model;
  model.config = config;
  model.ranking = rank_detectors(grid, ds, split.val1, config);

  std::vector<DetectorModel> candidates;
  std::vector<Vector> val2_scores;
  for (const auto& c : model.ranking) {
    candidates.push_back(grid.at(c.id));
    val2_scores.push_back(predict_proba(candidates.back(), ds.rows(c.id, split.val2)));
  }
  const Labels y2 = ds.labels_at(split.val2);
  const auto greedy = greedy_select(val2_scores, y2, config.max_selected, config.selection_tolerance);
  for (std::size_t k = 0; k < greedy.chosen.size(); ++k) {
    model.selected.push_back(candidates[greedy.chosen[k]]);
    model.trace.push_back({candidates[greedy.chosen[k]].repr, greedy.aucs[k]});
  }

  if (model.selected.empty() || static_cast<int>(model.selected.size()) > config.max_selected)
    throw std::logic_error("greedy selection size out of range");
  for (std::size_t k = 1; k < model.trace.size(); ++k)
    if (!(model.trace[k].val2_auc - model.trace[k - 1].val2_auc > config.selection_tolerance))
      throw std::logic_error("greedy step gain not above tolerance");

  std::vector<DetectorModel> concat_inputs;
  if (config.strategy == Strategy::Concat && config.concat_all_candidates) {
    concat_inputs = candidates;
    std::set<RepresentationId> chosen;
    for (const auto& d : model.selected) chosen.insert(d.repr);
    for (const auto& d : candidates)
      if (!chosen.contains(d.repr)) model.concat_sources.push_back(d);
  }
  model.combiner = fit_combiner(config.strategy, model.selected, concat_inputs, ds, split, config);
  return model;
}

EvalReport evaluate_ensemble(const EnsembleModel& model, const FeatureDataset& ds, std::span<const std::size_t> rows) {
  const Labels y = ds.labels_at(rows);
  const Vector p = predict_ensemble(model, ds, rows);
  EvalReport report = evaluate(std::span<const double>(p.data(), static_cast<std::size_t>(p.size())), y);
  for (const auto& d : model.selected) report.per_detector[d.repr] = auc_of(predict_proba(d, ds.rows(d.repr, rows)), y);
  return report;
}

SplitAssignment resolve_split(const FeatureDataset& ds, const SplitRatios& ratios, std::uint64_t seed) {
  if (ds.splits()) return *ds.splits();
  return stratified_split(ds.labels(), ratios, seed);
}

PipelineResult run_pipeline(const FeatureDataset& ds, const EnsembleConfig& config, std::uint64_t seed) {
  config.check();
  const auto ids = family_ids(ds.manifest(), config.family);
  PipelineResult result;
  result.split = resolve_split(ds, config.ratios, seed);
  const auto grid = train_grid(ds, result.split.train, ids, config);
  result.model = build_ensemble(grid, ds, result.split, config);
  result.report = evaluate_ensemble(result.model, ds, result.split.test);
  return result;
}

// ---------------------------------------------------------------------------
// Bundle IO

namespace {

json vec_json(const Vector& v) { return std::vector<double>(v.data(), v.data() + v.size()); }

Vector json_vec(const json& j) {
  const auto values = j.get<std::vector<double>>();
  return Eigen::Map<const Vector>(values.data(), static_cast<Eigen::Index>(values.size()));
}

json meta_json(const TrainMeta& m) {
  return {{"C", m.C},
          {"max_iter", m.max_iter},
          {"iterations", m.iterations},
          {"converged", m.converged},
          {"final_grad_norm", m.final_grad_norm},
          {"objective", m.objective}};
}

TrainMeta meta_from_json(const json& j) {
  TrainMeta m;
  m.C = j.at("C").get<double>();
  m.max_iter = j.at("max_iter").get<int>();
  m.iterations = j.value("iterations", 0);
  m.converged = j.at("converged").get<bool>();
  m.final_grad_norm = j.at("final_grad_norm").get<double>();
  m.objective = j.value("objective", 0.0);
  return m;
}

void write_file(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  out << text;
  if (!out) throw Error(ErrorCode::FormatError, "cannot write " + path.string());
}

json read_file(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::MissingArtifact, "cannot open " + path.string());
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw Error(ErrorCode::FormatError, path.string() + ": " + e.what());
  }
}

std::string num(double v) { return json(v).dump(); }

}  // namespace

json to_json(const EnsembleModel& model) {
  json selected = json::array(), sources = json::array(), ranking = json::array(), trace = json::array();
  for (const auto& d : model.selected) selected.push_back(to_string(d.repr));
  for (const auto& d : model.concat_sources) sources.push_back(to_string(d.repr));
  for (const auto& c : model.ranking) ranking.push_back({{"repr", to_string(c.id)}, {"val1_auc", c.val1_auc}});
  for (const auto& s : model.trace) trace.push_back({{"repr", to_string(s.id)}, {"val2_auc", s.val2_auc}});

  const auto& c = model.combiner;
  json combiner = {{"strategy", to_string(c.strategy)}};
  switch (c.strategy) {
    case Strategy::Weighted:
      combiner["weights"] = vec_json(c.weights);
      combiner["weights_rule"] = "max(val2_auc - 0.5, 1e-6), normalised to sum 1";
      break;
    case Strategy::Stack:
      combiner["meta_weights"] = vec_json(c.meta_weights);
      combiner["meta_bias"] = c.meta_bias;
      combiner["train_meta"] = meta_json(c.meta);
      break;
    case Strategy::Concat: {
      json inputs = json::array();
      for (const auto& id : c.concat_inputs) inputs.push_back(to_string(id));
      combiner["concat_inputs"] = inputs;
      combiner["weights"] = vec_json(c.concat->weights);
      combiner["bias"] = c.concat->bias;
      combiner["train_meta"] = meta_json(c.concat->meta);
      break;
    }
    default: break;
  }
  return {{"config", to_json(model.config)}, {"selected", selected}, {"concat_sources", sources},
          {"combiner", combiner},            {"ranking", ranking},   {"trace", trace}};
}

void save_bundle(const EnsembleModel& model, const fs::path& dir) {
  fs::create_directories(dir);
  fs::remove_all(dir / "detectors");
  fs::create_directories(dir / "detectors");
  write_file(dir / "ensemble.json", to_json(model).dump(2) + "\n");
  for (const auto* pool : {&model.selected, &model.concat_sources})
    for (const auto& d : *pool)
      write_file(dir / "detectors" / (to_string(d.repr) + ".json"), to_json(d).dump(2) + "\n");
}

EnsembleModel load_bundle(const fs::path& dir) {
  if (!fs::exists(dir / "ensemble.json"))
    throw Error(ErrorCode::MissingArtifact, "no ensemble.json under " + dir.string());
  const json j = read_file(dir / "ensemble.json");
  EnsembleModel model;
  try {
    model.config = ensemble_config_from_json(j.at("config"));
    auto load_detector = [&](const json& name) {
      return detector_from_json(read_file(dir / "detectors" / (name.get<std::string>() + ".json")));
    };
    for (const auto& name : j.at("selected")) model.selected.push_back(load_detector(name));
    for (const auto& name : j.at("concat_sources")) model.concat_sources.push_back(load_detector(name));
    for (const auto& r : j.at("ranking"))
      model.ranking.push_back({parse_representation(r.at("repr").get<std::string>()), r.at("val1_auc").get<double>()});
    for (const auto& s : j.at("trace"))
      model.trace.push_back({parse_representation(s.at("repr").get<std::string>()), s.at("val2_auc").get<double>()});

    const auto& cj = j.at("combiner");
    auto& c = model.combiner;
    c.strategy = parse_strategy(cj.at("strategy").get<std::string>());
    switch (c.strategy) {
      case Strategy::Weighted: c.weights = json_vec(cj.at("weights")); break;
      case Strategy::Stack:
        c.meta_weights = json_vec(cj.at("meta_weights"));
        c.meta_bias = cj.at("meta_bias").get<double>();
        c.meta = meta_from_json(cj.at("train_meta"));
        break;
      case Strategy::Concat: {
        for (const auto& name : cj.at("concat_inputs")) c.concat_inputs.push_back(parse_representation(name.get<std::string>()));
        DetectorModel head;
        head.repr = c.concat_inputs.at(0);
        head.weights = json_vec(cj.at("weights"));
        head.bias = cj.at("bias").get<double>();
        head.meta = meta_from_json(cj.at("train_meta"));
        c.concat = std::move(head);
        break;
      }
      default: break;
    }
  } catch (const json::exception& e) {
    throw Error(ErrorCode::FormatError, std::string("ensemble.json: ") + e.what());
  }
  if (model.selected.empty()) throw Error(ErrorCode::FormatError, "ensemble.json selects no detectors");
  return model;
}

// ---------------------------------------------------------------------------
// Reports

std::string report_csv_header() {
  return "model,dataset,family,strategy,seed,auc,accuracy,n_pos,n_neg,feature_load_s,detect_s";
}

std::string report_csv_line(const ReportRow& row) {
  const auto& r = row.report;
  return row.model + "," + row.dataset + "," + to_string(row.family) + "," + to_string(row.strategy) + "," +
         std::to_string(row.seed) + "," + num(r.auc) + "," + num(r.accuracy) + "," + std::to_string(r.n_pos) + "," +
         std::to_string(r.n_neg) + "," + num(r.timing.feature_load_s) + "," + num(r.timing.detect_s);
}

json to_json(const ReportRow& row) {
  json j = to_json(row.report);
  j["model"] = row.model;
  j["dataset"] = row.dataset;
  j["family"] = to_string(row.family);
  j["strategy"] = to_string(row.strategy);
  j["seed"] = row.seed;
  return j;
}

void save_report(const ReportRow& row, const fs::path& dir) {
  fs::create_directories(dir);
  write_file(dir / "report.json", to_json(row).dump(2) + "\n");
  write_file(dir / "report.csv", report_csv_header() + "\n" + report_csv_line(row) + "\n");
}

}  // namespace ensemhal
