// ensemhal: synthesise datasets, run the detection pipeline, benchmark saved
// bundles and validate dataset directories.
//
// Exit codes: 0 ok, 1 unexpected failure, 2 configuration, 3 data,
// 4 single-class split, 5 missing artifact.

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <numeric>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "ensemhal/ensemble.hpp"
#include "ensemhal/error.hpp"
#include "ensemhal/metrics.hpp"
#include "ensemhal/synth.hpp"
#include "parallel.hpp"

namespace fs = std::filesystem;
using namespace ensemhal;
using nlohmann::json;

namespace {

int exit_code(ErrorCode code) {
  switch (code) {
    case ErrorCode::ConfigError: return 2;
    case ErrorCode::EmptyTrace:
    case ErrorCode::DegenerateDataset:
    case ErrorCode::FormatError:
    case ErrorCode::MissingRepresentation:
    case ErrorCode::DimensionMismatch: return 3;
    case ErrorCode::SingleClassTraining:
    case ErrorCode::SingleClassEval:
    case ErrorCode::InsufficientRuns: return 4;
    case ErrorCode::MissingArtifact: return 5;
  }
  return 1;
}

Error config_error(const std::string& msg) { return Error(ErrorCode::ConfigError, msg); }

json read_json_file(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw config_error("cannot open " + path.string());
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw config_error(path.string() + ": " + e.what());
  }
}

void write_file(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  out << text;
  if (!out) throw Error(ErrorCode::FormatError, "cannot write " + path.string());
}

// "0..4", "0,2,7" or "3".
std::vector<std::uint64_t> parse_seeds(const std::string& text) {
  std::vector<std::uint64_t> out;
  auto number = [&](const std::string& s) {
    if (s.empty() || s.find_first_not_of("0123456789") != std::string::npos)
      throw config_error("seeds: '" + text + "' is not a seed list (use 0..4 or 0,1,2)");
    return std::stoull(s);
  };
  if (auto dots = text.find(".."); dots != std::string::npos) {
    const auto lo = number(text.substr(0, dots)), hi = number(text.substr(dots + 2));
    if (hi < lo) throw config_error("seeds: empty range '" + text + "'");
    for (auto s = lo; s <= hi; ++s) out.push_back(s);
    return out;
  }
  std::stringstream ss(text);
  for (std::string part; std::getline(ss, part, ',');) out.push_back(number(part));
  return out;
}

template <typename T, typename Parse>
std::vector<T> parse_list(const std::string& text, Parse parse) {
  std::vector<T> out;
  std::stringstream ss(text);
  for (std::string part; std::getline(ss, part, ',');)
    if (!part.empty()) out.push_back(parse(part));
  return out;
}

// ---------------------------------------------------------------------------
// run

struct RunConfig {
  fs::path data;
  fs::path output;
  EnsembleConfig ensemble;
  std::vector<std::uint64_t> seeds{0, 1, 2, 3, 4};
  bool ablate = false;
  std::vector<FeatureFamily> families{std::begin(kAllFamilies), std::end(kAllFamilies)};
  std::vector<Strategy> strategies{std::begin(kAllStrategies), std::end(kAllStrategies)};

  void check() const {
    if (seeds.empty()) throw config_error("seeds: at least one seed is required");
    if (std::set<std::uint64_t>(seeds.begin(), seeds.end()).size() != seeds.size())
      throw config_error("seeds: values must be distinct");
    if (data.empty()) throw config_error("data: dataset directory is required");
    if (output.empty()) throw config_error("output: output directory is required");
    if (families.empty() || strategies.empty()) throw config_error("ablation grid is empty");
    ensemble.check();
  }
};

RunConfig run_config_from_json(const json& j) {
  static const std::set<std::string> known{"data", "output", "ensemble", "seeds", "ablate", "families", "strategies"};
  for (const auto& [key, value] : j.items())
    if (!known.contains(key)) throw config_error("run config: unknown key '" + key + "'");
  RunConfig c;
  try {
    if (j.contains("data")) c.data = j["data"].get<std::string>();
    if (j.contains("output")) c.output = j["output"].get<std::string>();
    if (j.contains("ensemble")) c.ensemble = ensemble_config_from_json(j["ensemble"]);
    if (j.contains("seeds")) c.seeds = j["seeds"].get<std::vector<std::uint64_t>>();
    if (j.contains("ablate")) c.ablate = j["ablate"].get<bool>();
    if (j.contains("families")) {
      c.families.clear();
      for (const auto& f : j["families"]) c.families.push_back(parse_family(f.get<std::string>()));
    }
    if (j.contains("strategies")) {
      c.strategies.clear();
      for (const auto& s : j["strategies"]) c.strategies.push_back(parse_strategy(s.get<std::string>()));
    }
  } catch (const json::exception& e) {
    throw config_error(std::string("run config: ") + e.what());
  }
  return c;
}

struct RunFlags {
  std::string config, data, output, family, strategy, seeds, families, strategies;
  bool ablate = false, no_pca = false, no_standardize = false, concat_all = false;
  int top_k_ah = 0, top_k_hs = 0, max_selected = 0, pca_k = 0, max_iter = 0;
  double tolerance = 0, C = 0;
};

std::string bundle_name(FeatureFamily f, Strategy s) { return to_string(f) + "_" + to_string(s); }

int cmd_run(const RunFlags& f, const CLI::App& app) {
  RunConfig rc = f.config.empty() ? RunConfig{} : run_config_from_json(read_json_file(f.config));
  auto given = [&](const char* name) { return app.count(name) > 0; };
  if (given("--data")) rc.data = f.data;
  if (given("--output")) rc.output = f.output;
  if (given("--family")) rc.ensemble.family = parse_family(f.family);
  if (given("--strategy")) rc.ensemble.strategy = parse_strategy(f.strategy);
  if (given("--seeds")) rc.seeds = parse_seeds(f.seeds);
  if (given("--ablate")) rc.ablate = true;
  if (given("--families")) rc.families = parse_list<FeatureFamily>(f.families, parse_family);
  if (given("--strategies")) rc.strategies = parse_list<Strategy>(f.strategies, parse_strategy);
  if (given("--top-k-ah")) rc.ensemble.top_k_ah = f.top_k_ah;
  if (given("--top-k-hs")) rc.ensemble.top_k_hs = f.top_k_hs;
  if (given("--max-selected")) rc.ensemble.max_selected = f.max_selected;
  if (given("--tolerance")) rc.ensemble.selection_tolerance = f.tolerance;
  if (given("--pca-k")) rc.ensemble.pca_k = f.pca_k;
  if (given("--no-pca")) rc.ensemble.hs_pca = false;
  if (given("--no-standardize")) rc.ensemble.detector.standardize = false;
  if (given("--concat-all")) rc.ensemble.concat_all_candidates = true;
  if (given("--C")) rc.ensemble.detector.C = f.C;
  if (given("--max-iter")) rc.ensemble.detector.max_iter = f.max_iter;
  if (rc.ablate && given("--family") && !given("--families")) rc.families = {rc.ensemble.family};
  if (rc.ablate && given("--strategy") && !given("--strategies")) rc.strategies = {rc.ensemble.strategy};
  rc.check();

  if (const auto problems = validate_dataset_dir(rc.data); !problems.empty()) {
    for (const auto& p : problems) std::cerr << "invalid dataset: " << p << "\n";
    return 3;
  }
  const FeatureDataset ds = load_dataset(rc.data);
  const std::string model_name = ds.manifest().model_name;
  fs::path data_path = fs::absolute(rc.data).lexically_normal();
  if (data_path.filename().empty()) data_path = data_path.parent_path();
  const std::string dataset_name = data_path.filename().string();

  // Cells of the (family, strategy) grid this run covers.
  std::vector<std::pair<FeatureFamily, Strategy>> cells;
  if (rc.ablate) {
    for (auto fam : rc.families) {
      try {
        family_ids(ds.manifest(), fam);
      } catch (const Error& e) {
        std::cerr << "skipping " << to_string(fam) << ": " << e.what() << "\n";
        continue;
      }
      for (auto s : rc.strategies) cells.emplace_back(fam, s);
    }
    if (cells.empty()) throw Error(ErrorCode::MissingRepresentation, "no requested feature family is present");
  } else {
    family_ids(ds.manifest(), rc.ensemble.family);
    cells.emplace_back(rc.ensemble.family, rc.ensemble.strategy);
  }
  std::vector<RepresentationId> grid_ids;
  for (const auto& id : ds.ids()) {
    for (const auto& [fam, s] : cells) {
      const auto ids = family_ids(ds.manifest(), fam);
      if (std::find(ids.begin(), ids.end(), id) != ids.end()) {
        grid_ids.push_back(id);
        break;
      }
    }
  }

  fs::create_directories(rc.output);
  std::vector<std::vector<ReportRow>> per_seed(rc.seeds.size());
  detail::parallel_for(rc.seeds.size(), [&](std::size_t k) {
    const auto seed = rc.seeds[k];
    const auto split = resolve_split(ds, rc.ensemble.ratios, seed);
    const auto grid = train_grid(ds, split.train, grid_ids, rc.ensemble);
    const fs::path bundle_root = rc.output / ("bundle_seed" + std::to_string(seed));
    json seed_report = json::array();
    for (const auto& [fam, strat] : cells) {
      EnsembleConfig cfg = rc.ensemble;
      cfg.family = fam;
      cfg.strategy = strat;
      const auto model = build_ensemble(grid, ds, split, cfg);
      ReportRow row{model_name, dataset_name, fam, strat, seed, evaluate_ensemble(model, ds, split.test)};
      save_bundle(model, rc.ablate ? bundle_root / bundle_name(fam, strat) : bundle_root);
      seed_report.push_back(to_json(row));
      per_seed[k].push_back(std::move(row));
    }
    write_file(rc.output / ("report_seed" + std::to_string(seed) + ".json"),
               (rc.ablate ? seed_report : seed_report.front()).dump(2) + "\n");
  });

  std::string csv = report_csv_header() + "\n";
  for (const auto& rows : per_seed)
    for (const auto& row : rows) csv += report_csv_line(row) + "\n";
  write_file(rc.output / "report.csv", csv);

  std::string summary = "family,strategy,runs,auc_mean,auc_std,auc,accuracy_mean\n";
  for (std::size_t c = 0; c < cells.size(); ++c) {
    std::vector<double> aucs, accs;
    for (const auto& rows : per_seed) {
      aucs.push_back(rows[c].report.auc);
      accs.push_back(rows[c].report.accuracy);
    }
    double acc_mean = 0.0;
    for (double a : accs) acc_mean += a / static_cast<double>(accs.size());
    std::string line = to_string(cells[c].first) + "," + to_string(cells[c].second) + "," + std::to_string(aucs.size()) + ",";
    if (aucs.size() >= 2) {
      const auto s = aggregate_values(aucs);
      line += json(s.mean).dump() + "," + json(s.std).dump() + "," + s.formatted();
    } else {
      char buf[32];
      std::snprintf(buf, sizeof buf, "%.3f", aucs.front());
      line += json(aucs.front()).dump() + ",," + buf;
    }
    line += "," + json(acc_mean).dump();
    summary += line + "\n";
    std::cout << line << "\n";
  }
  write_file(rc.output / "summary.csv", summary);
  return 0;
}

// ---------------------------------------------------------------------------
// synth

struct SynthFlags {
  std::string preset = "planted-disjoint", output, config, complementarity;
  std::uint64_t seed = 0;
  std::size_t n_samples = 0;
  double rate = 0, noise_scale = 0;
  int layers = 0, heads = 0, head_dim = 0, hidden_dim = 0;
};

int cmd_synth(const SynthFlags& f, const CLI::App& app) {
  auto given = [&](const char* name) { return app.count(name) > 0; };
  SynthConfig c = f.config.empty() ? synth_preset(f.preset) : synth_config_from_json(read_json_file(f.config));
  if (given("--seed")) c.seed = f.seed;
  if (given("--n-samples")) c.n_samples = f.n_samples;
  if (given("--hallucination-rate")) c.hallucination_rate = f.rate;
  if (given("--noise-scale")) c.noise_scale = f.noise_scale;
  if (given("--layers")) c.num_layers = f.layers;
  if (given("--heads")) c.num_heads = f.heads;
  if (given("--head-dim")) c.head_dim = f.head_dim;
  if (given("--hidden-dim")) c.hidden_dim = f.hidden_dim;
  if (given("--complementarity")) {
    if (f.complementarity == "shared") c.complementarity = Complementarity::Shared;
    else if (f.complementarity == "disjoint") c.complementarity = Complementarity::Disjoint;
    else throw config_error("complementarity: expected shared or disjoint, got '" + f.complementarity + "'");
  }
  c.check();
  write_synth(c, f.output);
  std::cout << "wrote " << c.n_samples << " samples to " << f.output << "\n";
  return 0;
}

// ---------------------------------------------------------------------------
// bench

struct BenchFlags {
  std::string bundle, data, output;
  std::size_t batch = 1;
  int reps = 10, warmup = 2;
};

int cmd_bench(const BenchFlags& f) {
  std::vector<fs::path> bundles;
  if (fs::exists(fs::path(f.bundle) / "ensemble.json")) {
    bundles.push_back(f.bundle);
  } else if (fs::is_directory(f.bundle)) {
    for (const auto& e : fs::directory_iterator(f.bundle))
      if (fs::exists(e.path() / "ensemble.json")) bundles.push_back(e.path());
    std::sort(bundles.begin(), bundles.end());
  }
  if (bundles.empty()) throw Error(ErrorCode::MissingArtifact, "no ensemble bundle under " + f.bundle);
  if (f.reps < 2) throw config_error("reps: at least 2 repetitions are needed for a spread");
  if (f.batch < 1) throw config_error("batch: must be at least 1");

  std::vector<std::size_t> rows(f.batch);
  for (std::size_t i = 0; i < rows.size(); ++i) rows[i] = i;

  json out = json::array();
  std::cout << "bundle,family,strategy,detectors,feature_load_s,feature_load_std,detect_s,detect_std,detect_cv,total_s\n";
  for (const auto& dir : bundles) {
    const auto model = load_bundle(dir);
    const auto inputs = model.inputs();
    const auto load = time_detection([&] { (void)load_rows(f.data, inputs, rows); }, f.reps, f.warmup);
    const auto subset = load_rows(f.data, inputs, rows);
    std::vector<std::size_t> local(rows.size());
    std::iota(local.begin(), local.end(), std::size_t{0});
    const auto detect = time_detection([&] { (void)predict_ensemble(model, subset, local); }, f.reps, f.warmup);
    char line[512];
    std::snprintf(line, sizeof line, "%s,%s,%s,%zu,%.3e,%.1e,%.3e,%.1e,%.3f,%.3e", dir.filename().string().c_str(),
                  to_string(model.config.family).c_str(), to_string(model.config.strategy).c_str(), model.selected.size(),
                  load.mean_s, load.std_s, detect.mean_s, detect.std_s, detect.cv, load.mean_s + detect.mean_s);
    std::cout << line << "\n";
    out.push_back({{"bundle", dir.filename().string()},
                   {"family", to_string(model.config.family)},
                   {"strategy", to_string(model.config.strategy)},
                   {"detectors", model.selected.size()},
                   {"batch", f.batch},
                   {"repetitions", f.reps},
                   {"feature_load_s", {{"mean", load.mean_s}, {"std", load.std_s}, {"cv", load.cv}}},
                   {"detect_s", {{"mean", detect.mean_s}, {"std", detect.std_s}, {"cv", detect.cv}}},
                   {"total_s", load.mean_s + detect.mean_s}});
  }
  if (!f.output.empty()) write_file(f.output, out.dump(2) + "\n");
  return 0;
}

// ---------------------------------------------------------------------------
// validate

int cmd_validate(const std::string& path) {
  const auto problems = validate_dataset_dir(path);
  if (problems.empty()) {
    std::cout << path << ": ok\n";
    return 0;
  }
  for (const auto& p : problems) std::cout << path << ": " << p << "\n";
  return 3;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Ensemble hallucination detection over internal model representations"};
  app.require_subcommand(1);

  SynthFlags sf;
  auto* synth = app.add_subcommand("synth", "Generate a planted-signal dataset directory");
  synth->add_option("--preset", sf.preset, "planted-single, planted-disjoint, planted-shared or null")->capture_default_str();
  synth->add_option("--config", sf.config, "Synth config JSON (replaces the preset)");
  synth->add_option("--seed", sf.seed);
  synth->add_option("-o,--output", sf.output, "Output directory")->required();
  synth->add_option("--n-samples", sf.n_samples);
  synth->add_option("--hallucination-rate,--rate", sf.rate);
  synth->add_option("--noise-scale", sf.noise_scale);
  synth->add_option("--layers", sf.layers);
  synth->add_option("--heads", sf.heads);
  synth->add_option("--head-dim", sf.head_dim);
  synth->add_option("--hidden-dim", sf.hidden_dim);
  synth->add_option("--complementarity", sf.complementarity, "shared or disjoint");

  RunFlags rf;
  auto* run = app.add_subcommand("run", "Train, select, combine and evaluate for each seed");
  run->add_option("--config", rf.config, "Run config JSON; flags override its fields");
  run->add_option("--data", rf.data, "Dataset directory");
  run->add_option("-o,--output", rf.output, "Output directory");
  run->add_option("--family", rf.family, "AH, HS or MIX");
  run->add_option("--strategy", rf.strategy, "top1, concat, average, weighted or stack");
  run->add_option("--seeds", rf.seeds, "0..4 or a comma list");
  run->add_flag("--ablate", rf.ablate, "Evaluate every family x strategy cell");
  run->add_option("--families", rf.families, "Ablation families, comma separated");
  run->add_option("--strategies", rf.strategies, "Ablation strategies, comma separated");
  run->add_option("--top-k-ah", rf.top_k_ah);
  run->add_option("--top-k-hs", rf.top_k_hs);
  run->add_option("--max-selected", rf.max_selected);
  run->add_option("--tolerance", rf.tolerance, "Minimum validation AUC gain per greedy step");
  run->add_option("--pca-k", rf.pca_k, "Hidden-state PCA dimension");
  run->add_flag("--no-pca", rf.no_pca);
  run->add_flag("--no-standardize", rf.no_standardize);
  run->add_flag("--concat-all", rf.concat_all, "Concat over all ranked candidates");
  run->add_option("--C", rf.C, "Inverse L2 strength");
  run->add_option("--max-iter", rf.max_iter);

  BenchFlags bf;
  auto* bench = app.add_subcommand("bench", "Time feature loading and detection for saved bundles");
  bench->add_option("--bundle", bf.bundle, "Bundle directory, or a directory of bundles")->required();
  bench->add_option("--data", bf.data, "Dataset directory")->required();
  bench->add_option("--batch", bf.batch)->capture_default_str();
  bench->add_option("--reps", bf.reps)->capture_default_str();
  bench->add_option("--warmup", bf.warmup)->capture_default_str();
  bench->add_option("-o,--output", bf.output, "Write timings as JSON");

  std::string validate_path;
  auto* validate = app.add_subcommand("validate", "Check a dataset directory");
  validate->add_option("path", validate_path)->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    if (*synth) return cmd_synth(sf, *synth);
    if (*run) return cmd_run(rf, *run);
    if (*bench) return cmd_bench(bf);
    if (*validate) return cmd_validate(validate_path);
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return exit_code(e.code());
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 1;
}
