#include <sys/wait.h>

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "doctest.h"
#include "ensemhal/feature_store.hpp"
#include "ensemhal/synth.hpp"
#include "json.hpp"

using namespace ensemhal;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

const fs::path kRoot = fs::temp_directory_path() / "ensemhal_cli_test";

struct Result {
  int code;
  std::string output;
};

Result cli(const std::string& args) {
  fs::create_directories(kRoot);
  const fs::path log = kRoot / "last.log";
  const std::string cmd = std::string(ENSEMHAL_CLI) + " " + args + " > " + log.string() + " 2>&1";
  const int status = std::system(cmd.c_str());
  std::ifstream in(log);
  std::stringstream ss;
  ss << in.rdbuf();
  return {WIFEXITED(status) ? WEXITSTATUS(status) : -1, ss.str()};
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::map<std::string, std::string> tree_bytes(const fs::path& dir) {
  std::map<std::string, std::string> out;
  for (const auto& e : fs::recursive_directory_iterator(dir))
    if (e.is_regular_file()) out[fs::relative(e.path(), dir).string()] = slurp(e.path());
  return out;
}

std::vector<std::string> lines(const std::string& text) {
  std::vector<std::string> out;
  std::stringstream ss(text);
  for (std::string l; std::getline(ss, l);) out.push_back(l);
  return out;
}

fs::path fresh(const std::string& name) {
  const auto p = kRoot / name;
  fs::remove_all(p);
  return p;
}

// Small planted dataset written through the library.
fs::path small_data(const std::string& name, std::size_t n = 400) {
  const auto dir = fresh(name);
  auto c = synth_preset("planted-disjoint");
  c.n_samples = n;
  write_synth(c, dir);
  return dir;
}

}  // namespace

TEST_CASE("synth writes a valid, reproducible directory") {
  const auto a = fresh("synth_a"), b = fresh("synth_b");
  CHECK(cli("synth --preset planted-disjoint --seed 0 -o " + a.string()).code == 0);
  CHECK(cli("validate " + a.string()).code == 0);
  CHECK(cli("synth --preset planted-disjoint --seed 0 -o " + b.string()).code == 0);
  CHECK(tree_bytes(a) == tree_bytes(b));

  const auto bad = cli("synth --preset planted-single --rate 1.5 -o " + fresh("synth_bad").string());
  CHECK(bad.code == 2);
  CHECK(bad.output.find("hallucination_rate") != std::string::npos);
  CHECK(cli("synth --preset nonsense -o " + fresh("synth_bad").string()).code == 2);
  CHECK(cli("synth --complementarity sideways -o " + fresh("synth_bad").string()).code == 2);
}

TEST_CASE("run writes per-seed reports, bundles and an aggregate row") {
  const auto data = small_data("run_data");
  const auto out = fresh("run_out");
  const auto r = cli("run --data " + data.string() + " --family HS --strategy stack --seeds 0..4 -o " + out.string());
  REQUIRE(r.code == 0);

  std::vector<double> aucs;
  for (int s = 0; s < 5; ++s) {
    CHECK(fs::exists(out / ("bundle_seed" + std::to_string(s)) / "ensemble.json"));
    std::ifstream in(out / ("report_seed" + std::to_string(s) + ".json"));
    const auto j = json::parse(in);
    CHECK(j["seed"] == s);
    CHECK(j["family"] == "HS");
    aucs.push_back(j["auc"]);
  }
  double mean = 0, var = 0;
  for (double a : aucs) mean += a / 5;
  for (double a : aucs) var += (a - mean) * (a - mean) / 4;

  const auto summary = lines(slurp(out / "summary.csv"));
  REQUIRE(summary.size() == 2);
  CHECK(summary[0] == "family,strategy,runs,auc_mean,auc_std,auc,accuracy_mean");
  std::stringstream row(summary[1]);
  std::vector<std::string> cells;
  for (std::string c; std::getline(row, c, ',');) cells.push_back(c);
  REQUIRE(cells.size() == 7);
  CHECK(cells[0] == "HS");
  CHECK(cells[1] == "stack");
  CHECK(cells[2] == "5");
  CHECK(std::abs(std::stod(cells[3]) - mean) < 1e-12);
  CHECK(std::abs(std::stod(cells[4]) - std::sqrt(var)) < 1e-12);
  CHECK(lines(slurp(out / "report.csv")).size() == 6);

  const auto again = fresh("run_out_again");
  REQUIRE(cli("run --data " + data.string() + " --family HS --strategy stack --seeds 0..4 -o " + again.string()).code == 0);
  CHECK(tree_bytes(out) == tree_bytes(again));
}

TEST_CASE("run configuration file with flag overrides") {
  const auto data = small_data("cfg_data");
  const auto out = fresh("cfg_out");
  const auto cfg = kRoot / "run.json";
  std::ofstream(cfg) << json{{"data", data.string()},
                             {"seeds", {3, 7}},
                             {"ensemble", {{"family", "AH"}, {"strategy", "weighted"}, {"max_selected", 2}}}}
                            .dump();
  REQUIRE(cli("run --config " + cfg.string() + " --strategy average -o " + out.string()).code == 0);
  std::ifstream in(out / "report_seed7.json");
  const auto j = json::parse(in);
  CHECK(j["strategy"] == "average");
  CHECK(j["family"] == "AH");
  std::ifstream bundle(out / "bundle_seed3" / "ensemble.json");
  CHECK(json::parse(bundle)["selected"].size() <= 2);

  std::ofstream(cfg) << json{{"data", data.string()}, {"seedz", {1}}}.dump();
  CHECK(cli("run --config " + cfg.string() + " -o " + out.string()).code == 2);
}

TEST_CASE("ablation covers the family x strategy grid") {
  const auto data = small_data("abl_data");
  const auto out = fresh("abl_out");
  REQUIRE(cli("run --data " + data.string() + " --ablate --seeds 0,1 -o " + out.string()).code == 0);
  CHECK(lines(slurp(out / "report.csv")).size() == 1 + 15 * 2);
  CHECK(lines(slurp(out / "summary.csv")).size() == 1 + 15);
  for (const char* fam : {"AH", "HS", "MIX"})
    for (const char* s : {"top1", "concat", "average", "weighted", "stack"})
      CHECK(fs::exists(out / "bundle_seed1" / (std::string(fam) + "_" + s) / "ensemble.json"));
  std::ifstream in(out / "report_seed0.json");
  CHECK(json::parse(in).size() == 15);
}

TEST_CASE("run exit codes") {
  const auto data = small_data("exit_data");
  const auto out = fresh("exit_out");
  CHECK(cli("run --data " + data.string() + " --seeds 0,0 -o " + out.string()).code == 2);
  CHECK(cli("run --data " + data.string() + " --seeds two -o " + out.string()).code == 2);
  CHECK(cli("run --data " + data.string() + " --strategy boosting -o " + out.string()).code == 2);
  CHECK(cli("run --data " + data.string() + " --max-selected 0 -o " + out.string()).code == 2);
  CHECK(cli("run --data " + data.string() + " --no-such-flag -o " + out.string()).code == 2);
  CHECK(cli("run --data " + (kRoot / "missing").string() + " -o " + out.string()).code == 3);

  // Attention heads only.
  const auto full = load_dataset(data);
  Manifest m = full.manifest();
  std::erase_if(m.representations, [](const RepresentationSpec& s) { return !s.id.is_attention(); });
  std::map<RepresentationId, FloatMatrix> features;
  for (const auto& s : m.representations) features[s.id] = full.features(s.id);
  const auto ah_only = fresh("ah_only");
  save_dataset(FeatureDataset(m, full.labels(), features), ah_only);
  CHECK(cli("run --data " + ah_only.string() + " --family MIX --strategy concat -o " + out.string()).code == 3);
  CHECK(cli("run --data " + ah_only.string() + " --family AH --seeds 0 -o " + out.string()).code == 0);

  // A stored split whose first validation half holds only positives.
  SplitAssignment split;
  for (std::size_t i = 0; i < full.size(); ++i) {
    if (full.labels()[i] == 1 && split.val1.size() < 20) split.val1.push_back(i);
    else if (i % 10 == 0) split.val2.push_back(i);
    else if (i % 10 == 1) split.test.push_back(i);
    else split.train.push_back(i);
  }
  const auto one_class = fresh("one_class");
  save_dataset(FeatureDataset(full.manifest(), full.labels(), [&] {
                 std::map<RepresentationId, FloatMatrix> all;
                 for (const auto& id : full.ids()) all[id] = full.features(id);
                 return all;
               }(), split),
               one_class);
  CHECK(cli("validate " + one_class.string()).code == 0);
  CHECK(cli("run --data " + one_class.string() + " --seeds 0 -o " + out.string()).code == 4);
}

TEST_CASE("validate reports broken files") {
  const auto data = small_data("val_data", 100);
  CHECK(cli("validate " + data.string()).code == 0);

  const auto truncated = fresh("val_trunc");
  fs::copy(data, truncated, fs::copy_options::recursive);
  const auto file = feature_file(truncated, RepresentationId::attention(0, 1));
  fs::resize_file(file, fs::file_size(file) - 8);
  const auto r = cli("validate " + truncated.string());
  CHECK(r.code == 3);
  CHECK(r.output.find("ah_L0_H1.bin") != std::string::npos);
  CHECK(r.output.find(std::to_string(100 * 16 * 4)) != std::string::npos);

  const auto bad_labels = fresh("val_labels");
  fs::copy(data, bad_labels, fs::copy_options::recursive);
  {
    std::fstream f(bad_labels / "labels.bin", std::ios::in | std::ios::out | std::ios::binary);
    f.seekp(5);
    f.put('\x02');
  }
  CHECK(cli("validate " + bad_labels.string()).code == 3);
  CHECK(cli("validate " + (kRoot / "nowhere").string()).code == 3);
}

TEST_CASE("bench times feature loading and detection") {
  const auto data = small_data("bench_data", 600);
  const auto out = fresh("bench_out");
  REQUIRE(cli("run --data " + data.string() + " --ablate --families MIX --strategies top1,stack --max-selected 10 "
              "--tolerance -1 --seeds 0 -o " + out.string())
              .code == 0);
  const auto timing = kRoot / "bench.json";
  const auto r = cli("bench --bundle " + (out / "bundle_seed0").string() + " --data " + data.string() +
                     " --reps 50 -o " + timing.string());
  REQUIRE(r.code == 0);
  std::ifstream in(timing);
  const auto j = json::parse(in);
  REQUIRE(j.size() == 2);
  std::map<std::string, json> by_strategy;
  for (const auto& row : j) by_strategy[row["strategy"]] = row;
  CHECK(by_strategy["stack"]["detectors"] == 10);
  CHECK(by_strategy["stack"]["detect_s"]["mean"].get<double>() < 1e-3);
  CHECK(by_strategy["stack"]["detect_s"]["std"].get<double>() >= 0.0);
  CHECK(by_strategy["top1"]["detect_s"]["mean"].get<double>() <= by_strategy["stack"]["detect_s"]["mean"].get<double>());

  CHECK(cli("bench --bundle " + (out / "bundle_seed0" / "MIX_stack").string() + " --data " + data.string()).code == 0);
  CHECK(cli("bench --bundle " + (kRoot / "no_bundle").string() + " --data " + data.string()).code == 5);
}
