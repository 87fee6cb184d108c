#include "ensemhal/feature_store.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>
#include <set>
#include <sstream>

#include "ensemhal/error.hpp"
#include "json.hpp"

namespace ensemhal {

namespace fs = std::filesystem;
using nlohmann::json;

static_assert(std::endian::native == std::endian::little, "feature files are little-endian float32");

// ---------------------------------------------------------------------------
// Manifest

const RepresentationSpec* Manifest::find(const RepresentationId& id) const {
  for (const auto& spec : representations)
    if (spec.id == id) return &spec;
  return nullptr;
}

void Manifest::check() const {
  auto fail = [](const std::string& msg) { return Error(ErrorCode::FormatError, "manifest: " + msg); };
  if (num_layers <= 0 || num_heads <= 0 || head_dim <= 0 || hidden_dim <= 0)
    throw fail("num_layers, num_heads, head_dim and hidden_dim must be positive");
  std::set<RepresentationId> seen;
  for (const auto& spec : representations) {
    const auto& id = spec.id;
    const std::string name = to_string(id);
    if (id.layer < 0 || id.layer >= num_layers) throw fail(name + " layer out of range");
    if (id.is_attention() && (id.head < 0 || id.head >= num_heads)) throw fail(name + " head out of range");
    if (!id.is_attention() && id.head != 0) throw fail(name + " hidden state with nonzero head");
    if (spec.dim <= 0) throw fail(name + " has non-positive dim");
    if (!seen.insert(id).second) throw fail(name + " listed twice");
  }
}

// ---------------------------------------------------------------------------
// Splits

void SplitAssignment::check_partition(std::size_t n) const {
  std::vector<int> hits(n, 0);
  for (const auto* part : {&train, &val1, &val2, &test}) {
    for (std::size_t i : *part) {
      if (i >= n) throw Error(ErrorCode::DegenerateDataset, "split index " + std::to_string(i) + " out of range");
      ++hits[i];
    }
  }
  for (std::size_t i = 0; i < n; ++i)
    if (hits[i] != 1)
      throw Error(ErrorCode::DegenerateDataset,
                  "sample " + std::to_string(i) + " appears in " + std::to_string(hits[i]) + " splits");
}

namespace {

// Largest-remainder apportionment of `count` over three ratios; ties go to
// the earlier slot so leftovers favour train.
std::array<std::size_t, 3> apportion(std::size_t count, const std::array<double, 3>& ratios) {
  std::array<std::size_t, 3> out{};
  std::array<double, 3> remainder{};
  std::size_t used = 0;
  for (std::size_t k = 0; k < 3; ++k) {
    const double quota = static_cast<double>(count) * ratios[k];
    out[k] = static_cast<std::size_t>(std::floor(quota + 1e-9));
    remainder[k] = quota - static_cast<double>(out[k]);
    used += out[k];
  }
  std::array<std::size_t, 3> order{0, 1, 2};
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return remainder[a] > remainder[b] + 1e-12; });
  for (std::size_t k = 0; used < count; k = (k + 1) % 3, ++used) ++out[order[k]];
  return out;
}

}  // namespace

SplitAssignment stratified_split(std::span<const std::uint8_t> labels, const SplitRatios& ratios,
                                 std::uint64_t seed) {
  if (ratios.train <= 0 || ratios.val <= 0 || ratios.test <= 0 ||
      std::abs(ratios.train + ratios.val + ratios.test - 1.0) > 1e-9)
    throw Error(ErrorCode::ConfigError, "split ratios must be positive and sum to 1");
  if (labels.size() < 20)
    throw Error(ErrorCode::DegenerateDataset, "need at least 20 samples, got " + std::to_string(labels.size()));

  std::array<std::vector<std::size_t>, 2> members;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] > 1) throw Error(ErrorCode::FormatError, "label must be 0 or 1");
    members[labels[i]].push_back(i);
  }
  for (int c = 0; c < 2; ++c)
    if (members[c].size() < 4)
      throw Error(ErrorCode::DegenerateDataset, "class " + std::to_string(c) + " has " +
                                                    std::to_string(members[c].size()) +
                                                    " samples; at least 4 are needed to populate every split");

  std::mt19937_64 rng(seed);
  SplitAssignment out;
  for (int c = 0; c < 2; ++c) {
    auto& idx = members[c];
    std::shuffle(idx.begin(), idx.end(), rng);
    auto counts = apportion(idx.size(), {ratios.train, ratios.val, ratios.test});
    while (counts[1] < 2) --counts[0], ++counts[1];
    while (counts[2] < 1) --counts[0], ++counts[2];
    // Odd validation counts: class 0 favours val1, class 1 favours val2.
    const std::size_t val1 = c == 0 ? (counts[1] + 1) / 2 : counts[1] / 2;

    auto it = idx.begin();
    auto take = [&](std::vector<std::size_t>& dst, std::size_t k) {
      dst.insert(dst.end(), it, it + static_cast<std::ptrdiff_t>(k));
      it += static_cast<std::ptrdiff_t>(k);
    };
    take(out.train, counts[0]);
    take(out.val1, val1);
    take(out.val2, counts[1] - val1);
    take(out.test, counts[2]);
  }
  for (auto* part : {&out.train, &out.val1, &out.val2, &out.test}) std::sort(part->begin(), part->end());
  return out;
}

// ---------------------------------------------------------------------------
// Token averaging

std::vector<double> token_average(const TokenTrace& trace) {
  if (trace.vectors.empty()) throw Error(ErrorCode::EmptyTrace, to_string(trace.repr) + " has zero tokens");
  const std::size_t d = trace.vectors.front().size();
  std::vector<double> sum(d, 0.0);
  for (const auto& v : trace.vectors) {
    if (v.size() != d) throw Error(ErrorCode::DimensionMismatch, to_string(trace.repr) + " token vectors differ in length");
    for (std::size_t j = 0; j < d; ++j) sum[j] += v[j];
  }
  const double inv_t = 1.0 / static_cast<double>(trace.vectors.size());
  for (double& s : sum) s *= inv_t;
  return sum;
}

// ---------------------------------------------------------------------------
// FeatureDataset

FeatureDataset::FeatureDataset(Manifest manifest, Labels labels, std::map<RepresentationId, FloatMatrix> features,
                               std::optional<SplitAssignment> splits)
    : manifest_(std::move(manifest)), labels_(std::move(labels)), features_(std::move(features)),
      splits_(std::move(splits)) {
  manifest_.check();
  if (manifest_.num_samples != labels_.size())
    throw Error(ErrorCode::FormatError, "manifest num_samples does not match label count");
  for (auto y : labels_)
    if (y > 1) throw Error(ErrorCode::FormatError, "labels must be 0 or 1");
  for (const auto& spec : manifest_.representations) {
    auto it = features_.find(spec.id);
    if (it == features_.end())
      throw Error(ErrorCode::MissingRepresentation, to_string(spec.id) + " listed in manifest has no features");
    if (static_cast<std::size_t>(it->second.rows()) != labels_.size() || it->second.cols() != spec.dim)
      throw Error(ErrorCode::FormatError, to_string(spec.id) + " matrix shape does not match manifest");
  }
  if (features_.size() != manifest_.representations.size())
    throw Error(ErrorCode::FormatError, "features present that the manifest does not list");
  if (splits_) splits_->check_partition(labels_.size());
}

const FloatMatrix& FeatureDataset::features(const RepresentationId& id) const {
  auto it = features_.find(id);
  if (it == features_.end()) throw Error(ErrorCode::MissingRepresentation, to_string(id) + " not in dataset");
  return it->second;
}

std::vector<RepresentationId> FeatureDataset::ids() const {
  std::vector<RepresentationId> out;
  out.reserve(features_.size());
  for (const auto& [id, m] : features_) out.push_back(id);
  return out;
}

Matrix FeatureDataset::rows(const RepresentationId& id, std::span<const std::size_t> index) const {
  const auto& src = features(id);
  Matrix out(static_cast<Eigen::Index>(index.size()), src.cols());
  for (std::size_t r = 0; r < index.size(); ++r)
    out.row(static_cast<Eigen::Index>(r)) = src.row(static_cast<Eigen::Index>(index[r])).cast<double>();
  return out;
}

Labels FeatureDataset::labels_at(std::span<const std::size_t> index) const {
  Labels out;
  out.reserve(index.size());
  for (auto i : index) out.push_back(labels_.at(i));
  return out;
}

FeatureDataset dataset_from_traces(Manifest manifest, Labels labels,
                                   const std::vector<std::vector<TokenTrace>>& traces) {
  if (traces.size() != labels.size()) throw Error(ErrorCode::FormatError, "one trace set per sample required");
  std::map<RepresentationId, FloatMatrix> features;
  const auto n = static_cast<Eigen::Index>(labels.size());
  for (const auto& spec : manifest.representations) features[spec.id] = FloatMatrix::Zero(n, spec.dim);
  for (std::size_t i = 0; i < traces.size(); ++i) {
    if (traces[i].size() != manifest.representations.size())
      throw Error(ErrorCode::MissingRepresentation, "sample " + std::to_string(i) + " lacks some representations");
    for (const auto& trace : traces[i]) {
      const auto* spec = manifest.find(trace.repr);
      if (!spec) throw Error(ErrorCode::MissingRepresentation, to_string(trace.repr) + " not in manifest");
      auto mean = token_average(trace);
      if (static_cast<int>(mean.size()) != spec->dim)
        throw Error(ErrorCode::DimensionMismatch, to_string(trace.repr) + " trace dimension differs from manifest");
      auto& m = features[trace.repr];
      for (int j = 0; j < spec->dim; ++j) m(static_cast<Eigen::Index>(i), j) = static_cast<float>(mean[j]);
    }
  }
  manifest.num_samples = labels.size();
  return FeatureDataset(std::move(manifest), std::move(labels), std::move(features));
}

// ---------------------------------------------------------------------------
// On-disk format

fs::path feature_file(const fs::path& dir, const RepresentationId& id) {
  return dir / "features" / (to_string(id) + ".bin");
}

namespace {

json manifest_to_json(const Manifest& m) {
  json reprs = json::array();
  for (const auto& spec : m.representations)
    reprs.push_back({{"kind", std::string(kind_tag(spec.id.kind))},
                     {"layer", spec.id.layer},
                     {"head", spec.id.head},
                     {"dim", spec.dim}});
  return {{"model_name", m.model_name}, {"num_layers", m.num_layers}, {"num_heads", m.num_heads},
          {"head_dim", m.head_dim},     {"hidden_dim", m.hidden_dim}, {"num_samples", m.num_samples},
          {"representations", reprs}};
}

Manifest manifest_from_json(const json& j) {
  Manifest m;
  try {
    m.model_name = j.at("model_name").get<std::string>();
    m.num_layers = j.at("num_layers").get<int>();
    m.num_heads = j.at("num_heads").get<int>();
    m.head_dim = j.at("head_dim").get<int>();
    m.hidden_dim = j.at("hidden_dim").get<int>();
    m.num_samples = j.at("num_samples").get<std::size_t>();
    for (const auto& r : j.at("representations")) {
      const auto kind = r.at("kind").get<std::string>();
      RepresentationSpec spec;
      if (kind == "ah")
        spec.id = RepresentationId::attention(r.at("layer").get<int>(), r.at("head").get<int>());
      else if (kind == "hs")
        spec.id = {ReprKind::HiddenState, r.at("layer").get<int>(), r.value("head", 0)};
      else
        throw Error(ErrorCode::FormatError, "manifest: unknown representation kind '" + kind + "'");
      spec.dim = r.at("dim").get<int>();
      m.representations.push_back(spec);
    }
  } catch (const json::exception& e) {
    throw Error(ErrorCode::FormatError, std::string("manifest: ") + e.what());
  }
  return m;
}

json splits_to_json(const SplitAssignment& s) {
  return {{"train", s.train}, {"val1", s.val1}, {"val2", s.val2}, {"test", s.test}};
}

SplitAssignment splits_from_json(const json& j) {
  SplitAssignment s;
  try {
    s.train = j.at("train").get<std::vector<std::size_t>>();
    s.val1 = j.at("val1").get<std::vector<std::size_t>>();
    s.val2 = j.at("val2").get<std::vector<std::size_t>>();
    s.test = j.at("test").get<std::vector<std::size_t>>();
  } catch (const json::exception& e) {
    throw Error(ErrorCode::FormatError, std::string("splits.json: ") + e.what());
  }
  return s;
}

json read_json(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::FormatError, "cannot open " + path.string());
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw Error(ErrorCode::FormatError, path.string() + ": " + e.what());
  }
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::FormatError, "cannot write " + path.string());
  out << text;
}

std::uintmax_t expected_bytes(std::size_t n, int dim) {
  return static_cast<std::uintmax_t>(n) * static_cast<std::uintmax_t>(dim) * sizeof(float);
}

}  // namespace

void save_dataset(const FeatureDataset& ds, const fs::path& dir) {
  fs::create_directories(dir / "features");
  write_text(dir / "manifest.json", manifest_to_json(ds.manifest()).dump(2) + "\n");
  {
    std::ofstream out(dir / "labels.bin", std::ios::binary | std::ios::trunc);
    out.write(reinterpret_cast<const char*>(ds.labels().data()), static_cast<std::streamsize>(ds.labels().size()));
    if (!out) throw Error(ErrorCode::FormatError, "cannot write labels.bin");
  }
  for (const auto& spec : ds.manifest().representations) {
    const auto& m = ds.features(spec.id);
    std::ofstream out(feature_file(dir, spec.id), std::ios::binary | std::ios::trunc);
    out.write(reinterpret_cast<const char*>(m.data()), static_cast<std::streamsize>(m.size() * sizeof(float)));
    if (!out) throw Error(ErrorCode::FormatError, "cannot write " + feature_file(dir, spec.id).string());
  }
  if (ds.splits())
    write_text(dir / "splits.json", splits_to_json(*ds.splits()).dump() + "\n");
  else if (fs::exists(dir / "splits.json"))
    fs::remove(dir / "splits.json");
}

FeatureDataset load_dataset(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw Error(ErrorCode::FormatError, dir.string() + " is not a directory");
  Manifest manifest = manifest_from_json(read_json(dir / "manifest.json"));
  manifest.check();
  const std::size_t n = manifest.num_samples;

  const fs::path label_path = dir / "labels.bin";
  if (!fs::exists(label_path)) throw Error(ErrorCode::FormatError, "missing labels.bin");
  if (fs::file_size(label_path) != n)
    throw Error(ErrorCode::FormatError, "labels.bin holds " + std::to_string(fs::file_size(label_path)) +
                                            " bytes, expected " + std::to_string(n));
  Labels labels(n);
  {
    std::ifstream in(label_path, std::ios::binary);
    in.read(reinterpret_cast<char*>(labels.data()), static_cast<std::streamsize>(n));
    if (!in) throw Error(ErrorCode::FormatError, "cannot read labels.bin");
  }
  for (std::size_t i = 0; i < n; ++i)
    if (labels[i] > 1)
      throw Error(ErrorCode::FormatError, "labels.bin row " + std::to_string(i) + " is not 0x00 or 0x01");

  std::map<RepresentationId, FloatMatrix> features;
  for (const auto& spec : manifest.representations) {
    const fs::path path = feature_file(dir, spec.id);
    if (!fs::exists(path)) throw Error(ErrorCode::MissingRepresentation, "missing " + path.string());
    const auto want = expected_bytes(n, spec.dim);
    if (fs::file_size(path) != want)
      throw Error(ErrorCode::FormatError, path.string() + " holds " + std::to_string(fs::file_size(path)) +
                                              " bytes, expected " + std::to_string(want));
    FloatMatrix m(static_cast<Eigen::Index>(n), spec.dim);
    std::ifstream in(path, std::ios::binary);
    in.read(reinterpret_cast<char*>(m.data()), static_cast<std::streamsize>(want));
    if (!in) throw Error(ErrorCode::FormatError, "cannot read " + path.string());
    features.emplace(spec.id, std::move(m));
  }

  std::optional<SplitAssignment> splits;
  if (fs::exists(dir / "splits.json")) {
    splits = splits_from_json(read_json(dir / "splits.json"));
    try {
      splits->check_partition(n);
    } catch (const Error& e) {
      throw Error(ErrorCode::FormatError, std::string("splits.json: ") + e.what());
    }
  }
  return FeatureDataset(std::move(manifest), std::move(labels), std::move(features), std::move(splits));
}

FeatureDataset load_rows(const fs::path& dir, std::span<const RepresentationId> ids, std::span<const std::size_t> rows) {
  Manifest full = manifest_from_json(read_json(dir / "manifest.json"));
  full.check();
  const std::size_t n = full.num_samples;
  for (auto r : rows)
    if (r >= n) throw Error(ErrorCode::DimensionMismatch, "row " + std::to_string(r) + " out of range");

  Labels all(n);
  {
    std::ifstream in(dir / "labels.bin", std::ios::binary);
    in.read(reinterpret_cast<char*>(all.data()), static_cast<std::streamsize>(n));
    if (!in) throw Error(ErrorCode::FormatError, "cannot read labels.bin");
  }
  Labels labels;
  for (auto r : rows) labels.push_back(all[r]);

  Manifest manifest = full;
  manifest.num_samples = rows.size();
  manifest.representations.clear();
  std::map<RepresentationId, FloatMatrix> features;
  for (const auto& id : ids) {
    const RepresentationSpec* spec = full.find(id);
    if (!spec) throw Error(ErrorCode::MissingRepresentation, to_string(id) + " not in manifest");
    manifest.representations.push_back(*spec);
    std::ifstream in(feature_file(dir, id), std::ios::binary);
    if (!in) throw Error(ErrorCode::MissingRepresentation, "missing " + feature_file(dir, id).string());
    FloatMatrix m(static_cast<Eigen::Index>(rows.size()), spec->dim);
    const auto row_bytes = static_cast<std::streamoff>(spec->dim * sizeof(float));
    for (std::size_t k = 0; k < rows.size(); ++k) {
      in.seekg(static_cast<std::streamoff>(rows[k]) * row_bytes);
      in.read(reinterpret_cast<char*>(m.row(static_cast<Eigen::Index>(k)).data()), row_bytes);
    }
    if (!in) throw Error(ErrorCode::FormatError, feature_file(dir, id).string() + " is shorter than the manifest says");
    features.emplace(id, std::move(m));
  }
  return FeatureDataset(std::move(manifest), std::move(labels), std::move(features));
}

std::vector<std::string> validate_dataset_dir(const fs::path& dir) {
  std::vector<std::string> problems;
  if (!fs::is_directory(dir)) return {dir.string() + ": not a directory"};

  Manifest manifest;
  try {
    manifest = manifest_from_json(read_json(dir / "manifest.json"));
    manifest.check();
  } catch (const Error& e) {
    problems.emplace_back(e.what());
    return problems;
  }
  const std::size_t n = manifest.num_samples;

  const fs::path label_path = dir / "labels.bin";
  if (!fs::exists(label_path)) {
    problems.push_back("labels.bin: missing");
  } else if (fs::file_size(label_path) != n) {
    problems.push_back("labels.bin: " + std::to_string(fs::file_size(label_path)) + " bytes, expected " +
                       std::to_string(n));
  } else {
    Labels labels(n);
    std::ifstream in(label_path, std::ios::binary);
    in.read(reinterpret_cast<char*>(labels.data()), static_cast<std::streamsize>(n));
    std::size_t bad = 0;
    std::size_t first_bad = 0;
    for (std::size_t i = 0; i < n; ++i)
      if (labels[i] > 1 && bad++ == 0) first_bad = i;
    if (bad > 0)
      problems.push_back("labels.bin: " + std::to_string(bad) + " bytes outside {0x00, 0x01} (first at row " +
                         std::to_string(first_bad) + ")");
  }

  for (const auto& spec : manifest.representations) {
    const fs::path path = feature_file(dir, spec.id);
    const std::string rel = (fs::path("features") / path.filename()).string();
    if (!fs::exists(path)) {
      problems.push_back(rel + ": missing");
      continue;
    }
    const auto want = expected_bytes(n, spec.dim);
    const auto have = fs::file_size(path);
    if (have != want)
      problems.push_back(rel + ": " + std::to_string(have) + " bytes, expected " + std::to_string(want));
  }

  if (fs::exists(dir / "splits.json")) {
    try {
      splits_from_json(read_json(dir / "splits.json")).check_partition(n);
    } catch (const Error& e) {
      problems.push_back(std::string("splits.json: ") + e.what());
    }
  }
  return problems;
}

}  // namespace ensemhal
