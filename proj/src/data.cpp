#include "octseq/data.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include "json.hpp"

namespace octseq::data {

namespace fs = std::filesystem;

Laterality laterality_from_string(const std::string& s) {
  if (s == "left") return Laterality::left;
  if (s == "right") return Laterality::right;
  if (s == "unknown" || s.empty()) return Laterality::unknown;
  throw DataError("unknown laterality value: '" + s + "'");
}

std::string to_string(Laterality lat) {
  switch (lat) {
    case Laterality::left: return "left";
    case Laterality::right: return "right";
    default: return "unknown";
  }
}

std::string PrepConfig::fingerprint() const {
  std::string blob = std::to_string(target_h) + "x" + std::to_string(target_w);
  for (double m : mean) blob += ";" + format_g17(m);
  for (double s : stdev) blob += ";" + format_g17(s);
  return hex64(fnv1a(blob));
}

namespace {

constexpr const char* kManifestHeader =
    "volume_id,subject_id,label,laterality,signal_strength,relative_path,"
    "depth,height,width";

int parse_int(const std::string& s, const std::string& what, int row) {
  try {
    std::size_t used = 0;
    const int v = std::stoi(s, &used);
    if (used != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw DataError("manifest row " + std::to_string(row) + ": bad " + what +
                    " value '" + s + "'");
  }
}

}  // namespace

std::vector<VolumeRecord> load_manifest(const fs::path& path) {
  if (!fs::exists(path))
    throw UsageError("manifest not found: " + path.string());
  std::ifstream in(path);
  if (!in) throw DataError("manifest unreadable: " + path.string());

  std::string line;
  if (!std::getline(in, line)) throw DataError("manifest is missing a header");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != kManifestHeader)
    throw DataError("manifest header mismatch, expected '" +
                    std::string(kManifestHeader) + "'");

  std::vector<VolumeRecord> records;
  std::set<std::string> seen;
  int row = 1;
  while (std::getline(in, line)) {
    ++row;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto fields = split(line, ',');
    if (fields.size() != 9)
      throw DataError("manifest row " + std::to_string(row) + ": expected 9 fields, got " +
                      std::to_string(fields.size()));
    VolumeRecord rec;
    rec.volume_id = fields[0];
    rec.subject_id = fields[1];
    rec.label = parse_int(fields[2], "label", row);
    if (rec.label != 0 && rec.label != 1)
      throw DataError("manifest row " + std::to_string(row) +
                      ": label must be 0 or 1");
    rec.laterality = laterality_from_string(fields[3]);
    if (!fields[4].empty())
      rec.signal_strength = parse_int(fields[4], "signal_strength", row);
    rec.relative_path = fields[5];
    rec.depth = parse_int(fields[6], "depth", row);
    rec.height = parse_int(fields[7], "height", row);
    rec.width = parse_int(fields[8], "width", row);
    if (rec.depth < 1 || rec.height < 1 || rec.width < 1)
      throw DataError("manifest row " + std::to_string(row) +
                      ": dimensions must be positive");
    if (rec.volume_id.empty() || rec.subject_id.empty())
      throw DataError("manifest row " + std::to_string(row) + ": empty id");
    if (!seen.insert(rec.volume_id).second)
      throw DataError("duplicate volume_id '" + rec.volume_id + "'");
    records.push_back(std::move(rec));
  }
  return records;
}

void save_manifest(const fs::path& path,
                   const std::vector<VolumeRecord>& records) {
  std::string out = std::string(kManifestHeader) + "\n";
  for (const auto& r : records) {
    out += r.volume_id + "," + r.subject_id + "," + std::to_string(r.label) +
           "," + to_string(r.laterality) + ",";
    if (r.signal_strength) out += std::to_string(*r.signal_strength);
    out += "," + r.relative_path + "," + std::to_string(r.depth) + "," +
           std::to_string(r.height) + "," + std::to_string(r.width) + "\n";
  }
  io::write_file_atomic(path, out);
}

void load_voxels(VolumeRecord& record, const fs::path& data_dir) {
  if (record.loaded()) return;
  const fs::path file = data_dir / record.relative_path;
  std::ifstream in(file, std::ios::binary | std::ios::ate);
  if (!in)
    throw DataError("voxel file unreadable for '" + record.volume_id +
                    "': " + file.string());
  const auto size = static_cast<std::size_t>(in.tellg());
  const std::size_t expected = static_cast<std::size_t>(record.depth) *
                               record.height * record.width;
  if (size != expected)
    throw DataError("voxel shape mismatch for '" + record.volume_id +
                    "': file holds " + std::to_string(size) +
                    " bytes, manifest declares " + std::to_string(expected));
  record.voxels.resize(expected);
  in.seekg(0);
  in.read(reinterpret_cast<char*>(record.voxels.data()),
          static_cast<std::streamsize>(expected));
  if (!in)
    throw DataError("short read on voxel file for '" + record.volume_id + "'");
}

void save_voxels(const VolumeRecord& record, const fs::path& data_dir) {
  if (!record.loaded())
    throw DataError("save_voxels: record '" + record.volume_id +
                    "' has no voxels");
  std::string bytes(reinterpret_cast<const char*>(record.voxels.data()),
                    record.voxels.size());
  io::write_file_atomic(data_dir / record.relative_path, bytes);
}

Eigen::MatrixXd bilinear_resize(const Eigen::MatrixXd& src, int out_h,
                                int out_w) {
  const int in_h = static_cast<int>(src.rows());
  const int in_w = static_cast<int>(src.cols());
  Eigen::MatrixXd out(out_h, out_w);
  // Corner-aligned sampling: output corners coincide with input corners.
  const double sy = out_h > 1 ? double(in_h - 1) / double(out_h - 1) : 0.0;
  const double sx = out_w > 1 ? double(in_w - 1) / double(out_w - 1) : 0.0;
  for (int i = 0; i < out_h; ++i) {
    const double y = i * sy;
    const int y0 = std::min(static_cast<int>(std::floor(y)), in_h - 1);
    const int y1 = std::min(y0 + 1, in_h - 1);
    const double fy = y - y0;
    for (int j = 0; j < out_w; ++j) {
      const double x = j * sx;
      const int x0 = std::min(static_cast<int>(std::floor(x)), in_w - 1);
      const int x1 = std::min(x0 + 1, in_w - 1);
      const double fx = x - x0;
      out(i, j) = src(y0, x0) * (1 - fy) * (1 - fx) +
                  src(y0, x1) * (1 - fy) * fx +
                  src(y1, x0) * fy * (1 - fx) +
                  src(y1, x1) * fy * fx;
    }
  }
  return out;
}

PreprocessedVolume preprocess(const VolumeRecord& volume,
                              const PrepConfig& cfg) {
  if (!volume.loaded())
    throw DataError("preprocess: voxels not loaded for '" + volume.volume_id +
                    "'");
  if (volume.depth < 1) throw DataError("preprocess: empty volume");
  if (cfg.mean.size() != cfg.stdev.size() || cfg.mean.empty())
    throw DataError("preprocess: mean/std channel counts disagree");
  for (double s : cfg.stdev)
    if (s == 0.0) throw DataError("preprocess: zero std");

  const int channels = static_cast<int>(cfg.mean.size());
  PreprocessedVolume out;
  out.volume_id = volume.volume_id;
  out.depth = volume.depth;
  out.channels = channels;
  out.height = cfg.target_h;
  out.width = cfg.target_w;
  out.mean_applied = cfg.mean;
  out.stdev_applied = cfg.stdev;
  out.planes.reserve(static_cast<std::size_t>(volume.depth) * channels);

  Eigen::MatrixXd raw(volume.height, volume.width);
  for (int d = 0; d < volume.depth; ++d) {
    const std::uint8_t* s = volume.slice(d);
    for (int i = 0; i < volume.height; ++i)
      for (int j = 0; j < volume.width; ++j)
        raw(i, j) = double(s[i * volume.width + j]) / 255.0;
    const Eigen::MatrixXd resized =
        bilinear_resize(raw, cfg.target_h, cfg.target_w);
    for (int c = 0; c < channels; ++c)
      out.planes.push_back((resized.array() - cfg.mean[c]) / cfg.stdev[c]);
  }
  return out;
}

namespace {

struct SubjectInfo {
  std::string id;
  int label = 0;  // majority label over the subject's volumes, ties -> 1
};

std::vector<SubjectInfo> collect_subjects(
    const std::vector<VolumeRecord>& records) {
  std::map<std::string, std::pair<int, int>> counts;  // id -> (n0, n1)
  for (const auto& r : records) {
    auto& c = counts[r.subject_id];
    (r.label == 1 ? c.second : c.first)++;
  }
  std::vector<SubjectInfo> subjects;
  subjects.reserve(counts.size());
  for (const auto& [id, c] : counts)
    subjects.push_back({id, c.second >= c.first ? 1 : 0});
  return subjects;  // map iteration gives sorted, deterministic order
}

}  // namespace

FoldPlan make_fold_plan(const std::vector<VolumeRecord>& records, int k,
                        std::uint64_t seed) {
  if (k < 2) throw DataError("make_fold_plan: k must be at least 2");
  auto subjects = collect_subjects(records);

  std::vector<std::string> by_class[2];
  for (const auto& s : subjects) by_class[s.label].push_back(s.id);
  for (int c = 0; c < 2; ++c)
    if (static_cast<int>(by_class[c].size()) < k)
      throw DataError("make_fold_plan: class " + std::to_string(c) + " has " +
                      std::to_string(by_class[c].size()) +
                      " subjects, need at least " + std::to_string(k));

  // Stratified test partition: shuffle each class, deal round-robin.
  std::vector<std::vector<std::string>> test_groups(k);
  for (int c = 0; c < 2; ++c) {
    rng::Engine eng(rng::derive_seed(seed, 0x7e57, c));
    rng::shuffle(by_class[c], eng);
    for (std::size_t i = 0; i < by_class[c].size(); ++i)
      test_groups[i % k].push_back(by_class[c][i]);
  }

  FoldPlan plan;
  plan.k = k;
  plan.seed = seed;
  plan.folds.resize(k);
  for (int f = 0; f < k; ++f) {
    auto& fold = plan.folds[f];
    fold.test = test_groups[f];
    std::set<std::string> in_test(fold.test.begin(), fold.test.end());

    // Remaining subjects split 90/10 train/validation, stratified per class.
    for (int c = 0; c < 2; ++c) {
      std::vector<std::string> pool;
      for (const auto& id : by_class[c])
        if (!in_test.count(id)) pool.push_back(id);
      std::sort(pool.begin(), pool.end());
      rng::Engine eng(rng::derive_seed(seed, 0x5a1d, f, c));
      rng::shuffle(pool, eng);
      const int n = static_cast<int>(pool.size());
      int n_val = n >= 2 ? static_cast<int>(std::lround(0.1 * n)) : 0;
      if (n >= 2) n_val = std::clamp(n_val, 1, n - 1);
      for (int i = 0; i < n; ++i)
        (i < n_val ? fold.validation : fold.train).push_back(pool[i]);
    }
    std::sort(fold.train.begin(), fold.train.end());
    std::sort(fold.validation.begin(), fold.validation.end());
    std::sort(fold.test.begin(), fold.test.end());
  }
  return plan;
}

void save_fold_plan(const fs::path& path, const FoldPlan& plan) {
  nlohmann::json j;
  j["k"] = plan.k;
  j["seed"] = plan.seed;
  j["folds"] = nlohmann::json::array();
  for (const auto& f : plan.folds) {
    j["folds"].push_back({{"train", f.train},
                          {"validation", f.validation},
                          {"test", f.test}});
  }
  io::write_file_atomic(path, j.dump(2) + "\n");
}

FoldPlan load_fold_plan(const fs::path& path) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(io::read_file(path));
  } catch (const nlohmann::json::exception& e) {
    throw DataError("fold plan parse error in " + path.string() + ": " +
                    e.what());
  }
  FoldPlan plan;
  plan.k = j.at("k").get<int>();
  plan.seed = j.at("seed").get<std::uint64_t>();
  for (const auto& f : j.at("folds")) {
    FoldAssignment a;
    a.train = f.at("train").get<std::vector<std::string>>();
    a.validation = f.at("validation").get<std::vector<std::string>>();
    a.test = f.at("test").get<std::vector<std::string>>();
    plan.folds.push_back(std::move(a));
  }
  if (static_cast<int>(plan.folds.size()) != plan.k)
    throw DataError("fold plan k disagrees with fold count");
  return plan;
}

BatchPlan balanced_batches(const std::vector<int>& labels,
                           const std::vector<int>& train_indices,
                           int batch_size, std::uint64_t seed) {
  if (batch_size < 2) throw DataError("balanced_batches: batch_size too small");
  std::vector<int> pos, neg;
  for (int idx : train_indices) {
    if (idx < 0 || idx >= static_cast<int>(labels.size()))
      throw DataError("balanced_batches: index out of range");
    (labels[idx] == 1 ? pos : neg).push_back(idx);
  }
  if (pos.empty() || neg.empty())
    throw DataError("balanced_batches: both classes must be present");

  // The larger class is walked once per epoch; the smaller one refills its
  // quota with replacement once exhausted. Ties treat class 1 as major.
  std::vector<int>& major = pos.size() >= neg.size() ? pos : neg;
  std::vector<int>& minor = pos.size() >= neg.size() ? neg : pos;
  const int q_major = (batch_size + 1) / 2;
  const int q_minor = batch_size / 2;

  rng::Engine eng(rng::derive_seed(seed, 0xba7c4));
  rng::shuffle(major, eng);
  rng::shuffle(minor, eng);

  BatchPlan plan;
  plan.batch_size = batch_size;
  plan.seed = seed;
  std::size_t minor_cursor = 0;
  for (std::size_t start = 0; start < major.size(); start += q_major) {
    const std::size_t take =
        std::min<std::size_t>(q_major, major.size() - start);
    std::vector<int> batch(major.begin() + start, major.begin() + start + take);
    // Partial trailing chunk keeps the batch balanced at reduced size.
    const std::size_t want =
        take == static_cast<std::size_t>(q_major) ? q_minor : take;
    for (std::size_t i = 0; i < want; ++i) {
      if (minor_cursor < minor.size()) {
        batch.push_back(minor[minor_cursor++]);
      } else {
        batch.push_back(minor[rng::bounded(eng, minor.size())]);
      }
    }
    plan.batches.push_back(std::move(batch));
  }
  return plan;
}

std::vector<int> indices_for_subjects(
    const std::vector<VolumeRecord>& records,
    const std::vector<std::string>& subjects) {
  std::set<std::string> wanted(subjects.begin(), subjects.end());
  std::vector<int> out;
  for (std::size_t i = 0; i < records.size(); ++i)
    if (wanted.count(records[i].subject_id)) out.push_back(static_cast<int>(i));
  return out;
}

}  // namespace octseq::data
