#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <Eigen/Dense>
#include <filesystem>
#include <fstream>
#include <set>
#include <string>
#include <vector>

#include "octseq/data.hpp"
#include "support/oracles.hpp"

using namespace octseq;
namespace fs = std::filesystem;

namespace {

fs::path temp_dir(const std::string& leaf) {
  const fs::path dir = fs::temp_directory_path() / leaf;
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

data::VolumeRecord make_record(const std::string& vol, const std::string& subj,
                               int label, int depth = 4, int height = 6,
                               int width = 8) {
  data::VolumeRecord r;
  r.volume_id = vol;
  r.subject_id = subj;
  r.label = label;
  r.laterality = data::Laterality::left;
  r.relative_path = vol + ".raw";
  r.depth = depth;
  r.height = height;
  r.width = width;
  return r;
}

std::vector<data::VolumeRecord> make_cohort(int n_subjects,
                                            int volumes_per_subject = 2) {
  std::vector<data::VolumeRecord> records;
  for (int s = 0; s < n_subjects; ++s) {
    for (int v = 0; v < volumes_per_subject; ++v) {
      char vol[32], subj[32];
      std::snprintf(vol, sizeof vol, "vol%03d_%d", s, v);
      std::snprintf(subj, sizeof subj, "subj%03d", s);
      records.push_back(make_record(vol, subj, s % 2));
    }
  }
  return records;
}

}  // namespace

TEST_CASE("checkerboard upsampling matches the closed-form grid") {
  Eigen::MatrixXd src(2, 2);
  src << 1, 0, 0, 1;
  const Eigen::MatrixXd out = data::bilinear_resize(src, 4, 4);
  Eigen::MatrixXd expected(4, 4);
  expected << 1.0, 2.0 / 3, 1.0 / 3, 0.0,
              2.0 / 3, 5.0 / 9, 4.0 / 9, 1.0 / 3,
              1.0 / 3, 4.0 / 9, 5.0 / 9, 2.0 / 3,
              0.0, 1.0 / 3, 2.0 / 3, 1.0;
  CHECK((out - expected).cwiseAbs().maxCoeff() < 1e-15);
}

TEST_CASE("resize agrees with the scalar-loop reference") {
  rng::Engine eng(17);
  for (int trial = 0; trial < 20; ++trial) {
    const int ih = 2 + int(rng::bounded(eng, 30));
    const int iw = 2 + int(rng::bounded(eng, 30));
    const int oh = 1 + int(rng::bounded(eng, 40));
    const int ow = 1 + int(rng::bounded(eng, 40));
    Eigen::MatrixXd src(ih, iw);
    for (int i = 0; i < ih; ++i)
      for (int j = 0; j < iw; ++j) src(i, j) = rng::uniform_unit(eng);
    const Eigen::MatrixXd got = data::bilinear_resize(src, oh, ow);
    const Eigen::MatrixXd want = oracles::ref_bilinear(src, oh, ow);
    CHECK((got - want).cwiseAbs().maxCoeff() < 1e-12);
  }
}

TEST_CASE("resize to the same shape is the identity; corners are pinned") {
  rng::Engine eng(23);
  Eigen::MatrixXd src(5, 7);
  for (int i = 0; i < 5; ++i)
    for (int j = 0; j < 7; ++j) src(i, j) = rng::uniform_unit(eng);
  CHECK((data::bilinear_resize(src, 5, 7) - src).cwiseAbs().maxCoeff() <
        1e-15);
  const Eigen::MatrixXd big = data::bilinear_resize(src, 13, 11);
  CHECK(big(0, 0) == doctest::Approx(src(0, 0)).epsilon(1e-12));
  CHECK(big(0, 10) == doctest::Approx(src(0, 6)).epsilon(1e-12));
  CHECK(big(12, 0) == doctest::Approx(src(4, 0)).epsilon(1e-12));
  CHECK(big(12, 10) == doctest::Approx(src(4, 6)).epsilon(1e-12));
}

TEST_CASE("manifest round-trips every field") {
  const fs::path dir = temp_dir("octseq_manifest_rt");
  std::vector<data::VolumeRecord> records;
  records.push_back(make_record("v1", "s1", 1));
  records.push_back(make_record("v2", "s1", 0, 3, 5, 7));
  records[0].signal_strength = 9;
  records[1].laterality = data::Laterality::unknown;
  data::save_manifest(dir / "m.csv", records);
  const auto loaded = data::load_manifest(dir / "m.csv");
  REQUIRE(loaded.size() == 2);
  CHECK(loaded[0].volume_id == "v1");
  CHECK(loaded[0].subject_id == "s1");
  CHECK(loaded[0].label == 1);
  CHECK(loaded[0].laterality == data::Laterality::left);
  REQUIRE(loaded[0].signal_strength.has_value());
  CHECK(*loaded[0].signal_strength == 9);
  CHECK_FALSE(loaded[1].signal_strength.has_value());
  CHECK(loaded[1].depth == 3);
  CHECK(loaded[1].height == 5);
  CHECK(loaded[1].width == 7);
  CHECK(loaded[1].relative_path == "v2.raw");
  fs::remove_all(dir);
}

TEST_CASE("manifest validation rejects malformed rows") {
  const fs::path dir = temp_dir("octseq_manifest_bad");
  const std::string header =
      "volume_id,subject_id,label,laterality,signal_strength,relative_path,"
      "depth,height,width\n";
  auto write = [&](const std::string& body) {
    std::ofstream(dir / "m.csv") << body;
  };

  CHECK_THROWS_AS(data::load_manifest(dir / "absent.csv"), UsageError);

  write("wrong,header\n");
  CHECK_THROWS_AS(data::load_manifest(dir / "m.csv"), DataError);

  write(header + "v1,s1,2,left,,v1.raw,4,6,8\n");  // label out of range
  CHECK_THROWS_AS(data::load_manifest(dir / "m.csv"), DataError);

  write(header + "v1,s1,1,left,,v1.raw,0,6,8\n");  // zero dimension
  CHECK_THROWS_AS(data::load_manifest(dir / "m.csv"), DataError);

  write(header + "v1,s1,1,left,,v1.raw,4,6,8\nv1,s2,0,right,,v1b.raw,4,6,8\n");
  CHECK_THROWS_AS(data::load_manifest(dir / "m.csv"), DataError);  // dup id

  write(header + "v1,s1,1,sideways,,v1.raw,4,6,8\n");
  CHECK_THROWS_AS(data::load_manifest(dir / "m.csv"), DataError);
  fs::remove_all(dir);
}

TEST_CASE("voxels round-trip and shape mismatches are caught") {
  const fs::path dir = temp_dir("octseq_voxels");
  data::VolumeRecord rec = make_record("v1", "s1", 0, 2, 3, 4);
  for (int i = 0; i < 24; ++i)
    rec.voxels.push_back(static_cast<std::uint8_t>(i * 10));
  data::save_voxels(rec, dir);

  data::VolumeRecord fresh = make_record("v1", "s1", 0, 2, 3, 4);
  data::load_voxels(fresh, dir);
  CHECK(fresh.voxels == rec.voxels);
  CHECK(fresh.slice(1)[0] == 120);  // slice-major layout

  data::VolumeRecord wrong = make_record("v1", "s1", 0, 2, 3, 5);
  CHECK_THROWS_AS(data::load_voxels(wrong, dir), DataError);

  data::VolumeRecord absent = make_record("v9", "s1", 0);
  CHECK_THROWS_AS(data::load_voxels(absent, dir), DataError);
  fs::remove_all(dir);
}

TEST_CASE("preprocessing normalizes with the declared constants") {
  data::VolumeRecord rec = make_record("v1", "s1", 0, 2, 4, 4);
  rec.voxels.assign(2 * 4 * 4, 100);
  data::PrepConfig cfg;
  cfg.target_h = 8;
  cfg.target_w = 8;
  const data::PreprocessedVolume out = data::preprocess(rec, cfg);
  CHECK(out.depth == 2);
  CHECK(out.channels == 3);
  REQUIRE(out.planes.size() == 6);
  for (int c = 0; c < 3; ++c) {
    const double expected = (100.0 / 255.0 - cfg.mean[c]) / cfg.stdev[c];
    const Eigen::MatrixXd& plane = out.plane(1, c);
    CHECK(plane.rows() == 8);
    CHECK(plane.cols() == 8);
    CHECK((plane.array() - expected).abs().maxCoeff() < 1e-12);
  }
}

TEST_CASE("preprocess refuses unloaded volumes and zero stdev") {
  data::VolumeRecord rec = make_record("v1", "s1", 0);
  CHECK_THROWS_AS(data::preprocess(rec, data::PrepConfig{}), DataError);
  rec.voxels.assign(static_cast<std::size_t>(rec.depth) * rec.height *
                    rec.width, 1);
  data::PrepConfig cfg;
  cfg.stdev = {0.0, 1.0, 1.0};
  CHECK_THROWS_AS(data::preprocess(rec, cfg), DataError);
}

TEST_CASE("prep fingerprints react to any constant change") {
  data::PrepConfig a, b;
  CHECK(a.fingerprint() == b.fingerprint());
  b.target_w = 224;
  CHECK(a.fingerprint() != b.fingerprint());
  b = a;
  b.mean[0] += 1e-9;
  CHECK(a.fingerprint() != b.fingerprint());
}

TEST_CASE("fold plans never leak a subject across subsets") {
  const auto records = make_cohort(23, 2);
  for (std::uint64_t seed = 0; seed < 25; ++seed) {
    const data::FoldPlan plan = data::make_fold_plan(records, 5, seed);
    REQUIRE(plan.folds.size() == 5);
    std::set<std::string> all_test;
    for (const auto& fold : plan.folds) {
      std::set<std::string> seen;
      for (const auto* subset : {&fold.train, &fold.validation, &fold.test})
        for (const auto& id : *subset)
          CHECK(seen.insert(id).second);  // no subject in two subsets
      CHECK(!fold.validation.empty());
      for (const auto& id : fold.test)
        CHECK(all_test.insert(id).second);  // test sets are disjoint
    }
    CHECK(all_test.size() == 23);  // and cover every subject
  }
}

TEST_CASE("every fold subset keeps both classes") {
  const auto records = make_cohort(17, 1);
  const data::FoldPlan plan = data::make_fold_plan(records, 5, 3);
  auto has_both = [&](const std::vector<std::string>& ids) {
    std::set<int> labels;
    for (const auto& id : ids)
      for (const auto& r : records)
        if (r.subject_id == id) labels.insert(r.label);
    return labels.size() == 2;
  };
  for (const auto& fold : plan.folds) {
    CHECK(has_both(fold.train));
    CHECK(has_both(fold.validation));
    CHECK(has_both(fold.test));
  }
}

TEST_CASE("fold plans are reproducible and seed sensitive") {
  const auto records = make_cohort(20, 2);
  const data::FoldPlan a = data::make_fold_plan(records, 4, 9);
  const data::FoldPlan b = data::make_fold_plan(records, 4, 9);
  const data::FoldPlan c = data::make_fold_plan(records, 4, 10);
  REQUIRE(a.folds.size() == b.folds.size());
  bool differs_from_c = false;
  for (std::size_t f = 0; f < a.folds.size(); ++f) {
    CHECK(a.folds[f].train == b.folds[f].train);
    CHECK(a.folds[f].validation == b.folds[f].validation);
    CHECK(a.folds[f].test == b.folds[f].test);
    if (a.folds[f].test != c.folds[f].test) differs_from_c = true;
  }
  CHECK(differs_from_c);
}

TEST_CASE("a class with fewer subjects than folds is rejected") {
  const auto records = make_cohort(6, 1);  // 3 per class
  CHECK_THROWS_AS(data::make_fold_plan(records, 5, 0), DataError);
}

TEST_CASE("fold plan files round-trip") {
  const fs::path dir = temp_dir("octseq_foldplan");
  const auto records = make_cohort(15, 2);
  const data::FoldPlan plan = data::make_fold_plan(records, 3, 77);
  data::save_fold_plan(dir / "plan.json", plan);
  const data::FoldPlan loaded = data::load_fold_plan(dir / "plan.json");
  CHECK(loaded.k == plan.k);
  CHECK(loaded.seed == plan.seed);
  REQUIRE(loaded.folds.size() == plan.folds.size());
  for (std::size_t f = 0; f < plan.folds.size(); ++f) {
    CHECK(loaded.folds[f].train == plan.folds[f].train);
    CHECK(loaded.folds[f].validation == plan.folds[f].validation);
    CHECK(loaded.folds[f].test == plan.folds[f].test);
  }
  std::ofstream(dir / "broken.json") << "{\"k\": 2";
  CHECK_THROWS_AS(data::load_fold_plan(dir / "broken.json"), DataError);
  fs::remove_all(dir);
}

TEST_CASE("balanced batches keep the class gap at one or less") {
  std::vector<int> labels;
  std::vector<int> train;
  for (int i = 0; i < 60; ++i) {
    labels.push_back(i < 40 ? 1 : 0);  // 2:1 imbalance
    train.push_back(i);
  }
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    for (int batch_size : {4, 7, 16}) {
      const data::BatchPlan plan =
          data::balanced_batches(labels, train, batch_size, seed);
      CHECK(!plan.batches.empty());
      for (const auto& batch : plan.batches) {
        long pos = 0, neg = 0;
        for (int idx : batch) (labels[idx] == 1 ? pos : neg)++;
        CHECK(std::abs(pos - neg) <= 1);
        CHECK(static_cast<int>(batch.size()) <= batch_size);
      }
    }
  }
}

TEST_CASE("balanced batches cover the larger class exactly once") {
  std::vector<int> labels(30, 0);
  std::vector<int> train;
  for (int i = 0; i < 30; ++i) {
    if (i < 20) labels[i] = 1;
    train.push_back(i);
  }
  const data::BatchPlan plan = data::balanced_batches(labels, train, 8, 5);
  std::multiset<int> seen_major;
  for (const auto& batch : plan.batches)
    for (int idx : batch)
      if (labels[idx] == 1) seen_major.insert(idx);
  CHECK(seen_major.size() == 20);  // each majority item exactly once
  std::set<int> unique_major(seen_major.begin(), seen_major.end());
  CHECK(unique_major.size() == 20);
}

TEST_CASE("balanced batches are deterministic per seed") {
  std::vector<int> labels{1, 1, 1, 0, 0, 1, 0, 1, 0, 1};
  std::vector<int> train{0, 1, 2, 3, 4, 5, 6, 7, 8, 9};
  const auto a = data::balanced_batches(labels, train, 4, 42);
  const auto b = data::balanced_batches(labels, train, 4, 42);
  const auto c = data::balanced_batches(labels, train, 4, 43);
  CHECK(a.batches == b.batches);
  CHECK(a.batches != c.batches);
  CHECK_THROWS_AS(data::balanced_batches(labels, {0, 1, 2}, 4, 0), DataError);
}

TEST_CASE("subject lookup selects exactly the matching volumes") {
  const auto records = make_cohort(5, 2);
  const auto idx =
      data::indices_for_subjects(records, {"subj001", "subj003"});
  REQUIRE(idx.size() == 4);
  for (int i : idx) {
    const std::string& s = records[i].subject_id;
    CHECK((s == "subj001" || s == "subj003"));
  }
  CHECK(data::indices_for_subjects(records, {}).empty());
}
