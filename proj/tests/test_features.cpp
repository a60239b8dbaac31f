#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <Eigen/Dense>
#include <filesystem>
#include <fstream>

#include "octseq/features.hpp"

using namespace octseq;
namespace fs = std::filesystem;

namespace {

Eigen::MatrixXd random_slice(std::uint64_t seed, int h = 128, int w = 128) {
  rng::Engine eng(seed);
  Eigen::MatrixXd m(h, w);
  for (int i = 0; i < h; ++i)
    for (int j = 0; j < w; ++j) m(i, j) = rng::uniform_range(eng, -2, 2);
  return m;
}

data::PreprocessedVolume tiny_volume(std::uint64_t seed, int depth) {
  data::VolumeRecord rec;
  rec.volume_id = "volX";
  rec.subject_id = "subjX";
  rec.relative_path = "volX.raw";
  rec.depth = depth;
  rec.height = 64;
  rec.width = 96;
  rng::Engine eng(seed);
  rec.voxels.resize(static_cast<std::size_t>(depth) * 64 * 96);
  for (auto& v : rec.voxels)
    v = static_cast<std::uint8_t>(rng::bounded(eng, 256));
  return data::preprocess(rec, data::PrepConfig{});
}

}  // namespace

TEST_CASE("extractor kinds round-trip through strings") {
  using features::ExtractorKind;
  for (ExtractorKind k : {ExtractorKind::stub, ExtractorKind::vit_large_retfound,
                          ExtractorKind::resnet34_imagenet})
    CHECK(features::extractor_kind_from_string(features::to_string(k)) == k);
  CHECK_THROWS_AS(features::extractor_kind_from_string("vgg16"), UsageError);
}

TEST_CASE("adapter presets carry the published encoder geometry") {
  const auto vit = features::ExtractorSpec::vit_large_retfound_defaults();
  CHECK(vit.embedding_dim == 1024);
  CHECK(vit.input_h == 224);
  CHECK(vit.attention_layers == 24);
  CHECK(vit.patch_size == 16);
  CHECK(vit.emits_attention);
  const auto res = features::ExtractorSpec::resnet34_defaults();
  CHECK(res.embedding_dim == 512);
  CHECK_FALSE(res.emits_attention);
}

TEST_CASE("fingerprint reacts to extractor and preprocessing changes") {
  features::ExtractorSpec spec;
  data::PrepConfig prep;
  const std::string base = features::fingerprint(spec, prep);

  features::ExtractorSpec other = spec;
  other.seed = 99;
  CHECK(features::fingerprint(other, prep) != base);
  other = spec;
  other.embedding_dim = 16;
  CHECK(features::fingerprint(other, prep) != base);
  data::PrepConfig prep2;
  prep2.mean[1] = 0.5;
  CHECK(features::fingerprint(spec, prep2) != base);
  CHECK(features::fingerprint(spec, prep) == base);  // stable
}

TEST_CASE("stub projection is seeded, bounded, and rejects tiny widths") {
  const auto a = features::make_stub_projection(5, 12);
  const auto b = features::make_stub_projection(5, 12);
  const auto c = features::make_stub_projection(6, 12);
  CHECK(a.p.rows() == 10);
  CHECK(a.p.cols() == 64);
  CHECK(a.b.size() == 10);
  CHECK(a.p == b.p);
  CHECK(a.b == b.b);
  CHECK(a.p != c.p);
  CHECK(a.p.cwiseAbs().maxCoeff() <= 1.0);
  CHECK(a.b.cwiseAbs().maxCoeff() <= 1.0);
  CHECK_THROWS_AS(features::make_stub_projection(0, 7), UsageError);
}

TEST_CASE("stub features end with the slice mean and deviation") {
  const Eigen::MatrixXd slice = random_slice(31);
  const Eigen::VectorXd f = features::stub_extract(3, 16, slice);
  REQUIRE(f.size() == 16);
  CHECK(f(14) == doctest::Approx(slice.mean()).epsilon(1e-12));
  const double var = (slice.array() - slice.mean()).square().mean();
  CHECK(f(15) == doctest::Approx(std::sqrt(var)).epsilon(1e-12));
  CHECK(f.head(14).cwiseAbs().maxCoeff() <= 1.0);  // tanh range
}

TEST_CASE("stub projection applies to 8x8 block averages") {
  // A slice that is constant inside each 16x16 cell pools to exactly those
  // constants, making the projected part predictable in closed form.
  Eigen::MatrixXd slice(128, 128);
  Eigen::VectorXd cells(64);
  rng::Engine eng(9);
  for (int by = 0; by < 8; ++by)
    for (int bx = 0; bx < 8; ++bx) {
      const double v = rng::uniform_range(eng, -1, 1);
      cells(by * 8 + bx) = v;
      slice.block(by * 16, bx * 16, 16, 16).setConstant(v);
    }
  const auto proj = features::make_stub_projection(21, 10);
  const Eigen::VectorXd f = features::stub_eval(proj, slice);
  const Eigen::VectorXd expected =
      (proj.p * cells + proj.b).array().tanh();
  CHECK((f.head(8) - expected).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("stub rejects slices that are not 128x128") {
  const auto proj = features::make_stub_projection(0, 10);
  CHECK_THROWS_AS(features::stub_eval(proj, Eigen::MatrixXd::Zero(64, 128)),
                  DataError);
}

TEST_CASE("feature extraction is per-slice on the first channel") {
  const auto vol = tiny_volume(13, 5);
  features::ExtractorSpec spec;
  spec.embedding_dim = 12;
  spec.seed = 4;
  const features::FeatureSequence seq = features::extract_features(spec, vol);
  CHECK(seq.volume_id == "volX");
  REQUIRE(seq.features.rows() == 5);
  REQUIRE(seq.features.cols() == 12);
  for (int d = 0; d < 5; ++d) {
    const Eigen::VectorXd direct =
        features::stub_extract(4, 12, vol.plane(d, 0));
    for (int j = 0; j < 12; ++j)
      CHECK(seq.features(d, j) == static_cast<float>(direct(j)));
  }
}

TEST_CASE("adapter extraction degrades to a dependency error") {
  auto spec = features::ExtractorSpec::vit_large_retfound_defaults();
  std::vector<Eigen::MatrixXd> chans(3, Eigen::MatrixXd::Zero(8, 8));
  CHECK_THROWS_AS(features::backbone_extract(spec, chans),
                  ExternalDependencyError);
  spec.weights_path = "/definitely/not/here.bin";
  CHECK_THROWS_AS(features::backbone_extract(spec, chans),
                  ExternalDependencyError);
  features::ExtractorSpec stub;
  CHECK_THROWS_AS(features::backbone_extract(stub, chans), UsageError);
}

TEST_CASE("synthetic attention is row-stochastic and keyed by slice") {
  features::ExtractorSpec spec;
  spec.seed = 8;
  spec.attention_layers = 3;
  const auto a = features::stub_attention(spec, "vol1", 2);
  const auto b = features::stub_attention(spec, "vol1", 2);
  const auto c = features::stub_attention(spec, "vol1", 3);
  const auto d = features::stub_attention(spec, "vol2", 2);
  REQUIRE(a.layers.size() == 3);
  const int tokens = 1 + (spec.input_h / spec.patch_size) *
                             (spec.input_w / spec.patch_size);
  for (const auto& layer : a.layers) {
    REQUIRE(layer.rows() == tokens);
    REQUIRE(layer.cols() == tokens);
    CHECK(layer.minCoeff() > 0.0);
    for (int i = 0; i < tokens; ++i)
      CHECK(layer.row(i).sum() == doctest::Approx(1.0).epsilon(1e-12));
  }
  CHECK(a.layers[0] == b.layers[0]);
  CHECK(a.layers[0] != c.layers[0]);
  CHECK(a.layers[0] != d.layers[0]);
}

TEST_CASE("feature cache round-trips bitwise and rejects stale entries") {
  const fs::path dir = fs::temp_directory_path() / "octseq_cache_test";
  fs::remove_all(dir);
  fs::create_directories(dir);

  features::FeatureSequence seq;
  seq.volume_id = "vol7";
  seq.features.resize(3, 6);
  rng::Engine eng(2);
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 6; ++j)
      seq.features(i, j) = static_cast<float>(rng::uniform_range(eng, -5, 5));

  features::cache_put(dir, seq, "fp-a");
  const auto hit = features::cache_get(dir, "vol7", "fp-a");
  REQUIRE(hit.has_value());
  CHECK(hit->volume_id == "vol7");
  CHECK(hit->features == seq.features);  // float-exact

  CHECK_FALSE(features::cache_get(dir, "vol7", "fp-b").has_value());
  CHECK_FALSE(features::cache_get(dir, "vol8", "fp-a").has_value());

  // Truncated payload is treated as a miss, not a crash.
  const fs::path entry = dir / "vol7.feat";
  const std::string bytes = io::read_file(entry);
  io::write_file_atomic(entry, bytes.substr(0, bytes.size() - 5));
  CHECK_FALSE(features::cache_get(dir, "vol7", "fp-a").has_value());

  io::write_file_atomic(entry, "garbage");
  CHECK_FALSE(features::cache_get(dir, "vol7", "fp-a").has_value());
  fs::remove_all(dir);
}
