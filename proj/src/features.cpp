#include "octseq/features.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>

namespace octseq::features {

namespace fs = std::filesystem;

ExtractorKind extractor_kind_from_string(const std::string& s) {
  if (s == "stub") return ExtractorKind::stub;
  if (s == "vit_large_retfound") return ExtractorKind::vit_large_retfound;
  if (s == "resnet34_imagenet") return ExtractorKind::resnet34_imagenet;
  throw UsageError("unknown extractor kind: '" + s + "'");
}

std::string to_string(ExtractorKind kind) {
  switch (kind) {
    case ExtractorKind::stub: return "stub";
    case ExtractorKind::vit_large_retfound: return "vit_large_retfound";
    default: return "resnet34_imagenet";
  }
}

ExtractorSpec ExtractorSpec::vit_large_retfound_defaults() {
  ExtractorSpec s;
  s.kind = ExtractorKind::vit_large_retfound;
  s.embedding_dim = 1024;  // ViT-large embedding width
  s.input_h = 224;
  s.input_w = 224;
  s.emits_attention = true;
  s.attention_layers = 24;
  s.patch_size = 16;
  return s;
}

ExtractorSpec ExtractorSpec::resnet34_defaults() {
  ExtractorSpec s;
  s.kind = ExtractorKind::resnet34_imagenet;
  s.embedding_dim = 512;
  s.input_h = 224;
  s.input_w = 224;
  s.emits_attention = false;
  return s;
}

std::string fingerprint(const ExtractorSpec& spec,
                        const data::PrepConfig& prep) {
  return to_string(spec.kind) + ":" + std::to_string(spec.embedding_dim) +
         ":" + std::to_string(spec.input_h) + "x" +
         std::to_string(spec.input_w) + ":" + std::to_string(spec.seed) + ":" +
         prep.fingerprint();
}

StubProjection make_stub_projection(std::uint64_t seed, int embedding_dim) {
  if (embedding_dim < 8)
    throw UsageError("stub extractor needs embedding_dim >= 8");
  const int rows = embedding_dim - 2;
  StubProjection proj;
  proj.p.resize(rows, 64);
  proj.b.resize(rows);
  rng::Engine eng(rng::derive_seed(seed, 0x57b0));
  for (int i = 0; i < rows; ++i)
    for (int j = 0; j < 64; ++j) proj.p(i, j) = rng::uniform_range(eng, -1, 1);
  for (int i = 0; i < rows; ++i) proj.b(i) = rng::uniform_range(eng, -1, 1);
  return proj;
}

Eigen::VectorXd stub_eval(const StubProjection& proj,
                          const Eigen::MatrixXd& slice) {
  if (slice.rows() != 128 || slice.cols() != 128)
    throw DataError("stub extractor expects 128x128 slices, got " +
                    std::to_string(slice.rows()) + "x" +
                    std::to_string(slice.cols()));
  // 8x8 average pooling: 16x16 cells, flattened row-major.
  Eigen::VectorXd pooled(64);
  for (int by = 0; by < 8; ++by)
    for (int bx = 0; bx < 8; ++bx)
      pooled(by * 8 + bx) = slice.block(by * 16, bx * 16, 16, 16).mean();

  const int rows = static_cast<int>(proj.p.rows());
  Eigen::VectorXd out(rows + 2);
  out.head(rows) = (proj.p * pooled + proj.b).array().tanh();
  const double mean = slice.mean();
  const double var = (slice.array() - mean).square().mean();
  out(rows) = mean;
  out(rows + 1) = std::sqrt(var);
  return out;
}

Eigen::VectorXd stub_extract(std::uint64_t seed, int embedding_dim,
                             const Eigen::MatrixXd& slice) {
  return stub_eval(make_stub_projection(seed, embedding_dim), slice);
}

BackboneOutput backbone_extract(const ExtractorSpec& spec,
                                const std::vector<Eigen::MatrixXd>& channels) {
  if (spec.kind == ExtractorKind::stub)
    throw UsageError("backbone_extract is for adapter kinds, not the stub");
  if (channels.size() != 3)
    throw DataError("backbone adapters expect 3-channel slices");
  if (spec.weights_path.empty() || !fs::exists(spec.weights_path))
    throw ExternalDependencyError(
        "external dependency unavailable: " + to_string(spec.kind) +
        " weights not found" +
        (spec.weights_path.empty() ? "" : " at " + spec.weights_path) +
        "; extract features with the released encoder and place them in the "
        "feature cache, or use the stub extractor");
  // No encoder runtime ships with this project; weights alone are not enough.
  throw ExternalDependencyError(
      "external dependency unavailable: no runtime for " +
      to_string(spec.kind) +
      "; extract features with the released encoder and place them in the "
      "feature cache");
}

FeatureSequence extract_features(const ExtractorSpec& spec,
                                 const data::PreprocessedVolume& volume) {
  FeatureSequence seq;
  seq.volume_id = volume.volume_id;
  seq.features.resize(volume.depth, spec.embedding_dim);
  if (spec.kind == ExtractorKind::stub) {
    const StubProjection proj =
        make_stub_projection(spec.seed, spec.embedding_dim);
    for (int d = 0; d < volume.depth; ++d) {
      const Eigen::VectorXd f = stub_eval(proj, volume.plane(d, 0));
      seq.features.row(d) = f.cast<float>().transpose();
    }
    return seq;
  }
  for (int d = 0; d < volume.depth; ++d) {
    std::vector<Eigen::MatrixXd> chans;
    for (int c = 0; c < volume.channels; ++c) chans.push_back(volume.plane(d, c));
    while (chans.size() < 3) chans.push_back(chans.back());
    const BackboneOutput out = backbone_extract(spec, chans);
    seq.features.row(d) = out.embedding.cast<float>().transpose();
  }
  return seq;
}

AttentionStack stub_attention(const ExtractorSpec& spec,
                              const std::string& volume_id, int slice_index) {
  const int grid = spec.input_h / spec.patch_size;
  const int tokens = 1 + grid * grid;
  AttentionStack stack;
  stack.volume_id = volume_id;
  stack.slice_index = slice_index;
  rng::Engine eng(rng::derive_seed(spec.seed, 0xa77e,
                                   fnv1a(volume_id),
                                   static_cast<std::uint64_t>(slice_index)));
  for (int l = 0; l < spec.attention_layers; ++l) {
    Eigen::MatrixXd a(tokens, tokens);
    for (int i = 0; i < tokens; ++i) {
      double sum = 0;
      for (int j = 0; j < tokens; ++j) {
        a(i, j) = std::exp(rng::uniform_range(eng, -2, 2));
        sum += a(i, j);
      }
      a.row(i) /= sum;
    }
    stack.layers.push_back(std::move(a));
  }
  return stack;
}

namespace {

constexpr std::uint32_t kCacheMagic = 0x43465346;  // "FSFC"
constexpr std::uint32_t kCacheVersion = 1;

fs::path cache_path(const fs::path& store, const std::string& volume_id) {
  return store / (volume_id + ".feat");
}

}  // namespace

void cache_put(const fs::path& store, const FeatureSequence& seq,
               const std::string& fingerprint) {
  std::string out;
  io::append_u32(out, kCacheMagic);
  io::append_u32(out, kCacheVersion);
  io::append_str(out, fingerprint);
  io::append_str(out, seq.volume_id);
  io::append_u32(out, static_cast<std::uint32_t>(seq.features.rows()));
  io::append_u32(out, static_cast<std::uint32_t>(seq.features.cols()));
  for (Eigen::Index i = 0; i < seq.features.rows(); ++i)
    for (Eigen::Index j = 0; j < seq.features.cols(); ++j)
      io::append_f32(out, seq.features(i, j));
  io::write_file_atomic(cache_path(store, seq.volume_id), out);
}

std::optional<FeatureSequence> cache_get(const fs::path& store,
                                         const std::string& volume_id,
                                         const std::string& fingerprint) {
  const fs::path path = cache_path(store, volume_id);
  if (!fs::exists(path)) return std::nullopt;
  try {
    const std::string bytes = io::read_file(path);
    io::Reader r(bytes);
    if (r.u32() != kCacheMagic || r.u32() != kCacheVersion)
      throw DataError("bad cache header");
    if (r.str() != fingerprint) return std::nullopt;  // stale entry
    FeatureSequence seq;
    seq.volume_id = r.str();
    if (seq.volume_id != volume_id) throw DataError("cache id mismatch");
    const std::uint32_t rows = r.u32();
    const std::uint32_t cols = r.u32();
    if (r.remaining() != std::size_t(rows) * cols * 4)
      throw DataError("cache payload size mismatch");
    seq.features.resize(rows, cols);
    for (std::uint32_t i = 0; i < rows; ++i)
      for (std::uint32_t j = 0; j < cols; ++j) seq.features(i, j) = r.f32();
    return seq;
  } catch (const DataError& e) {
    std::fprintf(stderr, "warning: ignoring corrupt cache entry %s (%s)\n",
                 path.string().c_str(), e.what());
    return std::nullopt;
  }
}

}  // namespace octseq::features
