#pragma once

#include <Eigen/Dense>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "octseq/data.hpp"

namespace octseq::features {

using FeatureMatrix =
    Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

// Per-slice feature vectors for one volume, row i = features of slice i.
// Stored as float32 so a cache round-trip is bitwise exact.
struct FeatureSequence {
  std::string volume_id;
  FeatureMatrix features;
};

// Head-averaged per-layer attention matrices for one slice. Each matrix is
// T x T row-stochastic with T = 1 + number of patch tokens.
struct AttentionStack {
  std::string volume_id;
  int slice_index = 0;  // 1-based
  std::vector<Eigen::MatrixXd> layers;
};

enum class ExtractorKind { stub, vit_large_retfound, resnet34_imagenet };

ExtractorKind extractor_kind_from_string(const std::string& s);
std::string to_string(ExtractorKind kind);

struct ExtractorSpec {
  ExtractorKind kind = ExtractorKind::stub;
  int embedding_dim = 32;
  int input_h = 128;
  int input_w = 128;
  std::uint64_t seed = 0;      // stub only
  bool emits_attention = false;
  int attention_layers = 4;    // stub attention depth
  int patch_size = 16;
  std::string weights_path;    // adapter kinds
  bool use_cls_token = true;   // adapter representation switch

  static ExtractorSpec vit_large_retfound_defaults();
  static ExtractorSpec resnet34_defaults();
};

// Cache key: kind, dimension, input size, seed and preprocessing constants.
std::string fingerprint(const ExtractorSpec& spec,
                        const data::PrepConfig& prep);

// The stub's seeded projection. Entries of p and b are uniform in [-1, 1].
struct StubProjection {
  Eigen::MatrixXd p;  // (E-2) x 64
  Eigen::VectorXd b;  // E-2
};

StubProjection make_stub_projection(std::uint64_t seed, int embedding_dim);

// feature[0..E-3] = tanh(P * pool8x8(slice) + b); feature[E-2] = mean(slice);
// feature[E-1] = std(slice). The trailing pair makes synthetic volumes with
// distinct intensity statistics linearly separable by construction.
Eigen::VectorXd stub_eval(const StubProjection& proj,
                          const Eigen::MatrixXd& slice);
Eigen::VectorXd stub_extract(std::uint64_t seed, int embedding_dim,
                             const Eigen::MatrixXd& slice);

struct BackboneOutput {
  Eigen::VectorXd embedding;
  std::optional<AttentionStack> attention;
};

// Adapter seam for externally supplied encoders. Weights are never trained
// or implemented here; without them this raises ExternalDependencyError so
// callers can fall back to the stub. Precomputed features from an external
// encoder run can instead be placed in the cache (see README).
BackboneOutput backbone_extract(const ExtractorSpec& spec,
                                const std::vector<Eigen::MatrixXd>& channels);

FeatureSequence extract_features(const ExtractorSpec& spec,
                                 const data::PreprocessedVolume& volume);

// Deterministic synthetic attention stack for pipeline tests with the stub.
AttentionStack stub_attention(const ExtractorSpec& spec,
                              const std::string& volume_id, int slice_index);

void cache_put(const std::filesystem::path& store, const FeatureSequence& seq,
               const std::string& fingerprint);
std::optional<FeatureSequence> cache_get(const std::filesystem::path& store,
                                         const std::string& volume_id,
                                         const std::string& fingerprint);

}  // namespace octseq::features
