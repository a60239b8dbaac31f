#pragma once

#include <Eigen/Dense>
#include <filesystem>
#include <string>
#include <vector>

#include "octseq/features.hpp"

namespace octseq::explain {

struct RolloutMap {
  std::string volume_id;
  int slice_index = 0;           // 1-based
  Eigen::MatrixXd rollout;       // T x T, row-stochastic
  Eigen::MatrixXd heatmap;       // patch grid, entries in [0,1]
};

// Per layer: residual-mix half the attention with the identity,
// row-normalize, and left-multiply onto the running product. The heatmap is
// the class-token row over patch tokens, min-max normalized and reshaped to
// the patch grid. Row-stochasticity is asserted after every layer.
RolloutMap attention_rollout(const features::AttentionStack& stack);

// Color-mapped overlay of the (bilinearly upsampled) heatmap on a [0,1]
// grayscale slice. Output bytes depend only on the inputs.
void render_heatmap(const RolloutMap& map, const Eigen::MatrixXd& slice01,
                    const std::filesystem::path& png_path);

struct EmbeddingExport {
  Eigen::MatrixXd rows;            // n x d
  std::vector<int> labels;         // n
  std::vector<std::string> ids;    // n
  std::string source;              // "slice_features" or "head_pooled"
  std::string fingerprint;         // extractor identity
};

// CSV with header id,label,f0..f{d-1}; values at 17 significant digits so
// the round-trip is lossless.
void export_embeddings(const EmbeddingExport& exp,
                       const std::filesystem::path& path);
EmbeddingExport read_embeddings(const std::filesystem::path& path);

}  // namespace octseq::explain
