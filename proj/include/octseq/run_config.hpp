#pragma once

#include <string>
#include <vector>

#include "json.hpp"
#include "octseq/data.hpp"
#include "octseq/features.hpp"
#include "octseq/model.hpp"
#include "octseq/train.hpp"

namespace octseq::cli {

struct SynthParams {
  int n_pos = 60;
  int n_neg = 30;
  int depth = 64;
};

struct ExplainParams {
  std::string volume_id;
  std::vector<int> slices{1, 32, 64};  // 1-based
  std::string source = "head_pooled";  // or "slice_features"
  int feature_slice = 32;              // for slice_features export
  std::string checkpoint;              // required for head_pooled
};

struct SvmParams {
  double lambda = 0.01;
  int epochs = 50;
  int keep_features = 128;
  int bins = 10;
  int center_slice = 32;
};

struct SweepParams {
  std::string grid = "gru_sizes";  // gru_sizes | dropout | focal
  std::vector<int> sizes{512, 256, 128};
  std::vector<double> dropout{0.0, 0.1, 0.2, 0.3, 0.4, 0.5};
  std::vector<double> alpha{0.1, 0.2, 0.3, 0.4, 0.5};
  std::vector<double> gamma{0.0, 2.0, 5.0};
};

struct RunConfig {
  std::string manifest, data_dir, cache_dir, out_dir;
  features::ExtractorSpec extractor;
  data::PrepConfig prep;
  model::HeadConfig head;  // input_dim is always taken from the extractor
  train::FocalConfig focal;
  train::OptimConfig optim;
  int k = 5;
  std::uint64_t seed = 0;
  int jobs = 1;
  SynthParams synth;
  ExplainParams explain;
  SvmParams svm;
  SweepParams sweep;
  std::string ablation;  // lstm | resnet | svm
};

nlohmann::ordered_json config_to_json(const RunConfig& cfg);
RunConfig config_from_json(const nlohmann::ordered_json& j);

// Parses the file, applies key=value overrides (dotted paths into the JSON
// document; values parsed as JSON scalars when possible), then decodes.
RunConfig load_config(const std::string& path,
                      const std::vector<std::string>& overrides);

// Deterministic directory name under out_dir: the command plus a hash of
// every non-path field, so reruns of one configuration land in one place.
std::string run_id(const RunConfig& cfg, const std::string& command);

}  // namespace octseq::cli
