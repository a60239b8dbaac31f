#include "octseq/run_config.hpp"

#include <filesystem>
#include <fstream>

namespace octseq::cli {

using nlohmann::ordered_json;

nlohmann::ordered_json config_to_json(const RunConfig& cfg) {
  ordered_json j;
  j["paths"] = {{"manifest", cfg.manifest},
                {"data_dir", cfg.data_dir},
                {"cache_dir", cfg.cache_dir},
                {"out_dir", cfg.out_dir}};
  j["extractor"] = {{"kind", features::to_string(cfg.extractor.kind)},
                    {"embedding_dim", cfg.extractor.embedding_dim},
                    {"input_h", cfg.extractor.input_h},
                    {"input_w", cfg.extractor.input_w},
                    {"seed", cfg.extractor.seed},
                    {"emits_attention", cfg.extractor.emits_attention},
                    {"attention_layers", cfg.extractor.attention_layers},
                    {"patch_size", cfg.extractor.patch_size},
                    {"weights_path", cfg.extractor.weights_path},
                    {"use_cls_token", cfg.extractor.use_cls_token}};
  j["prep"] = {{"target_h", cfg.prep.target_h},
               {"target_w", cfg.prep.target_w},
               {"mean", cfg.prep.mean},
               {"stdev", cfg.prep.stdev}};
  j["head"] = {{"hidden1", cfg.head.hidden1},
               {"hidden2", cfg.head.hidden2},
               {"cell", model::to_string(cfg.head.cell)},
               {"dropout", cfg.head.dropout_rate}};
  j["focal"] = {{"alpha", cfg.focal.alpha}, {"gamma", cfg.focal.gamma}};
  j["optim"] = {{"lr0", cfg.optim.lr0},
                {"beta1", cfg.optim.beta1},
                {"beta2", cfg.optim.beta2},
                {"eps", cfg.optim.eps},
                {"decay_factor", cfg.optim.decay_factor},
                {"decay_period_epochs", cfg.optim.decay_period_epochs},
                {"batch_size", cfg.optim.batch_size},
                {"max_epochs", cfg.optim.max_epochs},
                {"patience", cfg.optim.patience},
                {"seed", cfg.optim.seed}};
  j["k"] = cfg.k;
  j["seed"] = cfg.seed;
  j["jobs"] = cfg.jobs;
  j["synth"] = {{"n_pos", cfg.synth.n_pos},
                {"n_neg", cfg.synth.n_neg},
                {"depth", cfg.synth.depth}};
  j["explain"] = {{"volume_id", cfg.explain.volume_id},
                  {"slices", cfg.explain.slices},
                  {"source", cfg.explain.source},
                  {"feature_slice", cfg.explain.feature_slice},
                  {"checkpoint", cfg.explain.checkpoint}};
  j["svm"] = {{"lambda", cfg.svm.lambda},
              {"epochs", cfg.svm.epochs},
              {"keep_features", cfg.svm.keep_features},
              {"bins", cfg.svm.bins},
              {"center_slice", cfg.svm.center_slice}};
  j["sweep"] = {{"grid", cfg.sweep.grid},
                {"sizes", cfg.sweep.sizes},
                {"dropout", cfg.sweep.dropout},
                {"alpha", cfg.sweep.alpha},
                {"gamma", cfg.sweep.gamma}};
  j["ablation"] = cfg.ablation;
  return j;
}

namespace {

template <typename T>
void read_field(const ordered_json& j, const char* key, T& out) {
  if (j.contains(key)) j.at(key).get_to(out);
}

}  // namespace

RunConfig config_from_json(const ordered_json& j) {
  RunConfig cfg;
  if (j.contains("paths")) {
    const auto& p = j.at("paths");
    read_field(p, "manifest", cfg.manifest);
    read_field(p, "data_dir", cfg.data_dir);
    read_field(p, "cache_dir", cfg.cache_dir);
    read_field(p, "out_dir", cfg.out_dir);
  }
  if (j.contains("extractor")) {
    const auto& e = j.at("extractor");
    if (e.contains("kind"))
      cfg.extractor.kind =
          features::extractor_kind_from_string(e.at("kind").get<std::string>());
    read_field(e, "embedding_dim", cfg.extractor.embedding_dim);
    read_field(e, "input_h", cfg.extractor.input_h);
    read_field(e, "input_w", cfg.extractor.input_w);
    read_field(e, "seed", cfg.extractor.seed);
    read_field(e, "emits_attention", cfg.extractor.emits_attention);
    read_field(e, "attention_layers", cfg.extractor.attention_layers);
    read_field(e, "patch_size", cfg.extractor.patch_size);
    read_field(e, "weights_path", cfg.extractor.weights_path);
    read_field(e, "use_cls_token", cfg.extractor.use_cls_token);
  }
  if (j.contains("prep")) {
    const auto& p = j.at("prep");
    read_field(p, "target_h", cfg.prep.target_h);
    read_field(p, "target_w", cfg.prep.target_w);
    read_field(p, "mean", cfg.prep.mean);
    read_field(p, "stdev", cfg.prep.stdev);
  }
  if (j.contains("head")) {
    const auto& h = j.at("head");
    read_field(h, "hidden1", cfg.head.hidden1);
    read_field(h, "hidden2", cfg.head.hidden2);
    if (h.contains("cell"))
      cfg.head.cell =
          model::cell_kind_from_string(h.at("cell").get<std::string>());
    read_field(h, "dropout", cfg.head.dropout_rate);
  }
  if (j.contains("focal")) {
    read_field(j.at("focal"), "alpha", cfg.focal.alpha);
    read_field(j.at("focal"), "gamma", cfg.focal.gamma);
  }
  if (j.contains("optim")) {
    const auto& o = j.at("optim");
    read_field(o, "lr0", cfg.optim.lr0);
    read_field(o, "beta1", cfg.optim.beta1);
    read_field(o, "beta2", cfg.optim.beta2);
    read_field(o, "eps", cfg.optim.eps);
    read_field(o, "decay_factor", cfg.optim.decay_factor);
    read_field(o, "decay_period_epochs", cfg.optim.decay_period_epochs);
    read_field(o, "batch_size", cfg.optim.batch_size);
    read_field(o, "max_epochs", cfg.optim.max_epochs);
    read_field(o, "patience", cfg.optim.patience);
    read_field(o, "seed", cfg.optim.seed);
  }
  read_field(j, "k", cfg.k);
  read_field(j, "seed", cfg.seed);
  read_field(j, "jobs", cfg.jobs);
  if (j.contains("synth")) {
    const auto& s = j.at("synth");
    read_field(s, "n_pos", cfg.synth.n_pos);
    read_field(s, "n_neg", cfg.synth.n_neg);
    read_field(s, "depth", cfg.synth.depth);
  }
  if (j.contains("explain")) {
    const auto& e = j.at("explain");
    read_field(e, "volume_id", cfg.explain.volume_id);
    read_field(e, "slices", cfg.explain.slices);
    read_field(e, "source", cfg.explain.source);
    read_field(e, "feature_slice", cfg.explain.feature_slice);
    read_field(e, "checkpoint", cfg.explain.checkpoint);
  }
  if (j.contains("svm")) {
    const auto& s = j.at("svm");
    read_field(s, "lambda", cfg.svm.lambda);
    read_field(s, "epochs", cfg.svm.epochs);
    read_field(s, "keep_features", cfg.svm.keep_features);
    read_field(s, "bins", cfg.svm.bins);
    read_field(s, "center_slice", cfg.svm.center_slice);
  }
  if (j.contains("sweep")) {
    const auto& s = j.at("sweep");
    read_field(s, "grid", cfg.sweep.grid);
    read_field(s, "sizes", cfg.sweep.sizes);
    read_field(s, "dropout", cfg.sweep.dropout);
    read_field(s, "alpha", cfg.sweep.alpha);
    read_field(s, "gamma", cfg.sweep.gamma);
  }
  read_field(j, "ablation", cfg.ablation);

  cfg.head.input_dim = cfg.extractor.embedding_dim;
  return cfg;
}

RunConfig load_config(const std::string& path,
                      const std::vector<std::string>& overrides) {
  if (!std::filesystem::exists(path))
    throw UsageError("config file not found: " + path);
  ordered_json j;
  try {
    std::ifstream in(path);
    in >> j;
  } catch (const std::exception& e) {
    throw UsageError("config is not valid JSON: " + std::string(e.what()));
  }

  for (const std::string& ov : overrides) {
    const std::size_t eq = ov.find('=');
    if (eq == std::string::npos || eq == 0)
      throw UsageError("override must look like key=value: " + ov);
    const std::string key = ov.substr(0, eq);
    const std::string raw = ov.substr(eq + 1);
    ordered_json value;
    try {
      value = ordered_json::parse(raw);
    } catch (const std::exception&) {
      value = raw;  // bare strings are legal values
    }
    ordered_json* node = &j;
    std::size_t start = 0;
    for (;;) {
      const std::size_t dot = key.find('.', start);
      const std::string part =
          key.substr(start, dot == std::string::npos ? dot : dot - start);
      if (part.empty())
        throw UsageError("override key has an empty segment: " + key);
      if (dot == std::string::npos) {
        (*node)[part] = value;
        break;
      }
      node = &(*node)[part];
      start = dot + 1;
    }
  }

  try {
    return config_from_json(j);
  } catch (const UsageError&) {
    throw;
  } catch (const std::exception& e) {
    throw UsageError("config field has the wrong type: " +
                     std::string(e.what()));
  }
}

std::string run_id(const RunConfig& cfg, const std::string& command) {
  ordered_json j = config_to_json(cfg);
  j.erase("paths");  // reruns elsewhere on disk stay comparable
  j.erase("jobs");   // parallelism never changes results
  return command + "-" + hex64(fnv1a(command + j.dump()));
}

}  // namespace octseq::cli
