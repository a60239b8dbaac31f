#include "octseq/commands.hpp"

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <functional>

#include "octseq/baselines.hpp"
#include "octseq/eval.hpp"
#include "octseq/explain.hpp"

namespace octseq::cli {

namespace fs = std::filesystem;
using nlohmann::ordered_json;

namespace {

fs::path prepare_run_dir(const RunConfig& cfg, const std::string& command) {
  if (cfg.out_dir.empty()) throw UsageError("paths.out_dir must be set");
  const fs::path dir = fs::path(cfg.out_dir) / run_id(cfg, command);
  fs::create_directories(dir);
  io::write_file_atomic(dir / "config.json",
                        config_to_json(cfg).dump(2) + "\n");
  return dir;
}

std::vector<data::VolumeRecord> load_records(const RunConfig& cfg) {
  if (cfg.manifest.empty()) throw UsageError("paths.manifest must be set");
  return data::load_manifest(cfg.manifest);
}

void write_fold_plan(const fs::path& dir, const data::FoldPlan& plan) {
  data::save_fold_plan(dir / "fold_plan.json", plan);
}

void write_predictions(const fs::path& path,
                       const std::vector<std::string>& ids,
                       const std::vector<int>& labels,
                       const std::vector<double>& scores) {
  std::string out = "volume_id,label,score\n";
  for (std::size_t i = 0; i < ids.size(); ++i)
    out += ids[i] + "," + std::to_string(labels[i]) + "," +
           format_g17(scores[i]) + "\n";
  io::write_file_atomic(path, out);
}

ordered_json history_to_json(const train::TrainHistory& h) {
  ordered_json j;
  j["initial_val_loss"] = h.initial_val_loss;
  j["best_epoch"] = h.best_epoch;
  j["stopped_early"] = h.stopped_early;
  j["epochs_run"] = h.epochs.size();
  return j;
}

void write_cv_outputs(const fs::path& dir, const eval::CrossValResult& result) {
  write_fold_plan(dir, result.plan);
  for (std::size_t f = 0; f < result.folds.size(); ++f) {
    const eval::FoldOutcome& fold = result.folds[f];
    const std::string tag = std::to_string(f);
    train::save_history_csv(dir / ("history_" + tag + ".csv"), fold.history);
    model::save_checkpoint(dir / ("checkpoint_" + tag + ".ckpt"),
                           fold.best_params);
    write_predictions(dir / ("predictions_" + tag + ".csv"),
                      fold.test_volume_ids, fold.test_labels,
                      fold.test_scores);
  }
  ordered_json report = eval::report_to_json(result.report);
  report["folds"] = ordered_json::array();
  for (const eval::FoldOutcome& fold : result.folds)
    report["folds"].push_back(history_to_json(fold.history));
  io::write_file_atomic(dir / "report.json", report.dump(2) + "\n");
  io::write_file_atomic(dir / "report.txt",
                        eval::report_table(result.report));
}

}  // namespace

int cmd_synth(const RunConfig& cfg) {
  if (cfg.data_dir.empty() || cfg.manifest.empty())
    throw UsageError("synth needs paths.data_dir and paths.manifest");
  prepare_run_dir(cfg, "synth");
  const std::vector<data::VolumeRecord> records = eval::make_synthetic_dataset(
      cfg.synth.n_pos, cfg.synth.n_neg, cfg.synth.depth, cfg.seed);
  fs::create_directories(cfg.data_dir);
  for (const auto& rec : records) data::save_voxels(rec, cfg.data_dir);
  data::save_manifest(cfg.manifest, records);
  std::printf("wrote %zu synthetic volumes (%d positive, %d negative) to %s\n",
              records.size(), cfg.synth.n_pos, cfg.synth.n_neg,
              cfg.data_dir.c_str());
  return 0;
}

int cmd_ingest(const RunConfig& cfg) {
  prepare_run_dir(cfg, "ingest");
  std::vector<data::VolumeRecord> records = load_records(cfg);
  std::vector<std::string> problems;
  for (auto& rec : records) {
    try {
      data::load_voxels(rec, cfg.data_dir);
      rec.voxels.clear();
      rec.voxels.shrink_to_fit();
    } catch (const DataError& e) {
      problems.push_back(rec.volume_id + ": " + e.what());
    }
  }
  if (!problems.empty()) {
    for (const std::string& p : problems)
      std::fprintf(stderr, "invalid: %s\n", p.c_str());
    std::fprintf(stderr, "%zu of %zu volumes failed validation\n",
                 problems.size(), records.size());
    return 1;
  }
  std::printf("%zu volumes OK\n", records.size());
  return 0;
}

int cmd_extract(const RunConfig& cfg) {
  const fs::path dir = prepare_run_dir(cfg, "extract");
  std::vector<data::VolumeRecord> records = load_records(cfg);
  const std::vector<features::FeatureSequence> seqs =
      eval::extract_all(records, cfg.data_dir, cfg.extractor, cfg.prep,
                        cfg.cache_dir, cfg.jobs);
  ordered_json j;
  j["volumes"] = seqs.size();
  j["embedding_dim"] = cfg.extractor.embedding_dim;
  j["fingerprint"] = features::fingerprint(cfg.extractor, cfg.prep);
  io::write_file_atomic(dir / "extract_summary.json", j.dump(2) + "\n");
  std::printf("extracted %zu feature sequences (%d dims)\n", seqs.size(),
              cfg.extractor.embedding_dim);
  return 0;
}

int cmd_train(const RunConfig& cfg) {
  const fs::path dir = prepare_run_dir(cfg, "train");
  std::vector<data::VolumeRecord> records = load_records(cfg);
  const data::FoldPlan plan =
      data::make_fold_plan(records, cfg.k, cfg.seed);
  write_fold_plan(dir, plan);

  const std::vector<features::FeatureSequence> seqs =
      eval::extract_all(records, cfg.data_dir, cfg.extractor, cfg.prep,
                        cfg.cache_dir, cfg.jobs);
  std::vector<int> labels;
  for (const auto& rec : records) labels.push_back(rec.label);

  const data::FoldAssignment& fold = plan.folds.front();
  const auto train_idx = data::indices_for_subjects(records, fold.train);
  const auto val_idx = data::indices_for_subjects(records, fold.validation);
  const auto test_idx = data::indices_for_subjects(records, fold.test);

  model::HeadConfig head_cfg = cfg.head;
  head_cfg.input_dim = cfg.extractor.embedding_dim;
  const model::HeadParams init =
      model::init_head(head_cfg, rng::derive_seed(cfg.seed, 0x1217, 0));
  train::TrainResult trained = train::train_model(
      seqs, labels, train_idx, val_idx, init, cfg.focal, cfg.optim);

  train::save_history_csv(dir / "history.csv", trained.history);
  model::save_checkpoint(dir / "best.ckpt", trained.best);

  std::vector<std::string> ids;
  std::vector<int> test_labels;
  std::vector<double> scores;
  for (int i : test_idx) {
    ids.push_back(records[i].volume_id);
    test_labels.push_back(labels[i]);
    scores.push_back(
        model::head_forward(trained.best, seqs[i], model::Mode::eval).p);
  }
  write_predictions(dir / "predictions.csv", ids, test_labels, scores);

  ordered_json j = history_to_json(trained.history);
  const eval::MetricsReport metrics = eval::evaluate(scores, test_labels);
  j["test"] = {{"acc", metrics.acc}, {"auc", metrics.auc},
               {"sen", metrics.sen}, {"spe", metrics.spe},
               {"prc", metrics.prc}, {"f1", metrics.f1},
               {"mcc", metrics.mcc}};
  io::write_file_atomic(dir / "train_summary.json", j.dump(2) + "\n");
  std::printf("trained fold 0: best epoch %d, test F1 %.4f (outputs in %s)\n",
              trained.history.best_epoch, metrics.f1, dir.c_str());
  return 0;
}

namespace {

int run_cv_command(const RunConfig& cfg, const std::string& command,
                   model::CellKind cell) {
  if (cfg.k < 2) throw UsageError("k must be at least 2");
  const fs::path dir = prepare_run_dir(cfg, command);
  std::vector<data::VolumeRecord> records = load_records(cfg);

  model::HeadConfig head_cfg = cfg.head;
  head_cfg.input_dim = cfg.extractor.embedding_dim;
  head_cfg.cell = cell;

  eval::CrossValConfig cv_cfg;
  cv_cfg.k = cfg.k;
  cv_cfg.seed = cfg.seed;
  cv_cfg.cache_dir = cfg.cache_dir;
  cv_cfg.jobs = cfg.jobs;

  const eval::CrossValResult result =
      eval::cross_validate(records, cfg.data_dir, cfg.extractor, cfg.prep,
                           head_cfg, cfg.focal, cfg.optim, cv_cfg);
  write_cv_outputs(dir, result);
  std::printf("%s", eval::report_table(result.report).c_str());
  std::printf("outputs in %s\n", dir.c_str());
  return 0;
}

}  // namespace

int cmd_cv(const RunConfig& cfg) {
  return run_cv_command(cfg, "cv", cfg.head.cell);
}

int cmd_sweep(const RunConfig& cfg) {
  const fs::path dir = prepare_run_dir(cfg, "sweep");
  std::vector<data::VolumeRecord> records = load_records(cfg);
  const data::FoldPlan plan = data::make_fold_plan(records, cfg.k, cfg.seed);
  const std::vector<features::FeatureSequence> seqs =
      eval::extract_all(records, cfg.data_dir, cfg.extractor, cfg.prep,
                        cfg.cache_dir, cfg.jobs);
  std::vector<int> labels;
  for (const auto& rec : records) labels.push_back(rec.label);
  const data::FoldAssignment& fold = plan.folds.front();
  const auto train_idx = data::indices_for_subjects(records, fold.train);
  const auto val_idx = data::indices_for_subjects(records, fold.validation);

  struct Point {
    ordered_json params;
    model::HeadConfig head;
    train::FocalConfig focal;
  };
  std::vector<Point> points;
  model::HeadConfig base_head = cfg.head;
  base_head.input_dim = cfg.extractor.embedding_dim;

  if (cfg.sweep.grid == "gru_sizes") {
    std::vector<int> sizes = cfg.sweep.sizes;
    std::sort(sizes.begin(), sizes.end(), std::greater<int>());
    for (std::size_t i = 0; i < sizes.size(); ++i)
      for (std::size_t j = i; j < sizes.size(); ++j) {
        Point p{{{"hidden1", sizes[i]}, {"hidden2", sizes[j]}}, base_head,
                cfg.focal};
        p.head.hidden1 = sizes[i];
        p.head.hidden2 = sizes[j];
        points.push_back(std::move(p));
      }
  } else if (cfg.sweep.grid == "dropout") {
    for (double rate : cfg.sweep.dropout) {
      Point p{{{"dropout", rate}}, base_head, cfg.focal};
      p.head.dropout_rate = rate;
      points.push_back(std::move(p));
    }
  } else if (cfg.sweep.grid == "focal") {
    for (double a : cfg.sweep.alpha)
      for (double g : cfg.sweep.gamma) {
        Point p{{{"alpha", a}, {"gamma", g}}, base_head, cfg.focal};
        p.focal.alpha = a;
        p.focal.gamma = g;
        points.push_back(std::move(p));
      }
  } else {
    throw UsageError("unknown sweep grid: '" + cfg.sweep.grid + "'");
  }
  if (points.empty()) throw UsageError("sweep grid is empty");

  ordered_json table = ordered_json::array();
  for (std::size_t n = 0; n < points.size(); ++n) {
    const Point& point = points[n];
    const model::HeadParams init = model::init_head(
        point.head, rng::derive_seed(cfg.seed, 0x53ee, 0));
    const train::TrainResult trained =
        train::train_model(seqs, labels, train_idx, val_idx, init,
                           point.focal, cfg.optim);
    const train::EpochRecord& best =
        trained.history.epochs[trained.history.best_epoch];
    ordered_json row = point.params;
    row["val_f1"] = best.val_f1;
    row["val_loss"] = best.val_loss;
    row["best_epoch"] = trained.history.best_epoch;
    std::printf("point %zu/%zu %s -> val F1 %.4f\n", n + 1, points.size(),
                point.params.dump().c_str(), best.val_f1);
    table.push_back(std::move(row));
  }
  ordered_json j;
  j["grid"] = cfg.sweep.grid;
  j["points"] = table;
  io::write_file_atomic(dir / "sweep.json", j.dump(2) + "\n");
  std::printf("%zu grid points written to %s\n", points.size(), dir.c_str());
  return 0;
}

int cmd_ablate(const RunConfig& cfg) {
  if (cfg.ablation == "lstm")
    return run_cv_command(cfg, "ablate-lstm", model::CellKind::lstm);
  if (cfg.ablation == "resnet") {
    RunConfig resnet_cfg = cfg;
    features::ExtractorSpec spec = features::ExtractorSpec::resnet34_defaults();
    spec.weights_path = cfg.extractor.weights_path;
    resnet_cfg.extractor = spec;
    resnet_cfg.head.input_dim = spec.embedding_dim;
    return run_cv_command(resnet_cfg, "ablate-resnet", cfg.head.cell);
  }
  if (cfg.ablation == "svm") {
    const fs::path dir = prepare_run_dir(cfg, "ablate-svm");
    std::vector<data::VolumeRecord> records = load_records(cfg);
    const data::FoldPlan plan =
        data::make_fold_plan(records, cfg.k, cfg.seed);
    baselines::SvmBaselineConfig bcfg;
    bcfg.lambda = cfg.svm.lambda;
    bcfg.epochs = cfg.svm.epochs;
    bcfg.keep_features = cfg.svm.keep_features;
    bcfg.bins = cfg.svm.bins;
    bcfg.center_slice = cfg.svm.center_slice;
    bcfg.seed = cfg.seed;
    bcfg.cache_dir = cfg.cache_dir;
    bcfg.jobs = cfg.jobs;
    const baselines::SvmBaselineResult result = baselines::run_svm_baseline(
        records, cfg.data_dir, cfg.extractor, cfg.prep, plan, bcfg);

    write_fold_plan(dir, plan);
    ordered_json j;
    j["hyper_parameters"] = {{"lambda", bcfg.lambda},
                             {"epochs", bcfg.epochs},
                             {"keep_features", bcfg.keep_features},
                             {"bins", bcfg.bins},
                             {"center_slice", bcfg.center_slice},
                             {"discretization", "equal-frequency"}};
    j["slices"] = ordered_json::array();
    for (const auto& slice : result.slices) {
      ordered_json s;
      s["slot"] = slice.slot;
      s["slice_position_per_fold"] = slice.slice_position_per_fold;
      s["selected_features_per_fold"] = slice.selected_features_per_fold;
      s["report"] = eval::report_to_json(slice.cv);
      j["slices"].push_back(std::move(s));
    }
    j["ensemble"] = eval::report_to_json(result.ensemble);
    io::write_file_atomic(dir / "svm_report.json", j.dump(2) + "\n");

    for (const auto& slice : result.slices)
      std::printf("slice slot %d (fold-0 position %d): acc %.4f\n",
                  slice.slot, slice.slice_position_per_fold.front(),
                  slice.cv.aggregate.acc.mean);
    std::printf("majority vote: acc %.4f\n",
                result.ensemble.aggregate.acc.mean);
    std::printf("outputs in %s\n", dir.c_str());
    return 0;
  }
  throw UsageError("unknown ablation: '" + cfg.ablation +
                   "' (expected lstm, resnet, or svm)");
}

int cmd_explain(const RunConfig& cfg) {
  const fs::path dir = prepare_run_dir(cfg, "explain");
  std::vector<data::VolumeRecord> records = load_records(cfg);

  int target = -1;
  for (std::size_t i = 0; i < records.size(); ++i)
    if (records[i].volume_id == cfg.explain.volume_id)
      target = static_cast<int>(i);
  if (target < 0)
    throw DataError("unknown volume_id: '" + cfg.explain.volume_id + "'");

  data::load_voxels(records[target], cfg.data_dir);
  const data::VolumeRecord& rec = records[target];

  for (int s : cfg.explain.slices) {
    if (s < 1 || s > rec.depth)
      throw UsageError("slice index " + std::to_string(s) +
                       " outside 1.." + std::to_string(rec.depth));
    features::AttentionStack stack;
    if (cfg.extractor.kind == features::ExtractorKind::stub) {
      stack = features::stub_attention(cfg.extractor, rec.volume_id, s);
    } else {
      throw ExternalDependencyError(
          "external dependency unavailable: attention capture needs the "
          "encoder runtime; use the stub extractor for synthetic runs");
    }
    const explain::RolloutMap map = explain::attention_rollout(stack);

    Eigen::MatrixXd gray(rec.height, rec.width);
    const std::uint8_t* plane = rec.slice(s - 1);
    for (int y = 0; y < rec.height; ++y)
      for (int x = 0; x < rec.width; ++x)
        gray(y, x) = plane[y * rec.width + x] / 255.0;
    const Eigen::MatrixXd resized =
        data::bilinear_resize(gray, cfg.prep.target_h, cfg.prep.target_w);
    explain::render_heatmap(map, resized,
                            dir / ("heatmap_slice_" + std::to_string(s) +
                                   ".png"));
  }

  // Embedding export over the whole manifest.
  explain::EmbeddingExport exp;
  exp.source = cfg.explain.source;
  exp.fingerprint = features::fingerprint(cfg.extractor, cfg.prep);
  const std::vector<features::FeatureSequence> seqs =
      eval::extract_all(records, cfg.data_dir, cfg.extractor, cfg.prep,
                        cfg.cache_dir, cfg.jobs);
  if (cfg.explain.source == "slice_features") {
    const int s = cfg.explain.feature_slice;
    exp.rows.resize(records.size(), cfg.extractor.embedding_dim);
    for (std::size_t i = 0; i < records.size(); ++i) {
      if (s < 1 || s > records[i].depth)
        throw UsageError("feature slice outside the volume");
      exp.rows.row(i) = seqs[i].features.row(s - 1).cast<double>();
      exp.labels.push_back(records[i].label);
      exp.ids.push_back(records[i].volume_id);
    }
  } else if (cfg.explain.source == "head_pooled") {
    if (cfg.explain.checkpoint.empty())
      throw UsageError("head_pooled export needs explain.checkpoint");
    const model::HeadParams params =
        model::load_checkpoint(cfg.explain.checkpoint);
    exp.rows.resize(records.size(), 2 * params.config.hidden2);
    for (std::size_t i = 0; i < records.size(); ++i) {
      const auto out =
          model::head_forward(params, seqs[i], model::Mode::eval);
      exp.rows.row(i) = out.trace.pooled.transpose();
      exp.labels.push_back(records[i].label);
      exp.ids.push_back(records[i].volume_id);
    }
  } else {
    throw UsageError("unknown embedding source: '" + cfg.explain.source +
                     "' (expected slice_features or head_pooled)");
  }
  explain::export_embeddings(exp, dir / "embeddings.csv");
  std::printf("wrote %zu heatmaps and %zu embedding rows to %s\n",
              cfg.explain.slices.size(), exp.ids.size(), dir.c_str());
  return 0;
}

}  // namespace octseq::cli
