// End-to-end acceptance gate. Runs nine independent checks — oracle-backed
// numerics first, then full pipeline runs through the command-line binary —
// and prints one verdict line per check. Exits non-zero if any fail.
//
// Usage: acceptance <path-to-cli-binary>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <functional>
#include <set>
#include <string>
#include <sys/wait.h>
#include <vector>

#include "json.hpp"
#include "octseq/baselines.hpp"
#include "octseq/explain.hpp"
#include "octseq/train.hpp"
#include "support/oracles.hpp"

using namespace octseq;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::string g_cli;
fs::path g_root;

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
      .count();
}

int run_cli(const std::string& args) {
  static int invocation = 0;
  const fs::path log = g_root / ("cli." + std::to_string(invocation++) + ".log");
  const std::string cmd =
      "\"" + g_cli + "\" " + args + " > \"" + log.string() + "\" 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

struct Verdict {
  bool pass = false;
  std::string detail;
};

// ---------------------------------------------------------------------------
// 1. Analytic gradients of focal-loss ∘ head against central differences.

Verdict criterion_gradients() {
  const auto t0 = std::chrono::steady_clock::now();
  model::HeadConfig cfg;
  cfg.input_dim = 8;
  cfg.hidden1 = 6;
  cfg.hidden2 = 4;
  cfg.dropout_rate = 0.3;
  train::FocalConfig fcfg;  // alpha 0.3, gamma 2

  double worst = 0.0;
  rng::Engine eng(900);
  for (int inst = 0; inst < 20; ++inst) {
    model::HeadParams params = model::init_head(cfg, 1000 + inst);
    Eigen::MatrixXd seq(5, 8);
    for (Eigen::Index i = 0; i < seq.size(); ++i)
      seq(i / 8, i % 8) = rng::gaussian(eng);
    const int y = inst % 2;
    const std::uint64_t mask_seed = 77 + inst;

    const auto fwd = model::head_forward(params, seq, model::Mode::train,
                                         mask_seed);
    const auto focal = train::focal_loss(fwd.p, y, fcfg);
    model::HeadParams analytic =
        model::head_backward(params, fwd.trace, focal.dL_dp);

    auto slots = model::list_params(params);
    auto grad_slots = model::list_params(analytic);
    const double eps = 1e-5;
    for (std::size_t s = 0; s < slots.size(); ++s)
      for (Eigen::Index i = 0; i < slots[s].size(); ++i) {
        const double saved = slots[s].data[i];
        slots[s].data[i] = saved + eps;
        const double up = train::focal_loss(
            model::head_forward(params, seq, model::Mode::train, mask_seed).p,
            y, fcfg).loss;
        slots[s].data[i] = saved - eps;
        const double dn = train::focal_loss(
            model::head_forward(params, seq, model::Mode::train, mask_seed).p,
            y, fcfg).loss;
        slots[s].data[i] = saved;
        const double fd = (up - dn) / (2 * eps);
        worst = std::max(worst,
                         oracles::rel_err(grad_slots[s].data[i], fd));
      }
  }
  const double elapsed = seconds_since(t0);
  char buf[160];
  std::snprintf(buf, sizeof(buf),
                "20 instances, max relative error %.3g, %.1fs", worst,
                elapsed);
  return {worst <= 1e-5 && elapsed < 60.0, buf};
}

// ---------------------------------------------------------------------------
// 2. Focal loss at gamma 0 equals alpha-weighted cross-entropy.

Verdict criterion_focal_reduction() {
  double worst = 0.0;
  for (double alpha : {0.1, 0.3, 0.5})
    for (int y : {0, 1})
      for (int i = 1; i <= 99; ++i) {
        const double p = i / 100.0;
        const auto got = train::focal_loss(p, y, {alpha, 0.0});
        worst = std::max(
            worst, std::abs(got.loss - oracles::ref_weighted_ce(p, y, alpha)));
      }
  char buf[120];
  std::snprintf(buf, sizeof(buf),
                "99-point grid x 2 labels x 3 alphas, max |diff| %.3g", worst);
  return {worst <= 1e-12, buf};
}

// ---------------------------------------------------------------------------
// 3. Metric suite against brute-force oracles plus the published-scale MCC.

Verdict criterion_metrics() {
  rng::Engine eng(901);
  for (int trial = 0; trial < 1000; ++trial) {
    std::vector<double> scores;
    std::vector<int> labels;
    const int n = 3 + int(rng::bounded(eng, 50));
    for (int i = 0; i < n; ++i) {
      scores.push_back(trial % 2 ? rng::uniform_unit(eng)
                                 : double(rng::bounded(eng, 8)) / 8.0);
      labels.push_back(int(rng::bounded(eng, 2)));
    }
    const double thr = rng::uniform_unit(eng);
    const auto got = eval::confusion(scores, labels, thr);
    const auto want = oracles::ref_confusion(scores, labels, thr);
    if (got.tp != want.tp || got.tn != want.tn || got.fp != want.fp ||
        got.fn != want.fn)
      return {false, "confusion recount mismatch"};
    if (std::abs(eval::mcc(got) -
                 oracles::ref_mcc(got.tp, got.tn, got.fp, got.fn)) > 1e-12)
      return {false, "mcc mismatch against reference"};
  }

  double worst = 0.0;
  int checked = 0;
  while (checked < 200) {
    std::vector<double> scores;
    std::vector<int> labels;
    const int n = 5 + int(rng::bounded(eng, 60));
    for (int i = 0; i < n; ++i) {
      scores.push_back(checked % 2 ? rng::uniform_unit(eng)
                                   : double(rng::bounded(eng, 6)) / 6.0);
      labels.push_back(int(rng::bounded(eng, 2)));
    }
    if (!std::count(labels.begin(), labels.end(), 1) ||
        !std::count(labels.begin(), labels.end(), 0))
      continue;
    ++checked;
    worst = std::max(worst, std::abs(eval::auc(scores, labels) -
                                     oracles::ref_auc_pairwise(scores, labels)));
  }
  if (worst > 1e-12)
    return {false, "pairwise rank oracle disagrees"};

  eval::ConfusionCounts published;
  published.tp = 798;
  published.fn = 49;
  published.tn = 192;
  published.fp = 71;
  const double m = eval::mcc(published);
  char buf[160];
  std::snprintf(buf, sizeof(buf),
                "1000 recounts exact, 200 rank sets (max |diff| %.3g), "
                "count-level coefficient %.4f",
                worst, m);
  return {std::abs(m - 0.693) <= 0.001, buf};
}

// ---------------------------------------------------------------------------
// 4. Subject-disjoint folds and class-balanced batches over 100 seeds.

Verdict criterion_splits() {
  rng::Engine cohort_eng(902);
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    std::vector<data::VolumeRecord> records;
    const int n_subjects = 12 + int(rng::bounded(cohort_eng, 20));
    for (int s = 0; s < n_subjects; ++s) {
      const int label =
          s < 10 ? s % 2 : int(rng::bounded(cohort_eng, 2));
      const int volumes = 1 + int(rng::bounded(cohort_eng, 3));
      for (int v = 0; v < volumes; ++v) {
        data::VolumeRecord r;
        char id[32];
        std::snprintf(id, sizeof(id), "s%03d", s);
        r.subject_id = id;
        std::snprintf(id, sizeof(id), "s%03d_v%d", s, v);
        r.volume_id = id;
        r.label = label;
        r.depth = 1;
        r.height = 1;
        r.width = 1;
        records.push_back(r);
      }
    }
    const auto plan = data::make_fold_plan(records, 5, seed);
    std::set<std::string> tested;
    for (const auto& fold : plan.folds) {
      std::set<std::string> seen;
      for (const auto* subset : {&fold.train, &fold.validation, &fold.test})
        for (const auto& s : *subset)
          if (!seen.insert(s).second)
            return {false, "subject in two subsets of one fold"};
      if (int(seen.size()) != n_subjects)
        return {false, "fold drops a subject"};
      for (const auto& s : fold.test)
        if (!tested.insert(s).second)
          return {false, "subject tested in two folds"};
    }
    if (int(tested.size()) != n_subjects)
      return {false, "test sets do not partition the subjects"};

    // Balanced batches on fold 0's training volumes.
    std::vector<int> labels;
    for (const auto& r : records) labels.push_back(r.label);
    const auto train_idx =
        data::indices_for_subjects(records, plan.folds[0].train);
    for (int batch_size : {4, 8, 9}) {
      const auto batches =
          data::balanced_batches(labels, train_idx, batch_size, seed);
      for (const auto& batch : batches.batches) {
        if (int(batch.size()) != batch_size) continue;  // trailing remainder
        long pos = 0;
        for (int idx : batch) pos += labels[idx];
        if (std::abs(2 * pos - long(batch.size())) > 1)
          return {false, "a full batch is class-imbalanced"};
      }
    }
  }
  return {true, "100 cohorts, k=5: disjoint folds, partitioned tests, "
                "balanced batches"};
}

// ---------------------------------------------------------------------------
// 5. Attention rollout algebra.

Verdict criterion_rollout() {
  for (int layers : {1, 4, 24}) {
    features::AttentionStack stack;
    stack.volume_id = "acc";
    stack.slice_index = 1;
    for (int l = 0; l < layers; ++l)
      stack.layers.push_back(Eigen::MatrixXd::Identity(17, 17));
    const auto map = explain::attention_rollout(stack);
    if ((map.rollout - Eigen::MatrixXd::Identity(17, 17)).cwiseAbs()
            .maxCoeff() > 1e-12)
      return {false, "identity stack does not roll out to identity"};
    for (Eigen::Index i = 0; i < map.rollout.rows(); ++i)
      if (std::abs(map.rollout.row(i).sum() - 1.0) > 1e-6)
        return {false, "rollout row drifts from stochasticity"};
  }

  const int t = 10;
  const Eigen::MatrixXd u = Eigen::MatrixXd::Constant(t, t, 1.0 / t);
  features::AttentionStack two;
  two.volume_id = "acc";
  two.slice_index = 2;
  two.layers = {u, u};
  const Eigen::MatrixXd mixed =
      0.5 * u + 0.5 * Eigen::MatrixXd::Identity(t, t);
  const Eigen::MatrixXd scratch = oracles::ref_matmul(mixed, mixed);
  const double diff =
      (explain::attention_rollout(two).rollout - scratch).cwiseAbs()
          .maxCoeff();
  char buf[120];
  std::snprintf(buf, sizeof(buf),
                "identity at L=1/4/24, uniform two-layer |diff| %.3g vs "
                "scratch product",
                diff);
  return {diff <= 1e-12, buf};
}

// ---------------------------------------------------------------------------
// Shared synthetic workspace for the pipeline criteria.

fs::path write_pipeline_config(const std::string& name,
                               const fs::path& out_dir) {
  json cfg;
  cfg["paths"]["manifest"] = (g_root / "data" / "manifest.csv").string();
  cfg["paths"]["data_dir"] = (g_root / "data").string();
  cfg["paths"]["cache_dir"] = (g_root / "cache").string();
  cfg["paths"]["out_dir"] = out_dir.string();
  cfg["extractor"]["kind"] = "stub";
  cfg["extractor"]["embedding_dim"] = 32;
  cfg["extractor"]["seed"] = 2;
  cfg["head"]["hidden1"] = 32;
  cfg["head"]["hidden2"] = 16;
  cfg["head"]["dropout"] = 0.2;
  cfg["focal"]["alpha"] = 0.3;
  cfg["focal"]["gamma"] = 2.0;
  cfg["optim"]["lr0"] = 0.01;
  cfg["optim"]["batch_size"] = 8;
  cfg["optim"]["max_epochs"] = 25;
  cfg["optim"]["patience"] = 6;
  cfg["optim"]["seed"] = 5;
  cfg["synth"]["n_pos"] = 60;
  cfg["synth"]["n_neg"] = 30;
  cfg["synth"]["depth"] = 64;
  cfg["svm"]["keep_features"] = 16;
  cfg["k"] = 5;
  cfg["seed"] = 17;
  cfg["jobs"] = 4;
  const fs::path path = g_root / (name + ".json");
  io::write_file_atomic(path, cfg.dump(2) + "\n");
  return path;
}

// The single run directory under an out root.
fs::path only_run_dir(const fs::path& out_root, const std::string& prefix) {
  for (const auto& entry : fs::directory_iterator(out_root))
    if (entry.is_directory() &&
        entry.path().filename().string().rfind(prefix, 0) == 0)
      return entry.path();
  throw DataError("no run directory under " + out_root.string());
}

std::vector<double> history_column(const fs::path& csv, int column) {
  const std::string bytes = io::read_file(csv);
  std::vector<double> values;
  std::size_t start = bytes.find('\n') + 1;  // skip header
  while (start < bytes.size()) {
    std::size_t end = bytes.find('\n', start);
    if (end == std::string::npos) end = bytes.size();
    const auto fields = split(bytes.substr(start, end - start), ',');
    if (int(fields.size()) > column)
      values.push_back(std::strtod(fields[column].c_str(), nullptr));
    start = end + 1;
  }
  return values;
}

Verdict criterion_synthetic_end_to_end() {
  const fs::path out = g_root / "out_cv";
  fs::create_directories(out);
  const fs::path cfg = write_pipeline_config("cv", out);

  const auto t0 = std::chrono::steady_clock::now();
  if (run_cli("synth --config \"" + cfg.string() + "\"") != 0)
    return {false, "synth failed"};

  // Separability pre-check: a perceptron on mean-pooled stub features must
  // fit the synthetic cohort with zero errors.
  auto records = data::load_manifest(g_root / "data" / "manifest.csv");
  features::ExtractorSpec spec;
  spec.embedding_dim = 32;
  spec.seed = 2;
  Eigen::MatrixXd pooled(records.size(), spec.embedding_dim);
  std::vector<int> labels;
  for (std::size_t i = 0; i < records.size(); ++i) {
    data::load_voxels(records[i], g_root / "data");
    const auto prep = data::preprocess(records[i], data::PrepConfig{});
    const auto seq = features::extract_features(spec, prep);
    pooled.row(i) =
        seq.features.colwise().mean().cast<double>().transpose();
    labels.push_back(records[i].label);
    records[i].voxels.clear();
  }
  if (oracles::perceptron_errors(pooled, labels) != 0)
    return {false, "perceptron oracle found the cohort non-separable"};

  if (run_cli("cv --config \"" + cfg.string() + "\"") != 0)
    return {false, "cv failed"};
  const double elapsed = seconds_since(t0);

  const auto report = json::parse(
      io::read_file(only_run_dir(out, "cv-") / "report.json"));
  const double auc = report["aggregate"]["auc"]["mean"].get<double>();
  const double f1 = report["aggregate"]["f1"]["mean"].get<double>();

  for (int f = 0; f < 5; ++f) {
    const auto val = history_column(
        only_run_dir(out, "cv-") /
            ("history_" + std::to_string(f) + ".csv"), 2);
    const int best = report["folds"][f]["best_epoch"].get<int>();
    if (best < 1 || best >= int(val.size()) || !(val[best] < val[0]))
      return {false, "fold " + std::to_string(f) +
                         " validation loss did not decrease to best epoch"};
  }

  char buf[160];
  std::snprintf(buf, sizeof(buf),
                "mean AUC %.4f, mean F1 %.4f, separable, %.0fs", auc, f1,
                elapsed);
  return {auc >= 0.90 && f1 >= 0.85 && elapsed < 600.0, buf};
}

// ---------------------------------------------------------------------------
// 7. Ablations: recurrent-cell swap and the slice-voting baseline.

Verdict criterion_ablations() {
  const fs::path out_lstm = g_root / "out_lstm";
  const fs::path out_svm = g_root / "out_svm";
  fs::create_directories(out_lstm);
  fs::create_directories(out_svm);
  const fs::path cfg_lstm = write_pipeline_config("lstm", out_lstm);
  const fs::path cfg_svm = write_pipeline_config("svm", out_svm);

  if (run_cli("ablate --config \"" + cfg_lstm.string() + "\" --which lstm") !=
      0)
    return {false, "lstm ablation failed"};
  const auto lstm_report = json::parse(io::read_file(
      only_run_dir(out_lstm, "ablate-lstm-") / "report.json"));
  const double lstm_auc =
      lstm_report["aggregate"]["auc"]["mean"].get<double>();

  if (run_cli("ablate --config \"" + cfg_svm.string() + "\" --which svm") != 0)
    return {false, "svm ablation failed"};
  const auto svm_report = json::parse(io::read_file(
      only_run_dir(out_svm, "ablate-svm-") / "svm_report.json"));
  if (svm_report["slices"].size() != 5 || !svm_report.contains("ensemble"))
    return {false, "svm report cardinality wrong"};
  double best_single = 0.0;
  for (const auto& slice : svm_report["slices"])
    best_single = std::max(
        best_single,
        slice["report"]["aggregate"]["acc"]["mean"].get<double>());
  const double vote =
      svm_report["ensemble"]["aggregate"]["acc"]["mean"].get<double>();

  char buf[160];
  std::snprintf(buf, sizeof(buf),
                "lstm AUC %.4f; voting acc %.4f vs best single %.4f",
                lstm_auc, vote, best_single);
  return {lstm_auc >= 0.85 && vote >= best_single - 0.02, buf};
}

// ---------------------------------------------------------------------------
// 8. Byte-identical reports on rerun.

Verdict criterion_determinism() {
  const struct {
    const char* name;
    const char* command;
    const char* prefix;
    const char* artifact;
    const char* original_out;
  } runs[] = {
      {"cv2", "cv", "cv-", "report.json", "out_cv"},
      {"lstm2", "ablate", "ablate-lstm-", "report.json", "out_lstm"},
      {"svm2", "ablate", "ablate-svm-", "svm_report.json", "out_svm"},
  };
  for (const auto& r : runs) {
    const fs::path out = g_root / ("out_" + std::string(r.name));
    fs::create_directories(out);
    const fs::path cfg = write_pipeline_config(r.name, out);
    std::string args = std::string(r.command) + " --config \"" +
                       cfg.string() + "\"";
    if (std::string(r.command) == "ablate")
      args += std::string(" --which ") +
              (std::string(r.prefix) == "ablate-lstm-" ? "lstm" : "svm");
    if (run_cli(args) != 0)
      return {false, std::string(r.name) + " rerun failed"};
    const std::string a = io::read_file(
        only_run_dir(g_root / r.original_out, r.prefix) / r.artifact);
    const std::string b =
        io::read_file(only_run_dir(out, r.prefix) / r.artifact);
    if (a != b)
      return {false, std::string(r.artifact) + " differs for " + r.name};
  }
  return {true, "cv and both ablations byte-identical on rerun"};
}

// ---------------------------------------------------------------------------
// 9. Missing backbone assets degrade to the dependency exit code.

Verdict criterion_missing_assets() {
  const fs::path out = g_root / "out_resnet";
  fs::create_directories(out);
  const fs::path cfg = write_pipeline_config("resnet", out);
  const int code =
      run_cli("ablate --config \"" + cfg.string() + "\" --which resnet");
  char buf[80];
  std::snprintf(buf, sizeof(buf), "exit code %d without weight files", code);
  return {code == 3, buf};
}

}  // namespace

int main(int argc, char** argv) {
  if (argc < 2) {
    std::fprintf(stderr, "usage: acceptance <path-to-cli-binary>\n");
    return 2;
  }
  g_cli = argv[1];
  g_root = fs::temp_directory_path() / "octseq_acceptance";
  fs::remove_all(g_root);
  fs::create_directories(g_root);

  const struct {
    int id;
    const char* title;
    std::function<Verdict()> check;
  } criteria[] = {
      {1, "head gradients vs central differences", criterion_gradients},
      {2, "focal loss reduces to weighted cross-entropy",
       criterion_focal_reduction},
      {3, "metric suite vs brute-force oracles", criterion_metrics},
      {4, "subject-disjoint folds and balanced batches", criterion_splits},
      {5, "attention rollout algebra", criterion_rollout},
      {6, "synthetic end-to-end cross-validation",
       criterion_synthetic_end_to_end},
      {7, "ablation battery (lstm cell, slice voting)", criterion_ablations},
      {8, "byte-identical reports on rerun", criterion_determinism},
      {9, "missing backbone assets exit cleanly", criterion_missing_assets},
  };

  int failures = 0;
  for (const auto& c : criteria) {
    Verdict v;
    try {
      v = c.check();
    } catch (const std::exception& e) {
      v = {false, std::string("exception: ") + e.what()};
    }
    std::printf("criterion %d: %s — %s (%s)\n", c.id,
                v.pass ? "PASS" : "FAIL", c.title, v.detail.c_str());
    std::fflush(stdout);
    if (!v.pass) ++failures;
  }
  if (failures) std::printf("%d criteria failed\n", failures);
  return failures == 0 ? 0 : 1;
}
