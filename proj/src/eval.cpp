#include "octseq/eval.hpp"

#include <algorithm>
#include <boost/math/distributions/students_t.hpp>
#include <cmath>
#include <cstdio>
#include <mutex>
#include <numeric>
#include <thread>

namespace octseq::eval {

ConfusionCounts confusion(const std::vector<double>& scores,
                          const std::vector<int>& labels, double threshold) {
  if (scores.size() != labels.size())
    throw DataError("score/label count mismatch");
  if (scores.empty()) throw DataError("empty prediction set");
  ConfusionCounts c;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    const bool pred = scores[i] >= threshold;
    if (labels[i] == 1)
      pred ? ++c.tp : ++c.fn;
    else
      pred ? ++c.fp : ++c.tn;
  }
  return c;
}

namespace {

double ratio(long num, long den, bool& undefined) {
  if (den == 0) {
    undefined = true;
    return 0.0;
  }
  return static_cast<double>(num) / static_cast<double>(den);
}

}  // namespace

BasicMetrics basic_metrics(const ConfusionCounts& c) {
  if (c.total() <= 0) throw DataError("empty confusion counts");
  BasicMetrics m;
  m.acc = static_cast<double>(c.tp + c.tn) / static_cast<double>(c.total());
  m.sen = ratio(c.tp, c.tp + c.fn, m.any_undefined);
  m.spe = ratio(c.tn, c.tn + c.fp, m.any_undefined);
  m.prc = ratio(c.tp, c.tp + c.fp, m.any_undefined);
  if (m.sen + m.prc > 0.0)
    m.f1 = 2.0 * m.sen * m.prc / (m.sen + m.prc);
  else {
    m.f1 = 0.0;
    m.any_undefined = true;
  }
  return m;
}

double mcc(const ConfusionCounts& c, bool* undefined) {
  if (c.total() <= 0) throw DataError("empty confusion counts");
  const double tp = static_cast<double>(c.tp), tn = static_cast<double>(c.tn);
  const double fp = static_cast<double>(c.fp), fn = static_cast<double>(c.fn);
  const double denom_sq = (tp + fp) * (tp + fn) * (tn + fp) * (tn + fn);
  if (denom_sq == 0.0) {
    if (undefined) *undefined = true;
    return 0.0;
  }
  if (undefined) *undefined = false;
  return (tp * tn - fp * fn) / std::sqrt(denom_sq);
}

double auc(const std::vector<double>& scores, const std::vector<int>& labels) {
  if (scores.size() != labels.size())
    throw DataError("score/label count mismatch");
  const long n_pos = std::count(labels.begin(), labels.end(), 1);
  const long n_neg = static_cast<long>(labels.size()) - n_pos;
  if (n_pos == 0 || n_neg == 0)
    throw DataError("both classes required to rank scores");

  // Average ranks (midranks for ties), then the Mann-Whitney statistic.
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return scores[a] < scores[b];
  });
  std::vector<double> rank(scores.size());
  std::size_t i = 0;
  while (i < order.size()) {
    std::size_t j = i;
    while (j + 1 < order.size() &&
           scores[order[j + 1]] == scores[order[i]])
      ++j;
    const double mid = (static_cast<double>(i) + static_cast<double>(j)) / 2.0 + 1.0;
    for (std::size_t k = i; k <= j; ++k) rank[order[k]] = mid;
    i = j + 1;
  }
  double rank_sum_pos = 0.0;
  for (std::size_t k = 0; k < labels.size(); ++k)
    if (labels[k] == 1) rank_sum_pos += rank[k];
  const double n_pos_d = static_cast<double>(n_pos);
  const double u = rank_sum_pos - n_pos_d * (n_pos_d + 1.0) / 2.0;
  return u / (n_pos_d * static_cast<double>(n_neg));
}

MetricsReport evaluate(const std::vector<double>& scores,
                       const std::vector<int>& labels, double threshold) {
  MetricsReport r;
  r.counts = confusion(scores, labels, threshold);
  const BasicMetrics m = basic_metrics(r.counts);
  r.acc = m.acc;
  r.sen = m.sen;
  r.spe = m.spe;
  r.prc = m.prc;
  r.f1 = m.f1;
  r.any_undefined = m.any_undefined;
  bool mcc_undef = false;
  r.mcc = mcc(r.counts, &mcc_undef);
  r.any_undefined = r.any_undefined || mcc_undef;
  r.n_pos = r.counts.tp + r.counts.fn;
  r.n_neg = r.counts.tn + r.counts.fp;
  try {
    r.auc = auc(scores, labels);
  } catch (const DataError&) {
    r.auc = 0.0;
    r.any_undefined = true;
  }
  if (r.n_pos > 0) {
    r.confusion_percent[0][0] = static_cast<double>(r.counts.tp) / r.n_pos;
    r.confusion_percent[0][1] = static_cast<double>(r.counts.fn) / r.n_pos;
  }
  if (r.n_neg > 0) {
    r.confusion_percent[1][0] = static_cast<double>(r.counts.fp) / r.n_neg;
    r.confusion_percent[1][1] = static_cast<double>(r.counts.tn) / r.n_neg;
  }
  return r;
}

namespace {

MetricSummary summarize(const std::vector<double>& values) {
  const int k = static_cast<int>(values.size());
  MetricSummary s;
  s.mean = std::accumulate(values.begin(), values.end(), 0.0) / k;
  double ss = 0.0;
  for (double v : values) ss += (v - s.mean) * (v - s.mean);
  s.sd = k > 1 ? std::sqrt(ss / (k - 1)) : 0.0;
  if (k > 1 && s.sd > 0.0) {
    const boost::math::students_t dist(k - 1);
    const double t = boost::math::quantile(dist, 0.975);
    s.halfwidth95 = t * s.sd / std::sqrt(static_cast<double>(k));
  }
  return s;
}

}  // namespace

CrossValReport aggregate_folds(const std::vector<MetricsReport>& reports) {
  if (reports.size() < 2)
    throw DataError("fold aggregation needs at least 2 folds");
  CrossValReport agg;
  agg.k = static_cast<int>(reports.size());
  agg.per_fold = reports;
  auto collect = [&](auto member) {
    std::vector<double> v;
    for (const MetricsReport& r : reports) v.push_back(r.*member);
    return summarize(v);
  };
  agg.aggregate.acc = collect(&MetricsReport::acc);
  agg.aggregate.auc = collect(&MetricsReport::auc);
  agg.aggregate.sen = collect(&MetricsReport::sen);
  agg.aggregate.spe = collect(&MetricsReport::spe);
  agg.aggregate.prc = collect(&MetricsReport::prc);
  agg.aggregate.f1 = collect(&MetricsReport::f1);
  agg.aggregate.mcc = collect(&MetricsReport::mcc);

  ConfusionCounts pooled;
  for (const MetricsReport& r : reports) {
    pooled.tp += r.counts.tp;
    pooled.tn += r.counts.tn;
    pooled.fp += r.counts.fp;
    pooled.fn += r.counts.fn;
  }
  const long pos = pooled.tp + pooled.fn;
  const long neg = pooled.tn + pooled.fp;
  if (pos > 0) {
    agg.pooled_confusion_percent[0][0] = static_cast<double>(pooled.tp) / pos;
    agg.pooled_confusion_percent[0][1] = static_cast<double>(pooled.fn) / pos;
  }
  if (neg > 0) {
    agg.pooled_confusion_percent[1][0] = static_cast<double>(pooled.fp) / neg;
    agg.pooled_confusion_percent[1][1] = static_cast<double>(pooled.tn) / neg;
  }
  agg.ci_note =
      "95% halfwidth = t(0.975, k-1) * sd / sqrt(k) over per-fold values "
      "(Student-t on fold means)";
  return agg;
}

namespace {

nlohmann::ordered_json metrics_to_json(const MetricsReport& r) {
  nlohmann::ordered_json j;
  j["counts"] = {{"tp", r.counts.tp},
                 {"tn", r.counts.tn},
                 {"fp", r.counts.fp},
                 {"fn", r.counts.fn}};
  j["acc"] = r.acc;
  j["auc"] = r.auc;
  j["sen"] = r.sen;
  j["spe"] = r.spe;
  j["prc"] = r.prc;
  j["f1"] = r.f1;
  j["mcc"] = r.mcc;
  j["any_undefined"] = r.any_undefined;
  j["confusion_percent"] = {
      {r.confusion_percent[0][0], r.confusion_percent[0][1]},
      {r.confusion_percent[1][0], r.confusion_percent[1][1]}};
  j["n_pos"] = r.n_pos;
  j["n_neg"] = r.n_neg;
  return j;
}

nlohmann::ordered_json summary_to_json(const MetricSummary& s) {
  return {{"mean", s.mean}, {"sd", s.sd}, {"halfwidth95", s.halfwidth95}};
}

}  // namespace

nlohmann::ordered_json report_to_json(const CrossValReport& report) {
  nlohmann::ordered_json j;
  j["k"] = report.k;
  j["ci_note"] = report.ci_note;
  j["aggregate"] = {{"acc", summary_to_json(report.aggregate.acc)},
                    {"auc", summary_to_json(report.aggregate.auc)},
                    {"sen", summary_to_json(report.aggregate.sen)},
                    {"spe", summary_to_json(report.aggregate.spe)},
                    {"prc", summary_to_json(report.aggregate.prc)},
                    {"f1", summary_to_json(report.aggregate.f1)},
                    {"mcc", summary_to_json(report.aggregate.mcc)}};
  j["pooled_confusion_percent"] = {
      {report.pooled_confusion_percent[0][0],
       report.pooled_confusion_percent[0][1]},
      {report.pooled_confusion_percent[1][0],
       report.pooled_confusion_percent[1][1]}};
  j["per_fold"] = nlohmann::ordered_json::array();
  for (const MetricsReport& r : report.per_fold)
    j["per_fold"].push_back(metrics_to_json(r));
  return j;
}

void save_report_json(const std::filesystem::path& path,
                      const CrossValReport& report) {
  io::write_file_atomic(path, report_to_json(report).dump(2) + "\n");
}

std::string report_table(const CrossValReport& report) {
  char line[256];
  std::string out;
  out += "metric        mean     +/-95%\n";
  auto row = [&](const char* name, const MetricSummary& s) {
    std::snprintf(line, sizeof(line), "%-8s  %7.4f  %9.4f\n", name, s.mean,
                  s.halfwidth95);
    out += line;
  };
  row("ACC", report.aggregate.acc);
  row("AUC", report.aggregate.auc);
  row("SEN", report.aggregate.sen);
  row("SPE", report.aggregate.spe);
  row("PRC", report.aggregate.prc);
  row("F1", report.aggregate.f1);
  row("MCC", report.aggregate.mcc);
  std::snprintf(line, sizeof(line),
                "confusion %% (pooled): [[%.2f, %.2f], [%.2f, %.2f]]\n",
                100.0 * report.pooled_confusion_percent[0][0],
                100.0 * report.pooled_confusion_percent[0][1],
                100.0 * report.pooled_confusion_percent[1][0],
                100.0 * report.pooled_confusion_percent[1][1]);
  out += line;
  out += report.ci_note + "\n";
  return out;
}

std::vector<features::FeatureSequence> extract_all(
    std::vector<data::VolumeRecord>& records,
    const std::filesystem::path& data_dir,
    const features::ExtractorSpec& extractor, const data::PrepConfig& prep,
    const std::filesystem::path& cache_dir, int jobs) {
  const std::string fp = features::fingerprint(extractor, prep);
  const bool use_cache = !cache_dir.empty();
  if (use_cache) std::filesystem::create_directories(cache_dir);

  std::vector<features::FeatureSequence> seqs(records.size());
  std::vector<char> done(records.size(), 0);
  if (use_cache) {
    for (std::size_t i = 0; i < records.size(); ++i) {
      auto hit = features::cache_get(cache_dir, records[i].volume_id, fp);
      if (hit) {
        seqs[i] = std::move(*hit);
        done[i] = 1;
      }
    }
  }

  auto work = [&](std::size_t i) {
    if (done[i]) return;
    data::load_voxels(records[i], data_dir);
    const data::PreprocessedVolume vol = data::preprocess(records[i], prep);
    seqs[i] = features::extract_features(extractor, vol);
  };

  std::vector<std::size_t> pending;
  for (std::size_t i = 0; i < records.size(); ++i)
    if (!done[i]) pending.push_back(i);

  if (jobs <= 1 || pending.size() <= 1) {
    for (std::size_t i : pending) work(i);
  } else {
    // Extraction is a pure per-volume function, so a static partition keeps
    // results identical to the sequential order.
    const int n_threads = std::min<int>(jobs, static_cast<int>(pending.size()));
    std::vector<std::thread> threads;
    std::exception_ptr first_error;
    std::mutex error_mutex;
    for (int t = 0; t < n_threads; ++t) {
      threads.emplace_back([&, t]() {
        for (std::size_t k = t; k < pending.size(); k += n_threads) {
          try {
            work(pending[k]);
          } catch (...) {
            std::lock_guard<std::mutex> lock(error_mutex);
            if (!first_error) first_error = std::current_exception();
            return;
          }
        }
      });
    }
    for (auto& th : threads) th.join();
    if (first_error) std::rethrow_exception(first_error);
  }

  if (use_cache)
    for (std::size_t i : pending) features::cache_put(cache_dir, seqs[i], fp);
  return seqs;
}

CrossValResult cross_validate(std::vector<data::VolumeRecord>& records,
                              const std::filesystem::path& data_dir,
                              const features::ExtractorSpec& extractor,
                              const data::PrepConfig& prep,
                              const model::HeadConfig& head_cfg,
                              const train::FocalConfig& fcfg,
                              const train::OptimConfig& ocfg,
                              const CrossValConfig& cv_cfg) {
  CrossValResult result;
  result.plan = data::make_fold_plan(records, cv_cfg.k, cv_cfg.seed);

  const std::vector<features::FeatureSequence> seqs = extract_all(
      records, data_dir, extractor, prep, cv_cfg.cache_dir, cv_cfg.jobs);
  std::vector<int> labels;
  labels.reserve(records.size());
  for (const auto& rec : records) labels.push_back(rec.label);

  std::vector<MetricsReport> fold_reports;
  for (int f = 0; f < cv_cfg.k; ++f) {
    const data::FoldAssignment& fold = result.plan.folds[f];
    FoldOutcome outcome;
    outcome.subjects = fold;

    const std::vector<int> train_idx =
        data::indices_for_subjects(records, fold.train);
    const std::vector<int> val_idx =
        data::indices_for_subjects(records, fold.validation);
    const std::vector<int> test_idx =
        data::indices_for_subjects(records, fold.test);
    if (train_idx.empty() || val_idx.empty() || test_idx.empty())
      throw DataError("fold " + std::to_string(f) + " has an empty subset");

    const model::HeadParams init = model::init_head(
        head_cfg, rng::derive_seed(cv_cfg.seed, 0x1217,
                                   static_cast<std::uint64_t>(f)));
    train::OptimConfig fold_ocfg = ocfg;
    fold_ocfg.seed = rng::derive_seed(ocfg.seed, 0xf01d,
                                      static_cast<std::uint64_t>(f));
    train::TrainResult trained =
        train::train_model(seqs, labels, train_idx, val_idx, init, fcfg,
                           fold_ocfg);
    outcome.history = std::move(trained.history);

    for (int i : test_idx) {
      const auto out =
          model::head_forward(trained.best, seqs[i], model::Mode::eval);
      outcome.test_volume_ids.push_back(records[i].volume_id);
      outcome.test_scores.push_back(out.p);
      outcome.test_labels.push_back(labels[i]);
    }
    outcome.test_metrics = evaluate(outcome.test_scores, outcome.test_labels);
    outcome.best_params = std::move(trained.best);
    fold_reports.push_back(outcome.test_metrics);
    result.folds.push_back(std::move(outcome));
  }
  result.report = aggregate_folds(fold_reports);
  return result;
}

std::vector<data::VolumeRecord> make_synthetic_dataset(int n_pos, int n_neg,
                                                       int depth,
                                                       std::uint64_t seed) {
  if (n_pos < 1 || n_neg < 1)
    throw UsageError("both classes need at least one volume");
  if (depth < 1) throw UsageError("depth must be >= 1");
  const int h = 64, w = 128;
  const double mu0 = 0.3, mu1 = 0.6, sigma = 0.05;
  // Class-1 band: middle quarter of the slice range at reduced intensity.
  const int band_lo = depth * 3 / 8;
  const int band_hi = std::min(depth, band_lo + std::max(1, depth / 4));

  std::vector<data::VolumeRecord> records;
  const int total = n_pos + n_neg;
  for (int idx = 0; idx < total; ++idx) {
    const int label = idx < n_pos ? 1 : 0;
    data::VolumeRecord rec;
    char buf[32];
    std::snprintf(buf, sizeof(buf), "vol%04d", idx);
    rec.volume_id = buf;
    std::snprintf(buf, sizeof(buf), "subj%04d", idx);
    rec.subject_id = buf;
    rec.label = label;
    rec.laterality =
        idx % 2 == 0 ? data::Laterality::left : data::Laterality::right;
    rec.signal_strength = 8;
    rec.relative_path = rec.volume_id + ".raw";
    rec.depth = depth;
    rec.height = h;
    rec.width = w;
    rec.voxels.resize(static_cast<std::size_t>(depth) * h * w);

    rng::Engine eng(rng::derive_seed(seed, 0x5e7,
                                     static_cast<std::uint64_t>(idx)));
    std::size_t pos = 0;
    for (int d = 0; d < depth; ++d) {
      double mu = label == 1 ? mu1 : mu0;
      if (label == 1 && d >= band_lo && d < band_hi) mu *= 0.6;
      for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
          const double v = mu + sigma * rng::gaussian(eng);
          const long q = std::lround(255.0 * std::min(std::max(v, 0.0), 1.0));
          rec.voxels[pos++] = static_cast<std::uint8_t>(q);
        }
    }
    records.push_back(std::move(rec));
  }
  return records;
}

}  // namespace octseq::eval
