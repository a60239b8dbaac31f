#pragma once

#include <array>
#include <filesystem>
#include <string>
#include <vector>

#include "json.hpp"
#include "octseq/data.hpp"
#include "octseq/features.hpp"
#include "octseq/model.hpp"
#include "octseq/train.hpp"

namespace octseq::eval {

struct ConfusionCounts {
  long tp = 0, tn = 0, fp = 0, fn = 0;
  long total() const { return tp + tn + fp + fn; }
};

// Predict 1 iff score >= threshold.
ConfusionCounts confusion(const std::vector<double>& scores,
                          const std::vector<int>& labels,
                          double threshold = 0.5);

// Zero-denominator ratios yield 0 with any_undefined set, so fold
// aggregation never aborts on a degenerate fold.
struct BasicMetrics {
  double acc = 0, sen = 0, spe = 0, prc = 0, f1 = 0;
  bool any_undefined = false;
};

BasicMetrics basic_metrics(const ConfusionCounts& c);

// Ranges over [-1,1]; a zero factor in the denominator yields 0 and sets
// *undefined when provided.
double mcc(const ConfusionCounts& c, bool* undefined = nullptr);

// Rank statistic: fraction of positive-negative pairs where the positive
// scores higher, ties counting one half. Needs both classes present.
double auc(const std::vector<double>& scores, const std::vector<int>& labels);

struct MetricsReport {
  ConfusionCounts counts;
  double acc = 0, sen = 0, spe = 0, prc = 0, f1 = 0, mcc = 0, auc = 0;
  bool any_undefined = false;
  // Row 0: actual positives split into [tp%, fn%]; row 1: actual negatives
  // into [fp%, tn%]. Rows sum to 1 when the class is present.
  std::array<std::array<double, 2>, 2> confusion_percent{};
  long n_pos = 0, n_neg = 0;
};

MetricsReport evaluate(const std::vector<double>& scores,
                       const std::vector<int>& labels,
                       double threshold = 0.5);

struct MetricSummary {
  double mean = 0, sd = 0, halfwidth95 = 0;
};

struct AggregateMetrics {
  MetricSummary acc, auc, sen, spe, prc, f1, mcc;
};

struct CrossValReport {
  int k = 0;
  std::vector<MetricsReport> per_fold;
  AggregateMetrics aggregate;
  std::array<std::array<double, 2>, 2> pooled_confusion_percent{};
  std::string ci_note;  // names the interval construction used
};

// Mean and 95% halfwidth per metric over folds (Student-t on k-1 degrees of
// freedom); pooled confusion percentages from summed counts.
CrossValReport aggregate_folds(const std::vector<MetricsReport>& reports);

nlohmann::ordered_json report_to_json(const CrossValReport& report);
void save_report_json(const std::filesystem::path& path,
                      const CrossValReport& report);
std::string report_table(const CrossValReport& report);

struct CrossValConfig {
  int k = 5;
  std::uint64_t seed = 0;
  std::filesystem::path cache_dir;  // empty disables the feature cache
  int jobs = 1;                     // feature-extraction parallelism
};

struct FoldOutcome {
  data::FoldAssignment subjects;
  train::TrainHistory history;
  MetricsReport test_metrics;
  model::HeadParams best_params;
  std::vector<std::string> test_volume_ids;
  std::vector<double> test_scores;
  std::vector<int> test_labels;
};

struct CrossValResult {
  data::FoldPlan plan;
  std::vector<FoldOutcome> folds;
  CrossValReport report;
};

// Per fold: extract (or fetch cached) features, fresh parameter init, full
// training, evaluation on the fold's test subjects. Deterministic given
// cv_cfg.seed. data_dir may be empty when every record already carries its
// voxels.
CrossValResult cross_validate(std::vector<data::VolumeRecord>& records,
                              const std::filesystem::path& data_dir,
                              const features::ExtractorSpec& extractor,
                              const data::PrepConfig& prep,
                              const model::HeadConfig& head_cfg,
                              const train::FocalConfig& fcfg,
                              const train::OptimConfig& ocfg,
                              const CrossValConfig& cv_cfg);

// Extraction helper shared by the cross-validation driver and the CLI:
// cache lookup, else load + preprocess + extract + cache store. Returns one
// sequence per record, in record order.
std::vector<features::FeatureSequence> extract_all(
    std::vector<data::VolumeRecord>& records,
    const std::filesystem::path& data_dir,
    const features::ExtractorSpec& extractor, const data::PrepConfig& prep,
    const std::filesystem::path& cache_dir, int jobs);

// Two intensity populations (means mu0 < mu1) of D x 64 x 128 volumes;
// class-1 volumes additionally carry a reduced-intensity band over a
// contiguous slice range. One synthetic subject per volume.
std::vector<data::VolumeRecord> make_synthetic_dataset(int n_pos, int n_neg,
                                                       int depth,
                                                       std::uint64_t seed);

}  // namespace octseq::eval
