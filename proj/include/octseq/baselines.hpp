#pragma once

#include <Eigen/Dense>
#include <filesystem>
#include <vector>

#include "octseq/data.hpp"
#include "octseq/eval.hpp"
#include "octseq/features.hpp"

namespace octseq::baselines {

// Shannon entropy in bits of the 256-bin intensity histogram.
double slice_entropy(const std::uint8_t* pixels, std::size_t count);
// Real-valued slices are first mapped to 256 uniform bins over their range.
double slice_entropy(const Eigen::MatrixXd& slice);

// Slice indices are 1-based throughout this module.
struct SliceSelection {
  std::vector<int> indices;  // 5 sorted distinct indices, center included
  std::vector<double> entropies;
  int center_index = 32;
};

// Picks the 4 non-center slices whose entropy is closest to the center's
// (absolute difference, ties to the lower index) and includes the center.
SliceSelection select_slices_from_entropies(
    const std::vector<double>& entropies, int center);
SliceSelection select_slices(const data::VolumeRecord& volume,
                             int center = 32);

// Equal-frequency discretization into at most `bins` cells, then
// information gain over split information. A constant feature scores 0.
double gain_ratio(const std::vector<double>& feature,
                  const std::vector<int>& labels, int bins = 10);

struct GainRatioRanking {
  std::vector<double> scores;  // one per feature column
  std::vector<int> selected;   // top `keep` by score, ties to lower index
};

GainRatioRanking rank_features(const Eigen::MatrixXd& x,
                               const std::vector<int>& labels, int keep,
                               int bins = 10);

struct LinearSvmModel {
  Eigen::VectorXd w;
  double b = 0.0;
  double lambda = 0.0;

  double margin(const Eigen::VectorXd& x) const { return w.dot(x) + b; }
};

// lambda*|w|^2/2 + mean hinge loss for auditing the optimizer.
double svm_objective(const LinearSvmModel& model, const Eigen::MatrixXd& x,
                     const std::vector<int>& y_pm);

// Seeded stochastic subgradient descent with step 1/(lambda*t); the
// returned model is the average over all iterates. y entries are -1/+1 and
// x is expected to be standardized by the caller.
LinearSvmModel train_linear_svm(const Eigen::MatrixXd& x,
                                const std::vector<int>& y_pm, double lambda,
                                int epochs, std::uint64_t seed);

// Odd vote counts only, so a tie is impossible.
int majority_vote(const std::vector<int>& votes);

struct SvmBaselineConfig {
  double lambda = 0.01;
  int epochs = 50;
  int keep_features = 128;
  int bins = 10;
  int center_slice = 32;
  std::uint64_t seed = 0;
  std::filesystem::path cache_dir;
  int jobs = 1;
};

// Slot j aggregates the j-th selected slice position across folds; the
// positions themselves are chosen per fold from training volumes only.
struct SliceModelReport {
  int slot = 0;
  std::vector<int> slice_position_per_fold;             // 1-based
  std::vector<std::vector<int>> selected_features_per_fold;
  eval::CrossValReport cv;
};

struct SvmBaselineResult {
  std::vector<SliceModelReport> slices;  // exactly 5
  eval::CrossValReport ensemble;
  data::FoldPlan plan;
};

// Per fold and selected slice: gain-ratio feature selection and feature
// standardization fitted on training volumes only, a linear classifier per
// slice, then a majority-vote ensemble over the 5 per-slice predictions.
SvmBaselineResult run_svm_baseline(std::vector<data::VolumeRecord>& records,
                                   const std::filesystem::path& data_dir,
                                   const features::ExtractorSpec& extractor,
                                   const data::PrepConfig& prep,
                                   const data::FoldPlan& plan,
                                   const SvmBaselineConfig& cfg);

}  // namespace octseq::baselines
