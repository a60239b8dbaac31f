#include "octseq/baselines.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numeric>

namespace octseq::baselines {

double slice_entropy(const std::uint8_t* pixels, std::size_t count) {
  if (count == 0) throw DataError("empty slice");
  std::array<std::size_t, 256> hist{};
  for (std::size_t i = 0; i < count; ++i) ++hist[pixels[i]];
  double entropy = 0.0;
  const double n = static_cast<double>(count);
  for (std::size_t c : hist) {
    if (c == 0) continue;
    const double q = static_cast<double>(c) / n;
    entropy -= q * std::log2(q);
  }
  return entropy;
}

double slice_entropy(const Eigen::MatrixXd& slice) {
  if (slice.size() == 0) throw DataError("empty slice");
  const double lo = slice.minCoeff();
  const double hi = slice.maxCoeff();
  if (hi == lo) return 0.0;
  std::vector<std::uint8_t> binned(slice.size());
  std::size_t k = 0;
  for (Eigen::Index i = 0; i < slice.rows(); ++i)
    for (Eigen::Index j = 0; j < slice.cols(); ++j) {
      const double t = (slice(i, j) - lo) / (hi - lo) * 256.0;
      binned[k++] = static_cast<std::uint8_t>(
          std::min(255.0, std::max(0.0, std::floor(t))));
    }
  return slice_entropy(binned.data(), binned.size());
}

SliceSelection select_slices_from_entropies(
    const std::vector<double>& entropies, int center) {
  const int d = static_cast<int>(entropies.size());
  if (d < 5) throw DataError("slice selection needs at least 5 slices");
  if (center < 1 || center > d)
    throw UsageError("center slice index out of range");

  const double ce = entropies[center - 1];
  std::vector<int> others;
  for (int i = 1; i <= d; ++i)
    if (i != center) others.push_back(i);
  std::stable_sort(others.begin(), others.end(), [&](int a, int b) {
    const double da = std::abs(entropies[a - 1] - ce);
    const double db = std::abs(entropies[b - 1] - ce);
    if (da != db) return da < db;
    return a < b;
  });

  SliceSelection sel;
  sel.center_index = center;
  sel.entropies = entropies;
  sel.indices.assign(others.begin(), others.begin() + 4);
  sel.indices.push_back(center);
  std::sort(sel.indices.begin(), sel.indices.end());
  return sel;
}

SliceSelection select_slices(const data::VolumeRecord& volume, int center) {
  if (!volume.loaded()) throw DataError("volume voxels not loaded");
  std::vector<double> entropies(volume.depth);
  const std::size_t plane = static_cast<std::size_t>(volume.height) *
                            static_cast<std::size_t>(volume.width);
  for (int d = 0; d < volume.depth; ++d)
    entropies[d] = slice_entropy(volume.slice(d), plane);
  return select_slices_from_entropies(entropies, center);
}

namespace {

double entropy_bits(const std::vector<std::size_t>& counts, std::size_t n) {
  double h = 0.0;
  for (std::size_t c : counts) {
    if (c == 0) continue;
    const double q = static_cast<double>(c) / static_cast<double>(n);
    h -= q * std::log2(q);
  }
  return h;
}

}  // namespace

double gain_ratio(const std::vector<double>& feature,
                  const std::vector<int>& labels, int bins) {
  const std::size_t n = feature.size();
  if (n < 2) throw DataError("gain ratio needs at least 2 samples");
  if (labels.size() != n) throw DataError("feature/label count mismatch");
  if (bins < 2) throw UsageError("need at least 2 bins");
  const long n_pos = std::count(labels.begin(), labels.end(), 1);
  if (n_pos == 0 || static_cast<std::size_t>(n_pos) == n)
    throw DataError("gain ratio needs both classes present");

  // Equal-frequency cut points; equal values always share a cell.
  std::vector<double> sorted(feature);
  std::sort(sorted.begin(), sorted.end());
  std::vector<double> edges;
  for (int b = 1; b < bins; ++b)
    edges.push_back(sorted[(static_cast<std::size_t>(b) * n) / bins]);

  auto cell_of = [&](double x) {
    int cell = 0;
    for (double e : edges)
      if (x > e) ++cell;
    return cell;
  };

  std::vector<std::size_t> cell_n(bins, 0);
  std::vector<std::size_t> cell_pos(bins, 0);
  for (std::size_t i = 0; i < n; ++i) {
    const int c = cell_of(feature[i]);
    ++cell_n[c];
    if (labels[i] == 1) ++cell_pos[c];
  }

  const double h_labels = entropy_bits(
      {static_cast<std::size_t>(n_pos), n - static_cast<std::size_t>(n_pos)},
      n);
  double h_cond = 0.0;
  double split_info = 0.0;
  for (int c = 0; c < bins; ++c) {
    if (cell_n[c] == 0) continue;
    const double w = static_cast<double>(cell_n[c]) / static_cast<double>(n);
    h_cond += w * entropy_bits({cell_pos[c], cell_n[c] - cell_pos[c]},
                               cell_n[c]);
    split_info -= w * std::log2(w);
  }
  if (split_info <= 0.0) return 0.0;  // single cell: constant feature
  const double gain = std::max(0.0, h_labels - h_cond);
  return std::min(1.0, gain / split_info);
}

GainRatioRanking rank_features(const Eigen::MatrixXd& x,
                               const std::vector<int>& labels, int keep,
                               int bins) {
  const int n_features = static_cast<int>(x.cols());
  GainRatioRanking ranking;
  ranking.scores.resize(n_features);
  std::vector<double> column(x.rows());
  for (int j = 0; j < n_features; ++j) {
    for (Eigen::Index i = 0; i < x.rows(); ++i) column[i] = x(i, j);
    ranking.scores[j] = gain_ratio(column, labels, bins);
  }
  std::vector<int> order(n_features);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
    if (ranking.scores[a] != ranking.scores[b])
      return ranking.scores[a] > ranking.scores[b];
    return a < b;
  });
  const int take = std::min(keep, n_features);
  ranking.selected.assign(order.begin(), order.begin() + take);
  return ranking;
}

double svm_objective(const LinearSvmModel& model, const Eigen::MatrixXd& x,
                     const std::vector<int>& y_pm) {
  double hinge = 0.0;
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    const double m = y_pm[i] * model.margin(x.row(i).transpose());
    hinge += std::max(0.0, 1.0 - m);
  }
  hinge /= static_cast<double>(x.rows());
  return model.lambda * model.w.squaredNorm() / 2.0 + hinge;
}

LinearSvmModel train_linear_svm(const Eigen::MatrixXd& x,
                                const std::vector<int>& y_pm, double lambda,
                                int epochs, std::uint64_t seed) {
  const Eigen::Index n = x.rows();
  if (n < 2 || static_cast<std::size_t>(n) != y_pm.size())
    throw DataError("degenerate training set");
  if (lambda <= 0.0) throw UsageError("regularization must be positive");
  bool has_pos = false, has_neg = false;
  for (int y : y_pm) {
    if (y == 1)
      has_pos = true;
    else if (y == -1)
      has_neg = true;
    else
      throw DataError("labels must be -1 or +1");
  }
  if (!has_pos || !has_neg) throw DataError("both classes required");

  Eigen::VectorXd w = Eigen::VectorXd::Zero(x.cols());
  double b = 0.0;
  Eigen::VectorXd w_sum = Eigen::VectorXd::Zero(x.cols());
  double b_sum = 0.0;
  long t = 0;

  std::vector<int> order(n);
  std::iota(order.begin(), order.end(), 0);
  for (int epoch = 0; epoch < epochs; ++epoch) {
    rng::Engine eng(rng::derive_seed(seed, 0x39a,
                                     static_cast<std::uint64_t>(epoch)));
    rng::shuffle(order, eng);
    for (int i : order) {
      ++t;
      const double eta = 1.0 / (lambda * static_cast<double>(t));
      const double m = y_pm[i] * (w.dot(x.row(i).transpose()) + b);
      w *= 1.0 - eta * lambda;
      if (m < 1.0) {
        w += eta * y_pm[i] * x.row(i).transpose();
        b += eta * y_pm[i];
      }
      w_sum += w;
      b_sum += b;
    }
  }
  LinearSvmModel model;
  model.w = w_sum / static_cast<double>(t);
  model.b = b_sum / static_cast<double>(t);
  model.lambda = lambda;
  return model;
}

int majority_vote(const std::vector<int>& votes) {
  if (votes.empty() || votes.size() % 2 == 0)
    throw UsageError("vote count must be odd");
  int ones = 0;
  for (int v : votes) {
    if (v != 0 && v != 1) throw UsageError("votes must be 0 or 1");
    ones += v;
  }
  return ones * 2 > static_cast<int>(votes.size()) ? 1 : 0;
}

SvmBaselineResult run_svm_baseline(std::vector<data::VolumeRecord>& records,
                                   const std::filesystem::path& data_dir,
                                   const features::ExtractorSpec& extractor,
                                   const data::PrepConfig& prep,
                                   const data::FoldPlan& plan,
                                   const SvmBaselineConfig& cfg) {
  if (records.empty()) throw DataError("no records");
  const int depth = records[0].depth;
  for (const auto& rec : records)
    if (rec.depth != depth)
      throw DataError("volumes must share a slice count for slice selection");

  const std::vector<features::FeatureSequence> seqs = eval::extract_all(
      records, data_dir, extractor, prep, cfg.cache_dir, cfg.jobs);
  std::vector<int> labels;
  for (const auto& rec : records) labels.push_back(rec.label);

  SvmBaselineResult result;
  result.plan = plan;
  result.slices.resize(5);
  for (int j = 0; j < 5; ++j) result.slices[j].slot = j;

  std::vector<std::vector<eval::MetricsReport>> slot_reports(5);
  std::vector<eval::MetricsReport> ensemble_reports;

  const std::size_t plane = static_cast<std::size_t>(records[0].height) *
                            static_cast<std::size_t>(records[0].width);

  for (int f = 0; f < plan.k; ++f) {
    // Fit on all non-test subjects; the head pipeline's validation subset
    // carries no role here (no early stopping).
    std::vector<std::string> fit_subjects = plan.folds[f].train;
    fit_subjects.insert(fit_subjects.end(), plan.folds[f].validation.begin(),
                        plan.folds[f].validation.end());
    std::sort(fit_subjects.begin(), fit_subjects.end());
    const std::vector<int> fit_idx =
        data::indices_for_subjects(records, fit_subjects);
    const std::vector<int> test_idx =
        data::indices_for_subjects(records, plan.folds[f].test);
    if (fit_idx.empty() || test_idx.empty())
      throw DataError("fold " + std::to_string(f) + " has an empty subset");

    // Slice positions from training-volume entropies only.
    std::vector<double> mean_entropy(depth, 0.0);
    for (int i : fit_idx) {
      data::load_voxels(records[i], data_dir);
      for (int d = 0; d < depth; ++d)
        mean_entropy[d] += slice_entropy(records[i].slice(d), plane);
    }
    for (double& e : mean_entropy) e /= static_cast<double>(fit_idx.size());
    const SliceSelection sel =
        select_slices_from_entropies(mean_entropy, cfg.center_slice);

    // votes[v][j]: slot j's prediction for the v-th test volume.
    std::vector<std::vector<int>> votes(test_idx.size(),
                                        std::vector<int>(5, 0));
    std::vector<int> test_labels;
    for (int i : test_idx) test_labels.push_back(labels[i]);

    for (int j = 0; j < 5; ++j) {
      const int pos = sel.indices[j];
      result.slices[j].slice_position_per_fold.push_back(pos);

      auto slice_row = [&](int i) {
        return seqs[i].features.row(pos - 1).cast<double>().eval();
      };

      Eigen::MatrixXd x_fit(fit_idx.size(), extractor.embedding_dim);
      std::vector<int> y_fit;
      for (std::size_t r = 0; r < fit_idx.size(); ++r) {
        x_fit.row(r) = slice_row(fit_idx[r]);
        y_fit.push_back(labels[fit_idx[r]]);
      }

      const GainRatioRanking ranking =
          rank_features(x_fit, y_fit, cfg.keep_features, cfg.bins);
      result.slices[j].selected_features_per_fold.push_back(ranking.selected);
      const int n_sel = static_cast<int>(ranking.selected.size());

      // Standardization statistics from the fitting rows only.
      Eigen::VectorXd mu(n_sel), sigma(n_sel);
      for (int c = 0; c < n_sel; ++c) {
        const auto col = x_fit.col(ranking.selected[c]);
        mu(c) = col.mean();
        const double var = (col.array() - mu(c)).square().mean();
        sigma(c) = var > 0.0 ? std::sqrt(var) : 1.0;
      }
      auto standardize = [&](const Eigen::VectorXd& full) {
        Eigen::VectorXd out(n_sel);
        for (int c = 0; c < n_sel; ++c)
          out(c) = (full(ranking.selected[c]) - mu(c)) / sigma(c);
        return out;
      };

      Eigen::MatrixXd x_std(fit_idx.size(), n_sel);
      std::vector<int> y_pm;
      for (std::size_t r = 0; r < fit_idx.size(); ++r) {
        x_std.row(r) = standardize(x_fit.row(r).transpose()).transpose();
        y_pm.push_back(y_fit[r] == 1 ? 1 : -1);
      }
      const LinearSvmModel svm = train_linear_svm(
          x_std, y_pm, cfg.lambda, cfg.epochs,
          rng::derive_seed(cfg.seed, 0x57a, static_cast<std::uint64_t>(f),
                           static_cast<std::uint64_t>(j)));

      std::vector<double> margins;
      for (std::size_t v = 0; v < test_idx.size(); ++v) {
        const double m =
            svm.margin(standardize(slice_row(test_idx[v]).transpose()));
        margins.push_back(m);
        votes[v][j] = m >= 0.0 ? 1 : 0;
      }
      slot_reports[j].push_back(eval::evaluate(margins, test_labels, 0.0));
    }

    // Vote share as the ensemble score; thresholding at 0.5 reproduces the
    // majority decision exactly (3 of 5 -> 0.6, 2 of 5 -> 0.4).
    std::vector<double> vote_share;
    for (std::size_t v = 0; v < test_idx.size(); ++v) {
      const int ones =
          static_cast<int>(std::count(votes[v].begin(), votes[v].end(), 1));
      vote_share.push_back(static_cast<double>(ones) / 5.0);
    }
    ensemble_reports.push_back(eval::evaluate(vote_share, test_labels, 0.5));
  }

  for (int j = 0; j < 5; ++j)
    result.slices[j].cv = eval::aggregate_folds(slot_reports[j]);
  result.ensemble = eval::aggregate_folds(ensemble_reports);
  return result;
}

}  // namespace octseq::baselines
