#pragma once

#include <filesystem>
#include <vector>

#include "octseq/data.hpp"
#include "octseq/features.hpp"
#include "octseq/model.hpp"

namespace octseq::train {

// Class-weighted, hardness-modulated binary loss. Class 1 is weighted by
// alpha, class 0 by 1-alpha; gamma = 0 reduces to weighted cross-entropy.
struct FocalConfig {
  double alpha = 0.3;
  double gamma = 2.0;
};

struct FocalResult {
  double loss = 0.0;
  double dL_dp = 0.0;  // analytic derivative with respect to p
};

// p is clamped to [1e-12, 1-1e-12] before evaluation; the same bound is
// applied inside the derivative so the pair stays consistent.
FocalResult focal_loss(double p, int y, const FocalConfig& cfg);

struct OptimConfig {
  double lr0 = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double decay_factor = 0.9;
  int decay_period_epochs = 5;
  int batch_size = 16;
  int max_epochs = 100;
  int patience = 6;  // consecutive epochs without strict improvement
  std::uint64_t seed = 0;
};

// lr0 * decay_factor^floor(epoch / period); epochs count from 0.
double lr_at(int epoch, const OptimConfig& cfg);

// First/second moment accumulators shaped like the parameters.
struct AdamState {
  model::HeadParams m, v;
  long t = 0;
};

AdamState make_adam_state(const model::HeadParams& params);

// One bias-corrected update over every parameter block; increments state.t.
void adam_step(model::HeadParams& params, const model::HeadParams& grads,
               AdamState& state, double lr, const OptimConfig& cfg);

struct EpochRecord {
  int epoch = 0;
  double train_loss = 0.0;
  double val_loss = 0.0;
  double val_f1 = 0.0;
  double lr = 0.0;
};

struct TrainHistory {
  std::vector<EpochRecord> epochs;
  double initial_val_loss = 0.0;  // before any update, for sanity checks
  int best_epoch = -1;
  bool stopped_early = false;
};

// CSV with header epoch,train_loss,val_loss,val_f1,lr.
void save_history_csv(const std::filesystem::path& path,
                      const TrainHistory& history);

struct TrainResult {
  model::HeadParams best;
  TrainHistory history;
};

// Balanced-batch training with per-epoch validation. Keeps the parameters
// of the epoch with the lowest validation loss; stops after `patience`
// consecutive epochs without strict improvement. Deterministic given
// ocfg.seed (batch order, dropout masks).
TrainResult train_model(const std::vector<features::FeatureSequence>& seqs,
                        const std::vector<int>& labels,
                        const std::vector<int>& train_indices,
                        const std::vector<int>& val_indices,
                        const model::HeadParams& init,
                        const FocalConfig& fcfg, const OptimConfig& ocfg);

}  // namespace octseq::train
