#include "octseq/train.hpp"

#include <cmath>
#include <limits>

#include "octseq/eval.hpp"

namespace octseq::train {

FocalResult focal_loss(double p, int y, const FocalConfig& cfg) {
  if (y != 0 && y != 1) throw UsageError("label must be 0 or 1");
  if (cfg.alpha <= 0.0 || cfg.alpha > 1.0)
    throw UsageError("class weight must lie in (0,1]");
  if (cfg.gamma < 0.0) throw UsageError("focusing exponent must be >= 0");

  const double lo = 1e-12, hi = 1.0 - 1e-12;
  const double pc = std::min(std::max(p, lo), hi);
  const double pt = y == 1 ? pc : 1.0 - pc;
  const double at = y == 1 ? cfg.alpha : 1.0 - cfg.alpha;

  FocalResult res;
  double d_pt;  // d(loss)/d(pt)
  if (cfg.gamma == 0.0) {
    res.loss = -at * std::log(pt);
    d_pt = -at / pt;
  } else {
    const double mod = std::pow(1.0 - pt, cfg.gamma);
    res.loss = -at * mod * std::log(pt);
    d_pt = at * cfg.gamma * std::pow(1.0 - pt, cfg.gamma - 1.0) *
               std::log(pt) -
           at * mod / pt;
  }
  // Outside the clamp the implemented loss is flat in p.
  if (p < lo || p > hi)
    res.dL_dp = 0.0;
  else
    res.dL_dp = y == 1 ? d_pt : -d_pt;
  return res;
}

double lr_at(int epoch, const OptimConfig& cfg) {
  if (epoch < 0) throw UsageError("epoch must be >= 0");
  return cfg.lr0 *
         std::pow(cfg.decay_factor, epoch / cfg.decay_period_epochs);
}

AdamState make_adam_state(const model::HeadParams& params) {
  AdamState state;
  state.m = model::zero_like(params);
  state.v = model::zero_like(params);
  state.t = 0;
  return state;
}

void adam_step(model::HeadParams& params, const model::HeadParams& grads,
               AdamState& state, double lr, const OptimConfig& cfg) {
  state.t += 1;
  const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.t));
  const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.t));
  auto pv = model::list_params(params);
  auto gv = model::list_params(const_cast<model::HeadParams&>(grads));
  auto mv = model::list_params(state.m);
  auto vv = model::list_params(state.v);
  if (pv.size() != gv.size()) throw DataError("gradient block count mismatch");
  for (std::size_t k = 0; k < pv.size(); ++k) {
    if (pv[k].rows != gv[k].rows || pv[k].cols != gv[k].cols)
      throw DataError("gradient shape mismatch at " + pv[k].name);
    for (Eigen::Index i = 0; i < pv[k].size(); ++i) {
      const double g = gv[k].data[i];
      double& m = mv[k].data[i];
      double& v = vv[k].data[i];
      m = cfg.beta1 * m + (1.0 - cfg.beta1) * g;
      v = cfg.beta2 * v + (1.0 - cfg.beta2) * g * g;
      const double m_hat = m / bc1;
      const double v_hat = v / bc2;
      pv[k].data[i] -= lr * m_hat / (std::sqrt(v_hat) + cfg.eps);
    }
  }
}

void save_history_csv(const std::filesystem::path& path,
                      const TrainHistory& history) {
  std::string out = "epoch,train_loss,val_loss,val_f1,lr\n";
  for (const EpochRecord& r : history.epochs) {
    out += std::to_string(r.epoch) + "," + format_g17(r.train_loss) + "," +
           format_g17(r.val_loss) + "," + format_g17(r.val_f1) + "," +
           format_g17(r.lr) + "\n";
  }
  io::write_file_atomic(path, out);
}

namespace {

void accumulate(model::HeadParams& acc, const model::HeadParams& delta) {
  auto av = model::list_params(acc);
  auto dv = model::list_params(const_cast<model::HeadParams&>(delta));
  for (std::size_t k = 0; k < av.size(); ++k)
    for (Eigen::Index i = 0; i < av[k].size(); ++i)
      av[k].data[i] += dv[k].data[i];
}

}  // namespace

TrainResult train_model(const std::vector<features::FeatureSequence>& seqs,
                        const std::vector<int>& labels,
                        const std::vector<int>& train_indices,
                        const std::vector<int>& val_indices,
                        const model::HeadParams& init,
                        const FocalConfig& fcfg, const OptimConfig& ocfg) {
  if (train_indices.empty() || val_indices.empty())
    throw DataError("empty train or validation subset");
  if (seqs.size() != labels.size())
    throw DataError("feature/label count mismatch");

  model::HeadParams params = init;
  AdamState state = make_adam_state(params);
  TrainHistory hist;

  auto eval_set = [&](const std::vector<int>& idx, double* loss_out,
                      double* f1_out) {
    double total = 0.0;
    std::vector<double> scores;
    std::vector<int> ys;
    scores.reserve(idx.size());
    ys.reserve(idx.size());
    for (int i : idx) {
      const auto out = model::head_forward(params, seqs[i], model::Mode::eval);
      total += focal_loss(out.p, labels[i], fcfg).loss;
      scores.push_back(out.p);
      ys.push_back(labels[i]);
    }
    *loss_out = total / static_cast<double>(idx.size());
    if (f1_out)
      *f1_out = eval::basic_metrics(eval::confusion(scores, ys)).f1;
  };

  eval_set(val_indices, &hist.initial_val_loss, nullptr);

  model::HeadParams best = params;
  double best_val = std::numeric_limits<double>::infinity();
  int stall = 0;

  for (int e = 0; e < ocfg.max_epochs; ++e) {
    const double lr = lr_at(e, ocfg);
    const data::BatchPlan plan =
        data::balanced_batches(labels, train_indices, ocfg.batch_size,
                               rng::derive_seed(ocfg.seed, 0xba7c, e));
    double epoch_loss = 0.0;
    for (std::size_t b = 0; b < plan.batches.size(); ++b) {
      const std::vector<int>& batch = plan.batches[b];
      model::HeadParams grads = model::zero_like(params);
      double batch_loss = 0.0;
      const double inv = 1.0 / static_cast<double>(batch.size());
      for (std::size_t item = 0; item < batch.size(); ++item) {
        const int i = batch[item];
        const auto out = model::head_forward(
            params, seqs[i], model::Mode::train,
            rng::derive_seed(ocfg.seed, 0xd507, static_cast<std::uint64_t>(e),
                             (static_cast<std::uint64_t>(b) << 16) | item));
        const FocalResult fr = focal_loss(out.p, labels[i], fcfg);
        batch_loss += fr.loss;
        accumulate(grads,
                   model::head_backward(params, out.trace, fr.dL_dp * inv));
      }
      batch_loss *= inv;
      if (!std::isfinite(batch_loss))
        throw DataError("non-finite training loss at epoch " +
                        std::to_string(e) + ", batch " + std::to_string(b));
      adam_step(params, grads, state, lr, ocfg);
      epoch_loss += batch_loss;
    }
    epoch_loss /= static_cast<double>(plan.batches.size());

    double val_loss = 0.0, val_f1 = 0.0;
    eval_set(val_indices, &val_loss, &val_f1);
    if (!std::isfinite(val_loss))
      throw DataError("non-finite validation loss at epoch " +
                      std::to_string(e));
    hist.epochs.push_back({e, epoch_loss, val_loss, val_f1, lr});

    if (val_loss < best_val) {
      best_val = val_loss;
      best = params;
      hist.best_epoch = e;
      stall = 0;
    } else if (++stall >= ocfg.patience) {
      hist.stopped_early = true;
      break;
    }
  }
  return {std::move(best), std::move(hist)};
}

}  // namespace octseq::train
