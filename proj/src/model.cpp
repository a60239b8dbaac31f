#include "octseq/model.hpp"

#include <cfloat>
#include <cmath>

namespace octseq::model {

namespace {

Eigen::VectorXd sigmoid(const Eigen::VectorXd& a) {
  return a.unaryExpr([](double v) { return 1.0 / (1.0 + std::exp(-v)); });
}

void check(bool ok, const char* what) {
  if (!ok) throw DataError(std::string("dimension mismatch: ") + what);
}

}  // namespace

int layer_hidden(const BiLayerParams& layer) {
  return std::visit([](const auto& l) { return l.hidden(); }, layer);
}

int layer_input(const BiLayerParams& layer) {
  return std::visit([](const auto& l) { return l.input(); }, layer);
}

CellKind cell_kind_from_string(const std::string& s) {
  if (s == "gru") return CellKind::gru;
  if (s == "lstm") return CellKind::lstm;
  throw UsageError("unknown cell kind: '" + s + "'");
}

std::string to_string(CellKind kind) {
  return kind == CellKind::gru ? "gru" : "lstm";
}

GruStepTrace gru_step(const GruDirectionParams& p, const Eigen::VectorXd& x,
                      const Eigen::VectorXd& h_prev) {
  check(x.size() == p.w_z.cols(), "recurrent input width");
  check(h_prev.size() == p.b_z.size(), "recurrent state width");
  GruStepTrace st;
  st.z = sigmoid(p.w_z * x + p.u_z * h_prev + p.b_z);
  st.r = sigmoid(p.w_r * x + p.u_r * h_prev + p.b_r);
  st.htilde =
      (p.w_h * x + p.u_h * st.r.cwiseProduct(h_prev) + p.b_h).array().tanh();
  st.h = (Eigen::VectorXd::Ones(h_prev.size()) - st.z).cwiseProduct(h_prev) +
         st.z.cwiseProduct(st.htilde);
  return st;
}

Eigen::VectorXd gru_cell(const GruDirectionParams& params,
                         const Eigen::VectorXd& x,
                         const Eigen::VectorXd& h_prev) {
  return gru_step(params, x, h_prev).h;
}

LstmStepTrace lstm_step(const LstmDirectionParams& p, const Eigen::VectorXd& x,
                        const Eigen::VectorXd& h_prev,
                        const Eigen::VectorXd& c_prev) {
  check(x.size() == p.w_i.cols(), "recurrent input width");
  check(h_prev.size() == p.b_i.size() && c_prev.size() == p.b_i.size(),
        "recurrent state width");
  LstmStepTrace st;
  st.i = sigmoid(p.w_i * x + p.u_i * h_prev + p.b_i);
  st.f = sigmoid(p.w_f * x + p.u_f * h_prev + p.b_f);
  st.o = sigmoid(p.w_o * x + p.u_o * h_prev + p.b_o);
  st.g = (p.w_g * x + p.u_g * h_prev + p.b_g).array().tanh();
  st.c = st.f.cwiseProduct(c_prev) + st.i.cwiseProduct(st.g);
  st.h = st.o.cwiseProduct(st.c.array().tanh().matrix());
  return st;
}

std::pair<Eigen::VectorXd, Eigen::VectorXd> lstm_cell(
    const LstmDirectionParams& params, const Eigen::VectorXd& x,
    const Eigen::VectorXd& h_prev, const Eigen::VectorXd& c_prev) {
  const LstmStepTrace st = lstm_step(params, x, h_prev, c_prev);
  return {st.h, st.c};
}

LayerTrace bi_layer_forward(const BiLayerParams& params,
                            const Eigen::MatrixXd& seq) {
  const int d = static_cast<int>(seq.rows());
  if (d < 1) throw DataError("empty sequence");
  const int h = layer_hidden(params);
  check(seq.cols() == layer_input(params), "layer input width");

  LayerTrace trace;
  trace.input = seq;
  trace.output.resize(d, 2 * h);

  if (std::holds_alternative<BiGruLayerParams>(params)) {
    const auto& p = std::get<BiGruLayerParams>(params);
    trace.gru_fwd.resize(d);
    trace.gru_bwd.resize(d);
    Eigen::VectorXd state = Eigen::VectorXd::Zero(h);
    for (int t = 0; t < d; ++t) {
      trace.gru_fwd[t] = gru_step(p.fwd, seq.row(t).transpose(), state);
      state = trace.gru_fwd[t].h;
      trace.output.row(t).head(h) = state.transpose();
    }
    state.setZero();
    for (int t = d - 1; t >= 0; --t) {
      trace.gru_bwd[t] = gru_step(p.bwd, seq.row(t).transpose(), state);
      state = trace.gru_bwd[t].h;
      trace.output.row(t).tail(h) = state.transpose();
    }
  } else {
    const auto& p = std::get<BiLstmLayerParams>(params);
    trace.lstm_fwd.resize(d);
    trace.lstm_bwd.resize(d);
    Eigen::VectorXd hs = Eigen::VectorXd::Zero(h);
    Eigen::VectorXd cs = Eigen::VectorXd::Zero(h);
    for (int t = 0; t < d; ++t) {
      trace.lstm_fwd[t] = lstm_step(p.fwd, seq.row(t).transpose(), hs, cs);
      hs = trace.lstm_fwd[t].h;
      cs = trace.lstm_fwd[t].c;
      trace.output.row(t).head(h) = hs.transpose();
    }
    hs.setZero();
    cs.setZero();
    for (int t = d - 1; t >= 0; --t) {
      trace.lstm_bwd[t] = lstm_step(p.bwd, seq.row(t).transpose(), hs, cs);
      hs = trace.lstm_bwd[t].h;
      cs = trace.lstm_bwd[t].c;
      trace.output.row(t).tail(h) = hs.transpose();
    }
  }
  return trace;
}

Eigen::MatrixXd bigru_layer(const BiGruLayerParams& params,
                            const Eigen::MatrixXd& seq) {
  return bi_layer_forward(BiLayerParams(params), seq).output;
}

namespace {

// Accumulates one position's gradient contributions for a GRU direction.
// dh is the total gradient on h(t); returns d(h_prev) and adds dx to the
// input row.
Eigen::VectorXd gru_backward_step(const GruDirectionParams& p,
                                  const GruStepTrace& st,
                                  const Eigen::VectorXd& x,
                                  const Eigen::VectorXd& h_prev,
                                  const Eigen::VectorXd& dh,
                                  GruDirectionParams& g,
                                  Eigen::VectorXd& dx_out) {
  const Eigen::VectorXd ones = Eigen::VectorXd::Ones(dh.size());
  const Eigen::VectorXd dz = dh.cwiseProduct(st.htilde - h_prev);
  const Eigen::VectorXd dht = dh.cwiseProduct(st.z);
  Eigen::VectorXd dh_prev = dh.cwiseProduct(ones - st.z);

  const Eigen::VectorXd da_h =
      dht.cwiseProduct(ones - st.htilde.cwiseProduct(st.htilde));
  g.w_h.noalias() += da_h * x.transpose();
  g.u_h.noalias() += da_h * st.r.cwiseProduct(h_prev).transpose();
  g.b_h += da_h;

  const Eigen::VectorXd through_uh = p.u_h.transpose() * da_h;
  const Eigen::VectorXd dr = through_uh.cwiseProduct(h_prev);
  dh_prev += through_uh.cwiseProduct(st.r);

  const Eigen::VectorXd da_z =
      dz.cwiseProduct(st.z).cwiseProduct(ones - st.z);
  const Eigen::VectorXd da_r =
      dr.cwiseProduct(st.r).cwiseProduct(ones - st.r);
  g.w_z.noalias() += da_z * x.transpose();
  g.u_z.noalias() += da_z * h_prev.transpose();
  g.b_z += da_z;
  g.w_r.noalias() += da_r * x.transpose();
  g.u_r.noalias() += da_r * h_prev.transpose();
  g.b_r += da_r;

  dh_prev.noalias() += p.u_z.transpose() * da_z;
  dh_prev.noalias() += p.u_r.transpose() * da_r;

  dx_out.noalias() += p.w_z.transpose() * da_z;
  dx_out.noalias() += p.w_r.transpose() * da_r;
  dx_out.noalias() += p.w_h.transpose() * da_h;
  return dh_prev;
}

// LSTM analogue; carries (dh_prev, dc_prev).
std::pair<Eigen::VectorXd, Eigen::VectorXd> lstm_backward_step(
    const LstmDirectionParams& p, const LstmStepTrace& st,
    const Eigen::VectorXd& x, const Eigen::VectorXd& h_prev,
    const Eigen::VectorXd& c_prev, const Eigen::VectorXd& dh,
    const Eigen::VectorXd& dc_carry, LstmDirectionParams& g,
    Eigen::VectorXd& dx_out) {
  const Eigen::VectorXd ones = Eigen::VectorXd::Ones(dh.size());
  const Eigen::VectorXd tc = st.c.array().tanh();
  const Eigen::VectorXd do_ = dh.cwiseProduct(tc);
  const Eigen::VectorXd dc =
      dc_carry + dh.cwiseProduct(st.o).cwiseProduct(ones - tc.cwiseProduct(tc));
  const Eigen::VectorXd di = dc.cwiseProduct(st.g);
  const Eigen::VectorXd dg = dc.cwiseProduct(st.i);
  const Eigen::VectorXd df = dc.cwiseProduct(c_prev);
  const Eigen::VectorXd dc_prev = dc.cwiseProduct(st.f);

  const Eigen::VectorXd da_i = di.cwiseProduct(st.i).cwiseProduct(ones - st.i);
  const Eigen::VectorXd da_f = df.cwiseProduct(st.f).cwiseProduct(ones - st.f);
  const Eigen::VectorXd da_o =
      do_.cwiseProduct(st.o).cwiseProduct(ones - st.o);
  const Eigen::VectorXd da_g =
      dg.cwiseProduct(ones - st.g.cwiseProduct(st.g));

  g.w_i.noalias() += da_i * x.transpose();
  g.u_i.noalias() += da_i * h_prev.transpose();
  g.b_i += da_i;
  g.w_f.noalias() += da_f * x.transpose();
  g.u_f.noalias() += da_f * h_prev.transpose();
  g.b_f += da_f;
  g.w_o.noalias() += da_o * x.transpose();
  g.u_o.noalias() += da_o * h_prev.transpose();
  g.b_o += da_o;
  g.w_g.noalias() += da_g * x.transpose();
  g.u_g.noalias() += da_g * h_prev.transpose();
  g.b_g += da_g;

  Eigen::VectorXd dh_prev = p.u_i.transpose() * da_i;
  dh_prev.noalias() += p.u_f.transpose() * da_f;
  dh_prev.noalias() += p.u_o.transpose() * da_o;
  dh_prev.noalias() += p.u_g.transpose() * da_g;

  dx_out.noalias() += p.w_i.transpose() * da_i;
  dx_out.noalias() += p.w_f.transpose() * da_f;
  dx_out.noalias() += p.w_o.transpose() * da_o;
  dx_out.noalias() += p.w_g.transpose() * da_g;
  return {dh_prev, dc_prev};
}

}  // namespace

Eigen::MatrixXd bi_layer_backward(const BiLayerParams& params,
                                  const LayerTrace& trace,
                                  const Eigen::MatrixXd& d_output,
                                  BiLayerParams& grads) {
  const int d = static_cast<int>(trace.input.rows());
  const int h = layer_hidden(params);
  check(d_output.rows() == d && d_output.cols() == 2 * h, "upstream gradient");
  if (params.index() != grads.index())
    throw DataError("gradient container kind does not match parameters");

  Eigen::MatrixXd d_input = Eigen::MatrixXd::Zero(d, trace.input.cols());
  const Eigen::VectorXd zero = Eigen::VectorXd::Zero(h);

  if (std::holds_alternative<BiGruLayerParams>(params)) {
    const auto& p = std::get<BiGruLayerParams>(params);
    auto& g = std::get<BiGruLayerParams>(grads);
    Eigen::VectorXd carry = zero;
    for (int t = d - 1; t >= 0; --t) {
      const Eigen::VectorXd dh =
          d_output.row(t).head(h).transpose() + carry;
      const Eigen::VectorXd& h_prev = t > 0 ? trace.gru_fwd[t - 1].h : zero;
      Eigen::VectorXd dx = Eigen::VectorXd::Zero(trace.input.cols());
      carry = gru_backward_step(p.fwd, trace.gru_fwd[t],
                                trace.input.row(t).transpose(), h_prev, dh,
                                g.fwd, dx);
      d_input.row(t) += dx.transpose();
    }
    carry = zero;
    for (int t = 0; t < d; ++t) {
      const Eigen::VectorXd dh =
          d_output.row(t).tail(h).transpose() + carry;
      const Eigen::VectorXd& h_prev =
          t < d - 1 ? trace.gru_bwd[t + 1].h : zero;
      Eigen::VectorXd dx = Eigen::VectorXd::Zero(trace.input.cols());
      carry = gru_backward_step(p.bwd, trace.gru_bwd[t],
                                trace.input.row(t).transpose(), h_prev, dh,
                                g.bwd, dx);
      d_input.row(t) += dx.transpose();
    }
  } else {
    const auto& p = std::get<BiLstmLayerParams>(params);
    auto& g = std::get<BiLstmLayerParams>(grads);
    Eigen::VectorXd dh_carry = zero, dc_carry = zero;
    for (int t = d - 1; t >= 0; --t) {
      const Eigen::VectorXd dh =
          d_output.row(t).head(h).transpose() + dh_carry;
      const Eigen::VectorXd& h_prev = t > 0 ? trace.lstm_fwd[t - 1].h : zero;
      const Eigen::VectorXd& c_prev = t > 0 ? trace.lstm_fwd[t - 1].c : zero;
      Eigen::VectorXd dx = Eigen::VectorXd::Zero(trace.input.cols());
      std::tie(dh_carry, dc_carry) = lstm_backward_step(
          p.fwd, trace.lstm_fwd[t], trace.input.row(t).transpose(), h_prev,
          c_prev, dh, dc_carry, g.fwd, dx);
      d_input.row(t) += dx.transpose();
    }
    dh_carry = zero;
    dc_carry = zero;
    for (int t = 0; t < d; ++t) {
      const Eigen::VectorXd dh =
          d_output.row(t).tail(h).transpose() + dh_carry;
      const Eigen::VectorXd& h_prev =
          t < d - 1 ? trace.lstm_bwd[t + 1].h : zero;
      const Eigen::VectorXd& c_prev =
          t < d - 1 ? trace.lstm_bwd[t + 1].c : zero;
      Eigen::VectorXd dx = Eigen::VectorXd::Zero(trace.input.cols());
      std::tie(dh_carry, dc_carry) = lstm_backward_step(
          p.bwd, trace.lstm_bwd[t], trace.input.row(t).transpose(), h_prev,
          c_prev, dh, dc_carry, g.bwd, dx);
      d_input.row(t) += dx.transpose();
    }
  }
  return d_input;
}

std::pair<Eigen::VectorXd, std::vector<int>> adaptive_max_pool(
    const Eigen::MatrixXd& h_g) {
  if (h_g.rows() < 1) throw DataError("empty sequence");
  Eigen::VectorXd out(h_g.cols());
  std::vector<int> argmax(h_g.cols());
  for (Eigen::Index c = 0; c < h_g.cols(); ++c) {
    int best = 0;
    for (Eigen::Index r = 1; r < h_g.rows(); ++r)
      if (h_g(r, c) > h_g(best, c)) best = static_cast<int>(r);
    out(c) = h_g(best, c);
    argmax[c] = best;
  }
  return {out, argmax};
}

ForwardOutcome head_forward(const HeadParams& params,
                            const Eigen::MatrixXd& seq, Mode mode,
                            std::uint64_t dropout_seed) {
  const double rate = params.config.dropout_rate;
  if (rate < 0.0 || rate >= 1.0)
    throw UsageError("dropout rate must lie in [0,1)");
  check(seq.cols() == layer_input(params.layer1), "head input width");

  ForwardOutcome out;
  ForwardTrace& tr = out.trace;
  tr.train_mode = mode == Mode::train;
  tr.layer1 = bi_layer_forward(params.layer1, seq);
  tr.layer2 = bi_layer_forward(params.layer2, tr.layer1.output);

  const Eigen::Index d = tr.layer2.output.rows();
  const Eigen::Index c2 = tr.layer2.output.cols();
  if (tr.train_mode && rate > 0.0) {
    tr.dropout_mask.resize(d, c2);
    rng::Engine eng(dropout_seed);
    const double keep_scale = 1.0 / (1.0 - rate);
    for (Eigen::Index i = 0; i < d; ++i)
      for (Eigen::Index j = 0; j < c2; ++j)
        tr.dropout_mask(i, j) =
            rng::uniform_unit(eng) < rate ? 0.0 : keep_scale;
  } else {
    tr.dropout_mask = Eigen::MatrixXd::Ones(d, c2);
  }
  tr.dropped = tr.layer2.output.cwiseProduct(tr.dropout_mask);

  std::tie(tr.pooled, tr.argmax) = adaptive_max_pool(tr.dropped);

  check(params.w_out.size() == tr.pooled.size(), "classifier input width");
  tr.logit = params.w_out.dot(tr.pooled) + params.b_out;
  double p;
  if (tr.logit >= 0.0) {
    const double e = std::exp(-tr.logit);
    p = 1.0 / (1.0 + e);
  } else {
    const double e = std::exp(tr.logit);
    p = e / (1.0 + e);
  }
  p = std::min(std::max(p, DBL_MIN), std::nextafter(1.0, 0.0));
  tr.p = p;
  out.p = p;
  return out;
}

ForwardOutcome head_forward(const HeadParams& params,
                            const features::FeatureSequence& seq, Mode mode,
                            std::uint64_t dropout_seed) {
  return head_forward(params, seq.features.cast<double>(), mode, dropout_seed);
}

HeadParams head_backward(const HeadParams& params, const ForwardTrace& trace,
                         double dL_dp, Eigen::MatrixXd* d_input) {
  HeadParams grads = zero_like(params);
  const double dlogit = dL_dp * trace.p * (1.0 - trace.p);
  grads.w_out = dlogit * trace.pooled;
  grads.b_out = dlogit;

  const Eigen::VectorXd d_pooled = dlogit * params.w_out;
  Eigen::MatrixXd d_dropped =
      Eigen::MatrixXd::Zero(trace.dropped.rows(), trace.dropped.cols());
  for (Eigen::Index c = 0; c < d_pooled.size(); ++c)
    d_dropped(trace.argmax[c], c) += d_pooled(c);

  const Eigen::MatrixXd d_l2out = d_dropped.cwiseProduct(trace.dropout_mask);
  const Eigen::MatrixXd d_l1out =
      bi_layer_backward(params.layer2, trace.layer2, d_l2out, grads.layer2);
  const Eigen::MatrixXd d_in =
      bi_layer_backward(params.layer1, trace.layer1, d_l1out, grads.layer1);
  if (d_input) *d_input = d_in;
  return grads;
}

namespace {

void push_gru(std::vector<ParamView>& views, const std::string& prefix,
              GruDirectionParams& p) {
  auto mat = [&](const char* n, Eigen::MatrixXd& m) {
    views.push_back({prefix + "." + n, m.data(), m.rows(), m.cols()});
  };
  auto vec = [&](const char* n, Eigen::VectorXd& v) {
    views.push_back({prefix + "." + n, v.data(), v.size(), 1});
  };
  mat("w_z", p.w_z);
  mat("u_z", p.u_z);
  vec("b_z", p.b_z);
  mat("w_r", p.w_r);
  mat("u_r", p.u_r);
  vec("b_r", p.b_r);
  mat("w_h", p.w_h);
  mat("u_h", p.u_h);
  vec("b_h", p.b_h);
}

void push_lstm(std::vector<ParamView>& views, const std::string& prefix,
               LstmDirectionParams& p) {
  auto mat = [&](const char* n, Eigen::MatrixXd& m) {
    views.push_back({prefix + "." + n, m.data(), m.rows(), m.cols()});
  };
  auto vec = [&](const char* n, Eigen::VectorXd& v) {
    views.push_back({prefix + "." + n, v.data(), v.size(), 1});
  };
  mat("w_i", p.w_i);
  mat("u_i", p.u_i);
  vec("b_i", p.b_i);
  mat("w_f", p.w_f);
  mat("u_f", p.u_f);
  vec("b_f", p.b_f);
  mat("w_o", p.w_o);
  mat("u_o", p.u_o);
  vec("b_o", p.b_o);
  mat("w_g", p.w_g);
  mat("u_g", p.u_g);
  vec("b_g", p.b_g);
}

void push_layer(std::vector<ParamView>& views, const std::string& prefix,
                BiLayerParams& layer) {
  if (std::holds_alternative<BiGruLayerParams>(layer)) {
    auto& l = std::get<BiGruLayerParams>(layer);
    push_gru(views, prefix + ".fwd", l.fwd);
    push_gru(views, prefix + ".bwd", l.bwd);
  } else {
    auto& l = std::get<BiLstmLayerParams>(layer);
    push_lstm(views, prefix + ".fwd", l.fwd);
    push_lstm(views, prefix + ".bwd", l.bwd);
  }
}

}  // namespace

std::vector<ParamView> list_params(HeadParams& params) {
  std::vector<ParamView> views;
  push_layer(views, "layer1", params.layer1);
  push_layer(views, "layer2", params.layer2);
  views.push_back(
      {"w_out", params.w_out.data(), params.w_out.size(), 1});
  views.push_back({"b_out", &params.b_out, 1, 1});
  return views;
}

namespace {

GruDirectionParams make_gru_direction(int input, int hidden) {
  GruDirectionParams p;
  p.w_z = Eigen::MatrixXd::Zero(hidden, input);
  p.w_r = Eigen::MatrixXd::Zero(hidden, input);
  p.w_h = Eigen::MatrixXd::Zero(hidden, input);
  p.u_z = Eigen::MatrixXd::Zero(hidden, hidden);
  p.u_r = Eigen::MatrixXd::Zero(hidden, hidden);
  p.u_h = Eigen::MatrixXd::Zero(hidden, hidden);
  p.b_z = Eigen::VectorXd::Zero(hidden);
  p.b_r = Eigen::VectorXd::Zero(hidden);
  p.b_h = Eigen::VectorXd::Zero(hidden);
  return p;
}

LstmDirectionParams make_lstm_direction(int input, int hidden) {
  LstmDirectionParams p;
  p.w_i = Eigen::MatrixXd::Zero(hidden, input);
  p.w_f = Eigen::MatrixXd::Zero(hidden, input);
  p.w_o = Eigen::MatrixXd::Zero(hidden, input);
  p.w_g = Eigen::MatrixXd::Zero(hidden, input);
  p.u_i = Eigen::MatrixXd::Zero(hidden, hidden);
  p.u_f = Eigen::MatrixXd::Zero(hidden, hidden);
  p.u_o = Eigen::MatrixXd::Zero(hidden, hidden);
  p.u_g = Eigen::MatrixXd::Zero(hidden, hidden);
  p.b_i = Eigen::VectorXd::Zero(hidden);
  p.b_f = Eigen::VectorXd::Zero(hidden);
  p.b_o = Eigen::VectorXd::Zero(hidden);
  p.b_g = Eigen::VectorXd::Zero(hidden);
  return p;
}

BiLayerParams make_layer(CellKind cell, int input, int hidden) {
  if (cell == CellKind::gru) {
    BiGruLayerParams l;
    l.fwd = make_gru_direction(input, hidden);
    l.bwd = make_gru_direction(input, hidden);
    return l;
  }
  BiLstmLayerParams l;
  l.fwd = make_lstm_direction(input, hidden);
  l.bwd = make_lstm_direction(input, hidden);
  return l;
}

HeadParams make_zero_head(const HeadConfig& cfg) {
  HeadParams params;
  params.config = cfg;
  params.layer1 = make_layer(cfg.cell, cfg.input_dim, cfg.hidden1);
  params.layer2 = make_layer(cfg.cell, 2 * cfg.hidden1, cfg.hidden2);
  params.w_out = Eigen::VectorXd::Zero(2 * cfg.hidden2);
  params.b_out = 0.0;
  return params;
}

// The per-block bound 1/sqrt(hidden of that block's layer).
double block_bound(const std::string& name, const HeadConfig& cfg) {
  if (name.rfind("layer1.", 0) == 0) return 1.0 / std::sqrt(cfg.hidden1);
  if (name.rfind("layer2.", 0) == 0) return 1.0 / std::sqrt(cfg.hidden2);
  return 1.0 / std::sqrt(2.0 * cfg.hidden2);
}

}  // namespace

HeadParams init_head(const HeadConfig& cfg, std::uint64_t seed) {
  if (cfg.input_dim < 1 || cfg.hidden1 < 1 || cfg.hidden2 < 1)
    throw UsageError("head dimensions must be positive");
  HeadParams params = make_zero_head(cfg);
  rng::Engine eng(rng::derive_seed(seed, 0x1217));
  for (ParamView& view : list_params(params)) {
    const double bound = block_bound(view.name, cfg);
    for (Eigen::Index i = 0; i < view.size(); ++i)
      view.data[i] = rng::uniform_range(eng, -bound, bound);
  }
  return params;
}

HeadParams zero_like(const HeadParams& like) {
  return make_zero_head(like.config);
}

namespace {
constexpr std::uint32_t kCkptMagic = 0x4b434851;
constexpr std::uint32_t kCkptVersion = 1;
}  // namespace

void save_checkpoint(const std::filesystem::path& path,
                     const HeadParams& params) {
  // Views are only read from; list_params needs mutable access by contract.
  auto views = list_params(const_cast<HeadParams&>(params));
  std::string out;
  io::append_u32(out, kCkptMagic);
  io::append_u32(out, kCkptVersion);
  io::append_str(out, to_string(params.config.cell));
  io::append_u32(out, static_cast<std::uint32_t>(params.config.input_dim));
  io::append_u32(out, static_cast<std::uint32_t>(params.config.hidden1));
  io::append_u32(out, static_cast<std::uint32_t>(params.config.hidden2));
  io::append_f64(out, params.config.dropout_rate);
  io::append_u32(out, static_cast<std::uint32_t>(views.size()));
  for (const ParamView& v : views) {
    io::append_str(out, v.name);
    io::append_u32(out, static_cast<std::uint32_t>(v.rows));
    io::append_u32(out, static_cast<std::uint32_t>(v.cols));
  }
  for (const ParamView& v : views)
    for (Eigen::Index i = 0; i < v.size(); ++i) io::append_f64(out, v.data[i]);
  io::write_file_atomic(path, out);
}

HeadParams load_checkpoint(const std::filesystem::path& path) {
  const std::string bytes = io::read_file(path);
  io::Reader r(bytes);
  if (r.u32() != kCkptMagic) throw DataError("not a checkpoint file");
  if (r.u32() != kCkptVersion) throw DataError("unsupported checkpoint version");
  HeadConfig cfg;
  cfg.cell = cell_kind_from_string(r.str());
  cfg.input_dim = static_cast<int>(r.u32());
  cfg.hidden1 = static_cast<int>(r.u32());
  cfg.hidden2 = static_cast<int>(r.u32());
  cfg.dropout_rate = r.f64();
  HeadParams params = make_zero_head(cfg);
  auto views = list_params(params);
  const std::uint32_t n = r.u32();
  if (n != views.size()) throw DataError("checkpoint parameter count mismatch");
  for (const ParamView& v : views) {
    const std::string name = r.str();
    const std::uint32_t rows = r.u32();
    const std::uint32_t cols = r.u32();
    if (name != v.name || rows != static_cast<std::uint32_t>(v.rows) ||
        cols != static_cast<std::uint32_t>(v.cols))
      throw DataError("checkpoint shape mismatch at " + name + ": got " +
                      std::to_string(rows) + "x" + std::to_string(cols) +
                      ", expected " + std::to_string(v.rows) + "x" +
                      std::to_string(v.cols));
  }
  for (ParamView& v : views)
    for (Eigen::Index i = 0; i < v.size(); ++i) v.data[i] = r.f64();
  if (!r.exhausted()) throw DataError("checkpoint has trailing bytes");
  return params;
}

}  // namespace octseq::model
