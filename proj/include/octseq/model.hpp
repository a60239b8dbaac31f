#pragma once

#include <Eigen/Dense>
#include <filesystem>
#include <string>
#include <variant>
#include <vector>

#include "octseq/common.hpp"
#include "octseq/features.hpp"

namespace octseq::model {

// One scan direction of a gated recurrent layer. Gate equations follow the
// h = (1-z)*h_prev + z*h_tilde convention:
//   z = sigma(w_z x + u_z h_prev + b_z)
//   r = sigma(w_r x + u_r h_prev + b_r)
//   h_tilde = tanh(w_h x + u_h (r . h_prev) + b_h)
struct GruDirectionParams {
  Eigen::MatrixXd w_z, w_r, w_h;  // hidden x input
  Eigen::MatrixXd u_z, u_r, u_h;  // hidden x hidden
  Eigen::VectorXd b_z, b_r, b_h;  // hidden

  int hidden() const { return static_cast<int>(b_z.size()); }
  int input() const { return static_cast<int>(w_z.cols()); }
};

// Long short-term memory direction for the recurrent-cell ablation. State
// carries (h, c):
//   i/f/o = sigma(w x + u h_prev + b); g = tanh(w_g x + u_g h_prev + b_g)
//   c = f . c_prev + i . g; h = o . tanh(c)
struct LstmDirectionParams {
  Eigen::MatrixXd w_i, w_f, w_o, w_g;  // hidden x input
  Eigen::MatrixXd u_i, u_f, u_o, u_g;  // hidden x hidden
  Eigen::VectorXd b_i, b_f, b_o, b_g;  // hidden

  int hidden() const { return static_cast<int>(b_i.size()); }
  int input() const { return static_cast<int>(w_i.cols()); }
};

struct BiGruLayerParams {
  GruDirectionParams fwd, bwd;  // same hidden size in both directions
  int hidden() const { return fwd.hidden(); }
  int input() const { return fwd.input(); }
};

struct BiLstmLayerParams {
  LstmDirectionParams fwd, bwd;
  int hidden() const { return fwd.hidden(); }
  int input() const { return fwd.input(); }
};

using BiLayerParams = std::variant<BiGruLayerParams, BiLstmLayerParams>;

int layer_hidden(const BiLayerParams& layer);
int layer_input(const BiLayerParams& layer);

enum class CellKind { gru, lstm };

CellKind cell_kind_from_string(const std::string& s);
std::string to_string(CellKind kind);

struct HeadConfig {
  int input_dim = 1024;
  int hidden1 = 256;
  int hidden2 = 128;
  CellKind cell = CellKind::gru;
  double dropout_rate = 0.3;  // in [0,1)
};

// All learnable parameters of the sequence head: two stacked bidirectional
// recurrent layers, then dropout -> per-channel max over timesteps -> a
// single-logit sigmoid classifier.
struct HeadParams {
  HeadConfig config;
  BiLayerParams layer1, layer2;
  Eigen::VectorXd w_out;  // 2 * hidden2
  double b_out = 0.0;
};

// Named view over one parameter block; `data` has rows*cols doubles in the
// matrix's storage order. Used to drive the optimizer and checkpoints over
// every block in one fixed order.
struct ParamView {
  std::string name;
  double* data;
  Eigen::Index rows, cols;
  Eigen::Index size() const { return rows * cols; }
};

std::vector<ParamView> list_params(HeadParams& params);

// Uniform init in [-1/sqrt(hidden), +1/sqrt(hidden)] per block, seeded.
HeadParams init_head(const HeadConfig& cfg, std::uint64_t seed);
// Same shapes as `like`, all values zero; the gradient/moment container.
HeadParams zero_like(const HeadParams& like);

// Per-timestep gate activations retained for the backward pass.
struct GruStepTrace {
  Eigen::VectorXd z, r, htilde, h;
};
struct LstmStepTrace {
  Eigen::VectorXd i, f, o, g, c, h;
};

struct LayerTrace {
  Eigen::MatrixXd input;  // D x in
  // Indexed by sequence position; fwd scans 0..D-1, bwd scans D-1..0.
  std::vector<GruStepTrace> gru_fwd, gru_bwd;
  std::vector<LstmStepTrace> lstm_fwd, lstm_bwd;
  Eigen::MatrixXd output;  // D x 2*hidden, row t = [h_fwd(t); h_bwd(t)]
};

struct ForwardTrace {
  LayerTrace layer1, layer2;
  Eigen::MatrixXd dropout_mask;  // D x 2*hidden2; entries 0 or 1/(1-rate)
  Eigen::MatrixXd dropped;       // layer2.output .* dropout_mask
  Eigen::VectorXd pooled;        // 2*hidden2
  std::vector<int> argmax;       // winning row per channel (0-based)
  double logit = 0.0;
  double p = 0.5;  // sigmoid(logit), clamped to (0,1) strictly
  bool train_mode = false;
};

Eigen::VectorXd gru_cell(const GruDirectionParams& params,
                         const Eigen::VectorXd& x,
                         const Eigen::VectorXd& h_prev);
GruStepTrace gru_step(const GruDirectionParams& params,
                      const Eigen::VectorXd& x, const Eigen::VectorXd& h_prev);

// Returns (h, c) as a pair of columns.
std::pair<Eigen::VectorXd, Eigen::VectorXd> lstm_cell(
    const LstmDirectionParams& params, const Eigen::VectorXd& x,
    const Eigen::VectorXd& h_prev, const Eigen::VectorXd& c_prev);
LstmStepTrace lstm_step(const LstmDirectionParams& params,
                        const Eigen::VectorXd& x,
                        const Eigen::VectorXd& h_prev,
                        const Eigen::VectorXd& c_prev);

// Forward scan from position 0 and backward scan from position D-1, both
// from zero initial state; row t of the output concatenates both states.
LayerTrace bi_layer_forward(const BiLayerParams& params,
                            const Eigen::MatrixXd& seq);
Eigen::MatrixXd bigru_layer(const BiGruLayerParams& params,
                            const Eigen::MatrixXd& seq);

// Accumulates parameter gradients into `grads` (same kind/shapes as
// `params`) and returns d(input).
Eigen::MatrixXd bi_layer_backward(const BiLayerParams& params,
                                  const LayerTrace& trace,
                                  const Eigen::MatrixXd& d_output,
                                  BiLayerParams& grads);

// Per-channel max over rows; ties go to the smallest row index so the
// backward routing is well defined.
std::pair<Eigen::VectorXd, std::vector<int>> adaptive_max_pool(
    const Eigen::MatrixXd& h_g);

enum class Mode { train, eval };

struct ForwardOutcome {
  double p = 0.5;
  ForwardTrace trace;
};

// Layer1 -> layer2 -> inverted dropout (train mode only) -> max over
// timesteps -> sigmoid classifier. `dropout_seed` fixes the mask.
ForwardOutcome head_forward(const HeadParams& params,
                            const Eigen::MatrixXd& seq, Mode mode,
                            std::uint64_t dropout_seed = 0);
ForwardOutcome head_forward(const HeadParams& params,
                            const features::FeatureSequence& seq, Mode mode,
                            std::uint64_t dropout_seed = 0);

// Exact analytic gradients of the full head given dL/dp. When `d_input` is
// non-null it receives the gradient with respect to the input sequence.
HeadParams head_backward(const HeadParams& params, const ForwardTrace& trace,
                         double dL_dp, Eigen::MatrixXd* d_input = nullptr);

// Checkpoint: versioned header, shape manifest, then 64-bit little-endian
// payloads in list_params order. Loading rejects shape mismatches.
void save_checkpoint(const std::filesystem::path& path,
                     const HeadParams& params);
HeadParams load_checkpoint(const std::filesystem::path& path);

}  // namespace octseq::model
