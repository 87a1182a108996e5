// SPDX-License-Identifier: Apache-2.0
/**
 * @file   harness.hpp
 * @brief  Desk-scale transformer training with spectrally conditioned
 *         attention and periodic conditioning probes.
 *
 * Layer (post-norm):
 *   Y = LN₁(X + concat_h(Attn_h(X))·W_O + b_O)
 *   T = LN₂(Y + GELU(Y·W₁ + b₁)·W₂ + b₂)
 * where each head evaluates softmax(X·W̃_Q·W̃_Kᵀ·Xᵀ)·X·W̃_V with
 * W̃ = W + C and C the frozen per-head correction. Tokens are embedded with
 * learned token and position tables; the classifier reads the mean-pooled
 * final representation.
 */
#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "specattn/attention.hpp"
#include "specattn/bounds.hpp"
#include "specattn/conditioning.hpp"
#include "specattn/linalg.hpp"

namespace specattn {

// --- configuration ------------------------------------------------------------

enum class ConditioningKind { Off, SvdCap, DiagonalShift };

struct Conditioning {
  ConditioningKind kind = ConditioningKind::DiagonalShift;
  double lambda = kDefaultShift;

  static Conditioning off() { return {ConditioningKind::Off, kDefaultShift}; }
  static Conditioning svd_cap() { return {ConditioningKind::SvdCap, kDefaultShift}; }
  static Conditioning diagonal_shift(double lambda = kDefaultShift) {
    return {ConditioningKind::DiagonalShift, lambda};
  }
  std::optional<CorrectionMode> mode() const;
  std::string name() const;  // off | svd_cap | diagonal_shift
};

struct TransformerConfig {
  std::size_t layers = 2;
  std::size_t heads = 2;
  std::size_t model_width = 32;  // D = heads · head_width
  std::size_t head_width = 16;
  std::size_t seq_len = 16;
  std::size_t ffn_width = 64;
  bool layer_norm = true;
  /// Test-only reduction: drop the feed-forward sublayer entirely.
  bool feed_forward = true;
  Conditioning conditioning;
  std::uint64_t seed = 7;

  /// Throws ConfigError on inconsistent widths or zero counts.
  void validate() const;
};

struct OptimizerConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double weight_decay = 0.01;
  double eps = 1e-8;
};

struct RunConfig {
  TransformerConfig model;
  OptimizerConfig optimizer;
  std::size_t steps = 2000;
  std::size_t batch_size = 32;
  std::size_t probe_every = 250;
  /// Sequences in the fixed probe batch (the first ones of the eval split).
  /// With probe_samples · N ≥ D the batch Jacobian can reach full rank.
  std::size_t probe_samples = 4;
  std::size_t n_train = 8192;
  std::size_t n_eval = 1024;

  void validate() const;
};

// --- synthetic task -------------------------------------------------------------

inline constexpr std::size_t kVocabSize = 32;
inline constexpr std::size_t kNumClasses = 4;
inline constexpr std::size_t kDefaultSeqLen = 16;

struct Example {
  std::vector<int> tokens;
  int label = 0;
};

struct Dataset {
  std::vector<Example> train;
  std::vector<Example> eval;
};

/// Four-class motif task (see docs/synth_task.md). Class c plants tokens
/// 2c and 2c+1 at random positions, plus one lone motif token of a different
/// class as a distractor; the remaining positions draw from tokens 8..31.
Dataset synth_task(std::uint64_t seed, std::size_t n_train, std::size_t n_eval,
                   std::size_t seq_len = kDefaultSeqLen);

// --- model ----------------------------------------------------------------------

struct HeadWeights {
  Matrix w_q, w_k, w_v;  // D×d each

  AttentionParams params() const { return AttentionParams(w_q, w_k, w_v); }
};

struct LayerParams {
  std::vector<HeadWeights> heads;
  Matrix w_o, b_o;            // D×D, 1×D
  Matrix ln1_gain, ln1_bias;  // 1×D
  Matrix w_ff1, b_ff1;        // D×F, 1×F
  Matrix w_ff2, b_ff2;        // F×D, 1×D
  Matrix ln2_gain, ln2_bias;  // 1×D
};

struct ModelParams {
  Matrix token_embedding;     // V×D
  Matrix position_embedding;  // N×D
  std::vector<LayerParams> layers;
  Matrix w_cls, b_cls;  // D×C, 1×C

  struct Entry {
    std::string name;
    Matrix* value;
    bool decay;  // decoupled weight decay applies
  };
  /// Every trainable tensor in a fixed order. Corrections are not included.
  std::vector<Entry> entries();
  std::vector<const Matrix*> tensors() const;
  /// Same structure, all zeros.
  ModelParams zeros_like() const;
};

/// Gaussian init with std 1/√D for every weight matrix; zero biases; unit
/// layer-norm gains.
ModelParams init_params(const TransformerConfig& cfg, std::uint64_t seed);

/// Per-layer, per-head frozen corrections (empty when conditioning is off).
using CorrectionGrid = std::vector<std::vector<CorrectionSet>>;
CorrectionGrid build_corrections(const TransformerConfig& cfg, const ModelParams& params);

/// One transformer layer applied to X (N×D). `corrections` holds one entry per
/// head, or is empty for unconditioned attention.
Matrix forward_layer(const Matrix& x, const LayerParams& layer,
                     std::span<const CorrectionSet> corrections, const TransformerConfig& cfg);

class Transformer {
 public:
  /// Builds the frozen corrections from `params` (the initial weights).
  Transformer(TransformerConfig cfg, ModelParams params);
  Transformer(TransformerConfig cfg, ModelParams params, CorrectionGrid corrections);

  const TransformerConfig& config() const noexcept { return cfg_; }
  const ModelParams& params() const noexcept { return params_; }
  ModelParams& mutable_params() noexcept { return params_; }
  const CorrectionGrid& corrections() const noexcept { return corrections_; }
  std::span<const CorrectionSet> layer_corrections(std::size_t layer) const;

  Matrix embed(std::span<const int> tokens) const;
  /// Logits (1×C) for one sequence.
  Matrix logits(std::span<const int> tokens) const;
  int predict(std::span<const int> tokens) const;
  /// Input X to every layer for one sequence (layer 0 is the embedding).
  std::vector<Matrix> layer_inputs(std::span<const int> tokens) const;

  /// Mean cross-entropy over `batch`; accumulates ∂loss/∂params into `grad`
  /// when non-null.
  double loss_and_grad(std::span<const Example> batch, ModelParams* grad) const;
  double mean_loss(std::span<const Example> examples) const;
  double accuracy(std::span<const Example> examples) const;

 private:
  TransformerConfig cfg_;
  ModelParams params_;
  CorrectionGrid corrections_;
};

// --- optimizer --------------------------------------------------------------------

/// Adam with decoupled weight decay. State is keyed by trainable tensor name,
/// so correction matrices can never enter it.
class AdamW {
 public:
  explicit AdamW(OptimizerConfig cfg) : cfg_(cfg) {}

  void step(ModelParams& params, ModelParams& grad);
  std::size_t steps_taken() const noexcept { return t_; }
  std::vector<std::string> state_names() const;

 private:
  struct Moments {
    std::string name;
    std::vector<double> m, v;
  };
  OptimizerConfig cfg_;
  std::size_t t_ = 0;
  std::vector<Moments> state_;
};

// --- probes and metrics -----------------------------------------------------------

struct HeadProbe {
  std::size_t layer = 0;
  std::size_t head = 0;
  std::array<SpectralRecord, 3> w;   // trainable W per role
  std::array<SpectralRecord, 3> wc;  // W + C per role (= W when off)
  std::array<double, 3> c_fro{};     // ‖C‖_F per role
  /// Jacobian of the attention outputs over the whole probe batch, at W + C.
  /// Absent when the probe batch is empty.
  std::optional<SpectralRecord> jacobian;
  bool jacobian_full_rank = false;
  /// Bound value per probe sequence, at W + C.
  std::vector<double> bound_values;
};

struct ProbeSnapshot {
  std::size_t step = 0;
  double loss = 0.0;      // eval-split mean cross-entropy
  double eval_acc = 0.0;
  std::vector<HeadProbe> heads;
};

struct RoleAggregate {
  double w_sigma_min = 0, w_sigma_max = 0, w_kappa = 0;
  double wc_sigma_min = 0, wc_sigma_max = 0, wc_kappa = 0;
  double c_fro = 0;
};

/// Per-step means over heads and layers (and probe sequences for the bound).
struct TrajectoryPoint {
  std::size_t step = 0;
  double loss = 0.0;
  double eval_acc = 0.0;
  std::array<RoleAggregate, 3> roles;
  double kappa_j = 0.0;
  double kappa_j_effective = 0.0;
  double bound_value = 0.0;
  double full_rank_fraction = 0.0;  // share of heads with a full-rank batch Jacobian
};

enum class RunStatus { Completed, Diverged };

struct RunMetrics {
  std::vector<double> step_loss;  // training batch loss, one per step
  std::vector<ProbeSnapshot> probes;
  RunStatus status = RunStatus::Completed;
  std::string diagnostic;  // set when the run diverged
  std::size_t diverged_at = 0;
};

struct TrainRun {
  RunConfig config;
  RunMetrics metrics;
  ModelParams initial_params;
  ModelParams final_params;
  CorrectionGrid initial_corrections;  // snapshot at step 0
  CorrectionGrid final_corrections;    // as held by the model at the end
  std::vector<std::string> optimizer_state;
};

ProbeSnapshot probe(const Transformer& model, std::span<const Example> probe_batch,
                    std::span<const Example> eval, std::size_t step);

/// Trains per `config`. Divergence does not throw; it ends the run with
/// status Diverged and a diagnostic.
TrainRun train(const RunConfig& config);
TrainRun train(const RunConfig& config, const Dataset& data);

std::vector<TrajectoryPoint> conditioning_trajectory(std::span<const ProbeSnapshot> probes);
TrajectoryPoint aggregate(const ProbeSnapshot& snapshot);

// --- ablation and cost accounting -------------------------------------------------

struct AblationRow {
  double lambda = 0.0;
  double final_eval_acc = 0.0;
  double init_mean_kappa_wc = 0.0;
  double final_mean_kappa_wc = 0.0;
  double final_mean_kappa_j_effective = 0.0;
  RunStatus status = RunStatus::Completed;
};

struct AblationResult {
  std::vector<AblationRow> rows;  // sorted by lambda
  std::vector<TrainRun> runs;     // same order as rows
};

/// One diagonal-shift run per λ on shared seed and data.
AblationResult ablate_lambda(const RunConfig& base, std::span<const double> lambdas);
/// Mean of the W + C κ over the three roles.
double mean_kappa_wc(const TrajectoryPoint& p);

struct ProjectionCost {
  std::uint64_t projection_flops = 0;
  std::uint64_t trainable_parameters = 0;
  std::uint64_t gradient_entries = 0;
  std::uint64_t correction_entries = 0;
  std::uint64_t activation_entries = 0;
};

/// Q/K/V projection cost for one head: 6NDd FLOPS, plus 3Nd when conditioned.
std::uint64_t flops_estimate(std::uint64_t n, std::uint64_t model_width, std::uint64_t head_width,
                             bool conditioned);
ProjectionCost projection_cost(std::uint64_t n, std::uint64_t model_width,
                               std::uint64_t head_width, ConditioningKind kind);

}  // namespace specattn
