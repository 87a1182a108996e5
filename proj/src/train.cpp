// SPDX-License-Identifier: Apache-2.0
/**
 * @file   train.cpp
 * @brief  AdamW training loop, conditioning probes, trajectory aggregation
 *         and the shift ablation.
 */
#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include "specattn/error.hpp"
#include "specattn/harness.hpp"
#include "specattn/random.hpp"

namespace specattn {

// --- configuration ------------------------------------------------------------

std::optional<CorrectionMode> Conditioning::mode() const {
  switch (kind) {
    case ConditioningKind::Off: return std::nullopt;
    case ConditioningKind::SvdCap: return CorrectionMode::svd_cap();
    case ConditioningKind::DiagonalShift: return CorrectionMode::diagonal_shift(lambda);
  }
  return std::nullopt;
}

std::string Conditioning::name() const {
  switch (kind) {
    case ConditioningKind::Off: return "off";
    case ConditioningKind::SvdCap: return "svd_cap";
    case ConditioningKind::DiagonalShift: return "diagonal_shift";
  }
  return "?";
}

void TransformerConfig::validate() const {
  if (layers == 0 || heads == 0 || model_width == 0 || head_width == 0 || seq_len == 0 ||
      ffn_width == 0) {
    throw ConfigError("model counts and widths must all be >= 1");
  }
  if (model_width != heads * head_width) {
    std::ostringstream os;
    os << "d_model (" << model_width << ") must equal heads * d_head (" << heads << " * "
       << head_width << ")";
    throw ConfigError(os.str());
  }
  if (conditioning.kind == ConditioningKind::DiagonalShift && !(conditioning.lambda >= kMinShift)) {
    throw ConfigError("diagonal_shift conditioning needs lambda >= 2");
  }
}

void RunConfig::validate() const {
  model.validate();
  if (batch_size == 0) throw ConfigError("batch_size must be >= 1");
  if (probe_every == 0) throw ConfigError("probe_every must be >= 1");
  if (n_train == 0 || n_eval == 0) throw ConfigError("n_train and n_eval must be >= 1");
  if (probe_samples > n_eval) throw ConfigError("probe_samples cannot exceed n_eval");
  if (!(optimizer.lr >= 0.0) || !(optimizer.weight_decay >= 0.0) || !(optimizer.eps > 0.0)) {
    throw ConfigError("lr and weight_decay must be >= 0, eps > 0");
  }
  if (!(optimizer.beta1 >= 0.0 && optimizer.beta1 < 1.0) ||
      !(optimizer.beta2 >= 0.0 && optimizer.beta2 < 1.0)) {
    throw ConfigError("optimizer betas must lie in [0, 1)");
  }
}

// --- optimizer ------------------------------------------------------------------

void AdamW::step(ModelParams& params, ModelParams& grad) {
  auto p = params.entries();
  auto g = grad.entries();
  if (p.size() != g.size()) throw DimensionError("AdamW: gradient structure mismatch");
  if (state_.empty()) {
    for (const auto& e : p)
      state_.push_back({e.name, std::vector<double>(e.value->size(), 0.0),
                        std::vector<double>(e.value->size(), 0.0)});
  }
  if (state_.size() != p.size()) throw DimensionError("AdamW: parameter set changed");
  ++t_;
  const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (p[i].name != state_[i].name || p[i].name != g[i].name) {
      throw DimensionError("AdamW: parameter order changed at " + p[i].name);
    }
    auto w = p[i].value->data();
    const auto gr = g[i].value->data();
    auto& m = state_[i].m;
    auto& v = state_[i].v;
    const double decay = p[i].decay ? cfg_.weight_decay : 0.0;
    for (std::size_t k = 0; k < w.size(); ++k) {
      m[k] = cfg_.beta1 * m[k] + (1.0 - cfg_.beta1) * gr[k];
      v[k] = cfg_.beta2 * v[k] + (1.0 - cfg_.beta2) * gr[k] * gr[k];
      const double mhat = m[k] / bc1;
      const double vhat = v[k] / bc2;
      w[k] -= cfg_.lr * (mhat / (std::sqrt(vhat) + cfg_.eps) + decay * w[k]);
    }
  }
}

std::vector<std::string> AdamW::state_names() const {
  std::vector<std::string> names;
  for (const auto& s : state_) names.push_back(s.name);
  return names;
}

// --- probes -----------------------------------------------------------------------

ProbeSnapshot probe(const Transformer& model, std::span<const Example> probe_batch,
                    std::span<const Example> eval, std::size_t step) {
  ProbeSnapshot snap;
  snap.step = step;
  snap.loss = model.mean_loss(eval);
  snap.eval_acc = model.accuracy(eval);

  std::vector<std::vector<Matrix>> inputs;
  for (const Example& ex : probe_batch) inputs.push_back(model.layer_inputs(ex.tokens));

  const ModelParams& params = model.params();
  for (std::size_t l = 0; l < params.layers.size(); ++l) {
    const auto corr = model.layer_corrections(l);
    for (std::size_t h = 0; h < params.layers[l].heads.size(); ++h) {
      const HeadWeights& hw = params.layers[l].heads[h];
      HeadProbe hp;
      hp.layer = l;
      hp.head = h;
      const AttentionParams raw = hw.params();
      const AttentionParams eff = corr.empty() ? raw : raw.corrected(corr[h]);
      const Matrix* w[3] = {&raw.w_q(), &raw.w_k(), &raw.w_v()};
      const Matrix* wc[3] = {&eff.w_q(), &eff.w_k(), &eff.w_v()};
      for (int r = 0; r < 3; ++r) {
        const std::string tag = "L" + std::to_string(l) + "H" + std::to_string(h) + "/" +
                                role_name(static_cast<Role>(r));
        hp.w[r] = spectral_record(*w[r], "W" + tag);
        hp.wc[r] = spectral_record(*wc[r], "W+C" + tag);
        hp.c_fro[r] = corr.empty() ? 0.0 : corr[h].correction(static_cast<Role>(r)).frobenius_norm();
      }
      if (!inputs.empty()) {
        std::vector<Matrix> xs;
        for (const auto& in : inputs) xs.push_back(in[l]);
        hp.jacobian = batch_jacobian_record(
            xs, eff, "J/step" + std::to_string(step) + "/L" + std::to_string(l) + "H" +
                         std::to_string(h));
        const Matrix& any = xs.front();
        const std::size_t rows = xs.size() * 3 * any.rows() * eff.head_width();
        const std::size_t cols = eff.model_width() * eff.head_width();
        hp.jacobian_full_rank = hp.jacobian->numerical_rank == std::min(rows, cols);
        for (const Matrix& x : xs) {
          if (x.rows() >= 2) hp.bound_values.push_back(combine_bound(bound_components(x, eff)));
        }
      }
      snap.heads.push_back(std::move(hp));
    }
  }
  return snap;
}

TrajectoryPoint aggregate(const ProbeSnapshot& snap) {
  TrajectoryPoint p;
  p.step = snap.step;
  p.loss = snap.loss;
  p.eval_acc = snap.eval_acc;
  if (snap.heads.empty()) throw ConstraintError("aggregate: snapshot holds no head records");
  const double nh = static_cast<double>(snap.heads.size());
  std::size_t nj = 0;
  std::size_t nb = 0;
  for (const HeadProbe& hp : snap.heads) {
    for (int r = 0; r < 3; ++r) {
      RoleAggregate& a = p.roles[r];
      a.w_sigma_min += hp.w[r].sigma_min / nh;
      a.w_sigma_max += hp.w[r].sigma_max / nh;
      a.w_kappa += hp.w[r].kappa / nh;
      a.wc_sigma_min += hp.wc[r].sigma_min / nh;
      a.wc_sigma_max += hp.wc[r].sigma_max / nh;
      a.wc_kappa += hp.wc[r].kappa / nh;
      a.c_fro += hp.c_fro[r] / nh;
    }
    if (hp.jacobian) ++nj;
    nb += hp.bound_values.empty() ? 0 : 1;
  }
  constexpr double nan = std::numeric_limits<double>::quiet_NaN();
  if (nj == 0) {
    p.kappa_j = p.kappa_j_effective = p.full_rank_fraction = nan;
  } else {
    std::size_t full = 0;
    for (const HeadProbe& hp : snap.heads) {
      p.kappa_j += hp.jacobian->kappa / nh;
      p.kappa_j_effective += hp.jacobian->kappa_effective / nh;
      if (hp.jacobian_full_rank) ++full;
    }
    p.full_rank_fraction = static_cast<double>(full) / nh;
  }
  if (nb == 0) {
    p.bound_value = nan;
  } else {
    for (const HeadProbe& hp : snap.heads) {
      double mean = 0.0;
      for (double b : hp.bound_values) mean += b / static_cast<double>(hp.bound_values.size());
      p.bound_value += mean / nh;
    }
  }
  return p;
}

std::vector<TrajectoryPoint> conditioning_trajectory(std::span<const ProbeSnapshot> probes) {
  if (probes.empty()) throw ConstraintError("conditioning_trajectory: empty run log");
  std::vector<TrajectoryPoint> out;
  out.reserve(probes.size());
  for (const ProbeSnapshot& s : probes) out.push_back(aggregate(s));
  return out;
}

double mean_kappa_wc(const TrajectoryPoint& p) {
  return (p.roles[0].wc_kappa + p.roles[1].wc_kappa + p.roles[2].wc_kappa) / 3.0;
}

// --- training ---------------------------------------------------------------------

TrainRun train(const RunConfig& config) {
  config.validate();
  return train(config, synth_task(config.model.seed, config.n_train, config.n_eval,
                                  config.model.seq_len));
}

TrainRun train(const RunConfig& config, const Dataset& data) {
  config.validate();
  if (data.train.empty() || data.eval.size() < config.probe_samples) {
    throw ConfigError("train: dataset too small for the configured run");
  }
  TrainRun run;
  run.config = config;
  run.initial_params = init_params(config.model, config.model.seed);
  Transformer model(config.model, run.initial_params);
  run.initial_corrections = model.corrections();

  AdamW optimizer(config.optimizer);
  const std::span<const Example> eval(data.eval);
  const auto probe_batch = eval.first(config.probe_samples);

  Rng order_rng(Rng::derive(config.model.seed, 3));
  std::vector<std::size_t> order(data.train.size());
  std::size_t cursor = order.size();
  auto next_index = [&]() {
    if (cursor == order.size()) {
      for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
      for (std::size_t i = order.size(); i > 1; --i)
        std::swap(order[i - 1], order[order_rng.index(i)]);
      cursor = 0;
    }
    return order[cursor++];
  };

  std::vector<Example> batch(config.batch_size);
  for (std::size_t step = 0; step < config.steps; ++step) {
    if (step % config.probe_every == 0) {
      run.metrics.probes.push_back(probe(model, probe_batch, eval, step));
    }
    for (auto& ex : batch) ex = data.train[next_index()];
    ModelParams grad = model.params().zeros_like();
    double loss = std::numeric_limits<double>::quiet_NaN();
    std::string why;
    try {
      loss = model.loss_and_grad(batch, &grad);
    } catch (const NumericalError& e) {
      why = e.what();
    }
    if (!std::isfinite(loss)) {
      run.metrics.status = RunStatus::Diverged;
      run.metrics.diverged_at = step;
      run.metrics.diagnostic =
          "non-finite loss at step " + std::to_string(step) + (why.empty() ? "" : ": " + why);
      break;
    }
    run.metrics.step_loss.push_back(loss);
    optimizer.step(model.mutable_params(), grad);
  }
  if (run.metrics.status == RunStatus::Completed) {
    run.metrics.probes.push_back(probe(model, probe_batch, eval, config.steps));
  }
  run.final_params = model.params();
  run.final_corrections = model.corrections();
  run.optimizer_state = optimizer.state_names();
  return run;
}

// --- ablation -----------------------------------------------------------------------

AblationResult ablate_lambda(const RunConfig& base, std::span<const double> lambdas) {
  if (lambdas.empty()) throw ConfigError("ablate_lambda: empty lambda list");
  std::vector<double> sorted(lambdas.begin(), lambdas.end());
  for (double l : sorted) {
    if (!(l >= kMinShift)) {
      std::ostringstream os;
      os << "ablate_lambda: lambda " << l << " is below " << kMinShift;
      throw ConstraintError(os.str());
    }
  }
  std::stable_sort(sorted.begin(), sorted.end());
  base.validate();
  const Dataset data =
      synth_task(base.model.seed, base.n_train, base.n_eval, base.model.seq_len);

  AblationResult result;
  for (double lambda : sorted) {
    RunConfig cfg = base;
    cfg.model.conditioning = Conditioning::diagonal_shift(lambda);
    TrainRun run = train(cfg, data);
    AblationRow row;
    row.lambda = lambda;
    row.status = run.metrics.status;
    if (!run.metrics.probes.empty()) {
      const TrajectoryPoint first = aggregate(run.metrics.probes.front());
      const TrajectoryPoint last = aggregate(run.metrics.probes.back());
      row.final_eval_acc = last.eval_acc;
      row.init_mean_kappa_wc = mean_kappa_wc(first);
      row.final_mean_kappa_wc = mean_kappa_wc(last);
      row.final_mean_kappa_j_effective = last.kappa_j_effective;
    }
    result.rows.push_back(row);
    result.runs.push_back(std::move(run));
  }
  return result;
}

// --- cost accounting ----------------------------------------------------------------

std::uint64_t flops_estimate(std::uint64_t n, std::uint64_t model_width, std::uint64_t head_width,
                             bool conditioned) {
  const std::uint64_t base = 6 * n * model_width * head_width;
  return conditioned ? base + 3 * n * head_width : base;
}

ProjectionCost projection_cost(std::uint64_t n, std::uint64_t model_width,
                               std::uint64_t head_width, ConditioningKind kind) {
  ProjectionCost c;
  c.projection_flops = flops_estimate(n, model_width, head_width, kind != ConditioningKind::Off);
  c.trainable_parameters = 3 * model_width * head_width;
  c.gradient_entries = 3 * model_width * head_width;
  c.activation_entries = 3 * n * head_width;
  switch (kind) {
    case ConditioningKind::Off: c.correction_entries = 0; break;
    case ConditioningKind::DiagonalShift: c.correction_entries = 1; break;  // one scalar λ
    case ConditioningKind::SvdCap: c.correction_entries = 3 * model_width * head_width; break;
  }
  return c;
}

}  // namespace specattn
