// SPDX-License-Identifier: Apache-2.0
/**
 * @file   model.cpp
 * @brief  Transformer forward pass and hand-written reverse-mode gradients.
 */
#include <algorithm>
#include <cmath>
#include <sstream>

#include "specattn/error.hpp"
#include "specattn/harness.hpp"
#include "specattn/random.hpp"

namespace specattn {

namespace {

constexpr double kLayerNormEps = 1e-5;
constexpr double kGeluScale = 0.7978845608028654;  // √(2/π)
constexpr double kGeluCubic = 0.044715;

struct LnCache {
  Matrix xhat;
  std::vector<double> rstd;
};

struct HeadCache {
  Matrix q, k, v, p;
  Matrix w_q, w_k, w_v;  // effective weights W + C
};

struct LayerCache {
  Matrix x;
  std::vector<HeadCache> heads;
  Matrix concat;
  LnCache ln1;
  Matrix y;  // input to the feed-forward sublayer
  Matrix h_pre, h;
  LnCache ln2;
};

void add_row_bias(Matrix& m, const Matrix& bias) {
  for (std::size_t i = 0; i < m.rows(); ++i) {
    auto r = m.row(i);
    for (std::size_t j = 0; j < m.cols(); ++j) r[j] += bias(0, j);
  }
}

void accumulate_column_sums(const Matrix& m, Matrix& into) {
  for (std::size_t i = 0; i < m.rows(); ++i)
    for (std::size_t j = 0; j < m.cols(); ++j) into(0, j) += m(i, j);
}

Matrix layer_norm(const Matrix& x, const Matrix& gain, const Matrix& bias, LnCache* cache) {
  const std::size_t n = x.cols();
  Matrix out(x.rows(), n);
  Matrix xhat(x.rows(), n);
  std::vector<double> rstd(x.rows());
  for (std::size_t i = 0; i < x.rows(); ++i) {
    const auto r = x.row(i);
    double mean = 0.0;
    for (double v : r) mean += v;
    mean /= static_cast<double>(n);
    double var = 0.0;
    for (double v : r) var += (v - mean) * (v - mean);
    var /= static_cast<double>(n);
    rstd[i] = 1.0 / std::sqrt(var + kLayerNormEps);
    for (std::size_t j = 0; j < n; ++j) {
      xhat(i, j) = (r[j] - mean) * rstd[i];
      out(i, j) = xhat(i, j) * gain(0, j) + bias(0, j);
    }
  }
  if (cache != nullptr) {
    cache->xhat = std::move(xhat);
    cache->rstd = std::move(rstd);
  }
  return out;
}

Matrix layer_norm_backward(const Matrix& dy, const LnCache& c, const Matrix& gain,
                           Matrix& dgain, Matrix& dbias) {
  const std::size_t n = dy.cols();
  Matrix dx(dy.rows(), n);
  std::vector<double> dxhat(n);
  for (std::size_t i = 0; i < dy.rows(); ++i) {
    double mean_dxhat = 0.0;
    double mean_dxhat_xhat = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      dgain(0, j) += dy(i, j) * c.xhat(i, j);
      dbias(0, j) += dy(i, j);
      dxhat[j] = dy(i, j) * gain(0, j);
      mean_dxhat += dxhat[j];
      mean_dxhat_xhat += dxhat[j] * c.xhat(i, j);
    }
    mean_dxhat /= static_cast<double>(n);
    mean_dxhat_xhat /= static_cast<double>(n);
    for (std::size_t j = 0; j < n; ++j)
      dx(i, j) = c.rstd[i] * (dxhat[j] - mean_dxhat - c.xhat(i, j) * mean_dxhat_xhat);
  }
  return dx;
}

double gelu(double x) {
  return 0.5 * x * (1.0 + std::tanh(kGeluScale * (x + kGeluCubic * x * x * x)));
}

double gelu_grad(double x) {
  const double t = std::tanh(kGeluScale * (x + kGeluCubic * x * x * x));
  return 0.5 * (1.0 + t) +
         0.5 * x * (1.0 - t * t) * kGeluScale * (1.0 + 3.0 * kGeluCubic * x * x);
}

Matrix effective_weight(const Matrix& w, std::span<const CorrectionSet> corr, std::size_t head,
                        Role role) {
  if (corr.empty()) return w;
  return w + corr[head].correction(role);
}

Matrix layer_forward(const Matrix& x, const LayerParams& layer,
                     std::span<const CorrectionSet> corr, const TransformerConfig& cfg,
                     LayerCache* cache) {
  std::vector<Matrix> head_out;
  head_out.reserve(layer.heads.size());
  if (cache != nullptr) {
    cache->x = x;
    cache->heads.resize(layer.heads.size());
  }
  for (std::size_t h = 0; h < layer.heads.size(); ++h) {
    const HeadWeights& hw = layer.heads[h];
    Matrix wq = effective_weight(hw.w_q, corr, h, Role::Q);
    Matrix wk = effective_weight(hw.w_k, corr, h, Role::K);
    Matrix wv = effective_weight(hw.w_v, corr, h, Role::V);
    Matrix q = matmul(x, wq);
    Matrix k = matmul(x, wk);
    Matrix v = matmul(x, wv);
    Matrix p = softmax_rows(matmul_nt(q, k));
    head_out.push_back(matmul(p, v));
    if (cache != nullptr) {
      cache->heads[h] = HeadCache{std::move(q), std::move(k), std::move(v), std::move(p),
                                  std::move(wq), std::move(wk), std::move(wv)};
    }
  }
  Matrix concat = hstack(head_out);
  Matrix y = matmul(concat, layer.w_o);
  add_row_bias(y, layer.b_o);
  y += x;
  if (cfg.layer_norm) y = layer_norm(y, layer.ln1_gain, layer.ln1_bias, cache ? &cache->ln1 : nullptr);
  if (cache != nullptr) {
    cache->concat = std::move(concat);
    cache->y = y;
  }
  if (!cfg.feed_forward) return y;

  Matrix h_pre = matmul(y, layer.w_ff1);
  add_row_bias(h_pre, layer.b_ff1);
  Matrix h(h_pre.rows(), h_pre.cols());
  for (std::size_t i = 0; i < h.size(); ++i) h.data()[i] = gelu(h_pre.data()[i]);
  Matrix out = matmul(h, layer.w_ff2);
  add_row_bias(out, layer.b_ff2);
  out += y;
  if (cfg.layer_norm) out = layer_norm(out, layer.ln2_gain, layer.ln2_bias, cache ? &cache->ln2 : nullptr);
  if (cache != nullptr) {
    cache->h_pre = std::move(h_pre);
    cache->h = std::move(h);
  }
  return out;
}

// Returns ∂loss/∂x for the layer input; accumulates parameter gradients.
Matrix layer_backward(const Matrix& d_out, const LayerCache& c, const LayerParams& layer,
                      LayerParams& g, const TransformerConfig& cfg) {
  Matrix d_y = d_out;
  if (cfg.feed_forward) {
    Matrix d_pre2 = cfg.layer_norm
                        ? layer_norm_backward(d_out, c.ln2, layer.ln2_gain, g.ln2_gain, g.ln2_bias)
                        : d_out;
    g.w_ff2 += matmul_tn(c.h, d_pre2);
    accumulate_column_sums(d_pre2, g.b_ff2);
    Matrix d_h = matmul_nt(d_pre2, layer.w_ff2);
    for (std::size_t i = 0; i < d_h.size(); ++i) d_h.data()[i] *= gelu_grad(c.h_pre.data()[i]);
    g.w_ff1 += matmul_tn(c.y, d_h);
    accumulate_column_sums(d_h, g.b_ff1);
    d_y = d_pre2 + matmul_nt(d_h, layer.w_ff1);
  }
  Matrix d_pre1 = cfg.layer_norm
                      ? layer_norm_backward(d_y, c.ln1, layer.ln1_gain, g.ln1_gain, g.ln1_bias)
                      : d_y;
  Matrix d_x = d_pre1;
  g.w_o += matmul_tn(c.concat, d_pre1);
  accumulate_column_sums(d_pre1, g.b_o);
  const Matrix d_concat = matmul_nt(d_pre1, layer.w_o);

  const std::size_t n = c.x.rows();
  const std::size_t d = cfg.head_width;
  for (std::size_t h = 0; h < layer.heads.size(); ++h) {
    const HeadCache& hc = c.heads[h];
    Matrix d_a(n, d);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < d; ++j) d_a(i, j) = d_concat(i, h * d + j);
    const Matrix d_p = matmul_nt(d_a, hc.v);
    const Matrix d_v = matmul_tn(hc.p, d_a);
    // softmax backward, row by row
    Matrix d_m(n, n);
    for (std::size_t i = 0; i < n; ++i) {
      double dot = 0.0;
      for (std::size_t j = 0; j < n; ++j) dot += d_p(i, j) * hc.p(i, j);
      for (std::size_t j = 0; j < n; ++j) d_m(i, j) = hc.p(i, j) * (d_p(i, j) - dot);
    }
    const Matrix d_q = matmul(d_m, hc.k);
    const Matrix d_k = matmul_tn(d_m, hc.q);
    HeadWeights& gh = g.heads[h];
    gh.w_q += matmul_tn(c.x, d_q);
    gh.w_k += matmul_tn(c.x, d_k);
    gh.w_v += matmul_tn(c.x, d_v);
    d_x += matmul_nt(d_q, hc.w_q);
    d_x += matmul_nt(d_k, hc.w_k);
    d_x += matmul_nt(d_v, hc.w_v);
  }
  return d_x;
}

Matrix mean_rows(const Matrix& x) {
  Matrix out(1, x.cols());
  accumulate_column_sums(x, out);
  out *= 1.0 / static_cast<double>(x.rows());
  return out;
}

}  // namespace

// --- parameters ---------------------------------------------------------------

std::vector<ModelParams::Entry> ModelParams::entries() {
  std::vector<Entry> out;
  out.push_back({"token_embedding", &token_embedding, true});
  out.push_back({"position_embedding", &position_embedding, true});
  for (std::size_t l = 0; l < layers.size(); ++l) {
    LayerParams& L = layers[l];
    const std::string p = "layers." + std::to_string(l) + ".";
    for (std::size_t h = 0; h < L.heads.size(); ++h) {
      const std::string hp = p + "heads." + std::to_string(h) + ".";
      out.push_back({hp + "w_q", &L.heads[h].w_q, true});
      out.push_back({hp + "w_k", &L.heads[h].w_k, true});
      out.push_back({hp + "w_v", &L.heads[h].w_v, true});
    }
    out.push_back({p + "w_o", &L.w_o, true});
    out.push_back({p + "b_o", &L.b_o, false});
    out.push_back({p + "ln1_gain", &L.ln1_gain, false});
    out.push_back({p + "ln1_bias", &L.ln1_bias, false});
    out.push_back({p + "w_ff1", &L.w_ff1, true});
    out.push_back({p + "b_ff1", &L.b_ff1, false});
    out.push_back({p + "w_ff2", &L.w_ff2, true});
    out.push_back({p + "b_ff2", &L.b_ff2, false});
    out.push_back({p + "ln2_gain", &L.ln2_gain, false});
    out.push_back({p + "ln2_bias", &L.ln2_bias, false});
  }
  out.push_back({"w_cls", &w_cls, true});
  out.push_back({"b_cls", &b_cls, false});
  return out;
}

std::vector<const Matrix*> ModelParams::tensors() const {
  std::vector<const Matrix*> out;
  for (const auto& e : const_cast<ModelParams*>(this)->entries()) out.push_back(e.value);
  return out;
}

ModelParams ModelParams::zeros_like() const {
  ModelParams z = *this;
  for (auto& e : z.entries()) *e.value = Matrix(e.value->rows(), e.value->cols());
  return z;
}

ModelParams init_params(const TransformerConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  const std::size_t D = cfg.model_width;
  const std::size_t d = cfg.head_width;
  const std::size_t F = cfg.ffn_width;
  ModelParams p;
  p.token_embedding = Matrix(kVocabSize, D);
  p.position_embedding = Matrix(cfg.seq_len, D);
  p.layers.resize(cfg.layers);
  for (auto& L : p.layers) {
    L.heads.assign(cfg.heads, HeadWeights{Matrix(D, d), Matrix(D, d), Matrix(D, d)});
    L.w_o = Matrix(D, D);
    L.b_o = Matrix(1, D);
    L.ln1_gain = Matrix(1, D);
    L.ln1_bias = Matrix(1, D);
    L.w_ff1 = Matrix(D, F);
    L.b_ff1 = Matrix(1, F);
    L.w_ff2 = Matrix(F, D);
    L.b_ff2 = Matrix(1, D);
    L.ln2_gain = Matrix(1, D);
    L.ln2_bias = Matrix(1, D);
  }
  p.w_cls = Matrix(D, kNumClasses);
  p.b_cls = Matrix(1, kNumClasses);

  Rng rng(Rng::derive(seed, 0x1417));
  const double std = 1.0 / std::sqrt(static_cast<double>(D));
  for (auto& e : p.entries()) {
    if (e.decay) {
      *e.value = rng.gaussian(e.value->rows(), e.value->cols(), std);
    } else if (e.name.ends_with("_gain")) {
      for (double& v : e.value->data()) v = 1.0;
    }
  }
  return p;
}

CorrectionGrid build_corrections(const TransformerConfig& cfg, const ModelParams& params) {
  CorrectionGrid grid(params.layers.size());
  const auto mode = cfg.conditioning.mode();
  if (!mode) return grid;
  for (std::size_t l = 0; l < params.layers.size(); ++l)
    for (const auto& hw : params.layers[l].heads)
      grid[l].push_back(build_correction_set(hw.params(), *mode));
  return grid;
}

Matrix forward_layer(const Matrix& x, const LayerParams& layer,
                     std::span<const CorrectionSet> corrections, const TransformerConfig& cfg) {
  if (x.cols() != cfg.model_width) throw DimensionError("forward_layer: input width mismatch");
  if (!corrections.empty() && corrections.size() != layer.heads.size()) {
    throw DimensionError("forward_layer: one correction set per head required");
  }
  return layer_forward(x, layer, corrections, cfg, nullptr);
}

// --- Transformer ---------------------------------------------------------------

Transformer::Transformer(TransformerConfig cfg, ModelParams params)
    : cfg_(std::move(cfg)), params_(std::move(params)) {
  cfg_.validate();
  corrections_ = build_corrections(cfg_, params_);
}

Transformer::Transformer(TransformerConfig cfg, ModelParams params, CorrectionGrid corrections)
    : cfg_(std::move(cfg)), params_(std::move(params)), corrections_(std::move(corrections)) {
  cfg_.validate();
  if (corrections_.size() != params_.layers.size()) {
    throw DimensionError("Transformer: correction grid does not match the layer count");
  }
}

std::span<const CorrectionSet> Transformer::layer_corrections(std::size_t layer) const {
  return corrections_.at(layer);
}

Matrix Transformer::embed(std::span<const int> tokens) const {
  if (tokens.size() != cfg_.seq_len) {
    std::ostringstream os;
    os << "sequence has " << tokens.size() << " tokens, model expects " << cfg_.seq_len;
    throw DimensionError(os.str());
  }
  Matrix x(tokens.size(), cfg_.model_width);
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    const auto tok = static_cast<std::size_t>(tokens[i]);
    if (tok >= kVocabSize) throw DimensionError("token id out of vocabulary");
    for (std::size_t j = 0; j < cfg_.model_width; ++j)
      x(i, j) = params_.token_embedding(tok, j) + params_.position_embedding(i, j);
  }
  return x;
}

std::vector<Matrix> Transformer::layer_inputs(std::span<const int> tokens) const {
  std::vector<Matrix> inputs;
  Matrix x = embed(tokens);
  for (std::size_t l = 0; l < params_.layers.size(); ++l) {
    inputs.push_back(x);
    x = layer_forward(x, params_.layers[l], corrections_[l], cfg_, nullptr);
  }
  return inputs;
}

Matrix Transformer::logits(std::span<const int> tokens) const {
  Matrix x = embed(tokens);
  for (std::size_t l = 0; l < params_.layers.size(); ++l)
    x = layer_forward(x, params_.layers[l], corrections_[l], cfg_, nullptr);
  Matrix out = matmul(mean_rows(x), params_.w_cls);
  out += params_.b_cls;
  return out;
}

int Transformer::predict(std::span<const int> tokens) const {
  const Matrix z = logits(tokens);
  const auto row = z.row(0);
  return static_cast<int>(std::max_element(row.begin(), row.end()) - row.begin());
}

double Transformer::loss_and_grad(std::span<const Example> batch, ModelParams* grad) const {
  if (batch.empty()) throw ConfigError("loss_and_grad: empty batch");
  const double scale = 1.0 / static_cast<double>(batch.size());
  double total = 0.0;
  std::vector<LayerCache> caches(params_.layers.size());
  for (const Example& ex : batch) {
    Matrix x = embed(ex.tokens);
    for (std::size_t l = 0; l < params_.layers.size(); ++l)
      x = layer_forward(x, params_.layers[l], corrections_[l], cfg_, grad ? &caches[l] : nullptr);
    const Matrix pooled = mean_rows(x);
    Matrix z = matmul(pooled, params_.w_cls);
    z += params_.b_cls;

    const auto zr = z.row(0);
    const double mx = *std::max_element(zr.begin(), zr.end());
    double sum = 0.0;
    for (double v : zr) sum += std::exp(v - mx);
    const double log_norm = mx + std::log(sum);
    total += log_norm - zr[static_cast<std::size_t>(ex.label)];
    if (grad == nullptr) continue;

    Matrix d_z(1, kNumClasses);
    for (std::size_t c = 0; c < kNumClasses; ++c) {
      d_z(0, c) = std::exp(zr[c] - log_norm) * scale;
      if (static_cast<int>(c) == ex.label) d_z(0, c) -= scale;
    }
    grad->w_cls += matmul_tn(pooled, d_z);
    grad->b_cls += d_z;
    const Matrix d_pooled = matmul_nt(d_z, params_.w_cls);
    Matrix d_x(x.rows(), x.cols());
    const double inv_n = 1.0 / static_cast<double>(x.rows());
    for (std::size_t i = 0; i < x.rows(); ++i)
      for (std::size_t j = 0; j < x.cols(); ++j) d_x(i, j) = d_pooled(0, j) * inv_n;

    for (std::size_t l = params_.layers.size(); l-- > 0;)
      d_x = layer_backward(d_x, caches[l], params_.layers[l], grad->layers[l], cfg_);

    for (std::size_t i = 0; i < ex.tokens.size(); ++i) {
      const auto tok = static_cast<std::size_t>(ex.tokens[i]);
      for (std::size_t j = 0; j < d_x.cols(); ++j) {
        grad->token_embedding(tok, j) += d_x(i, j);
        grad->position_embedding(i, j) += d_x(i, j);
      }
    }
  }
  return total * scale;
}

double Transformer::mean_loss(std::span<const Example> examples) const {
  return loss_and_grad(examples, nullptr);
}

double Transformer::accuracy(std::span<const Example> examples) const {
  if (examples.empty()) return 0.0;
  std::size_t correct = 0;
  for (const Example& ex : examples)
    if (predict(ex.tokens) == ex.label) ++correct;
  return static_cast<double>(correct) / static_cast<double>(examples.size());
}

}  // namespace specattn
