#include "dptab/lm.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>

namespace dptab::lm {

namespace {

constexpr double kLnEps = 1e-5;
constexpr double kGeluScale = 0.7978845608028653558798921198687;  // sqrt(2/pi)
constexpr double kGeluCubic = 0.044715;

// y += W x with W stored row-major [n_out x n_in].
void matvec(const double* w, const double* x, double* y, int n_out, int n_in) {
  for (int o = 0; o < n_out; ++o) {
    const double* row = w + static_cast<size_t>(o) * n_in;
    double acc = 0.0;
    for (int i = 0; i < n_in; ++i) acc += row[i] * x[i];
    y[o] += acc;
  }
}

// Backward of y = W x: accumulates dW and dx.
void matvec_backward(const double* w, const double* x, const double* dy, double* dw, double* dx,
                     int n_out, int n_in) {
  for (int o = 0; o < n_out; ++o) {
    const double g = dy[o];
    if (g == 0.0) continue;
    const double* row = w + static_cast<size_t>(o) * n_in;
    double* drow = dw + static_cast<size_t>(o) * n_in;
    for (int i = 0; i < n_in; ++i) {
      drow[i] += g * x[i];
      dx[i] += g * row[i];
    }
  }
}

void layernorm_forward(const double* x, const double* gain, const double* bias, double* y,
                       double* mean_out, double* rstd_out, int n) {
  double mean = 0.0;
  for (int i = 0; i < n; ++i) mean += x[i];
  mean /= n;
  double var = 0.0;
  for (int i = 0; i < n; ++i) {
    double d = x[i] - mean;
    var += d * d;
  }
  var /= n;
  double rstd = 1.0 / std::sqrt(var + kLnEps);
  for (int i = 0; i < n; ++i) y[i] = (x[i] - mean) * rstd * gain[i] + bias[i];
  *mean_out = mean;
  *rstd_out = rstd;
}

void layernorm_backward(const double* x, const double* gain, const double* dy, double mean,
                        double rstd, double* dx, double* dgain, double* dbias, int n) {
  double sum_dxhat = 0.0, sum_dxhat_xhat = 0.0;
  for (int i = 0; i < n; ++i) {
    double xhat = (x[i] - mean) * rstd;
    double dxhat = dy[i] * gain[i];
    sum_dxhat += dxhat;
    sum_dxhat_xhat += dxhat * xhat;
    dgain[i] += dy[i] * xhat;
    dbias[i] += dy[i];
  }
  sum_dxhat /= n;
  sum_dxhat_xhat /= n;
  for (int i = 0; i < n; ++i) {
    double xhat = (x[i] - mean) * rstd;
    double dxhat = dy[i] * gain[i];
    dx[i] += rstd * (dxhat - sum_dxhat - xhat * sum_dxhat_xhat);
  }
}

double gelu(double f) {
  double u = kGeluScale * (f + kGeluCubic * f * f * f);
  return 0.5 * f * (1.0 + std::tanh(u));
}

double gelu_grad(double f) {
  double u = kGeluScale * (f + kGeluCubic * f * f * f);
  double t = std::tanh(u);
  return 0.5 * (1.0 + t) + 0.5 * f * (1.0 - t * t) * kGeluScale * (1.0 + 3.0 * kGeluCubic * f * f);
}

// All activations of one example, kept for the backward pass.
struct Cache {
  int length = 0;
  std::vector<double> stream;     // [(layers+1) x L x C], residual stream per block input
  std::vector<double> ln1_out, ln2_out;       // [layers x L x C]
  std::vector<double> ln1_mean, ln1_rstd;     // [layers x L]
  std::vector<double> ln2_mean, ln2_rstd;     // [layers x L]
  std::vector<double> mid;                    // [layers x L x C], stream after attention residual
  std::vector<double> qkv;                    // [layers x L x 3C]
  std::vector<double> att_probs;              // [layers x H x L x L]
  std::vector<double> att_out;                // [layers x L x C]
  std::vector<double> fc_pre, fc_act;         // [layers x L x F]
  std::vector<double> final_in;               // alias view not needed; last stream block used
  std::vector<double> lnf_out;                // [L x C]
  std::vector<double> lnf_mean, lnf_rstd;     // [L]
  std::vector<double> logits;                 // [L x V]

  void resize(const ModelConfig& cfg, int len) {
    length = len;
    size_t L = len, C = cfg.d_model, F = cfg.d_ff, V = cfg.vocab_size;
    size_t NL = cfg.n_layers, H = cfg.n_heads;
    stream.assign((NL + 1) * L * C, 0.0);
    ln1_out.assign(NL * L * C, 0.0);
    ln2_out.assign(NL * L * C, 0.0);
    ln1_mean.assign(NL * L, 0.0);
    ln1_rstd.assign(NL * L, 0.0);
    ln2_mean.assign(NL * L, 0.0);
    ln2_rstd.assign(NL * L, 0.0);
    mid.assign(NL * L * C, 0.0);
    qkv.assign(NL * L * 3 * C, 0.0);
    att_probs.assign(NL * H * L * L, 0.0);
    att_out.assign(NL * L * C, 0.0);
    fc_pre.assign(NL * L * F, 0.0);
    fc_act.assign(NL * L * F, 0.0);
    lnf_out.assign(L * C, 0.0);
    lnf_mean.assign(L, 0.0);
    lnf_rstd.assign(L, 0.0);
    logits.assign(L * V, 0.0);
  }
};

void forward_example(const ModelParams& params, const int* ids, int len, Cache& cache) {
  const ModelConfig& cfg = params.config;
  const ParamLayout& lay = params.layout;
  const double* P = params.flat.data();
  const int C = cfg.d_model, H = cfg.n_heads, F = cfg.d_ff, V = cfg.vocab_size;
  const int Hd = C / H;
  const double att_scale = 1.0 / std::sqrt(static_cast<double>(Hd));
  cache.resize(cfg, len);
  const size_t LC = static_cast<size_t>(len) * C;

  for (int t = 0; t < len; ++t) {
    require(ids[t] >= 0 && ids[t] < V, "domain", "token id outside vocab in forward");
    const double* tok = P + lay.tok_emb + static_cast<size_t>(ids[t]) * C;
    const double* pos = P + lay.pos_emb + static_cast<size_t>(t) * C;
    double* x = cache.stream.data() + static_cast<size_t>(t) * C;
    for (int i = 0; i < C; ++i) x[i] = tok[i] + pos[i];
  }

  for (int l = 0; l < cfg.n_layers; ++l) {
    const auto& W = lay.layers[l];
    const double* x_in = cache.stream.data() + static_cast<size_t>(l) * LC;
    double* ln1 = cache.ln1_out.data() + static_cast<size_t>(l) * LC;
    double* qkv = cache.qkv.data() + static_cast<size_t>(l) * len * 3 * C;
    double* probs = cache.att_probs.data() + static_cast<size_t>(l) * H * len * len;
    double* att = cache.att_out.data() + static_cast<size_t>(l) * LC;
    double* mid = cache.mid.data() + static_cast<size_t>(l) * LC;
    double* x_out = cache.stream.data() + static_cast<size_t>(l + 1) * LC;
    double* ln2 = cache.ln2_out.data() + static_cast<size_t>(l) * LC;
    double* fc_pre = cache.fc_pre.data() + static_cast<size_t>(l) * len * F;
    double* fc_act = cache.fc_act.data() + static_cast<size_t>(l) * len * F;

    for (int t = 0; t < len; ++t) {
      layernorm_forward(x_in + static_cast<size_t>(t) * C, P + W.ln1_g, P + W.ln1_b,
                        ln1 + static_cast<size_t>(t) * C,
                        &cache.ln1_mean[static_cast<size_t>(l) * len + t],
                        &cache.ln1_rstd[static_cast<size_t>(l) * len + t], C);
      double* row = qkv + static_cast<size_t>(t) * 3 * C;
      std::memcpy(row, P + W.b_qkv, sizeof(double) * 3 * C);
      matvec(P + W.w_qkv, ln1 + static_cast<size_t>(t) * C, row, 3 * C, C);
    }

    for (int h = 0; h < H; ++h) {
      double* hp = probs + static_cast<size_t>(h) * len * len;
      for (int t = 0; t < len; ++t) {
        const double* q = qkv + static_cast<size_t>(t) * 3 * C + h * Hd;
        double* pr = hp + static_cast<size_t>(t) * len;
        double maxs = -HUGE_VAL;
        for (int u = 0; u <= t; ++u) {
          const double* k = qkv + static_cast<size_t>(u) * 3 * C + C + h * Hd;
          double s = 0.0;
          for (int i = 0; i < Hd; ++i) s += q[i] * k[i];
          s *= att_scale;
          pr[u] = s;
          maxs = std::max(maxs, s);
        }
        double denom = 0.0;
        for (int u = 0; u <= t; ++u) {
          pr[u] = std::exp(pr[u] - maxs);
          denom += pr[u];
        }
        for (int u = 0; u <= t; ++u) pr[u] /= denom;
        double* out = att + static_cast<size_t>(t) * C + h * Hd;
        for (int i = 0; i < Hd; ++i) out[i] = 0.0;
        for (int u = 0; u <= t; ++u) {
          const double* v = qkv + static_cast<size_t>(u) * 3 * C + 2 * C + h * Hd;
          double p = pr[u];
          for (int i = 0; i < Hd; ++i) out[i] += p * v[i];
        }
      }
    }

    for (int t = 0; t < len; ++t) {
      double* m = mid + static_cast<size_t>(t) * C;
      std::memcpy(m, P + W.b_attn, sizeof(double) * C);
      matvec(P + W.w_attn, att + static_cast<size_t>(t) * C, m, C, C);
      const double* x = x_in + static_cast<size_t>(t) * C;
      for (int i = 0; i < C; ++i) m[i] += x[i];

      layernorm_forward(m, P + W.ln2_g, P + W.ln2_b, ln2 + static_cast<size_t>(t) * C,
                        &cache.ln2_mean[static_cast<size_t>(l) * len + t],
                        &cache.ln2_rstd[static_cast<size_t>(l) * len + t], C);
      double* f = fc_pre + static_cast<size_t>(t) * F;
      std::memcpy(f, P + W.b_fc, sizeof(double) * F);
      matvec(P + W.w_fc, ln2 + static_cast<size_t>(t) * C, f, F, C);
      double* a = fc_act + static_cast<size_t>(t) * F;
      for (int i = 0; i < F; ++i) a[i] = gelu(f[i]);
      double* xo = x_out + static_cast<size_t>(t) * C;
      std::memcpy(xo, P + W.b_proj, sizeof(double) * C);
      matvec(P + W.w_proj, a, xo, C, F);
      for (int i = 0; i < C; ++i) xo[i] += m[i];
    }
  }

  const double* x_last = cache.stream.data() + static_cast<size_t>(cfg.n_layers) * LC;
  for (int t = 0; t < len; ++t) {
    layernorm_forward(x_last + static_cast<size_t>(t) * C, P + lay.lnf_g, P + lay.lnf_b,
                      cache.lnf_out.data() + static_cast<size_t>(t) * C, &cache.lnf_mean[t],
                      &cache.lnf_rstd[t], C);
    double* lo = cache.logits.data() + static_cast<size_t>(t) * V;
    std::fill(lo, lo + V, 0.0);
    matvec(P + lay.w_out, cache.lnf_out.data() + static_cast<size_t>(t) * C, lo, V, C);
  }
}

// dlogits must hold the loss gradient w.r.t. each logit; accumulates the
// full parameter gradient of the example into grad.
void backward_example(const ModelParams& params, const int* ids, int len, const Cache& cache,
                      const std::vector<double>& dlogits, std::span<double> grad) {
  const ModelConfig& cfg = params.config;
  const ParamLayout& lay = params.layout;
  const double* P = params.flat.data();
  double* G = grad.data();
  const int C = cfg.d_model, H = cfg.n_heads, F = cfg.d_ff, V = cfg.vocab_size;
  const int Hd = C / H;
  const double att_scale = 1.0 / std::sqrt(static_cast<double>(Hd));
  const size_t LC = static_cast<size_t>(len) * C;

  std::vector<double> d_stream(LC, 0.0);
  std::vector<double> d_buf(LC, 0.0);

  // Output head and final layernorm.
  for (int t = 0; t < len; ++t) {
    const double* dl = dlogits.data() + static_cast<size_t>(t) * V;
    std::vector<double> d_hf(C, 0.0);
    matvec_backward(P + lay.w_out, cache.lnf_out.data() + static_cast<size_t>(t) * C, dl,
                    G + lay.w_out, d_hf.data(), V, C);
    layernorm_backward(cache.stream.data() + static_cast<size_t>(cfg.n_layers) * LC +
                           static_cast<size_t>(t) * C,
                       P + lay.lnf_g, d_hf.data(), cache.lnf_mean[t], cache.lnf_rstd[t],
                       d_stream.data() + static_cast<size_t>(t) * C, G + lay.lnf_g, G + lay.lnf_b,
                       C);
  }

  std::vector<double> d_att(LC), d_qkv(static_cast<size_t>(len) * 3 * C);
  std::vector<double> d_mid(LC), d_ln(LC);
  std::vector<double> d_fc(static_cast<size_t>(len) * F);

  for (int l = cfg.n_layers - 1; l >= 0; --l) {
    const auto& W = lay.layers[l];
    const double* x_in = cache.stream.data() + static_cast<size_t>(l) * LC;
    const double* ln1 = cache.ln1_out.data() + static_cast<size_t>(l) * LC;
    const double* qkv = cache.qkv.data() + static_cast<size_t>(l) * len * 3 * C;
    const double* probs = cache.att_probs.data() + static_cast<size_t>(l) * H * len * len;
    const double* att = cache.att_out.data() + static_cast<size_t>(l) * LC;
    const double* mid = cache.mid.data() + static_cast<size_t>(l) * LC;
    const double* ln2 = cache.ln2_out.data() + static_cast<size_t>(l) * LC;
    const double* fc_pre = cache.fc_pre.data() + static_cast<size_t>(l) * len * F;
    const double* fc_act = cache.fc_act.data() + static_cast<size_t>(l) * len * F;

    // MLP half: x_out = mid + W_proj gelu(W_fc ln2(mid) + b_fc) + b_proj.
    std::fill(d_mid.begin(), d_mid.end(), 0.0);
    std::fill(d_fc.begin(), d_fc.end(), 0.0);
    std::fill(d_ln.begin(), d_ln.end(), 0.0);
    for (int t = 0; t < len; ++t) {
      const double* dxo = d_stream.data() + static_cast<size_t>(t) * C;
      double* dm = d_mid.data() + static_cast<size_t>(t) * C;
      for (int i = 0; i < C; ++i) dm[i] += dxo[i];  // residual
      std::vector<double> d_act(F, 0.0);
      matvec_backward(P + W.w_proj, fc_act + static_cast<size_t>(t) * F, dxo, G + W.w_proj,
                      d_act.data(), C, F);
      for (int i = 0; i < F; ++i) G[W.b_proj + i] += dxo[i];
      double* dfc = d_fc.data() + static_cast<size_t>(t) * F;
      const double* f = fc_pre + static_cast<size_t>(t) * F;
      for (int i = 0; i < F; ++i) dfc[i] = d_act[i] * gelu_grad(f[i]);
      matvec_backward(P + W.w_fc, ln2 + static_cast<size_t>(t) * C, dfc, G + W.w_fc,
                      d_ln.data() + static_cast<size_t>(t) * C, F, C);
      for (int i = 0; i < F; ++i) G[W.b_fc + i] += dfc[i];
      layernorm_backward(mid + static_cast<size_t>(t) * C, P + W.ln2_g,
                         d_ln.data() + static_cast<size_t>(t) * C,
                         cache.ln2_mean[static_cast<size_t>(l) * len + t],
                         cache.ln2_rstd[static_cast<size_t>(l) * len + t], dm, G + W.ln2_g,
                         G + W.ln2_b, C);
    }

    // Attention half: mid = x_in + W_attn att + b_attn.
    std::fill(d_att.begin(), d_att.end(), 0.0);
    std::fill(d_qkv.begin(), d_qkv.end(), 0.0);
    std::fill(d_buf.begin(), d_buf.end(), 0.0);  // becomes d(x_in)
    for (int t = 0; t < len; ++t) {
      const double* dm = d_mid.data() + static_cast<size_t>(t) * C;
      matvec_backward(P + W.w_attn, att + static_cast<size_t>(t) * C, dm, G + W.w_attn,
                      d_att.data() + static_cast<size_t>(t) * C, C, C);
      for (int i = 0; i < C; ++i) G[W.b_attn + i] += dm[i];
      double* dx = d_buf.data() + static_cast<size_t>(t) * C;
      for (int i = 0; i < C; ++i) dx[i] += dm[i];  // residual
    }

    std::vector<double> d_scores(len);
    for (int h = 0; h < H; ++h) {
      const double* hp = probs + static_cast<size_t>(h) * len * len;
      for (int t = 0; t < len; ++t) {
        const double* pr = hp + static_cast<size_t>(t) * len;
        const double* dout = d_att.data() + static_cast<size_t>(t) * C + h * Hd;
        double dot_sum = 0.0;
        for (int u = 0; u <= t; ++u) {
          const double* v = qkv + static_cast<size_t>(u) * 3 * C + 2 * C + h * Hd;
          double dp = 0.0;
          for (int i = 0; i < Hd; ++i) dp += dout[i] * v[i];
          d_scores[u] = dp;
          dot_sum += pr[u] * dp;
          double* dv = d_qkv.data() + static_cast<size_t>(u) * 3 * C + 2 * C + h * Hd;
          double p = pr[u];
          for (int i = 0; i < Hd; ++i) dv[i] += p * dout[i];
        }
        const double* q = qkv + static_cast<size_t>(t) * 3 * C + h * Hd;
        double* dq = d_qkv.data() + static_cast<size_t>(t) * 3 * C + h * Hd;
        for (int u = 0; u <= t; ++u) {
          double ds = pr[u] * (d_scores[u] - dot_sum) * att_scale;
          if (ds == 0.0) continue;
          const double* k = qkv + static_cast<size_t>(u) * 3 * C + C + h * Hd;
          double* dk = d_qkv.data() + static_cast<size_t>(u) * 3 * C + C + h * Hd;
          for (int i = 0; i < Hd; ++i) {
            dq[i] += ds * k[i];
            dk[i] += ds * q[i];
          }
        }
      }
    }

    for (int t = 0; t < len; ++t) {
      const double* drow = d_qkv.data() + static_cast<size_t>(t) * 3 * C;
      std::vector<double> d_ln1(C, 0.0);
      matvec_backward(P + W.w_qkv, ln1 + static_cast<size_t>(t) * C, drow, G + W.w_qkv,
                      d_ln1.data(), 3 * C, C);
      for (int i = 0; i < 3 * C; ++i) G[W.b_qkv + i] += drow[i];
      layernorm_backward(x_in + static_cast<size_t>(t) * C, P + W.ln1_g, d_ln1.data(),
                         cache.ln1_mean[static_cast<size_t>(l) * len + t],
                         cache.ln1_rstd[static_cast<size_t>(l) * len + t],
                         d_buf.data() + static_cast<size_t>(t) * C, G + W.ln1_g, G + W.ln1_b, C);
    }
    d_stream.swap(d_buf);
  }

  for (int t = 0; t < len; ++t) {
    const double* dx = d_stream.data() + static_cast<size_t>(t) * C;
    double* dtok = G + lay.tok_emb + static_cast<size_t>(ids[t]) * C;
    double* dpos = G + lay.pos_emb + static_cast<size_t>(t) * C;
    for (int i = 0; i < C; ++i) {
      dtok[i] += dx[i];
      dpos[i] += dx[i];
    }
  }
}

double nll_of_row(const double* logits, int target, int vocab) {
  double maxv = -HUGE_VAL;
  for (int v = 0; v < vocab; ++v) maxv = std::max(maxv, logits[v]);
  double denom = 0.0;
  for (int v = 0; v < vocab; ++v) denom += std::exp(logits[v] - maxv);
  return std::log(denom) + maxv - logits[target];
}

}  // namespace

void ModelConfig::validate() const {
  require(n_layers >= 1 && n_heads >= 1 && d_model >= 1 && d_ff >= 1, "config",
          "model dimensions must be positive");
  require(d_model % n_heads == 0, "config", "d_model must be divisible by n_heads");
  require(context_length >= 2, "config", "context_length must be at least 2");
  require(vocab_size >= 2, "config", "vocab_size must be at least 2");
  require(dropout == 0.0, "config", "dropout must be 0 for deterministic per-example gradients");
}

ParamLayout ParamLayout::make(const ModelConfig& cfg) {
  ParamLayout lay;
  size_t C = cfg.d_model, F = cfg.d_ff, V = cfg.vocab_size, T = cfg.context_length;
  size_t off = 0;
  auto take = [&off](size_t n) {
    size_t at = off;
    off += n;
    return at;
  };
  lay.tok_emb = take(V * C);
  lay.pos_emb = take(T * C);
  lay.layers.resize(cfg.n_layers);
  for (auto& l : lay.layers) {
    l.ln1_g = take(C);
    l.ln1_b = take(C);
    l.w_qkv = take(3 * C * C);
    l.b_qkv = take(3 * C);
    l.w_attn = take(C * C);
    l.b_attn = take(C);
    l.ln2_g = take(C);
    l.ln2_b = take(C);
    l.w_fc = take(F * C);
    l.b_fc = take(F);
    l.w_proj = take(C * F);
    l.b_proj = take(C);
  }
  lay.lnf_g = take(C);
  lay.lnf_b = take(C);
  lay.w_out = take(V * C);
  lay.total = off;
  return lay;
}

ModelParams ModelParams::init(const ModelConfig& cfg, Rng& rng) {
  cfg.validate();
  ModelParams p;
  p.config = cfg;
  p.layout = ParamLayout::make(cfg);
  p.flat.assign(p.layout.total, 0.0);
  auto fill_normal = [&](size_t at, size_t n) {
    for (size_t i = 0; i < n; ++i) p.flat[at + i] = 0.02 * rng.normal();
  };
  auto fill_ones = [&](size_t at, size_t n) {
    for (size_t i = 0; i < n; ++i) p.flat[at + i] = 1.0;
  };
  size_t C = cfg.d_model, F = cfg.d_ff, V = cfg.vocab_size, T = cfg.context_length;
  fill_normal(p.layout.tok_emb, V * C);
  fill_normal(p.layout.pos_emb, T * C);
  for (const auto& l : p.layout.layers) {
    fill_ones(l.ln1_g, C);
    fill_normal(l.w_qkv, 3 * C * C);
    fill_normal(l.w_attn, C * C);
    fill_ones(l.ln2_g, C);
    fill_normal(l.w_fc, F * C);
    fill_normal(l.w_proj, C * F);
  }
  fill_ones(p.layout.lnf_g, C);
  fill_normal(p.layout.w_out, V * C);
  return p;
}

void ModelParams::check_finite() const {
  for (double v : flat)
    if (!std::isfinite(v)) fail("internal", "non-finite model parameter");
}

int Batch::tokens_in_example(int e) const {
  int n = 0;
  for (int t = 0; t < n_positions; ++t) n += (role[at(e, t)] != PosRole::Pad);
  return n;
}

void Batch::validate(const ModelConfig& cfg) const {
  require(n_examples >= 1 && n_positions >= 1, "domain", "empty batch");
  require(n_positions <= cfg.context_length, "domain", "batch longer than context_length");
  size_t n = static_cast<size_t>(n_examples) * n_positions;
  require(input.size() == n && target.size() == n && role.size() == n, "domain",
          "batch tensor shape mismatch");
  for (size_t i = 0; i < n; ++i) {
    require(input[i] >= 0 && input[i] < cfg.vocab_size, "domain", "input id outside vocab");
    require(target[i] >= 0 && target[i] < cfg.vocab_size, "domain", "target id outside vocab");
  }
}

LossWeights LossWeights::value_weighted(double lambda) {
  require(lambda >= 0.0 && lambda <= 1.0, "domain", "lambda must lie in [0,1]");
  return {lambda, 1.0 - lambda};
}

std::vector<double> forward(const ModelParams& params, const Batch& batch) {
  batch.validate(params.config);
  const int V = params.config.vocab_size;
  std::vector<double> logits(static_cast<size_t>(batch.n_examples) * batch.n_positions * V);
  parallel_for(batch.n_examples, [&](size_t e) {
    Cache cache;
    forward_example(params, batch.input.data() + batch.at(static_cast<int>(e), 0),
                    batch.n_positions, cache);
    std::memcpy(logits.data() + batch.at(static_cast<int>(e), 0) * V, cache.logits.data(),
                sizeof(double) * cache.logits.size());
  });
  return logits;
}

StandardLoss loss_standard(const std::vector<double>& logits, const Batch& batch) {
  const int V = static_cast<int>(logits.size() / (static_cast<size_t>(batch.n_examples) *
                                                  batch.n_positions));
  StandardLoss out;
  out.per_token_nll.assign(static_cast<size_t>(batch.n_examples) * batch.n_positions, 0.0);
  double total = 0.0;
  for (int e = 0; e < batch.n_examples; ++e)
    for (int t = 0; t < batch.n_positions; ++t) {
      size_t i = batch.at(e, t);
      if (batch.role[i] == PosRole::Pad) continue;
      double nll = nll_of_row(logits.data() + i * V, batch.target[i], V);
      out.per_token_nll[i] = nll;
      total += nll;
      ++out.token_count;
    }
  require(out.token_count > 0, "domain", "batch has no non-pad tokens");
  out.mean_nll = total / static_cast<double>(out.token_count);
  return out;
}

double loss_weighted(const std::vector<double>& logits, const Batch& batch, double lambda) {
  LossWeights w = LossWeights::value_weighted(lambda);
  StandardLoss s = loss_standard(logits, batch);
  double total = 0.0;
  for (int e = 0; e < batch.n_examples; ++e)
    for (int t = 0; t < batch.n_positions; ++t) {
      size_t i = batch.at(e, t);
      if (batch.role[i] == PosRole::Pad) continue;
      total += w.of(batch.role[i]) * s.per_token_nll[i];
    }
  return total / static_cast<double>(s.token_count);
}

double example_gradient(const ModelParams& params, const Batch& batch, int example,
                        const LossWeights& weights, std::span<double> grad) {
  require(grad.size() == params.layout.total, "domain", "gradient buffer size mismatch");
  const int V = params.config.vocab_size;
  // Pads are a suffix; positions past the last non-pad target are dead weight.
  int len = 0;
  int n_tokens = 0;
  for (int t = 0; t < batch.n_positions; ++t)
    if (batch.role[batch.at(example, t)] != PosRole::Pad) {
      len = t + 1;
      ++n_tokens;
    }
  require(n_tokens > 0, "domain", "example has no non-pad tokens");
  const int* ids = batch.input.data() + batch.at(example, 0);

  Cache cache;
  forward_example(params, ids, len, cache);
  const double inv_n = 1.0 / static_cast<double>(n_tokens);

  double loss = 0.0;
  std::vector<double> dlogits(static_cast<size_t>(len) * V, 0.0);
  for (int t = 0; t < len; ++t) {
    size_t i = batch.at(example, t);
    if (batch.role[i] == PosRole::Pad) continue;
    const double w = weights.of(batch.role[i]) * inv_n;
    const double* row = cache.logits.data() + static_cast<size_t>(t) * V;
    double maxv = -HUGE_VAL;
    for (int v = 0; v < V; ++v) maxv = std::max(maxv, row[v]);
    double denom = 0.0;
    for (int v = 0; v < V; ++v) denom += std::exp(row[v] - maxv);
    loss += w * (std::log(denom) + maxv - row[batch.target[i]]);
    double* drow = dlogits.data() + static_cast<size_t>(t) * V;
    for (int v = 0; v < V; ++v) drow[v] = w * std::exp(row[v] - maxv) / denom;
    drow[batch.target[i]] -= w;
  }

  backward_example(params, ids, len, cache, dlogits, grad);
  return loss;
}

std::vector<std::vector<double>> backward_per_example(const ModelParams& params,
                                                      const Batch& batch,
                                                      const LossWeights& weights) {
  std::vector<std::vector<double>> grads(batch.n_examples);
  parallel_for(batch.n_examples, [&](size_t e) {
    grads[e].assign(params.layout.total, 0.0);
    example_gradient(params, batch, static_cast<int>(e), weights, grads[e]);
  });
  return grads;
}

double batch_gradient(const ModelParams& params, const Batch& batch, const LossWeights& weights,
                      std::span<double> grad) {
  require(grad.size() == params.layout.total, "domain", "gradient buffer size mismatch");
  std::fill(grad.begin(), grad.end(), 0.0);
  const size_t P = params.layout.total;
  constexpr int kChunk = 16;
  const int n_chunks = (batch.n_examples + kChunk - 1) / kChunk;
  std::vector<std::vector<double>> partial(n_chunks);
  std::vector<double> losses(n_chunks, 0.0);
  parallel_for(n_chunks, [&](size_t c) {
    partial[c].assign(P, 0.0);
    std::vector<double> scratch(P);
    int lo = static_cast<int>(c) * kChunk;
    int hi = std::min(batch.n_examples, lo + kChunk);
    for (int e = lo; e < hi; ++e) {
      std::fill(scratch.begin(), scratch.end(), 0.0);
      losses[c] += example_gradient(params, batch, e, weights, scratch);
      for (size_t i = 0; i < P; ++i) partial[c][i] += scratch[i];
    }
  });
  double loss = 0.0;
  for (int c = 0; c < n_chunks; ++c) {
    loss += losses[c];
    for (size_t i = 0; i < P; ++i) grad[i] += partial[c][i];
  }
  const double inv_e = 1.0 / static_cast<double>(batch.n_examples);
  for (size_t i = 0; i < P; ++i) grad[i] *= inv_e;
  return loss * inv_e;
}

std::vector<double> next_token_distribution(const ModelParams& params,
                                            const std::vector<int>& prefix, double temperature) {
  require(!prefix.empty(), "domain", "next_token_distribution requires a non-empty prefix");
  require(temperature > 0.0, "domain", "temperature must be positive");
  require(static_cast<int>(prefix.size()) <= params.config.context_length, "domain",
          "prefix longer than context_length");
  Cache cache;
  forward_example(params, prefix.data(), static_cast<int>(prefix.size()), cache);
  const int V = params.config.vocab_size;
  const double* row = cache.logits.data() + (prefix.size() - 1) * V;
  std::vector<double> dist(V);
  double maxv = -HUGE_VAL;
  for (int v = 0; v < V; ++v) maxv = std::max(maxv, row[v] / temperature);
  double denom = 0.0;
  for (int v = 0; v < V; ++v) {
    dist[v] = std::exp(row[v] / temperature - maxv);
    denom += dist[v];
  }
  for (double& d : dist) d /= denom;
  return dist;
}

Decoder::Decoder(const ModelParams& params) : params_(params) {
  const ModelConfig& cfg = params.config;
  key_cache_.assign(cfg.n_layers,
                    std::vector<double>(static_cast<size_t>(cfg.context_length) * cfg.d_model));
  value_cache_ = key_cache_;
  logits_.assign(cfg.vocab_size, 0.0);
}

void Decoder::reset() { length_ = 0; }

const std::vector<double>& Decoder::push(int token_id) {
  const ModelConfig& cfg = params_.config;
  const ParamLayout& lay = params_.layout;
  const double* P = params_.flat.data();
  const int C = cfg.d_model, H = cfg.n_heads, F = cfg.d_ff, V = cfg.vocab_size;
  const int Hd = C / H;
  const double att_scale = 1.0 / std::sqrt(static_cast<double>(Hd));
  require(length_ < cfg.context_length, "domain", "decoder exceeded context_length");
  require(token_id >= 0 && token_id < V, "domain", "token id outside vocab");
  const int t = length_;

  std::vector<double> x(C), ln(C), qkv(3 * C), att(C), mid(C), fc(F), act(F), xo(C);
  double mean, rstd;
  const double* tok = P + lay.tok_emb + static_cast<size_t>(token_id) * C;
  const double* pos = P + lay.pos_emb + static_cast<size_t>(t) * C;
  for (int i = 0; i < C; ++i) x[i] = tok[i] + pos[i];

  for (int l = 0; l < cfg.n_layers; ++l) {
    const auto& W = lay.layers[l];
    layernorm_forward(x.data(), P + W.ln1_g, P + W.ln1_b, ln.data(), &mean, &rstd, C);
    std::memcpy(qkv.data(), P + W.b_qkv, sizeof(double) * 3 * C);
    matvec(P + W.w_qkv, ln.data(), qkv.data(), 3 * C, C);
    std::memcpy(key_cache_[l].data() + static_cast<size_t>(t) * C, qkv.data() + C,
                sizeof(double) * C);
    std::memcpy(value_cache_[l].data() + static_cast<size_t>(t) * C, qkv.data() + 2 * C,
                sizeof(double) * C);
    for (int h = 0; h < H; ++h) {
      const double* q = qkv.data() + h * Hd;
      scratch_.assign(t + 1, 0.0);
      double maxs = -HUGE_VAL;
      for (int u = 0; u <= t; ++u) {
        const double* k = key_cache_[l].data() + static_cast<size_t>(u) * C + h * Hd;
        double s = 0.0;
        for (int i = 0; i < Hd; ++i) s += q[i] * k[i];
        s *= att_scale;
        scratch_[u] = s;
        maxs = std::max(maxs, s);
      }
      double denom = 0.0;
      for (int u = 0; u <= t; ++u) {
        scratch_[u] = std::exp(scratch_[u] - maxs);
        denom += scratch_[u];
      }
      double* out = att.data() + h * Hd;
      for (int i = 0; i < Hd; ++i) out[i] = 0.0;
      for (int u = 0; u <= t; ++u) {
        const double* v = value_cache_[l].data() + static_cast<size_t>(u) * C + h * Hd;
        double p = scratch_[u] / denom;
        for (int i = 0; i < Hd; ++i) out[i] += p * v[i];
      }
    }
    std::memcpy(mid.data(), P + W.b_attn, sizeof(double) * C);
    matvec(P + W.w_attn, att.data(), mid.data(), C, C);
    for (int i = 0; i < C; ++i) mid[i] += x[i];
    layernorm_forward(mid.data(), P + W.ln2_g, P + W.ln2_b, ln.data(), &mean, &rstd, C);
    std::memcpy(fc.data(), P + W.b_fc, sizeof(double) * F);
    matvec(P + W.w_fc, ln.data(), fc.data(), F, C);
    for (int i = 0; i < F; ++i) act[i] = gelu(fc[i]);
    std::memcpy(xo.data(), P + W.b_proj, sizeof(double) * C);
    matvec(P + W.w_proj, act.data(), xo.data(), C, F);
    for (int i = 0; i < C; ++i) x[i] = xo[i] + mid[i];
  }
  layernorm_forward(x.data(), P + lay.lnf_g, P + lay.lnf_b, ln.data(), &mean, &rstd, C);
  std::fill(logits_.begin(), logits_.end(), 0.0);
  matvec(P + lay.w_out, ln.data(), logits_.data(), V, C);
  ++length_;
  return logits_;
}

}  // namespace dptab::lm
