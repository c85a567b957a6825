#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <vector>

#include "cpt/model.hpp"
#include "kernels.hpp"

// Internal transformer math, templated on the scalar type: float for
// training and inference, double for the finite-difference gradient oracle.

namespace cpt::detail {

constexpr double kLnEps = 1e-5;    // layer-norm variance epsilon
constexpr double kSigmaFloor = 1e-4;

struct NetLayout {
  std::size_t d_model = 0, d_token = 0, n_blocks = 0, mlp_hidden = 0;
  std::size_t n_heads = 0, head_dim = 0, max_context = 0, vocab = 0, arr_dim = 0;

  struct Block {
    std::size_t ln1_g, ln1_b;
    std::size_t wq, bq, wk, bk, wv, bv, wo, bo;
    std::size_t ln2_g, ln2_b;
    std::size_t w1, b1, w2, b2;
  };

  std::size_t embed_w = 0, embed_b = 0, pos = 0;
  std::vector<Block> blocks;
  std::size_t lnf_g = 0, lnf_b = 0;
  std::size_t ev_w = 0, ev_b = 0, ar_w = 0, ar_b = 0, st_w = 0, st_b = 0;
  std::size_t total = 0;
};

inline NetLayout make_layout(const ModelConfig& cfg, std::size_t d_token,
                             std::size_t vocab,
                             std::vector<TensorInfo>* manifest = nullptr) {
  NetLayout lay;
  lay.d_model = cfg.d_model;
  lay.d_token = d_token;
  lay.n_blocks = cfg.n_blocks;
  lay.mlp_hidden = cfg.mlp_hidden;
  lay.n_heads = cfg.n_heads;
  lay.head_dim = cfg.d_model / cfg.n_heads;
  lay.max_context = cfg.max_context;
  lay.vocab = vocab;
  lay.arr_dim = cfg.distribution_head ? 2 : 1;

  std::size_t off = 0;
  auto put = [&](const std::string& name, std::vector<std::size_t> shape) {
    std::size_t n = 1;
    for (std::size_t s : shape) n *= s;
    const std::size_t at = off;
    if (manifest) manifest->push_back(TensorInfo{name, std::move(shape), at, n});
    off += n;
    return at;
  };

  const std::size_t d = cfg.d_model, f = cfg.mlp_hidden;
  lay.embed_w = put("embed.w", {d, d_token});
  lay.embed_b = put("embed.b", {d});
  lay.pos = put("pos", {cfg.max_context, d});
  for (std::size_t b = 0; b < cfg.n_blocks; ++b) {
    const std::string p = "block" + std::to_string(b) + ".";
    NetLayout::Block blk;
    blk.ln1_g = put(p + "ln1.g", {d});
    blk.ln1_b = put(p + "ln1.b", {d});
    blk.wq = put(p + "attn.wq", {d, d});
    blk.bq = put(p + "attn.bq", {d});
    blk.wk = put(p + "attn.wk", {d, d});
    blk.bk = put(p + "attn.bk", {d});
    blk.wv = put(p + "attn.wv", {d, d});
    blk.bv = put(p + "attn.bv", {d});
    blk.wo = put(p + "attn.wo", {d, d});
    blk.bo = put(p + "attn.bo", {d});
    blk.ln2_g = put(p + "ln2.g", {d});
    blk.ln2_b = put(p + "ln2.b", {d});
    blk.w1 = put(p + "mlp.w1", {f, d});
    blk.b1 = put(p + "mlp.b1", {f});
    blk.w2 = put(p + "mlp.w2", {d, f});
    blk.b2 = put(p + "mlp.b2", {d});
    lay.blocks.push_back(blk);
  }
  lay.lnf_g = put("ln_f.g", {d});
  lay.lnf_b = put("ln_f.b", {d});
  lay.ev_w = put("head.event.w", {vocab, d});
  lay.ev_b = put("head.event.b", {vocab});
  lay.ar_w = put("head.arrival.w", {lay.arr_dim, d});
  lay.ar_b = put("head.arrival.b", {lay.arr_dim});
  lay.st_w = put("head.stop.w", {2, d});
  lay.st_b = put("head.stop.b", {2});
  lay.total = off;
  return lay;
}

template <typename T>
inline T gelu(T x) {
  const T c = T(0.7978845608028654);  // sqrt(2/pi)
  const T a = T(0.044715);
  return T(0.5) * x * (T(1) + std::tanh(c * (x + a * x * x * x)));
}

template <typename T>
inline T gelu_grad(T x) {
  const T c = T(0.7978845608028654);
  const T a = T(0.044715);
  const T t = std::tanh(c * (x + a * x * x * x));
  return T(0.5) * (T(1) + t) +
         T(0.5) * x * (T(1) - t * t) * c * (T(1) + T(3) * a * x * x);
}

template <typename T>
inline T softplus(T x) {
  return x > T(0) ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x));
}

template <typename T>
inline T sigmoid(T x) {
  return x > T(0) ? T(1) / (T(1) + std::exp(-x))
                  : std::exp(x) / (T(1) + std::exp(x));
}

// Row-wise layer norm; stores the normalized row (pre-gamma) and 1/std.
template <typename T>
inline void layernorm_row(const T* x, const T* g, const T* b, std::size_t d,
                          T* nhat, T* rstd_out, T* y) {
  T mean = 0;
  for (std::size_t i = 0; i < d; ++i) mean += x[i];
  mean /= T(d);
  T var = 0;
  for (std::size_t i = 0; i < d; ++i) {
    const T c = x[i] - mean;
    var += c * c;
  }
  var /= T(d);
  const T rstd = T(1) / std::sqrt(var + T(kLnEps));
  *rstd_out = rstd;
  for (std::size_t i = 0; i < d; ++i) {
    nhat[i] = (x[i] - mean) * rstd;
    y[i] = g[i] * nhat[i] + b[i];
  }
}

// dy is the gradient at y = g*nhat + b. Accumulates into dx, dg, db.
template <typename T>
inline void layernorm_backward_row(const T* dy, const T* nhat, T rstd, const T* g,
                                   std::size_t d, T* dx, T* dg, T* db) {
  T mean_dn = 0, mean_dn_n = 0;
  for (std::size_t i = 0; i < d; ++i) {
    const T dn = dy[i] * g[i];
    mean_dn += dn;
    mean_dn_n += dn * nhat[i];
    dg[i] += dy[i] * nhat[i];
    db[i] += dy[i];
  }
  mean_dn /= T(d);
  mean_dn_n /= T(d);
  for (std::size_t i = 0; i < d; ++i) {
    const T dn = dy[i] * g[i];
    dx[i] += rstd * (dn - mean_dn - nhat[i] * mean_dn_n);
  }
}

template <typename T>
struct BlockActs {
  std::vector<T> n1, rstd1, y1;  // L*d normalized, L, L*d post-gamma
  std::vector<T> q, k, v;        // L*d
  std::vector<T> probs;          // H*L*L, row i uses columns 0..i
  std::vector<T> att_concat;     // L*d
  std::vector<T> x_mid;          // L*d
  std::vector<T> n2, rstd2, y2;  // L*d, L, L*d
  std::vector<T> h_pre, h_act;   // L*F
};

template <typename T>
struct NetActs {
  std::size_t L = 0;
  std::vector<std::vector<T>> xs;  // n_blocks+1 buffers of L*d
  std::vector<BlockActs<T>> blocks;
  std::vector<T> nf, rstdf, yf;  // L*d, L, L*d
  std::vector<T> ev, ar, st;     // L*V, L*A, L*2

  void resize(const NetLayout& lay, std::size_t len) {
    L = len;
    const std::size_t d = lay.d_model, f = lay.mlp_hidden, h = lay.n_heads;
    xs.resize(lay.n_blocks + 1);
    for (auto& x : xs) x.resize(L * d);
    blocks.resize(lay.n_blocks);
    for (auto& b : blocks) {
      b.n1.resize(L * d);
      b.rstd1.resize(L);
      b.y1.resize(L * d);
      b.q.resize(L * d);
      b.k.resize(L * d);
      b.v.resize(L * d);
      b.probs.resize(h * L * L);
      b.att_concat.resize(L * d);
      b.x_mid.resize(L * d);
      b.n2.resize(L * d);
      b.rstd2.resize(L);
      b.y2.resize(L * d);
      b.h_pre.resize(L * f);
      b.h_act.resize(L * f);
    }
    nf.resize(L * d);
    rstdf.resize(L);
    yf.resize(L * d);
    ev.resize(L * lay.vocab);
    ar.resize(L * lay.arr_dim);
    st.resize(L * 2);
  }
};

template <typename T>
void net_forward(const T* p, const NetLayout& lay,
                 const std::vector<Token>& tokens, NetActs<T>& acts) {
  const std::size_t L = tokens.size();
  const std::size_t d = lay.d_model, f = lay.mlp_hidden;
  const std::size_t H = lay.n_heads, dh = lay.head_dim;
  acts.resize(lay, L);

  std::vector<T> tok(lay.d_token);

  // Input linear + learned positional embedding.
  T* x0 = acts.xs[0].data();
  for (std::size_t l = 0; l < L; ++l) {
    for (std::size_t i = 0; i < lay.d_token; ++i) tok[i] = T(tokens[l][i]);
    linear_forward(p + lay.embed_w, p + lay.embed_b, tok.data(), x0 + l * d, d,
                   lay.d_token);
    axpy(T(1), p + lay.pos + l * d, x0 + l * d, d);
  }

  const T scale = T(1) / std::sqrt(T(dh));
  for (std::size_t b = 0; b < lay.n_blocks; ++b) {
    const auto& pb = lay.blocks[b];
    BlockActs<T>& ba = acts.blocks[b];
    const T* xin = acts.xs[b].data();
    T* xout = acts.xs[b + 1].data();

    for (std::size_t l = 0; l < L; ++l)
      layernorm_row(xin + l * d, p + pb.ln1_g, p + pb.ln1_b, d,
                    ba.n1.data() + l * d, &ba.rstd1[l], ba.y1.data() + l * d);
    linear_forward_seq(p + pb.wq, p + pb.bq, ba.y1.data(), ba.q.data(), L, d, d);
    linear_forward_seq(p + pb.wk, p + pb.bk, ba.y1.data(), ba.k.data(), L, d, d);
    linear_forward_seq(p + pb.wv, p + pb.bv, ba.y1.data(), ba.v.data(), L, d, d);

    for (std::size_t h = 0; h < H; ++h) {
      for (std::size_t i = 0; i < L; ++i) {
        T* prow = ba.probs.data() + (h * L + i) * L;
        const T* qi = ba.q.data() + i * d + h * dh;
        T maxs = -std::numeric_limits<T>::infinity();
        for (std::size_t j = 0; j <= i; ++j) {
          prow[j] = dot(qi, ba.k.data() + j * d + h * dh, dh) * scale;
          maxs = std::max(maxs, prow[j]);
        }
        T sum = 0;
        for (std::size_t j = 0; j <= i; ++j) {
          prow[j] = std::exp(prow[j] - maxs);
          sum += prow[j];
        }
        const T inv = T(1) / sum;
        T* orow = ba.att_concat.data() + i * d + h * dh;
        for (std::size_t c = 0; c < dh; ++c) orow[c] = 0;
        for (std::size_t j = 0; j <= i; ++j) {
          prow[j] *= inv;
          axpy(prow[j], ba.v.data() + j * d + h * dh, orow, dh);
        }
      }
    }

    linear_forward_seq(p + pb.wo, p + pb.bo, ba.att_concat.data(),
                       ba.x_mid.data(), L, d, d);
    for (std::size_t i = 0; i < L * d; ++i) ba.x_mid[i] += xin[i];

    for (std::size_t l = 0; l < L; ++l)
      layernorm_row(ba.x_mid.data() + l * d, p + pb.ln2_g, p + pb.ln2_b, d,
                    ba.n2.data() + l * d, &ba.rstd2[l], ba.y2.data() + l * d);
    linear_forward_seq(p + pb.w1, p + pb.b1, ba.y2.data(), ba.h_pre.data(), L, f,
                       d);
    for (std::size_t i = 0; i < L * f; ++i) ba.h_act[i] = gelu(ba.h_pre[i]);
    linear_forward_seq(p + pb.w2, p + pb.b2, ba.h_act.data(), xout, L, d, f);
    for (std::size_t i = 0; i < L * d; ++i) xout[i] += ba.x_mid[i];
  }

  const T* xf = acts.xs[lay.n_blocks].data();
  for (std::size_t l = 0; l < L; ++l)
    layernorm_row(xf + l * d, p + lay.lnf_g, p + lay.lnf_b, d,
                  acts.nf.data() + l * d, &acts.rstdf[l], acts.yf.data() + l * d);
  linear_forward_seq(p + lay.ev_w, p + lay.ev_b, acts.yf.data(), acts.ev.data(),
                     L, lay.vocab, d);
  linear_forward_seq(p + lay.ar_w, p + lay.ar_b, acts.yf.data(), acts.ar.data(),
                     L, lay.arr_dim, d);
  linear_forward_seq(p + lay.st_w, p + lay.st_b, acts.yf.data(), acts.st.data(),
                     L, 2, d);
}

template <typename T>
HeadOutputs head_outputs_from_acts(const NetLayout& lay, const NetActs<T>& acts,
                                   bool dist_head) {
  HeadOutputs out;
  out.length = acts.L;
  out.vocab = lay.vocab;
  out.distribution_head = dist_head;
  out.event_logits.assign(acts.ev.begin(), acts.ev.end());
  out.stop_logits.assign(acts.st.begin(), acts.st.end());
  out.arrival_mean.resize(acts.L);
  if (dist_head) {
    out.arrival_sigma.resize(acts.L);
    for (std::size_t l = 0; l < acts.L; ++l) {
      out.arrival_mean[l] = double(acts.ar[l * 2]);
      out.arrival_sigma[l] = softplus(double(acts.ar[l * 2 + 1])) + kSigmaFloor;
    }
  } else {
    for (std::size_t l = 0; l < acts.L; ++l)
      out.arrival_mean[l] = double(acts.ar[l]);
  }
  return out;
}

// Unnormalized per-field loss sums over one sequence plus position counts.
struct SeqLoss {
  double event_sum = 0.0, arrival_sum = 0.0, stop_sum = 0.0;
  std::size_t event_count = 0, stop_count = 0;  // arrival count == event count
};

// Per-field gradient scale: weight / batch position count.
struct LossScales {
  double event = 0.0, arrival = 0.0, stop = 0.0;
};

template <typename T>
SeqLoss sequence_loss(const NetLayout& lay, const NetActs<T>& acts,
                      const TargetSequence& tgt, bool dist_head) {
  SeqLoss out;
  const std::size_t L = acts.L, V = lay.vocab;
  for (std::size_t l = 0; l < L; ++l) {
    if (tgt.event_target[l] >= 0) {
      const T* logits = acts.ev.data() + l * V;
      double mx = logits[0];
      for (std::size_t v = 1; v < V; ++v) mx = std::max<double>(mx, logits[v]);
      double z = 0;
      for (std::size_t v = 0; v < V; ++v) z += std::exp(double(logits[v]) - mx);
      out.event_sum += mx + std::log(z) -
                       double(logits[static_cast<std::size_t>(tgt.event_target[l])]);
      ++out.event_count;

      const double x = tgt.arrival_target[l];
      if (dist_head) {
        const double mu = double(acts.ar[l * 2]);
        const double sigma = softplus(double(acts.ar[l * 2 + 1])) + kSigmaFloor;
        const double zz = (x - mu) / sigma;
        out.arrival_sum += 0.5 * std::log(2.0 * 3.141592653589793238462643383279502884) +
                           std::log(sigma) + 0.5 * zz * zz;
      } else {
        const double diff = double(acts.ar[l]) - x;
        out.arrival_sum += diff * diff;
      }
    }
    {
      const double a = acts.st[l * 2], b = acts.st[l * 2 + 1];
      const double mx = std::max(a, b);
      const double lse = mx + std::log(std::exp(a - mx) + std::exp(b - mx));
      out.stop_sum += lse - (tgt.stop_target[l] == 1 ? b : a);
      ++out.stop_count;
    }
  }
  return out;
}

// Scratch buffers reused across sequences by one worker.
template <typename T>
struct BackwardArena {
  std::vector<T> dx, dx_mid, dconcat, dq, dk, dv;  // L*d
  std::vector<T> dy_seq;                           // L*d
  std::vector<T> dh_seq;                           // L*f
  std::vector<T> dev, dar, dst;                    // L*V, L*A, L*2
  std::vector<T> dprow, tok;
};

// Accumulates dLoss/dparams into `grad` (same layout as `p`). The incoming
// gradient of each field is weight/batch_count, passed via `scales`.
template <typename T>
SeqLoss net_backward(const T* p, const NetLayout& lay,
                     const std::vector<Token>& tokens, const TargetSequence& tgt,
                     const NetActs<T>& acts, bool dist_head,
                     const LossScales& scales, T* grad, BackwardArena<T>& ar) {
  const std::size_t L = acts.L;
  const std::size_t d = lay.d_model, f = lay.mlp_hidden;
  const std::size_t H = lay.n_heads, dh = lay.head_dim, V = lay.vocab;

  SeqLoss loss = sequence_loss(lay, acts, tgt, dist_head);

  // Head logit gradients for the whole sequence; masked rows stay zero.
  ar.dev.assign(L * V, T(0));
  ar.dar.assign(L * lay.arr_dim, T(0));
  ar.dst.assign(L * 2, T(0));
  for (std::size_t l = 0; l < L; ++l) {
    if (tgt.event_target[l] >= 0) {
      const T* logits = acts.ev.data() + l * V;
      T* dl = ar.dev.data() + l * V;
      T mx = logits[0];
      for (std::size_t v = 1; v < V; ++v) mx = std::max(mx, logits[v]);
      T z = 0;
      for (std::size_t v = 0; v < V; ++v) {
        dl[v] = std::exp(logits[v] - mx);
        z += dl[v];
      }
      const auto c = static_cast<std::size_t>(tgt.event_target[l]);
      for (std::size_t v = 0; v < V; ++v)
        dl[v] = (dl[v] / z - (v == c ? T(1) : T(0))) * T(scales.event);

      const T x = T(tgt.arrival_target[l]);
      T* da = ar.dar.data() + l * lay.arr_dim;
      if (dist_head) {
        const T mu = acts.ar[l * 2];
        const T raw = acts.ar[l * 2 + 1];
        const T sigma = softplus(raw) + T(kSigmaFloor);
        const T zz = (x - mu) / sigma;
        da[0] = (mu - x) / (sigma * sigma) * T(scales.arrival);
        da[1] = (T(1) / sigma - zz * zz / sigma) * sigmoid(raw) * T(scales.arrival);
      } else {
        da[0] = T(2) * (acts.ar[l] - x) * T(scales.arrival);
      }
    }
    {
      const T a = acts.st[l * 2], b = acts.st[l * 2 + 1];
      const T mx = std::max(a, b);
      const T ea = std::exp(a - mx), eb = std::exp(b - mx);
      const T z = ea + eb;
      const bool stop1 = tgt.stop_target[l] == 1;
      ar.dst[l * 2] = (ea / z - (stop1 ? T(0) : T(1))) * T(scales.stop);
      ar.dst[l * 2 + 1] = (eb / z - (stop1 ? T(1) : T(0))) * T(scales.stop);
    }
  }

  ar.dy_seq.assign(L * d, T(0));
  linear_backward_seq(p + lay.ev_w, acts.yf.data(), ar.dev.data(),
                      ar.dy_seq.data(), grad + lay.ev_w, grad + lay.ev_b, L, V, d);
  linear_backward_seq(p + lay.ar_w, acts.yf.data(), ar.dar.data(),
                      ar.dy_seq.data(), grad + lay.ar_w, grad + lay.ar_b, L,
                      lay.arr_dim, d);
  linear_backward_seq(p + lay.st_w, acts.yf.data(), ar.dst.data(),
                      ar.dy_seq.data(), grad + lay.st_w, grad + lay.st_b, L, 2, d);

  ar.dx.assign(L * d, T(0));
  for (std::size_t l = 0; l < L; ++l)
    layernorm_backward_row(ar.dy_seq.data() + l * d, acts.nf.data() + l * d,
                           acts.rstdf[l], p + lay.lnf_g, d, ar.dx.data() + l * d,
                           grad + lay.lnf_g, grad + lay.lnf_b);

  const T scale = T(1) / std::sqrt(T(dh));
  for (std::size_t bi = lay.n_blocks; bi-- > 0;) {
    const auto& pb = lay.blocks[bi];
    const BlockActs<T>& ba = acts.blocks[bi];

    // Feed-forward path: dx currently holds the block-output gradient.
    ar.dh_seq.assign(L * f, T(0));
    linear_backward_seq(p + pb.w2, ba.h_act.data(), ar.dx.data(),
                        ar.dh_seq.data(), grad + pb.w2, grad + pb.b2, L, d, f);
    for (std::size_t i = 0; i < L * f; ++i)
      ar.dh_seq[i] *= gelu_grad(ba.h_pre[i]);

    ar.dy_seq.assign(L * d, T(0));
    linear_backward_seq(p + pb.w1, ba.y2.data(), ar.dh_seq.data(),
                        ar.dy_seq.data(), grad + pb.w1, grad + pb.b1, L, f, d);

    ar.dx_mid = ar.dx;  // residual branch
    for (std::size_t l = 0; l < L; ++l)
      layernorm_backward_row(ar.dy_seq.data() + l * d, ba.n2.data() + l * d,
                             ba.rstd2[l], p + pb.ln2_g, d,
                             ar.dx_mid.data() + l * d, grad + pb.ln2_g,
                             grad + pb.ln2_b);

    // Attention output projection.
    ar.dconcat.assign(L * d, T(0));
    linear_backward_seq(p + pb.wo, ba.att_concat.data(), ar.dx_mid.data(),
                        ar.dconcat.data(), grad + pb.wo, grad + pb.bo, L, d, d);

    // Attention core.
    ar.dq.assign(L * d, T(0));
    ar.dk.assign(L * d, T(0));
    ar.dv.assign(L * d, T(0));
    ar.dprow.resize(L);
    for (std::size_t h = 0; h < H; ++h) {
      for (std::size_t i = 0; i < L; ++i) {
        const T* prow = ba.probs.data() + (h * L + i) * L;
        const T* dout = ar.dconcat.data() + i * d + h * dh;
        T* dp = ar.dprow.data();
        T inner = 0;
        for (std::size_t j = 0; j <= i; ++j) {
          dp[j] = dot(dout, ba.v.data() + j * d + h * dh, dh);
          axpy(prow[j], dout, ar.dv.data() + j * d + h * dh, dh);
          inner += dp[j] * prow[j];
        }
        T* dqi = ar.dq.data() + i * d + h * dh;
        const T* qi = ba.q.data() + i * d + h * dh;
        for (std::size_t j = 0; j <= i; ++j) {
          const T ds = prow[j] * (dp[j] - inner) * scale;
          axpy(ds, ba.k.data() + j * d + h * dh, dqi, dh);
          axpy(ds, qi, ar.dk.data() + j * d + h * dh, dh);
        }
      }
    }

    // Q/K/V projections and the first layer norm; then hand the gradient
    // to the previous block through dx.
    std::swap(ar.dx, ar.dx_mid);  // dx := d(x_mid); LN1 path adds to it
    ar.dy_seq.assign(L * d, T(0));
    linear_backward_seq(p + pb.wq, ba.y1.data(), ar.dq.data(), ar.dy_seq.data(),
                        grad + pb.wq, grad + pb.bq, L, d, d);
    linear_backward_seq(p + pb.wk, ba.y1.data(), ar.dk.data(), ar.dy_seq.data(),
                        grad + pb.wk, grad + pb.bk, L, d, d);
    linear_backward_seq(p + pb.wv, ba.y1.data(), ar.dv.data(), ar.dy_seq.data(),
                        grad + pb.wv, grad + pb.bv, L, d, d);
    for (std::size_t l = 0; l < L; ++l)
      layernorm_backward_row(ar.dy_seq.data() + l * d, ba.n1.data() + l * d,
                             ba.rstd1[l], p + pb.ln1_g, d, ar.dx.data() + l * d,
                             grad + pb.ln1_g, grad + pb.ln1_b);
  }

  // Input linear and positional table.
  ar.tok.resize(lay.d_token);
  for (std::size_t l = 0; l < L; ++l) {
    for (std::size_t i = 0; i < lay.d_token; ++i) ar.tok[i] = T(tokens[l][i]);
    const T* dx0 = ar.dx.data() + l * d;
    linear_backward(p + lay.embed_w, ar.tok.data(), dx0, static_cast<T*>(nullptr),
                    grad + lay.embed_w, grad + lay.embed_b, d, lay.d_token);
    axpy(T(1), dx0, grad + lay.pos + l * d, d);
  }
  return loss;
}

}  // namespace cpt::detail
