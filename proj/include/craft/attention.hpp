#pragma once

#include <cmath>
#include <limits>
#include <string>
#include <utility>
#include <vector>

#include "craft/ops.hpp"
#include "craft/params.hpp"

namespace craft::tc {

/// Key range [begin, end) attended by one query.
using Segment = std::pair<std::size_t, std::size_t>;

/// Softmax weight rows recorded during a forward pass, one row per
/// (query, head); with a zero sink the sink weight is the last entry.
struct AttentionProbe {
  std::vector<std::vector<double>> rows;
};

/// Scaled dot-product attention over already projected Q [Lq,C], K/V [Lk,C].
/// Query i attends to keys in segments[i] (all keys when segments is empty).
/// With zero_sink an all-zero key/value row is appended to every query's key
/// set, so its logit is 0 and its value contributes nothing.
inline Tensor attention_core(const Tensor& Q, const Tensor& K, const Tensor& V, std::size_t heads, bool zero_sink,
                             const std::vector<Segment>& segments = {}, AttentionProbe* probe = nullptr) {
  const std::size_t C = Q.cols(), Lq = Q.rows(), Lk = K.rows();
  if (heads == 0 || C % heads != 0) throw ConfigError("attention: channels not divisible by heads");
  detail::require(K.cols() == C && V.cols() == C && V.rows() == Lk, "attention: K/V shape mismatch");
  detail::require(segments.empty() || segments.size() == Lq, "attention: one segment per query required");
  const std::size_t dh = C / heads;
  const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(dh));

  std::vector<Segment> seg = segments;
  if (seg.empty()) seg.assign(Lq, {0, Lk});
  for (const auto& s : seg) detail::require(s.first <= s.second && s.second <= Lk, "attention: bad segment");

  // weights per (query, head): segment length (+1 for sink)
  std::vector<std::size_t> woff(Lq * heads + 1, 0);
  for (std::size_t q = 0; q < Lq; ++q)
    for (std::size_t h = 0; h < heads; ++h)
      woff[q * heads + h + 1] = woff[q * heads + h] + (seg[q].second - seg[q].first) + (zero_sink ? 1 : 0);
  std::vector<double> w(woff.back());
  std::vector<double> y(Lq * C, 0.0);
  const auto qv = Q.values(), kv = K.values(), vv = V.values();

  for (std::size_t q = 0; q < Lq; ++q) {
    const auto [b, e] = seg[q];
    for (std::size_t h = 0; h < heads; ++h) {
      double* wr = &w[woff[q * heads + h]];
      const std::size_t nk = e - b;
      const std::size_t nw = nk + (zero_sink ? 1 : 0);
      if (nw == 0) continue;
      double mx = zero_sink ? 0.0 : -std::numeric_limits<double>::infinity();
      for (std::size_t j = 0; j < nk; ++j) {
        double s = 0.0;
        for (std::size_t d = 0; d < dh; ++d) s += qv[q * C + h * dh + d] * kv[(b + j) * C + h * dh + d];
        wr[j] = s * inv_sqrt;
        mx = std::max(mx, wr[j]);
      }
      if (zero_sink) wr[nk] = 0.0;
      double z = 0.0;
      for (std::size_t j = 0; j < nw; ++j) z += (wr[j] = std::exp(wr[j] - mx));
      for (std::size_t j = 0; j < nw; ++j) wr[j] /= z;
      for (std::size_t j = 0; j < nk; ++j)
        for (std::size_t d = 0; d < dh; ++d) y[q * C + h * dh + d] += wr[j] * vv[(b + j) * C + h * dh + d];
    }
  }
  if (probe) {
    probe->rows.clear();
    for (std::size_t k = 0; k + 1 < woff.size(); ++k)
      probe->rows.emplace_back(w.begin() + static_cast<long>(woff[k]), w.begin() + static_cast<long>(woff[k + 1]));
  }

  Node* qn = Q.node();
  Node* kn = K.node();
  Node* vn = V.node();
  return make_result({Lq, C}, std::move(y), {Q, K, V},
                     [qn, kn, vn, w = std::move(w), woff = std::move(woff), seg = std::move(seg), heads, dh, C, Lq,
                      inv_sqrt, zero_sink](const std::vector<double>& g) {
                       std::vector<double> dw;
                       for (std::size_t q = 0; q < Lq; ++q) {
                         const auto [b, e] = seg[q];
                         const std::size_t nk = e - b;
                         for (std::size_t h = 0; h < heads; ++h) {
                           const double* wr = &w[woff[q * heads + h]];
                           const double* gq = &g[q * C + h * dh];
                           dw.assign(nk, 0.0);
                           double dot = 0.0;
                           for (std::size_t j = 0; j < nk; ++j) {
                             const double* vr = &vn->value[(b + j) * C + h * dh];
                             double s = 0.0;
                             for (std::size_t d = 0; d < dh; ++d) s += gq[d] * vr[d];
                             dw[j] = s;
                             dot += wr[j] * s;
                             if (vn->requires_grad)
                               for (std::size_t d = 0; d < dh; ++d) vn->grad[(b + j) * C + h * dh + d] += wr[j] * gq[d];
                           }
                           (void)zero_sink;  // sink value is zero: its weight adds nothing to dot
                           for (std::size_t j = 0; j < nk; ++j) {
                             const double ds = wr[j] * (dw[j] - dot) * inv_sqrt;
                             if (ds == 0.0) continue;
                             if (qn->requires_grad)
                               for (std::size_t d = 0; d < dh; ++d)
                                 qn->grad[q * C + h * dh + d] += ds * kn->value[(b + j) * C + h * dh + d];
                             if (kn->requires_grad)
                               for (std::size_t d = 0; d < dh; ++d)
                                 kn->grad[(b + j) * C + h * dh + d] += ds * qn->value[q * C + h * dh + d];
                           }
                         }
                       }
                     });
}

/// Projection weights of one multi-head attention block.
struct MhaParams {
  Tensor wq, bq, wk, bk, wv, bv, wo, bo;

  static MhaParams create(ParameterStore& store, const std::string& prefix, std::size_t channels) {
    MhaParams p;
    p.wq = store.xavier(prefix + ".wq", channels, channels);
    p.bq = store.constant(prefix + ".bq", {channels}, 0.0);
    p.wk = store.xavier(prefix + ".wk", channels, channels);
    p.bk = store.constant(prefix + ".bk", {channels}, 0.0);
    p.wv = store.xavier(prefix + ".wv", channels, channels);
    p.bv = store.constant(prefix + ".bv", {channels}, 0.0);
    p.wo = store.xavier(prefix + ".wo", channels, channels);
    p.bo = store.constant(prefix + ".bo", {channels}, 0.0);
    return p;
  }
};

/// Multi-head cross-attention with learned Q/K/V/output projections.
inline Tensor mh_cross_attention(const Tensor& q, const Tensor& k_in, const Tensor& v_in, const MhaParams& p,
                                 std::size_t heads, bool zero_sink, const std::vector<Segment>& segments = {},
                                 AttentionProbe* probe = nullptr) {
  if (heads == 0 || q.cols() % heads != 0) throw ConfigError("mh_cross_attention: channels not divisible by heads");
  const Tensor Q = linear(q, p.wq, p.bq);
  const Tensor K = linear(k_in, p.wk, p.bk);
  const Tensor V = linear(v_in, p.wv, p.bv);
  return linear(attention_core(Q, K, V, heads, zero_sink, segments, probe), p.wo, p.bo);
}

inline Tensor mh_cross_attention(const Tensor& q, const Tensor& kv, const MhaParams& p, std::size_t heads,
                                 bool zero_sink, AttentionProbe* probe = nullptr) {
  return mh_cross_attention(q, kv, kv, p, heads, zero_sink, {}, probe);
}

// ---------------------------------------------------------------------------
// Deformable attention

/// Sampling core of deformable attention. For query i and head h the n_points
/// logits are softmax-normalized, the raw map features are bilinearly sampled
/// at ref_i + offset, blended with those weights and projected by the head's
/// slice of value_w [C_map, C]. offsets [Lq, heads*points*2] and logits
/// [Lq, heads*points] are usually linear functions of the query.
inline Tensor deformable_core(const Tensor& offsets, const Tensor& logits, const Tensor& maps,
                              const std::vector<int>& map_index, const std::vector<double>& refs,
                              const Tensor& value_w, std::size_t heads, std::size_t n_points,
                              AttentionProbe* probe = nullptr) {
  detail::require(maps.rank() == 3 || maps.rank() == 4, "deformable: maps must be [H,W,C] or [B,H,W,C]");
  const bool batched = maps.rank() == 4;
  const std::size_t B = batched ? maps.dim(0) : 1;
  const std::size_t H = maps.dim(batched ? 1 : 0), W = maps.dim(batched ? 2 : 1), Cm = maps.dim(batched ? 3 : 2);
  const std::size_t Lq = logits.rows();
  const std::size_t C = value_w.cols();
  if (heads == 0 || C % heads != 0 || n_points == 0) throw ConfigError("deformable: bad heads/points");
  detail::require(value_w.rows() == Cm, "deformable: value projection input mismatch");
  detail::require(logits.cols() == heads * n_points && offsets.cols() == heads * n_points * 2 && offsets.rows() == Lq,
                  "deformable: offset/logit shape mismatch");
  detail::require(refs.size() == 2 * Lq, "deformable: one reference point per query");
  detail::require(map_index.empty() || map_index.size() == Lq, "deformable: map_index size mismatch");
  const std::size_t dh = C / heads;
  const std::size_t HP = heads * n_points;
  const std::size_t stride = H * W * Cm;

  std::vector<double> attn(Lq * HP);
  std::vector<double> samples(Lq * HP * Cm, 0.0);
  std::vector<double> blend(Lq * heads * Cm, 0.0);
  std::vector<detail::BilinearTap> taps(Lq * HP);
  std::vector<std::size_t> base(Lq, 0);
  std::vector<double> y(Lq * C, 0.0);
  const auto ov = offsets.values(), lv = logits.values(), mv = maps.values(), wv = value_w.values();

  for (std::size_t q = 0; q < Lq; ++q) {
    const std::size_t b = map_index.empty() ? 0 : static_cast<std::size_t>(map_index[q]);
    detail::require(b < B, "deformable: map index out of range");
    base[q] = b * stride;
    for (std::size_t h = 0; h < heads; ++h) {
      double* a = &attn[q * HP + h * n_points];
      double mx = -std::numeric_limits<double>::infinity();
      for (std::size_t p = 0; p < n_points; ++p) mx = std::max(mx, lv[q * HP + h * n_points + p]);
      double z = 0.0;
      for (std::size_t p = 0; p < n_points; ++p) z += (a[p] = std::exp(lv[q * HP + h * n_points + p] - mx));
      for (std::size_t p = 0; p < n_points; ++p) a[p] /= z;
      double* bl = &blend[(q * heads + h) * Cm];
      for (std::size_t p = 0; p < n_points; ++p) {
        const std::size_t hp = h * n_points + p;
        const double x = refs[2 * q] + ov[q * HP * 2 + 2 * hp];
        const double yy = refs[2 * q + 1] + ov[q * HP * 2 + 2 * hp + 1];
        auto& t = taps[q * HP + hp];
        t = detail::bilinear_taps(x, yy, H, W, Cm);
        double* s = &samples[(q * HP + hp) * Cm];
        for (int k = 0; k < 4; ++k) {
          if (!t.inside[k] || t.weight[k] == 0.0) continue;
          const double* src = &mv[base[q] + t.offset[k]];
          for (std::size_t c = 0; c < Cm; ++c) s[c] += t.weight[k] * src[c];
        }
        for (std::size_t c = 0; c < Cm; ++c) bl[c] += a[p] * s[c];
      }
      for (std::size_t c = 0; c < Cm; ++c) {
        const double bc = bl[c];
        if (bc == 0.0) continue;
        const double* wr = &wv[c * C + h * dh];
        for (std::size_t d = 0; d < dh; ++d) y[q * C + h * dh + d] += bc * wr[d];
      }
    }
  }
  if (probe) {
    probe->rows.clear();
    for (std::size_t r = 0; r < Lq * heads; ++r)
      probe->rows.emplace_back(attn.begin() + static_cast<long>(r * n_points),
                               attn.begin() + static_cast<long>((r + 1) * n_points));
  }

  Node* on = offsets.node();
  Node* ln = logits.node();
  Node* mn = maps.node();
  Node* wn = value_w.node();
  return make_result(
      {Lq, C}, std::move(y), {offsets, logits, maps, value_w},
      [on, ln, mn, wn, attn = std::move(attn), samples = std::move(samples), blend = std::move(blend),
       taps = std::move(taps), base = std::move(base), Lq, heads, n_points, Cm, C, dh,
       HP](const std::vector<double>& g) {
        std::vector<double> dblend(Cm);
        std::vector<double> ds(Cm);
        for (std::size_t q = 0; q < Lq; ++q) {
          for (std::size_t h = 0; h < heads; ++h) {
            const double* gq = &g[q * C + h * dh];
            const double* bl = &blend[(q * heads + h) * Cm];
            for (std::size_t c = 0; c < Cm; ++c) {
              const double* wr = &wn->value[c * C + h * dh];
              double s = 0.0;
              for (std::size_t d = 0; d < dh; ++d) s += gq[d] * wr[d];
              dblend[c] = s;
              if (wn->requires_grad && bl[c] != 0.0)
                for (std::size_t d = 0; d < dh; ++d) wn->grad[c * C + h * dh + d] += bl[c] * gq[d];
            }
            const double* a = &attn[q * HP + h * n_points];
            // d(attn_p) = dblend . sample_p ; softmax backward into logits
            double dot = 0.0;
            std::vector<double> da(n_points, 0.0);
            for (std::size_t p = 0; p < n_points; ++p) {
              const double* s = &samples[(q * HP + h * n_points + p) * Cm];
              double v = 0.0;
              for (std::size_t c = 0; c < Cm; ++c) v += dblend[c] * s[c];
              da[p] = v;
              dot += a[p] * v;
            }
            if (ln->requires_grad)
              for (std::size_t p = 0; p < n_points; ++p) ln->grad[q * HP + h * n_points + p] += a[p] * (da[p] - dot);
            for (std::size_t p = 0; p < n_points; ++p) {
              const std::size_t hp = h * n_points + p;
              const auto& t = taps[q * HP + hp];
              for (std::size_t c = 0; c < Cm; ++c) ds[c] = a[p] * dblend[c];
              double gx = 0.0, gy = 0.0;
              for (int k = 0; k < 4; ++k) {
                if (!t.inside[k]) continue;
                const std::size_t off = base[q] + t.offset[k];
                if (mn->requires_grad && t.weight[k] != 0.0)
                  for (std::size_t c = 0; c < Cm; ++c) mn->grad[off + c] += t.weight[k] * ds[c];
                if (on->requires_grad) {
                  double v = 0.0;
                  for (std::size_t c = 0; c < Cm; ++c) v += ds[c] * mn->value[off + c];
                  gx += t.dwx[k] * v;
                  gy += t.dwy[k] * v;
                }
              }
              if (on->requires_grad) {
                on->grad[q * HP * 2 + 2 * hp] += gx;
                on->grad[q * HP * 2 + 2 * hp + 1] += gy;
              }
            }
          }
        }
      });
}

/// Weights of a deformable attention block. Offset and weight-logit weights
/// start at zero; offset biases start on a small per-head ring so the points of
/// a head sample distinct cells from the first step.
struct DeformParams {
  Tensor w_off, b_off, w_logit, b_logit, w_value, wo, bo;

  static DeformParams create(ParameterStore& store, const std::string& prefix, std::size_t channels,
                             std::size_t map_channels, std::size_t heads, std::size_t n_points,
                             double ring_radius = 1.0) {
    DeformParams p;
    p.w_off = store.constant(prefix + ".w_off", {channels, heads * n_points * 2}, 0.0);
    std::vector<double> ring(heads * n_points * 2);
    for (std::size_t h = 0; h < heads; ++h) {
      const double theta = 2.0 * 3.14159265358979323846 * static_cast<double>(h) / static_cast<double>(heads);
      for (std::size_t k = 0; k < n_points; ++k) {
        const double rad = ring_radius * static_cast<double>(k + 1) / static_cast<double>(n_points);
        ring[2 * (h * n_points + k)] = rad * std::cos(theta);
        ring[2 * (h * n_points + k) + 1] = rad * std::sin(theta);
      }
    }
    p.b_off = store.add(prefix + ".b_off", {heads * n_points * 2}, std::move(ring));
    p.w_logit = store.constant(prefix + ".w_logit", {channels, heads * n_points}, 0.0);
    p.b_logit = store.constant(prefix + ".b_logit", {heads * n_points}, 0.0);
    p.w_value = store.xavier(prefix + ".w_value", map_channels, channels);
    p.wo = store.xavier(prefix + ".wo", channels, channels);
    p.bo = store.constant(prefix + ".bo", {channels}, 0.0);
    return p;
  }
};

/// Deformable multi-head cross-attention of queries q [Lq, C] into maps.
/// refs holds (x, y) per query in map cell coordinates.
inline Tensor deformable_cross_attention(const Tensor& q, const std::vector<double>& refs, const Tensor& maps,
                                         const std::vector<int>& map_index, const DeformParams& p, std::size_t heads,
                                         std::size_t n_points, AttentionProbe* probe = nullptr) {
  const Tensor offsets = linear(q, p.w_off, p.b_off);
  const Tensor logits = linear(q, p.w_logit, p.b_logit);
  return linear(deformable_core(offsets, logits, maps, map_index, refs, p.w_value, heads, n_points, probe), p.wo, p.bo);
}

}  // namespace craft::tc
