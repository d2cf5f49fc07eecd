#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

#include <Eigen/Dense>

#include "craft/tensor.hpp"

namespace craft::tc {

namespace detail {
inline void require(bool ok, const std::string& msg) {
  if (!ok) throw ShapeError(msg);
}
inline Shape with_last(Shape s, std::size_t last) {
  if (s.empty()) s.push_back(last);
  else s.back() = last;
  return s;
}
}  // namespace detail

/// y = x W + b over the last dimension of x. W is [in, out], b is [out] or undefined.
inline Tensor linear(const Tensor& x, const Tensor& W, const Tensor& b = {}) {
  detail::require(W.rank() == 2, "linear: weight must be rank 2");
  const std::size_t in = W.dim(0), out = W.dim(1);
  detail::require(x.cols() == in, "linear: input " + shape_str(x.shape()) + " vs weight " + shape_str(W.shape()));
  detail::require(!b.defined() || b.size() == out, "linear: bias size mismatch");
  const std::size_t n = x.rows();
  using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
  using CMap = Eigen::Map<const RowMat>;
  using MMap = Eigen::Map<RowMat>;
  std::vector<double> y(n * out, 0.0);
  if (n > 0) {
    MMap Y(y.data(), static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(out));
    Y.noalias() = CMap(x.values().data(), n, in) * CMap(W.values().data(), in, out);
    if (b.defined()) Y.rowwise() += Eigen::Map<const Eigen::RowVectorXd>(b.values().data(), out);
  }
  std::vector<Tensor> inputs{x, W};
  if (b.defined()) inputs.push_back(b);
  Node* xn = x.node();
  Node* wn = W.node();
  Node* bn = b.defined() ? b.node() : nullptr;
  return make_result(detail::with_last(x.shape(), out), std::move(y), inputs,
                     [xn, wn, bn, n, in, out](const std::vector<double>& g) {
                       if (n == 0) return;
                       const CMap G(g.data(), n, out);
                       if (xn->requires_grad)
                         MMap(xn->grad.data(), n, in).noalias() += G * CMap(wn->value.data(), in, out).transpose();
                       if (wn->requires_grad)
                         MMap(wn->grad.data(), in, out).noalias() += CMap(xn->value.data(), n, in).transpose() * G;
                       if (bn && bn->requires_grad)
                         Eigen::Map<Eigen::RowVectorXd>(bn->grad.data(), out) += G.colwise().sum();
                     });
}

inline Tensor add(const Tensor& a, const Tensor& b) {
  detail::require(a.size() == b.size(), "add: size mismatch " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  std::vector<double> y(a.size());
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = a[i] + b[i];
  Node* an = a.node();
  Node* bn = b.node();
  return make_result(a.shape(), std::move(y), {a, b}, [an, bn](const std::vector<double>& g) {
    if (an->requires_grad)
      for (std::size_t i = 0; i < g.size(); ++i) an->grad[i] += g[i];
    if (bn->requires_grad)
      for (std::size_t i = 0; i < g.size(); ++i) bn->grad[i] += g[i];
  });
}

inline Tensor mul(const Tensor& a, const Tensor& b) {
  detail::require(a.size() == b.size(), "mul: size mismatch");
  std::vector<double> y(a.size());
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = a[i] * b[i];
  Node* an = a.node();
  Node* bn = b.node();
  return make_result(a.shape(), std::move(y), {a, b}, [an, bn](const std::vector<double>& g) {
    if (an->requires_grad)
      for (std::size_t i = 0; i < g.size(); ++i) an->grad[i] += g[i] * bn->value[i];
    if (bn->requires_grad)
      for (std::size_t i = 0; i < g.size(); ++i) bn->grad[i] += g[i] * an->value[i];
  });
}

/// x + r broadcast over rows; r has x.cols() elements.
inline Tensor add_row(const Tensor& x, const Tensor& r) {
  const std::size_t c = x.cols(), n = x.rows();
  detail::require(r.size() == c, "add_row: row size mismatch");
  std::vector<double> y(x.size());
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < c; ++j) y[i * c + j] = x[i * c + j] + r[j];
  Node* xn = x.node();
  Node* rn = r.node();
  return make_result(x.shape(), std::move(y), {x, r}, [xn, rn, n, c](const std::vector<double>& g) {
    if (xn->requires_grad)
      for (std::size_t i = 0; i < g.size(); ++i) xn->grad[i] += g[i];
    if (rn->requires_grad)
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < c; ++j) rn->grad[j] += g[i * c + j];
  });
}

inline Tensor scale(const Tensor& x, double s) {
  std::vector<double> y(x.size());
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = s * x[i];
  Node* xn = x.node();
  return make_result(x.shape(), std::move(y), {x}, [xn, s](const std::vector<double>& g) {
    for (std::size_t i = 0; i < g.size(); ++i) xn->grad[i] += s * g[i];
  });
}

inline Tensor relu(const Tensor& x) {
  std::vector<double> y(x.size());
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = x[i] > 0.0 ? x[i] : 0.0;
  Node* xn = x.node();
  return make_result(x.shape(), std::move(y), {x}, [xn](const std::vector<double>& g) {
    for (std::size_t i = 0; i < g.size(); ++i)
      if (xn->value[i] > 0.0) xn->grad[i] += g[i];
  });
}

inline double sigmoid_value(double v) {
  if (v >= 0.0) return 1.0 / (1.0 + std::exp(-v));
  const double e = std::exp(v);
  return e / (1.0 + e);
}

inline Tensor sigmoid(const Tensor& x) {
  std::vector<double> y(x.size());
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = sigmoid_value(x[i]);
  Node* xn = x.node();
  auto yc = y;
  return make_result(x.shape(), std::move(y), {x}, [xn, yc = std::move(yc)](const std::vector<double>& g) {
    for (std::size_t i = 0; i < g.size(); ++i) xn->grad[i] += g[i] * yc[i] * (1.0 - yc[i]);
  });
}

/// Row softmax over the last dimension with max subtraction.
inline Tensor softmax(const Tensor& x) {
  const std::size_t c = x.cols(), n = x.rows();
  detail::require(c >= 1, "softmax: empty rows");
  std::vector<double> y(x.size());
  for (std::size_t r = 0; r < n; ++r) {
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < c; ++j) mx = std::max(mx, x[r * c + j]);
    double s = 0.0;
    for (std::size_t j = 0; j < c; ++j) s += (y[r * c + j] = std::exp(x[r * c + j] - mx));
    for (std::size_t j = 0; j < c; ++j) y[r * c + j] /= s;
  }
  Node* xn = x.node();
  auto yc = y;
  return make_result(x.shape(), std::move(y), {x}, [xn, yc = std::move(yc), n, c](const std::vector<double>& g) {
    for (std::size_t r = 0; r < n; ++r) {
      double dot = 0.0;
      for (std::size_t j = 0; j < c; ++j) dot += g[r * c + j] * yc[r * c + j];
      for (std::size_t j = 0; j < c; ++j) xn->grad[r * c + j] += yc[r * c + j] * (g[r * c + j] - dot);
    }
  });
}

/// Per-row normalization over the last dimension followed by gain/bias.
inline Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, double eps = 1e-5) {
  const std::size_t c = x.cols(), n = x.rows();
  detail::require(c >= 1 && gain.size() == c && bias.size() == c, "layer_norm: parameter size mismatch");
  std::vector<double> y(x.size()), xhat(x.size()), inv_std(n);
  for (std::size_t r = 0; r < n; ++r) {
    double mean = 0.0;
    for (std::size_t j = 0; j < c; ++j) mean += x[r * c + j];
    mean /= static_cast<double>(c);
    double var = 0.0;
    for (std::size_t j = 0; j < c; ++j) var += (x[r * c + j] - mean) * (x[r * c + j] - mean);
    var /= static_cast<double>(c);
    inv_std[r] = 1.0 / std::sqrt(var + eps);
    for (std::size_t j = 0; j < c; ++j) {
      xhat[r * c + j] = (x[r * c + j] - mean) * inv_std[r];
      y[r * c + j] = gain[j] * xhat[r * c + j] + bias[j];
    }
  }
  Node* xn = x.node();
  Node* gn = gain.node();
  Node* bn = bias.node();
  return make_result(x.shape(), std::move(y), {x, gain, bias},
                     [xn, gn, bn, xhat = std::move(xhat), inv_std = std::move(inv_std), n,
                      c](const std::vector<double>& g) {
                       const double cd = static_cast<double>(c);
                       for (std::size_t r = 0; r < n; ++r) {
                         if (gn->requires_grad)
                           for (std::size_t j = 0; j < c; ++j) gn->grad[j] += g[r * c + j] * xhat[r * c + j];
                         if (bn->requires_grad)
                           for (std::size_t j = 0; j < c; ++j) bn->grad[j] += g[r * c + j];
                         if (xn->requires_grad) {
                           double s1 = 0.0, s2 = 0.0;
                           for (std::size_t j = 0; j < c; ++j) {
                             const double gh = g[r * c + j] * gn->value[j];
                             s1 += gh;
                             s2 += gh * xhat[r * c + j];
                           }
                           for (std::size_t j = 0; j < c; ++j) {
                             const double gh = g[r * c + j] * gn->value[j];
                             xn->grad[r * c + j] += inv_std[r] * (gh - s1 / cd - xhat[r * c + j] * s2 / cd);
                           }
                         }
                       }
                     });
}

inline Tensor sum(const Tensor& x) {
  double s = 0.0;
  for (double v : x.values()) s += v;
  Node* xn = x.node();
  return make_result({1}, {s}, {x}, [xn](const std::vector<double>& g) {
    for (auto& v : xn->grad) v += g[0];
  });
}

inline Tensor mean(const Tensor& x) {
  detail::require(x.size() > 0, "mean: empty tensor");
  return scale(sum(x), 1.0 / static_cast<double>(x.size()));
}

inline Tensor reshape(const Tensor& x, Shape shape) {
  detail::require(numel(shape) == x.size(), "reshape: element count mismatch");
  std::vector<double> y(x.values().begin(), x.values().end());
  Node* xn = x.node();
  return make_result(std::move(shape), std::move(y), {x}, [xn](const std::vector<double>& g) {
    for (std::size_t i = 0; i < g.size(); ++i) xn->grad[i] += g[i];
  });
}

/// Rows of x selected by index (repeats allowed); gradients scatter-add back.
inline Tensor gather_rows(const Tensor& x, const std::vector<int>& idx) {
  const std::size_t c = x.cols(), n = x.rows();
  std::vector<double> y(idx.size() * c);
  for (std::size_t k = 0; k < idx.size(); ++k) {
    detail::require(idx[k] >= 0 && static_cast<std::size_t>(idx[k]) < n, "gather_rows: index out of range");
    std::copy_n(&x.values()[static_cast<std::size_t>(idx[k]) * c], c, &y[k * c]);
  }
  Node* xn = x.node();
  return make_result({idx.size(), c}, std::move(y), {x}, [xn, idx, c](const std::vector<double>& g) {
    for (std::size_t k = 0; k < idx.size(); ++k)
      for (std::size_t j = 0; j < c; ++j) xn->grad[static_cast<std::size_t>(idx[k]) * c + j] += g[k * c + j];
  });
}

/// Column-wise concatenation of row-aligned 2D tensors.
inline Tensor concat_cols(const std::vector<Tensor>& parts) {
  detail::require(!parts.empty(), "concat_cols: nothing to concatenate");
  const std::size_t n = parts[0].rows();
  std::vector<std::size_t> widths;
  std::size_t total = 0;
  for (const auto& p : parts) {
    detail::require(p.rows() == n, "concat_cols: row count mismatch");
    widths.push_back(p.cols());
    total += p.cols();
  }
  std::vector<double> y(n * total);
  std::size_t off = 0;
  for (std::size_t k = 0; k < parts.size(); ++k) {
    for (std::size_t r = 0; r < n; ++r)
      for (std::size_t j = 0; j < widths[k]; ++j) y[r * total + off + j] = parts[k][r * widths[k] + j];
    off += widths[k];
  }
  std::vector<Node*> nodes;
  for (const auto& p : parts) nodes.push_back(p.node());
  return make_result({n, total}, std::move(y), parts, [nodes, widths, n, total](const std::vector<double>& g) {
    std::size_t off = 0;
    for (std::size_t k = 0; k < nodes.size(); ++k) {
      if (nodes[k]->requires_grad)
        for (std::size_t r = 0; r < n; ++r)
          for (std::size_t j = 0; j < widths[k]; ++j) nodes[k]->grad[r * widths[k] + j] += g[r * total + off + j];
      off += widths[k];
    }
  });
}

/// Row-wise concatenation of tensors with equal column counts.
inline Tensor concat_rows(const std::vector<Tensor>& parts) {
  detail::require(!parts.empty(), "concat_rows: nothing to concatenate");
  const std::size_t c = parts[0].cols();
  std::vector<double> y;
  std::size_t rows = 0;
  for (const auto& p : parts) {
    detail::require(p.cols() == c, "concat_rows: column mismatch");
    y.insert(y.end(), p.values().begin(), p.values().end());
    rows += p.rows();
  }
  std::vector<Node*> nodes;
  for (const auto& p : parts) nodes.push_back(p.node());
  return make_result({rows, c}, std::move(y), parts, [nodes](const std::vector<double>& g) {
    std::size_t off = 0;
    for (Node* nd : nodes) {
      if (nd->requires_grad)
        for (std::size_t i = 0; i < nd->value.size(); ++i) nd->grad[i] += g[off + i];
      off += nd->value.size();
    }
  });
}

/// Max over consecutive groups of `group` rows: [N*group, C] -> [N, C].
inline Tensor max_pool_groups(const Tensor& x, std::size_t group) {
  const std::size_t c = x.cols();
  detail::require(group >= 1 && x.rows() % group == 0, "max_pool_groups: rows not divisible by group");
  const std::size_t n = x.rows() / group;
  std::vector<double> y(n * c);
  std::vector<std::size_t> arg(n * c);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < c; ++j) {
      std::size_t best = i * group * c + j;
      for (std::size_t s = 1; s < group; ++s) {
        const std::size_t k = (i * group + s) * c + j;
        if (x[k] > x[best]) best = k;
      }
      y[i * c + j] = x[best];
      arg[i * c + j] = best;
    }
  Node* xn = x.node();
  return make_result({n, c}, std::move(y), {x}, [xn, arg = std::move(arg)](const std::vector<double>& g) {
    for (std::size_t i = 0; i < g.size(); ++i) xn->grad[arg[i]] += g[i];
  });
}

/// For row r, the k columns of block block_of[r]: [N, B*k] -> [N, k].
inline Tensor select_blocks(const Tensor& x, const std::vector<int>& block_of, std::size_t k) {
  const std::size_t c = x.cols(), n = x.rows();
  detail::require(block_of.size() == n && k >= 1 && c % k == 0, "select_blocks: shape mismatch");
  std::vector<double> y(n * k);
  for (std::size_t r = 0; r < n; ++r) {
    detail::require(block_of[r] >= 0 && static_cast<std::size_t>(block_of[r]) * k < c, "select_blocks: bad block");
    for (std::size_t j = 0; j < k; ++j) y[r * k + j] = x[r * c + static_cast<std::size_t>(block_of[r]) * k + j];
  }
  Node* xn = x.node();
  return make_result({n, k}, std::move(y), {x}, [xn, block_of, k, c, n](const std::vector<double>& g) {
    for (std::size_t r = 0; r < n; ++r)
      for (std::size_t j = 0; j < k; ++j) xn->grad[r * c + static_cast<std::size_t>(block_of[r]) * k + j] += g[r * k + j];
  });
}

/// Column j of a 2D tensor as a flat vector.
inline Tensor column(const Tensor& x, std::size_t j) {
  const std::size_t c = x.cols(), n = x.rows();
  detail::require(j < c, "column: index out of range");
  std::vector<double> y(n);
  for (std::size_t r = 0; r < n; ++r) y[r] = x[r * c + j];
  Node* xn = x.node();
  return make_result({n}, std::move(y), {x}, [xn, j, c, n](const std::vector<double>& g) {
    for (std::size_t r = 0; r < n; ++r) xn->grad[r * c + j] += g[r];
  });
}

/// Sum over i of w_i * BCE(sigmoid(logit_i), target_i), computed from logits.
inline Tensor bce_with_logits_sum(const Tensor& logits, const std::vector<double>& targets,
                                  const std::vector<double>& weights) {
  const std::size_t n = logits.size();
  detail::require(targets.size() == n && weights.size() == n, "bce: size mismatch");
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double z = logits[i];
    // max(z,0) - z t + log(1 + exp(-|z|))
    s += weights[i] * (std::max(z, 0.0) - z * targets[i] + std::log1p(std::exp(-std::abs(z))));
  }
  Node* ln = logits.node();
  return make_result({1}, {s}, {logits}, [ln, targets, weights](const std::vector<double>& g) {
    for (std::size_t i = 0; i < targets.size(); ++i)
      ln->grad[i] += g[0] * weights[i] * (sigmoid_value(ln->value[i]) - targets[i]);
  });
}

/// Sum over i of w_i * |pred_i - target_i|. The subgradient at zero is 0.
inline Tensor l1_sum(const Tensor& pred, const std::vector<double>& targets, const std::vector<double>& weights) {
  const std::size_t n = pred.size();
  detail::require(targets.size() == n && weights.size() == n, "l1: size mismatch");
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i) s += weights[i] * std::abs(pred[i] - targets[i]);
  Node* pn = pred.node();
  return make_result({1}, {s}, {pred}, [pn, targets, weights](const std::vector<double>& g) {
    for (std::size_t i = 0; i < targets.size(); ++i) {
      const double d = pn->value[i] - targets[i];
      pn->grad[i] += g[0] * weights[i] * (d > 0.0 ? 1.0 : (d < 0.0 ? -1.0 : 0.0));
    }
  });
}

// ---------------------------------------------------------------------------
// Bilinear sampling

namespace detail {
struct BilinearTap {
  std::size_t offset[4];
  double weight[4];
  bool inside[4];
  // derivatives of the four weights w.r.t. x and y
  double dwx[4];
  double dwy[4];
};

/// Taps for location (x, y) on an H x W grid; x indexes columns.
inline BilinearTap bilinear_taps(double x, double y, std::size_t H, std::size_t W, std::size_t C) {
  BilinearTap t{};
  const double fx = std::floor(x), fy = std::floor(y);
  const double ax = x - fx, ay = y - fy;
  const long x0 = static_cast<long>(fx), y0 = static_cast<long>(fy);
  const long xs[4] = {x0, x0 + 1, x0, x0 + 1};
  const long ys[4] = {y0, y0, y0 + 1, y0 + 1};
  const double w[4] = {(1 - ax) * (1 - ay), ax * (1 - ay), (1 - ax) * ay, ax * ay};
  const double dx[4] = {-(1 - ay), (1 - ay), -ay, ay};
  const double dy[4] = {-(1 - ax), -ax, (1 - ax), ax};
  for (int k = 0; k < 4; ++k) {
    t.inside[k] = xs[k] >= 0 && ys[k] >= 0 && xs[k] < static_cast<long>(W) && ys[k] < static_cast<long>(H);
    t.offset[k] = t.inside[k] ? (static_cast<std::size_t>(ys[k]) * W + static_cast<std::size_t>(xs[k])) * C : 0;
    t.weight[k] = w[k];
    t.dwx[k] = dx[k];
    t.dwy[k] = dy[k];
  }
  return t;
}
}  // namespace detail

/// Samples maps [B, H, W, C] (or a single [H, W, C]) at locs [n, 2] holding
/// (x, y) in cell units, picking map map_index[i] for row i (all zero when
/// map_index is empty). Neighbours outside the grid contribute zero.
/// Gradients flow to the maps and to the locations.
inline Tensor bilinear_sample(const Tensor& maps, const Tensor& locs, const std::vector<int>& map_index = {}) {
  detail::require(maps.rank() == 3 || maps.rank() == 4, "bilinear_sample: map must be [H,W,C] or [B,H,W,C]");
  const bool batched = maps.rank() == 4;
  const std::size_t B = batched ? maps.dim(0) : 1;
  const std::size_t H = maps.dim(batched ? 1 : 0), W = maps.dim(batched ? 2 : 1), C = maps.dim(batched ? 3 : 2);
  detail::require(locs.cols() == 2, "bilinear_sample: locations must be [n,2]");
  const std::size_t n = locs.rows();
  detail::require(map_index.empty() || map_index.size() == n, "bilinear_sample: map_index size mismatch");
  const std::size_t map_stride = H * W * C;
  std::vector<double> y(n * C, 0.0);
  std::vector<detail::BilinearTap> taps(n);
  std::vector<std::size_t> base(n, 0);
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t b = map_index.empty() ? 0 : static_cast<std::size_t>(map_index[i]);
    detail::require(b < B, "bilinear_sample: map index out of range");
    base[i] = b * map_stride;
    taps[i] = detail::bilinear_taps(locs[2 * i], locs[2 * i + 1], H, W, C);
    for (int k = 0; k < 4; ++k) {
      if (!taps[i].inside[k] || taps[i].weight[k] == 0.0) continue;
      const double* src = &maps.values()[base[i] + taps[i].offset[k]];
      for (std::size_t c = 0; c < C; ++c) y[i * C + c] += taps[i].weight[k] * src[c];
    }
  }
  Node* mn = maps.node();
  Node* ln = locs.node();
  return make_result({n, C}, std::move(y), {maps, locs},
                     [mn, ln, taps = std::move(taps), base = std::move(base), n, C](const std::vector<double>& g) {
                       for (std::size_t i = 0; i < n; ++i) {
                         const auto& t = taps[i];
                         double gx = 0.0, gy = 0.0;
                         for (int k = 0; k < 4; ++k) {
                           if (!t.inside[k]) continue;
                           const std::size_t off = base[i] + t.offset[k];
                           if (mn->requires_grad)
                             for (std::size_t c = 0; c < C; ++c) mn->grad[off + c] += t.weight[k] * g[i * C + c];
                           if (ln->requires_grad) {
                             double dot = 0.0;
                             for (std::size_t c = 0; c < C; ++c) dot += g[i * C + c] * mn->value[off + c];
                             gx += t.dwx[k] * dot;
                             gy += t.dwy[k] * dot;
                           }
                         }
                         if (ln->requires_grad) {
                           ln->grad[2 * i] += gx;
                           ln->grad[2 * i + 1] += gy;
                         }
                       }
                     });
}

}  // namespace craft::tc
