#pragma once

// Scalar-templated network evaluation. Instantiated with double for losses
// and gradients, and with Dual for Hessian-vector products. Loop order is
// fixed everywhere; outputs are bitwise deterministic for fixed inputs.

#include <array>
#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include "prunelab/dual.hpp"
#include "prunelab/errors.hpp"
#include "prunelab/model.hpp"

namespace prunelab::detail {

template <typename T>
T activate(T x, Activation a) {
  return a == Activation::relu ? relu(x) : tanh(x);
}

// Derivative of the activation expressed through the activation value.
template <typename T>
T activate_deriv_from_value(T a, Activation act) {
  if (act == Activation::relu) return value_of(a) > 0.0 ? T{1.0} : T{0.0};
  return T{1.0} - a * a;
}

template <typename T>
void check_layer_finite(const std::vector<T>& xs, const std::string& layer) {
  for (const T& x : xs)
    if (!is_finite(x)) fail("non-finite intermediate in layer " + layer);
}

// Mean cross-entropy and misclassification over a logits matrix
// (examples x classes). If dlogits is non-null it receives dLoss/dlogits.
template <typename T>
LossStats softmax_xent(const std::vector<T>& logits, const std::vector<int>& labels,
                       int examples, int classes, std::vector<T>* dlogits) {
  T total{0.0};
  int miss = 0;
  if (dlogits) dlogits->assign(logits.size(), T{0.0});
  for (int e = 0; e < examples; ++e) {
    const T* z = logits.data() + static_cast<std::size_t>(e) * classes;
    int pred = 0;
    T zmax = z[0];
    for (int c = 1; c < classes; ++c) {
      if (value_of(z[c]) > value_of(zmax)) {
        zmax = z[c];
        pred = c;
      }
    }
    T sum{0.0};
    for (int c = 0; c < classes; ++c) sum += exp(z[c] - zmax);
    const T lse = zmax + log(sum);
    total += lse - z[labels[e]];
    if (pred != labels[e]) ++miss;
    if (dlogits) {
      T* dz = dlogits->data() + static_cast<std::size_t>(e) * classes;
      for (int c = 0; c < classes; ++c) {
        dz[c] = exp(z[c] - lse);
        if (c == labels[e]) dz[c] -= T{1.0};
      }
    }
  }
  const T inv{1.0 / examples};
  if (dlogits)
    for (T& x : *dlogits) x *= inv;
  LossStats out;
  out.loss = value_of(total * inv);
  out.error = static_cast<double>(miss) / examples;
  return out;
}

// y[e][o] = b[o] + sum_i x[e][i] * W[o][i]
template <typename T>
void dense_forward(const std::vector<T>& x, const T* W, const T* b, int examples,
                   int in, int out, std::vector<T>& y) {
  y.assign(static_cast<std::size_t>(examples) * out, T{0.0});
  for (int e = 0; e < examples; ++e) {
    const T* xe = x.data() + static_cast<std::size_t>(e) * in;
    T* ye = y.data() + static_cast<std::size_t>(e) * out;
    for (int o = 0; o < out; ++o) {
      T acc = b[o];
      const T* w = W + static_cast<std::size_t>(o) * in;
      for (int i = 0; i < in; ++i) acc += w[i] * xe[i];
      ye[o] = acc;
    }
  }
}

template <typename T>
void dense_backward(const std::vector<T>& x, const T* W, const std::vector<T>& dy,
                    int examples, int in, int out, T* dW, T* db, std::vector<T>* dx) {
  for (int e = 0; e < examples; ++e) {
    const T* xe = x.data() + static_cast<std::size_t>(e) * in;
    const T* de = dy.data() + static_cast<std::size_t>(e) * out;
    for (int o = 0; o < out; ++o) {
      T* gw = dW + static_cast<std::size_t>(o) * in;
      for (int i = 0; i < in; ++i) gw[i] += de[o] * xe[i];
      db[o] += de[o];
    }
  }
  if (dx) {
    dx->assign(static_cast<std::size_t>(examples) * in, T{0.0});
    for (int e = 0; e < examples; ++e) {
      const T* de = dy.data() + static_cast<std::size_t>(e) * out;
      T* dxe = dx->data() + static_cast<std::size_t>(e) * in;
      for (int o = 0; o < out; ++o) {
        const T* w = W + static_cast<std::size_t>(o) * in;
        for (int i = 0; i < in; ++i) dxe[i] += de[o] * w[i];
      }
    }
  }
}

// 3x3 convolution, stride 1, zero padding 1. Layout: [channel][row][col].
template <typename T>
void conv3_forward(const std::vector<T>& x, const T* K, const T* b, int examples,
                   int cin, int cout, int h, int w, std::vector<T>& y) {
  const std::size_t in_stride = static_cast<std::size_t>(cin) * h * w;
  const std::size_t out_stride = static_cast<std::size_t>(cout) * h * w;
  y.assign(static_cast<std::size_t>(examples) * out_stride, T{0.0});
  for (int e = 0; e < examples; ++e) {
    const T* xe = x.data() + e * in_stride;
    T* ye = y.data() + e * out_stride;
    for (int co = 0; co < cout; ++co) {
      for (int yy = 0; yy < h; ++yy) {
        for (int xx = 0; xx < w; ++xx) {
          T acc = b[co];
          for (int ci = 0; ci < cin; ++ci) {
            const T* k = K + (((static_cast<std::size_t>(co) * cin) + ci) * 9);
            const T* plane = xe + static_cast<std::size_t>(ci) * h * w;
            for (int dy = -1; dy <= 1; ++dy) {
              const int sy = yy + dy;
              if (sy < 0 || sy >= h) continue;
              for (int dx = -1; dx <= 1; ++dx) {
                const int sx = xx + dx;
                if (sx < 0 || sx >= w) continue;
                acc += k[(dy + 1) * 3 + (dx + 1)] * plane[sy * w + sx];
              }
            }
          }
          ye[(static_cast<std::size_t>(co) * h + yy) * w + xx] = acc;
        }
      }
    }
  }
}

template <typename T>
void conv3_backward(const std::vector<T>& x, const T* K, const std::vector<T>& dy,
                    int examples, int cin, int cout, int h, int w, T* dK, T* db,
                    std::vector<T>* dx) {
  const std::size_t in_stride = static_cast<std::size_t>(cin) * h * w;
  const std::size_t out_stride = static_cast<std::size_t>(cout) * h * w;
  if (dx) dx->assign(static_cast<std::size_t>(examples) * in_stride, T{0.0});
  for (int e = 0; e < examples; ++e) {
    const T* xe = x.data() + e * in_stride;
    const T* de = dy.data() + e * out_stride;
    T* dxe = dx ? dx->data() + e * in_stride : nullptr;
    for (int co = 0; co < cout; ++co) {
      for (int yy = 0; yy < h; ++yy) {
        for (int xx = 0; xx < w; ++xx) {
          const T g = de[(static_cast<std::size_t>(co) * h + yy) * w + xx];
          db[co] += g;
          for (int ci = 0; ci < cin; ++ci) {
            const std::size_t kbase = ((static_cast<std::size_t>(co) * cin) + ci) * 9;
            const T* plane = xe + static_cast<std::size_t>(ci) * h * w;
            for (int dyk = -1; dyk <= 1; ++dyk) {
              const int sy = yy + dyk;
              if (sy < 0 || sy >= h) continue;
              for (int dxk = -1; dxk <= 1; ++dxk) {
                const int sx = xx + dxk;
                if (sx < 0 || sx >= w) continue;
                const std::size_t ki = kbase + (dyk + 1) * 3 + (dxk + 1);
                dK[ki] += g * plane[sy * w + sx];
                if (dxe)
                  dxe[static_cast<std::size_t>(ci) * h * w + sy * w + sx] += g * K[ki];
              }
            }
          }
        }
      }
    }
  }
}

// 2x2 average pooling, stride 2; h and w must be even.
template <typename T>
void avgpool2_forward(const std::vector<T>& x, int examples, int c, int h, int w,
                      std::vector<T>& y) {
  const int ho = h / 2, wo = w / 2;
  y.assign(static_cast<std::size_t>(examples) * c * ho * wo, T{0.0});
  const T quarter{0.25};
  for (int e = 0; e < examples; ++e) {
    for (int ch = 0; ch < c; ++ch) {
      const T* plane = x.data() + (static_cast<std::size_t>(e) * c + ch) * h * w;
      T* out = y.data() + (static_cast<std::size_t>(e) * c + ch) * ho * wo;
      for (int yy = 0; yy < ho; ++yy)
        for (int xx = 0; xx < wo; ++xx)
          out[yy * wo + xx] = quarter * (plane[(2 * yy) * w + 2 * xx] +
                                         plane[(2 * yy) * w + 2 * xx + 1] +
                                         plane[(2 * yy + 1) * w + 2 * xx] +
                                         plane[(2 * yy + 1) * w + 2 * xx + 1]);
    }
  }
}

template <typename T>
void avgpool2_backward(const std::vector<T>& dy, int examples, int c, int h, int w,
                       std::vector<T>& dx) {
  const int ho = h / 2, wo = w / 2;
  dx.assign(static_cast<std::size_t>(examples) * c * h * w, T{0.0});
  const T quarter{0.25};
  for (int e = 0; e < examples; ++e) {
    for (int ch = 0; ch < c; ++ch) {
      const T* g = dy.data() + (static_cast<std::size_t>(e) * c + ch) * ho * wo;
      T* out = dx.data() + (static_cast<std::size_t>(e) * c + ch) * h * w;
      for (int yy = 0; yy < ho; ++yy)
        for (int xx = 0; xx < wo; ++xx) {
          const T v = quarter * g[yy * wo + xx];
          out[(2 * yy) * w + 2 * xx] = v;
          out[(2 * yy) * w + 2 * xx + 1] = v;
          out[(2 * yy + 1) * w + 2 * xx] = v;
          out[(2 * yy + 1) * w + 2 * xx + 1] = v;
        }
    }
  }
}

// Full forward (+ optional backward) pass. `params` and `grad` are flat
// vectors laid out per the model's block table.
template <typename T>
LossStats net_eval(const ModelSpec& spec, const std::vector<LayerBlock>& blocks,
                   const std::vector<T>& params, const Batch& batch,
                   std::vector<T>* grad) {
  const int B = batch.examples;
  std::vector<std::vector<T>> acts;  // activation inputs of each stage
  acts.emplace_back(batch.inputs.begin(), batch.inputs.end());

  if (grad) grad->assign(params.size(), T{0.0});

  if (spec.kind == ArchKind::mlp) {
    std::vector<int> dims;
    dims.push_back(spec.input_dim);
    for (int hdim : spec.hidden) dims.push_back(hdim);
    dims.push_back(spec.classes);
    const int nlayers = static_cast<int>(dims.size()) - 1;

    std::vector<T> logits;
    for (int l = 0; l < nlayers; ++l) {
      const LayerBlock& wb = blocks[2 * l];
      const LayerBlock& bb = blocks[2 * l + 1];
      std::vector<T> z;
      dense_forward(acts.back(), params.data() + wb.offset, params.data() + bb.offset,
                    B, dims[l], dims[l + 1], z);
      if (l + 1 < nlayers) {
        for (T& v : z) v = activate(v, spec.activation);
        check_layer_finite(z, wb.name);
        acts.push_back(std::move(z));
      } else {
        check_layer_finite(z, wb.name);
        logits = std::move(z);
      }
    }

    std::vector<T> dlogits;
    LossStats stats =
        softmax_xent(logits, batch.labels, B, spec.classes, grad ? &dlogits : nullptr);
    if (!grad) return stats;

    std::vector<T> delta = std::move(dlogits);
    for (int l = nlayers - 1; l >= 0; --l) {
      const LayerBlock& wb = blocks[2 * l];
      const LayerBlock& bb = blocks[2 * l + 1];
      std::vector<T> dx;
      dense_backward(acts[l], params.data() + wb.offset, delta, B, dims[l], dims[l + 1],
                     grad->data() + wb.offset, grad->data() + bb.offset,
                     l > 0 ? &dx : nullptr);
      if (l > 0) {
        for (std::size_t i = 0; i < dx.size(); ++i)
          dx[i] *= activate_deriv_from_value(acts[l][i], spec.activation);
        delta = std::move(dx);
      }
    }
    return stats;
  }

  // conv: [conv3x3 -> act -> avgpool2] per hidden channel count, then dense.
  int h = spec.image_h, w = spec.image_w, c = spec.image_c;
  const int nconv = static_cast<int>(spec.hidden.size());
  std::vector<std::array<int, 3>> geom;  // input geometry of each conv stage
  std::vector<std::vector<T>> pre_pool;  // activated conv outputs (pool inputs)
  for (int l = 0; l < nconv; ++l) {
    const LayerBlock& kb = blocks[2 * l];
    const LayerBlock& bb = blocks[2 * l + 1];
    const int cout = spec.hidden[l];
    geom.push_back({c, h, w});
    std::vector<T> z;
    conv3_forward(acts.back(), params.data() + kb.offset, params.data() + bb.offset, B,
                  c, cout, h, w, z);
    for (T& v : z) v = activate(v, spec.activation);
    check_layer_finite(z, kb.name);
    std::vector<T> pooled;
    avgpool2_forward(z, B, cout, h, w, pooled);
    pre_pool.push_back(std::move(z));
    acts.push_back(std::move(pooled));
    c = cout;
    h /= 2;
    w /= 2;
  }
  const int fc_in = c * h * w;
  const LayerBlock& fwb = blocks[2 * nconv];
  const LayerBlock& fbb = blocks[2 * nconv + 1];
  std::vector<T> logits;
  dense_forward(acts.back(), params.data() + fwb.offset, params.data() + fbb.offset, B,
                fc_in, spec.classes, logits);
  check_layer_finite(logits, fwb.name);

  std::vector<T> dlogits;
  LossStats stats =
      softmax_xent(logits, batch.labels, B, spec.classes, grad ? &dlogits : nullptr);
  if (!grad) return stats;

  std::vector<T> delta;
  dense_backward(acts.back(), params.data() + fwb.offset, dlogits, B, fc_in,
                 spec.classes, grad->data() + fwb.offset, grad->data() + fbb.offset,
                 &delta);
  for (int l = nconv - 1; l >= 0; --l) {
    const LayerBlock& kb = blocks[2 * l];
    const LayerBlock& bb = blocks[2 * l + 1];
    const auto [ci, hi, wi] = geom[l];
    const int cout = spec.hidden[l];
    std::vector<T> dpool;
    avgpool2_backward(delta, B, cout, hi, wi, dpool);
    for (std::size_t i = 0; i < dpool.size(); ++i)
      dpool[i] *= activate_deriv_from_value(pre_pool[l][i], spec.activation);
    std::vector<T> dx;
    conv3_backward(acts[l], params.data() + kb.offset, dpool, B, ci, cout, hi, wi,
                   grad->data() + kb.offset, grad->data() + bb.offset,
                   l > 0 ? &dx : nullptr);
    if (l > 0) delta = std::move(dx);
  }
  return stats;
}

}  // namespace prunelab::detail
