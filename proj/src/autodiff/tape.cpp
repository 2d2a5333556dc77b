/*
  Copyright 2026 The protoguide Authors

  Licensed under the Apache License, Version 2.0 (the "License");
  you may not use this file except in compliance with the License.
  You may obtain a copy of the License at

  http://www.apache.org/licenses/LICENSE-2.0

  Unless required by applicable law or agreed to in writing, software
  distributed under the License is distributed on an "AS IS" BASIS,
  WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
  See the License for the specific language governing permissions and
  limitations under the License.
*/

#include "autodiff/tape.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <limits>
#include <cmath>

#include "common/error.hpp"

namespace pg::ad {

std::size_t numel(const Shape& s) {
  std::size_t n = 1;
  for (int d : s) n *= static_cast<std::size_t>(d);
  return n;
}

std::string shape_string(const Shape& s) {
  std::string out = "[";
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (i) out += ",";
    out += std::to_string(s[i]);
  }
  return out + "]";
}

namespace {

template <typename T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using MapMat = Eigen::Map<RowMat<T>>;
template <typename T>
using CMapMat = Eigen::Map<const RowMat<T>>;

void check(bool cond, const char* op, const std::string& detail) {
  require(cond, ErrorKind::Contract, std::string("autodiff ") + op + ": " + detail);
}

}  // namespace

template <typename T>
Var Tape<T>::push(Shape shape, Vec value, bool requires_grad) {
  auto n = std::make_unique<Node>();
  n->shape = std::move(shape);
  n->value = std::move(value);
  n->requires_grad = requires_grad;
  nodes_.push_back(std::move(n));
  return Var{static_cast<int>(nodes_.size()) - 1};
}

template <typename T>
Var Tape<T>::leaf(Shape shape, Vec value, bool requires_grad) {
  check(numel(shape) == value.size(), "leaf", "value size does not match " + shape_string(shape));
  return push(std::move(shape), std::move(value), requires_grad);
}

template <typename T>
typename Tape<T>::Vec& Tape<T>::grad_buffer(Var v) {
  Node& n = node(v);
  if (n.grad.size() != n.value.size()) n.grad.assign(n.value.size(), T(0));
  return n.grad;
}

template <typename T>
const typename Tape<T>::Vec& Tape<T>::grad(Var v) {
  return grad_buffer(v);
}

template <typename T>
void Tape<T>::backward(Var root) {
  check(node(root).value.size() == 1, "backward", "root must be a scalar");
  grad_buffer(root)[0] = T(1);
  for (int i = root.id; i >= 0; --i) {
    Node& n = *nodes_[i];
    if (n.backward && !n.grad.empty()) n.backward();
  }
}

// Rows ordered (c, ky, kx), columns are output positions.
template <typename T>
void detail_im2col(const T* xp, int C, int H, int W, int k, int stride, int pad, int Ho, int Wo, T* cols) {
  const std::size_t P = static_cast<std::size_t>(Ho) * Wo;
  std::fill(cols, cols + static_cast<std::size_t>(C) * k * k * P, T(0));
  for (int c = 0; c < C; ++c)
    for (int ky = 0; ky < k; ++ky)
      for (int kx = 0; kx < k; ++kx) {
        T* dst = cols + static_cast<std::size_t>((c * k + ky) * k + kx) * P;
        const T* src = xp + static_cast<std::size_t>(c) * H * W;
        // valid output columns: 0 <= ox*stride - pad + kx < W
        const int ox0 = std::max(0, (pad - kx + stride - 1) / stride);
        const int ox1 = W - 1 + pad - kx < 0 ? 0 : std::min(Wo, (W - 1 + pad - kx) / stride + 1);
        for (int oy = 0; oy < Ho; ++oy) {
          const int iy = oy * stride - pad + ky;
          if (iy < 0 || iy >= H) continue;
          const T* srow = src + iy * W - pad + kx;
          T* drow = dst + oy * Wo;
          if (stride == 1) {
            std::copy(srow + ox0, srow + ox1, drow + ox0);
          } else {
            for (int ox = ox0; ox < ox1; ++ox) drow[ox] = srow[ox * stride];
          }
        }
      }
}

template <typename T>
Var Tape<T>::conv2d(Var x, Var w, Var b, int stride, int pad) {
  const Shape xs = shape(x);
  const Shape ws = shape(w);
  check(xs.size() == 4 && ws.size() == 4, "conv2d", "expects 4-d input and weight");
  const int N = xs[0], C = xs[1], H = xs[2], W = xs[3];
  const int O = ws[0], k = ws[2];
  check(ws[1] == C && ws[3] == k, "conv2d", "weight " + shape_string(ws) + " vs input " + shape_string(xs));
  check(!b.valid() || numel(shape(b)) == static_cast<std::size_t>(O), "conv2d", "bias size");
  const int Ho = (H + 2 * pad - k) / stride + 1;
  const int Wo = (W + 2 * pad - k) / stride + 1;
  const int K = C * k * k;
  const int P = Ho * Wo;
  const bool pointwise = k == 1 && stride == 1 && pad == 0;

  auto im2col = [=](const T* xp, T* cols) { detail_im2col(xp, C, H, W, k, stride, pad, Ho, Wo, cols); };

  const Vec& xv = value(x);
  Vec out(static_cast<std::size_t>(N) * O * P);
  Vec cols(pointwise ? 0 : static_cast<std::size_t>(K) * P);
  const CMapMat<T> wm(value(w).data(), O, K);
  for (int n = 0; n < N; ++n) {
    const T* xp = xv.data() + static_cast<std::size_t>(n) * C * H * W;
    if (!pointwise) im2col(xp, cols.data());
    MapMat<T> om(out.data() + static_cast<std::size_t>(n) * O * P, O, P);
    om.noalias() = wm * CMapMat<T>(pointwise ? xp : cols.data(), K, P);
    if (b.valid()) {
      const Vec& bv = value(b);
      for (int o = 0; o < O; ++o) om.row(o).array() += bv[o];
    }
  }

  const bool gx = requires_grad(x), gw = requires_grad(w), gb = b.valid() && requires_grad(b);
  Var y = push({N, O, Ho, Wo}, std::move(out), gx || gw || gb);
  if (!(gx || gw || gb)) return y;
  node(y).backward = [=, this]() {
    const Vec& gy = node(y).grad;
    const Vec& xval = value(x);
    Vec buf(pointwise ? 0 : static_cast<std::size_t>(K) * P);
    RowMat<T> dcols;
    const bool same = gx && !pointwise && stride == 1 && 2 * pad == k - 1;
    RowMat<T> wflip;
    Vec gbuf;
    if (same) {
      const Vec& wv = value(w);
      wflip.resize(C, static_cast<Eigen::Index>(O) * k * k);
      for (int o = 0; o < O; ++o)
        for (int c = 0; c < C; ++c)
          for (int ky = 0; ky < k; ++ky)
            for (int kx = 0; kx < k; ++kx)
              wflip(c, (o * k + ky) * k + kx) = wv[((static_cast<std::size_t>(o) * C + c) * k + (k - 1 - ky)) * k + (k - 1 - kx)];
      gbuf.resize(static_cast<std::size_t>(O) * k * k * P);
    }
    for (int n = 0; n < N; ++n) {
      const CMapMat<T> dout(gy.data() + static_cast<std::size_t>(n) * O * P, O, P);
      const T* xp = xval.data() + static_cast<std::size_t>(n) * C * H * W;
      if (gw) {
        if (!pointwise) im2col(xp, buf.data());
        MapMat<T>(grad_buffer(w).data(), O, K).noalias() +=
            dout * CMapMat<T>(pointwise ? xp : buf.data(), K, P).transpose();
      }
      if (gb) {
        Vec& db = grad_buffer(b);
        // Plain loops: Eigen's vectorized reductions depend on buffer alignment.
        for (int o = 0; o < O; ++o) {
          T acc = 0;
          for (int p = 0; p < P; ++p) acc += dout(o, p);
          db[o] += acc;
        }
      }
      if (gx) {
        T* dxp = grad_buffer(x).data() + static_cast<std::size_t>(n) * C * H * W;
        const CMapMat<T> wmat(value(w).data(), O, K);
        if (pointwise) {
          MapMat<T>(dxp, K, P).noalias() += wmat.transpose() * dout;
          continue;
        }
        if (same) {
          // Stride-1 same-padding: the input gradient is a convolution of
          // dout with the flipped, channel-transposed kernel.
          detail_im2col(gy.data() + static_cast<std::size_t>(n) * O * P, O, H, W, k, 1, pad, H, W, gbuf.data());
          MapMat<T>(dxp, C, P).noalias() += wflip * CMapMat<T>(gbuf.data(), static_cast<Eigen::Index>(O) * k * k, P);
          continue;
        }
        dcols.noalias() = wmat.transpose() * dout;
        for (int c = 0; c < C; ++c)
          for (int ky = 0; ky < k; ++ky)
            for (int kx = 0; kx < k; ++kx) {
              const T* srcr = dcols.data() + static_cast<std::size_t>((c * k + ky) * k + kx) * P;
              T* xd = dxp + static_cast<std::size_t>(c) * H * W;
              const int ox0 = std::max(0, (pad - kx + stride - 1) / stride);
              const int ox1 = std::min(Wo, (W - 1 + pad - kx) / stride + 1);
              for (int oy = 0; oy < Ho; ++oy) {
                const int iy = oy * stride - pad + ky;
                if (iy < 0 || iy >= H) continue;
                T* xrow = xd + iy * W - pad + kx;
                const T* grow = srcr + oy * Wo;
                for (int ox = ox0; ox < ox1; ++ox) xrow[ox * stride] += grow[ox];
              }
            }
      }
    }
  };
  return y;
}

template <typename T>
Var Tape<T>::group_norm(Var x, Var gamma, Var beta, int groups, T eps) {
  const Shape xs = shape(x);
  check(xs.size() == 4, "group_norm", "expects [N,C,H,W]");
  const int N = xs[0], C = xs[1];
  const std::size_t HW = static_cast<std::size_t>(xs[2]) * xs[3];
  check(C % groups == 0, "group_norm", "channels not divisible by groups");
  const int cpg = C / groups;
  const std::size_t gsize = cpg * HW;
  const Vec& xv = value(x);
  const Vec& gv = value(gamma);
  const Vec& bv = value(beta);

  auto xhat = std::make_shared<Vec>(xv.size());
  auto rstd = std::make_shared<std::vector<double>>(static_cast<std::size_t>(N) * groups);
  Vec out(xv.size());
  for (int n = 0; n < N; ++n) {
    for (int g = 0; g < groups; ++g) {
      const std::size_t base = (static_cast<std::size_t>(n) * C + g * cpg) * HW;
      double mean = 0.0;
      for (std::size_t i = 0; i < gsize; ++i) mean += xv[base + i];
      mean /= static_cast<double>(gsize);
      double var = 0.0;
      for (std::size_t i = 0; i < gsize; ++i) {
        const double d = xv[base + i] - mean;
        var += d * d;
      }
      var /= static_cast<double>(gsize);
      const double r = 1.0 / std::sqrt(var + static_cast<double>(eps));
      (*rstd)[static_cast<std::size_t>(n) * groups + g] = r;
      for (int cc = 0; cc < cpg; ++cc) {
        const int c = g * cpg + cc;
        for (std::size_t i = 0; i < HW; ++i) {
          const std::size_t idx = base + cc * HW + i;
          const T xh = static_cast<T>((xv[idx] - mean) * r);
          (*xhat)[idx] = xh;
          out[idx] = xh * gv[c] + bv[c];
        }
      }
    }
  }
  const bool gx = requires_grad(x), gg = requires_grad(gamma), gbeta = requires_grad(beta);
  Var y = push(xs, std::move(out), gx || gg || gbeta);
  if (!(gx || gg || gbeta)) return y;
  node(y).backward = [=, this]() {
    const Vec& gy = node(y).grad;
    const Vec& gvals = value(gamma);
    if (gg || gbeta) {
      Vec& dg = grad_buffer(gamma);
      Vec& db = grad_buffer(beta);
      for (int n = 0; n < N; ++n)
        for (int c = 0; c < C; ++c) {
          const std::size_t base = (static_cast<std::size_t>(n) * C + c) * HW;
          double sg = 0.0, sb = 0.0;
          for (std::size_t i = 0; i < HW; ++i) {
            sg += static_cast<double>(gy[base + i]) * (*xhat)[base + i];
            sb += gy[base + i];
          }
          if (gg) dg[c] += static_cast<T>(sg);
          if (gbeta) db[c] += static_cast<T>(sb);
        }
    }
    if (gx) {
      Vec& dx = grad_buffer(x);
      for (int n = 0; n < N; ++n)
        for (int g = 0; g < groups; ++g) {
          const std::size_t base = (static_cast<std::size_t>(n) * C + g * cpg) * HW;
          double m1 = 0.0, m2 = 0.0;
          for (int cc = 0; cc < cpg; ++cc) {
            const double gm = gvals[g * cpg + cc];
            for (std::size_t i = 0; i < HW; ++i) {
              const std::size_t idx = base + cc * HW + i;
              const double dxh = gy[idx] * gm;
              m1 += dxh;
              m2 += dxh * (*xhat)[idx];
            }
          }
          m1 /= static_cast<double>(gsize);
          m2 /= static_cast<double>(gsize);
          const double r = (*rstd)[static_cast<std::size_t>(n) * groups + g];
          for (int cc = 0; cc < cpg; ++cc) {
            const double gm = gvals[g * cpg + cc];
            for (std::size_t i = 0; i < HW; ++i) {
              const std::size_t idx = base + cc * HW + i;
              const double dxh = gy[idx] * gm;
              dx[idx] += static_cast<T>(r * (dxh - m1 - (*xhat)[idx] * m2));
            }
          }
        }
    }
  };
  return y;
}

template <typename T>
Var Tape<T>::silu(Var x) {
  const Vec& xv = value(x);
  Vec out(xv.size());
  for (std::size_t i = 0; i < xv.size(); ++i) out[i] = xv[i] / (T(1) + std::exp(-xv[i]));
  Var y = push(shape(x), std::move(out), requires_grad(x));
  if (!requires_grad(x)) return y;
  node(y).backward = [=, this]() {
    const Vec& gy = node(y).grad;
    const Vec& xs = value(x);
    Vec& dx = grad_buffer(x);
    for (std::size_t i = 0; i < xs.size(); ++i) {
      const T s = T(1) / (T(1) + std::exp(-xs[i]));
      dx[i] += gy[i] * s * (T(1) + xs[i] * (T(1) - s));
    }
  };
  return y;
}

template <typename T>
Var Tape<T>::add(Var a, Var b) {
  check(shape(a) == shape(b), "add", shape_string(shape(a)) + " vs " + shape_string(shape(b)));
  const Vec& av = value(a);
  const Vec& bv = value(b);
  Vec out(av.size());
  for (std::size_t i = 0; i < av.size(); ++i) out[i] = av[i] + bv[i];
  const bool ga = requires_grad(a), gb = requires_grad(b);
  Var y = push(shape(a), std::move(out), ga || gb);
  if (!(ga || gb)) return y;
  node(y).backward = [=, this]() {
    const Vec& gy = node(y).grad;
    if (ga) {
      Vec& d = grad_buffer(a);
      for (std::size_t i = 0; i < gy.size(); ++i) d[i] += gy[i];
    }
    if (gb) {
      Vec& d = grad_buffer(b);
      for (std::size_t i = 0; i < gy.size(); ++i) d[i] += gy[i];
    }
  };
  return y;
}

template <typename T>
Var Tape<T>::sub(Var a, Var b) {
  return add(a, scale(b, T(-1)));
}

template <typename T>
Var Tape<T>::scale(Var x, T factor) {
  const Vec& xv = value(x);
  Vec out(xv.size());
  for (std::size_t i = 0; i < xv.size(); ++i) out[i] = xv[i] * factor;
  Var y = push(shape(x), std::move(out), requires_grad(x));
  if (!requires_grad(x)) return y;
  node(y).backward = [=, this]() {
    const Vec& gy = node(y).grad;
    Vec& dx = grad_buffer(x);
    for (std::size_t i = 0; i < gy.size(); ++i) dx[i] += gy[i] * factor;
  };
  return y;
}

template <typename T>
Var Tape<T>::add_channel_bias(Var x, Var bias) {
  const Shape xs = shape(x);
  check(xs.size() == 4, "add_channel_bias", "expects [N,C,H,W]");
  const int N = xs[0], C = xs[1];
  const std::size_t HW = static_cast<std::size_t>(xs[2]) * xs[3];
  check(numel(shape(bias)) == static_cast<std::size_t>(N) * C, "add_channel_bias", "bias must be [N,C]");
  Vec out = value(x);
  const Vec& bv = value(bias);
  for (std::size_t nc = 0; nc < static_cast<std::size_t>(N) * C; ++nc)
    for (std::size_t i = 0; i < HW; ++i) out[nc * HW + i] += bv[nc];
  const bool gx = requires_grad(x), gb = requires_grad(bias);
  Var y = push(xs, std::move(out), gx || gb);
  if (!(gx || gb)) return y;
  node(y).backward = [=, this]() {
    const Vec& gy = node(y).grad;
    if (gx) {
      Vec& d = grad_buffer(x);
      for (std::size_t i = 0; i < gy.size(); ++i) d[i] += gy[i];
    }
    if (gb) {
      Vec& d = grad_buffer(bias);
      for (std::size_t nc = 0; nc < static_cast<std::size_t>(N) * C; ++nc) {
        double s = 0.0;
        for (std::size_t i = 0; i < HW; ++i) s += gy[nc * HW + i];
        d[nc] += static_cast<T>(s);
      }
    }
  };
  return y;
}

template <typename T>
Var Tape<T>::avg_pool2(Var x) {
  const Shape xs = shape(x);
  check(xs.size() == 4 && xs[2] % 2 == 0 && xs[3] % 2 == 0, "avg_pool2", "needs even spatial size");
  const int NC = xs[0] * xs[1], H = xs[2], W = xs[3], Ho = H / 2, Wo = W / 2;
  const Vec& xv = value(x);
  Vec out(static_cast<std::size_t>(NC) * Ho * Wo);
  for (int p = 0; p < NC; ++p)
    for (int oy = 0; oy < Ho; ++oy)
      for (int ox = 0; ox < Wo; ++ox) {
        const T* src = xv.data() + static_cast<std::size_t>(p) * H * W;
        out[(static_cast<std::size_t>(p) * Ho + oy) * Wo + ox] =
            T(0.25) * (src[2 * oy * W + 2 * ox] + src[2 * oy * W + 2 * ox + 1] +
                       src[(2 * oy + 1) * W + 2 * ox] + src[(2 * oy + 1) * W + 2 * ox + 1]);
      }
  Var y = push({xs[0], xs[1], Ho, Wo}, std::move(out), requires_grad(x));
  if (!requires_grad(x)) return y;
  node(y).backward = [=, this]() {
    const Vec& gy = node(y).grad;
    Vec& dx = grad_buffer(x);
    for (int p = 0; p < NC; ++p)
      for (int oy = 0; oy < Ho; ++oy)
        for (int ox = 0; ox < Wo; ++ox) {
          const T g = T(0.25) * gy[(static_cast<std::size_t>(p) * Ho + oy) * Wo + ox];
          T* dst = dx.data() + static_cast<std::size_t>(p) * H * W;
          dst[2 * oy * W + 2 * ox] += g;
          dst[2 * oy * W + 2 * ox + 1] += g;
          dst[(2 * oy + 1) * W + 2 * ox] += g;
          dst[(2 * oy + 1) * W + 2 * ox + 1] += g;
        }
  };
  return y;
}

template <typename T>
Var Tape<T>::upsample2(Var x) {
  const Shape xs = shape(x);
  check(xs.size() == 4, "upsample2", "expects [N,C,H,W]");
  const int NC = xs[0] * xs[1], H = xs[2], W = xs[3], Ho = 2 * H, Wo = 2 * W;
  const Vec& xv = value(x);
  Vec out(static_cast<std::size_t>(NC) * Ho * Wo);
  for (int p = 0; p < NC; ++p)
    for (int oy = 0; oy < Ho; ++oy)
      for (int ox = 0; ox < Wo; ++ox)
        out[(static_cast<std::size_t>(p) * Ho + oy) * Wo + ox] =
            xv[(static_cast<std::size_t>(p) * H + oy / 2) * W + ox / 2];
  Var y = push({xs[0], xs[1], Ho, Wo}, std::move(out), requires_grad(x));
  if (!requires_grad(x)) return y;
  node(y).backward = [=, this]() {
    const Vec& gy = node(y).grad;
    Vec& dx = grad_buffer(x);
    for (int p = 0; p < NC; ++p)
      for (int oy = 0; oy < Ho; ++oy)
        for (int ox = 0; ox < Wo; ++ox)
          dx[(static_cast<std::size_t>(p) * H + oy / 2) * W + ox / 2] +=
              gy[(static_cast<std::size_t>(p) * Ho + oy) * Wo + ox];
  };
  return y;
}

template <typename T>
Var Tape<T>::concat_channels(Var a, Var b) {
  const Shape as = shape(a), bs = shape(b);
  check(as.size() == 4 && bs.size() == 4 && as[0] == bs[0] && as[2] == bs[2] && as[3] == bs[3],
        "concat_channels", shape_string(as) + " vs " + shape_string(bs));
  const int N = as[0], Ca = as[1], Cb = bs[1];
  const std::size_t HW = static_cast<std::size_t>(as[2]) * as[3];
  const Vec& av = value(a);
  const Vec& bv = value(b);
  Vec out(static_cast<std::size_t>(N) * (Ca + Cb) * HW);
  for (int n = 0; n < N; ++n) {
    std::copy_n(av.data() + n * Ca * HW, Ca * HW, out.data() + n * (Ca + Cb) * HW);
    std::copy_n(bv.data() + n * Cb * HW, Cb * HW, out.data() + (n * (Ca + Cb) + Ca) * HW);
  }
  const bool ga = requires_grad(a), gb = requires_grad(b);
  Var y = push({N, Ca + Cb, as[2], as[3]}, std::move(out), ga || gb);
  if (!(ga || gb)) return y;
  node(y).backward = [=, this]() {
    const Vec& gy = node(y).grad;
    for (int n = 0; n < N; ++n) {
      if (ga) {
        Vec& d = grad_buffer(a);
        for (std::size_t i = 0; i < Ca * HW; ++i) d[n * Ca * HW + i] += gy[n * (Ca + Cb) * HW + i];
      }
      if (gb) {
        Vec& d = grad_buffer(b);
        for (std::size_t i = 0; i < Cb * HW; ++i) d[n * Cb * HW + i] += gy[(n * (Ca + Cb) + Ca) * HW + i];
      }
    }
  };
  return y;
}

template <typename T>
Var Tape<T>::linear(Var x, Var w, Var b) {
  const Shape xs = shape(x);
  const Shape ws = shape(w);
  check(ws.size() == 2 && !xs.empty() && xs.back() == ws[0], "linear",
        shape_string(xs) + " x " + shape_string(ws));
  const int K = ws[0], M = ws[1];
  const int R = static_cast<int>(numel(xs) / K);
  check(!b.valid() || numel(shape(b)) == static_cast<std::size_t>(M), "linear", "bias size");
  Vec out(static_cast<std::size_t>(R) * M);
  MapMat<T> om(out.data(), R, M);
  om.noalias() = CMapMat<T>(value(x).data(), R, K) * CMapMat<T>(value(w).data(), K, M);
  if (b.valid()) {
    Eigen::Map<const Eigen::Matrix<T, 1, Eigen::Dynamic>> bv(value(b).data(), M);
    om.rowwise() += bv;
  }
  Shape ys = xs;
  ys.back() = M;
  const bool gx = requires_grad(x), gw = requires_grad(w), gb = b.valid() && requires_grad(b);
  Var y = push(ys, std::move(out), gx || gw || gb);
  if (!(gx || gw || gb)) return y;
  node(y).backward = [=, this]() {
    CMapMat<T> gy(node(y).grad.data(), R, M);
    if (gx)
      MapMat<T>(grad_buffer(x).data(), R, K).noalias() +=
          gy * CMapMat<T>(value(w).data(), K, M).transpose();
    if (gw)
      MapMat<T>(grad_buffer(w).data(), K, M).noalias() +=
          CMapMat<T>(value(x).data(), R, K).transpose() * gy;
    if (gb) {
      Vec& db = grad_buffer(b);
      for (int m = 0; m < M; ++m) {
        T acc = 0;
        for (Eigen::Index r = 0; r < gy.rows(); ++r) acc += gy(r, m);
        db[m] += acc;
      }
    }
  };
  return y;
}

template <typename T>
Var Tape<T>::reshape(Var x, Shape s) {
  check(numel(s) == numel(shape(x)), "reshape", shape_string(shape(x)) + " -> " + shape_string(s));
  Var y = push(std::move(s), value(x), requires_grad(x));
  if (!requires_grad(x)) return y;
  node(y).backward = [=, this]() {
    const Vec& gy = node(y).grad;
    Vec& dx = grad_buffer(x);
    for (std::size_t i = 0; i < gy.size(); ++i) dx[i] += gy[i];
  };
  return y;
}

template <typename T>
Var Tape<T>::to_tokens(Var x) {
  const Shape xs = shape(x);
  check(xs.size() == 4, "to_tokens", "expects [N,C,H,W]");
  const int N = xs[0], C = xs[1], L = xs[2] * xs[3];
  const Vec& xv = value(x);
  Vec out(xv.size());
  for (int n = 0; n < N; ++n)
    for (int c = 0; c < C; ++c)
      for (int l = 0; l < L; ++l)
        out[(static_cast<std::size_t>(n) * L + l) * C + c] = xv[(static_cast<std::size_t>(n) * C + c) * L + l];
  Var y = push({N, L, C}, std::move(out), requires_grad(x));
  if (!requires_grad(x)) return y;
  node(y).backward = [=, this]() {
    const Vec& gy = node(y).grad;
    Vec& dx = grad_buffer(x);
    for (int n = 0; n < N; ++n)
      for (int c = 0; c < C; ++c)
        for (int l = 0; l < L; ++l)
          dx[(static_cast<std::size_t>(n) * C + c) * L + l] += gy[(static_cast<std::size_t>(n) * L + l) * C + c];
  };
  return y;
}

template <typename T>
Var Tape<T>::from_tokens(Var x, int height, int width) {
  const Shape xs = shape(x);
  check(xs.size() == 3 && xs[1] == height * width, "from_tokens", "expects [N,H*W,C]");
  const int N = xs[0], L = xs[1], C = xs[2];
  const Vec& xv = value(x);
  Vec out(xv.size());
  for (int n = 0; n < N; ++n)
    for (int l = 0; l < L; ++l)
      for (int c = 0; c < C; ++c)
        out[(static_cast<std::size_t>(n) * C + c) * L + l] = xv[(static_cast<std::size_t>(n) * L + l) * C + c];
  Var y = push({N, C, height, width}, std::move(out), requires_grad(x));
  if (!requires_grad(x)) return y;
  node(y).backward = [=, this]() {
    const Vec& gy = node(y).grad;
    Vec& dx = grad_buffer(x);
    for (int n = 0; n < N; ++n)
      for (int l = 0; l < L; ++l)
        for (int c = 0; c < C; ++c)
          dx[(static_cast<std::size_t>(n) * L + l) * C + c] += gy[(static_cast<std::size_t>(n) * C + c) * L + l];
  };
  return y;
}

template <typename T>
Var Tape<T>::bmm(Var a, Var b) {
  const Shape as = shape(a), bs = shape(b);
  check(as.size() == 3 && bs.size() == 3 && as[0] == bs[0] && as[2] == bs[1], "bmm",
        shape_string(as) + " x " + shape_string(bs));
  const int N = as[0], m = as[1], k = as[2], n = bs[2];
  Vec out(static_cast<std::size_t>(N) * m * n);
  for (int i = 0; i < N; ++i)
    MapMat<T>(out.data() + static_cast<std::size_t>(i) * m * n, m, n).noalias() =
        CMapMat<T>(value(a).data() + static_cast<std::size_t>(i) * m * k, m, k) *
        CMapMat<T>(value(b).data() + static_cast<std::size_t>(i) * k * n, k, n);
  const bool ga = requires_grad(a), gb = requires_grad(b);
  Var y = push({N, m, n}, std::move(out), ga || gb);
  if (!(ga || gb)) return y;
  node(y).backward = [=, this]() {
    const Vec& gyv = node(y).grad;
    for (int i = 0; i < N; ++i) {
      CMapMat<T> gy(gyv.data() + static_cast<std::size_t>(i) * m * n, m, n);
      if (ga)
        MapMat<T>(grad_buffer(a).data() + static_cast<std::size_t>(i) * m * k, m, k).noalias() +=
            gy * CMapMat<T>(value(b).data() + static_cast<std::size_t>(i) * k * n, k, n).transpose();
      if (gb)
        MapMat<T>(grad_buffer(b).data() + static_cast<std::size_t>(i) * k * n, k, n).noalias() +=
            CMapMat<T>(value(a).data() + static_cast<std::size_t>(i) * m * k, m, k).transpose() * gy;
    }
  };
  return y;
}

template <typename T>
Var Tape<T>::bmm_nt(Var a, Var b, T factor) {
  const Shape as = shape(a), bs = shape(b);
  check(as.size() == 3 && bs.size() == 3 && as[0] == bs[0] && as[2] == bs[2], "bmm_nt",
        shape_string(as) + " x " + shape_string(bs) + "^T");
  const int N = as[0], m = as[1], k = as[2], n = bs[1];
  Vec out(static_cast<std::size_t>(N) * m * n);
  for (int i = 0; i < N; ++i)
    MapMat<T>(out.data() + static_cast<std::size_t>(i) * m * n, m, n).noalias() =
        factor * (CMapMat<T>(value(a).data() + static_cast<std::size_t>(i) * m * k, m, k) *
                  CMapMat<T>(value(b).data() + static_cast<std::size_t>(i) * n * k, n, k).transpose());
  const bool ga = requires_grad(a), gb = requires_grad(b);
  Var y = push({N, m, n}, std::move(out), ga || gb);
  if (!(ga || gb)) return y;
  node(y).backward = [=, this]() {
    const Vec& gyv = node(y).grad;
    for (int i = 0; i < N; ++i) {
      CMapMat<T> gy(gyv.data() + static_cast<std::size_t>(i) * m * n, m, n);
      if (ga)
        MapMat<T>(grad_buffer(a).data() + static_cast<std::size_t>(i) * m * k, m, k).noalias() +=
            factor * (gy * CMapMat<T>(value(b).data() + static_cast<std::size_t>(i) * n * k, n, k));
      if (gb)
        MapMat<T>(grad_buffer(b).data() + static_cast<std::size_t>(i) * n * k, n, k).noalias() +=
            factor * (gy.transpose() * CMapMat<T>(value(a).data() + static_cast<std::size_t>(i) * m * k, m, k));
    }
  };
  return y;
}

template <typename T>
Var Tape<T>::softmax(Var x, std::span<const T> additive_mask) {
  const Shape xs = shape(x);
  const int D = xs.back();
  const std::size_t rows = numel(xs) / D;
  const Vec& xv = value(x);
  check(additive_mask.empty() || additive_mask.size() == xv.size(), "softmax", "mask size");
  Vec out(xv.size());
  for (std::size_t r = 0; r < rows; ++r) {
    const std::size_t base = r * D;
    T mx = -std::numeric_limits<T>::infinity();
    for (int j = 0; j < D; ++j) {
      const T v = xv[base + j] + (additive_mask.empty() ? T(0) : additive_mask[base + j]);
      out[base + j] = v;
      mx = std::max(mx, v);
    }
    double s = 0.0;
    for (int j = 0; j < D; ++j) {
      out[base + j] = std::exp(out[base + j] - mx);
      s += out[base + j];
    }
    for (int j = 0; j < D; ++j) out[base + j] = static_cast<T>(out[base + j] / s);
  }
  Var y = push(xs, std::move(out), requires_grad(x));
  if (!requires_grad(x)) return y;
  node(y).backward = [=, this]() {
    const Vec& gy = node(y).grad;
    const Vec& yv = value(y);
    Vec& dx = grad_buffer(x);
    for (std::size_t r = 0; r < rows; ++r) {
      const std::size_t base = r * D;
      double dot = 0.0;
      for (int j = 0; j < D; ++j) dot += static_cast<double>(gy[base + j]) * yv[base + j];
      for (int j = 0; j < D; ++j) dx[base + j] += yv[base + j] * static_cast<T>(gy[base + j] - dot);
    }
  };
  return y;
}

template <typename T>
Var Tape<T>::gather_rows(Var table, std::span<const int> rows) {
  const Shape ts = shape(table);
  check(ts.size() == 2, "gather_rows", "table must be [V,E]");
  const int V = ts[0], E = ts[1];
  const int R = static_cast<int>(rows.size());
  Vec out(static_cast<std::size_t>(R) * E);
  for (int r = 0; r < R; ++r) {
    check(rows[r] >= 0 && rows[r] < V, "gather_rows", "row index out of range");
    std::copy_n(value(table).data() + static_cast<std::size_t>(rows[r]) * E, E,
                out.data() + static_cast<std::size_t>(r) * E);
  }
  Var y = push({R, E}, std::move(out), requires_grad(table));
  if (!requires_grad(table)) return y;
  std::vector<int> idx(rows.begin(), rows.end());
  node(y).backward = [=, this]() {
    const Vec& gy = node(y).grad;
    Vec& dt = grad_buffer(table);
    for (int r = 0; r < R; ++r)
      for (int e = 0; e < E; ++e)
        dt[static_cast<std::size_t>(idx[r]) * E + e] += gy[static_cast<std::size_t>(r) * E + e];
  };
  return y;
}

template <typename T>
Var Tape<T>::mse(Var x, std::span<const T> target) {
  const Vec& xv = value(x);
  check(target.size() == xv.size(), "mse", "target size");
  double s = 0.0;
  for (std::size_t i = 0; i < xv.size(); ++i) {
    const double d = static_cast<double>(xv[i]) - target[i];
    s += d * d;
  }
  const double n = static_cast<double>(xv.size());
  Var y = push({1}, Vec{static_cast<T>(s / n)}, requires_grad(x));
  if (!requires_grad(x)) return y;
  Vec tgt(target.begin(), target.end());
  node(y).backward = [=, this]() {
    const T g = node(y).grad[0];
    const Vec& xs = value(x);
    Vec& dx = grad_buffer(x);
    const T f = static_cast<T>(2.0 / n) * g;
    for (std::size_t i = 0; i < xs.size(); ++i) dx[i] += f * (xs[i] - tgt[i]);
  };
  return y;
}

template <typename T>
Var Tape<T>::weighted_sq_error(Var x, std::span<const T> target, std::span<const T> weight, T factor) {
  const Vec& xv = value(x);
  check(target.size() == xv.size(), "weighted_sq_error", "target size");
  check(weight.empty() || weight.size() == xv.size(), "weighted_sq_error", "weight size");
  double s = 0.0;
  for (std::size_t i = 0; i < xv.size(); ++i) {
    const double d = static_cast<double>(xv[i]) - target[i];
    s += (weight.empty() ? 1.0 : static_cast<double>(weight[i])) * d * d;
  }
  Var y = push({1}, Vec{static_cast<T>(s * factor)}, requires_grad(x));
  if (!requires_grad(x)) return y;
  Vec tgt(target.begin(), target.end());
  Vec wt(weight.begin(), weight.end());
  node(y).backward = [=, this]() {
    const T g = node(y).grad[0];
    const Vec& xs = value(x);
    Vec& dx = grad_buffer(x);
    for (std::size_t i = 0; i < xs.size(); ++i)
      dx[i] += T(2) * factor * g * (wt.empty() ? T(1) : wt[i]) * (xs[i] - tgt[i]);
  };
  return y;
}

template <typename T>
Var Tape<T>::sum(Var x) {
  double s = 0.0;
  for (T v : value(x)) s += v;
  Var y = push({1}, Vec{static_cast<T>(s)}, requires_grad(x));
  if (!requires_grad(x)) return y;
  node(y).backward = [=, this]() {
    const T g = node(y).grad[0];
    Vec& dx = grad_buffer(x);
    for (auto& d : dx) d += g;
  };
  return y;
}

template class Tape<float>;
template class Tape<double>;

}  // namespace pg::ad
