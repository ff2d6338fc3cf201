#ifndef CCL_CORE_SPATIAL_HPP
#define CCL_CORE_SPATIAL_HPP

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <limits>
#include <vector>

#include "ccl/core/autograd.hpp"
#include "ccl/core/tensor.hpp"

// Spatial ops: convolution, pooling, resampling, padding and channel
// plumbing. Convolutions lower to im2col + GEMM, processed in bands of
// output rows so the column buffer stays bounded for large images.

namespace ccl {

namespace detail {

template <class T>
using RowMatrix = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

struct ConvGeometry {
  int in_channels, out_channels, kernel, stride, pad;
  int h, w, out_h, out_w;

  bool pointwise() const { return kernel == 1 && stride == 1 && pad == 0; }
  std::size_t patch() const { return static_cast<std::size_t>(in_channels) * kernel * kernel; }

  // Rows of output processed per GEMM so the column buffer stays under ~4M entries.
  int band_rows() const {
    if (pointwise()) return out_h;  // no column buffer needed
    const std::size_t per_row = patch() * static_cast<std::size_t>(out_w);
    const std::size_t budget = std::size_t{1} << 22;
    return static_cast<int>(std::clamp<std::size_t>(budget / std::max<std::size_t>(per_row, 1), 1,
                                                    static_cast<std::size_t>(out_h)));
  }

  // Output columns [lo, hi) whose input column ox*stride - pad + kx is in range.
  std::pair<int, int> valid_cols(int kx) const {
    const int off = kx - pad;
    int lo = off >= 0 ? 0 : (-off + stride - 1) / stride;
    int hi = (w - 1 - off) >= 0 ? (w - 1 - off) / stride + 1 : 0;
    lo = std::min(lo, out_w);
    hi = std::clamp(hi, lo, out_w);
    return {lo, hi};
  }
};

template <class T>
void im2col(const T* x, const ConvGeometry& g, int row0, int rows, T* col) {
  const std::size_t band = static_cast<std::size_t>(rows) * g.out_w;
  for (int ci = 0; ci < g.in_channels; ++ci) {
    const T* plane = x + static_cast<std::size_t>(ci) * g.h * g.w;
    for (int ky = 0; ky < g.kernel; ++ky)
      for (int kx = 0; kx < g.kernel; ++kx) {
        T* dst = col + (static_cast<std::size_t>(ci * g.kernel + ky) * g.kernel + kx) * band;
        const auto [lo, hi] = g.valid_cols(kx);
        for (int r = 0; r < rows; ++r) {
          T* drow = dst + static_cast<std::size_t>(r) * g.out_w;
          const int iy = (row0 + r) * g.stride - g.pad + ky;
          if (iy < 0 || iy >= g.h) {
            std::fill(drow, drow + g.out_w, T(0));
            continue;
          }
          const T* srow = plane + static_cast<std::size_t>(iy) * g.w + (kx - g.pad);
          std::fill(drow, drow + lo, T(0));
          if (g.stride == 1) {
            std::copy(srow + lo, srow + hi, drow + lo);
          } else {
            for (int ox = lo; ox < hi; ++ox) drow[ox] = srow[ox * g.stride];
          }
          std::fill(drow + hi, drow + g.out_w, T(0));
        }
      }
  }
}

template <class T>
void col2im_add(const T* col, const ConvGeometry& g, int row0, int rows, T* x) {
  const std::size_t band = static_cast<std::size_t>(rows) * g.out_w;
  for (int ci = 0; ci < g.in_channels; ++ci) {
    T* plane = x + static_cast<std::size_t>(ci) * g.h * g.w;
    for (int ky = 0; ky < g.kernel; ++ky)
      for (int kx = 0; kx < g.kernel; ++kx) {
        const T* src = col + (static_cast<std::size_t>(ci * g.kernel + ky) * g.kernel + kx) * band;
        const auto [lo, hi] = g.valid_cols(kx);
        for (int r = 0; r < rows; ++r) {
          const int iy = (row0 + r) * g.stride - g.pad + ky;
          if (iy < 0 || iy >= g.h) continue;
          const T* srow = src + static_cast<std::size_t>(r) * g.out_w;
          T* drow = plane + static_cast<std::size_t>(iy) * g.w + (kx - g.pad);
          for (int ox = lo; ox < hi; ++ox) drow[ox * g.stride] += srow[ox];
        }
      }
  }
}

inline int reflect_index(int i, int n) {
  if (n == 1) return 0;
  const int period = 2 * (n - 1);
  i %= period;
  if (i < 0) i += period;
  return i >= n ? period - i : i;
}

}  // namespace detail

/// 2-D cross-correlation with zero padding.
/// x: NxCinxHxW, weight: CoutxCinxKxK, bias: 1xCoutx1x1 or undefined.
template <class T>
Var<T> conv2d(const Var<T>& x, const Var<T>& weight, const Var<T>& bias, int stride, int pad) {
  const Shape xs = x.shape();
  const Shape ws = weight.shape();
  require(ws.h == ws.w, "convolution kernels must be square");
  require(xs.c == ws.c, "conv2d channel mismatch: input has " + std::to_string(xs.c) + ", kernel expects " +
                            std::to_string(ws.c));
  require(stride >= 1 && pad >= 0, "conv2d stride must be >= 1 and padding >= 0");
  if (bias.defined()) require(bias.shape() == Shape{1, ws.n, 1, 1}, "conv2d bias must be 1xCoutx1x1");

  detail::ConvGeometry g{xs.c, ws.n, ws.h, stride, pad, xs.h, xs.w, 0, 0};
  g.out_h = (xs.h + 2 * pad - ws.h) / stride + 1;
  g.out_w = (xs.w + 2 * pad - ws.w) / stride + 1;
  require(xs.h + 2 * pad >= ws.h && xs.w + 2 * pad >= ws.w, "conv2d input smaller than kernel");

  using Mat = detail::RowMatrix<T>;
  using CMap = Eigen::Map<const Mat>;
  using StridedMap = Eigen::Map<Mat, 0, Eigen::OuterStride<>>;

  Tensor<T> out(Shape{xs.n, g.out_channels, g.out_h, g.out_w});
  const std::size_t in_sample = static_cast<std::size_t>(xs.c) * xs.h * xs.w;
  const std::size_t out_plane = static_cast<std::size_t>(g.out_h) * g.out_w;
  const std::size_t out_sample = out_plane * g.out_channels;
  CMap wm(weight.value().data(), g.out_channels, static_cast<Eigen::Index>(g.patch()));
  const int band = g.band_rows();
  Buffer<T> col;
  if (!g.pointwise()) col.resize(g.patch() * static_cast<std::size_t>(band) * g.out_w);

  for (int n = 0; n < xs.n; ++n) {
    const T* xn = x.value().data() + n * in_sample;
    T* on = out.data() + n * out_sample;
    for (int row0 = 0; row0 < g.out_h; row0 += band) {
      const int rows = std::min(band, g.out_h - row0);
      const Eigen::Index cols = static_cast<Eigen::Index>(rows) * g.out_w;
      StridedMap om(on + static_cast<std::size_t>(row0) * g.out_w, g.out_channels, cols,
                    Eigen::OuterStride<>(static_cast<Eigen::Index>(out_plane)));
      if (g.pointwise()) {
        om.noalias() = wm * CMap(xn, xs.c, cols);
      } else {
        detail::im2col(xn, g, row0, rows, col.data());
        om.noalias() = wm * CMap(col.data(), static_cast<Eigen::Index>(g.patch()), cols);
      }
      if (bias.defined()) {
        const T* b = bias.value().data();
        for (int co = 0; co < g.out_channels; ++co) om.row(co).array() += b[co];
      }
    }
  }

  std::vector<Var<T>> inputs{x, weight};
  if (bias.defined()) inputs.push_back(bias);
  return record<T>(std::move(out), std::move(inputs), [g, in_sample, out_plane, out_sample](Node<T>& self) {
    auto& nx = *self.inputs[0];
    auto& nw = *self.inputs[1];
    Node<T>* nb = self.inputs.size() > 2 ? self.inputs[2].get() : nullptr;
    const bool need_x = nx.requires_grad;
    const bool need_w = nw.requires_grad;
    const bool need_b = nb && nb->requires_grad;
    const Eigen::Index patch = static_cast<Eigen::Index>(g.patch());
    CMap wm(nw.value.data(), g.out_channels, patch);
    Eigen::Map<Mat> gw(need_w ? nw.grad_buffer().data() : nullptr, need_w ? g.out_channels : 0,
                       need_w ? patch : 0);
    T* gb = need_b ? nb->grad_buffer().data() : nullptr;
    T* gx = need_x ? nx.grad_buffer().data() : nullptr;
    const int band = g.band_rows();
    Buffer<T> col;
    Buffer<T> dcol;
    if (!g.pointwise()) {
      const std::size_t sz = g.patch() * static_cast<std::size_t>(band) * g.out_w;
      if (need_w) col.resize(sz);
      if (need_x) dcol.resize(sz);
    }
    const int samples = self.value.n();
    for (int n = 0; n < samples; ++n) {
      const T* xn = nx.value.data() + n * in_sample;
      const T* gon = self.grad.data() + n * out_sample;
      for (int row0 = 0; row0 < g.out_h; row0 += band) {
        const int rows = std::min(band, g.out_h - row0);
        const Eigen::Index cols = static_cast<Eigen::Index>(rows) * g.out_w;
        Eigen::Map<const Mat, 0, Eigen::OuterStride<>> gm(gon + static_cast<std::size_t>(row0) * g.out_w,
                                                          g.out_channels, cols,
                                                          Eigen::OuterStride<>(static_cast<Eigen::Index>(out_plane)));
        if (need_b)
          for (int co = 0; co < g.out_channels; ++co) gb[co] += gm.row(co).sum();
        if (g.pointwise()) {
          if (need_w) gw.noalias() += gm * CMap(xn, g.in_channels, cols).transpose();
          if (need_x) {
            Eigen::Map<Mat> gxm(gx + n * in_sample, g.in_channels, cols);
            gxm.noalias() += wm.transpose() * gm;
          }
          continue;
        }
        if (need_w) {
          detail::im2col(xn, g, row0, rows, col.data());
          gw.noalias() += gm * CMap(col.data(), patch, cols).transpose();
        }
        if (need_x) {
          Eigen::Map<Mat> dc(dcol.data(), patch, cols);
          dc.noalias() = wm.transpose() * gm;
          detail::col2im_add(dcol.data(), g, row0, rows, gx + n * in_sample);
        }
      }
    }
  });
}

/// 2x2 max pooling with stride 2; odd trailing rows/columns are dropped.
template <class T>
Var<T> max_pool2x2(const Var<T>& x) {
  const Shape s = x.shape();
  const Shape os{s.n, s.c, s.h / 2, s.w / 2};
  require(os.h > 0 && os.w > 0, "max_pool2x2 input too small: " + s.str());
  Tensor<T> out(os);
  std::vector<std::uint32_t> argmax(os.numel());
  const T* px = x.value().data();
  std::size_t o = 0;
  for (int n = 0; n < s.n; ++n)
    for (int c = 0; c < s.c; ++c) {
      const std::size_t base = (static_cast<std::size_t>(n) * s.c + c) * s.plane();
      for (int y = 0; y < os.h; ++y)
        for (int xo = 0; xo < os.w; ++xo, ++o) {
          std::size_t best = base + static_cast<std::size_t>(2 * y) * s.w + 2 * xo;
          for (int dy = 0; dy < 2; ++dy)
            for (int dx = 0; dx < 2; ++dx) {
              const std::size_t i = base + static_cast<std::size_t>(2 * y + dy) * s.w + 2 * xo + dx;
              if (px[i] > px[best]) best = i;
            }
          out[o] = px[best];
          argmax[o] = static_cast<std::uint32_t>(best);
        }
    }
  return record<T>(std::move(out), {x}, [argmax = std::move(argmax)](Node<T>& self) {
    T* gx = self.inputs[0]->grad_buffer().data();
    for (std::size_t i = 0; i < argmax.size(); ++i) gx[argmax[i]] += self.grad[i];
  });
}

/// Mean over the spatial axes: NxCxHxW -> NxCx1x1.
template <class T>
Var<T> global_avg_pool(const Var<T>& x) {
  const Shape s = x.shape();
  require(s.plane() > 0, "global_avg_pool of an empty plane");
  Tensor<T> out(Shape{s.n, s.c, 1, 1});
  const std::size_t plane = s.plane();
  for (std::size_t i = 0; i < out.size(); ++i) {
    const T* p = x.value().data() + i * plane;
    T acc = T(0);
    for (std::size_t k = 0; k < plane; ++k) acc += p[k];
    out[i] = acc / static_cast<T>(plane);
  }
  return record<T>(std::move(out), {x}, [plane](Node<T>& self) {
    T* gx = self.inputs[0]->grad_buffer().data();
    for (std::size_t i = 0; i < self.value.size(); ++i) {
      const T g = self.grad[i] / static_cast<T>(plane);
      for (std::size_t k = 0; k < plane; ++k) gx[i * plane + k] += g;
    }
  });
}

namespace detail {
struct LinearTap {
  int i0, i1;
  double l1;  // weight of i1; i0 gets 1 - l1
};

// Half-pixel-centre sampling positions (align_corners = false).
inline std::vector<LinearTap> linear_taps(int in, int out) {
  std::vector<LinearTap> taps(static_cast<std::size_t>(out));
  const double ratio = static_cast<double>(in) / static_cast<double>(out);
  for (int o = 0; o < out; ++o) {
    double src = (o + 0.5) * ratio - 0.5;
    if (src < 0) src = 0;
    int i0 = static_cast<int>(std::floor(src));
    if (i0 > in - 1) i0 = in - 1;
    const int i1 = std::min(i0 + 1, in - 1);
    taps[o] = LinearTap{i0, i1, src - i0};
  }
  return taps;
}
}  // namespace detail

/// Bilinear resampling to out_h x out_w with half-pixel centres.
template <class T>
Var<T> upsample_bilinear(const Var<T>& x, int out_h, int out_w) {
  const Shape s = x.shape();
  require(out_h > 0 && out_w > 0, "upsample target must be positive");
  const auto ty = detail::linear_taps(s.h, out_h);
  const auto tx = detail::linear_taps(s.w, out_w);
  Tensor<T> out(Shape{s.n, s.c, out_h, out_w});
  const int planes = s.n * s.c;
  for (int p = 0; p < planes; ++p) {
    const T* src = x.value().data() + static_cast<std::size_t>(p) * s.plane();
    T* dst = out.data() + static_cast<std::size_t>(p) * out_h * out_w;
    for (int y = 0; y < out_h; ++y) {
      const auto& a = ty[y];
      const T wy1 = static_cast<T>(a.l1), wy0 = T(1) - wy1;
      const T* r0 = src + static_cast<std::size_t>(a.i0) * s.w;
      const T* r1 = src + static_cast<std::size_t>(a.i1) * s.w;
      for (int xo = 0; xo < out_w; ++xo) {
        const auto& b = tx[xo];
        const T wx1 = static_cast<T>(b.l1), wx0 = T(1) - wx1;
        dst[y * out_w + xo] =
            wy0 * (wx0 * r0[b.i0] + wx1 * r0[b.i1]) + wy1 * (wx0 * r1[b.i0] + wx1 * r1[b.i1]);
      }
    }
  }
  return record<T>(std::move(out), {x}, [ty, tx, s, out_h, out_w](Node<T>& self) {
    T* gx = self.inputs[0]->grad_buffer().data();
    const int planes = s.n * s.c;
    for (int p = 0; p < planes; ++p) {
      T* dst = gx + static_cast<std::size_t>(p) * s.plane();
      const T* g = self.grad.data() + static_cast<std::size_t>(p) * out_h * out_w;
      for (int y = 0; y < out_h; ++y) {
        const auto& a = ty[y];
        const T wy1 = static_cast<T>(a.l1), wy0 = T(1) - wy1;
        T* r0 = dst + static_cast<std::size_t>(a.i0) * s.w;
        T* r1 = dst + static_cast<std::size_t>(a.i1) * s.w;
        for (int xo = 0; xo < out_w; ++xo) {
          const auto& b = tx[xo];
          const T wx1 = static_cast<T>(b.l1), wx0 = T(1) - wx1;
          const T v = g[y * out_w + xo];
          r0[b.i0] += wy0 * wx0 * v;
          r0[b.i1] += wy0 * wx1 * v;
          r1[b.i0] += wy1 * wx0 * v;
          r1[b.i1] += wy1 * wx1 * v;
        }
      }
    }
  });
}

/// Mirror padding without edge repetition (d c b | a b c d | c b a).
template <class T>
Var<T> pad_reflect(const Var<T>& x, int top, int bottom, int left, int right) {
  const Shape s = x.shape();
  require(top >= 0 && bottom >= 0 && left >= 0 && right >= 0, "padding must be non-negative");
  const Shape os{s.n, s.c, s.h + top + bottom, s.w + left + right};
  std::vector<int> ry(os.h), rx(os.w);
  for (int y = 0; y < os.h; ++y) ry[y] = detail::reflect_index(y - top, s.h);
  for (int xo = 0; xo < os.w; ++xo) rx[xo] = detail::reflect_index(xo - left, s.w);
  Tensor<T> out(os);
  const int planes = s.n * s.c;
  for (int p = 0; p < planes; ++p) {
    const T* src = x.value().data() + static_cast<std::size_t>(p) * s.plane();
    T* dst = out.data() + static_cast<std::size_t>(p) * os.plane();
    for (int y = 0; y < os.h; ++y)
      for (int xo = 0; xo < os.w; ++xo) dst[y * os.w + xo] = src[ry[y] * s.w + rx[xo]];
  }
  return record<T>(std::move(out), {x}, [ry, rx, s, os](Node<T>& self) {
    T* gx = self.inputs[0]->grad_buffer().data();
    const int planes = s.n * s.c;
    for (int p = 0; p < planes; ++p) {
      T* dst = gx + static_cast<std::size_t>(p) * s.plane();
      const T* g = self.grad.data() + static_cast<std::size_t>(p) * os.plane();
      for (int y = 0; y < os.h; ++y)
        for (int xo = 0; xo < os.w; ++xo) dst[ry[y] * s.w + rx[xo]] += g[y * os.w + xo];
    }
  });
}

/// Spatial window [top, top+h) x [left, left+w).
template <class T>
Var<T> crop(const Var<T>& x, int top, int left, int h, int w) {
  const Shape s = x.shape();
  require(top >= 0 && left >= 0 && h > 0 && w > 0 && top + h <= s.h && left + w <= s.w,
          "crop window outside the input");
  const Shape os{s.n, s.c, h, w};
  Tensor<T> out(os);
  const int planes = s.n * s.c;
  for (int p = 0; p < planes; ++p)
    for (int y = 0; y < h; ++y) {
      const T* src = x.value().data() + static_cast<std::size_t>(p) * s.plane() +
                     static_cast<std::size_t>(top + y) * s.w + left;
      std::copy(src, src + w, out.data() + static_cast<std::size_t>(p) * os.plane() + static_cast<std::size_t>(y) * w);
    }
  return record<T>(std::move(out), {x}, [s, os, top, left](Node<T>& self) {
    T* gx = self.inputs[0]->grad_buffer().data();
    const int planes = s.n * s.c;
    for (int p = 0; p < planes; ++p)
      for (int y = 0; y < os.h; ++y) {
        T* dst = gx + static_cast<std::size_t>(p) * s.plane() + static_cast<std::size_t>(top + y) * s.w + left;
        const T* g = self.grad.data() + static_cast<std::size_t>(p) * os.plane() + static_cast<std::size_t>(y) * os.w;
        for (int xo = 0; xo < os.w; ++xo) dst[xo] += g[xo];
      }
  });
}

/// Concatenates along the channel axis.
template <class T>
Var<T> concat_channels(const std::vector<Var<T>>& parts) {
  require(!parts.empty(), "concat of nothing");
  Shape os = parts.front().shape();
  os.c = 0;
  for (const auto& p : parts) {
    const Shape ps = p.shape();
    require(ps.n == os.n && ps.h == os.h && ps.w == os.w, "concat_channels extent mismatch");
    os.c += ps.c;
  }
  Tensor<T> out(os);
  int c0 = 0;
  for (const auto& p : parts) {
    const Shape ps = p.shape();
    for (int n = 0; n < os.n; ++n)
      std::copy(p.value().plane(n, 0), p.value().plane(n, 0) + ps.c * ps.plane(), out.plane(n, c0));
    c0 += ps.c;
  }
  return record<T>(std::move(out), parts, [](Node<T>& self) {
    int c0 = 0;
    for (auto& in : self.inputs) {
      const Shape ps = in->value.shape();
      if (in->requires_grad) {
        T* gi = in->grad_buffer().data();
        for (int n = 0; n < ps.n; ++n) {
          const T* g = self.grad.plane(n, c0);
          T* dst = gi + static_cast<std::size_t>(n) * ps.c * ps.plane();
          for (std::size_t k = 0; k < ps.c * ps.plane(); ++k) dst[k] += g[k];
        }
      }
      c0 += ps.c;
    }
  });
}

/// Channels [begin, begin + count).
template <class T>
Var<T> slice_channels(const Var<T>& x, int begin, int count) {
  const Shape s = x.shape();
  require(begin >= 0 && count > 0 && begin + count <= s.c, "channel slice out of range");
  const Shape os{s.n, count, s.h, s.w};
  Tensor<T> out(os);
  for (int n = 0; n < s.n; ++n)
    std::copy(x.value().plane(n, begin), x.value().plane(n, begin) + count * s.plane(), out.plane(n, 0));
  return record<T>(std::move(out), {x}, [begin, count](Node<T>& self) {
    auto& in = *self.inputs[0];
    const Shape s = in.value.shape();
    Tensor<T>& gi = in.grad_buffer();
    for (int n = 0; n < s.n; ++n) {
      const T* g = self.grad.plane(n, 0);
      T* dst = gi.plane(n, begin);
      for (std::size_t k = 0; k < count * s.plane(); ++k) dst[k] += g[k];
    }
  });
}

/// Softmax across `groups` equal channel blocks: for every (n, c, y, x) the
/// values x[n, g*C + c, y, x], g = 0..groups-1, are normalised to sum to 1.
template <class T>
Var<T> softmax_groups(const Var<T>& x, int groups) {
  const Shape s = x.shape();
  require(groups >= 1 && s.c % groups == 0, "softmax_groups: channels not divisible by group count");
  const int per = s.c / groups;
  const std::size_t stride = static_cast<std::size_t>(per) * s.plane();
  const std::size_t block = stride;
  Tensor<T> out(s);
  for (int n = 0; n < s.n; ++n) {
    const T* src = x.value().plane(n, 0);
    T* dst = out.plane(n, 0);
    for (std::size_t k = 0; k < block; ++k) {
      T m = -std::numeric_limits<T>::infinity();
      for (int g = 0; g < groups; ++g) m = std::max(m, src[g * stride + k]);
      T z = T(0);
      for (int g = 0; g < groups; ++g) z += (dst[g * stride + k] = std::exp(src[g * stride + k] - m));
      for (int g = 0; g < groups; ++g) dst[g * stride + k] /= z;
    }
  }
  return record<T>(std::move(out), {x}, [groups, stride, block](Node<T>& self) {
    Tensor<T>& gi = self.inputs[0]->grad_buffer();
    for (int n = 0; n < self.value.n(); ++n) {
      const T* y = self.value.plane(n, 0);
      const T* g = self.grad.plane(n, 0);
      T* dst = gi.plane(n, 0);
      for (std::size_t k = 0; k < block; ++k) {
        T dot = T(0);
        for (int q = 0; q < groups; ++q) dot += y[q * stride + k] * g[q * stride + k];
        for (int q = 0; q < groups; ++q) dst[q * stride + k] += y[q * stride + k] * (g[q * stride + k] - dot);
      }
    }
  });
}

/// Separable depthwise filtering without padding: output is
/// (H - K + 1) x (W - K + 1) for a length-K kernel applied along both axes.
template <class T>
Var<T> separable_filter_valid(const Var<T>& x, const std::vector<T>& kernel) {
  const Shape s = x.shape();
  const int k = static_cast<int>(kernel.size());
  require(k >= 1 && s.h >= k && s.w >= k,
          "image " + std::to_string(s.h) + "x" + std::to_string(s.w) + " smaller than the " + std::to_string(k) +
              "x" + std::to_string(k) + " window");
  const int oh = s.h - k + 1, ow = s.w - k + 1;
  Tensor<T> out(Shape{s.n, s.c, oh, ow});
  std::vector<T> tmp(static_cast<std::size_t>(s.h) * ow);
  const int planes = s.n * s.c;
  for (int p = 0; p < planes; ++p) {
    const T* src = x.value().data() + static_cast<std::size_t>(p) * s.plane();
    for (int y = 0; y < s.h; ++y)
      for (int xo = 0; xo < ow; ++xo) {
        T acc = T(0);
        for (int t = 0; t < k; ++t) acc += kernel[t] * src[y * s.w + xo + t];
        tmp[static_cast<std::size_t>(y) * ow + xo] = acc;
      }
    T* dst = out.data() + static_cast<std::size_t>(p) * oh * ow;
    for (int y = 0; y < oh; ++y)
      for (int xo = 0; xo < ow; ++xo) {
        T acc = T(0);
        for (int t = 0; t < k; ++t) acc += kernel[t] * tmp[static_cast<std::size_t>(y + t) * ow + xo];
        dst[y * ow + xo] = acc;
      }
  }
  return record<T>(std::move(out), {x}, [kernel, s, k, oh, ow](Node<T>& self) {
    T* gx = self.inputs[0]->grad_buffer().data();
    std::vector<T> gt(static_cast<std::size_t>(s.h) * ow);
    const int planes = s.n * s.c;
    for (int p = 0; p < planes; ++p) {
      const T* g = self.grad.data() + static_cast<std::size_t>(p) * oh * ow;
      std::fill(gt.begin(), gt.end(), T(0));
      for (int y = 0; y < oh; ++y)
        for (int t = 0; t < k; ++t)
          for (int xo = 0; xo < ow; ++xo) gt[static_cast<std::size_t>(y + t) * ow + xo] += kernel[t] * g[y * ow + xo];
      T* dst = gx + static_cast<std::size_t>(p) * s.plane();
      for (int y = 0; y < s.h; ++y)
        for (int xo = 0; xo < ow; ++xo) {
          const T v = gt[static_cast<std::size_t>(y) * ow + xo];
          for (int t = 0; t < k; ++t) dst[y * s.w + xo + t] += kernel[t] * v;
        }
    }
  });
}

}  // namespace ccl

#endif  // CCL_CORE_SPATIAL_HPP
