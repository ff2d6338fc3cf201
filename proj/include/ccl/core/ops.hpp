#ifndef CCL_CORE_OPS_HPP
#define CCL_CORE_OPS_HPP

#include <cmath>
#include <vector>

#include "ccl/core/autograd.hpp"
#include "ccl/core/tensor.hpp"

// Element-wise and reduction ops. Binary ops broadcast NumPy style over the
// four NCHW axes: every extent must be 1 or equal to the other operand's.

namespace ccl {

template <class T>
Var<T> constant(Tensor<T> value) {
  return Var<T>(std::move(value), false);
}

namespace detail {

inline Shape broadcast_shape(const Shape& a, const Shape& b) {
  auto dim = [&](int x, int y, const char* axis) {
    require(x == y || x == 1 || y == 1,
            std::string("cannot broadcast ") + a.str() + " with " + b.str() + " along " + axis);
    return std::max(x, y);
  };
  return Shape{dim(a.n, b.n, "N"), dim(a.c, b.c, "C"), dim(a.h, b.h, "H"), dim(a.w, b.w, "W")};
}

struct BroadcastStrides {
  std::size_t n, c, h, w;
};

inline BroadcastStrides broadcast_strides(const Shape& s) {
  return BroadcastStrides{s.n == 1 ? 0 : static_cast<std::size_t>(s.c) * s.plane(),
                          s.c == 1 ? 0 : s.plane(), s.h == 1 ? 0 : static_cast<std::size_t>(s.w),
                          s.w == 1 ? std::size_t{0} : std::size_t{1}};
}

// Visits every output coordinate with the matching flat offsets into a and b.
template <class F>
void for_each_broadcast(const Shape& out, const Shape& a, const Shape& b, F&& f) {
  if (a == out && b == out) {
    const std::size_t total = out.numel();
    for (std::size_t i = 0; i < total; ++i) f(i, i, i);
    return;
  }
  const auto sa = broadcast_strides(a);
  const auto sb = broadcast_strides(b);
  std::size_t o = 0;
  for (int n = 0; n < out.n; ++n)
    for (int c = 0; c < out.c; ++c)
      for (int y = 0; y < out.h; ++y) {
        std::size_t ia = n * sa.n + c * sa.c + y * sa.h;
        std::size_t ib = n * sb.n + c * sb.c + y * sb.h;
        for (int x = 0; x < out.w; ++x, ++o, ia += sa.w, ib += sb.w) f(o, ia, ib);
      }
}

// `da(x, y, out)` and `db(x, y, out)` are the partial derivatives of f.
template <class T, class F, class DA, class DB>
Var<T> binary(const Var<T>& a, const Var<T>& b, F f, DA da, DB db) {
  const Shape out_shape = broadcast_shape(a.shape(), b.shape());
  Tensor<T> out(out_shape);
  const T* pa = a.value().data();
  const T* pb = b.value().data();
  T* po = out.data();
  for_each_broadcast(out_shape, a.shape(), b.shape(),
                     [&](std::size_t o, std::size_t ia, std::size_t ib) { po[o] = f(pa[ia], pb[ib]); });
  return record<T>(std::move(out), {a, b}, [da, db](Node<T>& self) {
    auto& na = *self.inputs[0];
    auto& nb = *self.inputs[1];
    const T* xa = na.value.data();
    const T* xb = nb.value.data();
    const T* y = self.value.data();
    const T* g = self.grad.data();
    T* ga = na.requires_grad ? na.grad_buffer().data() : nullptr;
    T* gb = nb.requires_grad ? nb.grad_buffer().data() : nullptr;
    for_each_broadcast(self.value.shape(), na.value.shape(), nb.value.shape(),
                       [&](std::size_t o, std::size_t ia, std::size_t ib) {
                         if (ga) ga[ia] += g[o] * da(xa[ia], xb[ib], y[o]);
                         if (gb) gb[ib] += g[o] * db(xa[ia], xb[ib], y[o]);
                       });
  });
}

// `df(x, y)` is the derivative of f at input x with output y.
template <class T, class F, class DF>
Var<T> unary(const Var<T>& a, F f, DF df) {
  Tensor<T> out(a.shape());
  const T* pa = a.value().data();
  T* po = out.data();
  const std::size_t total = out.size();
  for (std::size_t i = 0; i < total; ++i) po[i] = f(pa[i]);
  return record<T>(std::move(out), {a}, [df](Node<T>& self) {
    auto& in = *self.inputs[0];
    const T* x = in.value.data();
    const T* y = self.value.data();
    const T* g = self.grad.data();
    T* gi = in.grad_buffer().data();
    const std::size_t total = self.value.size();
    for (std::size_t i = 0; i < total; ++i) gi[i] += g[i] * df(x[i], y[i]);
  });
}

}  // namespace detail

template <class T>
Var<T> add(const Var<T>& a, const Var<T>& b) {
  return detail::binary(
      a, b, [](T x, T y) { return x + y; }, [](T, T, T) { return T(1); }, [](T, T, T) { return T(1); });
}

template <class T>
Var<T> sub(const Var<T>& a, const Var<T>& b) {
  return detail::binary(
      a, b, [](T x, T y) { return x - y; }, [](T, T, T) { return T(1); }, [](T, T, T) { return T(-1); });
}

template <class T>
Var<T> mul(const Var<T>& a, const Var<T>& b) {
  return detail::binary(
      a, b, [](T x, T y) { return x * y; }, [](T, T y, T) { return y; }, [](T x, T, T) { return x; });
}

template <class T>
Var<T> div(const Var<T>& a, const Var<T>& b) {
  return detail::binary(
      a, b, [](T x, T y) { return x / y; }, [](T, T y, T) { return T(1) / y; },
      [](T x, T y, T) { return -x / (y * y); });
}

template <class T>
Var<T> scale(const Var<T>& a, T s) {
  return detail::unary(a, [s](T x) { return x * s; }, [s](T, T) { return s; });
}

template <class T>
Var<T> add_scalar(const Var<T>& a, T s) {
  return detail::unary(a, [s](T x) { return x + s; }, [](T, T) { return T(1); });
}

template <class T>
Var<T> scale_by(const Var<T>& a, double s) {
  return scale(a, static_cast<T>(s));
}

/// [-1, 1] -> [0, 1].
template <class T>
Var<T> to_unit_range(const Var<T>& a) {
  return detail::unary(a, [](T x) { return (x + T(1)) * T(0.5); }, [](T, T) { return T(0.5); });
}

template <class T>
Tensor<T> to_unit_range(Tensor<T> t) {
  for (auto& v : t.values()) v = (v + T(1)) * T(0.5);
  return t;
}

/// [0, 1] -> [-1, 1].
template <class T>
Tensor<T> to_signed_range(Tensor<T> t) {
  for (auto& v : t.values()) v = v * T(2) - T(1);
  return t;
}

template <class T>
Var<T> relu(const Var<T>& a) {
  return detail::unary(
      a, [](T x) { return x > T(0) ? x : T(0); }, [](T x, T) { return x > T(0) ? T(1) : T(0); });
}

template <class T>
Var<T> leaky_relu(const Var<T>& a, T slope) {
  return detail::unary(
      a, [slope](T x) { return x > T(0) ? x : slope * x; },
      [slope](T x, T) { return x > T(0) ? T(1) : slope; });
}

template <class T>
Var<T> sigmoid(const Var<T>& a) {
  return detail::unary(
      a,
      [](T x) {
        if (x >= T(0)) return T(1) / (T(1) + std::exp(-x));
        const T e = std::exp(x);
        return e / (T(1) + e);
      },
      [](T, T y) { return y * (T(1) - y); });
}

template <class T>
Var<T> tanh(const Var<T>& a) {
  return detail::unary(a, [](T x) { return std::tanh(x); }, [](T, T y) { return T(1) - y * y; });
}

template <class T>
Var<T> abs(const Var<T>& a) {
  // Subgradient 0 at the kink.
  return detail::unary(
      a, [](T x) { return std::abs(x); },
      [](T x, T) { return x > T(0) ? T(1) : (x < T(0) ? T(-1) : T(0)); });
}

template <class T>
Var<T> square(const Var<T>& a) {
  return detail::unary(a, [](T x) { return x * x; }, [](T x, T) { return T(2) * x; });
}

template <class T>
Var<T> sum(const Var<T>& a) {
  Tensor<T> out = Tensor<T>::scalar(static_cast<T>(a.value().sum()));
  return record<T>(std::move(out), {a}, [](Node<T>& self) {
    auto& in = *self.inputs[0];
    const T g = self.grad[0];
    for (auto& v : in.grad_buffer().values()) v += g;
  });
}

template <class T>
Var<T> mean(const Var<T>& a) {
  require(a.value().size() > 0, "mean of an empty tensor");
  return scale(sum(a), T(1) / static_cast<T>(a.value().size()));
}

template <class T>
Var<T> operator+(const Var<T>& a, const Var<T>& b) { return add(a, b); }
template <class T>
Var<T> operator-(const Var<T>& a, const Var<T>& b) { return sub(a, b); }
template <class T>
Var<T> operator*(const Var<T>& a, const Var<T>& b) { return mul(a, b); }
template <class T>
Var<T> operator/(const Var<T>& a, const Var<T>& b) { return div(a, b); }
template <class T>
Var<T> operator*(const Var<T>& a, T s) { return scale(a, s); }
template <class T>
Var<T> operator*(T s, const Var<T>& a) { return scale(a, s); }
template <class T>
Var<T> operator+(const Var<T>& a, T s) { return add_scalar(a, s); }

}  // namespace ccl

#endif  // CCL_CORE_OPS_HPP
