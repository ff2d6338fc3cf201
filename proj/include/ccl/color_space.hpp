#ifndef CCL_COLOR_SPACE_HPP
#define CCL_COLOR_SPACE_HPP

#include <Eigen/Dense>
#include <algorithm>
#include <array>
#include <cmath>

#include "ccl/core/autograd.hpp"
#include "ccl/core/tensor.hpp"

// sRGB (D65) <-> CIELAB conversion and the Lab channel split/merge used to
// route chroma through the colour-correction network while the raw
// lightness channel bypasses it.

namespace ccl {

/// CIELAB image: lightness (Nx1xHxW, [0, 100]) and chroma a/b (Nx2xHxW, raw units).
template <class T>
struct LabImage {
  Tensor<T> lightness;
  Tensor<T> chroma;
};

/// Network-facing chroma: a/b divided by kChromaScale, so values lie in [-1, 1].
template <class T>
struct NormalizedChroma {
  Tensor<T> data;
};

template <class T>
struct SplitLab {
  NormalizedChroma<T> chroma;
  Tensor<T> lightness;
};

inline constexpr double kChromaScale = 128.0;

namespace colorimetry {

inline constexpr double kDelta = 6.0 / 29.0;

inline const Eigen::Matrix3d& rgb_to_xyz() {
  static const Eigen::Matrix3d m = (Eigen::Matrix3d() << 0.4124564, 0.3575761, 0.1804375,  //
                                    0.2126729, 0.7151522, 0.0721750,                        //
                                    0.0193339, 0.1191920, 0.9503041)
                                       .finished();
  return m;
}

inline const Eigen::Matrix3d& xyz_to_rgb() {
  static const Eigen::Matrix3d m = rgb_to_xyz().inverse();
  return m;
}

// Reference white is the image of RGB (1,1,1), so greys are exactly achromatic.
inline const Eigen::Vector3d& white() {
  static const Eigen::Vector3d w = rgb_to_xyz() * Eigen::Vector3d::Ones();
  return w;
}

inline double srgb_to_linear(double c) { return c <= 0.04045 ? c / 12.92 : std::pow((c + 0.055) / 1.055, 2.4); }
inline double linear_to_srgb(double l) { return l <= 0.0031308 ? 12.92 * l : 1.055 * std::pow(l, 1.0 / 2.4) - 0.055; }
inline double linear_to_srgb_slope(double l) {
  return l <= 0.0031308 ? 12.92 : (1.055 / 2.4) * std::pow(l, 1.0 / 2.4 - 1.0);
}

inline double lab_f(double t) {
  return t > kDelta * kDelta * kDelta ? std::cbrt(t) : t / (3.0 * kDelta * kDelta) + 4.0 / 29.0;
}
inline double lab_f_inv(double f) { return f > kDelta ? f * f * f : 3.0 * kDelta * kDelta * (f - 4.0 / 29.0); }
inline double lab_f_inv_slope(double f) { return f > kDelta ? 3.0 * f * f : 3.0 * kDelta * kDelta; }

inline std::array<double, 3> pixel_to_lab(double r, double g, double b) {
  const Eigen::Vector3d lin(srgb_to_linear(r), srgb_to_linear(g), srgb_to_linear(b));
  const Eigen::Vector3d xyz = rgb_to_xyz() * lin;
  const double fx = lab_f(xyz[0] / white()[0]);
  const double fy = lab_f(xyz[1] / white()[1]);
  const double fz = lab_f(xyz[2] / white()[2]);
  return {116.0 * fy - 16.0, 500.0 * (fx - fy), 200.0 * (fy - fz)};
}

/// Linear-light RGB before gamma and clamping.
inline Eigen::Vector3d lab_to_linear(double l, double a, double b) {
  const double fy = (l + 16.0) / 116.0;
  const Eigen::Vector3d xyz(white()[0] * lab_f_inv(fy + a / 500.0), white()[1] * lab_f_inv(fy),
                            white()[2] * lab_f_inv(fy - b / 200.0));
  return xyz_to_rgb() * xyz;
}

inline double encode_clamped(double lin) { return std::clamp(linear_to_srgb(lin), 0.0, 1.0); }

}  // namespace colorimetry

/// sRGB image (Nx3xHxW, [0, 1]) to CIELAB under D65.
template <class T>
LabImage<T> rgb_to_lab(const Tensor<T>& rgb) {
  const Shape s = rgb.shape();
  require(s.c == 3, "rgb_to_lab expects 3 channels, got " + std::to_string(s.c));
  require(rgb.all_finite(), "rgb_to_lab: input contains non-finite values");
  LabImage<T> lab{Tensor<T>(Shape{s.n, 1, s.h, s.w}), Tensor<T>(Shape{s.n, 2, s.h, s.w})};
  const std::size_t plane = s.plane();
  for (int n = 0; n < s.n; ++n) {
    const T* r = rgb.plane(n, 0);
    const T* g = rgb.plane(n, 1);
    const T* b = rgb.plane(n, 2);
    T* l = lab.lightness.plane(n, 0);
    T* a = lab.chroma.plane(n, 0);
    T* bb = lab.chroma.plane(n, 1);
    for (std::size_t i = 0; i < plane; ++i) {
      const auto v = colorimetry::pixel_to_lab(r[i], g[i], b[i]);
      l[i] = static_cast<T>(v[0]);
      a[i] = static_cast<T>(v[1]);
      bb[i] = static_cast<T>(v[2]);
    }
  }
  return lab;
}

/// CIELAB to sRGB; out-of-gamut results are clamped to [0, 1].
template <class T>
Tensor<T> lab_to_rgb(const LabImage<T>& lab) {
  const Shape ls = lab.lightness.shape();
  const Shape cs = lab.chroma.shape();
  require(ls.c == 1 && cs.c == 2, "lab_to_rgb expects 1 lightness and 2 chroma channels");
  require(ls.n == cs.n && ls.h == cs.h && ls.w == cs.w, "lab_to_rgb: lightness/chroma extent mismatch");
  require(lab.lightness.all_finite() && lab.chroma.all_finite(), "lab_to_rgb: non-finite input");
  for (T v : lab.lightness.values())
    require(v >= T(-1e-3) && v <= T(100 + 1e-3), "lab_to_rgb: lightness outside [0, 100]");
  Tensor<T> rgb(Shape{ls.n, 3, ls.h, ls.w});
  const std::size_t plane = ls.plane();
  for (int n = 0; n < ls.n; ++n) {
    const T* l = lab.lightness.plane(n, 0);
    const T* a = lab.chroma.plane(n, 0);
    const T* b = lab.chroma.plane(n, 1);
    for (std::size_t i = 0; i < plane; ++i) {
      const auto lin = colorimetry::lab_to_linear(std::clamp<double>(l[i], 0.0, 100.0), a[i], b[i]);
      for (int k = 0; k < 3; ++k) rgb.plane(n, k)[i] = static_cast<T>(colorimetry::encode_clamped(lin[k]));
    }
  }
  return rgb;
}

template <class T>
SplitLab<T> split_lab(const LabImage<T>& lab) {
  Tensor<T> chroma = lab.chroma;
  for (auto& v : chroma.values()) v = static_cast<T>(v / static_cast<T>(kChromaScale));
  return SplitLab<T>{NormalizedChroma<T>{std::move(chroma)}, lab.lightness};
}

template <class T>
LabImage<T> merge_lab(const NormalizedChroma<T>& chroma, const Tensor<T>& lightness) {
  const Shape cs = chroma.data.shape();
  const Shape ls = lightness.shape();
  require(cs.c == 2 && ls.c == 1, "merge_lab expects 2 chroma channels and 1 lightness channel");
  require(cs.n == ls.n && cs.h == ls.h && cs.w == ls.w,
          "merge_lab: chroma " + cs.str() + " and lightness " + ls.str() + " differ in extent");
  Tensor<T> ab = chroma.data;
  for (auto& v : ab.values()) v = static_cast<T>(v * static_cast<T>(kChromaScale));
  return LabImage<T>{lightness, std::move(ab)};
}

/// Differentiable merge + Lab->RGB: normalised chroma (Nx2xHxW, tracked) and
/// a fixed lightness plane (Nx1xHxW) to clamped sRGB (Nx3xHxW).
/// Clamped channels pass no gradient.
template <class T>
Var<T> chroma_to_rgb(const Var<T>& chroma, const Tensor<T>& lightness) {
  const Shape cs = chroma.shape();
  const Shape ls = lightness.shape();
  require(cs.c == 2 && ls.c == 1 && cs.n == ls.n && cs.h == ls.h && cs.w == ls.w,
          "chroma_to_rgb: expected Nx2xHxW chroma and matching Nx1xHxW lightness");
  const std::size_t plane = cs.plane();
  Tensor<T> rgb(Shape{cs.n, 3, cs.h, cs.w});
  for (int n = 0; n < cs.n; ++n) {
    const T* l = lightness.plane(n, 0);
    const T* a = chroma.value().plane(n, 0);
    const T* b = chroma.value().plane(n, 1);
    for (std::size_t i = 0; i < plane; ++i) {
      const auto lin = colorimetry::lab_to_linear(std::clamp<double>(l[i], 0.0, 100.0), a[i] * kChromaScale,
                                                  b[i] * kChromaScale);
      for (int k = 0; k < 3; ++k) rgb.plane(n, k)[i] = static_cast<T>(colorimetry::encode_clamped(lin[k]));
    }
  }
  return record<T>(std::move(rgb), {chroma}, [lightness, plane](Node<T>& self) {
    auto& in = *self.inputs[0];
    Tensor<T>& gin = in.grad_buffer();
    const auto& minv = colorimetry::xyz_to_rgb();
    const auto& wp = colorimetry::white();
    for (int n = 0; n < self.value.n(); ++n) {
      const T* l = lightness.plane(n, 0);
      const T* a = in.value.plane(n, 0);
      const T* b = in.value.plane(n, 1);
      T* ga = gin.plane(n, 0);
      T* gb = gin.plane(n, 1);
      for (std::size_t i = 0; i < plane; ++i) {
        const double fy = (std::clamp<double>(l[i], 0.0, 100.0) + 16.0) / 116.0;
        const double fx = fy + a[i] * kChromaScale / 500.0;
        const double fz = fy - b[i] * kChromaScale / 200.0;
        const double dx_da = wp[0] * colorimetry::lab_f_inv_slope(fx) * kChromaScale / 500.0;
        const double dz_db = -wp[2] * colorimetry::lab_f_inv_slope(fz) * kChromaScale / 200.0;
        const Eigen::Vector3d xyz(wp[0] * colorimetry::lab_f_inv(fx), wp[1] * colorimetry::lab_f_inv(fy),
                                  wp[2] * colorimetry::lab_f_inv(fz));
        const Eigen::Vector3d lin = minv * xyz;
        double acc_a = 0.0, acc_b = 0.0;
        for (int k = 0; k < 3; ++k) {
          if (lin[k] <= 0.0 || lin[k] >= 1.0) continue;
          const double gk = static_cast<double>(self.grad.plane(n, k)[i]) * colorimetry::linear_to_srgb_slope(lin[k]);
          acc_a += gk * minv(k, 0) * dx_da;
          acc_b += gk * minv(k, 2) * dz_db;
        }
        ga[i] += static_cast<T>(acc_a);
        gb[i] += static_cast<T>(acc_b);
      }
    }
  });
}

}  // namespace ccl

#endif  // CCL_COLOR_SPACE_HPP
