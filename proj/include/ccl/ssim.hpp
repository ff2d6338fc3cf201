#ifndef CCL_SSIM_HPP
#define CCL_SSIM_HPP

#include <cmath>
#include <string>
#include <vector>

#include "ccl/core/ops.hpp"
#include "ccl/core/spatial.hpp"

namespace ccl {

struct SsimOptions {
  int window = 11;
  double sigma = 1.5;
  double k1 = 0.01;
  double k2 = 0.03;
  double dynamic_range = 1.0;
};

template <class T>
std::vector<T> gaussian_window(int size, double sigma) {
  std::vector<double> w(static_cast<std::size_t>(size));
  double total = 0.0;
  const double centre = (size - 1) / 2.0;
  for (int i = 0; i < size; ++i) total += (w[i] = std::exp(-(i - centre) * (i - centre) / (2.0 * sigma * sigma)));
  std::vector<T> out(w.size());
  for (std::size_t i = 0; i < w.size(); ++i) out[i] = static_cast<T>(w[i] / total);
  return out;
}

/// Mean SSIM over every valid window position, channel and batch item.
/// Windows are Gaussian and never leave the image, so both sides must be at
/// least `window` pixels.
template <class T>
Var<T> ssim_mean(const Var<T>& x, const Var<T>& y, const SsimOptions& opt = {}) {
  require(x.shape() == y.shape(), "SSIM operands differ in shape: " + x.shape().str() + " vs " + y.shape().str());
  require(x.shape().h >= opt.window && x.shape().w >= opt.window,
          "SSIM needs images of at least " + std::to_string(opt.window) + "x" + std::to_string(opt.window) +
              ", got " + x.shape().str());
  const auto kernel = gaussian_window<T>(opt.window, opt.sigma);
  const T c1 = static_cast<T>(std::pow(opt.k1 * opt.dynamic_range, 2));
  const T c2 = static_cast<T>(std::pow(opt.k2 * opt.dynamic_range, 2));
  const auto blur = [&](const Var<T>& v) { return separable_filter_valid(v, kernel); };
  const Var<T> mu_x = blur(x);
  const Var<T> mu_y = blur(y);
  const Var<T> mu_xx = mu_x * mu_x;
  const Var<T> mu_yy = mu_y * mu_y;
  const Var<T> mu_xy = mu_x * mu_y;
  const Var<T> var_x = blur(x * x) - mu_xx;
  const Var<T> var_y = blur(y * y) - mu_yy;
  const Var<T> cov = blur(x * y) - mu_xy;
  const Var<T> num = (mu_xy * T(2) + c1) * (cov * T(2) + c2);
  const Var<T> den = (mu_xx + mu_yy + c1) * (var_x + var_y + c2);
  return mean(num / den);
}

}  // namespace ccl

#endif  // CCL_SSIM_HPP
