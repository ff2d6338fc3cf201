#ifndef CCL_METRICS_HPP
#define CCL_METRICS_HPP

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <map>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "ccl/color_space.hpp"
#include "ccl/core/log.hpp"
#include "ccl/core/parallel.hpp"
#include "ccl/image_io.hpp"
#include "ccl/ssim.hpp"

// Full-reference (PSNR, SSIM) and no-reference underwater (UIQM, UCIQE)
// image quality measures. All inputs are single RGB images in [0, 1]
// (1x3xHxW); arithmetic is double precision.

namespace ccl {

inline constexpr double kPsnrCap = 100.0;

template <class T>
double psnr(const Tensor<T>& pred, const Tensor<T>& ref) {
  require(pred.shape() == ref.shape(), "psnr shape mismatch: " + pred.shape().str() + " vs " + ref.shape().str());
  require(pred.size() > 0, "psnr of empty images");
  double se = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const double d = static_cast<double>(pred[i]) - static_cast<double>(ref[i]);
    se += d * d;
  }
  const double mse = se / static_cast<double>(pred.size());
  if (mse == 0.0) return kPsnrCap;
  return std::min(kPsnrCap, 10.0 * std::log10(1.0 / mse));
}

/// Mean windowed SSIM; the same kernel as ssim_loss, so ssim_index == 1 - ssim_loss.
template <class T>
double ssim_index(const Tensor<T>& pred, const Tensor<T>& ref) {
  NoGradGuard guard;
  return static_cast<double>(ssim_mean(Var<T>(pred), Var<T>(ref)).item());
}

// ---------------------------------------------------------------- UIQM

struct UiqmOptions {
  int block = 10;             // EME / AMEE block side; remainder rows and columns are dropped
  double alpha_left = 0.1;    // trimmed fractions of the sorted RG / YB samples
  double alpha_right = 0.1;
};

struct UiqmComponents {
  double uicm = 0.0;    // colourfulness
  double uism = 0.0;    // sharpness
  double uiconm = 0.0;  // contrast
  double uiqm = 0.0;
};

namespace uiqm_detail {

inline constexpr double kC1 = 0.0282, kC2 = 0.2953, kC3 = 3.5753;
inline constexpr double kLambdaR = 0.299, kLambdaG = 0.587, kLambdaB = 0.114;

using Plane = std::vector<double>;

/// Asymmetric alpha-trimmed mean: drop ceil(aL*K) smallest and floor(aR*K) largest.
inline double trimmed_mean(std::vector<double> x, double alpha_left, double alpha_right) {
  std::sort(x.begin(), x.end());
  const std::size_t k = x.size();
  const auto tl = static_cast<std::size_t>(std::ceil(alpha_left * static_cast<double>(k) - 1e-9));
  const auto tr = static_cast<std::size_t>(std::floor(alpha_right * static_cast<double>(k) + 1e-9));
  std::size_t lo = tl, hi = k - std::min(k, tr);
  if (lo >= hi) lo = 0, hi = k;
  double s = 0.0;
  for (std::size_t i = lo; i < hi; ++i) s += x[i];
  return s / static_cast<double>(hi - lo);
}

inline double spread(const std::vector<double>& x, double mu) {
  double s = 0.0;
  for (double v : x) s += (v - mu) * (v - mu);
  return s / static_cast<double>(x.size());
}

/// Sobel gradient magnitude with mirrored borders (edge sample repeated),
/// rescaled so its maximum is 255. An all-flat plane stays zero.
inline Plane sobel_magnitude(const Plane& p, int h, int w) {
  auto at = [&](int y, int x) {
    y = y < 0 ? -y - 1 : (y >= h ? 2 * h - y - 1 : y);
    x = x < 0 ? -x - 1 : (x >= w ? 2 * w - x - 1 : x);
    return p[static_cast<std::size_t>(y) * w + x];
  };
  Plane mag(p.size());
  double peak = 0.0;
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      const double gy = (at(y + 1, x - 1) + 2 * at(y + 1, x) + at(y + 1, x + 1)) -
                        (at(y - 1, x - 1) + 2 * at(y - 1, x) + at(y - 1, x + 1));
      const double gx = (at(y - 1, x + 1) + 2 * at(y, x + 1) + at(y + 1, x + 1)) -
                        (at(y - 1, x - 1) + 2 * at(y, x - 1) + at(y + 1, x - 1));
      const double m = std::hypot(gx, gy);
      mag[static_cast<std::size_t>(y) * w + x] = m;
      peak = std::max(peak, m);
    }
  if (peak > 0.0)
    for (double& m : mag) m *= 255.0 / peak;
  return mag;
}

struct BlockGrid {
  int rows, cols, size_y, size_x;
};

// Images smaller than one block count as a single clipped block.
inline BlockGrid grid(int h, int w, int block) {
  return BlockGrid{std::max(1, h / block), std::max(1, w / block), std::min(block, h), std::min(block, w)};
}

/// Calls f(min, max) over each block of the listed planes (pooled across planes).
template <class F>
void for_each_block(const std::vector<const Plane*>& planes, int h, int w, int block, F&& f) {
  const BlockGrid g = grid(h, w, block);
  for (int by = 0; by < g.rows; ++by)
    for (int bx = 0; bx < g.cols; ++bx) {
      double lo = std::numeric_limits<double>::infinity(), hi = -lo;
      for (const Plane* p : planes)
        for (int y = by * g.size_y; y < (by + 1) * g.size_y; ++y)
          for (int x = bx * g.size_x; x < (bx + 1) * g.size_x; ++x) {
            const double v = (*p)[static_cast<std::size_t>(y) * w + x];
            lo = std::min(lo, v);
            hi = std::max(hi, v);
          }
      f(lo, hi);
    }
}

/// EME = 2/(k1 k2) * sum log(max/min); blocks with a zero extreme contribute 0.
inline double eme(const Plane& p, int h, int w, int block) {
  const BlockGrid g = grid(h, w, block);
  double acc = 0.0;
  for_each_block({&p}, h, w, block, [&](double lo, double hi) {
    if (lo > 0.0 && hi > 0.0) acc += std::log(hi / lo);
  });
  return 2.0 / (g.rows * g.cols) * acc;
}

/// logAMEE with ordinary arithmetic: -1/(k1 k2) * sum r log r, r = (max-min)/(max+min),
/// extremes taken over all three channels of a block.
inline double log_amee(const Plane& r, const Plane& g, const Plane& b, int h, int w, int block) {
  const BlockGrid bg = grid(h, w, block);
  double acc = 0.0;
  for_each_block({&r, &g, &b}, h, w, block, [&](double lo, double hi) {
    const double top = hi - lo, bot = hi + lo;
    if (top > 0.0 && bot > 0.0) acc += (top / bot) * std::log(top / bot);
  });
  return -1.0 / (bg.rows * bg.cols) * acc;
}

}  // namespace uiqm_detail

/// UIQM components on the 0..255 scale (colourfulness from trimmed RG/YB
/// statistics, Sobel-EME sharpness, logAMEE contrast).
template <class T>
UiqmComponents uiqm_components(const Tensor<T>& img, const UiqmOptions& opt = {}) {
  using namespace uiqm_detail;
  require(img.n() == 1 && img.c() == 3, "uiqm expects a single RGB image, got " + img.shape().str());
  require(img.all_finite(), "uiqm: non-finite input");
  require(opt.block >= 1, "uiqm block size must be positive");
  const int h = img.h(), w = img.w();
  const std::size_t n = img.shape().plane();
  Plane r(n), g(n), b(n);
  for (std::size_t i = 0; i < n; ++i) {
    r[i] = 255.0 * static_cast<double>(img.plane(0, 0)[i]);
    g[i] = 255.0 * static_cast<double>(img.plane(0, 1)[i]);
    b[i] = 255.0 * static_cast<double>(img.plane(0, 2)[i]);
  }

  UiqmComponents c;
  std::vector<double> rg(n), yb(n);
  for (std::size_t i = 0; i < n; ++i) {
    rg[i] = r[i] - g[i];
    yb[i] = 0.5 * (r[i] + g[i]) - b[i];
  }
  const double mu_rg = trimmed_mean(rg, opt.alpha_left, opt.alpha_right);
  const double mu_yb = trimmed_mean(yb, opt.alpha_left, opt.alpha_right);
  c.uicm = -0.0268 * std::sqrt(mu_rg * mu_rg + mu_yb * mu_yb) +
           0.1586 * std::sqrt(spread(rg, mu_rg) + spread(yb, mu_yb));

  auto edge_eme = [&](const Plane& p) {
    Plane edges = sobel_magnitude(p, h, w);
    for (std::size_t i = 0; i < n; ++i) edges[i] *= p[i];
    return eme(edges, h, w, opt.block);
  };
  c.uism = kLambdaR * edge_eme(r) + kLambdaG * edge_eme(g) + kLambdaB * edge_eme(b);
  c.uiconm = log_amee(r, g, b, h, w, opt.block);
  c.uiqm = kC1 * c.uicm + kC2 * c.uism + kC3 * c.uiconm;
  return c;
}

template <class T>
double uiqm(const Tensor<T>& img, const UiqmOptions& opt = {}) {
  return uiqm_components(img, opt).uiqm;
}

// ---------------------------------------------------------------- UCIQE

struct UciqeComponents {
  double chroma_std = 0.0;      // population std of sqrt(a^2 + b^2) / 100
  double lum_contrast = 0.0;    // L/100 at the 99th minus the 1st percentile
  double mean_saturation = 0.0; // HSV saturation
  double uciqe = 0.0;
};

template <class T>
UciqeComponents uciqe_components(const Tensor<T>& img) {
  require(img.n() == 1 && img.c() == 3, "uciqe expects a single RGB image, got " + img.shape().str());
  const Tensor<double> rgb = img.template cast<double>();
  const LabImage<double> lab = rgb_to_lab(rgb);
  const std::size_t n = rgb.shape().plane();

  UciqeComponents c;
  std::vector<double> lum(n);
  double sum_c = 0.0, sum_c2 = 0.0, sum_s = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double a = lab.chroma.plane(0, 0)[i], bb = lab.chroma.plane(0, 1)[i];
    const double chroma = std::sqrt(a * a + bb * bb) / 100.0;
    sum_c += chroma;
    sum_c2 += chroma * chroma;
    lum[i] = lab.lightness.plane(0, 0)[i] / 100.0;
    const double r = rgb.plane(0, 0)[i], g = rgb.plane(0, 1)[i], b = rgb.plane(0, 2)[i];
    const double hi = std::max({r, g, b}), lo = std::min({r, g, b});
    sum_s += hi > 0.0 ? (hi - lo) / hi : 0.0;
  }
  const double mean_c = sum_c / static_cast<double>(n);
  c.chroma_std = std::sqrt(std::max(0.0, sum_c2 / static_cast<double>(n) - mean_c * mean_c));
  std::sort(lum.begin(), lum.end());
  const auto pick = [&](double q) { return lum[std::min(n - 1, static_cast<std::size_t>(std::floor(q * n)))]; };
  c.lum_contrast = pick(0.99) - pick(0.01);
  c.mean_saturation = sum_s / static_cast<double>(n);
  c.uciqe = 0.4680 * c.chroma_std + 0.2745 * c.lum_contrast + 0.2576 * c.mean_saturation;
  return c;
}

template <class T>
double uciqe(const Tensor<T>& img) {
  return uciqe_components(img).uciqe;
}

// ---------------------------------------------------------------- reports

struct MetricRow {
  std::string id;
  std::optional<double> psnr;
  std::optional<double> ssim;
  double uiqm = 0.0;
  double uciqe = 0.0;
};

class EvaluationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct MetricReport {
  bool has_reference = false;
  std::vector<MetricRow> rows;  // sorted by id
  MetricRow mean;
  std::vector<std::string> skipped;

  /// Sorts rows and recomputes the mean row.
  void finalize() {
    std::sort(rows.begin(), rows.end(), [](const MetricRow& a, const MetricRow& b) { return a.id < b.id; });
    mean = MetricRow{"mean", std::nullopt, std::nullopt, 0.0, 0.0};
    if (rows.empty()) return;
    double p = 0, s = 0, q = 0, u = 0;
    for (const auto& r : rows) {
      if (has_reference) {
        p += r.psnr.value_or(0.0);
        s += r.ssim.value_or(0.0);
      }
      q += r.uiqm;
      u += r.uciqe;
    }
    const double k = static_cast<double>(rows.size());
    if (has_reference) {
      mean.psnr = p / k;
      mean.ssim = s / k;
    }
    mean.uiqm = q / k;
    mean.uciqe = u / k;
  }

  std::string to_csv() const {
    std::ostringstream os;
    os.precision(12);
    os << (has_reference ? "id,psnr,ssim,uiqm,uciqe\n" : "id,uiqm,uciqe\n");
    auto line = [&](const MetricRow& r) {
      os << r.id;
      if (has_reference) os << ',' << r.psnr.value_or(NAN) << ',' << r.ssim.value_or(NAN);
      os << ',' << r.uiqm << ',' << r.uciqe << '\n';
    };
    for (const auto& r : rows) line(r);
    line(mean);
    return os.str();
  }

  void write_csv(const std::filesystem::path& path) const {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream f(path, std::ios::binary);
    if (!f) throw EvaluationError("cannot write " + path.string());
    f << to_csv();
  }
};

/// Scores every image in `pred_dir`; with `ref_dir`, pairs by file stem and
/// adds PSNR/SSIM. Unpaired or unreadable images are skipped with a
/// warning; an error is raised if nothing could be scored.
inline MetricReport evaluate_dataset(const std::filesystem::path& pred_dir,
                                     const std::optional<std::filesystem::path>& ref_dir, int jobs = 1) {
  const auto preds = list_images(pred_dir);
  if (preds.empty()) throw EvaluationError("no images found in " + pred_dir.string());
  std::map<std::string, std::filesystem::path> refs;
  if (ref_dir) {
    if (!std::filesystem::is_directory(*ref_dir)) throw EvaluationError("reference directory not found: " + ref_dir->string());
    for (const auto& p : list_images(*ref_dir)) refs.emplace(p.stem().string(), p);
  }

  MetricReport report;
  report.has_reference = ref_dir.has_value();
  std::vector<std::optional<MetricRow>> slots(preds.size());
  std::vector<std::string> reasons(preds.size());
  parallel_for(preds.size(), jobs, [&](std::size_t i) {
    const std::string id = preds[i].stem().string();
    try {
      const Tensor<float> pred = read_rgb(preds[i]);
      MetricRow row{id, std::nullopt, std::nullopt, uiqm(pred), uciqe(pred)};
      if (ref_dir) {
        const auto it = refs.find(id);
        if (it == refs.end()) {
          reasons[i] = "no reference for " + id;
          return;
        }
        const Tensor<float> ref = read_rgb(it->second);
        if (ref.shape() != pred.shape()) {
          reasons[i] = "size mismatch for " + id + ": " + pred.shape().str() + " vs " + ref.shape().str();
          return;
        }
        row.psnr = psnr(pred, ref);
        row.ssim = ssim_index(pred.cast<double>(), ref.cast<double>());
      }
      slots[i] = std::move(row);
    } catch (const std::exception& e) {
      reasons[i] = id + ": " + e.what();
    }
  });
  for (std::size_t i = 0; i < preds.size(); ++i) {
    if (slots[i]) {
      report.rows.push_back(std::move(*slots[i]));
    } else {
      log::warn("skipping " + reasons[i]);
      report.skipped.push_back(preds[i].stem().string());
    }
  }
  if (report.rows.empty()) throw EvaluationError("every image was skipped; nothing to evaluate");
  report.finalize();
  return report;
}

}  // namespace ccl

#endif  // CCL_METRICS_HPP
