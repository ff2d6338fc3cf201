#ifndef CCL_IMAGE_IO_HPP
#define CCL_IMAGE_IO_HPP

#include <algorithm>
#include <cctype>
#include <cmath>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

#include <opencv2/core.hpp>
#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

#include "ccl/core/tensor.hpp"

// 8-bit image files <-> 1x3xHxW RGB tensors in [0, 1].

namespace ccl {

class ImageIoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

namespace fs = std::filesystem;

inline bool is_image_file(const fs::path& p) {
  std::string ext = p.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
  return ext == ".png" || ext == ".jpg" || ext == ".jpeg";
}

/// Regular image files directly inside `dir`, sorted by filename.
inline std::vector<fs::path> list_images(const fs::path& dir) {
  std::vector<fs::path> out;
  if (!fs::is_directory(dir)) return out;
  for (const auto& e : fs::directory_iterator(dir))
    if (e.is_regular_file() && is_image_file(e.path())) out.push_back(e.path());
  std::sort(out.begin(), out.end(), [](const fs::path& a, const fs::path& b) { return a.filename() < b.filename(); });
  return out;
}

/// 8-bit BGR(A)/gray Mat to an RGB tensor. Alpha is dropped; gray is replicated.
inline Tensor<float> mat_to_tensor(const cv::Mat& src) {
  require(!src.empty(), "mat_to_tensor: empty image");
  cv::Mat bgr;
  if (src.channels() == 1)
    cv::cvtColor(src, bgr, cv::COLOR_GRAY2BGR);
  else if (src.channels() == 4)
    cv::cvtColor(src, bgr, cv::COLOR_BGRA2BGR);
  else
    bgr = src;
  cv::Mat f;
  const double scale = bgr.depth() == CV_16U ? 1.0 / 65535.0 : 1.0 / 255.0;
  bgr.convertTo(f, CV_32FC3, scale);
  Tensor<float> t(Shape{1, 3, f.rows, f.cols});
  for (int y = 0; y < f.rows; ++y) {
    const auto* row = f.ptr<cv::Vec3f>(y);
    for (int x = 0; x < f.cols; ++x) {
      t(0, 0, y, x) = row[x][2];
      t(0, 1, y, x) = row[x][1];
      t(0, 2, y, x) = row[x][0];
    }
  }
  return t;
}

/// Sample `n` of an RGB tensor to an 8-bit BGR Mat (values clamped, rounded).
inline cv::Mat tensor_to_mat(const Tensor<float>& t, int n = 0) {
  require(t.c() == 3, "tensor_to_mat expects 3 channels");
  cv::Mat out(t.h(), t.w(), CV_8UC3);
  auto to8 = [](float v) {
    const float c = std::clamp(std::isfinite(v) ? v : 0.0f, 0.0f, 1.0f);
    return static_cast<unsigned char>(std::lround(c * 255.0f));
  };
  for (int y = 0; y < t.h(); ++y) {
    auto* row = out.ptr<cv::Vec3b>(y);
    for (int x = 0; x < t.w(); ++x)
      row[x] = cv::Vec3b(to8(t(n, 2, y, x)), to8(t(n, 1, y, x)), to8(t(n, 0, y, x)));
  }
  return out;
}

inline Tensor<float> read_rgb(const fs::path& path) {
  const cv::Mat img = cv::imread(path.string(), cv::IMREAD_UNCHANGED);
  if (img.empty()) throw ImageIoError("cannot read image " + path.string());
  if (img.depth() != CV_8U && img.depth() != CV_16U)
    throw ImageIoError("unsupported pixel depth in " + path.string());
  return mat_to_tensor(img);
}

/// Writes an 8-bit sRGB PNG. Compression settings are fixed so the bytes
/// depend only on the pixel values.
inline void write_png(const fs::path& path, const Tensor<float>& rgb, int n = 0) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  const std::vector<int> params{cv::IMWRITE_PNG_COMPRESSION, 6, cv::IMWRITE_PNG_STRATEGY,
                                cv::IMWRITE_PNG_STRATEGY_DEFAULT};
  if (!cv::imwrite(path.string(), tensor_to_mat(rgb, n), params))
    throw ImageIoError("cannot write image " + path.string());
}

/// Area averaging when shrinking (anti-aliased), bilinear when enlarging.
inline Tensor<float> resize_rgb(const Tensor<float>& rgb, int height, int width) {
  require(height > 0 && width > 0, "resize target must be positive");
  require(rgb.n() == 1 && rgb.c() == 3, "resize_rgb expects a single RGB image");
  if (rgb.h() == height && rgb.w() == width) return rgb;
  cv::Mat planar(rgb.h(), rgb.w(), CV_32FC3);
  for (int y = 0; y < rgb.h(); ++y) {
    auto* row = planar.ptr<cv::Vec3f>(y);
    for (int x = 0; x < rgb.w(); ++x) row[x] = cv::Vec3f(rgb(0, 0, y, x), rgb(0, 1, y, x), rgb(0, 2, y, x));
  }
  const bool shrinking = height * width < rgb.h() * rgb.w();
  cv::Mat resized;
  cv::resize(planar, resized, cv::Size(width, height), 0, 0, shrinking ? cv::INTER_AREA : cv::INTER_LINEAR);
  Tensor<float> out(Shape{1, 3, height, width});
  for (int y = 0; y < height; ++y) {
    const auto* row = resized.ptr<cv::Vec3f>(y);
    for (int x = 0; x < width; ++x)
      for (int k = 0; k < 3; ++k) out(0, k, y, x) = std::clamp(row[x][k], 0.0f, 1.0f);
  }
  return out;
}

}  // namespace ccl

#endif  // CCL_IMAGE_IO_HPP
