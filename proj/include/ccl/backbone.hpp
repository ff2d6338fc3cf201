#ifndef CCL_BACKBONE_HPP
#define CCL_BACKBONE_HPP

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "ccl/core/archive.hpp"
#include "ccl/core/layers.hpp"
#include "ccl/core/ops.hpp"

namespace ccl {

/// Frozen VGG-19 trunk up to conv5_1, tapping the ReLU outputs of the 1st,
/// 3rd, 5th, 9th and 13th convolutions (conv1_1, conv2_1, conv3_1, conv4_1,
/// conv5_1). Inputs are RGB in [0, 1]; ImageNet mean/std normalisation is
/// applied internally.
///
/// Pretrained weights come from a tensor archive using torchvision's
/// parameter names (`features.<idx>.weight|bias`). Without one, a seeded
/// random trunk stands in; `width_divisor` narrows it for cheap offline runs.
template <class T>
class FeatureExtractor {
 public:
  static constexpr int kTaps = 5;
  static constexpr std::array<int, 13> kChannels{64, 64, 128, 128, 256, 256, 256, 256, 512, 512, 512, 512, 512};
  static constexpr std::array<int, 13> kTorchIndex{0, 2, 5, 7, 10, 12, 14, 16, 19, 21, 23, 25, 28};
  static constexpr std::array<int, kTaps> kTapOrdinals{1, 3, 5, 9, 13};

  static FeatureExtractor random(std::uint64_t seed, int width_divisor = 1) {
    require(width_divisor >= 1 && 64 % width_divisor == 0, "backbone width divisor must divide 64");
    FeatureExtractor fx;
    fx.width_divisor_ = width_divisor;
    Rng rng(seed);
    int in = 3;
    for (int c : kChannels) {
      const int out = c / width_divisor;
      fx.convs_.emplace_back(in, out, 3, 1, 1, true, rng, InitScheme::he_uniform);
      fx.convs_.back().freeze();
      in = out;
    }
    return fx;
  }

  static FeatureExtractor from_archive(const TensorArchive& archive) {
    FeatureExtractor fx = random(0, 1);
    ParameterList<T> params = fx.named_parameters();
    TensorArchive subset;
    for (const auto& p : params) {
      auto it = archive.find(p.name);
      if (it == archive.end()) throw ValidationError("backbone archive is missing " + p.name);
      subset.emplace(p.name, it->second);
    }
    load_into(params, subset);
    fx.pretrained_ = true;
    return fx;
  }

  static FeatureExtractor load(const std::filesystem::path& path) { return from_archive(read_archive(path)); }

  bool pretrained() const { return pretrained_; }
  int width_divisor() const { return width_divisor_; }

  /// Five tapped feature maps for an Nx3xHxW image in [0, 1]. Sides must be
  /// at least 16 pixels so the fifth tap (after four poolings) is non-empty.
  std::vector<Var<T>> features(const Var<T>& rgb) const {
    const Shape s = rgb.shape();
    require(s.c == 3, "feature extractor expects RGB input");
    require(s.h >= 16 && s.w >= 16, "feature extractor needs images of at least 16x16, got " + s.str());
    static const Var<T> mean = constant(Tensor<T>(Shape{1, 3, 1, 1}, std::vector<T>{T(0.485), T(0.456), T(0.406)}));
    static const Var<T> stdev = constant(Tensor<T>(Shape{1, 3, 1, 1}, std::vector<T>{T(0.229), T(0.224), T(0.225)}));
    Var<T> x = (rgb - mean) / stdev;
    std::vector<Var<T>> taps;
    taps.reserve(kTaps);
    std::size_t next_tap = 0;
    for (int i = 0; i < 13; ++i) {
      if (i == 2 || i == 4 || i == 8 || i == 12) x = max_pool2x2(x);
      x = relu(convs_[i](x));
      if (next_tap < kTaps && i + 1 == kTapOrdinals[next_tap]) {
        taps.push_back(x);
        ++next_tap;
      }
    }
    return taps;
  }

  ParameterList<T> named_parameters() const {
    ParameterList<T> out;
    for (std::size_t i = 0; i < convs_.size(); ++i)
      convs_[i].collect(out, "features." + std::to_string(kTorchIndex[i]));
    return out;
  }

 private:
  FeatureExtractor() = default;

  std::vector<Conv2d<T>> convs_;
  bool pretrained_ = false;
  int width_divisor_ = 1;
};

}  // namespace ccl

#endif  // CCL_BACKBONE_HPP
