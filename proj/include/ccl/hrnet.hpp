#ifndef CCL_HRNET_HPP
#define CCL_HRNET_HPP

#include <array>
#include <cstdint>
#include <string>

#include "ccl/core/layers.hpp"
#include "ccl/core/ops.hpp"

namespace ccl {

struct HrNetConfig {
  /// Channels at full, 1/2 and 1/4 resolution.
  std::array<int, 3> widths{32, 64, 128};
  int kernel_size = 3;

  void validate() const {
    for (int w : widths) require(w >= 8, "HrNetConfig widths must be >= 8, got " + std::to_string(w));
    require(kernel_size >= 1 && kernel_size % 2 == 1, "HrNetConfig.kernel_size must be odd and positive");
  }
  friend bool operator==(const HrNetConfig&, const HrNetConfig&) = default;
};

/// Selective kernel feature fusion of two equally shaped streams
/// (MIRNet-v2 layout): pool the sum, squeeze through a bias-free 1x1 conv
/// with LeakyReLU(0.2) to max(C/8, 4) channels, expand once per branch, and
/// softmax the two branch logits per channel.
template <class T>
class Skff {
 public:
  struct Result {
    Var<T> fused;
    Var<T> weight_a;  // Nx C x1x1
    Var<T> weight_b;
  };

  static int squeeze_width(int channels) { return std::max(channels / 8, 4); }

  Skff() = default;
  Skff(int channels, Rng& rng)
      : channels_(channels),
        squeeze_(channels, squeeze_width(channels), 1, 1, 0, false, rng),
        expand_a_(squeeze_width(channels), channels, 1, 1, 0, false, rng),
        expand_b_(squeeze_width(channels), channels, 1, 1, 0, false, rng) {}

  Result fuse(const Var<T>& a, const Var<T>& b) const {
    require(a.shape() == b.shape(), "SKFF operands differ in shape: " + a.shape().str() + " vs " + b.shape().str());
    require(a.shape().c == channels_, "SKFF expects " + std::to_string(channels_) + " channels, got " +
                                          std::to_string(a.shape().c));
    const Var<T> z = leaky_relu(squeeze_(global_avg_pool(a + b)), T(0.2));
    const Var<T> weights = softmax_groups(concat_channels<T>({expand_a_(z), expand_b_(z)}), 2);
    Result r;
    r.weight_a = slice_channels(weights, 0, channels_);
    r.weight_b = slice_channels(weights, channels_, channels_);
    r.fused = a * r.weight_a + b * r.weight_b;
    return r;
  }

  Var<T> operator()(const Var<T>& a, const Var<T>& b) const { return fuse(a, b).fused; }

  void collect(ParameterList<T>& out, const std::string& prefix) const {
    squeeze_.collect(out, prefix + ".squeeze");
    expand_a_.collect(out, prefix + ".expand_a");
    expand_b_.collect(out, prefix + ".expand_b");
  }

  Conv2d<T>& squeeze() { return squeeze_; }

 private:
  int channels_ = 0;
  Conv2d<T> squeeze_, expand_a_, expand_b_;
};

/// 2x upscaling: 1x1 projection to the target width, then bilinear resize.
/// Projecting first is equivalent (bilinear weights sum to one) and 4x cheaper.
template <class T>
class UpscaleConv {
 public:
  UpscaleConv() = default;
  UpscaleConv(int in_channels, int out_channels, Rng& rng) : proj_(in_channels, out_channels, 1, 1, 0, true, rng) {}

  Var<T> operator()(const Var<T>& x, int out_h, int out_w) const { return upsample_bilinear(proj_(x), out_h, out_w); }

  void collect(ParameterList<T>& out, const std::string& prefix) const { proj_.collect(out, prefix + ".proj"); }

 private:
  Conv2d<T> proj_;
};

/// Haze-removal network on [-1, 1] RGB:
///
///   F_high  = relu(conv(x))
///   F_mid   = down2(F_high)            stride-2 conv
///   F_low   = down4(F_high)            stride-4 conv
///   F̂_mid   = SKFF(F_mid, up(F_low))
///   F̂_high  = SKFF(F_high, up(F̂_mid))
///   out     = tanh(conv(F̂_high))
///
/// Inputs whose sides are not multiples of 4 are reflect-padded at the
/// bottom/right and the output is cropped back.
template <class T>
class HrNet {
 public:
  HrNet(const HrNetConfig& config, std::uint64_t seed) : config_(config) {
    config.validate();
    Rng rng(seed);
    const auto [w0, w1, w2] = config.widths;
    const int k = config.kernel_size;
    head_ = Conv2d<T>(3, w0, k, 1, k / 2, true, rng);
    down2_ = Conv2d<T>(w0, w1, k, 2, k / 2, true, rng);
    down4_ = Conv2d<T>(w0, w2, k, 4, k / 2, true, rng);
    up_low_ = UpscaleConv<T>(w2, w1, rng);
    fuse_mid_ = Skff<T>(w1, rng);
    up_mid_ = UpscaleConv<T>(w1, w0, rng);
    fuse_high_ = Skff<T>(w0, rng);
    tail_ = Conv2d<T>(w0, 3, k, 1, k / 2, true, rng);
  }

  const HrNetConfig& config() const { return config_; }

  Var<T> forward(const Var<T>& x) const {
    const Shape s = x.shape();
    require(s.c == 3, "HR-Net expects 3 channels, got " + std::to_string(s.c));
    const int pad_h = (4 - s.h % 4) % 4;
    const int pad_w = (4 - s.w % 4) % 4;
    if (pad_h == 0 && pad_w == 0) return forward_aligned(x);
    return crop(forward_aligned(pad_reflect(x, 0, pad_h, 0, pad_w)), 0, 0, s.h, s.w);
  }

  /// Inference on a [-1, 1] tensor without graph recording.
  Tensor<T> enhance(const Tensor<T>& x) const {
    NoGradGuard guard;
    return forward(Var<T>(x)).value();
  }

  ParameterList<T> parameters() const {
    ParameterList<T> out;
    head_.collect(out, "head");
    down2_.collect(out, "down2");
    down4_.collect(out, "down4");
    up_low_.collect(out, "up_low");
    fuse_mid_.collect(out, "fuse_mid");
    up_mid_.collect(out, "up_mid");
    fuse_high_.collect(out, "fuse_high");
    tail_.collect(out, "tail");
    return out;
  }

  std::size_t parameter_count() const { return count_parameters(parameters()); }

  static std::size_t expected_parameter_count(const HrNetConfig& c) {
    const std::size_t k2 = static_cast<std::size_t>(c.kernel_size) * c.kernel_size;
    const std::size_t w0 = c.widths[0], w1 = c.widths[1], w2 = c.widths[2];
    auto conv = [&](std::size_t in, std::size_t out) { return in * out * k2 + out; };
    auto skff = [](std::size_t ch) {
      const std::size_t d = Skff<T>::squeeze_width(static_cast<int>(ch));
      return ch * d + 2 * d * ch;
    };
    return conv(3, w0) + conv(w0, w1) + conv(w0, w2) + (w2 * w1 + w1) + skff(w1) + (w1 * w0 + w0) + skff(w0) +
           conv(w0, 3);
  }

 private:
  Var<T> forward_aligned(const Var<T>& x) const {
    const Var<T> high = relu(head_(x));
    const Var<T> mid = down2_(high);
    const Var<T> low = down4_(high);
    const Var<T> mid_fused = fuse_mid_(mid, up_low_(low, mid.shape().h, mid.shape().w));
    const Var<T> high_fused = fuse_high_(high, up_mid_(mid_fused, high.shape().h, high.shape().w));
    return tanh(tail_(high_fused));
  }

  HrNetConfig config_;
  Conv2d<T> head_, down2_, down4_;
  UpscaleConv<T> up_low_, up_mid_;
  Skff<T> fuse_mid_, fuse_high_;
  Conv2d<T> tail_;
};

}  // namespace ccl

#endif  // CCL_HRNET_HPP
