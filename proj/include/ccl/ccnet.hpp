#ifndef CCL_CCNET_HPP
#define CCL_CCNET_HPP

#include <cstdint>
#include <string>
#include <vector>

#include "ccl/color_space.hpp"
#include "ccl/core/layers.hpp"
#include "ccl/core/ops.hpp"

namespace ccl {

struct CcNetConfig {
  int base_width = 64;
  int num_fab = 5;
  int kernel_size = 3;

  void validate() const {
    require(base_width >= 8, "CcNetConfig.base_width must be >= 8, got " + std::to_string(base_width));
    require(num_fab >= 1, "CcNetConfig.num_fab must be >= 1");
    require(kernel_size >= 1 && kernel_size % 2 == 1, "CcNetConfig.kernel_size must be odd and positive");
  }
  friend bool operator==(const CcNetConfig&, const CcNetConfig&) = default;
};

/// Channel-attention bottleneck width: reduction ratio 8, at least one channel.
inline int attention_width(int channels) { return std::max(1, channels / 8); }

/// Feature attention block in the FFA-Net layout:
///
///   r = relu(conv1(x)) + x
///   r = conv2(r)
///   r = r * sigmoid(W2 relu(W1 avgpool(r)))   // channel attention
///   r = r * sigmoid(P2 relu(P1 r))            // pixel attention, one map
///   out = r + x
///
/// W1/W2 and P1/P2 are 1x1 convolutions with reduction 8.
template <class T>
class FeatureAttentionBlock {
 public:
  FeatureAttentionBlock() = default;
  FeatureAttentionBlock(int channels, int kernel, Rng& rng)
      : conv1_(channels, channels, kernel, 1, kernel / 2, true, rng),
        conv2_(channels, channels, kernel, 1, kernel / 2, true, rng),
        ca_reduce_(channels, attention_width(channels), 1, 1, 0, true, rng),
        ca_expand_(attention_width(channels), channels, 1, 1, 0, true, rng),
        pa_reduce_(channels, attention_width(channels), 1, 1, 0, true, rng),
        pa_expand_(attention_width(channels), 1, 1, 1, 0, true, rng) {}

  Var<T> operator()(const Var<T>& x) const {
    Var<T> r = relu(conv1_(x)) + x;
    r = conv2_(r);
    const Var<T> channel_gate = sigmoid(ca_expand_(relu(ca_reduce_(global_avg_pool(r)))));
    r = r * channel_gate;
    const Var<T> pixel_gate = sigmoid(pa_expand_(relu(pa_reduce_(r))));
    r = r * pixel_gate;
    return r + x;
  }

  void collect(ParameterList<T>& out, const std::string& prefix) const {
    conv1_.collect(out, prefix + ".conv1");
    conv2_.collect(out, prefix + ".conv2");
    ca_reduce_.collect(out, prefix + ".ca.reduce");
    ca_expand_.collect(out, prefix + ".ca.expand");
    pa_reduce_.collect(out, prefix + ".pa.reduce");
    pa_expand_.collect(out, prefix + ".pa.expand");
  }

  Conv2d<T>& channel_attention_out() { return ca_expand_; }
  Conv2d<T>& pixel_attention_out() { return pa_expand_; }

 private:
  Conv2d<T> conv1_, conv2_;
  Conv2d<T> ca_reduce_, ca_expand_;
  Conv2d<T> pa_reduce_, pa_expand_;
};

/// Colour-correction network. Works on normalised a/b chroma only:
///
///   F_c   = relu(conv(relu(conv(ab))))       2 -> width -> width
///   F_r   = FAB^num_fab(F_c)
///   delta = conv(relu(conv(F_r)))            width -> width -> 2
///   out   = tanh(ab + delta)
template <class T>
class CcNet {
 public:
  CcNet(const CcNetConfig& config, std::uint64_t seed) : config_(config) {
    config.validate();
    Rng rng(seed);
    const int w = config.base_width;
    const int k = config.kernel_size;
    entry1_ = Conv2d<T>(2, w, k, 1, k / 2, true, rng);
    entry2_ = Conv2d<T>(w, w, k, 1, k / 2, true, rng);
    for (int i = 0; i < config.num_fab; ++i) blocks_.emplace_back(w, k, rng);
    head1_ = Conv2d<T>(w, w, k, 1, k / 2, true, rng);
    head2_ = Conv2d<T>(w, 2, k, 1, k / 2, true, rng);
  }

  const CcNetConfig& config() const { return config_; }

  /// Chroma residual delta(ab) before the skip connection.
  Var<T> residual(const Var<T>& chroma) const {
    require(chroma.shape().c == 2, "CC-Net expects 2 chroma channels, got " + std::to_string(chroma.shape().c));
    Var<T> f = relu(entry2_(relu(entry1_(chroma))));
    for (const auto& block : blocks_) f = block(f);
    return head2_(relu(head1_(f)));
  }

  Var<T> forward(const Var<T>& chroma) const { return tanh(chroma + residual(chroma)); }

  /// Inference on a normalised chroma tensor without graph recording.
  NormalizedChroma<T> correct(const NormalizedChroma<T>& chroma) const {
    NoGradGuard guard;
    return NormalizedChroma<T>{forward(Var<T>(chroma.data)).value()};
  }

  ParameterList<T> parameters() const {
    ParameterList<T> out;
    entry1_.collect(out, "entry.0");
    entry2_.collect(out, "entry.1");
    for (std::size_t i = 0; i < blocks_.size(); ++i) blocks_[i].collect(out, "fab." + std::to_string(i));
    head1_.collect(out, "head.0");
    head2_.collect(out, "head.1");
    return out;
  }

  std::size_t parameter_count() const { return count_parameters(parameters()); }

  /// Analytic count from layer shapes, independent of the allocated tensors.
  static std::size_t expected_parameter_count(const CcNetConfig& c) {
    const std::size_t w = c.base_width, k2 = static_cast<std::size_t>(c.kernel_size) * c.kernel_size;
    const std::size_t r = attention_width(c.base_width);
    const std::size_t conv = w * w * k2 + w;
    const std::size_t fab = 2 * conv + (w * r + r) + (r * w + w) + (w * r + r) + (r + 1);
    return (2 * w * k2 + w) + conv + c.num_fab * fab + conv + (w * 2 * k2 + 2);
  }

  /// Zeroes the last head convolution so delta == 0 and the network is tanh(ab).
  void zero_head() {
    head2_.weight().mutable_value().fill(T(0));
    head2_.bias().mutable_value().fill(T(0));
  }

  std::vector<FeatureAttentionBlock<T>>& blocks() { return blocks_; }

 private:
  CcNetConfig config_;
  Conv2d<T> entry1_, entry2_;
  std::vector<FeatureAttentionBlock<T>> blocks_;
  Conv2d<T> head1_, head2_;
};

}  // namespace ccl

#endif  // CCL_CCNET_HPP
