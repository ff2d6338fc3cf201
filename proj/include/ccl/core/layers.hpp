#ifndef CCL_CORE_LAYERS_HPP
#define CCL_CORE_LAYERS_HPP

#include <cmath>
#include <string>
#include <vector>

#include "ccl/core/autograd.hpp"
#include "ccl/core/random.hpp"
#include "ccl/core/spatial.hpp"

namespace ccl {

template <class T>
struct NamedParameter {
  std::string name;
  Var<T> var;
};

template <class T>
using ParameterList = std::vector<NamedParameter<T>>;

template <class T>
std::size_t count_parameters(const ParameterList<T>& params) {
  std::size_t total = 0;
  for (const auto& p : params) total += p.var.value().size();
  return total;
}

template <class T>
void zero_grads(ParameterList<T>& params) {
  for (auto& p : params) p.var.zero_grad();
}

/// Weight initialisation: uniform in [-bound, bound] with bound = gain / sqrt(fan_in).
enum class InitScheme {
  fan_in_uniform,  // gain 1
  he_uniform,      // gain sqrt(6), keeps ReLU stacks from decaying
};

/// Square-kernel convolution with optional bias. Biases start at zero.
template <class T>
class Conv2d {
 public:
  Conv2d() = default;
  Conv2d(int in_channels, int out_channels, int kernel, int stride, int pad, bool bias, Rng& rng,
         InitScheme init = InitScheme::fan_in_uniform)
      : stride_(stride), pad_(pad) {
    require(in_channels > 0 && out_channels > 0 && kernel > 0, "convolution extents must be positive");
    Tensor<T> w(Shape{out_channels, in_channels, kernel, kernel});
    const double fan_in = static_cast<double>(in_channels) * kernel * kernel;
    const double gain = init == InitScheme::he_uniform ? std::sqrt(6.0) : 1.0;
    const double bound = gain / std::sqrt(fan_in);
    for (auto& v : w.values()) v = static_cast<T>(rng.uniform(-bound, bound));
    weight_ = Var<T>(std::move(w), true);
    if (bias) bias_ = Var<T>(Tensor<T>(Shape{1, out_channels, 1, 1}), true);
  }

  Var<T> operator()(const Var<T>& x) const { return conv2d(x, weight_, bias_, stride_, pad_); }

  void collect(ParameterList<T>& out, const std::string& prefix) const {
    out.push_back({prefix + ".weight", weight_});
    if (bias_.defined()) out.push_back({prefix + ".bias", bias_});
  }

  Var<T>& weight() { return weight_; }
  Var<T>& bias() { return bias_; }
  const Var<T>& weight() const { return weight_; }
  const Var<T>& bias() const { return bias_; }
  int in_channels() const { return weight_.shape().c; }
  int out_channels() const { return weight_.shape().n; }

  /// Detaches the parameters from gradient tracking (frozen layers).
  void freeze() {
    weight_ = Var<T>(weight_.value(), false);
    if (bias_.defined()) bias_ = Var<T>(bias_.value(), false);
  }

 private:
  Var<T> weight_;
  Var<T> bias_;
  int stride_ = 1;
  int pad_ = 0;
};

}  // namespace ccl

#endif  // CCL_CORE_LAYERS_HPP
