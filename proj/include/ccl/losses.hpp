#ifndef CCL_LOSSES_HPP
#define CCL_LOSSES_HPP

#include <array>
#include <stdexcept>
#include <string>
#include <vector>

#include "ccl/backbone.hpp"
#include "ccl/color_space.hpp"
#include "ccl/core/ops.hpp"
#include "ccl/ssim.hpp"

namespace ccl {

/// Scalar hyperparameters of both hybrid objectives.
struct LossWeights {
  double lambda_cc = 0.5;
  double lambda_hr = 0.5;
  double s_cc = 100.0;
  double s_hr = 1.0;
  std::array<double, 5> layer_weights{1.0 / 32, 1.0 / 16, 1.0 / 8, 1.0 / 4, 1.0};
  double epsilon = 1e-7;

  void validate() const {
    require(lambda_cc >= 0 && lambda_hr >= 0, "contrastive weights must be non-negative");
    require(s_cc > 0 && s_hr > 0, "contrastive scales must be positive");
    for (double w : layer_weights) require(w > 0, "layer weights must be positive");
    require(epsilon >= 0, "epsilon must be non-negative");
  }
};

/// Raised when the contrastive denominator vanishes and no epsilon guards it.
class ContrastiveDegenerate : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

/// Squared L2 distance over both chroma channels, divided by H*W
/// (and averaged over the batch).
template <class T>
Var<T> color_loss(const Var<T>& pred, const Tensor<T>& ref) {
  const Shape s = pred.shape();
  require(s == ref.shape(), "color_loss shape mismatch: " + s.str() + " vs " + ref.shape().str());
  const Var<T> d = pred - constant(ref);
  return scale(sum(square(d)), T(1) / static_cast<T>(static_cast<std::size_t>(s.n) * s.plane()));
}

template <class T>
struct ContrastiveTerms {
  Var<T> loss;
  std::array<double, 5> positive_distance{};  // mean |E_i(a) - E_i(p)|
  std::array<double, 5> negative_distance{};  // mean |E_i(a) - E_i(n)|
};

/// sum_i w_i * d(E_i(anchor), E_i(positive)) / (d(E_i(anchor), E_i(negative)) + eps), divided by `scale`.
/// d is the mean absolute difference. Images are RGB in [0, 1].
template <class T>
ContrastiveTerms<T> contrastive_terms(const Var<T>& anchor, const Tensor<T>& positive, const Tensor<T>& negative,
                                      const FeatureExtractor<T>& extractor, const std::array<double, 5>& weights,
                                      double scale, double epsilon) {
  require(anchor.shape() == positive.shape() && anchor.shape() == negative.shape(),
          "contrastive_loss: anchor, positive and negative must share dimensions");
  require(scale > 0, "contrastive_loss: scale must be positive");
  require(epsilon >= 0, "contrastive_loss: epsilon must be non-negative");
  std::vector<Var<T>> fp, fn;
  {
    NoGradGuard guard;
    fp = extractor.features(constant(positive));
    fn = extractor.features(constant(negative));
  }
  const auto fa = extractor.features(anchor);
  ContrastiveTerms<T> out;
  Var<T> total;
  for (int i = 0; i < 5; ++i) {
    const Var<T> num = mean(abs(fa[i] - fp[i]));
    const Var<T> den = mean(abs(fa[i] - fn[i]));
    out.positive_distance[i] = static_cast<double>(num.item());
    out.negative_distance[i] = static_cast<double>(den.item());
    if (epsilon == 0 && den.item() == T(0))
      throw ContrastiveDegenerate("contrastive_loss: anchor features equal the negative's at tap " +
                                  std::to_string(i + 1) + " and epsilon is 0");
    const Var<T> term = scale_by(num / add_scalar(den, static_cast<T>(epsilon)), weights[i]);
    total = total.defined() ? total + term : term;
  }
  out.loss = scale_by(total, 1.0 / scale);
  return out;
}

template <class T>
Var<T> contrastive_loss(const Var<T>& anchor, const Tensor<T>& positive, const Tensor<T>& negative,
                        const FeatureExtractor<T>& extractor, const std::array<double, 5>& weights, double scale,
                        double epsilon = 1e-7) {
  return contrastive_terms(anchor, positive, negative, extractor, weights, scale, epsilon).loss;
}

/// 1 - mean windowed SSIM (11x11 Gaussian, sigma 1.5, per channel).
template <class T>
Var<T> ssim_loss(const Var<T>& pred, const Tensor<T>& ref) {
  return add_scalar(scale(ssim_mean(pred, constant(ref)), T(-1)), T(1));
}

template <class T>
struct LossBreakdown {
  Var<T> total;
  double main = 0.0;
  double contrastive = 0.0;  // before lambda
};

/// Pseudo-reference RGB: raw lightness merged with reference chroma.
template <class T>
Tensor<T> reference_hat(const Tensor<T>& raw_lightness, const NormalizedChroma<T>& ref_chroma) {
  return lab_to_rgb(merge_lab(ref_chroma, raw_lightness));
}

/// Stage-1 objective: color_loss + lambda_cc * contrastive, where the anchor
/// is the corrected chroma rendered with the raw lightness, the positive is
/// the pseudo-reference and the negative the raw image. With
/// `use_contrastive` false only the colour term is built.
template <class T>
LossBreakdown<T> hybrid_cc_loss(const Var<T>& pred_chroma, const Tensor<T>& raw_lightness,
                                const NormalizedChroma<T>& ref_chroma, const Tensor<T>& ref_rgb_hat,
                                const Tensor<T>& raw_rgb, const FeatureExtractor<T>* extractor,
                                const LossWeights& w, bool use_contrastive = true) {
  LossBreakdown<T> out;
  out.total = color_loss(pred_chroma, ref_chroma.data);
  out.main = static_cast<double>(out.total.item());
  if (!use_contrastive) return out;
  require(extractor != nullptr, "hybrid_cc_loss: contrastive term needs a feature extractor");
  const Var<T> anchor = chroma_to_rgb(pred_chroma, raw_lightness);
  const Var<T> ctr = contrastive_loss(anchor, ref_rgb_hat, raw_rgb, *extractor, w.layer_weights, w.s_cc, w.epsilon);
  out.contrastive = static_cast<double>(ctr.item());
  out.total = out.total + scale_by(ctr, w.lambda_cc);
  return out;
}

/// Stage-2 objective: ssim_loss + lambda_hr * contrastive. `pred` is the
/// network output in [-1, 1]; `ref` and `negative` are RGB in [0, 1].
/// The negative is the stage-1 output (or the raw image for the RAN ablation).
template <class T>
LossBreakdown<T> hybrid_hr_loss(const Var<T>& pred, const Tensor<T>& ref, const Tensor<T>& negative,
                                const FeatureExtractor<T>* extractor, const LossWeights& w,
                                bool use_contrastive = true) {
  const Var<T> pred01 = to_unit_range(pred);
  LossBreakdown<T> out;
  out.total = ssim_loss(pred01, ref);
  out.main = static_cast<double>(out.total.item());
  if (!use_contrastive) return out;
  require(extractor != nullptr, "hybrid_hr_loss: contrastive term needs a feature extractor");
  const Var<T> ctr = contrastive_loss(pred01, ref, negative, *extractor, w.layer_weights, w.s_hr, w.epsilon);
  out.contrastive = static_cast<double>(ctr.item());
  out.total = out.total + scale_by(ctr, w.lambda_hr);
  return out;
}

}  // namespace ccl

#endif  // CCL_LOSSES_HPP
