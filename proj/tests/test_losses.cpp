#include <gtest/gtest.h>

#include <cmath>

#include "ccl/losses.hpp"
#include "support/gradcheck.hpp"

using namespace ccl;
using ccl::testkit::random_tensor;

namespace {

const FeatureExtractor<double>& small_backbone() {
  static const auto fx = FeatureExtractor<double>::random(77, 16);
  return fx;
}

Tensor<double> random_image(int side, std::uint64_t seed) { return random_tensor(Shape{1, 3, side, side}, seed, 0, 1); }

double contrastive_value(const Tensor<double>& a, const Tensor<double>& p, const Tensor<double>& n,
                         const LossWeights& w = {}, double scale = 1.0) {
  return contrastive_loss(Var<double>(a), p, n, small_backbone(), w.layer_weights, scale, w.epsilon).item();
}

template <class F>
testkit::GradCheck check_input(Tensor<double> x, F objective) {
  Var<double> v(std::move(x), true);
  backward(objective(v));
  const Tensor<double> analytic = v.grad();
  auto f = [&] {
    NoGradGuard g;
    return objective(v).item();
  };
  return testkit::finite_difference_check(v.mutable_value(), analytic, f, 1e-6, 1e-4);
}

}  // namespace

TEST(ColorLoss, ZeroForIdenticalInputs) {
  const auto x = random_tensor(Shape{2, 2, 5, 4}, 1);
  EXPECT_EQ(color_loss(Var<double>(x), x).item(), 0.0);
}

TEST(ColorLoss, ConstantHalfOffsetGivesOneHalf) {
  for (auto [h, w] : {std::pair{3, 3}, std::pair{8, 5}, std::pair{1, 17}}) {
    const auto ref = random_tensor(Shape{1, 2, h, w}, 2);
    Tensor<double> pred = ref;
    for (auto& v : pred.values()) v += 0.5;
    EXPECT_NEAR(color_loss(Var<double>(pred), ref).item(), 0.5, 1e-12);
  }
}

TEST(ColorLoss, RejectsShapeMismatch) {
  EXPECT_THROW(color_loss(Var<double>(Tensor<double>(Shape{1, 2, 4, 4})), Tensor<double>(Shape{1, 2, 4, 3})),
               ValidationError);
}

TEST(ColorLoss, GradientMatchesFiniteDifferences) {
  const auto ref = random_tensor(Shape{1, 2, 8, 8}, 3);
  const auto r = check_input(random_tensor(Shape{1, 2, 8, 8}, 4), [&](const Var<double>& v) { return color_loss(v, ref); });
  EXPECT_LT(r.max_rel_error, 1e-4) << testkit::describe(r);
}

TEST(SsimLoss, ZeroForIdenticalImages) {
  const auto x = random_image(16, 5);
  EXPECT_NEAR(ssim_loss(Var<double>(x), x).item(), 0.0, 1e-12);
}

TEST(SsimLoss, StrongNoiseLandsInUnitInterval) {
  const auto ref = random_image(24, 6);
  Tensor<double> noisy = ref;
  Rng rng(7);
  for (auto& v : noisy.values()) v = std::clamp(v + rng.normal() * 0.5, 0.0, 1.0);
  const double loss = ssim_loss(Var<double>(noisy), ref).item();
  EXPECT_GT(loss, 0.0);
  EXPECT_LE(loss, 1.0);
}

TEST(SsimLoss, RejectsImagesSmallerThanWindow) {
  EXPECT_THROW(ssim_loss(Var<double>(random_image(10, 8)), random_image(10, 9)), ValidationError);
  EXPECT_THROW(ssim_loss(Var<double>(random_image(12, 8)), random_image(16, 9)), ValidationError);
}

TEST(SsimLoss, IsSymmetric) {
  const auto a = random_image(13, 10), b = random_image(13, 11);
  EXPECT_NEAR(ssim_loss(Var<double>(a), b).item(), ssim_loss(Var<double>(b), a).item(), 1e-14);
}

TEST(SsimLoss, GradientMatchesFiniteDifferences) {
  // The 11x11 window needs at least 11 pixels; 13 leaves a 3x3 grid of windows.
  const auto ref = random_image(13, 12);
  const auto r = check_input(random_image(13, 13), [&](const Var<double>& v) { return ssim_loss(v, ref); });
  EXPECT_LT(r.max_rel_error, 1e-3) << testkit::describe(r);
}

TEST(ContrastiveLoss, ZeroWhenAnchorEqualsPositive) {
  const auto p = random_image(16, 14), n = random_image(16, 15);
  EXPECT_EQ(contrastive_value(p, p, n), 0.0);
}

TEST(ContrastiveLoss, GuardedPoleIsLargeButFinite) {
  const auto p = random_image(16, 16), n = random_image(16, 17);
  const double v = contrastive_value(n, p, n);
  EXPECT_TRUE(std::isfinite(v));
  EXPECT_GT(v, 1e3);
}

TEST(ContrastiveLoss, UnguardedPoleThrows) {
  const auto p = random_image(16, 18), n = random_image(16, 19);
  LossWeights w;
  w.epsilon = 0.0;
  EXPECT_THROW(contrastive_value(n, p, n, w), ContrastiveDegenerate);
  EXPECT_NO_THROW(contrastive_value(p, p, n, w));
}

TEST(ContrastiveLoss, RejectsMismatchedOrTinyImages) {
  EXPECT_THROW(contrastive_value(random_image(16, 1), random_image(16, 2), random_image(20, 3)), ValidationError);
  EXPECT_THROW(contrastive_value(random_image(12, 1), random_image(12, 2), random_image(12, 3)), ValidationError);
  EXPECT_THROW(contrastive_value(random_image(16, 1), random_image(16, 2), random_image(16, 3), {}, 0.0),
               ValidationError);
}

TEST(ContrastiveLoss, InterpolationTowardPositiveLowersLoss) {
  int wins = 0;
  for (int trial = 0; trial < 10; ++trial) {
    const auto p = random_image(16, 100 + trial), n = random_image(16, 200 + trial);
    auto at = [&](double t) {
      Tensor<double> a = p;
      for (std::size_t i = 0; i < a.size(); ++i) a[i] = (1 - t) * p[i] + t * n[i];
      return contrastive_value(a, p, n);
    };
    wins += at(0.1) < at(0.9) ? 1 : 0;
  }
  EXPECT_GE(wins, 9);
}

TEST(ContrastiveLoss, ScaleCovariant) {
  const auto a = random_image(16, 20), p = random_image(16, 21), n = random_image(16, 22);
  const double base = contrastive_value(a, p, n, {}, 1.0);
  for (double s : {0.5, 3.0, 100.0}) EXPECT_NEAR(contrastive_value(a, p, n, {}, s), base / s, 1e-6 * base);
}

TEST(ContrastiveLoss, EqualsWeightedSumOfDistanceRatios) {
  const auto a = random_image(16, 23), p = random_image(16, 24), n = random_image(16, 25);
  const LossWeights w;
  const auto terms = contrastive_terms(Var<double>(a), p, n, small_backbone(), w.layer_weights, 2.0, w.epsilon);
  double expected = 0.0;
  for (int i = 0; i < 5; ++i)
    expected += w.layer_weights[i] * terms.positive_distance[i] / (terms.negative_distance[i] + w.epsilon);
  EXPECT_NEAR(terms.loss.item(), expected / 2.0, 1e-12);

  // The weights are tied to tap order: reversing them changes the value.
  LossWeights reversed = w;
  std::reverse(reversed.layer_weights.begin(), reversed.layer_weights.end());
  EXPECT_GT(std::abs(contrastive_value(a, p, n, reversed, 2.0) - terms.loss.item()), 1e-6);
}

TEST(ContrastiveLoss, GradientMatchesFiniteDifferences) {
  const auto p = random_image(16, 26), n = random_image(16, 27);
  const LossWeights w;
  const auto r = check_input(random_image(16, 28), [&](const Var<double>& v) {
    return contrastive_loss(v, p, n, small_backbone(), w.layer_weights, 1.0, w.epsilon);
  });
  EXPECT_LT(r.max_rel_error, 1e-3) << testkit::describe(r);
}

TEST(Losses, NonNegativeOnRandomInputs) {
  for (int i = 0; i < 5; ++i) {
    const auto a = random_image(16, 300 + i), b = random_image(16, 400 + i), c = random_image(16, 500 + i);
    EXPECT_GE(color_loss(Var<double>(random_tensor(Shape{1, 2, 4, 4}, i)), random_tensor(Shape{1, 2, 4, 4}, i + 9)).item(),
              0.0);
    EXPECT_GE(ssim_loss(Var<double>(a), b).item(), 0.0);
    EXPECT_GE(contrastive_value(a, b, c), 0.0);
  }
}

TEST(LossWeights, DefaultsAndValidation) {
  const LossWeights w;
  EXPECT_EQ(w.lambda_cc, 0.5);
  EXPECT_EQ(w.lambda_hr, 0.5);
  EXPECT_EQ(w.s_cc, 100.0);
  EXPECT_EQ(w.s_hr, 1.0);
  EXPECT_EQ(w.layer_weights, (std::array<double, 5>{1.0 / 32, 1.0 / 16, 1.0 / 8, 1.0 / 4, 1.0}));
  EXPECT_NO_THROW(w.validate());
  LossWeights bad = w;
  bad.layer_weights[2] = 0.0;
  EXPECT_THROW(bad.validate(), ValidationError);
  bad = w;
  bad.s_cc = -1;
  EXPECT_THROW(bad.validate(), ValidationError);
}

namespace {

struct CcFixture {
  Tensor<double> raw_rgb = random_image(16, 30);
  LabImage<double> raw_lab = rgb_to_lab(raw_rgb);
  Tensor<double> ref_rgb = random_image(16, 31);
  NormalizedChroma<double> ref_chroma = split_lab(rgb_to_lab(ref_rgb)).chroma;
  Tensor<double> ref_hat = reference_hat(raw_lab.lightness, ref_chroma);
};

}  // namespace

TEST(HybridCcLoss, PerfectPredictionIsZero) {
  CcFixture f;
  const auto out = hybrid_cc_loss(Var<double>(f.ref_chroma.data), f.raw_lab.lightness, f.ref_chroma, f.ref_hat,
                                  f.raw_rgb, &small_backbone(), LossWeights{});
  EXPECT_NEAR(out.total.item(), 0.0, 1e-12);
}

TEST(HybridCcLoss, ZeroLambdaReducesToColorLoss) {
  CcFixture f;
  LossWeights w;
  w.lambda_cc = 0.0;
  const auto pred = random_tensor(Shape{1, 2, 16, 16}, 32, -0.3, 0.3);
  const auto out = hybrid_cc_loss(Var<double>(pred), f.raw_lab.lightness, f.ref_chroma, f.ref_hat, f.raw_rgb,
                                  &small_backbone(), w);
  EXPECT_EQ(out.total.item(), color_loss(Var<double>(pred), f.ref_chroma.data).item());
}

TEST(HybridCcLoss, EqualsManualComposition) {
  CcFixture f;
  const LossWeights w;
  const auto pred = random_tensor(Shape{1, 2, 16, 16}, 33, -0.3, 0.3);
  const auto out = hybrid_cc_loss(Var<double>(pred), f.raw_lab.lightness, f.ref_chroma, f.ref_hat, f.raw_rgb,
                                  &small_backbone(), w);
  const double color = color_loss(Var<double>(pred), f.ref_chroma.data).item();
  const auto anchor = lab_to_rgb(merge_lab(NormalizedChroma<double>{pred}, f.raw_lab.lightness));
  const double ctr = contrastive_value(anchor, f.ref_hat, f.raw_rgb, w, w.s_cc);
  EXPECT_NEAR(out.total.item(), color + w.lambda_cc * ctr, 1e-12);
  EXPECT_NEAR(out.main, color, 1e-15);
  EXPECT_NEAR(out.contrastive, ctr, 1e-15);

  const auto plain = hybrid_cc_loss(Var<double>(pred), f.raw_lab.lightness, f.ref_chroma, f.ref_hat, f.raw_rgb,
                                    static_cast<const FeatureExtractor<double>*>(nullptr), w, false);
  EXPECT_EQ(plain.total.item(), color);
  EXPECT_EQ(plain.contrastive, 0.0);
}

TEST(HybridCcLoss, GradientMatchesFiniteDifferences) {
  CcFixture f;
  const LossWeights w;
  const auto r = check_input(random_tensor(Shape{1, 2, 16, 16}, 34, -0.2, 0.2), [&](const Var<double>& v) {
    return hybrid_cc_loss(v, f.raw_lab.lightness, f.ref_chroma, f.ref_hat, f.raw_rgb, &small_backbone(), w).total;
  });
  EXPECT_LT(r.max_rel_error, 1e-3) << testkit::describe(r);
}

TEST(HybridHrLoss, PerfectPredictionIsZero) {
  const auto ref = random_image(16, 40), neg = random_image(16, 41);
  const auto pred = to_signed_range(ref);
  const auto out = hybrid_hr_loss(Var<double>(pred), ref, neg, &small_backbone(), LossWeights{});
  EXPECT_NEAR(out.total.item(), 0.0, 1e-12);
}

TEST(HybridHrLoss, ZeroLambdaReducesToSsimLoss) {
  const auto ref = random_image(16, 42), neg = random_image(16, 43);
  const auto pred = random_tensor(Shape{1, 3, 16, 16}, 44);
  LossWeights w;
  w.lambda_hr = 0.0;
  const auto out = hybrid_hr_loss(Var<double>(pred), ref, neg, &small_backbone(), w);
  EXPECT_EQ(out.total.item(), ssim_loss(Var<double>(to_unit_range(pred)), ref).item());
}

TEST(HybridHrLoss, EqualsManualComposition) {
  const auto ref = random_image(16, 45), neg = random_image(16, 46);
  const auto pred = random_tensor(Shape{1, 3, 16, 16}, 47);
  const LossWeights w;
  const auto out = hybrid_hr_loss(Var<double>(pred), ref, neg, &small_backbone(), w);
  const auto pred01 = to_unit_range(pred);
  const double ssim = ssim_loss(Var<double>(pred01), ref).item();
  const double ctr = contrastive_value(pred01, ref, neg, w, w.s_hr);
  EXPECT_NEAR(out.total.item(), ssim + w.lambda_hr * ctr, 1e-12);
}

TEST(HybridHrLoss, GradientMatchesFiniteDifferences) {
  const auto ref = random_image(16, 48), neg = random_image(16, 49);
  const LossWeights w;
  const auto r = check_input(random_tensor(Shape{1, 3, 16, 16}, 50), [&](const Var<double>& v) {
    return hybrid_hr_loss(v, ref, neg, &small_backbone(), w).total;
  });
  EXPECT_LT(r.max_rel_error, 1e-3) << testkit::describe(r);
}
