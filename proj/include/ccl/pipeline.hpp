#ifndef CCL_PIPELINE_HPP
#define CCL_PIPELINE_HPP

#include "ccl/ccnet.hpp"
#include "ccl/color_space.hpp"
#include "ccl/hrnet.hpp"

// Inference chain: raw RGB -> Lab -> CC-Net on chroma, raw lightness kept ->
// RGB (stage-1 output) -> HR-Net -> final RGB.

namespace ccl {

template <class T>
Tensor<T> correct_colors(const CcNet<T>& net, const Tensor<T>& raw_rgb) {
  const SplitLab<T> split = split_lab(rgb_to_lab(raw_rgb));
  return lab_to_rgb(merge_lab(net.correct(split.chroma), split.lightness));
}

template <class T>
Tensor<T> remove_haze(const HrNet<T>& net, const Tensor<T>& rgb) {
  Tensor<T> out = to_unit_range(net.enhance(to_signed_range(rgb)));
  for (auto& v : out.values()) v = std::clamp(v, T(0), T(1));
  return out;
}

template <class T>
struct CascadeOutput {
  Tensor<T> cc;
  Tensor<T> hr;
};

template <class T>
CascadeOutput<T> enhance_cascade(const CcNet<T>& cc, const HrNet<T>& hr, const Tensor<T>& raw_rgb) {
  CascadeOutput<T> out;
  out.cc = correct_colors(cc, raw_rgb);
  out.hr = remove_haze(hr, out.cc);
  return out;
}

}  // namespace ccl

#endif  // CCL_PIPELINE_HPP
