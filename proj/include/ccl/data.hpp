#ifndef CCL_DATA_HPP
#define CCL_DATA_HPP

#include <array>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>
#include <opencv2/imgproc.hpp>

#include "ccl/core/log.hpp"
#include "ccl/core/parallel.hpp"
#include "ccl/core/random.hpp"
#include "ccl/image_io.hpp"

// Paired dataset ingestion (root/raw + root/reference), training
// augmentation, and a synthetic underwater degradation generator.

namespace ccl {

using json = nlohmann::json;

class DatasetError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct AugmentOptions {
  int size = 256;
  double flip_probability = 0.5;

  void validate() const {
    require(size > 0, "augmentation size must be positive");
    require(flip_probability >= 0 && flip_probability <= 1, "flip probability must lie in [0, 1]");
  }
};

struct SampleEntry {
  std::string id;
  fs::path raw;
  std::optional<fs::path> reference;
};

struct DatasetManifest {
  fs::path root;
  std::string split;
  std::vector<SampleEntry> samples;
  AugmentOptions augmentation;

  std::vector<std::string> ids() const {
    std::vector<std::string> out;
    for (const auto& s : samples) out.push_back(s.id);
    return out;
  }

  std::size_t paired_count() const {
    std::size_t n = 0;
    for (const auto& s : samples) n += s.reference.has_value();
    return n;
  }

  json to_json() const {
    json items = json::array();
    for (const auto& s : samples) {
      json j{{"id", s.id}, {"raw", s.raw.string()}};
      j["reference"] = s.reference ? json(s.reference->string()) : json(nullptr);
      items.push_back(j);
    }
    return {{"root", root.string()},
            {"split", split},
            {"augmentation", {{"size", augmentation.size}, {"flip_probability", augmentation.flip_probability}}},
            {"samples", items}};
  }
};

template <class T = float>
struct PairedSample {
  std::string id;
  Tensor<T> raw;
  std::optional<Tensor<T>> reference;
};

/// Scans `root/<split>` (or `root` itself when that subdirectory does not
/// exist) for raw/ and reference/. References are matched by filename, then
/// by stem. Ids are raw stems in lexicographic order.
inline DatasetManifest load_paired_dataset(const fs::path& root, const std::string& split = "") {
  fs::path base = fs::absolute(root).lexically_normal();
  if (!split.empty() && fs::is_directory(base / split)) base = base / split;
  const fs::path raw_dir = base / "raw";
  const fs::path ref_dir = base / "reference";
  if (!fs::is_directory(raw_dir)) throw DatasetError("dataset has no raw directory: " + raw_dir.string());
  const auto raws = list_images(raw_dir);
  if (raws.empty()) throw DatasetError("raw directory is empty: " + raw_dir.string());

  std::map<std::string, fs::path> refs_by_stem;
  for (const auto& p : list_images(ref_dir)) refs_by_stem.emplace(p.stem().string(), p);

  DatasetManifest m;
  m.root = base;
  m.split = split;
  std::map<std::string, fs::path> seen;
  for (const auto& p : raws) {
    const std::string id = p.stem().string();
    if (auto [it, fresh] = seen.emplace(id, p); !fresh)
      throw DatasetError("duplicate sample id '" + id + "': " + it->second.filename().string() + " and " +
                         p.filename().string());
    SampleEntry e{id, p, std::nullopt};
    if (fs::is_regular_file(ref_dir / p.filename()))
      e.reference = ref_dir / p.filename();
    else if (auto it = refs_by_stem.find(id); it != refs_by_stem.end())
      e.reference = it->second;
    else
      log::warn("no reference for " + p.filename().string() + "; kept as a no-reference sample");
    m.samples.push_back(std::move(e));
  }
  std::sort(m.samples.begin(), m.samples.end(), [](const auto& a, const auto& b) { return a.id < b.id; });
  return m;
}

inline PairedSample<float> load_sample(const SampleEntry& e) {
  PairedSample<float> s{e.id, read_rgb(e.raw), std::nullopt};
  if (e.reference) {
    s.reference = read_rgb(*e.reference);
    if (s.reference->shape() != s.raw.shape())
      throw DatasetError("sample " + e.id + ": raw is " + s.raw.shape().str() + " but reference is " +
                         s.reference->shape().str());
  }
  return s;
}

template <class T>
Tensor<T> flip_horizontal(const Tensor<T>& t) {
  Tensor<T> out(t.shape());
  for (int n = 0; n < t.n(); ++n)
    for (int c = 0; c < t.c(); ++c)
      for (int y = 0; y < t.h(); ++y)
        for (int x = 0; x < t.w(); ++x) out(n, c, y, x) = t(n, c, y, t.w() - 1 - x);
  return out;
}

/// Resize both images to size x size, then flip both with the given
/// probability. The decision is the first draw from Rng(seed).
inline PairedSample<float> augment(const PairedSample<float>& sample, std::uint64_t seed,
                                   const AugmentOptions& options = {}) {
  options.validate();
  Rng rng(seed);
  const bool flip = rng.bernoulli(options.flip_probability);
  auto transform = [&](const Tensor<float>& img) {
    Tensor<float> r = resize_rgb(img, options.size, options.size);
    return flip ? flip_horizontal(r) : r;
  };
  PairedSample<float> out{sample.id, transform(sample.raw), std::nullopt};
  if (sample.reference) out.reference = transform(*sample.reference);
  return out;
}

/// out = clean * exp(-beta_c) * t + veil_c * (1 - t), clamped to [0, 1].
/// With jitter > 0 each image draws its own beta, veil and t around the
/// nominal values (relative spread `jitter`).
struct DegradationParams {
  std::array<double, 3> beta{0, 0, 0};
  std::array<double, 3> veil{0, 0, 0};
  double transmission = 1.0;
  double jitter = 0.0;

  void validate() const {
    require(transmission > 0 && transmission <= 1,
            "transmission must lie in (0, 1], got " + std::to_string(transmission));
    for (double b : beta) require(b >= 0 && std::isfinite(b), "attenuation must be finite and non-negative");
    for (double a : veil) require(a >= 0 && a <= 1, "veiling light must lie in [0, 1]");
    require(jitter >= 0 && jitter < 1, "jitter must lie in [0, 1)");
  }

  json to_json() const { return {{"beta", beta}, {"veil", veil}, {"transmission", transmission}, {"jitter", jitter}}; }
};

inline std::vector<std::string> degradation_preset_names() { return {"greenish", "bluish", "hazy"}; }

/// Red is absorbed most in both casts; `hazy` is a weak cast with a bright veil.
inline DegradationParams degradation_preset(const std::string& name) {
  if (name == "greenish") return {{1.2, 0.25, 0.45}, {0.10, 0.55, 0.45}, 0.7, 0.15};
  if (name == "bluish") return {{1.4, 0.50, 0.15}, {0.05, 0.35, 0.60}, 0.7, 0.15};
  if (name == "hazy") return {{0.6, 0.30, 0.30}, {0.55, 0.60, 0.60}, 0.5, 0.15};
  throw ValidationError("unknown degradation preset '" + name + "'");
}

template <class T>
Tensor<T> synth_degrade(const Tensor<T>& clean, const DegradationParams& params, std::uint64_t seed) {
  params.validate();
  require(clean.c() == 3, "synth_degrade expects RGB input");
  DegradationParams p = params;
  if (p.jitter > 0) {
    Rng rng(seed);
    auto wiggle = [&] { return 1.0 + p.jitter * rng.uniform(-1.0, 1.0); };
    for (auto& b : p.beta) b *= wiggle();
    for (auto& a : p.veil) a = std::clamp(a * wiggle(), 0.0, 1.0);
    p.transmission = std::clamp(p.transmission * wiggle(), 0.05, 1.0);
  }
  Tensor<T> out(clean.shape());
  const double t = p.transmission;
  for (int n = 0; n < clean.n(); ++n)
    for (int c = 0; c < 3; ++c) {
      const double gain = std::exp(-p.beta[c]) * t;
      const double offset = p.veil[c] * (1.0 - t);
      const auto src = clean.plane(n, c);
      auto dst = out.plane(n, c);
      for (std::size_t i = 0; i < clean.shape().plane(); ++i)
        dst[i] = static_cast<T>(std::clamp(static_cast<double>(src[i]) * gain + offset, 0.0, 1.0));
    }
  return out;
}

/// Seeded colourful test scene: a two-tone gradient with random shapes and
/// mild texture, in the style of a cluttered reef photo.
inline Tensor<float> procedural_scene(int height, int width, std::uint64_t seed) {
  require(height > 0 && width > 0, "scene size must be positive");
  Rng rng(seed);
  auto colour = [&] { return cv::Scalar(rng.uniform(), rng.uniform(), rng.uniform()); };
  cv::Mat img(height, width, CV_32FC3);
  const cv::Scalar top = colour(), bottom = colour();
  for (int y = 0; y < height; ++y) {
    const double f = height > 1 ? static_cast<double>(y) / (height - 1) : 0.0;
    img.row(y).setTo(top * (1 - f) + bottom * f);
  }
  const int scale = std::min(height, width);
  const int shapes = 6 + static_cast<int>(rng.below(10));
  for (int i = 0; i < shapes; ++i) {
    const cv::Point centre(static_cast<int>(rng.below(width)), static_cast<int>(rng.below(height)));
    const int r = std::max(2, static_cast<int>(scale * rng.uniform(0.05, 0.25)));
    const cv::Scalar c = colour();
    switch (rng.below(3)) {
      case 0: cv::circle(img, centre, r, c, cv::FILLED, cv::LINE_AA); break;
      case 1: cv::rectangle(img, centre, centre + cv::Point(r, r * 2 / 3 + 1), c, cv::FILLED); break;
      default:
        cv::ellipse(img, centre, cv::Size(r, r / 2 + 1), rng.uniform(0, 180), 0, 360, c, cv::FILLED, cv::LINE_AA);
    }
  }
  Tensor<float> out(Shape{1, 3, height, width});
  for (int y = 0; y < height; ++y) {
    const auto* row = img.ptr<cv::Vec3f>(y);
    for (int x = 0; x < width; ++x) {
      const double grain = 0.03 * rng.uniform(-1.0, 1.0);
      for (int k = 0; k < 3; ++k) out(0, k, y, x) = static_cast<float>(std::clamp(row[x][k] + grain, 0.0, 1.0));
    }
  }
  return out;
}

struct SynthOptions {
  int count = 32;
  std::string preset = "greenish";
  std::optional<DegradationParams> params;  // overrides the preset when set
  std::uint64_t seed = 0;
  int size = 64;                      // side of procedural scenes; resize target for clean images (0 keeps native)
  std::optional<fs::path> clean_dir;  // user-supplied clean images instead of procedural scenes
  int jobs = 1;
};

/// Writes out_root/raw/<id>.png, out_root/reference/<id>.png and
/// out_root/provenance.json. References are the clean images.
inline DatasetManifest write_synthetic_corpus(const fs::path& out_root, const SynthOptions& options) {
  require(options.count > 0, "synthetic corpus count must be positive");
  require(options.size >= 0, "synthetic image size must be non-negative");
  const DegradationParams params = options.params ? *options.params : degradation_preset(options.preset);
  params.validate();

  std::vector<std::string> ids;
  std::vector<fs::path> sources;
  if (options.clean_dir) {
    sources = list_images(*options.clean_dir);
    if (sources.empty()) throw DatasetError("no clean images in " + options.clean_dir->string());
    if (static_cast<int>(sources.size()) > options.count) sources.resize(options.count);
    for (const auto& s : sources) ids.push_back(s.stem().string());
  } else {
    require(options.size >= 16, "procedural scenes need a size of at least 16");
    for (int i = 0; i < options.count; ++i) {
      char buf[32];
      std::snprintf(buf, sizeof buf, "synth_%04d", i);
      ids.emplace_back(buf);
    }
  }

  fs::create_directories(out_root / "raw");
  fs::create_directories(out_root / "reference");
  parallel_for(ids.size(), options.jobs, [&](std::size_t i) {
    Tensor<float> clean;
    if (options.clean_dir) {
      clean = read_rgb(sources[i]);
      if (options.size > 0) clean = resize_rgb(clean, options.size, options.size);
    } else {
      clean = procedural_scene(options.size, options.size, derive_seed(options.seed, ids[i], 1));
    }
    write_png(out_root / "reference" / (ids[i] + ".png"), clean);
    write_png(out_root / "raw" / (ids[i] + ".png"), synth_degrade(clean, params, derive_seed(options.seed, ids[i], 2)));
  });

  json provenance{{"generator", "ccl synth"},
                  {"preset", options.params ? "custom" : options.preset},
                  {"params", params.to_json()},
                  {"seed", options.seed},
                  {"count", ids.size()},
                  {"size", options.size},
                  {"source", options.clean_dir ? options.clean_dir->string() : "procedural"},
                  {"ids", ids}};
  std::ofstream(out_root / "provenance.json") << provenance.dump(2) << '\n';
  return load_paired_dataset(out_root);
}

/// Decodes every sample of a manifest (optionally on a worker pool).
inline std::vector<PairedSample<float>> load_samples(const DatasetManifest& m, int jobs = 1) {
  std::vector<PairedSample<float>> out(m.samples.size());
  parallel_for(out.size(), jobs, [&](std::size_t i) { out[i] = load_sample(m.samples[i]); });
  return out;
}

}  // namespace ccl

#endif  // CCL_DATA_HPP
