#ifndef CCL_TRAINING_HPP
#define CCL_TRAINING_HPP

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <limits>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "ccl/checkpoint.hpp"
#include "ccl/core/log.hpp"
#include "ccl/core/optim.hpp"
#include "ccl/data.hpp"
#include "ccl/losses.hpp"
#include "ccl/pipeline.hpp"

// Two-stage training: CC-Net on paired raw/reference data, materialised
// stage-1 outputs, then HR-Net on (stage-1 output, reference) pairs.

namespace ccl {

class TrainingError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class Stage { cc, hr };
enum class NegativeSource { raw, cc_output };
enum class Selection { last, best };

NLOHMANN_JSON_SERIALIZE_ENUM(Stage, {{Stage::cc, "cc"}, {Stage::hr, "hr"}})
NLOHMANN_JSON_SERIALIZE_ENUM(NegativeSource, {{NegativeSource::raw, "raw"}, {NegativeSource::cc_output, "cc_output"}})
NLOHMANN_JSON_SERIALIZE_ENUM(Selection, {{Selection::last, "last"}, {Selection::best, "best"}})

struct TrainConfig {
  Stage stage = Stage::cc;
  int batch_size = 8;
  int epochs = 150;
  double lr_cc = 5e-4;
  double lr_hr = 1e-3;
  double beta1 = 0.5;
  double beta2 = 0.999;
  int decay_start_epoch = 75;
  std::uint64_t seed = 0;
  bool use_contrastive = true;
  NegativeSource negative_source = NegativeSource::cc_output;
  double grad_clip = 0.0;  // global-norm bound, 0 disables
  Selection select = Selection::last;
  int image_size = 256;
  double flip_probability = 0.5;
  std::string backbone_weights;  // empty: $CCL_BACKBONE_WEIGHTS, else a random trunk
  std::uint64_t backbone_seed = 1234;
  int backbone_width_divisor = 1;
  int checkpoint_every = 1;  // epochs between epoch_NNN checkpoints, 0 disables
  int jobs = 1;
  CcNetConfig cc;
  HrNetConfig hr;
  LossWeights loss;

  double base_lr() const { return stage == Stage::cc ? lr_cc : lr_hr; }

  void validate() const {
    require(batch_size >= 1, "batch_size must be >= 1");
    require(epochs >= 1, "epochs must be >= 1");
    require(decay_start_epoch >= 0 && decay_start_epoch < epochs, "decay_start_epoch must lie in [0, epochs)");
    require(lr_cc > 0 && lr_hr > 0, "learning rates must be positive");
    require(beta1 >= 0 && beta1 < 1 && beta2 >= 0 && beta2 < 1, "Adam betas must lie in [0, 1)");
    require(grad_clip >= 0, "grad_clip must be non-negative");
    require(image_size >= 16, "image_size must be >= 16");
    require(flip_probability >= 0 && flip_probability <= 1, "flip_probability must lie in [0, 1]");
    require(backbone_width_divisor >= 1 && 64 % backbone_width_divisor == 0,
            "backbone_width_divisor must divide 64");
    require(checkpoint_every >= 0, "checkpoint_every must be non-negative");
    require(jobs >= 1, "jobs must be >= 1");
    cc.validate();
    hr.validate();
    loss.validate();
  }

  nlohmann::json to_json() const {
    return {{"stage", stage},
            {"batch_size", batch_size},
            {"epochs", epochs},
            {"lr_cc", lr_cc},
            {"lr_hr", lr_hr},
            {"beta1", beta1},
            {"beta2", beta2},
            {"decay_start_epoch", decay_start_epoch},
            {"seed", seed},
            {"use_contrastive", use_contrastive},
            {"negative_source", negative_source},
            {"grad_clip", grad_clip},
            {"select", select},
            {"image_size", image_size},
            {"flip_probability", flip_probability},
            {"backbone_weights", backbone_weights},
            {"backbone_seed", backbone_seed},
            {"backbone_width_divisor", backbone_width_divisor},
            {"checkpoint_every", checkpoint_every},
            {"jobs", jobs},
            {"cc", ccl::to_json(cc)},
            {"hr", ccl::to_json(hr)},
            {"loss",
             {{"lambda_cc", loss.lambda_cc},
              {"lambda_hr", loss.lambda_hr},
              {"s_cc", loss.s_cc},
              {"s_hr", loss.s_hr},
              {"layer_weights", loss.layer_weights},
              {"epsilon", loss.epsilon}}}};
  }

  /// Overwrites the fields present in `j`; unknown keys are an error.
  void merge(const nlohmann::json& j) {
    require(j.is_object(), "training config must be a JSON object");
    const nlohmann::json known = to_json();
    for (const auto& [key, value] : j.items())
      if (!known.contains(key)) throw ValidationError("unknown training config key '" + key + "'");
    try {
      auto get = [&](const char* key, auto& field) {
        if (j.contains(key)) field = j.at(key).get<std::decay_t<decltype(field)>>();
      };
      get("stage", stage);
      get("batch_size", batch_size);
      get("epochs", epochs);
      get("lr_cc", lr_cc);
      get("lr_hr", lr_hr);
      get("beta1", beta1);
      get("beta2", beta2);
      get("decay_start_epoch", decay_start_epoch);
      get("seed", seed);
      get("use_contrastive", use_contrastive);
      get("negative_source", negative_source);
      get("grad_clip", grad_clip);
      get("select", select);
      get("image_size", image_size);
      get("flip_probability", flip_probability);
      get("backbone_weights", backbone_weights);
      get("backbone_seed", backbone_seed);
      get("backbone_width_divisor", backbone_width_divisor);
      get("checkpoint_every", checkpoint_every);
      get("jobs", jobs);
      if (j.contains("cc")) cc = cc_config_from_json(j["cc"]);
      if (j.contains("hr")) hr = hr_config_from_json(j["hr"]);
      if (j.contains("loss")) {
        const auto& l = j["loss"];
        loss.lambda_cc = l.value("lambda_cc", loss.lambda_cc);
        loss.lambda_hr = l.value("lambda_hr", loss.lambda_hr);
        loss.s_cc = l.value("s_cc", loss.s_cc);
        loss.s_hr = l.value("s_hr", loss.s_hr);
        loss.layer_weights = l.value("layer_weights", loss.layer_weights);
        loss.epsilon = l.value("epsilon", loss.epsilon);
      }
    } catch (const nlohmann::json::exception& e) {
      throw ValidationError(std::string("bad training config value: ") + e.what());
    }
    // Enum parsing maps unknown strings to the first enumerator; catch that.
    for (const char* key : {"stage", "negative_source", "select"})
      if (j.contains(key) && to_json()[key] != j[key])
        throw ValidationError(std::string("invalid value for ") + key + ": " + j[key].dump());
  }

  static TrainConfig from_json(const nlohmann::json& j) {
    TrainConfig c;
    c.merge(j);
    return c;
  }
};

/// Constant until decay_start_epoch, then linear towards zero at `epochs`:
/// lr * (epochs - epoch) / (epochs - decay_start_epoch).
inline double lr_at_epoch(const TrainConfig& config, int epoch) {
  require(epoch >= 0 && epoch < config.epochs,
          "epoch " + std::to_string(epoch) + " outside [0, " + std::to_string(config.epochs) + ")");
  require(config.decay_start_epoch >= 0 && config.decay_start_epoch < config.epochs,
          "decay_start_epoch must lie in [0, epochs)");
  const double lr = config.base_lr();
  if (epoch < config.decay_start_epoch) return lr;
  return lr * static_cast<double>(config.epochs - epoch) / static_cast<double>(config.epochs - config.decay_start_epoch);
}

/// Perceptual trunk for the contrastive term, or nullptr when it is off.
inline std::unique_ptr<FeatureExtractor<float>> make_backbone(const TrainConfig& config) {
  if (!config.use_contrastive) return nullptr;
  std::string path = config.backbone_weights;
  if (path.empty())
    if (const char* env = std::getenv("CCL_BACKBONE_WEIGHTS")) path = env;
  if (!path.empty()) {
    log::info("loading perceptual backbone from " + path);
    return std::make_unique<FeatureExtractor<float>>(FeatureExtractor<float>::load(path));
  }
  log::warn("no pretrained backbone (set CCL_BACKBONE_WEIGHTS); using a random frozen trunk, width divisor " +
            std::to_string(config.backbone_width_divisor));
  return std::make_unique<FeatureExtractor<float>>(
      FeatureExtractor<float>::random(config.backbone_seed, config.backbone_width_divisor));
}

struct IterationRecord {
  int epoch = 0;
  long iter = 0;
  double loss_total = 0;
  double loss_main = 0;
  double loss_ctr = 0;
  double lr = 0;
};

struct EpochRecord {
  int epoch = 0;
  double loss_total = 0;
  double loss_main = 0;
  double loss_ctr = 0;
  double lr = 0;
};

struct TrainResult {
  Checkpoint checkpoint;
  std::vector<IterationRecord> iterations;
  std::vector<EpochRecord> epochs;
};

namespace detail {

inline bool flip_decision(std::uint64_t seed, double p) { return Rng(seed).bernoulli(p); }

class LossLog {
 public:
  explicit LossLog(const fs::path& path) : os_(path) {
    if (!os_) throw TrainingError("cannot write " + path.string());
    os_ << "epoch,iter,loss_total,loss_main,loss_ctr,lr\n" << std::setprecision(10);
  }
  void write(const IterationRecord& r) {
    os_ << r.epoch << ',' << r.iter << ',' << r.loss_total << ',' << r.loss_main << ',' << r.loss_ctr << ',' << r.lr
        << '\n';
    os_.flush();
  }

 private:
  std::ofstream os_;
};

/// Epoch-wise batches over a seeded permutation; the last batch may be short.
inline std::vector<std::vector<std::size_t>> epoch_batches(std::size_t count, int batch, std::uint64_t seed,
                                                           int epoch) {
  std::vector<std::size_t> order(count);
  for (std::size_t i = 0; i < count; ++i) order[i] = i;
  Rng rng(derive_seed(seed, "shuffle", static_cast<std::uint64_t>(epoch)));
  for (std::size_t i = count; i > 1; --i) std::swap(order[i - 1], order[rng.below(i)]);
  std::vector<std::vector<std::size_t>> out;
  for (std::size_t i = 0; i < count; i += batch)
    out.emplace_back(order.begin() + i, order.begin() + std::min(count, i + batch));
  return out;
}

inline nlohmann::json history_json(const std::vector<EpochRecord>& epochs) {
  nlohmann::json out = nlohmann::json::array();
  for (const auto& e : epochs)
    out.push_back({{"epoch", e.epoch},
                   {"loss_total", e.loss_total},
                   {"loss_main", e.loss_main},
                   {"loss_ctr", e.loss_ctr},
                   {"lr", e.lr}});
  return out;
}

inline std::string epoch_dir(int epoch) {
  std::ostringstream os;
  os << "epoch_" << std::setw(3) << std::setfill('0') << epoch + 1;
  return os.str();
}

[[noreturn]] inline void abort_on_nan(const fs::path& out_dir, int epoch, long iter, const std::vector<std::string>& ids,
                                      const IterationRecord& rec) {
  nlohmann::json dump{{"epoch", epoch},     {"iter", iter},          {"batch_ids", ids},
                      {"loss_total", rec.loss_total}, {"loss_main", rec.loss_main}, {"loss_ctr", rec.loss_ctr}};
  std::ofstream(out_dir / "nan_dump.json") << dump.dump(2) << '\n';
  std::string joined;
  for (const auto& id : ids) joined += (joined.empty() ? "" : ", ") + id;
  throw TrainingError("non-finite loss at epoch " + std::to_string(epoch) + ", iteration " + std::to_string(iter) +
                      "; batch ids: " + joined + " (see " + (out_dir / "nan_dump.json").string() + ")");
}

/// Shared epoch/iteration driver. `step` runs one batch and returns its loss.
template <class Net, class Step>
TrainResult run_training(Net& net, const TrainConfig& config, const std::vector<std::string>& ids,
                         const fs::path& out_dir, const std::string& kind, Step&& step) {
  fs::create_directories(out_dir);
  auto params = net.parameters();
  Adam<float> adam(params, AdamOptions{config.base_lr(), config.beta1, config.beta2, 1e-8});
  LossLog loss_log(out_dir / "loss_history.csv");
  std::ofstream(out_dir / "train_config.json") << config.to_json().dump(2) << '\n';

  CheckpointManifest manifest;
  manifest.kind = kind;
  manifest.model = kind == "ccnet" ? to_json(config.cc) : to_json(config.hr);
  manifest.train_config = config.to_json();
  manifest.seed = config.seed;

  TrainResult result;
  std::optional<TensorArchive> best;
  double best_loss = std::numeric_limits<double>::infinity();
  int best_epoch = 0;
  long iter = 0;
  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    const double lr = lr_at_epoch(config, epoch);
    adam.set_lr(lr);
    EpochRecord er{epoch, 0, 0, 0, lr};
    const auto batches = epoch_batches(ids.size(), config.batch_size, config.seed, epoch);
    for (const auto& batch : batches) {
      adam.zero_grad();
      const LossBreakdown<float> loss = step(batch, epoch);
      IterationRecord rec{epoch, iter, static_cast<double>(loss.total.item()), loss.main, loss.contrastive, lr};
      if (!std::isfinite(rec.loss_total) || !std::isfinite(rec.loss_main) || !std::isfinite(rec.loss_ctr)) {
        std::vector<std::string> batch_ids;
        for (std::size_t i : batch) batch_ids.push_back(ids[i]);
        abort_on_nan(out_dir, epoch, iter, batch_ids, rec);
      }
      backward(loss.total);
      if (config.grad_clip > 0) adam.clip_grad_norm(config.grad_clip);
      adam.step();
      loss_log.write(rec);
      result.iterations.push_back(rec);
      er.loss_total += rec.loss_total;
      er.loss_main += rec.loss_main;
      er.loss_ctr += rec.loss_ctr;
      ++iter;
    }
    const double nb = static_cast<double>(batches.size());
    er.loss_total /= nb;
    er.loss_main /= nb;
    er.loss_ctr /= nb;
    result.epochs.push_back(er);
    log::info(kind + " epoch " + std::to_string(epoch + 1) + "/" + std::to_string(config.epochs) +
              " loss " + std::to_string(er.loss_total) + " lr " + std::to_string(lr));

    manifest.epoch = epoch + 1;
    manifest.loss_history = history_json(result.epochs);
    if (config.checkpoint_every > 0 && (epoch + 1) % config.checkpoint_every == 0)
      save_checkpoint(out_dir / epoch_dir(epoch), params, manifest);
    if (config.select == Selection::best && er.loss_total < best_loss) {
      best_loss = er.loss_total;
      best_epoch = epoch + 1;
      best = to_archive(params);
    }
  }

  if (best) {
    load_into(params, *best);
    manifest.epoch = best_epoch;
    log::info(kind + ": selected epoch " + std::to_string(best_epoch) + " (lowest mean training loss)");
  }
  result.checkpoint.dir = out_dir / "final";
  save_checkpoint(result.checkpoint.dir, params, manifest);
  result.checkpoint.manifest = read_checkpoint_manifest(result.checkpoint.dir);
  return result;
}

}  // namespace detail

/// Training tensors for one paired sample at the training resolution.
struct CachedPair {
  std::string id;
  Tensor<float> raw;
  Tensor<float> reference;
};

inline std::vector<CachedPair> cache_pairs(const DatasetManifest& dataset, int size, int jobs) {
  std::vector<const SampleEntry*> entries;
  for (const auto& s : dataset.samples) {
    if (s.reference)
      entries.push_back(&s);
    else
      log::warn("training skips " + s.id + ": no reference");
  }
  if (entries.empty()) throw TrainingError("no paired samples to train on in " + dataset.root.string());
  std::vector<CachedPair> out(entries.size());
  parallel_for(entries.size(), jobs, [&](std::size_t i) {
    const auto s = load_sample(*entries[i]);
    out[i] = {s.id, resize_rgb(s.raw, size, size), resize_rgb(*s.reference, size, size)};
  });
  return out;
}

namespace detail {

template <class Get>
Tensor<float> gather(const std::vector<std::size_t>& batch, std::uint64_t seed, int epoch, double flip_p,
                     const std::vector<std::string>& ids, Get&& get) {
  std::vector<Tensor<float>> items;
  items.reserve(batch.size());
  for (std::size_t i : batch) {
    const bool flip = flip_decision(derive_seed(seed, ids[i], static_cast<std::uint64_t>(epoch)), flip_p);
    items.push_back(flip ? flip_horizontal(get(i)) : get(i));
  }
  return stack<float>(items);
}

}  // namespace detail

/// Stage 1. Optimises color_loss (+ lambda_cc * contrastive unless disabled)
/// on resized, randomly flipped pairs. Writes loss_history.csv, epoch_NNN/
/// checkpoints and final/ under out_dir.
inline TrainResult train_stage1(const DatasetManifest& dataset, const TrainConfig& config, const fs::path& out_dir,
                                CcNet<float>* trained = nullptr) {
  require(config.stage == Stage::cc, "train_stage1 needs stage == cc");
  config.validate();
  const auto pairs = cache_pairs(dataset, config.image_size, config.jobs);
  std::vector<std::string> ids;
  for (const auto& p : pairs) ids.push_back(p.id);
  const auto backbone = make_backbone(config);
  CcNet<float> net(config.cc, derive_seed(config.seed, "ccnet"));
  log::info("stage 1: " + std::to_string(pairs.size()) + " pairs, CC-Net with " +
            std::to_string(net.parameter_count()) + " parameters");

  auto step = [&](const std::vector<std::size_t>& batch, int epoch) {
    const Tensor<float> raw = detail::gather(batch, config.seed, epoch, config.flip_probability, ids,
                                             [&](std::size_t i) { return pairs[i].raw; });
    const Tensor<float> ref = detail::gather(batch, config.seed, epoch, config.flip_probability, ids,
                                             [&](std::size_t i) { return pairs[i].reference; });
    const SplitLab<float> raw_lab = split_lab(rgb_to_lab(raw));
    const SplitLab<float> ref_lab = split_lab(rgb_to_lab(ref));
    const Var<float> pred = net.forward(Var<float>(raw_lab.chroma.data));
    Tensor<float> ref_hat;
    if (config.use_contrastive) ref_hat = reference_hat(raw_lab.lightness, ref_lab.chroma);
    return hybrid_cc_loss(pred, raw_lab.lightness, ref_lab.chroma, ref_hat, raw, backbone.get(), config.loss,
                          config.use_contrastive);
  };
  auto result = detail::run_training(net, config, ids, out_dir, "ccnet", step);
  if (trained) *trained = net;
  return result;
}

/// One stage-1 output on disk with its pairing.
struct Stage1Entry {
  std::string id;
  fs::path output;
  fs::path raw;
  std::optional<fs::path> reference;
};

struct Stage1Outputs {
  fs::path dir;
  std::vector<Stage1Entry> entries;

  nlohmann::json to_json() const {
    nlohmann::json items = nlohmann::json::array();
    for (const auto& e : entries)
      items.push_back({{"id", e.id},
                       {"output", e.output.filename().string()},
                       {"raw", e.raw.string()},
                       {"reference", e.reference ? nlohmann::json(e.reference->string()) : nlohmann::json(nullptr)}});
    return {{"outputs", items}};
  }
};

inline Stage1Outputs load_stage1_outputs(const fs::path& dir) {
  std::ifstream is(dir / "manifest.json");
  if (!is) throw TrainingError("no stage-1 manifest in " + dir.string());
  Stage1Outputs out{dir, {}};
  try {
    const nlohmann::json doc = nlohmann::json::parse(is);
    for (const auto& item : doc.at("outputs")) {
      Stage1Entry e{item.at("id"), dir / item.at("output").get<std::string>(), item.at("raw").get<std::string>(),
                    std::nullopt};
      if (!item.at("reference").is_null()) e.reference = item.at("reference").get<std::string>();
      out.entries.push_back(std::move(e));
    }
  } catch (const nlohmann::json::exception& e) {
    throw TrainingError("malformed stage-1 manifest in " + dir.string() + ": " + e.what());
  }
  return out;
}

/// Runs CC-Net over every raw image at native resolution and writes
/// out_dir/<id>.png plus out_dir/manifest.json. Unreadable inputs are
/// skipped with a warning.
inline Stage1Outputs generate_stage1_outputs(const CcNet<float>& net, const DatasetManifest& dataset,
                                             const fs::path& out_dir, int jobs = 1) {
  fs::create_directories(out_dir);
  std::vector<std::optional<Stage1Entry>> slots(dataset.samples.size());
  parallel_for(slots.size(), jobs, [&](std::size_t i) {
    const auto& s = dataset.samples[i];
    Tensor<float> raw;
    try {
      raw = read_rgb(s.raw);
    } catch (const ImageIoError& e) {
      log::warn(std::string("skipping ") + e.what());
      return;
    }
    const fs::path out = out_dir / (s.id + ".png");
    write_png(out, correct_colors(net, raw));
    slots[i] = Stage1Entry{s.id, out, s.raw, s.reference};
  });
  Stage1Outputs result{out_dir, {}};
  for (auto& s : slots)
    if (s) result.entries.push_back(std::move(*s));
  std::ofstream(out_dir / "manifest.json") << result.to_json().dump(2) << '\n';
  return result;
}

/// Stage 2. Optimises ssim_loss (+ lambda_hr * contrastive) of HR-Net on
/// stage-1 outputs against references. The contrastive negative is the
/// stage-1 output, or the raw image when negative_source == raw.
inline TrainResult train_stage2(const Stage1Outputs& outputs, const TrainConfig& config, const fs::path& out_dir,
                                HrNet<float>* trained = nullptr) {
  require(config.stage == Stage::hr, "train_stage2 needs stage == hr");
  config.validate();
  const bool raw_negative = config.use_contrastive && config.negative_source == NegativeSource::raw;
  struct Item {
    std::string id;
    Tensor<float> input, reference, negative;
  };
  std::vector<const Stage1Entry*> entries;
  for (const auto& e : outputs.entries) {
    if (e.reference)
      entries.push_back(&e);
    else
      log::warn("training skips " + e.id + ": no reference");
  }
  if (entries.empty()) throw TrainingError("no stage-1 outputs with references in " + outputs.dir.string());
  std::vector<Item> items(entries.size());
  const int size = config.image_size;
  parallel_for(entries.size(), config.jobs, [&](std::size_t i) {
    const auto& e = *entries[i];
    items[i].id = e.id;
    items[i].input = resize_rgb(read_rgb(e.output), size, size);
    items[i].reference = resize_rgb(read_rgb(*e.reference), size, size);
    // Raw images enter stage 2 only as the RAN negative.
    if (raw_negative) items[i].negative = resize_rgb(read_rgb(e.raw), size, size);
  });
  std::vector<std::string> ids;
  for (const auto& it : items) ids.push_back(it.id);
  const auto backbone = make_backbone(config);
  HrNet<float> net(config.hr, derive_seed(config.seed, "hrnet"));
  log::info("stage 2: " + std::to_string(items.size()) + " pairs, HR-Net with " +
            std::to_string(net.parameter_count()) + " parameters, negative " +
            (raw_negative ? "raw" : "stage-1 output"));

  auto step = [&](const std::vector<std::size_t>& batch, int epoch) {
    auto pick = [&](auto member) {
      return detail::gather(batch, config.seed, epoch, config.flip_probability, ids,
                            [&](std::size_t i) { return items[i].*member; });
    };
    const Tensor<float> input = pick(&Item::input);
    const Tensor<float> ref = pick(&Item::reference);
    const Tensor<float> negative = raw_negative ? pick(&Item::negative) : input;
    const Var<float> pred = net.forward(Var<float>(to_signed_range(input)));
    return hybrid_hr_loss(pred, ref, negative, backbone.get(), config.loss, config.use_contrastive);
  };
  auto result = detail::run_training(net, config, ids, out_dir, "hrnet", step);
  if (trained) *trained = net;
  return result;
}

}  // namespace ccl

#endif  // CCL_TRAINING_HPP
