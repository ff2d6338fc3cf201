#ifndef CCL_TOOLS_CLI_APP_HPP
#define CCL_TOOLS_CLI_APP_HPP

#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "ccl/commands.hpp"

namespace ccl::cli {

/// Flag values for `train`. Unset optionals leave the config-file value alone.
struct TrainFlags {
  std::string stage = "all";
  std::string data;
  std::string split;
  std::string out = "runs/ccl";
  std::string config_file;
  std::optional<std::string> stage1_dir, cc_checkpoint;
  std::optional<int> epochs, batch_size, decay_start, image_size, checkpoint_every, jobs, cc_width, num_fab,
      backbone_width_divisor;
  std::optional<double> lr_cc, lr_hr, beta1, grad_clip, lambda_cc, lambda_hr, flip_probability;
  std::optional<std::uint64_t> seed, backbone_seed;
  std::optional<std::string> negative_source, select, backbone;
  std::optional<std::vector<int>> hr_widths;
  bool no_contrastive = false;
};

inline nlohmann::json read_json_file(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw ValidationError("cannot open config file " + path);
  try {
    return nlohmann::json::parse(is);
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError("config file " + path + " is not valid JSON: " + e.what());
  }
}

/// Config file first, then every flag that was given.
inline TrainConfig effective_config(const TrainFlags& f) {
  TrainConfig c;
  if (!f.config_file.empty()) c.merge(read_json_file(f.config_file));
  nlohmann::json o = nlohmann::json::object();
  auto put = [&](const char* key, const auto& v) {
    if (v) o[key] = *v;
  };
  put("epochs", f.epochs);
  put("batch_size", f.batch_size);
  put("decay_start_epoch", f.decay_start);
  put("image_size", f.image_size);
  put("checkpoint_every", f.checkpoint_every);
  put("jobs", f.jobs);
  put("backbone_width_divisor", f.backbone_width_divisor);
  put("lr_cc", f.lr_cc);
  put("lr_hr", f.lr_hr);
  put("beta1", f.beta1);
  put("grad_clip", f.grad_clip);
  put("flip_probability", f.flip_probability);
  put("seed", f.seed);
  put("backbone_seed", f.backbone_seed);
  put("negative_source", f.negative_source);
  put("select", f.select);
  put("backbone_weights", f.backbone);
  if (f.no_contrastive) o["use_contrastive"] = false;
  c.merge(o);
  if (f.cc_width) c.cc.base_width = *f.cc_width;
  if (f.num_fab) c.cc.num_fab = *f.num_fab;
  if (f.hr_widths) {
    require(f.hr_widths->size() == 3, "--hr-widths takes three values");
    c.hr.widths = {(*f.hr_widths)[0], (*f.hr_widths)[1], (*f.hr_widths)[2]};
  }
  if (f.lambda_cc) c.loss.lambda_cc = *f.lambda_cc;
  if (f.lambda_hr) c.loss.lambda_hr = *f.lambda_hr;
  c.validate();
  return c;
}

inline int run(int argc, char** argv) {
  CLI::App app{"Cascaded underwater image enhancement: training, inference and evaluation"};
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string("ccl ") + CCL_GIT_HASH);
  bool quiet = false;
  app.add_flag("-q,--quiet", quiet, "Hide progress messages (warnings and errors still print)");

  TrainFlags tf;
  auto* train = app.add_subcommand("train", "Train CC-Net (cc), HR-Net (hr) or the whole cascade (all)");
  train->add_option("--stage", tf.stage, "cc, hr or all")->capture_default_str();
  train->add_option("--data", tf.data, "Dataset root with raw/ and reference/");
  train->add_option("--split", tf.split, "Subdirectory of --data to use");
  train->add_option("--out", tf.out, "Run directory")->capture_default_str();
  train->add_option("--config", tf.config_file, "JSON training config; flags override it");
  train->add_option("--stage1-dir", tf.stage1_dir, "hr: existing stage-1 outputs");
  train->add_option("--cc-checkpoint", tf.cc_checkpoint, "hr: CC-Net checkpoint used to generate stage-1 outputs");
  train->add_option("--epochs", tf.epochs);
  train->add_option("--batch-size", tf.batch_size);
  train->add_option("--decay-start", tf.decay_start, "Epoch where the linear learning-rate decay begins");
  train->add_option("--image-size", tf.image_size, "Training resolution (square)");
  train->add_option("--checkpoint-every", tf.checkpoint_every, "Epochs between checkpoints, 0 disables");
  train->add_option("--lr-cc", tf.lr_cc);
  train->add_option("--lr-hr", tf.lr_hr);
  train->add_option("--beta1", tf.beta1);
  train->add_option("--grad-clip", tf.grad_clip, "Global gradient-norm bound, 0 disables");
  train->add_option("--flip-probability", tf.flip_probability);
  train->add_option("--lambda-cc", tf.lambda_cc);
  train->add_option("--lambda-hr", tf.lambda_hr);
  train->add_option("--seed", tf.seed);
  train->add_option("--negative-source", tf.negative_source, "cc_output (default) or raw");
  train->add_option("--select", tf.select, "Final checkpoint: last or best");
  train->add_flag("--no-contrastive", tf.no_contrastive, "Drop the contrastive term");
  train->add_option("--backbone", tf.backbone, "VGG-19 tensor archive (else $CCL_BACKBONE_WEIGHTS)");
  train->add_option("--backbone-seed", tf.backbone_seed, "Seed of the random fallback backbone");
  train->add_option("--backbone-width-divisor", tf.backbone_width_divisor, "Narrow the random fallback backbone");
  train->add_option("--cc-width", tf.cc_width, "CC-Net feature width");
  train->add_option("--num-fab", tf.num_fab, "Number of feature attention blocks");
  train->add_option("--hr-widths", tf.hr_widths, "HR-Net widths at 1, 1/2 and 1/4 scale")->expected(3);
  train->add_option("--jobs", tf.jobs, "Worker threads for data loading");

  EnhanceCommand ec;
  auto* enhance = app.add_subcommand("enhance", "Run the trained cascade over a directory of images");
  enhance->add_option("--input", ec.input_dir)->required();
  enhance->add_option("--cc", ec.cc_checkpoint, "CC-Net checkpoint directory")->required();
  enhance->add_option("--hr", ec.hr_checkpoint, "HR-Net checkpoint directory")->required();
  enhance->add_option("--out", ec.out_dir)->required();
  enhance->add_flag("--emit-intermediate", ec.emit_intermediate, "Also write stage-1 outputs to <out>/cc/");
  enhance->add_option("--jobs", ec.jobs)->check(CLI::PositiveNumber);

  EvaluateCommand vc;
  std::string ref;
  auto* evaluate = app.add_subcommand("evaluate", "PSNR/SSIM (with references), UIQM and UCIQE");
  evaluate->add_option("--pred", vc.pred_dir)->required();
  evaluate->add_option("--ref", ref, "Reference directory (omit for no-reference metrics only)");
  evaluate->add_option("--out", vc.out_csv, "CSV report path");
  evaluate->add_option("--jobs", vc.jobs)->check(CLI::PositiveNumber);

  GridCommand gc;
  auto* grid = app.add_subcommand("grid", "Side-by-side comparison grid");
  grid->add_option("--dirs", gc.dirs, "Directories, one grid column each")->required();
  grid->add_option("--labels", gc.labels, "Column labels");
  grid->add_option("--out", gc.out_image)->required();
  grid->add_option("--cell", gc.cell, "Cell side in pixels")->capture_default_str();

  SynthOptions so;
  std::string synth_out, clean;
  auto* synth = app.add_subcommand("synth", "Write a synthetic paired corpus");
  synth->add_option("--count", so.count)->capture_default_str();
  synth->add_option("--preset", so.preset, "greenish, bluish or hazy")->capture_default_str();
  synth->add_option("--out", synth_out)->required();
  synth->add_option("--seed", so.seed)->capture_default_str();
  synth->add_option("--size", so.size, "Image side (0 keeps the size of --clean images)")->capture_default_str();
  synth->add_option("--clean", clean, "Directory of clean images to degrade instead of procedural scenes");
  synth->add_option("--jobs", so.jobs)->check(CLI::PositiveNumber);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kExitOk : kExitUsage;
  }
  log::set_quiet(quiet);

  if (*train) {
    TrainCommand cmd;
    cmd.stage = tf.stage;
    cmd.dataset_root = tf.data;
    cmd.split = tf.split;
    cmd.out_dir = tf.out;
    if (tf.stage1_dir) cmd.stage1_dir = *tf.stage1_dir;
    if (tf.cc_checkpoint) cmd.cc_checkpoint = *tf.cc_checkpoint;
    const int rc = guarded("train", [&] {
      cmd.config = effective_config(tf);
      return kExitOk;
    });
    if (rc != kExitOk) return rc;
    return cmd_train(cmd);
  }
  if (*enhance) return cmd_enhance(ec);
  if (*evaluate) {
    if (!ref.empty()) vc.ref_dir = ref;
    return cmd_evaluate(vc);
  }
  if (*grid) return cmd_grid(gc);
  if (!clean.empty()) so.clean_dir = clean;
  return cmd_synth(so, synth_out);
}

}  // namespace ccl::cli

#endif  // CCL_TOOLS_CLI_APP_HPP
