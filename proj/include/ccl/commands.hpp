#ifndef CCL_COMMANDS_HPP
#define CCL_COMMANDS_HPP

#include <algorithm>
#include <atomic>
#include <iomanip>
#include <iostream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "ccl/metrics.hpp"
#include "ccl/training.hpp"

// Command implementations behind the `ccl` executable. Each returns a
// process exit code: 0 on success, 1 on a runtime failure, 2 on bad usage.

namespace ccl {

inline constexpr int kExitOk = 0;
inline constexpr int kExitFailure = 1;
inline constexpr int kExitUsage = 2;

/// Runs `body`, mapping exceptions to exit codes with a logged message.
template <class F>
int guarded(const std::string& command, F&& body) {
  try {
    return body();
  } catch (const ValidationError& e) {
    log::error(command + ": " + e.what());
    return kExitUsage;
  } catch (const std::exception& e) {
    log::error(command + ": " + e.what());
    return kExitFailure;
  }
}

struct TrainCommand {
  std::string stage = "all";  // cc, hr or all
  fs::path dataset_root;
  std::string split;
  fs::path out_dir = "runs/ccl";
  TrainConfig config;
  std::optional<fs::path> stage1_dir;     // hr only: existing stage-1 outputs
  std::optional<fs::path> cc_checkpoint;  // hr only: generate stage-1 outputs with this CC-Net
};

/// Layout under out_dir: cc/ (stage-1 run), stage1_outputs/, hr/ (stage-2 run),
/// run.log.
inline int cmd_train(const TrainCommand& cmd) {
  const int rc = guarded("train", [&] {
    if (cmd.stage != "cc" && cmd.stage != "hr" && cmd.stage != "all")
      throw ValidationError("invalid stage '" + cmd.stage + "' (expected cc, hr or all)");
    fs::create_directories(cmd.out_dir);
    log::open_run_log(cmd.out_dir / "run.log");
    log::info("effective config: " + cmd.config.to_json().dump());
    log::info("stage " + cmd.stage + ", dataset " + cmd.dataset_root.string() +
              (cmd.split.empty() ? "" : " split " + cmd.split) + ", output " + cmd.out_dir.string());

    std::optional<DatasetManifest> dataset;
    auto need_dataset = [&]() -> const DatasetManifest& {
      if (!dataset) {
        if (cmd.dataset_root.empty() || !fs::exists(cmd.dataset_root))
          throw DatasetError("dataset not found: '" + cmd.dataset_root.string() + "'");
        dataset = load_paired_dataset(cmd.dataset_root, cmd.split);
      }
      return *dataset;
    };

    std::optional<Stage1Outputs> stage1;
    if (cmd.stage == "cc" || cmd.stage == "all") {
      TrainConfig c = cmd.config;
      c.stage = Stage::cc;
      CcNet<float> net(c.cc, 0);
      const auto r = train_stage1(need_dataset(), c, cmd.out_dir / "cc", &net);
      std::cout << "cc checkpoint: " << r.checkpoint.dir.string() << '\n';
      if (cmd.stage == "all") stage1 = generate_stage1_outputs(net, need_dataset(), cmd.out_dir / "stage1_outputs", c.jobs);
    }
    if (cmd.stage == "hr" || cmd.stage == "all") {
      if (!stage1) {
        if (cmd.stage1_dir) {
          stage1 = load_stage1_outputs(*cmd.stage1_dir);
        } else if (cmd.cc_checkpoint) {
          const auto cc = load_cc_checkpoint(*cmd.cc_checkpoint);
          stage1 = generate_stage1_outputs(cc.net, need_dataset(), cmd.out_dir / "stage1_outputs", cmd.config.jobs);
        } else {
          throw ValidationError("stage hr needs --stage1-dir or --cc-checkpoint");
        }
      }
      TrainConfig c = cmd.config;
      c.stage = Stage::hr;
      const auto r = train_stage2(*stage1, c, cmd.out_dir / "hr");
      std::cout << "hr checkpoint: " << r.checkpoint.dir.string() << '\n';
    }
    return kExitOk;
  });
  log::open_run_log({});
  return rc;
}

struct EnhanceCommand {
  fs::path input_dir;
  fs::path cc_checkpoint;
  fs::path hr_checkpoint;
  fs::path out_dir;
  bool emit_intermediate = false;
  int jobs = 1;
};

/// Writes out_dir/<stem>.png (final) and, with emit_intermediate,
/// out_dir/cc/<stem>.png (stage-1 output).
inline int cmd_enhance(const EnhanceCommand& cmd) {
  return guarded("enhance", [&] {
    const auto inputs = list_images(cmd.input_dir);
    if (inputs.empty()) throw DatasetError("no images in " + cmd.input_dir.string());
    const auto cc = load_cc_checkpoint(cmd.cc_checkpoint);
    const auto hr = load_hr_checkpoint(cmd.hr_checkpoint);
    std::set<std::string> stems;
    for (const auto& p : inputs)
      if (!stems.insert(p.stem().string()).second)
        throw DatasetError("two inputs share the name " + p.stem().string());
    std::atomic<int> failures{0};
    parallel_for(inputs.size(), cmd.jobs, [&](std::size_t i) {
      const std::string stem = inputs[i].stem().string();
      try {
        const auto out = enhance_cascade(cc.net, hr.net, read_rgb(inputs[i]));
        write_png(cmd.out_dir / (stem + ".png"), out.hr);
        if (cmd.emit_intermediate) write_png(cmd.out_dir / "cc" / (stem + ".png"), out.cc);
      } catch (const ImageIoError& e) {
        log::error(e.what());
        ++failures;
      }
    });
    log::info("enhanced " + std::to_string(inputs.size() - failures) + " of " + std::to_string(inputs.size()) +
              " images into " + cmd.out_dir.string());
    return failures == 0 ? kExitOk : kExitFailure;
  });
}

struct EvaluateCommand {
  fs::path pred_dir;
  std::optional<fs::path> ref_dir;
  fs::path out_csv;
  int jobs = 1;
};

inline int cmd_evaluate(const EvaluateCommand& cmd) {
  return guarded("evaluate", [&] {
    const auto report = evaluate_dataset(cmd.pred_dir, cmd.ref_dir, cmd.jobs);
    if (!cmd.out_csv.empty()) report.write_csv(cmd.out_csv);
    std::ostringstream os;
    os << std::fixed << std::setprecision(4) << report.rows.size() << " images";
    if (report.has_reference) os << "  PSNR " << *report.mean.psnr << "  SSIM " << *report.mean.ssim;
    os << "  UIQM " << report.mean.uiqm << "  UCIQE " << report.mean.uciqe;
    std::cout << os.str() << '\n';
    return kExitOk;
  });
}

struct GridCommand {
  std::vector<fs::path> dirs;
  std::vector<std::string> labels;  // defaults to directory names
  fs::path out_image;
  int cell = 160;
};

/// Rows are image ids (sorted), columns follow the order of `dirs`. Every
/// directory must hold the same set of ids.
inline int cmd_grid(const GridCommand& cmd) {
  return guarded("grid", [&] {
    require(!cmd.dirs.empty(), "grid needs at least one directory");
    require(cmd.labels.empty() || cmd.labels.size() == cmd.dirs.size(), "one label per directory");
    require(cmd.cell >= 16, "grid cell size must be >= 16");
    std::vector<std::map<std::string, fs::path>> files(cmd.dirs.size());
    for (std::size_t d = 0; d < cmd.dirs.size(); ++d)
      for (const auto& p : list_images(cmd.dirs[d])) files[d].emplace(p.stem().string(), p);
    std::set<std::string> all;
    for (const auto& f : files)
      for (const auto& [id, _] : f) all.insert(id);
    if (all.empty()) throw DatasetError("no images in the grid directories");
    std::string diffs;
    for (std::size_t d = 0; d < files.size(); ++d)
      for (const auto& id : all)
        if (!files[d].count(id)) diffs += "\n  " + cmd.dirs[d].string() + " lacks " + id;
    if (!diffs.empty()) throw DatasetError("image ids differ between directories:" + diffs);

    const int cell = cmd.cell, label_w = 120, header_h = 28;
    const int rows = static_cast<int>(all.size()), cols = static_cast<int>(cmd.dirs.size());
    cv::Mat grid(header_h + rows * cell, label_w + cols * cell, CV_8UC3, cv::Scalar(255, 255, 255));
    auto text = [&](const std::string& s, int x, int y) {
      cv::putText(grid, s.substr(0, 18), {x, y}, cv::FONT_HERSHEY_SIMPLEX, 0.45, cv::Scalar(0, 0, 0), 1, cv::LINE_AA);
    };
    for (int c = 0; c < cols; ++c)
      text(cmd.labels.empty() ? cmd.dirs[c].filename().string() : cmd.labels[c], label_w + c * cell + 4, 19);
    int r = 0;
    for (const auto& id : all) {
      text(id, 4, header_h + r * cell + cell / 2);
      for (int c = 0; c < cols; ++c) {
        const cv::Mat img = tensor_to_mat(resize_rgb(read_rgb(files[c].at(id)), cell, cell));
        img.copyTo(grid(cv::Rect(label_w + c * cell, header_h + r * cell, cell, cell)));
      }
      ++r;
    }
    if (cmd.out_image.has_parent_path()) fs::create_directories(cmd.out_image.parent_path());
    if (!cv::imwrite(cmd.out_image.string(), grid)) throw ImageIoError("cannot write " + cmd.out_image.string());
    log::info("grid of " + std::to_string(rows) + " rows x " + std::to_string(cols) + " columns written to " +
              cmd.out_image.string());
    return kExitOk;
  });
}

inline int cmd_synth(const SynthOptions& options, const fs::path& out_root) {
  return guarded("synth", [&] {
    if (!options.params) {
      const auto names = degradation_preset_names();
      if (std::find(names.begin(), names.end(), options.preset) == names.end())
        throw ValidationError("invalid preset '" + options.preset + "' (expected greenish, bluish or hazy)");
    }
    const auto m = write_synthetic_corpus(out_root, options);
    log::info("wrote " + std::to_string(m.samples.size()) + " synthetic pairs to " + out_root.string());
    return kExitOk;
  });
}

}  // namespace ccl

#endif  // CCL_COMMANDS_HPP
