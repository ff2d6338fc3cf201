#ifndef CCL_CHECKPOINT_HPP
#define CCL_CHECKPOINT_HPP

#include <filesystem>
#include <fstream>
#include <string>

#include <nlohmann/json.hpp>

#include "ccl/ccnet.hpp"
#include "ccl/core/archive.hpp"
#include "ccl/hrnet.hpp"

#ifndef CCL_GIT_HASH
#define CCL_GIT_HASH "unknown"
#endif

// Checkpoint directory layout:
//
//   <dir>/model.bin      tensor archive of the network parameters
//   <dir>/manifest.json  kind, model config, training config, seed, epoch,
//                        parameter count, git hash, loss history

namespace ccl {

class CheckpointError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline nlohmann::json to_json(const CcNetConfig& c) {
  return {{"base_width", c.base_width}, {"num_fab", c.num_fab}, {"kernel_size", c.kernel_size}};
}

inline nlohmann::json to_json(const HrNetConfig& c) { return {{"widths", c.widths}, {"kernel_size", c.kernel_size}}; }

inline CcNetConfig cc_config_from_json(const nlohmann::json& j) {
  CcNetConfig c;
  c.base_width = j.value("base_width", c.base_width);
  c.num_fab = j.value("num_fab", c.num_fab);
  c.kernel_size = j.value("kernel_size", c.kernel_size);
  c.validate();
  return c;
}

inline HrNetConfig hr_config_from_json(const nlohmann::json& j) {
  HrNetConfig c;
  c.widths = j.value("widths", c.widths);
  c.kernel_size = j.value("kernel_size", c.kernel_size);
  c.validate();
  return c;
}

struct CheckpointManifest {
  std::string kind;  // "ccnet" or "hrnet"
  nlohmann::json model;
  nlohmann::json train_config = nlohmann::json::object();
  std::uint64_t seed = 0;
  int epoch = 0;
  std::size_t parameter_count = 0;
  std::string git_hash = CCL_GIT_HASH;
  nlohmann::json loss_history = nlohmann::json::array();

  nlohmann::json to_json() const {
    return {{"kind", kind},         {"model", model},     {"train_config", train_config},
            {"seed", seed},         {"epoch", epoch},     {"parameter_count", parameter_count},
            {"git_hash", git_hash}, {"loss_history", loss_history}};
  }

  static CheckpointManifest from_json(const nlohmann::json& j) {
    CheckpointManifest m;
    m.kind = j.at("kind").get<std::string>();
    m.model = j.at("model");
    m.train_config = j.value("train_config", nlohmann::json::object());
    m.seed = j.value("seed", std::uint64_t{0});
    m.epoch = j.value("epoch", 0);
    m.parameter_count = j.at("parameter_count").get<std::size_t>();
    m.git_hash = j.value("git_hash", std::string("unknown"));
    m.loss_history = j.value("loss_history", nlohmann::json::array());
    return m;
  }
};

struct Checkpoint {
  std::filesystem::path dir;
  CheckpointManifest manifest;
};

template <class Net>
struct LoadedModel {
  Net net;
  CheckpointManifest manifest;
};

template <class T>
void save_checkpoint(const std::filesystem::path& dir, const ParameterList<T>& params, CheckpointManifest manifest) {
  std::filesystem::create_directories(dir);
  manifest.parameter_count = count_parameters(params);
  write_archive(dir / "model.bin", to_archive(params));
  std::ofstream os(dir / "manifest.json");
  os << manifest.to_json().dump(2) << '\n';
  if (!os) throw CheckpointError("cannot write " + (dir / "manifest.json").string());
}

inline CheckpointManifest read_checkpoint_manifest(const std::filesystem::path& dir) {
  const auto path = dir / "manifest.json";
  std::ifstream is(path);
  if (!is) throw CheckpointError("no checkpoint manifest at " + path.string());
  try {
    return CheckpointManifest::from_json(nlohmann::json::parse(is));
  } catch (const nlohmann::json::exception& e) {
    throw CheckpointError("malformed checkpoint manifest " + path.string() + ": " + e.what());
  }
}

namespace detail {

template <class Net>
LoadedModel<Net> load_model(const std::filesystem::path& dir, const std::string& kind, Net net,
                            CheckpointManifest manifest) {
  auto params = net.parameters();
  try {
    load_into(params, read_archive(dir / "model.bin"));
  } catch (const std::exception& e) {
    throw CheckpointError("checkpoint " + dir.string() + " does not fit a " + kind + ": " + e.what());
  }
  return {std::move(net), std::move(manifest)};
}

inline CheckpointManifest expect_kind(const std::filesystem::path& dir, const std::string& kind) {
  auto m = read_checkpoint_manifest(dir);
  if (m.kind != kind) throw CheckpointError(dir.string() + " holds a " + m.kind + " checkpoint, expected " + kind);
  return m;
}

}  // namespace detail

template <class T = float>
LoadedModel<CcNet<T>> load_cc_checkpoint(const std::filesystem::path& dir) {
  auto m = detail::expect_kind(dir, "ccnet");
  CcNet<T> net(cc_config_from_json(m.model), 0);
  return detail::load_model(dir, "ccnet", std::move(net), std::move(m));
}

template <class T = float>
LoadedModel<HrNet<T>> load_hr_checkpoint(const std::filesystem::path& dir) {
  auto m = detail::expect_kind(dir, "hrnet");
  HrNet<T> net(hr_config_from_json(m.model), 0);
  return detail::load_model(dir, "hrnet", std::move(net), std::move(m));
}

}  // namespace ccl

#endif  // CCL_CHECKPOINT_HPP
