#include <gtest/gtest.h>

#include <fstream>
#include <iterator>

#include "ccl/training.hpp"
#include "support/gradcheck.hpp"
#include "support/tempdir.hpp"

using namespace ccl;
using ccl::testkit::TempDir;

namespace {

std::string slurp(const fs::path& p) {
  std::ifstream is(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(is), {}};
}

TrainConfig tiny_config(Stage stage) {
  TrainConfig c;
  c.stage = stage;
  c.batch_size = 2;
  c.epochs = 3;
  c.decay_start_epoch = 1;
  c.image_size = 24;
  c.seed = 7;
  c.cc.base_width = 8;
  c.cc.num_fab = 1;
  c.hr.widths = {8, 8, 8};
  c.backbone_width_divisor = 16;
  return c;
}

// One corpus shared by every test in this file.
const fs::path& corpus() {
  static TempDir dir("train_corpus");
  static bool made = false;
  if (!made) {
    SynthOptions opt;
    opt.count = 5;
    opt.size = 32;
    opt.seed = 3;
    write_synthetic_corpus(dir.path(), opt);
    made = true;
  }
  return dir.path();
}

Tensor<float> probe() { return testkit::random_tensor(Shape{1, 3, 20, 28}, 99, 0, 1).cast<float>(); }

}  // namespace

TEST(Schedule, ClosedFormRampAtDefaults) {
  TrainConfig c;  // 150 epochs, decay from 75
  c.stage = Stage::hr;
  EXPECT_EQ(lr_at_epoch(c, 0), 1e-3);
  EXPECT_EQ(lr_at_epoch(c, 74), 1e-3);
  EXPECT_EQ(lr_at_epoch(c, 75), 1e-3);
  EXPECT_DOUBLE_EQ(lr_at_epoch(c, 149), 1e-3 / 75.0);
  EXPECT_NEAR(lr_at_epoch(c, 149), 1.333e-5, 1e-8);
  c.stage = Stage::cc;
  EXPECT_EQ(lr_at_epoch(c, 0), 5e-4);
  EXPECT_DOUBLE_EQ(lr_at_epoch(c, 112), 5e-4 * 38.0 / 75.0);
}

TEST(Schedule, NonIncreasingPositiveAndValidated) {
  for (int epochs : {1, 2, 10, 150})
    for (int decay = 0; decay < epochs; decay += std::max(1, epochs / 7)) {
      TrainConfig c;
      c.epochs = epochs;
      c.decay_start_epoch = decay;
      double prev = lr_at_epoch(c, 0);
      for (int e = 1; e < epochs; ++e) {
        const double lr = lr_at_epoch(c, e);
        EXPECT_LE(lr, prev);
        prev = lr;
      }
      EXPECT_GT(lr_at_epoch(c, epochs - 1), 0.0);
      EXPECT_THROW(lr_at_epoch(c, epochs), ValidationError);
      EXPECT_THROW(lr_at_epoch(c, -1), ValidationError);
    }
}

TEST(TrainConfigJson, RoundTripAndErrors) {
  TrainConfig c = tiny_config(Stage::hr);
  c.negative_source = NegativeSource::raw;
  c.select = Selection::best;
  c.loss.lambda_hr = 0.25;
  const TrainConfig back = TrainConfig::from_json(c.to_json());
  EXPECT_EQ(back.to_json(), c.to_json());

  TrainConfig d;
  d.merge({{"epochs", 10}, {"decay_start_epoch", 5}});
  EXPECT_EQ(d.epochs, 10);
  EXPECT_EQ(d.batch_size, 8);
  EXPECT_THROW(d.merge({{"epoch", 3}}), ValidationError);
  EXPECT_THROW(d.merge({{"stage", "xx"}}), ValidationError);
  EXPECT_THROW(d.merge({{"negative_source", "both"}}), ValidationError);
  EXPECT_THROW(d.merge({{"batch_size", "eight"}}), ValidationError);

  TrainConfig bad;
  bad.decay_start_epoch = bad.epochs;
  EXPECT_THROW(bad.validate(), ValidationError);
  bad = TrainConfig{};
  bad.lr_cc = 0;
  EXPECT_THROW(bad.validate(), ValidationError);
}

TEST(EpochBatches, SeededPermutation) {
  const auto a = detail::epoch_batches(11, 4, 5, 0);
  ASSERT_EQ(a.size(), 3u);
  EXPECT_EQ(a[2].size(), 3u);
  std::vector<std::size_t> all;
  for (const auto& b : a) all.insert(all.end(), b.begin(), b.end());
  std::sort(all.begin(), all.end());
  for (std::size_t i = 0; i < 11; ++i) EXPECT_EQ(all[i], i);
  EXPECT_EQ(a, detail::epoch_batches(11, 4, 5, 0));
  EXPECT_NE(a, detail::epoch_batches(11, 4, 5, 1));
}

TEST(TrainStage1, DeterministicLossCurveAndCheckpoints) {
  TempDir a("s1"), b("s1");
  const auto dataset = load_paired_dataset(corpus());
  const auto cfg = tiny_config(Stage::cc);
  const auto ra = train_stage1(dataset, cfg, a.path());
  const auto rb = train_stage1(dataset, cfg, b.path());
  ASSERT_EQ(ra.iterations.size(), 9u);  // 3 epochs x ceil(5 / 2)
  for (std::size_t i = 0; i < ra.iterations.size(); ++i) {
    EXPECT_EQ(ra.iterations[i].loss_total, rb.iterations[i].loss_total);
    EXPECT_GT(ra.iterations[i].loss_ctr, 0.0);
  }
  EXPECT_EQ(slurp(a / "final/model.bin"), slurp(b / "final/model.bin"));
  EXPECT_EQ(slurp(a / "loss_history.csv"), slurp(b / "loss_history.csv"));

  for (const char* d : {"epoch_001", "epoch_002", "epoch_003", "final"})
    EXPECT_TRUE(fs::is_regular_file(a / d / "model.bin")) << d;
  const auto m = ra.checkpoint.manifest;
  EXPECT_EQ(m.kind, "ccnet");
  EXPECT_EQ(m.epoch, 3);
  EXPECT_EQ(m.parameter_count, CcNet<float>::expected_parameter_count(cfg.cc));
  EXPECT_EQ(m.loss_history.size(), 3u);
  EXPECT_EQ(m.train_config["seed"], 7);
  EXPECT_FALSE(m.git_hash.empty());

  std::ifstream csv(a / "loss_history.csv");
  std::string header;
  std::getline(csv, header);
  EXPECT_EQ(header, "epoch,iter,loss_total,loss_main,loss_ctr,lr");
  int rows = 0;
  for (std::string line; std::getline(csv, line);) ++rows;
  EXPECT_EQ(rows, 9);
}

TEST(TrainStage1, WithoutContrastiveLogsPureColorLoss) {
  TempDir dir("s1");
  const auto dataset = load_paired_dataset(corpus());
  auto cfg = tiny_config(Stage::cc);
  cfg.use_contrastive = false;
  cfg.epochs = 1;
  cfg.decay_start_epoch = 0;
  const auto r = train_stage1(dataset, cfg, dir.path());
  for (const auto& it : r.iterations) {
    EXPECT_EQ(it.loss_ctr, 0.0);
    EXPECT_EQ(it.loss_total, it.loss_main);
  }

  // Independent recomputation of the first batch with an untrained network.
  const auto pairs = cache_pairs(dataset, cfg.image_size, 1);
  const auto batch = detail::epoch_batches(pairs.size(), cfg.batch_size, cfg.seed, 0).front();
  std::vector<Tensor<float>> raws, refs;
  for (std::size_t i : batch) {
    const bool flip = Rng(derive_seed(cfg.seed, pairs[i].id, 0)).bernoulli(cfg.flip_probability);
    raws.push_back(flip ? flip_horizontal(pairs[i].raw) : pairs[i].raw);
    refs.push_back(flip ? flip_horizontal(pairs[i].reference) : pairs[i].reference);
  }
  const CcNet<float> fresh(cfg.cc, derive_seed(cfg.seed, "ccnet"));
  const auto raw_split = split_lab(rgb_to_lab(stack<float>(raws)));
  const auto ref_split = split_lab(rgb_to_lab(stack<float>(refs)));
  const double expected = color_loss(fresh.forward(Var<float>(raw_split.chroma.data)), ref_split.chroma.data).item();
  EXPECT_EQ(r.iterations.front().loss_total, expected);
}

TEST(TrainStage1, BestSelectionAndCheckpointRoundTrip) {
  TempDir dir("s1");
  auto cfg = tiny_config(Stage::cc);
  cfg.select = Selection::best;
  cfg.checkpoint_every = 0;
  CcNet<float> trained(cfg.cc, 0);
  const auto r = train_stage1(load_paired_dataset(corpus()), cfg, dir.path(), &trained);
  EXPECT_FALSE(fs::exists(dir / "epoch_001"));
  int argmin = 0;
  for (int e = 1; e < 3; ++e)
    if (r.epochs[e].loss_total < r.epochs[argmin].loss_total) argmin = e;
  EXPECT_EQ(r.checkpoint.manifest.epoch, argmin + 1);

  const auto loaded = load_cc_checkpoint(r.checkpoint.dir);
  EXPECT_EQ(correct_colors(loaded.net, probe()), correct_colors(trained, probe()));
  EXPECT_THROW(load_hr_checkpoint(r.checkpoint.dir), CheckpointError);
  EXPECT_THROW(load_cc_checkpoint(dir / "missing"), CheckpointError);

  // A manifest describing a different width no longer fits the archive.
  auto j = nlohmann::json::parse(slurp(dir / "final/manifest.json"));
  j["model"]["base_width"] = 16;
  std::ofstream(dir / "final/manifest.json") << j.dump();
  EXPECT_THROW(load_cc_checkpoint(dir / "final"), CheckpointError);
}

TEST(TrainStage1, NonFiniteLossAbortsWithBatchIds) {
  TempDir dir("nan");
  auto cfg = tiny_config(Stage::cc);
  CcNet<float> net(cfg.cc, 1);
  const std::vector<std::string> ids{"p0", "p1", "p2"};
  auto step = [&](const std::vector<std::size_t>&, int) {
    LossBreakdown<float> l;
    l.total = Var<float>(Tensor<float>(Shape{1, 1, 1, 1}, std::numeric_limits<float>::quiet_NaN()));
    return l;
  };
  try {
    detail::run_training(net, cfg, ids, dir.path(), "ccnet", step);
    FAIL() << "expected TrainingError";
  } catch (const TrainingError& e) {
    EXPECT_NE(std::string(e.what()).find("batch ids"), std::string::npos);
  }
  const auto dump = nlohmann::json::parse(slurp(dir / "nan_dump.json"));
  EXPECT_EQ(dump["batch_ids"].size(), 2u);
  EXPECT_EQ(dump["epoch"], 0);
}

TEST(GenerateStage1Outputs, OnePerInputByteStableAndSkipsUnreadable) {
  TempDir data("s1data"), out1("s1out"), out2("s1out");
  fs::copy(corpus(), data.path(), fs::copy_options::recursive);
  std::ofstream(data / "raw/zz_broken.png") << "not an image";
  const auto dataset = load_paired_dataset(data.path());
  const CcNet<float> net(tiny_config(Stage::cc).cc, 5);

  const auto a = generate_stage1_outputs(net, dataset, out1.path());
  const auto b = generate_stage1_outputs(net, dataset, out2.path(), 3);
  ASSERT_EQ(a.entries.size(), 5u);
  for (std::size_t i = 0; i < a.entries.size(); ++i) {
    EXPECT_EQ(a.entries[i].id, dataset.samples[i].id);
    EXPECT_EQ(read_rgb(a.entries[i].output).shape(), read_rgb(dataset.samples[i].raw).shape());
    EXPECT_EQ(slurp(a.entries[i].output), slurp(b.entries[i].output));
  }
  const auto reloaded = load_stage1_outputs(out1.path());
  EXPECT_EQ(reloaded.to_json(), a.to_json());
}

TEST(TrainStage2, RanNegativeRecordedAndReloadable) {
  TempDir s1("s1out"), s2("s2");
  const auto dataset = load_paired_dataset(corpus());
  const CcNet<float> cc(tiny_config(Stage::cc).cc, 5);
  const auto outputs = generate_stage1_outputs(cc, dataset, s1.path());
  auto cfg = tiny_config(Stage::hr);
  cfg.negative_source = NegativeSource::raw;
  HrNet<float> trained(cfg.hr, 0);
  const auto r = train_stage2(load_stage1_outputs(s1.path()), cfg, s2.path(), &trained);
  EXPECT_EQ(r.checkpoint.manifest.kind, "hrnet");
  EXPECT_EQ(r.checkpoint.manifest.train_config["negative_source"], "raw");
  EXPECT_EQ(r.checkpoint.manifest.parameter_count, HrNet<float>::expected_parameter_count(cfg.hr));
  const auto loaded = load_hr_checkpoint(r.checkpoint.dir);
  EXPECT_EQ(remove_haze(loaded.net, probe()), remove_haze(trained, probe()));
  for (const auto& it : r.iterations) EXPECT_TRUE(std::isfinite(it.loss_total));
  EXPECT_THROW(train_stage2(outputs, tiny_config(Stage::cc), s2 / "again"), ValidationError);
}
