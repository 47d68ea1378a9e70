// Copyright 2026 The CorrTalk Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>

#include "corrtalk/train.hpp"

namespace corrtalk {
namespace {

namespace fs = std::filesystem;

std::string temp_path(const std::string& name) {
  return (fs::temp_directory_path() /
          ("corrtalk_tr_" + std::to_string(::getpid()) + "_" + name))
      .string();
}

Config tiny_config(std::size_t epochs = 4) {
  Config cfg;
  cfg.d = 8;
  cfg.d0 = 6;
  cfg.d1 = 4;
  cfg.encoder_heads = 2;
  cfg.decoder_heads = 2;
  cfg.fps = 30.0;
  cfg.n_subjects = 4;
  cfg.synth_sequences = 2;
  cfg.synth_T = 12;
  cfg.synth_V = 10;
  cfg.epochs = epochs;
  cfg.base_lr = 1e-3;
  return cfg;
}

std::string read_file(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  return std::string(std::istreambuf_iterator<char>(is), {});
}

TEST(Train, DeterministicBitwiseAcrossRuns) {
  const Config cfg = tiny_config();
  auto run = [&](const std::string& ckpt) {
    auto data = obtain_dataset(cfg);
    auto prepared = prepare_dataset(cfg, data);
    CorrTalkModel m = create_model(cfg, data);
    TrainResult res = train(m, prepared);
    save_checkpoint(m, ckpt);
    return res;
  };
  const std::string a = temp_path("a.ctck"), b = temp_path("b.ctck");
  TrainResult ra = run(a);
  TrainResult rb = run(b);
  EXPECT_EQ(std::bit_cast<std::uint64_t>(ra.final_step_total),
            std::bit_cast<std::uint64_t>(rb.final_step_total));
  EXPECT_EQ(read_file(a), read_file(b));
  std::remove(a.c_str());
  std::remove(b.c_str());
}

TEST(Train, LossDecreasesOnTinyOverfit) {
  Config cfg = tiny_config(20);
  auto data = obtain_dataset(cfg);
  auto prepared = prepare_dataset(cfg, data);
  CorrTalkModel m = create_model(cfg, data);
  TrainResult res = train(m, prepared);
  EXPECT_EQ(res.steps_run, 40);
  EXPECT_LT(res.final_step_total, res.first_step_total / 2.0);
}

TEST(Train, EpochLogTotalsAreConsistent) {
  Config cfg = tiny_config(3);
  auto data = obtain_dataset(cfg);
  auto prepared = prepare_dataset(cfg, data);
  CorrTalkModel m = create_model(cfg, data);
  const std::string log_csv = temp_path("loss.csv");
  TrainOptions opts;
  opts.loss_log_csv = log_csv;
  TrainResult res = train(m, prepared, opts);
  ASSERT_EQ(res.log.size(), 3u);
  for (const EpochLog& log : res.log)
    EXPECT_NEAR(log.l_total, log.l_rec + log.l_vel, 1e-12);
  // the CSV exists and has a header plus one row per epoch
  std::ifstream is(log_csv);
  std::string line;
  std::size_t rows = 0;
  while (std::getline(is, line))
    if (!line.empty()) ++rows;
  EXPECT_EQ(rows, 4u);
  std::remove(log_csv.c_str());
}

TEST(Train, SaveResumeEqualsUninterrupted) {
  // uninterrupted: 6 epochs
  Config cfg6 = tiny_config(6);
  auto data = obtain_dataset(cfg6);
  auto prepared = prepare_dataset(cfg6, data);
  CorrTalkModel uninterrupted = create_model(cfg6, data);
  train(uninterrupted, prepared);

  // interrupted: 3 epochs, checkpoint, reload, 3 more
  Config cfg3 = tiny_config(3);
  CorrTalkModel first_half = create_model(cfg3, data);
  train(first_half, prepare_dataset(cfg3, data));
  const std::string ckpt = temp_path("resume.ctck");
  save_checkpoint(first_half, ckpt);

  CorrTalkModel resumed = create_model(cfg6, data);
  load_checkpoint(resumed, ckpt);
  EXPECT_EQ(resumed.epoch, 3);
  train(resumed, prepared);

  auto pa = uninterrupted.params.all();
  auto pb = resumed.params.all();
  ASSERT_EQ(pa.size(), pb.size());
  for (std::size_t i = 0; i < pa.size(); ++i) {
    ASSERT_EQ(pa[i]->name, pb[i]->name);
    EXPECT_EQ(pa[i]->t.data, pb[i]->t.data) << pa[i]->name;
  }
  EXPECT_EQ(uninterrupted.step, resumed.step);
  std::remove(ckpt.c_str());
}

TEST(Checkpoint, DifferentConfigHashIsRefused) {
  Config cfg = tiny_config(1);
  auto data = obtain_dataset(cfg);
  CorrTalkModel m = create_model(cfg, data);
  const std::string ckpt = temp_path("hash.ctck");
  save_checkpoint(m, ckpt);
  Config other = cfg;
  other.seed = 999;  // different model identity
  auto other_data = obtain_dataset(other);
  CorrTalkModel m2 = create_model(other, other_data);
  EXPECT_THROW(load_checkpoint(m2, ckpt), ConfigHashError);
  // run-control changes do not refuse the load
  Config longer = cfg;
  longer.epochs = 50;
  CorrTalkModel m3 = create_model(longer, data);
  load_checkpoint(m3, ckpt);
  std::remove(ckpt.c_str());
}

TEST(Checkpoint, CorruptedPayloadIsIntegrityError) {
  Config cfg = tiny_config(1);
  auto data = obtain_dataset(cfg);
  CorrTalkModel m = create_model(cfg, data);
  const std::string ckpt = temp_path("corrupt.ctck");
  save_checkpoint(m, ckpt);
  {
    std::fstream f(ckpt, std::ios::in | std::ios::out | std::ios::binary);
    f.seekp(200);  // inside the params payload
    f.put('\x7f');
  }
  CorrTalkModel m2 = create_model(cfg, data);
  EXPECT_THROW(load_checkpoint(m2, ckpt), IntegrityError);
  std::remove(ckpt.c_str());
}

TEST(Checkpoint, BadMagicIsRefused) {
  const std::string path = temp_path("junk.ctck");
  std::ofstream os(path, std::ios::binary);
  os << "this is not a checkpoint at all";
  os.close();
  Config cfg = tiny_config(1);
  auto data = obtain_dataset(cfg);
  CorrTalkModel m = create_model(cfg, data);
  EXPECT_THROW(load_checkpoint(m, path), BadMagicError);
  std::remove(path.c_str());
}

TEST(Train, AutoregressiveHistoryModeRuns) {
  Config cfg = tiny_config(2);
  cfg.teacher_forcing = false;
  auto data = obtain_dataset(cfg);
  auto prepared = prepare_dataset(cfg, data);
  CorrTalkModel m = create_model(cfg, data);
  TrainResult res = train(m, prepared);
  EXPECT_EQ(res.steps_run, 4);
  EXPECT_GT(res.first_step_total, 0.0);
}

TEST(Train, NonFiniteLossNamesSequence) {
  Config cfg = tiny_config(1);
  auto data = obtain_dataset(cfg);
  auto prepared = prepare_dataset(cfg, data);
  CorrTalkModel m = create_model(cfg, data);
  // poison one weight so the forward pass overflows
  m.strong_branch.out_proj.w->t.data[0] = 1e308;
  try {
    train(m, prepared);
    FAIL() << "expected training abort";
  } catch (const Error& e) {
    EXPECT_NE(std::string(e.what()).find("sequence"), std::string::npos);
  }
}

TEST(Train, MaxStepsCapsTheRun) {
  Config cfg = tiny_config(10);
  cfg.max_steps = 5;
  auto data = obtain_dataset(cfg);
  auto prepared = prepare_dataset(cfg, data);
  CorrTalkModel m = create_model(cfg, data);
  TrainResult res = train(m, prepared);
  EXPECT_EQ(res.steps_run, 5);
}

TEST(Dataset, DirectoryRoundTrip) {
  Config cfg = tiny_config(1);
  auto data = obtain_dataset(cfg);
  const std::string dir = temp_path("dataset");
  save_dataset_dir(data, dir);
  auto loaded = load_dataset_dir(dir);
  ASSERT_EQ(loaded.size(), data.size());
  for (std::size_t i = 0; i < data.size(); ++i) {
    EXPECT_EQ(loaded[i].motion.vertices.data, data[i].motion.vertices.data);
    EXPECT_EQ(loaded[i].regions.lip, data[i].regions.lip);
    // audio survives 16-bit quantization within 1/32768
    ASSERT_EQ(loaded[i].audio.samples.size(), data[i].audio.samples.size());
    for (std::size_t s = 0; s < loaded[i].audio.samples.size(); ++s)
      EXPECT_NEAR(loaded[i].audio.samples[s], data[i].audio.samples[s],
                  1.0 / 32768.0);
  }
  fs::remove_all(dir);
}

TEST(Ablation, SuiteSchemaAndBaselineConsistency) {
  Config cfg = tiny_config(2);
  auto data = obtain_dataset(cfg);
  auto rows = run_ablation_suite(cfg, data);
  ASSERT_EQ(rows.size(), 5u);
  EXPECT_EQ(rows[0].name, "baseline");
  EXPECT_EQ(rows[1].name, "no_hierarchy_encoder");
  EXPECT_EQ(rows[2].name, "single_branch");
  EXPECT_EQ(rows[3].name, "random_mask_init");
  EXPECT_EQ(rows[4].name, "spectrogram_frontend");
  for (const auto& r : rows) {
    EXPECT_TRUE(std::isfinite(r.lip_vertex_error));
    EXPECT_TRUE(std::isfinite(r.fdd));
    EXPECT_GE(r.lip_vertex_error, 0.0);
  }
  // the baseline row reproduces a standalone train + evaluate exactly
  auto prepared = prepare_dataset(cfg, data);
  CorrTalkModel m = create_model(cfg, data);
  TrainResult res = train(m, prepared);
  MetricReport metrics = evaluate_model(m, data, prepared);
  EXPECT_EQ(std::bit_cast<std::uint64_t>(rows[0].final_l_total),
            std::bit_cast<std::uint64_t>(res.final_step_total));
  EXPECT_EQ(std::bit_cast<std::uint64_t>(rows[0].lip_vertex_error),
            std::bit_cast<std::uint64_t>(metrics.lip_vertex_error));
}

TEST(ConfigFile, RoundTripAndUnknownKey) {
  Config cfg = tiny_config(7);
  cfg.frontend_variant = "spectrogram";
  const std::string path = temp_path("cfg.txt");
  cfg.save(path);
  Config loaded = Config::from_file(path);
  EXPECT_EQ(loaded.hash(), cfg.hash());
  EXPECT_EQ(loaded.epochs, 7u);
  EXPECT_EQ(loaded.frontend_variant, "spectrogram");
  std::ofstream os(path, std::ios::app);
  os << "not_a_real_key=3\n";
  os.close();
  EXPECT_THROW(Config::from_file(path), Error);
  std::remove(path.c_str());
}

}  // namespace
}  // namespace corrtalk
