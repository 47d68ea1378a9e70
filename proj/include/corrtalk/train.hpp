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

#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "corrtalk/checkpoint.hpp"
#include "corrtalk/export.hpp"
#include "corrtalk/model.hpp"

namespace corrtalk {

// Dataset directory layout: seq_NNN.fmsq + seq_NNN.wav per sequence, one
// shared neutral.fneu and regions.txt.
inline void save_dataset_dir(const std::vector<SyntheticPair>& data,
                             const std::string& dir) {
  namespace fs = std::filesystem;
  require(!data.empty(), "save_dataset_dir: empty dataset");
  fs::create_directories(dir);
  write_neutral(data[0].neutral, (fs::path(dir) / "neutral.fneu").string());
  write_region_mask(data[0].regions, (fs::path(dir) / "regions.txt").string());
  for (std::size_t i = 0; i < data.size(); ++i) {
    char name[32];
    std::snprintf(name, sizeof(name), "seq_%03zu", i);
    write_sequence(data[i].motion,
                   (fs::path(dir) / (std::string(name) + ".fmsq")).string());
    save_wav(data[i].audio,
             (fs::path(dir) / (std::string(name) + ".wav")).string());
  }
}

inline std::vector<SyntheticPair> load_dataset_dir(const std::string& dir) {
  namespace fs = std::filesystem;
  NeutralGeometry neutral =
      read_neutral((fs::path(dir) / "neutral.fneu").string());
  RegionMask regions =
      read_region_mask((fs::path(dir) / "regions.txt").string());
  std::vector<SyntheticPair> out;
  for (std::size_t i = 0;; ++i) {
    char name[32];
    std::snprintf(name, sizeof(name), "seq_%03zu", i);
    const auto fmsq = fs::path(dir) / (std::string(name) + ".fmsq");
    const auto wav = fs::path(dir) / (std::string(name) + ".wav");
    if (!fs::exists(fmsq)) break;
    SyntheticPair pair;
    pair.motion = read_sequence(fmsq.string());
    pair.audio = load_wav(wav.string());
    pair.neutral = neutral;
    pair.regions = regions;
    regions.validate(pair.motion.vertex_count());
    out.push_back(std::move(pair));
  }
  require(!out.empty(), msg("no seq_*.fmsq sequences found in '", dir, "'"));
  return out;
}

inline std::vector<SyntheticPair> obtain_dataset(const Config& cfg) {
  if (!cfg.data_dir.empty()) return load_dataset_dir(cfg.data_dir);
  SyntheticConfig sc;
  sc.seed = cfg.seed;
  sc.n_sequences = cfg.synth_sequences;
  sc.T = cfg.synth_T;
  sc.V = cfg.synth_V;
  sc.fps = cfg.fps;
  sc.sample_rate = cfg.synth_sample_rate;
  sc.amplitude = cfg.synth_amplitude;
  sc.n_subjects = static_cast<std::uint32_t>(cfg.n_subjects);
  return generate_synthetic_dataset(sc);
}

struct PreparedDataset {
  std::vector<SequenceInputs> sequences;
};

// Feature extraction per sequence; may fan out over CORRTALK_THREADS
// workers, with results stored by index.
inline PreparedDataset prepare_dataset(const Config& cfg,
                                       const std::vector<SyntheticPair>& data) {
  PreparedDataset out;
  out.sequences.resize(data.size());
  parallel_for_indexed(data.size(), [&](std::size_t i) {
    out.sequences[i] = make_sequence_inputs(cfg, data[i]);
  });
  return out;
}

struct EpochLog {
  std::int64_t epoch = 0;
  double l_rec = 0, l_vel = 0, l_total = 0;
  double lr = 0;
};

struct TrainOptions {
  std::string loss_log_csv;  // per-epoch CSV when set
  bool verbose = false;
};

struct TrainResult {
  double first_step_total = 0;  // L_total of the very first step of the run
  double final_step_total = 0;  // L_total of the last step taken
  double final_rec = 0, final_vel = 0;
  std::int64_t steps_run = 0;
  std::vector<EpochLog> log;
};

// Per-sequence gradient steps (batch size 1), sequences in index order, lr
// decayed per epoch. Deterministic for a fixed (config, dataset, seed).
inline TrainResult train(CorrTalkModel& m, const PreparedDataset& data,
                         const TrainOptions& opts = {}) {
  require(!data.sequences.empty(), "train: empty dataset");
  auto params = m.params.all();
  TrainResult res;
  bool hit_step_cap = false;
  for (; m.epoch < static_cast<std::int64_t>(m.cfg.epochs) && !hit_step_cap;
       ++m.epoch) {
    decay_lr(m.adam, m.epoch);
    EpochLog log;
    log.epoch = m.epoch;
    log.lr = m.adam.lr;
    for (std::size_t i = 0; i < data.sequences.size(); ++i) {
      if (m.cfg.max_steps > 0 &&
          m.step >= static_cast<std::int64_t>(m.cfg.max_steps)) {
        hit_step_cap = true;
        break;
      }
      const SequenceInputs& seq = data.sequences[i];
      try {
        Graph g;
        Tensor rollout_history;
        const Tensor* history_override = nullptr;
        if (!m.cfg.teacher_forcing && seq.T >= 2) {
          DecodeResult rollout = decode_from_inputs(m, seq);
          rollout_history = flatten_motion(rollout.combined);
          rollout_history.data.resize((seq.T - 1) * 3 * seq.V);
          rollout_history.shape = {seq.T - 1, 3 * seq.V};
          history_override = &rollout_history;
        }
        TrainForward fwd = build_training_graph(g, m, seq, history_override);
        g.forward();
        const double l_rec = g.value(fwd.l_rec).data[0];
        const double l_vel = g.value(fwd.l_vel).data[0];
        const double l_total = g.value(fwd.l_total).data[0];
        g.backward(fwd.l_total);
        adam_step(params, m.adam);
        m.step += 1;
        res.steps_run += 1;
        if (res.steps_run == 1) res.first_step_total = l_total;
        res.final_step_total = l_total;
        res.final_rec = l_rec;
        res.final_vel = l_vel;
        log.l_rec += l_rec;
        log.l_vel += l_vel;
        log.l_total += l_total;
      } catch (const Error& e) {
        throw Error(msg("training aborted at epoch ", m.epoch, ", sequence ",
                        i, ": ", e.what()));
      }
    }
    res.log.push_back(log);
    if (opts.verbose)
      std::fprintf(stderr, "epoch %lld  l_total %.6f  lr %.3g\n",
                   static_cast<long long>(log.epoch), log.l_total, log.lr);
  }
  if (!opts.loss_log_csv.empty()) {
    std::ofstream os(opts.loss_log_csv);
    require(os.good(), msg("cannot open '", opts.loss_log_csv, "'"));
    os << "epoch,l_rec,l_vel,l_total,lr\n";
    for (const EpochLog& log : res.log)
      os << log.epoch << "," << format_double(log.l_rec) << ","
         << format_double(log.l_vel) << "," << format_double(log.l_total)
         << "," << format_double(log.lr) << "\n";
  }
  return res;
}

// Mean metrics over the dataset from full autoregressive decodes.
inline MetricReport evaluate_model(CorrTalkModel& m,
                                   const std::vector<SyntheticPair>& data,
                                   const PreparedDataset& prepared) {
  require(data.size() == prepared.sequences.size(),
          "evaluate_model: dataset mismatch");
  MetricReport report;
  for (std::size_t i = 0; i < data.size(); ++i) {
    DecodeResult dec = decode_from_inputs(m, prepared.sequences[i]);
    report.lip_vertex_error +=
        lip_vertex_error(dec.combined, data[i].motion, data[i].regions);
    report.fdd +=
        fdd(dec.combined, data[i].motion, data[i].neutral, data[i].regions);
  }
  report.lip_vertex_error /= static_cast<double>(data.size());
  report.fdd /= static_cast<double>(data.size());
  return report;
}

struct AblationRow {
  std::string name;
  double final_l_rec = 0, final_l_vel = 0, final_l_total = 0;
  double lip_vertex_error = 0, fdd = 0;
};

inline AblationRow run_variant(const std::string& name, const Config& cfg,
                               const std::vector<SyntheticPair>& data,
                               const TrainOptions& opts = {}) {
  PreparedDataset prepared = prepare_dataset(cfg, data);
  CorrTalkModel model = create_model(cfg, data);
  TrainResult res = train(model, prepared, opts);
  MetricReport metrics = evaluate_model(model, data, prepared);
  AblationRow row;
  row.name = name;
  row.final_l_rec = res.final_rec;
  row.final_l_vel = res.final_vel;
  row.final_l_total = res.final_step_total;
  row.lip_vertex_error = metrics.lip_vertex_error;
  row.fdd = metrics.fdd;
  return row;
}

// Baseline plus the four ablation axes, all trained from the same seed on
// the same pairs.
inline std::vector<AblationRow> run_ablation_suite(
    const Config& base, const std::vector<SyntheticPair>& data,
    const TrainOptions& opts = {}) {
  std::vector<AblationRow> rows;
  rows.push_back(run_variant("baseline", base, data, opts));
  {
    Config c = base;
    c.disable_hierarchy = true;
    rows.push_back(run_variant("no_hierarchy_encoder", c, data, opts));
  }
  {
    Config c = base;
    c.single_branch = true;
    rows.push_back(run_variant("single_branch", c, data, opts));
  }
  {
    Config c = base;
    c.random_mask_init = true;
    rows.push_back(run_variant("random_mask_init", c, data, opts));
  }
  {
    Config c = base;
    c.frontend_variant = "spectrogram";
    rows.push_back(run_variant("spectrogram_frontend", c, data, opts));
  }
  return rows;
}

inline void write_ablation_csv(const std::string& path,
                               const std::vector<AblationRow>& rows) {
  std::ofstream os(path);
  require(os.good(), msg("cannot open '", path, "' for writing"));
  os << "variant,final_l_rec,final_l_vel,final_l_total,lip_vertex_error,fdd\n";
  for (const AblationRow& r : rows)
    os << r.name << "," << format_double(r.final_l_rec) << ","
       << format_double(r.final_l_vel) << "," << format_double(r.final_l_total)
       << "," << format_double(r.lip_vertex_error) << ","
       << format_double(r.fdd) << "\n";
}

}  // namespace corrtalk
