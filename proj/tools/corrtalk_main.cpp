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

#include <cstdio>
#include <string>

#include "CLI11.hpp"
#include "corrtalk/checkpoint.hpp"
#include "corrtalk/export.hpp"
#include "corrtalk/train.hpp"

namespace {

using namespace corrtalk;

Config load_config(const std::string& path) {
  if (path.empty()) return Config{};
  return Config::from_file(path);
}

std::string with_suffix(const std::string& path, const std::string& suffix) {
  const auto dot = path.rfind('.');
  if (dot == std::string::npos) return path + suffix;
  return path.substr(0, dot) + suffix + path.substr(dot);
}

int cmd_train(const std::string& config_path, const std::string& ckpt_out,
              const std::string& resume, const std::string& loss_log,
              bool verbose) {
  Config cfg = load_config(config_path);
  auto data = obtain_dataset(cfg);
  auto prepared = prepare_dataset(cfg, data);
  CorrTalkModel model = create_model(cfg, data);
  if (!resume.empty()) load_checkpoint(model, resume);
  TrainOptions opts;
  opts.loss_log_csv = loss_log;
  opts.verbose = verbose;
  TrainResult res = train(model, prepared, opts);
  save_checkpoint(model, ckpt_out);
  std::printf("trained %lld steps (epoch %lld), final l_total %.6f\n",
              static_cast<long long>(res.steps_run),
              static_cast<long long>(model.epoch), res.final_step_total);
  std::printf("checkpoint written to %s\n", ckpt_out.c_str());
  return 0;
}

int cmd_synthesize(const std::string& config_path, const std::string& wav_path,
                   const std::string& neutral_path, std::size_t style_id,
                   const std::string& ckpt_path, const std::string& out_path) {
  Config cfg = load_config(config_path);
  NeutralGeometry neutral = read_neutral(neutral_path);
  const std::size_t V = neutral.vertex_count();
  MaskInit dummy;
  dummy.m0.assign(V, 0.5);
  CorrTalkModel model = create_model(cfg, V, dummy);
  load_checkpoint(model, ckpt_path);

  AudioClip clip = load_wav(wav_path);
  const std::size_t T = static_cast<std::size_t>(
      std::max<long long>(1, std::llround(clip.duration() * cfg.fps)));
  Tensor acoustic = prepare_acoustic(cfg, clip, T);
  EncodedFeatures enc = encode_features(model, acoustic);

  Tensor neutral_row = neutral.vertices;
  neutral_row.shape = {1, 3 * V};
  StyleVector style = StyleVector::subject(style_id, cfg.n_subjects);
  DecodeResult dec =
      decode_sequence(model, enc.f_strong, enc.f_weak, neutral_row, style, T,
                      static_cast<float>(cfg.fps),
                      static_cast<std::uint32_t>(style_id));
  write_sequence(dec.combined, out_path);
  write_sequence(dec.strong, with_suffix(out_path, "_strong"));
  write_sequence(dec.weak, with_suffix(out_path, "_weak"));
  std::printf("wrote %s (+ _strong/_weak) with %zu frames, %zu vertices\n",
              out_path.c_str(), T, V);
  return 0;
}

int cmd_evaluate(const std::string& pred_path, const std::string& gt_path,
                 const std::string& neutral_path,
                 const std::string& regions_path, const std::string& csv_out) {
  MotionSequence pred = read_sequence(pred_path);
  MotionSequence gt = read_sequence(gt_path);
  NeutralGeometry neutral = read_neutral(neutral_path);
  RegionMask regions = read_region_mask(regions_path);
  MetricReport report;
  report.lip_vertex_error = lip_vertex_error(pred, gt, regions);
  report.fdd = fdd(pred, gt, neutral, regions);
  std::printf("%-24s %-18s\n", "lip_vertex_error(mm)", "fdd(mm)");
  std::printf("%-24.9f %-18.9f\n", report.lip_vertex_error, report.fdd);
  std::printf("csv\nlip_vertex_error,fdd\n%.12g,%.12g\n",
              report.lip_vertex_error, report.fdd);
  if (!csv_out.empty()) {
    Tensor row({1, 2}, {report.lip_vertex_error, report.fdd});
    write_csv(csv_out, row, {"lip_vertex_error", "fdd"});
  }
  return 0;
}

int cmd_fai_analyze(const std::string& seq_path,
                    const std::string& neutral_path,
                    const std::string& prefix, double threshold) {
  MotionSequence seq = read_sequence(seq_path);
  NeutralGeometry neutral = read_neutral(neutral_path);
  DisplacementField disp = compute_displacements(seq, neutral);
  const std::size_t window = fai_window_frames(seq.fps, seq.frames());
  IntensityMap intensity = compute_intensity(disp, window, 1);
  MaskInit m0 = init_mask(intensity);
  IntensityClasses classes = classify_intensity(m0, threshold);

  write_csv_column(prefix + "_m0.csv", m0.m0, "m0");
  // fundamental-band amplitude map, frames x vertices
  const std::size_t T = intensity.frames(), V = intensity.vertex_count();
  Tensor band = Tensor::zeros({T, V});
  for (std::size_t t = 0; t < T; ++t)
    for (std::size_t v = 0; v < V; ++v)
      band.at(t, v) =
          intensity.amplitudes.at(intensity.fundamental_band_index, t, v);
  write_csv(prefix + "_fundamental.csv", band);
  // heatmap: one row per vertex
  Tensor heat = Tensor::zeros({V, T});
  for (std::size_t t = 0; t < T; ++t)
    for (std::size_t v = 0; v < V; ++v) heat.at(v, t) = band.at(t, v);
  write_pgm(prefix + "_heatmap.pgm", heat);
  std::printf("analyzed %zu frames x %zu vertices (window %zu frames)\n", T, V,
              window);
  std::printf("strong vertices: %zu, weak vertices: %zu (threshold %.3f)\n",
              classes.strong.size(), classes.weak.size(), threshold);
  std::printf("wrote %s_m0.csv, %s_fundamental.csv, %s_heatmap.pgm\n",
              prefix.c_str(), prefix.c_str(), prefix.c_str());
  return 0;
}

int cmd_encode(const std::string& config_path, const std::string& wav_path,
               const std::string& ckpt_path, const std::string& neutral_path,
               const std::string& prefix) {
  Config cfg = load_config(config_path);
  std::size_t V = cfg.synth_V;
  if (!neutral_path.empty()) V = read_neutral(neutral_path).vertex_count();
  MaskInit dummy;
  dummy.m0.assign(V, 0.5);
  CorrTalkModel model = create_model(cfg, V, dummy);
  if (!ckpt_path.empty()) load_checkpoint(model, ckpt_path);

  AudioClip clip = load_wav(wav_path);
  const std::size_t T = static_cast<std::size_t>(
      std::max<long long>(1, std::llround(clip.duration() * cfg.fps)));
  Tensor acoustic = prepare_acoustic(cfg, clip, T);
  EncodedFeatures enc = encode_features(model, acoustic);
  write_csv(prefix + "_h1.csv", enc.h1);
  if (enc.has_hierarchy) {
    write_csv(prefix + "_h2.csv", enc.h2);
    write_csv(prefix + "_h3.csv", enc.h3);
    write_csv(prefix + "_h4.csv", enc.h4);
    write_csv(prefix + "_weights_strong.csv", enc.weights_strong,
              {"alpha", "beta", "gamma", "delta"});
    write_csv(prefix + "_weights_weak.csv", enc.weights_weak,
              {"alpha", "beta", "gamma", "delta"});
  }
  write_csv(prefix + "_f_strong.csv", enc.f_strong);
  write_csv(prefix + "_f_weak.csv", enc.f_weak);
  std::printf("encoded %zu frames; wrote %s_h*.csv, %s_weights_*.csv, "
              "%s_f_*.csv\n",
              T, prefix.c_str(), prefix.c_str(), prefix.c_str());
  return 0;
}

int cmd_features(const std::string& config_path, const std::string& wav_path,
                 const std::string& out_csv) {
  Config cfg = load_config(config_path);
  AudioClip clip = load_wav(wav_path);
  AcousticFeatures feats =
      cfg.frontend_variant == "spectrogram"
          ? spectrogram_features(clip, cfg.d0, cfg.mel_win_ms, cfg.mel_hop_ms)
          : melspectrogram(clip, cfg.d0, cfg.mel_win_ms, cfg.mel_hop_ms);
  write_csv(out_csv, feats.values);
  std::printf("wrote %zu frames x %zu dims at %.2f Hz to %s\n", feats.frames(),
              feats.dims(), feats.frame_rate, out_csv.c_str());
  return 0;
}

int cmd_ablate(const std::string& config_path, const std::string& out_csv,
               bool verbose) {
  Config cfg = load_config(config_path);
  auto data = obtain_dataset(cfg);
  TrainOptions opts;
  opts.verbose = verbose;
  auto rows = run_ablation_suite(cfg, data, opts);
  write_ablation_csv(out_csv, rows);
  std::printf("%-22s %-14s %-14s %-14s %-18s %-14s\n", "variant", "l_rec",
              "l_vel", "l_total", "lip_vertex_error", "fdd");
  for (const auto& r : rows)
    std::printf("%-22s %-14.6f %-14.6f %-14.6f %-18.9f %-14.9f\n",
                r.name.c_str(), r.final_l_rec, r.final_l_vel, r.final_l_total,
                r.lip_vertex_error, r.fdd);
  std::printf("wrote %s\n", out_csv.c_str());
  return 0;
}

int cmd_dataset_generate(const std::string& config_path,
                         const std::string& out_dir) {
  Config cfg = load_config(config_path);
  auto data = obtain_dataset(cfg);
  save_dataset_dir(data, out_dir);
  std::printf("wrote %zu sequences to %s\n", data.size(), out_dir.c_str());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"CorrTalk: speech-driven 3D facial animation toolkit"};
  app.require_subcommand(1);

  std::string config_path, ckpt_out = "corrtalk.ctck", resume, loss_log;
  bool verbose = false;
  auto* train_cmd = app.add_subcommand("train", "Train a model");
  train_cmd->add_option("--config", config_path, "key=value config file");
  train_cmd->add_option("--checkpoint-out", ckpt_out, "output checkpoint");
  train_cmd->add_option("--resume", resume, "checkpoint to resume from");
  train_cmd->add_option("--loss-log", loss_log, "per-epoch loss CSV");
  train_cmd->add_flag("--verbose", verbose, "per-epoch progress on stderr");

  std::string syn_wav, syn_neutral, syn_ckpt, syn_out = "synth.fmsq";
  std::size_t style_id = 0;
  auto* syn_cmd =
      app.add_subcommand("synthesize", "Animate a neutral face from audio");
  syn_cmd->add_option("wav", syn_wav, "input WAV (PCM16 mono)")->required();
  syn_cmd->add_option("neutral", syn_neutral, "neutral geometry (FNEU)")
      ->required();
  syn_cmd->add_option("--style", style_id, "talking style (subject id)");
  syn_cmd->add_option("--checkpoint", syn_ckpt, "trained checkpoint")
      ->required();
  syn_cmd->add_option("--config", config_path, "key=value config file");
  syn_cmd->add_option("--out", syn_out, "output FMSQ path");

  std::string ev_pred, ev_gt, ev_neutral, ev_regions, ev_csv;
  auto* ev_cmd = app.add_subcommand("evaluate", "Metric table for a pair");
  ev_cmd->add_option("pred", ev_pred, "predicted FMSQ")->required();
  ev_cmd->add_option("gt", ev_gt, "ground-truth FMSQ")->required();
  ev_cmd->add_option("neutral", ev_neutral, "neutral FNEU")->required();
  ev_cmd->add_option("regions", ev_regions, "region mask file")->required();
  ev_cmd->add_option("--csv", ev_csv, "also write metrics CSV here");

  std::string fai_seq, fai_neutral, fai_prefix = "fai";
  double fai_threshold = 0.5;
  auto* fai_cmd = app.add_subcommand("fai", "Facial activity intensity");
  auto* fai_an = fai_cmd->add_subcommand("analyze", "Analyze a sequence");
  fai_an->add_option("seq", fai_seq, "motion FMSQ")->required();
  fai_an->add_option("neutral", fai_neutral, "neutral FNEU")->required();
  fai_an->add_option("--out-prefix", fai_prefix, "output file prefix");
  fai_an->add_option("--threshold", fai_threshold, "strong/weak threshold");

  std::string enc_wav, enc_ckpt, enc_neutral, enc_prefix = "encode";
  auto* enc_cmd =
      app.add_subcommand("encode", "Dump hierarchical features and weights");
  enc_cmd->add_option("wav", enc_wav, "input WAV")->required();
  enc_cmd->add_option("--config", config_path, "key=value config file");
  enc_cmd->add_option("--checkpoint", enc_ckpt, "trained checkpoint");
  enc_cmd->add_option("--neutral", enc_neutral,
                      "neutral FNEU (fixes the vertex count)");
  enc_cmd->add_option("--out-prefix", enc_prefix, "output file prefix");

  std::string feat_wav, feat_csv = "features.csv";
  auto* feat_cmd = app.add_subcommand("features", "Acoustic frontend");
  auto* feat_ex = feat_cmd->add_subcommand("extract", "Dump features as CSV");
  feat_ex->add_option("wav", feat_wav, "input WAV")->required();
  feat_ex->add_option("--config", config_path, "key=value config file");
  feat_ex->add_option("--out", feat_csv, "output CSV path");

  std::string abl_csv = "ablation.csv";
  auto* abl_cmd = app.add_subcommand("ablate", "Train baseline + ablations");
  abl_cmd->add_option("--config", config_path, "key=value config file");
  abl_cmd->add_option("--out", abl_csv, "output CSV path");
  abl_cmd->add_flag("--verbose", verbose, "per-epoch progress on stderr");

  std::string ds_dir = "dataset";
  auto* ds_cmd = app.add_subcommand("dataset", "Dataset utilities");
  auto* ds_gen = ds_cmd->add_subcommand("generate", "Write a synthetic set");
  ds_gen->add_option("--config", config_path, "key=value config file");
  ds_gen->add_option("--out-dir", ds_dir, "output directory");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*train_cmd)
      return cmd_train(config_path, ckpt_out, resume, loss_log, verbose);
    if (*syn_cmd)
      return cmd_synthesize(config_path, syn_wav, syn_neutral, style_id,
                            syn_ckpt, syn_out);
    if (*ev_cmd) return cmd_evaluate(ev_pred, ev_gt, ev_neutral, ev_regions, ev_csv);
    if (*fai_cmd) return cmd_fai_analyze(fai_seq, fai_neutral, fai_prefix, fai_threshold);
    if (*enc_cmd)
      return cmd_encode(config_path, enc_wav, enc_ckpt, enc_neutral, enc_prefix);
    if (*feat_cmd) return cmd_features(config_path, feat_wav, feat_csv);
    if (*abl_cmd) return cmd_ablate(config_path, abl_csv, verbose);
    if (*ds_cmd) return cmd_dataset_generate(config_path, ds_dir);
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}
