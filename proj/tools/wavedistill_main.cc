// Copyright 2026 The WaveDistill Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// wavedistill: dataset synthesis, degradation preview, teacher/student
// training, evaluation, ablation and DWT inspection.

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "wavedistill/config.h"
#include "wavedistill/degrade.h"
#include "wavedistill/errors.h"
#include "wavedistill/image_io.h"
#include "wavedistill/nets.h"
#include "wavedistill/ops.h"
#include "wavedistill/synth.h"
#include "wavedistill/train.h"
#include "wavedistill/wavelet.h"

namespace fs = std::filesystem;
using namespace wavedistill;

namespace {

// Flags shared by every subcommand. Unset optionals leave the value from
// the config file or environment untouched.
struct CommonFlags {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  bool deterministic = false;
  std::optional<std::size_t> threads;
  std::optional<std::string> out;
  std::optional<std::size_t> epochs;
  std::optional<std::string> lr_sizes;
  std::optional<double> lambda1;
  std::optional<double> lambda2;
  std::optional<double> temperature;
  std::optional<double> p_blur, p_noise, p_jpeg;
  std::optional<std::size_t> num_identities;
};

void AddCommonFlags(CLI::App& app, CommonFlags& f) {
  app.add_option("--config", f.config_path, "JSON config file")
      ->check(CLI::ExistingFile);
  app.add_option("--seed", f.seed, "root seed");
  app.add_flag("--deterministic", f.deterministic,
               "serial execution and zero wall-clock columns");
  app.add_option("--threads", f.threads, "worker threads");
  app.add_option("--out", f.out, "output directory");
  app.add_option("--epochs", f.epochs, "training epochs");
  app.add_option("--lr-sizes", f.lr_sizes, "LR sizes, e.g. 8,16");
  app.add_option("--lambda1", f.lambda1, "distillation weight");
  app.add_option("--lambda2", f.lambda2, "wavelet-similarity weight");
  app.add_option("--temperature", f.temperature, "distillation temperature");
  app.add_option("--p-blur", f.p_blur, "blur gate probability");
  app.add_option("--p-noise", f.p_noise, "noise gate probability");
  app.add_option("--p-jpeg", f.p_jpeg, "JPEG gate probability");
  app.add_option("--num-identities", f.num_identities,
                 "identities in the synthetic dataset");
}

// defaults < config file < environment < flags
RunConfig ResolveConfig(const CommonFlags& f) {
  RunConfig cfg;
  if (!f.config_path.empty()) cfg = LoadRunConfig(f.config_path, cfg);
  ApplyEnvironment(cfg);
  if (f.seed) cfg.seed = *f.seed;
  if (f.deterministic) cfg.deterministic = true;
  if (f.threads) cfg.threads = *f.threads;
  if (f.out) cfg.out_dir = *f.out;
  if (f.epochs) cfg.train.epochs = *f.epochs;
  if (f.lr_sizes) cfg.degradation.lr_sizes = ParseSizeList(*f.lr_sizes);
  if (f.lambda1) cfg.train.distill.lambda1 = *f.lambda1;
  if (f.lambda2) cfg.train.distill.lambda2 = *f.lambda2;
  if (f.temperature) cfg.train.distill.temperature = *f.temperature;
  if (f.p_blur) cfg.degradation.p_blur = *f.p_blur;
  if (f.p_noise) cfg.degradation.p_noise = *f.p_noise;
  if (f.p_jpeg) cfg.degradation.p_jpeg = *f.p_jpeg;
  if (f.num_identities) cfg.synth.num_identities = *f.num_identities;
  if (cfg.deterministic) cfg.threads = 1;
  cfg.Resolve();
  fs::create_directories(cfg.out_dir);
  SaveRunConfig(cfg.out_dir / "config.json", cfg);
  return cfg;
}

fs::path OrDefault(const std::string& given, const fs::path& fallback) {
  return given.empty() ? fallback : fs::path(given);
}

StoredDataset RequireDataset(const fs::path& dir) {
  if (!fs::exists(dir / "labels.csv")) {
    throw IoError("dataset not found at " + dir.string() +
                  " (run `wavedistill synth` first)");
  }
  return LoadDataset(dir);
}

void PrintLog(const EpochLog& e) {
  std::printf("epoch %zu  lr %.4g  loss %.5f  arcface %.5f  distill %.5f  "
              "wavesim %.5f\n",
              e.epoch, e.learning_rate, e.total, e.arcface, e.distill,
              e.wavesim);
  std::fflush(stdout);
}

void PrintRows(const std::vector<EvalRow>& rows) {
  for (const auto& r : rows) {
    std::printf("%-36s %-4s %.4f +- %.4f\n", r.config.c_str(),
                r.resolution.c_str(), r.fold_mean, r.fold_std);
  }
}

int CmdSynth(const RunConfig& cfg) {
  const Dataset ds = GenerateDataset(cfg.synth);
  const VerificationProtocol proto = BuildProtocol(
      ds.labels, ds.eval_indices, DeriveSeed(cfg.seed, "protocol"));
  const fs::path dir = cfg.out_dir / "dataset";
  SaveDataset(dir, ds, proto);
  std::printf("wrote %zu images and %zu pairs to %s\n", ds.size(),
              proto.pairs.size(), dir.string().c_str());
  return 0;
}

int CmdDegrade(const RunConfig& cfg, const std::string& input) {
  const fs::path in_dir = input.empty() ? cfg.out_dir / "dataset" / "images"
                                        : fs::path(input);
  if (!fs::is_directory(in_dir)) {
    throw IoError("input directory not found: " + in_dir.string());
  }
  std::vector<fs::path> files;
  for (const auto& e : fs::directory_iterator(in_dir)) {
    if (e.is_regular_file() && e.path().extension() == ".pgm") {
      files.push_back(e.path());
    }
  }
  std::sort(files.begin(), files.end());
  if (files.empty()) throw IoError("no .pgm files in " + in_dir.string());
  const fs::path out_dir = cfg.out_dir / "degraded";
  fs::create_directories(out_dir);
  std::ofstream manifest(out_dir / "manifest.csv",
                         std::ios::binary | std::ios::trunc);
  manifest << "file,blur,blur_sigma,noise,noise_sigma,jpeg,jpeg_quality,size\n";
  const std::uint64_t seed = DeriveSeed(cfg.seed, "degrade");
  char buf[160];
  for (std::size_t i = 0; i < files.size(); ++i) {
    const Tensor img = ReadPgm(files[i]);
    RngStream rng(seed, i, 0);
    const DegradedSample d = DegradeSample(img, cfg.degradation, rng);
    WritePgm(out_dir / files[i].filename(), d.image);
    const auto& r = d.record;
    std::snprintf(buf, sizeof(buf), "%s,%d,%.6f,%d,%.6f,%d,%d,%zu\n",
                  files[i].filename().string().c_str(), r.blur ? 1 : 0,
                  r.blur_sigma, r.noise ? 1 : 0, r.noise_sigma, r.jpeg ? 1 : 0,
                  r.jpeg_quality, r.size);
    manifest << buf;
  }
  if (!manifest) throw IoError("write failed: manifest.csv");
  std::printf("degraded %zu images into %s\n", files.size(),
              out_dir.string().c_str());
  return 0;
}

TrainOptions CheckpointOptions(const fs::path& dir, bool resume) {
  TrainOptions opts;
  opts.checkpoint_dir = dir;
  opts.on_epoch = PrintLog;
  if (resume && fs::exists(dir / "manifest.txt")) opts.resume_from = dir;
  return opts;
}

int CmdTrainTeacher(const RunConfig& cfg, const std::string& data,
                    bool resume) {
  const StoredDataset sd = RequireDataset(OrDefault(data, cfg.out_dir / "dataset"));
  const fs::path dir = cfg.out_dir / "teacher";
  fs::create_directories(dir);
  TrainResult r = TrainTeacher(
      sd.data, cfg.network.WithKind(DownsampleKind::kStrideConv), cfg.train,
      CheckpointOptions(dir, resume));
  WriteLossLogCsv(dir / "loss_log.csv", r.log);
  std::printf("teacher checkpoint: %s\n", dir.string().c_str());
  return 0;
}

int CmdTrainStudent(const RunConfig& cfg, const std::string& data,
                    const std::string& teacher_dir, bool resume) {
  const fs::path tdir = OrDefault(teacher_dir, cfg.out_dir / "teacher");
  if (!fs::exists(tdir / "manifest.txt")) {
    throw IoError("teacher checkpoint not found at " + tdir.string());
  }
  const StoredDataset sd = RequireDataset(OrDefault(data, cfg.out_dir / "dataset"));
  LoadedCheckpoint teacher = LoadCheckpoint(tdir);
  const fs::path dir = cfg.out_dir / "student";
  fs::create_directories(dir);
  TrainResult r = TrainStudent(
      sd.data, teacher.model, cfg.network.WithKind(DownsampleKind::kWaveConv),
      cfg.train, cfg.degradation, CheckpointOptions(dir, resume));
  WriteLossLogCsv(dir / "loss_log.csv", r.log);
  std::printf("student checkpoint: %s\n", dir.string().c_str());
  return 0;
}

int CmdInit(const RunConfig& cfg, const std::string& kind) {
  Model m = Model::Build(cfg.network.WithKind(ParseDownsampleKind(kind)),
                         cfg.seed);
  m.head().scale = cfg.train.arcface_scale;
  m.head().margin = cfg.train.arcface_margin;
  const fs::path dir = cfg.out_dir / "init";
  SaveCheckpoint(dir, m, {cfg.seed, 0});
  std::printf("untrained checkpoint: %s\n", dir.string().c_str());
  return 0;
}

int CmdEval(const RunConfig& cfg, const std::string& data,
            const std::string& checkpoint, const std::string& name) {
  const fs::path cdir = OrDefault(checkpoint, cfg.out_dir / "student");
  if (!fs::exists(cdir / "manifest.txt")) {
    throw IoError("checkpoint not found at " + cdir.string());
  }
  const StoredDataset sd = RequireDataset(OrDefault(data, cfg.out_dir / "dataset"));
  LoadedCheckpoint ck = LoadCheckpoint(cdir);
  const std::string tag =
      name.empty() ? fs::absolute(cdir).lexically_normal().filename().string()
                   : name;
  const auto rows = EvaluateModel(
      ck.model, sd.data, sd.protocol,
      ReportResolutions(cfg.degradation, sd.data.image_size()), tag, cfg.seed,
      !cfg.deterministic);
  const fs::path out = cfg.out_dir / "eval";
  fs::create_directories(out);
  WriteMetricsCsv(out / "metrics.csv", rows);
  PrintRows(rows);
  return 0;
}

int CmdAblate(const RunConfig& cfg, const std::string& data) {
  const StoredDataset sd = RequireDataset(OrDefault(data, cfg.out_dir / "dataset"));
  AblationConfig ac;
  ac.spec = cfg.network;
  ac.train = cfg.train;
  ac.degradation = cfg.degradation;
  ac.threads = cfg.threads;
  ac.deterministic = cfg.deterministic;
  ac.out_dir = cfg.out_dir / "ablation";
  fs::create_directories(ac.out_dir);
  const AblationReport rep = RunAblation(sd.data, sd.protocol, ac);
  WriteMetricsCsv(ac.out_dir / "metrics.csv", rep.metrics);
  WriteAblationTableCsv(ac.out_dir / "table.csv", rep);
  PrintRows(rep.metrics);
  return 0;
}

int CmdDwt(const std::string& image, const fs::path& out_dir) {
  const Tensor img = ReadPgm(image);
  const WaveletSubbands sb =
      Dwt2Forward(Reshape(img, {1, 1, img.dim(1), img.dim(2)}));
  fs::create_directories(out_dir);
  const char* names[4] = {"LL", "LH", "HL", "HH"};
  const Subband bands[4] = {Subband::kLL, Subband::kLH, Subband::kHL,
                            Subband::kHH};
  double energy[4] = {0, 0, 0, 0}, total = 0.0;
  for (int b = 0; b < 4; ++b) {
    const Tensor& t = sb.band(bands[b]);
    for (double v : t.data()) energy[b] += v * v;
    total += energy[b];
    std::string file = names[b];
    std::transform(file.begin(), file.end(), file.begin(), ::tolower);
    WritePgm(out_dir / (file + ".pgm"),
             NormalizeForDisplay(Reshape(t, {1, t.dim(2), t.dim(3)})));
  }
  if (total == 0.0) throw NumericError("image has zero energy; shares undefined");
  std::ofstream report(out_dir / "energy.txt", std::ios::binary | std::ios::trunc);
  char buf[96];
  for (int b = 0; b < 4; ++b) {
    std::snprintf(buf, sizeof(buf), "%s %.12f\n", names[b], energy[b] / total);
    report << buf;
    std::fputs(buf, stdout);
  }
  if (!report) throw IoError("write failed: energy.txt");
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Wavelet distillation for cross-resolution recognition"};
  app.require_subcommand(1);
  CommonFlags flags;

  auto* synth = app.add_subcommand("synth", "generate the synthetic dataset");
  auto* degrade = app.add_subcommand("degrade", "degrade a directory of PGMs");
  auto* teacher = app.add_subcommand("train-teacher", "train the HR teacher");
  auto* student = app.add_subcommand("train-student", "distill the student");
  auto* init = app.add_subcommand("init", "write an untrained checkpoint");
  auto* eval = app.add_subcommand("eval", "cross-resolution verification");
  auto* ablate = app.add_subcommand("ablate", "five-row ablation table");
  auto* dwt = app.add_subcommand("dwt", "Haar subbands of one PGM image");
  for (auto* sub : {synth, degrade, teacher, student, init, eval, ablate}) {
    AddCommonFlags(*sub, flags);
  }

  std::string data, input, teacher_dir, checkpoint, name, kind = "stride-conv";
  std::string image, dwt_out;
  bool resume = false;
  degrade->add_option("--input", input, "directory of .pgm files");
  for (auto* sub : {teacher, student, eval, ablate}) {
    sub->add_option("--data", data, "dataset directory");
  }
  for (auto* sub : {teacher, student}) {
    sub->add_flag("--resume", resume, "continue from the checkpoint in --out");
  }
  student->add_option("--teacher", teacher_dir, "teacher checkpoint directory");
  eval->add_option("--checkpoint", checkpoint, "checkpoint directory");
  eval->add_option("--name", name, "config tag written to the metrics CSV");
  init->add_option("--kind", kind, "stride-conv or waveconv");
  dwt->add_option("--image", image, "input PGM")->required();
  dwt->add_option("--out", dwt_out, "output directory")->required();

  CLI11_PARSE(app, argc, argv);
  try {
    if (dwt->parsed()) return CmdDwt(image, dwt_out);
    const RunConfig cfg = ResolveConfig(flags);
    if (synth->parsed()) return CmdSynth(cfg);
    if (degrade->parsed()) return CmdDegrade(cfg, input);
    if (teacher->parsed()) return CmdTrainTeacher(cfg, data, resume);
    if (student->parsed()) return CmdTrainStudent(cfg, data, teacher_dir, resume);
    if (init->parsed()) return CmdInit(cfg, kind);
    if (eval->parsed()) return CmdEval(cfg, data, checkpoint, name);
    if (ablate->parsed()) return CmdAblate(cfg, data);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 2;
}
