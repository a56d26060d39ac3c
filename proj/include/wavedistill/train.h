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

// Two-phase training (HR teacher, then a WaveConv student distilled on
// degraded multi-scale inputs), cross-resolution verification and the
// five-row ablation table.

#ifndef WAVEDISTILL_TRAIN_H_
#define WAVEDISTILL_TRAIN_H_

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "wavedistill/degrade.h"
#include "wavedistill/losses.h"
#include "wavedistill/nets.h"
#include "wavedistill/synth.h"

namespace wavedistill {

struct TrainConfig {
  std::size_t epochs = 30;
  std::size_t batch_size = 32;
  double learning_rate = 0.1;
  // The rate is divided by 10 at round(f * epochs) for each fraction f.
  std::vector<double> lr_milestones = {10.0 / 18.0, 13.0 / 18.0, 16.0 / 18.0};
  double momentum = 0.9;
  DistillConfig distill;  // T = 4, lambda1 = 1, lambda2 = 0.05
  double arcface_scale = 16.0;
  double arcface_margin = 0.5;
  // Global L2 norm cap on the parameter gradient before each step; 0
  // disables clipping.
  double grad_clip_norm = 5.0;
  std::uint64_t seed = 0;

  void Validate() const;
  // Rate in effect during zero-based epoch `epoch`.
  double LearningRateAt(std::size_t epoch) const;
  bool operator==(const TrainConfig&) const = default;
};

struct EpochLog {
  std::size_t epoch = 0;  // one-based
  double learning_rate = 0.0;
  double total = 0.0;  // batch means of each term
  double arcface = 0.0;
  double distill = 0.0;
  double wavesim = 0.0;
  // Distillation loss on a fixed held-out batch after the epoch; NaN without
  // a teacher.
  double heldout_distill = 0.0;
};

enum class TrainInput { kHighRes, kDegraded };

struct TrainJob {
  NetworkSpec spec;
  TrainInput input = TrainInput::kHighRes;
  DegradationConfig degradation;
  // Frozen teacher fed with clean HR images; enables the distillation and
  // wavelet-similarity terms. Never modified.
  Model* teacher = nullptr;
};

struct TrainOptions {
  // When set, a checkpoint (model, optimizer velocity, loss log) is written
  // here after every epoch.
  std::filesystem::path checkpoint_dir;
  std::optional<std::filesystem::path> resume_from;
  // Stop after this many completed epochs (0: run all). Used to split a run.
  std::size_t stop_after_epoch = 0;
  std::function<void(const EpochLog&)> on_epoch;
};

struct TrainResult {
  Model model;
  std::vector<EpochLog> log;
};

// General trainer behind the named entry points below.
TrainResult Train(const Dataset& data, const TrainJob& job,
                  const TrainConfig& cfg, const TrainOptions& opts = {});

// ArcFace-only training of a stride-conv backbone on HR images.
TrainResult TrainTeacher(const Dataset& data, const NetworkSpec& spec,
                         const TrainConfig& cfg, const TrainOptions& opts = {});

// WaveConv backbone on degraded inputs with the full objective. Throws
// ConfigError when teacher and student stages or classes disagree, and
// NumericError if the teacher's checksum changes.
TrainResult TrainStudent(const Dataset& data, Model& teacher,
                         const NetworkSpec& spec, const TrainConfig& cfg,
                         const DegradationConfig& degradation,
                         const TrainOptions& opts = {});

// L2-normalized eval-mode embeddings, one row per image of
// [M, C, S, S] input.
Tensor ExtractEmbeddings(Model& model, const Tensor& images,
                         std::size_t batch_size = 128);
// Unit embedding [D] of one [C, S, S] image.
Tensor ExtractEmbedding(Model& model, const Tensor& image);

struct FoldStats {
  double mean = 0.0;
  double stddev = 0.0;  // population standard deviation over folds
  std::vector<double> fold_accuracy;
};

// Ten-fold verification from per-pair cosine similarities.
FoldStats ScoreVerification(std::span<const double> similarity,
                            const VerificationProtocol& protocol);

// Probe/gallery cosine similarities from embedding tables indexed by image.
std::vector<double> PairSimilarities(const Tensor& probe_embeddings,
                                     const Tensor& gallery_embeddings,
                                     const VerificationProtocol& protocol);

// Probes go through EvalDownsample(probe_resolution); galleries stay HR.
FoldStats VerifyAccuracy(Model& model, const Dataset& data,
                         const VerificationProtocol& protocol,
                         std::size_t probe_resolution);

struct EvalRow {
  std::string config;
  std::string resolution;  // LR extent or "HR"
  double fold_mean = 0.0;
  double fold_std = 0.0;
  std::uint64_t seed = 0;
  double wall_seconds = 0.0;
};

// Probe resolutions in report order: LR sizes ascending, then HR.
std::vector<std::size_t> ReportResolutions(const DegradationConfig& deg,
                                           std::size_t hr_size);
std::string ResolutionLabel(std::size_t res, std::size_t hr_size);

std::vector<EvalRow> EvaluateModel(Model& model, const Dataset& data,
                                   const VerificationProtocol& protocol,
                                   const std::vector<std::size_t>& resolutions,
                                   const std::string& config,
                                   std::uint64_t seed, bool record_time);

struct AblationConfig {
  NetworkSpec spec;  // downsample kind is set per row
  TrainConfig train;
  DegradationConfig degradation;
  std::size_t threads = 1;
  bool deterministic = true;  // serial execution, zero wall times
  std::filesystem::path out_dir;  // per-row checkpoints and loss logs
};

struct AblationRow {
  std::string config;
  std::vector<FoldStats> per_resolution;
  double average = 0.0;
};

struct AblationReport {
  std::vector<std::size_t> resolutions;
  std::size_t hr_size = 0;
  std::vector<AblationRow> rows;
  std::vector<EvalRow> metrics;
};

// Row tags in table order.
const std::vector<std::string>& AblationConfigNames();

AblationReport RunAblation(const Dataset& data,
                           const VerificationProtocol& protocol,
                           const AblationConfig& cfg);

void WriteMetricsCsv(const std::filesystem::path& path,
                     const std::vector<EvalRow>& rows);
std::vector<EvalRow> ReadMetricsCsv(const std::filesystem::path& path);
// config, one column per resolution (accuracy in percent), average.
void WriteAblationTableCsv(const std::filesystem::path& path,
                           const AblationReport& report);
void WriteLossLogCsv(const std::filesystem::path& path,
                     const std::vector<EpochLog>& log);

}  // namespace wavedistill

#endif  // WAVEDISTILL_TRAIN_H_
