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

#include "wavedistill/train.h"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <map>
#include <memory>
#include <set>
#include <sstream>
#include <thread>

#include "wavedistill/errors.h"
#include "wavedistill/ops.h"
#include "wavedistill/optim.h"
#include "wavedistill/rng.h"

namespace wavedistill {
namespace {

constexpr std::size_t kHeldoutBatch = 64;
constexpr std::size_t kThresholdSteps = 1000;
constexpr std::size_t kLogColumns = 7;
constexpr const char* kVelocityPrefix = "sgd.velocity.";
constexpr const char* kLogTensor = "train.log";

using Clock = std::chrono::steady_clock;

double Seconds(Clock::time_point since) {
  return std::chrono::duration<double>(Clock::now() - since).count();
}

// Stacks [C,S,S] images into [N,C,S,S].
Tensor Stack(const std::vector<Tensor>& images) {
  const Shape& s = images.front().shape();
  const std::size_t plane = images.front().numel();
  std::vector<double> out(images.size() * plane);
  for (std::size_t i = 0; i < images.size(); ++i) {
    auto px = images[i].data();
    std::copy(px.begin(), px.end(),
              out.begin() + static_cast<std::ptrdiff_t>(i * plane));
  }
  return Tensor({images.size(), s[0], s[1], s[2]}, std::move(out));
}

Tensor DegradeBatch(const Dataset& data, std::span<const std::size_t> idx,
                    const DegradationConfig& deg, std::uint64_t seed,
                    std::uint64_t epoch) {
  std::vector<Tensor> out;
  out.reserve(idx.size());
  for (std::size_t i : idx) {
    RngStream rng(seed, i, epoch);
    out.push_back(DegradeSample(data.Image(i), deg, rng).image);
  }
  return Stack(out);
}

void CheckTeacherCompatible(const NetworkSpec& teacher,
                            const NetworkSpec& student) {
  if (teacher.input_size != student.input_size ||
      teacher.in_channels != student.in_channels ||
      teacher.channels_per_stage != student.channels_per_stage) {
    throw ConfigError(
        "teacher/student stage-shape mismatch: teacher input " +
        std::to_string(teacher.input_size) + " with " +
        std::to_string(teacher.channels_per_stage.size()) +
        " stages vs student input " + std::to_string(student.input_size) +
        " with " + std::to_string(student.channels_per_stage.size()) +
        " stages (stage widths must match)");
  }
  if (teacher.num_classes != student.num_classes) {
    throw ConfigError("teacher/student class count mismatch: " +
                      std::to_string(teacher.num_classes) + " vs " +
                      std::to_string(student.num_classes));
  }
}

// Tensors must be finite, so a missing held-out loss (NaN) is stored as -1;
// a KL divergence is never negative.
Tensor LogToTensor(const std::vector<EpochLog>& log) {
  std::vector<double> v;
  v.reserve(log.size() * kLogColumns);
  for (const auto& e : log) {
    const double heldout =
        std::isnan(e.heldout_distill) ? -1.0 : e.heldout_distill;
    v.insert(v.end(), {static_cast<double>(e.epoch), e.learning_rate, e.total,
                       e.arcface, e.distill, e.wavesim, heldout});
  }
  return Tensor({log.size(), kLogColumns}, std::move(v));
}

std::vector<EpochLog> LogFromTensor(const Tensor& t) {
  if (t.rank() != 2 || t.dim(1) != kLogColumns) {
    throw IoError("checkpoint loss log has shape " + ShapeToString(t.shape()));
  }
  std::vector<EpochLog> log(t.dim(0));
  auto d = t.data();
  for (std::size_t i = 0; i < log.size(); ++i) {
    const double* r = d.data() + i * kLogColumns;
    log[i] = {static_cast<std::size_t>(r[0]), r[1], r[2], r[3], r[4], r[5],
              r[6] < 0.0 ? std::numeric_limits<double>::quiet_NaN() : r[6]};
  }
  return log;
}

// Runs tasks on up to `threads` workers; the first exception is rethrown.
void RunTasks(std::vector<std::function<void()>>& tasks, std::size_t threads) {
  if (threads <= 1 || tasks.size() <= 1) {
    for (auto& t : tasks) t();
    return;
  }
  std::vector<std::exception_ptr> errors(tasks.size());
  std::size_t next = 0;
  while (next < tasks.size()) {
    std::vector<std::thread> pool;
    for (; next < tasks.size() && pool.size() < threads; ++next) {
      pool.emplace_back([&tasks, &errors, i = next] {
        try {
          tasks[i]();
        } catch (...) {
          errors[i] = std::current_exception();
        }
      });
    }
    for (auto& th : pool) th.join();
  }
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

void ClipGradNorm(std::vector<Tensor>& params, double max_norm) {
  double sq = 0.0;
  for (const Tensor& p : params) {
    if (!p.has_grad()) continue;
    for (double g : p.grad()) sq += g * g;
  }
  const double norm = std::sqrt(sq);
  if (norm <= max_norm) return;
  const double k = max_norm / norm;
  for (Tensor& p : params) {
    if (!p.has_grad()) continue;
    for (double& g : p.mutable_grad()) g *= k;
  }
}

std::string FormatDouble(const char* fmt, double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), fmt, v);
  return buf;
}

}  // namespace

void TrainConfig::Validate() const {
  if (epochs == 0) throw ConfigError("epochs must be >= 1");
  if (batch_size < 2) {
    throw ConfigError("batch_size must be >= 2 for batch normalization");
  }
  if (!(learning_rate >= 0.0) || !std::isfinite(learning_rate)) {
    throw ConfigError("learning_rate must be finite and >= 0");
  }
  if (!(momentum >= 0.0 && momentum < 1.0)) {
    throw ConfigError("momentum must lie in [0, 1)");
  }
  if (!std::is_sorted(lr_milestones.begin(), lr_milestones.end())) {
    throw ConfigError("lr milestone fractions must be sorted");
  }
  for (double f : lr_milestones) {
    if (!(f > 0.0 && f <= 1.0)) {
      throw ConfigError("lr milestone fractions must lie in (0, 1]");
    }
  }
  distill.Validate();
  if (!(grad_clip_norm >= 0.0)) throw ConfigError("grad_clip_norm must be >= 0");
  if (!(arcface_scale > 0.0)) throw ConfigError("arcface scale must be > 0");
  if (!(arcface_margin >= 0.0 && arcface_margin < M_PI / 2)) {
    throw ConfigError("arcface margin must lie in [0, pi/2)");
  }
}

double TrainConfig::LearningRateAt(std::size_t epoch) const {
  double lr = learning_rate;
  for (double f : lr_milestones) {
    const auto m = static_cast<std::size_t>(
        std::lround(f * static_cast<double>(epochs)));
    if (epoch >= m) lr *= 0.1;
  }
  return lr;
}

TrainResult Train(const Dataset& data, const TrainJob& job,
                  const TrainConfig& cfg, const TrainOptions& opts) {
  cfg.Validate();
  job.spec.Validate();
  const std::size_t s = data.image_size();
  if (s != job.spec.input_size) {
    throw ConfigError("dataset images are " + std::to_string(s) +
                      " px but the network expects " +
                      std::to_string(job.spec.input_size));
  }
  if (data.num_identities > job.spec.num_classes) {
    throw ConfigError("dataset has " + std::to_string(data.num_identities) +
                      " identities but the head has " +
                      std::to_string(job.spec.num_classes) + " classes");
  }
  if (data.train_indices.size() < 2) {
    throw ConfigError("training split needs at least 2 images");
  }
  const bool degraded = job.input == TrainInput::kDegraded;
  if (degraded) job.degradation.Validate(s);
  Model* teacher = job.teacher;
  if (teacher != nullptr) CheckTeacherCompatible(teacher->spec(), job.spec);

  TrainResult result{Model::Build(job.spec, cfg.seed), {}};
  Model& model = result.model;
  model.head().scale = cfg.arcface_scale;
  model.head().margin = cfg.arcface_margin;
  std::size_t start_epoch = 0;
  std::map<std::string, Tensor> restored_velocity;
  if (opts.resume_from) {
    LoadedCheckpoint ck = LoadCheckpoint(*opts.resume_from);
    if (!(ck.model.spec() == job.spec)) {
      throw ConfigError("checkpoint at " + opts.resume_from->string() +
                        " was written for a different network spec");
    }
    if (ck.meta.seed != cfg.seed) {
      throw ConfigError("checkpoint seed " + std::to_string(ck.meta.seed) +
                        " differs from configured seed " +
                        std::to_string(cfg.seed));
    }
    model = std::move(ck.model);
    start_epoch = ck.meta.epoch;
    for (auto& [name, t] : ck.extra) {
      if (name == kLogTensor) {
        result.log = LogFromTensor(t);
      } else if (name.rfind(kVelocityPrefix, 0) == 0) {
        restored_velocity[name.substr(std::char_traits<char>::length(
            kVelocityPrefix))] = t;
      }
    }
  }

  const auto named = model.Parameters();
  std::vector<Tensor> params;
  for (const auto& [name, t] : named) params.push_back(t);
  Sgd sgd(params, cfg.learning_rate, cfg.momentum);
  for (std::size_t i = 0; i < named.size(); ++i) {
    auto it = restored_velocity.find(named[i].first);
    if (it == restored_velocity.end()) continue;
    auto dst = sgd.velocities()[i].mutable_data();
    auto src = it->second.data();
    if (src.size() != dst.size()) {
      throw IoError("optimizer state for " + named[i].first +
                    " has the wrong size");
    }
    std::copy(src.begin(), src.end(), dst.begin());
  }

  const std::uint64_t shuffle_seed = DeriveSeed(cfg.seed, "shuffle");
  const std::uint64_t degrade_seed = DeriveSeed(cfg.seed, "degrade");
  const std::uint64_t teacher_sum = teacher ? teacher->Checksum() : 0;

  // Fixed held-out batch for tracking distillation on unseen images.
  Tensor heldout_hr, heldout_in;
  if (teacher != nullptr && !data.eval_indices.empty()) {
    const std::size_t n = std::min(kHeldoutBatch, data.eval_indices.size());
    std::span<const std::size_t> idx(data.eval_indices.data(), n);
    heldout_hr = data.Batch(idx);
    heldout_in = degraded ? DegradeBatch(data, idx, job.degradation,
                                         DeriveSeed(cfg.seed, "heldout"), 0)
                          : heldout_hr;
  }

  const std::size_t end_epoch =
      opts.stop_after_epoch > 0 ? std::min(opts.stop_after_epoch, cfg.epochs)
                                : cfg.epochs;
  for (std::size_t epoch = start_epoch; epoch < end_epoch; ++epoch) {
    EpochLog entry;
    entry.epoch = epoch + 1;
    entry.learning_rate = cfg.LearningRateAt(epoch);
    sgd.set_learning_rate(entry.learning_rate);

    std::vector<std::size_t> order = data.train_indices;
    RngStream shuffle(shuffle_seed, 0, epoch);
    for (std::size_t k = order.size() - 1; k > 0; --k) {
      const auto j = static_cast<std::size_t>(
          shuffle.UniformInt(0, static_cast<std::int64_t>(k)));
      std::swap(order[k], order[j]);
    }

    std::size_t batches = 0;
    try {
      for (std::size_t lo = 0; lo + 2 <= order.size(); lo += cfg.batch_size) {
        const std::size_t hi = std::min(lo + cfg.batch_size, order.size());
        std::span<const std::size_t> idx(order.data() + lo, hi - lo);
        std::vector<int> labels(idx.size());
        for (std::size_t b = 0; b < idx.size(); ++b) {
          labels[b] = data.labels[idx[b]];
        }
        const Tensor hr = data.Batch(idx);
        const Tensor input =
            degraded ? DegradeBatch(data, idx, job.degradation, degrade_seed,
                                    epoch)
                     : hr;

        StageFeatures feats = model.Forward(input, Mode::kTrain);
        Tensor arc = ArcFaceLoss(feats.embedding, model.head(), labels);
        Tensor distill = Tensor::Scalar(0.0);
        Tensor wavesim = Tensor::Scalar(0.0);
        if (teacher != nullptr) {
          StageFeatures tf;
          Tensor t_logits;
          {
            NoGradGuard no_grad;
            tf = teacher->Forward(hr, Mode::kEval);
            t_logits = teacher->Logits(tf.embedding);
          }
          distill = DistillKlLoss(t_logits, model.Logits(feats.embedding),
                                  cfg.distill.temperature);
          wavesim = WaveSimLoss(tf.stages, feats.stages);
        }
        Tensor total = TotalLoss(arc, distill, wavesim, cfg.distill);
        total.backward();
        if (cfg.grad_clip_norm > 0.0) ClipGradNorm(params, cfg.grad_clip_norm);
        sgd.Step();

        entry.total += total.item();
        entry.arcface += arc.item();
        entry.distill += distill.item();
        entry.wavesim += wavesim.item();
        ++batches;
      }
    } catch (const NumericError& e) {
      throw NumericError("training diverged (seed " + std::to_string(cfg.seed) +
                         ", epoch " + std::to_string(epoch + 1) +
                         "): " + e.what());
    }
    const double nb = static_cast<double>(std::max<std::size_t>(batches, 1));
    entry.total /= nb;
    entry.arcface /= nb;
    entry.distill /= nb;
    entry.wavesim /= nb;
    if (!std::isfinite(entry.total)) {
      throw NumericError("training diverged (seed " + std::to_string(cfg.seed) +
                         ", epoch " + std::to_string(epoch + 1) +
                         "): non-finite loss");
    }

    entry.heldout_distill = std::numeric_limits<double>::quiet_NaN();
    if (heldout_hr.defined()) {
      NoGradGuard no_grad;
      const Tensor t_logits =
          teacher->Logits(teacher->Forward(heldout_hr, Mode::kEval).embedding);
      const Tensor s_logits =
          model.Logits(model.Forward(heldout_in, Mode::kEval).embedding);
      entry.heldout_distill =
          DistillKlLoss(t_logits, s_logits, cfg.distill.temperature).item();
    }
    result.log.push_back(entry);
    if (opts.on_epoch) opts.on_epoch(entry);

    if (!opts.checkpoint_dir.empty()) {
      std::vector<NamedTensor> extra;
      for (std::size_t i = 0; i < named.size(); ++i) {
        extra.emplace_back(kVelocityPrefix + named[i].first,
                           sgd.velocities()[i]);
      }
      extra.emplace_back(kLogTensor, LogToTensor(result.log));
      SaveCheckpoint(opts.checkpoint_dir, model, {cfg.seed, epoch + 1}, extra);
    }
  }

  if (teacher != nullptr && teacher->Checksum() != teacher_sum) {
    throw Error("teacher parameters changed during distillation");
  }
  return result;
}

TrainResult TrainTeacher(const Dataset& data, const NetworkSpec& spec,
                         const TrainConfig& cfg, const TrainOptions& opts) {
  if (spec.downsample_kind != DownsampleKind::kStrideConv) {
    throw ConfigError("the teacher must use stride-conv downsampling");
  }
  return Train(data, TrainJob{spec, TrainInput::kHighRes, {}, nullptr}, cfg,
               opts);
}

TrainResult TrainStudent(const Dataset& data, Model& teacher,
                         const NetworkSpec& spec, const TrainConfig& cfg,
                         const DegradationConfig& degradation,
                         const TrainOptions& opts) {
  if (spec.downsample_kind != DownsampleKind::kWaveConv) {
    throw ConfigError("the student must use waveconv downsampling");
  }
  return Train(data,
               TrainJob{spec, TrainInput::kDegraded, degradation, &teacher},
               cfg, opts);
}

Tensor ExtractEmbeddings(Model& model, const Tensor& images,
                         std::size_t batch_size) {
  if (images.rank() != 4) {
    throw DimensionError("ExtractEmbeddings: expected [M,C,S,S], got " +
                         ShapeToString(images.shape()));
  }
  NoGradGuard no_grad;
  const std::size_t m = images.dim(0);
  const std::size_t plane = images.numel() / std::max<std::size_t>(m, 1);
  const std::size_t d = model.spec().embedding_dim;
  std::vector<double> out(m * d);
  auto px = images.data();
  for (std::size_t lo = 0; lo < m; lo += batch_size) {
    const std::size_t n = std::min(batch_size, m - lo);
    Tensor batch({n, images.dim(1), images.dim(2), images.dim(3)},
                 std::vector<double>(px.begin() + lo * plane,
                                     px.begin() + (lo + n) * plane));
    const Tensor emb =
        L2Normalize(model.Forward(batch, Mode::kEval).embedding, 1);
    auto e = emb.data();
    std::copy(e.begin(), e.end(), out.begin() + lo * d);
  }
  return Tensor({m, d}, std::move(out));
}

Tensor ExtractEmbedding(Model& model, const Tensor& image) {
  if (image.rank() != 3) {
    throw DimensionError("ExtractEmbedding: expected [C,S,S], got " +
                         ShapeToString(image.shape()));
  }
  const Shape& s = image.shape();
  const Tensor one = Reshape(image.detach(), {1, s[0], s[1], s[2]});
  const Tensor emb = ExtractEmbeddings(model, one, 1);
  return Reshape(emb, {emb.dim(1)});
}

FoldStats ScoreVerification(std::span<const double> similarity,
                            const VerificationProtocol& protocol) {
  const auto& pairs = protocol.pairs;
  if (similarity.size() != pairs.size()) {
    throw DimensionError("ScoreVerification: one similarity per pair needed");
  }
  constexpr std::size_t kFolds = VerificationProtocol::kFolds;
  std::vector<std::size_t> fold_size(kFolds, 0);
  for (const auto& p : pairs) {
    if (p.fold >= kFolds) throw ConfigError("pair fold index out of range");
    ++fold_size[p.fold];
  }
  for (std::size_t f = 0; f < kFolds; ++f) {
    if (fold_size[f] == 0) {
      throw ConfigError("verification fold " + std::to_string(f) +
                        " is empty");
    }
  }
  std::vector<double> thresholds(kThresholdSteps);
  for (std::size_t k = 0; k < kThresholdSteps; ++k) {
    thresholds[k] = -1.0 + 2.0 * static_cast<double>(k) /
                               static_cast<double>(kThresholdSteps - 1);
  }
  // correct[f][k]: pairs of fold f classified correctly at threshold k.
  std::vector<std::vector<std::size_t>> correct(
      kFolds, std::vector<std::size_t>(kThresholdSteps, 0));
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    auto& row = correct[pairs[i].fold];
    for (std::size_t k = 0; k < kThresholdSteps; ++k) {
      row[k] += (similarity[i] > thresholds[k]) == pairs[i].same;
    }
  }
  FoldStats stats;
  for (std::size_t f = 0; f < kFolds; ++f) {
    std::size_t best_k = 0, best = 0;
    for (std::size_t k = 0; k < kThresholdSteps; ++k) {
      std::size_t c = 0;
      for (std::size_t g = 0; g < kFolds; ++g) {
        if (g != f) c += correct[g][k];
      }
      if (c > best) {
        best = c;
        best_k = k;
      }
    }
    stats.fold_accuracy.push_back(static_cast<double>(correct[f][best_k]) /
                                  static_cast<double>(fold_size[f]));
  }
  for (double a : stats.fold_accuracy) stats.mean += a;
  stats.mean /= kFolds;
  for (double a : stats.fold_accuracy) {
    stats.stddev += (a - stats.mean) * (a - stats.mean);
  }
  stats.stddev = std::sqrt(stats.stddev / kFolds);
  return stats;
}

std::vector<double> PairSimilarities(const Tensor& probe_embeddings,
                                     const Tensor& gallery_embeddings,
                                     const VerificationProtocol& protocol) {
  if (probe_embeddings.rank() != 2 ||
      probe_embeddings.shape() != gallery_embeddings.shape()) {
    throw DimensionError("PairSimilarities: embedding tables must be [M,D]");
  }
  const std::size_t m = probe_embeddings.dim(0), d = probe_embeddings.dim(1);
  auto pe = probe_embeddings.data(), ge = gallery_embeddings.data();
  std::vector<double> sim;
  sim.reserve(protocol.pairs.size());
  for (const auto& p : protocol.pairs) {
    if (p.probe >= m || p.gallery >= m) {
      throw DimensionError("PairSimilarities: pair index out of range");
    }
    double dot = 0.0, np = 0.0, ng = 0.0;
    for (std::size_t j = 0; j < d; ++j) {
      const double a = pe[p.probe * d + j], b = ge[p.gallery * d + j];
      dot += a * b;
      np += a * a;
      ng += b * b;
    }
    if (np == 0.0 || ng == 0.0) {
      throw NumericError("PairSimilarities: zero embedding for a pair member");
    }
    sim.push_back(dot / std::sqrt(np * ng));
  }
  return sim;
}

FoldStats VerifyAccuracy(Model& model, const Dataset& data,
                         const VerificationProtocol& protocol,
                         std::size_t probe_resolution) {
  const std::size_t s = data.image_size();
  if (probe_resolution == 0 || probe_resolution > s) {
    throw ConfigError("probe resolution must lie in [1, " + std::to_string(s) +
                      "]");
  }
  std::set<std::size_t> probes, galleries;
  for (const auto& p : protocol.pairs) {
    probes.insert(p.probe);
    galleries.insert(p.gallery);
  }
  const std::size_t m = data.size(), d = model.spec().embedding_dim;
  auto table = [&](const std::set<std::size_t>& ids, bool downsample) {
    std::vector<std::size_t> idx(ids.begin(), ids.end());
    std::vector<Tensor> images;
    images.reserve(idx.size());
    for (std::size_t i : idx) {
      Tensor img = data.Image(i);
      images.push_back(downsample && probe_resolution < s
                           ? EvalDownsample(img, probe_resolution)
                           : img);
    }
    std::vector<double> full(m * d, 0.0);
    if (!idx.empty()) {
      const Tensor emb = ExtractEmbeddings(model, Stack(images));
      auto e = emb.data();
      for (std::size_t r = 0; r < idx.size(); ++r) {
        std::copy_n(e.begin() + r * d, d, full.begin() + idx[r] * d);
      }
    }
    return Tensor({m, d}, std::move(full));
  };
  const Tensor probe_emb = table(probes, true);
  const Tensor gallery_emb = table(galleries, false);
  const auto sim = PairSimilarities(probe_emb, gallery_emb, protocol);
  return ScoreVerification(sim, protocol);
}

std::vector<std::size_t> ReportResolutions(const DegradationConfig& deg,
                                           std::size_t hr_size) {
  std::set<std::size_t> lr(deg.lr_sizes.begin(), deg.lr_sizes.end());
  lr.erase(hr_size);
  std::vector<std::size_t> out(lr.begin(), lr.end());
  out.push_back(hr_size);
  return out;
}

std::string ResolutionLabel(std::size_t res, std::size_t hr_size) {
  return res == hr_size ? "HR" : std::to_string(res);
}

std::vector<EvalRow> EvaluateModel(Model& model, const Dataset& data,
                                   const VerificationProtocol& protocol,
                                   const std::vector<std::size_t>& resolutions,
                                   const std::string& config,
                                   std::uint64_t seed, bool record_time) {
  std::vector<EvalRow> rows;
  for (std::size_t res : resolutions) {
    const auto t0 = Clock::now();
    const FoldStats st = VerifyAccuracy(model, data, protocol, res);
    rows.push_back({config, ResolutionLabel(res, data.image_size()), st.mean,
                    st.stddev, seed, record_time ? Seconds(t0) : 0.0});
  }
  return rows;
}

const std::vector<std::string>& AblationConfigNames() {
  static const std::vector<std::string> kNames = {
      "resnet", "waveresnet", "waveresnet+degradation",
      "waveresnet+degradation+kd", "waveresnet+degradation+kd+wavesim"};
  return kNames;
}

AblationReport RunAblation(const Dataset& data,
                           const VerificationProtocol& protocol,
                           const AblationConfig& cfg) {
  const auto& names = AblationConfigNames();
  const std::size_t hr = data.image_size();
  AblationReport report;
  report.hr_size = hr;
  report.resolutions = ReportResolutions(cfg.degradation, hr);
  report.rows.resize(names.size());

  struct RowPlan {
    DownsampleKind kind;
    TrainInput input;
    bool kd;
    double lambda2;
  };
  const std::vector<RowPlan> plans = {
      {DownsampleKind::kStrideConv, TrainInput::kHighRes, false, 0.0},
      {DownsampleKind::kWaveConv, TrainInput::kHighRes, false, 0.0},
      {DownsampleKind::kWaveConv, TrainInput::kDegraded, false, 0.0},
      {DownsampleKind::kWaveConv, TrainInput::kDegraded, true, 0.0},
      {DownsampleKind::kWaveConv, TrainInput::kDegraded, true,
       cfg.train.distill.lambda2},
  };

  std::unique_ptr<Model> baseline;
  std::vector<std::vector<EvalRow>> metrics(names.size());
  auto run_row = [&](std::size_t r) {
    const auto t0 = Clock::now();
    const RowPlan& plan = plans[r];
    TrainJob job{cfg.spec.WithKind(plan.kind), plan.input, cfg.degradation,
                 plan.kd ? baseline.get() : nullptr};
    TrainConfig tc = cfg.train;
    tc.distill.lambda2 = plan.lambda2;
    TrainOptions opts;
    if (!cfg.out_dir.empty()) {
      opts.checkpoint_dir = cfg.out_dir / names[r];
      std::filesystem::create_directories(opts.checkpoint_dir);
    }
    TrainResult res = Train(data, job, tc, opts);
    if (!cfg.out_dir.empty()) {
      WriteLossLogCsv(opts.checkpoint_dir / "loss_log.csv", res.log);
    }
    auto rows = EvaluateModel(res.model, data, protocol, report.resolutions,
                              names[r], cfg.train.seed, false);
    AblationRow& out = report.rows[r];
    out.config = names[r];
    for (std::size_t res_i = 0; res_i < report.resolutions.size(); ++res_i) {
      FoldStats st;
      st.mean = rows[res_i].fold_mean;
      st.stddev = rows[res_i].fold_std;
      out.per_resolution.push_back(st);
      out.average += st.mean;
    }
    out.average /= static_cast<double>(report.resolutions.size());
    const double wall = cfg.deterministic ? 0.0 : Seconds(t0);
    for (auto& row : rows) row.wall_seconds = wall;
    metrics[r] = std::move(rows);
    if (r == 0) baseline = std::make_unique<Model>(std::move(res.model));
  };

  const std::size_t threads = cfg.deterministic ? 1 : cfg.threads;
  std::vector<std::function<void()>> phase1, phase2;
  for (std::size_t r : {0, 1, 2}) phase1.push_back([&run_row, r] { run_row(r); });
  for (std::size_t r : {3, 4}) phase2.push_back([&run_row, r] { run_row(r); });
  RunTasks(phase1, threads);
  RunTasks(phase2, threads);
  for (auto& m : metrics) {
    report.metrics.insert(report.metrics.end(), m.begin(), m.end());
  }
  return report;
}

void WriteMetricsCsv(const std::filesystem::path& path,
                     const std::vector<EvalRow>& rows) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw IoError("cannot write " + path.string());
  os << "config,resolution,fold_mean,fold_std,seed,wall_seconds\n";
  for (const auto& r : rows) {
    os << r.config << ',' << r.resolution << ','
       << FormatDouble("%.6f", r.fold_mean) << ','
       << FormatDouble("%.6f", r.fold_std) << ',' << r.seed << ','
       << FormatDouble("%.3f", r.wall_seconds) << '\n';
  }
  if (!os) throw IoError("write failed: " + path.string());
}

std::vector<EvalRow> ReadMetricsCsv(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw IoError("cannot open " + path.string());
  std::string line;
  std::getline(is, line);
  if (line != "config,resolution,fold_mean,fold_std,seed,wall_seconds") {
    throw IoError(path.string() + ": unexpected metrics header");
  }
  std::vector<EvalRow> rows;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    std::vector<std::string> f;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) f.push_back(cell);
    if (f.size() != 6) throw IoError(path.string() + ": malformed row");
    rows.push_back({f[0], f[1], std::stod(f[2]), std::stod(f[3]),
                    std::stoull(f[4]), std::stod(f[5])});
  }
  return rows;
}

void WriteAblationTableCsv(const std::filesystem::path& path,
                           const AblationReport& report) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw IoError("cannot write " + path.string());
  os << "config";
  for (std::size_t res : report.resolutions) {
    os << ',' << ResolutionLabel(res, report.hr_size);
  }
  os << ",average\n";
  for (const auto& row : report.rows) {
    os << row.config;
    for (const auto& st : row.per_resolution) {
      os << ',' << FormatDouble("%.2f", 100.0 * st.mean);
    }
    os << ',' << FormatDouble("%.2f", 100.0 * row.average) << '\n';
  }
  if (!os) throw IoError("write failed: " + path.string());
}

void WriteLossLogCsv(const std::filesystem::path& path,
                     const std::vector<EpochLog>& log) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw IoError("cannot write " + path.string());
  os << "epoch,learning_rate,total,arcface,distill,wavesim,heldout_distill\n";
  for (const auto& e : log) {
    os << e.epoch << ',' << FormatDouble("%.6g", e.learning_rate) << ','
       << FormatDouble("%.9g", e.total) << ','
       << FormatDouble("%.9g", e.arcface) << ','
       << FormatDouble("%.9g", e.distill) << ','
       << FormatDouble("%.9g", e.wavesim) << ','
       << FormatDouble("%.9g", e.heldout_distill) << '\n';
  }
  if (!os) throw IoError("write failed: " + path.string());
}

}  // namespace wavedistill
