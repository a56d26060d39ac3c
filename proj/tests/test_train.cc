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

#include <cmath>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <gtest/gtest.h>

#include "test_util.h"
#include "wavedistill/errors.h"
#include "wavedistill/train.h"

namespace wavedistill {
namespace {

// Small enough to train for a few epochs in a second or two.
struct Fixture {
  Dataset data;
  NetworkSpec teacher_spec, student_spec;
  TrainConfig cfg;

  Fixture() {
    SynthSpec s;
    s.num_identities = 5;
    s.samples_per_identity = 20;
    s.seed = 4;
    data = GenerateDataset(s);
    teacher_spec.channels_per_stage = {8, 16, 16};
    teacher_spec.embedding_dim = 16;
    teacher_spec.num_classes = 5;
    student_spec = teacher_spec.WithKind(DownsampleKind::kWaveConv);
    cfg.epochs = 4;
    cfg.batch_size = 16;
    cfg.learning_rate = 0.05;
    cfg.seed = 9;
  }
};

std::vector<std::vector<double>> ParameterValues(const Model& m) {
  std::vector<std::vector<double>> out;
  for (const auto& [name, t] : m.Parameters()) {
    out.emplace_back(t.data().begin(), t.data().end());
  }
  return out;
}

std::string Slurp(const std::filesystem::path& p) {
  std::ifstream is(p, std::ios::binary);
  std::stringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

TEST(TrainConfigTest, LearningRateSchedule) {
  TrainConfig c;
  c.epochs = 18;
  for (std::size_t e = 0; e < 10; ++e) EXPECT_DOUBLE_EQ(c.LearningRateAt(e), 0.1);
  for (std::size_t e = 10; e < 13; ++e) EXPECT_NEAR(c.LearningRateAt(e), 0.01, 1e-15);
  for (std::size_t e = 13; e < 16; ++e) EXPECT_NEAR(c.LearningRateAt(e), 0.001, 1e-16);
  EXPECT_NEAR(c.LearningRateAt(17), 1e-4, 1e-17);
  c.lr_milestones = {};
  EXPECT_DOUBLE_EQ(c.LearningRateAt(17), 0.1);
}

TEST(TrainConfigTest, Validation) {
  TrainConfig c;
  EXPECT_NO_THROW(c.Validate());
  c.batch_size = 1;
  EXPECT_THROW(c.Validate(), ConfigError);
  c = {};
  c.momentum = 1.0;
  EXPECT_THROW(c.Validate(), ConfigError);
  c = {};
  c.lr_milestones = {0.8, 0.5};
  EXPECT_THROW(c.Validate(), ConfigError);
  c = {};
  c.grad_clip_norm = -1.0;
  EXPECT_THROW(c.Validate(), ConfigError);
  c = {};
  c.epochs = 0;
  EXPECT_THROW(c.Validate(), ConfigError);
}

TEST(TrainTest, ZeroLearningRateKeepsParameters) {
  Fixture f;
  f.cfg.learning_rate = 0.0;
  f.cfg.epochs = 2;
  TrainResult r = TrainTeacher(f.data, f.teacher_spec, f.cfg);
  Model init = Model::Build(f.teacher_spec, f.cfg.seed);
  EXPECT_EQ(ParameterValues(r.model), ParameterValues(init));
  ASSERT_EQ(r.log.size(), 2u);
  EXPECT_TRUE(std::isnan(r.log[0].heldout_distill));
}

TEST(TrainTest, TeacherLossHalves) {
  Fixture f;
  f.cfg.epochs = 10;
  TrainResult r = TrainTeacher(f.data, f.teacher_spec, f.cfg);
  ASSERT_EQ(r.log.size(), 10u);
  EXPECT_LE(r.log.back().arcface, 0.5 * r.log.front().arcface);
  for (const EpochLog& e : r.log) {
    EXPECT_EQ(e.distill, 0.0);
    EXPECT_EQ(e.wavesim, 0.0);
    EXPECT_EQ(e.total, e.arcface);
  }
}

TEST(TrainTest, Deterministic) {
  Fixture f;
  f.cfg.epochs = 2;
  TrainResult a = TrainTeacher(f.data, f.teacher_spec, f.cfg);
  TrainResult b = TrainTeacher(f.data, f.teacher_spec, f.cfg);
  EXPECT_EQ(a.model.Checksum(), b.model.Checksum());
}

TEST(TrainTest, ResumeIsBitwiseIdentical) {
  Fixture f;
  TrainResult straight = TrainTeacher(f.data, f.teacher_spec, f.cfg);

  auto dir = testing::TempDir("resume");
  TrainOptions first;
  first.checkpoint_dir = dir;
  first.stop_after_epoch = 2;
  TrainResult half = TrainTeacher(f.data, f.teacher_spec, f.cfg, first);
  EXPECT_EQ(half.log.size(), 2u);

  TrainOptions second;
  second.resume_from = dir;
  TrainResult resumed = TrainTeacher(f.data, f.teacher_spec, f.cfg, second);
  EXPECT_EQ(resumed.model.Checksum(), straight.model.Checksum());
  ASSERT_EQ(resumed.log.size(), straight.log.size());
  for (std::size_t i = 0; i < straight.log.size(); ++i) {
    EXPECT_EQ(resumed.log[i].epoch, straight.log[i].epoch);
    EXPECT_EQ(resumed.log[i].total, straight.log[i].total);
    EXPECT_TRUE(std::isnan(resumed.log[i].heldout_distill));
  }

  TrainConfig other = f.cfg;
  other.seed = 10;
  EXPECT_THROW(TrainTeacher(f.data, f.teacher_spec, other, second), ConfigError);
}

TEST(TrainTest, StudentWithZeroWeightsMatchesArcFaceOnly) {
  Fixture f;
  f.cfg.epochs = 2;
  TrainResult teacher = TrainTeacher(f.data, f.teacher_spec, f.cfg);
  TrainConfig cfg = f.cfg;
  cfg.distill.lambda1 = 0.0;
  cfg.distill.lambda2 = 0.0;
  DegradationConfig deg;
  TrainResult with = TrainStudent(f.data, teacher.model, f.student_spec, cfg, deg);
  TrainJob job{f.student_spec, TrainInput::kDegraded, deg, nullptr};
  TrainResult without = Train(f.data, job, cfg);
  EXPECT_EQ(with.model.Checksum(), without.model.Checksum());
}

TEST(TrainTest, StudentLeavesTeacherUntouchedAndLearns) {
  Fixture f;
  f.cfg.epochs = 8;
  TrainResult teacher = TrainTeacher(f.data, f.teacher_spec, f.cfg);
  const std::uint64_t sum = teacher.model.Checksum();
  TrainResult student = TrainStudent(f.data, teacher.model, f.student_spec,
                                     f.cfg, DegradationConfig{});
  EXPECT_EQ(teacher.model.Checksum(), sum);
  ASSERT_EQ(student.log.size(), 8u);
  for (const EpochLog& e : student.log) {
    EXPECT_TRUE(std::isfinite(e.heldout_distill));
    EXPECT_GT(e.wavesim, 0.0);
    EXPECT_NEAR(e.total, e.arcface + e.distill + 0.05 * e.wavesim,
                1e-9 * std::abs(e.total));
  }
  EXPECT_LT(student.log.back().heldout_distill,
            student.log.front().heldout_distill);
}

TEST(TrainTest, StudentRejectsIncompatibleNetworks) {
  Fixture f;
  Model teacher = Model::Build(f.teacher_spec, 1);
  EXPECT_THROW(TrainStudent(f.data, teacher, f.teacher_spec, f.cfg, {}),
               ConfigError);
  NetworkSpec narrow = f.student_spec;
  narrow.channels_per_stage = {8, 16, 32};
  EXPECT_THROW(TrainStudent(f.data, teacher, narrow, f.cfg, {}), ConfigError);
  NetworkSpec wave_teacher = f.student_spec;
  EXPECT_THROW(TrainTeacher(f.data, wave_teacher, f.cfg), ConfigError);
}

TEST(TrainTest, CheckpointCarriesOptimizerState) {
  Fixture f;
  f.cfg.epochs = 1;
  auto dir = testing::TempDir("ckpt_state");
  TrainOptions opts;
  opts.checkpoint_dir = dir;
  TrainResult r = TrainTeacher(f.data, f.teacher_spec, f.cfg, opts);
  LoadedCheckpoint ck = LoadCheckpoint(dir);
  EXPECT_EQ(ck.meta.epoch, 1u);
  EXPECT_EQ(ck.meta.seed, 9u);
  EXPECT_EQ(ck.model.Checksum(), r.model.Checksum());
  std::size_t velocities = 0;
  for (const auto& [name, t] : ck.extra) {
    velocities += name.rfind("sgd.velocity.", 0) == 0;
  }
  EXPECT_EQ(velocities, r.model.Parameters().size());
}

// Default dataset labels and protocol.
VerificationProtocol DefaultProtocol(std::vector<int>* labels) {
  Dataset ds = GenerateDataset(SynthSpec{});
  *labels = ds.labels;
  return BuildProtocol(ds.labels, ds.eval_indices, 13);
}

TEST(VerificationTest, OneHotOracleIsPerfect) {
  std::vector<int> labels;
  VerificationProtocol p = DefaultProtocol(&labels);
  std::vector<double> emb(labels.size() * 20, 0.0);
  for (std::size_t i = 0; i < labels.size(); ++i) emb[i * 20 + labels[i]] = 1.0;
  Tensor table({labels.size(), 20}, emb);
  FoldStats st = ScoreVerification(PairSimilarities(table, table, p), p);
  EXPECT_EQ(st.mean, 1.0);
  EXPECT_EQ(st.stddev, 0.0);
  EXPECT_EQ(st.fold_accuracy.size(), 10u);
}

TEST(VerificationTest, InputIndependentEmbeddingsScoreChance) {
  std::vector<int> labels;
  VerificationProtocol p = DefaultProtocol(&labels);
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    RngStream rng(seed);
    Tensor table = testing::RandomTensor({labels.size(), 64}, rng);
    FoldStats st = ScoreVerification(PairSimilarities(table, table, p), p);
    EXPECT_NEAR(st.mean, 0.5, 0.05) << "seed " << seed;
  }
}

TEST(VerificationTest, ThresholdIsChosenOnOtherFolds) {
  // Each fold is perfectly separable at its own threshold, but fold 0
  // disagrees with the rest, so its held-out accuracy collapses.
  VerificationProtocol p;
  std::vector<double> sim;
  for (std::size_t f = 0; f < 10; ++f) {
    const double hi = f == 0 ? -0.5 : 0.6, lo = f == 0 ? -0.6 : 0.5;
    p.pairs.push_back({0, 1, true, f});
    sim.push_back(hi);
    p.pairs.push_back({0, 2, false, f});
    sim.push_back(lo);
  }
  FoldStats st = ScoreVerification(sim, p);
  EXPECT_EQ(st.fold_accuracy[0], 0.5);
  for (std::size_t f = 1; f < 10; ++f) EXPECT_EQ(st.fold_accuracy[f], 1.0);
  EXPECT_NEAR(st.mean, 0.95, 1e-12);
  EXPECT_NEAR(st.stddev, 0.15, 1e-12);
}

TEST(VerificationTest, Errors) {
  VerificationProtocol p;
  p.pairs.push_back({0, 1, true, 0});
  EXPECT_THROW(ScoreVerification(std::vector<double>{0.1}, p), ConfigError);
  EXPECT_THROW(ScoreVerification(std::vector<double>{}, p), DimensionError);
  Tensor zero({2, 3}, std::vector<double>(6, 0.0));
  EXPECT_THROW(PairSimilarities(zero, zero, p), NumericError);
}

TEST(VerificationTest, PairSimilarityIsCosine) {
  VerificationProtocol p;
  p.pairs.push_back({0, 1, false, 0});
  Tensor probe({2, 2}, {3.0, 4.0, 0.0, 0.0});
  Tensor gallery({2, 2}, {0.0, 0.0, 4.0, 3.0});
  auto sim = PairSimilarities(probe, gallery, p);
  ASSERT_EQ(sim.size(), 1u);
  EXPECT_NEAR(sim[0], 24.0 / 25.0, 1e-15);
}

TEST(VerificationTest, ProbeResolutionRange) {
  Fixture f;
  Model m = Model::Build(f.teacher_spec, 1);
  VerificationProtocol p = BuildProtocol(f.data.labels, 2);
  EXPECT_THROW(VerifyAccuracy(m, f.data, p, 0), ConfigError);
  EXPECT_THROW(VerifyAccuracy(m, f.data, p, 33), ConfigError);
  FoldStats st = VerifyAccuracy(m, f.data, p, 8);
  EXPECT_GE(st.mean, 0.0);
  EXPECT_LE(st.mean, 1.0);
}

TEST(ReportTest, ResolutionOrder) {
  DegradationConfig d;
  d.lr_sizes = {16, 8, 16, 32};
  EXPECT_EQ(ReportResolutions(d, 32), (std::vector<std::size_t>{8, 16, 32}));
  EXPECT_EQ(ResolutionLabel(32, 32), "HR");
  EXPECT_EQ(ResolutionLabel(8, 32), "8");
  EXPECT_EQ(AblationConfigNames().size(), 5u);
}

TEST(ReportTest, MetricsCsvRoundTrip) {
  auto dir = testing::TempDir("metrics");
  std::vector<EvalRow> rows = {{"resnet", "8", 0.912345, 0.0125, 3, 0.0},
                               {"waveresnet", "HR", 1.0, 0.0, 3, 1.5}};
  WriteMetricsCsv(dir / "m.csv", rows);
  EXPECT_EQ(Slurp(dir / "m.csv"),
            "config,resolution,fold_mean,fold_std,seed,wall_seconds\n"
            "resnet,8,0.912345,0.012500,3,0.000\n"
            "waveresnet,HR,1.000000,0.000000,3,1.500\n");
  auto back = ReadMetricsCsv(dir / "m.csv");
  ASSERT_EQ(back.size(), 2u);
  EXPECT_EQ(back[1].config, "waveresnet");
  EXPECT_EQ(back[1].resolution, "HR");
  EXPECT_EQ(back[0].fold_mean, 0.912345);
  EXPECT_EQ(back[1].wall_seconds, 1.5);
  std::ofstream(dir / "bad.csv") << "a,b\n";
  EXPECT_THROW(ReadMetricsCsv(dir / "bad.csv"), IoError);
}

TEST(ReportTest, AblationTableLayout) {
  AblationReport r;
  r.resolutions = {8, 16, 32};
  r.hr_size = 32;
  AblationRow row{"resnet", {}, 0.9};
  for (double m : {0.85, 0.9, 0.95}) row.per_resolution.push_back({m, 0.0, {}});
  r.rows.push_back(row);
  auto dir = testing::TempDir("table");
  WriteAblationTableCsv(dir / "t.csv", r);
  EXPECT_EQ(Slurp(dir / "t.csv"),
            "config,8,16,HR,average\nresnet,85.00,90.00,95.00,90.00\n");
}

}  // namespace
}  // namespace wavedistill
