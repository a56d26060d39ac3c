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
#include <numbers>
#include <vector>

#include <gtest/gtest.h>

#include "test_util.h"
#include "wavedistill/errors.h"
#include "wavedistill/losses.h"
#include "wavedistill/wavelet.h"

namespace wavedistill {
namespace {

using testing::GradCheck;
using testing::RandomTensor;

ArcFaceHead MakeHead(Tensor weight, double scale, double margin) {
  ArcFaceHead h;
  h.weight = std::move(weight);
  h.scale = scale;
  h.margin = margin;
  return h;
}

// Softmax cross-entropy of s * cos computed with plain loops.
double CeOracle(const Tensor& emb, const Tensor& w, double s,
                const std::vector<int>& labels) {
  const std::size_t n = emb.dim(0), d = emb.dim(1), k = w.dim(1);
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    double en = 0.0;
    for (std::size_t t = 0; t < d; ++t) en += emb.at({i, t}) * emb.at({i, t});
    std::vector<double> logit(k);
    for (std::size_t j = 0; j < k; ++j) {
      double dot = 0.0, wn = 0.0;
      for (std::size_t t = 0; t < d; ++t) {
        dot += emb.at({i, t}) * w.at({t, j});
        wn += w.at({t, j}) * w.at({t, j});
      }
      logit[j] = s * dot / std::sqrt(en * wn);
    }
    double mx = logit[0];
    for (double v : logit) mx = std::max(mx, v);
    double z = 0.0;
    for (double v : logit) z += std::exp(v - mx);
    total += -(logit[labels[i]] - mx - std::log(z));
  }
  return total / double(n);
}

double KlOracle(std::vector<double> zt, std::vector<double> zs, double t) {
  auto softmax = [t](std::vector<double> z) {
    double sum = 0.0;
    for (double& v : z) sum += (v = std::exp(v / t));
    for (double& v : z) v /= sum;
    return z;
  };
  auto p = softmax(zt), q = softmax(zs);
  double kl = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) kl += p[i] * std::log(p[i] / q[i]);
  return t * t * kl;
}

TEST(ArcFaceTest, SingleClassIsZero) {
  RngStream rng(1);
  ArcFaceHead head = MakeHead(RandomTensor({4, 1}, rng), 16.0, 0.5);
  const std::vector<int> labels = {0, 0, 0};
  EXPECT_NEAR(ArcFaceLoss(RandomTensor({3, 4}, rng), head, labels).item(), 0.0,
              1e-15);
}

TEST(ArcFaceTest, ZeroMarginIsScaledCosineCrossEntropy) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    RngStream rng(10 + seed);
    Tensor emb = RandomTensor({5, 6}, rng);
    Tensor w = RandomTensor({6, 4}, rng);
    const std::vector<int> labels = {0, 3, 1, 2, 3};
    const double loss = ArcFaceLoss(emb, MakeHead(w, 16.0, 0.0), labels).item();
    EXPECT_NEAR(loss, CeOracle(emb, w, 16.0, labels), 1e-9);
  }
}

TEST(ArcFaceTest, AlignedTwoClassFormula) {
  Tensor emb({1, 2}, {1.0, 0.0});
  Tensor w({2, 2}, {1.0, 0.0, 0.0, 1.0});
  const std::vector<int> labels = {0};
  const double loss = ArcFaceLoss(emb, MakeHead(w, 1.0, 0.5), labels).item();
  const double c = std::cos(0.5);
  EXPECT_NEAR(loss, -std::log(std::exp(c) / (std::exp(c) + 1.0)), 1e-12);
}

TEST(ArcFaceTest, OutOfRangeLabelRejected) {
  RngStream rng(2);
  ArcFaceHead head = MakeHead(RandomTensor({3, 2}, rng), 16.0, 0.5);
  const std::vector<int> bad = {2};
  EXPECT_THROW(ArcFaceLoss(RandomTensor({1, 3}, rng), head, bad), ConfigError);
  const std::vector<int> negative = {-1};
  EXPECT_THROW(ArcFaceLoss(RandomTensor({1, 3}, rng), head, negative),
               ConfigError);
  EXPECT_THROW(MakeHead(RandomTensor({3, 2}, rng), 16.0, 1.6).Validate(),
               ConfigError);
  EXPECT_THROW(MakeHead(RandomTensor({3, 2}, rng), 0.0, 0.5).Validate(),
               ConfigError);
}

TEST(ArcFaceTest, CosinesWithinUnitInterval) {
  RngStream rng(3);
  ArcFaceHead head = MakeHead(RandomTensor({8, 5}, rng), 16.0, 0.5);
  Tensor c = ArcFaceCosines(RandomTensor({6, 8}, rng), head);
  for (double v : c.data()) {
    EXPECT_LE(v, 1.0);
    EXPECT_GE(v, -1.0);
  }
}

TEST(ArcFaceTest, InvariantToEmbeddingScale) {
  RngStream rng(4);
  Tensor emb = RandomTensor({4, 5}, rng);
  ArcFaceHead head = MakeHead(RandomTensor({5, 3}, rng), 16.0, 0.5);
  const std::vector<int> labels = {0, 1, 2, 1};
  const double base = ArcFaceLoss(emb, head, labels).item();
  for (double f : {0.5, 3.0}) {
    EXPECT_NEAR(ArcFaceLoss(Scale(emb, f), head, labels).item(), base, 1e-9);
  }
}

TEST(ArcFaceTest, NonDecreasingInMargin) {
  // Target column at angle 0.6 from the embedding; others further away.
  Tensor emb({1, 2}, {1.0, 0.0});
  Tensor w({2, 3}, {std::cos(0.6), std::cos(2.0), std::cos(-2.5),
                    std::sin(0.6), std::sin(2.0), std::sin(-2.5)});
  const std::vector<int> labels = {0};
  double prev = -1.0;
  for (int i = 0; i <= 15; ++i) {
    const double m = 0.1 * i;
    ASSERT_LT(0.6 + m, std::numbers::pi);
    const double loss = ArcFaceLoss(emb, MakeHead(w, 16.0, m), labels).item();
    EXPECT_GE(loss, prev) << "margin " << m;
    prev = loss;
  }
}

TEST(ArcFaceTest, SurrogateBeyondPiIsMonotone) {
  // theta = 2.9 rad: theta + m > pi for m = 0.5.
  Tensor c({1, 2}, {std::cos(2.9), 0.0});
  const std::vector<int> labels = {0};
  Tensor out = AngularMargin(c, labels, 0.5);
  EXPECT_DOUBLE_EQ(out.data()[0], std::cos(2.9) - 0.5 * std::sin(0.5));
  EXPECT_EQ(out.data()[1], 0.0);
  Tensor near({1, 2}, {std::cos(2.5), 0.0});
  EXPECT_GT(AngularMargin(near, labels, 0.5).data()[0], out.data()[0]);
}

TEST(ArcFaceTest, GradientThroughEmbeddingAndHead) {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    RngStream rng(30 + seed);
    Tensor emb = RandomTensor({3, 4}, rng);
    Tensor w = RandomTensor({4, 3}, rng);
    const std::vector<int> labels = {2, 0, 1};
    auto f = [&](const std::vector<Tensor>& in) {
      return ArcFaceLoss(in[0], MakeHead(in[1], 4.0, 0.5), labels);
    };
    EXPECT_LT(GradCheck(f, {emb, w}).max_rel_error, 1e-4);
  }
}

TEST(DistillTest, IdenticalLogitsGiveZero) {
  RngStream rng(5);
  Tensor z = RandomTensor({4, 6}, rng, 3.0);
  EXPECT_EQ(DistillKlLoss(z, z, 4.0).item(), 0.0);
}

TEST(DistillTest, TwoClassValue) {
  Tensor zt({1, 2}, {1.0, 0.0}), zs({1, 2}, {0.0, 1.0});
  const double loss = DistillKlLoss(zt, zs, 1.0).item();
  EXPECT_NEAR(loss, KlOracle({1.0, 0.0}, {0.0, 1.0}, 1.0), 1e-12);
  EXPECT_NEAR(loss, 0.46212, 1e-5);
}

TEST(DistillTest, MatchesDirectSummation) {
  RngStream rng(6);
  Tensor zt = RandomTensor({3, 5}, rng, 4.0), zs = RandomTensor({3, 5}, rng, 4.0);
  double expected = 0.0;
  for (std::size_t i = 0; i < 3; ++i) {
    std::vector<double> a(zt.data().begin() + i * 5, zt.data().begin() + i * 5 + 5);
    std::vector<double> b(zs.data().begin() + i * 5, zs.data().begin() + i * 5 + 5);
    expected += KlOracle(a, b, 2.5) / 3.0;
  }
  EXPECT_NEAR(DistillKlLoss(zt, zs, 2.5).item(), expected, 1e-12);
}

TEST(DistillTest, TemperatureScalingIdentity) {
  RngStream rng(7);
  Tensor zt = RandomTensor({4, 5}, rng, 5.0), zs = RandomTensor({4, 5}, rng, 5.0);
  for (double t : {0.5, 2.0, 4.0}) {
    const double lhs = DistillKlLoss(zt, zs, t).item();
    const double rhs =
        t * t * DistillKlLoss(Scale(zt, 1.0 / t), Scale(zs, 1.0 / t), 1.0).item();
    EXPECT_NEAR(lhs, rhs, 1e-10 * std::max(1.0, lhs));
  }
}

TEST(DistillTest, NonNegativeAndZeroOnlyForRowShifts) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    RngStream rng(50 + seed);
    Tensor zt = RandomTensor({3, 4}, rng, 2.0), zs = RandomTensor({3, 4}, rng, 2.0);
    EXPECT_GT(DistillKlLoss(zt, zs, 4.0).item(), 0.0);
    std::vector<double> shifted(zt.data().begin(), zt.data().end());
    for (std::size_t i = 0; i < 3; ++i) {
      const double c = rng.Uniform(-5.0, 5.0);
      for (std::size_t j = 0; j < 4; ++j) shifted[i * 4 + j] += c;
    }
    const double z = DistillKlLoss(zt, Tensor({3, 4}, shifted), 4.0).item();
    // Zero up to rounding.
    EXPECT_LT(std::abs(z), 1e-12);
  }
}

TEST(DistillTest, TeacherReceivesNoGradient) {
  RngStream rng(8);
  Tensor zt = RandomTensor({2, 3}, rng, 1.0, true);
  Tensor zs = RandomTensor({2, 3}, rng, 1.0, true);
  DistillKlLoss(zt, zs, 4.0).backward();
  EXPECT_FALSE(zt.has_grad() &&
               testing::SumSquares(zt.grad()) != 0.0);
  EXPECT_GT(testing::SumSquares(zs.grad()), 0.0);
}

TEST(DistillTest, ShapeMismatchRejected) {
  EXPECT_THROW(DistillKlLoss(Tensor::Zeros({2, 3}), Tensor::Zeros({2, 4}), 1.0),
               DimensionError);
  EXPECT_THROW(DistillKlLoss(Tensor::Zeros({2, 3}), Tensor::Zeros({2, 3}), 0.0),
               ConfigError);
}

TEST(DistillTest, GradientCheck) {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    RngStream rng(60 + seed);
    Tensor zt = RandomTensor({3, 4}, rng, 2.0);
    auto f = [&](const std::vector<Tensor>& in) {
      return DistillKlLoss(zt, in[0], 4.0);
    };
    EXPECT_LT(GradCheck(f, {RandomTensor({3, 4}, rng, 2.0)}).max_rel_error,
              1e-4);
  }
}

std::vector<Tensor> RandomStages(RngStream& rng, std::size_t n) {
  return {RandomTensor({n, 2, 8, 8}, rng), RandomTensor({n, 3, 4, 4}, rng),
          RandomTensor({n, 4, 2, 2}, rng)};
}

TEST(WaveSimTest, IdenticalFeaturesGiveZero) {
  RngStream rng(9);
  auto t = RandomStages(rng, 2);
  EXPECT_EQ(WaveSimLoss(t, t).item(), 0.0);
}

TEST(WaveSimTest, ConstantOffsetClosedForm) {
  RngStream rng(10);
  const std::size_t n = 3;
  auto t = RandomStages(rng, n);
  const double c = 0.7;
  std::vector<Tensor> s;
  for (const Tensor& x : t) {
    std::vector<double> v(x.data().begin(), x.data().end());
    for (double& e : v) e += c;
    s.emplace_back(x.shape(), v);
  }
  double expected = 0.0;
  for (std::size_t k = 0; k < 2; ++k) {
    const double ch = t[k].dim(1), h = t[k].dim(2), w = t[k].dim(3);
    expected += ch * (h / 2) * (w / 2) * (2 * c) * (2 * c);
  }
  // Brute force: LL difference summed over elements, averaged over batch.
  double brute = 0.0;
  for (std::size_t k = 0; k < 2; ++k) {
    Tensor d = Sub(WaveConvDownsample(s[k]), WaveConvDownsample(t[k]));
    brute += testing::SumSquares(d.data()) / double(n);
  }
  const double loss = WaveSimLoss(t, s).item();
  EXPECT_NEAR(loss, expected, 1e-9);
  EXPECT_NEAR(loss, brute, 1e-9);
}

Tensor Checkerboard(const Shape& shape, double v) {
  std::vector<double> out(NumElements(shape));
  const std::size_t h = shape[2], w = shape[3];
  for (std::size_t i = 0; i < out.size(); ++i) {
    const std::size_t y = (i / w) % h, x = i % w;
    out[i] = ((x + y) % 2 == 0) ? v : -v;
  }
  return Tensor(shape, out);
}

TEST(WaveSimTest, CheckerboardHasNoLowPassContent) {
  std::vector<Tensor> t = {Checkerboard({2, 2, 8, 8}, 3.0),
                           Checkerboard({2, 3, 4, 4}, -1.5)};
  std::vector<Tensor> s = {Tensor::Zeros({2, 2, 8, 8}), Tensor::Zeros({2, 3, 4, 4})};
  EXPECT_EQ(WaveSimLoss(t, s).item(), 0.0);
}

TEST(WaveSimTest, InvariantToDetailSignals) {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    RngStream rng(70 + seed);
    auto t = RandomStages(rng, 2), s = RandomStages(rng, 2);
    const double base = WaveSimLoss(t, s).item();
    auto add_detail = [&](std::vector<Tensor> f) {
      for (std::size_t k = 0; k < 2; ++k) {
        Shape half = f[k].shape();
        half[2] /= 2;
        half[3] /= 2;
        Tensor detail = Dwt2Inverse({Tensor::Zeros(half), RandomTensor(half, rng),
                                     RandomTensor(half, rng),
                                     RandomTensor(half, rng)});
        f[k] = Add(f[k], detail);
      }
      return f;
    };
    EXPECT_NEAR(WaveSimLoss(add_detail(t), s).item(), base, 1e-9);
    EXPECT_NEAR(WaveSimLoss(t, add_detail(s)).item(), base, 1e-9);
  }
}

TEST(WaveSimTest, OnlyFirstTwoStagesCount) {
  RngStream rng(11);
  auto t = RandomStages(rng, 2), s = RandomStages(rng, 2);
  const double base = WaveSimLoss(t, s).item();
  s[2] = RandomTensor(s[2].shape(), rng);
  EXPECT_EQ(WaveSimLoss(t, s).item(), base);
}

TEST(WaveSimTest, TeacherReceivesNoGradient) {
  RngStream rng(12);
  auto t = RandomStages(rng, 2), s = RandomStages(rng, 2);
  for (Tensor& x : t) x.set_requires_grad(true);
  for (Tensor& x : s) x.set_requires_grad(true);
  WaveSimLoss(t, s).backward();
  for (const Tensor& x : t) {
    EXPECT_FALSE(x.has_grad() && testing::SumSquares(x.grad()) != 0.0);
  }
  EXPECT_GT(testing::SumSquares(s[0].grad()), 0.0);
}

TEST(WaveSimTest, ShapeErrors) {
  std::vector<Tensor> t = {Tensor::Zeros({1, 2, 4, 4}), Tensor::Zeros({1, 2, 2, 2})};
  std::vector<Tensor> s = {Tensor::Zeros({1, 2, 4, 4}), Tensor::Zeros({1, 3, 2, 2})};
  EXPECT_THROW(WaveSimLoss(t, s), DimensionError);
  std::vector<Tensor> odd = {Tensor::Zeros({1, 2, 3, 3}), Tensor::Zeros({1, 2, 2, 2})};
  EXPECT_THROW(WaveSimLoss(odd, odd), DimensionError);
}

TEST(WaveSimTest, GradientCheck) {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    RngStream rng(80 + seed);
    std::vector<Tensor> t = {RandomTensor({2, 1, 4, 4}, rng),
                             RandomTensor({2, 2, 2, 2}, rng)};
    auto f = [&](const std::vector<Tensor>& in) { return WaveSimLoss(t, in); };
    std::vector<Tensor> s = {RandomTensor({2, 1, 4, 4}, rng),
                             RandomTensor({2, 2, 2, 2}, rng)};
    EXPECT_LT(GradCheck(f, s).max_rel_error, 1e-4);
  }
}

TEST(TotalLossTest, Arithmetic) {
  DistillConfig cfg;
  EXPECT_EQ(cfg.lambda1, 1.0);
  EXPECT_EQ(cfg.lambda2, 0.05);
  EXPECT_EQ(cfg.temperature, 4.0);
  const Tensor arc = Tensor::Scalar(1.0), kd = Tensor::Scalar(2.0),
               ws = Tensor::Scalar(4.0);
  EXPECT_NEAR(TotalLoss(arc, kd, ws, cfg).item(), 3.2, 1e-15);
  cfg.lambda1 = cfg.lambda2 = 0.0;
  EXPECT_EQ(TotalLoss(arc, kd, ws, cfg).item(), 1.0);
  cfg.lambda1 = -1.0;
  EXPECT_THROW(TotalLoss(arc, kd, ws, cfg), ConfigError);
}

TEST(TotalLossTest, GradientIsWeightedSumOfParts) {
  RngStream rng(13);
  Tensor emb = RandomTensor({2, 4}, rng), w = RandomTensor({4, 3}, rng);
  Tensor zt = RandomTensor({2, 3}, rng);
  std::vector<Tensor> teacher = {RandomTensor({2, 4, 2, 2}, rng)};
  Tensor proj = RandomTensor({4, 16}, rng);
  const std::vector<int> labels = {1, 2};
  DistillConfig cfg{4.0, 0.7, 0.05};
  auto parts = [&](const Tensor& p) {
    ArcFaceHead head = MakeHead(w, 8.0, 0.5);
    Tensor e = Linear(emb, p);  // [2,16]
    Tensor e4 = Linear(e, Tensor::Full({16, 4}, 0.1));
    std::vector<Tensor> stages = {Reshape(e, {2, 4, 2, 2})};
    return std::vector<Tensor>{ArcFaceLoss(e4, head, labels),
                               DistillKlLoss(zt, ArcFaceLogits(e4, head), 4.0),
                               WaveSimLoss(teacher, stages, 1)};
  };
  const std::vector<double> weights = {1.0, cfg.lambda1, cfg.lambda2};
  std::vector<double> combined_grad(proj.numel(), 0.0);
  for (int term = 0; term < 3; ++term) {
    Tensor p = proj.clone();
    p.set_requires_grad(true);
    parts(p)[term].backward();
    for (std::size_t i = 0; i < combined_grad.size(); ++i) {
      combined_grad[i] += weights[term] * p.grad()[i];
    }
  }
  Tensor p = proj.clone();
  p.set_requires_grad(true);
  auto l = parts(p);
  TotalLoss(l[0], l[1], l[2], cfg).backward();
  EXPECT_LT(testing::MaxAbsDiff(p.grad(), combined_grad), 1e-12);
}

}  // namespace
}  // namespace wavedistill
