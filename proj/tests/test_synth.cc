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
#include <map>
#include <numbers>
#include <set>
#include <string>
#include <vector>

#include <gtest/gtest.h>

#include "test_util.h"
#include "wavedistill/degrade.h"
#include "wavedistill/errors.h"
#include "wavedistill/synth.h"
#include "wavedistill/wavelet.h"

namespace wavedistill {
namespace {

using testing::SumSquares;

// Coefficients of an S x S image in the cosine modes the generator uses,
// i.e. the DFT of the mirrored 2S x 2S extension. coef[u * S + v].
std::vector<double> CosineSpectrum(std::span<const double> img, std::size_t s) {
  std::vector<double> basis(s * s);
  for (std::size_t u = 0; u < s; ++u)
    for (std::size_t t = 0; t < s; ++t) {
      const double cu = u == 0 ? std::sqrt(1.0 / s) : std::sqrt(2.0 / s);
      basis[u * s + t] = cu * std::cos(std::numbers::pi * u * (t + 0.5) / s);
    }
  std::vector<double> tmp(s * s, 0.0), out(s * s, 0.0);
  for (std::size_t y = 0; y < s; ++y)
    for (std::size_t v = 0; v < s; ++v)
      for (std::size_t x = 0; x < s; ++x)
        tmp[y * s + v] += basis[v * s + x] * img[y * s + x];
  for (std::size_t u = 0; u < s; ++u)
    for (std::size_t v = 0; v < s; ++v)
      for (std::size_t y = 0; y < s; ++y)
        out[u * s + v] += basis[u * s + y] * tmp[y * s + v];
  return out;
}

double BandEnergy(const std::vector<double>& spec, std::size_t s,
                  std::size_t lo, std::size_t hi) {
  double e = 0.0;
  for (std::size_t u = lo; u < hi; ++u)
    for (std::size_t v = lo; v < hi; ++v) e += spec[u * s + v] * spec[u * s + v];
  return e;
}

SynthSpec SmallSpec() {
  SynthSpec s;
  s.num_identities = 5;
  s.samples_per_identity = 10;
  s.seed = 3;
  return s;
}

TEST(SynthSpecTest, Validation) {
  SynthSpec s;
  EXPECT_NO_THROW(s.Validate());
  s.image_size = 30;
  EXPECT_THROW(s.Validate(), ConfigError);
  s = {};
  s.basis_order = 9;
  EXPECT_THROW(s.Validate(), ConfigError);
  s = {};
  s.texture_amplitude = {5.0, 1.0};
  EXPECT_THROW(s.Validate(), ConfigError);
  s = {};
  s.train_fraction = 1.0;
  EXPECT_THROW(s.Validate(), ConfigError);
}

TEST(GenerateDatasetTest, DefaultShapeAndDeterminism) {
  SynthSpec spec;
  spec.seed = 11;
  Dataset a = GenerateDataset(spec), b = GenerateDataset(spec);
  EXPECT_EQ(a.images.shape(), (Shape{1200, 1, 32, 32}));
  EXPECT_EQ(a.size(), 1200u);
  for (std::size_t i = 0; i < a.images.numel(); ++i) {
    ASSERT_EQ(a.images.data()[i], b.images.data()[i]);
  }
  EXPECT_EQ(a.labels, b.labels);
  EXPECT_EQ(a.train_indices, b.train_indices);
  spec.seed = 12;
  Dataset c = GenerateDataset(spec);
  EXPECT_GT(testing::MaxAbsDiff(a.images.data(), c.images.data()), 0.0);
}

TEST(GenerateDatasetTest, PixelsAreBytes) {
  Dataset ds = GenerateDataset(SmallSpec());
  for (double v : ds.images.data()) {
    ASSERT_EQ(v, std::nearbyint(v));
    ASSERT_GE(v, 0.0);
    ASSERT_LE(v, 255.0);
  }
}

TEST(GenerateDatasetTest, StratifiedSplit) {
  Dataset ds = GenerateDataset(SynthSpec{});
  EXPECT_EQ(ds.train_indices.size(), 960u);
  EXPECT_EQ(ds.eval_indices.size(), 240u);
  std::map<int, std::size_t> train_per_id, eval_per_id;
  for (std::size_t i : ds.train_indices) ++train_per_id[ds.labels[i]];
  for (std::size_t i : ds.eval_indices) ++eval_per_id[ds.labels[i]];
  for (int id = 0; id < 20; ++id) {
    EXPECT_EQ(train_per_id[id], 48u);
    EXPECT_EQ(eval_per_id[id], 12u);
  }
  std::set<std::size_t> all(ds.train_indices.begin(), ds.train_indices.end());
  for (std::size_t i : ds.eval_indices) EXPECT_TRUE(all.insert(i).second);
  EXPECT_EQ(all.size(), 1200u);
}

TEST(GenerateDatasetTest, NuisanceFreeImagesOfOneIdentityAgree) {
  SynthSpec spec = SmallSpec();
  spec.contrast_jitter = 0.0;
  spec.max_shift = 0.0;
  spec.texture_amplitude = {0.0, 0.0};
  Dataset ds = GenerateDataset(spec);
  for (std::size_t i = 0; i < ds.size(); ++i) {
    const std::size_t first = std::size_t(ds.labels[i]) * spec.samples_per_identity;
    EXPECT_EQ(testing::MaxAbsDiff(ds.Image(i).data(), ds.Image(first).data()), 0.0);
  }
  // With translation on, nuisance-free images still carry only identity
  // modes: they equal the shifted identity component.
  Nuisance n{1.0, 0.75, -1.25, 0.0};
  Tensor shifted = IdentityComponent(spec, ds.identity_codes[0], n);
  Tensor back = IdentityComponent(spec, ds.identity_codes[0], Nuisance{});
  EXPECT_GT(testing::MaxAbsDiff(shifted.data(), back.data()), 0.0);
  EXPECT_NEAR(SumSquares(shifted.data()), SumSquares(back.data()),
              0.05 * SumSquares(back.data()));
}

TEST(IdentityCodesTest, UnitNormAndSeparated) {
  SynthSpec spec;
  RngStream rng(5);
  auto codes = DrawIdentityCodes(spec, rng);
  ASSERT_EQ(codes.size(), 20u);
  for (std::size_t a = 0; a < codes.size(); ++a) {
    EXPECT_NEAR(SumSquares(codes[a]), 1.0, 1e-12);
    for (std::size_t b = a + 1; b < codes.size(); ++b) {
      double d2 = 0.0;
      for (std::size_t k = 0; k < 16; ++k) {
        d2 += (codes[a][k] - codes[b][k]) * (codes[a][k] - codes[b][k]);
      }
      EXPECT_GT(std::sqrt(d2), 0.5);
    }
  }
}

TEST(IdentityCodesTest, CrowdedIdentitiesFail) {
  SynthSpec spec;
  spec.basis_order = 1;  // codes are +-1
  spec.num_identities = 3;
  RngStream rng(6);
  try {
    DrawIdentityCodes(spec, rng);
    FAIL() << "expected ConfigError";
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("fewer identities"), std::string::npos);
  }
}

TEST(IdentityComponentTest, LowPassEnergyFraction) {
  SynthSpec spec;
  RngStream rng(7);
  auto codes = DrawIdentityCodes(spec, rng);
  for (const auto& code : codes) {
    Nuisance n{1.0, rng.Uniform(-1.5, 1.5), rng.Uniform(-1.5, 1.5), 0.0};
    Tensor id = IdentityComponent(spec, code, n);
    WaveletSubbands s = Dwt2Forward(Reshape(id, {1, 1, 32, 32}));
    EXPECT_GT(SumSquares(s.ll.data()) / SumSquares(id.data()), 0.9);
  }
}

TEST(TextureComponentTest, RmsAndBandConfinement) {
  SynthSpec spec;
  RngStream rng(8);
  for (double rms : {5.0, 20.0}) {
    Tensor tex = TextureComponent(spec, Nuisance{1.0, 0.0, 0.0, rms}, rng);
    EXPECT_NEAR(std::sqrt(SumSquares(tex.data()) / 1024.0), rms, 1e-9);
    auto c = CosineSpectrum(tex.data(), 32);
    const double total = SumSquares(c);
    EXPECT_NEAR(BandEnergy(c, 32, 8, 32) / total, 1.0, 1e-12);
    EXPECT_LT(BandEnergy(c, 32, 0, 4), 1e-18 * total + 1e-20);
  }
}

TEST(SynthPremiseTest, LowResolutionKeepsIdentityAndDropsTexture) {
  SynthSpec spec;
  RngStream rng(9);
  auto codes = DrawIdentityCodes(spec, rng);
  double id_before = 0, id_after = 0, tex_before = 0, tex_after = 0;
  for (std::size_t k = 0; k < codes.size(); ++k) {
    Nuisance n{1.0, 0.0, 0.0, 20.0};
    Tensor id = IdentityComponent(spec, codes[k], n);
    Tensor tex = TextureComponent(spec, n, rng);
    auto a = CosineSpectrum(id.data(), 32);
    auto b = CosineSpectrum(EvalDownsample(id, 8).data(), 32);
    id_before += BandEnergy(a, 32, 0, 4);
    id_after += BandEnergy(b, 32, 0, 4);
    auto c = CosineSpectrum(tex.data(), 32);
    auto d = CosineSpectrum(EvalDownsample(tex, 8).data(), 32);
    tex_before += BandEnergy(c, 32, 8, 32);
    tex_after += BandEnergy(d, 32, 8, 32);
  }
  EXPECT_GT(id_after / id_before, 0.7);
  EXPECT_LT(tex_after / tex_before, 0.1);
}

TEST(SynthPremiseTest, NearestCentroidOnLowPassCoefficients) {
  Dataset ds = GenerateDataset(SynthSpec{});
  auto ll8 = [&](std::size_t i) {
    Tensor x = Reshape(ds.Image(i), {1, 1, 32, 32});
    Tensor ll = WaveConvDownsample(WaveConvDownsample(x));
    return std::vector<double>(ll.data().begin(), ll.data().end());
  };
  std::vector<std::vector<double>> centroid(20, std::vector<double>(64, 0.0));
  std::vector<std::size_t> count(20, 0);
  for (std::size_t i : ds.train_indices) {
    auto f = ll8(i);
    for (std::size_t k = 0; k < 64; ++k) centroid[ds.labels[i]][k] += f[k];
    ++count[ds.labels[i]];
  }
  for (std::size_t id = 0; id < 20; ++id)
    for (double& v : centroid[id]) v /= double(count[id]);
  std::size_t correct = 0;
  for (std::size_t i : ds.train_indices) {
    auto f = ll8(i);
    double best = INFINITY;
    int arg = -1;
    for (int id = 0; id < 20; ++id) {
      double d = 0.0;
      for (std::size_t k = 0; k < 64; ++k) {
        d += (f[k] - centroid[id][k]) * (f[k] - centroid[id][k]);
      }
      if (d < best) {
        best = d;
        arg = id;
      }
    }
    correct += arg == ds.labels[i];
  }
  EXPECT_GT(double(correct) / double(ds.train_indices.size()), 0.95);
}

TEST(ProtocolTest, EnumerationOfTwoByTwo) {
  const std::vector<int> labels = {0, 0, 1, 1};
  const std::vector<std::size_t> members = {0, 1, 2, 3};
  CandidatePairs c = EnumeratePairs(labels, members);
  using P = std::pair<std::size_t, std::size_t>;
  EXPECT_EQ(c.genuine, (std::vector<P>{{0, 1}, {2, 3}}));
  EXPECT_EQ(c.impostor, (std::vector<P>{{0, 2}, {0, 3}, {1, 2}, {1, 3}}));
}

TEST(ProtocolTest, FoldsDisjointAndBalanced) {
  Dataset ds = GenerateDataset(SynthSpec{});
  VerificationProtocol p = BuildProtocol(ds.labels, ds.eval_indices, 21);
  // 240 eval images, 12 per identity: 20 * 66 = 1320 genuine candidates.
  EXPECT_EQ(p.pairs.size(), 2640u);
  std::set<std::pair<std::size_t, std::size_t>> seen;
  std::vector<std::size_t> genuine(10, 0), total(10, 0);
  std::set<std::size_t> eval(ds.eval_indices.begin(), ds.eval_indices.end());
  for (const VerificationPair& q : p.pairs) {
    ASSERT_LT(q.fold, 10u);
    EXPECT_NE(q.probe, q.gallery);
    EXPECT_TRUE(eval.count(q.probe) && eval.count(q.gallery));
    EXPECT_EQ(q.same, ds.labels[q.probe] == ds.labels[q.gallery]);
    const auto key = std::minmax(q.probe, q.gallery);
    EXPECT_TRUE(seen.insert(key).second) << "pair reused across folds";
    genuine[q.fold] += q.same;
    ++total[q.fold];
  }
  for (std::size_t f = 0; f < 10; ++f) {
    EXPECT_EQ(2 * genuine[f], total[f]);
    EXPECT_EQ(total[f], 264u);
  }
}

TEST(ProtocolTest, DeterministicFromSeed) {
  Dataset ds = GenerateDataset(SmallSpec());
  auto a = BuildProtocol(ds.labels, 4), b = BuildProtocol(ds.labels, 4);
  auto c = BuildProtocol(ds.labels, 5);
  ASSERT_EQ(a.pairs.size(), b.pairs.size());
  bool differs = false;
  for (std::size_t i = 0; i < a.pairs.size(); ++i) {
    EXPECT_EQ(a.pairs[i].probe, b.pairs[i].probe);
    EXPECT_EQ(a.pairs[i].gallery, b.pairs[i].gallery);
    EXPECT_EQ(a.pairs[i].fold, b.pairs[i].fold);
    differs |= a.pairs[i].probe != c.pairs[i].probe ||
               a.pairs[i].gallery != c.pairs[i].gallery;
  }
  EXPECT_TRUE(differs);
}

TEST(ProtocolTest, Errors) {
  const std::vector<int> one_id(10, 0);
  EXPECT_THROW(BuildProtocol(one_id, 1), ConfigError);
  const std::vector<int> tiny = {0, 0, 1, 1};
  EXPECT_THROW(BuildProtocol(tiny, 1), ConfigError);
  const std::vector<int> labels = GenerateDataset(SmallSpec()).labels;
  EXPECT_THROW(BuildProtocol(labels, 1, 1000), ConfigError);
  EXPECT_NO_THROW(BuildProtocol(labels, 1, 3));
}

TEST(DatasetIoTest, RoundTrip) {
  SynthSpec spec = SmallSpec();
  Dataset ds = GenerateDataset(spec);
  VerificationProtocol p = BuildProtocol(ds.labels, 2);
  auto dir = testing::TempDir("synth_io");
  SaveDataset(dir, ds, p);
  EXPECT_TRUE(std::filesystem::exists(dir / "images" / "img_00049.pgm"));
  std::ifstream labels(dir / "labels.csv"), pairs(dir / "pairs.csv");
  std::string line;
  std::getline(labels, line);
  EXPECT_EQ(line, "filename,identity,split");
  std::getline(pairs, line);
  EXPECT_EQ(line, "probe,gallery,same,fold");

  StoredDataset back = LoadDataset(dir);
  EXPECT_EQ(back.data.labels, ds.labels);
  EXPECT_EQ(back.data.train_indices, ds.train_indices);
  EXPECT_EQ(back.data.eval_indices, ds.eval_indices);
  EXPECT_EQ(back.data.num_identities, ds.num_identities);
  EXPECT_EQ(testing::MaxAbsDiff(back.data.images.data(), ds.images.data()), 0.0);
  ASSERT_EQ(back.protocol.pairs.size(), p.pairs.size());
  for (std::size_t i = 0; i < p.pairs.size(); ++i) {
    EXPECT_EQ(back.protocol.pairs[i].probe, p.pairs[i].probe);
    EXPECT_EQ(back.protocol.pairs[i].gallery, p.pairs[i].gallery);
    EXPECT_EQ(back.protocol.pairs[i].same, p.pairs[i].same);
    EXPECT_EQ(back.protocol.pairs[i].fold, p.pairs[i].fold);
  }
  std::filesystem::remove(dir / "pairs.csv");
  EXPECT_THROW(LoadDataset(dir), IoError);
}

}  // namespace
}  // namespace wavedistill
