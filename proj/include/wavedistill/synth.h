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

// Synthetic identity images whose identity lives in the lowest 2D cosine
// modes, plus an LFW-style 10-fold verification protocol.
//
// Each image is
//   round(clamp(128 + 100 * contrast * sum_{u,v<B} c_uv phi_u(x-dx) phi_v(y-dy)
//               + texture, 0, 255))
// with phi_u(t) = cos(pi * u * (t + 0.5) / S), a unit-norm identity code c,
// per-sample contrast, sub-pixel shift and a texture made only of modes with
// u, v >= S/4.

#ifndef WAVEDISTILL_SYNTH_H_
#define WAVEDISTILL_SYNTH_H_

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <utility>
#include <vector>

#include "wavedistill/rng.h"
#include "wavedistill/tensor.h"

namespace wavedistill {

struct SynthSpec {
  std::size_t num_identities = 20;
  std::size_t samples_per_identity = 60;
  std::size_t image_size = 32;
  std::size_t basis_order = 4;
  double contrast_jitter = 0.2;
  double max_shift = 1.5;
  std::array<double, 2> texture_amplitude = {10.0, 30.0};  // RMS gray levels
  double min_identity_distance = 0.5;
  double train_fraction = 0.8;
  std::uint64_t seed = 0;

  void Validate() const;
  bool operator==(const SynthSpec&) const = default;
};

struct Dataset {
  Tensor images;            // [M, 1, S, S], integer gray levels
  std::vector<int> labels;  // identity per image
  std::vector<std::size_t> train_indices;
  std::vector<std::size_t> eval_indices;
  std::vector<std::vector<double>> identity_codes;  // B*B coefficients each
  std::size_t num_identities = 0;

  std::size_t size() const { return labels.size(); }
  std::size_t image_size() const { return images.dim(2); }
  // [1, S, S] copy of image i.
  Tensor Image(std::size_t i) const;
  // [n, 1, S, S] copy of the listed images.
  Tensor Batch(std::span<const std::size_t> indices) const;
};

// Per-sample nuisance draws.
struct Nuisance {
  double contrast = 1.0;
  double dx = 0.0;
  double dy = 0.0;
  double texture_rms = 0.0;
};

// 100 * contrast * sum c_uv phi_u phi_v, no offset, as [1, S, S].
Tensor IdentityComponent(const SynthSpec& spec, std::span<const double> code,
                         const Nuisance& n);
// Texture with RMS n.texture_rms drawn from `rng`, as [1, S, S].
Tensor TextureComponent(const SynthSpec& spec, const Nuisance& n,
                        RngStream& rng);

// Unit-norm identity codes with pairwise distance above the configured
// minimum. Throws ConfigError after 1e5 rejected draws.
std::vector<std::vector<double>> DrawIdentityCodes(const SynthSpec& spec,
                                                   RngStream& rng);

Dataset GenerateDataset(const SynthSpec& spec);

struct VerificationPair {
  std::size_t probe = 0;
  std::size_t gallery = 0;
  bool same = false;
  std::size_t fold = 0;
};

struct VerificationProtocol {
  static constexpr std::size_t kFolds = 10;
  std::vector<VerificationPair> pairs;
};

struct CandidatePairs {
  std::vector<std::pair<std::size_t, std::size_t>> genuine;
  std::vector<std::pair<std::size_t, std::size_t>> impostor;
};

// Every unordered pair (i < j) of `members`, split by identity match.
CandidatePairs EnumeratePairs(std::span<const int> labels,
                              std::span<const std::size_t> members);

// Balanced genuine/impostor pairs in 10 disjoint folds drawn from `members`
// (indices into `labels`). genuine_per_fold == 0 uses as many as the
// candidates allow.
VerificationProtocol BuildProtocol(std::span<const int> labels,
                                   std::span<const std::size_t> members,
                                   std::uint64_t seed,
                                   std::size_t genuine_per_fold = 0);
VerificationProtocol BuildProtocol(std::span<const int> labels,
                                   std::uint64_t seed,
                                   std::size_t genuine_per_fold = 0);

// On-disk layout of a dataset directory:
//   images/img_00000.pgm ...        one 8-bit PGM per image
//   labels.csv   filename,identity,split    (split is "train" or "eval")
//   pairs.csv    probe,gallery,same,fold    (filenames, same in {0,1})
void SaveDataset(const std::filesystem::path& dir, const Dataset& data,
                 const VerificationProtocol& protocol);

struct StoredDataset {
  Dataset data;
  VerificationProtocol protocol;
};

// Throws IoError naming the missing or malformed file.
StoredDataset LoadDataset(const std::filesystem::path& dir);

}  // namespace wavedistill

#endif  // WAVEDISTILL_SYNTH_H_
