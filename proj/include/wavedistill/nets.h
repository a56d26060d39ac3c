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

// Residual backbones for the teacher (stride-2 convolution downsampling) and
// the student (WaveConv downsampling).
//
//   stem:   conv3x3 -> BN -> PReLU                       (full resolution)
//   stage:  downsample -> BN -> residual block(s)        (halves H and W)
//   head:   global average pool -> linear -> embedding -> ArcFace logits
//
// Teacher downsampling is a k x k stride-2 convolution. The student replaces
// it with the Haar LL subband followed by a k x k stride-1 convolution that
// sets the channel count, so both backbones carry the same parameters.

#ifndef WAVEDISTILL_NETS_H_
#define WAVEDISTILL_NETS_H_

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "wavedistill/losses.h"
#include "wavedistill/ops.h"
#include "wavedistill/tensor.h"

namespace wavedistill {

enum class DownsampleKind { kStrideConv, kWaveConv };

const char* DownsampleKindName(DownsampleKind kind);
DownsampleKind ParseDownsampleKind(const std::string& name);

struct NetworkSpec {
  std::size_t input_size = 32;
  std::size_t in_channels = 1;
  std::vector<std::size_t> channels_per_stage = {16, 32, 64};
  std::vector<std::size_t> blocks_per_stage = {1, 1, 1};
  std::size_t embedding_dim = 64;
  DownsampleKind downsample_kind = DownsampleKind::kStrideConv;
  std::size_t num_classes = 20;
  // Spatial extent of the downsampling convolution (odd).
  std::size_t downsample_kernel = 1;

  void Validate() const;
  NetworkSpec WithKind(DownsampleKind kind) const;
  bool operator==(const NetworkSpec&) const = default;
};

struct StageFeatures {
  std::vector<Tensor> stages;  // one per stage, post-downsample, post-block
  Tensor embedding;            // [N, embedding_dim]
};

using NamedTensor = std::pair<std::string, Tensor>;

struct ForwardOptions {
  Mode mode = Mode::kEval;
  // Replaces every WaveConv by 2 x (2x2 average pooling). Architectural
  // cross-check only.
  bool avgpool_downsample = false;
};

class Model {
 public:
  // Deterministic He fan-in initialization from `seed`.
  static Model Build(const NetworkSpec& spec, std::uint64_t seed);

  Model(Model&&) = default;
  Model& operator=(Model&&) = default;
  Model(const Model&) = delete;
  Model& operator=(const Model&) = delete;

  // x: [N, in_channels, input_size, input_size]. Inputs of any other size
  // are rejected; callers resize beforehand.
  StageFeatures Forward(const Tensor& x, const ForwardOptions& opts);
  StageFeatures Forward(const Tensor& x, Mode mode) {
    return Forward(x, ForwardOptions{mode, false});
  }

  // s * cos(theta) for every class; no margin.
  Tensor Logits(const Tensor& embedding) const {
    return ArcFaceLogits(embedding, head_);
  }

  ArcFaceHead& head() { return head_; }
  const ArcFaceHead& head() const { return head_; }
  const NetworkSpec& spec() const { return spec_; }

  // Trainable tensors in a stable order with stable names.
  std::vector<NamedTensor> Parameters() const;
  // Batch-norm running statistics.
  std::vector<NamedTensor> Buffers() const;
  std::size_t ParameterCount(bool include_head = true) const;
  // FNV-1a over the bit patterns of all parameters and buffers.
  std::uint64_t Checksum() const;
  Model Clone() const;

 private:
  struct Conv {
    Tensor weight;
    std::size_t stride = 1;
    std::size_t padding = 0;
  };
  struct Norm {
    Tensor gamma, beta;
    BatchNormState state;
  };
  struct Block {
    Conv conv1;
    Norm bn1;
    Tensor act1;
    Conv conv2;
    Norm bn2;
    Tensor act_out;
  };
  struct Stage {
    Conv down;
    Norm down_bn;
    std::vector<Block> blocks;
  };

  Model() = default;
  void Register(std::string name, Tensor& t);
  void RegisterNorm(const std::string& name, Norm& n);

  NetworkSpec spec_;
  Conv stem_;
  Norm stem_bn_;
  Tensor stem_act_;
  std::vector<Stage> stages_;
  Tensor embed_;
  ArcFaceHead head_;
  std::vector<NamedTensor> params_;
  std::vector<NamedTensor> buffers_;
};

struct CheckpointMeta {
  std::uint64_t seed = 0;
  std::size_t epoch = 0;
};

// Directory layout: manifest.txt (key = value lines) plus one WDT1 file per
// tensor named "<tensor name>.wdt". `extra` tensors (optimizer state) are
// stored alongside under their own names.
void SaveCheckpoint(const std::filesystem::path& dir, const Model& model,
                    const CheckpointMeta& meta,
                    const std::vector<NamedTensor>& extra = {});

struct LoadedCheckpoint {
  Model model;
  CheckpointMeta meta;
  std::vector<NamedTensor> extra;
};

LoadedCheckpoint LoadCheckpoint(const std::filesystem::path& dir);

}  // namespace wavedistill

#endif  // WAVEDISTILL_NETS_H_
