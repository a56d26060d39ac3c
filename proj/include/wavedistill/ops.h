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

// Differentiable tensor operations. All of them record onto the tape when an
// input requires a gradient and recording is enabled.

#ifndef WAVEDISTILL_OPS_H_
#define WAVEDISTILL_OPS_H_

#include <cstddef>
#include <span>

#include "wavedistill/tensor.h"

namespace wavedistill {

// Elementwise, identical shapes required.
Tensor Add(const Tensor& a, const Tensor& b);
Tensor Sub(const Tensor& a, const Tensor& b);
Tensor Mul(const Tensor& a, const Tensor& b);
Tensor Scale(const Tensor& a, double factor);
Tensor Square(const Tensor& a);

Tensor Sum(const Tensor& a);
Tensor Mean(const Tensor& a);
Tensor Reshape(const Tensor& a, const Shape& shape);

// Cross-correlation of input [N,C,H,W] with kernel [F,C,kh,kw], zero padding.
Tensor Conv2d(const Tensor& input, const Tensor& kernel, std::size_t stride,
              std::size_t padding);

// input [N,D] times weight [D,K].
Tensor Linear(const Tensor& input, const Tensor& weight);

// slope has shape [1] or [C] where C = input.dim(1). The derivative at
// exactly zero takes the positive branch.
Tensor PRelu(const Tensor& input, const Tensor& slope);

enum class Mode { kTrain, kEval };

// Running statistics owned by a batch-norm layer. Not part of the graph.
struct BatchNormState {
  Tensor running_mean;
  Tensor running_var;  // unbiased estimate
  double momentum = 0.1;
  double eps = 1e-5;

  static BatchNormState ForChannels(std::size_t channels);
};

// Per-channel normalization of [N,C,H,W] (or [N,C]). In kTrain mode batch
// statistics are used and the running estimates updated; kEval uses the
// running estimates.
Tensor BatchNorm(const Tensor& input, const Tensor& gamma, const Tensor& beta,
                 BatchNormState& state, Mode mode);

// [N,C,H,W] -> [N,C].
Tensor GlobalAvgPool(const Tensor& input);

// 2x2 mean, stride 2.
Tensor AvgPool2x2(const Tensor& input);

// Row-wise over [N,K].
Tensor LogSoftmax(const Tensor& logits);
Tensor Softmax(const Tensor& logits);

// Mean negative log-likelihood of labels under softmax(logits).
Tensor CrossEntropy(const Tensor& logits, std::span<const int> labels);

// Unit L2 norm along rows (axis 1, each row a vector) or columns (axis 0) of
// a rank-2 tensor. A zero vector is an error.
Tensor L2Normalize(const Tensor& input, int axis);

// Replaces each target cosine c = cos(theta) in cosines [N,K] with
// cos(theta + margin). c is clamped to [-1, 1] before arccos and the
// derivative is zero where |c| >= 1 - eps. When theta + margin would exceed
// pi the monotone surrogate c - margin*sin(margin) is used. Non-target
// entries pass through.
Tensor AngularMargin(const Tensor& cosines, std::span<const int> labels,
                     double margin);

}  // namespace wavedistill

#endif  // WAVEDISTILL_OPS_H_
