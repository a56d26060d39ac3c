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

// Training objectives for cross-resolution distillation:
//   recognition    additive angular margin softmax (ArcFace)
//   distillation   T^2 * KL(softmax(z_hr / T) || softmax(z_lr / T))
//   wavelet sim.   sum over stages of ||LL(teacher) - LL(student)||^2
//   total          arc + lambda1 * distill + lambda2 * wavesim

#ifndef WAVEDISTILL_LOSSES_H_
#define WAVEDISTILL_LOSSES_H_

#include <cstddef>
#include <span>

#include "wavedistill/tensor.h"

namespace wavedistill {

struct ArcFaceHead {
  Tensor weight;  // [embedding_dim, num_classes]; columns normalized at use
  double scale = 64.0;
  double margin = 0.5;

  std::size_t num_classes() const { return weight.dim(1); }
  void Validate() const;
};

struct DistillConfig {
  double temperature = 4.0;
  double lambda1 = 1.0;
  double lambda2 = 0.05;

  void Validate() const;
  bool operator==(const DistillConfig&) const = default;
};

// cos(theta_j) between L2-normalized embeddings [N,D] and head columns.
Tensor ArcFaceCosines(const Tensor& embeddings, const ArcFaceHead& head);

// s * cos(theta_j) without margin; the logits used for distillation.
Tensor ArcFaceLogits(const Tensor& embeddings, const ArcFaceHead& head);

Tensor ArcFaceLoss(const Tensor& embeddings, const ArcFaceHead& head,
                   std::span<const int> labels);

// Mean over rows of T^2 * KL(p_teacher || p_student). The teacher logits
// are treated as constants.
Tensor DistillKlLoss(const Tensor& teacher_logits,
                     const Tensor& student_logits, double temperature);

// Sum of squared LL-subband differences over the first `num_stages` stage
// features, summed over elements and averaged over the batch. Teacher
// features are treated as constants.
Tensor WaveSimLoss(std::span<const Tensor> teacher_stages,
                   std::span<const Tensor> student_stages,
                   std::size_t num_stages = 2);

Tensor TotalLoss(const Tensor& arc, const Tensor& distill,
                 const Tensor& wavesim, const DistillConfig& cfg);

}  // namespace wavedistill

#endif  // WAVEDISTILL_LOSSES_H_
