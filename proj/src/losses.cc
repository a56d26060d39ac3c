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

#include "wavedistill/losses.h"

#include <cmath>
#include <numbers>
#include <string>

#include "wavedistill/errors.h"
#include "wavedistill/ops.h"
#include "wavedistill/wavelet.h"

namespace wavedistill {

void ArcFaceHead::Validate() const {
  if (!weight.defined() || weight.rank() != 2) {
    throw DimensionError("ArcFaceHead: weight must be [D,K]");
  }
  if (!(scale > 0.0)) {
    throw ConfigError("ArcFaceHead: scale must be positive, got " +
                      std::to_string(scale));
  }
  if (!(margin >= 0.0 && margin < std::numbers::pi / 2)) {
    throw ConfigError("ArcFaceHead: margin must lie in [0, pi/2), got " +
                      std::to_string(margin));
  }
}

void DistillConfig::Validate() const {
  if (!(temperature > 0.0)) {
    throw ConfigError("temperature must be positive, got " +
                      std::to_string(temperature));
  }
  if (!(lambda1 >= 0.0) || !(lambda2 >= 0.0)) {
    throw ConfigError("loss weights must be non-negative");
  }
}

Tensor ArcFaceCosines(const Tensor& embeddings, const ArcFaceHead& head) {
  head.Validate();
  return Linear(L2Normalize(embeddings, 1), L2Normalize(head.weight, 0));
}

Tensor ArcFaceLogits(const Tensor& embeddings, const ArcFaceHead& head) {
  return Scale(ArcFaceCosines(embeddings, head), head.scale);
}

Tensor ArcFaceLoss(const Tensor& embeddings, const ArcFaceHead& head,
                   std::span<const int> labels) {
  if (embeddings.rank() != 2 || embeddings.dim(0) == 0) {
    throw DimensionError("ArcFaceLoss: embeddings must be [N,D], got " +
                         ShapeToString(embeddings.shape()));
  }
  const Tensor cosines = ArcFaceCosines(embeddings, head);
  const Tensor logits =
      Scale(AngularMargin(cosines, labels, head.margin), head.scale);
  return CrossEntropy(logits, labels);
}

Tensor DistillKlLoss(const Tensor& teacher_logits,
                     const Tensor& student_logits, double temperature) {
  if (teacher_logits.shape() != student_logits.shape() ||
      teacher_logits.rank() != 2) {
    throw DimensionError("DistillKlLoss: logits shapes " +
                         ShapeToString(teacher_logits.shape()) + " and " +
                         ShapeToString(student_logits.shape()) +
                         " must be equal [N,K]");
  }
  if (!(temperature > 0.0)) {
    throw ConfigError("DistillKlLoss: temperature must be positive");
  }
  const double inv_t = 1.0 / temperature;
  const std::size_t n = teacher_logits.dim(0);
  Tensor teacher_log_p;
  Tensor teacher_p;
  {
    NoGradGuard no_grad;
    const Tensor zt = Scale(teacher_logits.detach(), inv_t);
    teacher_log_p = LogSoftmax(zt);
    teacher_p = Softmax(zt);
  }
  const Tensor student_log_q = LogSoftmax(Scale(student_logits, inv_t));
  const Tensor kl = Sum(Mul(teacher_p, Sub(teacher_log_p, student_log_q)));
  return Scale(kl, temperature * temperature / static_cast<double>(n));
}

Tensor WaveSimLoss(std::span<const Tensor> teacher_stages,
                   std::span<const Tensor> student_stages,
                   std::size_t num_stages) {
  if (teacher_stages.size() < num_stages ||
      student_stages.size() < num_stages || num_stages == 0) {
    throw DimensionError("WaveSimLoss: need " + std::to_string(num_stages) +
                         " stage features from each network");
  }
  Tensor total;
  for (std::size_t k = 0; k < num_stages; ++k) {
    const Tensor& t = teacher_stages[k];
    const Tensor& s = student_stages[k];
    if (t.shape() != s.shape()) {
      throw DimensionError("WaveSimLoss: stage " + std::to_string(k + 1) +
                           " shapes differ: teacher " +
                           ShapeToString(t.shape()) + " vs student " +
                           ShapeToString(s.shape()));
    }
    const Tensor diff =
        Sub(WaveConvDownsample(t.detach()), WaveConvDownsample(s));
    const Tensor term = Sum(Square(diff));
    total = total.defined() ? Add(total, term) : term;
  }
  return Scale(total, 1.0 / static_cast<double>(teacher_stages[0].dim(0)));
}

Tensor TotalLoss(const Tensor& arc, const Tensor& distill,
                 const Tensor& wavesim, const DistillConfig& cfg) {
  cfg.Validate();
  for (const Tensor* t : {&arc, &distill, &wavesim}) {
    if (t->numel() != 1) {
      throw DimensionError("TotalLoss: components must be scalars, got " +
                           ShapeToString(t->shape()));
    }
  }
  return Add(Add(arc, Scale(distill, cfg.lambda1)),
             Scale(wavesim, cfg.lambda2));
}

}  // namespace wavedistill
