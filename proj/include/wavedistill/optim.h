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

#ifndef WAVEDISTILL_OPTIM_H_
#define WAVEDISTILL_OPTIM_H_

#include <vector>

#include "wavedistill/tensor.h"

namespace wavedistill {

// Heavy-ball SGD:  v <- momentum * v + g;  p <- p - lr * v.
class Sgd {
 public:
  Sgd(std::vector<Tensor> params, double learning_rate, double momentum);

  // Applies one update and zeroes the gradients. Throws GraphError naming
  // the first parameter without a gradient.
  void Step();
  void ZeroGrad();

  double learning_rate() const { return learning_rate_; }
  void set_learning_rate(double lr);
  double momentum() const { return momentum_; }

  const std::vector<Tensor>& params() const { return params_; }
  // One buffer per parameter, same shapes; exposed for checkpointing.
  std::vector<Tensor>& velocities() { return velocities_; }
  const std::vector<Tensor>& velocities() const { return velocities_; }

 private:
  std::vector<Tensor> params_;
  std::vector<Tensor> velocities_;
  double learning_rate_;
  double momentum_;
};

}  // namespace wavedistill

#endif  // WAVEDISTILL_OPTIM_H_
