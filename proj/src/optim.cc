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

#include "wavedistill/optim.h"

#include <string>

#include "wavedistill/errors.h"

namespace wavedistill {

Sgd::Sgd(std::vector<Tensor> params, double learning_rate, double momentum)
    : params_(std::move(params)), momentum_(momentum) {
  set_learning_rate(learning_rate);
  if (!(momentum >= 0.0 && momentum < 1.0)) {
    throw ConfigError("Sgd: momentum must lie in [0, 1), got " +
                      std::to_string(momentum));
  }
  velocities_.reserve(params_.size());
  for (const Tensor& p : params_) {
    if (!p.is_leaf() || !p.requires_grad()) {
      throw GraphError("Sgd: parameter '" + p.name() +
                       "' must be a leaf that requires grad");
    }
    velocities_.push_back(Tensor::Zeros(p.shape()));
  }
}

void Sgd::set_learning_rate(double lr) {
  if (!(lr >= 0.0)) {
    throw ConfigError("Sgd: learning rate must be non-negative, got " +
                      std::to_string(lr));
  }
  learning_rate_ = lr;
}

void Sgd::Step() {
  for (const Tensor& p : params_) {
    if (!p.has_grad()) {
      throw GraphError("Sgd: parameter '" + p.name() + "' has no gradient");
    }
  }
  for (std::size_t i = 0; i < params_.size(); ++i) {
    auto g = params_[i].grad();
    CheckFinite(g, params_[i].name().c_str());
    auto v = velocities_[i].mutable_data();
    auto p = params_[i].mutable_data();
    for (std::size_t j = 0; j < p.size(); ++j) {
      v[j] = momentum_ * v[j] + g[j];
      p[j] -= learning_rate_ * v[j];
    }
    params_[i].zero_grad();
  }
}

void Sgd::ZeroGrad() {
  for (Tensor& p : params_) p.zero_grad();
}

}  // namespace wavedistill
