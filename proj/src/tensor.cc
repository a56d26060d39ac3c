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

#include "wavedistill/tensor.h"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <unordered_map>
#include <unordered_set>
#include <utility>

#include "wavedistill/errors.h"

namespace wavedistill {
namespace {

thread_local bool g_grad_enabled = true;

}  // namespace

std::size_t NumElements(const Shape& shape) {
  std::size_t n = 1;
  for (std::size_t e : shape) n *= e;
  return n;
}

std::string ShapeToString(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ',';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

void CheckFinite(std::span<const double> values, const char* what) {
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (!std::isfinite(values[i])) {
      std::ostringstream os;
      os << what << ": non-finite value " << values[i] << " at flat index "
         << i;
      throw NumericError(os.str());
    }
  }
}

Tensor::Tensor(Shape shape, std::vector<double> data)
    : impl_(std::make_shared<TensorImpl>()) {
  for (std::size_t e : shape) {
    if (e == 0) {
      throw DimensionError("tensor extents must be positive, got " +
                           ShapeToString(shape));
    }
  }
  if (NumElements(shape) != data.size()) {
    throw DimensionError("shape " + ShapeToString(shape) + " needs " +
                         std::to_string(NumElements(shape)) +
                         " values, got " + std::to_string(data.size()));
  }
  CheckFinite(data, "Tensor");
  impl_->shape = std::move(shape);
  impl_->data = std::move(data);
}

Tensor Tensor::Zeros(const Shape& shape) {
  return Tensor(shape, std::vector<double>(NumElements(shape), 0.0));
}

Tensor Tensor::Full(const Shape& shape, double value) {
  return Tensor(shape, std::vector<double>(NumElements(shape), value));
}

Tensor Tensor::Scalar(double value) { return Tensor(Shape{}, {value}); }

const Shape& Tensor::shape() const {
  if (!impl_) throw GraphError("use of undefined tensor");
  return impl_->shape;
}

std::size_t Tensor::dim(std::size_t axis) const {
  const Shape& s = shape();
  if (axis >= s.size()) {
    throw DimensionError("axis " + std::to_string(axis) +
                         " out of range for shape " + ShapeToString(s));
  }
  return s[axis];
}

std::size_t Tensor::numel() const { return NumElements(shape()); }

std::span<const double> Tensor::data() const {
  shape();
  return impl_->data;
}

std::span<double> Tensor::mutable_data() {
  shape();
  return impl_->data;
}

double Tensor::item() const {
  if (numel() != 1) {
    throw DimensionError("item() on tensor of shape " +
                         ShapeToString(shape()));
  }
  return impl_->data[0];
}

double Tensor::at(std::initializer_list<std::size_t> index) const {
  const Shape& s = shape();
  if (index.size() != s.size()) {
    throw DimensionError("index rank mismatch for shape " + ShapeToString(s));
  }
  std::size_t flat = 0;
  std::size_t axis = 0;
  for (std::size_t i : index) {
    if (i >= s[axis]) throw DimensionError("index out of range");
    flat = flat * s[axis] + i;
    ++axis;
  }
  return impl_->data[flat];
}

bool Tensor::requires_grad() const { return impl_ && impl_->requires_grad; }

Tensor& Tensor::set_requires_grad(bool value) {
  shape();
  if (impl_->grad_fn && !value) {
    throw GraphError("cannot disable gradients on a non-leaf tensor");
  }
  impl_->requires_grad = value;
  return *this;
}

bool Tensor::is_leaf() const { return impl_ && !impl_->grad_fn; }

bool Tensor::has_grad() const { return impl_ && !impl_->grad.empty(); }

std::span<const double> Tensor::grad() const {
  if (!has_grad()) {
    throw GraphError("tensor '" + name() + "' has no gradient");
  }
  return impl_->grad;
}

std::span<double> Tensor::mutable_grad() {
  shape();
  if (impl_->grad.empty()) impl_->grad.assign(impl_->data.size(), 0.0);
  return impl_->grad;
}

void Tensor::zero_grad() {
  if (has_grad()) std::fill(impl_->grad.begin(), impl_->grad.end(), 0.0);
}

void Tensor::clear_grad() {
  if (impl_) {
    impl_->grad.clear();
    impl_->grad.shrink_to_fit();
  }
}

const std::string& Tensor::name() const {
  static const std::string kEmpty;
  return impl_ ? impl_->name : kEmpty;
}

Tensor& Tensor::set_name(std::string name) {
  shape();
  impl_->name = std::move(name);
  return *this;
}

Tensor Tensor::clone() const {
  Tensor t(shape(), impl_->data);
  t.impl_->requires_grad = impl_->requires_grad && !impl_->grad_fn;
  t.impl_->name = impl_->name;
  return t;
}

Tensor Tensor::detach() const { return Tensor(shape(), impl_->data); }

void Tensor::backward() const {
  shape();
  if (numel() != 1) {
    throw GraphError("backward() needs a scalar, got shape " +
                     ShapeToString(shape()));
  }
  if (impl_->graph_consumed) {
    throw GraphError("backward() called twice on the same graph; re-run the "
                     "forward pass first");
  }
  if (!impl_->grad_fn) {
    throw GraphError("backward() on a tensor not produced by a recorded graph");
  }

  // Iterative post-order DFS gives a topological order of non-leaf tensors.
  std::vector<TensorImpl*> order;
  std::unordered_set<TensorImpl*> visited;
  std::vector<std::pair<TensorImpl*, std::size_t>> stack;
  stack.emplace_back(impl_.get(), 0);
  visited.insert(impl_.get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    const auto& inputs = node->grad_fn->inputs;
    if (next < inputs.size()) {
      TensorImpl* child = inputs[next++].impl_.get();
      if (child->grad_fn && visited.insert(child).second) {
        stack.emplace_back(child, 0);
      }
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  std::unordered_map<TensorImpl*, std::vector<double>> grads;
  grads[impl_.get()] = {1.0};
  // Released nodes own upstream tensors still waiting in `order`; they are
  // freed together once the pass is done.
  std::vector<std::shared_ptr<Node>> released;
  released.reserve(order.size());
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    TensorImpl* node = *it;
    std::shared_ptr<Node> fn = std::move(node->grad_fn);
    released.push_back(fn);
    node->graph_consumed = true;
    auto found = grads.find(node);
    if (found == grads.end()) continue;  // output not on any path to the loss
    std::vector<double> grad_out = std::move(found->second);
    grads.erase(found);

    BackwardArgs args;
    args.grad_out = grad_out;
    args.out = node->data;
    args.in_grads.reserve(fn->inputs.size());
    for (Tensor& in : fn->inputs) {
      TensorImpl* ip = in.impl_.get();
      if (!ip->requires_grad) {
        args.in_grads.emplace_back();
      } else if (!ip->grad_fn) {
        if (ip->grad.empty()) ip->grad.assign(ip->data.size(), 0.0);
        args.in_grads.emplace_back(ip->grad);
      } else {
        auto& g = grads[ip];
        if (g.empty()) g.assign(ip->data.size(), 0.0);
        args.in_grads.emplace_back(g);
      }
    }
    fn->fn(args);
  }
}

Tensor MakeResult(const char* op, Shape shape, std::vector<double> data,
                  std::initializer_list<Tensor> inputs, BackwardFn fn) {
  CheckFinite(data, op);
  Tensor out(std::make_shared<TensorImpl>());
  out.impl_->shape = std::move(shape);
  out.impl_->data = std::move(data);
  if (!g_grad_enabled) return out;
  bool any = false;
  for (const Tensor& in : inputs) any = any || in.requires_grad();
  if (!any) return out;
  auto node = std::make_shared<Node>();
  node->op = op;
  node->inputs.assign(inputs.begin(), inputs.end());
  node->fn = std::move(fn);
  out.impl_->requires_grad = true;
  out.impl_->grad_fn = std::move(node);
  return out;
}

bool GradEnabled() { return g_grad_enabled; }

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) {
  g_grad_enabled = false;
}

NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }

}  // namespace wavedistill
