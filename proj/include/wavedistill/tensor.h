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

// Dense float64 tensors with a dynamic reverse-mode autodiff tape.
//
// A Tensor is a shared handle: copies alias the same storage, which is what
// lets an operation's output keep its inputs alive until backward() runs.
// Every operation that sees at least one input with requires_grad() (and runs
// while gradient recording is enabled) attaches a Node describing how to push
// the output adjoint back to its inputs. backward() orders those nodes
// topologically, visits each exactly once and then releases the graph.

#ifndef WAVEDISTILL_TENSOR_H_
#define WAVEDISTILL_TENSOR_H_

#include <cstddef>
#include <functional>
#include <initializer_list>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace wavedistill {

using Shape = std::vector<std::size_t>;

std::size_t NumElements(const Shape& shape);
std::string ShapeToString(const Shape& shape);

class Tensor;

// Arguments handed to a node's adjoint function. in_grads[i] is empty when
// input i does not need a gradient; otherwise the function must accumulate
// (+=) into it.
struct BackwardArgs {
  std::span<const double> grad_out;
  std::span<const double> out;
  std::vector<std::span<double>> in_grads;
};

using BackwardFn = std::function<void(const BackwardArgs&)>;

struct Node {
  const char* op = "";
  std::vector<Tensor> inputs;
  BackwardFn fn;
};

struct TensorImpl {
  Shape shape;
  std::vector<double> data;
  std::vector<double> grad;  // empty when no gradient is stored
  bool requires_grad = false;
  bool graph_consumed = false;
  std::shared_ptr<Node> grad_fn;
  std::string name;
};

class Tensor {
 public:
  Tensor() = default;
  Tensor(Shape shape, std::vector<double> data);

  static Tensor Zeros(const Shape& shape);
  static Tensor Full(const Shape& shape, double value);
  static Tensor Scalar(double value);

  bool defined() const { return impl_ != nullptr; }
  const Shape& shape() const;
  std::size_t rank() const { return shape().size(); }
  std::size_t dim(std::size_t axis) const;
  std::size_t numel() const;

  std::span<const double> data() const;
  // Direct write access; only for tensors outside a live graph (parameters
  // between steps, freshly built inputs).
  std::span<double> mutable_data();
  double item() const;
  double at(std::initializer_list<std::size_t> index) const;

  bool requires_grad() const;
  Tensor& set_requires_grad(bool value);
  bool is_leaf() const;

  bool has_grad() const;
  std::span<const double> grad() const;
  std::span<double> mutable_grad();
  void zero_grad();
  void clear_grad();

  const std::string& name() const;
  Tensor& set_name(std::string name);

  // Deep copy with no graph history.
  Tensor clone() const;
  // Same values, no graph history, never requires grad.
  Tensor detach() const;

  // Reverse-mode sweep from this scalar. Leaves accumulate into grad().
  void backward() const;

  // Identity of the underlying storage.
  const TensorImpl* impl() const { return impl_.get(); }

 private:
  friend Tensor MakeResult(const char*, Shape, std::vector<double>,
                           std::initializer_list<Tensor>, BackwardFn);
  explicit Tensor(std::shared_ptr<TensorImpl> impl) : impl_(std::move(impl)) {}
  std::shared_ptr<TensorImpl> impl_;
};

// Builds an operation result. Validates finiteness and records a graph node
// when recording is enabled and any input requires a gradient.
Tensor MakeResult(const char* op, Shape shape, std::vector<double> data,
                  std::initializer_list<Tensor> inputs, BackwardFn fn);

bool GradEnabled();

// Disables graph recording on the current thread for its lifetime.
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

void CheckFinite(std::span<const double> values, const char* what);

}  // namespace wavedistill

#endif  // WAVEDISTILL_TENSOR_H_
