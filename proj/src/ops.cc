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

#include "wavedistill/ops.h"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <memory>
#include <numbers>
#include <string>
#include <vector>

#include "wavedistill/errors.h"

namespace wavedistill {
namespace {

using RowMat =
    Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapMat = Eigen::Map<RowMat>;
using ConstMapMat = Eigen::Map<const RowMat>;

void RequireSameShape(const char* op, const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) {
    throw DimensionError(std::string(op) + ": shape mismatch " +
                         ShapeToString(a.shape()) + " vs " +
                         ShapeToString(b.shape()));
  }
}

void RequireRank(const char* op, const Tensor& a, std::size_t rank) {
  if (a.rank() != rank) {
    throw DimensionError(std::string(op) + ": expected rank " +
                         std::to_string(rank) + ", got shape " +
                         ShapeToString(a.shape()));
  }
}

void CheckLabels(const char* op, std::span<const int> labels, std::size_t n,
                 std::size_t k) {
  if (labels.size() != n) {
    throw DimensionError(std::string(op) + ": " + std::to_string(n) +
                         " rows but " + std::to_string(labels.size()) +
                         " labels");
  }
  for (int y : labels) {
    if (y < 0 || static_cast<std::size_t>(y) >= k) {
      throw ConfigError(std::string(op) + ": label " + std::to_string(y) +
                        " outside [0, " + std::to_string(k) + ")");
    }
  }
}

}  // namespace

Tensor Add(const Tensor& a, const Tensor& b) {
  RequireSameShape("Add", a, b);
  auto x = a.data();
  auto y = b.data();
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = x[i] + y[i];
  return MakeResult("Add", a.shape(), std::move(out), {a, b},
                    [](const BackwardArgs& g) {
                      for (auto& dst : g.in_grads) {
                        for (std::size_t i = 0; i < dst.size(); ++i) {
                          dst[i] += g.grad_out[i];
                        }
                      }
                    });
}

Tensor Sub(const Tensor& a, const Tensor& b) {
  RequireSameShape("Sub", a, b);
  auto x = a.data();
  auto y = b.data();
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = x[i] - y[i];
  return MakeResult("Sub", a.shape(), std::move(out), {a, b},
                    [](const BackwardArgs& g) {
                      auto da = g.in_grads[0];
                      auto db = g.in_grads[1];
                      for (std::size_t i = 0; i < da.size(); ++i) {
                        da[i] += g.grad_out[i];
                      }
                      for (std::size_t i = 0; i < db.size(); ++i) {
                        db[i] -= g.grad_out[i];
                      }
                    });
}

Tensor Mul(const Tensor& a, const Tensor& b) {
  RequireSameShape("Mul", a, b);
  auto x = a.data();
  auto y = b.data();
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = x[i] * y[i];
  return MakeResult("Mul", a.shape(), std::move(out), {a, b},
                    [a, b](const BackwardArgs& g) {
                      auto da = g.in_grads[0];
                      auto db = g.in_grads[1];
                      auto x = a.data();
                      auto y = b.data();
                      for (std::size_t i = 0; i < da.size(); ++i) {
                        da[i] += g.grad_out[i] * y[i];
                      }
                      for (std::size_t i = 0; i < db.size(); ++i) {
                        db[i] += g.grad_out[i] * x[i];
                      }
                    });
}

Tensor Scale(const Tensor& a, double factor) {
  auto x = a.data();
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = x[i] * factor;
  return MakeResult("Scale", a.shape(), std::move(out), {a},
                    [factor](const BackwardArgs& g) {
                      auto da = g.in_grads[0];
                      for (std::size_t i = 0; i < da.size(); ++i) {
                        da[i] += g.grad_out[i] * factor;
                      }
                    });
}

Tensor Square(const Tensor& a) {
  auto x = a.data();
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = x[i] * x[i];
  return MakeResult("Square", a.shape(), std::move(out), {a},
                    [a](const BackwardArgs& g) {
                      auto da = g.in_grads[0];
                      auto x = a.data();
                      for (std::size_t i = 0; i < da.size(); ++i) {
                        da[i] += 2.0 * x[i] * g.grad_out[i];
                      }
                    });
}

Tensor Sum(const Tensor& a) {
  double s = 0.0;
  for (double v : a.data()) s += v;
  return MakeResult("Sum", Shape{}, {s}, {a}, [](const BackwardArgs& g) {
    auto da = g.in_grads[0];
    const double go = g.grad_out[0];
    for (double& v : da) v += go;
  });
}

Tensor Mean(const Tensor& a) {
  return Scale(Sum(a), 1.0 / static_cast<double>(a.numel()));
}

Tensor Reshape(const Tensor& a, const Shape& shape) {
  if (NumElements(shape) != a.numel()) {
    throw DimensionError("Reshape: cannot view " + ShapeToString(a.shape()) +
                         " as " + ShapeToString(shape));
  }
  std::vector<double> out(a.data().begin(), a.data().end());
  return MakeResult("Reshape", shape, std::move(out), {a},
                    [](const BackwardArgs& g) {
                      auto da = g.in_grads[0];
                      for (std::size_t i = 0; i < da.size(); ++i) {
                        da[i] += g.grad_out[i];
                      }
                    });
}

Tensor Conv2d(const Tensor& input, const Tensor& kernel, std::size_t stride,
              std::size_t padding) {
  if (input.rank() != 4 || kernel.rank() != 4 ||
      input.dim(1) != kernel.dim(1)) {
    throw DimensionError("Conv2d: incompatible input " +
                         ShapeToString(input.shape()) + " and kernel " +
                         ShapeToString(kernel.shape()));
  }
  if (stride == 0) throw DimensionError("Conv2d: stride must be positive");
  const std::size_t n = input.dim(0), c = input.dim(1), h = input.dim(2),
                    w = input.dim(3);
  const std::size_t f = kernel.dim(0), kh = kernel.dim(2), kw = kernel.dim(3);
  if (h + 2 * padding < kh || w + 2 * padding < kw) {
    throw DimensionError("Conv2d: kernel " + ShapeToString(kernel.shape()) +
                         " larger than padded input " +
                         ShapeToString(input.shape()));
  }
  const std::size_t ho = (h + 2 * padding - kh) / stride + 1;
  const std::size_t wo = (w + 2 * padding - kw) / stride + 1;
  const std::size_t p = ho * wo;
  const std::size_t k = c * kh * kw;
  const std::size_t np = n * p;

  // im2col: rows index (channel, ky, kx), columns index (sample, oy, ox).
  auto col = std::make_shared<std::vector<double>>(k * np, 0.0);
  const double* x = input.data().data();
  const long pad = static_cast<long>(padding);
  for (std::size_t ci = 0; ci < c; ++ci) {
    for (std::size_t ky = 0; ky < kh; ++ky) {
      for (std::size_t kx = 0; kx < kw; ++kx) {
        double* row = col->data() + ((ci * kh + ky) * kw + kx) * np;
        for (std::size_t ni = 0; ni < n; ++ni) {
          const double* plane = x + (ni * c + ci) * h * w;
          double* dst = row + ni * p;
          for (std::size_t oy = 0; oy < ho; ++oy) {
            const long iy = static_cast<long>(oy * stride + ky) - pad;
            if (iy < 0 || iy >= static_cast<long>(h)) continue;
            for (std::size_t ox = 0; ox < wo; ++ox) {
              const long ix = static_cast<long>(ox * stride + kx) - pad;
              if (ix < 0 || ix >= static_cast<long>(w)) continue;
              dst[oy * wo + ox] = plane[iy * static_cast<long>(w) + ix];
            }
          }
        }
      }
    }
  }

  RowMat out_mat(f, np);
  out_mat.noalias() = ConstMapMat(kernel.data().data(), f, k) *
                      ConstMapMat(col->data(), k, np);
  std::vector<double> out(n * f * p);
  for (std::size_t ni = 0; ni < n; ++ni) {
    for (std::size_t fi = 0; fi < f; ++fi) {
      std::copy_n(out_mat.data() + fi * np + ni * p, p,
                  out.data() + (ni * f + fi) * p);
    }
  }

  return MakeResult(
      "Conv2d", Shape{n, f, ho, wo}, std::move(out), {input, kernel},
      [=](const BackwardArgs& g) {
        RowMat dout(f, np);
        for (std::size_t ni = 0; ni < n; ++ni) {
          for (std::size_t fi = 0; fi < f; ++fi) {
            std::copy_n(g.grad_out.data() + (ni * f + fi) * p, p,
                        dout.data() + fi * np + ni * p);
          }
        }
        auto dk = g.in_grads[1];
        if (!dk.empty()) {
          MapMat(dk.data(), f, k).noalias() +=
              dout * ConstMapMat(col->data(), k, np).transpose();
        }
        auto dx = g.in_grads[0];
        if (dx.empty()) return;
        RowMat dcol(k, np);
        dcol.noalias() =
            ConstMapMat(kernel.data().data(), f, k).transpose() * dout;
        for (std::size_t ci = 0; ci < c; ++ci) {
          for (std::size_t ky = 0; ky < kh; ++ky) {
            for (std::size_t kx = 0; kx < kw; ++kx) {
              const double* row =
                  dcol.data() + ((ci * kh + ky) * kw + kx) * np;
              for (std::size_t ni = 0; ni < n; ++ni) {
                double* plane = dx.data() + (ni * c + ci) * h * w;
                const double* src = row + ni * p;
                for (std::size_t oy = 0; oy < ho; ++oy) {
                  const long iy = static_cast<long>(oy * stride + ky) - pad;
                  if (iy < 0 || iy >= static_cast<long>(h)) continue;
                  for (std::size_t ox = 0; ox < wo; ++ox) {
                    const long ix = static_cast<long>(ox * stride + kx) - pad;
                    if (ix < 0 || ix >= static_cast<long>(w)) continue;
                    plane[iy * static_cast<long>(w) + ix] += src[oy * wo + ox];
                  }
                }
              }
            }
          }
        }
      });
}

Tensor Linear(const Tensor& input, const Tensor& weight) {
  if (input.rank() != 2 || weight.rank() != 2 ||
      input.dim(1) != weight.dim(0)) {
    throw DimensionError("Linear: incompatible input " +
                         ShapeToString(input.shape()) + " and weight " +
                         ShapeToString(weight.shape()));
  }
  const std::size_t n = input.dim(0), d = input.dim(1), k = weight.dim(1);
  std::vector<double> out(n * k);
  MapMat(out.data(), n, k).noalias() =
      ConstMapMat(input.data().data(), n, d) *
      ConstMapMat(weight.data().data(), d, k);
  return MakeResult(
      "Linear", Shape{n, k}, std::move(out), {input, weight},
      [=](const BackwardArgs& g) {
        ConstMapMat go(g.grad_out.data(), n, k);
        auto dx = g.in_grads[0];
        if (!dx.empty()) {
          MapMat(dx.data(), n, d).noalias() +=
              go * ConstMapMat(weight.data().data(), d, k).transpose();
        }
        auto dw = g.in_grads[1];
        if (!dw.empty()) {
          MapMat(dw.data(), d, k).noalias() +=
              ConstMapMat(input.data().data(), n, d).transpose() * go;
        }
      });
}

Tensor PRelu(const Tensor& input, const Tensor& slope) {
  if (input.rank() < 2) {
    throw DimensionError("PRelu: input needs a channel axis, got " +
                         ShapeToString(input.shape()));
  }
  const std::size_t channels = input.dim(1);
  if (slope.rank() != 1 || (slope.dim(0) != 1 && slope.dim(0) != channels)) {
    throw DimensionError("PRelu: slope " + ShapeToString(slope.shape()) +
                         " not broadcastable over input " +
                         ShapeToString(input.shape()));
  }
  const std::size_t outer = input.dim(0);
  const std::size_t inner = input.numel() / (outer * channels);
  const bool shared = slope.dim(0) == 1;
  auto x = input.data();
  auto a = slope.data();
  std::vector<double> out(x.size());
  for (std::size_t o = 0; o < outer; ++o) {
    for (std::size_t ch = 0; ch < channels; ++ch) {
      const double s = a[shared ? 0 : ch];
      const std::size_t base = (o * channels + ch) * inner;
      for (std::size_t i = base; i < base + inner; ++i) {
        out[i] = x[i] > 0.0 ? x[i] : s * x[i];
      }
    }
  }
  return MakeResult(
      "PRelu", input.shape(), std::move(out), {input, slope},
      [=](const BackwardArgs& g) {
        auto x = input.data();
        auto a = slope.data();
        auto dx = g.in_grads[0];
        auto da = g.in_grads[1];
        for (std::size_t o = 0; o < outer; ++o) {
          for (std::size_t ch = 0; ch < channels; ++ch) {
            const std::size_t si = shared ? 0 : ch;
            const std::size_t base = (o * channels + ch) * inner;
            for (std::size_t i = base; i < base + inner; ++i) {
              const bool positive = x[i] >= 0.0;
              if (!dx.empty()) dx[i] += positive ? g.grad_out[i] : a[si] * g.grad_out[i];
              if (!da.empty() && !positive) da[si] += x[i] * g.grad_out[i];
            }
          }
        }
      });
}

BatchNormState BatchNormState::ForChannels(std::size_t channels) {
  BatchNormState s;
  s.running_mean = Tensor::Zeros({channels});
  s.running_var = Tensor::Full({channels}, 1.0);
  return s;
}

Tensor BatchNorm(const Tensor& input, const Tensor& gamma, const Tensor& beta,
                 BatchNormState& state, Mode mode) {
  if (input.rank() != 2 && input.rank() != 4) {
    throw DimensionError("BatchNorm: expected [N,C] or [N,C,H,W], got " +
                         ShapeToString(input.shape()));
  }
  const std::size_t n = input.dim(0), c = input.dim(1);
  const std::size_t hw = input.numel() / (n * c);
  if (gamma.shape() != Shape{c} || beta.shape() != Shape{c} ||
      state.running_mean.shape() != Shape{c}) {
    throw DimensionError("BatchNorm: parameters must have shape [" +
                         std::to_string(c) + "], input " +
                         ShapeToString(input.shape()));
  }
  const std::size_t m = n * hw;
  if (mode == Mode::kTrain && m < 2) {
    throw DimensionError(
        "BatchNorm: training mode needs at least 2 values per channel, got " +
        ShapeToString(input.shape()));
  }
  auto x = input.data();
  auto gm = gamma.data();
  auto bt = beta.data();
  std::vector<double> mean(c, 0.0), invstd(c, 0.0);
  if (mode == Mode::kTrain) {
    auto rm = state.running_mean.mutable_data();
    auto rv = state.running_var.mutable_data();
    for (std::size_t ch = 0; ch < c; ++ch) {
      double s = 0.0;
      for (std::size_t ni = 0; ni < n; ++ni) {
        const double* p = x.data() + (ni * c + ch) * hw;
        for (std::size_t i = 0; i < hw; ++i) s += p[i];
      }
      const double mu = s / static_cast<double>(m);
      double ss = 0.0;
      for (std::size_t ni = 0; ni < n; ++ni) {
        const double* p = x.data() + (ni * c + ch) * hw;
        for (std::size_t i = 0; i < hw; ++i) ss += (p[i] - mu) * (p[i] - mu);
      }
      const double var = ss / static_cast<double>(m);
      mean[ch] = mu;
      invstd[ch] = 1.0 / std::sqrt(var + state.eps);
      rm[ch] = (1.0 - state.momentum) * rm[ch] + state.momentum * mu;
      rv[ch] = (1.0 - state.momentum) * rv[ch] +
               state.momentum * ss / static_cast<double>(m - 1);
    }
  } else {
    auto rm = state.running_mean.data();
    auto rv = state.running_var.data();
    for (std::size_t ch = 0; ch < c; ++ch) {
      mean[ch] = rm[ch];
      invstd[ch] = 1.0 / std::sqrt(rv[ch] + state.eps);
    }
  }
  CheckFinite(invstd, "BatchNorm inverse std");

  std::vector<double> out(x.size());
  auto xhat = std::make_shared<std::vector<double>>(x.size());
  for (std::size_t ni = 0; ni < n; ++ni) {
    for (std::size_t ch = 0; ch < c; ++ch) {
      const std::size_t base = (ni * c + ch) * hw;
      for (std::size_t i = base; i < base + hw; ++i) {
        const double v = (x[i] - mean[ch]) * invstd[ch];
        (*xhat)[i] = v;
        out[i] = gm[ch] * v + bt[ch];
      }
    }
  }
  const bool train = mode == Mode::kTrain;
  return MakeResult(
      "BatchNorm", input.shape(), std::move(out), {input, gamma, beta},
      [=](const BackwardArgs& g) {
        auto gm = gamma.data();
        auto dx = g.in_grads[0];
        auto dg = g.in_grads[1];
        auto db = g.in_grads[2];
        const double inv_m = 1.0 / static_cast<double>(m);
        for (std::size_t ch = 0; ch < c; ++ch) {
          double sum_dy = 0.0, sum_dy_xhat = 0.0;
          for (std::size_t ni = 0; ni < n; ++ni) {
            const std::size_t base = (ni * c + ch) * hw;
            for (std::size_t i = base; i < base + hw; ++i) {
              sum_dy += g.grad_out[i];
              sum_dy_xhat += g.grad_out[i] * (*xhat)[i];
            }
          }
          if (!dg.empty()) dg[ch] += sum_dy_xhat;
          if (!db.empty()) db[ch] += sum_dy;
          if (dx.empty()) continue;
          const double scale = gm[ch] * invstd[ch];
          for (std::size_t ni = 0; ni < n; ++ni) {
            const std::size_t base = (ni * c + ch) * hw;
            for (std::size_t i = base; i < base + hw; ++i) {
              if (train) {
                dx[i] += scale * (g.grad_out[i] - inv_m * sum_dy -
                                  (*xhat)[i] * inv_m * sum_dy_xhat);
              } else {
                dx[i] += scale * g.grad_out[i];
              }
            }
          }
        }
      });
}

Tensor GlobalAvgPool(const Tensor& input) {
  RequireRank("GlobalAvgPool", input, 4);
  const std::size_t n = input.dim(0), c = input.dim(1);
  const std::size_t hw = input.dim(2) * input.dim(3);
  auto x = input.data();
  std::vector<double> out(n * c);
  for (std::size_t i = 0; i < n * c; ++i) {
    double s = 0.0;
    for (std::size_t j = 0; j < hw; ++j) s += x[i * hw + j];
    out[i] = s / static_cast<double>(hw);
  }
  return MakeResult("GlobalAvgPool", Shape{n, c}, std::move(out), {input},
                    [=](const BackwardArgs& g) {
                      auto dx = g.in_grads[0];
                      const double inv = 1.0 / static_cast<double>(hw);
                      for (std::size_t i = 0; i < n * c; ++i) {
                        const double v = g.grad_out[i] * inv;
                        for (std::size_t j = 0; j < hw; ++j) dx[i * hw + j] += v;
                      }
                    });
}

Tensor AvgPool2x2(const Tensor& input) {
  RequireRank("AvgPool2x2", input, 4);
  const std::size_t nc = input.dim(0) * input.dim(1);
  const std::size_t h = input.dim(2), w = input.dim(3);
  if (h % 2 || w % 2) {
    throw DimensionError("AvgPool2x2: odd spatial extent in " +
                         ShapeToString(input.shape()));
  }
  const std::size_t ho = h / 2, wo = w / 2;
  auto x = input.data();
  std::vector<double> out(nc * ho * wo);
  for (std::size_t i = 0; i < nc; ++i) {
    const double* src = x.data() + i * h * w;
    for (std::size_t y = 0; y < ho; ++y) {
      for (std::size_t xo = 0; xo < wo; ++xo) {
        const double* p = src + 2 * y * w + 2 * xo;
        out[(i * ho + y) * wo + xo] = 0.25 * (p[0] + p[1] + p[w] + p[w + 1]);
      }
    }
  }
  return MakeResult("AvgPool2x2",
                    Shape{input.dim(0), input.dim(1), ho, wo}, std::move(out),
                    {input}, [=](const BackwardArgs& g) {
                      auto dx = g.in_grads[0];
                      for (std::size_t i = 0; i < nc; ++i) {
                        double* dst = dx.data() + i * h * w;
                        for (std::size_t y = 0; y < ho; ++y) {
                          for (std::size_t xo = 0; xo < wo; ++xo) {
                            const double v =
                                0.25 * g.grad_out[(i * ho + y) * wo + xo];
                            double* p = dst + 2 * y * w + 2 * xo;
                            p[0] += v;
                            p[1] += v;
                            p[w] += v;
                            p[w + 1] += v;
                          }
                        }
                      }
                    });
}

Tensor LogSoftmax(const Tensor& logits) {
  RequireRank("LogSoftmax", logits, 2);
  const std::size_t n = logits.dim(0), k = logits.dim(1);
  auto z = logits.data();
  std::vector<double> out(n * k);
  for (std::size_t i = 0; i < n; ++i) {
    const double* row = z.data() + i * k;
    const double mx = *std::max_element(row, row + k);
    double s = 0.0;
    for (std::size_t j = 0; j < k; ++j) s += std::exp(row[j] - mx);
    const double lse = mx + std::log(s);
    for (std::size_t j = 0; j < k; ++j) out[i * k + j] = row[j] - lse;
  }
  return MakeResult("LogSoftmax", logits.shape(), std::move(out), {logits},
                    [=](const BackwardArgs& g) {
                      auto dz = g.in_grads[0];
                      for (std::size_t i = 0; i < n; ++i) {
                        double gs = 0.0;
                        for (std::size_t j = 0; j < k; ++j) {
                          gs += g.grad_out[i * k + j];
                        }
                        for (std::size_t j = 0; j < k; ++j) {
                          dz[i * k + j] += g.grad_out[i * k + j] -
                                           std::exp(g.out[i * k + j]) * gs;
                        }
                      }
                    });
}

Tensor Softmax(const Tensor& logits) {
  RequireRank("Softmax", logits, 2);
  const std::size_t n = logits.dim(0), k = logits.dim(1);
  auto z = logits.data();
  std::vector<double> out(n * k);
  for (std::size_t i = 0; i < n; ++i) {
    const double* row = z.data() + i * k;
    const double mx = *std::max_element(row, row + k);
    double s = 0.0;
    for (std::size_t j = 0; j < k; ++j) {
      out[i * k + j] = std::exp(row[j] - mx);
      s += out[i * k + j];
    }
    for (std::size_t j = 0; j < k; ++j) out[i * k + j] /= s;
  }
  return MakeResult("Softmax", logits.shape(), std::move(out), {logits},
                    [=](const BackwardArgs& g) {
                      auto dz = g.in_grads[0];
                      for (std::size_t i = 0; i < n; ++i) {
                        double dot = 0.0;
                        for (std::size_t j = 0; j < k; ++j) {
                          dot += g.grad_out[i * k + j] * g.out[i * k + j];
                        }
                        for (std::size_t j = 0; j < k; ++j) {
                          dz[i * k + j] +=
                              g.out[i * k + j] * (g.grad_out[i * k + j] - dot);
                        }
                      }
                    });
}

Tensor CrossEntropy(const Tensor& logits, std::span<const int> labels) {
  RequireRank("CrossEntropy", logits, 2);
  const std::size_t n = logits.dim(0), k = logits.dim(1);
  CheckLabels("CrossEntropy", labels, n, k);
  auto z = logits.data();
  auto prob = std::make_shared<std::vector<double>>(n * k);
  double loss = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double* row = z.data() + i * k;
    const double mx = *std::max_element(row, row + k);
    double s = 0.0;
    for (std::size_t j = 0; j < k; ++j) s += std::exp(row[j] - mx);
    const double lse = mx + std::log(s);
    for (std::size_t j = 0; j < k; ++j) {
      (*prob)[i * k + j] = std::exp(row[j] - lse);
    }
    loss += lse - row[labels[i]];
  }
  loss /= static_cast<double>(n);
  std::vector<int> y(labels.begin(), labels.end());
  return MakeResult("CrossEntropy", Shape{}, {loss}, {logits},
                    [=](const BackwardArgs& g) {
                      auto dz = g.in_grads[0];
                      const double scale =
                          g.grad_out[0] / static_cast<double>(n);
                      for (std::size_t i = 0; i < n; ++i) {
                        for (std::size_t j = 0; j < k; ++j) {
                          double v = (*prob)[i * k + j];
                          if (static_cast<int>(j) == y[i]) v -= 1.0;
                          dz[i * k + j] += scale * v;
                        }
                      }
                    });
}

Tensor L2Normalize(const Tensor& input, int axis) {
  RequireRank("L2Normalize", input, 2);
  if (axis != 0 && axis != 1) {
    throw DimensionError("L2Normalize: axis must be 0 or 1");
  }
  const std::size_t rows = input.dim(0), cols = input.dim(1);
  // A vector runs along `len` entries spaced `step` apart; `count` of them.
  const std::size_t count = axis == 1 ? rows : cols;
  const std::size_t len = axis == 1 ? cols : rows;
  const std::size_t step = axis == 1 ? 1 : cols;
  const std::size_t stride = axis == 1 ? cols : 1;
  auto x = input.data();
  auto norms = std::make_shared<std::vector<double>>(count);
  std::vector<double> out(x.size());
  for (std::size_t v = 0; v < count; ++v) {
    double ss = 0.0;
    for (std::size_t t = 0; t < len; ++t) {
      const double e = x[v * stride + t * step];
      ss += e * e;
    }
    const double norm = std::sqrt(ss);
    if (!(norm > 0.0)) {
      throw NumericError("L2Normalize: zero vector at index " +
                         std::to_string(v));
    }
    (*norms)[v] = norm;
    for (std::size_t t = 0; t < len; ++t) {
      out[v * stride + t * step] = x[v * stride + t * step] / norm;
    }
  }
  return MakeResult("L2Normalize", input.shape(), std::move(out), {input},
                    [=](const BackwardArgs& g) {
                      auto dx = g.in_grads[0];
                      for (std::size_t v = 0; v < count; ++v) {
                        double dot = 0.0;
                        for (std::size_t t = 0; t < len; ++t) {
                          const std::size_t i = v * stride + t * step;
                          dot += g.out[i] * g.grad_out[i];
                        }
                        const double inv = 1.0 / (*norms)[v];
                        for (std::size_t t = 0; t < len; ++t) {
                          const std::size_t i = v * stride + t * step;
                          dx[i] += (g.grad_out[i] - g.out[i] * dot) * inv;
                        }
                      }
                    });
}

Tensor AngularMargin(const Tensor& cosines, std::span<const int> labels,
                     double margin) {
  RequireRank("AngularMargin", cosines, 2);
  const std::size_t n = cosines.dim(0), k = cosines.dim(1);
  CheckLabels("AngularMargin", labels, n, k);
  if (!(margin >= 0.0 && margin < std::numbers::pi / 2)) {
    throw ConfigError("AngularMargin: margin must lie in [0, pi/2), got " +
                      std::to_string(margin));
  }
  constexpr double kClampEps = 1e-7;
  // theta + margin < pi  <=>  cos(theta) > cos(pi - margin)
  const double threshold = std::cos(std::numbers::pi - margin);
  const double surrogate_shift = margin * std::sin(margin);
  auto c = cosines.data();
  std::vector<double> out(c.begin(), c.end());
  if (margin == 0.0) {
    return MakeResult("AngularMargin", cosines.shape(), std::move(out),
                      {cosines}, [](const BackwardArgs& g) {
                        auto dc = g.in_grads[0];
                        for (std::size_t i = 0; i < dc.size(); ++i) {
                          dc[i] += g.grad_out[i];
                        }
                      });
  }
  // d out / d c for each target entry
  auto deriv = std::make_shared<std::vector<double>>(n);
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t idx = i * k + static_cast<std::size_t>(labels[i]);
    const double raw = c[idx];
    if (raw > threshold) {
      // The value is exact up to |c| = 1; the derivative, which blows up
      // there, is cut to zero outside [-1 + eps, 1 - eps].
      const double lo = -1.0 + kClampEps, hi = 1.0 - kClampEps;
      const double theta = std::acos(std::clamp(raw, -1.0, 1.0));
      out[idx] = std::cos(theta + margin);
      (*deriv)[i] = (raw > lo && raw < hi)
                        ? std::sin(theta + margin) / std::sin(theta)
                        : 0.0;
    } else {
      out[idx] = raw - surrogate_shift;
      (*deriv)[i] = 1.0;
    }
  }
  std::vector<int> y(labels.begin(), labels.end());
  return MakeResult("AngularMargin", cosines.shape(), std::move(out),
                    {cosines}, [=](const BackwardArgs& g) {
                      auto dc = g.in_grads[0];
                      for (std::size_t i = 0; i < dc.size(); ++i) {
                        dc[i] += g.grad_out[i];
                      }
                      for (std::size_t i = 0; i < n; ++i) {
                        const std::size_t idx =
                            i * k + static_cast<std::size_t>(y[i]);
                        dc[idx] += g.grad_out[idx] * ((*deriv)[i] - 1.0);
                      }
                    });
}

}  // namespace wavedistill
