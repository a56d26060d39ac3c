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

#include "wavedistill/wavelet.h"

#include <string>
#include <vector>

#include "wavedistill/errors.h"

namespace wavedistill {
namespace {

void RequireEvenPlanes(const char* op, const Tensor& x) {
  if (x.rank() != 4) {
    throw DimensionError(std::string(op) + ": expected [N,C,H,W], got " +
                         ShapeToString(x.shape()));
  }
  if (x.dim(2) % 2 != 0 || x.dim(3) % 2 != 0) {
    throw DimensionError(std::string(op) +
                         ": spatial extents must be even, got " +
                         ShapeToString(x.shape()));
  }
}

}  // namespace

const std::array<HaarKernel, 4>& HaarFilterBank() {
  static const std::array<HaarKernel, 4> kBank = {{
      {{{0.5, 0.5}, {0.5, 0.5}}},
      {{{0.5, 0.5}, {-0.5, -0.5}}},
      {{{0.5, -0.5}, {0.5, -0.5}}},
      {{{0.5, -0.5}, {-0.5, 0.5}}},
  }};
  return kBank;
}

const Tensor& WaveletSubbands::band(Subband b) const {
  switch (b) {
    case Subband::kLL:
      return ll;
    case Subband::kLH:
      return lh;
    case Subband::kHL:
      return hl;
    case Subband::kHH:
      return hh;
  }
  return ll;
}

Tensor HaarAnalysis(const Tensor& x, Subband band) {
  RequireEvenPlanes("HaarAnalysis", x);
  const HaarKernel k = HaarFilterBank()[static_cast<int>(band)];
  const std::size_t nc = x.dim(0) * x.dim(1);
  const std::size_t h = x.dim(2), w = x.dim(3);
  const std::size_t ho = h / 2, wo = w / 2;
  auto in = x.data();
  std::vector<double> out(nc * ho * wo);
  for (std::size_t i = 0; i < nc; ++i) {
    const double* src = in.data() + i * h * w;
    double* dst = out.data() + i * ho * wo;
    for (std::size_t y = 0; y < ho; ++y) {
      const double* r0 = src + 2 * y * w;
      const double* r1 = r0 + w;
      for (std::size_t xo = 0; xo < wo; ++xo) {
        dst[y * wo + xo] = k[0][0] * r0[2 * xo] + k[0][1] * r0[2 * xo + 1] +
                           k[1][0] * r1[2 * xo] + k[1][1] * r1[2 * xo + 1];
      }
    }
  }
  return MakeResult(
      "HaarAnalysis", Shape{x.dim(0), x.dim(1), ho, wo}, std::move(out), {x},
      [=](const BackwardArgs& g) {
        auto dx = g.in_grads[0];
        for (std::size_t i = 0; i < nc; ++i) {
          double* dst = dx.data() + i * h * w;
          const double* go = g.grad_out.data() + i * ho * wo;
          for (std::size_t y = 0; y < ho; ++y) {
            double* r0 = dst + 2 * y * w;
            double* r1 = r0 + w;
            for (std::size_t xo = 0; xo < wo; ++xo) {
              const double v = go[y * wo + xo];
              r0[2 * xo] += k[0][0] * v;
              r0[2 * xo + 1] += k[0][1] * v;
              r1[2 * xo] += k[1][0] * v;
              r1[2 * xo + 1] += k[1][1] * v;
            }
          }
        }
      });
}

WaveletSubbands Dwt2Forward(const Tensor& x) {
  return {HaarAnalysis(x, Subband::kLL), HaarAnalysis(x, Subband::kLH),
          HaarAnalysis(x, Subband::kHL), HaarAnalysis(x, Subband::kHH)};
}

Tensor Dwt2Inverse(const WaveletSubbands& s) {
  const Shape& shape = s.ll.shape();
  if (shape.size() != 4 || s.lh.shape() != shape || s.hl.shape() != shape ||
      s.hh.shape() != shape) {
    throw DimensionError("Dwt2Inverse: subband shapes differ: " +
                         ShapeToString(s.ll.shape()) + ", " +
                         ShapeToString(s.lh.shape()) + ", " +
                         ShapeToString(s.hl.shape()) + ", " +
                         ShapeToString(s.hh.shape()));
  }
  const auto& bank = HaarFilterBank();
  const std::size_t nc = shape[0] * shape[1];
  const std::size_t ho = shape[2], wo = shape[3];
  const std::size_t h = 2 * ho, w = 2 * wo;
  const std::array<std::span<const double>, 4> bands = {
      s.ll.data(), s.lh.data(), s.hl.data(), s.hh.data()};
  std::vector<double> out(nc * h * w, 0.0);
  // Synthesis is the transpose of analysis: each coefficient spreads its
  // kernel back over its 2x2 block.
  for (std::size_t b = 0; b < 4; ++b) {
    const HaarKernel& k = bank[b];
    for (std::size_t i = 0; i < nc; ++i) {
      const double* src = bands[b].data() + i * ho * wo;
      double* dst = out.data() + i * h * w;
      for (std::size_t y = 0; y < ho; ++y) {
        for (std::size_t xo = 0; xo < wo; ++xo) {
          const double v = src[y * wo + xo];
          dst[2 * y * w + 2 * xo] += k[0][0] * v;
          dst[2 * y * w + 2 * xo + 1] += k[0][1] * v;
          dst[(2 * y + 1) * w + 2 * xo] += k[1][0] * v;
          dst[(2 * y + 1) * w + 2 * xo + 1] += k[1][1] * v;
        }
      }
    }
  }
  return MakeResult(
      "Dwt2Inverse", Shape{shape[0], shape[1], h, w}, std::move(out),
      {s.ll, s.lh, s.hl, s.hh}, [=](const BackwardArgs& g) {
        for (std::size_t b = 0; b < 4; ++b) {
          auto db = g.in_grads[b];
          if (db.empty()) continue;
          const HaarKernel& k = bank[b];
          for (std::size_t i = 0; i < nc; ++i) {
            const double* go = g.grad_out.data() + i * h * w;
            double* dst = db.data() + i * ho * wo;
            for (std::size_t y = 0; y < ho; ++y) {
              for (std::size_t xo = 0; xo < wo; ++xo) {
                dst[y * wo + xo] +=
                    k[0][0] * go[2 * y * w + 2 * xo] +
                    k[0][1] * go[2 * y * w + 2 * xo + 1] +
                    k[1][0] * go[(2 * y + 1) * w + 2 * xo] +
                    k[1][1] * go[(2 * y + 1) * w + 2 * xo + 1];
              }
            }
          }
        }
      });
}

Tensor WaveConvDownsample(const Tensor& x) {
  return HaarAnalysis(x, Subband::kLL);
}

}  // namespace wavedistill
