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

// Single-level orthonormal 2D Haar analysis and synthesis.
//
// The four analysis kernels (applied per channel, stride 2, no padding) are
//   LL = 1/2 [[1, 1], [ 1,  1]]     LH = 1/2 [[1,  1], [-1, -1]]
//   HL = 1/2 [[1,-1], [ 1, -1]]     HH = 1/2 [[1, -1], [-1,  1]]
// With the 1/2 normalization the transform is orthonormal: energy is
// preserved exactly and a constant image c maps to LL == 2c.

#ifndef WAVEDISTILL_WAVELET_H_
#define WAVEDISTILL_WAVELET_H_

#include <array>

#include "wavedistill/tensor.h"

namespace wavedistill {

enum class Subband { kLL = 0, kLH = 1, kHL = 2, kHH = 3 };

using HaarKernel = std::array<std::array<double, 2>, 2>;

// Analysis kernels indexed by Subband.
const std::array<HaarKernel, 4>& HaarFilterBank();

struct WaveletSubbands {
  Tensor ll, lh, hl, hh;

  const Tensor& band(Subband b) const;
};

// One subband of x [N,C,H,W] (even H, W). Differentiable.
Tensor HaarAnalysis(const Tensor& x, Subband band);

WaveletSubbands Dwt2Forward(const Tensor& x);

// Perfect-reconstruction synthesis. Differentiable.
Tensor Dwt2Inverse(const WaveletSubbands& s);

// WaveConv: keeps only the LL subband, halving H and W. High-frequency
// subbands are never computed.
Tensor WaveConvDownsample(const Tensor& x);

}  // namespace wavedistill

#endif  // WAVEDISTILL_WAVELET_H_
