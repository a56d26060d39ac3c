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

// Low-resolution synthesis. Images are [C,H,W] tensors on the 0..255 scale.
//
// Training pipeline (per sample, each stage gated independently):
//   blur -> noise -> JPEG artifacts -> bicubic down to a random LR size
//   -> bicubic up to the network input size
// Evaluation probes skip the corruptions and use bilinear resampling.

#ifndef WAVEDISTILL_DEGRADE_H_
#define WAVEDISTILL_DEGRADE_H_

#include <array>
#include <cstddef>
#include <vector>

#include "wavedistill/rng.h"
#include "wavedistill/tensor.h"

namespace wavedistill {

// Separable Gaussian, radius ceil(3 sigma), unit-sum taps, edge replication.
// sigma == 0 returns the input unchanged.
Tensor GaussianBlur(const Tensor& img, double sigma);

// Unit-sum Gaussian taps for offsets -r..r, r = ceil(3 sigma).
std::vector<double> GaussianKernel1d(double sigma);

// Additive i.i.d. N(0, sigma^2) noise, clamped to [0, 255].
Tensor AddNoise(const Tensor& img, double sigma, RngStream& stream);

// The standard JPEG luminance quantization table scaled for `quality`
// (libjpeg convention), row-major 8x8.
std::array<int, 64> JpegQuantTable(int quality);

// Blockwise DCT quantization round trip. No entropy coding is involved;
// only the lossy part of a baseline encoder/decoder pair is reproduced.
Tensor JpegArtifact(const Tensor& img, int quality);

enum class ResampleKernel { kBicubic, kBilinear };

// Separable resampling with half-pixel centers, edge clamping and, when
// shrinking, a kernel stretched by the inverse scale (antialiasing).
// Bicubic is Catmull-Rom (a = -0.5). Equal sizes return an exact copy.
Tensor Resize(const Tensor& img, std::size_t out_h, std::size_t out_w,
              ResampleKernel kernel);

Tensor BicubicResize(const Tensor& img, std::size_t target);

double CubicKernel(double x);
double TriangleKernel(double x);

struct DegradationConfig {
  double p_blur = 0.5;
  double p_noise = 0.5;
  double p_jpeg = 0.5;
  std::array<double, 2> blur_sigma_range = {0.5, 2.0};
  std::array<double, 2> noise_sigma_range = {2.0, 10.0};
  std::array<int, 2> jpeg_quality_range = {30, 90};
  std::vector<std::size_t> lr_sizes = {8, 16};
  bool upsample_back = true;

  void Validate(std::size_t hr_size) const;
  bool operator==(const DegradationConfig&) const = default;
};

// What degrade_sample actually applied; one manifest row.
struct DegradationRecord {
  bool blur = false;
  double blur_sigma = 0.0;
  bool noise = false;
  double noise_sigma = 0.0;
  bool jpeg = false;
  int jpeg_quality = 0;
  std::size_t size = 0;
};

struct DegradedSample {
  Tensor image;
  DegradationRecord record;
};

// All draws come from `stream` in a fixed order (three gates, then the three
// parameters, then the size), so the result is a pure function of the
// pixels, the config and the stream key.
DegradedSample DegradeSample(const Tensor& hr, const DegradationConfig& cfg,
                             RngStream& stream);

// Bilinear down to `size`, bilinear back up to the HR extent.
Tensor EvalDownsample(const Tensor& hr, std::size_t size);

}  // namespace wavedistill

#endif  // WAVEDISTILL_DEGRADE_H_
