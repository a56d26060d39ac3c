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

#include "wavedistill/degrade.h"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

#include "wavedistill/errors.h"

namespace wavedistill {
namespace {

constexpr std::array<int, 64> kLuminanceTable = {
    16, 11, 10, 16, 24,  40,  51,  61,   //
    12, 12, 14, 19, 26,  58,  60,  55,   //
    14, 13, 16, 24, 40,  57,  69,  56,   //
    14, 17, 22, 29, 51,  87,  80,  62,   //
    18, 22, 37, 56, 68,  109, 103, 77,   //
    24, 35, 55, 64, 81,  104, 113, 92,   //
    49, 64, 78, 87, 103, 121, 120, 101,  //
    72, 92, 95, 98, 112, 100, 103, 99};

void RequireImage(const char* op, const Tensor& img) {
  if (img.rank() != 3) {
    throw DimensionError(std::string(op) + ": expected [C,H,W], got " +
                         ShapeToString(img.shape()));
  }
}

std::size_t ClampIndex(long i, std::size_t n) {
  return static_cast<std::size_t>(
      std::clamp<long>(i, 0, static_cast<long>(n) - 1));
}

// 1-D convolution of every row (horizontal) or column (vertical) of each
// plane with symmetric taps, replicating edge pixels.
std::vector<double> FilterAxis(std::span<const double> src, std::size_t planes,
                               std::size_t h, std::size_t w,
                               const std::vector<double>& taps,
                               bool horizontal) {
  const long r = static_cast<long>(taps.size() / 2);
  std::vector<double> out(src.size());
  for (std::size_t c = 0; c < planes; ++c) {
    const double* in = src.data() + c * h * w;
    double* dst = out.data() + c * h * w;
    for (std::size_t y = 0; y < h; ++y) {
      for (std::size_t x = 0; x < w; ++x) {
        double acc = 0.0;
        for (long k = -r; k <= r; ++k) {
          const double tap = taps[static_cast<std::size_t>(k + r)];
          if (horizontal) {
            acc += tap * in[y * w + ClampIndex(static_cast<long>(x) + k, w)];
          } else {
            acc += tap * in[ClampIndex(static_cast<long>(y) + k, h) * w + x];
          }
        }
        dst[y * w + x] = acc;
      }
    }
  }
  return out;
}

struct Contribution {
  std::vector<std::size_t> index;
  std::vector<double> weight;
};

// Resampling weights for one axis, one entry per output sample.
std::vector<Contribution> Contributions(std::size_t in, std::size_t out,
                                        ResampleKernel kind) {
  const double scale = static_cast<double>(out) / static_cast<double>(in);
  const double base_width = kind == ResampleKernel::kBicubic ? 4.0 : 2.0;
  const bool shrink = scale < 1.0;
  const double width = shrink ? base_width / scale : base_width;
  auto kernel = [&](double x) {
    const double arg = shrink ? scale * x : x;
    const double v = kind == ResampleKernel::kBicubic ? CubicKernel(arg)
                                                      : TriangleKernel(arg);
    return shrink ? scale * v : v;
  };
  std::vector<Contribution> result(out);
  const long taps = static_cast<long>(std::ceil(width)) + 2;
  for (std::size_t i = 0; i < out; ++i) {
    const double u = (static_cast<double>(i) + 0.5) / scale - 0.5;
    const long left = static_cast<long>(std::floor(u - width / 2.0));
    Contribution& c = result[i];
    double total = 0.0;
    for (long j = left; j < left + taps; ++j) {
      const double wgt = kernel(u - static_cast<double>(j));
      if (wgt == 0.0) continue;
      c.index.push_back(ClampIndex(j, in));
      c.weight.push_back(wgt);
      total += wgt;
    }
    for (double& wgt : c.weight) wgt /= total;
  }
  return result;
}

}  // namespace

double CubicKernel(double x) {
  constexpr double a = -0.5;
  const double t = std::abs(x);
  if (t <= 1.0) return ((a + 2.0) * t - (a + 3.0)) * t * t + 1.0;
  if (t < 2.0) return ((a * t - 5.0 * a) * t + 8.0 * a) * t - 4.0 * a;
  return 0.0;
}

double TriangleKernel(double x) {
  const double t = std::abs(x);
  return t < 1.0 ? 1.0 - t : 0.0;
}

std::vector<double> GaussianKernel1d(double sigma) {
  if (!(sigma > 0.0)) throw ConfigError("GaussianKernel1d: sigma must be > 0");
  const long r = static_cast<long>(std::ceil(3.0 * sigma));
  std::vector<double> taps(static_cast<std::size_t>(2 * r + 1));
  double total = 0.0;
  for (long k = -r; k <= r; ++k) {
    const double v =
        std::exp(-static_cast<double>(k * k) / (2.0 * sigma * sigma));
    taps[static_cast<std::size_t>(k + r)] = v;
    total += v;
  }
  for (double& v : taps) v /= total;
  return taps;
}

Tensor GaussianBlur(const Tensor& img, double sigma) {
  RequireImage("GaussianBlur", img);
  if (!(sigma >= 0.0)) {
    throw ConfigError("GaussianBlur: sigma must be >= 0, got " +
                      std::to_string(sigma));
  }
  if (sigma == 0.0) return img.detach();
  const auto taps = GaussianKernel1d(sigma);
  const std::size_t c = img.dim(0), h = img.dim(1), w = img.dim(2);
  auto tmp = FilterAxis(img.data(), c, h, w, taps, true);
  return Tensor(img.shape(), FilterAxis(tmp, c, h, w, taps, false));
}

Tensor AddNoise(const Tensor& img, double sigma, RngStream& stream) {
  RequireImage("AddNoise", img);
  if (!(sigma >= 0.0)) {
    throw ConfigError("AddNoise: sigma must be >= 0, got " +
                      std::to_string(sigma));
  }
  if (sigma == 0.0) return img.detach();
  std::vector<double> out(img.data().begin(), img.data().end());
  for (double& v : out) v = std::clamp(v + sigma * stream.Normal(), 0.0, 255.0);
  return Tensor(img.shape(), std::move(out));
}

std::array<int, 64> JpegQuantTable(int quality) {
  if (quality < 1 || quality > 100) {
    throw ConfigError("JPEG quality must lie in [1, 100], got " +
                      std::to_string(quality));
  }
  const int scale = quality < 50 ? 5000 / quality : 200 - 2 * quality;
  std::array<int, 64> table{};
  for (std::size_t i = 0; i < 64; ++i) {
    table[i] = std::clamp((kLuminanceTable[i] * scale + 50) / 100, 1, 255);
  }
  return table;
}

Tensor JpegArtifact(const Tensor& img, int quality) {
  RequireImage("JpegArtifact", img);
  const auto table = JpegQuantTable(quality);
  // Orthonormal DCT-II basis: basis[u][x] = c(u) cos((2x + 1) u pi / 16).
  std::array<std::array<double, 8>, 8> basis{};
  for (int u = 0; u < 8; ++u) {
    const double cu = u == 0 ? std::sqrt(1.0 / 8.0) : std::sqrt(2.0 / 8.0);
    for (int x = 0; x < 8; ++x) {
      basis[u][x] = cu * std::cos((2 * x + 1) * u * std::numbers::pi / 16.0);
    }
  }
  const std::size_t planes = img.dim(0), h = img.dim(1), w = img.dim(2);
  const std::size_t ph = (h + 7) / 8 * 8, pw = (w + 7) / 8 * 8;
  auto src = img.data();
  std::vector<double> out(src.size());
  std::vector<double> padded(ph * pw);
  for (std::size_t c = 0; c < planes; ++c) {
    const double* in = src.data() + c * h * w;
    for (std::size_t y = 0; y < ph; ++y) {
      for (std::size_t x = 0; x < pw; ++x) {
        padded[y * pw + x] = in[std::min(y, h - 1) * w + std::min(x, w - 1)];
      }
    }
    for (std::size_t by = 0; by < ph; by += 8) {
      for (std::size_t bx = 0; bx < pw; bx += 8) {
        double block[8][8], tmp[8][8], coef[8][8];
        for (int y = 0; y < 8; ++y) {
          for (int x = 0; x < 8; ++x) {
            block[y][x] = padded[(by + y) * pw + bx + x] - 128.0;
          }
        }
        // Rows then columns.
        for (int y = 0; y < 8; ++y) {
          for (int u = 0; u < 8; ++u) {
            double s = 0.0;
            for (int x = 0; x < 8; ++x) s += basis[u][x] * block[y][x];
            tmp[y][u] = s;
          }
        }
        for (int v = 0; v < 8; ++v) {
          for (int u = 0; u < 8; ++u) {
            double s = 0.0;
            for (int y = 0; y < 8; ++y) s += basis[v][y] * tmp[y][u];
            const double q = table[v * 8 + u];
            coef[v][u] = std::nearbyint(s / q) * q;
          }
        }
        for (int y = 0; y < 8; ++y) {
          for (int u = 0; u < 8; ++u) {
            double s = 0.0;
            for (int v = 0; v < 8; ++v) s += basis[v][y] * coef[v][u];
            tmp[y][u] = s;
          }
        }
        for (int y = 0; y < 8; ++y) {
          for (int x = 0; x < 8; ++x) {
            double s = 0.0;
            for (int u = 0; u < 8; ++u) s += basis[u][x] * tmp[y][u];
            block[y][x] = s;
          }
        }
        for (int y = 0; y < 8; ++y) {
          for (int x = 0; x < 8; ++x) {
            padded[(by + y) * pw + bx + x] = block[y][x];
          }
        }
      }
    }
    double* dst = out.data() + c * h * w;
    for (std::size_t y = 0; y < h; ++y) {
      for (std::size_t x = 0; x < w; ++x) {
        // Decoders emit 8-bit samples.
        dst[y * w + x] =
            std::clamp(std::nearbyint(padded[y * pw + x] + 128.0), 0.0, 255.0);
      }
    }
  }
  return Tensor(img.shape(), std::move(out));
}

Tensor Resize(const Tensor& img, std::size_t out_h, std::size_t out_w,
              ResampleKernel kernel) {
  RequireImage("Resize", img);
  if (out_h == 0 || out_w == 0) {
    throw DimensionError("Resize: target extent must be positive");
  }
  const std::size_t planes = img.dim(0), h = img.dim(1), w = img.dim(2);
  if (out_h == h && out_w == w) return img.detach();
  const auto rows = Contributions(h, out_h, kernel);
  const auto cols = Contributions(w, out_w, kernel);
  auto src = img.data();
  std::vector<double> tmp(planes * h * out_w);
  for (std::size_t c = 0; c < planes; ++c) {
    for (std::size_t y = 0; y < h; ++y) {
      const double* in = src.data() + (c * h + y) * w;
      double* dst = tmp.data() + (c * h + y) * out_w;
      for (std::size_t x = 0; x < out_w; ++x) {
        double acc = 0.0;
        for (std::size_t t = 0; t < cols[x].index.size(); ++t) {
          acc += cols[x].weight[t] * in[cols[x].index[t]];
        }
        dst[x] = acc;
      }
    }
  }
  std::vector<double> out(planes * out_h * out_w);
  for (std::size_t c = 0; c < planes; ++c) {
    for (std::size_t y = 0; y < out_h; ++y) {
      double* dst = out.data() + (c * out_h + y) * out_w;
      for (std::size_t x = 0; x < out_w; ++x) {
        double acc = 0.0;
        for (std::size_t t = 0; t < rows[y].index.size(); ++t) {
          acc += rows[y].weight[t] *
                 tmp[(c * h + rows[y].index[t]) * out_w + x];
        }
        dst[x] = acc;
      }
    }
  }
  return Tensor({planes, out_h, out_w}, std::move(out));
}

Tensor BicubicResize(const Tensor& img, std::size_t target) {
  return Resize(img, target, target, ResampleKernel::kBicubic);
}

void DegradationConfig::Validate(std::size_t hr_size) const {
  for (double p : {p_blur, p_noise, p_jpeg}) {
    if (!(p >= 0.0 && p <= 1.0)) {
      throw ConfigError("degradation probabilities must lie in [0, 1]");
    }
  }
  if (!(blur_sigma_range[0] >= 0.0 &&
        blur_sigma_range[0] <= blur_sigma_range[1])) {
    throw ConfigError("blur sigma range must be ordered and non-negative");
  }
  if (!(noise_sigma_range[0] >= 0.0 &&
        noise_sigma_range[0] <= noise_sigma_range[1])) {
    throw ConfigError("noise sigma range must be ordered and non-negative");
  }
  if (jpeg_quality_range[0] < 1 || jpeg_quality_range[1] > 100 ||
      jpeg_quality_range[0] > jpeg_quality_range[1]) {
    throw ConfigError("JPEG quality range must be ordered within [1, 100]");
  }
  if (lr_sizes.empty()) throw ConfigError("lr_sizes must not be empty");
  for (std::size_t s : lr_sizes) {
    if (s == 0 || s > hr_size) {
      throw ConfigError("LR size " + std::to_string(s) +
                        " must lie in [1, " + std::to_string(hr_size) + "]");
    }
  }
}

DegradedSample DegradeSample(const Tensor& hr, const DegradationConfig& cfg,
                             RngStream& stream) {
  RequireImage("DegradeSample", hr);
  const std::size_t h = hr.dim(1), w = hr.dim(2);
  cfg.Validate(std::min(h, w));

  DegradationRecord rec;
  rec.blur = stream.Bernoulli(cfg.p_blur);
  rec.noise = stream.Bernoulli(cfg.p_noise);
  rec.jpeg = stream.Bernoulli(cfg.p_jpeg);
  const double blur_sigma =
      stream.Uniform(cfg.blur_sigma_range[0], cfg.blur_sigma_range[1]);
  const double noise_sigma =
      stream.Uniform(cfg.noise_sigma_range[0], cfg.noise_sigma_range[1]);
  const int quality = static_cast<int>(
      stream.UniformInt(cfg.jpeg_quality_range[0], cfg.jpeg_quality_range[1]));
  rec.size = cfg.lr_sizes[static_cast<std::size_t>(
      stream.UniformInt(0, static_cast<std::int64_t>(cfg.lr_sizes.size()) - 1))];

  Tensor img = hr;
  if (rec.blur) {
    rec.blur_sigma = blur_sigma;
    img = GaussianBlur(img, blur_sigma);
  }
  if (rec.noise) {
    rec.noise_sigma = noise_sigma;
    img = AddNoise(img, noise_sigma, stream);
  }
  if (rec.jpeg) {
    rec.jpeg_quality = quality;
    img = JpegArtifact(img, quality);
  }
  img = Resize(img, rec.size, rec.size, ResampleKernel::kBicubic);
  if (cfg.upsample_back) {
    img = Resize(img, h, w, ResampleKernel::kBicubic);
  }
  // Cubic overshoot may leave the valid range.
  std::vector<double> px(img.data().begin(), img.data().end());
  for (double& v : px) v = std::clamp(v, 0.0, 255.0);
  return {Tensor(img.shape(), std::move(px)), rec};
}

Tensor EvalDownsample(const Tensor& hr, std::size_t size) {
  RequireImage("EvalDownsample", hr);
  const std::size_t h = hr.dim(1), w = hr.dim(2);
  if (size == 0 || size > std::min(h, w)) {
    throw DimensionError("EvalDownsample: size " + std::to_string(size) +
                         " outside [1, " + std::to_string(std::min(h, w)) +
                         "]");
  }
  const Tensor low = Resize(hr, size, size, ResampleKernel::kBilinear);
  return Resize(low, h, w, ResampleKernel::kBilinear);
}

}  // namespace wavedistill
