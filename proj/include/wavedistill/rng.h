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

#ifndef WAVEDISTILL_RNG_H_
#define WAVEDISTILL_RNG_H_

#include <cstdint>
#include <random>
#include <string_view>

namespace wavedistill {

// Derives an independent seed for a named sub-stream ("dataset", "init",
// "degrade", "protocol", ...) of a root seed.
std::uint64_t DeriveSeed(std::uint64_t root, std::string_view stream_name);

// Random draws keyed by (seed, sample_index, epoch). Two streams with equal
// keys produce identical sequences no matter when or on which thread they
// are created. Conversions to uniform and normal variates are done here
// rather than with <random> distributions so the sequences are identical
// across standard library implementations.
class RngStream {
 public:
  explicit RngStream(std::uint64_t seed, std::uint64_t sample_index = 0,
                     std::uint64_t epoch = 0);

  std::uint64_t NextU64() { return engine_(); }
  // [0, 1)
  double Uniform();
  double Uniform(double lo, double hi) { return lo + (hi - lo) * Uniform(); }
  // Integer in [lo, hi], unbiased.
  std::int64_t UniformInt(std::int64_t lo, std::int64_t hi);
  double Normal();
  bool Bernoulli(double p) { return Uniform() < p; }

  std::uint64_t seed() const { return seed_; }
  std::uint64_t sample_index() const { return sample_index_; }
  std::uint64_t epoch() const { return epoch_; }

 private:
  std::uint64_t seed_;
  std::uint64_t sample_index_;
  std::uint64_t epoch_;
  std::mt19937_64 engine_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace wavedistill

#endif  // WAVEDISTILL_RNG_H_
