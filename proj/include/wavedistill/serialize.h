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

// WDT1 tensor files:
//   "WDT1" | u8 rank | rank x u32 extent (LE) | row-major float64 payload (LE)

#ifndef WAVEDISTILL_SERIALIZE_H_
#define WAVEDISTILL_SERIALIZE_H_

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "wavedistill/tensor.h"

namespace wavedistill {

std::vector<std::uint8_t> EncodeTensor(const Tensor& t);
Tensor DecodeTensor(std::span<const std::uint8_t> bytes);

void WriteTensorFile(const std::filesystem::path& path, const Tensor& t);
Tensor ReadTensorFile(const std::filesystem::path& path);

}  // namespace wavedistill

#endif  // WAVEDISTILL_SERIALIZE_H_
