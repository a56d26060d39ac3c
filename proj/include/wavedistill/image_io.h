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

// 8-bit binary PGM (P5) images mapped to [1,H,W] tensors on the 0..255 scale.

#ifndef WAVEDISTILL_IMAGE_IO_H_
#define WAVEDISTILL_IMAGE_IO_H_

#include <filesystem>

#include "wavedistill/tensor.h"

namespace wavedistill {

Tensor ReadPgm(const std::filesystem::path& path);

// Values are rounded to the nearest integer and clamped to [0, 255].
void WritePgm(const std::filesystem::path& path, const Tensor& img);

// Min-max stretch to [0, 255]; a flat image maps to 0.
Tensor NormalizeForDisplay(const Tensor& img);

}  // namespace wavedistill

#endif  // WAVEDISTILL_IMAGE_IO_H_
