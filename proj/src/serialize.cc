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

#include "wavedistill/serialize.h"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>
#include <limits>
#include <string>
#include <type_traits>

#include "wavedistill/errors.h"

namespace wavedistill {
namespace {

constexpr char kMagic[4] = {'W', 'D', 'T', '1'};

template <typename T>
void PutLittleEndian(std::vector<std::uint8_t>& out, T value) {
  using U = std::conditional_t<sizeof(T) == 4, std::uint32_t, std::uint64_t>;
  const U bits = std::bit_cast<U>(value);
  for (std::size_t i = 0; i < sizeof(U); ++i) {
    out.push_back(static_cast<std::uint8_t>(bits >> (8 * i)));
  }
}

template <typename T>
T GetLittleEndian(std::span<const std::uint8_t> in, std::size_t offset) {
  using U = std::conditional_t<sizeof(T) == 4, std::uint32_t, std::uint64_t>;
  U bits = 0;
  for (std::size_t i = 0; i < sizeof(U); ++i) {
    bits |= static_cast<U>(in[offset + i]) << (8 * i);
  }
  return std::bit_cast<T>(bits);
}

}  // namespace

std::vector<std::uint8_t> EncodeTensor(const Tensor& t) {
  const Shape& shape = t.shape();
  if (shape.size() > std::numeric_limits<std::uint8_t>::max()) {
    throw DimensionError("WDT1: rank too large");
  }
  std::vector<std::uint8_t> out(std::begin(kMagic), std::end(kMagic));
  out.reserve(5 + 4 * shape.size() + 8 * t.numel());
  out.push_back(static_cast<std::uint8_t>(shape.size()));
  for (std::size_t e : shape) {
    if (e > std::numeric_limits<std::uint32_t>::max()) {
      throw DimensionError("WDT1: extent exceeds u32");
    }
    PutLittleEndian(out, static_cast<std::uint32_t>(e));
  }
  for (double v : t.data()) PutLittleEndian(out, v);
  return out;
}

Tensor DecodeTensor(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 5 || std::memcmp(bytes.data(), kMagic, 4) != 0) {
    throw IoError("WDT1: bad magic");
  }
  const std::size_t rank = bytes[4];
  std::size_t offset = 5;
  if (bytes.size() < offset + 4 * rank) throw IoError("WDT1: truncated header");
  Shape shape(rank);
  for (std::size_t i = 0; i < rank; ++i) {
    shape[i] = GetLittleEndian<std::uint32_t>(bytes, offset);
    offset += 4;
  }
  const std::size_t n = NumElements(shape);
  if (bytes.size() != offset + 8 * n) {
    throw IoError("WDT1: payload size " + std::to_string(bytes.size() - offset) +
                  " does not match shape " + ShapeToString(shape));
  }
  std::vector<double> data(n);
  for (std::size_t i = 0; i < n; ++i) {
    data[i] = GetLittleEndian<double>(bytes, offset);
    offset += 8;
  }
  return Tensor(std::move(shape), std::move(data));
}

void WriteTensorFile(const std::filesystem::path& path, const Tensor& t) {
  const auto bytes = EncodeTensor(t);
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw IoError("cannot open " + path.string() + " for writing");
  os.write(reinterpret_cast<const char*>(bytes.data()),
           static_cast<std::streamsize>(bytes.size()));
  if (!os) throw IoError("write failed: " + path.string());
}

Tensor ReadTensorFile(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(is)),
                                  std::istreambuf_iterator<char>());
  try {
    return DecodeTensor(bytes);
  } catch (const IoError& e) {
    throw IoError(path.string() + ": " + e.what());
  }
}

}  // namespace wavedistill
