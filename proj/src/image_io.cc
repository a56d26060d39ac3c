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

#include "wavedistill/image_io.h"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <string>
#include <vector>

#include "wavedistill/errors.h"

namespace wavedistill {
namespace {

// Next whitespace-delimited header token, skipping '#' comments.
std::string HeaderToken(std::istream& is) {
  std::string tok;
  int ch;
  while ((ch = is.get()) != EOF) {
    if (ch == '#') {
      while ((ch = is.get()) != EOF && ch != '\n') {
      }
      continue;
    }
    if (std::isspace(ch)) {
      if (!tok.empty()) break;
      continue;
    }
    tok.push_back(static_cast<char>(ch));
  }
  return tok;
}

}  // namespace

Tensor ReadPgm(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open image " + path.string());
  if (HeaderToken(is) != "P5") {
    throw IoError(path.string() + ": not a binary PGM (P5)");
  }
  std::size_t w = 0, h = 0, maxval = 0;
  try {
    w = std::stoul(HeaderToken(is));
    h = std::stoul(HeaderToken(is));
    maxval = std::stoul(HeaderToken(is));
  } catch (const std::logic_error&) {
    throw IoError(path.string() + ": malformed PGM header");
  }
  if (w == 0 || h == 0 || maxval == 0 || maxval > 255) {
    throw IoError(path.string() + ": unsupported PGM geometry or depth");
  }
  std::vector<unsigned char> raw(w * h);
  is.read(reinterpret_cast<char*>(raw.data()),
          static_cast<std::streamsize>(raw.size()));
  if (static_cast<std::size_t>(is.gcount()) != raw.size()) {
    throw IoError(path.string() + ": truncated pixel data");
  }
  std::vector<double> px(raw.size());
  const double scale = 255.0 / static_cast<double>(maxval);
  for (std::size_t i = 0; i < raw.size(); ++i) {
    px[i] = maxval == 255 ? raw[i] : std::round(raw[i] * scale);
  }
  return Tensor({1, h, w}, std::move(px));
}

void WritePgm(const std::filesystem::path& path, const Tensor& img) {
  if (img.rank() != 3 || img.dim(0) != 1) {
    throw DimensionError("WritePgm: expected [1,H,W], got " +
                         ShapeToString(img.shape()));
  }
  const std::size_t h = img.dim(1), w = img.dim(2);
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw IoError("cannot write image " + path.string());
  os << "P5\n" << w << ' ' << h << "\n255\n";
  std::vector<unsigned char> raw(w * h);
  auto px = img.data();
  for (std::size_t i = 0; i < raw.size(); ++i) {
    raw[i] = static_cast<unsigned char>(
        std::clamp(std::nearbyint(px[i]), 0.0, 255.0));
  }
  os.write(reinterpret_cast<const char*>(raw.data()),
           static_cast<std::streamsize>(raw.size()));
  if (!os) throw IoError("write failed: " + path.string());
}

Tensor NormalizeForDisplay(const Tensor& img) {
  auto px = img.data();
  const auto [lo, hi] = std::minmax_element(px.begin(), px.end());
  std::vector<double> out(px.size(), 0.0);
  const double range = *hi - *lo;
  if (range > 0.0) {
    for (std::size_t i = 0; i < px.size(); ++i) {
      out[i] = 255.0 * (px[i] - *lo) / range;
    }
  }
  return Tensor(img.shape(), std::move(out));
}

}  // namespace wavedistill
