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

#include "wavedistill/synth.h"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <numbers>
#include <set>
#include <sstream>
#include <string>

#include "wavedistill/errors.h"
#include "wavedistill/image_io.h"

namespace wavedistill {
namespace {

constexpr std::size_t kMaxCodeDraws = 100000;

std::string ImageName(std::size_t i) {
  char buf[48];
  std::snprintf(buf, sizeof(buf), "images/img_%05zu.pgm", i);
  return buf;
}

std::vector<std::string> SplitCsvLine(const std::string& line) {
  std::vector<std::string> out;
  std::stringstream ss(line);
  std::string cell;
  while (std::getline(ss, cell, ',')) out.push_back(cell);
  return out;
}

std::vector<std::vector<std::string>> ReadCsv(const std::filesystem::path& p,
                                              const std::string& header,
                                              std::size_t columns) {
  std::ifstream is(p);
  if (!is) throw IoError("cannot open " + p.string());
  std::string line;
  if (!std::getline(is, line) || line != header) {
    throw IoError(p.string() + ": expected header '" + header + "'");
  }
  std::vector<std::vector<std::string>> rows;
  std::size_t lineno = 1;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.empty()) continue;
    auto cells = SplitCsvLine(line);
    if (cells.size() != columns) {
      throw IoError(p.string() + ":" + std::to_string(lineno) + ": expected " +
                    std::to_string(columns) + " fields");
    }
    rows.push_back(std::move(cells));
  }
  return rows;
}

// basis[u * S + t] = cos(pi * u * (t - shift + 0.5) / S) for u in [lo, hi).
std::vector<double> CosineBasis(std::size_t s, std::size_t lo, std::size_t hi,
                                double shift) {
  std::vector<double> basis((hi - lo) * s);
  for (std::size_t u = lo; u < hi; ++u) {
    for (std::size_t t = 0; t < s; ++t) {
      basis[(u - lo) * s + t] =
          std::cos(std::numbers::pi * static_cast<double>(u) *
                   (static_cast<double>(t) - shift + 0.5) /
                   static_cast<double>(s));
    }
  }
  return basis;
}

// out[y, x] = sum_{u,v} coef[u, v] * by[u, y] * bx[v, x]
std::vector<double> Synthesize(std::span<const double> coef, std::size_t n,
                               const std::vector<double>& by,
                               const std::vector<double>& bx, std::size_t s) {
  std::vector<double> tmp(n * s, 0.0);  // tmp[u, x] = sum_v coef[u,v] bx[v,x]
  for (std::size_t u = 0; u < n; ++u) {
    for (std::size_t v = 0; v < n; ++v) {
      const double c = coef[u * n + v];
      for (std::size_t x = 0; x < s; ++x) tmp[u * s + x] += c * bx[v * s + x];
    }
  }
  std::vector<double> out(s * s, 0.0);
  for (std::size_t u = 0; u < n; ++u) {
    for (std::size_t y = 0; y < s; ++y) {
      const double b = by[u * s + y];
      for (std::size_t x = 0; x < s; ++x) out[y * s + x] += b * tmp[u * s + x];
    }
  }
  return out;
}

Nuisance DrawNuisance(const SynthSpec& spec, RngStream& rng) {
  Nuisance n;
  n.contrast = rng.Uniform(1.0 - spec.contrast_jitter, 1.0 + spec.contrast_jitter);
  n.dx = rng.Uniform(-spec.max_shift, spec.max_shift);
  n.dy = rng.Uniform(-spec.max_shift, spec.max_shift);
  n.texture_rms =
      rng.Uniform(spec.texture_amplitude[0], spec.texture_amplitude[1]);
  return n;
}

}  // namespace

void SynthSpec::Validate() const {
  if (num_identities < 1) throw ConfigError("num_identities must be >= 1");
  if (samples_per_identity < 2) {
    throw ConfigError("samples_per_identity must be >= 2");
  }
  if (image_size < 8 || image_size % 4 != 0) {
    throw ConfigError("image_size must be a multiple of 4 and >= 8, got " +
                      std::to_string(image_size));
  }
  if (basis_order < 1 || basis_order > image_size / 4) {
    throw ConfigError("identity basis order must lie in [1, image_size/4]");
  }
  if (!(contrast_jitter >= 0.0 && contrast_jitter < 1.0)) {
    throw ConfigError("contrast_jitter must lie in [0, 1)");
  }
  if (!(max_shift >= 0.0)) throw ConfigError("max_shift must be >= 0");
  if (!(texture_amplitude[0] >= 0.0 &&
        texture_amplitude[1] >= texture_amplitude[0])) {
    throw ConfigError("texture amplitude range must satisfy 0 <= lo <= hi");
  }
  if (!(min_identity_distance >= 0.0 && min_identity_distance < 2.0)) {
    throw ConfigError("min_identity_distance must lie in [0, 2)");
  }
  if (!(train_fraction > 0.0 && train_fraction < 1.0)) {
    throw ConfigError("train_fraction must lie in (0, 1)");
  }
}

Tensor Dataset::Image(std::size_t i) const {
  const std::size_t s = image_size();
  auto px = images.data().subspan(i * s * s, s * s);
  return Tensor({1, s, s}, std::vector<double>(px.begin(), px.end()));
}

Tensor Dataset::Batch(std::span<const std::size_t> indices) const {
  const std::size_t s = image_size();
  const std::size_t plane = s * s;
  std::vector<double> out(indices.size() * plane);
  auto px = images.data();
  for (std::size_t b = 0; b < indices.size(); ++b) {
    if (indices[b] >= size()) throw DimensionError("Batch: index out of range");
    std::copy_n(px.begin() + static_cast<std::ptrdiff_t>(indices[b] * plane),
                plane, out.begin() + static_cast<std::ptrdiff_t>(b * plane));
  }
  return Tensor({indices.size(), 1, s, s}, std::move(out));
}

Tensor IdentityComponent(const SynthSpec& spec, std::span<const double> code,
                         const Nuisance& n) {
  const std::size_t s = spec.image_size, b = spec.basis_order;
  if (code.size() != b * b) {
    throw DimensionError("identity code must have B*B entries");
  }
  const auto by = CosineBasis(s, 0, b, n.dy);
  const auto bx = CosineBasis(s, 0, b, n.dx);
  auto px = Synthesize(code, b, by, bx, s);
  for (double& v : px) v *= 100.0 * n.contrast;
  return Tensor({1, s, s}, std::move(px));
}

Tensor TextureComponent(const SynthSpec& spec, const Nuisance& n,
                        RngStream& rng) {
  const std::size_t s = spec.image_size, lo = s / 4, m = s - lo;
  std::vector<double> coef(m * m);
  for (double& c : coef) c = rng.Normal();
  const auto basis = CosineBasis(s, lo, s, 0.0);
  auto px = Synthesize(coef, m, basis, basis, s);
  double energy = 0.0;
  for (double v : px) energy += v * v;
  const double rms = std::sqrt(energy / static_cast<double>(px.size()));
  const double gain = rms > 0.0 ? n.texture_rms / rms : 0.0;
  for (double& v : px) v *= gain;
  return Tensor({1, s, s}, std::move(px));
}

std::vector<std::vector<double>> DrawIdentityCodes(const SynthSpec& spec,
                                                   RngStream& rng) {
  const std::size_t dim = spec.basis_order * spec.basis_order;
  std::vector<std::vector<double>> codes;
  std::size_t draws = 0;
  while (codes.size() < spec.num_identities) {
    if (draws++ >= kMaxCodeDraws) {
      throw ConfigError(
          "identity rejection sampling failed after 100000 draws (identities "
          "too crowded): use fewer identities or a larger basis order");
    }
    std::vector<double> c(dim);
    double norm = 0.0;
    for (double& v : c) {
      v = rng.Normal();
      norm += v * v;
    }
    norm = std::sqrt(norm);
    if (norm == 0.0) continue;
    for (double& v : c) v /= norm;
    bool ok = true;
    for (const auto& other : codes) {
      double d2 = 0.0;
      for (std::size_t i = 0; i < dim; ++i) {
        d2 += (c[i] - other[i]) * (c[i] - other[i]);
      }
      if (std::sqrt(d2) <= spec.min_identity_distance) {
        ok = false;
        break;
      }
    }
    if (ok) codes.push_back(std::move(c));
  }
  return codes;
}

Dataset GenerateDataset(const SynthSpec& spec) {
  spec.Validate();
  const std::uint64_t root = DeriveSeed(spec.seed, "dataset");
  RngStream code_rng(root);
  Dataset ds;
  ds.num_identities = spec.num_identities;
  ds.identity_codes = DrawIdentityCodes(spec, code_rng);

  const std::size_t s = spec.image_size, per = spec.samples_per_identity;
  const std::size_t m = spec.num_identities * per, plane = s * s;
  std::vector<double> px(m * plane);
  ds.labels.resize(m);
  for (std::size_t i = 0; i < m; ++i) {
    const std::size_t id = i / per;
    ds.labels[i] = static_cast<int>(id);
    RngStream rng(root, i + 1);
    const Nuisance n = DrawNuisance(spec, rng);
    const Tensor idc = IdentityComponent(spec, ds.identity_codes[id], n);
    const Tensor tex = TextureComponent(spec, n, rng);
    auto a = idc.data(), t = tex.data();
    for (std::size_t k = 0; k < plane; ++k) {
      px[i * plane + k] =
          std::nearbyint(std::clamp(128.0 + a[k] + t[k], 0.0, 255.0));
    }
  }
  ds.images = Tensor({m, 1, s, s}, std::move(px));

  // Identity-stratified split: each identity contributes the same share.
  RngStream split_rng(DeriveSeed(spec.seed, "split"));
  const auto n_train = static_cast<std::size_t>(
      std::lround(spec.train_fraction * static_cast<double>(per)));
  if (n_train == 0 || n_train == per) {
    throw ConfigError("train_fraction leaves an empty train or eval split");
  }
  for (std::size_t id = 0; id < spec.num_identities; ++id) {
    std::vector<std::size_t> idx(per);
    for (std::size_t k = 0; k < per; ++k) idx[k] = id * per + k;
    for (std::size_t k = per - 1; k > 0; --k) {
      const auto j = static_cast<std::size_t>(
          split_rng.UniformInt(0, static_cast<std::int64_t>(k)));
      std::swap(idx[k], idx[j]);
    }
    ds.train_indices.insert(ds.train_indices.end(), idx.begin(),
                            idx.begin() + static_cast<std::ptrdiff_t>(n_train));
    ds.eval_indices.insert(ds.eval_indices.end(),
                           idx.begin() + static_cast<std::ptrdiff_t>(n_train),
                           idx.end());
  }
  std::sort(ds.train_indices.begin(), ds.train_indices.end());
  std::sort(ds.eval_indices.begin(), ds.eval_indices.end());
  return ds;
}

CandidatePairs EnumeratePairs(std::span<const int> labels,
                              std::span<const std::size_t> members) {
  CandidatePairs out;
  for (std::size_t a = 0; a < members.size(); ++a) {
    for (std::size_t b = a + 1; b < members.size(); ++b) {
      const std::size_t i = members[a], j = members[b];
      if (i >= labels.size() || j >= labels.size()) {
        throw DimensionError("EnumeratePairs: member index out of range");
      }
      if (i == j) continue;
      (labels[i] == labels[j] ? out.genuine : out.impostor).emplace_back(i, j);
    }
  }
  return out;
}

VerificationProtocol BuildProtocol(std::span<const int> labels,
                                   std::span<const std::size_t> members,
                                   std::uint64_t seed,
                                   std::size_t genuine_per_fold) {
  std::set<int> ids;
  for (std::size_t i : members) {
    if (i >= labels.size()) throw DimensionError("BuildProtocol: bad member");
    ids.insert(labels[i]);
  }
  if (ids.size() < 2) {
    throw ConfigError("verification protocol needs at least 2 identities, got " +
                      std::to_string(ids.size()));
  }
  CandidatePairs cand = EnumeratePairs(labels, members);
  constexpr std::size_t kFolds = VerificationProtocol::kFolds;
  const std::size_t avail =
      std::min(cand.genuine.size(), cand.impostor.size()) / kFolds;
  if (genuine_per_fold == 0) genuine_per_fold = avail;
  if (genuine_per_fold == 0 || genuine_per_fold > avail) {
    throw ConfigError(
        "insufficient samples for the verification protocol: " +
        std::to_string(cand.genuine.size()) + " genuine and " +
        std::to_string(cand.impostor.size()) + " impostor candidates, need " +
        std::to_string(kFolds * std::max<std::size_t>(genuine_per_fold, 1)) +
        " of each");
  }

  RngStream rng(seed);
  auto shuffle = [&rng](auto& v) {
    for (std::size_t k = v.size() - 1; k > 0; --k) {
      const auto j = static_cast<std::size_t>(
          rng.UniformInt(0, static_cast<std::int64_t>(k)));
      std::swap(v[k], v[j]);
    }
  };
  shuffle(cand.genuine);
  shuffle(cand.impostor);

  VerificationProtocol proto;
  proto.pairs.reserve(2 * kFolds * genuine_per_fold);
  for (std::size_t f = 0; f < kFolds; ++f) {
    for (int same = 1; same >= 0; --same) {
      const auto& src = same ? cand.genuine : cand.impostor;
      for (std::size_t k = 0; k < genuine_per_fold; ++k) {
        auto [i, j] = src[f * genuine_per_fold + k];
        if (rng.Bernoulli(0.5)) std::swap(i, j);
        proto.pairs.push_back({i, j, same == 1, f});
      }
    }
  }
  return proto;
}

VerificationProtocol BuildProtocol(std::span<const int> labels,
                                   std::uint64_t seed,
                                   std::size_t genuine_per_fold) {
  std::vector<std::size_t> all(labels.size());
  for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
  return BuildProtocol(labels, all, seed, genuine_per_fold);
}

void SaveDataset(const std::filesystem::path& dir, const Dataset& data,
                 const VerificationProtocol& protocol) {
  std::filesystem::create_directories(dir / "images");
  std::vector<const char*> split(data.size(), "train");
  for (std::size_t i : data.eval_indices) split[i] = "eval";
  std::ofstream labels(dir / "labels.csv", std::ios::binary | std::ios::trunc);
  if (!labels) throw IoError("cannot write " + (dir / "labels.csv").string());
  labels << "filename,identity,split\n";
  for (std::size_t i = 0; i < data.size(); ++i) {
    WritePgm(dir / ImageName(i), data.Image(i));
    labels << ImageName(i) << ',' << data.labels[i] << ',' << split[i] << '\n';
  }
  std::ofstream pairs(dir / "pairs.csv", std::ios::binary | std::ios::trunc);
  if (!pairs) throw IoError("cannot write " + (dir / "pairs.csv").string());
  pairs << "probe,gallery,same,fold\n";
  for (const auto& p : protocol.pairs) {
    pairs << ImageName(p.probe) << ',' << ImageName(p.gallery) << ','
          << (p.same ? 1 : 0) << ',' << p.fold << '\n';
  }
  if (!labels || !pairs) throw IoError("write failed in " + dir.string());
}

StoredDataset LoadDataset(const std::filesystem::path& dir) {
  if (!std::filesystem::exists(dir / "labels.csv")) {
    throw IoError("dataset not found at " + dir.string() +
                  " (labels.csv missing)");
  }
  StoredDataset out;
  Dataset& ds = out.data;
  const auto rows = ReadCsv(dir / "labels.csv", "filename,identity,split", 3);
  if (rows.empty()) throw IoError("labels.csv lists no images");
  std::map<std::string, std::size_t> index;
  std::vector<double> px;
  std::size_t s = 0;
  int max_label = -1;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const Tensor img = ReadPgm(dir / rows[i][0]);
    if (img.dim(1) != img.dim(2) || (s != 0 && img.dim(1) != s)) {
      throw IoError(rows[i][0] + ": all images must be square and equal-sized");
    }
    s = img.dim(1);
    auto d = img.data();
    px.insert(px.end(), d.begin(), d.end());
    int label = 0;
    try {
      label = std::stoi(rows[i][1]);
    } catch (const std::logic_error&) {
      throw IoError("labels.csv: bad identity '" + rows[i][1] + "'");
    }
    if (label < 0) throw IoError("labels.csv: negative identity");
    ds.labels.push_back(label);
    max_label = std::max(max_label, label);
    if (rows[i][2] == "train") {
      ds.train_indices.push_back(i);
    } else if (rows[i][2] == "eval") {
      ds.eval_indices.push_back(i);
    } else {
      throw IoError("labels.csv: split must be train or eval");
    }
    index[rows[i][0]] = i;
  }
  ds.images = Tensor({rows.size(), 1, s, s}, std::move(px));
  ds.num_identities = static_cast<std::size_t>(max_label + 1);

  if (!std::filesystem::exists(dir / "pairs.csv")) {
    throw IoError("protocol not found at " + (dir / "pairs.csv").string());
  }
  for (const auto& r :
       ReadCsv(dir / "pairs.csv", "probe,gallery,same,fold", 4)) {
    auto pi = index.find(r[0]), gi = index.find(r[1]);
    if (pi == index.end() || gi == index.end()) {
      throw IoError("pairs.csv references an image not in labels.csv");
    }
    VerificationPair p;
    p.probe = pi->second;
    p.gallery = gi->second;
    p.same = r[2] == "1";
    try {
      p.fold = std::stoul(r[3]);
    } catch (const std::logic_error&) {
      throw IoError("pairs.csv: bad fold '" + r[3] + "'");
    }
    out.protocol.pairs.push_back(p);
  }
  return out;
}

}  // namespace wavedistill
