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

#include "wavedistill/nets.h"

#include <algorithm>
#include <bit>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>

#include "wavedistill/errors.h"
#include "wavedistill/rng.h"
#include "wavedistill/serialize.h"
#include "wavedistill/wavelet.h"

namespace wavedistill {
namespace {

constexpr char kManifestName[] = "manifest.txt";
constexpr char kFormatTag[] = "wavedistill-checkpoint-1";

Tensor HeNormal(const Shape& shape, std::size_t fan_in, RngStream& rng) {
  const double std = std::sqrt(2.0 / static_cast<double>(fan_in));
  std::vector<double> v(NumElements(shape));
  for (double& x : v) x = std * rng.Normal();
  return Tensor(shape, std::move(v));
}

std::string JoinSizes(const std::vector<std::size_t>& v) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) s += ',';
    s += std::to_string(v[i]);
  }
  return s;
}

std::vector<std::size_t> SplitSizes(const std::string& s) {
  std::vector<std::size_t> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (!item.empty()) out.push_back(std::stoul(item));
  }
  return out;
}

}  // namespace

const char* DownsampleKindName(DownsampleKind kind) {
  return kind == DownsampleKind::kStrideConv ? "stride-conv" : "waveconv";
}

DownsampleKind ParseDownsampleKind(const std::string& name) {
  if (name == "stride-conv") return DownsampleKind::kStrideConv;
  if (name == "waveconv") return DownsampleKind::kWaveConv;
  throw ConfigError("unknown downsample kind '" + name +
                    "' (expected stride-conv or waveconv)");
}

void NetworkSpec::Validate() const {
  if (channels_per_stage.empty() ||
      channels_per_stage.size() != blocks_per_stage.size()) {
    throw ConfigError(
        "channels_per_stage and blocks_per_stage must be non-empty and of "
        "equal length");
  }
  for (std::size_t c : channels_per_stage) {
    if (c == 0) throw ConfigError("stage channel counts must be positive");
  }
  if (in_channels == 0 || embedding_dim == 0 || num_classes == 0) {
    throw ConfigError("in_channels, embedding_dim and num_classes must be > 0");
  }
  if (downsample_kernel == 0 || downsample_kernel % 2 == 0) {
    throw ConfigError("downsample_kernel must be odd");
  }
  const std::size_t factor = std::size_t{1} << channels_per_stage.size();
  if (input_size == 0 || input_size % factor != 0) {
    throw ConfigError("input_size " + std::to_string(input_size) +
                      " is not divisible by 2^" +
                      std::to_string(channels_per_stage.size()));
  }
}

NetworkSpec NetworkSpec::WithKind(DownsampleKind kind) const {
  NetworkSpec s = *this;
  s.downsample_kind = kind;
  return s;
}

void Model::Register(std::string name, Tensor& t) {
  t.set_requires_grad(true).set_name(name);
  params_.emplace_back(std::move(name), t);
}

void Model::RegisterNorm(const std::string& name, Norm& n) {
  Register(name + ".gamma", n.gamma);
  Register(name + ".beta", n.beta);
  n.state.running_mean.set_name(name + ".running_mean");
  n.state.running_var.set_name(name + ".running_var");
  buffers_.emplace_back(name + ".running_mean", n.state.running_mean);
  buffers_.emplace_back(name + ".running_var", n.state.running_var);
}

Model Model::Build(const NetworkSpec& spec, std::uint64_t seed) {
  spec.Validate();
  Model m;
  m.spec_ = spec;
  RngStream rng(DeriveSeed(seed, "init"));

  auto make_conv = [&](std::size_t in, std::size_t out, std::size_t k,
                       std::size_t stride) {
    Conv c;
    c.weight = HeNormal({out, in, k, k}, in * k * k, rng);
    c.stride = stride;
    c.padding = k / 2;
    return c;
  };
  auto make_norm = [](std::size_t ch) {
    Norm n;
    n.gamma = Tensor::Full({ch}, 1.0);
    n.beta = Tensor::Zeros({ch});
    n.state = BatchNormState::ForChannels(ch);
    return n;
  };
  auto make_act = [](std::size_t ch) { return Tensor::Full({ch}, 0.25); };

  const std::size_t c0 = spec.channels_per_stage.front();
  m.stem_ = make_conv(spec.in_channels, c0, 3, 1);
  m.stem_bn_ = make_norm(c0);
  m.stem_act_ = make_act(c0);
  m.Register("stem.conv.weight", m.stem_.weight);
  m.RegisterNorm("stem.bn", m.stem_bn_);
  m.Register("stem.prelu.slope", m.stem_act_);

  const bool wave = spec.downsample_kind == DownsampleKind::kWaveConv;
  std::size_t prev = c0;
  m.stages_.resize(spec.channels_per_stage.size());
  for (std::size_t s = 0; s < m.stages_.size(); ++s) {
    Stage& st = m.stages_[s];
    const std::size_t ch = spec.channels_per_stage[s];
    const std::string base = "stage" + std::to_string(s + 1);
    st.down = make_conv(prev, ch, spec.downsample_kernel, wave ? 1 : 2);
    st.down_bn = make_norm(ch);
    m.Register(base + ".down.conv.weight", st.down.weight);
    m.RegisterNorm(base + ".down.bn", st.down_bn);
    for (std::size_t b = 0; b < spec.blocks_per_stage[s]; ++b) {
      Block blk;
      const std::string bn = base + ".block" + std::to_string(b + 1);
      blk.conv1 = make_conv(ch, ch, 3, 1);
      blk.bn1 = make_norm(ch);
      blk.act1 = make_act(ch);
      blk.conv2 = make_conv(ch, ch, 3, 1);
      blk.bn2 = make_norm(ch);
      blk.act_out = make_act(ch);
      st.blocks.push_back(std::move(blk));
      Block& r = st.blocks.back();
      m.Register(bn + ".conv1.weight", r.conv1.weight);
      m.RegisterNorm(bn + ".bn1", r.bn1);
      m.Register(bn + ".prelu1.slope", r.act1);
      m.Register(bn + ".conv2.weight", r.conv2.weight);
      m.RegisterNorm(bn + ".bn2", r.bn2);
      m.Register(bn + ".prelu_out.slope", r.act_out);
    }
    prev = ch;
  }

  m.embed_ = HeNormal({prev, spec.embedding_dim}, prev, rng);
  m.Register("embed.weight", m.embed_);

  std::vector<double> head(spec.embedding_dim * spec.num_classes);
  for (double& v : head) v = 0.01 * rng.Normal();
  m.head_.weight = Tensor({spec.embedding_dim, spec.num_classes}, head);
  m.Register("head.weight", m.head_.weight);
  return m;
}

StageFeatures Model::Forward(const Tensor& x, const ForwardOptions& opts) {
  const Shape expected{x.rank() == 4 ? x.dim(0) : 0, spec_.in_channels,
                       spec_.input_size, spec_.input_size};
  if (x.rank() != 4 || x.shape() != expected || x.dim(0) == 0) {
    throw DimensionError("Model::Forward: expected input [N," +
                         std::to_string(spec_.in_channels) + "," +
                         std::to_string(spec_.input_size) + "," +
                         std::to_string(spec_.input_size) + "], got " +
                         ShapeToString(x.shape()));
  }
  const Mode mode = opts.mode;
  auto conv = [](const Tensor& in, const Conv& c) {
    return Conv2d(in, c.weight, c.stride, c.padding);
  };
  auto norm = [mode](const Tensor& in, Norm& n) {
    return BatchNorm(in, n.gamma, n.beta, n.state, mode);
  };

  StageFeatures out;
  Tensor h = PRelu(norm(conv(x, stem_), stem_bn_), stem_act_);
  const bool wave = spec_.downsample_kind == DownsampleKind::kWaveConv;
  for (Stage& st : stages_) {
    Tensor down = h;
    if (wave) {
      down = opts.avgpool_downsample ? Scale(AvgPool2x2(h), 2.0)
                                     : WaveConvDownsample(h);
    }
    h = norm(conv(down, st.down), st.down_bn);
    for (Block& b : st.blocks) {
      Tensor y = PRelu(norm(conv(h, b.conv1), b.bn1), b.act1);
      y = norm(conv(y, b.conv2), b.bn2);
      h = PRelu(Add(y, h), b.act_out);
    }
    out.stages.push_back(h);
  }
  out.embedding = Linear(GlobalAvgPool(h), embed_);
  return out;
}

std::vector<NamedTensor> Model::Parameters() const { return params_; }

std::vector<NamedTensor> Model::Buffers() const { return buffers_; }

std::size_t Model::ParameterCount(bool include_head) const {
  std::size_t n = 0;
  for (const auto& [name, t] : params_) {
    if (!include_head && name == "head.weight") continue;
    n += t.numel();
  }
  return n;
}

std::uint64_t Model::Checksum() const {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  auto mix = [&h](const std::vector<NamedTensor>& list) {
    for (const auto& [name, t] : list) {
      for (double v : t.data()) {
        std::uint64_t bits = std::bit_cast<std::uint64_t>(v);
        for (int i = 0; i < 8; ++i) {
          h ^= (bits >> (8 * i)) & 0xff;
          h *= 0x100000001b3ULL;
        }
      }
    }
  };
  mix(params_);
  mix(buffers_);
  return h;
}

Model Model::Clone() const {
  Model m = Build(spec_, 0);
  m.head_.scale = head_.scale;
  m.head_.margin = head_.margin;
  for (std::size_t i = 0; i < params_.size(); ++i) {
    auto src = params_[i].second.data();
    std::copy(src.begin(), src.end(),
              m.params_[i].second.mutable_data().begin());
  }
  for (std::size_t i = 0; i < buffers_.size(); ++i) {
    auto src = buffers_[i].second.data();
    std::copy(src.begin(), src.end(),
              m.buffers_[i].second.mutable_data().begin());
  }
  return m;
}

void SaveCheckpoint(const std::filesystem::path& dir, const Model& model,
                    const CheckpointMeta& meta,
                    const std::vector<NamedTensor>& extra) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw IoError("cannot create " + dir.string() + ": " + ec.message());
  const NetworkSpec& s = model.spec();
  std::vector<NamedTensor> all = model.Parameters();
  for (auto& b : model.Buffers()) all.push_back(b);
  for (auto& e : extra) all.push_back(e);

  std::ofstream os(dir / kManifestName, std::ios::trunc);
  if (!os) throw IoError("cannot write " + (dir / kManifestName).string());
  std::ostringstream scale, margin;
  scale.precision(17);
  margin.precision(17);
  scale << model.head().scale;
  margin << model.head().margin;
  os << "format = " << kFormatTag << '\n'
     << "input_size = " << s.input_size << '\n'
     << "in_channels = " << s.in_channels << '\n'
     << "channels_per_stage = " << JoinSizes(s.channels_per_stage) << '\n'
     << "blocks_per_stage = " << JoinSizes(s.blocks_per_stage) << '\n'
     << "embedding_dim = " << s.embedding_dim << '\n'
     << "downsample_kind = " << DownsampleKindName(s.downsample_kind) << '\n'
     << "downsample_kernel = " << s.downsample_kernel << '\n'
     << "num_classes = " << s.num_classes << '\n'
     << "arcface_scale = " << scale.str() << '\n'
     << "arcface_margin = " << margin.str() << '\n'
     << "seed = " << meta.seed << '\n'
     << "epoch = " << meta.epoch << '\n';
  os << "extra =";
  for (std::size_t i = 0; i < extra.size(); ++i) {
    os << (i ? "," : " ") << extra[i].first;
  }
  os << '\n';
  if (!os) throw IoError("write failed: " + (dir / kManifestName).string());
  for (const auto& [name, t] : all) WriteTensorFile(dir / (name + ".wdt"), t);
}

LoadedCheckpoint LoadCheckpoint(const std::filesystem::path& dir) {
  const auto manifest = dir / kManifestName;
  std::ifstream is(manifest);
  if (!is) throw IoError("checkpoint manifest not found at " + manifest.string());
  std::map<std::string, std::string> kv;
  std::string line;
  while (std::getline(is, line)) {
    const auto eq = line.find('=');
    if (eq == std::string::npos) continue;
    auto trim = [](std::string v) {
      const auto b = v.find_first_not_of(" \t\r");
      const auto e = v.find_last_not_of(" \t\r");
      return b == std::string::npos ? std::string() : v.substr(b, e - b + 1);
    };
    kv[trim(line.substr(0, eq))] = trim(line.substr(eq + 1));
  }
  auto get = [&](const std::string& key) {
    auto it = kv.find(key);
    if (it == kv.end()) {
      throw IoError(manifest.string() + ": missing key '" + key + "'");
    }
    return it->second;
  };
  if (get("format") != kFormatTag) {
    throw IoError(manifest.string() + ": unsupported format " + get("format"));
  }
  NetworkSpec spec;
  CheckpointMeta meta;
  try {
    spec.input_size = std::stoul(get("input_size"));
    spec.in_channels = std::stoul(get("in_channels"));
    spec.channels_per_stage = SplitSizes(get("channels_per_stage"));
    spec.blocks_per_stage = SplitSizes(get("blocks_per_stage"));
    spec.embedding_dim = std::stoul(get("embedding_dim"));
    spec.downsample_kind = ParseDownsampleKind(get("downsample_kind"));
    spec.downsample_kernel = std::stoul(get("downsample_kernel"));
    spec.num_classes = std::stoul(get("num_classes"));
    meta.seed = std::stoull(get("seed"));
    meta.epoch = std::stoul(get("epoch"));
  } catch (const std::logic_error& e) {
    throw IoError(manifest.string() + ": malformed value (" + e.what() + ")");
  }

  LoadedCheckpoint out{Model::Build(spec, meta.seed), meta, {}};
  out.model.head().scale = std::stod(get("arcface_scale"));
  out.model.head().margin = std::stod(get("arcface_margin"));
  auto restore = [&](const std::vector<NamedTensor>& list) {
    for (const auto& [name, t] : list) {
      const Tensor loaded = ReadTensorFile(dir / (name + ".wdt"));
      if (loaded.shape() != t.shape()) {
        throw IoError("checkpoint tensor " + name + " has shape " +
                      ShapeToString(loaded.shape()) + ", expected " +
                      ShapeToString(t.shape()));
      }
      Tensor dst = t;
      std::copy(loaded.data().begin(), loaded.data().end(),
                dst.mutable_data().begin());
    }
  };
  restore(out.model.Parameters());
  restore(out.model.Buffers());
  for (const std::string& name : [&] {
         std::vector<std::string> names;
         std::stringstream ss(kv.count("extra") ? kv["extra"] : "");
         std::string item;
         while (std::getline(ss, item, ',')) {
           if (!item.empty()) names.push_back(item);
         }
         return names;
       }()) {
    out.extra.emplace_back(name, ReadTensorFile(dir / (name + ".wdt")));
  }
  return out;
}

}  // namespace wavedistill
