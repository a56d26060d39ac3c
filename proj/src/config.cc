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

#include "wavedistill/config.h"

#include <algorithm>
#include <cstdlib>
#include <fstream>
#include <set>
#include <sstream>

#include "json.hpp"
#include "wavedistill/errors.h"

namespace wavedistill {
namespace {

using nlohmann::json;

// Reads keys of one JSON object into fields, rejecting unknown keys.
class Section {
 public:
  Section(const json& parent, const char* name) : name_(name) {
    if (!parent.contains(name)) return;
    obj_ = &parent.at(name);
    if (!obj_->is_object()) {
      throw ConfigError(std::string("config section '") + name +
                        "' must be an object");
    }
  }

  template <typename T>
  Section& Field(const char* key, T& out) {
    known_.insert(key);
    if (obj_ == nullptr || !obj_->contains(key)) return *this;
    try {
      out = obj_->at(key).get<T>();
    } catch (const json::exception& e) {
      throw ConfigError(std::string("config key ") + Path(key) + ": " +
                        e.what());
    }
    return *this;
  }

  void Finish() const {
    if (obj_ == nullptr) return;
    for (const auto& [key, _] : obj_->items()) {
      if (!known_.count(key)) {
        throw ConfigError("unknown config key " + Path(key.c_str()));
      }
    }
  }

 private:
  std::string Path(const char* key) const {
    return std::string(name_) + "." + key;
  }

  const char* name_;
  const json* obj_ = nullptr;
  std::set<std::string> known_;
};

json ToJson(const RunConfig& c) {
  json j;
  j["seed"] = c.seed;
  j["out_dir"] = c.out_dir.string();
  j["threads"] = c.threads;
  j["deterministic"] = c.deterministic;
  const SynthSpec& s = c.synth;
  j["synth"] = {{"num_identities", s.num_identities},
                {"samples_per_identity", s.samples_per_identity},
                {"image_size", s.image_size},
                {"basis_order", s.basis_order},
                {"contrast_jitter", s.contrast_jitter},
                {"max_shift", s.max_shift},
                {"texture_amplitude", s.texture_amplitude},
                {"min_identity_distance", s.min_identity_distance},
                {"train_fraction", s.train_fraction}};
  const NetworkSpec& n = c.network;
  j["network"] = {{"channels_per_stage", n.channels_per_stage},
                  {"blocks_per_stage", n.blocks_per_stage},
                  {"embedding_dim", n.embedding_dim},
                  {"downsample_kernel", n.downsample_kernel}};
  const DegradationConfig& d = c.degradation;
  j["degradation"] = {{"p_blur", d.p_blur},
                      {"p_noise", d.p_noise},
                      {"p_jpeg", d.p_jpeg},
                      {"blur_sigma_range", d.blur_sigma_range},
                      {"noise_sigma_range", d.noise_sigma_range},
                      {"jpeg_quality_range", d.jpeg_quality_range},
                      {"lr_sizes", d.lr_sizes},
                      {"upsample_back", d.upsample_back}};
  const TrainConfig& t = c.train;
  j["train"] = {{"epochs", t.epochs},
                {"batch_size", t.batch_size},
                {"learning_rate", t.learning_rate},
                {"lr_milestones", t.lr_milestones},
                {"momentum", t.momentum},
                {"temperature", t.distill.temperature},
                {"lambda1", t.distill.lambda1},
                {"lambda2", t.distill.lambda2},
                {"arcface_scale", t.arcface_scale},
                {"arcface_margin", t.arcface_margin},
                {"grad_clip_norm", t.grad_clip_norm}};
  return j;
}

}  // namespace

void RunConfig::Resolve() {
  synth.seed = seed;
  train.seed = seed;
  network.input_size = synth.image_size;
  network.num_classes = synth.num_identities;
  if (threads == 0) throw ConfigError("threads must be >= 1");
  synth.Validate();
  network.Validate();
  degradation.Validate(synth.image_size);
  train.Validate();
}

std::string RunConfigToJson(const RunConfig& cfg) {
  return ToJson(cfg).dump(2) + "\n";
}

RunConfig RunConfigFromJson(const std::string& text, RunConfig base) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
  if (!j.is_object()) throw ConfigError("config root must be a JSON object");
  RunConfig& c = base;

  static const std::set<std::string> kTop = {
      "seed", "out_dir", "threads", "deterministic",
      "synth", "network", "degradation", "train"};
  for (const auto& [key, _] : j.items()) {
    if (!kTop.count(key)) throw ConfigError("unknown config key " + key);
  }
  try {
    if (j.contains("seed")) c.seed = j.at("seed").get<std::uint64_t>();
    if (j.contains("out_dir")) c.out_dir = j.at("out_dir").get<std::string>();
    if (j.contains("threads")) c.threads = j.at("threads").get<std::size_t>();
    if (j.contains("deterministic")) {
      c.deterministic = j.at("deterministic").get<bool>();
    }
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }

  Section(j, "synth")
      .Field("num_identities", c.synth.num_identities)
      .Field("samples_per_identity", c.synth.samples_per_identity)
      .Field("image_size", c.synth.image_size)
      .Field("basis_order", c.synth.basis_order)
      .Field("contrast_jitter", c.synth.contrast_jitter)
      .Field("max_shift", c.synth.max_shift)
      .Field("texture_amplitude", c.synth.texture_amplitude)
      .Field("min_identity_distance", c.synth.min_identity_distance)
      .Field("train_fraction", c.synth.train_fraction)
      .Finish();
  Section(j, "network")
      .Field("channels_per_stage", c.network.channels_per_stage)
      .Field("blocks_per_stage", c.network.blocks_per_stage)
      .Field("embedding_dim", c.network.embedding_dim)
      .Field("downsample_kernel", c.network.downsample_kernel)
      .Finish();
  Section(j, "degradation")
      .Field("p_blur", c.degradation.p_blur)
      .Field("p_noise", c.degradation.p_noise)
      .Field("p_jpeg", c.degradation.p_jpeg)
      .Field("blur_sigma_range", c.degradation.blur_sigma_range)
      .Field("noise_sigma_range", c.degradation.noise_sigma_range)
      .Field("jpeg_quality_range", c.degradation.jpeg_quality_range)
      .Field("lr_sizes", c.degradation.lr_sizes)
      .Field("upsample_back", c.degradation.upsample_back)
      .Finish();
  Section(j, "train")
      .Field("epochs", c.train.epochs)
      .Field("batch_size", c.train.batch_size)
      .Field("learning_rate", c.train.learning_rate)
      .Field("lr_milestones", c.train.lr_milestones)
      .Field("momentum", c.train.momentum)
      .Field("temperature", c.train.distill.temperature)
      .Field("lambda1", c.train.distill.lambda1)
      .Field("lambda2", c.train.distill.lambda2)
      .Field("arcface_scale", c.train.arcface_scale)
      .Field("arcface_margin", c.train.arcface_margin)
      .Field("grad_clip_norm", c.train.grad_clip_norm)
      .Finish();
  return c;
}

RunConfig LoadRunConfig(const std::filesystem::path& path, RunConfig base) {
  std::ifstream is(path);
  if (!is) throw IoError("cannot open config file " + path.string());
  std::stringstream ss;
  ss << is.rdbuf();
  try {
    return RunConfigFromJson(ss.str(), std::move(base));
  } catch (const ConfigError& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
}

void SaveRunConfig(const std::filesystem::path& path, const RunConfig& cfg) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw IoError("cannot write " + path.string());
  os << RunConfigToJson(cfg);
  if (!os) throw IoError("write failed: " + path.string());
}

void ApplyEnvironment(RunConfig& cfg, const EnvLookup& getenv) {
  auto lookup = [&getenv](const char* name) -> std::optional<std::string> {
    if (getenv) return getenv(name);
    const char* v = std::getenv(name);
    return v ? std::optional<std::string>(v) : std::nullopt;
  };
  auto parse_u64 = [](const char* name, const std::string& v) {
    try {
      std::size_t used = 0;
      const unsigned long long x = std::stoull(v, &used);
      if (used != v.size()) throw std::invalid_argument(v);
      return static_cast<std::uint64_t>(x);
    } catch (const std::logic_error&) {
      throw ConfigError(std::string(name) + " must be an unsigned integer, got '" +
                        v + "'");
    }
  };
  if (auto v = lookup("WAVEDISTILL_OUT"); v && !v->empty()) cfg.out_dir = *v;
  if (auto v = lookup("WAVEDISTILL_SEED"); v && !v->empty()) {
    cfg.seed = parse_u64("WAVEDISTILL_SEED", *v);
  }
  if (auto v = lookup("WAVEDISTILL_THREADS"); v && !v->empty()) {
    cfg.threads = parse_u64("WAVEDISTILL_THREADS", *v);
  }
}

std::vector<std::size_t> ParseSizeList(const std::string& text) {
  auto malformed = [&text] {
    return ConfigError("malformed size list '" + text +
                       "': expected positive integers separated by commas");
  };
  if (text.empty()) throw ConfigError("size list must not be empty");
  std::vector<std::size_t> out;
  std::size_t pos = 0;
  while (true) {
    const std::size_t end = std::min(text.find(',', pos), text.size());
    const std::string item = text.substr(pos, end - pos);
    if (item.empty() || item.size() > 9 ||
        item.find_first_not_of("0123456789") != std::string::npos) {
      throw malformed();
    }
    const std::size_t v = std::stoul(item);
    if (v == 0) throw malformed();
    out.push_back(v);
    if (end == text.size()) break;
    pos = end + 1;
  }
  return out;
}

}  // namespace wavedistill
