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

// Run configuration shared by all CLI subcommands. Sources are merged in a
// single order: built-in defaults < JSON config file < environment < flags.

#ifndef WAVEDISTILL_CONFIG_H_
#define WAVEDISTILL_CONFIG_H_

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "wavedistill/degrade.h"
#include "wavedistill/nets.h"
#include "wavedistill/synth.h"
#include "wavedistill/train.h"

namespace wavedistill {

struct RunConfig {
  std::uint64_t seed = 0;
  std::filesystem::path out_dir = "wavedistill_out";
  std::size_t threads = 1;
  bool deterministic = false;
  SynthSpec synth;
  NetworkSpec network;
  DegradationConfig degradation;
  TrainConfig train;

  // Copies the root seed into the sub-configs and aligns the network with
  // the dataset (input size, class count), then validates everything.
  void Resolve();
  bool operator==(const RunConfig&) const = default;
};

std::string RunConfigToJson(const RunConfig& cfg);
// Keys missing from `text` keep their current value in `base`; unknown keys
// are rejected with ConfigError.
RunConfig RunConfigFromJson(const std::string& text, RunConfig base = {});

RunConfig LoadRunConfig(const std::filesystem::path& path, RunConfig base = {});
void SaveRunConfig(const std::filesystem::path& path, const RunConfig& cfg);

// Reads WAVEDISTILL_OUT, WAVEDISTILL_SEED and WAVEDISTILL_THREADS through
// `getenv` (std::getenv by default).
using EnvLookup = std::function<std::optional<std::string>(const char*)>;
void ApplyEnvironment(RunConfig& cfg, const EnvLookup& getenv = {});

// "8,16" -> {8, 16}; throws ConfigError on malformed input.
std::vector<std::size_t> ParseSizeList(const std::string& text);

}  // namespace wavedistill

#endif  // WAVEDISTILL_CONFIG_H_
