/*
 * Copyright 2026 The lcpseq Authors.
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     https://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <string>
#include <vector>

#include "lcpseq/data.hpp"
#include "lcpseq/metrics.hpp"
#include "lcpseq/train.hpp"

namespace lcpseq {

/// Every setting a command can use, fully resolved.
struct RunConfig {
  std::uint64_t seed = 0;
  std::string data;
  std::string out;
  std::string checkpoint;
  std::string protocol = "stochastic_16_60";
  std::string format = "json";
  int k = 50;
  TrainConfig train;       // t_obs / t_fut follow the protocol unless set
  SynthSpec synth;         // length defaults to t_obs + t_fut
  double test_fraction = 0.1;
  std::uint64_t split_seed = 0;
  std::size_t max_conditions = 0;
  ClassifierConfig classifier;
  MaeOptions mae;

  bool deterministic() const { return protocol == "deterministic_50_25"; }
};

/// Keys accepted in config files; flags use the same names with '-' for '_'.
const std::vector<std::string>& config_keys();

/// Flat key=value text; '#' starts a comment. ConfigError (with the line)
/// on malformed lines, duplicate or unknown keys.
std::map<std::string, std::string> parse_config_text(const std::string& text);
std::map<std::string, std::string> read_config_file(const std::filesystem::path& path);

/// Typed resolution of a key=value map; ConfigError on unknown keys or bad
/// values.
RunConfig resolve_config(const std::map<std::string, std::string>& kv);

/// Subcommands: synth, train, sample, evaluate, ablate, export. Returns 0
/// on success, 1 on runtime failure, 2 on usage errors.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace lcpseq
