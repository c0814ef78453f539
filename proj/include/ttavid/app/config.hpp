#pragma once

// Run configuration: a flat key = value file with [section] headers. Every
// key has a default, so an empty file is a valid default run.

#include <cstdint>
#include <map>
#include <string>
#include <string_view>

#include "ttavid/orchestrator.hpp"
#include "ttavid/sim_env.hpp"

namespace ttavid::app {

struct SimConfig {
  sim::SimParams params;
  std::size_t heldout = 32;
  std::string prior = "none";  // none | window
  std::size_t window_start = 12;
  std::size_t window_length = 8;
  double window_mass = 0.9;
  double clip_signal = 0.0;  // > 0 attaches synthetic CLIP scores
  double clip_noise = 1.0;
  bool wrap_text = true;
  std::string env_file;  // optional simenv-v1 batch used for adaptation
};

struct PolicyConfig {
  bool enabled = false;
  double evidence_weight = 1.0;
};

struct RemoteConfig {
  std::string data_root;
  std::string eval_root;
  std::string labels;  // JSON object question_id -> answer
  double backoff_ms = 1000.0;
};

struct RunConfig {
  std::string backend = "sim";  // sim | remote
  std::uint64_t seed = 0;
  std::string out = "out";
  AdaptationConfig adapt;
  InferenceConfig infer;
  SimConfig sim;
  PolicyConfig policy;
  RemoteConfig remote;
};

// Raw parse result: section.key -> (value, line).
struct IniEntry {
  std::string value;
  int line = 0;
};
using IniMap = std::map<std::string, IniEntry>;

IniMap parse_ini(std::string_view text, std::string_view source);

// Throws ConfigError with "<source>:<line>: <key>: <problem>" diagnostics.
RunConfig parse_config(std::string_view text, std::string_view source);
RunConfig load_config(const std::string& path);

// Copies shared settings (seed, epochs, temperature, ...) into the nested
// adaptation and inference configs. Call after changing RunConfig fields.
void sync_derived(RunConfig& config);

// Effective config with every key spelled out; parse_config(render_config(c))
// reproduces c.
std::string render_config(const RunConfig& config);

}  // namespace ttavid::app
