#pragma once

// Flat key = value run configuration shared by every command.
//
// File syntax: one `key = value` per line, `#` starts a comment, blank lines
// are ignored. Lists are comma separated. Unknown keys are rejected.

#include <string>
#include <vector>

#include "bitrap/data.hpp"
#include "bitrap/metrics.hpp"
#include "bitrap/training.hpp"

namespace bitrap {

struct RunConfig {
  std::string data;         // scene file (BEV text or FPV records)
  std::string format = "bev";
  std::string val_data;
  std::string checkpoint;
  std::string resume;
  std::string dump;         // prediction dump read by `plot`
  std::string out = "out";
  long frame_step = 0;      // 0 infers from the data
  double dt = 0.4;
  std::uint64_t seed = 0;
  int predict_samples = 20;
  long predict_window = -1;  // -1 predicts every window

  SynthConfig synth;
  TrainConfig train;
  EvalConfig eval;

  // Pushes the shared keys (seed, dt, tau, delta) into the nested configs.
  void sync();
};

struct ConfigKey {
  std::string name;
  std::string help;
};
const std::vector<ConfigKey>& config_keys();

void set_config_value(RunConfig& config, const std::string& key, const std::string& value);
std::string get_config_value(const RunConfig& config, const std::string& key);

// Applies a `key=value` assignment.
void apply_override(RunConfig& config, const std::string& assignment);

void parse_config_text(RunConfig& config, const std::string& text);
void load_config_file(RunConfig& config, const std::string& path);

// Every key with its current value, in the file syntax above.
std::string format_config(const RunConfig& config, bool with_help = false);
void save_config_file(const RunConfig& config, const std::string& path);

}  // namespace bitrap
