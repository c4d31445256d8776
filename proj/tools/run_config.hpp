#pragma once

#include <filesystem>
#include <iosfwd>
#include <map>
#include <string>
#include <vector>

#include "cagnet/model.hpp"
#include "cagnet/trainer.hpp"

namespace cagnet::cli {

// Everything cmd_train needs. Built from a flat `key = value` file (# starts
// a comment) and then overridden from the command line.
struct RunConfig {
  std::filesystem::path manifest;
  std::filesystem::path splits;  // optional; without it every clip trains
  std::vector<std::string> train_splits{"train"};
  std::string val_split = "val";
  std::filesystem::path out_dir = "run";
  bool log_timing = false;
  ModelConfig model;
  TrainConfig train;
};

using KeyValues = std::map<std::string, std::string>;

// Throws ParseError with the line number for malformed lines or repeated keys.
KeyValues parse_key_values(std::istream& in);

// Applies `kv` on top of `config`. Relative paths resolve against `base_dir`.
// Unknown keys and malformed values throw ValidationError.
void apply_key_values(RunConfig& config, const KeyValues& kv, const std::filesystem::path& base_dir);

RunConfig load_run_config(const std::filesystem::path& path);

// Checks the model and training settings and that referenced inputs exist.
void validate_run_config(const RunConfig& config);

std::vector<std::string> config_keys();

}  // namespace cagnet::cli
