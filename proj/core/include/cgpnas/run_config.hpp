#pragma once

#include <cstdint>
#include <string>

#include "cgpnas/data.hpp"
#include "cgpnas/evaluator.hpp"
#include "cgpnas/genotype.hpp"

namespace cgpnas {

// Everything a run needs, parseable from a flat key=value file. Presets are
// applied by the caller through scenario_preset; a scenario key inside a
// file only labels the config.
struct RunConfig {
  CgpConfig cgp;
  TrainConfig search = search_defaults();
  TrainConfig retrain = retrain_defaults();
  std::string scenario = "default";
  std::string dataset = "cifar10";  // cifar10 | synthetic
  SyntheticSpec synthetic;
  std::uint64_t synthetic_seed = 1;
  std::string data_dir;  // empty until resolve_data_dir
  std::size_t split_train = 45000;
  std::size_t split_val = 5000;
  std::uint64_t split_seed = 1;
  std::uint64_t seed = 0;
  int generations = 500;
  int lambda = 2;
  std::int64_t memory_budget = std::int64_t{2} << 30;  // bytes; 0 = unlimited
  std::string out_dir = "run_out";
  std::string surrogate;  // empty = training evaluator

  bool operator==(const RunConfig&) const = default;
};

// default: the published CIFAR-10 protocol; small: its 4,500/500 variant;
// desk: synthetic 16x16 data with a reduced grid and channel set, sized to
// finish on a workstation CPU in minutes.
RunConfig scenario_preset(const std::string& name);  // ConfigParseError on unknown names

// Applies key=value lines (# starts a comment) on top of base; unknown keys
// and unparsable values raise ConfigParseError naming the key.
RunConfig parse_run_config(const std::string& text, const RunConfig& base = {});
RunConfig load_run_config(const std::string& path, const RunConfig& base = {});

// Full snapshot; parse_run_config(run_config_to_text(c)) == c.
std::string run_config_to_text(const RunConfig& cfg);

// data_dir key if set, else $CGPNAS_DATA_DIR, else "data".
std::string resolve_data_dir(const RunConfig& cfg);

}  // namespace cgpnas
