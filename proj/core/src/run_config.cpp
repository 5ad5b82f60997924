#include "cgpnas/run_config.hpp"

#include <charconv>
#include <climits>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <iomanip>
#include <map>
#include <sstream>

#include "cgpnas/errors.hpp"

namespace cgpnas {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

[[noreturn]] void bad_value(const std::string& key, const std::string& value,
                            const std::string& want) {
  throw ConfigParseError("config key '" + key + "': expected " + want + ", got '" +
                         value + "'");
}

long long parse_ll(const std::string& key, const std::string& value) {
  long long out = 0;
  const char* end = value.data() + value.size();
  const auto [ptr, ec] = std::from_chars(value.data(), end, out);
  if (ec != std::errc{} || ptr != end) bad_value(key, value, "an integer");
  return out;
}

int parse_int(const std::string& key, const std::string& value) {
  const long long v = parse_ll(key, value);
  if (v < INT_MIN || v > INT_MAX) bad_value(key, value, "an int");
  return static_cast<int>(v);
}

std::uint64_t parse_u64(const std::string& key, const std::string& value) {
  std::uint64_t out = 0;
  const char* end = value.data() + value.size();
  const auto [ptr, ec] = std::from_chars(value.data(), end, out);
  if (ec != std::errc{} || ptr != end) bad_value(key, value, "an unsigned integer");
  return out;
}

std::size_t parse_size(const std::string& key, const std::string& value) {
  return static_cast<std::size_t>(parse_u64(key, value));
}

double parse_double(const std::string& key, const std::string& value) {
  if (value.empty()) bad_value(key, value, "a number");
  char* end = nullptr;
  const double v = std::strtod(value.c_str(), &end);
  if (end != value.c_str() + value.size()) bad_value(key, value, "a number");
  return v;
}

bool parse_bool(const std::string& key, const std::string& value) {
  if (value == "true" || value == "1" || value == "on") return true;
  if (value == "false" || value == "0" || value == "off") return false;
  bad_value(key, value, "true or false");
}

std::vector<std::string> split_list(const std::string& value, char sep) {
  std::vector<std::string> out;
  std::string item;
  std::istringstream in(value);
  while (std::getline(in, item, sep)) out.push_back(trim(item));
  return out;
}

std::vector<int> parse_channels(const std::string& key, const std::string& value) {
  std::vector<int> out;
  for (const auto& item : split_list(value, ',')) {
    const int c = parse_int(key, item);
    if (c <= 0) bad_value(key, value, "positive channel counts");
    out.push_back(c);
  }
  if (out.empty()) bad_value(key, value, "a comma-separated channel list");
  return out;
}

// "30:0.001,250:0.01"; an empty value clears the schedule.
std::vector<LrPoint> parse_schedule(const std::string& key, const std::string& value) {
  std::vector<LrPoint> out;
  if (trim(value).empty()) return out;
  for (const auto& item : split_list(value, ',')) {
    const auto colon = item.find(':');
    if (colon == std::string::npos) bad_value(key, value, "epoch:lr pairs");
    LrPoint p;
    p.epoch = parse_int(key, trim(item.substr(0, colon)));
    p.lr = parse_double(key, trim(item.substr(colon + 1)));
    if (!out.empty() && p.epoch <= out.back().epoch)
      bad_value(key, value, "strictly ascending epochs");
    out.push_back(p);
  }
  return out;
}

OptimizerKind parse_optimizer(const std::string& key, const std::string& value) {
  if (value == "adam") return OptimizerKind::Adam;
  if (value == "sgd") return OptimizerKind::SgdMomentum;
  bad_value(key, value, "adam or sgd");
}

std::string fmt(double v) {
  std::ostringstream out;
  out << std::setprecision(17) << v;
  return out.str();
}

std::string schedule_text(const std::vector<LrPoint>& schedule) {
  std::string out;
  for (const auto& p : schedule) {
    if (!out.empty()) out += ',';
    out += std::to_string(p.epoch) + ':' + fmt(p.lr);
  }
  return out;
}

std::string channels_text(const std::vector<int>& channels) {
  std::string out;
  for (const int c : channels) {
    if (!out.empty()) out += ',';
    out += std::to_string(c);
  }
  return out;
}

using Setter = std::function<void(RunConfig&, const std::string&, const std::string&)>;

void add_train_keys(std::map<std::string, Setter>& keys, const std::string& prefix,
                    TrainConfig RunConfig::*field) {
  keys[prefix + "optimizer"] = [field](RunConfig& c, const std::string& k,
                                       const std::string& v) {
    (c.*field).optimizer = parse_optimizer(k, v);
  };
  keys[prefix + "lr"] = [field](RunConfig& c, const std::string& k,
                                const std::string& v) {
    (c.*field).initial_lr = parse_double(k, v);
  };
  keys[prefix + "lr_schedule"] = [field](RunConfig& c, const std::string& k,
                                         const std::string& v) {
    (c.*field).lr_schedule = parse_schedule(k, v);
  };
  keys[prefix + "epochs"] = [field](RunConfig& c, const std::string& k,
                                    const std::string& v) {
    (c.*field).epochs = parse_int(k, v);
  };
  keys[prefix + "batch_size"] = [field](RunConfig& c, const std::string& k,
                                        const std::string& v) {
    (c.*field).batch_size = parse_int(k, v);
  };
  keys[prefix + "weight_decay"] = [field](RunConfig& c, const std::string& k,
                                          const std::string& v) {
    (c.*field).weight_decay = parse_double(k, v);
  };
  keys[prefix + "momentum"] = [field](RunConfig& c, const std::string& k,
                                      const std::string& v) {
    (c.*field).momentum = parse_double(k, v);
  };
  keys[prefix + "augmentation"] = [field](RunConfig& c, const std::string& k,
                                          const std::string& v) {
    (c.*field).augmentation = parse_bool(k, v);
  };
  keys[prefix + "fitness_window"] = [field](RunConfig& c, const std::string& k,
                                            const std::string& v) {
    (c.*field).fitness_window = parse_int(k, v);
  };
}

const std::map<std::string, Setter>& key_table() {
  static const std::map<std::string, Setter> table = [] {
    std::map<std::string, Setter> keys;
    auto str = [](std::string RunConfig::*field) {
      return [field](RunConfig& c, const std::string&, const std::string& v) {
        c.*field = v;
      };
    };
    keys["scenario"] = str(&RunConfig::scenario);
    keys["dataset"] = str(&RunConfig::dataset);
    keys["data_dir"] = str(&RunConfig::data_dir);
    keys["out_dir"] = str(&RunConfig::out_dir);
    keys["surrogate"] = str(&RunConfig::surrogate);

    keys["rows"] = [](RunConfig& c, const std::string& k, const std::string& v) {
      c.cgp.n_rows = parse_int(k, v);
    };
    keys["cols"] = [](RunConfig& c, const std::string& k, const std::string& v) {
      c.cgp.n_cols = parse_int(k, v);
    };
    keys["levels_back"] = [](RunConfig& c, const std::string& k, const std::string& v) {
      c.cgp.levels_back = parse_int(k, v);
    };
    keys["inputs"] = [](RunConfig& c, const std::string& k, const std::string& v) {
      c.cgp.n_inputs = parse_int(k, v);
    };
    keys["outputs"] = [](RunConfig& c, const std::string& k, const std::string& v) {
      c.cgp.n_outputs = parse_int(k, v);
    };
    keys["mutation_rate"] = [](RunConfig& c, const std::string& k,
                               const std::string& v) {
      c.cgp.mutation_rate = parse_double(k, v);
    };
    keys["min_active"] = [](RunConfig& c, const std::string& k, const std::string& v) {
      c.cgp.min_active = parse_int(k, v);
    };
    keys["max_active"] = [](RunConfig& c, const std::string& k, const std::string& v) {
      c.cgp.max_active = parse_int(k, v);
    };
    keys["function_set"] = [](RunConfig& c, const std::string& k,
                              const std::string& v) {
      try {
        c.cgp.function_set = parse_function_set(v);
      } catch (const UnknownFunctionSet&) {
        bad_value(k, v, "conv or res");
      }
    };
    keys["channels"] = [](RunConfig& c, const std::string& k, const std::string& v) {
      c.cgp.channels = parse_channels(k, v);
    };

    keys["split_train"] = [](RunConfig& c, const std::string& k, const std::string& v) {
      c.split_train = parse_size(k, v);
    };
    keys["split_val"] = [](RunConfig& c, const std::string& k, const std::string& v) {
      c.split_val = parse_size(k, v);
    };
    keys["split_seed"] = [](RunConfig& c, const std::string& k, const std::string& v) {
      c.split_seed = parse_u64(k, v);
    };

    keys["synthetic_classes"] = [](RunConfig& c, const std::string& k,
                                   const std::string& v) {
      c.synthetic.classes = parse_int(k, v);
    };
    keys["synthetic_samples"] = [](RunConfig& c, const std::string& k,
                                   const std::string& v) {
      c.synthetic.samples = parse_int(k, v);
    };
    keys["synthetic_size"] = [](RunConfig& c, const std::string& k,
                                const std::string& v) {
      c.synthetic.image_size = parse_int(k, v);
    };
    keys["synthetic_difficulty"] = [](RunConfig& c, const std::string& k,
                                      const std::string& v) {
      try {
        c.synthetic.difficulty = parse_difficulty(v);
      } catch (const ConfigInfeasible&) {
        bad_value(k, v, "easy, medium or hard");
      }
    };
    keys["synthetic_seed"] = [](RunConfig& c, const std::string& k,
                                const std::string& v) {
      c.synthetic_seed = parse_u64(k, v);
    };

    keys["seed"] = [](RunConfig& c, const std::string& k, const std::string& v) {
      c.seed = parse_u64(k, v);
    };
    keys["generations"] = [](RunConfig& c, const std::string& k, const std::string& v) {
      c.generations = parse_int(k, v);
    };
    keys["lambda"] = [](RunConfig& c, const std::string& k, const std::string& v) {
      c.lambda = parse_int(k, v);
    };
    keys["memory_budget"] = [](RunConfig& c, const std::string& k,
                               const std::string& v) {
      c.memory_budget = parse_ll(k, v);
    };

    add_train_keys(keys, "search_", &RunConfig::search);
    add_train_keys(keys, "retrain_", &RunConfig::retrain);
    return keys;
  }();
  return table;
}

}  // namespace

RunConfig scenario_preset(const std::string& name) {
  RunConfig cfg;
  cfg.scenario = name;
  if (name == "default") return cfg;
  if (name == "small") {
    cfg.split_train = 4500;
    cfg.split_val = 500;
    cfg.generations = 1500;
    return cfg;
  }
  if (name == "desk") {
    cfg.dataset = "synthetic";
    cfg.synthetic = SyntheticSpec{2, 2500, 16, Difficulty::Easy};
    cfg.split_train = 2000;
    cfg.split_val = 500;
    // Single-row chain grid over a one-channel catalog: random chains stack
    // enough pooling to degrade the bar signal, and the one-epoch low-lr
    // budget keeps weak architectures from saturating the separable data.
    // A short run therefore shows fitness actually climbing.
    cfg.cgp.n_rows = 1;
    cfg.cgp.n_cols = 16;
    cfg.cgp.levels_back = 1;
    cfg.cgp.min_active = 12;
    cfg.cgp.max_active = 16;
    cfg.cgp.mutation_rate = 0.15;
    cfg.cgp.channels = {8};
    cfg.search.optimizer = OptimizerKind::SgdMomentum;
    cfg.search.initial_lr = 1e-4;
    cfg.search.lr_schedule.clear();
    cfg.search.epochs = 1;
    cfg.search.batch_size = 256;
    cfg.search.augmentation = false;
    cfg.search.fitness_window = 1;
    // Miniature of the full retraining ramp: up 10x early, back down late.
    cfg.retrain.initial_lr = 0.01;
    cfg.retrain.lr_schedule = {{2, 0.1}, {6, 0.01}, {8, 0.001}};
    cfg.retrain.epochs = 10;
    cfg.retrain.batch_size = 256;
    cfg.retrain.augmentation = false;
    cfg.retrain.fitness_window = 10;
    cfg.generations = 30;
    return cfg;
  }
  throw ConfigParseError("unknown scenario '" + name + "'");
}

RunConfig parse_run_config(const std::string& text, const RunConfig& base) {
  RunConfig cfg = base;
  std::istringstream in(text);
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigParseError("config line " + std::to_string(line_no) +
                             ": expected key=value, got '" + line + "'");
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    const auto it = key_table().find(key);
    if (it == key_table().end())
      throw ConfigParseError("unknown config key '" + key + "'");
    it->second(cfg, key, value);
  }
  return cfg;
}

RunConfig load_run_config(const std::string& path, const RunConfig& base) {
  std::ifstream in(path);
  if (!in) throw MissingFile(path);
  std::ostringstream text;
  text << in.rdbuf();
  return parse_run_config(text.str(), base);
}

std::string run_config_to_text(const RunConfig& cfg) {
  std::ostringstream out;
  auto kv = [&out](const std::string& key, const std::string& value) {
    out << key << '=' << value << '\n';
  };
  kv("scenario", cfg.scenario);
  kv("dataset", cfg.dataset);
  kv("data_dir", cfg.data_dir);
  kv("out_dir", cfg.out_dir);
  kv("surrogate", cfg.surrogate);
  kv("seed", std::to_string(cfg.seed));
  kv("generations", std::to_string(cfg.generations));
  kv("lambda", std::to_string(cfg.lambda));
  kv("memory_budget", std::to_string(cfg.memory_budget));

  kv("rows", std::to_string(cfg.cgp.n_rows));
  kv("cols", std::to_string(cfg.cgp.n_cols));
  kv("levels_back", std::to_string(cfg.cgp.levels_back));
  kv("inputs", std::to_string(cfg.cgp.n_inputs));
  kv("outputs", std::to_string(cfg.cgp.n_outputs));
  kv("mutation_rate", fmt(cfg.cgp.mutation_rate));
  kv("min_active", std::to_string(cfg.cgp.min_active));
  kv("max_active", std::to_string(cfg.cgp.max_active));
  kv("function_set", to_string(cfg.cgp.function_set));
  kv("channels", channels_text(cfg.cgp.channels));

  kv("split_train", std::to_string(cfg.split_train));
  kv("split_val", std::to_string(cfg.split_val));
  kv("split_seed", std::to_string(cfg.split_seed));

  kv("synthetic_classes", std::to_string(cfg.synthetic.classes));
  kv("synthetic_samples", std::to_string(cfg.synthetic.samples));
  kv("synthetic_size", std::to_string(cfg.synthetic.image_size));
  kv("synthetic_difficulty", difficulty_name(cfg.synthetic.difficulty));
  kv("synthetic_seed", std::to_string(cfg.synthetic_seed));

  auto train = [&kv](const std::string& prefix, const TrainConfig& t) {
    kv(prefix + "optimizer", t.optimizer == OptimizerKind::Adam ? "adam" : "sgd");
    kv(prefix + "lr", fmt(t.initial_lr));
    kv(prefix + "lr_schedule", schedule_text(t.lr_schedule));
    kv(prefix + "epochs", std::to_string(t.epochs));
    kv(prefix + "batch_size", std::to_string(t.batch_size));
    kv(prefix + "weight_decay", fmt(t.weight_decay));
    kv(prefix + "momentum", fmt(t.momentum));
    kv(prefix + "augmentation", t.augmentation ? "true" : "false");
    kv(prefix + "fitness_window", std::to_string(t.fitness_window));
  };
  train("search_", cfg.search);
  train("retrain_", cfg.retrain);
  return out.str();
}

std::string resolve_data_dir(const RunConfig& cfg) {
  if (!cfg.data_dir.empty()) return cfg.data_dir;
  if (const char* env = std::getenv("CGPNAS_DATA_DIR"); env && *env) return env;
  return "data";
}

}  // namespace cgpnas
