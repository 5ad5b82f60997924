#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>

#include "cgpnas/errors.hpp"
#include "cgpnas/run_config.hpp"

using namespace cgpnas;

TEST_CASE("scenario presets") {
  SUBCASE("default matches the struct defaults") {
    const RunConfig cfg = scenario_preset("default");
    CHECK(cfg == RunConfig{});
    CHECK(cfg.cgp.n_rows == 5);
    CHECK(cfg.cgp.n_cols == 30);
    CHECK(cfg.split_train == 45000);
    CHECK(cfg.split_val == 5000);
    CHECK(cfg.generations == 500);
    CHECK(cfg.lambda == 2);
    CHECK(cfg.search.epochs == 50);
    CHECK(cfg.retrain.epochs == 500);
  }
  SUBCASE("small shrinks the data and lengthens the search") {
    const RunConfig cfg = scenario_preset("small");
    CHECK(cfg.split_train == 4500);
    CHECK(cfg.split_val == 500);
    CHECK(cfg.generations == 1500);
    CHECK(cfg.cgp == RunConfig{}.cgp);  // grid untouched
  }
  SUBCASE("desk runs synthetic data on a reduced chain grid") {
    const RunConfig cfg = scenario_preset("desk");
    CHECK(cfg.dataset == "synthetic");
    CHECK(cfg.synthetic == SyntheticSpec{2, 2500, 16, Difficulty::Easy});
    CHECK(cfg.split_train == 2000);
    CHECK(cfg.split_val == 500);
    CHECK(cfg.cgp.n_rows == 1);
    CHECK(cfg.cgp.n_cols == 16);
    CHECK(cfg.cgp.levels_back == 1);
    CHECK(cfg.cgp.min_active == 12);
    CHECK(cfg.cgp.max_active == 16);
    CHECK(cfg.cgp.channels == std::vector<int>{8});
    CHECK(cfg.search.optimizer == OptimizerKind::SgdMomentum);
    CHECK(cfg.search.initial_lr == doctest::Approx(1e-4));
    CHECK(cfg.search.epochs == 1);
    CHECK(cfg.search.batch_size == 256);
    CHECK(cfg.search.lr_schedule.empty());
    CHECK_FALSE(cfg.search.augmentation);
    CHECK(cfg.retrain.epochs == 10);
    REQUIRE(cfg.retrain.lr_schedule.size() == 3);
    CHECK(cfg.retrain.lr_schedule[0] == LrPoint{2, 0.1});
    CHECK(cfg.generations == 30);
    cfg.cgp.validate();  // preset must be a feasible grid
  }
  SUBCASE("every preset names itself") {
    for (const char* name : {"default", "small", "desk"})
      CHECK(scenario_preset(name).scenario == name);
  }
  SUBCASE("unknown scenario") {
    CHECK_THROWS_AS(scenario_preset("huge"), ConfigParseError);
  }
}

TEST_CASE("parse applies overrides on top of base") {
  const std::string text =
      "# grid\n"
      "rows = 3\n"
      "cols=12   # trailing comment\n"
      "mutation_rate=0.2\n"
      "\n"
      "channels = 8, 16, 32\n"
      "function_set=res\n"
      "search_optimizer=sgd\n"
      "search_lr_schedule=5:0.1,250:0.01,375:0.001\n"
      "search_augmentation=off\n"
      "dataset=synthetic\n"
      "synthetic_difficulty=hard\n"
      "memory_budget=1073741824\n"
      "surrogate=target_active_count(25)\n";
  const RunConfig cfg = parse_run_config(text);
  CHECK(cfg.cgp.n_rows == 3);
  CHECK(cfg.cgp.n_cols == 12);
  CHECK(cfg.cgp.mutation_rate == doctest::Approx(0.2));
  CHECK(cfg.cgp.channels == std::vector<int>{8, 16, 32});
  CHECK(cfg.cgp.function_set == FunctionSet::Res);
  CHECK(cfg.search.optimizer == OptimizerKind::SgdMomentum);
  REQUIRE(cfg.search.lr_schedule.size() == 3);
  CHECK(cfg.search.lr_schedule[0] == LrPoint{5, 0.1});
  CHECK(cfg.search.lr_schedule[2] == LrPoint{375, 0.001});
  CHECK_FALSE(cfg.search.augmentation);
  CHECK(cfg.synthetic.difficulty == Difficulty::Hard);
  CHECK(cfg.memory_budget == 1073741824);
  CHECK(cfg.surrogate == "target_active_count(25)");
  // untouched keys keep base values
  CHECK(cfg.cgp.levels_back == 10);
  CHECK(cfg.retrain == retrain_defaults());

  SUBCASE("base argument seeds the result") {
    const RunConfig derived = parse_run_config("generations=7\n", cfg);
    CHECK(derived.generations == 7);
    CHECK(derived.cgp.n_cols == 12);
    CHECK(derived.surrogate == "target_active_count(25)");
  }
}

TEST_CASE("parse failures name the offender") {
  auto message_of = [](const std::string& text) {
    try {
      parse_run_config(text);
    } catch (const ConfigParseError& e) {
      return std::string(e.what());
    }
    return std::string();
  };
  CHECK(message_of("bogus_key=1\n").find("bogus_key") != std::string::npos);
  CHECK(message_of("rows=five\n").find("rows") != std::string::npos);
  CHECK(message_of("mutation_rate=\n").find("mutation_rate") != std::string::npos);
  CHECK(message_of("search_lr_schedule=5-0.1\n").find("search_lr_schedule") !=
        std::string::npos);
  // descending epochs violate the schedule invariant
  CHECK(message_of("search_lr_schedule=10:0.1,5:0.2\n").find("search_lr_schedule") !=
        std::string::npos);
  CHECK(message_of("channels=\n").find("channels") != std::string::npos);
  CHECK(message_of("channels=8,-4\n").find("channels") != std::string::npos);
  CHECK(message_of("function_set=dense\n").find("function_set") != std::string::npos);
  CHECK(message_of("synthetic_difficulty=brutal\n").find("synthetic_difficulty") !=
        std::string::npos);
  CHECK(message_of("search_optimizer=rmsprop\n").find("search_optimizer") !=
        std::string::npos);
  CHECK(message_of("search_augmentation=maybe\n").find("search_augmentation") !=
        std::string::npos);
  CHECK(message_of("seed=-1\n").find("seed") != std::string::npos);
  CHECK(message_of("just a line\n").find("key=value") != std::string::npos);
}

TEST_CASE("snapshot round-trips through the parser") {
  auto check_round_trip = [](const RunConfig& cfg) {
    const std::string text = run_config_to_text(cfg);
    CHECK(parse_run_config(text) == cfg);
  };
  check_round_trip(scenario_preset("default"));
  check_round_trip(scenario_preset("small"));
  check_round_trip(scenario_preset("desk"));

  RunConfig cfg = scenario_preset("desk");
  cfg.cgp.mutation_rate = 1.0 / 3.0;  // needs all 17 digits
  cfg.search.initial_lr = 0.07;
  cfg.search.lr_schedule = {{2, 0.007}, {4, 1.0 / 7.0}};
  cfg.data_dir = "/tmp/somewhere";
  cfg.surrogate = "depth_reward";
  cfg.seed = ~0ull;
  cfg.memory_budget = 0;
  check_round_trip(cfg);
}

TEST_CASE("file loading") {
  namespace fs = std::filesystem;
  const fs::path dir = fs::temp_directory_path() / "cgpnas_run_config_tests";
  fs::create_directories(dir);
  const fs::path path = dir / "run.cfg";
  {
    std::ofstream out(path);
    out << "generations=9\nlambda=4\n";
  }
  const RunConfig cfg = load_run_config(path.string());
  CHECK(cfg.generations == 9);
  CHECK(cfg.lambda == 4);
  CHECK_THROWS_AS(load_run_config((dir / "absent.cfg").string()), MissingFile);
  fs::remove_all(dir);
}

TEST_CASE("data dir resolution order") {
  RunConfig cfg;
  unsetenv("CGPNAS_DATA_DIR");
  CHECK(resolve_data_dir(cfg) == "data");
  setenv("CGPNAS_DATA_DIR", "/srv/datasets", 1);
  CHECK(resolve_data_dir(cfg) == "/srv/datasets");
  cfg.data_dir = "local_data";
  CHECK(resolve_data_dir(cfg) == "local_data");
  unsetenv("CGPNAS_DATA_DIR");
}
