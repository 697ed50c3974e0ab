#include <doctest.h>

#include "fixtures.hpp"
#include "splitface/config.hpp"
#include "splitface/text.hpp"

using namespace splitface;
using namespace fixture;

TEST_CASE("run config parsing") {
  const auto cfg = parse_run_config_text(
      "# run settings\n"
      "[data]\n"
      "dataset = /data/celeba   # trailing comment\n"
      "\n"
      "[model]\n"
      "width_scale = 0.25\n"
      "seed = 9\n"
      "[train]\n"
      "d = 5\n"
      "partial_mix = 0\n"
      "[fusion]\n"
      "threshold_mode = fixed\n"
      "aggregator = median\n");
  CHECK(cfg.dataset == "/data/celeba");
  CHECK(cfg.train.width_scale == 0.25);
  CHECK(cfg.train.seed == 9);
  CHECK(cfg.train.d == 5);
  CHECK(cfg.train.partial_mix == 0.0);
  CHECK(cfg.threshold_mode == ThresholdMode::fixed);
  CHECK(cfg.aggregator == "median");
  CHECK(cfg.train.epochs_stage1 == TrainConfig{}.epochs_stage1);
  CHECK_NOTHROW(cfg.validate());

  // resolved() reads back to the same settings.
  const auto again = parse_run_config_text(cfg.resolved());
  CHECK(again.resolved() == cfg.resolved());
  CHECK(again.train.width_scale == 0.25);
}

TEST_CASE("run config errors carry line numbers") {
  CHECK(error_of<ConfigError>([] { parse_run_config_text("[train]\nd = 5\nbogus = 1\n", "x.cfg"); })
            .find("x.cfg:3") != std::string::npos);
  CHECK(error_of<ConfigError>([] { parse_run_config_text("[train\n", "x.cfg"); }).find("x.cfg:1") !=
        std::string::npos);
  CHECK(error_of<ConfigError>([] { parse_run_config_text("\n[train]\nd five\n", "x.cfg"); }).find("x.cfg:3") !=
        std::string::npos);
  CHECK_THROWS_AS(parse_run_config_text("[train]\nd = five\n"), ConfigError);
  CHECK_THROWS_AS(parse_run_config_text("[fusion]\naggregator = mean\n"), ConfigError);
  CHECK_THROWS_AS(parse_run_config_text("[fusion]\nthreshold_mode = best\n"), ConfigError);
  CHECK_THROWS_AS(parse_run_config_text("[train]\nd = 2\n").validate(), ConfigError);
  CHECK_THROWS_AS(parse_run_config(scratch("config") / "missing.cfg"), MissingInput);

  const auto dir = scratch("config");
  text::write_file(dir / "run.cfg", "[model]\nseed = 4\n");
  CHECK(parse_run_config(dir / "run.cfg").train.seed == 4);
}
