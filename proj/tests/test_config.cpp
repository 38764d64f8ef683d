#include "rlasso/config.hpp"
#include "rlasso/error.hpp"

#include <doctest.h>

#include <sstream>

using namespace rlasso;

TEST_CASE("key=value loading with comments") {
  Config cfg;
  std::istringstream in(
      "# comment\n"
      "k_neighbors = 7\n"
      "normalize = false   # trailing\n"
      "\n"
      "ratios = 0.1, 0.5\n"
      "reg_c=2.5\n");
  cfg.load(in);
  CHECK(cfg.k_neighbors == 7);
  CHECK_FALSE(cfg.normalize);
  CHECK(cfg.ratios == std::vector<double>{0.1, 0.5});
  CHECK(cfg.reg_c == 2.5);
  CHECK(cfg.graph_options().k == 7);
  CHECK(cfg.train_options().reg_c == 2.5);
}

TEST_CASE("invalid entries are config errors") {
  Config cfg;
  CHECK_THROWS_AS(cfg.set("no_such_key", "1"), ConfigError);
  CHECK_THROWS_AS(cfg.set("k_neighbors", "ten"), ConfigError);
  CHECK_THROWS_AS(cfg.set("normalize", "maybe"), ConfigError);
  std::istringstream bad("just words\n");
  CHECK_THROWS_AS(cfg.load(bad), ConfigError);
  cfg.classes = 0;
  CHECK_THROWS_AS(cfg.synthetic(), ConfigError);
}

TEST_CASE("json round trip is lossless") {
  Config cfg;
  cfg.restart_prob = 0.1 + 0.2;
  cfg.seed = 1234567890123ULL;
  cfg.ratios = {0.3, 1.0 / 3.0};
  cfg.intercept = true;
  auto back = Config::from_json(cfg.to_json());
  CHECK(back.to_json() == cfg.to_json());
  CHECK(back.restart_prob == cfg.restart_prob);
  CHECK(back.ratios == cfg.ratios);
}

TEST_CASE("defaults describe the three-class synthetic setup") {
  Config cfg;
  auto sc = cfg.synthetic();
  auto reference = SyntheticConfig::paper_fig1(cfg.seed);
  CHECK(sc.class_means == reference.class_means);
  CHECK(sc.per_class_count == reference.per_class_count);
  CHECK(sc.outlier_count_per_class == reference.outlier_count_per_class);
  CHECK(sc.class_std == reference.class_std);
  CHECK(sc.outlier_box_halfwidth == reference.outlier_box_halfwidth);
}
