#pragma once

#include "rlasso/bench.hpp"

#include <json.hpp>

#include <filesystem>
#include <iosfwd>
#include <map>
#include <string>
#include <vector>

namespace rlasso {

/// Fully resolved run configuration. Layers apply in order: built-in
/// defaults, then a key=value config file, then command-line flags.
struct Config {
  // graph / diffusion
  int k_neighbors = 10;
  bool normalize = true;
  double restart_prob = 0.5;
  double walk_tolerance = 1e-10;
  int walk_max_iter = 10000;
  // embedding
  int embed_dim = 10;
  int lbfgs_memory = 10;
  double gradient_tolerance = 1e-6;
  int embed_max_iter = 500;
  double init_std = 0.1;
  // outlier path
  double lambda_min_ratio = 1e-6;
  double rank_tolerance = 1e-10;
  int max_active = 0;
  bool intercept = false;
  int ipod_max_iter = 100;
  // classification
  int folds = 5;
  double reg_c = 1.0;
  int epochs = 60;
  double test_fraction = 0.3;
  // experiments
  std::uint64_t seed = 0;
  int repeats = 10;
  std::vector<double> ratios{0.1, 0.25, 0.5, 0.75, 1.0, 1.25, 1.5};
  int threads = 0;
  // synthetic generator (means at (c, c) for c = 1..classes)
  int classes = 3;
  int per_class = 100;
  int outliers_per_class = 30;
  double class_std = 0.1;
  double halfwidth = 0.5;

  /// Applies one key=value assignment; throws ConfigError on unknown keys or bad values.
  void set(const std::string& key, const std::string& value);
  /// Reads `key = value` lines; '#' starts a comment.
  void load_file(const std::filesystem::path& path);
  void load(std::istream& in);

  nlohmann::ordered_json to_json() const;
  /// Inverse of to_json for every key.
  static Config from_json(const nlohmann::ordered_json& j);

  GraphOptions graph_options() const;
  LazyWalkOptions walk_options() const;
  EmbeddingOptions embedding_options() const;
  LassoPathOptions path_options() const;
  LinearTrainOptions train_options() const;
  CrossValidationOptions cv_options() const;
  SyntheticConfig synthetic() const;
};

}  // namespace rlasso
