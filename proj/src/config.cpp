#include "rlasso/config.hpp"

#include "rlasso/error.hpp"

#include <charconv>
#include <fstream>
#include <sstream>

namespace rlasso {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\"");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r\"");
  return s.substr(b, e - b + 1);
}

double to_double(const std::string& key, const std::string& v) {
  double out = 0.0;
  auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || p != v.data() + v.size()) throw ConfigError("invalid number for " + key + ": '" + v + "'");
  return out;
}

long long to_int(const std::string& key, const std::string& v) {
  long long out = 0;
  auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || p != v.data() + v.size()) throw ConfigError("invalid integer for " + key + ": '" + v + "'");
  return out;
}

bool to_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  throw ConfigError("invalid boolean for " + key + ": '" + v + "'");
}

std::string json_scalar(const nlohmann::ordered_json& v) {
  if (v.is_string()) return v.get<std::string>();
  if (v.is_boolean()) return v.get<bool>() ? "true" : "false";
  if (v.is_array()) {
    std::string out;
    for (const auto& e : v) out += (out.empty() ? "" : ",") + json_scalar(e);
    return out;
  }
  if (v.is_number_float()) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", v.get<double>());
    return buf;
  }
  return v.dump();
}

}  // namespace

void Config::set(const std::string& raw_key, const std::string& raw_value) {
  const std::string key = trim(raw_key);
  const std::string v = trim(raw_value);
  if (key == "k_neighbors") k_neighbors = static_cast<int>(to_int(key, v));
  else if (key == "normalize") normalize = to_bool(key, v);
  else if (key == "restart_prob") restart_prob = to_double(key, v);
  else if (key == "walk_tolerance") walk_tolerance = to_double(key, v);
  else if (key == "walk_max_iter") walk_max_iter = static_cast<int>(to_int(key, v));
  else if (key == "embed_dim") embed_dim = static_cast<int>(to_int(key, v));
  else if (key == "lbfgs_memory") lbfgs_memory = static_cast<int>(to_int(key, v));
  else if (key == "gradient_tolerance") gradient_tolerance = to_double(key, v);
  else if (key == "embed_max_iter") embed_max_iter = static_cast<int>(to_int(key, v));
  else if (key == "init_std") init_std = to_double(key, v);
  else if (key == "lambda_min_ratio") lambda_min_ratio = to_double(key, v);
  else if (key == "rank_tolerance") rank_tolerance = to_double(key, v);
  else if (key == "max_active") max_active = static_cast<int>(to_int(key, v));
  else if (key == "intercept") intercept = to_bool(key, v);
  else if (key == "ipod_max_iter") ipod_max_iter = static_cast<int>(to_int(key, v));
  else if (key == "folds") folds = static_cast<int>(to_int(key, v));
  else if (key == "reg_c") reg_c = to_double(key, v);
  else if (key == "epochs") epochs = static_cast<int>(to_int(key, v));
  else if (key == "test_fraction") test_fraction = to_double(key, v);
  else if (key == "seed") seed = static_cast<std::uint64_t>(to_int(key, v));
  else if (key == "repeats") repeats = static_cast<int>(to_int(key, v));
  else if (key == "threads") threads = static_cast<int>(to_int(key, v));
  else if (key == "classes") classes = static_cast<int>(to_int(key, v));
  else if (key == "per_class") per_class = static_cast<int>(to_int(key, v));
  else if (key == "outliers_per_class") outliers_per_class = static_cast<int>(to_int(key, v));
  else if (key == "class_std") class_std = to_double(key, v);
  else if (key == "halfwidth") halfwidth = to_double(key, v);
  else if (key == "ratios") {
    ratios.clear();
    std::istringstream ss(v);
    std::string item;
    while (std::getline(ss, item, ',')) ratios.push_back(to_double(key, trim(item)));
  } else {
    throw ConfigError("unknown config key '" + key + "'");
  }
}

void Config::load(std::istream& in) {
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    if (trim(line).empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError("config line " + std::to_string(lineno) + ": expected key = value");
    set(line.substr(0, eq), line.substr(eq + 1));
  }
}

void Config::load_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file '" + path.string() + "'");
  load(in);
}

nlohmann::ordered_json Config::to_json() const {
  nlohmann::ordered_json j;
  j["k_neighbors"] = k_neighbors;
  j["normalize"] = normalize;
  j["restart_prob"] = restart_prob;
  j["walk_tolerance"] = walk_tolerance;
  j["walk_max_iter"] = walk_max_iter;
  j["embed_dim"] = embed_dim;
  j["lbfgs_memory"] = lbfgs_memory;
  j["gradient_tolerance"] = gradient_tolerance;
  j["embed_max_iter"] = embed_max_iter;
  j["init_std"] = init_std;
  j["lambda_min_ratio"] = lambda_min_ratio;
  j["rank_tolerance"] = rank_tolerance;
  j["max_active"] = max_active;
  j["intercept"] = intercept;
  j["ipod_max_iter"] = ipod_max_iter;
  j["folds"] = folds;
  j["reg_c"] = reg_c;
  j["epochs"] = epochs;
  j["test_fraction"] = test_fraction;
  j["seed"] = seed;
  j["repeats"] = repeats;
  j["ratios"] = ratios;
  j["threads"] = threads;
  j["classes"] = classes;
  j["per_class"] = per_class;
  j["outliers_per_class"] = outliers_per_class;
  j["class_std"] = class_std;
  j["halfwidth"] = halfwidth;
  return j;
}

Config Config::from_json(const nlohmann::ordered_json& j) {
  Config c;
  for (const auto& [key, value] : j.items()) c.set(key, json_scalar(value));
  return c;
}

GraphOptions Config::graph_options() const { return {k_neighbors, normalize}; }

LazyWalkOptions Config::walk_options() const { return {restart_prob, walk_tolerance, walk_max_iter}; }

EmbeddingOptions Config::embedding_options() const {
  EmbeddingOptions o;
  o.d = embed_dim;
  o.memory = lbfgs_memory;
  o.gradient_tolerance = gradient_tolerance;
  o.max_iter = embed_max_iter;
  o.init_std = init_std;
  o.seed = seed;
  return o;
}

LassoPathOptions Config::path_options() const {
  LassoPathOptions o;
  o.lambda_min_ratio = lambda_min_ratio;
  o.max_active = max_active;
  return o;
}

LinearTrainOptions Config::train_options() const { return {reg_c, epochs, seed}; }

CrossValidationOptions Config::cv_options() const { return {folds, seed, reg_c, epochs}; }

SyntheticConfig Config::synthetic() const {
  if (classes < 1) throw ConfigError("classes must be at least 1");
  SyntheticConfig sc;
  for (int c = 1; c <= classes; ++c) sc.class_means.push_back({double(c), double(c)});
  sc.per_class_count = per_class;
  sc.outlier_count_per_class = outliers_per_class;
  sc.class_std = class_std;
  sc.outlier_box_halfwidth = halfwidth;
  sc.rng_seed = seed;
  sc.validate();
  return sc;
}

}  // namespace rlasso
