#include "rlasso/dataset.hpp"

#include "rlasso/error.hpp"

#include <json.hpp>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <random>
#include <set>
#include <sstream>

namespace rlasso {

namespace {

std::string fmt_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> cells;
  std::string cell;
  std::istringstream ss(line);
  while (std::getline(ss, cell, ',')) {
    while (!cell.empty() && (cell.back() == '\r' || cell.back() == ' ')) cell.pop_back();
    while (!cell.empty() && cell.front() == ' ') cell.erase(cell.begin());
    cells.push_back(cell);
  }
  if (!line.empty() && line.back() == ',') cells.emplace_back();
  return cells;
}

double parse_cell(const std::string& s, std::size_t row, std::size_t col) {
  double v = 0.0;
  const char* first = s.data();
  const char* last = s.data() + s.size();
  if (!s.empty() && *first == '+') ++first;
  auto [ptr, ec] = std::from_chars(first, last, v);
  if (ec != std::errc() || ptr != last) {
    // from_chars rejects "nan"/"inf" spellings on some inputs; give those the
    // non-finite message rather than a generic parse failure.
    std::string lower(s);
    std::transform(lower.begin(), lower.end(), lower.begin(), ::tolower);
    if (lower.find("nan") != std::string::npos || lower.find("inf") != std::string::npos) {
      throw DataError("non-finite value at (" + std::to_string(row) + "," + std::to_string(col) + ")");
    }
    throw DataError("non-numeric value '" + s + "' at (" + std::to_string(row) + "," +
                    std::to_string(col) + ")");
  }
  if (!std::isfinite(v)) {
    throw DataError("non-finite value at (" + std::to_string(row) + "," + std::to_string(col) + ")");
  }
  return v;
}

std::optional<std::vector<int>> integral_classes(const Vector& labels) {
  std::vector<int> ids(static_cast<std::size_t>(labels.size()));
  for (Eigen::Index i = 0; i < labels.size(); ++i) {
    const double r = std::round(labels[i]);
    if (r != labels[i] || std::abs(r) > 1e9) return std::nullopt;
    ids[static_cast<std::size_t>(i)] = static_cast<int>(r);
  }
  return ids;
}

void fill_default_ids(Dataset& ds) {
  if (!ds.instance_ids.empty()) return;
  ds.instance_ids.reserve(static_cast<std::size_t>(ds.size()));
  for (Eigen::Index i = 0; i < ds.size(); ++i) ds.instance_ids.push_back(std::to_string(i));
}

}  // namespace

void Dataset::validate() const {
  const auto n = features.rows();
  if (labels.size() != n) {
    throw DataError("label count " + std::to_string(labels.size()) + " does not match " +
                    std::to_string(n) + " feature rows");
  }
  if (outlier_mask && static_cast<Eigen::Index>(outlier_mask->size()) != n) {
    throw DataError("outlier mask length does not match feature rows");
  }
  if (class_ids && static_cast<Eigen::Index>(class_ids->size()) != n) {
    throw DataError("class id count does not match feature rows");
  }
  if (!instance_ids.empty() && static_cast<Eigen::Index>(instance_ids.size()) != n) {
    throw DataError("instance id count does not match feature rows");
  }
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < features.cols(); ++j) {
      if (!std::isfinite(features(i, j))) {
        throw DataError("non-finite value at (" + std::to_string(i) + "," + std::to_string(j) + ")");
      }
    }
    if (!std::isfinite(labels[i])) {
      throw DataError("non-finite label at row " + std::to_string(i));
    }
  }
}

std::size_t Dataset::outlier_count() const {
  if (!outlier_mask) return 0;
  return static_cast<std::size_t>(std::count(outlier_mask->begin(), outlier_mask->end(), true));
}

Dataset Dataset::subset(const std::vector<Eigen::Index>& rows) const {
  Dataset out;
  const auto m = static_cast<Eigen::Index>(rows.size());
  out.features.resize(m, features.cols());
  out.labels.resize(m);
  if (class_ids) out.class_ids.emplace();
  if (outlier_mask) out.outlier_mask.emplace();
  for (Eigen::Index k = 0; k < m; ++k) {
    const auto i = rows[static_cast<std::size_t>(k)];
    out.features.row(k) = features.row(i);
    out.labels[k] = labels[i];
    if (class_ids) out.class_ids->push_back((*class_ids)[static_cast<std::size_t>(i)]);
    if (outlier_mask) out.outlier_mask->push_back((*outlier_mask)[static_cast<std::size_t>(i)]);
    if (!instance_ids.empty()) out.instance_ids.push_back(instance_ids[static_cast<std::size_t>(i)]);
  }
  out.seed = seed;
  return out;
}

LabelEncoding::LabelEncoding(std::vector<int> class_ids) : classes_(std::move(class_ids)) {
  std::sort(classes_.begin(), classes_.end());
  classes_.erase(std::unique(classes_.begin(), classes_.end()), classes_.end());
  if (classes_.empty()) throw ConfigError("label encoding needs at least one class");
}

double LabelEncoding::encode(int class_id) const {
  auto it = std::lower_bound(classes_.begin(), classes_.end(), class_id);
  if (it == classes_.end() || *it != class_id) {
    throw ConfigError("unknown class id " + std::to_string(class_id));
  }
  return static_cast<double>(it - classes_.begin() + 1);
}

int LabelEncoding::decode(double value) const {
  const double k = std::clamp(std::round(value), 1.0, static_cast<double>(classes_.size()));
  return classes_[static_cast<std::size_t>(k) - 1];
}

EncodedLabels encode_labels(const std::vector<int>& class_ids) {
  if (class_ids.empty()) throw ConfigError("cannot encode an empty label vector");
  LabelEncoding enc(class_ids);
  Vector values(static_cast<Eigen::Index>(class_ids.size()));
  for (std::size_t i = 0; i < class_ids.size(); ++i) {
    values[static_cast<Eigen::Index>(i)] = enc.encode(class_ids[i]);
  }
  return {std::move(values), std::move(enc)};
}

void SyntheticConfig::validate() const {
  if (class_means.empty()) throw ConfigError("synthetic config needs at least one class mean");
  const auto p = class_means.front().size();
  if (p == 0) throw ConfigError("class means must have positive dimension");
  for (const auto& m : class_means) {
    if (m.size() != p) throw ConfigError("all class means must share one dimension");
  }
  if (!(class_std > 0.0)) throw ConfigError("class_std must be positive");
  if (per_class_count <= 0) throw ConfigError("per_class_count must be positive");
  if (outlier_count_per_class < 0) throw ConfigError("outlier_count_per_class must be non-negative");
  if (!(outlier_box_halfwidth > 0.0)) throw ConfigError("outlier_box_halfwidth must be positive");
}

SyntheticConfig SyntheticConfig::paper_fig1(std::uint64_t seed) {
  SyntheticConfig cfg;
  cfg.class_means = {{1.0, 1.0}, {2.0, 2.0}, {3.0, 3.0}};
  cfg.class_std = 0.1;
  cfg.per_class_count = 100;
  cfg.outlier_count_per_class = 30;
  cfg.outlier_box_halfwidth = 0.5;
  cfg.rng_seed = seed;
  return cfg;
}

Dataset generate_synthetic(const SyntheticConfig& cfg) {
  cfg.validate();
  const auto classes = static_cast<Eigen::Index>(cfg.class_means.size());
  const auto p = static_cast<Eigen::Index>(cfg.class_means.front().size());
  const Eigen::Index inliers = classes * cfg.per_class_count;
  const Eigen::Index n = inliers + classes * cfg.outlier_count_per_class;

  std::mt19937_64 rng(cfg.rng_seed);
  std::normal_distribution<double> gauss(0.0, cfg.class_std);
  std::uniform_real_distribution<double> box(-cfg.outlier_box_halfwidth, cfg.outlier_box_halfwidth);

  Dataset ds;
  ds.features.resize(n, p);
  ds.labels.resize(n);
  ds.class_ids.emplace(static_cast<std::size_t>(n));
  ds.outlier_mask.emplace(static_cast<std::size_t>(n), false);
  ds.seed = cfg.rng_seed;

  Eigen::Index row = 0;
  auto emit = [&](Eigen::Index c, bool outlier) {
    const auto& mean = cfg.class_means[static_cast<std::size_t>(c)];
    for (Eigen::Index j = 0; j < p; ++j) {
      const double offset = outlier ? box(rng) : gauss(rng);
      ds.features(row, j) = mean[static_cast<std::size_t>(j)] + offset;
    }
    const int id = static_cast<int>(c) + 1;
    ds.labels[row] = id;
    (*ds.class_ids)[static_cast<std::size_t>(row)] = id;
    (*ds.outlier_mask)[static_cast<std::size_t>(row)] = outlier;
    ++row;
  };
  for (Eigen::Index c = 0; c < classes; ++c) {
    for (int i = 0; i < cfg.per_class_count; ++i) emit(c, false);
  }
  for (Eigen::Index c = 0; c < classes; ++c) {
    for (int i = 0; i < cfg.outlier_count_per_class; ++i) emit(c, true);
  }
  fill_default_ids(ds);
  return ds;
}

FileFormat format_from_path(const std::filesystem::path& path) {
  auto ext = path.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(), ::tolower);
  if (ext == ".csv") return FileFormat::Csv;
  if (ext == ".json") return FileFormat::Json;
  throw ConfigError("cannot infer dataset format from '" + path.string() + "' (use .csv or .json)");
}

Dataset read_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) throw DataError("empty CSV input");
  const auto header = split_csv_line(line);
  if (header.empty() || header.front() != "id") throw DataError("CSV header must start with 'id'");

  std::size_t label_col = header.size();
  std::optional<std::size_t> outlier_col;
  for (std::size_t c = 1; c < header.size(); ++c) {
    if (header[c] == "label") label_col = c;
    if (header[c] == "outlier") outlier_col = c;
  }
  if (label_col == header.size()) throw DataError("missing label column");
  const std::size_t p = label_col - 1;
  for (std::size_t c = 1; c <= p; ++c) {
    if (header[c] != "f" + std::to_string(c)) {
      throw DataError("unexpected feature column '" + header[c] + "'");
    }
  }

  std::vector<std::vector<double>> rows;
  std::vector<double> labels;
  std::vector<bool> mask;
  std::vector<std::string> ids;
  std::size_t row = 0;
  while (std::getline(in, line)) {
    if (line.empty() || line == "\r") continue;
    const auto cells = split_csv_line(line);
    if (cells.size() != header.size()) {
      throw DataError("row " + std::to_string(row) + " has " + std::to_string(cells.size()) +
                      " cells, header has " + std::to_string(header.size()));
    }
    ids.push_back(cells[0]);
    std::vector<double> feats(p);
    for (std::size_t c = 0; c < p; ++c) feats[c] = parse_cell(cells[c + 1], row, c);
    rows.push_back(std::move(feats));
    labels.push_back(parse_cell(cells[label_col], row, label_col - 1));
    if (outlier_col) {
      const auto& v = cells[*outlier_col];
      if (v != "0" && v != "1") throw DataError("outlier flag must be 0 or 1 at row " + std::to_string(row));
      mask.push_back(v == "1");
    }
    ++row;
  }

  Dataset ds;
  ds.features.resize(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(p));
  ds.labels.resize(static_cast<Eigen::Index>(rows.size()));
  for (std::size_t i = 0; i < rows.size(); ++i) {
    for (std::size_t j = 0; j < p; ++j) ds.features(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = rows[i][j];
    ds.labels[static_cast<Eigen::Index>(i)] = labels[i];
  }
  if (outlier_col) ds.outlier_mask = std::move(mask);
  ds.instance_ids = std::move(ids);
  ds.class_ids = integral_classes(ds.labels);
  ds.validate();
  return ds;
}

void write_csv(const Dataset& ds, std::ostream& out) {
  ds.validate();
  out << "id";
  for (Eigen::Index j = 0; j < ds.dim(); ++j) out << ",f" << (j + 1);
  out << ",label";
  if (ds.outlier_mask) out << ",outlier";
  out << '\n';
  for (Eigen::Index i = 0; i < ds.size(); ++i) {
    out << (ds.instance_ids.empty() ? std::to_string(i) : ds.instance_ids[static_cast<std::size_t>(i)]);
    for (Eigen::Index j = 0; j < ds.dim(); ++j) out << ',' << fmt_double(ds.features(i, j));
    out << ',' << fmt_double(ds.labels[i]);
    if (ds.outlier_mask) out << ',' << ((*ds.outlier_mask)[static_cast<std::size_t>(i)] ? 1 : 0);
    out << '\n';
  }
}

Dataset read_json(std::istream& in) {
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("malformed JSON dataset: ") + e.what());
  }
  if (!j.contains("features") || !j.contains("labels")) {
    throw DataError("JSON dataset needs 'features' and 'labels'");
  }
  try {
    const auto& feats = j.at("features");
    const auto& labels = j.at("labels");
    const auto n = static_cast<Eigen::Index>(feats.size());
    const Eigen::Index p = n > 0 ? static_cast<Eigen::Index>(feats.at(0).size()) : 0;
    Dataset ds;
    ds.features.resize(n, p);
    for (Eigen::Index i = 0; i < n; ++i) {
      const auto& row = feats.at(static_cast<std::size_t>(i));
      if (static_cast<Eigen::Index>(row.size()) != p) {
        throw DataError("feature row " + std::to_string(i) + " has " + std::to_string(row.size()) +
                        " entries, expected " + std::to_string(p));
      }
      for (Eigen::Index c = 0; c < p; ++c) {
        const auto& cell = row.at(static_cast<std::size_t>(c));
        if (!cell.is_number()) {
          throw DataError("non-finite value at (" + std::to_string(i) + "," + std::to_string(c) + ")");
        }
        ds.features(i, c) = cell.get<double>();
      }
    }
    if (static_cast<Eigen::Index>(labels.size()) != n) throw DataError("label count does not match feature rows");
    ds.labels.resize(n);
    for (Eigen::Index i = 0; i < n; ++i) {
      const auto& cell = labels.at(static_cast<std::size_t>(i));
      if (!cell.is_number()) throw DataError("non-numeric label at row " + std::to_string(i));
      ds.labels[i] = cell.get<double>();
    }
    if (j.contains("outlier_mask")) ds.outlier_mask = j.at("outlier_mask").get<std::vector<bool>>();
    if (j.contains("class_ids")) {
      ds.class_ids = j.at("class_ids").get<std::vector<int>>();
    } else {
      ds.class_ids = integral_classes(ds.labels);
    }
    if (j.contains("ids")) ds.instance_ids = j.at("ids").get<std::vector<std::string>>();
    if (j.contains("meta") && j.at("meta").contains("seed") && !j.at("meta").at("seed").is_null()) {
      ds.seed = j.at("meta").at("seed").get<std::uint64_t>();
    }
    ds.validate();
    return ds;
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("malformed JSON dataset: ") + e.what());
  }
}

void write_json(const Dataset& ds, std::ostream& out) {
  ds.validate();
  nlohmann::json j;
  auto feats = nlohmann::json::array();
  for (Eigen::Index i = 0; i < ds.size(); ++i) {
    auto row = nlohmann::json::array();
    for (Eigen::Index c = 0; c < ds.dim(); ++c) row.push_back(ds.features(i, c));
    feats.push_back(std::move(row));
  }
  j["features"] = std::move(feats);
  j["labels"] = std::vector<double>(ds.labels.data(), ds.labels.data() + ds.labels.size());
  if (ds.outlier_mask) j["outlier_mask"] = *ds.outlier_mask;
  if (ds.class_ids) j["class_ids"] = *ds.class_ids;
  if (!ds.instance_ids.empty()) j["ids"] = ds.instance_ids;
  j["meta"]["seed"] = ds.seed ? nlohmann::json(*ds.seed) : nlohmann::json(nullptr);
  out << j.dump(1) << '\n';
}

Dataset load_dataset(const std::filesystem::path& path, FileFormat format) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open '" + path.string() + "'");
  return format == FileFormat::Csv ? read_csv(in) : read_json(in);
}

void save_dataset(const Dataset& ds, const std::filesystem::path& path, FileFormat format) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write '" + path.string() + "'");
  if (format == FileFormat::Csv) {
    write_csv(ds, out);
  } else {
    write_json(ds, out);
  }
}

}  // namespace rlasso
