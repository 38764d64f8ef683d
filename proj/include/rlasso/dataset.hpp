#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace rlasso {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

/// Observation set for the model y = Φβ + ε + γ: one feature row per instance,
/// a real-encoded label, and (for synthetic data) the true outlier support.
struct Dataset {
  Matrix features;                         // n x p
  Vector labels;                           // n, real-encoded
  std::optional<std::vector<int>> class_ids;
  std::optional<std::vector<bool>> outlier_mask;
  std::vector<std::string> instance_ids;
  std::optional<std::uint64_t> seed;       // generator seed, when synthetic

  Eigen::Index size() const { return features.rows(); }
  Eigen::Index dim() const { return features.cols(); }

  /// Throws DataError when shapes disagree or any value is non-finite.
  void validate() const;

  /// Number of true outliers; zero when no mask is present.
  std::size_t outlier_count() const;

  /// Subset of rows, preserving all per-instance fields.
  Dataset subset(const std::vector<Eigen::Index>& rows) const;
};

/// Bijection between integer class ids and the real values 1..K used as
/// regression targets. Decoding picks the nearest encoded value.
class LabelEncoding {
 public:
  explicit LabelEncoding(std::vector<int> class_ids);

  const std::vector<int>& classes() const { return classes_; }
  double encode(int class_id) const;
  int decode(double value) const;

 private:
  std::vector<int> classes_;  // sorted, unique
};

struct EncodedLabels {
  Vector values;
  LabelEncoding encoding;
};

EncodedLabels encode_labels(const std::vector<int>& class_ids);

struct SyntheticConfig {
  std::vector<std::vector<double>> class_means;
  double class_std = 0.1;
  int per_class_count = 100;
  int outlier_count_per_class = 30;
  double outlier_box_halfwidth = 0.5;
  std::uint64_t rng_seed = 0;

  void validate() const;

  /// Three classes at (1,1), (2,2), (3,3), sigma 0.1, 100 inliers and
  /// 30 outliers per class drawn from a unit box around each mean.
  static SyntheticConfig paper_fig1(std::uint64_t seed = 0);
};

/// Inliers of every class first (class by class), then outliers (class by
/// class). Class ids are 1..C and labels equal the class id.
Dataset generate_synthetic(const SyntheticConfig& cfg);

enum class FileFormat { Csv, Json };

FileFormat format_from_path(const std::filesystem::path& path);

Dataset load_dataset(const std::filesystem::path& path, FileFormat format);
void save_dataset(const Dataset& ds, const std::filesystem::path& path, FileFormat format);

Dataset read_csv(std::istream& in);
void write_csv(const Dataset& ds, std::ostream& out);
Dataset read_json(std::istream& in);
void write_json(const Dataset& ds, std::ostream& out);

}  // namespace rlasso
