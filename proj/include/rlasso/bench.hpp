#pragma once

#include "rlasso/classify.hpp"
#include "rlasso/dataset.hpp"
#include "rlasso/plasso.hpp"
#include "rlasso/tdca.hpp"

#include <json.hpp>

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

namespace rlasso {

/// Metrics of one repeat of one experiment cell.
struct RepeatRecord {
  std::string cell;  // e.g. "ratio=0.5" or a pipeline name
  double ratio = 0.0;
  int repeat = 0;
  std::uint64_t seed = 0;
  std::optional<double> detection_accuracy;  // |detected ∩ truth| / |truth|
  std::optional<double> recall;
  std::optional<double> precision;
  std::optional<double> classifier_accuracy;
  double kkt_violation = 0.0;
  double runtime_ms = 0.0;
};

struct MetricSummary {
  double mean = 0.0;
  double std = 0.0;  // sample standard deviation, 0 for a single repeat
  int count = 0;
};

struct CellAggregate {
  std::string cell;
  double ratio = 0.0;
  std::optional<MetricSummary> detection_accuracy;
  std::optional<MetricSummary> classifier_accuracy;
  double max_kkt_violation = 0.0;
};

struct ExperimentResult {
  std::string name;
  nlohmann::ordered_json config;
  std::vector<RepeatRecord> records;  // ordered by cell, then repeat
  std::vector<CellAggregate> aggregates;
  double runtime_ms = 0.0;

  /// Recomputes `aggregates` from `records`.
  void aggregate();
};

MetricSummary summarize(const std::vector<double>& values);

nlohmann::ordered_json to_json(const ExperimentResult& result);
void write_result_json(const ExperimentResult& result, std::ostream& out);
void write_result_csv(const ExperimentResult& result, std::ostream& out);

struct PathExperiment {
  Dataset dataset;
  RegularizationPath path;
  OutlierReport report;
  std::string path_csv;
  /// Fraction of true outliers among the first |truth| activations; empty
  /// when the dataset has no outliers.
  std::optional<double> top_fraction;
  double kkt_violation = 0.0;
  double runtime_ms = 0.0;
};

PathExperiment run_path_experiment(const SyntheticConfig& cfg, const LassoPathOptions& opts = {});
/// Reference three-class configuration (100 inliers and 30 outliers each) with the given seed.
PathExperiment run_path_experiment(std::uint64_t seed);

struct SweepOptions {
  std::vector<double> ratios{0.1, 0.25, 0.5, 0.75, 1.0, 1.25, 1.5};
  int repeats = 10;
  std::uint64_t seed = 0;
  SyntheticConfig base = SyntheticConfig::paper_fig1();
  LassoPathOptions path;
  int threads = 0;  // 0: ROBUST_LASSO_THREADS or hardware concurrency
};

/// Outlier-ratio sweep: per ratio ρ keeps the inliers and adds round(ρ · per_class_count)
/// uniform outliers per class; detection uses the true outlier count as cutoff.
ExperimentResult run_ratio_sweep(const SweepOptions& opts);

std::uint64_t cell_seed(std::uint64_t base, std::size_t cell, int repeat);

enum class FeatureStage { Raw, Tdca };
enum class RemovalStage { None, Plasso, Ipod };
enum class ClassifierStage { Linear, Lrw };

struct PipelineConfig {
  FeatureStage features = FeatureStage::Raw;
  RemovalStage removal = RemovalStage::None;
  ClassifierStage classifier = ClassifierStage::Linear;
  /// Outliers removed from training: k >= 0 takes the top k; k < 0 uses the
  /// true outlier count of the training split (benchmark cutoff). Ignored when
  /// cv_folds > 0.
  Index removal_count = -1;
  int cv_folds = 0;
  bool intercept = true;  // append a constant column to the outlier design
  double test_fraction = 0.3;
  bool evaluate_inliers_only = true;
  std::uint64_t seed = 0;
  GraphOptions graph;
  LazyWalkOptions walk;
  EmbeddingOptions embedding;
  LassoPathOptions path;
  double rank_tolerance = 1e-10;
  LinearTrainOptions train;
  int ipod_max_iter = 100;

  /// Table-style name, e.g. "RAW", "LRW", "TDCA", "P-LASSO", "IPOD", "P-LASSO-TDCA".
  std::string name() const;
  void validate() const;
  static PipelineConfig named(const std::string& name);
};

/// Labeled training view: the only data training stages may read.
struct LabeledView {
  std::vector<Index> rows;  // indices into the source dataset
  Matrix features;
  std::vector<int> class_ids;
  std::optional<std::vector<bool>> outlier_mask;
};

/// Unlabeled test view: features only.
struct UnlabeledView {
  std::vector<Index> rows;
  Matrix features;
};

/// Held-out truth, read only by the scorer.
struct EvaluationKey {
  std::vector<int> class_ids;
  std::vector<bool> include;
};

struct Split {
  LabeledView train;
  UnlabeledView test;
  EvaluationKey key;
};

/// Stratified split by class; `test_fraction` of each class (rounded) goes to test.
Split stratified_split(const Dataset& ds, double test_fraction, std::uint64_t seed, bool evaluate_inliers_only);

struct PipelineOutcome {
  double test_accuracy = 0.0;
  std::vector<Index> removed;  // source-dataset indices removed from training
  std::vector<int> predictions;  // per test instance, in split order
  std::optional<double> removal_precision;
  std::optional<double> removal_recall;
  double kkt_violation = 0.0;
};

PipelineOutcome run_pipeline_once(const Dataset& ds, const PipelineConfig& cfg);
ExperimentResult run_pipeline(const Dataset& ds, const PipelineConfig& cfg);

nlohmann::ordered_json to_json(const PipelineConfig& cfg);
nlohmann::ordered_json to_json(const SyntheticConfig& cfg);

/// Worker count: explicit request, else ROBUST_LASSO_THREADS, else hardware concurrency.
int resolve_threads(int requested);

}  // namespace rlasso
