#include "rlasso/bench.hpp"
#include "rlasso/error.hpp"

#include <doctest.h>

#include <set>
#include <sstream>

using namespace rlasso;

namespace {

SyntheticConfig small_config(std::uint64_t seed) {
  auto cfg = SyntheticConfig::paper_fig1(seed);
  cfg.per_class_count = 40;
  cfg.outlier_count_per_class = 12;
  return cfg;
}

template <class View>
concept carries_labels = requires(View v) { v.class_ids; };

}  // namespace

TEST_CASE("path experiment without outliers reports no ordering metric") {
  auto cfg = small_config(1);
  cfg.outlier_count_per_class = 0;
  auto exp = run_path_experiment(cfg);
  CHECK_FALSE(exp.top_fraction.has_value());
  CHECK(exp.kkt_violation <= 1e-6);
}

TEST_CASE("path experiment is deterministic") {
  auto a = run_path_experiment(small_config(4));
  auto b = run_path_experiment(small_config(4));
  CHECK(a.path_csv == b.path_csv);
  CHECK(a.report.ranking == b.report.ranking);
  REQUIRE(a.top_fraction.has_value());
  CHECK(*a.top_fraction >= 0.0);
  CHECK(*a.top_fraction <= 1.0);
  CHECK(a.path_csv.rfind("lambda,instance,gamma,is_outlier\n", 0) == 0);
}

TEST_CASE("sweep records and aggregates") {
  SweepOptions opts;
  opts.ratios = {0.5, -1.0, 1.5, 4.0};
  opts.repeats = 1;
  opts.base = small_config(0);
  auto res = run_ratio_sweep(opts);
  CHECK(res.records.size() == 2);
  CHECK(res.aggregates.size() == 2);
  CHECK(res.config["skipped_ratios"].size() == 2);
  for (const auto& agg : res.aggregates) {
    REQUIRE(agg.detection_accuracy.has_value());
    CHECK(agg.detection_accuracy->std == 0.0);
    CHECK(agg.max_kkt_violation <= 1e-6);
  }
  CHECK(res.records[0].cell == "ratio=0.5");

  opts.ratios = {0.25};
  opts.repeats = 3;
  auto three = run_ratio_sweep(opts);
  auto copy = three;
  copy.aggregate();
  REQUIRE(three.aggregates.size() == 1);
  CHECK(copy.aggregates[0].detection_accuracy->mean == three.aggregates[0].detection_accuracy->mean);
  CHECK(copy.aggregates[0].detection_accuracy->std == three.aggregates[0].detection_accuracy->std);
  std::vector<double> values;
  for (const auto& r : three.records) values.push_back(*r.detection_accuracy);
  auto manual = summarize(values);
  CHECK(manual.mean == three.aggregates[0].detection_accuracy->mean);
  std::set<std::uint64_t> seeds;
  for (const auto& r : three.records) seeds.insert(r.seed);
  CHECK(seeds.size() == 3);
}

TEST_CASE("sweep does not depend on worker count") {
  SweepOptions opts;
  opts.ratios = {0.25, 1.0};
  opts.repeats = 2;
  opts.base = small_config(0);
  opts.threads = 1;
  auto serial = run_ratio_sweep(opts);
  opts.threads = 4;
  auto parallel = run_ratio_sweep(opts);
  std::ostringstream a, b;
  for (auto* r : {&serial, &parallel}) {
    for (auto& rec : r->records) rec.runtime_ms = 0.0;
    r->runtime_ms = 0.0;
  }
  write_result_csv(serial, a);
  write_result_csv(parallel, b);
  CHECK(a.str() == b.str());
}

TEST_CASE("summary statistics") {
  auto one = summarize({0.7});
  CHECK(one.mean == 0.7);
  CHECK(one.std == 0.0);
  auto two = summarize({1.0, 3.0});
  CHECK(two.mean == 2.0);
  CHECK(two.std == doctest::Approx(std::sqrt(2.0)));
}

TEST_CASE("csv marks missing metrics") {
  ExperimentResult r;
  r.name = "t";
  RepeatRecord rec;
  rec.cell = "RAW";
  rec.classifier_accuracy = 0.5;
  r.records.push_back(rec);
  r.aggregate();
  std::ostringstream out;
  write_result_csv(r, out);
  CHECK(out.str().find("NA") != std::string::npos);
}

TEST_CASE("pipeline configurations") {
  for (const char* name : {"RAW", "LRW", "TDCA", "P-LASSO", "IPOD", "P-LASSO-TDCA"}) {
    CHECK(PipelineConfig::named(name).name() == name);
  }
  CHECK_THROWS_AS(PipelineConfig::named("NOPE"), ConfigError);
  PipelineConfig bad;
  bad.features = FeatureStage::Tdca;
  bad.classifier = ClassifierStage::Lrw;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  PipelineConfig allowed;
  allowed.removal = RemovalStage::Plasso;
  allowed.classifier = ClassifierStage::Lrw;
  CHECK_NOTHROW(allowed.validate());
}

TEST_CASE("split keeps test labels out of training views") {
  static_assert(!carries_labels<UnlabeledView>);
  static_assert(carries_labels<LabeledView>);
  auto ds = generate_synthetic(small_config(2));
  auto split = stratified_split(ds, 0.3, 9, true);
  std::set<Index> train(split.train.rows.begin(), split.train.rows.end());
  for (Index i : split.test.rows) CHECK(train.count(i) == 0);
  CHECK(train.size() + split.test.rows.size() == static_cast<std::size_t>(ds.size()));
  CHECK(split.key.class_ids.size() == split.test.rows.size());
  // 30% of each class of 52 instances
  CHECK(split.test.rows.size() == 3 * 16);
  for (std::size_t i = 0; i < split.test.rows.size(); ++i)
    CHECK(split.key.include[i] == !(*ds.outlier_mask)[split.test.rows[i]]);
}

TEST_CASE("identity pipeline equals a direct classifier run") {
  auto ds = generate_synthetic(small_config(3));
  auto cfg = PipelineConfig::named("RAW");
  cfg.seed = 5;
  auto outcome = run_pipeline_once(ds, cfg);

  auto split = stratified_split(ds, cfg.test_fraction, cfg.seed, cfg.evaluate_inliers_only);
  LinearTrainOptions topts = cfg.train;
  topts.seed = cfg.train.seed ^ cfg.seed;
  auto model = train_linear(split.train.features, split.train.class_ids, topts);
  auto predicted = predict(model, split.test.features);
  CHECK(outcome.predictions == predicted);
  std::vector<int> p, t;
  for (std::size_t i = 0; i < predicted.size(); ++i) {
    if (!split.key.include[i]) continue;
    p.push_back(predicted[i]);
    t.push_back(split.key.class_ids[i]);
  }
  CHECK(outcome.test_accuracy == accuracy(p, t));
  CHECK(outcome.removed.empty());
}

TEST_CASE("pipelines are deterministic") {
  auto ds = generate_synthetic(small_config(6));
  for (const char* name : {"P-LASSO", "IPOD", "LRW", "P-LASSO-TDCA"}) {
    auto cfg = PipelineConfig::named(name);
    cfg.seed = 2;
    cfg.embedding.max_iter = 60;
    auto a = run_pipeline_once(ds, cfg);
    auto b = run_pipeline_once(ds, cfg);
    CAPTURE(name);
    CHECK(a.test_accuracy == b.test_accuracy);
    CHECK(a.predictions == b.predictions);
    CHECK(a.removed == b.removed);
    if (cfg.removal != RemovalStage::None) {
      CHECK(a.removal_precision.has_value());
      CHECK(a.kkt_violation <= 1e-6);
    }
  }
}

TEST_CASE("removal count defaults to the true training outlier count") {
  auto ds = generate_synthetic(small_config(7));
  auto cfg = PipelineConfig::named("P-LASSO");
  auto outcome = run_pipeline_once(ds, cfg);
  auto split = stratified_split(ds, cfg.test_fraction, cfg.seed, true);
  const auto truth = std::count(split.train.outlier_mask->begin(), split.train.outlier_mask->end(), true);
  CHECK(static_cast<long>(outcome.removed.size()) == truth);
  cfg.removal_count = 3;
  CHECK(run_pipeline_once(ds, cfg).removed.size() == 3);
}

TEST_CASE("result json round") {
  auto ds = generate_synthetic(small_config(8));
  auto res = run_pipeline(ds, PipelineConfig::named("RAW"));
  auto j = to_json(res);
  CHECK(j["config"]["features"] == "raw");
  CHECK(j["records"].size() == 1);
}

TEST_CASE("thread resolution") {
  CHECK(resolve_threads(3) == 3);
  CHECK(resolve_threads(0) >= 1);
}
