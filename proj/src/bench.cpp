#include "rlasso/bench.hpp"

#include "rlasso/error.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <functional>
#include <map>
#include <numeric>
#include <ostream>
#include <random>
#include <sstream>
#include <thread>

namespace rlasso {

namespace {

using Clock = std::chrono::steady_clock;

double elapsed_ms(Clock::time_point start) {
  return std::chrono::duration<double, std::milli>(Clock::now() - start).count();
}

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

void parallel_for(std::size_t count, int threads, const std::function<void(std::size_t)>& body) {
  const auto workers = std::min<std::size_t>(static_cast<std::size_t>(std::max(1, threads)), count);
  if (workers <= 1) {
    for (std::size_t i = 0; i < count; ++i) body(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  std::vector<std::thread> pool;
  for (std::size_t w = 0; w < workers; ++w) {
    pool.emplace_back([&] {
      for (std::size_t i = next++; i < count; i = next++) {
        try {
          body(i);
        } catch (...) {
          std::lock_guard<std::mutex> lock(failure_mutex);
          if (!failure) failure = std::current_exception();
        }
      }
    });
  }
  for (auto& t : pool) t.join();
  if (failure) std::rethrow_exception(failure);
}

Matrix with_intercept(const Matrix& x) {
  Matrix out(x.rows(), x.cols() + 1);
  out << x, Vector::Ones(x.rows());
  return out;
}

Matrix gather_rows(const Matrix& x, const std::vector<Index>& rows) {
  Matrix out(static_cast<Index>(rows.size()), x.cols());
  for (std::size_t i = 0; i < rows.size(); ++i) out.row(static_cast<Index>(i)) = x.row(rows[i]);
  return out;
}

nlohmann::ordered_json opt_json(const std::optional<double>& v) {
  return v ? nlohmann::ordered_json(*v) : nlohmann::ordered_json(nullptr);
}

}  // namespace

int resolve_threads(int requested) {
  if (requested > 0) return requested;
  if (const char* env = std::getenv("ROBUST_LASSO_THREADS")) {
    const int v = std::atoi(env);
    if (v > 0) return v;
  }
  return static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));
}

std::uint64_t cell_seed(std::uint64_t base, std::size_t cell, int repeat) {
  return base * 1000003ULL + static_cast<std::uint64_t>(cell) * 1000ULL + static_cast<std::uint64_t>(repeat);
}

MetricSummary summarize(const std::vector<double>& values) {
  MetricSummary s;
  s.count = static_cast<int>(values.size());
  if (values.empty()) return s;
  s.mean = std::accumulate(values.begin(), values.end(), 0.0) / static_cast<double>(values.size());
  if (values.size() > 1) {
    double ss = 0.0;
    for (double v : values) ss += (v - s.mean) * (v - s.mean);
    s.std = std::sqrt(ss / static_cast<double>(values.size() - 1));
  }
  return s;
}

void ExperimentResult::aggregate() {
  aggregates.clear();
  std::vector<std::string> order;
  std::map<std::string, std::vector<const RepeatRecord*>> groups;
  for (const auto& r : records) {
    if (!groups.count(r.cell)) order.push_back(r.cell);
    groups[r.cell].push_back(&r);
  }
  for (const auto& cell : order) {
    CellAggregate agg;
    agg.cell = cell;
    std::vector<double> det, cls;
    for (const auto* r : groups[cell]) {
      agg.ratio = r->ratio;
      if (r->detection_accuracy) det.push_back(*r->detection_accuracy);
      if (r->classifier_accuracy) cls.push_back(*r->classifier_accuracy);
      agg.max_kkt_violation = std::max(agg.max_kkt_violation, r->kkt_violation);
    }
    if (!det.empty()) agg.detection_accuracy = summarize(det);
    if (!cls.empty()) agg.classifier_accuracy = summarize(cls);
    aggregates.push_back(std::move(agg));
  }
}

nlohmann::ordered_json to_json(const ExperimentResult& result) {
  nlohmann::ordered_json j;
  j["experiment"] = result.name;
  j["config"] = result.config;
  auto recs = nlohmann::ordered_json::array();
  for (const auto& r : result.records) {
    nlohmann::ordered_json o;
    o["cell"] = r.cell;
    o["ratio"] = r.ratio;
    o["repeat"] = r.repeat;
    o["seed"] = r.seed;
    o["detection_accuracy"] = opt_json(r.detection_accuracy);
    o["recall"] = opt_json(r.recall);
    o["precision"] = opt_json(r.precision);
    o["classifier_accuracy"] = opt_json(r.classifier_accuracy);
    o["kkt_violation"] = r.kkt_violation;
    o["runtime_ms"] = r.runtime_ms;
    recs.push_back(std::move(o));
  }
  j["records"] = std::move(recs);
  auto aggs = nlohmann::ordered_json::array();
  for (const auto& a : result.aggregates) {
    nlohmann::ordered_json o;
    o["cell"] = a.cell;
    o["ratio"] = a.ratio;
    const auto summary = [](const std::optional<MetricSummary>& s) {
      if (!s) return nlohmann::ordered_json(nullptr);
      return nlohmann::ordered_json{{"mean", s->mean}, {"std", s->std}, {"count", s->count}};
    };
    o["detection_accuracy"] = summary(a.detection_accuracy);
    o["classifier_accuracy"] = summary(a.classifier_accuracy);
    o["max_kkt_violation"] = a.max_kkt_violation;
    aggs.push_back(std::move(o));
  }
  j["aggregates"] = std::move(aggs);
  j["runtime_ms"] = result.runtime_ms;
  return j;
}

void write_result_json(const ExperimentResult& result, std::ostream& out) { out << to_json(result).dump(1) << '\n'; }

void write_result_csv(const ExperimentResult& result, std::ostream& out) {
  const auto opt = [](const std::optional<double>& v) { return v ? fmt(*v) : std::string("NA"); };
  out << "experiment,cell,ratio,repeat,seed,detection_accuracy,recall,precision,classifier_accuracy,kkt_violation\n";
  for (const auto& r : result.records) {
    out << result.name << ',' << r.cell << ',' << fmt(r.ratio) << ',' << r.repeat << ',' << r.seed << ','
        << opt(r.detection_accuracy) << ',' << opt(r.recall) << ',' << opt(r.precision) << ','
        << opt(r.classifier_accuracy) << ',' << fmt(r.kkt_violation) << '\n';
  }
}

nlohmann::ordered_json to_json(const SyntheticConfig& cfg) {
  nlohmann::ordered_json j;
  j["class_means"] = cfg.class_means;
  j["class_std"] = cfg.class_std;
  j["per_class_count"] = cfg.per_class_count;
  j["outlier_count_per_class"] = cfg.outlier_count_per_class;
  j["outlier_box_halfwidth"] = cfg.outlier_box_halfwidth;
  j["rng_seed"] = cfg.rng_seed;
  return j;
}

PathExperiment run_path_experiment(const SyntheticConfig& cfg, const LassoPathOptions& opts) {
  const auto start = Clock::now();
  PathExperiment out;
  out.dataset = generate_synthetic(cfg);
  const auto pre = precondition(out.dataset.features);
  out.path = lasso_path(pre, out.dataset.labels, opts);
  out.report = order_by_activation(out.path);
  out.kkt_violation = max_kkt_violation(out.path, pre, out.dataset.labels);

  std::ostringstream csv;
  write_path_csv(out.path, csv, out.dataset.outlier_mask);
  out.path_csv = csv.str();

  const auto truth = out.dataset.outlier_count();
  if (truth > 0) {
    const auto take = std::min(truth, out.report.ranking.size());
    const std::vector<Index> top(out.report.ranking.begin(), out.report.ranking.begin() + static_cast<std::ptrdiff_t>(take));
    out.top_fraction = outlier_recall(top, *out.dataset.outlier_mask);
  }
  out.runtime_ms = elapsed_ms(start);
  return out;
}

PathExperiment run_path_experiment(std::uint64_t seed) {
  return run_path_experiment(SyntheticConfig::paper_fig1(seed));
}

ExperimentResult run_ratio_sweep(const SweepOptions& opts) {
  if (opts.repeats < 1) throw ConfigError("repeats must be at least 1");
  const auto start = Clock::now();
  ExperimentResult result;
  result.name = "ratio_sweep";

  std::vector<double> ratios;
  std::vector<std::string> skipped;
  for (double r : opts.ratios) {
    if (r > 0.0 && r <= 3.0) {
      ratios.push_back(r);
    } else {
      skipped.push_back(fmt(r));
    }
  }

  const auto cells = ratios.size() * static_cast<std::size_t>(opts.repeats);
  std::vector<RepeatRecord> records(cells);
  parallel_for(cells, resolve_threads(opts.threads), [&](std::size_t task) {
    const std::size_t ri = task / static_cast<std::size_t>(opts.repeats);
    const int rep = static_cast<int>(task % static_cast<std::size_t>(opts.repeats));
    const auto t0 = Clock::now();
    SyntheticConfig cfg = opts.base;
    cfg.outlier_count_per_class = static_cast<int>(std::lround(ratios[ri] * cfg.per_class_count));
    cfg.rng_seed = cell_seed(opts.seed, ri, rep);
    const auto exp = run_path_experiment(cfg, opts.path);

    RepeatRecord& r = records[task];
    char label[32];
    std::snprintf(label, sizeof label, "ratio=%g", ratios[ri]);
    r.cell = label;
    r.ratio = ratios[ri];
    r.repeat = rep;
    r.seed = cfg.rng_seed;
    r.detection_accuracy = exp.top_fraction;
    r.recall = exp.top_fraction;
    r.precision = exp.top_fraction;
    r.kkt_violation = exp.kkt_violation;
    r.runtime_ms = elapsed_ms(t0);
  });

  result.records = std::move(records);
  result.aggregate();
  result.config["ratios"] = ratios;
  result.config["skipped_ratios"] = skipped;
  result.config["repeats"] = opts.repeats;
  result.config["seed"] = opts.seed;
  result.config["base"] = to_json(opts.base);
  result.config["lambda_min_ratio"] = opts.path.lambda_min_ratio;
  result.runtime_ms = elapsed_ms(start);
  return result;
}

std::string PipelineConfig::name() const {
  if (classifier == ClassifierStage::Lrw) return removal == RemovalStage::None ? "LRW" : "LRW+" + std::string(removal == RemovalStage::Plasso ? "P-LASSO" : "IPOD");
  std::string base = removal == RemovalStage::None ? "" : (removal == RemovalStage::Plasso ? "P-LASSO" : "IPOD");
  if (features == FeatureStage::Tdca) return base.empty() ? "TDCA" : base + "-TDCA";
  return base.empty() ? "RAW" : base;
}

void PipelineConfig::validate() const {
  if (classifier == ClassifierStage::Lrw && features == FeatureStage::Tdca) {
    throw ConfigError("the LRW classifier consumes the graph, not embedded features; use raw features");
  }
  if (!(test_fraction > 0.0 && test_fraction < 1.0)) throw ConfigError("test_fraction must lie in (0, 1)");
  if (cv_folds == 1 || cv_folds < 0) throw ConfigError("cv folds must be 0 (disabled) or at least 2");
}

PipelineConfig PipelineConfig::named(const std::string& name) {
  PipelineConfig c;
  if (name == "RAW") return c;
  if (name == "LRW") {
    c.classifier = ClassifierStage::Lrw;
  } else if (name == "TDCA") {
    c.features = FeatureStage::Tdca;
  } else if (name == "P-LASSO") {
    c.removal = RemovalStage::Plasso;
  } else if (name == "IPOD") {
    c.removal = RemovalStage::Ipod;
  } else if (name == "P-LASSO-TDCA") {
    c.features = FeatureStage::Tdca;
    c.removal = RemovalStage::Plasso;
  } else {
    throw ConfigError("unknown pipeline '" + name + "'");
  }
  return c;
}

nlohmann::ordered_json to_json(const PipelineConfig& cfg) {
  nlohmann::ordered_json j;
  j["name"] = cfg.name();
  j["features"] = cfg.features == FeatureStage::Raw ? "raw" : "tdca";
  j["removal"] = cfg.removal == RemovalStage::None ? "none" : (cfg.removal == RemovalStage::Plasso ? "plasso" : "ipod");
  j["classifier"] = cfg.classifier == ClassifierStage::Linear ? "linear" : "lrw";
  j["removal_count"] = cfg.removal_count;
  j["cv_folds"] = cfg.cv_folds;
  j["intercept"] = cfg.intercept;
  j["test_fraction"] = cfg.test_fraction;
  j["evaluate_inliers_only"] = cfg.evaluate_inliers_only;
  j["seed"] = cfg.seed;
  j["k_neighbors"] = cfg.graph.k;
  j["normalize"] = cfg.graph.normalize;
  j["restart_prob"] = cfg.walk.restart_prob;
  j["walk_tolerance"] = cfg.walk.tolerance;
  j["embed_dim"] = cfg.embedding.d;
  j["embed_max_iter"] = cfg.embedding.max_iter;
  j["init_std"] = cfg.embedding.init_std;
  j["lambda_min_ratio"] = cfg.path.lambda_min_ratio;
  j["rank_tolerance"] = cfg.rank_tolerance;
  j["reg_c"] = cfg.train.reg_c;
  j["epochs"] = cfg.train.epochs;
  j["ipod_max_iter"] = cfg.ipod_max_iter;
  return j;
}

Split stratified_split(const Dataset& ds, double test_fraction, std::uint64_t seed, bool evaluate_inliers_only) {
  if (!ds.class_ids) throw DataError("pipeline needs class ids");
  std::map<int, std::vector<Index>> by_class;
  for (Index i = 0; i < ds.size(); ++i) by_class[(*ds.class_ids)[static_cast<std::size_t>(i)]].push_back(i);

  std::mt19937_64 rng(seed);
  std::vector<char> is_test(static_cast<std::size_t>(ds.size()), 0);
  for (auto& [cls, rows] : by_class) {
    for (std::size_t i = rows.size(); i > 1; --i) std::swap(rows[i - 1], rows[static_cast<std::size_t>(rng() % i)]);
    const auto n_test = static_cast<std::size_t>(std::lround(test_fraction * static_cast<double>(rows.size())));
    for (std::size_t i = 0; i < n_test && i + 1 < rows.size(); ++i) is_test[static_cast<std::size_t>(rows[i])] = 1;
  }

  Split split;
  for (Index i = 0; i < ds.size(); ++i) {
    (is_test[static_cast<std::size_t>(i)] ? split.test.rows : split.train.rows).push_back(i);
  }
  split.train.features = gather_rows(ds.features, split.train.rows);
  split.test.features = gather_rows(ds.features, split.test.rows);
  for (Index i : split.train.rows) split.train.class_ids.push_back((*ds.class_ids)[static_cast<std::size_t>(i)]);
  if (ds.outlier_mask) {
    split.train.outlier_mask.emplace();
    for (Index i : split.train.rows) split.train.outlier_mask->push_back((*ds.outlier_mask)[static_cast<std::size_t>(i)]);
  }
  for (Index i : split.test.rows) {
    split.key.class_ids.push_back((*ds.class_ids)[static_cast<std::size_t>(i)]);
    const bool outlier = ds.outlier_mask && (*ds.outlier_mask)[static_cast<std::size_t>(i)];
    split.key.include.push_back(!(evaluate_inliers_only && outlier));
  }
  return split;
}

namespace {

double score(const std::vector<int>& predicted, const EvaluationKey& key) {
  std::vector<int> p, t;
  for (std::size_t i = 0; i < predicted.size(); ++i) {
    if (!key.include[i]) continue;
    p.push_back(predicted[i]);
    t.push_back(key.class_ids[i]);
  }
  return accuracy(p, t);
}

struct Removal {
  std::vector<Index> train_positions;  // positions within the training view
  double kkt_violation = 0.0;
};

Removal detect_outliers(const Matrix& design_in, const LabeledView& train, const PipelineConfig& cfg) {
  Removal out;
  if (cfg.removal == RemovalStage::None) return out;
  const Matrix design = cfg.intercept ? with_intercept(design_in) : design_in;
  const auto encoded = encode_labels(train.class_ids);
  const auto pre = precondition(design, cfg.rank_tolerance);
  const auto path = lasso_path(pre, encoded.values, cfg.path);
  out.kkt_violation = max_kkt_violation(path, pre, encoded.values);

  std::vector<Index> chosen;
  if (cfg.cv_folds >= 2) {
    Dataset view;
    view.features = train.features;
    view.labels = encoded.values;
    view.class_ids = train.class_ids;
    CrossValidationOptions cv;
    cv.folds = cfg.cv_folds;
    cv.seed = cfg.seed;
    cv.reg_c = cfg.train.reg_c;
    cv.epochs = cfg.train.epochs;
    chosen = select_outliers_cv(path, view, cv).selected;
  } else {
    Index k = cfg.removal_count;
    if (k < 0) {
      k = train.outlier_mask
              ? static_cast<Index>(std::count(train.outlier_mask->begin(), train.outlier_mask->end(), true))
              : 0;
    }
    chosen = select_top_k(order_by_activation(path), k).selected;
  }
  if (cfg.removal == RemovalStage::Ipod) {
    chosen = ipod_refine(pre, encoded.values, chosen, cfg.ipod_max_iter).support;
  }
  std::sort(chosen.begin(), chosen.end());
  out.train_positions = std::move(chosen);
  return out;
}

}  // namespace

PipelineOutcome run_pipeline_once(const Dataset& ds, const PipelineConfig& cfg) {
  cfg.validate();
  ds.validate();
  const Split split = stratified_split(ds, cfg.test_fraction, cfg.seed, cfg.evaluate_inliers_only);
  const Index n_train = static_cast<Index>(split.train.rows.size());

  // Transductive stages see train and test features stacked, never test labels.
  Matrix all_features(ds.size(), ds.dim());
  all_features << split.train.features, split.test.features;

  Matrix train_design = split.train.features;
  Matrix train_cls = split.train.features;
  Matrix test_cls = split.test.features;
  std::optional<DiffusionGraph> graph;
  if (cfg.features == FeatureStage::Tdca || cfg.classifier == ClassifierStage::Lrw) {
    graph = build_graph(all_features, cfg.graph);
  }
  std::optional<DiffusionStates> states;
  if (graph) states = lazy_random_walk(*graph, cfg.walk);
  if (cfg.features == FeatureStage::Tdca) {
    EmbeddingOptions eopts = cfg.embedding;
    eopts.seed = cfg.embedding.seed ^ cfg.seed;
    const auto emb = fit_embedding(states->states, eopts);
    const Matrix reduced = reduced_features(emb);
    const Matrix joint = concat_features(emb);
    train_design = reduced.topRows(n_train);
    train_cls = joint.topRows(n_train);
    test_cls = joint.bottomRows(joint.rows() - n_train);
  }

  PipelineOutcome outcome;
  const Removal removal = detect_outliers(train_design, split.train, cfg);
  outcome.kkt_violation = removal.kkt_violation;
  std::vector<char> removed(static_cast<std::size_t>(n_train), 0);
  for (Index p : removal.train_positions) {
    removed[static_cast<std::size_t>(p)] = 1;
    outcome.removed.push_back(split.train.rows[static_cast<std::size_t>(p)]);
  }
  if (cfg.removal != RemovalStage::None && split.train.outlier_mask) {
    outcome.removal_precision = outlier_precision(removal.train_positions, *split.train.outlier_mask);
    outcome.removal_recall = outlier_recall(removal.train_positions, *split.train.outlier_mask);
  }

  std::vector<int> predicted;
  if (cfg.classifier == ClassifierStage::Linear) {
    std::vector<Index> keep;
    for (Index i = 0; i < n_train; ++i) {
      if (!removed[static_cast<std::size_t>(i)]) keep.push_back(i);
    }
    std::vector<int> ids;
    for (Index i : keep) ids.push_back(split.train.class_ids[static_cast<std::size_t>(i)]);
    LinearTrainOptions topts = cfg.train;
    topts.seed = cfg.train.seed ^ cfg.seed;
    const auto model = train_linear(gather_rows(train_cls, keep), ids, topts);
    predicted = predict(model, test_cls);
  } else {
    SeedLabels seeds;
    seeds.labels.assign(static_cast<std::size_t>(ds.size()), SeedLabels::unlabeled);
    for (Index i = 0; i < n_train; ++i) {
      if (!removed[static_cast<std::size_t>(i)]) {
        seeds.labels[static_cast<std::size_t>(i)] = split.train.class_ids[static_cast<std::size_t>(i)];
      }
    }
    const auto labels = lrw_propagate(states->states, seeds);
    predicted.assign(labels.begin() + n_train, labels.end());
  }
  outcome.test_accuracy = score(predicted, split.key);
  outcome.predictions = std::move(predicted);
  return outcome;
}

ExperimentResult run_pipeline(const Dataset& ds, const PipelineConfig& cfg) {
  const auto start = Clock::now();
  ExperimentResult result;
  result.name = "pipeline";
  result.config = to_json(cfg);
  const auto outcome = run_pipeline_once(ds, cfg);
  RepeatRecord r;
  r.cell = cfg.name();
  r.seed = cfg.seed;
  r.classifier_accuracy = outcome.test_accuracy;
  r.precision = outcome.removal_precision;
  r.recall = outcome.removal_recall;
  r.detection_accuracy = outcome.removal_recall;
  r.kkt_violation = outcome.kkt_violation;
  r.runtime_ms = elapsed_ms(start);
  result.records.push_back(r);
  result.aggregate();
  result.runtime_ms = r.runtime_ms;
  return result;
}

}  // namespace rlasso
