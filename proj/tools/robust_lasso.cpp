// Command-line driver: dataset generation, embedding, outlier detection and
// the synthetic benchmarks. Exit codes: 0 success, 2 usage/config error,
// 3 data-shape error, 4 numerical failure.

#include "rlasso/bench.hpp"
#include "rlasso/config.hpp"
#include "rlasso/error.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

namespace fs = std::filesystem;
using namespace rlasso;

namespace {

constexpr int kExitUsage = 2;
constexpr int kExitData = 3;
constexpr int kExitNumerical = 4;

std::ofstream open_out(const fs::path& p) {
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
  std::ofstream out(p);
  if (!out) throw DataError("cannot write '" + p.string() + "'");
  return out;
}

std::string config_comment(const Config& cfg) { return "# config=" + cfg.to_json().dump() + "\n"; }

// Accepts a key=value file, a JSON artifact with a "config" member, or a CSV
// artifact whose first line is "# config={...}".
void apply_config_file(Config& cfg, const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file '" + path.string() + "'");
  std::stringstream buf;
  buf << in.rdbuf();
  const std::string text = buf.str();
  const auto first = text.find_first_not_of(" \t\r\n");
  if (first != std::string::npos && text[first] == '{') {
    const auto j = nlohmann::ordered_json::parse(text);
    cfg = Config::from_json(j.contains("config") ? j.at("config") : j);
    return;
  }
  if (text.rfind("# config=", 0) == 0) {
    const auto eol = text.find('\n');
    cfg = Config::from_json(nlohmann::ordered_json::parse(text.substr(9, eol - 9)));
    return;
  }
  std::istringstream ss(text);
  cfg.load(ss);
}

Dataset load_any(const fs::path& p) {
  std::ifstream in(p);
  if (!in) throw DataError("cannot open '" + p.string() + "'");
  if (format_from_path(p) == FileFormat::Json) return read_json(in);
  // Skip leading config comments written by this tool.
  std::stringstream body;
  std::string line;
  while (std::getline(in, line)) {
    if (line.rfind('#', 0) == 0) continue;
    body << line << '\n';
  }
  return read_csv(body);
}

struct GenerateArgs {
  bool paper = false;
  int classes = 3;
  int per_class = 100;
  int outliers_per_class = 30;
  double std_dev = 0.1;
  double halfwidth = 0.5;
  std::string out;
};

int cmd_generate(const GenerateArgs& a, const Config& cfg) {
  const SyntheticConfig sc = cfg.synthetic();
  const auto ds = generate_synthetic(sc);
  const fs::path out(a.out);
  const auto fmt = format_from_path(out);
  auto stream = open_out(out);
  if (fmt == FileFormat::Csv) {
    stream << config_comment(cfg);
    write_csv(ds, stream);
  } else {
    std::ostringstream tmp;
    write_json(ds, tmp);
    auto j = nlohmann::ordered_json::parse(tmp.str());
    j["meta"]["config"] = cfg.to_json();
    j["meta"]["synthetic"] = to_json(sc);
    stream << j.dump(1) << '\n';
  }
  std::cout << "wrote " << ds.size() << "x" << ds.dim() << " dataset (" << ds.outlier_count() << " outliers) to "
            << out.string() << '\n';
  return 0;
}

struct DetectArgs {
  std::string input;
  std::string out;
  std::string ranked;
  std::string path_csv;
  std::string method = "plasso";
  std::string features = "raw";
  std::string select = "count=0";
};

int cmd_detect(const DetectArgs& a, const Config& cfg) {
  if (a.method != "plasso" && a.method != "ipod") throw ConfigError("--method must be plasso or ipod");
  if (a.features != "raw" && a.features != "tdca") throw ConfigError("--features must be raw or tdca");
  const auto eq = a.select.find('=');
  const std::string rule = a.select.substr(0, eq);
  if (eq == std::string::npos || (rule != "count" && rule != "cv")) {
    throw ConfigError("--select must be count=K or cv=F");
  }
  const long long param = std::stoll(a.select.substr(eq + 1));

  const Dataset ds = load_any(a.input);
  Matrix design = ds.features;
  if (a.features == "tdca") {
    const auto graph = build_graph(ds.features, cfg.graph_options());
    const auto states = lazy_random_walk(graph, cfg.walk_options());
    design = reduced_features(fit_embedding(states.states, cfg.embedding_options()));
  }
  if (cfg.intercept) {
    Matrix with(design.rows(), design.cols() + 1);
    with << design, Vector::Ones(design.rows());
    design = std::move(with);
  }
  const auto pre = precondition(design, cfg.rank_tolerance);
  if (pre.effective_observations() == 0) {
    throw DataError("no kernel space: n <= p for these features; reduce feature dimension with --features tdca");
  }
  const auto path = lasso_path(pre, ds.labels, cfg.path_options());

  OutlierReport report;
  if (rule == "count") {
    if (param < 0) throw ConfigError("count must be non-negative");
    report = select_top_k(order_by_activation(path), static_cast<Index>(param));
  } else {
    Dataset view = ds;
    view.features = ds.features;
    auto cv = cfg.cv_options();
    cv.folds = static_cast<int>(param);
    report = select_outliers_cv(path, view, cv);
  }
  bool ipod_converged = true;
  if (a.method == "ipod") {
    const auto res = ipod_refine(pre, ds.labels, report.selected, cfg.ipod_max_iter);
    report.selected = res.support;
    ipod_converged = res.converged;
  }

  nlohmann::ordered_json j;
  j["config"] = cfg.to_json();
  j["input"] = a.input;
  j["method"] = a.method;
  j["features"] = a.features;
  j["select"] = a.select;
  j["lambda_max"] = path.lambda_max;
  j["breakpoints"] = path.breakpoints.size();
  j["kkt_violation"] = max_kkt_violation(path, pre, ds.labels);
  j["ranking"] = report.ranking;
  j["activation_lambdas"] = report.activation_lambdas;
  j["selected"] = report.selected;
  if (a.method == "ipod") j["ipod_converged"] = ipod_converged;
  auto trace = nlohmann::ordered_json::array();
  for (const auto& [lambda, acc] : report.cv_trace) trace.push_back({lambda, acc});
  j["cv_trace"] = std::move(trace);
  if (ds.outlier_mask) {
    j["precision"] = report.selected.empty() ? 0.0 : outlier_precision(report.selected, *ds.outlier_mask);
    j["recall"] = outlier_recall(report.selected, *ds.outlier_mask);
  }
  open_out(a.out) << j.dump(1) << '\n';

  const fs::path ranked =
      a.ranked.empty() ? fs::path(fs::path(a.out).replace_extension("").string() + "_ranked.csv") : fs::path(a.ranked);
  {
    auto out = open_out(ranked);
    out << config_comment(cfg) << "rank,instance,id,activation_lambda,selected\n";
    std::vector<char> sel(static_cast<std::size_t>(ds.size()), 0);
    for (Index i : report.selected) sel[static_cast<std::size_t>(i)] = 1;
    char buf[32];
    for (std::size_t r = 0; r < report.ranking.size(); ++r) {
      const Index i = report.ranking[r];
      std::snprintf(buf, sizeof buf, "%.17g", report.activation_lambdas[r]);
      out << r + 1 << ',' << i << ',' << (ds.instance_ids.empty() ? std::to_string(i) : ds.instance_ids[static_cast<std::size_t>(i)])
          << ',' << buf << ',' << int(sel[static_cast<std::size_t>(i)]) << '\n';
    }
  }
  if (!a.path_csv.empty()) {
    auto out = open_out(a.path_csv);
    out << config_comment(cfg);
    write_path_csv(path, out, ds.outlier_mask);
  }
  std::cout << "selected " << report.selected.size() << " of " << ds.size() << " instances";
  if (j.contains("recall")) std::cout << " (recall " << j["recall"].get<double>() << ")";
  std::cout << '\n';
  return 0;
}

struct EmbedArgs {
  std::string input;
  std::string out;
  std::string graph_csv;
};

int cmd_embed(const EmbedArgs& a, const Config& cfg) {
  const Dataset ds = load_any(a.input);
  const auto graph = build_graph(ds.features, cfg.graph_options());
  if (graph.uniform_fallback) std::cerr << "warning: all inner products are zero, using uniform weights\n";
  const auto states = lazy_random_walk(graph, cfg.walk_options());
  if (!states.converged) std::cerr << "warning: lazy random walk hit max_iter (residual " << states.residual << ")\n";
  const auto emb = fit_embedding(states.states, cfg.embedding_options());
  auto out = open_out(a.out);
  out << config_comment(cfg);
  write_embedding_csv(emb, out, ds.instance_ids);
  if (!a.graph_csv.empty()) {
    auto g = open_out(a.graph_csv);
    g << config_comment(cfg);
    write_graph_csv(graph, g);
  }
  std::cout << "embedded " << ds.size() << " nodes, d=" << emb.d << ", KL " << emb.initial_kl << " -> " << emb.final_kl
            << '\n';
  return 0;
}

struct BenchArgs {
  std::string out_dir = "results";
  std::string input;
  std::vector<std::string> pipelines{"RAW", "LRW", "TDCA", "P-LASSO", "IPOD", "P-LASSO-TDCA"};
};

int cmd_bench_fig1(const BenchArgs& a, const Config& cfg) {
  const fs::path dir(a.out_dir);
  const auto path_exp = run_path_experiment(cfg.synthetic(), cfg.path_options());
  {
    auto out = open_out(dir / "fig1_path.csv");
    out << config_comment(cfg) << path_exp.path_csv;
  }
  SweepOptions sweep;
  sweep.ratios = cfg.ratios;
  sweep.repeats = cfg.repeats;
  sweep.seed = cfg.seed;
  sweep.path = cfg.path_options();
  sweep.threads = cfg.threads;
  sweep.base = cfg.synthetic();
  auto result = run_ratio_sweep(sweep);
  result.config = nlohmann::ordered_json{{"config", cfg.to_json()}, {"sweep", result.config}};
  {
    auto out = open_out(dir / "fig1_sweep.csv");
    out << config_comment(cfg);
    write_result_csv(result, out);
  }
  {
    auto j = to_json(result);
    j["path_experiment"] = {{"seed", cfg.seed},
                            {"top_fraction", path_exp.top_fraction ? nlohmann::ordered_json(*path_exp.top_fraction) : nlohmann::ordered_json("n/a")},
                            {"kkt_violation", path_exp.kkt_violation},
                            {"breakpoints", path_exp.path.breakpoints.size()}};
    open_out(dir / "fig1_sweep.json") << j.dump(1) << '\n';
  }
  std::cout << "path: first-" << path_exp.dataset.outlier_count() << " outlier fraction "
            << (path_exp.top_fraction ? std::to_string(*path_exp.top_fraction) : "n/a") << '\n';
  for (const auto& agg : result.aggregates) {
    std::cout << agg.cell << ": detection " << agg.detection_accuracy->mean << " +/- " << agg.detection_accuracy->std
              << '\n';
  }
  return 0;
}

int cmd_bench_pipeline(const BenchArgs& a, const Config& cfg) {
  const Dataset ds = a.input.empty() ? generate_synthetic(cfg.synthetic()) : load_any(a.input);
  ExperimentResult all;
  all.name = "pipeline";
  all.config = {{"config", cfg.to_json()}, {"input", a.input.empty() ? "synthetic" : a.input}};
  for (const auto& name : a.pipelines) {
    PipelineConfig pc = PipelineConfig::named(name);
    pc.seed = cfg.seed;
    pc.graph = cfg.graph_options();
    pc.walk = cfg.walk_options();
    pc.embedding = cfg.embedding_options();
    pc.path = cfg.path_options();
    pc.rank_tolerance = cfg.rank_tolerance;
    pc.train = cfg.train_options();
    pc.test_fraction = cfg.test_fraction;
    pc.ipod_max_iter = cfg.ipod_max_iter;
    const auto res = run_pipeline(ds, pc);
    all.records.insert(all.records.end(), res.records.begin(), res.records.end());
    all.config["pipelines"][name] = res.config;
  }
  all.aggregate();
  {
    auto out = open_out(fs::path(a.out_dir) / "pipeline.csv");
    out << config_comment(cfg);
    write_result_csv(all, out);
  }
  open_out(fs::path(a.out_dir) / "pipeline.json") << to_json(all).dump(1) << '\n';
  for (const auto& r : all.records) std::cout << r.cell << ": test accuracy " << *r.classifier_accuracy << '\n';
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Outlier detection with a preconditioned LASSO over instance outlier variables"};
  app.require_subcommand(1);
  app.fallthrough();
  std::string config_file;
  std::vector<std::string> overrides;
  app.add_option("--config", config_file, "key=value config file, or a JSON/CSV artifact to rerun");
  app.add_option("--set", overrides, "override one config key (key=value); repeatable");
  std::uint64_t seed = 0;
  auto* seed_opt = app.add_option("--seed", seed, "random seed");
  bool no_normalize = false;
  app.add_flag("--no-normalize", no_normalize, "use raw inner products in the similarity graph");

  GenerateArgs gen;
  auto* g = app.add_subcommand("generate", "write a synthetic dataset");
  auto* gen_paper = g->add_flag("--paper-fig1", gen.paper, "3 classes at (1,1),(2,2),(3,3), 100 inliers + 30 outliers each");
  auto* gen_classes = g->add_option("--classes", gen.classes, "number of classes (means at (c,c))");
  auto* gen_per = g->add_option("--per-class", gen.per_class, "inliers per class");
  auto* gen_out = g->add_option("--outliers-per-class", gen.outliers_per_class, "uniform outliers per class");
  auto* gen_std = g->add_option("--std", gen.std_dev, "inlier standard deviation");
  auto* gen_half = g->add_option("--halfwidth", gen.halfwidth, "outlier box half-width");
  gen_paper->excludes(gen_classes)->excludes(gen_per)->excludes(gen_out)->excludes(gen_std)->excludes(gen_half);
  g->add_option("-o,--output", gen.out, "output file (.csv or .json)")->required();

  DetectArgs det;
  auto* d = app.add_subcommand("detect", "rank and select outlier instances");
  d->add_option("-i,--input", det.input, "dataset file")->required();
  d->add_option("-o,--output", det.out, "report JSON")->required();
  d->add_option("--ranked", det.ranked, "ranked CSV (default: <output>_ranked.csv)");
  d->add_option("--path-csv", det.path_csv, "long-format regularization path CSV");
  d->add_option("--method", det.method, "plasso or ipod");
  d->add_option("--features", det.features, "raw or tdca");
  d->add_option("--select", det.select, "count=K or cv=F");

  EmbedArgs emb;
  auto* e = app.add_subcommand("embed", "fit the diffusion embedding of a dataset");
  e->add_option("-i,--input", emb.input, "dataset file")->required();
  e->add_option("-o,--output", emb.out, "embedding CSV")->required();
  e->add_option("--graph-csv", emb.graph_csv, "edge list CSV");

  BenchArgs bench;
  auto* b = app.add_subcommand("bench", "synthetic benchmarks");
  b->require_subcommand(1);
  b->fallthrough();
  int repeats = 0;
  auto* b_fig1 = b->add_subcommand("fig1", "regularization path + outlier-ratio sweep");
  b_fig1->add_option("--out-dir", bench.out_dir, "output directory");
  auto* rep_opt = b_fig1->add_option("--repeats", repeats, "repeats per ratio");
  auto* b_pipe = b->add_subcommand("pipeline", "staged classification pipelines");
  b_pipe->add_option("--out-dir", bench.out_dir, "output directory");
  b_pipe->add_option("-i,--input", bench.input, "dataset file (default: synthetic three-class data)");
  b_pipe->add_option("--pipelines", bench.pipelines, "RAW LRW TDCA P-LASSO IPOD P-LASSO-TDCA");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& ex) {
    return app.exit(ex);
  } catch (const CLI::CallForAllHelp& ex) {
    return app.exit(ex);
  } catch (const CLI::ParseError& ex) {
    app.exit(ex);
    return kExitUsage;
  }

  try {
    Config cfg;
    if (!config_file.empty()) apply_config_file(cfg, config_file);
    for (const auto& kv : overrides) {
      const auto eq = kv.find('=');
      if (eq == std::string::npos) throw ConfigError("--set expects key=value, got '" + kv + "'");
      cfg.set(kv.substr(0, eq), kv.substr(eq + 1));
    }
    if (*seed_opt) cfg.seed = seed;
    if (no_normalize) cfg.normalize = false;
    if (*gen_paper) {
      const Config defaults;
      cfg.classes = defaults.classes;
      cfg.per_class = defaults.per_class;
      cfg.outliers_per_class = defaults.outliers_per_class;
      cfg.class_std = defaults.class_std;
      cfg.halfwidth = defaults.halfwidth;
    }
    if (*gen_classes) cfg.classes = gen.classes;
    if (*gen_per) cfg.per_class = gen.per_class;
    if (*gen_out) cfg.outliers_per_class = gen.outliers_per_class;
    if (*gen_std) cfg.class_std = gen.std_dev;
    if (*gen_half) cfg.halfwidth = gen.halfwidth;
    if (*rep_opt) cfg.repeats = repeats;

    if (*g) return cmd_generate(gen, cfg);
    if (*d) return cmd_detect(det, cfg);
    if (*e) return cmd_embed(emb, cfg);
    if (*b_fig1) return cmd_bench_fig1(bench, cfg);
    if (*b_pipe) return cmd_bench_pipeline(bench, cfg);
  } catch (const ConfigError& ex) {
    std::cerr << "error: " << ex.what() << '\n';
    return kExitUsage;
  } catch (const DataError& ex) {
    std::cerr << "error: " << ex.what() << '\n';
    return kExitData;
  } catch (const NumericalError& ex) {
    std::cerr << "error: " << ex.what() << '\n';
    return kExitNumerical;
  } catch (const nlohmann::json::exception& ex) {
    std::cerr << "error: " << ex.what() << '\n';
    return kExitUsage;
  } catch (const std::invalid_argument& ex) {
    std::cerr << "error: invalid argument: " << ex.what() << '\n';
    return kExitUsage;
  }
  return kExitUsage;
}
