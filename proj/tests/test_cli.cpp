// Drives the robust-lasso binary end to end and checks exit codes and artifacts.
#include <doctest.h>

#include <json.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <sys/wait.h>

namespace fs = std::filesystem;

namespace {

int run(const std::string& args) {
  const std::string cmd = std::string(RLASSO_CLI_PATH) + " " + args + " >cli_last.log 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p);
  std::stringstream s;
  s << in.rdbuf();
  return s.str();
}

std::size_t data_rows(const fs::path& csv) {
  std::ifstream in(csv);
  std::string line;
  std::size_t rows = 0;
  while (std::getline(in, line))
    if (!line.empty() && line[0] != '#') ++rows;
  return rows - 1;  // header
}

struct Workdir {
  Workdir() {
    fs::create_directories("cli_work");
    fs::current_path("cli_work");
  }
  ~Workdir() { fs::current_path(".."); }
};

}  // namespace

TEST_CASE("generate") {
  Workdir w;
  CHECK(run("generate --paper-fig1 --seed 7 -o ds.csv") == 0);
  CHECK(data_rows("ds.csv") == 390);
  CHECK(slurp("ds.csv").find("id,f1,f2,label,outlier\n") != std::string::npos);
  CHECK(run("generate --paper-fig1") == 2);
  CHECK(run("generate --classes 1 --outliers-per-class 0 -o one.json") == 0);
  auto j = nlohmann::json::parse(slurp("one.json"));
  CHECK(j["features"].size() == 100);
  CHECK(run("generate --std -1 -o bad.csv") == 2);
  CHECK(run("generate --paper-fig1 -o ds.txt") == 2);
}

TEST_CASE("embedded config reproduces artifacts") {
  Workdir w;
  REQUIRE(run("generate --classes 2 --per-class 20 --outliers-per-class 4 --seed 3 -o small.csv") == 0);
  REQUIRE(run("--config small.csv generate -o small_again.csv") == 0);
  CHECK(slurp("small.csv") == slurp("small_again.csv"));

  REQUIRE(run("--seed 5 --set intercept=true detect -i small.csv -o rep.json --select count=4") == 0);
  REQUIRE(run("--config rep.json detect -i small.csv -o rep2.json --select count=4") == 0);
  CHECK(slurp("rep.json") == slurp("rep2.json"));
  CHECK(slurp("rep_ranked.csv") == slurp("rep2_ranked.csv"));
}

TEST_CASE("detect") {
  Workdir w;
  REQUIRE(run("generate --paper-fig1 --seed 1 -o ds.csv") == 0);
  CHECK(run("detect -i ds.csv -o none.json --select count=0") == 0);
  auto none = nlohmann::json::parse(slurp("none.json"));
  CHECK(none["selected"].empty());
  CHECK(none["kkt_violation"].get<double>() <= 1e-6);

  CHECK(run("detect -i ds.csv -o top.json --select count=90 --path-csv path.csv") == 0);
  auto top = nlohmann::json::parse(slurp("top.json"));
  CHECK(top["selected"].size() == 90);
  CHECK(top.contains("recall"));
  CHECK(data_rows("top_ranked.csv") == top["ranking"].size());
  CHECK(slurp("path.csv").find("lambda,instance,gamma,is_outlier") != std::string::npos);

  CHECK(run("detect -i ds.csv -o ip.json --method ipod --select count=90") == 0);
  CHECK(nlohmann::json::parse(slurp("ip.json"))["selected"].size() == 90);

  CHECK(run("detect -i ds.csv -o bad.json --select top=3") == 2);
  CHECK(run("detect -i ds.csv -o bad.json --select cv=1") == 2);
  CHECK(run("detect -i missing.csv -o bad.json") == 3);

  std::ofstream("square.csv") << "id,f1,f2,label\na,1,0,1\nb,0,1,2\n";
  CHECK(run("detect -i square.csv -o sq.json --select count=1") == 3);
  CHECK(slurp("cli_last.log").find("--features tdca") != std::string::npos);
}

TEST_CASE("embed and tdca detection") {
  Workdir w;
  REQUIRE(run("generate --classes 2 --per-class 30 --outliers-per-class 5 -o e.csv") == 0);
  CHECK(run("--set embed_dim=3 --set embed_max_iter=50 embed -i e.csv -o emb.csv --graph-csv g.csv") == 0);
  CHECK(data_rows("emb.csv") == 70);
  CHECK(slurp("g.csv").find("src,dst,weight,prob") != std::string::npos);
  CHECK(run("--set embed_dim=3 --set embed_max_iter=50 detect -i e.csv -o t.json --features tdca --select count=10") == 0);
}

TEST_CASE("bench and usage errors") {
  Workdir w;
  CHECK(run("bench fig1 --repeats 1 --out-dir fig1 --set ratios=0.5,1.5") == 0);
  REQUIRE(fs::exists("fig1/fig1_path.csv"));
  REQUIRE(fs::exists("fig1/fig1_sweep.csv"));
  auto sweep = nlohmann::json::parse(slurp("fig1/fig1_sweep.json"));
  REQUIRE(sweep["aggregates"].size() == 2);
  for (const auto& agg : sweep["aggregates"]) CHECK(agg["detection_accuracy"]["std"].get<double>() == 0.0);

  CHECK(run("bench pipeline --out-dir pipe --pipelines RAW P-LASSO") == 0);
  CHECK(fs::exists("pipe/pipeline.csv"));
  CHECK(run("bench pipeline --out-dir pipe --pipelines BOGUS") == 2);

  CHECK(run("frobnicate") == 2);
  CHECK(run("") == 2);
  CHECK(run("--set nope=1 generate -o x.csv") == 2);
  CHECK(run("--config does_not_exist.cfg generate -o x.csv") == 2);
}
