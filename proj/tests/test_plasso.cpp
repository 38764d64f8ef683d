#include "oracles.hpp"

#include "rlasso/plasso.hpp"

#include <doctest.h>

#include <algorithm>
#include <set>
#include <sstream>

using namespace rlasso;

namespace {

double max_abs(const Matrix& m) { return m.cwiseAbs().maxCoeff(); }

Matrix random_design(std::mt19937_64& rng, Index n, Index p, bool deficient) {
  Matrix phi = oracle::random_matrix(n, p, rng);
  if (deficient && p >= 2) phi.col(p - 1) = 2.0 * phi.col(0) - phi.col(1);
  return phi;
}

}  // namespace

TEST_CASE("precondition degenerate designs") {
  auto pre = precondition(Matrix::Identity(3, 3));
  CHECK(pre.rank == 3);
  CHECK(pre.effective_observations() == 0);
  CHECK_THROWS_AS(pre.require_kernel(), DataError);
  CHECK_THROWS_WITH_AS(lasso_path(pre, Vector::Ones(3)),
                       "no kernel space: reduce feature dimension (use TDCA)", DataError);

  auto ones = precondition(Matrix::Ones(3, 1));
  CHECK(ones.rank == 1);
  CHECK(max_abs(ones.hat() - Matrix::Constant(3, 3, 1.0 / 3.0)) <= 1e-14);

  CHECK_THROWS_AS(precondition(Matrix::Ones(1, 1)), DataError);
  Matrix bad = Matrix::Ones(4, 2);
  bad(1, 1) = std::numeric_limits<double>::quiet_NaN();
  CHECK_THROWS_AS(precondition(bad), DataError);
}

TEST_CASE("hat matrix matches pseudoinverse oracle over 100 designs") {
  std::mt19937_64 rng(2024);
  for (int trial = 0; trial < 100; ++trial) {
    std::uniform_int_distribution<int> dn(4, 30);
    const Index n = dn(rng);
    std::uniform_int_distribution<int> dp(1, static_cast<int>(n) - 1);
    const Index p = dp(rng);
    Matrix phi = random_design(rng, n, p, trial % 4 == 0);
    auto pre = precondition(phi);
    Matrix h = pre.hat();
    CAPTURE(trial);
    CHECK(max_abs(h * h - h) <= 1e-10);
    CHECK(max_abs(h.transpose() - h) <= 1e-12);
    CHECK(max_abs(h * phi - phi) <= 1e-8);
    CHECK(max_abs(h - oracle::hat_matrix(phi)) <= 1e-9);
    CHECK(pre.rank + pre.effective_observations() == n);
    CHECK(max_abs(pre.u2.transpose() * phi) <= 1e-9);
  }
}

TEST_CASE("random 8x3 design idempotence") {
  std::mt19937_64 rng(8);
  Matrix phi = oracle::random_matrix(8, 3, rng);
  Matrix h = precondition(phi).hat();
  CHECK(max_abs(h * h - h) <= 1e-10);
  CHECK(max_abs(h * phi - phi) <= 1e-8);
}

TEST_CASE("solve_beta closed form") {
  std::mt19937_64 rng(3);
  Matrix phi = oracle::random_matrix(10, 2, rng);
  Vector y = oracle::random_vector(10, rng);
  CHECK(solve_beta(phi, y, y).cwiseAbs().maxCoeff() == doctest::Approx(0.0));

  Eigen::HouseholderQR<Matrix> qr(oracle::random_matrix(10, 3, rng));
  Matrix q = qr.householderQ() * Matrix::Identity(10, 3);
  Vector beta_q = solve_beta(q, y, Vector::Zero(10));
  CHECK((beta_q - q.transpose() * y).cwiseAbs().maxCoeff() <= 1e-12);

  Vector gamma = oracle::random_vector(10, rng);
  Vector normal = (phi.transpose() * phi).ldlt().solve(phi.transpose() * (y - gamma));
  CHECK((solve_beta(phi, y, gamma) - normal).cwiseAbs().maxCoeff() <= 1e-8);
}

TEST_CASE("path is zero at and above lambda_max") {
  std::mt19937_64 rng(4);
  Matrix phi = oracle::random_matrix(15, 2, rng);
  Vector y = oracle::random_vector(15, rng);
  auto pre = precondition(phi);
  auto path = lasso_path(pre, y);
  const double lmax = pre.residualize(y).cwiseAbs().maxCoeff();
  CHECK(path.lambda_max == doctest::Approx(lmax).epsilon(1e-14));
  CHECK(path.gamma_at(0).isZero());
  CHECK(path.gamma_at_lambda(lmax * 2.0).isZero());
  CHECK(path.breakpoints.front().active.empty());
  CHECK_FALSE(path.breakpoints.front().entered.empty());
}

TEST_CASE("orthogonal design path is soft thresholding with nested supports") {
  // Φ = [e0 e1] makes I − H diagonal: coordinates 0 and 1 are unobservable.
  const Index n = 7;
  Matrix phi = Matrix::Zero(n, 2);
  phi(0, 0) = 1.0;
  phi(1, 1) = 1.0;
  Vector y(n);
  y << 4.0, -2.0, 3.0, -1.5, 0.5, 2.25, -0.75;
  auto pre = precondition(phi);
  auto path = lasso_path(pre, y);
  CHECK(path.lambda_max == doctest::Approx(3.0));
  for (double lambda : {2.9, 2.0, 1.6, 1.0, 0.6, 0.3, 0.01}) {
    Vector g = path.gamma_at_lambda(lambda);
    CAPTURE(lambda);
    CHECK(g(0) == 0.0);
    CHECK(g(1) == 0.0);
    for (Index j = 2; j < n; ++j) CHECK(g(j) == doctest::Approx(oracle::soft(y(j), lambda)).epsilon(1e-12));
  }
  for (std::size_t k = 1; k < path.breakpoints.size(); ++k) {
    const auto& prev = path.breakpoints[k - 1].active;
    const auto& cur = path.breakpoints[k].active;
    for (Index j : prev) CHECK(std::find(cur.begin(), cur.end(), j) != cur.end());
    CHECK(path.breakpoints[k].dropped.empty());
  }
}

TEST_CASE("homotopy agrees with coordinate descent on a 20-point grid") {
  std::mt19937_64 rng(12);
  for (int trial = 0; trial < 5; ++trial) {
    Matrix phi = oracle::random_matrix(12, 3, rng);
    Vector y = oracle::random_vector(12, rng);
    y(trial) += 6.0;
    auto pre = precondition(phi);
    Matrix hat = oracle::hat_matrix(phi);
    Matrix a = Matrix::Identity(12, 12) - hat;
    auto path = lasso_path(pre, y);
    for (int g = 0; g < 20; ++g) {
      const double lambda = path.lambda_max * std::pow(10.0, -3.0 * g / 19.0);
      Vector homotopy = path.gamma_at_lambda(lambda);
      Vector cd = oracle::projected_lasso_cd(a, y, lambda);
      const double fh = oracle::outlier_objective(hat, y, homotopy, lambda);
      const double fc = oracle::outlier_objective(hat, y, cd, lambda);
      CAPTURE(trial);
      CAPTURE(lambda);
      CHECK(std::abs(fh - fc) <= 1e-6);
      CHECK(fh <= fc + 1e-9);
    }
  }
}

TEST_CASE("KKT at breakpoints and between them") {
  std::mt19937_64 rng(77);
  for (int trial = 0; trial < 20; ++trial) {
    const Index n = 10 + trial;
    Matrix phi = oracle::random_matrix(n, 1 + trial % 4, rng);
    Vector y = oracle::random_vector(n, rng);
    for (Index i = 0; i < n / 5; ++i) y(i) += 4.0 * (i % 2 ? 1.0 : -1.0);
    auto pre = precondition(phi);
    auto path = lasso_path(pre, y);
    CAPTURE(trial);
    CHECK(max_kkt_violation(path, pre, y) <= 1e-6);
    for (std::size_t k = 0; k + 1 < path.breakpoints.size(); ++k) {
      const double hi = path.breakpoints[k].lambda;
      const double lo = path.breakpoints[k + 1].lambda;
      for (double t : {0.25, 0.5, 0.75}) {
        const double lambda = lo + t * (hi - lo);
        CHECK(kkt_violation(pre, y, path.gamma_at_lambda(lambda), lambda) <= 1e-6);
      }
    }
  }
}

TEST_CASE("breakpoint bookkeeping is consistent") {
  std::mt19937_64 rng(5);
  Matrix phi = oracle::random_matrix(30, 2, rng);
  Vector y = oracle::random_vector(30, rng);
  auto pre = precondition(phi);
  auto path = lasso_path(pre, y);
  for (std::size_t k = 1; k < path.breakpoints.size(); ++k) {
    CHECK(path.breakpoints[k].lambda < path.breakpoints[k - 1].lambda);
    std::set<Index> support(path.breakpoints[k - 1].active.begin(), path.breakpoints[k - 1].active.end());
    for (Index j : path.breakpoints[k - 1].entered) support.insert(j);
    for (Index j : path.breakpoints[k].dropped) support.erase(j);
    std::set<Index> active(path.breakpoints[k].active.begin(), path.breakpoints[k].active.end());
    CHECK(support == active);
  }
}

TEST_CASE("kernel and hat formulations agree") {
  std::mt19937_64 rng(31);
  for (int trial = 0; trial < 10; ++trial) {
    Matrix phi = oracle::random_matrix(14, 2, rng);
    Vector y = oracle::random_vector(14, rng);
    auto pre = precondition(phi);
    const double lmax = pre.residualize(y).cwiseAbs().maxCoeff();
    auto eq = equivalence_check(pre, y, 0.2 * lmax);
    CHECK(eq.max_diff <= 1e-8);
    auto top = equivalence_check(pre, y, lmax);
    CHECK(top.gamma_hat_form.isZero());
    CHECK(top.gamma_kernel_form.isZero());
  }
}

TEST_CASE("single effective observation reduces to scalar soft threshold") {
  std::mt19937_64 rng(9);
  Matrix phi = oracle::random_matrix(3, 2, rng);
  Vector y = oracle::random_vector(3, rng);
  Eigen::FullPivLU<Matrix> lu(phi.transpose());
  Vector u = lu.kernel().col(0).normalized();
  Index jstar = 0;
  u.cwiseAbs().maxCoeff(&jstar);
  const double b = u.dot(y);
  const double lambda = 0.3 * std::abs(u(jstar) * b);
  Vector expected = Vector::Zero(3);
  expected(jstar) = oracle::soft(u(jstar) * b, lambda) / (u(jstar) * u(jstar));

  auto pre = precondition(phi);
  REQUIRE(pre.effective_observations() == 1);
  auto eq = equivalence_check(pre, y, lambda);
  CHECK((eq.gamma_kernel_form - expected).cwiseAbs().maxCoeff() <= 1e-8);
  CHECK((eq.gamma_hat_form - expected).cwiseAbs().maxCoeff() <= 1e-8);
}

TEST_CASE("activation ordering and tie rule") {
  RegularizationPath single;
  single.n = 10;
  single.lambda_max = 1.0;
  Breakpoint b;
  b.lambda = 1.0;
  b.entered = {7};
  b.direction = {{7, 1.0}};
  single.breakpoints.push_back(b);
  CHECK(order_by_activation(single).ranking == std::vector<Index>{7});

  RegularizationPath tie;
  tie.n = 4;
  tie.lambda_max = 2.0;
  Breakpoint t;
  t.lambda = 2.0;
  t.entered = {1, 3};
  t.direction = {{1, 2.0}, {3, -3.0}};
  tie.breakpoints.push_back(t);
  auto rep = order_by_activation(tie);
  CHECK(rep.ranking == std::vector<Index>{3, 1});
  CHECK(rep.activation_lambdas == std::vector<double>{2.0, 2.0});

  auto top = select_top_k(rep, 1);
  CHECK(top.selected == std::vector<Index>{3});
  CHECK(select_top_k(rep, 0).selected.empty());
  CHECK(select_top_k(rep, 9).selected.size() == 2);
  CHECK_THROWS_AS(select_top_k(rep, -1), ConfigError);
}

TEST_CASE("ranking matches activation order on a real path") {
  auto ds = generate_synthetic(SyntheticConfig::paper_fig1(0));
  auto pre = precondition(ds.features);
  auto path = lasso_path(pre, ds.labels);
  auto rep = order_by_activation(path);
  CHECK(rep.ranking.size() >= 300);
  CHECK(std::is_sorted(rep.activation_lambdas.rbegin(), rep.activation_lambdas.rend()));
  std::set<Index> unique(rep.ranking.begin(), rep.ranking.end());
  CHECK(unique.size() == rep.ranking.size());
}

TEST_CASE("cross-validated selection") {
  auto cfg = SyntheticConfig::paper_fig1(1);
  cfg.outlier_count_per_class = 0;
  auto clean = generate_synthetic(cfg);
  auto pre = precondition(clean.features);
  auto path = lasso_path(pre, clean.labels);
  CrossValidationOptions one;
  one.folds = 1;
  CHECK_THROWS_AS(select_outliers_cv(path, clean, one), ConfigError);

  CrossValidationOptions opts;
  auto rep = select_outliers_cv(path, clean, opts);
  CHECK(rep.rule == SelectionRule::CrossValidation);
  CHECK(rep.rule_parameter == 5);
  REQUIRE_FALSE(rep.cv_trace.empty());
  // the selection is the support of the breakpoint with the best score,
  // earliest on ties
  std::size_t best = 0;
  for (std::size_t i = 1; i < rep.cv_trace.size(); ++i)
    if (rep.cv_trace[i].second > rep.cv_trace[best].second) best = i;
  const double chosen = rep.cv_trace[best].first;
  auto it = std::find_if(path.breakpoints.begin(), path.breakpoints.end(),
                         [&](const Breakpoint& b) { return b.lambda == chosen; });
  REQUIRE(it != path.breakpoints.end());
  CHECK(rep.selected == it->active);
  CHECK(select_outliers_cv(path, clean, opts).selected == rep.selected);
}

TEST_CASE("IPOD refinement") {
  std::mt19937_64 rng(6);
  const Index n = 9;
  Vector y = 0.01 * oracle::random_vector(n, rng);
  y(4) += 10.0;
  auto pre = precondition(Matrix::Ones(n, 1));
  CHECK(ipod_refine(pre, y, {}).support.empty());
  auto res = ipod_refine(pre, y, {0});
  CHECK(res.support == std::vector<Index>{4});
  CHECK(res.converged);

  auto ds = generate_synthetic(SyntheticConfig::paper_fig1(0));
  auto fpre = precondition(ds.features);
  auto rep = select_top_k(order_by_activation(lasso_path(fpre, ds.labels)), 90);
  auto refined = ipod_refine(fpre, ds.labels, rep.selected);
  CHECK(refined.support.size() == 90);
  const double init_acc = outlier_recall(rep.selected, *ds.outlier_mask);
  const double ipod_acc = outlier_recall(refined.support, *ds.outlier_mask);
  MESSAGE("init " << init_acc << " ipod " << ipod_acc);
  CHECK(ipod_acc >= init_acc - 0.02);
}

TEST_CASE("path exports") {
  Matrix phi = Matrix::Ones(4, 1);
  Vector y(4);
  y << 0.0, 0.0, 0.0, 4.0;
  auto pre = precondition(phi);
  auto path = lasso_path(pre, y);
  std::ostringstream js;
  write_path_json(path, js);
  CHECK(js.str().find("\"gamma_sparse\"") != std::string::npos);
  std::ostringstream csv;
  write_path_csv(path, csv, std::vector<bool>{false, false, false, true});
  CHECK(csv.str().rfind("lambda,instance,gamma,is_outlier\n", 0) == 0);
  CHECK(path.breakpoints.front().entered == std::vector<Index>{3});
}

TEST_CASE("precision and recall") {
  std::vector<bool> mask{true, false, true, false};
  CHECK(outlier_precision({0, 1}, mask) == 0.5);
  CHECK(outlier_recall({0, 1}, mask) == 0.5);
  CHECK(outlier_recall({0, 2}, mask) == 1.0);
}
