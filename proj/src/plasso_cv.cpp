#include "rlasso/classify.hpp"
#include "rlasso/plasso.hpp"

#include <algorithm>
#include <numeric>
#include <random>

namespace rlasso {

namespace {

/// Mean held-out accuracy of the linear classifier over `folds` folds of
/// `rows`; folds are assigned round-robin over a fixed seeded order.
std::optional<double> cross_validate(const Dataset& ds, const std::vector<Index>& rows,
                                     const std::vector<Index>& rank_of, const CrossValidationOptions& opts) {
  if (static_cast<int>(rows.size()) < opts.folds) return std::nullopt;
  std::vector<Index> ordered(rows);
  std::sort(ordered.begin(), ordered.end(), [&](Index a, Index b) {
    return rank_of[static_cast<std::size_t>(a)] < rank_of[static_cast<std::size_t>(b)];
  });
  const auto& ids = *ds.class_ids;

  double total = 0.0;
  for (int f = 0; f < opts.folds; ++f) {
    std::vector<Index> train, test;
    for (std::size_t i = 0; i < ordered.size(); ++i) {
      (static_cast<int>(i % static_cast<std::size_t>(opts.folds)) == f ? test : train).push_back(ordered[i]);
    }
    Matrix xtr(static_cast<Index>(train.size()), ds.dim());
    std::vector<int> ytr;
    for (std::size_t i = 0; i < train.size(); ++i) {
      xtr.row(static_cast<Index>(i)) = ds.features.row(train[i]);
      ytr.push_back(ids[static_cast<std::size_t>(train[i])]);
    }
    if (std::adjacent_find(ytr.begin(), ytr.end(), std::not_equal_to<>()) == ytr.end()) return std::nullopt;
    Matrix xte(static_cast<Index>(test.size()), ds.dim());
    std::vector<int> yte;
    for (std::size_t i = 0; i < test.size(); ++i) {
      xte.row(static_cast<Index>(i)) = ds.features.row(test[i]);
      yte.push_back(ids[static_cast<std::size_t>(test[i])]);
    }
    LinearTrainOptions lopts;
    lopts.reg_c = opts.reg_c;
    lopts.epochs = opts.epochs;
    lopts.seed = opts.seed + static_cast<std::uint64_t>(f);
    const auto model = train_linear(xtr, ytr, lopts);
    total += accuracy(predict(model, xte), yte);
  }
  return total / opts.folds;
}

}  // namespace

OutlierReport select_outliers_cv(const RegularizationPath& path, const Dataset& ds,
                                 const CrossValidationOptions& opts) {
  if (opts.folds < 2) throw ConfigError("cross-validation needs at least 2 folds");
  if (!ds.class_ids) throw DataError("cross-validation needs class ids");
  if (ds.size() != path.n) throw DataError("path and dataset sizes differ");
  if (path.breakpoints.empty()) throw DataError("empty regularization path");

  OutlierReport report = order_by_activation(path);
  report.rule = SelectionRule::CrossValidation;
  report.rule_parameter = opts.folds;

  std::vector<Index> perm(static_cast<std::size_t>(ds.size()));
  std::iota(perm.begin(), perm.end(), Index{0});
  std::mt19937_64 rng(opts.seed);
  for (std::size_t i = perm.size(); i > 1; --i) std::swap(perm[i - 1], perm[static_cast<std::size_t>(rng() % i)]);
  std::vector<Index> rank_of(perm.size());
  for (std::size_t i = 0; i < perm.size(); ++i) rank_of[static_cast<std::size_t>(perm[i])] = static_cast<Index>(i);

  double best = -1.0;
  std::vector<char> removed(static_cast<std::size_t>(ds.size()));
  for (const auto& bp : path.breakpoints) {
    std::fill(removed.begin(), removed.end(), 0);
    for (Index j : bp.active) removed[static_cast<std::size_t>(j)] = 1;
    std::vector<Index> rows;
    for (Index i = 0; i < ds.size(); ++i) {
      if (!removed[static_cast<std::size_t>(i)]) rows.push_back(i);
    }
    const auto acc = cross_validate(ds, rows, rank_of, opts);
    if (!acc) continue;
    report.cv_trace.emplace_back(bp.lambda, *acc);
    // Breakpoints arrive in decreasing lambda, so strict improvement keeps
    // the larger lambda on ties.
    if (*acc > best) {
      best = *acc;
      report.selected = bp.active;
    }
  }
  return report;
}

}  // namespace rlasso
