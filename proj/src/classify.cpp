#include "rlasso/classify.hpp"

#include "rlasso/error.hpp"
#include "rlasso/tdca.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <ostream>
#include <random>

namespace rlasso {

namespace {

// Fisher-Yates driven by raw engine output so the permutation does not depend
// on the standard library's distribution implementation.
void shuffle_indices(std::vector<Eigen::Index>& idx, std::mt19937_64& rng) {
  for (std::size_t i = idx.size(); i > 1; --i) {
    const auto j = static_cast<std::size_t>(rng() % i);
    std::swap(idx[i - 1], idx[j]);
  }
}

}  // namespace

Matrix LinearModel::scores(const Matrix& features) const {
  if (features.cols() != dim()) {
    throw DataError("feature dimension " + std::to_string(features.cols()) + " does not match model dimension " +
                    std::to_string(dim()));
  }
  Matrix s = features * weights.leftCols(dim()).transpose();
  s.rowwise() += weights.col(dim()).transpose();
  return s;
}

LinearModel train_linear(const Matrix& features, const std::vector<int>& class_ids, const LinearTrainOptions& opts) {
  if (!(opts.reg_c > 0.0)) throw ConfigError("regularization must be positive");
  if (opts.epochs < 1) throw ConfigError("epochs must be positive");
  const Eigen::Index n = features.rows();
  const Eigen::Index d = features.cols();
  if (static_cast<Eigen::Index>(class_ids.size()) != n) throw DataError("class id count does not match feature rows");
  if (!features.allFinite()) throw DataError("training features contain non-finite values");

  std::vector<int> classes(class_ids);
  std::sort(classes.begin(), classes.end());
  classes.erase(std::unique(classes.begin(), classes.end()), classes.end());
  if (classes.size() < 2) throw DataError("training data needs at least two classes");

  const Vector mean = features.colwise().mean().transpose();
  Vector scale = ((features.rowwise() - mean.transpose()).colwise().squaredNorm() / static_cast<double>(n))
                     .cwiseSqrt()
                     .transpose();
  for (Eigen::Index j = 0; j < d; ++j) {
    if (!(scale[j] > 1e-12)) scale[j] = 1.0;
  }
  Matrix z(n, d + 1);
  z.leftCols(d) = (features.rowwise() - mean.transpose()).array().rowwise() / scale.transpose().array();
  z.col(d).setOnes();

  const double lambda = 1.0 / (opts.reg_c * static_cast<double>(n));
  const double radius = 1.0 / std::sqrt(lambda);
  const int average_from = opts.epochs / 2;

  LinearModel model;
  model.classes = classes;
  model.reg_c = opts.reg_c;
  model.weights.resize(static_cast<Eigen::Index>(classes.size()), d + 1);

  std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
  for (std::size_t c = 0; c < classes.size(); ++c) {
    std::mt19937_64 rng(opts.seed * 0x9E3779B97F4A7C15ULL + c);
    Vector w = Vector::Zero(d + 1);
    Vector avg = Vector::Zero(d + 1);
    long averaged = 0;
    long t = 0;
    for (int epoch = 0; epoch < opts.epochs; ++epoch) {
      std::iota(order.begin(), order.end(), Eigen::Index{0});
      shuffle_indices(order, rng);
      for (Eigen::Index i : order) {
        ++t;
        const double eta = 1.0 / (lambda * static_cast<double>(t));
        const double target = class_ids[static_cast<std::size_t>(i)] == classes[c] ? 1.0 : -1.0;
        const double margin = target * z.row(i).dot(w);
        w *= (1.0 - eta * lambda);
        if (margin < 1.0) w.noalias() += (eta * target) * z.row(i).transpose();
        const double norm = w.norm();
        if (norm > radius) w *= radius / norm;
        if (epoch >= average_from) {
          avg += w;
          ++averaged;
        }
      }
    }
    avg /= static_cast<double>(averaged);

    const auto row = static_cast<Eigen::Index>(c);
    const Vector slopes = avg.head(d).cwiseQuotient(scale);
    model.weights.row(row).head(d) = slopes.transpose();
    model.weights(row, d) = avg[d] - slopes.dot(mean);
  }
  return model;
}

std::vector<int> argmax_classes(const Matrix& scores, const std::vector<int>& classes) {
  if (scores.cols() != static_cast<Eigen::Index>(classes.size())) throw DataError("score columns do not match classes");
  std::vector<int> out(static_cast<std::size_t>(scores.rows()));
  for (Eigen::Index i = 0; i < scores.rows(); ++i) {
    Eigen::Index best = 0;
    for (Eigen::Index c = 1; c < scores.cols(); ++c) {
      const double s = scores(i, c);
      const double b = scores(i, best);
      if (s > b || (s == b && classes[static_cast<std::size_t>(c)] < classes[static_cast<std::size_t>(best)])) best = c;
    }
    out[static_cast<std::size_t>(i)] = classes[static_cast<std::size_t>(best)];
  }
  return out;
}

std::vector<int> predict(const LinearModel& model, const Matrix& features) {
  return argmax_classes(model.scores(features), model.classes);
}

double accuracy(const std::vector<int>& predicted, const std::vector<int>& truth) {
  if (predicted.size() != truth.size()) throw DataError("prediction and truth lengths differ");
  if (truth.empty()) throw DataError("accuracy of an empty prediction set");
  std::size_t hits = 0;
  for (std::size_t i = 0; i < truth.size(); ++i) hits += predicted[i] == truth[i] ? 1 : 0;
  return static_cast<double>(hits) / static_cast<double>(truth.size());
}

std::vector<int> lrw_propagate(const Matrix& states, const SeedLabels& seeds) {
  const Eigen::Index n = states.rows();
  if (states.cols() != n) throw DataError("diffusion states must be square");
  if (static_cast<Eigen::Index>(seeds.labels.size()) != n) throw DataError("seed labels do not match node count");

  std::vector<int> classes;
  for (int l : seeds.labels) {
    if (l != SeedLabels::unlabeled) classes.push_back(l);
  }
  if (classes.empty()) throw ConfigError("label propagation needs at least one seed");
  std::sort(classes.begin(), classes.end());
  classes.erase(std::unique(classes.begin(), classes.end()), classes.end());

  // membership(j, c) = 1 / |seeds of c| when node j seeds class c.
  Matrix membership = Matrix::Zero(n, static_cast<Eigen::Index>(classes.size()));
  std::vector<double> counts(classes.size(), 0.0);
  for (Eigen::Index j = 0; j < n; ++j) {
    const int l = seeds.labels[static_cast<std::size_t>(j)];
    if (l == SeedLabels::unlabeled) continue;
    const auto c = std::lower_bound(classes.begin(), classes.end(), l) - classes.begin();
    membership(j, c) = 1.0;
    counts[static_cast<std::size_t>(c)] += 1.0;
  }
  for (std::size_t c = 0; c < classes.size(); ++c) membership.col(static_cast<Eigen::Index>(c)) /= counts[c];

  auto labels = argmax_classes(states * membership, classes);
  for (Eigen::Index j = 0; j < n; ++j) {
    const int l = seeds.labels[static_cast<std::size_t>(j)];
    if (l != SeedLabels::unlabeled) labels[static_cast<std::size_t>(j)] = l;
  }
  return labels;
}

std::vector<int> lrw_propagate(const DiffusionGraph& graph, const SeedLabels& seeds, double restart_prob) {
  LazyWalkOptions opts;
  opts.restart_prob = restart_prob;
  return lrw_propagate(lazy_random_walk(graph, opts).states, seeds);
}

void write_model_json(const LinearModel& model, std::ostream& out) {
  nlohmann::ordered_json j;
  j["classes"] = model.classes;
  auto rows = nlohmann::ordered_json::array();
  for (Eigen::Index c = 0; c < model.weights.rows(); ++c) {
    std::vector<double> r(static_cast<std::size_t>(model.weights.cols()));
    for (Eigen::Index k = 0; k < model.weights.cols(); ++k) r[static_cast<std::size_t>(k)] = model.weights(c, k);
    rows.push_back(r);
  }
  j["weights"] = std::move(rows);
  j["reg_c"] = model.reg_c;
  out << j.dump(1) << '\n';
}

}  // namespace rlasso
