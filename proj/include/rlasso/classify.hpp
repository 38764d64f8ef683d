#pragma once

#include "rlasso/dataset.hpp"

#include <cstdint>
#include <iosfwd>
#include <vector>

namespace rlasso {

struct DiffusionGraph;

/// One-vs-rest linear classifier. Row c of `weights` scores class `classes[c]`
/// as weights.row(c).head(d) · x + weights(c, d).
struct LinearModel {
  Matrix weights;  // classes x (d + 1), bias in the last column
  std::vector<int> classes;
  double reg_c = 1.0;

  Eigen::Index dim() const { return weights.cols() - 1; }
  Matrix scores(const Matrix& features) const;
};

struct LinearTrainOptions {
  double reg_c = 1.0;
  int epochs = 60;
  std::uint64_t seed = 0;
};

/// L2-regularized hinge loss per class, minimized by seeded stochastic
/// sub-gradient descent (Pegasos schedule, averaged over the second half).
/// Features are standardized internally and the scaling is folded back
/// into the returned weights.
LinearModel train_linear(const Matrix& features, const std::vector<int>& class_ids,
                         const LinearTrainOptions& opts = {});

/// Argmax of class scores; ties go to the lowest class id.
std::vector<int> predict(const LinearModel& model, const Matrix& features);
std::vector<int> argmax_classes(const Matrix& scores, const std::vector<int>& classes);

double accuracy(const std::vector<int>& predicted, const std::vector<int>& truth);

/// Partial labeling for graph propagation; `unlabeled` marks nodes with no seed.
struct SeedLabels {
  static constexpr int unlabeled = -1;
  std::vector<int> labels;  // per node: class id or unlabeled
};

/// Lazy-random-walk label propagation: node k scores class c by the mean
/// stationary mass its diffusion state puts on the seeds of class c.
std::vector<int> lrw_propagate(const DiffusionGraph& graph, const SeedLabels& seeds,
                               double restart_prob = 0.5);
/// Same rule from precomputed diffusion states (row k = state of node k).
std::vector<int> lrw_propagate(const Matrix& states, const SeedLabels& seeds);

void write_model_json(const LinearModel& model, std::ostream& out);

}  // namespace rlasso
