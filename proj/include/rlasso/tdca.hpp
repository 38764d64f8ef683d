#pragma once

#include "rlasso/dataset.hpp"

#include <Eigen/SparseCore>

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

namespace rlasso {

using SparseRowMatrix = Eigen::SparseMatrix<double, Eigen::RowMajor>;

/// Directed kNN similarity graph over all (training and test) instances.
struct DiffusionGraph {
  Eigen::Index n_nodes = 0;
  std::vector<std::vector<Eigen::Index>> neighbors;
  std::vector<std::vector<double>> weights;  // ω per neighbor edge
  SparseRowMatrix transition;                // row-stochastic
  double delta = 0.0;
  bool uniform_fallback = false;             // set when delta == 0
};

struct GraphOptions {
  int k = 10;
  bool normalize = true;  // L2-normalize rows before inner products
};

/// ω(ψ_k, ψ_l) = exp(⟨ψ_k, ψ_l⟩² / δ) on the k largest-similarity neighbors,
/// δ the median squared inner product over those candidate pairs, and
/// P_kl = ω_kl / Σ_m ω_km.
DiffusionGraph build_graph(const Matrix& features, const GraphOptions& opts = {});

/// Graph with a prescribed transition matrix (rows must sum to one).
DiffusionGraph graph_from_transition(const Matrix& transition);

struct DiffusionStates {
  Matrix states;  // row k = stationary state of the walk restarting at k
  double restart_prob = 0.5;
  double residual = 0.0;
  int iterations = 0;
  bool converged = true;
};

struct LazyWalkOptions {
  double restart_prob = 0.5;
  double tolerance = 1e-10;
  int max_iter = 10000;
};

/// Iterates s ← (1 − p_r) s P + p_r e_k from s = e_k for every node until
/// successive iterates differ by at most `tolerance` in max norm.
DiffusionStates lazy_random_walk(const DiffusionGraph& graph, const LazyWalkOptions& opts = {});

/// Closed form p_r (I − (1 − p_r) P)⁻¹ by dense LU; refuses graphs above 500 nodes.
DiffusionStates stationary_oracle(const DiffusionGraph& graph, double restart_prob);

/// Row-wise softmax of W Xᵀ computed with max-shifted exponentials.
Matrix softmax_states(const Matrix& x, const Matrix& w);

struct KlEvaluation {
  double value = 0.0;
  Matrix grad_x;
  Matrix grad_w;
};

/// (1/n) Σ_k KL(s_k ‖ ŝ_k) with ŝ_kl = softmax_l(w_kᵀ x_l), and its gradients.
KlEvaluation kl_objective_and_gradient(const Matrix& x, const Matrix& w, const Matrix& states);

struct Embedding {
  Matrix x;  // node features
  Matrix w;  // context features
  int d = 0;
  double initial_kl = 0.0;
  double final_kl = 0.0;
  int iterations = 0;
  int restarts = 0;
  std::vector<double> objective_trace;
};

struct EmbeddingOptions {
  int d = 10;
  int memory = 10;
  double gradient_tolerance = 1e-6;
  int max_iter = 500;
  double init_std = 0.1;
  std::uint64_t seed = 0;
  /// States of graphs with more nodes than this are sparsified before fitting.
  Eigen::Index truncate_above = 10000;
  double truncate_threshold = 1e-6;
};

Embedding fit_embedding(const Matrix& states, const EmbeddingOptions& opts = {});

/// X: the low-dimensional design handed to the outlier LASSO.
Matrix reduced_features(const Embedding& emb);
/// [W | X]: the classifier feature set.
Matrix concat_features(const Embedding& emb);

void write_embedding_csv(const Embedding& emb, std::ostream& out, const std::vector<std::string>& ids = {});
void write_graph_csv(const DiffusionGraph& graph, std::ostream& out);

}  // namespace rlasso
