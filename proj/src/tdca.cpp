#include "rlasso/tdca.hpp"

#include "rlasso/error.hpp"
#include "rlasso/lbfgs.hpp"

#include <Eigen/LU>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <numeric>
#include <ostream>
#include <random>

namespace rlasso {

namespace {

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

double median(std::vector<double> values) {
  const auto mid = values.size() / 2;
  std::nth_element(values.begin(), values.begin() + static_cast<std::ptrdiff_t>(mid), values.end());
  const double upper = values[mid];
  if (values.size() % 2 == 1) return upper;
  const double lower = *std::max_element(values.begin(), values.begin() + static_cast<std::ptrdiff_t>(mid));
  return 0.5 * (lower + upper);
}

void check_restart(double p) {
  if (!(p > 0.0 && p <= 1.0)) throw ConfigError("restart probability must lie in (0, 1]");
}

}  // namespace

DiffusionGraph build_graph(const Matrix& features, const GraphOptions& opts) {
  const Eigen::Index n = features.rows();
  if (n < 2) throw DataError("graph needs at least two nodes");
  if (opts.k < 1) throw ConfigError("neighbor count k must be at least 1");
  if (!features.allFinite()) throw DataError("graph features contain non-finite values");
  const Eigen::Index k = std::min<Eigen::Index>(opts.k, n - 1);

  Matrix psi = features;
  if (opts.normalize) {
    for (Eigen::Index i = 0; i < n; ++i) {
      const double norm = psi.row(i).norm();
      if (norm > 0.0) psi.row(i) /= norm;
    }
  }
  const Matrix sq = (psi * psi.transpose()).array().square().matrix();

  DiffusionGraph g;
  g.n_nodes = n;
  g.neighbors.resize(static_cast<std::size_t>(n));
  g.weights.resize(static_cast<std::size_t>(n));

  std::vector<Eigen::Index> candidates(static_cast<std::size_t>(n - 1));
  std::vector<double> pair_values;
  pair_values.reserve(static_cast<std::size_t>(n * k));
  for (Eigen::Index i = 0; i < n; ++i) {
    std::size_t c = 0;
    for (Eigen::Index l = 0; l < n; ++l) {
      if (l != i) candidates[c++] = l;
    }
    std::partial_sort(candidates.begin(), candidates.begin() + k, candidates.end(), [&](Eigen::Index a, Eigen::Index b) {
      if (sq(i, a) != sq(i, b)) return sq(i, a) > sq(i, b);
      return a < b;
    });
    auto& nb = g.neighbors[static_cast<std::size_t>(i)];
    nb.assign(candidates.begin(), candidates.begin() + k);
    for (Eigen::Index l : nb) pair_values.push_back(sq(i, l));
  }

  g.delta = median(pair_values);
  g.uniform_fallback = !(g.delta > 0.0);

  std::vector<Eigen::Triplet<double>> triplets;
  triplets.reserve(static_cast<std::size_t>(n * k));
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto& nb = g.neighbors[static_cast<std::size_t>(i)];
    auto& w = g.weights[static_cast<std::size_t>(i)];
    w.resize(nb.size());
    std::vector<double> shifted(nb.size());
    if (g.uniform_fallback) {
      std::fill(w.begin(), w.end(), 1.0);
      std::fill(shifted.begin(), shifted.end(), 1.0);
    } else {
      double top = 0.0;
      for (Eigen::Index l : nb) top = std::max(top, sq(i, l));
      for (std::size_t j = 0; j < nb.size(); ++j) {
        const double v = sq(i, nb[j]);
        w[j] = std::exp(v / g.delta);
        shifted[j] = std::exp((v - top) / g.delta);
      }
    }
    const double total = std::accumulate(shifted.begin(), shifted.end(), 0.0);
    for (std::size_t j = 0; j < nb.size(); ++j) triplets.emplace_back(i, nb[j], shifted[j] / total);
  }
  g.transition.resize(n, n);
  g.transition.setFromTriplets(triplets.begin(), triplets.end());
  g.transition.makeCompressed();
  return g;
}

DiffusionGraph graph_from_transition(const Matrix& transition) {
  const Eigen::Index n = transition.rows();
  if (n < 1 || transition.cols() != n) throw DataError("transition matrix must be square and non-empty");
  DiffusionGraph g;
  g.n_nodes = n;
  g.neighbors.resize(static_cast<std::size_t>(n));
  g.weights.resize(static_cast<std::size_t>(n));
  for (Eigen::Index i = 0; i < n; ++i) {
    if (std::abs(transition.row(i).sum() - 1.0) > 1e-12 || (transition.row(i).array() < 0.0).any()) {
      throw DataError("transition row " + std::to_string(i) + " is not a probability vector");
    }
    for (Eigen::Index j = 0; j < n; ++j) {
      if (transition(i, j) > 0.0) {
        g.neighbors[static_cast<std::size_t>(i)].push_back(j);
        g.weights[static_cast<std::size_t>(i)].push_back(transition(i, j));
      }
    }
  }
  g.transition = transition.sparseView();
  g.transition.makeCompressed();
  return g;
}

DiffusionStates lazy_random_walk(const DiffusionGraph& graph, const LazyWalkOptions& opts) {
  check_restart(opts.restart_prob);
  if (!(opts.tolerance > 0.0)) throw ConfigError("walk tolerance must be positive");
  const Eigen::Index n = graph.n_nodes;
  const double keep = 1.0 - opts.restart_prob;

  DiffusionStates out;
  out.restart_prob = opts.restart_prob;
  Matrix s = Matrix::Identity(n, n);
  Matrix next(n, n);
  out.converged = false;
  for (int it = 1; it <= opts.max_iter; ++it) {
    next.noalias() = keep * (s * graph.transition);
    next.diagonal().array() += opts.restart_prob;
    const double change = (next - s).cwiseAbs().maxCoeff();
    s.swap(next);
    out.iterations = it;
    if (change <= opts.tolerance) {
      out.converged = true;
      break;
    }
  }
  Matrix image = keep * (s * graph.transition);
  image.diagonal().array() += opts.restart_prob;
  out.residual = (s - image).cwiseAbs().maxCoeff();
  out.states = std::move(s);
  return out;
}

DiffusionStates stationary_oracle(const DiffusionGraph& graph, double restart_prob) {
  check_restart(restart_prob);
  const Eigen::Index n = graph.n_nodes;
  if (n > 500) throw ConfigError("stationary oracle is limited to 500 nodes");
  const Matrix p = Matrix(graph.transition);
  const Matrix system = Matrix::Identity(n, n) - (1.0 - restart_prob) * p;
  // S A = p_r I  <=>  Aᵀ Sᵀ = p_r I
  Eigen::PartialPivLU<Matrix> lu(system.transpose());
  DiffusionStates out;
  out.restart_prob = restart_prob;
  out.states = lu.solve(restart_prob * Matrix::Identity(n, n)).transpose();
  Matrix image = (1.0 - restart_prob) * (out.states * p);
  image.diagonal().array() += restart_prob;
  out.residual = (out.states - image).cwiseAbs().maxCoeff();
  return out;
}

Matrix softmax_states(const Matrix& x, const Matrix& w) {
  Matrix logits = w * x.transpose();
  for (Eigen::Index k = 0; k < logits.rows(); ++k) {
    const double top = logits.row(k).maxCoeff();
    logits.row(k) = (logits.row(k).array() - top).exp().matrix();
    logits.row(k) /= logits.row(k).sum();
  }
  return logits;
}

KlEvaluation kl_objective_and_gradient(const Matrix& x, const Matrix& w, const Matrix& states) {
  const Eigen::Index n = states.rows();
  if (states.cols() != n || x.rows() != n || w.rows() != n || x.cols() != w.cols()) {
    throw DataError("embedding and state shapes are inconsistent");
  }
  if ((states.array() < 0.0).any()) throw DataError("diffusion states contain negative entries");

  const Matrix logits = w * x.transpose();
  Matrix g(n, n);
  double total = 0.0;
  for (Eigen::Index k = 0; k < n; ++k) {
    const double top = logits.row(k).maxCoeff();
    const Eigen::RowVectorXd shifted = logits.row(k).array() - top;
    const Eigen::RowVectorXd e = shifted.array().exp();
    const double z = e.sum();
    const double log_z = std::log(z);
    const double mass = states.row(k).sum();
    double kl = 0.0;
    for (Eigen::Index l = 0; l < n; ++l) {
      const double s = states(k, l);
      if (s > 0.0) kl += s * (std::log(s) - (shifted[l] - log_z));
    }
    total += kl;
    g.row(k) = mass * (e / z) - states.row(k);
  }
  const double inv_n = 1.0 / static_cast<double>(n);
  g *= inv_n;

  KlEvaluation out;
  out.value = total * inv_n;
  out.grad_w = g * x;
  out.grad_x = g.transpose() * w;
  return out;
}

Embedding fit_embedding(const Matrix& states_in, const EmbeddingOptions& opts) {
  const Eigen::Index n = states_in.rows();
  if (states_in.cols() != n) throw DataError("diffusion states must be square");
  if (opts.d < 1 || opts.d >= n) throw ConfigError("embedding dimension must satisfy 1 <= d < n");
  if (!(opts.init_std > 0.0)) throw ConfigError("init_std must be positive");
  const Eigen::Index d = opts.d;

  Matrix states = states_in;
  if (n > opts.truncate_above) {
    states = (states.array() < opts.truncate_threshold).select(0.0, states);
    for (Eigen::Index k = 0; k < n; ++k) {
      const double s = states.row(k).sum();
      if (s > 0.0) states.row(k) /= s;
    }
  }

  const Eigen::Index block = n * d;
  optim::Objective objective = [&](const Eigen::VectorXd& theta, Eigen::VectorXd& grad) {
    const Eigen::Map<const Matrix> x(theta.data(), n, d);
    const Eigen::Map<const Matrix> w(theta.data() + block, n, d);
    const KlEvaluation eval = kl_objective_and_gradient(x, w, states);
    grad.resize(2 * block);
    Eigen::Map<Matrix>(grad.data(), n, d) = eval.grad_x;
    Eigen::Map<Matrix>(grad.data() + block, n, d) = eval.grad_w;
    return eval.value;
  };

  optim::LbfgsOptions lopts;
  lopts.memory = opts.memory;
  lopts.gradient_tolerance = opts.gradient_tolerance;
  lopts.max_iterations = opts.max_iter;

  double std_dev = opts.init_std;
  for (int attempt = 0; attempt < 2; ++attempt) {
    std::mt19937_64 rng(opts.seed);
    std::normal_distribution<double> gauss(0.0, std_dev);
    Eigen::VectorXd theta(2 * block);
    for (Eigen::Index i = 0; i < theta.size(); ++i) theta[i] = gauss(rng);

    auto res = optim::minimize(objective, theta, lopts);
    if (res.status != optim::LbfgsStatus::NonFinite && res.x.allFinite() && std::isfinite(res.value)) {
      Embedding emb;
      emb.d = opts.d;
      emb.x = Eigen::Map<const Matrix>(res.x.data(), n, d);
      emb.w = Eigen::Map<const Matrix>(res.x.data() + block, n, d);
      emb.initial_kl = res.initial_value;
      emb.final_kl = std::max(0.0, res.value);
      emb.iterations = res.iterations;
      emb.restarts = attempt;
      emb.objective_trace = std::move(res.trace);
      return emb;
    }
    std_dev *= 0.1;
  }
  throw NumericalError("embedding objective became non-finite after a restart");
}

Matrix reduced_features(const Embedding& emb) { return emb.x; }

Matrix concat_features(const Embedding& emb) {
  Matrix out(emb.x.rows(), emb.w.cols() + emb.x.cols());
  out << emb.w, emb.x;
  return out;
}

void write_embedding_csv(const Embedding& emb, std::ostream& out, const std::vector<std::string>& ids) {
  out << "id";
  for (int j = 1; j <= emb.d; ++j) out << ",x_" << j;
  for (int j = 1; j <= emb.d; ++j) out << ",w_" << j;
  out << '\n';
  for (Eigen::Index i = 0; i < emb.x.rows(); ++i) {
    out << (ids.empty() ? std::to_string(i) : ids.at(static_cast<std::size_t>(i)));
    for (Eigen::Index j = 0; j < emb.x.cols(); ++j) out << ',' << fmt(emb.x(i, j));
    for (Eigen::Index j = 0; j < emb.w.cols(); ++j) out << ',' << fmt(emb.w(i, j));
    out << '\n';
  }
}

void write_graph_csv(const DiffusionGraph& graph, std::ostream& out) {
  out << "src,dst,weight,prob\n";
  for (Eigen::Index i = 0; i < graph.n_nodes; ++i) {
    const auto& nb = graph.neighbors[static_cast<std::size_t>(i)];
    const auto& w = graph.weights[static_cast<std::size_t>(i)];
    for (std::size_t j = 0; j < nb.size(); ++j) {
      out << i << ',' << nb[j] << ',' << fmt(w[j]) << ',' << fmt(graph.transition.coeff(i, nb[j])) << '\n';
    }
  }
}

}  // namespace rlasso
