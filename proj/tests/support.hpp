#pragma once

// Shared oracles for the unit and acceptance suites.

#include "cada/corpus.hpp"
#include "cada/graphs.hpp"
#include "cada/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <random>
#include <vector>

namespace cada::testing {

inline Matrix random_matrix(std::mt19937_64& rng, Index r, Index c, double lo = -1.0, double hi = 1.0) {
  std::uniform_real_distribution<double> u(lo, hi);
  Matrix m(r, c);
  for (Index i = 0; i < m.size(); ++i) m.data()[i] = u(rng);
  return m;
}

/// Builds a scalar loss from tape leaves.
using LossFn = std::function<Var(Tape&, const std::vector<Var>&)>;

/// Largest norm-wise relative error ||analytic - numeric|| / (||analytic|| + ||numeric||)
/// over all inputs, with central differences of step h.
inline double gradient_error(const LossFn& f, const std::vector<Matrix>& inputs, double h = 1e-5) {
  std::vector<Matrix> analytic;
  {
    Tape tape;
    std::vector<Var> leaves;
    for (const auto& m : inputs) leaves.push_back(tape.leaf(m));
    tape.backward(f(tape, leaves));
    for (const auto& v : leaves) {
      analytic.push_back(v.grad().size() == 0 ? Matrix::Zero(v.rows(), v.cols()) : v.grad());
    }
  }
  auto eval = [&](const std::vector<Matrix>& xs) {
    Tape tape;
    std::vector<Var> leaves;
    for (const auto& m : xs) leaves.push_back(tape.constant(m));
    return f(tape, leaves).item();
  };
  double worst = 0.0;
  std::vector<Matrix> xs = inputs;
  for (std::size_t k = 0; k < xs.size(); ++k) {
    Matrix numeric(xs[k].rows(), xs[k].cols());
    for (Index i = 0; i < xs[k].size(); ++i) {
      const double orig = xs[k].data()[i];
      xs[k].data()[i] = orig + h;
      const double up = eval(xs);
      xs[k].data()[i] = orig - h;
      const double down = eval(xs);
      xs[k].data()[i] = orig;
      numeric.data()[i] = (up - down) / (2.0 * h);
    }
    const double denom = analytic[k].norm() + numeric.norm();
    if (denom > 1e-12) worst = std::max(worst, (analytic[k] - numeric).norm() / denom);
  }
  return worst;
}

/// Scalarizes a tensor output with fixed random weights so every entry of
/// the output contributes a distinct adjoint.
inline Var weighted_sum(const Var& out, std::uint64_t seed = 99) {
  std::mt19937_64 rng(seed);
  return sum(mul_const(out, random_matrix(rng, out.rows(), out.cols())));
}

/// All-pairs hop counts by Floyd–Warshall; -1 when unreachable.
inline Eigen::MatrixXi floyd_warshall(int n, const std::vector<std::pair<int, int>>& edges) {
  const int inf = 1 << 20;
  Eigen::MatrixXi d = Eigen::MatrixXi::Constant(n, n, inf);
  for (int i = 0; i < n; ++i) d(i, i) = 0;
  for (const auto& [a, b] : edges) {
    d(a, b) = std::min(d(a, b), 1);
    d(b, a) = std::min(d(b, a), 1);
  }
  for (int k = 0; k < n; ++k) {
    for (int i = 0; i < n; ++i) {
      for (int j = 0; j < n; ++j) d(i, j) = std::min(d(i, j), d(i, k) + d(k, j));
    }
  }
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) {
      if (d(i, j) >= inf) d(i, j) = -1;
    }
  }
  return d;
}

/// Random dialogue with `n` utterances, up to `edge_count` random arcs and
/// speakers drawn from `speakers` names.
inline Dialogue random_dialogue(std::mt19937_64& rng, int n, int edge_count, int speakers) {
  Dialogue d;
  d.id = "rand";
  std::uniform_int_distribution<int> pick_utt(0, n - 1), pick_spk(0, speakers - 1), len(1, 4);
  for (int i = 0; i < n; ++i) {
    std::string text;
    for (int t = len(rng); t > 0; --t) text += (text.empty() ? "w" : " w") + std::to_string(pick_utt(rng));
    d.utterances.push_back({"s" + std::to_string(pick_spk(rng)), text, i});
  }
  for (int e = 0; e < edge_count; ++e) {
    const int a = pick_utt(rng), b = pick_utt(rng);
    if (a != b) d.edges.push_back({a, b, "rel"});
  }
  return d;
}

/// Naive triple-loop reference for e = (q k^T + (q W k^T + b) * M) / sqrt(d).
inline Matrix biaffine_reference(const Matrix& q, const Matrix& k, const Matrix& w, double b, const Matrix& m) {
  const Index n = q.rows(), l = k.rows(), d = q.cols();
  Matrix e(n, l);
  for (Index i = 0; i < n; ++i) {
    for (Index j = 0; j < l; ++j) {
      double dot = 0.0, bil = 0.0;
      for (Index a = 0; a < d; ++a) {
        dot += q(i, a) * k(j, a);
        for (Index c = 0; c < d; ++c) bil += q(i, a) * w(a, c) * k(j, c);
      }
      e(i, j) = (dot + (bil + b) * m(i, j)) / std::sqrt(static_cast<double>(d));
    }
  }
  return e;
}

}  // namespace cada::testing
