#pragma once

// Dense 2-D tensors on Eigen with a reverse-mode gradient tape.
//
// A Tape records every operation applied to its Vars in execution order.
// backward() walks the records once, newest first, pushing adjoints to
// parents. Parameters live outside any tape; a tape leaf created with
// Tape::param() adds its adjoint into Parameter::grad.

#include <Eigen/Dense>

#include <cstdint>
#include <functional>
#include <limits>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace cada {

using Scalar = double;
using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using RowVector = Eigen::Matrix<Scalar, 1, Eigen::Dynamic>;
using Index = Eigen::Index;

inline constexpr Scalar kNegInf = -std::numeric_limits<Scalar>::infinity();

class TensorError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

/// Trainable tensor owned by a model. `grad` always matches `value`'s shape.
struct Parameter {
  std::string name;
  Matrix value;
  Matrix grad;

  Parameter() = default;
  Parameter(std::string n, Matrix v)
      : name(std::move(n)), value(std::move(v)), grad(Matrix::Zero(value.rows(), value.cols())) {}

  void zero_grad() { grad.setZero(value.rows(), value.cols()); }
  Index size() const { return value.size(); }
};

class Tape;

/// Handle to a node on a Tape. Cheap to copy; valid while the tape lives.
class Var {
public:
  Var() = default;

  const Matrix& value() const;
  /// Adjoint after backward(); zero-sized when the node never received one.
  const Matrix& grad() const;
  Index rows() const { return value().rows(); }
  Index cols() const { return value().cols(); }
  /// Scalar read-out of a 1x1 node.
  Scalar item() const;

  Tape& tape() const { return *tape_; }
  int id() const { return id_; }
  bool valid() const { return tape_ != nullptr; }
  bool requires_grad() const;

private:
  friend class Tape;
  Var(Tape* t, int id) : tape_(t), id_(id) {}
  Tape* tape_ = nullptr;
  int id_ = -1;
};

class Tape {
public:
  /// Receives the node's adjoint; must add into parents via add_grad().
  using BackwardFn = std::function<void(Tape&, const Matrix&)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var constant(Matrix value);
  /// Differentiable input whose adjoint is read back through Var::grad().
  Var leaf(Matrix value);
  Var param(Parameter& p);

  /// Appends an op node. `backward` runs only when some parent needs a gradient.
  Var record(Matrix value, std::initializer_list<Var> parents, BackwardFn backward);
  Var record(Matrix value, const std::vector<Var>& parents, BackwardFn backward);

  /// Propagates d(loss)/d(node) to every node reachable from `loss`.
  /// A tape supports a single backward pass; a second call throws.
  void backward(const Var& loss);

  void add_grad(int id, const Matrix& g);
  template <typename Derived>
  void add_grad(int id, const Eigen::MatrixBase<Derived>& g) {
    Node& n = nodes_[static_cast<std::size_t>(id)];
    if (!n.requires_grad) return;
    if (n.grad.size() == 0) n.grad = g;
    else n.grad += g;
  }

  const Matrix& value(int id) const { return nodes_[static_cast<std::size_t>(id)].value; }
  const Matrix& grad(int id) const { return nodes_[static_cast<std::size_t>(id)].grad; }
  bool requires_grad(int id) const { return nodes_[static_cast<std::size_t>(id)].requires_grad; }
  std::size_t size() const { return nodes_.size(); }
  bool consumed() const { return consumed_; }

  /// Random source for stochastic ops (dropout); seeded per tape.
  std::mt19937_64& rng() { return rng_; }
  void seed(std::uint64_t s) { rng_.seed(s); }

private:
  struct Node {
    Matrix value;
    Matrix grad;
    BackwardFn backward;
    Parameter* param = nullptr;
    bool requires_grad = false;
  };

  int push(Node node);

  std::vector<Node> nodes_;
  std::mt19937_64 rng_{0};
  bool consumed_ = false;
};

// ---- operations ---------------------------------------------------------
// All shapes are (rows, cols). Scalars are 1x1.

Var matmul(const Var& a, const Var& b);
Var transpose(const Var& a);
Var reshape(const Var& a, Index rows, Index cols);
Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
/// Adds a 1xC row to every row of a (bias broadcast).
Var add_row(const Var& a, const Var& row);
/// Adds a 1x1 Var to every entry.
Var add_scalar(const Var& a, const Var& s);
Var mul(const Var& a, const Var& b);
/// Elementwise product with a constant matrix (structure masks).
Var mul_const(const Var& a, const Matrix& c);
Var scale(const Var& a, Scalar alpha);
/// alpha * a + beta.
Var affine(const Var& a, Scalar alpha, Scalar beta);
Var relu(const Var& a);
/// Exact GELU, x * Phi(x).
Var gelu(const Var& a);
Var sigmoid(const Var& a);
Var exp(const Var& a);
/// Natural log of max(a, floor); entries below the floor get zero gradient.
Var log(const Var& a, Scalar floor = 0.0);
Var sum(const Var& a);
Var mean(const Var& a);
/// Row-wise softmax of (scores + mask). mask entries are 0 or -inf; masked
/// outputs are exactly 0 and pass no gradient. Throws on an all-masked row.
Var masked_softmax(const Var& scores, const Matrix& mask);
Var softmax_rows(const Var& scores);
/// Row-wise normalization over the last dim followed by gain/bias (1xF each).
Var layer_norm(const Var& x, const Var& gain, const Var& bias, Scalar eps = 1e-5);
/// Gathers rows of `table`; backward scatter-adds into the gathered rows.
Var embedding(const Var& table, std::span<const int> ids);
Var concat_cols(const std::vector<Var>& parts);
Var slice_cols(const Var& a, Index start, Index count);
Var slice_rows(const Var& a, Index start, Index count);
/// Single element as a 1x1 Var.
Var pick(const Var& a, Index row, Index col);
/// Inverted dropout with a mask drawn from the tape's RNG. rate 0 is identity.
Var dropout(const Var& a, Scalar rate);

// ---- free numeric helpers (no tape) -------------------------------------

/// Row-wise masked softmax on plain matrices; same semantics as the Var op.
Matrix masked_softmax_values(const Matrix& scores, const Matrix& mask);

/// Throws TensorError if any entry is NaN, or +/-inf where not allowed.
void check_finite(const Matrix& m, const std::string& what, bool allow_neg_inf = false);

}  // namespace cada
