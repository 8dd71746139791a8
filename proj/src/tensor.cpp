#include "cada/tensor.hpp"

#include <cmath>
#include <numbers>
#include <sstream>

namespace cada {

namespace {

std::string shape_str(const Matrix& m) {
  std::ostringstream os;
  os << "(" << m.rows() << "," << m.cols() << ")";
  return os.str();
}

void require_same_shape(const Var& a, const Var& b, const char* op) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw TensorError(std::string(op) + ": shape mismatch " + shape_str(a.value()) + " vs " +
                      shape_str(b.value()));
  }
}

void require_same_tape(const Var& a, const Var& b, const char* op) {
  if (&a.tape() != &b.tape()) throw TensorError(std::string(op) + ": operands on different tapes");
}

}  // namespace

// ---- Var ------------------------------------------------------------------

const Matrix& Var::value() const { return tape_->value(id_); }
const Matrix& Var::grad() const { return tape_->grad(id_); }
bool Var::requires_grad() const { return tape_->requires_grad(id_); }

Scalar Var::item() const {
  const Matrix& v = value();
  if (v.size() != 1) throw TensorError("item(): tensor is not a scalar " + shape_str(v));
  return v(0, 0);
}

// ---- Tape -----------------------------------------------------------------

int Tape::push(Node node) {
  nodes_.push_back(std::move(node));
  return static_cast<int>(nodes_.size()) - 1;
}

Var Tape::constant(Matrix value) {
  Node n;
  n.value = std::move(value);
  return Var(this, push(std::move(n)));
}

Var Tape::leaf(Matrix value) {
  Node n;
  n.value = std::move(value);
  n.requires_grad = true;
  return Var(this, push(std::move(n)));
}

Var Tape::param(Parameter& p) {
  Node n;
  n.value = p.value;
  n.param = &p;
  n.requires_grad = true;
  return Var(this, push(std::move(n)));
}

Var Tape::record(Matrix value, std::initializer_list<Var> parents, BackwardFn backward) {
  return record(std::move(value), std::vector<Var>(parents), std::move(backward));
}

Var Tape::record(Matrix value, const std::vector<Var>& parents, BackwardFn backward) {
  if (consumed_) throw TensorError("tape already consumed by backward(); record a fresh forward pass");
  Node n;
  n.value = std::move(value);
  for (const Var& p : parents) {
    if (&p.tape() != this) throw TensorError("record(): parent belongs to another tape");
    n.requires_grad = n.requires_grad || p.requires_grad();
  }
  if (n.requires_grad) n.backward = std::move(backward);
  return Var(this, push(std::move(n)));
}

void Tape::add_grad(int id, const Matrix& g) {
  Node& n = nodes_[static_cast<std::size_t>(id)];
  if (!n.requires_grad) return;
  if (n.grad.size() == 0) n.grad = g;
  else n.grad += g;
}

void Tape::backward(const Var& loss) {
  if (!loss.valid() || &loss.tape() != this) throw TensorError("backward(): loss is not on this tape");
  if (consumed_) throw TensorError("backward(): tape already consumed; re-run the forward pass");
  if (loss.value().size() != 1) throw TensorError("backward(): loss must be a scalar, got " + shape_str(loss.value()));
  if (!loss.requires_grad()) throw TensorError("backward(): loss is detached from every differentiable input");
  consumed_ = true;

  nodes_[static_cast<std::size_t>(loss.id())].grad = Matrix::Ones(1, 1);
  for (int id = loss.id(); id >= 0; --id) {
    Node& n = nodes_[static_cast<std::size_t>(id)];
    if (n.grad.size() == 0) continue;
    if (n.param != nullptr) {
      n.param->grad += n.grad;
    } else if (n.backward) {
      // Copy: the callback may grow nodes_ only in pathological cases, but it
      // does write into other nodes' grads, never into this one.
      const Matrix g = n.grad;
      n.backward(*this, g);
    }
  }
}

// ---- operations -------------------------------------------------------------

Var matmul(const Var& a, const Var& b) {
  require_same_tape(a, b, "matmul");
  if (a.cols() != b.rows()) {
    throw TensorError("matmul: inner dimensions differ " + shape_str(a.value()) + " x " + shape_str(b.value()));
  }
  Matrix out = a.value() * b.value();
  const int ia = a.id(), ib = b.id();
  return a.tape().record(std::move(out), {a, b}, [ia, ib](Tape& t, const Matrix& g) {
    if (t.requires_grad(ia)) t.add_grad(ia, g * t.value(ib).transpose());
    if (t.requires_grad(ib)) t.add_grad(ib, t.value(ia).transpose() * g);
  });
}

Var transpose(const Var& a) {
  const int ia = a.id();
  return a.tape().record(a.value().transpose(), {a},
                         [ia](Tape& t, const Matrix& g) { t.add_grad(ia, g.transpose()); });
}

Var reshape(const Var& a, Index rows, Index cols) {
  if (rows * cols != a.value().size()) {
    throw TensorError("reshape: cannot view " + shape_str(a.value()) + " as (" + std::to_string(rows) + "," +
                      std::to_string(cols) + ")");
  }
  // Row-major storage makes reshape a reinterpretation of the same buffer.
  Matrix out = Eigen::Map<const Matrix>(a.value().data(), rows, cols);
  const int ia = a.id();
  const Index r0 = a.rows(), c0 = a.cols();
  return a.tape().record(std::move(out), {a}, [ia, r0, c0](Tape& t, const Matrix& g) {
    t.add_grad(ia, Matrix(Eigen::Map<const Matrix>(g.data(), r0, c0)));
  });
}

Var add(const Var& a, const Var& b) {
  require_same_tape(a, b, "add");
  require_same_shape(a, b, "add");
  const int ia = a.id(), ib = b.id();
  return a.tape().record(a.value() + b.value(), {a, b}, [ia, ib](Tape& t, const Matrix& g) {
    t.add_grad(ia, g);
    t.add_grad(ib, g);
  });
}

Var sub(const Var& a, const Var& b) {
  require_same_tape(a, b, "sub");
  require_same_shape(a, b, "sub");
  const int ia = a.id(), ib = b.id();
  return a.tape().record(a.value() - b.value(), {a, b}, [ia, ib](Tape& t, const Matrix& g) {
    t.add_grad(ia, g);
    t.add_grad(ib, (-g).eval());
  });
}

Var add_row(const Var& a, const Var& row) {
  require_same_tape(a, row, "add_row");
  if (row.rows() != 1 || row.cols() != a.cols()) {
    throw TensorError("add_row: expected (1," + std::to_string(a.cols()) + ") bias, got " + shape_str(row.value()));
  }
  Matrix out = a.value().rowwise() + row.value().row(0);
  const int ia = a.id(), ir = row.id();
  return a.tape().record(std::move(out), {a, row}, [ia, ir](Tape& t, const Matrix& g) {
    t.add_grad(ia, g);
    if (t.requires_grad(ir)) t.add_grad(ir, Matrix(g.colwise().sum()));
  });
}

Var add_scalar(const Var& a, const Var& s) {
  require_same_tape(a, s, "add_scalar");
  if (s.value().size() != 1) throw TensorError("add_scalar: expected a 1x1 operand, got " + shape_str(s.value()));
  Matrix out = a.value().array() + s.value()(0, 0);
  const int ia = a.id(), is = s.id();
  return a.tape().record(std::move(out), {a, s}, [ia, is](Tape& t, const Matrix& g) {
    t.add_grad(ia, g);
    if (t.requires_grad(is)) t.add_grad(is, Matrix::Constant(1, 1, g.sum()));
  });
}

Var mul(const Var& a, const Var& b) {
  require_same_tape(a, b, "mul");
  require_same_shape(a, b, "mul");
  const int ia = a.id(), ib = b.id();
  Matrix out = a.value().cwiseProduct(b.value());
  return a.tape().record(std::move(out), {a, b}, [ia, ib](Tape& t, const Matrix& g) {
    if (t.requires_grad(ia)) t.add_grad(ia, Matrix(g.cwiseProduct(t.value(ib))));
    if (t.requires_grad(ib)) t.add_grad(ib, Matrix(g.cwiseProduct(t.value(ia))));
  });
}

Var mul_const(const Var& a, const Matrix& c) {
  if (a.rows() != c.rows() || a.cols() != c.cols()) {
    throw TensorError("mul_const: shape mismatch " + shape_str(a.value()) + " vs " + shape_str(c));
  }
  const int ia = a.id();
  return a.tape().record(a.value().cwiseProduct(c), {a},
                         [ia, c](Tape& t, const Matrix& g) { t.add_grad(ia, Matrix(g.cwiseProduct(c))); });
}

Var scale(const Var& a, Scalar alpha) { return affine(a, alpha, 0.0); }

Var affine(const Var& a, Scalar alpha, Scalar beta) {
  const int ia = a.id();
  Matrix out = (alpha * a.value().array() + beta).matrix();
  return a.tape().record(std::move(out), {a},
                         [ia, alpha](Tape& t, const Matrix& g) { t.add_grad(ia, Matrix(alpha * g)); });
}

Var relu(const Var& a) {
  const int ia = a.id();
  return a.tape().record(a.value().cwiseMax(0.0), {a}, [ia](Tape& t, const Matrix& g) {
    const Matrix& x = t.value(ia);
    t.add_grad(ia, Matrix((x.array() > 0.0).select(g, 0.0)));
  });
}

Var gelu(const Var& a) {
  const int ia = a.id();
  const Matrix& x = a.value();
  Matrix out = x.unaryExpr([](Scalar v) { return 0.5 * v * (1.0 + std::erf(v * std::numbers::sqrt2 / 2.0)); });
  return a.tape().record(std::move(out), {a}, [ia](Tape& t, const Matrix& g) {
    const Matrix& xv = t.value(ia);
    Matrix d = xv.unaryExpr([](Scalar v) {
      const Scalar cdf = 0.5 * (1.0 + std::erf(v * std::numbers::sqrt2 / 2.0));
      const Scalar pdf = std::exp(-0.5 * v * v) * std::numbers::inv_sqrtpi / std::numbers::sqrt2;
      return cdf + v * pdf;
    });
    t.add_grad(ia, Matrix(g.cwiseProduct(d)));
  });
}

Var sigmoid(const Var& a) {
  const int ia = a.id();
  Matrix out = a.value().unaryExpr([](Scalar v) {
    // Split by sign so exp never overflows.
    if (v >= 0) return 1.0 / (1.0 + std::exp(-v));
    const Scalar e = std::exp(v);
    return e / (1.0 + e);
  });
  Matrix y = out;
  return a.tape().record(std::move(out), {a}, [ia, y = std::move(y)](Tape& t, const Matrix& g) {
    t.add_grad(ia, Matrix(g.array() * y.array() * (1.0 - y.array())));
  });
}

Var exp(const Var& a) {
  const int ia = a.id();
  Matrix out = a.value().array().exp().matrix();
  Matrix y = out;
  return a.tape().record(std::move(out), {a}, [ia, y = std::move(y)](Tape& t, const Matrix& g) {
    t.add_grad(ia, Matrix(g.cwiseProduct(y)));
  });
}

Var log(const Var& a, Scalar floor) {
  const int ia = a.id();
  Matrix out = a.value().unaryExpr([floor](Scalar v) { return std::log(std::max(v, floor)); });
  return a.tape().record(std::move(out), {a}, [ia, floor](Tape& t, const Matrix& g) {
    const Matrix& x = t.value(ia);
    Matrix d = g;
    for (Index i = 0; i < d.size(); ++i) {
      const Scalar v = x.data()[i];
      d.data()[i] = (v > floor) ? d.data()[i] / v : 0.0;
    }
    t.add_grad(ia, d);
  });
}

Var sum(const Var& a) {
  const int ia = a.id();
  const Index r = a.rows(), c = a.cols();
  return a.tape().record(Matrix::Constant(1, 1, a.value().sum()), {a}, [ia, r, c](Tape& t, const Matrix& g) {
    t.add_grad(ia, Matrix::Constant(r, c, g(0, 0)));
  });
}

Var mean(const Var& a) {
  const int ia = a.id();
  const Index r = a.rows(), c = a.cols();
  const Scalar n = static_cast<Scalar>(r * c);
  return a.tape().record(Matrix::Constant(1, 1, a.value().sum() / n), {a},
                         [ia, r, c, n](Tape& t, const Matrix& g) { t.add_grad(ia, Matrix::Constant(r, c, g(0, 0) / n)); });
}

Matrix masked_softmax_values(const Matrix& scores, const Matrix& mask) {
  if (scores.rows() != mask.rows() || scores.cols() != mask.cols()) {
    throw TensorError("masked_softmax: mask shape " + shape_str(mask) + " does not match scores " + shape_str(scores));
  }
  Matrix out(scores.rows(), scores.cols());
  for (Index i = 0; i < scores.rows(); ++i) {
    Scalar mx = kNegInf;
    for (Index j = 0; j < scores.cols(); ++j) {
      if (mask(i, j) != kNegInf) mx = std::max(mx, scores(i, j) + mask(i, j));
    }
    if (mx == kNegInf) throw TensorError("masked_softmax: row " + std::to_string(i) + " is fully masked");
    Scalar z = 0.0;
    for (Index j = 0; j < scores.cols(); ++j) {
      const Scalar e = (mask(i, j) == kNegInf) ? 0.0 : std::exp(scores(i, j) + mask(i, j) - mx);
      out(i, j) = e;
      z += e;
    }
    out.row(i) /= z;
  }
  return out;
}

Var masked_softmax(const Var& scores, const Matrix& mask) {
  Matrix p = masked_softmax_values(scores.value(), mask);
  Matrix y = p;
  const int is = scores.id();
  return scores.tape().record(std::move(p), {scores}, [is, y = std::move(y)](Tape& t, const Matrix& g) {
    // dS = P * (G - rowsum(G * P)); masked entries have P = 0 and get 0.
    const Eigen::VectorXd dot = g.cwiseProduct(y).rowwise().sum();
    Matrix d = y.cwiseProduct(g.colwise() - dot);
    t.add_grad(is, d);
  });
}

Var softmax_rows(const Var& scores) {
  return masked_softmax(scores, Matrix::Zero(scores.rows(), scores.cols()));
}

Var layer_norm(const Var& x, const Var& gain, const Var& bias, Scalar eps) {
  require_same_tape(x, gain, "layer_norm");
  require_same_tape(x, bias, "layer_norm");
  const Index f = x.cols();
  if (f < 1) throw TensorError("layer_norm: empty feature dimension");
  if (gain.rows() != 1 || gain.cols() != f || bias.rows() != 1 || bias.cols() != f) {
    throw TensorError("layer_norm: gain/bias must be (1," + std::to_string(f) + ")");
  }
  const Matrix& xv = x.value();
  Matrix xhat(xv.rows(), f);
  Eigen::VectorXd inv_std(xv.rows());
  for (Index i = 0; i < xv.rows(); ++i) {
    const Scalar mu = xv.row(i).mean();
    const Scalar var = (xv.row(i).array() - mu).square().mean();
    inv_std(i) = 1.0 / std::sqrt(var + eps);
    xhat.row(i) = (xv.row(i).array() - mu) * inv_std(i);
  }
  Matrix out = (xhat.array().rowwise() * gain.value().row(0).array()).rowwise() + bias.value().row(0).array();
  const int ix = x.id(), ig = gain.id(), ib = bias.id();
  return x.tape().record(
      std::move(out), {x, gain, bias},
      [ix, ig, ib, xhat = std::move(xhat), inv_std = std::move(inv_std), f](Tape& t, const Matrix& g) {
        if (t.requires_grad(ig)) t.add_grad(ig, Matrix(g.cwiseProduct(xhat).colwise().sum()));
        if (t.requires_grad(ib)) t.add_grad(ib, Matrix(g.colwise().sum()));
        if (t.requires_grad(ix)) {
          const Matrix dxhat = g.array().rowwise() * t.value(ig).row(0).array();
          Matrix dx(dxhat.rows(), f);
          const Scalar nf = static_cast<Scalar>(f);
          for (Index i = 0; i < dxhat.rows(); ++i) {
            const Scalar m1 = dxhat.row(i).sum() / nf;
            const Scalar m2 = dxhat.row(i).dot(xhat.row(i)) / nf;
            dx.row(i) = inv_std(i) * (dxhat.row(i).array() - m1 - xhat.row(i).array() * m2);
          }
          t.add_grad(ix, dx);
        }
      });
}

Var embedding(const Var& table, std::span<const int> ids) {
  const Matrix& tv = table.value();
  Matrix out(static_cast<Index>(ids.size()), tv.cols());
  for (std::size_t r = 0; r < ids.size(); ++r) {
    if (ids[r] < 0 || ids[r] >= tv.rows()) {
      throw TensorError("embedding: id " + std::to_string(ids[r]) + " out of range [0," + std::to_string(tv.rows()) + ")");
    }
    out.row(static_cast<Index>(r)) = tv.row(ids[r]);
  }
  const int it = table.id();
  std::vector<int> idv(ids.begin(), ids.end());
  const Index vr = tv.rows(), vc = tv.cols();
  return table.tape().record(std::move(out), {table}, [it, idv = std::move(idv), vr, vc](Tape& t, const Matrix& g) {
    Matrix d = Matrix::Zero(vr, vc);
    for (std::size_t r = 0; r < idv.size(); ++r) d.row(idv[r]) += g.row(static_cast<Index>(r));
    t.add_grad(it, d);
  });
}

Var concat_cols(const std::vector<Var>& parts) {
  if (parts.empty()) throw TensorError("concat_cols: no operands");
  const Index r = parts.front().rows();
  Index total = 0;
  for (const Var& p : parts) {
    if (p.rows() != r) throw TensorError("concat_cols: row counts differ");
    require_same_tape(parts.front(), p, "concat_cols");
    total += p.cols();
  }
  Matrix out(r, total);
  std::vector<std::pair<int, Index>> spans;
  Index off = 0;
  for (const Var& p : parts) {
    out.middleCols(off, p.cols()) = p.value();
    spans.emplace_back(p.id(), off);
    off += p.cols();
  }
  return parts.front().tape().record(std::move(out), parts, [spans = std::move(spans)](Tape& t, const Matrix& g) {
    for (const auto& [id, start] : spans) {
      if (t.requires_grad(id)) t.add_grad(id, Matrix(g.middleCols(start, t.value(id).cols())));
    }
  });
}

Var slice_cols(const Var& a, Index start, Index count) {
  if (start < 0 || count < 0 || start + count > a.cols()) throw TensorError("slice_cols: range out of bounds");
  const int ia = a.id();
  const Index r = a.rows(), c = a.cols();
  return a.tape().record(a.value().middleCols(start, count), {a}, [ia, r, c, start, count](Tape& t, const Matrix& g) {
    Matrix d = Matrix::Zero(r, c);
    d.middleCols(start, count) = g;
    t.add_grad(ia, d);
  });
}

Var slice_rows(const Var& a, Index start, Index count) {
  if (start < 0 || count < 0 || start + count > a.rows()) throw TensorError("slice_rows: range out of bounds");
  const int ia = a.id();
  const Index r = a.rows(), c = a.cols();
  return a.tape().record(a.value().middleRows(start, count), {a}, [ia, r, c, start, count](Tape& t, const Matrix& g) {
    Matrix d = Matrix::Zero(r, c);
    d.middleRows(start, count) = g;
    t.add_grad(ia, d);
  });
}

Var pick(const Var& a, Index row, Index col) {
  if (row < 0 || row >= a.rows() || col < 0 || col >= a.cols()) throw TensorError("pick: index out of bounds");
  const int ia = a.id();
  const Index r = a.rows(), c = a.cols();
  return a.tape().record(Matrix::Constant(1, 1, a.value()(row, col)), {a}, [ia, r, c, row, col](Tape& t, const Matrix& g) {
    Matrix d = Matrix::Zero(r, c);
    d(row, col) = g(0, 0);
    t.add_grad(ia, d);
  });
}

Var dropout(const Var& a, Scalar rate) {
  if (rate < 0.0 || rate >= 1.0) throw TensorError("dropout: rate must be in [0,1)");
  if (rate == 0.0) return a;
  std::bernoulli_distribution keep(1.0 - rate);
  Matrix m(a.rows(), a.cols());
  auto& rng = a.tape().rng();
  for (Index i = 0; i < m.size(); ++i) m.data()[i] = keep(rng) ? 1.0 / (1.0 - rate) : 0.0;
  return mul_const(a, m);
}

void check_finite(const Matrix& m, const std::string& what, bool allow_neg_inf) {
  for (Index i = 0; i < m.size(); ++i) {
    const Scalar v = m.data()[i];
    if (std::isnan(v) || (std::isinf(v) && !(allow_neg_inf && v < 0))) {
      throw TensorError(what + ": non-finite entry at flat index " + std::to_string(i));
    }
  }
}

}  // namespace cada
