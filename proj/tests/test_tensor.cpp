#include "doctest.h"
#include "checks.hpp"

using namespace cada;
using cada::testing::gradient_error;
using cada::testing::random_matrix;
using cada::testing::weighted_sum;

namespace {
constexpr double kGradTol = 1e-4;
Matrix mat(std::initializer_list<std::initializer_list<double>> rows) {
  Matrix m(static_cast<Index>(rows.size()), static_cast<Index>(rows.begin()->size()));
  Index i = 0;
  for (const auto& r : rows) {
    Index j = 0;
    for (double v : r) m(i, j++) = v;
    ++i;
  }
  return m;
}
}  // namespace

TEST_CASE("matmul values") {
  Tape t;
  CHECK(matmul(t.constant(mat({{1, 0}, {0, 1}})), t.constant(mat({{3}, {4}}))).value() == mat({{3}, {4}}));
  CHECK(matmul(t.constant(mat({{2}})), t.constant(mat({{3}}))).item() == 6.0);
  CHECK_THROWS_AS(matmul(t.constant(Matrix::Zero(2, 3)), t.constant(Matrix::Zero(2, 3))), TensorError);
}

TEST_CASE("matmul gradient of sum is ones * b^T") {
  std::mt19937_64 rng(1);
  const Matrix a = random_matrix(rng, 4, 5), b = random_matrix(rng, 5, 3);
  Tape t;
  const Var va = t.leaf(a);
  t.backward(sum(matmul(va, t.constant(b))));
  CHECK((va.grad() - Matrix::Ones(4, 3) * b.transpose()).cwiseAbs().maxCoeff() < 1e-12);
  CHECK(gradient_error([&](Tape& tp, const std::vector<Var>& x) { return sum(matmul(x[0], tp.constant(b))); }, {a}) <
        1e-6);
}

TEST_CASE("finite differences agree for every op") {
  const auto errors = cada::testing::op_gradient_errors();
  CHECK(errors.size() >= 27);
  for (const auto& [name, err] : errors) {
    CAPTURE(name);
    CHECK(err < kGradTol);
  }
}

TEST_CASE("masked_softmax contract") {
  Tape t;
  Matrix mask(1, 3);
  mask << 0, kNegInf, 0;
  const Var p = masked_softmax(t.constant(Matrix::Zero(1, 3)), mask);
  CHECK(p.value()(0, 0) == doctest::Approx(0.5));
  CHECK(p.value()(0, 1) == 0.0);
  CHECK(p.value()(0, 2) == doctest::Approx(0.5));

  std::mt19937_64 rng(3);
  const Matrix s = random_matrix(rng, 3, 3, -4, 4);
  const Matrix plain = masked_softmax(t.constant(s), Matrix::Zero(3, 3)).value();
  CHECK((plain - softmax_rows(t.constant(s)).value()).cwiseAbs().maxCoeff() < 1e-15);
  for (Index i = 0; i < 3; ++i) CHECK(std::abs(plain.row(i).sum() - 1.0) < 1e-12);

  Matrix dead = Matrix::Zero(2, 2);
  dead.row(1).setConstant(kNegInf);
  CHECK_THROWS_AS(masked_softmax(t.constant(Matrix::Zero(2, 2)), dead), TensorError);
}

TEST_CASE("layer_norm examples") {
  Tape t;
  const Var one = t.constant(Matrix::Ones(1, 4)), zero = t.constant(Matrix::Zero(1, 4));
  CHECK(layer_norm(t.constant(Matrix::Constant(1, 4, 3.5)), one, zero).value().cwiseAbs().maxCoeff() == 0.0);
  Matrix x(1, 2);
  x << 1, -1;
  const Matrix y =
      layer_norm(t.constant(x), t.constant(Matrix::Ones(1, 2)), t.constant(Matrix::Zero(1, 2)), 0.0).value();
  CHECK(y(0, 0) == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(y(0, 1) == doctest::Approx(-1.0).epsilon(1e-12));

  std::mt19937_64 rng(4);
  const Matrix in = random_matrix(rng, 3, 6), g = random_matrix(rng, 1, 6), b = random_matrix(rng, 1, 6);
  CHECK(gradient_error([](Tape&, auto& v) { return weighted_sum(layer_norm(v[0], v[1], v[2])); }, {in, g, b}) < 1e-5);
}

TEST_CASE("backward contract") {
  Tape t;
  Matrix w(1, 2);
  w << 1, 2;
  const Var v = t.leaf(w);
  const Var l = sum(mul(v, v));
  t.backward(l);
  CHECK(v.grad()(0, 0) == 2.0);
  CHECK(v.grad()(0, 1) == 4.0);
  CHECK(t.consumed());
  CHECK_THROWS_AS(t.backward(l), TensorError);

  Tape t2;
  CHECK_THROWS_AS(t2.backward(t2.leaf(Matrix::Ones(2, 2))), TensorError);
}

TEST_CASE("parameters accumulate gradients across tapes") {
  Parameter p("w", Matrix::Constant(1, 2, 3.0));
  for (int k = 0; k < 2; ++k) {
    Tape t;
    t.backward(sum(t.param(p)));
  }
  CHECK(p.grad == Matrix::Constant(1, 2, 2.0));
  p.zero_grad();
  CHECK(p.grad.isZero());
}

TEST_CASE("dropout") {
  Tape t;
  t.seed(5);
  const Var x = t.constant(Matrix::Ones(20, 20));
  CHECK(dropout(x, 0.0).value() == x.value());
  const Matrix y = dropout(x, 0.5).value();
  for (Index i = 0; i < y.size(); ++i) CHECK((y.data()[i] == 0.0 || y.data()[i] == 2.0));
  CHECK(y.isZero() == false);
  Tape a, b;
  a.seed(9);
  b.seed(9);
  CHECK(dropout(a.constant(Matrix::Ones(5, 5)), 0.3).value() == dropout(b.constant(Matrix::Ones(5, 5)), 0.3).value());
}

TEST_CASE("check_finite") {
  Matrix m = Matrix::Zero(2, 2);
  CHECK_NOTHROW(check_finite(m, "m"));
  m(0, 1) = kNegInf;
  CHECK_THROWS_AS(check_finite(m, "m"), TensorError);
  CHECK_NOTHROW(check_finite(m, "m", true));
  m(1, 1) = std::nan("");
  CHECK_THROWS_AS(check_finite(m, "m", true), TensorError);
}
