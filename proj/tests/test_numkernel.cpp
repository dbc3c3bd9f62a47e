// Copyright 2026 The TEFAL-Retrieval Authors
// SPDX-License-Identifier: Apache-2.0

#include <cmath>
#include <random>

#include "doctest.h"
#include "tefal/grad_check.h"
#include "tefal/ops.h"
#include "tefal/param_store.h"

using namespace tefal;

namespace {

// Reference product, deliberately the naive i-j-k loop.
Matrix triple_loop(const Matrix& a, const Matrix& b) {
  Matrix c(a.rows(), b.cols());
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < b.cols(); ++j) {
      double s = 0.0;
      for (std::size_t k = 0; k < a.cols(); ++k) s += a(i, k) * b(k, j);
      c(i, j) = s;
    }
  return c;
}

double max_rel_diff(const Matrix& a, const Matrix& b) {
  double worst = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    worst = std::max(worst, std::abs(a[i] - b[i]) / std::max(1.0, std::abs(b[i])));
  }
  return worst;
}

}  // namespace

TEST_CASE("matrix rejects empty shapes and bad data lengths") {
  CHECK_THROWS_AS(Matrix(0, 3), DimensionError);
  CHECK_THROWS_AS(Matrix(2, 2, std::vector<double>{1, 2, 3}), DimensionError);
  Matrix m(2, 3, 1.5);
  CHECK(m.size() == 6);
  CHECK(m(1, 2) == 1.5);
}

TEST_CASE("matmul") {
  std::mt19937_64 rng(1);

  SUBCASE("identity") {
    Matrix m = random_matrix(3, 5, rng);
    CHECK(matmul(Matrix::identity(3), m) == m);
  }
  SUBCASE("hand-evaluated dot product") {
    Matrix a = Matrix::row_vector({1, 2});
    Matrix b(2, 1, std::vector<double>{3, 4});
    Matrix c = matmul(a, b);
    CHECK(c.rows() == 1);
    CHECK(c(0, 0) == 11.0);
  }
  SUBCASE("4x5 by 5x3 matches triple loop") {
    Matrix a = random_matrix(4, 5, rng), b = random_matrix(5, 3, rng);
    CHECK(max_rel_diff(matmul(a, b), triple_loop(a, b)) <= 1e-12);
  }
  SUBCASE("random shapes up to 64x64 match triple loop") {
    std::uniform_int_distribution<std::size_t> dim(1, 64);
    for (int trial = 0; trial < 40; ++trial) {
      Matrix a = random_matrix(dim(rng), dim(rng), rng, 3.0);
      Matrix b = random_matrix(a.cols(), dim(rng), rng, 3.0);
      REQUIRE(max_rel_diff(matmul(a, b), triple_loop(a, b)) <= 1e-12);
      REQUIRE(max_rel_diff(matmul_bt(a, transpose(b)), triple_loop(a, b)) <= 1e-12);
      REQUIRE(max_rel_diff(matmul_at(transpose(a), b), triple_loop(a, b)) <= 1e-12);
    }
  }
  SUBCASE("shape mismatch names both shapes") {
    try {
      matmul(Matrix(2, 3), Matrix(4, 5));
      FAIL("expected DimensionError");
    } catch (const DimensionError& e) {
      const std::string msg = e.what();
      CHECK(msg.find("2x3") != std::string::npos);
      CHECK(msg.find("4x5") != std::string::npos);
    }
  }
}

TEST_CASE("softmax_rows") {
  CHECK(softmax_rows(Matrix::row_vector({-1234.5}))(0, 0) == 1.0);
  CHECK(softmax_rows(Matrix::row_vector({7.0}))(0, 0) == 1.0);

  Matrix u = softmax_rows(Matrix::row_vector({0, 0, 0}));
  for (double v : u.data()) CHECK(v == doctest::Approx(1.0 / 3.0).epsilon(1e-15));

  Matrix s = softmax_rows(Matrix::row_vector({1, 2, 3}));
  const double z = std::exp(1.0) + std::exp(2.0) + std::exp(3.0);
  CHECK(std::abs(s(0, 0) - std::exp(1.0) / z) <= 1e-12);
  CHECK(std::abs(s(0, 1) - std::exp(2.0) / z) <= 1e-12);
  CHECK(std::abs(s(0, 2) - std::exp(3.0) / z) <= 1e-12);

  SUBCASE("rows sum to one, large logits included") {
    std::mt19937_64 rng(2);
    for (int trial = 0; trial < 200; ++trial) {
      Matrix m = random_matrix(3, 1 + trial % 40, rng, trial % 2 ? 500.0 : 5.0);
      Matrix y = softmax_rows(m);
      for (std::size_t r = 0; r < y.rows(); ++r) {
        double total = 0.0;
        for (double v : y.row(r)) total += v;
        REQUIRE(std::abs(total - 1.0) <= 1e-12);
      }
    }
  }
}

TEST_CASE("layernorm_rows") {
  const Matrix ones4(1, 4, 1.0), zeros4(1, 4, 0.0);
  SUBCASE("constant row maps to the bias") {
    LayerNormResult r = layernorm_rows(Matrix::row_vector({5, 5, 5, 5}), ones4, zeros4);
    for (double v : r.out.data()) CHECK(v == 0.0);
    Matrix bias = Matrix::row_vector({0.1, -0.2, 0.3, 0.4});
    CHECK(layernorm_rows(Matrix::row_vector({5, 5, 5, 5}), ones4, bias).out == bias);
  }
  SUBCASE("closed form for [1, -1]") {
    LayerNormResult r =
        layernorm_rows(Matrix::row_vector({1, -1}), Matrix(1, 2, 1.0), Matrix(1, 2, 0.0));
    const double a = 1.0 / std::sqrt(1.0 + kLayerNormEps);
    CHECK(std::abs(r.out(0, 0) - a) <= 1e-15);
    CHECK(std::abs(r.out(0, 1) + a) <= 1e-15);
  }
  SUBCASE("pre-affine rows have zero mean and unit variance") {
    std::mt19937_64 rng(3);
    for (int trial = 0; trial < 100; ++trial) {
      Matrix x = random_matrix(4, 16, rng, 10.0);
      LayerNormResult r = layernorm_rows(x, random_matrix(1, 16, rng), random_matrix(1, 16, rng));
      for (std::size_t row = 0; row < 4; ++row) {
        double mean = 0.0, var = 0.0;
        for (double v : r.normalized.row(row)) mean += v;
        mean /= 16.0;
        for (double v : r.normalized.row(row)) var += (v - mean) * (v - mean);
        var /= 16.0;
        REQUIRE(std::abs(mean) <= 1e-12);
        REQUIRE(std::abs(var - 1.0) <= 1e-6);
      }
    }
  }
  CHECK_THROWS_AS(layernorm_rows(Matrix(2, 3), Matrix(1, 4), Matrix(1, 4)), DimensionError);
}

TEST_CASE("grad_check of primitives") {
  std::mt19937_64 rng(4);
  SUBCASE("matmul 3x4 * 4x2") {
    const Matrix pt[] = {random_matrix(3, 4, rng), random_matrix(4, 2, rng)};
    CHECK(grad_check("matmul", pt, 1e-5) < 1e-4);
  }
  SUBCASE("softmax_rows 2x5") {
    const Matrix pt[] = {random_matrix(2, 5, rng, 2.0)};
    CHECK(grad_check("softmax_rows", pt, 1e-5) < 1e-4);
  }
  SUBCASE("layernorm_rows 2x8") {
    const Matrix pt[] = {random_matrix(2, 8, rng, 2.0), random_matrix(1, 8, rng),
                         random_matrix(1, 8, rng)};
    CHECK(grad_check("layernorm_rows", pt, 1e-5) < 1e-4);
  }
  SUBCASE("many random points") {
    for (int trial = 0; trial < 20; ++trial) {
      const Matrix mm[] = {random_matrix(5, 6, rng), random_matrix(6, 3, rng)};
      const Matrix sm[] = {random_matrix(3, 7, rng, 3.0)};
      const Matrix ln[] = {random_matrix(3, 9, rng, 3.0), random_matrix(1, 9, rng),
                           random_matrix(1, 9, rng)};
      REQUIRE(grad_check(GradOp::kMatmul, mm, 1e-5, trial) < 1e-4);
      REQUIRE(grad_check(GradOp::kSoftmaxRows, sm, 1e-5, trial) < 1e-4);
      REQUIRE(grad_check(GradOp::kLayerNormRows, ln, 1e-5, trial) < 1e-4);
    }
  }
  SUBCASE("unknown op") {
    const Matrix pt[] = {Matrix(1, 1)};
    CHECK_THROWS_AS(grad_check("conv2d", pt, 1e-5), std::invalid_argument);
  }
  SUBCASE("a wrong gradient is caught") {
    auto f = [](std::span<const Matrix> x) { return x[0][0] * x[0][0]; };
    const Matrix point[] = {Matrix(1, 1, 3.0)};
    const Matrix wrong[] = {Matrix(1, 1, 5.0)};
    CHECK(finite_difference_check(f, point, wrong, 1e-5) > 0.1);
  }
}

TEST_CASE("ParamStore") {
  ParamStore store;
  store.add("b", Matrix(2, 2, 1.0));
  store.add("a", Matrix(1, 3, 2.0));
  CHECK_THROWS(store.add("a", Matrix(1, 1)));
  CHECK(store.names() == std::vector<std::string>{"a", "b"});
  CHECK(store.grad("b").same_shape(store.value("b")));
  store.accumulate("b", Matrix(2, 2, 0.25));
  CHECK_THROWS_AS(store.accumulate("b", Matrix(1, 2)), DimensionError);
  CHECK(store.grad_norm() == doctest::Approx(0.5));
  store.zero_grad();
  store.for_each([](const std::string&, const Matrix&, const Matrix& g) {
    for (double v : g.data()) CHECK(v == 0.0);
  });
  CHECK(store.scalar_count() == 7);
  CHECK_THROWS_AS(store.value("missing"), std::out_of_range);
}
