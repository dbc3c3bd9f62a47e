// Copyright 2026 The TEFAL-Retrieval Authors
// SPDX-License-Identifier: Apache-2.0

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "doctest.h"
#include "tefal/diagnostics.h"
#include "tefal/grad_check.h"
#include "tefal/xattn.h"

using namespace tefal;

namespace {

// Step-by-step evaluation of the block with plain loops, sharing no code
// with the library beyond the Matrix container.
std::vector<double> ln_row(const std::vector<double>& x, const Matrix& gain, const Matrix& bias) {
  const double n = static_cast<double>(x.size());
  double mean = std::accumulate(x.begin(), x.end(), 0.0) / n;
  double var = 0.0;
  for (double v : x) var += (v - mean) * (v - mean);
  var /= n;
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    out[i] = (x[i] - mean) / std::sqrt(var + 1e-5) * gain(0, i) + bias(0, i);
  }
  return out;
}

std::vector<double> row_times(const std::vector<double>& x, const Matrix& w) {
  std::vector<double> out(w.cols(), 0.0);
  for (std::size_t j = 0; j < w.cols(); ++j)
    for (std::size_t k = 0; k < x.size(); ++k) out[j] += x[k] * w(k, j);
  return out;
}

std::vector<double> get_row(const Matrix& m, std::size_t r) {
  return {m.row(r).begin(), m.row(r).end()};
}

struct Reference {
  std::vector<double> q;
  std::vector<std::vector<double>> k, v;
  std::vector<double> weights, pooled, out;
};

Reference reference_block(const XAttnParams& p, const Matrix& text, const Matrix& ctx) {
  Reference r;
  r.q = row_times(ln_row(get_row(text, 0), p.ln_query_gain, p.ln_query_bias), p.w_q);
  for (std::size_t i = 0; i < ctx.rows(); ++i) {
    auto normed = ln_row(get_row(ctx, i), p.ln_context_gain, p.ln_context_bias);
    r.k.push_back(row_times(normed, p.w_k));
    r.v.push_back(row_times(normed, p.w_v));
  }
  std::vector<double> logits;
  for (const auto& k : r.k) {
    double s = 0.0;
    for (std::size_t c = 0; c < k.size(); ++c) s += r.q[c] * k[c];
    logits.push_back(s / std::sqrt(static_cast<double>(p.proj_dim)));
  }
  double z = 0.0;
  for (double l : logits) z += std::exp(l);
  for (double l : logits) r.weights.push_back(std::exp(l) / z);
  r.pooled.assign(p.proj_dim, 0.0);
  for (std::size_t i = 0; i < r.v.size(); ++i)
    for (std::size_t c = 0; c < p.proj_dim; ++c) r.pooled[c] += r.weights[i] * r.v[i][c];
  r.out = ln_row(row_times(r.pooled, p.w_o), p.ln_out_gain, p.ln_out_bias);
  return r;
}

XAttnParams perturbed_params(std::size_t d, std::size_t dp, std::mt19937_64& rng) {
  XAttnParams p = XAttnParams::init(d, dp, rng);
  p.ln_query_gain = random_matrix(1, d, rng, 2.0);
  p.ln_query_bias = random_matrix(1, d, rng, 0.5);
  p.ln_context_gain = random_matrix(1, d, rng, 2.0);
  p.ln_context_bias = random_matrix(1, d, rng, 0.5);
  p.ln_out_gain = random_matrix(1, dp, rng, 2.0);
  p.ln_out_bias = random_matrix(1, dp, rng, 0.5);
  return p;
}

Matrix permute_rows(const Matrix& m, const std::vector<std::size_t>& perm) {
  Matrix out(m.rows(), m.cols());
  for (std::size_t r = 0; r < m.rows(); ++r)
    std::copy(m.row(perm[r]).begin(), m.row(perm[r]).end(), out.row(r).begin());
  return out;
}

}  // namespace

TEST_CASE("project") {
  std::mt19937_64 rng(10);
  SUBCASE("identity weights give the standardized text row") {
    XAttnParams p = XAttnParams::init(4, 4, rng);
    p.w_q = p.w_k = p.w_v = Matrix::identity(4);
    Matrix text = Matrix::row_vector({1, 2, 3, 4});
    Projection pr = project(p, text, random_matrix(2, 4, rng));
    auto expected = ln_row(get_row(text, 0), Matrix(1, 4, 1.0), Matrix(1, 4, 0.0));
    for (std::size_t c = 0; c < 4; ++c) CHECK(pr.q(0, c) == doctest::Approx(expected[c]).epsilon(1e-14));
  }
  SUBCASE("zero context rows project the context bias") {
    XAttnParams p = XAttnParams::init(4, 4, rng);
    p.w_k = p.w_v = Matrix::identity(4);
    p.ln_context_bias = Matrix::row_vector({0.5, -1, 2, 0});
    Projection pr = project(p, random_matrix(1, 4, rng), Matrix(3, 4));
    for (std::size_t r = 0; r < 3; ++r) {
      for (std::size_t c = 0; c < 4; ++c) {
        CHECK(pr.k(r, c) == p.ln_context_bias(0, c));
        CHECK(pr.v(r, c) == p.ln_context_bias(0, c));
      }
    }
  }
  SUBCASE("D=8, D_p=4 matches the loop reference") {
    XAttnParams p = perturbed_params(8, 4, rng);
    Matrix text = random_matrix(1, 8, rng), ctx = random_matrix(6, 8, rng);
    Projection pr = project(p, text, ctx);
    Reference ref = reference_block(p, text, ctx);
    for (std::size_t c = 0; c < 4; ++c) CHECK(std::abs(pr.q(0, c) - ref.q[c]) <= 1e-12);
    for (std::size_t r = 0; r < 6; ++r) {
      for (std::size_t c = 0; c < 4; ++c) {
        CHECK(std::abs(pr.k(r, c) - ref.k[r][c]) <= 1e-12);
        CHECK(std::abs(pr.v(r, c) - ref.v[r][c]) <= 1e-12);
      }
    }
  }
  SUBCASE("width mismatch") {
    XAttnParams p = XAttnParams::init(4, 4, rng);
    CHECK_THROWS_AS(project(p, Matrix(1, 5), Matrix(2, 4)), DimensionError);
    CHECK_THROWS_AS(project(p, Matrix(1, 4), Matrix(2, 3)), DimensionError);
    CHECK_THROWS_AS(project(p, Matrix(2, 4), Matrix(2, 4)), DimensionError);
  }
}

TEST_CASE("attend") {
  std::mt19937_64 rng(11);
  SUBCASE("single key") {
    Matrix v = random_matrix(1, 3, rng);
    Attention a = attend(random_matrix(1, 3, rng), random_matrix(1, 3, rng), v);
    CHECK(a.weights(0, 0) == 1.0);
    CHECK(a.pooled == v);
  }
  SUBCASE("identical keys give uniform weights and the mean value") {
    Matrix k(4, 3);
    for (std::size_t r = 0; r < 4; ++r) k.row(r)[0] = 0.3, k.row(r)[1] = -1.0, k.row(r)[2] = 2.0;
    Matrix v = random_matrix(4, 3, rng);
    Attention a = attend(random_matrix(1, 3, rng), k, v);
    for (double w : a.weights.data()) CHECK(std::abs(w - 0.25) <= 1e-15);
    for (std::size_t c = 0; c < 3; ++c) {
      const double mean = (v(0, c) + v(1, c) + v(2, c) + v(3, c)) / 4.0;
      CHECK(std::abs(a.pooled(0, c) - mean) <= 1e-15);
    }
  }
  SUBCASE("n=3, D_p=2 equals softmax(QK^T/sqrt 2) V") {
    Matrix q = random_matrix(1, 2, rng), k = random_matrix(3, 2, rng), v = random_matrix(3, 2, rng);
    Attention a = attend(q, k, v);
    double l[3], z = 0.0;
    for (int r = 0; r < 3; ++r) {
      l[r] = (q(0, 0) * k(r, 0) + q(0, 1) * k(r, 1)) / std::sqrt(2.0);
      z += std::exp(l[r]);
    }
    for (int c = 0; c < 2; ++c) {
      double pooled = 0.0;
      for (int r = 0; r < 3; ++r) pooled += std::exp(l[r]) / z * v(r, c);
      CHECK(std::abs(a.pooled(0, c) - pooled) <= 1e-12);
    }
    for (int r = 0; r < 3; ++r) CHECK(std::abs(a.weights(0, r) - std::exp(l[r]) / z) <= 1e-12);
  }
  CHECK_THROWS_AS(attend(Matrix(1, 2), Matrix(3, 2), Matrix(2, 2)), DimensionError);
}

TEST_CASE("conditioned_embedding") {
  std::mt19937_64 rng(12);
  SUBCASE("matches the loop reference") {
    for (int trial = 0; trial < 10; ++trial) {
      XAttnParams p = perturbed_params(6, 5, rng);
      Matrix text = random_matrix(1, 6, rng), ctx = random_matrix(1 + trial, 6, rng, 2.0);
      Matrix out = conditioned_embedding(p, text, ctx);
      Reference ref = reference_block(p, text, ctx);
      for (std::size_t c = 0; c < 5; ++c) REQUIRE(std::abs(out(0, c) - ref.out[c]) <= 1e-10);
    }
  }
  SUBCASE("joint row permutation is bit-identical") {
    XAttnParams p = perturbed_params(8, 8, rng);
    Matrix text = random_matrix(1, 8, rng), ctx = random_matrix(12, 8, rng);
    std::vector<std::size_t> perm(12);
    std::iota(perm.begin(), perm.end(), 0);
    const Matrix base = conditioned_embedding(p, text, ctx);
    for (int trial = 0; trial < 20; ++trial) {
      std::shuffle(perm.begin(), perm.end(), rng);
      REQUIRE(conditioned_embedding(p, text, permute_rows(ctx, perm)) == base);
    }
  }
  SUBCASE("single context row ignores W_Q and W_K") {
    XAttnParams p = perturbed_params(5, 5, rng);
    Matrix text = random_matrix(1, 5, rng), ctx = random_matrix(1, 5, rng);
    Matrix out = conditioned_embedding(p, text, ctx);
    XAttnParams other = p;
    other.w_q = random_matrix(5, 5, rng);
    other.w_k = random_matrix(5, 5, rng);
    CHECK(conditioned_embedding(other, text, ctx) == out);
    // LN(LN(v) W_V W_O)
    auto expected = ln_row(row_times(row_times(ln_row(get_row(ctx, 0), p.ln_context_gain,
                                                      p.ln_context_bias),
                                               p.w_v),
                                     p.w_o),
                           p.ln_out_gain, p.ln_out_bias);
    for (std::size_t c = 0; c < 5; ++c) CHECK(std::abs(out(0, c) - expected[c]) <= 1e-12);
  }
  SUBCASE("unit-gain zero-bias output has zero row mean") {
    for (int trial = 0; trial < 50; ++trial) {
      XAttnParams p = XAttnParams::init(8, 8, rng);
      Matrix out = conditioned_embedding(p, random_matrix(1, 8, rng), random_matrix(7, 8, rng));
      double mean = 0.0;
      for (double v : out.data()) mean += v;
      REQUIRE(std::abs(mean / 8.0) <= 1e-12);
    }
  }
  SUBCASE("gradient w.r.t. every parameter") {
    for (int trial = 0; trial < 5; ++trial) {
      XAttnParams p = perturbed_params(8, 4, rng);
      REQUIRE(xattn_grad_check(p, random_matrix(1, 8, rng), random_matrix(3 + trial, 8, rng),
                               1e-5, trial) < 1e-4);
    }
  }
  SUBCASE("output affine can be frozen") {
    XAttnParams p = XAttnParams::init(4, 4, rng, /*output_affine=*/false);
    ParamStore store;
    p.register_in(store, "blk");
    CHECK_FALSE(store.contains("blk.ln_out_gain"));
    CHECK(store.contains("blk.w_o"));
    XAttnParams back = XAttnParams::from_store(store, "blk", false);
    CHECK(back.ln_out_gain == Matrix(1, 4, 1.0));
  }
}

TEST_CASE("export_attention_weights") {
  std::mt19937_64 rng(13);
  XAttnParams p = XAttnParams::init(8, 8, rng);
  Matrix text = random_matrix(1, 8, rng);
  CHECK(export_attention_weights(p, text, random_matrix(1, 8, rng))(0, 0) == 1.0);

  Matrix w = export_attention_weights(p, text, random_matrix(1212, 8, rng));
  CHECK(w.cols() == 1212);
  double total = 0.0;
  for (double v : w.data()) total += v;
  CHECK(std::abs(total - 1.0) <= 1e-12);

  // Shifting every logit by a constant leaves softmax weights unchanged.
  Matrix q = random_matrix(1, 4, rng), k = random_matrix(6, 4, rng), v = random_matrix(6, 4, rng);
  Attention base = attend(q, k, v);
  Matrix logits = matmul_bt(q, k);
  Matrix shifted = softmax_rows(scale(add(logits, Matrix(1, 6, 3.7 * 2.0)), 0.5));
  Matrix plain = softmax_rows(scale(logits, 0.5));
  for (std::size_t r = 0; r < 6; ++r) CHECK(std::abs(shifted(0, r) - plain(0, r)) <= 1e-12);
  for (std::size_t r = 0; r < 6; ++r) CHECK(std::abs(base.weights(0, r) - plain(0, r)) <= 1e-12);
}
