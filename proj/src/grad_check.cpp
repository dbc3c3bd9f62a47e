// Copyright 2026 The TEFAL-Retrieval Authors
// SPDX-License-Identifier: Apache-2.0

#include "tefal/grad_check.h"

#include <algorithm>
#include <cmath>
#include <random>
#include <stdexcept>
#include <string>

#include "tefal/ops.h"

namespace tefal {

GradOp parse_grad_op(std::string_view id) {
  if (id == "matmul") return GradOp::kMatmul;
  if (id == "softmax_rows") return GradOp::kSoftmaxRows;
  if (id == "layernorm_rows") return GradOp::kLayerNormRows;
  throw std::invalid_argument("unknown gradient-check op '" + std::string(id) + "'");
}

std::string_view grad_op_name(GradOp op) {
  switch (op) {
    case GradOp::kMatmul: return "matmul";
    case GradOp::kSoftmaxRows: return "softmax_rows";
    case GradOp::kLayerNormRows: return "layernorm_rows";
  }
  return "?";
}

double relative_error(double analytic, double numeric) {
  const double denom = std::max({std::abs(analytic), std::abs(numeric), kRelativeErrorFloor});
  return std::abs(analytic - numeric) / denom;
}

double finite_difference_check(const ScalarFn& f, std::span<const Matrix> point,
                               std::span<const Matrix> analytic, double step) {
  if (step <= 0.0) throw std::invalid_argument("finite_difference_check: step must be > 0");
  if (point.size() != analytic.size()) {
    throw std::invalid_argument("finite_difference_check: expected one gradient per input");
  }
  std::vector<Matrix> probe(point.begin(), point.end());
  double worst = 0.0;
  for (std::size_t p = 0; p < probe.size(); ++p) {
    require_same_shape(probe[p], analytic[p], "finite_difference_check");
    for (std::size_t i = 0; i < probe[p].size(); ++i) {
      const double saved = probe[p][i];
      probe[p][i] = saved + step;
      const double up = f(probe);
      probe[p][i] = saved - step;
      const double down = f(probe);
      probe[p][i] = saved;
      const double numeric = (up - down) / (2.0 * step);
      worst = std::max(worst, relative_error(analytic[p][i], numeric));
    }
  }
  return worst;
}

double grad_check(GradOp op, std::span<const Matrix> point, double step, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  auto expect_inputs = [&](std::size_t n) {
    if (point.size() != n) {
      throw std::invalid_argument("grad_check(" + std::string(grad_op_name(op)) + "): expected " +
                                  std::to_string(n) + " inputs, got " +
                                  std::to_string(point.size()));
    }
  };

  switch (op) {
    case GradOp::kMatmul: {
      expect_inputs(2);
      const Matrix weights = random_matrix(point[0].rows(), point[1].cols(), rng);
      auto f = [&](std::span<const Matrix> x) {
        return dot(weights.data(), matmul(x[0], x[1]).data());
      };
      auto g = matmul_backward(point[0], point[1], weights);
      const Matrix analytic[] = {g.da, g.db};
      return finite_difference_check(f, point, analytic, step);
    }
    case GradOp::kSoftmaxRows: {
      expect_inputs(1);
      const Matrix weights = random_matrix(point[0].rows(), point[0].cols(), rng);
      auto f = [&](std::span<const Matrix> x) {
        return dot(weights.data(), softmax_rows(x[0]).data());
      };
      const Matrix analytic[] = {softmax_rows_backward(softmax_rows(point[0]), weights)};
      return finite_difference_check(f, point, analytic, step);
    }
    case GradOp::kLayerNormRows: {
      expect_inputs(3);
      const Matrix weights = random_matrix(point[0].rows(), point[0].cols(), rng);
      auto f = [&](std::span<const Matrix> x) {
        return dot(weights.data(), layernorm_rows(x[0], x[1], x[2]).out.data());
      };
      auto fwd = layernorm_rows(point[0], point[1], point[2]);
      auto g = layernorm_rows_backward(fwd, point[1], weights);
      const Matrix analytic[] = {g.dx, g.dgain, g.dbias};
      return finite_difference_check(f, point, analytic, step);
    }
  }
  throw std::invalid_argument("grad_check: unhandled op");
}

double grad_check(std::string_view op_id, std::span<const Matrix> point, double step,
                  std::uint64_t seed) {
  return grad_check(parse_grad_op(op_id), point, step, seed);
}

}  // namespace tefal
