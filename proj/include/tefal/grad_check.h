// Copyright 2026 The TEFAL-Retrieval Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string_view>
#include <vector>

#include "tefal/matrix.h"

namespace tefal {

/// Primitive operations with a built-in finite-difference check.
enum class GradOp { kMatmul, kSoftmaxRows, kLayerNormRows };

/// Accepts "matmul", "softmax_rows", "layernorm_rows"; throws otherwise.
GradOp parse_grad_op(std::string_view id);
std::string_view grad_op_name(GradOp op);

/// Relative error used by every gradient check in the project:
/// |a - n| / max(|a|, |n|, floor). The floor keeps coordinates whose true
/// gradient is ~0 from reporting roundoff as relative error.
inline constexpr double kRelativeErrorFloor = 1e-6;
double relative_error(double analytic, double numeric);

using ScalarFn = std::function<double(std::span<const Matrix>)>;

/// Central finite differences of f around point, coordinate by coordinate,
/// compared against analytic (one gradient per input, same shapes).
/// Returns the max relative error over all coordinates.
double finite_difference_check(const ScalarFn& f, std::span<const Matrix> point,
                               std::span<const Matrix> analytic, double step);

/// Checks op's backward rule at point using the scalar objective
/// sum(R .* op(point)) for a fixed random R derived from seed.
/// matmul expects {A, B}; softmax_rows {X}; layernorm_rows {X, gain, bias}.
double grad_check(GradOp op, std::span<const Matrix> point, double step,
                  std::uint64_t seed = 7);
double grad_check(std::string_view op_id, std::span<const Matrix> point, double step,
                  std::uint64_t seed = 7);

/// Uniform random matrix in [-scale, scale], reproducible from the engine.
template <typename Rng>
Matrix random_matrix(std::size_t rows, std::size_t cols, Rng& rng, double scale = 1.0);

}  // namespace tefal

#include <random>

namespace tefal {

template <typename Rng>
Matrix random_matrix(std::size_t rows, std::size_t cols, Rng& rng, double scale) {
  std::uniform_real_distribution<double> dist(-scale, scale);
  Matrix m(rows, cols);
  for (double& v : m.data()) v = dist(rng);
  return m;
}

}  // namespace tefal
