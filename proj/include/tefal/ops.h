// Copyright 2026 The TEFAL-Retrieval Authors
// SPDX-License-Identifier: Apache-2.0
//
// Dense primitives with explicit backward rules. The model layers above
// compose these by hand; there is no tape.

#pragma once

#include "tefal/matrix.h"

namespace tefal {

inline constexpr double kLayerNormEps = 1e-5;

// ---------------------------------------------------------------------------
// Elementwise / structural helpers.

Matrix add(const Matrix& a, const Matrix& b);
Matrix subtract(const Matrix& a, const Matrix& b);
Matrix scale(const Matrix& a, double s);
Matrix hadamard(const Matrix& a, const Matrix& b);
Matrix transpose(const Matrix& a);
void add_inplace(Matrix& acc, const Matrix& b);
void axpy_inplace(Matrix& acc, double alpha, const Matrix& b);

/// Stacks the rows of top above the rows of bottom.
Matrix vstack(const Matrix& top, const Matrix& bottom);
/// Horizontal concatenation [left, right].
Matrix hstack(const Matrix& left, const Matrix& right);
Matrix slice_rows(const Matrix& m, std::size_t begin, std::size_t end);
Matrix slice_cols(const Matrix& m, std::size_t begin, std::size_t end);

/// 1 x cols mean over rows.
Matrix column_mean(const Matrix& m);

double dot(std::span<const double> a, std::span<const double> b);
double frobenius_norm(const Matrix& m);
double sum(const Matrix& m);

// ---------------------------------------------------------------------------
// matmul: C = A B. Backward: dA = dC B^T, dB = A^T dC.

Matrix matmul(const Matrix& a, const Matrix& b);
/// A B^T without materializing the transpose.
Matrix matmul_bt(const Matrix& a, const Matrix& b);
/// A^T B without materializing the transpose.
Matrix matmul_at(const Matrix& a, const Matrix& b);

struct MatmulGrad {
  Matrix da;
  Matrix db;
};
MatmulGrad matmul_backward(const Matrix& a, const Matrix& b, const Matrix& dc);

// ---------------------------------------------------------------------------
// Row softmax with max subtraction. Backward uses the output y:
// dx = y * (dy - <dy, y>) per row.

Matrix softmax_rows(const Matrix& m);
Matrix softmax_rows_backward(const Matrix& y, const Matrix& dy);

// ---------------------------------------------------------------------------
// Row LayerNorm: y = (x - mean) / sqrt(var + eps) * gain + bias, with the
// biased variance. gain and bias are 1 x cols.

struct LayerNormResult {
  Matrix out;
  Matrix normalized;    // pre-affine rows
  Matrix inv_std;       // rows x 1
};

LayerNormResult layernorm_rows(const Matrix& m, const Matrix& gain, const Matrix& bias,
                               double eps = kLayerNormEps);

struct LayerNormGrad {
  Matrix dx;
  Matrix dgain;
  Matrix dbias;
};

LayerNormGrad layernorm_rows_backward(const LayerNormResult& fwd, const Matrix& gain,
                                      const Matrix& dy);

}  // namespace tefal
