// Copyright 2026 The TEFAL-Retrieval Authors
// SPDX-License-Identifier: Apache-2.0

#include "tefal/ops.h"

#include <algorithm>
#include <cmath>

namespace tefal {

namespace {

DimensionError product_error(const char* op, const Matrix& a, const Matrix& b) {
  return DimensionError(std::string(op) + ": cannot multiply " + a.shape_string() +
                        " by " + b.shape_string());
}

}  // namespace

Matrix add(const Matrix& a, const Matrix& b) {
  require_same_shape(a, b, "add");
  Matrix out = a;
  add_inplace(out, b);
  return out;
}

Matrix subtract(const Matrix& a, const Matrix& b) {
  require_same_shape(a, b, "subtract");
  Matrix out = a;
  axpy_inplace(out, -1.0, b);
  return out;
}

Matrix scale(const Matrix& a, double s) {
  Matrix out = a;
  for (double& v : out.data()) v *= s;
  return out;
}

Matrix hadamard(const Matrix& a, const Matrix& b) {
  require_same_shape(a, b, "hadamard");
  Matrix out = a;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= b[i];
  return out;
}

Matrix transpose(const Matrix& a) {
  Matrix out(a.cols(), a.rows());
  for (std::size_t r = 0; r < a.rows(); ++r)
    for (std::size_t c = 0; c < a.cols(); ++c) out(c, r) = a(r, c);
  return out;
}

void add_inplace(Matrix& acc, const Matrix& b) {
  require_same_shape(acc, b, "add_inplace");
  for (std::size_t i = 0; i < acc.size(); ++i) acc[i] += b[i];
}

void axpy_inplace(Matrix& acc, double alpha, const Matrix& b) {
  require_same_shape(acc, b, "axpy_inplace");
  for (std::size_t i = 0; i < acc.size(); ++i) acc[i] += alpha * b[i];
}

Matrix vstack(const Matrix& top, const Matrix& bottom) {
  if (top.cols() != bottom.cols()) {
    throw DimensionError("vstack: column mismatch " + top.shape_string() + " vs " +
                         bottom.shape_string());
  }
  std::vector<double> data(top.data().begin(), top.data().end());
  data.insert(data.end(), bottom.data().begin(), bottom.data().end());
  return Matrix(top.rows() + bottom.rows(), top.cols(), std::move(data));
}

Matrix hstack(const Matrix& left, const Matrix& right) {
  if (left.rows() != right.rows()) {
    throw DimensionError("hstack: row mismatch " + left.shape_string() + " vs " +
                         right.shape_string());
  }
  Matrix out(left.rows(), left.cols() + right.cols());
  for (std::size_t r = 0; r < left.rows(); ++r) {
    auto dst = out.row(r);
    std::copy(left.row(r).begin(), left.row(r).end(), dst.begin());
    std::copy(right.row(r).begin(), right.row(r).end(), dst.begin() + left.cols());
  }
  return out;
}

Matrix slice_rows(const Matrix& m, std::size_t begin, std::size_t end) {
  if (begin >= end || end > m.rows()) {
    throw DimensionError("slice_rows: bad range [" + std::to_string(begin) + ", " +
                         std::to_string(end) + ") for " + m.shape_string());
  }
  auto first = m.data().begin() + begin * m.cols();
  return Matrix(end - begin, m.cols(),
                std::vector<double>(first, first + (end - begin) * m.cols()));
}

Matrix slice_cols(const Matrix& m, std::size_t begin, std::size_t end) {
  if (begin >= end || end > m.cols()) {
    throw DimensionError("slice_cols: bad range [" + std::to_string(begin) + ", " +
                         std::to_string(end) + ") for " + m.shape_string());
  }
  Matrix out(m.rows(), end - begin);
  for (std::size_t r = 0; r < m.rows(); ++r)
    for (std::size_t c = begin; c < end; ++c) out(r, c - begin) = m(r, c);
  return out;
}

Matrix column_mean(const Matrix& m) {
  Matrix out(1, m.cols());
  for (std::size_t r = 0; r < m.rows(); ++r)
    for (std::size_t c = 0; c < m.cols(); ++c) out(0, c) += m(r, c);
  const double inv = 1.0 / static_cast<double>(m.rows());
  for (double& v : out.data()) v *= inv;
  return out;
}

double dot(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) {
    throw DimensionError("dot: length mismatch " + std::to_string(a.size()) + " vs " +
                         std::to_string(b.size()));
  }
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

double frobenius_norm(const Matrix& m) { return std::sqrt(dot(m.data(), m.data())); }

double sum(const Matrix& m) {
  double s = 0.0;
  for (double v : m.data()) s += v;
  return s;
}

Matrix matmul(const Matrix& a, const Matrix& b) {
  if (a.cols() != b.rows()) throw product_error("matmul", a, b);
  Matrix out(a.rows(), b.cols());
  const std::size_t n = b.cols();
  for (std::size_t i = 0; i < a.rows(); ++i) {
    double* dst = out.row(i).data();
    for (std::size_t k = 0; k < a.cols(); ++k) {
      const double aik = a(i, k);
      const double* src = b.row(k).data();
      for (std::size_t j = 0; j < n; ++j) dst[j] += aik * src[j];
    }
  }
  return out;
}

Matrix matmul_bt(const Matrix& a, const Matrix& b) {
  if (a.cols() != b.cols()) throw product_error("matmul_bt", a, b);
  Matrix out(a.rows(), b.rows());
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < b.rows(); ++j) out(i, j) = dot(a.row(i), b.row(j));
  return out;
}

Matrix matmul_at(const Matrix& a, const Matrix& b) {
  if (a.rows() != b.rows()) throw product_error("matmul_at", a, b);
  Matrix out(a.cols(), b.cols());
  const std::size_t n = b.cols();
  for (std::size_t k = 0; k < a.rows(); ++k) {
    const double* src = b.row(k).data();
    for (std::size_t i = 0; i < a.cols(); ++i) {
      const double aki = a(k, i);
      if (aki == 0.0) continue;
      double* dst = out.row(i).data();
      for (std::size_t j = 0; j < n; ++j) dst[j] += aki * src[j];
    }
  }
  return out;
}

MatmulGrad matmul_backward(const Matrix& a, const Matrix& b, const Matrix& dc) {
  if (a.cols() != b.rows()) throw product_error("matmul_backward", a, b);
  if (dc.rows() != a.rows() || dc.cols() != b.cols()) {
    throw DimensionError("matmul_backward: upstream gradient " + dc.shape_string() +
                         " does not match product shape " + std::to_string(a.rows()) +
                         "x" + std::to_string(b.cols()));
  }
  return {matmul_bt(dc, b), matmul_at(a, dc)};
}

Matrix softmax_rows(const Matrix& m) {
  Matrix out(m.rows(), m.cols());
  for (std::size_t r = 0; r < m.rows(); ++r) {
    auto src = m.row(r);
    auto dst = out.row(r);
    const double mx = *std::max_element(src.begin(), src.end());
    double total = 0.0;
    for (std::size_t c = 0; c < src.size(); ++c) {
      dst[c] = std::exp(src[c] - mx);
      total += dst[c];
    }
    const double inv = 1.0 / total;
    for (double& v : dst) v *= inv;
  }
  return out;
}

Matrix softmax_rows_backward(const Matrix& y, const Matrix& dy) {
  require_same_shape(y, dy, "softmax_rows_backward");
  Matrix dx(y.rows(), y.cols());
  for (std::size_t r = 0; r < y.rows(); ++r) {
    const double inner = dot(y.row(r), dy.row(r));
    for (std::size_t c = 0; c < y.cols(); ++c) dx(r, c) = y(r, c) * (dy(r, c) - inner);
  }
  return dx;
}

LayerNormResult layernorm_rows(const Matrix& m, const Matrix& gain, const Matrix& bias,
                               double eps) {
  if (gain.rows() != 1 || gain.cols() != m.cols() || !gain.same_shape(bias)) {
    throw DimensionError("layernorm_rows: affine " + gain.shape_string() + "/" +
                         bias.shape_string() + " does not fit input " + m.shape_string());
  }
  LayerNormResult res{Matrix(m.rows(), m.cols()), Matrix(m.rows(), m.cols()),
                      Matrix(m.rows(), 1)};
  const double n = static_cast<double>(m.cols());
  for (std::size_t r = 0; r < m.rows(); ++r) {
    auto x = m.row(r);
    double mean = 0.0;
    for (double v : x) mean += v;
    mean /= n;
    double var = 0.0;
    for (double v : x) var += (v - mean) * (v - mean);
    var /= n;
    const double inv_std = 1.0 / std::sqrt(var + eps);
    res.inv_std(r, 0) = inv_std;
    for (std::size_t c = 0; c < m.cols(); ++c) {
      const double xhat = (x[c] - mean) * inv_std;
      res.normalized(r, c) = xhat;
      res.out(r, c) = xhat * gain(0, c) + bias(0, c);
    }
  }
  return res;
}

LayerNormGrad layernorm_rows_backward(const LayerNormResult& fwd, const Matrix& gain,
                                      const Matrix& dy) {
  require_same_shape(fwd.out, dy, "layernorm_rows_backward");
  const std::size_t rows = dy.rows();
  const std::size_t cols = dy.cols();
  LayerNormGrad g{Matrix(rows, cols), Matrix(1, cols), Matrix(1, cols)};
  const double n = static_cast<double>(cols);
  std::vector<double> dxhat(cols);
  for (std::size_t r = 0; r < rows; ++r) {
    double mean_dxhat = 0.0;
    double mean_dxhat_xhat = 0.0;
    for (std::size_t c = 0; c < cols; ++c) {
      const double xhat = fwd.normalized(r, c);
      g.dgain(0, c) += dy(r, c) * xhat;
      g.dbias(0, c) += dy(r, c);
      dxhat[c] = dy(r, c) * gain(0, c);
      mean_dxhat += dxhat[c];
      mean_dxhat_xhat += dxhat[c] * xhat;
    }
    mean_dxhat /= n;
    mean_dxhat_xhat /= n;
    const double inv_std = fwd.inv_std(r, 0);
    for (std::size_t c = 0; c < cols; ++c) {
      g.dx(r, c) = inv_std * (dxhat[c] - mean_dxhat - fwd.normalized(r, c) * mean_dxhat_xhat);
    }
  }
  return g;
}

}  // namespace tefal
