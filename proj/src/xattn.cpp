// Copyright 2026 The TEFAL-Retrieval Authors
// SPDX-License-Identifier: Apache-2.0

#include "tefal/xattn.h"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "tefal/grad_check.h"

namespace tefal {

namespace {

void require_rows_of(const Matrix& m, std::size_t cols, const char* what) {
  if (m.empty() || m.cols() != cols) {
    throw DimensionError(std::string("xattn: ") + what + " has shape " + m.shape_string() +
                         ", expected " + std::to_string(cols) + " columns");
  }
}

std::vector<std::size_t> canonical_order(const Matrix& k, const Matrix& v) {
  std::vector<std::size_t> order(k.rows());
  std::iota(order.begin(), order.end(), 0);
  auto less = [&](std::size_t a, std::size_t b) {
    auto ka = k.row(a), kb = k.row(b);
    if (!std::equal(ka.begin(), ka.end(), kb.begin())) {
      return std::lexicographical_compare(ka.begin(), ka.end(), kb.begin(), kb.end());
    }
    auto va = v.row(a), vb = v.row(b);
    return std::lexicographical_compare(va.begin(), va.end(), vb.begin(), vb.end());
  };
  std::sort(order.begin(), order.end(), less);
  return order;
}

Attention attend_ordered(const Matrix& q, const Matrix& k, const Matrix& v,
                         const std::vector<std::size_t>& order) {
  const std::size_t n = k.rows();
  const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(q.cols()));
  Matrix weights(1, n);
  double mx = -std::numeric_limits<double>::infinity();
  for (std::size_t r = 0; r < n; ++r) {
    weights(0, r) = dot(q.row(0), k.row(r)) * inv_sqrt;
    mx = std::max(mx, weights(0, r));
  }
  double total = 0.0;
  for (std::size_t r : order) {
    weights(0, r) = std::exp(weights(0, r) - mx);
    total += weights(0, r);
  }
  const double inv_total = 1.0 / total;
  for (double& w : weights.data()) w *= inv_total;

  Matrix pooled(1, v.cols());
  double* dst = pooled.row(0).data();
  for (std::size_t r : order) {
    const double w = weights(0, r);
    const double* src = v.row(r).data();
    for (std::size_t c = 0; c < v.cols(); ++c) dst[c] += w * src[c];
  }
  return {std::move(pooled), std::move(weights)};
}

}  // namespace

XAttnParams XAttnParams::init(std::size_t dim, std::size_t proj_dim, std::mt19937_64& rng,
                              bool output_affine) {
  if (dim == 0 || proj_dim == 0) throw DimensionError("xattn: dimensions must be positive");
  const double bound = 1.0 / std::sqrt(static_cast<double>(dim));
  XAttnParams p;
  p.dim = dim;
  p.proj_dim = proj_dim;
  p.output_affine = output_affine;
  p.w_q = random_matrix(dim, proj_dim, rng, bound);
  p.w_k = random_matrix(dim, proj_dim, rng, bound);
  p.w_v = random_matrix(dim, proj_dim, rng, bound);
  p.w_o = random_matrix(proj_dim, proj_dim, rng, bound);
  p.ln_query_gain = Matrix(1, dim, 1.0);
  p.ln_query_bias = Matrix(1, dim, 0.0);
  p.ln_context_gain = Matrix(1, dim, 1.0);
  p.ln_context_bias = Matrix(1, dim, 0.0);
  p.ln_out_gain = Matrix(1, proj_dim, 1.0);
  p.ln_out_bias = Matrix(1, proj_dim, 0.0);
  return p;
}

XAttnParams XAttnParams::zeros_like(const XAttnParams& p) {
  XAttnParams z = p;
  auto zero = [](const char*, Matrix& m) { m.fill(0.0); };
  visit(z, zero);
  if (!z.output_affine) {
    z.ln_out_gain.fill(0.0);
    z.ln_out_bias.fill(0.0);
  }
  return z;
}

void XAttnParams::validate() const {
  auto expect = [](const Matrix& m, std::size_t r, std::size_t c, const char* name) {
    if (m.rows() != r || m.cols() != c) {
      throw DimensionError(std::string("xattn: ") + name + " has shape " + m.shape_string() +
                           ", expected " + std::to_string(r) + "x" + std::to_string(c));
    }
  };
  expect(w_q, dim, proj_dim, "w_q");
  expect(w_k, dim, proj_dim, "w_k");
  expect(w_v, dim, proj_dim, "w_v");
  expect(w_o, proj_dim, proj_dim, "w_o");
  expect(ln_query_gain, 1, dim, "ln_query_gain");
  expect(ln_query_bias, 1, dim, "ln_query_bias");
  expect(ln_context_gain, 1, dim, "ln_context_gain");
  expect(ln_context_bias, 1, dim, "ln_context_bias");
  expect(ln_out_gain, 1, proj_dim, "ln_out_gain");
  expect(ln_out_bias, 1, proj_dim, "ln_out_bias");
}

void XAttnParams::register_in(ParamStore& store, const std::string& prefix) const {
  visit(*this, [&](const char* field, const Matrix& m) { store.add(prefix + "." + field, m); });
}

XAttnParams XAttnParams::from_store(const ParamStore& store, const std::string& prefix,
                                    bool output_affine) {
  XAttnParams p;
  p.output_affine = output_affine;
  visit(p, [&](const char* field, Matrix& m) { m = store.value(prefix + "." + field); });
  p.dim = p.w_q.rows();
  p.proj_dim = p.w_q.cols();
  if (!output_affine) {
    p.ln_out_gain = Matrix(1, p.proj_dim, 1.0);
    p.ln_out_bias = Matrix(1, p.proj_dim, 0.0);
  }
  p.validate();
  return p;
}

void XAttnParams::accumulate_into(ParamStore& store, const std::string& prefix) const {
  visit(*this, [&](const char* field, const Matrix& m) { store.accumulate(prefix + "." + field, m); });
}

Projection project(const XAttnParams& params, const Matrix& text, const Matrix& context) {
  QueryState q = encode_query(params, text);
  ContextState c = encode_context(params, context);
  return {std::move(q.q), std::move(c.k), std::move(c.v)};
}

Attention attend(const Matrix& q, const Matrix& k, const Matrix& v) {
  if (q.rows() != 1 || k.cols() != q.cols() || !k.same_shape(v)) {
    throw DimensionError("attend: incompatible shapes Q " + q.shape_string() + ", K " +
                         k.shape_string() + ", V " + v.shape_string());
  }
  return attend_ordered(q, k, v, canonical_order(k, v));
}

Matrix conditioned_embedding(const XAttnParams& params, const Matrix& text,
                             const Matrix& context) {
  return attend_pair(params, encode_query(params, text), encode_context(params, context))
      .ln_out.out;
}

Matrix export_attention_weights(const XAttnParams& params, const Matrix& text,
                                const Matrix& context) {
  const QueryState q = encode_query(params, text);
  const ContextState c = encode_context(params, context);
  return attend_ordered(q.q, c.k, c.v, c.order).weights;
}

QueryState encode_query(const XAttnParams& params, const Matrix& text) {
  require_rows_of(text, params.dim, "text");
  if (text.rows() != 1) {
    throw DimensionError("xattn: text query must be a single row, got " + text.shape_string());
  }
  QueryState s{layernorm_rows(text, params.ln_query_gain, params.ln_query_bias), Matrix()};
  s.q = matmul(s.ln.out, params.w_q);
  return s;
}

ContextState encode_context(const XAttnParams& params, const Matrix& context) {
  require_rows_of(context, params.dim, "context");
  ContextState s{layernorm_rows(context, params.ln_context_gain, params.ln_context_bias),
                 Matrix(), Matrix(), {}};
  s.k = matmul(s.ln.out, params.w_k);
  s.v = matmul(s.ln.out, params.w_v);
  s.order = canonical_order(s.k, s.v);
  return s;
}

PairState attend_pair(const XAttnParams& params, const QueryState& query,
                      const ContextState& context) {
  PairState s;
  s.attention = attend_ordered(query.q, context.k, context.v, context.order);
  s.projected = matmul(s.attention.pooled, params.w_o);
  s.ln_out = layernorm_rows(s.projected, params.ln_out_gain, params.ln_out_bias);
  return s;
}

PairGrad backward_pair(const XAttnParams& params, const QueryState& query,
                       const ContextState& context, const PairState& pair,
                       const Matrix& d_out, XAttnParams& grads) {
  LayerNormGrad ln = layernorm_rows_backward(pair.ln_out, params.ln_out_gain, d_out);
  if (params.output_affine) {
    add_inplace(grads.ln_out_gain, ln.dgain);
    add_inplace(grads.ln_out_bias, ln.dbias);
  }
  MatmulGrad out_proj = matmul_backward(pair.attention.pooled, params.w_o, ln.dx);
  add_inplace(grads.w_o, out_proj.db);
  const Matrix& d_pooled = out_proj.da;

  const Matrix& w = pair.attention.weights;
  // pooled = w V
  Matrix d_w = matmul_bt(d_pooled, context.v);
  Matrix d_v = matmul_at(w, d_pooled);
  Matrix d_logits = softmax_rows_backward(w, d_w);
  const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(params.proj_dim));
  for (double& x : d_logits.data()) x *= inv_sqrt;
  // logits = Q K^T
  Matrix d_q = matmul(d_logits, context.k);
  Matrix d_k = matmul_at(d_logits, query.q);
  return {std::move(d_q), std::move(d_k), std::move(d_v)};
}

Matrix backward_query(const XAttnParams& params, const QueryState& query, const Matrix& d_q,
                      XAttnParams& grads) {
  MatmulGrad g = matmul_backward(query.ln.out, params.w_q, d_q);
  add_inplace(grads.w_q, g.db);
  LayerNormGrad ln = layernorm_rows_backward(query.ln, params.ln_query_gain, g.da);
  add_inplace(grads.ln_query_gain, ln.dgain);
  add_inplace(grads.ln_query_bias, ln.dbias);
  return std::move(ln.dx);
}

Matrix backward_context(const XAttnParams& params, const ContextState& context,
                        const Matrix& d_k, const Matrix& d_v, XAttnParams& grads) {
  MatmulGrad gk = matmul_backward(context.ln.out, params.w_k, d_k);
  MatmulGrad gv = matmul_backward(context.ln.out, params.w_v, d_v);
  add_inplace(grads.w_k, gk.db);
  add_inplace(grads.w_v, gv.db);
  Matrix d_normed = std::move(gk.da);
  add_inplace(d_normed, gv.da);
  LayerNormGrad ln = layernorm_rows_backward(context.ln, params.ln_context_gain, d_normed);
  add_inplace(grads.ln_context_gain, ln.dgain);
  add_inplace(grads.ln_context_bias, ln.dbias);
  return std::move(ln.dx);
}

}  // namespace tefal
