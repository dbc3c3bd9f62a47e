// Copyright 2026 The TEFAL-Retrieval Authors
// SPDX-License-Identifier: Apache-2.0
//
// Text-conditioned cross-attention pooling. A single text row is the query;
// the rows of a context matrix (video frames or audio tokens) are keys and
// values:
//
//   Q = LN_q(text) W_Q,  K = LN_c(ctx) W_K,  V = LN_c(ctx) W_V
//   w = softmax(Q K^T / sqrt(D_p)),  pooled = w V
//   out = LN_o(pooled W_O)
//
// One head, no positional encoding. The video and audio blocks of a model
// are two independent XAttnParams instances.

#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "tefal/matrix.h"
#include "tefal/ops.h"
#include "tefal/param_store.h"

namespace tefal {

struct XAttnParams {
  std::size_t dim = 0;
  std::size_t proj_dim = 0;
  Matrix w_q, w_k, w_v;  // dim x proj_dim
  Matrix w_o;            // proj_dim x proj_dim
  Matrix ln_query_gain, ln_query_bias;
  Matrix ln_context_gain, ln_context_bias;  // shared by the K and V paths
  Matrix ln_out_gain, ln_out_bias;
  // When false the output LayerNorm has fixed unit gain / zero bias and those
  // two entries are neither registered nor trained.
  bool output_affine = true;

  /// Weights ~ U(-1/sqrt(dim), 1/sqrt(dim)); LayerNorm gain 1, bias 0.
  static XAttnParams init(std::size_t dim, std::size_t proj_dim, std::mt19937_64& rng,
                          bool output_affine = true);
  /// Same shapes, all zeros. Used as a gradient accumulator.
  static XAttnParams zeros_like(const XAttnParams& p);

  void validate() const;

  /// Registers every trainable tensor under "<prefix>.<field>".
  void register_in(ParamStore& store, const std::string& prefix) const;
  static XAttnParams from_store(const ParamStore& store, const std::string& prefix,
                                bool output_affine);
  /// Adds the trainable fields of grads into the store's gradient buffers.
  void accumulate_into(ParamStore& store, const std::string& prefix) const;

  /// Visits (field-name, tensor) for every trainable field.
  template <typename Self, typename Fn>
  static void visit(Self& self, Fn&& fn) {
    fn("w_q", self.w_q);
    fn("w_k", self.w_k);
    fn("w_v", self.w_v);
    fn("w_o", self.w_o);
    fn("ln_query_gain", self.ln_query_gain);
    fn("ln_query_bias", self.ln_query_bias);
    fn("ln_context_gain", self.ln_context_gain);
    fn("ln_context_bias", self.ln_context_bias);
    if (self.output_affine) {
      fn("ln_out_gain", self.ln_out_gain);
      fn("ln_out_bias", self.ln_out_bias);
    }
  }
};

struct Projection {
  Matrix q;  // 1 x D_p
  Matrix k;  // n x D_p
  Matrix v;  // n x D_p
};

struct Attention {
  Matrix pooled;   // 1 x D_p
  Matrix weights;  // 1 x n, in the caller's row order
};

Projection project(const XAttnParams& params, const Matrix& text, const Matrix& context);
Attention attend(const Matrix& q, const Matrix& k, const Matrix& v);
Matrix conditioned_embedding(const XAttnParams& params, const Matrix& text,
                             const Matrix& context);
Matrix export_attention_weights(const XAttnParams& params, const Matrix& text,
                                const Matrix& context);

// ---------------------------------------------------------------------------
// Cached forward/backward pieces. The query side and the context side are
// independent of each other, so training and ranking encode each text and
// each context once and then pair them.

struct QueryState {
  LayerNormResult ln;
  Matrix q;
};

struct ContextState {
  LayerNormResult ln;
  Matrix k;
  Matrix v;
  // Canonical row order for every reduction over context rows; makes pooling
  // bit-identical under joint permutation of the rows.
  std::vector<std::size_t> order;
};

struct PairState {
  Attention attention;
  Matrix projected;  // pooled W_O
  LayerNormResult ln_out;

  const Matrix& output() const { return ln_out.out; }
};

QueryState encode_query(const XAttnParams& params, const Matrix& text);
ContextState encode_context(const XAttnParams& params, const Matrix& context);
PairState attend_pair(const XAttnParams& params, const QueryState& query,
                      const ContextState& context);

struct PairGrad {
  Matrix d_q;  // 1 x D_p
  Matrix d_k;  // n x D_p
  Matrix d_v;  // n x D_p
};

/// Backpropagates d_out through the output LN, W_O and attention. Adds the
/// W_O and output-LN gradients into grads; returns gradients for Q, K, V so
/// callers can sum them across pairs before the projection backward.
PairGrad backward_pair(const XAttnParams& params, const QueryState& query,
                       const ContextState& context, const PairState& pair,
                       const Matrix& d_out, XAttnParams& grads);

/// Adds W_Q and query-LN gradients; returns d(text).
Matrix backward_query(const XAttnParams& params, const QueryState& query, const Matrix& d_q,
                      XAttnParams& grads);

/// Adds W_K, W_V and context-LN gradients; returns d(context).
Matrix backward_context(const XAttnParams& params, const ContextState& context,
                        const Matrix& d_k, const Matrix& d_v, XAttnParams& grads);

}  // namespace tefal
