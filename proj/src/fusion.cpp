// Copyright 2026 The TEFAL-Retrieval Authors
// SPDX-License-Identifier: Apache-2.0

#include "tefal/fusion.h"

#include <cmath>
#include <stdexcept>

#include "tefal/grad_check.h"
#include "tefal/ops.h"

namespace tefal {

namespace {

void require_input(const void* p, const char* what, FusionKind kind) {
  if (p == nullptr) {
    throw std::invalid_argument("fuse(" + std::string(fusion_kind_name(kind)) + "): missing " +
                                what);
  }
}

void require_row(const Matrix& m, std::size_t cols, const char* what) {
  if (m.rows() != 1 || m.cols() != cols) {
    throw DimensionError(std::string("fusion: ") + what + " has shape " + m.shape_string() +
                         ", expected 1x" + std::to_string(cols));
  }
}

}  // namespace

FusionKind parse_fusion_kind(std::string_view s) {
  if (s == "addition") return FusionKind::kAddition;
  if (s == "late") return FusionKind::kLateFusion;
  if (s == "concat_fc") return FusionKind::kConcatFC;
  if (s == "xattn") return FusionKind::kXAttnFusion;
  if (s == "stacking") return FusionKind::kStacking;
  throw std::invalid_argument("unknown fusion kind '" + std::string(s) +
                              "' (expected addition|late|concat_fc|xattn|stacking)");
}

std::string_view fusion_kind_name(FusionKind kind) {
  switch (kind) {
    case FusionKind::kAddition: return "addition";
    case FusionKind::kLateFusion: return "late";
    case FusionKind::kConcatFC: return "concat_fc";
    case FusionKind::kXAttnFusion: return "xattn";
    case FusionKind::kStacking: return "stacking";
  }
  return "?";
}

FusionParams FusionParams::init(FusionKind kind, std::size_t dim, std::size_t proj_dim,
                                std::mt19937_64& rng, bool output_affine) {
  FusionParams p;
  p.kind = kind;
  switch (kind) {
    case FusionKind::kLateFusion:
      p.late_proj = random_matrix(dim, proj_dim, rng, 1.0 / std::sqrt(static_cast<double>(dim)));
      break;
    case FusionKind::kConcatFC:
      p.concat_weight = random_matrix(2 * proj_dim, proj_dim, rng,
                                      1.0 / std::sqrt(static_cast<double>(2 * proj_dim)));
      p.concat_bias = Matrix(1, proj_dim);
      break;
    case FusionKind::kXAttnFusion:
      p.xattn = XAttnParams::init(proj_dim, proj_dim, rng, output_affine);
      break;
    case FusionKind::kAddition:
    case FusionKind::kStacking:
      break;
  }
  return p;
}

FusionParams FusionParams::zeros_like(const FusionParams& p) {
  FusionParams z = p;
  if (!z.late_proj.empty()) z.late_proj.fill(0.0);
  if (!z.concat_weight.empty()) z.concat_weight.fill(0.0);
  if (!z.concat_bias.empty()) z.concat_bias.fill(0.0);
  if (z.xattn) z.xattn = XAttnParams::zeros_like(*z.xattn);
  return z;
}

void FusionParams::validate(std::size_t dim, std::size_t proj_dim) const {
  const bool want_late = kind == FusionKind::kLateFusion;
  const bool want_concat = kind == FusionKind::kConcatFC;
  const bool want_xattn = kind == FusionKind::kXAttnFusion;
  const std::string name(fusion_kind_name(kind));
  if (want_late != !late_proj.empty() || want_concat != !concat_weight.empty() ||
      want_concat != !concat_bias.empty() || want_xattn != xattn.has_value()) {
    throw std::invalid_argument("fusion parameters do not match kind '" + name + "'");
  }
  if (want_late && (late_proj.rows() != dim || late_proj.cols() != proj_dim)) {
    throw DimensionError("fusion: late_proj has shape " + late_proj.shape_string());
  }
  if (want_concat && (concat_weight.rows() != 2 * proj_dim || concat_weight.cols() != proj_dim ||
                      concat_bias.rows() != 1 || concat_bias.cols() != proj_dim)) {
    throw DimensionError("fusion: concat weights have shape " + concat_weight.shape_string() +
                         "/" + concat_bias.shape_string());
  }
  if (want_xattn) {
    xattn->validate();
    if (xattn->dim != proj_dim || xattn->proj_dim != proj_dim) {
      throw DimensionError("fusion: cross-attention fusion block must be D_p x D_p");
    }
  }
}

void FusionParams::register_in(ParamStore& store) const {
  if (!late_proj.empty()) store.add("fusion.late_proj", late_proj);
  if (!concat_weight.empty()) store.add("fusion.concat_weight", concat_weight);
  if (!concat_bias.empty()) store.add("fusion.concat_bias", concat_bias);
  if (xattn) xattn->register_in(store, "fusion.xattn");
}

FusionParams FusionParams::from_store(FusionKind kind, const ParamStore& store,
                                      bool output_affine) {
  FusionParams p;
  p.kind = kind;
  switch (kind) {
    case FusionKind::kLateFusion:
      p.late_proj = store.value("fusion.late_proj");
      break;
    case FusionKind::kConcatFC:
      p.concat_weight = store.value("fusion.concat_weight");
      p.concat_bias = store.value("fusion.concat_bias");
      break;
    case FusionKind::kXAttnFusion:
      p.xattn = XAttnParams::from_store(store, "fusion.xattn", output_affine);
      break;
    case FusionKind::kAddition:
    case FusionKind::kStacking:
      break;
  }
  return p;
}

void FusionParams::accumulate_into(ParamStore& store) const {
  if (!late_proj.empty()) store.accumulate("fusion.late_proj", late_proj);
  if (!concat_weight.empty()) store.accumulate("fusion.concat_weight", concat_weight);
  if (!concat_bias.empty()) store.accumulate("fusion.concat_bias", concat_bias);
  if (xattn) xattn->accumulate_into(store, "fusion.xattn");
}

Matrix audio_summary(const Matrix& cls, const Matrix& dist) {
  if (cls.rows() != 1 || !cls.same_shape(dist)) {
    throw DimensionError("audio_summary: expected two matching rows, got " + cls.shape_string() +
                         " and " + dist.shape_string());
  }
  Matrix out(1, cls.cols());
  for (std::size_t c = 0; c < cls.cols(); ++c) out(0, c) = 0.5 * (cls(0, c) + dist(0, c));
  return out;
}

Matrix fuse_addition(const Matrix& video_conditioned, const Matrix& audio_conditioned) {
  require_same_shape(video_conditioned, audio_conditioned, "fuse_addition");
  return add(video_conditioned, audio_conditioned);
}

Matrix late_audio_term(const FusionParams& params, const Matrix& audio_mean) {
  return matmul(audio_mean, params.late_proj);
}

Matrix concat_fc(const FusionParams& params, const Matrix& video_conditioned,
                 const Matrix& audio_conditioned) {
  Matrix out = matmul(hstack(video_conditioned, audio_conditioned), params.concat_weight);
  add_inplace(out, params.concat_bias);
  return out;
}

ConcatGrad concat_fc_backward(const FusionParams& params, const Matrix& video_conditioned,
                              const Matrix& audio_conditioned, const Matrix& d_fused,
                              FusionParams& grads) {
  const Matrix joined = hstack(video_conditioned, audio_conditioned);
  MatmulGrad g = matmul_backward(joined, params.concat_weight, d_fused);
  add_inplace(grads.concat_weight, g.db);
  add_inplace(grads.concat_bias, d_fused);
  const std::size_t p = video_conditioned.cols();
  return {slice_cols(g.da, 0, p), slice_cols(g.da, p, 2 * p)};
}

Matrix stack_conditioned(const Matrix& video_conditioned, const Matrix& audio_conditioned) {
  return vstack(video_conditioned, audio_conditioned);
}

Matrix fuse(const FusionParams& params, const FusionInputs& in) {
  const FusionKind kind = params.kind;
  switch (kind) {
    case FusionKind::kAddition:
      require_input(in.video_conditioned, "video_conditioned", kind);
      require_input(in.audio_conditioned, "audio_conditioned", kind);
      return fuse_addition(*in.video_conditioned, *in.audio_conditioned);
    case FusionKind::kLateFusion: {
      require_input(in.video_conditioned, "video_conditioned", kind);
      require_input(in.audio_tokens, "audio_tokens", kind);
      if (params.late_proj.empty()) throw std::invalid_argument("fuse(late): missing late_proj");
      Matrix audio = late_audio_term(params, column_mean(*in.audio_tokens));
      require_same_shape(*in.video_conditioned, audio, "fuse(late)");
      return add(*in.video_conditioned, audio);
    }
    case FusionKind::kConcatFC:
      require_input(in.video_conditioned, "video_conditioned", kind);
      require_input(in.audio_conditioned, "audio_conditioned", kind);
      if (params.concat_weight.empty()) {
        throw std::invalid_argument("fuse(concat_fc): missing concat weights");
      }
      require_same_shape(*in.video_conditioned, *in.audio_conditioned, "fuse(concat_fc)");
      if (params.concat_weight.rows() != 2 * in.video_conditioned->cols()) {
        throw DimensionError("fuse(concat_fc): weight " + params.concat_weight.shape_string() +
                             " does not fit inputs of width " +
                             std::to_string(in.video_conditioned->cols()));
      }
      return concat_fc(params, *in.video_conditioned, *in.audio_conditioned);
    case FusionKind::kXAttnFusion:
      require_input(in.video_conditioned, "video_conditioned", kind);
      require_input(in.audio_conditioned, "audio_conditioned", kind);
      require_input(in.text, "text", kind);
      if (!params.xattn) throw std::invalid_argument("fuse(xattn): missing fusion block");
      require_same_shape(*in.video_conditioned, *in.audio_conditioned, "fuse(xattn)");
      return conditioned_embedding(*params.xattn, *in.text,
                                   stack_conditioned(*in.video_conditioned,
                                                     *in.audio_conditioned));
    case FusionKind::kStacking:
      require_input(in.text, "text", kind);
      require_input(in.frames, "frames", kind);
      require_input(in.summary_row, "summary_row", kind);
      require_input(in.video_block, "video_block", kind);
      require_row(*in.summary_row, in.frames->cols(), "summary row");
      return conditioned_embedding(*in.video_block, *in.text,
                                   vstack(*in.frames, *in.summary_row));
  }
  throw std::invalid_argument("fuse: unhandled kind");
}

}  // namespace tefal
