// Copyright 2026 The TEFAL-Retrieval Authors
// SPDX-License-Identifier: Apache-2.0
//
// Fusion of the text-conditioned video embedding E_{V|T} and audio embedding
// E_{A|T} into the joint candidate embedding. Addition is the main model;
// the other four kinds are the ablation variants:
//
//   kAddition     E_{V|T} + E_{A|T}
//   kLateFusion   E_{V|T} + mean_tokens(E_A) W_late
//   kConcatFC     [E_{V|T}, E_{A|T}] W_cat + b_cat
//   kXAttnFusion  XAttn(E_T, [E_{V|T}; E_{A|T}])        (third block, D = D_p)
//   kStacking     XAttn_video(E_T, [E_V; summary(E_A)])  (audio block unused)

#pragma once

#include <optional>
#include <random>
#include <string>
#include <string_view>

#include "tefal/matrix.h"
#include "tefal/param_store.h"
#include "tefal/xattn.h"

namespace tefal {

enum class FusionKind { kAddition, kLateFusion, kConcatFC, kXAttnFusion, kStacking };

/// Config spelling: addition|late|concat_fc|xattn|stacking.
FusionKind parse_fusion_kind(std::string_view s);
std::string_view fusion_kind_name(FusionKind kind);

struct FusionParams {
  FusionKind kind = FusionKind::kAddition;
  Matrix late_proj;      // kLateFusion: D x D_p
  Matrix concat_weight;  // kConcatFC: 2 D_p x D_p
  Matrix concat_bias;    // kConcatFC: 1 x D_p
  std::optional<XAttnParams> xattn;  // kXAttnFusion

  static FusionParams init(FusionKind kind, std::size_t dim, std::size_t proj_dim,
                           std::mt19937_64& rng, bool output_affine = true);
  static FusionParams zeros_like(const FusionParams& p);

  /// Throws if the tensors present do not match what kind requires.
  void validate(std::size_t dim, std::size_t proj_dim) const;

  void register_in(ParamStore& store) const;
  static FusionParams from_store(FusionKind kind, const ParamStore& store, bool output_affine);
  void accumulate_into(ParamStore& store) const;
};

/// Elementwise mean of the audio CLS and DIST rows.
Matrix audio_summary(const Matrix& cls, const Matrix& dist);

/// Per-kind inputs. Only the fields the kind needs must be set.
struct FusionInputs {
  const Matrix* video_conditioned = nullptr;  // E_{V|T}, 1 x D_p
  const Matrix* audio_conditioned = nullptr;  // E_{A|T}, 1 x D_p
  const Matrix* audio_tokens = nullptr;       // E_A, N_a x D (kLateFusion)
  const Matrix* text = nullptr;               // E_T, 1 x D (kXAttnFusion, kStacking)
  const Matrix* frames = nullptr;             // E_V, F x D (kStacking)
  const Matrix* summary_row = nullptr;        // 1 x D (kStacking)
  const XAttnParams* video_block = nullptr;   // kStacking
};

/// Always returns 1 x D_p.
Matrix fuse(const FusionParams& params, const FusionInputs& in);

Matrix fuse_addition(const Matrix& video_conditioned, const Matrix& audio_conditioned);

// Pieces used by the training path.

/// 1 x D_p projection of mean-pooled raw audio tokens.
Matrix late_audio_term(const FusionParams& params, const Matrix& audio_mean);

Matrix concat_fc(const FusionParams& params, const Matrix& video_conditioned,
                 const Matrix& audio_conditioned);

struct ConcatGrad {
  Matrix d_video;
  Matrix d_audio;
};
/// Adds weight/bias gradients into grads.
ConcatGrad concat_fc_backward(const FusionParams& params, const Matrix& video_conditioned,
                              const Matrix& audio_conditioned, const Matrix& d_fused,
                              FusionParams& grads);

/// [E_{V|T}; E_{A|T}] stacked as the 2 x D_p context of the fusion block.
Matrix stack_conditioned(const Matrix& video_conditioned, const Matrix& audio_conditioned);

}  // namespace tefal
