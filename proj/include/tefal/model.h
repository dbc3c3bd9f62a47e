// Copyright 2026 The TEFAL-Retrieval Authors
// SPDX-License-Identifier: Apache-2.0
//
// The full retrieval model: text->video block, text->audio block, fusion and
// the learnable temperature, plus the batch forward/backward used in
// training. Backward composition order for one batch:
//
//   infonce -> cosine(text, fused) -> fusion -> per-pair block backward
//   (output LN, W_O, attention) -> per-text query backward (W_Q, query LN)
//   -> per-item context backward (W_K, W_V, context LN).
//
// Query/key/value gradients are summed over the batch before the projection
// backward; every sum runs in ascending index order.

#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>

#include "tefal/corpus.h"
#include "tefal/fusion.h"
#include "tefal/objective.h"
#include "tefal/param_store.h"
#include "tefal/xattn.h"

namespace tefal {

/// Which conditioned embeddings feed the candidate representation.
/// kVideoOnly / kAudioOnly are the single-branch ablations.
enum class Branches { kAudioVideo, kVideoOnly, kAudioOnly };

Branches parse_branches(std::string_view s);  // av|video|audio
std::string_view branches_name(Branches b);

struct ModelConfig {
  std::size_t dim = 512;
  std::size_t proj_dim = 512;
  FusionKind fusion = FusionKind::kAddition;
  Branches branches = Branches::kAudioVideo;
  bool output_ln_affine = true;
  double temperature_init = Temperature::kDefaultTau;

  /// The candidate is compared with the raw text row, so dim must equal
  /// proj_dim. Single-branch ablations only combine with addition.
  void validate() const;
  bool uses_video_block() const;
  bool uses_audio_block() const;
};

inline constexpr const char* kTemperatureParam = "temperature.log_scale";

class Model {
 public:
  static Model create(const ModelConfig& config, std::uint64_t seed);
  /// Adopts a loaded parameter set; throws if names or shapes disagree with config.
  static Model from_store(const ModelConfig& config, ParamStore store);

  const ModelConfig& config() const { return config_; }
  ParamStore& store() { return store_; }
  const ParamStore& store() const { return store_; }

  /// Rebuilds the block views from the store. Call after mutating the store.
  void refresh();

  const XAttnParams& video_block() const;
  const XAttnParams& audio_block() const;
  const FusionParams& fusion() const { return fusion_; }
  Temperature temperature() const;

 private:
  Model() = default;
  ModelConfig config_;
  ParamStore store_;
  std::optional<XAttnParams> video_;
  std::optional<XAttnParams> audio_;
  FusionParams fusion_;
};

/// Query-side state for one text row.
struct EncodedText {
  Matrix text;
  std::optional<QueryState> video;
  std::optional<QueryState> audio;
  std::optional<QueryState> fusion;
};

/// Candidate-side state for one item (independent of the text).
struct EncodedItem {
  std::optional<ContextState> video;
  std::optional<ContextState> audio;
  Matrix audio_mean;  // kLateFusion only
};

EncodedText encode_text(const Model& model, const Matrix& text);
EncodedItem encode_item(const Model& model, const CorpusItem& item);

/// The video context the video block sees for this item (frames, plus the
/// audio summary row under stacking fusion).
Matrix video_context(const Model& model, const CorpusItem& item);

struct PairForward {
  std::optional<PairState> video;
  std::optional<PairState> audio;
  std::optional<ContextState> fusion_context;
  std::optional<PairState> fusion;
  Matrix fused;  // 1 x D_p
};

PairForward forward_pair(const Model& model, const EncodedText& text, const EncodedItem& item);
double pair_similarity(const Model& model, const EncodedText& text, const EncodedItem& item);

/// Fused candidate embedding for (text, item), computed from scratch.
Matrix fused_embedding(const Model& model, const Matrix& text, const CorpusItem& item);

struct BatchLoss {
  double loss = 0.0;
  double loss_t2v = 0.0;
  double loss_v2t = 0.0;
  Matrix similarity;  // B x B
};

/// Similarity matrix and loss for a batch; nothing is accumulated.
BatchLoss batch_loss(const Model& model, std::span<const CorpusItem* const> batch);

/// Same as batch_loss and adds dL/dparam into model.store() gradients.
BatchLoss batch_forward_backward(Model& model, std::span<const CorpusItem* const> batch);

}  // namespace tefal
