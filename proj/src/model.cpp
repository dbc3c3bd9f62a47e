// Copyright 2026 The TEFAL-Retrieval Authors
// SPDX-License-Identifier: Apache-2.0

#include "tefal/model.h"

#include <cmath>
#include <random>
#include <stdexcept>
#include <vector>

#include "tefal/ops.h"

namespace tefal {

Branches parse_branches(std::string_view s) {
  if (s == "av") return Branches::kAudioVideo;
  if (s == "video") return Branches::kVideoOnly;
  if (s == "audio") return Branches::kAudioOnly;
  throw std::invalid_argument("unknown branches '" + std::string(s) + "' (expected av|video|audio)");
}

std::string_view branches_name(Branches b) {
  switch (b) {
    case Branches::kAudioVideo: return "av";
    case Branches::kVideoOnly: return "video";
    case Branches::kAudioOnly: return "audio";
  }
  return "?";
}

void ModelConfig::validate() const {
  if (dim == 0 || proj_dim == 0) throw std::invalid_argument("model dims must be positive");
  if (dim != proj_dim) {
    throw std::invalid_argument("model: dim (" + std::to_string(dim) + ") must equal proj_dim (" +
                                std::to_string(proj_dim) +
                                "); candidates are compared with the raw text embedding");
  }
  if (branches != Branches::kAudioVideo && fusion != FusionKind::kAddition) {
    throw std::invalid_argument("model: single-branch ablations require addition fusion");
  }
  if (!(temperature_init > 0.0)) throw std::invalid_argument("model: temperature_init must be > 0");
}

bool ModelConfig::uses_video_block() const { return branches != Branches::kAudioOnly; }

bool ModelConfig::uses_audio_block() const {
  if (branches == Branches::kVideoOnly) return false;
  return fusion != FusionKind::kLateFusion && fusion != FusionKind::kStacking;
}

Model Model::create(const ModelConfig& config, std::uint64_t seed) {
  config.validate();
  Model m;
  m.config_ = config;
  // Each component draws from its own stream so adding one component never
  // changes another's initialization.
  std::mt19937_64 video_rng(seed * 4 + 1), audio_rng(seed * 4 + 2), fusion_rng(seed * 4 + 3);
  if (config.uses_video_block()) {
    XAttnParams::init(config.dim, config.proj_dim, video_rng, config.output_ln_affine)
        .register_in(m.store_, "video");
  }
  if (config.uses_audio_block()) {
    XAttnParams::init(config.dim, config.proj_dim, audio_rng, config.output_ln_affine)
        .register_in(m.store_, "audio");
  }
  FusionParams::init(config.fusion, config.dim, config.proj_dim, fusion_rng,
                     config.output_ln_affine)
      .register_in(m.store_);
  m.store_.add(kTemperatureParam,
               Matrix(1, 1, Temperature::from_tau(config.temperature_init).log_scale()));
  m.refresh();
  return m;
}

Model Model::from_store(const ModelConfig& config, ParamStore store) {
  config.validate();
  Model reference = create(config, 0);
  const auto want = reference.store().names();
  const auto have = store.names();
  if (want != have) {
    std::string msg = "parameter set does not match model configuration; expected:";
    for (const auto& n : want) msg += " " + n;
    throw std::invalid_argument(msg);
  }
  for (const auto& name : want) {
    require_same_shape(reference.store().value(name), store.value(name), name.c_str());
  }
  Model m;
  m.config_ = config;
  m.store_ = std::move(store);
  m.refresh();
  return m;
}

void Model::refresh() {
  if (config_.uses_video_block()) {
    video_ = XAttnParams::from_store(store_, "video", config_.output_ln_affine);
  }
  if (config_.uses_audio_block()) {
    audio_ = XAttnParams::from_store(store_, "audio", config_.output_ln_affine);
  }
  fusion_ = FusionParams::from_store(config_.fusion, store_, config_.output_ln_affine);
  fusion_.validate(config_.dim, config_.proj_dim);
}

const XAttnParams& Model::video_block() const {
  if (!video_) throw std::logic_error("model has no video block");
  return *video_;
}

const XAttnParams& Model::audio_block() const {
  if (!audio_) throw std::logic_error("model has no audio block");
  return *audio_;
}

Temperature Model::temperature() const {
  return Temperature::from_log_scale(store_.value(kTemperatureParam)(0, 0));
}

EncodedText encode_text(const Model& model, const Matrix& text) {
  EncodedText e{text, std::nullopt, std::nullopt, std::nullopt};
  const ModelConfig& cfg = model.config();
  if (cfg.uses_video_block()) e.video = encode_query(model.video_block(), text);
  if (cfg.uses_audio_block()) e.audio = encode_query(model.audio_block(), text);
  if (cfg.fusion == FusionKind::kXAttnFusion) e.fusion = encode_query(*model.fusion().xattn, text);
  return e;
}

Matrix video_context(const Model& model, const CorpusItem& item) {
  if (model.config().fusion != FusionKind::kStacking) return item.frames;
  if (!item.audio_summary_rows) {
    throw std::invalid_argument("item '" + item.id +
                                "' has no audio summary rows; stacking fusion needs them");
  }
  const Matrix& rows = *item.audio_summary_rows;
  return vstack(item.frames, audio_summary(slice_rows(rows, 0, 1), slice_rows(rows, 1, 2)));
}

EncodedItem encode_item(const Model& model, const CorpusItem& item) {
  EncodedItem e;
  const ModelConfig& cfg = model.config();
  if (cfg.uses_video_block()) e.video = encode_context(model.video_block(), video_context(model, item));
  if (cfg.uses_audio_block()) e.audio = encode_context(model.audio_block(), item.audio);
  if (cfg.fusion == FusionKind::kLateFusion) e.audio_mean = column_mean(item.audio);
  return e;
}

PairForward forward_pair(const Model& model, const EncodedText& text, const EncodedItem& item) {
  PairForward f;
  const ModelConfig& cfg = model.config();
  if (cfg.uses_video_block()) f.video = attend_pair(model.video_block(), *text.video, *item.video);
  if (cfg.uses_audio_block()) f.audio = attend_pair(model.audio_block(), *text.audio, *item.audio);

  if (cfg.branches == Branches::kVideoOnly) {
    f.fused = f.video->output();
    return f;
  }
  if (cfg.branches == Branches::kAudioOnly) {
    f.fused = f.audio->output();
    return f;
  }
  switch (cfg.fusion) {
    case FusionKind::kAddition:
      f.fused = fuse_addition(f.video->output(), f.audio->output());
      break;
    case FusionKind::kLateFusion:
      f.fused = add(f.video->output(), late_audio_term(model.fusion(), item.audio_mean));
      break;
    case FusionKind::kConcatFC:
      f.fused = concat_fc(model.fusion(), f.video->output(), f.audio->output());
      break;
    case FusionKind::kXAttnFusion: {
      const XAttnParams& block = *model.fusion().xattn;
      f.fusion_context =
          encode_context(block, stack_conditioned(f.video->output(), f.audio->output()));
      f.fusion = attend_pair(block, *text.fusion, *f.fusion_context);
      f.fused = f.fusion->output();
      break;
    }
    case FusionKind::kStacking:
      f.fused = f.video->output();
      break;
  }
  return f;
}

double pair_similarity(const Model& model, const EncodedText& text, const EncodedItem& item) {
  return cosine_similarity(text.text.data(), forward_pair(model, text, item).fused.data()).value;
}

Matrix fused_embedding(const Model& model, const Matrix& text, const CorpusItem& item) {
  return forward_pair(model, encode_text(model, text), encode_item(model, item)).fused;
}

namespace {

struct BatchForward {
  std::vector<EncodedText> texts;
  std::vector<EncodedItem> items;
  std::vector<PairForward> pairs;  // row-major (text i, item j)
  Matrix similarity;
};

BatchForward run_batch(const Model& model, std::span<const CorpusItem* const> batch) {
  if (batch.empty()) throw std::invalid_argument("batch is empty");
  const std::size_t b = batch.size();
  BatchForward f;
  f.texts.reserve(b);
  f.items.reserve(b);
  for (const CorpusItem* it : batch) {
    if (it->text.cols() != model.config().dim) {
      throw DimensionError("item '" + it->id + "' has width " + std::to_string(it->text.cols()) +
                           ", model expects " + std::to_string(model.config().dim));
    }
    f.texts.push_back(encode_text(model, it->text));
    f.items.push_back(encode_item(model, *it));
  }
  f.pairs.reserve(b * b);
  f.similarity = Matrix(b, b);
  for (std::size_t i = 0; i < b; ++i) {
    for (std::size_t j = 0; j < b; ++j) {
      f.pairs.push_back(forward_pair(model, f.texts[i], f.items[j]));
      f.similarity(i, j) =
          cosine_similarity(f.texts[i].text.data(), f.pairs.back().fused.data()).value;
    }
  }
  return f;
}

struct BlockGrad {
  XAttnParams params;
  std::vector<Matrix> d_q;  // per text
  std::vector<Matrix> d_k;  // per item
  std::vector<Matrix> d_v;  // per item

  BlockGrad(const XAttnParams& p, const std::vector<EncodedText>& texts,
            const std::vector<EncodedItem>& items, bool video)
      : params(XAttnParams::zeros_like(p)) {
    for (std::size_t i = 0; i < texts.size(); ++i) d_q.emplace_back(1, p.proj_dim);
    for (const EncodedItem& it : items) {
      const ContextState& c = video ? *it.video : *it.audio;
      d_k.emplace_back(c.k.rows(), c.k.cols());
      d_v.emplace_back(c.v.rows(), c.v.cols());
    }
  }

  void add_pair(std::size_t i, std::size_t j, const PairGrad& g) {
    add_inplace(d_q[i], g.d_q);
    add_inplace(d_k[j], g.d_k);
    add_inplace(d_v[j], g.d_v);
  }
};

}  // namespace

BatchLoss batch_loss(const Model& model, std::span<const CorpusItem* const> batch) {
  BatchForward f = run_batch(model, batch);
  InfoNceResult nce = infonce(f.similarity, model.temperature());
  return {nce.loss, nce.loss_t2v, nce.loss_v2t, std::move(f.similarity)};
}

BatchLoss batch_forward_backward(Model& model, std::span<const CorpusItem* const> batch) {
  const ModelConfig& cfg = model.config();
  BatchForward f = run_batch(model, batch);
  InfoNceResult nce = infonce(f.similarity, model.temperature());
  const std::size_t b = batch.size();

  std::optional<BlockGrad> video, audio, fusion_block;
  if (cfg.uses_video_block()) video.emplace(model.video_block(), f.texts, f.items, true);
  if (cfg.uses_audio_block()) audio.emplace(model.audio_block(), f.texts, f.items, false);
  FusionParams fusion_grads = FusionParams::zeros_like(model.fusion());
  std::vector<Matrix> d_fusion_q;
  if (cfg.fusion == FusionKind::kXAttnFusion) d_fusion_q.assign(b, Matrix(1, cfg.proj_dim));
  std::vector<Matrix> d_late(b, Matrix(1, cfg.proj_dim));

  for (std::size_t i = 0; i < b; ++i) {
    for (std::size_t j = 0; j < b; ++j) {
      const PairForward& pf = f.pairs[i * b + j];
      const double upstream = nce.d_sim(i, j);
      const Matrix d_fused = cosine_similarity_backward(f.texts[i].text, pf.fused, upstream).db;

      Matrix d_video, d_audio;
      if (cfg.branches == Branches::kVideoOnly) {
        d_video = d_fused;
      } else if (cfg.branches == Branches::kAudioOnly) {
        d_audio = d_fused;
      } else {
        switch (cfg.fusion) {
          case FusionKind::kAddition:
            d_video = d_fused;
            d_audio = d_fused;
            break;
          case FusionKind::kLateFusion:
            d_video = d_fused;
            add_inplace(d_late[j], d_fused);
            break;
          case FusionKind::kConcatFC: {
            ConcatGrad cg = concat_fc_backward(model.fusion(), pf.video->output(),
                                               pf.audio->output(), d_fused, fusion_grads);
            d_video = std::move(cg.d_video);
            d_audio = std::move(cg.d_audio);
            break;
          }
          case FusionKind::kXAttnFusion: {
            const XAttnParams& block = *model.fusion().xattn;
            PairGrad pg = backward_pair(block, *f.texts[i].fusion, *pf.fusion_context, *pf.fusion,
                                        d_fused, *fusion_grads.xattn);
            add_inplace(d_fusion_q[i], pg.d_q);
            Matrix d_ctx = backward_context(block, *pf.fusion_context, pg.d_k, pg.d_v,
                                            *fusion_grads.xattn);
            d_video = slice_rows(d_ctx, 0, 1);
            d_audio = slice_rows(d_ctx, 1, 2);
            break;
          }
          case FusionKind::kStacking:
            d_video = d_fused;
            break;
        }
      }

      if (!d_video.empty()) {
        video->add_pair(i, j, backward_pair(model.video_block(), *f.texts[i].video,
                                            *f.items[j].video, *pf.video, d_video,
                                            video->params));
      }
      if (!d_audio.empty()) {
        audio->add_pair(i, j, backward_pair(model.audio_block(), *f.texts[i].audio,
                                            *f.items[j].audio, *pf.audio, d_audio,
                                            audio->params));
      }
    }
  }

  if (video) {
    for (std::size_t i = 0; i < b; ++i) {
      backward_query(model.video_block(), *f.texts[i].video, video->d_q[i], video->params);
    }
    for (std::size_t j = 0; j < b; ++j) {
      backward_context(model.video_block(), *f.items[j].video, video->d_k[j], video->d_v[j],
                       video->params);
    }
    video->params.accumulate_into(model.store(), "video");
  }
  if (audio) {
    for (std::size_t i = 0; i < b; ++i) {
      backward_query(model.audio_block(), *f.texts[i].audio, audio->d_q[i], audio->params);
    }
    for (std::size_t j = 0; j < b; ++j) {
      backward_context(model.audio_block(), *f.items[j].audio, audio->d_k[j], audio->d_v[j],
                       audio->params);
    }
    audio->params.accumulate_into(model.store(), "audio");
  }
  if (cfg.fusion == FusionKind::kXAttnFusion) {
    for (std::size_t i = 0; i < b; ++i) {
      backward_query(*model.fusion().xattn, *f.texts[i].fusion, d_fusion_q[i],
                     *fusion_grads.xattn);
    }
  }
  if (cfg.fusion == FusionKind::kLateFusion && cfg.branches == Branches::kAudioVideo) {
    for (std::size_t j = 0; j < b; ++j) {
      add_inplace(fusion_grads.late_proj, matmul_at(f.items[j].audio_mean, d_late[j]));
    }
  }
  fusion_grads.accumulate_into(model.store());
  model.store().accumulate(kTemperatureParam, Matrix(1, 1, nce.d_log_scale));

  return {nce.loss, nce.loss_t2v, nce.loss_v2t, std::move(f.similarity)};
}

}  // namespace tefal
