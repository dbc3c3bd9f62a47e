// Copyright 2026 The TEFAL-Retrieval Authors
// SPDX-License-Identifier: Apache-2.0

#include "tefal/trainer.h"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numbers>
#include <numeric>
#include <random>
#include <sstream>

#include "tefal/objective.h"
#include "tefal/ops.h"

namespace tefal {

AdamW::AdamW(const ParamStore& store, AdamWConfig config) : config_(config) {
  if (!(config_.lr >= 0.0)) throw std::invalid_argument("learning rate must be >= 0");
  if (!(config_.beta1 >= 0.0 && config_.beta1 < 1.0 && config_.beta2 >= 0.0 && config_.beta2 < 1.0)) {
    throw std::invalid_argument("adam betas must lie in [0, 1)");
  }
  if (!(config_.eps > 0.0)) throw std::invalid_argument("adam eps must be > 0");
  if (!(config_.weight_decay >= 0.0)) throw std::invalid_argument("weight decay must be >= 0");
  store.for_each([&](const std::string&, const Matrix& value, const Matrix&) {
    m_.emplace_back(value.rows(), value.cols());
    v_.emplace_back(value.rows(), value.cols());
  });
}

bool AdamW::decays(const std::string& name) {
  const auto dot = name.rfind('.');
  const std::string leaf = dot == std::string::npos ? name : name.substr(dot + 1);
  return leaf.rfind("w_", 0) == 0 || leaf == "late_proj" || leaf == "concat_weight";
}

void AdamW::step(ParamStore& store, double lr) {
  if (store.size() != m_.size()) throw std::logic_error("AdamW: parameter set changed");
  ++t_;
  const double bc1 = 1.0 - std::pow(config_.beta1, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(config_.beta2, static_cast<double>(t_));
  std::size_t slot = 0;
  store.for_each([&](const std::string& name, Matrix& value, const Matrix& grad) {
    Matrix& m = m_[slot];
    Matrix& v = v_[slot];
    ++slot;
    const double decay = decays(name) ? lr * config_.weight_decay : 0.0;
    for (std::size_t i = 0; i < value.size(); ++i) {
      const double g = grad[i];
      m[i] = config_.beta1 * m[i] + (1.0 - config_.beta1) * g;
      v[i] = config_.beta2 * v[i] + (1.0 - config_.beta2) * g * g;
      const double update = (m[i] / bc1) / (std::sqrt(v[i] / bc2) + config_.eps);
      value[i] -= lr * update + decay * value[i];
    }
  });
  if (store.contains(kTemperatureParam)) {
    double& s = store.value(kTemperatureParam)[0];
    s = clamp_log_scale(s);
  }
  ++store.step;
}

double clip_grad_norm(ParamStore& store, double max_norm) {
  const double norm = store.grad_norm();
  if (max_norm > 0.0 && norm > max_norm) {
    const double factor = max_norm / norm;
    store.for_each([&](const std::string&, const Matrix&, Matrix& grad) {
      for (std::size_t i = 0; i < grad.size(); ++i) grad[i] *= factor;
    });
  }
  return norm;
}

double cosine_lr(double base_lr, std::uint64_t step, std::uint64_t total_steps) {
  if (total_steps == 0) return base_lr;
  const double progress = std::min(1.0, static_cast<double>(step) / static_cast<double>(total_steps));
  return base_lr * 0.5 * (1.0 + std::cos(std::numbers::pi * progress));
}

void TrainConfig::validate() const {
  model.validate();
  if (batch_size == 0) throw std::invalid_argument("batch size must be >= 1");
  if (epochs == 0) throw std::invalid_argument("epochs must be >= 1");
  if (!(optimizer.lr >= 0.0)) throw std::invalid_argument("learning rate must be >= 0");
}

void check_corpus_for_training(const TrainConfig& config, const Corpus& corpus) {
  if (corpus.empty()) throw std::invalid_argument("training corpus is empty");
  corpus.validate();
  if (corpus.dim() != config.model.dim) {
    throw DimensionError("corpus embedding width " + std::to_string(corpus.dim()) +
                         " does not match model dim " + std::to_string(config.model.dim));
  }
  for (const CorpusItem& it : corpus.items) {
    if (config.frames != 0 && it.frames.rows() != config.frames) {
      throw DimensionError("item " + it.id + " has " + std::to_string(it.frames.rows()) +
                           " frames, expected " + std::to_string(config.frames));
    }
    if (config.audio_tokens != 0 && it.audio.rows() != config.audio_tokens) {
      throw DimensionError("item " + it.id + " has " + std::to_string(it.audio.rows()) +
                           " audio tokens, expected " + std::to_string(config.audio_tokens));
    }
  }
  if (config.model.fusion == FusionKind::kStacking && !corpus.has_summary_rows()) {
    throw std::invalid_argument("stacking fusion needs audio summary rows for every item");
  }
  if (corpus.size() < config.batch_size) {
    throw std::invalid_argument("corpus has " + std::to_string(corpus.size()) +
                                " items, fewer than one batch of " +
                                std::to_string(config.batch_size));
  }
}

TrainResult train(const TrainConfig& config, const Corpus& corpus, const EpochCallback& on_epoch) {
  config.validate();
  return train_model(Model::create(config.model, config.seed), config, corpus, on_epoch);
}

TrainResult train_model(Model model, const TrainConfig& config, const Corpus& corpus,
                        const EpochCallback& on_epoch) {
  config.validate();
  check_corpus_for_training(config, corpus);

  const std::size_t batches = corpus.size() / config.batch_size;
  const std::uint64_t total_steps = static_cast<std::uint64_t>(batches) * config.epochs;
  AdamW opt(model.store(), config.optimizer);
  std::mt19937_64 shuffle_rng(config.seed ^ 0x9e3779b97f4a7c15ULL);
  std::vector<std::size_t> order(corpus.size());
  std::iota(order.begin(), order.end(), std::size_t{0});

  TrainResult result{model, {}, {}};
  Model& m = result.model;
  std::vector<const CorpusItem*> batch(config.batch_size);
  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), shuffle_rng);
    EpochLog log;
    log.epoch = epoch + 1;
    for (std::size_t b = 0; b < batches; ++b) {
      for (std::size_t i = 0; i < config.batch_size; ++i) {
        batch[i] = &corpus.items[order[b * config.batch_size + i]];
      }
      m.store().zero_grad();
      const BatchLoss bl = batch_forward_backward(m, batch);
      const double gnorm = m.store().grad_norm();
      if (!std::isfinite(bl.loss) || !std::isfinite(gnorm)) {
        std::ostringstream msg;
        msg << "non-finite " << (std::isfinite(bl.loss) ? "gradient" : "loss") << " at step "
            << m.store().step + 1 << " (epoch " << epoch + 1 << ", batch " << b << "); items:";
        for (const CorpusItem* it : batch) msg << ' ' << it->id;
        throw TrainingDiverged(msg.str());
      }
      clip_grad_norm(m.store(), config.clip_norm);
      opt.step(m.store(), cosine_lr(config.optimizer.lr, opt.steps(), total_steps));
      m.refresh();

      result.step_losses.push_back(bl.loss);
      if (b == 0) log.first_loss = bl.loss;
      log.last_loss = bl.loss;
      log.mean_loss += bl.loss;
    }
    log.mean_loss /= static_cast<double>(batches);
    log.tau = m.temperature().tau();
    result.epochs.push_back(log);
    if (on_epoch) on_epoch(log);
  }
  return result;
}

void SynthConfig::validate() const {
  auto fraction = [](double v, const char* what) {
    if (!(v >= 0.0 && v <= 1.0)) {
      throw std::invalid_argument(std::string(what) + " must lie in [0, 1]");
    }
  };
  fraction(audio_informative_fraction, "audio-informative fraction");
  fraction(signal_frame_fraction, "signal frame fraction");
  fraction(signal_token_fraction, "signal token fraction");
  fraction(missing_audio_fraction, "missing-audio fraction");
  if (items == 0 || dim == 0 || frames == 0 || audio_tokens == 0) {
    throw std::invalid_argument("synth: items, dim, frames and audio tokens must be positive");
  }
  if (!(noise >= 0.0)) throw std::invalid_argument("synth: noise must be >= 0");
}

Corpus synth_corpus(const SynthConfig& config) {
  config.validate();
  std::mt19937_64 rng(config.seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const std::size_t d = config.dim;
  auto gaussian = [&](std::size_t rows, double sd) {
    Matrix m(rows, d);
    for (std::size_t i = 0; i < m.size(); ++i) m[i] = sd * normal(rng);
    return m;
  };
  const auto signal_frames = std::max<std::size_t>(
      1, static_cast<std::size_t>(std::llround(config.signal_frame_fraction * config.frames)));
  const auto signal_tokens = std::max<std::size_t>(
      1, static_cast<std::size_t>(std::llround(config.signal_token_fraction * config.audio_tokens)));
  const auto informative = static_cast<std::size_t>(
      std::llround(config.audio_informative_fraction * config.items));

  // Which items carry audio information: a seeded choice of exactly `informative`.
  std::vector<std::size_t> pick(config.items);
  std::iota(pick.begin(), pick.end(), std::size_t{0});
  std::shuffle(pick.begin(), pick.end(), rng);
  std::vector<bool> is_informative(config.items, false);
  for (std::size_t i = 0; i < informative; ++i) is_informative[pick[i]] = true;

  Corpus corpus;
  corpus.items.reserve(config.items);
  for (std::size_t n = 0; n < config.items; ++n) {
    CorpusItem it;
    char id[32];
    std::snprintf(id, sizeof id, "item%06zu", n);
    it.id = id;
    const Matrix u = gaussian(1, 1.0);
    const Matrix w = gaussian(1, 1.0);
    it.text = add(add(u, scale(w, config.audio_weight)), gaussian(1, config.noise));

    std::vector<Matrix> events;
    for (std::size_t e = 0; e < config.distractor_events; ++e) events.push_back(gaussian(1, 1.0));
    auto distractor = [&](std::size_t slot) {
      return events.empty() ? gaussian(1, 1.0) : events[slot % events.size()];
    };

    it.frames = Matrix(config.frames, d);
    std::vector<std::size_t> slots(config.frames);
    std::iota(slots.begin(), slots.end(), std::size_t{0});
    std::shuffle(slots.begin(), slots.end(), rng);
    for (std::size_t f = 0; f < config.frames; ++f) {
      const bool signal = f < signal_frames;
      const double gain = 0.5 + unit(rng);
      const Matrix base = signal ? scale(u, gain) : distractor(f);
      const Matrix row = add(base, gaussian(1, config.noise));
      std::copy(row.data().begin(), row.data().end(), it.frames.row(slots[f]).begin());
    }

    const bool missing = !is_informative[n] && unit(rng) < config.missing_audio_fraction;
    it.has_audio = !missing;
    if (missing) {
      it.audio = Matrix(config.audio_tokens, d);
      it.audio_summary_rows = Matrix(2, d);
    } else {
      it.audio = Matrix(config.audio_tokens, d);
      std::vector<std::size_t> tok(config.audio_tokens);
      std::iota(tok.begin(), tok.end(), std::size_t{0});
      std::shuffle(tok.begin(), tok.end(), rng);
      const std::size_t carrying = is_informative[n] ? signal_tokens : 0;
      for (std::size_t s = 0; s < config.audio_tokens; ++s) {
        const Matrix base = s < carrying ? w : distractor(s);
        const Matrix row = add(base, gaussian(1, config.noise));
        std::copy(row.data().begin(), row.data().end(), it.audio.row(tok[s]).begin());
      }
      const std::size_t half = config.audio_tokens / 2;
      const Matrix cls = column_mean(it.audio);
      const Matrix dist = half > 0 ? column_mean(slice_rows(it.audio, half, config.audio_tokens))
                                   : cls;
      it.audio_summary_rows = vstack(cls, dist);
    }
    corpus.items.push_back(std::move(it));
  }
  return corpus;
}

}  // namespace tefal
