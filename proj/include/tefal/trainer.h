// Copyright 2026 The TEFAL-Retrieval Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <functional>
#include <stdexcept>
#include <string>
#include <vector>

#include "tefal/corpus.h"
#include "tefal/model.h"
#include "tefal/param_store.h"

namespace tefal {

struct AdamWConfig {
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.98;
  double eps = 1e-8;
  double weight_decay = 0.01;
};

/// Adam with decoupled weight decay. Decay applies only to parameters for
/// which decays(name) is true.
class AdamW {
 public:
  AdamW(const ParamStore& store, AdamWConfig config);

  /// One update from the store's current gradients at learning rate `lr`.
  void step(ParamStore& store, double lr);
  std::uint64_t steps() const { return t_; }
  const AdamWConfig& config() const { return config_; }

  /// Weight matrices decay; gains, biases and the temperature do not.
  static bool decays(const std::string& name);

 private:
  AdamWConfig config_;
  std::uint64_t t_ = 0;
  std::vector<Matrix> m_;
  std::vector<Matrix> v_;
};

/// Scales all gradients so the global L2 norm is at most max_norm.
/// Returns the norm before clipping. max_norm <= 0 disables clipping.
double clip_grad_norm(ParamStore& store, double max_norm);

/// lr * 0.5 * (1 + cos(pi * step / total_steps)).
double cosine_lr(double base_lr, std::uint64_t step, std::uint64_t total_steps);

struct TrainConfig {
  ModelConfig model;
  std::size_t batch_size = 12;
  std::size_t epochs = 20;
  AdamWConfig optimizer;
  double clip_norm = 1.0;
  std::uint64_t seed = 0;
  // Expected per-item shapes; 0 accepts whatever the corpus holds.
  std::size_t frames = 0;
  std::size_t audio_tokens = 0;

  void validate() const;
};

struct EpochLog {
  std::size_t epoch = 0;
  double mean_loss = 0.0;
  double first_loss = 0.0;
  double last_loss = 0.0;
  double tau = 0.0;
};

struct TrainResult {
  Model model;
  std::vector<double> step_losses;
  std::vector<EpochLog> epochs;
};

class TrainingDiverged : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

using EpochCallback = std::function<void(const EpochLog&)>;

/// Checks the corpus against the config (widths, F, N_a).
void check_corpus_for_training(const TrainConfig& config, const Corpus& corpus);

/// Trains from a fresh Model::create(config.model, config.seed).
TrainResult train(const TrainConfig& config, const Corpus& corpus, const EpochCallback& on_epoch = {});

/// Continues training `model` in place.
TrainResult train_model(Model model, const TrainConfig& config, const Corpus& corpus,
                        const EpochCallback& on_epoch = {});

struct SynthConfig {
  std::uint64_t seed = 0;
  std::size_t items = 1000;
  std::size_t dim = 16;
  std::size_t frames = 8;
  std::size_t audio_tokens = 8;
  double audio_informative_fraction = 0.5;
  double noise = 0.3;
  double audio_weight = 1.0;       // weight of the audio-only latent in the text
  double signal_frame_fraction = 0.625;
  double signal_token_fraction = 0.375;
  double missing_audio_fraction = 0.1;  // of the uninformative items
  // Item-specific latents shared by the non-signal frames and tokens; 0
  // makes every non-signal row independent noise.
  std::size_t distractor_events = 1;

  void validate() const;
};

/// Each item has two latents: u (visible in frames) and w (audible only).
/// The text is u + audio_weight * w + noise. Signal frames are scaled noisy
/// copies of u; the remaining frames and tokens are noisy copies of a few
/// item-specific distractor events the text never mentions. For an
/// audio-informative item a share of the tokens are noisy copies of w. Some
/// uninformative items have no audio at all.
Corpus synth_corpus(const SynthConfig& config);

}  // namespace tefal
