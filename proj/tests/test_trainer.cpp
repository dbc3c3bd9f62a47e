// Copyright 2026 The TEFAL-Retrieval Authors
// SPDX-License-Identifier: Apache-2.0

#include <cmath>
#include <limits>
#include <random>

#include "doctest.h"
#include "tefal/diagnostics.h"
#include "tefal/grad_check.h"
#include "tefal/ops.h"
#include "tefal/retrieval.h"
#include "tefal/trainer.h"

using namespace tefal;

namespace {

TrainConfig tiny_config() {
  TrainConfig c;
  c.model.dim = c.model.proj_dim = 8;
  c.batch_size = 4;
  c.epochs = 2;
  c.optimizer.lr = 1e-3;
  c.seed = 5;
  return c;
}

Corpus tiny_corpus(std::size_t n = 20, std::uint64_t seed = 1) {
  SynthConfig sc;
  sc.seed = seed;
  sc.items = n;
  sc.dim = 8;
  sc.frames = 3;
  sc.audio_tokens = 4;
  return synth_corpus(sc);
}

}  // namespace

TEST_CASE("AdamW decay selection") {
  CHECK(AdamW::decays("video.w_q"));
  CHECK(AdamW::decays("fusion.xattn.w_o"));
  CHECK(AdamW::decays("fusion.concat_weight"));
  CHECK_FALSE(AdamW::decays("video.ln_out_gain"));
  CHECK_FALSE(AdamW::decays("fusion.concat_bias"));
  CHECK_FALSE(AdamW::decays(kTemperatureParam));
}

TEST_CASE("AdamW first step matches the closed form") {
  ParamStore s;
  s.add("a.w_q", Matrix::row_vector({1.0, -2.0}));
  s.add("a.bias", Matrix::row_vector({0.5}));
  s.grad("a.w_q") = Matrix::row_vector({0.3, -4.0});
  s.grad("a.bias") = Matrix::row_vector({-0.1});
  AdamWConfig cfg;
  cfg.weight_decay = 0.1;
  AdamW opt(s, cfg);
  opt.step(s, 0.01);
  // After one step m_hat = g and v_hat = g^2, so the update is lr * g / (|g| + eps).
  CHECK(s.value("a.w_q")[0] == doctest::Approx(1.0 - 0.01 * 0.3 / (0.3 + 1e-8) - 0.01 * 0.1 * 1.0));
  CHECK(s.value("a.w_q")[1] == doctest::Approx(-2.0 + 0.01 * 4.0 / (4.0 + 1e-8) + 0.01 * 0.1 * 2.0));
  CHECK(s.value("a.bias")[0] == doctest::Approx(0.5 + 0.01));
  CHECK(s.step == 1);
}

TEST_CASE("gradient clipping") {
  std::mt19937_64 rng(70);
  for (int trial = 0; trial < 100; ++trial) {
    ParamStore s;
    s.add("x", Matrix(3, 4));
    s.add("y", Matrix(1, 5));
    s.grad("x") = random_matrix(3, 4, rng, 10.0);
    s.grad("y") = random_matrix(1, 5, rng, 10.0);
    const double bound = std::uniform_real_distribution<double>(0.01, 30.0)(rng);
    const double before = s.grad_norm();
    const double reported = clip_grad_norm(s, bound);
    CHECK(reported == before);
    REQUIRE(s.grad_norm() <= bound * (1.0 + 1e-12));
    if (before <= bound) CHECK(s.grad_norm() == before);
  }
}

TEST_CASE("cosine schedule") {
  CHECK(cosine_lr(0.1, 0, 100) == 0.1);
  CHECK(cosine_lr(0.1, 50, 100) == doctest::Approx(0.05));
  CHECK(cosine_lr(0.1, 100, 100) == doctest::Approx(0.0));
  for (std::uint64_t s = 1; s <= 100; ++s) CHECK(cosine_lr(0.1, s, 100) <= cosine_lr(0.1, s - 1, 100));
}

TEST_CASE("zero learning rate leaves parameters bit-identical") {
  TrainConfig c = tiny_config();
  c.optimizer.lr = 0.0;
  c.epochs = 1;
  const Model before = Model::create(c.model, c.seed);
  const TrainResult r = train(c, tiny_corpus());
  for (const auto& name : before.store().names()) {
    REQUIRE(r.model.store().value(name) == before.store().value(name));
  }
  CHECK(r.model.store().step == 5);
}

TEST_CASE("training is deterministic and lowers the loss") {
  TrainConfig c = tiny_config();
  c.epochs = 15;
  c.optimizer.lr = 5e-3;
  const Corpus corpus = tiny_corpus(40, 2);
  const TrainResult a = train(c, corpus);
  const TrainResult b = train(c, corpus);
  CHECK(a.step_losses == b.step_losses);
  REQUIRE(a.epochs.size() == 15);
  CHECK(a.epochs.back().mean_loss < 0.5 * a.epochs.front().mean_loss);
  c.seed = 6;
  CHECK(train(c, corpus).step_losses != a.step_losses);
}

TEST_CASE("a zero-gradient parameter does not move") {
  // Identical items give a constant similarity matrix; with B = 4 every
  // softmax probability is exactly 1/4 and the temperature gradient is 0.
  Corpus c = tiny_corpus(1, 3);
  for (int i = 1; i < 4; ++i) {
    CorpusItem copy = c.items[0];
    copy.id = "dup" + std::to_string(i);
    c.items.push_back(copy);
  }
  TrainConfig cfg = tiny_config();
  cfg.epochs = 1;
  Model m = Model::create(cfg.model, cfg.seed);
  std::vector<const CorpusItem*> batch;
  for (const auto& it : c.items) batch.push_back(&it);
  m.store().zero_grad();
  batch_forward_backward(m, batch);
  REQUIRE(m.store().grad(kTemperatureParam)[0] == 0.0);
  const double before = m.store().value(kTemperatureParam)[0];
  const TrainResult r = train_model(m, cfg, c);
  CHECK(r.model.store().value(kTemperatureParam)[0] == before);
}

TEST_CASE("non-finite loss aborts with the offending items") {
  Corpus c = tiny_corpus(8, 4);
  c.items[3].text[0] = std::numeric_limits<double>::quiet_NaN();
  TrainConfig cfg = tiny_config();
  cfg.batch_size = 8;
  CHECK_THROWS_WITH_AS(train(cfg, c), doctest::Contains(c.items[3].id.c_str()), TrainingDiverged);
}

TEST_CASE("training input validation") {
  TrainConfig cfg = tiny_config();
  cfg.model.dim = cfg.model.proj_dim = 6;
  CHECK_THROWS_AS(train(cfg, tiny_corpus()), DimensionError);
  cfg = tiny_config();
  cfg.frames = 7;
  CHECK_THROWS_AS(train(cfg, tiny_corpus()), DimensionError);
  cfg = tiny_config();
  cfg.batch_size = 50;
  CHECK_THROWS(train(cfg, tiny_corpus()));
  CHECK_THROWS(train(tiny_config(), Corpus{}));
}

TEST_CASE("untrained model retrieves at chance") {
  ModelConfig mc;
  mc.dim = mc.proj_dim = 8;
  Corpus c;
  c.items = toy_items(100, 8, 3, 5, 9);
  const EvalResult e = evaluate(Model::create(mc, 1), c, {});
  CHECK(e.t2v.r1 < 10.0);
}

TEST_CASE("synthetic corpus") {
  SynthConfig sc;
  sc.items = 50;
  sc.dim = 8;
  const Corpus a = synth_corpus(sc);
  const Corpus b = synth_corpus(sc);
  REQUIRE(a.size() == 50);
  for (std::size_t i = 0; i < 50; ++i) {
    REQUIRE(a.items[i].text == b.items[i].text);
    REQUIRE(a.items[i].frames == b.items[i].frames);
    REQUIRE(a.items[i].audio == b.items[i].audio);
  }
  CHECK_NOTHROW(a.validate());
  CHECK(a.has_summary_rows());
  for (std::size_t i = 1; i < 50; ++i) CHECK(a.items[i - 1].id < a.items[i].id);

  SUBCASE("p = 0 leaves audio uncorrelated with the text") {
    sc.audio_informative_fraction = 0.0;
    sc.items = 400;
    const Corpus c = synth_corpus(sc);
    // Best audio token cosine against the own text vs. against a random other
    // text: identical distributions when audio carries no text signal.
    double own = 0.0, other = 0.0;
    for (std::size_t i = 0; i < c.size(); ++i) {
      const Matrix pooled = column_mean(c.items[i].audio);
      own += cosine_similarity(c.items[i].text.data(), pooled.data()).value;
      other += cosine_similarity(c.items[(i + 1) % c.size()].text.data(), pooled.data()).value;
    }
    CHECK(std::abs(own - other) / static_cast<double>(c.size()) < 0.05);
  }
  SUBCASE("invalid fractions") {
    sc.audio_informative_fraction = 1.5;
    CHECK_THROWS(synth_corpus(sc));
    sc.audio_informative_fraction = -0.1;
    CHECK_THROWS(synth_corpus(sc));
  }
}
