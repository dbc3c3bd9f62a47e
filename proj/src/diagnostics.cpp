// Copyright 2026 The TEFAL-Retrieval Authors
// SPDX-License-Identifier: Apache-2.0

#include "tefal/diagnostics.h"

#include <algorithm>
#include <random>

#include "tefal/grad_check.h"
#include "tefal/objective.h"
#include "tefal/ops.h"

namespace tefal {

std::vector<CorpusItem> toy_items(std::size_t count, std::size_t dim, std::size_t frames,
                                  std::size_t audio_tokens, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::vector<CorpusItem> items;
  for (std::size_t i = 0; i < count; ++i) {
    CorpusItem it;
    it.id = "toy" + std::to_string(i);
    it.text = random_matrix(1, dim, rng);
    it.frames = random_matrix(frames, dim, rng);
    it.audio = random_matrix(audio_tokens, dim, rng);
    it.audio_summary_rows = random_matrix(2, dim, rng);
    items.push_back(std::move(it));
  }
  return items;
}

double model_grad_check(const Model& model, const std::vector<CorpusItem>& batch, double step) {
  std::vector<const CorpusItem*> ptrs;
  for (const CorpusItem& it : batch) ptrs.push_back(&it);

  Model work = model;
  work.store().zero_grad();
  batch_forward_backward(work, ptrs);
  const ParamStore analytic = work.store();

  double worst = 0.0;
  for (const std::string& name : analytic.names()) {
    Matrix& value = work.store().value(name);
    for (std::size_t k = 0; k < value.size(); ++k) {
      const double saved = value[k];
      value[k] = saved + step;
      work.refresh();
      const double up = batch_loss(work, ptrs).loss;
      value[k] = saved - step;
      work.refresh();
      const double down = batch_loss(work, ptrs).loss;
      value[k] = saved;
      const double numeric = (up - down) / (2.0 * step);
      worst = std::max(worst, relative_error(analytic.grad(name)[k], numeric));
    }
  }
  work.refresh();
  return worst;
}

double xattn_grad_check(const XAttnParams& params, const Matrix& text, const Matrix& context,
                        double step, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  const Matrix weights = random_matrix(1, params.proj_dim, rng);

  XAttnParams grads = XAttnParams::zeros_like(params);
  const QueryState q = encode_query(params, text);
  const ContextState c = encode_context(params, context);
  const PairState pair = attend_pair(params, q, c);
  PairGrad pg = backward_pair(params, q, c, pair, weights, grads);
  backward_query(params, q, pg.d_q, grads);
  backward_context(params, c, pg.d_k, pg.d_v, grads);

  std::vector<Matrix> point, analytic;
  XAttnParams::visit(params, [&](const char*, const Matrix& m) { point.push_back(m); });
  XAttnParams::visit(grads, [&](const char*, const Matrix& m) { analytic.push_back(m); });

  auto f = [&](std::span<const Matrix> x) {
    XAttnParams p = params;
    std::size_t idx = 0;
    XAttnParams::visit(p, [&](const char*, Matrix& m) { m = x[idx++]; });
    return dot(weights.data(), conditioned_embedding(p, text, context).data());
  };
  return finite_difference_check(f, point, analytic, step);
}

std::vector<GradCheckEntry> run_gradcheck_suite(std::uint64_t seed, double step) {
  constexpr double kPrimitive = 1e-4;
  constexpr double kEndToEnd = 1e-3;
  std::mt19937_64 rng(seed);
  std::vector<GradCheckEntry> out;

  {
    const Matrix mm[] = {random_matrix(3, 4, rng), random_matrix(4, 2, rng)};
    out.push_back({"matmul", grad_check(GradOp::kMatmul, mm, step, seed), kPrimitive});
    const Matrix sm[] = {random_matrix(2, 5, rng, 2.0)};
    out.push_back({"softmax_rows", grad_check(GradOp::kSoftmaxRows, sm, step, seed), kPrimitive});
    const Matrix ln[] = {random_matrix(2, 8, rng, 2.0), random_matrix(1, 8, rng),
                         random_matrix(1, 8, rng)};
    out.push_back(
        {"layernorm_rows", grad_check(GradOp::kLayerNormRows, ln, step, seed), kPrimitive});
  }
  {
    const Matrix a = random_matrix(1, 6, rng), b = random_matrix(1, 6, rng);
    const double up = 0.7;
    CosineGrad g = cosine_similarity_backward(a, b, up);
    const Matrix pt[] = {a, b};
    const Matrix an[] = {g.da, g.db};
    auto f = [&](std::span<const Matrix> x) {
      return up * cosine_similarity(x[0].data(), x[1].data()).value;
    };
    out.push_back({"cosine_similarity", finite_difference_check(f, pt, an, step), kPrimitive});
  }
  {
    const Matrix sim = random_matrix(6, 6, rng);
    const Temperature temp = Temperature::from_tau(3.0);
    InfoNceResult r = infonce(sim, temp);
    const Matrix pt[] = {sim, Matrix(1, 1, temp.log_scale())};
    const Matrix an[] = {r.d_sim, Matrix(1, 1, r.d_log_scale)};
    auto f = [&](std::span<const Matrix> x) {
      return infonce(x[0], Temperature::from_log_scale(x[1][0])).loss;
    };
    out.push_back({"infonce", finite_difference_check(f, pt, an, step), kPrimitive});
  }
  {
    XAttnParams p = XAttnParams::init(8, 4, rng);
    // Non-trivial LayerNorm affines so their gradients are exercised.
    p.ln_query_gain = random_matrix(1, 8, rng, 1.5);
    p.ln_context_bias = random_matrix(1, 8, rng, 0.3);
    p.ln_out_gain = random_matrix(1, 4, rng, 1.5);
    out.push_back({"xattn_block",
                   xattn_grad_check(p, random_matrix(1, 8, rng), random_matrix(5, 8, rng), step,
                                    seed),
                   kPrimitive});
  }

  const std::vector<CorpusItem> batch = toy_items(2, 8, 3, 5, seed + 11);
  struct Variant {
    const char* name;
    FusionKind fusion;
    Branches branches;
  };
  const Variant variants[] = {
      {"model[addition]", FusionKind::kAddition, Branches::kAudioVideo},
      {"model[late]", FusionKind::kLateFusion, Branches::kAudioVideo},
      {"model[concat_fc]", FusionKind::kConcatFC, Branches::kAudioVideo},
      {"model[xattn]", FusionKind::kXAttnFusion, Branches::kAudioVideo},
      {"model[stacking]", FusionKind::kStacking, Branches::kAudioVideo},
      {"model[video-only]", FusionKind::kAddition, Branches::kVideoOnly},
      {"model[audio-only]", FusionKind::kAddition, Branches::kAudioOnly},
  };
  for (const Variant& v : variants) {
    ModelConfig cfg;
    cfg.dim = cfg.proj_dim = 8;
    cfg.fusion = v.fusion;
    cfg.branches = v.branches;
    cfg.temperature_init = 5.0;
    Model model = Model::create(cfg, seed);
    out.push_back({v.name, model_grad_check(model, batch, step), kEndToEnd});
  }
  return out;
}

}  // namespace tefal
