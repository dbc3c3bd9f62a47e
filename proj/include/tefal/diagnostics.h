// Copyright 2026 The TEFAL-Retrieval Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "tefal/corpus.h"
#include "tefal/model.h"

namespace tefal {

/// Random toy items (summary rows included) for gradient checks.
std::vector<CorpusItem> toy_items(std::size_t count, std::size_t dim, std::size_t frames,
                                  std::size_t audio_tokens, std::uint64_t seed);

/// Max relative error between batch_forward_backward's gradient and central
/// differences of batch_loss, over every coordinate of every parameter.
double model_grad_check(const Model& model, const std::vector<CorpusItem>& batch, double step);

/// Max relative error of the single-block conditioned embedding gradient
/// (projection objective sum(R .* out)) over every XAttnParams tensor.
double xattn_grad_check(const XAttnParams& params, const Matrix& text, const Matrix& context,
                        double step, std::uint64_t seed);

struct GradCheckEntry {
  std::string name;
  double max_relative_error = 0.0;
  double threshold = 0.0;
  bool passed() const { return max_relative_error < threshold; }
};

/// Every primitive, the objective pieces, the attention block and the
/// end-to-end model under each fusion kind and branch ablation.
std::vector<GradCheckEntry> run_gradcheck_suite(std::uint64_t seed, double step = 1e-5);

}  // namespace tefal
