// Copyright 2026 The TEFAL-Retrieval Authors
// SPDX-License-Identifier: Apache-2.0

#include "tefal/objective.h"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <vector>

#include "tefal/ops.h"

namespace tefal {

CosineResult cosine_similarity(std::span<const double> a, std::span<const double> b) {
  const double ab = dot(a, b);
  const double na = std::sqrt(dot(a, a));
  const double nb = std::sqrt(dot(b, b));
  if (na == 0.0 || nb == 0.0) return {0.0, true};
  return {std::clamp(ab / (na * nb), -1.0, 1.0), false};
}

CosineGrad cosine_similarity_backward(const Matrix& a, const Matrix& b, double upstream) {
  require_same_shape(a, b, "cosine_similarity_backward");
  CosineGrad g{Matrix(a.rows(), a.cols()), Matrix(b.rows(), b.cols())};
  const double na = std::sqrt(dot(a.data(), a.data()));
  const double nb = std::sqrt(dot(b.data(), b.data()));
  if (na == 0.0 || nb == 0.0) return g;
  const double c = dot(a.data(), b.data()) / (na * nb);
  const double inv = 1.0 / (na * nb);
  for (std::size_t i = 0; i < a.size(); ++i) {
    g.da[i] = upstream * (b[i] * inv - c * a[i] / (na * na));
    g.db[i] = upstream * (a[i] * inv - c * b[i] / (nb * nb));
  }
  return g;
}

double clamp_log_scale(double log_scale) {
  return std::clamp(log_scale, std::log(Temperature::kMin), std::log(Temperature::kMax));
}

Temperature Temperature::from_tau(double tau) {
  if (!(tau > 0.0)) throw std::invalid_argument("temperature must be positive");
  return Temperature(clamp_log_scale(std::log(tau)), 0);
}

Temperature Temperature::from_log_scale(double log_scale) {
  if (!std::isfinite(log_scale)) throw std::invalid_argument("temperature log-scale not finite");
  return Temperature(clamp_log_scale(log_scale), 0);
}

double Temperature::tau() const { return std::exp(log_scale_); }

namespace {

// Cross-entropy of logits[0..n) against index target; fills probs. The same
// routine serves rows and columns so that transposition is exact.
template <typename Get>
double cross_entropy(std::size_t n, std::size_t target, Get&& logit, std::vector<double>& probs) {
  double mx = logit(0);
  for (std::size_t j = 1; j < n; ++j) mx = std::max(mx, logit(j));
  double total = 0.0;
  for (std::size_t j = 0; j < n; ++j) {
    probs[j] = std::exp(logit(j) - mx);
    total += probs[j];
  }
  for (std::size_t j = 0; j < n; ++j) probs[j] /= total;
  return -(logit(target) - mx - std::log(total));
}

}  // namespace

InfoNceResult infonce(const Matrix& sim, const Temperature& temp) {
  if (sim.empty() || sim.rows() != sim.cols()) {
    throw DimensionError("infonce: similarity matrix must be square, got " + sim.shape_string());
  }
  const std::size_t b = sim.rows();
  const double tau = temp.tau();
  const double inv_b = 1.0 / static_cast<double>(b);
  InfoNceResult res;
  res.d_sim = Matrix(b, b);
  // dL/dlogit accumulated here and converted to d_sim at the end.
  Matrix d_logits(b, b);
  std::vector<double> probs(b);

  double t2v = 0.0;
  for (std::size_t i = 0; i < b; ++i) {
    t2v += cross_entropy(b, i, [&](std::size_t j) { return sim(i, j) * tau; }, probs);
    for (std::size_t j = 0; j < b; ++j) {
      const double g = (probs[j] - (i == j ? 1.0 : 0.0)) * inv_b;
      d_logits(i, j) += g;
      // each row of g sums to zero, so measuring sim from the diagonal is exact
      res.d_tau += g * (sim(i, j) - sim(i, i));
    }
  }
  double v2t = 0.0;
  for (std::size_t i = 0; i < b; ++i) {
    v2t += cross_entropy(b, i, [&](std::size_t j) { return sim(j, i) * tau; }, probs);
    for (std::size_t j = 0; j < b; ++j) {
      const double g = (probs[j] - (i == j ? 1.0 : 0.0)) * inv_b;
      d_logits(j, i) += g;
      res.d_tau += g * (sim(j, i) - sim(i, i));
    }
  }
  res.loss_t2v = t2v * inv_b;
  res.loss_v2t = v2t * inv_b;
  res.loss = res.loss_t2v + res.loss_v2t;

  for (std::size_t k = 0; k < d_logits.size(); ++k) {
    res.d_sim[k] = d_logits[k] * tau;
  }
  res.d_log_scale = res.d_tau * tau;
  return res;
}

}  // namespace tefal
