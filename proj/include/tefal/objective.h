// Copyright 2026 The TEFAL-Retrieval Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <span>

#include "tefal/matrix.h"

namespace tefal {

struct CosineResult {
  double value = 0.0;
  bool degenerate = false;  // one of the vectors had zero norm; value is 0
};

CosineResult cosine_similarity(std::span<const double> a, std::span<const double> b);

struct CosineGrad {
  Matrix da;
  Matrix db;
};

/// Gradient of upstream * cos(a, b). Zero for degenerate inputs.
CosineGrad cosine_similarity_backward(const Matrix& a, const Matrix& b, double upstream);

/// Learnable logit scale tau = exp(log_scale), kept inside [kMin, kMax].
class Temperature {
 public:
  static constexpr double kMin = 1.0;
  static constexpr double kMax = 100.0;
  static constexpr double kDefaultTau = 1.0 / 0.07;

  Temperature() : Temperature(from_tau(kDefaultTau)) {}
  static Temperature from_tau(double tau);
  static Temperature from_log_scale(double log_scale);

  double log_scale() const { return log_scale_; }
  double tau() const;

 private:
  explicit Temperature(double log_scale, int) : log_scale_(log_scale) {}
  double log_scale_;
};

double clamp_log_scale(double log_scale);

struct InfoNceResult {
  double loss = 0.0;
  double loss_t2v = 0.0;
  double loss_v2t = 0.0;
  Matrix d_sim;        // dL/dsim
  double d_tau = 0.0;  // dL/dtau
  double d_log_scale = 0.0;
};

/// Symmetric InfoNCE over a B x B similarity matrix whose diagonal holds the
/// positive pairs: L = L_t2v (row-wise) + L_v2t (column-wise), each averaged
/// over B, with logits sim * tau.
InfoNceResult infonce(const Matrix& sim, const Temperature& temp);

}  // namespace tefal
