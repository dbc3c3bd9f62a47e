// Copyright 2026 The TEFAL-Retrieval Authors
// SPDX-License-Identifier: Apache-2.0
//
// Brute-force reference implementations shared by the unit and acceptance
// tests. Deliberately naive; none of them call into the library's ranking code.

#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstddef>
#include <numbers>
#include <utility>
#include <vector>

namespace tefal::oracle {

// Rank (1-based) of `target` after fully sorting (-score, index) pairs.
inline std::size_t sort_rank(const std::vector<double>& scores, std::size_t target) {
  std::vector<std::pair<double, std::size_t>> keyed;
  for (std::size_t j = 0; j < scores.size(); ++j) keyed.emplace_back(-scores[j], j);
  std::sort(keyed.begin(), keyed.end());
  for (std::size_t p = 0; p < keyed.size(); ++p) {
    if (keyed[p].second == target) return p + 1;
  }
  return 0;
}

struct Metrics {
  double r1, r5, r10, mdr, mnr;
};

inline Metrics count_metrics(std::vector<std::size_t> ranks) {
  Metrics m{};
  std::size_t a = 0, b = 0, c = 0;
  double total = 0.0;
  for (std::size_t r : ranks) {
    if (r <= 1) ++a;
    if (r <= 5) ++b;
    if (r <= 10) ++c;
    total += static_cast<double>(r);
  }
  const double n = static_cast<double>(ranks.size());
  m.r1 = 100.0 * static_cast<double>(a) / n;
  m.r5 = 100.0 * static_cast<double>(b) / n;
  m.r10 = 100.0 * static_cast<double>(c) / n;
  m.mnr = total / n;
  std::sort(ranks.begin(), ranks.end());
  m.mdr = static_cast<double>(ranks[(ranks.size() - 1) / 2]);
  return m;
}

// Reference pipeline for one frame: naive O(N^2) DFT, own mel triangles.
inline std::vector<double> log_mel_frame(const std::vector<double>& samples, std::size_t start,
                                                 std::size_t n_mels) {
  const std::size_t win = 400, nfft = 512;
  std::vector<double> frame(nfft, 0.0);
  for (std::size_t i = 0; i < win; ++i) {
    const double h = 0.54 - 0.46 * std::cos(2.0 * std::numbers::pi * static_cast<double>(i) / 399.0);
    if (start + i < samples.size()) frame[i] = samples[start + i] * h;
  }
  std::vector<double> mag(nfft / 2 + 1);
  for (std::size_t k = 0; k < mag.size(); ++k) {
    std::complex<double> acc = 0.0;
    for (std::size_t n = 0; n < nfft; ++n) {
      acc += frame[n] * std::polar(1.0, -2.0 * std::numbers::pi * static_cast<double>(k * n) / nfft);
    }
    mag[k] = std::abs(acc);
  }
  auto mel = [](double f) { return 2595.0 * std::log10(1.0 + f / 700.0); };
  const double top = mel(8000.0);
  std::vector<double> out(n_mels);
  for (std::size_t m = 0; m < n_mels; ++m) {
    const double lo = top * m / (n_mels + 1.0), c = top * (m + 1) / (n_mels + 1.0),
                 hi = top * (m + 2) / (n_mels + 1.0);
    double e = 0.0;
    for (std::size_t k = 0; k < mag.size(); ++k) {
      const double x = mel(k * 16000.0 / nfft);
      double wgt = 0.0;
      if (x > lo && x <= c) wgt = (x - lo) / (c - lo);
      if (x > c && x < hi) wgt = (hi - x) / (hi - c);
      e += wgt * mag[k];
    }
    out[m] = std::log(std::max(e, 1e-10));
  }
  return out;
}

}  // namespace tefal::oracle
