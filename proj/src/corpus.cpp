// Copyright 2026 The TEFAL-Retrieval Authors
// SPDX-License-Identifier: Apache-2.0

#include "tefal/corpus.h"

#include <algorithm>
#include <stdexcept>
#include <unordered_set>

namespace tefal {

std::size_t Corpus::dim() const { return items.empty() ? 0 : items.front().text.cols(); }

bool Corpus::has_summary_rows() const {
  return !items.empty() && std::all_of(items.begin(), items.end(), [](const CorpusItem& it) {
    return it.audio_summary_rows.has_value();
  });
}

std::size_t Corpus::audio_count() const {
  return static_cast<std::size_t>(std::count_if(
      items.begin(), items.end(), [](const CorpusItem& it) { return it.has_audio; }));
}

void Corpus::validate() const {
  const std::size_t d = dim();
  std::unordered_set<std::string> seen;
  for (const CorpusItem& it : items) {
    if (!seen.insert(it.id).second) throw std::invalid_argument("duplicate item id '" + it.id + "'");
    auto check = [&](const Matrix& m, const char* what) {
      if (m.empty() || m.cols() != d) {
        throw DimensionError("item '" + it.id + "': " + what + " has shape " + m.shape_string() +
                             ", expected width " + std::to_string(d));
      }
    };
    check(it.text, "text");
    check(it.frames, "frames");
    check(it.audio, "audio");
    if (it.text.rows() != 1) {
      throw DimensionError("item '" + it.id + "': text must be one row");
    }
    if (it.audio_summary_rows) {
      check(*it.audio_summary_rows, "audio summary rows");
      if (it.audio_summary_rows->rows() != 2) {
        throw DimensionError("item '" + it.id + "': audio summary must be 2 rows (CLS, DIST)");
      }
    }
    if (!it.has_audio &&
        std::any_of(it.audio.data().begin(), it.audio.data().end(), [](double v) { return v != 0.0; })) {
      throw std::invalid_argument("item '" + it.id + "': flagged missing audio but tokens are nonzero");
    }
  }
}

}  // namespace tefal
