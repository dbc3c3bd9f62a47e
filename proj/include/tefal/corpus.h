// Copyright 2026 The TEFAL-Retrieval Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <optional>
#include <string>
#include <vector>

#include "tefal/matrix.h"

namespace tefal {

/// One aligned text / video / audio triple. Item i's text is the ground-truth
/// query for item i's video.
struct CorpusItem {
  std::string id;
  Matrix text;    // 1 x D text CLS embedding
  Matrix frames;  // F x D per-frame CLS embeddings
  Matrix audio;   // N_a x D patch embeddings; all zero when has_audio is false
  bool has_audio = true;
  // 2 x D rows (audio CLS, audio DIST), only needed by the stacking fusion.
  std::optional<Matrix> audio_summary_rows;
};

struct Corpus {
  std::vector<CorpusItem> items;

  bool empty() const { return items.empty(); }
  std::size_t size() const { return items.size(); }
  /// Embedding width shared by every item (0 when empty).
  std::size_t dim() const;
  bool has_summary_rows() const;
  std::size_t audio_count() const;

  /// Checks widths agree, ids are unique, text rows are single rows and
  /// missing-audio items really are zero.
  void validate() const;
};

}  // namespace tefal
