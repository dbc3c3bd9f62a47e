// Copyright 2026 The TEFAL-Retrieval Authors
// SPDX-License-Identifier: Apache-2.0
//
// Corpus persistence: a JSON manifest plus EMB1 files next to it.
//
//   {
//     "version": 1,
//     "files": {"text": "text.emb1", "video": "video.emb1",
//               "audio": "audio.emb1", "audio_summary": "audio_summary.emb1"},
//     "items": [{"id": "...", "text": 0, "video": 0, "audio": 0 | null,
//                "has_audio": true, "audio_summary": [cls, dist]}, ...]
//   }
//
// File paths are relative to the manifest. "audio" and "audio_summary" may
// be absent from "files" when no item uses them. Summary indices point at
// single-row items of the audio_summary file.

#pragma once

#include <filesystem>
#include <string>

#include "tefal/corpus.h"

namespace tefal {

inline constexpr int kManifestVersion = 1;

/// Loads and validates a corpus. Items come back sorted by id; null audio is
/// materialized as zero tokens with has_audio = false.
Corpus load_corpus(const std::filesystem::path& manifest);

/// Writes `<dir>/manifest.json` and the EMB1 files, creating dir if needed.
/// Values are stored as f32. Returns the manifest path.
std::filesystem::path write_corpus(const std::filesystem::path& dir, const Corpus& corpus);

/// Copy of the corpus with every value rounded to f32.
Corpus round_to_f32(const Corpus& corpus);

}  // namespace tefal
