// Copyright 2026 The TEFAL-Retrieval Authors
// SPDX-License-Identifier: Apache-2.0

#include "tefal/dataset.h"

#include <algorithm>
#include <numeric>
#include <optional>
#include <stdexcept>

#include "json.hpp"
#include "tefal/io.h"
#include "tefal/ops.h"

namespace tefal {

namespace {

using json = nlohmann::ordered_json;

std::size_t index_value(const json& v, const char* key, const EmbeddingFile& file,
                        const std::string& id) {
  if (!v.is_number_unsigned()) {
    throw std::invalid_argument("manifest item " + id + ": '" + key + "' must be a non-negative integer");
  }
  const auto idx = v.get<std::size_t>();
  if (idx >= file.item_count()) {
    throw std::out_of_range("manifest item " + id + ": " + key + " index " + std::to_string(idx) +
                            " out of range (" + std::to_string(file.item_count()) + " items)");
  }
  return idx;
}

std::size_t index_field(const json& item, const char* key, const EmbeddingFile& file,
                        const std::string& id) {
  return index_value(item.at(key), key, file, id);
}

Matrix rounded(const Matrix& m) {
  Matrix r = m;
  for (std::size_t i = 0; i < r.size(); ++i) r[i] = static_cast<double>(static_cast<float>(r[i]));
  return r;
}

}  // namespace

Corpus load_corpus(const std::filesystem::path& manifest) {
  const auto base = manifest.parent_path();
  json doc;
  try {
    const auto bytes = read_file(manifest);
    doc = json::parse(bytes.begin(), bytes.end());
  } catch (const json::exception& e) {
    throw FormatError(manifest.string() + ": invalid JSON: " + e.what());
  }

  try {
    if (doc.value("version", 0) != kManifestVersion) {
      throw FormatError(manifest.string() + ": unsupported manifest version");
    }
    const json& files = doc.at("files");
    auto open = [&](const char* key) -> std::optional<EmbeddingFile> {
      if (!files.contains(key) || files.at(key).is_null()) return std::nullopt;
      return read_emb1(base / files.at(key).get<std::string>());
    };
    const std::optional<EmbeddingFile> text = open("text");
    const std::optional<EmbeddingFile> video = open("video");
    const std::optional<EmbeddingFile> audio = open("audio");
    const std::optional<EmbeddingFile> summary = open("audio_summary");
    const json& items = doc.at("items");
    if (!items.is_array()) throw FormatError(manifest.string() + ": 'items' must be an array");

    Corpus corpus;
    if (items.empty()) return corpus;
    if (!text || !video) throw FormatError(manifest.string() + ": text and video files are required");
    if (text->rows_per_item != 1) throw DimensionError("text file must hold one row per item");
    const std::size_t dim = text->cols;
    auto check_width = [&](const std::optional<EmbeddingFile>& f, const char* what) {
      if (f && f->cols != dim) {
        throw DimensionError(std::string(what) + " width " + std::to_string(f->cols) +
                             " disagrees with text width " + std::to_string(dim));
      }
    };
    check_width(video, "video");
    check_width(audio, "audio");
    check_width(summary, "audio_summary");
    if (summary && summary->rows_per_item != 1) {
      throw DimensionError("audio_summary file must hold one row per entry");
    }
    const std::size_t tokens = audio ? audio->rows_per_item : 1;

    for (const json& entry : items) {
      CorpusItem it;
      it.id = entry.at("id").get<std::string>();
      it.text = text->item(index_field(entry, "text", *text, it.id));
      it.frames = video->item(index_field(entry, "video", *video, it.id));
      const bool has_audio = entry.at("has_audio").get<bool>();
      const bool null_audio = !entry.contains("audio") || entry.at("audio").is_null();
      if (has_audio == null_audio) {
        throw std::invalid_argument("manifest item " + it.id + ": has_audio disagrees with the audio index");
      }
      it.has_audio = has_audio;
      if (has_audio) {
        if (!audio) throw FormatError(manifest.string() + ": items reference audio but no audio file is listed");
        it.audio = audio->item(index_field(entry, "audio", *audio, it.id));
      } else {
        it.audio = Matrix(tokens, dim);
      }
      if (entry.contains("audio_summary") && !entry.at("audio_summary").is_null()) {
        const json& pair = entry.at("audio_summary");
        if (!summary) throw FormatError(manifest.string() + ": audio_summary used but no file listed");
        if (!pair.is_array() || pair.size() != 2) {
          throw std::invalid_argument("manifest item " + it.id + ": audio_summary must be [cls, dist]");
        }
        it.audio_summary_rows =
            vstack(summary->item(index_value(pair[0], "audio_summary", *summary, it.id)),
                   summary->item(index_value(pair[1], "audio_summary", *summary, it.id)));
      }
      corpus.items.push_back(std::move(it));
    }
    std::vector<std::size_t> order(corpus.items.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
      return corpus.items[a].id < corpus.items[b].id;
    });
    Corpus sorted;
    for (std::size_t i : order) sorted.items.push_back(std::move(corpus.items[i]));
    sorted.validate();
    return sorted;
  } catch (const json::exception& e) {
    throw FormatError(manifest.string() + ": malformed manifest: " + e.what());
  }
}

std::filesystem::path write_corpus(const std::filesystem::path& dir, const Corpus& corpus) {
  corpus.validate();
  std::filesystem::create_directories(dir);
  json doc;
  doc["version"] = kManifestVersion;
  json files = json::object();
  json items = json::array();
  if (!corpus.empty()) {
    const CorpusItem& first = corpus.items.front();
    const auto d = static_cast<std::uint32_t>(corpus.dim());
    EmbeddingFile text(1, d), video(static_cast<std::uint32_t>(first.frames.rows()), d),
        audio(static_cast<std::uint32_t>(first.audio.rows()), d), summary(1, d);
    for (const CorpusItem& it : corpus.items) {
      json e;
      e["id"] = it.id;
      e["text"] = text.append(it.text);
      e["video"] = video.append(it.frames);
      if (it.has_audio) {
        e["audio"] = audio.append(it.audio);
      } else {
        e["audio"] = nullptr;
      }
      e["has_audio"] = it.has_audio;
      if (it.audio_summary_rows) {
        const std::size_t c = summary.append(Matrix::row_vector(it.audio_summary_rows->row(0)));
        const std::size_t s = summary.append(Matrix::row_vector(it.audio_summary_rows->row(1)));
        e["audio_summary"] = json::array({c, s});
      }
      items.push_back(std::move(e));
    }
    write_emb1(dir / "text.emb1", text);
    write_emb1(dir / "video.emb1", video);
    files["text"] = "text.emb1";
    files["video"] = "video.emb1";
    if (audio.item_count() > 0) {
      write_emb1(dir / "audio.emb1", audio);
      files["audio"] = "audio.emb1";
    }
    if (summary.item_count() > 0) {
      write_emb1(dir / "audio_summary.emb1", summary);
      files["audio_summary"] = "audio_summary.emb1";
    }
  }
  doc["files"] = std::move(files);
  doc["items"] = std::move(items);
  const auto path = dir / "manifest.json";
  write_text_file(path, doc.dump(2) + "\n");
  return path;
}

Corpus round_to_f32(const Corpus& corpus) {
  Corpus out = corpus;
  for (CorpusItem& it : out.items) {
    it.text = rounded(it.text);
    it.frames = rounded(it.frames);
    it.audio = rounded(it.audio);
    if (it.audio_summary_rows) it.audio_summary_rows = rounded(*it.audio_summary_rows);
  }
  return out;
}

}  // namespace tefal
