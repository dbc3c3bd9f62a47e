// Copyright 2026 The TEFAL-Retrieval Authors
// SPDX-License-Identifier: Apache-2.0
//
// Little-endian binary helpers and the EMB1 embedding container:
//
//   "EMB1" | u32 version | u32 item_count | u32 rows_per_item | u32 cols
//   | item_count * rows_per_item * cols f32 | u32 CRC32 of all preceding bytes

#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "tefal/matrix.h"

namespace tefal {

/// Malformed, truncated or corrupted file contents.
class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

std::uint32_t crc32(std::span<const std::uint8_t> bytes);

class ByteWriter {
 public:
  void bytes(std::string_view s);
  void u16(std::uint16_t v);
  void u32(std::uint32_t v);
  void f32(float v);
  /// Appends the CRC32 of everything written so far.
  void seal();
  const std::vector<std::uint8_t>& buffer() const { return buf_; }
  std::vector<std::uint8_t> take() { return std::move(buf_); }

 private:
  std::vector<std::uint8_t> buf_;
};

class ByteReader {
 public:
  /// Verifies and strips the trailing CRC32. `what` names the format in errors.
  ByteReader(std::span<const std::uint8_t> sealed, std::string what);

  void expect_magic(std::string_view magic);
  std::string bytes(std::size_t n);
  std::uint16_t u16();
  std::uint32_t u32();
  float f32();
  std::size_t remaining() const { return body_.size() - at_; }
  void expect_end() const;

 private:
  void need(std::size_t n) const;
  std::span<const std::uint8_t> body_;
  std::size_t at_ = 0;
  std::string what_;
};

std::vector<std::uint8_t> read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, std::span<const std::uint8_t> bytes);
void write_text_file(const std::filesystem::path& path, std::string_view text);

inline constexpr std::uint32_t kEmb1Version = 1;

/// A stack of equally shaped f32 matrices.
struct EmbeddingFile {
  std::uint32_t rows_per_item = 0;
  std::uint32_t cols = 0;
  std::vector<float> data;

  EmbeddingFile() = default;
  EmbeddingFile(std::uint32_t rows, std::uint32_t columns);

  std::size_t item_count() const;
  /// Item i widened to double.
  Matrix item(std::size_t i) const;
  /// Appends m (rounded to f32); returns its index.
  std::size_t append(const Matrix& m);

  bool operator==(const EmbeddingFile&) const = default;
};

std::vector<std::uint8_t> encode_emb1(const EmbeddingFile& f);
EmbeddingFile decode_emb1(std::span<const std::uint8_t> bytes);
void write_emb1(const std::filesystem::path& path, const EmbeddingFile& f);
EmbeddingFile read_emb1(const std::filesystem::path& path);

}  // namespace tefal
