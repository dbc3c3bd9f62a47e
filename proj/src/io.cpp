// Copyright 2026 The TEFAL-Retrieval Authors
// SPDX-License-Identifier: Apache-2.0

#include "tefal/io.h"

#include <zlib.h>

#include <bit>
#include <fstream>
#include <iterator>
#include <limits>

namespace tefal {

static_assert(std::numeric_limits<float>::is_iec559, "f32 payloads assume IEEE-754 floats");

std::uint32_t crc32(std::span<const std::uint8_t> bytes) {
  uLong crc = ::crc32(0L, Z_NULL, 0);
  std::size_t at = 0;
  while (at < bytes.size()) {
    const auto chunk = static_cast<uInt>(std::min<std::size_t>(bytes.size() - at, 1U << 30));
    crc = ::crc32(crc, bytes.data() + at, chunk);
    at += chunk;
  }
  return static_cast<std::uint32_t>(crc);
}

void ByteWriter::bytes(std::string_view s) {
  buf_.insert(buf_.end(), s.begin(), s.end());
}

void ByteWriter::u16(std::uint16_t v) {
  buf_.push_back(static_cast<std::uint8_t>(v));
  buf_.push_back(static_cast<std::uint8_t>(v >> 8));
}

void ByteWriter::u32(std::uint32_t v) {
  for (int i = 0; i < 4; ++i) buf_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

void ByteWriter::f32(float v) { u32(std::bit_cast<std::uint32_t>(v)); }

void ByteWriter::seal() { u32(crc32(buf_)); }

ByteReader::ByteReader(std::span<const std::uint8_t> sealed, std::string what)
    : what_(std::move(what)) {
  if (sealed.size() < 4) throw FormatError(what_ + ": file too short");
  body_ = sealed.first(sealed.size() - 4);
  const auto* t = sealed.data() + body_.size();
  const std::uint32_t stored = static_cast<std::uint32_t>(t[0]) | (static_cast<std::uint32_t>(t[1]) << 8) |
                               (static_cast<std::uint32_t>(t[2]) << 16) |
                               (static_cast<std::uint32_t>(t[3]) << 24);
  if (crc32(body_) != stored) throw FormatError(what_ + ": CRC32 mismatch (file corrupted)");
}

void ByteReader::need(std::size_t n) const {
  if (remaining() < n) throw FormatError(what_ + ": truncated");
}

void ByteReader::expect_magic(std::string_view magic) {
  if (bytes(magic.size()) != magic) {
    throw FormatError(what_ + ": bad magic, expected \"" + std::string(magic) + "\"");
  }
}

std::string ByteReader::bytes(std::size_t n) {
  need(n);
  std::string s(body_.begin() + static_cast<std::ptrdiff_t>(at_),
                body_.begin() + static_cast<std::ptrdiff_t>(at_ + n));
  at_ += n;
  return s;
}

std::uint16_t ByteReader::u16() {
  need(2);
  const auto v = static_cast<std::uint16_t>(body_[at_] | (body_[at_ + 1] << 8));
  at_ += 2;
  return v;
}

std::uint32_t ByteReader::u32() {
  need(4);
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(body_[at_ + i]) << (8 * i);
  at_ += 4;
  return v;
}

float ByteReader::f32() { return std::bit_cast<float>(u32()); }

void ByteReader::expect_end() const {
  if (remaining() != 0) {
    throw FormatError(what_ + ": " + std::to_string(remaining()) + " unexpected trailing bytes");
  }
}

std::vector<std::uint8_t> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_file(const std::filesystem::path& path, std::span<const std::uint8_t> bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw std::runtime_error("write failed: " + path.string());
}

void write_text_file(const std::filesystem::path& path, std::string_view text) {
  write_file(path, std::span(reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
}

EmbeddingFile::EmbeddingFile(std::uint32_t rows, std::uint32_t columns)
    : rows_per_item(rows), cols(columns) {
  if (rows == 0 || columns == 0) throw DimensionError("EMB1 items need positive rows and cols");
}

std::size_t EmbeddingFile::item_count() const {
  const std::size_t per = static_cast<std::size_t>(rows_per_item) * cols;
  return per == 0 ? 0 : data.size() / per;
}

Matrix EmbeddingFile::item(std::size_t i) const {
  if (i >= item_count()) {
    throw std::out_of_range("EMB1 item " + std::to_string(i) + " out of range (" +
                            std::to_string(item_count()) + " items)");
  }
  Matrix m(rows_per_item, cols);
  const std::size_t base = i * m.size();
  for (std::size_t k = 0; k < m.size(); ++k) m[k] = static_cast<double>(data[base + k]);
  return m;
}

std::size_t EmbeddingFile::append(const Matrix& m) {
  if (m.rows() != rows_per_item || m.cols() != cols) {
    throw DimensionError("EMB1 append: expected " + std::to_string(rows_per_item) + "x" +
                         std::to_string(cols) + ", got " + m.shape_string());
  }
  for (std::size_t k = 0; k < m.size(); ++k) data.push_back(static_cast<float>(m[k]));
  return item_count() - 1;
}

std::vector<std::uint8_t> encode_emb1(const EmbeddingFile& f) {
  const std::size_t per = static_cast<std::size_t>(f.rows_per_item) * f.cols;
  if (per == 0 || f.data.size() % per != 0) throw DimensionError("EMB1: payload does not match shape");
  if (f.item_count() > std::numeric_limits<std::uint32_t>::max()) {
    throw DimensionError("EMB1: too many items");
  }
  ByteWriter w;
  w.bytes("EMB1");
  w.u32(kEmb1Version);
  w.u32(static_cast<std::uint32_t>(f.item_count()));
  w.u32(f.rows_per_item);
  w.u32(f.cols);
  for (float v : f.data) w.f32(v);
  w.seal();
  return w.take();
}

EmbeddingFile decode_emb1(std::span<const std::uint8_t> bytes) {
  ByteReader r(bytes, "EMB1");
  r.expect_magic("EMB1");
  const std::uint32_t version = r.u32();
  if (version != kEmb1Version) throw FormatError("EMB1: unsupported version " + std::to_string(version));
  const std::uint32_t count = r.u32();
  EmbeddingFile f;
  f.rows_per_item = r.u32();
  f.cols = r.u32();
  if (f.rows_per_item == 0 || f.cols == 0) throw FormatError("EMB1: zero rows or cols");
  const std::size_t values = static_cast<std::size_t>(count) * f.rows_per_item * f.cols;
  if (r.remaining() != values * 4) {
    throw FormatError("EMB1: payload length " + std::to_string(r.remaining()) +
                      " does not match header (" + std::to_string(values * 4) + ")");
  }
  f.data.resize(values);
  for (float& v : f.data) v = r.f32();
  r.expect_end();
  return f;
}

void write_emb1(const std::filesystem::path& path, const EmbeddingFile& f) {
  write_file(path, encode_emb1(f));
}

EmbeddingFile read_emb1(const std::filesystem::path& path) {
  try {
    return decode_emb1(read_file(path));
  } catch (const FormatError& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

}  // namespace tefal
