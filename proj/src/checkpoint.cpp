// Copyright 2026 The TEFAL-Retrieval Authors
// SPDX-License-Identifier: Apache-2.0

#include "tefal/checkpoint.h"

#include <cmath>
#include <limits>
#include <string>

#include "tefal/io.h"

namespace tefal {

namespace {

constexpr const char* kMetaConfig = "meta.config";
constexpr const char* kMetaStep = "meta.step";

int fusion_code(FusionKind k) { return static_cast<int>(k); }
int branches_code(Branches b) { return static_cast<int>(b); }

Matrix config_row(const ModelConfig& c) {
  return Matrix::row_vector({static_cast<double>(c.dim), static_cast<double>(c.proj_dim),
                             static_cast<double>(fusion_code(c.fusion)),
                             static_cast<double>(branches_code(c.branches)),
                             c.output_ln_affine ? 1.0 : 0.0,
                             static_cast<double>(static_cast<float>(c.temperature_init))});
}

ModelConfig config_from_row(const Matrix& m) {
  if (m.rows() != 1 || m.cols() != 6) throw FormatError("TFCK: malformed meta.config");
  auto whole = [&](std::size_t i, double hi) {
    const double v = m[i];
    if (!(v >= 0.0 && v <= hi) || v != std::floor(v)) throw FormatError("TFCK: malformed meta.config");
    return static_cast<std::size_t>(v);
  };
  ModelConfig c;
  c.dim = whole(0, 1 << 24);
  c.proj_dim = whole(1, 1 << 24);
  c.fusion = static_cast<FusionKind>(whole(2, fusion_code(FusionKind::kStacking)));
  c.branches = static_cast<Branches>(whole(3, branches_code(Branches::kAudioOnly)));
  c.output_ln_affine = whole(4, 1) == 1;
  c.temperature_init = m[5];
  return c;
}

Matrix step_row(std::uint64_t step) {
  Matrix m(1, 4);
  for (std::size_t i = 0; i < 4; ++i) m[i] = static_cast<double>((step >> (16 * i)) & 0xFFFFU);
  return m;
}

std::uint64_t step_from_row(const Matrix& m) {
  if (m.rows() != 1 || m.cols() != 4) throw FormatError("TFCK: malformed meta.step");
  std::uint64_t step = 0;
  for (std::size_t i = 0; i < 4; ++i) {
    const double v = m[i];
    if (!(v >= 0.0 && v <= 65535.0) || v != std::floor(v)) throw FormatError("TFCK: malformed meta.step");
    step |= static_cast<std::uint64_t>(v) << (16 * i);
  }
  return step;
}

}  // namespace

std::vector<std::uint8_t> encode_checkpoint(const Model& model) {
  ParamStore all;
  model.store().for_each([&](const std::string& name, const Matrix& value, const Matrix&) {
    all.add(name, value);
  });
  all.add(kMetaConfig, config_row(model.config()));
  all.add(kMetaStep, step_row(model.store().step));

  ByteWriter w;
  w.bytes("TFCK");
  w.u32(kCheckpointVersion);
  w.u32(static_cast<std::uint32_t>(all.size()));
  all.for_each([&](const std::string& name, const Matrix& value, const Matrix&) {
    if (name.size() > std::numeric_limits<std::uint16_t>::max()) {
      throw std::invalid_argument("TFCK: parameter name too long: " + name);
    }
    w.u16(static_cast<std::uint16_t>(name.size()));
    w.bytes(name);
    w.u32(static_cast<std::uint32_t>(value.rows()));
    w.u32(static_cast<std::uint32_t>(value.cols()));
    for (std::size_t i = 0; i < value.size(); ++i) w.f32(static_cast<float>(value[i]));
  });
  w.seal();
  return w.take();
}

Model decode_checkpoint(std::span<const std::uint8_t> bytes) {
  ByteReader r(bytes, "TFCK");
  r.expect_magic("TFCK");
  const std::uint32_t version = r.u32();
  if (version != kCheckpointVersion) {
    throw FormatError("TFCK: unsupported version " + std::to_string(version));
  }
  const std::uint32_t count = r.u32();
  ParamStore store;
  std::optional<Matrix> config_meta, step_meta;
  for (std::uint32_t p = 0; p < count; ++p) {
    const std::string name = r.bytes(r.u16());
    const std::uint32_t rows = r.u32();
    const std::uint32_t cols = r.u32();
    if (rows == 0 || cols == 0) throw FormatError("TFCK: parameter " + name + " has a zero dimension");
    if (static_cast<std::size_t>(rows) * cols * 4 > r.remaining()) throw FormatError("TFCK: truncated");
    Matrix value(rows, cols);
    for (std::size_t i = 0; i < value.size(); ++i) value[i] = static_cast<double>(r.f32());
    if (name == kMetaConfig) {
      config_meta = std::move(value);
    } else if (name == kMetaStep) {
      step_meta = std::move(value);
    } else if (store.contains(name)) {
      throw FormatError("TFCK: duplicate parameter " + name);
    } else {
      store.add(name, std::move(value));
    }
  }
  r.expect_end();
  if (!config_meta || !step_meta) throw FormatError("TFCK: missing meta.config or meta.step");
  store.step = step_from_row(*step_meta);
  try {
    return Model::from_store(config_from_row(*config_meta), std::move(store));
  } catch (const std::invalid_argument& e) {
    throw FormatError(std::string("TFCK: ") + e.what());
  }
}

void save_checkpoint(const std::filesystem::path& path, const Model& model) {
  write_file(path, encode_checkpoint(model));
}

Model load_checkpoint(const std::filesystem::path& path) {
  try {
    return decode_checkpoint(read_file(path));
  } catch (const FormatError& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

Model round_to_f32(const Model& model) { return decode_checkpoint(encode_checkpoint(model)); }

}  // namespace tefal
