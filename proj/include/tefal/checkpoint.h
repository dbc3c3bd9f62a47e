// Copyright 2026 The TEFAL-Retrieval Authors
// SPDX-License-Identifier: Apache-2.0
//
// TFCK checkpoint:
//
//   "TFCK" | u32 version | u32 param_count
//   | per parameter: u16 name_len, name, u32 rows, u32 cols, rows*cols f32
//   | u32 CRC32 of all preceding bytes
//
// Parameters are written in name order. Besides the model parameters the
// file carries "meta.config" (model configuration) and "meta.step" (the
// optimizer step split into 16-bit limbs so f32 holds it exactly).

#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "tefal/model.h"

namespace tefal {

inline constexpr std::uint32_t kCheckpointVersion = 1;

std::vector<std::uint8_t> encode_checkpoint(const Model& model);
Model decode_checkpoint(std::span<const std::uint8_t> bytes);

void save_checkpoint(const std::filesystem::path& path, const Model& model);
Model load_checkpoint(const std::filesystem::path& path);

/// Copy of `model` with every parameter rounded to f32, i.e. exactly what a
/// save/load cycle yields.
Model round_to_f32(const Model& model);

}  // namespace tefal
