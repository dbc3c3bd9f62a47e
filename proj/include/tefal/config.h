// Copyright 2026 The TEFAL-Retrieval Authors
// SPDX-License-Identifier: Apache-2.0
//
// Flat key=value configuration files. One entry per line; '#' starts a
// comment; whitespace around keys and values is ignored. Recognized keys
// (see README for meanings):
//
//   dim proj_dim fusion branches output_ln_affine temperature_init
//   batch_size epochs lr beta1 beta2 eps weight_decay clip_norm seed
//   frames audio_tokens

#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <string_view>

#include "tefal/trainer.h"

namespace tefal {

using KeyValues = std::map<std::string, std::string>;

/// Throws std::invalid_argument naming the line on malformed input or
/// duplicate keys.
KeyValues parse_key_values(std::string_view text);
KeyValues read_key_values(const std::filesystem::path& path);

/// Applies recognized keys onto `config`; unknown keys and bad values throw.
void apply_train_config(const KeyValues& kv, TrainConfig& config);

/// The full configuration in key=value form, keys sorted.
std::string format_train_config(const TrainConfig& config);

}  // namespace tefal
