// Copyright 2026 The TEFAL-Retrieval Authors
// SPDX-License-Identifier: Apache-2.0

#include "tefal/config.h"

#include <charconv>
#include <cstdio>
#include <functional>
#include <stdexcept>

#include "tefal/io.h"

namespace tefal {

namespace {

std::string_view trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::size_t to_size(const std::string& key, const std::string& v) {
  std::size_t out = 0;
  auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || p != v.data() + v.size()) {
    throw std::invalid_argument("config: " + key + " expects a non-negative integer, got '" + v + "'");
  }
  return out;
}

double to_double(const std::string& key, const std::string& v) {
  std::size_t used = 0;
  double out = 0.0;
  try {
    out = std::stod(v, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used != v.size() || v.empty()) {
    throw std::invalid_argument("config: " + key + " expects a number, got '" + v + "'");
  }
  return out;
}

bool to_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  throw std::invalid_argument("config: " + key + " expects true|false, got '" + v + "'");
}

std::string number(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace

KeyValues parse_key_values(std::string_view text) {
  KeyValues kv;
  std::size_t line_no = 0;
  while (!text.empty()) {
    const auto nl = text.find('\n');
    std::string_view line = text.substr(0, nl);
    text = nl == std::string_view::npos ? std::string_view{} : text.substr(nl + 1);
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string_view::npos) {
      throw std::invalid_argument("config line " + std::to_string(line_no) + ": expected key=value");
    }
    const std::string key(trim(line.substr(0, eq)));
    const std::string value(trim(line.substr(eq + 1)));
    if (key.empty()) throw std::invalid_argument("config line " + std::to_string(line_no) + ": empty key");
    if (!kv.emplace(key, value).second) {
      throw std::invalid_argument("config line " + std::to_string(line_no) + ": duplicate key '" + key + "'");
    }
  }
  return kv;
}

KeyValues read_key_values(const std::filesystem::path& path) {
  const auto bytes = read_file(path);
  return parse_key_values(std::string_view(reinterpret_cast<const char*>(bytes.data()), bytes.size()));
}

void apply_train_config(const KeyValues& kv, TrainConfig& c) {
  using Setter = std::function<void(const std::string&, const std::string&)>;
  const std::map<std::string, Setter> setters = {
      {"dim", [&](auto& k, auto& v) { c.model.dim = to_size(k, v); }},
      {"proj_dim", [&](auto& k, auto& v) { c.model.proj_dim = to_size(k, v); }},
      {"fusion", [&](auto&, auto& v) { c.model.fusion = parse_fusion_kind(v); }},
      {"branches", [&](auto&, auto& v) { c.model.branches = parse_branches(v); }},
      {"output_ln_affine", [&](auto& k, auto& v) { c.model.output_ln_affine = to_bool(k, v); }},
      {"temperature_init", [&](auto& k, auto& v) { c.model.temperature_init = to_double(k, v); }},
      {"batch_size", [&](auto& k, auto& v) { c.batch_size = to_size(k, v); }},
      {"epochs", [&](auto& k, auto& v) { c.epochs = to_size(k, v); }},
      {"lr", [&](auto& k, auto& v) { c.optimizer.lr = to_double(k, v); }},
      {"beta1", [&](auto& k, auto& v) { c.optimizer.beta1 = to_double(k, v); }},
      {"beta2", [&](auto& k, auto& v) { c.optimizer.beta2 = to_double(k, v); }},
      {"eps", [&](auto& k, auto& v) { c.optimizer.eps = to_double(k, v); }},
      {"weight_decay", [&](auto& k, auto& v) { c.optimizer.weight_decay = to_double(k, v); }},
      {"clip_norm", [&](auto& k, auto& v) { c.clip_norm = to_double(k, v); }},
      {"seed", [&](auto& k, auto& v) { c.seed = to_size(k, v); }},
      {"frames", [&](auto& k, auto& v) { c.frames = to_size(k, v); }},
      {"audio_tokens", [&](auto& k, auto& v) { c.audio_tokens = to_size(k, v); }},
  };
  for (const auto& [key, value] : kv) {
    const auto it = setters.find(key);
    if (it == setters.end()) throw std::invalid_argument("config: unknown key '" + key + "'");
    it->second(key, value);
  }
}

std::string format_train_config(const TrainConfig& c) {
  KeyValues kv;
  kv["dim"] = std::to_string(c.model.dim);
  kv["proj_dim"] = std::to_string(c.model.proj_dim);
  kv["fusion"] = std::string(fusion_kind_name(c.model.fusion));
  kv["branches"] = std::string(branches_name(c.model.branches));
  kv["output_ln_affine"] = c.model.output_ln_affine ? "true" : "false";
  kv["temperature_init"] = number(c.model.temperature_init);
  kv["batch_size"] = std::to_string(c.batch_size);
  kv["epochs"] = std::to_string(c.epochs);
  kv["lr"] = number(c.optimizer.lr);
  kv["beta1"] = number(c.optimizer.beta1);
  kv["beta2"] = number(c.optimizer.beta2);
  kv["eps"] = number(c.optimizer.eps);
  kv["weight_decay"] = number(c.optimizer.weight_decay);
  kv["clip_norm"] = number(c.clip_norm);
  kv["seed"] = std::to_string(c.seed);
  kv["frames"] = std::to_string(c.frames);
  kv["audio_tokens"] = std::to_string(c.audio_tokens);
  std::string out;
  for (const auto& [k, v] : kv) out += k + "=" + v + "\n";
  return out;
}

}  // namespace tefal
