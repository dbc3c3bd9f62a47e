// Copyright 2026 The TEFAL-Retrieval Authors
// SPDX-License-Identifier: Apache-2.0
//
// Deterministic JSON output: fixed key order, fixed decimal places.

#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "tefal/diagnostics.h"
#include "tefal/retrieval.h"
#include "tefal/trainer.h"

namespace tefal {

/// printf("%.*f"), with negative zero printed as zero.
std::string format_fixed(double v, int decimals);

/// Minimal streaming JSON writer with two-space indentation.
class JsonWriter {
 public:
  JsonWriter& begin_object();
  JsonWriter& end_object();
  JsonWriter& begin_array();
  JsonWriter& end_array();
  JsonWriter& key(std::string_view k);
  JsonWriter& string(std::string_view s);
  JsonWriter& integer(std::int64_t v);
  JsonWriter& fixed(double v, int decimals = 4);
  JsonWriter& boolean(bool b);
  JsonWriter& null();
  /// Integers on a single line.
  JsonWriter& integer_array(const std::vector<std::size_t>& values);

  /// The document followed by a newline.
  std::string str() const;

 private:
  void before_value();
  void newline();
  std::string out_;
  struct Level {
    bool array = false;
    bool empty = true;
  };
  std::vector<Level> stack_;
  bool after_key_ = false;
};

struct EvalReportInfo {
  std::optional<std::size_t> shortlist;
  std::optional<double> dsl_temperature;
  bool include_ranks = true;
};

std::string eval_report_json(const EvalResult& result, const EvalReportInfo& info);
std::string train_log_json(const TrainConfig& config, const TrainResult& result);
std::string gradcheck_json(const std::vector<GradCheckEntry>& entries);

}  // namespace tefal
