// Copyright 2026 The TEFAL-Retrieval Authors
// SPDX-License-Identifier: Apache-2.0

#include "tefal/report.h"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <stdexcept>

#include "json.hpp"

namespace tefal {

std::string format_fixed(double v, int decimals) {
  if (!std::isfinite(v)) throw std::invalid_argument("cannot format a non-finite number");
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", decimals, v);
  std::string s = buf;
  if (s.front() == '-' && s.find_first_not_of("-0.") == std::string::npos) s.erase(0, 1);
  return s;
}

void JsonWriter::newline() {
  out_ += '\n';
  out_.append(2 * stack_.size(), ' ');
}

void JsonWriter::before_value() {
  if (after_key_) {
    after_key_ = false;
    return;
  }
  if (!stack_.empty()) {
    if (!stack_.back().array) throw std::logic_error("JsonWriter: value in object needs a key");
    if (!stack_.back().empty) out_ += ',';
    stack_.back().empty = false;
    newline();
  }
}

JsonWriter& JsonWriter::begin_object() {
  before_value();
  out_ += '{';
  stack_.push_back({false, true});
  return *this;
}

JsonWriter& JsonWriter::end_object() {
  const bool empty = stack_.back().empty;
  stack_.pop_back();
  if (!empty) newline();
  out_ += '}';
  return *this;
}

JsonWriter& JsonWriter::begin_array() {
  before_value();
  out_ += '[';
  stack_.push_back({true, true});
  return *this;
}

JsonWriter& JsonWriter::end_array() {
  const bool empty = stack_.back().empty;
  stack_.pop_back();
  if (!empty) newline();
  out_ += ']';
  return *this;
}

JsonWriter& JsonWriter::key(std::string_view k) {
  if (stack_.empty() || stack_.back().array) throw std::logic_error("JsonWriter: key outside object");
  if (!stack_.back().empty) out_ += ',';
  stack_.back().empty = false;
  newline();
  out_ += nlohmann::json(std::string(k)).dump();
  out_ += ": ";
  after_key_ = true;
  return *this;
}

JsonWriter& JsonWriter::string(std::string_view s) {
  before_value();
  out_ += nlohmann::json(std::string(s)).dump();
  return *this;
}

JsonWriter& JsonWriter::integer(std::int64_t v) {
  before_value();
  out_ += std::to_string(v);
  return *this;
}

JsonWriter& JsonWriter::fixed(double v, int decimals) {
  before_value();
  out_ += format_fixed(v, decimals);
  return *this;
}

JsonWriter& JsonWriter::boolean(bool b) {
  before_value();
  out_ += b ? "true" : "false";
  return *this;
}

JsonWriter& JsonWriter::null() {
  before_value();
  out_ += "null";
  return *this;
}

JsonWriter& JsonWriter::integer_array(const std::vector<std::size_t>& values) {
  before_value();
  out_ += '[';
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (i) out_ += ", ";
    out_ += std::to_string(values[i]);
  }
  out_ += ']';
  return *this;
}

std::string JsonWriter::str() const {
  if (!stack_.empty()) throw std::logic_error("JsonWriter: unterminated document");
  return out_ + "\n";
}

namespace {

void write_metrics(JsonWriter& w, const RankingMetrics& m) {
  w.begin_object();
  w.key("R1").fixed(m.r1);
  w.key("R5").fixed(m.r5);
  w.key("R10").fixed(m.r10);
  w.key("MdR").fixed(m.median_rank);
  w.key("MnR").fixed(m.mean_rank);
  w.key("queries").integer(static_cast<std::int64_t>(m.queries));
  w.end_object();
}

}  // namespace

std::string eval_report_json(const EvalResult& r, const EvalReportInfo& info) {
  JsonWriter w;
  w.begin_object();
  w.key("mode").string(info.shortlist ? "two_stage" : "exhaustive");
  w.key("shortlist");
  if (info.shortlist) {
    w.integer(static_cast<std::int64_t>(*info.shortlist));
  } else {
    w.null();
  }
  w.key("postprocess").begin_array();
  if (info.dsl_temperature) {
    w.begin_object();
    w.key("name").string("dual_softmax");
    w.key("temperature").fixed(*info.dsl_temperature);
    w.end_object();
  }
  w.end_array();
  w.key("candidates").integer(static_cast<std::int64_t>(r.t2v.candidates));
  w.key("t2v");
  write_metrics(w, r.t2v);
  w.key("v2t");
  write_metrics(w, r.v2t);
  if (r.counters) {
    const RerankCounters& c = *r.counters;
    w.key("counters").begin_object();
    w.key("mean_pools").integer(static_cast<std::int64_t>(c.mean_pools));
    w.key("stage1_comparisons").integer(static_cast<std::int64_t>(c.stage1_comparisons));
    w.key("stage2_evaluations").integer(static_cast<std::int64_t>(c.stage2_evaluations));
    w.key("max_stage1_per_query").integer(static_cast<std::int64_t>(c.max_stage1_per_query));
    w.key("max_stage2_per_query").integer(static_cast<std::int64_t>(c.max_stage2_per_query));
    w.end_object();
  }
  if (info.include_ranks) {
    w.key("ranks").begin_object();
    w.key("t2v").integer_array(r.t2v_ranks);
    w.key("v2t").integer_array(r.v2t_ranks);
    w.end_object();
  }
  w.end_object();
  return w.str();
}

std::string train_log_json(const TrainConfig& config, const TrainResult& result) {
  JsonWriter w;
  w.begin_object();
  w.key("fusion").string(fusion_kind_name(config.model.fusion));
  w.key("branches").string(branches_name(config.model.branches));
  w.key("seed").integer(static_cast<std::int64_t>(config.seed));
  w.key("steps").integer(static_cast<std::int64_t>(result.step_losses.size()));
  w.key("epochs").begin_array();
  for (const EpochLog& e : result.epochs) {
    w.begin_object();
    w.key("epoch").integer(static_cast<std::int64_t>(e.epoch));
    w.key("mean_loss").fixed(e.mean_loss, 6);
    w.key("first_loss").fixed(e.first_loss, 6);
    w.key("last_loss").fixed(e.last_loss, 6);
    w.key("tau").fixed(e.tau, 6);
    w.end_object();
  }
  w.end_array();
  w.key("step_losses").begin_array();
  for (double l : result.step_losses) w.fixed(l, 6);
  w.end_array();
  w.end_object();
  return w.str();
}

std::string gradcheck_json(const std::vector<GradCheckEntry>& entries) {
  JsonWriter w;
  double worst = 0.0;
  bool all = true;
  w.begin_object();
  w.key("checks").begin_array();
  for (const GradCheckEntry& e : entries) {
    worst = std::max(worst, e.max_relative_error);
    all = all && e.passed();
    char err[32], thr[32];
    std::snprintf(err, sizeof err, "%.3e", e.max_relative_error);
    std::snprintf(thr, sizeof thr, "%.0e", e.threshold);
    w.begin_object();
    w.key("name").string(e.name);
    w.key("max_relative_error").string(err);
    w.key("threshold").string(thr);
    w.key("passed").boolean(e.passed());
    w.end_object();
  }
  w.end_array();
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3e", worst);
  w.key("max_relative_error").string(buf);
  w.key("passed").boolean(all && worst < 1e-4);
  w.end_object();
  return w.str();
}

}  // namespace tefal
