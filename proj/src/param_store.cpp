// Copyright 2026 The TEFAL-Retrieval Authors
// SPDX-License-Identifier: Apache-2.0

#include "tefal/param_store.h"

#include <cmath>
#include <stdexcept>

#include "tefal/ops.h"

namespace tefal {

Matrix& ParamStore::add(const std::string& name, Matrix init) {
  if (init.empty()) throw DimensionError("parameter '" + name + "' has no shape");
  Matrix zeros(init.rows(), init.cols());
  auto [it, inserted] = entries_.emplace(name, Entry{std::move(init), std::move(zeros)});
  if (!inserted) throw std::invalid_argument("duplicate parameter name '" + name + "'");
  return it->second.value;
}

const ParamStore::Entry& ParamStore::entry(const std::string& name) const {
  auto it = entries_.find(name);
  if (it == entries_.end()) throw std::out_of_range("unknown parameter '" + name + "'");
  return it->second;
}

ParamStore::Entry& ParamStore::entry(const std::string& name) {
  auto it = entries_.find(name);
  if (it == entries_.end()) throw std::out_of_range("unknown parameter '" + name + "'");
  return it->second;
}

Matrix& ParamStore::value(const std::string& name) { return entry(name).value; }
const Matrix& ParamStore::value(const std::string& name) const { return entry(name).value; }
Matrix& ParamStore::grad(const std::string& name) { return entry(name).grad; }
const Matrix& ParamStore::grad(const std::string& name) const { return entry(name).grad; }

void ParamStore::accumulate(const std::string& name, const Matrix& g) {
  add_inplace(entry(name).grad, g);
}

void ParamStore::zero_grad() {
  for (auto& [name, e] : entries_) e.grad.fill(0.0);
}

std::vector<std::string> ParamStore::names() const {
  std::vector<std::string> out;
  out.reserve(entries_.size());
  for (const auto& [name, e] : entries_) out.push_back(name);
  return out;
}

std::size_t ParamStore::scalar_count() const {
  std::size_t n = 0;
  for (const auto& [name, e] : entries_) n += e.value.size();
  return n;
}

double ParamStore::grad_norm() const {
  double s = 0.0;
  for (const auto& [name, e] : entries_) s += dot(e.grad.data(), e.grad.data());
  return std::sqrt(s);
}

}  // namespace tefal
