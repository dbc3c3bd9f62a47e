// Copyright 2026 The TEFAL-Retrieval Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "tefal/matrix.h"

namespace tefal {

/// Named parameters with same-shaped gradient buffers.
///
/// Names iterate in lexicographic order, which fixes the reduction and
/// serialization order everywhere the store is walked.
class ParamStore {
 public:
  /// Registers a parameter with a zeroed gradient. Throws on duplicate names.
  Matrix& add(const std::string& name, Matrix init);

  bool contains(const std::string& name) const { return entries_.count(name) != 0; }
  Matrix& value(const std::string& name);
  const Matrix& value(const std::string& name) const;
  Matrix& grad(const std::string& name);
  const Matrix& grad(const std::string& name) const;

  /// Adds g into the gradient of name (shapes must match).
  void accumulate(const std::string& name, const Matrix& g);

  void zero_grad();
  std::vector<std::string> names() const;
  std::size_t size() const { return entries_.size(); }
  std::size_t scalar_count() const;

  double grad_norm() const;

  std::uint64_t step = 0;

  template <typename Fn>
  void for_each(Fn&& fn) {
    for (auto& [name, e] : entries_) fn(name, e.value, e.grad);
  }
  template <typename Fn>
  void for_each(Fn&& fn) const {
    for (const auto& [name, e] : entries_) fn(name, e.value, e.grad);
  }

 private:
  struct Entry {
    Matrix value;
    Matrix grad;
  };
  const Entry& entry(const std::string& name) const;
  Entry& entry(const std::string& name);

  std::map<std::string, Entry> entries_;
};

}  // namespace tefal
