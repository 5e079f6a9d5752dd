#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "werprobe/tensor.hpp"

WERPROBE_NAMESPACE_BEGIN

struct Parameter {
  std::string name;
  Tensor value;
  Tensor gradient;
};

/// Named, ordered collection of trainable tensors. Insertion order is the
/// serialization order.
class ParameterSet {
 public:
  Parameter& add(std::string name, Tensor initial);

  Parameter& at(std::string_view name);
  const Parameter& at(std::string_view name) const;
  bool contains(std::string_view name) const;

  std::span<Parameter> all() noexcept { return params_; }
  std::span<const Parameter> all() const noexcept { return params_; }
  std::size_t size() const noexcept { return params_.size(); }

  /// Total number of scalar values across all parameters.
  std::size_t scalar_count() const;
  void zero_grad();
  bool all_finite() const;
  /// Digest over names, shapes and raw values.
  std::string digest() const;

 private:
  std::vector<Parameter> params_;
  std::unordered_map<std::string, std::size_t> index_;
};

WERPROBE_NAMESPACE_END
