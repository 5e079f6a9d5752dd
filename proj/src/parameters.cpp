#include "werprobe/parameters.hpp"

#include "werprobe/digest.hpp"
#include "werprobe/error.hpp"

WERPROBE_NAMESPACE_BEGIN

Parameter& ParameterSet::add(std::string name, Tensor initial) {
  if (name.empty()) fail(ErrorKind::Config, "parameter name must be nonempty");
  if (index_.contains(name)) fail(ErrorKind::Config, "duplicate parameter name '" + name + "'");
  index_.emplace(name, params_.size());
  Tensor grad(initial.shape());
  params_.push_back(Parameter{std::move(name), std::move(initial), std::move(grad)});
  return params_.back();
}

Parameter& ParameterSet::at(std::string_view name) {
  auto it = index_.find(std::string(name));
  if (it == index_.end()) fail(ErrorKind::Config, "unknown parameter '" + std::string(name) + "'");
  return params_[it->second];
}

const Parameter& ParameterSet::at(std::string_view name) const {
  return const_cast<ParameterSet*>(this)->at(name);
}

bool ParameterSet::contains(std::string_view name) const { return index_.contains(std::string(name)); }

std::size_t ParameterSet::scalar_count() const {
  std::size_t n = 0;
  for (const auto& p : params_) n += p.value.size();
  return n;
}

void ParameterSet::zero_grad() {
  for (auto& p : params_) p.gradient.fill(Real(0));
}

bool ParameterSet::all_finite() const {
  for (const auto& p : params_) {
    if (!p.value.all_finite()) return false;
  }
  return true;
}

std::string ParameterSet::digest() const {
  Digest d;
  for (const auto& p : params_) {
    d.update(p.name);
    d.update(to_string(p.value.shape()));
    d.update(std::as_bytes(p.value.values()));
  }
  return d.hex();
}

WERPROBE_NAMESPACE_END
