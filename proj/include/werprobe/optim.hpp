#pragma once

#include <cstdint>
#include <variant>
#include <vector>

#include "werprobe/parameters.hpp"

WERPROBE_NAMESPACE_BEGIN

struct AdamConfig {
  double lr = 0.001;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

struct AdamState {
  std::uint64_t step = 0;
  Tensor first_moment;
  Tensor second_moment;
  AdamConfig config;
};

struct AdadeltaConfig {
  double rho = 0.95;
  double epsilon = 1e-6;
  double lr = 1.0;
};

struct AdadeltaState {
  Tensor accum_grad_sq;
  Tensor accum_update_sq;
  AdadeltaConfig config;
};

AdamState make_adam_state(const Parameter& param, const AdamConfig& config = {});
AdadeltaState make_adadelta_state(const Parameter& param, const AdadeltaConfig& config = {});

/// Bias-corrected Adam update of param.value from param.gradient.
void adam_step(Parameter& param, AdamState& state);

/// Adadelta update of param.value from param.gradient.
void adadelta_step(Parameter& param, AdadeltaState& state);

/// Per-parameter optimizer state for a whole ParameterSet. States are
/// matched to parameters by position.
class Optimizer {
 public:
  static Optimizer adam(const ParameterSet& params, const AdamConfig& config = {});
  static Optimizer adadelta(const ParameterSet& params, const AdadeltaConfig& config = {});

  void step(ParameterSet& params);
  std::uint64_t steps_taken() const noexcept { return steps_; }

 private:
  std::variant<std::vector<AdamState>, std::vector<AdadeltaState>> states_;
  std::uint64_t steps_ = 0;
};

WERPROBE_NAMESPACE_END
