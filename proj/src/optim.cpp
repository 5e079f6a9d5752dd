#include "werprobe/optim.hpp"

#include <cmath>

#include "werprobe/error.hpp"

WERPROBE_NAMESPACE_BEGIN

namespace {

void check_shapes(const Parameter& param, const Tensor& a, const Tensor& b, const char* who) {
  if (param.gradient.shape() != param.value.shape() || a.shape() != param.value.shape() ||
      b.shape() != param.value.shape()) {
    fail(ErrorKind::Dimension, std::string(who) + ": state/gradient shape mismatch for parameter '" +
                                   param.name + "' " + to_string(param.value.shape()));
  }
}

}  // namespace

AdamState make_adam_state(const Parameter& param, const AdamConfig& config) {
  if (!(config.beta1 > 0 && config.beta1 < 1 && config.beta2 > 0 && config.beta2 < 1)) {
    fail(ErrorKind::Config, "adam: betas must lie in (0, 1)");
  }
  if (!(config.lr > 0 && config.epsilon > 0)) fail(ErrorKind::Config, "adam: lr and epsilon must be positive");
  return AdamState{0, Tensor(param.value.shape()), Tensor(param.value.shape()), config};
}

AdadeltaState make_adadelta_state(const Parameter& param, const AdadeltaConfig& config) {
  if (!(config.rho > 0 && config.rho < 1)) fail(ErrorKind::Config, "adadelta: rho must lie in (0, 1)");
  if (!(config.lr > 0 && config.epsilon > 0)) fail(ErrorKind::Config, "adadelta: lr and epsilon must be positive");
  return AdadeltaState{Tensor(param.value.shape()), Tensor(param.value.shape()), config};
}

void adam_step(Parameter& param, AdamState& state) {
  check_shapes(param, state.first_moment, state.second_moment, "adam_step");
  const AdamConfig& c = state.config;
  state.step += 1;
  const double t = static_cast<double>(state.step);
  const double correction1 = 1.0 - std::pow(c.beta1, t);
  const double correction2 = 1.0 - std::pow(c.beta2, t);
  for (std::size_t i = 0; i < param.value.size(); ++i) {
    const double g = param.gradient[i];
    const double m = c.beta1 * state.first_moment[i] + (1.0 - c.beta1) * g;
    const double v = c.beta2 * state.second_moment[i] + (1.0 - c.beta2) * g * g;
    state.first_moment[i] = static_cast<Real>(m);
    state.second_moment[i] = static_cast<Real>(v);
    const double m_hat = m / correction1;
    const double v_hat = v / correction2;
    param.value[i] = static_cast<Real>(param.value[i] - c.lr * m_hat / (std::sqrt(v_hat) + c.epsilon));
  }
}

void adadelta_step(Parameter& param, AdadeltaState& state) {
  check_shapes(param, state.accum_grad_sq, state.accum_update_sq, "adadelta_step");
  const AdadeltaConfig& c = state.config;
  for (std::size_t i = 0; i < param.value.size(); ++i) {
    const double g = param.gradient[i];
    const double eg2 = c.rho * state.accum_grad_sq[i] + (1.0 - c.rho) * g * g;
    const double update = -std::sqrt(state.accum_update_sq[i] + c.epsilon) / std::sqrt(eg2 + c.epsilon) * g;
    const double edx2 = c.rho * state.accum_update_sq[i] + (1.0 - c.rho) * update * update;
    state.accum_grad_sq[i] = static_cast<Real>(eg2);
    state.accum_update_sq[i] = static_cast<Real>(edx2);
    param.value[i] = static_cast<Real>(param.value[i] + c.lr * update);
  }
}

Optimizer Optimizer::adam(const ParameterSet& params, const AdamConfig& config) {
  std::vector<AdamState> states;
  for (const Parameter& p : params.all()) states.push_back(make_adam_state(p, config));
  Optimizer opt;
  opt.states_ = std::move(states);
  return opt;
}

Optimizer Optimizer::adadelta(const ParameterSet& params, const AdadeltaConfig& config) {
  std::vector<AdadeltaState> states;
  for (const Parameter& p : params.all()) states.push_back(make_adadelta_state(p, config));
  Optimizer opt;
  opt.states_ = std::move(states);
  return opt;
}

void Optimizer::step(ParameterSet& params) {
  std::visit(
      [&](auto& states) {
        if (states.size() != params.size()) {
          fail(ErrorKind::Dimension, "optimizer tracks " + std::to_string(states.size()) + " parameters, got " +
                                         std::to_string(params.size()));
        }
        for (std::size_t i = 0; i < states.size(); ++i) {
          if constexpr (std::is_same_v<std::decay_t<decltype(states)>, std::vector<AdamState>>) {
            adam_step(params.all()[i], states[i]);
          } else {
            adadelta_step(params.all()[i], states[i]);
          }
        }
      },
      states_);
  ++steps_;
}

WERPROBE_NAMESPACE_END
