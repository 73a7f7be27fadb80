#include "mi2a/adam.hpp"

#include <cmath>
#include <string>

#include "mi2a/errors.hpp"

namespace mi2a {

AdamState AdamState::for_parameters(const ParameterStore& params, AdamConfig config) {
  AdamState s;
  s.config = config;
  s.first_moment.reserve(params.size());
  s.second_moment.reserve(params.size());
  for (std::size_t i = 0; i < params.size(); ++i) {
    s.first_moment.push_back(Tensor::zeros(params[i].value.shape()));
    s.second_moment.push_back(Tensor::zeros(params[i].value.shape()));
  }
  return s;
}

void adam_update(ParameterStore& params, AdamState& state) {
  if (state.first_moment.size() != params.size() || state.second_moment.size() != params.size()) {
    throw std::invalid_argument("adam_update: state tracks " + std::to_string(state.first_moment.size()) +
                                " parameters, store has " + std::to_string(params.size()));
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    const Parameter& p = params[i];
    if (p.grad.shape() != p.value.shape() || state.first_moment[i].shape() != p.value.shape()) {
      throw std::invalid_argument("adam_update: shape mismatch for " + p.name);
    }
    for (std::size_t k = 0; k < p.grad.size(); ++k) {
      if (!std::isfinite(p.grad[k])) {
        throw NumericError("non-finite gradient in parameter '" + p.name + "' at flat index " + std::to_string(k) +
                           " (value " + std::to_string(p.grad[k]) + ")");
      }
    }
  }

  const AdamConfig& c = state.config;
  state.step += 1;
  const double t = static_cast<double>(state.step);
  const double correction1 = 1.0 - std::pow(c.beta1, t);
  const double correction2 = 1.0 - std::pow(c.beta2, t);

  for (std::size_t i = 0; i < params.size(); ++i) {
    Parameter& p = params[i];
    Tensor& m = state.first_moment[i];
    Tensor& v = state.second_moment[i];
    for (std::size_t k = 0; k < p.value.size(); ++k) {
      const double g = p.grad[k];
      m[k] = c.beta1 * m[k] + (1.0 - c.beta1) * g;
      v[k] = c.beta2 * v[k] + (1.0 - c.beta2) * g * g;
      const double m_hat = m[k] / correction1;
      const double v_hat = v[k] / correction2;
      p.value[k] -= c.learning_rate * m_hat / (std::sqrt(v_hat) + c.epsilon);
    }
  }
}

}  // namespace mi2a
