#include "ecgi/adam.hpp"

#include <cmath>

namespace ecgi {

AdamState::AdamState(const std::vector<Param>& params, AdamConfig cfg) : cfg_(cfg) {
  m_.reserve(params.size());
  v_.reserve(params.size());
  for (const Param& p : params) {
    m_.push_back(Arr::Zero(p.value.size()));
    v_.push_back(Arr::Zero(p.value.size()));
  }
}

void adam_step(std::vector<Param>& params, const std::vector<Arr>& grads, AdamState& state) {
  if (params.size() != grads.size() || params.size() != state.m_.size()) {
    throw DimensionError("adam_step: parameter/gradient/state counts differ");
  }
  state.step_ += 1;
  const AdamConfig& c = state.cfg_;
  const double bc1 = 1.0 - std::pow(c.beta1, static_cast<double>(state.step_));
  const double bc2 = 1.0 - std::pow(c.beta2, static_cast<double>(state.step_));
  for (size_t i = 0; i < params.size(); ++i) {
    const Arr& g = grads[i];
    if (g.size() != params[i].value.size()) {
      throw DimensionError("adam_step: gradient for '" + params[i].name + "' has length " +
                           std::to_string(g.size()) + ", parameter has " +
                           std::to_string(params[i].value.size()));
    }
    Arr& m = state.m_[i];
    Arr& v = state.v_[i];
    m = c.beta1 * m + (1.0 - c.beta1) * g;
    v = c.beta2 * v + (1.0 - c.beta2) * g.square();
    Arr m_hat = m / bc1;
    Arr v_hat = v / bc2;
    params[i].value.mutable_data() -= c.lr * m_hat / (v_hat.sqrt() + c.eps_stab);
    if (!params[i].value.data().allFinite()) {
      throw NumericError("adam_step: parameter '" + params[i].name + "' became non-finite");
    }
  }
}

}  // namespace ecgi
