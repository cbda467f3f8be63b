#pragma once

#include <string>
#include <vector>

#include "ecgi/tensor.hpp"

namespace ecgi {

struct Param {
  std::string name;
  Tensor value;
};

struct AdamConfig {
  double lr = 3e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps_stab = 1e-8;
};

// First/second moment buffers, one pair per parameter, plus the shared step
// counter. Buffers are allocated to match the parameter shapes up front.
class AdamState {
 public:
  AdamState(const std::vector<Param>& params, AdamConfig cfg = {});

  const AdamConfig& config() const { return cfg_; }
  long step_count() const { return step_; }
  const Arr& first_moment(size_t i) const { return m_[i]; }
  const Arr& second_moment(size_t i) const { return v_[i]; }

  friend void adam_step(std::vector<Param>& params, const std::vector<Arr>& grads,
                        AdamState& state);

 private:
  AdamConfig cfg_;
  std::vector<Arr> m_, v_;
  long step_ = 0;
};

// One bias-corrected Adam update, in place.
void adam_step(std::vector<Param>& params, const std::vector<Arr>& grads, AdamState& state);

}  // namespace ecgi
