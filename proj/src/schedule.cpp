#include "ecgi/schedule.hpp"

#include <cmath>

#include "ecgi/errors.hpp"

namespace ecgi {

NoiseSchedule build_schedule(const DiffusionConfig& cfg) {
  if (cfg.t_diff < 1) throw ConfigError("build_schedule: t_diff must be at least 1");
  if (!(cfg.beta_min > 0.0) || !(cfg.beta_min <= cfg.beta_max) || !(cfg.beta_max < 1.0)) {
    throw ConfigError("build_schedule: need 0 < beta_min <= beta_max < 1");
  }

  NoiseSchedule s;
  s.t_diff = cfg.t_diff;
  s.betas.resize(cfg.t_diff);
  for (int t = 1; t <= cfg.t_diff; ++t) {
    double frac = cfg.t_diff == 1 ? 0.0 : static_cast<double>(t - 1) / (cfg.t_diff - 1);
    if (cfg.kind == ScheduleKind::sqrt_linear) {
      double root = std::sqrt(cfg.beta_min) + frac * (std::sqrt(cfg.beta_max) - std::sqrt(cfg.beta_min));
      s.betas[t - 1] = root * root;
    } else {
      s.betas[t - 1] = cfg.beta_min + frac * (cfg.beta_max - cfg.beta_min);
    }
  }
  s.alphas = 1.0 - s.betas.array();
  s.sigmas = s.betas.array().sqrt();
  s.alpha_bars.resize(cfg.t_diff);
  double running = 1.0;
  for (int t = 0; t < cfg.t_diff; ++t) {
    running *= s.alphas[t];
    s.alpha_bars[t] = running;
  }
  return s;
}

namespace {

void check_step(const char* op, int t, const NoiseSchedule& sched) {
  if (t < 1 || t > sched.t_diff) {
    throw ContractError(std::string(op) + ": step " + std::to_string(t) + " outside [1, " +
                        std::to_string(sched.t_diff) + "]");
  }
}

}  // namespace

Tensor forward_sample(const Tensor& x0, int t, const Tensor& eps, const NoiseSchedule& sched) {
  check_step("forward_sample", t, sched);
  if (x0.shape() != eps.shape()) {
    throw DimensionError("forward_sample: shape mismatch " + shape_str(x0.shape()) + " vs " +
                         shape_str(eps.shape()));
  }
  double ab = sched.alpha_bar(t);
  Arr out = std::sqrt(ab) * x0.data() + std::sqrt(1.0 - ab) * eps.data();
  if (!out.allFinite()) throw NumericError("forward_sample: non-finite result");
  return Tensor(x0.shape(), std::move(out));
}

Tensor reverse_step(const Tensor& x_t, int t, const Tensor& eps_hat, const NoiseSchedule& sched,
                    const Tensor& z) {
  check_step("reverse_step", t, sched);
  if (x_t.shape() != eps_hat.shape()) {
    throw DimensionError("reverse_step: shape mismatch " + shape_str(x_t.shape()) + " vs " +
                         shape_str(eps_hat.shape()));
  }
  const double coeff = sched.beta(t) / std::sqrt(1.0 - sched.alpha_bar(t));
  Arr out = (x_t.data() - coeff * eps_hat.data()) / std::sqrt(sched.alpha(t));
  if (t > 1) {
    if (x_t.shape() != z.shape()) {
      throw DimensionError("reverse_step: noise shape mismatch " + shape_str(x_t.shape()) +
                           " vs " + shape_str(z.shape()));
    }
    out += sched.sigma(t) * z.data();
  }
  if (!out.allFinite()) throw NumericError("reverse_step: non-finite result");
  return Tensor(x_t.shape(), std::move(out));
}

}  // namespace ecgi
