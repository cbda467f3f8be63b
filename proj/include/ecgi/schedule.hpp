#pragma once

#include <Eigen/Dense>

#include "ecgi/tensor.hpp"

namespace ecgi {

enum class ScheduleKind { sqrt_linear, linear };

struct DiffusionConfig {
  int t_diff = 100;
  double beta_min = 1e-4;
  double beta_max = 0.02;
  ScheduleKind kind = ScheduleKind::sqrt_linear;
  int sample_count = 8;  // K posterior samples per record
};

// Per-step noise levels for t = 1..T. sigma_t^2 = beta_t throughout.
// Accessors are 1-indexed to match the diffusion step convention.
struct NoiseSchedule {
  int t_diff = 0;
  Eigen::VectorXd betas, alphas, alpha_bars, sigmas;

  double beta(int t) const { return betas[t - 1]; }
  double alpha(int t) const { return alphas[t - 1]; }
  double alpha_bar(int t) const { return alpha_bars[t - 1]; }
  double sigma(int t) const { return sigmas[t - 1]; }
};

// sqrt-linear: beta_t quadratic in t with sqrt(beta) interpolated linearly
// between the endpoints; linear: beta_t interpolated directly.
NoiseSchedule build_schedule(const DiffusionConfig& cfg);

// Closed-form corruption x_t = sqrt(abar_t) x0 + sqrt(1 - abar_t) eps.
// Never recorded on a tape: gradients flow only through the denoiser.
Tensor forward_sample(const Tensor& x0, int t, const Tensor& eps, const NoiseSchedule& sched);

// One reverse transition from x_t to x_{t-1} given the predicted noise.
// The injected noise z is ignored at t = 1 so the final state is the mean.
Tensor reverse_step(const Tensor& x_t, int t, const Tensor& eps_hat, const NoiseSchedule& sched,
                    const Tensor& z);

}  // namespace ecgi
