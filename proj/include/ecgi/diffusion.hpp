#pragma once

#include <functional>
#include <vector>

#include "ecgi/rng.hpp"
#include "ecgi/schedule.hpp"
#include "ecgi/tensor.hpp"

namespace ecgi {

// Conditional noise predictor eps(x_t, t, y).
using DenoiserFn = std::function<Tensor(const Tensor& x_t, int t, const Tensor& y)>;

// Pre-drawn corruption for one training example, so batches can fix their
// randomness up front and evaluate samples in any order.
struct NoiseDraw {
  int t = 1;
  Tensor eps;
};

NoiseDraw draw_noise(const Shape& shape, const NoiseSchedule& sched, Rng& rng);

// Noise-prediction objective for one (x0, y) pair: the mean squared error
// between the injected and the predicted noise, recorded on the active tape.
Tensor train_loss(const Tensor& x0, const Tensor& y, const DenoiserFn& denoiser,
                  const NoiseSchedule& sched, Rng& rng);

// As above with the corruption fixed by the caller.
Tensor train_loss_with_draw(const Tensor& x0, const Tensor& y, const DenoiserFn& denoiser,
                            const NoiseSchedule& sched, const NoiseDraw& draw);

struct PosteriorSample {
  std::vector<Tensor> samples;  // K reconstructions, each n_h x T
  Tensor mean;                  // elementwise mean over the K samples
};

// K independent reverse chains conditioned on the same y, starting from
// standard normal x_T. Chain k draws from rng.child({"chain", k}), so serial
// and parallel execution produce identical samples.
PosteriorSample sample_posterior(const Tensor& y, const DenoiserFn& denoiser,
                                 const NoiseSchedule& sched, int n_h, int k_samples,
                                 const Rng& rng);

}  // namespace ecgi
