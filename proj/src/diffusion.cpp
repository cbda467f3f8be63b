#include "ecgi/diffusion.hpp"

#include <string>

#include "ecgi/errors.hpp"

namespace ecgi {

NoiseDraw draw_noise(const Shape& shape, const NoiseSchedule& sched, Rng& rng) {
  NoiseDraw d;
  d.t = rng.uniform_int(1, sched.t_diff);
  d.eps = Tensor::randn(shape, rng);
  return d;
}

Tensor train_loss(const Tensor& x0, const Tensor& y, const DenoiserFn& denoiser,
                  const NoiseSchedule& sched, Rng& rng) {
  NoiseDraw d = draw_noise(x0.shape(), sched, rng);
  return train_loss_with_draw(x0, y, denoiser, sched, d);
}

Tensor train_loss_with_draw(const Tensor& x0, const Tensor& y, const DenoiserFn& denoiser,
                            const NoiseSchedule& sched, const NoiseDraw& draw) {
  Tensor x_t = forward_sample(x0, draw.t, draw.eps, sched);
  Tensor eps_hat = denoiser(x_t, draw.t, y);
  if (eps_hat.shape() != draw.eps.shape()) {
    throw DimensionError("train_loss: denoiser returned " + shape_str(eps_hat.shape()) +
                         ", expected " + shape_str(draw.eps.shape()));
  }
  Tensor diff = sub(draw.eps, eps_hat);
  return mean(mul(diff, diff));
}

PosteriorSample sample_posterior(const Tensor& y, const DenoiserFn& denoiser,
                                 const NoiseSchedule& sched, int n_h, int k_samples,
                                 const Rng& rng) {
  if (k_samples < 1) throw ContractError("sample_posterior: K must be at least 1");
  if (y.rank() != 2) throw DimensionError("sample_posterior: y must be rank-2");
  const int t_len = y.cols();
  const Shape state_shape{n_h, t_len};

  PosteriorSample out;
  out.samples.resize(static_cast<size_t>(k_samples));
  for (int k = 0; k < k_samples; ++k) {
    Rng chain = rng.child({0x636861696eULL, static_cast<std::uint64_t>(k)});
    Tensor x = Tensor::randn(state_shape, chain);
    for (int t = sched.t_diff; t >= 1; --t) {
      Tensor eps_hat = denoiser(x, t, y);
      Tensor z = t > 1 ? Tensor::randn(state_shape, chain) : Tensor::zeros(state_shape);
      try {
        x = reverse_step(x, t, eps_hat, sched, z);
      } catch (const NumericError& e) {
        throw SamplingError("sample_posterior: chain " + std::to_string(k) +
                            " became non-finite at step " + std::to_string(t) + " (" + e.what() +
                            ")");
      }
    }
    out.samples[static_cast<size_t>(k)] = x;
  }

  Arr acc = Arr::Zero(out.samples[0].size());
  for (const Tensor& s : out.samples) acc += s.data();
  out.mean = Tensor(state_shape, acc / static_cast<double>(k_samples));
  return out;
}

}  // namespace ecgi
