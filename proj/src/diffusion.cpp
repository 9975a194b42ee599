#include "metsyn/diffusion.hpp"

#include <cmath>
#include <string>

namespace metsyn {

DiffusionSchedule DiffusionSchedule::linear(int T, double beta_1, double beta_T) {
  if (T < 2) throw InvalidArgument("diffusion schedule needs T >= 2");
  if (!(beta_1 > 0.0) || !(beta_1 < beta_T) || !(beta_T < 1.0))
    throw InvalidArgument("diffusion schedule needs 0 < beta_1 < beta_T < 1");
  DiffusionSchedule s;
  s.betas_.resize(static_cast<std::size_t>(T));
  const double step = (beta_T - beta_1) / static_cast<double>(T - 1);
  for (int t = 1; t <= T; ++t) s.betas_[static_cast<std::size_t>(t - 1)] = beta_1 + (t - 1) * step;
  s.betas_.front() = beta_1;
  s.betas_.back() = beta_T;
  s.alpha_bars_.resize(static_cast<std::size_t>(T) + 1);
  s.alpha_bars_[0] = 1.0;
  for (std::size_t t = 1; t <= static_cast<std::size_t>(T); ++t)
    s.alpha_bars_[t] = s.alpha_bars_[t - 1] * (1.0 - s.betas_[t - 1]);
  return s;
}

std::size_t DiffusionSchedule::check(int t, int lo) const {
  if (t < lo || t > T())
    throw InvalidArgument("timestep " + std::to_string(t) + " outside [" + std::to_string(lo) +
                          ", " + std::to_string(T()) + "]");
  return static_cast<std::size_t>(t);
}

NoisedVolume forward_diffuse(const Volume &x0, int t, const DiffusionSchedule &s, Rng &rng) {
  s.alpha_bar(t);
  if (t == 0) return {x0, 0, Volume(x0.dims(), x0.spacing(), 0.0f)};
  Volume eps(x0.dims(), x0.spacing());
  for (auto &e : eps.data()) e = static_cast<float>(rng.normal());
  return forward_diffuse_with(x0, t, s, std::move(eps));
}

NoisedVolume forward_diffuse_with(const Volume &x0, int t, const DiffusionSchedule &s, Volume eps) {
  require_same_grid(x0, eps, "forward_diffuse");
  const double ab = s.alpha_bar(t);
  if (t == 0) return {x0, 0, std::move(eps)};
  const double a = std::sqrt(ab), b = std::sqrt(1.0 - ab);
  Volume xt(x0.dims(), x0.spacing());
  for (std::size_t i = 0; i < xt.size(); ++i)
    xt[i] = static_cast<float>(a * x0[i] + b * eps[i]);
  return {std::move(xt), t, std::move(eps)};
}

Volume forward_step(const Volume &x_prev, int t, const DiffusionSchedule &s, Rng &rng) {
  const double beta = s.beta(t);
  const double a = std::sqrt(1.0 - beta), b = std::sqrt(beta);
  Volume out(x_prev.dims(), x_prev.spacing());
  for (std::size_t i = 0; i < out.size(); ++i)
    out[i] = static_cast<float>(a * x_prev[i] + b * rng.normal());
  return out;
}

std::vector<int> ddim_steps(int T, int n_steps) {
  if (T < 1 || n_steps < 1 || n_steps > T)
    throw InvalidArgument("ddim_steps needs 1 <= n_steps <= T");
  std::vector<int> out;
  out.reserve(static_cast<std::size_t>(n_steps));
  const auto t64 = static_cast<std::int64_t>(T), n64 = static_cast<std::int64_t>(n_steps);
  for (std::int64_t k = 0; k < n64; ++k)
    out.push_back(static_cast<int>(t64 - (2 * k * t64 + n64) / (2 * n64)));
  return out;
}

Volume ddim_sample(const Volume &x_t, std::span<const int> t_seq, const Denoiser &d,
                   const DiffusionSchedule &s) {
  if (t_seq.empty()) throw InvalidArgument("ddim_sample: empty timestep sequence");
  for (std::size_t k = 0; k < t_seq.size(); ++k) {
    if (t_seq[k] < 1 || t_seq[k] > s.T())
      throw InvalidArgument("ddim_sample: timestep outside the schedule");
    if (k > 0 && t_seq[k] >= t_seq[k - 1])
      throw InvalidArgument("ddim_sample: timesteps must strictly decrease");
  }
  Volume x = x_t;
  for (std::size_t k = 0; k < t_seq.size(); ++k) {
    const int t = t_seq[k];
    const int next = k + 1 < t_seq.size() ? t_seq[k + 1] : 0;
    const Volume eps = d.predict_noise(x, t);
    require_same_grid(x, eps, "ddim_sample: denoiser output");
    const double ab = s.alpha_bar(t), ab_next = s.alpha_bar(next);
    const double sa = std::sqrt(ab), sb = std::sqrt(1.0 - ab);
    const double na = std::sqrt(ab_next), nb = std::sqrt(1.0 - ab_next);
    for (std::size_t i = 0; i < x.size(); ++i) {
      const double e = eps[i];
      const double x0_hat = (x[i] - sb * e) / sa;
      const double v = na * x0_hat + nb * e;
      if (!std::isfinite(v)) throw NumericError("ddim_sample: non-finite value at t=" + std::to_string(t));
      x[i] = static_cast<float>(v);
    }
  }
  return x;
}

std::vector<int> refine_steps(int lambda, int n_ddim) {
  if (lambda < 1) throw InvalidArgument("refine: lambda must be >= 1");
  if (n_ddim < 0) throw InvalidArgument("refine: n_ddim must be >= 0");
  const int n = (n_ddim == 0 || n_ddim >= lambda) ? lambda : n_ddim;
  return ddim_steps(lambda, n);
}

SyntheticSample refine(const SyntheticSample &sample, int lambda, const Denoiser &d,
                       const DiffusionSchedule &s, int n_ddim, std::uint64_t seed) {
  if (lambda < 1 || lambda > s.T()) throw InvalidArgument("refine: lambda must be in [1, T]");
  const auto steps = refine_steps(lambda, n_ddim);
  Rng rng(seed);
  const NoisedVolume noised = forward_diffuse(sample.image, lambda, s, rng);
  SyntheticSample out = sample;
  out.image = ddim_sample(noised.data, steps, d, s);
  out.provenance.refinement = RefinementRecord{lambda,
                                               static_cast<int>(steps.size()),
                                               s.T(),
                                               s.beta(1),
                                               s.beta(s.T()),
                                               seed};
  return out;
}

} // namespace metsyn
