#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "metsyn/rng.hpp"
#include "metsyn/synthesis.hpp"
#include "metsyn/volume.hpp"

namespace metsyn {

/// beta/alpha/alpha-bar tables for t = 1..T, with alpha_bar(0) = 1.
class DiffusionSchedule {
public:
  /// beta_t = beta_1 + (t-1)(beta_T - beta_1)/(T-1); the endpoints are stored
  /// exactly as given. alpha_bar_t = alpha_bar_{t-1} * (1 - beta_t).
  static DiffusionSchedule linear(int T, double beta_1, double beta_T);

  int T() const noexcept { return static_cast<int>(betas_.size()); }
  double beta(int t) const { return betas_.at(check(t, 1) - 1); }
  double alpha(int t) const { return 1.0 - beta(t); }
  double alpha_bar(int t) const { return alpha_bars_.at(check(t, 0)); }
  std::span<const double> betas() const noexcept { return betas_; }
  /// alpha_bar(0..T).
  std::span<const double> alpha_bars() const noexcept { return alpha_bars_; }

private:
  std::size_t check(int t, int lo) const;

  std::vector<double> betas_;
  std::vector<double> alpha_bars_;
};

inline DiffusionSchedule linear_schedule(int T, double beta_1, double beta_T) {
  return DiffusionSchedule::linear(T, beta_1, beta_T);
}

struct NoisedVolume {
  Volume data;
  int t = 0;
  /// The standard-normal draw that produced `data`.
  Volume eps;
};

/// x_t = sqrt(abar_t) x0 + sqrt(1 - abar_t) eps, one normal() per voxel in
/// linear order. t = 0 returns x0 unchanged (no draws).
NoisedVolume forward_diffuse(const Volume &x0, int t, const DiffusionSchedule &s, Rng &rng);
/// Same closed form with a caller-supplied eps.
NoisedVolume forward_diffuse_with(const Volume &x0, int t, const DiffusionSchedule &s, Volume eps);
/// One transition x_{t-1} -> x_t: sqrt(1 - beta_t) x + sqrt(beta_t) z.
Volume forward_step(const Volume &x_prev, int t, const DiffusionSchedule &s, Rng &rng);

/// n timesteps T - round(k T / n), k = 0..n-1, rounding halves up.
std::vector<int> ddim_steps(int T, int n_steps);

/// Noise predictor eps(x_t, t). Implementations must be safe to call concurrently.
class Denoiser {
public:
  virtual ~Denoiser() = default;
  virtual Volume predict_noise(const Volume &x_t, int t) const = 0;
};

class ZeroDenoiser final : public Denoiser {
public:
  Volume predict_noise(const Volume &x_t, int) const override {
    return Volume(x_t.dims(), x_t.spacing(), 0.0f);
  }
};

/// Deterministic DDIM (eta = 0) from t_seq.front() through the rest of
/// t_seq and finally to t = 0.
Volume ddim_sample(const Volume &x_t, std::span<const int> t_seq, const Denoiser &d,
                   const DiffusionSchedule &s);

/// Timesteps used by refine: ddim_steps(lambda, n) with n = lambda when
/// n_ddim is 0 or >= lambda, i.e. every step from lambda down to 1.
std::vector<int> refine_steps(int lambda, int n_ddim);

/// Noises the image to step lambda with Rng(seed) and denoises it back.
/// The label is left untouched; the provenance gains a RefinementRecord.
SyntheticSample refine(const SyntheticSample &sample, int lambda, const Denoiser &d,
                       const DiffusionSchedule &s, int n_ddim, std::uint64_t seed);

} // namespace metsyn
