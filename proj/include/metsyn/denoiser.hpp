#pragma once

#include <cstdint>
#include <vector>

#include "metsyn/diffusion.hpp"
#include "metsyn/tinynet.hpp"

namespace metsyn {

/// TinyNet fed with [x_t, t/T] and read as the predicted noise.
class NetDenoiser final : public Denoiser {
public:
  NetDenoiser(TinyNet net, int T);
  Volume predict_noise(const Volume &x_t, int t) const override;
  const TinyNet &net() const noexcept { return net_; }
  int T() const noexcept { return T_; }

private:
  TinyNet net_;
  int T_;
};

struct DenoiserPairOptions {
  int count = 200;
  /// Edge of the cubic patches cut from the images (clamped to each image).
  int patch = 16;
  /// Timesteps are drawn uniformly from [1, t_max]; 0 means T.
  int t_max = 0;
  std::uint64_t seed = 0;
};

/// Noise-prediction training pairs. Pair k uses Rng(derive(seed, {k})) and
/// draws, in order: image index, patch corner (x, y, z), timestep, then one
/// normal per patch voxel for eps.
std::vector<TrainingPair> make_denoiser_pairs(const std::vector<Volume> &images,
                                              const DiffusionSchedule &s,
                                              const DenoiserPairOptions &opt);

} // namespace metsyn
