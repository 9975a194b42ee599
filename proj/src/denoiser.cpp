#include "metsyn/denoiser.hpp"

#include <algorithm>
#include <cmath>

namespace metsyn {

NetDenoiser::NetDenoiser(TinyNet net, int T) : net_(std::move(net)), T_(T) {
  if (T < 1) throw InvalidArgument("NetDenoiser needs T >= 1");
  const auto &plan = net_.channel_plan();
  if (plan.front() != 2 || plan.back() != 1)
    throw InvalidArgument("denoiser net must map 2 channels to 1");
}

Volume NetDenoiser::predict_noise(const Volume &x_t, int t) const {
  const Tensor4 out =
      net_.forward(tensor_with_time_channel(x_t, static_cast<double>(t) / static_cast<double>(T_)));
  Volume eps = tensor_channel_volume(out, 0, x_t.spacing());
  if (!all_finite(eps)) throw NumericError("denoiser produced non-finite output");
  return eps;
}

std::vector<TrainingPair> make_denoiser_pairs(const std::vector<Volume> &images,
                                              const DiffusionSchedule &s,
                                              const DenoiserPairOptions &opt) {
  if (images.empty()) throw InvalidArgument("make_denoiser_pairs: no images");
  if (opt.count < 0 || opt.patch < 1) throw InvalidArgument("make_denoiser_pairs: bad options");
  const int t_max = opt.t_max == 0 ? s.T() : opt.t_max;
  if (t_max < 1 || t_max > s.T()) throw InvalidArgument("make_denoiser_pairs: t_max outside [1, T]");

  std::vector<TrainingPair> pairs(static_cast<std::size_t>(opt.count));
  for (int k = 0; k < opt.count; ++k) {
    Rng rng(Rng::derive(opt.seed, {static_cast<std::uint64_t>(k)}));
    const Volume &img = images[rng.below(images.size())];
    BoundingBox box;
    for (int a = 0; a < 3; ++a) {
      const std::int64_t edge = std::min<std::int64_t>(opt.patch, img.dims()[a]);
      box.lo[a] = static_cast<std::int64_t>(rng.below(static_cast<std::uint64_t>(img.dims()[a] - edge + 1)));
      box.hi[a] = box.lo[a] + edge - 1;
    }
    const Volume patch = crop(img, box);
    const int t = 1 + static_cast<int>(rng.below(static_cast<std::uint64_t>(t_max)));
    const NoisedVolume nv = forward_diffuse(patch, t, s, rng);
    pairs[static_cast<std::size_t>(k)] = {
        tensor_with_time_channel(nv.data, static_cast<double>(t) / static_cast<double>(s.T())),
        tensor_from_volume(nv.eps)};
  }
  return pairs;
}

} // namespace metsyn
