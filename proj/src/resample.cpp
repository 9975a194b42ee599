#include <algorithm>
#include <cmath>

#include "metsyn/volume.hpp"

namespace metsyn {

std::int64_t resampled_extent(std::int64_t n, double spacing, double target) {
  const double exact = static_cast<double>(n) * spacing / target;
  return std::max<std::int64_t>(1, static_cast<std::int64_t>(std::floor(exact + 0.5)));
}

double source_position(std::int64_t j, double spacing, double target) {
  return (static_cast<double>(j) + 0.5) * target / spacing - 0.5;
}

double sample_trilinear(const Volume &v, double x, double y, double z) {
  const auto &d = v.dims();
  const double p[3] = {x, y, z};
  std::int64_t i0[3], i1[3];
  double f[3];
  for (int a = 0; a < 3; ++a) {
    const double c = std::clamp(p[a], 0.0, static_cast<double>(d[a] - 1));
    const double fl = std::floor(c);
    i0[a] = static_cast<std::int64_t>(fl);
    i1[a] = std::min(i0[a] + 1, d[a] - 1);
    f[a] = c - fl;
  }
  const auto at = [&](std::int64_t xi, std::int64_t yi, std::int64_t zi) {
    return static_cast<double>(v(xi, yi, zi));
  };
  const double c00 = at(i0[0], i0[1], i0[2]) * (1 - f[0]) + at(i1[0], i0[1], i0[2]) * f[0];
  const double c10 = at(i0[0], i1[1], i0[2]) * (1 - f[0]) + at(i1[0], i1[1], i0[2]) * f[0];
  const double c01 = at(i0[0], i0[1], i1[2]) * (1 - f[0]) + at(i1[0], i0[1], i1[2]) * f[0];
  const double c11 = at(i0[0], i1[1], i1[2]) * (1 - f[0]) + at(i1[0], i1[1], i1[2]) * f[0];
  const double c0 = c00 * (1 - f[1]) + c10 * f[1];
  const double c1 = c01 * (1 - f[1]) + c11 * f[1];
  return c0 * (1 - f[2]) + c1 * f[2];
}

namespace {

void check_target(double t) {
  if (!(t > 0.0) || !std::isfinite(t)) throw InvalidArgument("target spacing must be > 0");
}

Index3 output_dims(const Index3 &d, const Spacing3 &s, double t) {
  return {resampled_extent(d[0], s[0], t), resampled_extent(d[1], s[1], t),
          resampled_extent(d[2], s[2], t)};
}

} // namespace

Volume resample_isotropic(const Volume &v, double target_spacing) {
  check_target(target_spacing);
  const auto &s = v.spacing();
  const Index3 od = output_dims(v.dims(), s, target_spacing);
  Volume out(od, {target_spacing, target_spacing, target_spacing});
  for (std::int64_t z = 0; z < od[2]; ++z) {
    const double pz = source_position(z, s[2], target_spacing);
    for (std::int64_t y = 0; y < od[1]; ++y) {
      const double py = source_position(y, s[1], target_spacing);
      for (std::int64_t x = 0; x < od[0]; ++x)
        out(x, y, z) = static_cast<float>(
            sample_trilinear(v, source_position(x, s[0], target_spacing), py, pz));
    }
  }
  return out;
}

Mask resample_mask(const Mask &m, double target_spacing) {
  check_target(target_spacing);
  const auto &s = m.spacing();
  const auto &d = m.dims();
  const Index3 od = output_dims(d, s, target_spacing);
  std::vector<std::int64_t> map[3];
  for (int a = 0; a < 3; ++a) {
    map[a].resize(static_cast<std::size_t>(od[a]));
    for (std::int64_t j = 0; j < od[a]; ++j) {
      const double p = source_position(j, s[a], target_spacing);
      map[a][static_cast<std::size_t>(j)] =
          std::clamp<std::int64_t>(static_cast<std::int64_t>(std::floor(p + 0.5)), 0, d[a] - 1);
    }
  }
  Mask out(od, {target_spacing, target_spacing, target_spacing});
  for (std::int64_t z = 0; z < od[2]; ++z)
    for (std::int64_t y = 0; y < od[1]; ++y)
      for (std::int64_t x = 0; x < od[0]; ++x)
        out(x, y, z) = m(map[0][static_cast<std::size_t>(x)], map[1][static_cast<std::size_t>(y)],
                         map[2][static_cast<std::size_t>(z)]);
  return out;
}

} // namespace metsyn
