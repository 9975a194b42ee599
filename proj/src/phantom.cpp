#include "metsyn/phantom.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

#include "metsyn/metrics.hpp"

namespace metsyn {

namespace {

using P3 = std::array<double, 3>;
constexpr int kSegments = 8;
constexpr double kMinLesionMm3 = 16.0;
constexpr int kLesionAttempts = 100;

double segment_distance(const P3 &p, const P3 &a, const P3 &b) {
  P3 ab{}, ap{};
  double len2 = 0.0, dot = 0.0;
  for (int k = 0; k < 3; ++k) {
    ab[k] = b[k] - a[k];
    ap[k] = p[k] - a[k];
    len2 += ab[k] * ab[k];
    dot += ab[k] * ap[k];
  }
  const double u = len2 > 0.0 ? std::clamp(dot / len2, 0.0, 1.0) : 0.0;
  double d2 = 0.0;
  for (int k = 0; k < 3; ++k) {
    const double e = ap[k] - u * ab[k];
    d2 += e * e;
  }
  return std::sqrt(d2);
}

P3 centre_of(const Index3 &i, const Spacing3 &s) {
  return {(static_cast<double>(i[0]) + 0.5) * s[0], (static_cast<double>(i[1]) + 0.5) * s[1],
          (static_cast<double>(i[2]) + 0.5) * s[2]};
}

/// Distance inward from the femur surface; positive inside.
double femur_depth(const P3 &p, const PhantomSpec &spec, const FemurGeometry &g) {
  double line = std::numeric_limits<double>::infinity();
  for (std::size_t k = 0; k + 1 < g.centreline.size(); ++k)
    line = std::min(line, segment_distance(p, g.centreline[k], g.centreline[k + 1]));
  const P3 &h = g.centreline.back();
  const double dh = std::sqrt((p[0] - h[0]) * (p[0] - h[0]) + (p[1] - h[1]) * (p[1] - h[1]) +
                              (p[2] - h[2]) * (p[2] - h[2]));
  return std::max(spec.shaft_radius_mm - line, spec.head_radius_mm - dh);
}

void add_texture(Volume &v, double sigma, std::uint64_t seed) {
  if (sigma == 0.0) return;
  Rng rng(seed);
  for (auto &x : v.data()) x = static_cast<float>(x + sigma * rng.normal());
}

void paint(Volume &image, Mask &femur, const PhantomSpec &spec) {
  const FemurGeometry g = femur_geometry(spec);
  for (std::size_t i = 0; i < image.size(); ++i) {
    const double depth = femur_depth(centre_of(image.coords(i), spec.spacing), spec, g);
    if (depth >= 0.0) {
      femur[i] = 1;
      image[i] = static_cast<float>(depth <= spec.cortical_thickness_mm ? spec.levels[2]
                                                                       : spec.levels[1]);
    } else {
      image[i] = static_cast<float>(spec.levels[0]);
    }
  }
}

} // namespace

void PhantomSpec::validate() const {
  for (int a = 0; a < 3; ++a) {
    if (dims[a] < 1) throw InvalidArgument("phantom dims must be >= 1");
    if (!(spacing[a] > 0.0)) throw InvalidArgument("phantom spacing must be > 0");
  }
  if (!(cortical_thickness_mm > 0.0 && cortical_thickness_mm < shaft_radius_mm))
    throw InvalidArgument("phantom needs 0 < cortical thickness < shaft radius");
  if (!(head_radius_mm >= shaft_radius_mm))
    throw InvalidArgument("phantom head radius must be >= shaft radius");
  if (!(levels[0] < levels[1] && levels[1] < levels[2]))
    throw InvalidArgument("phantom levels must satisfy background < trabecular < cortical");
  if (!(lesion_level < levels[1])) throw InvalidArgument("lesion level must lie below trabecular");
  if (!(noise_sigma >= 0.0)) throw InvalidArgument("phantom noise_sigma must be >= 0");
  if (!(lesion_axis_mm[0] > 0.0 && lesion_axis_mm[0] <= lesion_axis_mm[1]))
    throw InvalidArgument("lesion axis range must satisfy 0 < low <= high");
  const double r = shaft_radius_mm, R = head_radius_mm;
  const double ex = dims[0] * spacing[0], ey = dims[1] * spacing[1], ez = dims[2] * spacing[2];
  const double half_bend = std::abs(bend_mm) / 2.0;
  const bool fits = ex / 2.0 - half_bend - std::max(r, R) >= spacing[0] &&
                    ey / 2.0 - std::max(r, R) >= spacing[1] &&
                    ez - 2.0 * spacing[2] - R - r > 0.0;
  if (!fits) throw InvalidArgument("phantom dims too small to contain the femur geometry");
}

FemurGeometry femur_geometry(const PhantomSpec &spec) {
  const double ex = spec.dims[0] * spec.spacing[0], ey = spec.dims[1] * spec.spacing[1];
  const double ez = spec.dims[2] * spec.spacing[2];
  const double z0 = spec.spacing[2] + spec.shaft_radius_mm;
  const double z1 = ez - spec.spacing[2] - spec.head_radius_mm;
  FemurGeometry g;
  for (int k = 0; k <= kSegments; ++k) {
    const double u = static_cast<double>(k) / kSegments;
    g.centreline.push_back({ex / 2.0 + spec.bend_mm * (u * u - 0.5), ey / 2.0, z0 + u * (z1 - z0)});
  }
  for (int k = 0; k < kSegments; ++k) {
    const auto &a = g.centreline[k], &b = g.centreline[k + 1];
    g.shaft_length_mm += std::hypot(b[0] - a[0], b[1] - a[1], b[2] - a[2]);
  }
  return g;
}

double analytic_femur_mm3(const PhantomSpec &spec) {
  using std::numbers::pi;
  const double r = spec.shaft_radius_mm, R = spec.head_radius_mm;
  const double L = femur_geometry(spec).shaft_length_mm;
  return pi * r * r * L + 2.0 / 3.0 * pi * r * r * r + 4.0 / 3.0 * pi * R * R * R -
         2.0 * pi / 3.0 * (R * R * R - std::pow(R * R - r * r, 1.5));
}

HealthyFemur make_healthy_femur(const PhantomSpec &spec) {
  spec.validate();
  HealthyFemur out{Volume(spec.dims, spec.spacing), Mask(spec.dims, spec.spacing)};
  paint(out.image, out.femur, spec);
  add_texture(out.image, spec.noise_sigma, spec.seed);
  return out;
}

LesionedFemur make_lesioned_femur(const PhantomSpec &spec, int lesion_count, Rng &rng) {
  spec.validate();
  if (lesion_count < 1) throw InvalidArgument("lesion_count must be >= 1");
  LesionedFemur out{Volume(spec.dims, spec.spacing), Mask(spec.dims, spec.spacing),
                    Mask(spec.dims, spec.spacing), {}};
  paint(out.image, out.femur, spec);

  std::vector<std::size_t> femur_voxels;
  for (std::size_t i = 0; i < out.femur.size(); ++i)
    if (out.femur[i]) femur_voxels.push_back(i);
  if (femur_voxels.empty()) throw InvalidArgument("phantom femur is empty");

  const auto &s = spec.spacing;
  const double vv = out.femur.voxel_volume();
  for (int l = 0; l < lesion_count; ++l) {
    bool placed = false;
    for (int attempt = 0; attempt < kLesionAttempts && !placed; ++attempt) {
      const P3 c = centre_of(out.femur.coords(femur_voxels[rng.below(femur_voxels.size())]), s);
      P3 ax{};
      for (auto &a : ax) a = rng.uniform(spec.lesion_axis_mm[0], spec.lesion_axis_mm[1]);
      Index3 lo{}, hi{};
      for (int k = 0; k < 3; ++k) {
        lo[k] = std::max<std::int64_t>(0, static_cast<std::int64_t>(std::floor((c[k] - ax[k]) / s[k])));
        hi[k] = std::min<std::int64_t>(spec.dims[k] - 1,
                                       static_cast<std::int64_t>(std::ceil((c[k] + ax[k]) / s[k])));
      }
      std::vector<std::size_t> voxels;
      bool ok = true;
      for (std::int64_t z = lo[2]; z <= hi[2] && ok; ++z)
        for (std::int64_t y = lo[1]; y <= hi[1] && ok; ++y)
          for (std::int64_t x = lo[0]; x <= hi[0]; ++x) {
            const P3 p = centre_of({x, y, z}, s);
            double q = 0.0;
            for (int k = 0; k < 3; ++k) q += (p[k] - c[k]) * (p[k] - c[k]) / (ax[k] * ax[k]);
            if (q > 1.0) continue;
            const std::size_t i = out.femur.linear(x, y, z);
            if (!out.femur[i] || out.lesion[i]) {
              ok = false;
              break;
            }
            voxels.push_back(i);
          }
      // Voxels of an ellipsoid reaching past the grid would be silently lost.
      for (int k = 0; k < 3 && ok; ++k)
        if (c[k] - ax[k] < 0.0 || c[k] + ax[k] > spec.dims[k] * s[k]) ok = false;
      if (!ok || static_cast<double>(voxels.size()) * vv <= kMinLesionMm3) continue;
      for (std::size_t i : voxels) {
        out.lesion[i] = 1;
        out.image[i] = static_cast<float>(spec.lesion_level);
      }
      out.lesions.push_back({c, ax, voxels.size()});
      placed = true;
    }
    if (!placed)
      throw ExhaustedError("could not place phantom lesion " + std::to_string(l) + " after " +
                           std::to_string(kLesionAttempts) + " attempts");
  }
  add_texture(out.image, spec.noise_sigma, spec.seed);
  return out;
}

Mask simulate_operator(const Mask &reference, double skill, Rng &rng) {
  if (!(skill > 0.0 && skill <= 1.0)) throw InvalidArgument("skill must lie in (0, 1]");
  if (count_foreground(reference) == 0) throw InvalidArgument("simulate_operator: empty reference");
  if (skill == 1.0) return reference;
  const double p = 1.0 - skill;
  Mask m = reference;
  for (int round = 0; round < 2; ++round) {
    const Mask band = mask_difference(dilate6(m), erode6(m));
    Mask next = m;
    for (std::size_t i = 0; i < m.size(); ++i)
      if (band[i] && rng.uniform() < p) next[i] = m[i] ? 0 : 1;
    m = std::move(next);
  }
  return m;
}

} // namespace metsyn
