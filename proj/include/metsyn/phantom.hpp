#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include "metsyn/rng.hpp"
#include "metsyn/volume.hpp"

namespace metsyn {

/// Procedural femur: a tube bent in the x-z plane running up the z axis,
/// capped by a spherical head at its upper end.
struct PhantomSpec {
  Index3 dims{24, 24, 32};
  Spacing3 spacing{0.85, 0.85, 0.85};
  double shaft_radius_mm = 4.5;
  double cortical_thickness_mm = 1.2;
  double head_radius_mm = 6.0;
  /// Lateral x offset between the two shaft ends.
  double bend_mm = 2.5;
  /// background, trabecular, cortical.
  std::array<double, 3> levels{-100.0, 300.0, 1200.0};
  /// Lesion intensity; must lie below the trabecular level.
  double lesion_level = 40.0;
  /// Range of lesion semi-axes in mm.
  std::array<double, 2> lesion_axis_mm{2.0, 3.2};
  double noise_sigma = 25.0;
  std::uint64_t seed = 0;

  void validate() const;
};

/// Shaft centreline: the bottom end, the top end (head centre) and the
/// intermediate polyline vertices, in mm.
struct FemurGeometry {
  std::vector<std::array<double, 3>> centreline;
  double shaft_length_mm = 0.0;
};

FemurGeometry femur_geometry(const PhantomSpec &spec);

/// Volume of the tube (hemispherical bottom cap) joined with the head,
/// treating the shaft as straight.
double analytic_femur_mm3(const PhantomSpec &spec);

struct HealthyFemur {
  Volume image;
  Mask femur;
};

/// Texture noise is one normal() per voxel in linear order from Rng(spec.seed).
HealthyFemur make_healthy_femur(const PhantomSpec &spec);

struct PhantomLesion {
  std::array<double, 3> centre_mm;
  std::array<double, 3> semi_axes_mm;
  std::size_t voxels = 0;
};

struct LesionedFemur {
  Volume image;
  Mask femur;
  Mask lesion;
  std::vector<PhantomLesion> lesions;
};

/// Axis-aligned ellipsoidal lesions set to spec.lesion_level before the
/// texture noise is added. Each lesion draws a centre with below(#femur)
/// over femur voxels in linear order, then three semi-axes uniform in
/// lesion_axis_mm, and is accepted when it lies inside the femur, misses
/// earlier lesions and exceeds 16 mm^3; 100 attempts per lesion.
LesionedFemur make_lesioned_femur(const PhantomSpec &spec, int lesion_count, Rng &rng);

/// Annotation by an operator of the given skill in (0, 1]. Two rounds; in
/// each, every voxel of the boundary band (dilation minus erosion) draws a
/// uniform in linear order and flips when it falls below 1 - skill.
Mask simulate_operator(const Mask &reference, double skill, Rng &rng);

} // namespace metsyn
