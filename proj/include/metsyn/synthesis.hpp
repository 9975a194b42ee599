#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "metsyn/rng.hpp"
#include "metsyn/volume.hpp"

namespace metsyn {

/// A lesion ended up at or below the minimum size after placement.
class UndersizedLesion : public ExhaustedError {
public:
  using ExhaustedError::ExhaustedError;
};

/// Parameters of the lesion synthesis pipeline.
struct SynthesisConfig {
  /// Ellipsoid semi-axes as a fraction of the lesion's bbox half-extent.
  std::array<double, 2> ellipsoid_axis_fraction_range{0.5, 1.0};
  /// Rotation angles are drawn in [-range, +range] degrees per axis.
  double rotation_range_deg = 180.0;
  std::array<double, 2> scale_range{0.8, 1.2};
  /// Edge of the box filter applied to the lesion boundary shell (odd).
  int smooth_kernel = 3;
  /// Noise std in standardized intensity units.
  double noise_sigma = 0.05;
  int max_placement_attempts = 100;
  double min_lesion_mm3 = 16.0;
  std::uint64_t seed = 0;

  void validate() const;
};

struct LesionFragment {
  Volume intensities;
  Mask mask;
  std::string source_id;
  double volume_mm3 = 0.0;
};

struct EllipsoidParams {
  Index3 center{0, 0, 0};
  /// In voxels, along x, y, z.
  std::array<double, 3> semi_axes{0.0, 0.0, 0.0};
};

struct TransformParams {
  /// Rotations about x, then y, then z, in degrees.
  std::array<double, 3> angles_deg{0.0, 0.0, 0.0};
  double scale = 1.0;
};

struct RefinementRecord {
  int lambda = 0;
  int n_ddim = 0;
  int T = 0;
  double beta_1 = 0.0;
  double beta_T = 0.0;
  std::uint64_t seed = 0;
};

struct Provenance {
  std::string donor_id;
  std::string host_id;
  std::uint64_t seed = 0;
  EllipsoidParams ellipsoid;
  TransformParams transform;
  /// Host voxel receiving the fragment grid origin.
  Index3 placement{0, 0, 0};
  int crop_attempts = 0;
  int transform_attempts = 0;
  int placement_attempts = 0;
  std::optional<RefinementRecord> refinement;
};

struct SyntheticSample {
  std::string id;
  Volume image;
  Mask label;
  Provenance provenance;
};

/// Largest 6-connected component of `lesion_mask`, cropped with a one-voxel
/// margin. Throws if the mask is empty or the component is <= min_mm3.
LesionFragment extract_lesion(const Volume &image, const Mask &lesion_mask,
                              const std::string &source_id, double min_mm3 = 16.0);

/// Fragment mask restricted to the ellipsoid, largest component kept.
LesionFragment intersect_ellipsoid(const LesionFragment &f, const EllipsoidParams &e);

struct CropResult {
  LesionFragment fragment;
  EllipsoidParams params;
  int attempts = 0;
};

/// Random ellipsoid intersection. Draws per attempt: centre index
/// below(#foreground) over foreground voxels in linear order, then three
/// uniform axis fractions (x, y, z). Semi-axes are fraction * bbox extent / 2.
/// Throws ExhaustedError if no attempt leaves more than min_lesion_mm3.
CropResult ellipsoid_crop(const LesionFragment &f, const SynthesisConfig &cfg, Rng &rng);

/// Rotates (x, then y, then z) and scales the fragment about its mask
/// centroid. The output grid covers the transformed input grid; intensities
/// are trilinear, the mask nearest-neighbour.
LesionFragment apply_transform(const LesionFragment &f, const TransformParams &p);

struct TransformResult {
  LesionFragment fragment;
  TransformParams params;
  int attempts = 0;
};

/// Draws per attempt: three uniform angles (x, y, z) then a uniform scale.
TransformResult transform_lesion(const LesionFragment &f, const SynthesisConfig &cfg, Rng &rng);

/// Composites the fragment with its grid origin at host voxel `at`.
///
/// Inside the mask host voxels are replaced; the boundary shell
/// (dilation minus erosion) is box-filtered with smooth_kernel^3 over the
/// composited image; Gaussian noise is added over mask and shell, one
/// normal() per voxel in ascending linear order (no draws when sigma is 0).
SyntheticSample blend_lesion(const Volume &host, const Mask &femur, const LesionFragment &f,
                             const Index3 &at, const SynthesisConfig &cfg, Rng &rng);

struct PlacementResult {
  SyntheticSample sample;
  /// Candidates drawn, including the accepted one.
  int attempts = 0;
};

/// Draws candidate centres with below(#femur voxels) over femur voxels in
/// linear order; the fragment's rounded mask centroid lands on the candidate.
/// Accepts the first candidate whose whole lesion lies inside the femur.
PlacementResult place_lesion(const Volume &host, const Mask &femur, const LesionFragment &f,
                             const SynthesisConfig &cfg, Rng &rng);

struct LabeledCase {
  std::string id;
  Volume image;
  Mask mask;
};

struct YieldSummary {
  std::size_t attempted = 0;
  std::size_t produced = 0;
  std::size_t dropped_extraction = 0;
  std::size_t dropped_crop = 0;
  std::size_t dropped_transform = 0;
  std::size_t dropped_placement = 0;
  std::size_t dropped_undersized = 0;
};

struct Dataset {
  std::vector<SyntheticSample> samples;
  YieldSummary yield;
};

/// per_pair attempts for every (donor, host) pair. Each attempt owns the
/// stream Rng(Rng::derive(cfg.seed, {donor, host, repetition})) and runs
/// crop, transform, place and blend in that order.
Dataset generate_dataset(const std::vector<LabeledCase> &donors,
                         const std::vector<LabeledCase> &hosts, int per_pair,
                         const SynthesisConfig &cfg);

std::vector<SyntheticSample> exclude_donor(const std::vector<SyntheticSample> &samples,
                                           const std::set<std::string> &donor_ids);

/// Writes <dir>/<id>_img.vvol, <id>_lbl.vvol and <id>_meta.json.
void write_sample(const SyntheticSample &s, const std::filesystem::path &dir);
SyntheticSample read_sample(const std::filesystem::path &dir, const std::string &id);

} // namespace metsyn
