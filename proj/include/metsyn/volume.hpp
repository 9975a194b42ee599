#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "metsyn/error.hpp"

namespace metsyn {

using Index3 = std::array<std::int64_t, 3>;
using Spacing3 = std::array<double, 3>;

/// Dense 3D field stored x-fastest: linear index = x + nx * (y + ny * z).
///
/// Dims are at least 1 along every axis and spacing (mm per voxel) is
/// strictly positive; both are checked on construction.
template <typename T>
class Field3 {
public:
  using value_type = T;

  Field3() : Field3(Index3{1, 1, 1}, Spacing3{1.0, 1.0, 1.0}) {}

  Field3(Index3 dims, Spacing3 spacing, T fill = T{})
      : dims_(dims), spacing_(spacing) {
    validate_grid(dims_, spacing_);
    data_.assign(static_cast<std::size_t>(dims_[0] * dims_[1] * dims_[2]), fill);
  }

  Field3(Index3 dims, Spacing3 spacing, std::vector<T> data)
      : dims_(dims), spacing_(spacing), data_(std::move(data)) {
    validate_grid(dims_, spacing_);
    if (data_.size() != static_cast<std::size_t>(dims_[0] * dims_[1] * dims_[2]))
      throw InvalidArgument("field data length " + std::to_string(data_.size()) +
                            " does not match dims");
  }

  const Index3 &dims() const noexcept { return dims_; }
  const Spacing3 &spacing() const noexcept { return spacing_; }
  std::size_t size() const noexcept { return data_.size(); }
  double voxel_volume() const noexcept { return spacing_[0] * spacing_[1] * spacing_[2]; }

  std::span<T> data() noexcept { return data_; }
  std::span<const T> data() const noexcept { return data_; }
  std::vector<T> &storage() noexcept { return data_; }
  const std::vector<T> &storage() const noexcept { return data_; }

  std::size_t linear(std::int64_t x, std::int64_t y, std::int64_t z) const noexcept {
    return static_cast<std::size_t>(x + dims_[0] * (y + dims_[1] * z));
  }
  std::size_t linear(const Index3 &p) const noexcept { return linear(p[0], p[1], p[2]); }
  Index3 coords(std::size_t i) const noexcept {
    const auto li = static_cast<std::int64_t>(i);
    return {li % dims_[0], (li / dims_[0]) % dims_[1], li / (dims_[0] * dims_[1])};
  }
  bool contains(const Index3 &p) const noexcept {
    return p[0] >= 0 && p[1] >= 0 && p[2] >= 0 && p[0] < dims_[0] && p[1] < dims_[1] &&
           p[2] < dims_[2];
  }

  T &operator()(std::int64_t x, std::int64_t y, std::int64_t z) noexcept {
    return data_[linear(x, y, z)];
  }
  const T &operator()(std::int64_t x, std::int64_t y, std::int64_t z) const noexcept {
    return data_[linear(x, y, z)];
  }
  T &operator[](std::size_t i) noexcept { return data_[i]; }
  const T &operator[](std::size_t i) const noexcept { return data_[i]; }

  template <typename U>
  bool same_grid(const Field3<U> &o) const noexcept {
    return dims_ == o.dims() && spacing_ == o.spacing();
  }

  bool operator==(const Field3 &) const = default;

private:
  static void validate_grid(const Index3 &d, const Spacing3 &s) {
    for (int a = 0; a < 3; ++a) {
      if (d[a] < 1) throw InvalidArgument("field dims must be >= 1");
      if (!(s[a] > 0.0)) throw InvalidArgument("field spacing must be > 0");
    }
  }

  Index3 dims_;
  Spacing3 spacing_;
  std::vector<T> data_;
};

/// Scalar intensities (HU-like before standardization).
using Volume = Field3<float>;
/// Binary segmentation, values in {0, 1}.
using Mask = Field3<std::uint8_t>;

/// Inclusive voxel box.
struct BoundingBox {
  Index3 lo{0, 0, 0};
  Index3 hi{0, 0, 0};

  Index3 extent() const noexcept { return {hi[0] - lo[0] + 1, hi[1] - lo[1] + 1, hi[2] - lo[2] + 1}; }
  bool operator==(const BoundingBox &) const = default;
};

/// Throws when the grids of two fields differ.
template <typename A, typename B>
void require_same_grid(const Field3<A> &a, const Field3<B> &b, const char *what) {
  if (!a.same_grid(b)) throw InvalidArgument(std::string(what) + ": grid mismatch");
}

std::size_t count_foreground(const Mask &m);
double foreground_mm3(const Mask &m);
bool is_binary(const Mask &m);
bool all_finite(const Volume &v);

/// Tight box around the foreground; throws on an empty mask.
BoundingBox foreground_bbox(const Mask &m);
/// Grows a box by `margin` voxels, clamped to the grid.
BoundingBox expand_clamped(const BoundingBox &b, std::int64_t margin, const Index3 &dims);

template <typename T>
Field3<T> crop(const Field3<T> &v, const BoundingBox &b);
/// Copy of `dst` with `src` written starting at voxel `at`.
template <typename T>
Field3<T> paste(const Field3<T> &dst, const Field3<T> &src, const Index3 &at);

struct Standardized {
  Volume volume;
  double mean = 0.0;
  double std = 1.0;
};

/// Per-volume z-score with the population standard deviation.
Standardized standardize_intensities(const Volume &v);
/// Inverse of standardize_intensities for the given parameters.
Volume destandardize_intensities(const Volume &v, double mean, double std);

/// Output dims for resampling one axis: round-half-up(n * s / t), at least 1.
std::int64_t resampled_extent(std::int64_t n, double spacing, double target);
/// Continuous source index sampled by output voxel `j` along one axis.
///
/// Voxel i covers [i*s, (i+1)*s) mm, so output centres (j+0.5)*t map to
/// (j+0.5)*t/s - 0.5 in source index units.
double source_position(std::int64_t j, double spacing, double target);

/// Trilinear resampling to isotropic spacing; samples outside clamp to the edge.
Volume resample_isotropic(const Volume &v, double target_spacing);
/// Nearest-neighbour counterpart for masks.
Mask resample_mask(const Mask &m, double target_spacing);

/// Trilinear sample at continuous voxel index `p`, edge-clamped.
double sample_trilinear(const Volume &v, double x, double y, double z);

// .vvol files: UTF-8 JSON header, '\n', NUL, raw little-endian payload.
Volume read_volume(const std::filesystem::path &path);
void write_volume(const Volume &v, const std::filesystem::path &path);
Mask read_mask(const std::filesystem::path &path);
void write_mask(const Mask &m, const std::filesystem::path &path);

} // namespace metsyn
