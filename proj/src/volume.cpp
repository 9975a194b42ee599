#include "metsyn/volume.hpp"

#include <algorithm>
#include <cmath>

namespace metsyn {

std::size_t count_foreground(const Mask &m) {
  return static_cast<std::size_t>(std::count_if(m.data().begin(), m.data().end(),
                                                [](std::uint8_t v) { return v != 0; }));
}

double foreground_mm3(const Mask &m) {
  return static_cast<double>(count_foreground(m)) * m.voxel_volume();
}

bool is_binary(const Mask &m) {
  return std::all_of(m.data().begin(), m.data().end(), [](std::uint8_t v) { return v <= 1; });
}

bool all_finite(const Volume &v) {
  return std::all_of(v.data().begin(), v.data().end(), [](float x) { return std::isfinite(x); });
}

BoundingBox foreground_bbox(const Mask &m) {
  const auto &d = m.dims();
  BoundingBox b{{d[0], d[1], d[2]}, {-1, -1, -1}};
  bool any = false;
  for (std::int64_t z = 0; z < d[2]; ++z)
    for (std::int64_t y = 0; y < d[1]; ++y)
      for (std::int64_t x = 0; x < d[0]; ++x) {
        if (!m(x, y, z)) continue;
        any = true;
        const Index3 p{x, y, z};
        for (int a = 0; a < 3; ++a) {
          b.lo[a] = std::min(b.lo[a], p[a]);
          b.hi[a] = std::max(b.hi[a], p[a]);
        }
      }
  if (!any) throw InvalidArgument("bounding box of an empty mask");
  return b;
}

BoundingBox expand_clamped(const BoundingBox &b, std::int64_t margin, const Index3 &dims) {
  BoundingBox r;
  for (int a = 0; a < 3; ++a) {
    r.lo[a] = std::max<std::int64_t>(0, b.lo[a] - margin);
    r.hi[a] = std::min<std::int64_t>(dims[a] - 1, b.hi[a] + margin);
  }
  return r;
}

template <typename T>
Field3<T> crop(const Field3<T> &v, const BoundingBox &b) {
  for (int a = 0; a < 3; ++a)
    if (b.lo[a] < 0 || b.hi[a] >= v.dims()[a] || b.lo[a] > b.hi[a])
      throw InvalidArgument("crop box out of bounds");
  Field3<T> out(b.extent(), v.spacing());
  const auto e = b.extent();
  for (std::int64_t z = 0; z < e[2]; ++z)
    for (std::int64_t y = 0; y < e[1]; ++y) {
      const T *src = &v(b.lo[0], b.lo[1] + y, b.lo[2] + z);
      std::copy(src, src + e[0], &out(0, y, z));
    }
  return out;
}

template <typename T>
Field3<T> paste(const Field3<T> &dst, const Field3<T> &src, const Index3 &at) {
  for (int a = 0; a < 3; ++a)
    if (at[a] < 0 || at[a] + src.dims()[a] > dst.dims()[a])
      throw InvalidArgument("paste placement out of bounds");
  if (dst.spacing() != src.spacing()) throw InvalidArgument("paste: spacing mismatch");
  Field3<T> out = dst;
  const auto &e = src.dims();
  for (std::int64_t z = 0; z < e[2]; ++z)
    for (std::int64_t y = 0; y < e[1]; ++y) {
      const T *s = &src(0, y, z);
      std::copy(s, s + e[0], &out(at[0], at[1] + y, at[2] + z));
    }
  return out;
}

template Volume crop(const Volume &, const BoundingBox &);
template Mask crop(const Mask &, const BoundingBox &);
template Volume paste(const Volume &, const Volume &, const Index3 &);
template Mask paste(const Mask &, const Mask &, const Index3 &);

Standardized standardize_intensities(const Volume &v) {
  if (v.size() < 2) throw InvalidArgument("standardize: need at least two voxels");
  double sum = 0.0;
  for (float x : v.data()) sum += x;
  const double mean = sum / static_cast<double>(v.size());
  double ss = 0.0;
  for (float x : v.data()) ss += (x - mean) * (x - mean);
  const double sd = std::sqrt(ss / static_cast<double>(v.size()));
  if (!(sd > 0.0) || !std::isfinite(sd))
    throw InvalidArgument("standardize: zero-variance volume cannot be standardized");
  Volume out(v.dims(), v.spacing());
  for (std::size_t i = 0; i < v.size(); ++i)
    out[i] = static_cast<float>((v[i] - mean) / sd);
  return {std::move(out), mean, sd};
}

Volume destandardize_intensities(const Volume &v, double mean, double std) {
  Volume out(v.dims(), v.spacing());
  for (std::size_t i = 0; i < v.size(); ++i) out[i] = static_cast<float>(v[i] * std + mean);
  return out;
}

} // namespace metsyn
