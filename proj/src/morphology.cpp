#include <algorithm>
#include <numeric>

#include "metsyn/metrics.hpp"

namespace metsyn {

namespace {

constexpr std::int64_t kOffsets[6][3] = {{-1, 0, 0}, {1, 0, 0},  {0, -1, 0},
                                         {0, 1, 0},  {0, 0, -1}, {0, 0, 1}};

template <typename Op>
Mask binary_op(const Mask &a, const Mask &b, Op op) {
  require_same_grid(a, b, "mask operation");
  Mask out(a.dims(), a.spacing());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = op(a[i] != 0, b[i] != 0) ? 1 : 0;
  return out;
}

std::size_t find_root(std::vector<std::size_t> &parent, std::size_t i) {
  while (parent[i] != i) {
    parent[i] = parent[parent[i]];
    i = parent[i];
  }
  return i;
}

void unite(std::vector<std::size_t> &parent, std::size_t a, std::size_t b) {
  a = find_root(parent, a);
  b = find_root(parent, b);
  if (a == b) return;
  if (a < b) std::swap(a, b);
  parent[a] = b;
}

} // namespace

Mask dilate6(const Mask &m) {
  const auto &d = m.dims();
  Mask out = m;
  for (std::int64_t z = 0; z < d[2]; ++z)
    for (std::int64_t y = 0; y < d[1]; ++y)
      for (std::int64_t x = 0; x < d[0]; ++x) {
        if (!m(x, y, z)) continue;
        for (const auto &o : kOffsets) {
          const Index3 n{x + o[0], y + o[1], z + o[2]};
          if (m.contains(n)) out[m.linear(n)] = 1;
        }
      }
  return out;
}

Mask erode6(const Mask &m, bool outside_is_foreground) {
  const auto &d = m.dims();
  Mask out(d, m.spacing());
  for (std::int64_t z = 0; z < d[2]; ++z)
    for (std::int64_t y = 0; y < d[1]; ++y)
      for (std::int64_t x = 0; x < d[0]; ++x) {
        if (!m(x, y, z)) continue;
        bool keep = true;
        for (const auto &o : kOffsets) {
          const Index3 n{x + o[0], y + o[1], z + o[2]};
          if (m.contains(n) ? !m[m.linear(n)] : !outside_is_foreground) {
            keep = false;
            break;
          }
        }
        out(x, y, z) = keep ? 1 : 0;
      }
  return out;
}

Mask close6(const Mask &m) { return erode6(dilate6(m), true); }

Mask mask_union(const Mask &a, const Mask &b) {
  return binary_op(a, b, [](bool x, bool y) { return x || y; });
}
Mask mask_intersection(const Mask &a, const Mask &b) {
  return binary_op(a, b, [](bool x, bool y) { return x && y; });
}
Mask mask_difference(const Mask &a, const Mask &b) {
  return binary_op(a, b, [](bool x, bool y) { return x && !y; });
}

Components connected_components(const Mask &m) {
  const auto &d = m.dims();
  const std::size_t n = m.size();
  std::vector<std::size_t> parent(n);
  std::iota(parent.begin(), parent.end(), std::size_t{0});
  const auto sx = static_cast<std::size_t>(d[0]);
  const auto sxy = static_cast<std::size_t>(d[0] * d[1]);

  // Two-pass union-find over the backward half of the 6-neighbourhood.
  for (std::int64_t z = 0; z < d[2]; ++z)
    for (std::int64_t y = 0; y < d[1]; ++y)
      for (std::int64_t x = 0; x < d[0]; ++x) {
        const std::size_t i = m.linear(x, y, z);
        if (!m[i]) continue;
        if (x > 0 && m[i - 1]) unite(parent, i, i - 1);
        if (y > 0 && m[i - sx]) unite(parent, i, i - sx);
        if (z > 0 && m[i - sxy]) unite(parent, i, i - sxy);
      }

  // Roots are the smallest linear index of each component (see unite).
  std::vector<std::size_t> root_size(n, 0);
  std::vector<std::size_t> roots;
  for (std::size_t i = 0; i < n; ++i) {
    if (!m[i]) continue;
    const std::size_t r = find_root(parent, i);
    if (r == i) roots.push_back(i);
    ++root_size[r];
  }
  std::stable_sort(roots.begin(), roots.end(), [&](std::size_t a, std::size_t b) {
    return root_size[a] > root_size[b];
  });

  std::vector<std::int32_t> root_label(n, 0);
  Components cc;
  cc.sizes.reserve(roots.size());
  for (std::size_t k = 0; k < roots.size(); ++k) {
    root_label[roots[k]] = static_cast<std::int32_t>(k + 1);
    cc.sizes.push_back(root_size[roots[k]]);
  }
  cc.labels.assign(n, 0);
  for (std::size_t i = 0; i < n; ++i)
    if (m[i]) cc.labels[i] = root_label[find_root(parent, i)];
  return cc;
}

Mask component_mask(const Mask &grid, const Components &cc, std::int32_t label) {
  Mask out(grid.dims(), grid.spacing());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = cc.labels[i] == label ? 1 : 0;
  return out;
}

Mask largest_component(const Mask &m) {
  const Components cc = connected_components(m);
  if (cc.count() == 0) return Mask(m.dims(), m.spacing());
  return component_mask(m, cc, 1);
}

Mask postprocess(const Mask &prediction, double min_mm3) {
  const Mask closed = close6(prediction);
  const Components cc = connected_components(closed);
  const double vv = closed.voxel_volume();
  std::vector<std::uint8_t> keep(cc.count() + 1, 0);
  for (std::size_t k = 0; k < cc.count(); ++k)
    keep[k + 1] = static_cast<double>(cc.sizes[k]) * vv > min_mm3 ? 1 : 0;
  Mask out(closed.dims(), closed.spacing());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = keep[static_cast<std::size_t>(cc.labels[i])];
  return out;
}

} // namespace metsyn
