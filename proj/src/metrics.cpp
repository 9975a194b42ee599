#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>

#include "metsyn/metrics.hpp"

namespace metsyn {

double dice(const Mask &a, const Mask &b) {
  require_same_grid(a, b, "dice");
  std::size_t na = 0, nb = 0, both = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const bool x = a[i] != 0, y = b[i] != 0;
    na += x;
    nb += y;
    both += x && y;
  }
  if (na + nb == 0) return 1.0;
  return 2.0 * static_cast<double>(both) / static_cast<double>(na + nb);
}

std::vector<Index3> surface_voxels(const Mask &m) {
  const auto &d = m.dims();
  std::vector<Index3> out;
  for (std::int64_t z = 0; z < d[2]; ++z)
    for (std::int64_t y = 0; y < d[1]; ++y)
      for (std::int64_t x = 0; x < d[0]; ++x) {
        if (!m(x, y, z)) continue;
        const bool interior = x > 0 && y > 0 && z > 0 && x + 1 < d[0] && y + 1 < d[1] &&
                              z + 1 < d[2] && m(x - 1, y, z) && m(x + 1, y, z) &&
                              m(x, y - 1, z) && m(x, y + 1, z) && m(x, y, z - 1) &&
                              m(x, y, z + 1);
        if (!interior) out.push_back({x, y, z});
      }
  if (out.empty()) throw InvalidArgument("surface of an empty mask");
  return out;
}

namespace {

double axis_term(std::int64_t delta, double s) {
  const double v = static_cast<double>(delta) * s;
  return v * v;
}

double squared_mm(const Index3 &a, const Index3 &b, const Spacing3 &s) {
  return (axis_term(a[0] - b[0], s[0]) + axis_term(a[1] - b[1], s[1])) +
         axis_term(a[2] - b[2], s[2]);
}

/// Static kd-tree over voxel coordinates. The pruning test compares the
/// squared plane distance, which never exceeds the squared distance of any
/// point beyond the plane, and prunes only on strict excess; the minimum
/// found is therefore exactly the all-pairs minimum of squared_mm.
class KdTree {
public:
  KdTree(std::vector<Index3> pts, const Spacing3 &s) : pts_(std::move(pts)), s_(s) {
    axis_.resize(pts_.size());
    build(0, pts_.size());
  }

  double nearest_squared(const Index3 &q) const {
    double best = std::numeric_limits<double>::infinity();
    search(0, pts_.size(), q, best);
    return best;
  }

private:
  void build(std::size_t lo, std::size_t hi) {
    if (hi - lo <= 1) return;
    Index3 mn = pts_[lo], mx = pts_[lo];
    for (std::size_t i = lo; i < hi; ++i)
      for (int a = 0; a < 3; ++a) {
        mn[a] = std::min(mn[a], pts_[i][a]);
        mx[a] = std::max(mx[a], pts_[i][a]);
      }
    int axis = 0;
    double spread = -1.0;
    for (int a = 0; a < 3; ++a) {
      const double w = static_cast<double>(mx[a] - mn[a]) * s_[a];
      if (w > spread) {
        spread = w;
        axis = a;
      }
    }
    const std::size_t mid = lo + (hi - lo) / 2;
    std::nth_element(pts_.begin() + static_cast<std::ptrdiff_t>(lo),
                     pts_.begin() + static_cast<std::ptrdiff_t>(mid),
                     pts_.begin() + static_cast<std::ptrdiff_t>(hi),
                     [axis](const Index3 &p, const Index3 &r) { return p[axis] < r[axis]; });
    axis_[mid] = static_cast<std::uint8_t>(axis);
    build(lo, mid);
    build(mid + 1, hi);
  }

  void search(std::size_t lo, std::size_t hi, const Index3 &q, double &best) const {
    if (lo >= hi) return;
    const std::size_t mid = lo + (hi - lo) / 2;
    const Index3 &p = pts_[mid];
    best = std::min(best, squared_mm(p, q, s_));
    if (hi - lo == 1) return;
    const int a = axis_[mid];
    const std::int64_t diff = q[a] - p[a];
    const bool left_first = diff <= 0;
    if (left_first) search(lo, mid, q, best);
    else search(mid + 1, hi, q, best);
    if (!(axis_term(diff, s_[a]) > best)) {
      if (left_first) search(mid + 1, hi, q, best);
      else search(lo, mid, q, best);
    }
  }

  std::vector<Index3> pts_;
  std::vector<std::uint8_t> axis_;
  Spacing3 s_;
};

} // namespace

double voxel_distance_mm(const Index3 &a, const Index3 &b, const Spacing3 &s) {
  return std::sqrt(squared_mm(a, b, s));
}

std::vector<double> directed_surface_distances(const std::vector<Index3> &from,
                                               const std::vector<Index3> &to,
                                               const Spacing3 &spacing) {
  if (to.empty()) throw InvalidArgument("surface distance to an empty set");
  const KdTree tree(to, spacing);
  std::vector<double> out;
  out.reserve(from.size());
  for (const auto &p : from) out.push_back(std::sqrt(tree.nearest_squared(p)));
  return out;
}

double nearest_rank_percentile(std::vector<double> values, int q) {
  if (values.empty()) throw InvalidArgument("percentile of an empty set");
  if (q < 0 || q > 100) throw InvalidArgument("percentile out of range");
  const std::size_t n = values.size();
  std::size_t rank = (static_cast<std::size_t>(q) * n + 99) / 100;
  rank = std::clamp<std::size_t>(rank, 1, n);
  std::nth_element(values.begin(), values.begin() + static_cast<std::ptrdiff_t>(rank - 1),
                   values.end());
  return values[rank - 1];
}

HausdorffResult hausdorff(const Mask &a, const Mask &b) {
  require_same_grid(a, b, "hausdorff");
  const auto sa = surface_voxels(a);
  const auto sb = surface_voxels(b);
  const auto dab = directed_surface_distances(sa, sb, a.spacing());
  const auto dba = directed_surface_distances(sb, sa, a.spacing());
  HausdorffResult r;
  r.hd_mm = std::max(*std::max_element(dab.begin(), dab.end()),
                     *std::max_element(dba.begin(), dba.end()));
  r.hd95_mm = std::max(nearest_rank_percentile(dab, 95), nearest_rank_percentile(dba, 95));
  return r;
}

double assd(const Mask &a, const Mask &b) {
  require_same_grid(a, b, "assd");
  const auto sa = surface_voxels(a);
  const auto sb = surface_voxels(b);
  double sum = 0.0;
  for (double d : directed_surface_distances(sa, sb, a.spacing())) sum += d;
  for (double d : directed_surface_distances(sb, sa, a.spacing())) sum += d;
  return sum / static_cast<double>(sa.size() + sb.size());
}

double grid_diagonal_mm(const Index3 &dims, const Spacing3 &spacing) {
  double s = 0.0;
  for (int a = 0; a < 3; ++a) {
    const double e = static_cast<double>(dims[a]) * spacing[a];
    s += e * e;
  }
  return std::sqrt(s);
}

MetricsReport evaluate(const Mask &prediction, const Mask &reference,
                       const EvaluateOptions &opts) {
  require_same_grid(prediction, reference, "evaluate");
  const Mask pred = opts.postprocess ? postprocess(prediction, opts.min_component_mm3) : prediction;
  MetricsReport r;
  r.postprocessed = opts.postprocess;
  r.dice = dice(pred, reference);
  const bool pe = count_foreground(pred) == 0;
  const bool re = count_foreground(reference) == 0;
  if (pe || re) {
    r.empty_flag = true;
    const double penalty = (pe && re) ? 0.0 : grid_diagonal_mm(pred.dims(), pred.spacing());
    r.hd_mm = r.hd95_mm = r.assd_mm = penalty;
    return r;
  }
  const auto sa = surface_voxels(pred);
  const auto sb = surface_voxels(reference);
  const auto dab = directed_surface_distances(sa, sb, pred.spacing());
  const auto dba = directed_surface_distances(sb, sa, pred.spacing());
  r.hd_mm = std::max(*std::max_element(dab.begin(), dab.end()),
                     *std::max_element(dba.begin(), dba.end()));
  r.hd95_mm = std::max(nearest_rank_percentile(dab, 95), nearest_rank_percentile(dba, 95));
  double sum = 0.0;
  for (double d : dab) sum += d;
  for (double d : dba) sum += d;
  r.assd_mm = sum / static_cast<double>(sa.size() + sb.size());
  return r;
}

std::string metrics_csv(const std::vector<std::string> &ids,
                        const std::vector<MetricsReport> &reports) {
  if (ids.size() != reports.size()) throw InvalidArgument("metrics_csv: length mismatch");
  std::string out = "sample_id,dice,hd_mm,hd95_mm,assd_mm,empty_flag\n";
  char buf[256];
  for (std::size_t i = 0; i < ids.size(); ++i) {
    const auto &r = reports[i];
    std::snprintf(buf, sizeof buf, ",%.17g,%.17g,%.17g,%.17g,%d\n", r.dice, r.hd_mm, r.hd95_mm,
                  r.assd_mm, r.empty_flag ? 1 : 0);
    out += ids[i];
    out += buf;
  }
  return out;
}

} // namespace metsyn
