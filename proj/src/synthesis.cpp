#include "metsyn/synthesis.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "metsyn/metrics.hpp"
#include "metsyn/parallel.hpp"

namespace metsyn {

void SynthesisConfig::validate() const {
  const auto range_ok = [](const std::array<double, 2> &r) {
    return std::isfinite(r[0]) && std::isfinite(r[1]) && r[0] <= r[1];
  };
  if (!range_ok(ellipsoid_axis_fraction_range) || ellipsoid_axis_fraction_range[0] < 0.0)
    throw InvalidArgument("ellipsoid_axis_fraction_range must be a nonempty range >= 0");
  if (!range_ok(scale_range) || !(scale_range[0] > 0.0))
    throw InvalidArgument("scale_range must be a nonempty range > 0");
  if (!(rotation_range_deg >= 0.0) || !std::isfinite(rotation_range_deg))
    throw InvalidArgument("rotation_range_deg must be >= 0");
  if (smooth_kernel < 1 || smooth_kernel % 2 == 0)
    throw InvalidArgument("smooth_kernel must be odd and >= 1");
  if (!(noise_sigma >= 0.0) || !std::isfinite(noise_sigma))
    throw InvalidArgument("noise_sigma must be >= 0");
  if (max_placement_attempts < 1) throw InvalidArgument("max_placement_attempts must be >= 1");
  if (!(min_lesion_mm3 >= 0.0)) throw InvalidArgument("min_lesion_mm3 must be >= 0");
}

namespace {

LesionFragment make_fragment(Volume intensities, Mask mask, std::string source_id) {
  LesionFragment f{std::move(intensities), std::move(mask), std::move(source_id), 0.0};
  f.volume_mm3 = foreground_mm3(f.mask);
  return f;
}

std::vector<std::size_t> foreground_indices(const Mask &m) {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < m.size(); ++i)
    if (m[i]) out.push_back(i);
  return out;
}

/// Mask centroid in mm (voxel i centred at i * spacing).
std::array<double, 3> centroid_mm(const Mask &m) {
  std::array<double, 3> c{0, 0, 0};
  std::size_t n = 0;
  for (std::size_t i = 0; i < m.size(); ++i) {
    if (!m[i]) continue;
    const Index3 p = m.coords(i);
    for (int a = 0; a < 3; ++a) c[a] += static_cast<double>(p[a]);
    ++n;
  }
  if (n == 0) throw InvalidArgument("centroid of an empty mask");
  for (int a = 0; a < 3; ++a) c[a] = c[a] / static_cast<double>(n) * m.spacing()[a];
  return c;
}

using Mat3 = std::array<std::array<double, 3>, 3>;

Mat3 matmul(const Mat3 &a, const Mat3 &b) {
  Mat3 r{};
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j)
      for (int k = 0; k < 3; ++k) r[i][j] += a[i][k] * b[k][j];
  return r;
}

/// Rz * Ry * Rx, so x is applied first.
Mat3 rotation(const std::array<double, 3> &deg) {
  const double k = std::numbers::pi / 180.0;
  const double cx = std::cos(deg[0] * k), sx = std::sin(deg[0] * k);
  const double cy = std::cos(deg[1] * k), sy = std::sin(deg[1] * k);
  const double cz = std::cos(deg[2] * k), sz = std::sin(deg[2] * k);
  const Mat3 rx{{{1, 0, 0}, {0, cx, -sx}, {0, sx, cx}}};
  const Mat3 ry{{{cy, 0, sy}, {0, 1, 0}, {-sy, 0, cy}}};
  const Mat3 rz{{{cz, -sz, 0}, {sz, cz, 0}, {0, 0, 1}}};
  return matmul(rz, matmul(ry, rx));
}

} // namespace

LesionFragment extract_lesion(const Volume &image, const Mask &lesion_mask,
                              const std::string &source_id, double min_mm3) {
  require_same_grid(image, lesion_mask, "extract_lesion");
  const Components cc = connected_components(lesion_mask);
  if (cc.count() == 0) throw InvalidArgument("extract_lesion: empty lesion mask");
  if (static_cast<double>(cc.sizes[0]) * lesion_mask.voxel_volume() <= min_mm3)
    throw ExhaustedError("extract_lesion: every component is <= " + std::to_string(min_mm3) +
                         " mm3");
  const Mask largest = component_mask(lesion_mask, cc, 1);
  const BoundingBox box = expand_clamped(foreground_bbox(largest), 1, largest.dims());
  return make_fragment(crop(image, box), crop(largest, box), source_id);
}

LesionFragment intersect_ellipsoid(const LesionFragment &f, const EllipsoidParams &e) {
  Mask cut(f.mask.dims(), f.mask.spacing());
  for (std::size_t i = 0; i < cut.size(); ++i) {
    if (!f.mask[i]) continue;
    const Index3 p = cut.coords(i);
    double r = 0.0;
    for (int a = 0; a < 3; ++a) {
      if (!(e.semi_axes[a] > 0.0)) {
        r = 2.0;
        break;
      }
      const double u = static_cast<double>(p[a] - e.center[a]) / e.semi_axes[a];
      r += u * u;
    }
    cut[i] = r <= 1.0 ? 1 : 0;
  }
  return make_fragment(f.intensities, largest_component(cut), f.source_id);
}

CropResult ellipsoid_crop(const LesionFragment &f, const SynthesisConfig &cfg, Rng &rng) {
  cfg.validate();
  const auto fg = foreground_indices(f.mask);
  if (fg.empty()) throw InvalidArgument("ellipsoid_crop: empty fragment");
  const Index3 extent = foreground_bbox(f.mask).extent();
  const auto &fr = cfg.ellipsoid_axis_fraction_range;
  for (int attempt = 1; attempt <= cfg.max_placement_attempts; ++attempt) {
    EllipsoidParams e;
    e.center = f.mask.coords(fg[rng.below(fg.size())]);
    for (int a = 0; a < 3; ++a)
      e.semi_axes[a] = rng.uniform(fr[0], fr[1]) * static_cast<double>(extent[a]) / 2.0;
    LesionFragment cut = intersect_ellipsoid(f, e);
    if (cut.volume_mm3 > cfg.min_lesion_mm3) return {std::move(cut), e, attempt};
  }
  throw ExhaustedError("ellipsoid_crop: no crop above " + std::to_string(cfg.min_lesion_mm3) +
                       " mm3 after " + std::to_string(cfg.max_placement_attempts) + " attempts");
}

LesionFragment apply_transform(const LesionFragment &f, const TransformParams &p) {
  if (!(p.scale > 0.0)) throw InvalidArgument("apply_transform: scale must be > 0");
  const auto &s = f.mask.spacing();
  const auto &d = f.mask.dims();
  const auto c = centroid_mm(f.mask);
  const Mat3 r = rotation(p.angles_deg);

  std::array<double, 3> lo{1e300, 1e300, 1e300}, hi{-1e300, -1e300, -1e300};
  for (int corner = 0; corner < 8; ++corner) {
    std::array<double, 3> q{};
    for (int a = 0; a < 3; ++a) {
      const double edge = (corner >> a) & 1 ? (static_cast<double>(d[a]) - 0.5) * s[a] : -0.5 * s[a];
      q[a] = edge - c[a];
    }
    for (int i = 0; i < 3; ++i) {
      const double y = c[i] + p.scale * (r[i][0] * q[0] + r[i][1] * q[1] + r[i][2] * q[2]);
      lo[i] = std::min(lo[i], y);
      hi[i] = std::max(hi[i], y);
    }
  }
  Index3 od{};
  for (int a = 0; a < 3; ++a)
    od[a] = std::max<std::int64_t>(
        1, static_cast<std::int64_t>(std::ceil((hi[a] - lo[a]) / s[a] - 1e-6)));

  Volume vi(od, s);
  Mask vm(od, s);
  const double inv = 1.0 / p.scale;
  for (std::int64_t z = 0; z < od[2]; ++z)
    for (std::int64_t y = 0; y < od[1]; ++y)
      for (std::int64_t x = 0; x < od[0]; ++x) {
        const double out_mm[3] = {lo[0] + (static_cast<double>(x) + 0.5) * s[0] - c[0],
                                  lo[1] + (static_cast<double>(y) + 0.5) * s[1] - c[1],
                                  lo[2] + (static_cast<double>(z) + 0.5) * s[2] - c[2]};
        double src[3];
        for (int i = 0; i < 3; ++i) {
          // R^T (y - c) / scale + c, in source index units
          const double m = (r[0][i] * out_mm[0] + r[1][i] * out_mm[1] + r[2][i] * out_mm[2]) * inv;
          src[i] = (m + c[i]) / s[i];
        }
        vi(x, y, z) = static_cast<float>(sample_trilinear(f.intensities, src[0], src[1], src[2]));
        const Index3 nn{static_cast<std::int64_t>(std::floor(src[0] + 0.5)),
                        static_cast<std::int64_t>(std::floor(src[1] + 0.5)),
                        static_cast<std::int64_t>(std::floor(src[2] + 0.5))};
        vm(x, y, z) = f.mask.contains(nn) ? f.mask[f.mask.linear(nn)] : 0;
      }
  return make_fragment(std::move(vi), largest_component(vm), f.source_id);
}

TransformResult transform_lesion(const LesionFragment &f, const SynthesisConfig &cfg, Rng &rng) {
  cfg.validate();
  const double rr = cfg.rotation_range_deg;
  for (int attempt = 1; attempt <= cfg.max_placement_attempts; ++attempt) {
    TransformParams p;
    for (auto &a : p.angles_deg) a = rng.uniform(-rr, rr);
    p.scale = rng.uniform(cfg.scale_range[0], cfg.scale_range[1]);
    LesionFragment t = apply_transform(f, p);
    if (t.volume_mm3 > cfg.min_lesion_mm3) return {std::move(t), p, attempt};
  }
  throw ExhaustedError("transform_lesion: transformed lesion stayed <= " +
                       std::to_string(cfg.min_lesion_mm3) + " mm3");
}

SyntheticSample blend_lesion(const Volume &host, const Mask &femur, const LesionFragment &f,
                             const Index3 &at, const SynthesisConfig &cfg, Rng &rng) {
  cfg.validate();
  require_same_grid(host, femur, "blend_lesion");
  if (host.spacing() != f.mask.spacing())
    throw InvalidArgument("blend_lesion: fragment spacing differs from host");

  SyntheticSample out;
  out.image = host;
  out.label = Mask(host.dims(), host.spacing());
  const auto &fd = f.mask.dims();
  for (std::int64_t z = 0; z < fd[2]; ++z)
    for (std::int64_t y = 0; y < fd[1]; ++y)
      for (std::int64_t x = 0; x < fd[0]; ++x) {
        if (!f.mask(x, y, z)) continue;
        const Index3 h{at[0] + x, at[1] + y, at[2] + z};
        if (!host.contains(h)) throw InvalidArgument("blend_lesion: placement out of bounds");
        const std::size_t i = host.linear(h);
        out.label[i] = 1;
        out.image[i] = f.intensities(x, y, z);
      }

  const Mask shell = mask_difference(dilate6(out.label), erode6(out.label));
  const Volume composited = out.image;
  const std::int64_t half = cfg.smooth_kernel / 2;
  const auto &d = host.dims();
  for (std::size_t i = 0; i < shell.size(); ++i) {
    if (!shell[i]) continue;
    const Index3 p = shell.coords(i);
    double sum = 0.0;
    std::size_t n = 0;
    for (std::int64_t z = std::max<std::int64_t>(0, p[2] - half);
         z <= std::min(d[2] - 1, p[2] + half); ++z)
      for (std::int64_t y = std::max<std::int64_t>(0, p[1] - half);
           y <= std::min(d[1] - 1, p[1] + half); ++y)
        for (std::int64_t x = std::max<std::int64_t>(0, p[0] - half);
             x <= std::min(d[0] - 1, p[0] + half); ++x) {
          sum += composited(x, y, z);
          ++n;
        }
    out.image[i] = static_cast<float>(sum / static_cast<double>(n));
  }

  if (cfg.noise_sigma > 0.0) {
    for (std::size_t i = 0; i < out.image.size(); ++i) {
      if (!out.label[i] && !shell[i]) continue;
      out.image[i] = static_cast<float>(out.image[i] + cfg.noise_sigma * rng.normal());
    }
  }
  out.provenance.donor_id = f.source_id;
  out.provenance.placement = at;
  return out;
}

PlacementResult place_lesion(const Volume &host, const Mask &femur, const LesionFragment &f,
                             const SynthesisConfig &cfg, Rng &rng) {
  cfg.validate();
  require_same_grid(host, femur, "place_lesion");
  const auto femur_fg = foreground_indices(femur);
  if (femur_fg.empty()) throw InvalidArgument("place_lesion: empty femur mask");
  std::vector<Index3> lesion;
  Index3 anchor{0, 0, 0};
  {
    std::array<double, 3> sum{0, 0, 0};
    for (std::size_t i = 0; i < f.mask.size(); ++i) {
      if (!f.mask[i]) continue;
      lesion.push_back(f.mask.coords(i));
      for (int a = 0; a < 3; ++a) sum[a] += static_cast<double>(lesion.back()[a]);
    }
    if (lesion.empty()) throw InvalidArgument("place_lesion: empty fragment");
    for (int a = 0; a < 3; ++a)
      anchor[a] = static_cast<std::int64_t>(std::floor(sum[a] / static_cast<double>(lesion.size()) + 0.5));
  }
  for (int attempt = 1; attempt <= cfg.max_placement_attempts; ++attempt) {
    const Index3 c = femur.coords(femur_fg[rng.below(femur_fg.size())]);
    const Index3 at{c[0] - anchor[0], c[1] - anchor[1], c[2] - anchor[2]};
    const bool inside = std::all_of(lesion.begin(), lesion.end(), [&](const Index3 &v) {
      const Index3 h{at[0] + v[0], at[1] + v[1], at[2] + v[2]};
      return femur.contains(h) && femur[femur.linear(h)];
    });
    if (!inside) continue;
    PlacementResult r{blend_lesion(host, femur, f, at, cfg, rng), attempt};
    if (!(foreground_mm3(r.sample.label) > cfg.min_lesion_mm3))
      throw UndersizedLesion("place_lesion: placed lesion is <= " +
                           std::to_string(cfg.min_lesion_mm3) + " mm3");
    r.sample.provenance.placement_attempts = attempt;
    return r;
  }
  throw ExhaustedError("place_lesion: no placement inside the femur after " +
                       std::to_string(cfg.max_placement_attempts) + " attempts");
}

Dataset generate_dataset(const std::vector<LabeledCase> &donors,
                         const std::vector<LabeledCase> &hosts, int per_pair,
                         const SynthesisConfig &cfg) {
  cfg.validate();
  if (per_pair < 0) throw InvalidArgument("generate_dataset: per_pair must be >= 0");
  Dataset ds;
  if (per_pair == 0 || donors.empty() || hosts.empty()) return ds;

  std::vector<std::optional<LesionFragment>> fragments(donors.size());
  for (std::size_t d = 0; d < donors.size(); ++d) {
    try {
      fragments[d] = extract_lesion(donors[d].image, donors[d].mask, donors[d].id, cfg.min_lesion_mm3);
    } catch (const Error &) {
      fragments[d].reset();
    }
  }

  enum class Outcome { ok, extraction, crop, transform, placement, undersized };
  const std::size_t reps = static_cast<std::size_t>(per_pair);
  const std::size_t total = donors.size() * hosts.size() * reps;
  std::vector<std::optional<SyntheticSample>> slots(total);
  std::vector<Outcome> outcome(total, Outcome::ok);

  parallel_for(total, [&](std::size_t k) {
    const std::size_t r = k % reps;
    const std::size_t h = (k / reps) % hosts.size();
    const std::size_t d = k / (reps * hosts.size());
    if (!fragments[d]) {
      outcome[k] = Outcome::extraction;
      return;
    }
    const std::uint64_t stream = Rng::derive(cfg.seed, {d, h, r});
    Rng rng(stream);
    std::optional<CropResult> cut;
    try {
      cut = ellipsoid_crop(*fragments[d], cfg, rng);
    } catch (const ExhaustedError &) {
      outcome[k] = Outcome::crop;
      return;
    }
    std::optional<TransformResult> moved;
    try {
      moved = transform_lesion(cut->fragment, cfg, rng);
    } catch (const ExhaustedError &) {
      outcome[k] = Outcome::transform;
      return;
    }
    std::optional<PlacementResult> placed;
    try {
      placed = place_lesion(hosts[h].image, hosts[h].mask, moved->fragment, cfg, rng);
    } catch (const UndersizedLesion &) {
      outcome[k] = Outcome::undersized;
      return;
    } catch (const ExhaustedError &) {
      outcome[k] = Outcome::placement;
      return;
    }
    SyntheticSample s = std::move(placed->sample);
    s.id = donors[d].id + "__" + hosts[h].id + "__r" + std::to_string(r);
    auto &pv = s.provenance;
    pv.donor_id = donors[d].id;
    pv.host_id = hosts[h].id;
    pv.seed = stream;
    pv.ellipsoid = cut->params;
    pv.transform = moved->params;
    pv.crop_attempts = cut->attempts;
    pv.transform_attempts = moved->attempts;
    pv.placement_attempts = placed->attempts;
    slots[k] = std::move(s);
  });

  ds.yield.attempted = total;
  for (std::size_t k = 0; k < total; ++k) {
    switch (outcome[k]) {
    case Outcome::ok: ds.samples.push_back(std::move(*slots[k])); break;
    case Outcome::extraction: ++ds.yield.dropped_extraction; break;
    case Outcome::crop: ++ds.yield.dropped_crop; break;
    case Outcome::transform: ++ds.yield.dropped_transform; break;
    case Outcome::placement: ++ds.yield.dropped_placement; break;
    case Outcome::undersized: ++ds.yield.dropped_undersized; break;
    }
  }
  ds.yield.produced = ds.samples.size();
  return ds;
}

std::vector<SyntheticSample> exclude_donor(const std::vector<SyntheticSample> &samples,
                                           const std::set<std::string> &donor_ids) {
  std::vector<SyntheticSample> out;
  for (const auto &s : samples)
    if (!donor_ids.count(s.provenance.donor_id)) out.push_back(s);
  return out;
}

} // namespace metsyn
