#include "metsyn/stats.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numbers>
#include <numeric>

#include <boost/math/special_functions/gamma.hpp>

#include "metsyn/metrics.hpp"

namespace metsyn {

std::vector<double> mid_ranks(std::span<const double> values) {
  const std::size_t n = values.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t i, std::size_t j) { return values[i] < values[j]; });
  std::vector<double> ranks(n);
  for (std::size_t i = 0; i < n;) {
    std::size_t j = i;
    while (j + 1 < n && values[order[j + 1]] == values[order[i]]) ++j;
    const double r = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t k = i; k <= j; ++k) ranks[order[k]] = r;
    i = j + 1;
  }
  return ranks;
}

double tie_term(std::span<const double> values) {
  std::vector<double> v(values.begin(), values.end());
  std::sort(v.begin(), v.end());
  double s = 0.0;
  for (std::size_t i = 0; i < v.size();) {
    std::size_t j = i;
    while (j + 1 < v.size() && v[j + 1] == v[i]) ++j;
    const double t = static_cast<double>(j - i + 1);
    s += t * t * t - t;
    i = j + 1;
  }
  return s;
}

namespace {

void require_finite(std::span<const double> v, const std::string &what) {
  for (double x : v)
    if (!std::isfinite(x)) throw InvalidArgument(what + ": non-finite value");
}

/// Two-sided normal tail with continuity correction; zero variance gives 1.
double normal_p(double deviation, double variance) {
  if (!(variance > 0.0)) return 1.0;
  const double z = std::max(0.0, std::abs(deviation) - 0.5) / std::sqrt(variance);
  return std::min(1.0, std::erfc(z / std::numbers::sqrt2));
}

/// Mid-ranks are multiples of 1/2; doubling makes them exact integers.
std::vector<int> doubled(std::span<const double> ranks) {
  std::vector<int> out(ranks.size());
  for (std::size_t i = 0; i < ranks.size(); ++i) out[i] = static_cast<int>(std::lround(2.0 * ranks[i]));
  return out;
}

} // namespace

KruskalWallisResult kruskal_wallis(const std::vector<Sample> &groups) {
  if (groups.size() < 2) throw InvalidArgument("kruskal_wallis needs at least two groups");
  std::vector<double> all;
  for (const auto &g : groups) {
    if (g.values.empty()) throw InvalidArgument("kruskal_wallis: empty group " + g.group);
    require_finite(g.values, "kruskal_wallis");
    all.insert(all.end(), g.values.begin(), g.values.end());
  }
  KruskalWallisResult r;
  r.df = static_cast<int>(groups.size()) - 1;
  const double N = static_cast<double>(all.size());
  const double correction = 1.0 - tie_term(all) / (N * N * N - N);
  if (!(correction > 0.0)) return r;
  const auto ranks = mid_ranks(all);
  double acc = 0.0;
  std::size_t pos = 0;
  for (const auto &g : groups) {
    double rs = 0.0;
    for (std::size_t i = 0; i < g.values.size(); ++i) rs += ranks[pos++];
    acc += rs * rs / static_cast<double>(g.values.size());
  }
  r.H = (12.0 / (N * (N + 1.0)) * acc - 3.0 * (N + 1.0)) / correction;
  if (r.H < 0.0) r.H = 0.0;
  r.p = boost::math::gamma_q(0.5 * r.df, 0.5 * r.H);
  return r;
}

MannWhitneyResult mann_whitney_u(const Sample &a, const Sample &b, PMethod method) {
  if (a.values.empty() || b.values.empty()) throw InvalidArgument("mann_whitney_u: empty sample");
  require_finite(a.values, "mann_whitney_u");
  require_finite(b.values, "mann_whitney_u");
  const std::size_t na = a.values.size(), nb = b.values.size(), N = na + nb;
  std::vector<double> all(a.values);
  all.insert(all.end(), b.values.begin(), b.values.end());
  const auto ranks = mid_ranks(all);
  double ra = 0.0;
  for (std::size_t i = 0; i < na; ++i) ra += ranks[i];
  const double dna = static_cast<double>(na), dnb = static_cast<double>(nb);
  MannWhitneyResult r;
  r.U = ra - dna * (dna + 1.0) / 2.0;
  r.U_b = dna * dnb - r.U;

  r.exact = method == PMethod::exact || (method == PMethod::automatic && N <= kExactLimit);
  if (r.exact) {
    if (N > 30) throw InvalidArgument("mann_whitney_u: exact p limited to 30 observations");
    // counts[j][s]: subsets of j ranks whose doubled sum is s.
    const auto r2 = doubled(ranks);
    const int smax = std::accumulate(r2.begin(), r2.end(), 0);
    std::vector<std::vector<double>> counts(na + 1, std::vector<double>(smax + 1, 0.0));
    counts[0][0] = 1.0;
    for (std::size_t i = 0; i < N; ++i)
      for (std::size_t j = std::min(i + 1, na); j >= 1; --j)
        for (int s = smax; s >= r2[i]; --s) counts[j][s] += counts[j - 1][s - r2[i]];
    int obs2 = 0;
    for (std::size_t i = 0; i < na; ++i) obs2 += r2[i];
    const long centre = static_cast<long>(na) * static_cast<long>(N + 1);
    const long dev_obs = std::labs(obs2 - centre);
    double hit = 0.0, total = 0.0;
    for (int s = 0; s <= smax; ++s) {
      total += counts[na][s];
      if (std::labs(s - centre) >= dev_obs) hit += counts[na][s];
    }
    r.p = hit / total;
  } else {
    const double dN = static_cast<double>(N);
    const double var = dna * dnb / 12.0 * ((dN + 1.0) - tie_term(all) / (dN * (dN - 1.0)));
    r.p = normal_p(r.U - dna * dnb / 2.0, var);
  }
  return r;
}

WilcoxonResult wilcoxon_signed_rank(std::span<const double> a, std::span<const double> b,
                                    PMethod method) {
  if (a.size() != b.size()) throw InvalidArgument("wilcoxon_signed_rank: lengths differ");
  require_finite(a, "wilcoxon_signed_rank");
  require_finite(b, "wilcoxon_signed_rank");
  std::vector<double> d, mag;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double v = b[i] - a[i];
    if (v != 0.0) {
      d.push_back(v);
      mag.push_back(std::abs(v));
    }
  }
  WilcoxonResult r;
  r.n = static_cast<int>(d.size());
  if (d.empty()) {
    r.degenerate = true;
    return r;
  }
  const auto ranks = mid_ranks(mag);
  for (std::size_t i = 0; i < d.size(); ++i) (d[i] > 0 ? r.w_plus : r.w_minus) += ranks[i];
  r.W = std::min(r.w_plus, r.w_minus);
  const std::size_t n = d.size();
  r.exact = method == PMethod::exact || (method == PMethod::automatic && n <= kExactLimit);
  if (r.exact) {
    if (n > 40) throw InvalidArgument("wilcoxon_signed_rank: exact p limited to 40 pairs");
    const auto r2 = doubled(ranks);
    const int total2 = std::accumulate(r2.begin(), r2.end(), 0);
    std::vector<double> counts(total2 + 1, 0.0);
    counts[0] = 1.0;
    for (std::size_t i = 0; i < n; ++i)
      for (int s = total2; s >= r2[i]; --s) counts[s] += counts[s - r2[i]];
    int plus2 = 0;
    for (std::size_t i = 0; i < n; ++i)
      if (d[i] > 0) plus2 += r2[i];
    const int dev_obs = std::abs(2 * plus2 - total2);
    double hit = 0.0, all = 0.0;
    for (int s = 0; s <= total2; ++s) {
      all += counts[s];
      if (std::abs(2 * s - total2) >= dev_obs) hit += counts[s];
    }
    r.p = hit / all;
  } else {
    const double dn = static_cast<double>(n);
    const double var = dn * (dn + 1.0) * (2.0 * dn + 1.0) / 24.0 - tie_term(mag) / 48.0;
    r.p = normal_p(r.w_plus - dn * (dn + 1.0) / 4.0, var);
  }
  return r;
}

// ---------------------------------------------------------------------------

namespace {

VariabilityReport summarize(const std::string &label, const std::vector<double> &v) {
  VariabilityReport r{label, 0.0, 0.0, static_cast<int>(v.size())};
  for (double x : v) r.mean_dice += x;
  r.mean_dice /= static_cast<double>(v.size());
  double ss = 0.0;
  for (double x : v) ss += (x - r.mean_dice) * (x - r.mean_dice);
  r.std_dice = std::sqrt(ss / static_cast<double>(v.size()));
  return r;
}

void add_pairs(std::vector<double> &out, const std::vector<Mask> &x, const std::vector<Mask> &y) {
  for (std::size_t c = 0; c < x.size(); ++c) out.push_back(dice(x[c], y[c]));
}

} // namespace

std::vector<VariabilityReport> variability_table(const std::vector<Annotator> &operators,
                                                 const std::vector<Mask> &automatic) {
  std::size_t cases = automatic.size();
  if (!operators.empty() && automatic.empty()) cases = operators.front().masks.size();
  auto check = [&](const std::vector<Mask> &v, const std::string &who) {
    if (v.size() != cases)
      throw InvalidArgument("variability_table: " + who + " has " + std::to_string(v.size()) +
                            " cases, expected " + std::to_string(cases));
  };
  for (const auto &op : operators) {
    check(op.masks, op.name);
    if (!op.repeats.empty()) check(op.repeats, op.name + " (repeat)");
  }
  for (std::size_t c = 0; c < cases; ++c) {
    const Mask *ref = automatic.empty() ? &operators.front().masks[c] : &automatic[c];
    for (const auto &op : operators) {
      require_same_grid(*ref, op.masks[c], "variability_table");
      if (!op.repeats.empty()) require_same_grid(*ref, op.repeats[c], "variability_table");
    }
  }

  std::vector<double> nn, ne, an, ae, intra;
  for (std::size_t i = 0; i < operators.size(); ++i)
    for (std::size_t j = i + 1; j < operators.size(); ++j) {
      const auto &p = operators[i], &q = operators[j];
      if (!p.expert && !q.expert) add_pairs(nn, p.masks, q.masks);
      else if (p.expert != q.expert) add_pairs(ne, p.masks, q.masks);
    }
  if (!automatic.empty())
    for (const auto &op : operators) add_pairs(op.expert ? ae : an, automatic, op.masks);
  for (const auto &op : operators)
    if (!op.repeats.empty()) add_pairs(intra, op.masks, op.repeats);

  std::vector<VariabilityReport> rows;
  const std::pair<const char *, const std::vector<double> *> cats[] = {
      {"novice/novice", &nn}, {"novice/expert", &ne}, {"auto/novice", &an},
      {"auto/expert", &ae},   {"intra", &intra}};
  for (const auto &[label, vals] : cats)
    if (!vals->empty()) rows.push_back(summarize(label, *vals));
  return rows;
}

std::string variability_csv(const std::vector<VariabilityReport> &rows) {
  std::string out = "pairing,mean_dice,std_dice,n\n";
  char buf[160];
  for (const auto &r : rows) {
    std::snprintf(buf, sizeof buf, "%s,%.17g,%.17g,%d\n", r.pairing.c_str(), r.mean_dice,
                  r.std_dice, r.n);
    out += buf;
  }
  return out;
}

std::string variability_text(const std::vector<VariabilityReport> &rows) {
  std::string out = "pairing          mean DICE        n\n";
  char buf[160];
  for (const auto &r : rows) {
    std::snprintf(buf, sizeof buf, "%-16s %.2f +/- %.2f  %4d\n", r.pairing.c_str(), r.mean_dice,
                  r.std_dice, r.n);
    out += buf;
  }
  return out;
}

// ---------------------------------------------------------------------------

GroupComparison compare_groups(const std::string &metric, const std::vector<Sample> &groups,
                               bool paired) {
  GroupComparison c{metric, groups, kruskal_wallis(groups), {}};
  for (std::size_t i = 0; i < groups.size(); ++i)
    for (std::size_t j = i + 1; j < groups.size(); ++j) {
      PairwiseTest t{groups[i].group, groups[j].group, "", 0.0, 1.0, false};
      if (paired) {
        const auto w = wilcoxon_signed_rank(groups[i].values, groups[j].values);
        t.test = "wilcoxon";
        t.statistic = w.W;
        t.p = w.p;
        t.exact = w.exact;
      } else {
        const auto u = mann_whitney_u(groups[i], groups[j]);
        t.test = "mann-whitney";
        t.statistic = u.U;
        t.p = u.p;
        t.exact = u.exact;
      }
      c.pairwise.push_back(t);
    }
  return c;
}

namespace {

std::pair<double, double> mean_std(const std::vector<double> &v) {
  double m = 0.0;
  for (double x : v) m += x;
  m /= static_cast<double>(v.size());
  double ss = 0.0;
  for (double x : v) ss += (x - m) * (x - m);
  return {m, std::sqrt(ss / static_cast<double>(v.size()))};
}

} // namespace

std::string comparison_csv(const GroupComparison &c) {
  std::string out = "metric,kind,a,b,test,statistic,p,exact\n";
  char buf[256];
  std::snprintf(buf, sizeof buf, "%s,omnibus,all,,kruskal-wallis,%.17g,%.17g,0\n", c.metric.c_str(),
                c.kw.H, c.kw.p);
  out += buf;
  for (const auto &t : c.pairwise) {
    std::snprintf(buf, sizeof buf, "%s,pairwise,%s,%s,%s,%.17g,%.17g,%d\n", c.metric.c_str(),
                  t.a.c_str(), t.b.c_str(), t.test.c_str(), t.statistic, t.p, t.exact ? 1 : 0);
    out += buf;
  }
  return out;
}

std::string comparison_text(const GroupComparison &c) {
  std::string out;
  char buf[256];
  std::snprintf(buf, sizeof buf, "%-14s %s (mean +/- std)\n", "group", c.metric.c_str());
  out += buf;
  for (const auto &g : c.groups) {
    const auto [m, s] = mean_std(g.values);
    std::snprintf(buf, sizeof buf, "%-14s %.2f +/- %.2f  (n=%zu)\n", g.group.c_str(), m, s,
                  g.values.size());
    out += buf;
  }
  out += "\n";
  std::snprintf(buf, sizeof buf, "Kruskal-Wallis H = %.4f, df = %d, p = %.4g%s\n", c.kw.H, c.kw.df,
                c.kw.p, c.kw.p < 0.05 ? "  (P<0.05)" : "");
  out += buf;
  for (const auto &t : c.pairwise) {
    std::snprintf(buf, sizeof buf, "%s vs %s: %s stat = %.4f, p = %.4g%s%s\n", t.a.c_str(),
                  t.b.c_str(), t.test.c_str(), t.statistic, t.p, t.exact ? " (exact)" : "",
                  t.p < 0.05 ? "  (P<0.05)" : "");
    out += buf;
  }
  return out;
}

} // namespace metsyn
