#pragma once

#include <span>
#include <string>
#include <vector>

#include "metsyn/volume.hpp"

namespace metsyn {

struct Sample {
  std::string group;
  std::vector<double> values;
};

/// 1-based ranks with ties sharing the mean of their positions.
std::vector<double> mid_ranks(std::span<const double> values);
/// Sum of t^3 - t over tie groups.
double tie_term(std::span<const double> values);

struct KruskalWallisResult {
  double H = 0.0;
  double p = 1.0;
  int df = 0;
};

/// Tie-corrected H; p from the chi-squared upper tail with k - 1 degrees of
/// freedom. All values equal gives H = 0, p = 1.
KruskalWallisResult kruskal_wallis(const std::vector<Sample> &groups);

enum class PMethod { automatic, exact, normal };

struct MannWhitneyResult {
  /// U of the first sample: pairs (x in a, y in b) with x > y, ties counting 1/2.
  double U = 0.0;
  double U_b = 0.0;
  double p = 1.0;
  bool exact = false;
};

/// Two-sided. `automatic` enumerates every rank assignment when
/// n_a + n_b <= 12 and otherwise uses the tie-corrected normal approximation
/// with continuity correction.
MannWhitneyResult mann_whitney_u(const Sample &a, const Sample &b,
                                 PMethod method = PMethod::automatic);

struct WilcoxonResult {
  double W = 0.0;
  double w_plus = 0.0;
  double w_minus = 0.0;
  /// Nonzero differences used.
  int n = 0;
  double p = 1.0;
  bool exact = false;
  /// Every difference was zero.
  bool degenerate = false;
};

/// Signed-rank test on d = b - a; zeros dropped, W = min(W+, W-). Two-sided;
/// `automatic` enumerates all sign assignments when n <= 12.
WilcoxonResult wilcoxon_signed_rank(std::span<const double> a, std::span<const double> b,
                                    PMethod method = PMethod::automatic);

inline constexpr int kExactLimit = 12;

// ---------------------------------------------------------------------------
// Operator variability.

struct Annotator {
  std::string name;
  bool expert = false;
  /// One mask per case.
  std::vector<Mask> masks;
  /// Second annotation of the same cases; empty when not repeated.
  std::vector<Mask> repeats;
};

struct VariabilityReport {
  std::string pairing;
  double mean_dice = 0.0;
  /// Population standard deviation.
  double std_dice = 0.0;
  int n = 0;
};

/// Rows novice/novice, novice/expert, auto/novice, auto/expert and intra, in
/// that order; a row is omitted when it has no pairs. Every pair of
/// annotations contributes one DICE per case.
std::vector<VariabilityReport> variability_table(const std::vector<Annotator> &operators,
                                                 const std::vector<Mask> &automatic);

std::string variability_csv(const std::vector<VariabilityReport> &rows);
std::string variability_text(const std::vector<VariabilityReport> &rows);

// ---------------------------------------------------------------------------
// Group comparison report.

struct PairwiseTest {
  std::string a, b;
  std::string test;
  double statistic = 0.0;
  double p = 1.0;
  bool exact = false;
};

struct GroupComparison {
  std::string metric;
  std::vector<Sample> groups;
  KruskalWallisResult kw;
  std::vector<PairwiseTest> pairwise;
};

/// Kruskal-Wallis over all groups plus every pair with Wilcoxon (paired,
/// requires equal sizes) or Mann-Whitney.
GroupComparison compare_groups(const std::string &metric, const std::vector<Sample> &groups,
                               bool paired);

std::string comparison_csv(const GroupComparison &c);
std::string comparison_text(const GroupComparison &c);

} // namespace metsyn
