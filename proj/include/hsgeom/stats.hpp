#pragma once

// Nonparametric two-sample battery: Mann-Whitney U, rank-biserial r,
// permutation p, BCa bootstrap intervals, Kruskal-Wallis and Holm step-down.

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

namespace hsgeom {

/// Midranks (1-based) of `values`, in input order.
std::vector<double> midranks(std::span<const double> values);

/// Sum over tie groups of (t^3 - t).
double tie_term(std::span<const double> pooled);

/// U_x = #{(i, j) : x_i > y_j} + 0.5 #{ties}.
double mann_whitney_u(std::span<const double> x, std::span<const double> y);

struct MannWhitneyOptions {
  enum class Method { Auto, Exact, Asymptotic };
  Method method = Method::Auto;
  bool continuity = true;
};

struct MannWhitneyResult {
  double u = 0.0;
  double p = 1.0;
  bool exact = false;
};

/// Exact enumeration is used when min(n1, n2) <= 8 and n1 * n2 <= 400.
bool mann_whitney_exact_eligible(std::size_t n1, std::size_t n2);

/// Two-sided p. Exact: min(1, 2 min(P(U <= u), P(U >= u))) under all label
/// assignments of the pooled values (ties kept as midranks). Asymptotic:
/// normal approximation with tie-corrected variance, optional continuity correction.
MannWhitneyResult mann_whitney(std::span<const double> x, std::span<const double> y,
                               const MannWhitneyOptions& opts = {});

double mann_whitney_exact_p(std::span<const double> x, std::span<const double> y);
double mann_whitney_asymptotic_p(std::span<const double> x, std::span<const double> y,
                                 bool continuity);

/// r = 2U / (n1 n2) - 1. Positive when x tends to exceed y.
double rank_biserial(double u, std::size_t n1, std::size_t n2);
double rank_biserial(std::span<const double> x, std::span<const double> y);

enum class PermutationStatistic { MeanDifference, U };

struct PermutationResult {
  double p = 1.0;
  bool exact = false;
  std::size_t evaluated = 0;  // assignments enumerated or drawn (excluding identity)
};

/// Two-sided label-shuffle test. Enumerates all C(n1+n2, n1) assignments when
/// that count is <= n_perm, otherwise draws n_perm shuffles and returns
/// (1 + #{|T*| >= |T|}) / (n_perm + 1).
PermutationResult permutation_test(std::span<const double> x, std::span<const double> y,
                                   std::size_t n_perm, std::uint64_t rng_seed,
                                   PermutationStatistic statistic = PermutationStatistic::MeanDifference);

double permutation_p(std::span<const double> x, std::span<const double> y, std::size_t n_perm,
                     std::uint64_t rng_seed,
                     PermutationStatistic statistic = PermutationStatistic::MeanDifference);

using TwoSampleStatistic = std::function<double(std::span<const double>, std::span<const double>)>;

struct BcaInterval {
  double lo = 0.0;
  double hi = 0.0;
  double point = 0.0;
  double z0 = 0.0;
  double acceleration = 0.0;
  bool degenerate = false;  // every replicate equal; interval collapsed to the point
  bool clamped = false;     // all replicates on one side of the point estimate
};

/// BCa endpoints from precomputed replicates and jackknife values.
BcaInterval bca_interval(std::vector<double> replicates, double point,
                         std::span<const double> jackknife, double alpha);

/// Percentile-bootstrap interval at quantile levels alpha/2 and 1 - alpha/2.
std::pair<double, double> percentile_interval(std::vector<double> replicates, double alpha);

/// Stratified bootstrap (x and y resampled separately) with pooled
/// leave-one-out jackknife for the acceleration. Needs |x|, |y| >= 2.
BcaInterval bca_ci(std::span<const double> x, std::span<const double> y,
                   const TwoSampleStatistic& statistic, std::size_t n_boot, double alpha,
                   std::uint64_t rng_seed);

/// bca_ci with the rank-biserial statistic, using a faster sorted-merge U.
BcaInterval bca_ci_rank_biserial(std::span<const double> x, std::span<const double> y,
                                 std::size_t n_boot, double alpha, std::uint64_t rng_seed);

struct KruskalWallisResult {
  double h = 0.0;
  double h_uncorrected = 0.0;
  double p = 1.0;
  std::size_t df = 0;
};

/// Tie-corrected H with a chi-squared(groups - 1) tail.
KruskalWallisResult kruskal_wallis(std::span<const std::vector<double>> groups);

struct HolmEntry {
  double adjusted = 1.0;
  bool significant = false;
};

/// Holm step-down; results in input order.
std::vector<HolmEntry> holm_correct(std::span<const double> p_values, double alpha = 0.05);

double normal_cdf(double z);
double normal_quantile(double q);
double chi_squared_sf(double x, double df);

}  // namespace hsgeom
