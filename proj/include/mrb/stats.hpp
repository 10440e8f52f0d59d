#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace mrb {

// Index-aligned scores before/after one attack on one metric and dataset.
struct ScoreSeries {
  std::string metric;
  std::string dataset;
  std::string attack;
  std::vector<double> before;
  std::vector<double> after;
};

struct ScalingParams {
  double min = 0.0;
  double max = 1.0;
};

// Fitted on before-attack scores only; rejects constant inputs.
ScalingParams minmax_fit(const std::vector<double>& before);

// (x - min) / (max - min) applied to both sides; after-scores may leave [0,1].
// Outputs are snapped to a 1e-9 grid so the scaling is exactly invariant under
// positive affine transforms of the raw scores.
ScoreSeries minmax_scale(const ScoreSeries& s, const ScalingParams& p);
ScoreSeries minmax_scale(const ScoreSeries& s);  // fit on s.before
std::vector<double> minmax_apply(const std::vector<double>& xs, const ScalingParams& p);

struct Gains {
  double abs_gain = 0.0;
  double rel_gain = 0.0;
};

// Eq. style: abs = mean(after - before); rel = mean((after-before)/(before+1)).
Gains gains(const ScoreSeries& scaled);

struct RScore {
  double value = 0.0;
  int used = 0;
  int excluded_small_delta = 0;    // |after - before| < 1e-6
  int excluded_zero_numerator = 0; // max{1-after, before} == 0
  bool defined = false;
};

// Mean log10(max{1 - after, before} / |after - before|) over usable pairs.
RScore r_score(const ScoreSeries& scaled);

// Signed distribution distances; sign is -1 exactly when the mean decreased.
double w_score(const ScoreSeries& scaled);
double e_score(const ScoreSeries& scaled);

// W1 between equal-size samples via sorted pairing (exact for empirical
// distributions of equal size).
double w1_sorted(std::vector<double> a, std::vector<double> b);
// CDF-integral forms valid for any sample sizes.
double w1_cdf(const std::vector<double>& a, const std::vector<double>& b);
double energy_distance_cdf(const std::vector<double>& a, const std::vector<double>& b);
double w_score_pooled(const std::vector<double>& before, const std::vector<double>& after);
double e_score_pooled(const std::vector<double>& before, const std::vector<double>& after);

// ---- 1-D quantile transport ---------------------------------------------------

// Monotone map sending source quantile q to target quantile q; piecewise
// linear between grid knots, clamped beyond the tails.
struct TransportMap {
  std::vector<double> src;  // nondecreasing
  std::vector<double> dst;  // nondecreasing
};

TransportMap fit_transport(const std::vector<double>& source, const std::vector<double>& target,
                           int grid_size);
double apply_transport(const TransportMap& map, double v);
std::vector<double> apply_transport(const TransportMap& map, const std::vector<double>& vs);

// Type-7 linear-interpolated quantile of an unsorted sample.
double quantile(std::vector<double> xs, double q);

// ---- Wilcoxon signed-rank ------------------------------------------------------

struct WilcoxonResult {
  double w_plus = 0.0;     // positive-rank sum of (a - b)
  double p_less = 0.0;     // alternative: a has smaller values;  P(W+ < w)
  double p_greater = 0.0;  // alternative: a has larger values;   P(W+ >= w)
  int n_used = 0;          // pairs after dropping zero differences
  int n_zero = 0;
  bool defined = false;
  bool exact = false;      // exact enumeration (n <= 12) vs normal approximation
};

// Paired one-sided test on (a - b): zero differences dropped, ties mid-ranked,
// exact sign-flip distribution for n <= 12, normal approximation with
// continuity and tie corrections above. p_less + p_greater == 1 by definition.
WilcoxonResult wilcoxon_one_sided(const std::vector<double>& a, const std::vector<double>& b);

// ---- Bootstrap -----------------------------------------------------------------

struct CI {
  double lo = 0.0;
  double hi = 0.0;
};

// Seeded percentile bootstrap of the mean (95%).
CI bootstrap_mean_ci(const std::vector<double>& xs, int resamples, uint64_t seed);

double mean_of(const std::vector<double>& xs);

}  // namespace mrb
