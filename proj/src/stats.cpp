#include "mrb/stats.hpp"

#include <algorithm>
#include <cmath>

#include "mrb/errors.hpp"
#include "mrb/rng.hpp"

namespace mrb {

namespace {

// Snap to a 1e-9 grid. Affine-transformed raw scores reproduce scaled values
// only up to last-ulp rounding; the grid absorbs that so downstream measures
// are bit-identical.
inline double snap(double x) {
  return static_cast<double>(std::llround(x * 1e9)) * 1e-9;
}

void require_pairs(const ScoreSeries& s) {
  if (s.before.size() != s.after.size()) {
    throw ShapeError("score series before/after lengths differ");
  }
  if (s.before.empty()) throw ShapeError("score series is empty");
}

}  // namespace

double mean_of(const std::vector<double>& xs) {
  if (xs.empty()) throw ShapeError("mean of empty vector");
  double s = 0.0;
  for (double x : xs) s += x;
  return s / static_cast<double>(xs.size());
}

ScalingParams minmax_fit(const std::vector<double>& before) {
  if (before.empty()) throw CalibrationError("cannot fit scaling on empty scores");
  auto [lo, hi] = std::minmax_element(before.begin(), before.end());
  if (!(*hi - *lo > 0.0)) {
    throw CalibrationError("before-attack scores are constant; min-max scaling undefined");
  }
  return {*lo, *hi};
}

std::vector<double> minmax_apply(const std::vector<double>& xs, const ScalingParams& p) {
  const double inv = 1.0 / (p.max - p.min);
  std::vector<double> out(xs.size());
  for (size_t i = 0; i < xs.size(); ++i) out[i] = snap((xs[i] - p.min) * inv);
  return out;
}

ScoreSeries minmax_scale(const ScoreSeries& s, const ScalingParams& p) {
  require_pairs(s);
  ScoreSeries out = s;
  out.before = minmax_apply(s.before, p);
  out.after = minmax_apply(s.after, p);
  return out;
}

ScoreSeries minmax_scale(const ScoreSeries& s) {
  require_pairs(s);
  return minmax_scale(s, minmax_fit(s.before));
}

Gains gains(const ScoreSeries& s) {
  require_pairs(s);
  Gains g;
  const size_t n = s.before.size();
  for (size_t i = 0; i < n; ++i) {
    const double d = s.after[i] - s.before[i];
    g.abs_gain += d;
    g.rel_gain += d / (s.before[i] + 1.0);
  }
  g.abs_gain /= static_cast<double>(n);
  g.rel_gain /= static_cast<double>(n);
  return g;
}

RScore r_score(const ScoreSeries& s) {
  require_pairs(s);
  RScore r;
  double acc = 0.0;
  for (size_t i = 0; i < s.before.size(); ++i) {
    const double delta = std::abs(s.after[i] - s.before[i]);
    if (delta < 1e-6) {
      ++r.excluded_small_delta;
      continue;
    }
    const double num = std::max(1.0 - s.after[i], s.before[i]);
    if (num <= 0.0) {
      ++r.excluded_zero_numerator;
      continue;
    }
    acc += std::log10(num / delta);
    ++r.used;
  }
  if (r.used > 0) {
    r.value = acc / r.used;
    r.defined = true;
  }
  return r;
}

double w1_sorted(std::vector<double> a, std::vector<double> b) {
  if (a.size() != b.size() || a.empty()) {
    throw ShapeError("w1_sorted needs equal nonempty samples");
  }
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  double s = 0.0;
  for (size_t i = 0; i < a.size(); ++i) s += std::abs(a[i] - b[i]);
  return s / static_cast<double>(a.size());
}

namespace {

// Shared piecewise-constant CDF sweep: integrand(F_a - F_b) over the merged
// sample grid.
template <typename F>
double cdf_integral(const std::vector<double>& a, const std::vector<double>& b, F integrand) {
  if (a.empty() || b.empty()) throw ShapeError("cdf integral needs nonempty samples");
  std::vector<double> sa = a, sb = b;
  std::sort(sa.begin(), sa.end());
  std::sort(sb.begin(), sb.end());
  std::vector<double> grid;
  grid.reserve(sa.size() + sb.size());
  std::merge(sa.begin(), sa.end(), sb.begin(), sb.end(), std::back_inserter(grid));
  grid.erase(std::unique(grid.begin(), grid.end()), grid.end());
  double acc = 0.0;
  for (size_t k = 0; k + 1 < grid.size(); ++k) {
    const double x = grid[k];
    const double fa =
        static_cast<double>(std::upper_bound(sa.begin(), sa.end(), x) - sa.begin()) / sa.size();
    const double fb =
        static_cast<double>(std::upper_bound(sb.begin(), sb.end(), x) - sb.begin()) / sb.size();
    acc += integrand(fa - fb) * (grid[k + 1] - x);
  }
  return acc;
}

inline double mean_sign(const std::vector<double>& before, const std::vector<double>& after) {
  // Negative exactly when the mean decreased; ties count as nonnegative so a
  // zero distance stays the only way to report zero.
  return mean_of(after) < mean_of(before) ? -1.0 : 1.0;
}

}  // namespace

double w1_cdf(const std::vector<double>& a, const std::vector<double>& b) {
  return cdf_integral(a, b, [](double d) { return std::abs(d); });
}

double energy_distance_cdf(const std::vector<double>& a, const std::vector<double>& b) {
  return std::sqrt(2.0 * cdf_integral(a, b, [](double d) { return d * d; }));
}

double w_score(const ScoreSeries& s) {
  require_pairs(s);
  return w1_sorted(s.before, s.after) * mean_sign(s.before, s.after);
}

double e_score(const ScoreSeries& s) {
  require_pairs(s);
  return energy_distance_cdf(s.before, s.after) * mean_sign(s.before, s.after);
}

double w_score_pooled(const std::vector<double>& before, const std::vector<double>& after) {
  return w1_cdf(before, after) * mean_sign(before, after);
}

double e_score_pooled(const std::vector<double>& before, const std::vector<double>& after) {
  return energy_distance_cdf(before, after) * mean_sign(before, after);
}

// ---- transport ------------------------------------------------------------------

double quantile(std::vector<double> xs, double q) {
  if (xs.empty()) throw ShapeError("quantile of empty sample");
  if (q < 0.0 || q > 1.0) throw NumericError("quantile level outside [0,1]");
  std::sort(xs.begin(), xs.end());
  const double pos = q * static_cast<double>(xs.size() - 1);
  const size_t lo = static_cast<size_t>(pos);
  const double frac = pos - static_cast<double>(lo);
  if (lo + 1 >= xs.size()) return xs.back();
  return xs[lo] + (xs[lo + 1] - xs[lo]) * frac;
}

TransportMap fit_transport(const std::vector<double>& source, const std::vector<double>& target,
                           int grid_size) {
  if (source.empty() || target.empty()) throw ShapeError("transport needs nonempty samples");
  if (grid_size < 2) throw NumericError("transport grid needs >= 2 knots");
  std::vector<double> ss = source, ts = target;
  std::sort(ss.begin(), ss.end());
  std::sort(ts.begin(), ts.end());
  TransportMap map;
  map.src.resize(static_cast<size_t>(grid_size));
  map.dst.resize(static_cast<size_t>(grid_size));
  for (int i = 0; i < grid_size; ++i) {
    const double q = static_cast<double>(i) / (grid_size - 1);
    // quantile() on pre-sorted data: inline the interpolation to avoid resorting
    const double pos_s = q * static_cast<double>(ss.size() - 1);
    const double pos_t = q * static_cast<double>(ts.size() - 1);
    auto interp = [](const std::vector<double>& v, double pos) {
      const size_t lo = static_cast<size_t>(pos);
      if (lo + 1 >= v.size()) return v.back();
      const double frac = pos - static_cast<double>(lo);
      return v[lo] + (v[lo + 1] - v[lo]) * frac;
    };
    map.src[static_cast<size_t>(i)] = interp(ss, pos_s);
    map.dst[static_cast<size_t>(i)] = interp(ts, pos_t);
  }
  return map;
}

double apply_transport(const TransportMap& map, double v) {
  const auto& src = map.src;
  const auto& dst = map.dst;
  if (src.empty() || src.size() != dst.size()) throw ShapeError("bad transport map");
  if (v <= src.front()) return dst.front();  // clamped extrapolation
  if (v >= src.back()) return dst.back();
  // First knot with src[k] >= v; exact hits return the knot image.
  const size_t k = static_cast<size_t>(
      std::lower_bound(src.begin(), src.end(), v) - src.begin());
  if (src[k] == v) return dst[k];
  const double span = src[k] - src[k - 1];
  const double t = (v - src[k - 1]) / span;
  return dst[k - 1] + (dst[k] - dst[k - 1]) * t;
}

std::vector<double> apply_transport(const TransportMap& map, const std::vector<double>& vs) {
  std::vector<double> out(vs.size());
  for (size_t i = 0; i < vs.size(); ++i) out[i] = apply_transport(map, vs[i]);
  return out;
}

// ---- Wilcoxon --------------------------------------------------------------------

WilcoxonResult wilcoxon_one_sided(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.size() != b.size()) throw ShapeError("wilcoxon needs paired samples");
  WilcoxonResult res;
  std::vector<double> d;
  d.reserve(a.size());
  for (size_t i = 0; i < a.size(); ++i) {
    const double di = a[i] - b[i];
    if (di == 0.0) ++res.n_zero;
    else d.push_back(di);
  }
  res.n_used = static_cast<int>(d.size());
  if (d.empty()) return res;  // all differences zero: test undefined

  // Mid-ranks of |d|.
  const size_t n = d.size();
  std::vector<size_t> idx(n);
  for (size_t i = 0; i < n; ++i) idx[i] = i;
  std::sort(idx.begin(), idx.end(),
            [&](size_t x, size_t y) { return std::abs(d[x]) < std::abs(d[y]); });
  std::vector<double> rank(n);
  std::vector<double> tie_sizes;
  for (size_t i = 0; i < n;) {
    size_t j = i;
    while (j + 1 < n && std::abs(d[idx[j + 1]]) == std::abs(d[idx[i]])) ++j;
    const double r = 0.5 * (static_cast<double>(i + 1) + static_cast<double>(j + 1));
    for (size_t k = i; k <= j; ++k) rank[idx[k]] = r;
    if (j > i) tie_sizes.push_back(static_cast<double>(j - i + 1));
    i = j + 1;
  }
  double w_plus = 0.0;
  for (size_t i = 0; i < n; ++i) {
    if (d[i] > 0.0) w_plus += rank[i];
  }
  res.w_plus = w_plus;
  res.defined = true;

  if (n <= 12) {
    // Exact conditional null: all 2^n sign assignments over the observed ranks.
    res.exact = true;
    const uint64_t total = 1ULL << n;
    uint64_t ge = 0;
    for (uint64_t mask = 0; mask < total; ++mask) {
      double w = 0.0;
      for (size_t i = 0; i < n; ++i) {
        if (mask & (1ULL << i)) w += rank[i];
      }
      if (w >= w_plus - 1e-9) ++ge;
    }
    res.p_greater = static_cast<double>(ge) / static_cast<double>(total);
    res.p_less = 1.0 - res.p_greater;
  } else {
    const double nn = static_cast<double>(n);
    const double mu = nn * (nn + 1.0) / 4.0;
    double var = nn * (nn + 1.0) * (2.0 * nn + 1.0) / 24.0;
    for (double t : tie_sizes) var -= (t * t * t - t) / 48.0;
    const double sigma = std::sqrt(var);
    // Continuity-corrected upper tail; lower tail is its complement.
    const double z = (w_plus - mu - 0.5) / sigma;
    res.p_greater = 0.5 * std::erfc(z / std::sqrt(2.0));
    res.p_less = 1.0 - res.p_greater;
  }
  return res;
}

// ---- bootstrap -------------------------------------------------------------------

CI bootstrap_mean_ci(const std::vector<double>& xs, int resamples, uint64_t seed) {
  if (xs.empty()) throw ShapeError("bootstrap of empty sample");
  if (resamples < 1) throw NumericError("bootstrap needs >= 1 resample");
  Rng rng(seed);
  const size_t n = xs.size();
  std::vector<double> means(static_cast<size_t>(resamples));
  for (int r = 0; r < resamples; ++r) {
    double s = 0.0;
    for (size_t i = 0; i < n; ++i) s += xs[rng.index(n)];
    means[static_cast<size_t>(r)] = s / static_cast<double>(n);
  }
  CI ci;
  ci.lo = quantile(means, 0.025);
  ci.hi = quantile(std::move(means), 0.975);
  return ci;
}

}  // namespace mrb
