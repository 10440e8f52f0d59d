#include "mrb/attacks.hpp"

#include <cmath>
#include <sstream>

#include "mrb/digest.hpp"

namespace mrb {

const char* attack_kind_name(AttackKind k) {
  switch (k) {
    case AttackKind::fgsm: return "fgsm";
    case AttackKind::ifgsm: return "ifgsm";
    case AttackKind::mifgsm: return "mifgsm";
    case AttackKind::amifgsm: return "amifgsm";
    case AttackKind::uap_cumulative: return "uap-cumulative";
    case AttackKind::uap_optimized: return "uap-optimized";
    case AttackKind::uap_generative: return "uap-generative";
    case AttackKind::korhonen: return "korhonen";
    case AttackKind::madc: return "madc";
  }
  return "?";
}

AttackKind parse_attack_kind(const std::string& s) {
  for (AttackKind k : {AttackKind::fgsm, AttackKind::ifgsm, AttackKind::mifgsm,
                       AttackKind::amifgsm, AttackKind::uap_cumulative,
                       AttackKind::uap_optimized, AttackKind::uap_generative,
                       AttackKind::korhonen, AttackKind::madc}) {
    if (s == attack_kind_name(k)) return k;
  }
  throw ConfigError("unknown attack kind '" + s + "'");
}

bool attack_is_trainable(AttackKind k) {
  return k == AttackKind::uap_cumulative || k == AttackKind::uap_optimized ||
         k == AttackKind::uap_generative;
}

std::string AttackSpec::digest() const {
  std::ostringstream os;
  os.precision(17);
  os << attack_kind_name(kind) << "|eps=" << epsilon << "|alpha=" << alpha
     << "|T=" << iterations << "|nu=" << momentum << "|amp=" << amplitude
     << "|seed=" << seed << "|epochs=" << epochs << "|bs=" << batch_size
     << "|lr=" << lr << "|b1=" << beta1 << "|b2=" << beta2
     << "|nc=" << noise_channels << "|mse=" << mse_budget
     << "|prec=" << mse_precision
     << "|units=" << (mse_units == MseUnits::unit ? "unit" : "8bit")
     << "|prov=" << eps_provider;
  return sha256_hex(os.str()).substr(0, 16);
}

namespace {

double range_of(const MetricModel& metric) {
  const auto& r = metric.declared_range();
  if (!r.has_value() || !(r->range() > 0.0)) {
    throw CalibrationError("metric '" + metric.name() + "' is not calibrated");
  }
  return r->range();
}

inline void clip01(Image& img) { img.array() = img.array().max(0.0).min(1.0); }

inline void clip_ball(Image& img, const Image& center, double eps) {
  img.array() = img.array().max(center.array() - eps).min(center.array() + eps);
}

double linf_dist(const Image& a, const Image& b) {
  return (a.array() - b.array()).abs().maxCoeff();
}

void fill_proxy(AttackResult& r, const Image& original) {
  r.proxy = proxy_scores(original, r.attacked);
  r.linf = linf_dist(r.attacked, original);
}

// One engine drives fgsm / ifgsm / mifgsm / amifgsm so the collapse
// identities (T=1, nu=0) hold bitwise by construction.
AttackResult signed_gradient_attack(const MetricModel& metric, const Image& image,
                                    const AttackSpec& spec, int iterations, double alpha,
                                    double eps, double nu) {
  AttackResult r;
  r.spec_digest = spec.digest();
  r.eps_used = eps;
  r.score_before = metric.score(image);
  if (eps < 0.0) throw AttackError("epsilon must be >= 0");
  if (iterations < 1) throw AttackError("iterative attack needs iterations >= 1");

  Image cur = image;
  Tensor g_prev = Tensor::zeros_like(image);
  int steps = 0;
  for (int t = 0; t < iterations; ++t) {
    Image g = attack_loss_gradient(metric, cur);
    if (t == 0 && g.array().abs().maxCoeff() == 0.0) {
      r.noop = true;
      break;
    }
    g.array() += nu * g_prev.array();
    g_prev = g;
    cur.array() -= alpha * g.array().sign();
    clip_ball(cur, image, eps);
    clip01(cur);
    ++steps;
  }
  r.steps_used = steps;
  r.attacked = std::move(cur);
  r.score_after = metric.score(r.attacked);
  fill_proxy(r, image);
  return r;
}

}  // namespace

double attack_loss(const MetricModel& metric, const Image& image) {
  return 1.0 - metric.score(image) / range_of(metric);
}

Image attack_loss_gradient(const MetricModel& metric, const Image& image) {
  Image g = metric.score_gradient(image);
  g.array() *= -1.0 / range_of(metric);
  return g;
}

AttackResult fgsm(const MetricModel& metric, const Image& image, const AttackSpec& spec) {
  return signed_gradient_attack(metric, image, spec, 1, spec.epsilon, spec.epsilon, 0.0);
}

AttackResult ifgsm(const MetricModel& metric, const Image& image, const AttackSpec& spec) {
  return signed_gradient_attack(metric, image, spec, spec.iterations, spec.alpha,
                                spec.epsilon, 0.0);
}

AttackResult mifgsm(const MetricModel& metric, const Image& image, const AttackSpec& spec) {
  if (spec.momentum < 0.0) throw AttackError("momentum must be >= 0");
  return signed_gradient_attack(metric, image, spec, spec.iterations, spec.alpha,
                                spec.epsilon, spec.momentum);
}

AttackResult amifgsm(const MetricModel& metric, const Image& image, const AttackSpec& spec,
                     const EpsProvider& provider) {
  const double q = provider(image);
  if (!std::isfinite(q) || q <= 0.0) {
    throw AttackError("amifgsm quality provider returned non-positive or non-finite value " +
                      std::to_string(q));
  }
  if (spec.momentum < 0.0) throw AttackError("momentum must be >= 0");
  return signed_gradient_attack(metric, image, spec, spec.iterations, spec.alpha, 1.0 / q,
                                spec.momentum);
}

Image spatial_activity_map(const Image& image) {
  Graph g;
  NodeId img = g.input("image");
  NodeId s = g.add(g.square(g.sobel_h(img)), g.square(g.sobel_v(img)));
  g.set_output(g.sqrt(s, 0.0));
  Inputs in{{"image", &image}};
  Image map = forward(g, in);
  const double m = map.array().maxCoeff();
  if (m > 0.0) map.array() /= m;
  return map;
}

AttackResult korhonen_attack(const MetricModel& metric, const Image& image,
                             const AttackSpec& spec) {
  AttackResult r;
  r.spec_digest = spec.digest();
  r.score_before = metric.score(image);
  if (spec.iterations < 1) throw AttackError("korhonen needs iterations >= 1");

  // Activity map of the original image, fixed for all iterations.
  Image activity = spatial_activity_map(image);
  Image cur = image;
  int steps = 0;
  if (activity.array().maxCoeff() == 0.0) {
    r.noop = true;
  } else {
    for (int t = 0; t < spec.iterations; ++t) {
      Image g = attack_loss_gradient(metric, cur);
      if (t == 0 && g.array().abs().maxCoeff() == 0.0) {
        r.noop = true;
        break;
      }
      cur.array() -= spec.alpha * g.array() * activity.array();
      clip01(cur);
      ++steps;
    }
  }
  r.steps_used = steps;
  r.attacked = std::move(cur);
  r.score_after = metric.score(r.attacked);
  fill_proxy(r, image);
  return r;
}

Tensor project_out(const Tensor& g1, const Tensor& g2) {
  if (!g1.same_shape(g2)) throw ShapeError("project_out: shape mismatch");
  const double denom = (g2.array() * g2.array()).sum();
  if (denom == 0.0) throw NumericError("project_out: zero reference gradient");
  const double coef = (g2.array() * g1.array()).sum() / denom;
  Tensor out(g1.shape(), g1.array() - coef * g2.array());
  return out;
}

namespace {

// mse(clip(original + s*delta), original) is monotone nondecreasing in s >= 0,
// so a bisection along +-grad(mse) direction (the ray through delta) lands the
// budget exactly or detects a saturation plateau.
Image radial_mse_adjust(const Image& original, const Image& candidate, double target_mse,
                        double precision, bool* non_converged) {
  Array delta = candidate.array() - original.array();
  auto mse_at = [&](double s) {
    Array img = (original.array() + s * delta).max(0.0).min(1.0);
    return (img - original.array()).square().mean();
  };
  auto image_at = [&](double s) {
    Image out(original.shape(), (original.array() + s * delta).max(0.0).min(1.0));
    return out;
  };
  double m1 = mse_at(1.0);
  if (std::abs(m1 - target_mse) <= precision) return image_at(1.0);

  double lo = 0.0, hi = 1.0;
  if (m1 < target_mse) {
    // Grow until the budget is bracketed; bail out at a clipping plateau.
    double prev = m1;
    for (int k = 0; k < 60; ++k) {
      hi *= 2.0;
      const double m = mse_at(hi);
      if (m >= target_mse) break;
      if (m == prev) {  // fully clipped, cannot reach the budget
        *non_converged = true;
        return image_at(hi);
      }
      prev = m;
      lo = hi;
    }
    if (mse_at(hi) < target_mse) {
      *non_converged = true;
      return image_at(hi);
    }
  } else {
    lo = 0.0;
    hi = 1.0;
  }
  double mid = 0.5 * (lo + hi);
  for (int k = 0; k < 200; ++k) {
    mid = 0.5 * (lo + hi);
    const double m = mse_at(mid);
    if (std::abs(m - target_mse) <= precision) return image_at(mid);
    if (m < target_mse) lo = mid;
    else hi = mid;
  }
  *non_converged = true;
  return image_at(mid);
}

}  // namespace

AttackResult madc_attack(const MetricModel& metric, const Image& image,
                         const AttackSpec& spec) {
  AttackResult r;
  r.spec_digest = spec.digest();
  r.score_before = metric.score(image);
  if (spec.iterations < 1) throw AttackError("madc needs iterations >= 1");
  if (!(spec.mse_budget > 0.0)) throw AttackError("madc needs a positive mse budget");

  const double units = (spec.mse_units == MseUnits::eight_bit) ? 255.0 * 255.0 : 1.0;
  const double target = spec.mse_budget / units;       // internal [0,1]^2 scale
  const double precision = spec.mse_precision / units;
  const double inv_n = 1.0 / static_cast<double>(image.numel());

  Image cur = image;
  int steps = 0;
  bool non_converged = false;
  for (int t = 0; t < spec.iterations; ++t) {
    Image g1 = metric.score_gradient(cur);  // ascent direction on the score
    g1.array() *= 1.0 / range_of(metric);
    Tensor dir;
    Array delta = cur.array() - image.array();
    const double g2_norm2 = (2.0 * inv_n * delta).square().sum();
    if (g2_norm2 == 0.0) {
      // First iteration: mse gradient vanishes at the original image, so the
      // projection is undefined and the raw score gradient is used.
      dir = g1;
    } else {
      Tensor g2(cur.shape(), 2.0 * inv_n * delta);
      dir = project_out(g1, g2);
      if (dir.array().abs().maxCoeff() == 0.0) {
        r.projection_skipped = true;
        break;
      }
    }
    const double norm = std::sqrt(dir.array().square().sum());
    if (norm == 0.0) {
      if (t == 0) r.noop = true;
      break;
    }
    cur.array() += spec.alpha * dir.array() / norm;
    clip01(cur);
    bool step_failed = false;
    cur = radial_mse_adjust(image, cur, target, precision, &step_failed);
    non_converged = step_failed;
    ++steps;
  }
  r.steps_used = steps;
  r.non_converged = non_converged;
  r.attacked = std::move(cur);
  r.score_after = metric.score(r.attacked);
  fill_proxy(r, image);
  r.terminal_mse = r.proxy.mse * units;
  return r;
}

}  // namespace mrb
