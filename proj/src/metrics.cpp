#include "mrb/metrics.hpp"

#include <cmath>
#include <limits>

#include "mrb/image_io.hpp"

namespace mrb {

InputPolicy parse_input_policy(const std::string& s) {
  if (s.empty() || s == "full" || s == "full-frame") return InputPolicy::full();
  auto open = s.find('(');
  auto close = s.find(')');
  if (open != std::string::npos && close == s.size() - 1) {
    const std::string kind = s.substr(0, open);
    const int size = std::stoi(s.substr(open + 1, close - open - 1));
    if (size <= 0) throw ConfigError("input policy size must be positive: " + s);
    if (kind == "center-crop") return InputPolicy::crop(size);
    if (kind == "resize") return InputPolicy::resized(size);
  }
  throw ConfigError("unknown input policy '" + s + "'");
}

std::string input_policy_str(const InputPolicy& p) {
  switch (p.kind) {
    case InputPolicy::Kind::full_frame: return "full";
    case InputPolicy::Kind::center_crop: return "center-crop(" + std::to_string(p.size) + ")";
    case InputPolicy::Kind::resize: return "resize(" + std::to_string(p.size) + ")";
  }
  return "full";
}

MetricModel::MetricModel(std::string name, Graph graph,
                         std::map<std::string, Tensor> weights, InputPolicy policy)
    : name_(std::move(name)), graph_(std::move(graph)), weights_(std::move(weights)),
      policy_(policy) {
  if (!graph_.has_output()) throw GraphError("metric graph has no output");
}

Image MetricModel::apply_policy(const Image& img) const {
  switch (policy_.kind) {
    case InputPolicy::Kind::full_frame:
      return img;
    case InputPolicy::Kind::center_crop:
      return center_crop(img, policy_.size);
    case InputPolicy::Kind::resize:
      return resize_bilinear(img, policy_.size, policy_.size);
  }
  return img;
}

Image MetricModel::unapply_policy(const Tensor& grad, const Image& original) const {
  switch (policy_.kind) {
    case InputPolicy::Kind::full_frame:
      return grad;
    case InputPolicy::Kind::center_crop: {
      Image out = Tensor::zeros_like(original);
      const int oh = (original.height() - policy_.size) / 2;
      const int ow = (original.width() - policy_.size) / 2;
      for (int h = 0; h < policy_.size; ++h)
        for (int w = 0; w < policy_.size; ++w)
          for (int c = 0; c < original.channels(); ++c)
            out.at(oh + h, ow + w, c) = grad.at(h, w, c);
      return out;
    }
    case InputPolicy::Kind::resize:
      return resize_bilinear_adjoint(grad, original.height(), original.width());
  }
  return grad;
}

double MetricModel::score(const Image& img) const {
  Image proc = apply_policy(img);
  Inputs in;
  in["image"] = &proc;
  for (const auto& [k, v] : weights_) in[k] = &v;
  Eval ev(graph_);
  const Tensor& out = ev.forward(in);
  if (!out.is_scalar()) {
    throw GraphError("metric '" + name_ + "' output is not scalar");
  }
  return out.value();
}

Image MetricModel::score_gradient(const Image& img) const {
  return score_with_gradient(img).second;
}

std::pair<double, Image> MetricModel::score_with_gradient(const Image& img) const {
  Image proc = apply_policy(img);
  Inputs in;
  in["image"] = &proc;
  for (const auto& [k, v] : weights_) in[k] = &v;
  Eval ev(graph_);
  const Tensor& out = ev.forward(in);
  if (!out.is_scalar()) {
    throw GraphError("metric '" + name_ + "' output is not scalar");
  }
  ev.backward();
  return {out.value(), unapply_policy(ev.grad("image"), img)};
}

void MetricModel::set_declared_range(RangeBounds r) {
  if (!(r.min < r.max)) {
    throw CalibrationError("declared range must satisfy min < max for metric " + name_);
  }
  range_ = r;
}

RangeBounds calibrate_range(MetricModel& metric, const std::vector<Image>& dataset) {
  if (dataset.empty()) throw CalibrationError("calibration dataset is empty");
  double lo = std::numeric_limits<double>::infinity();
  double hi = -std::numeric_limits<double>::infinity();
  for (const Image& img : dataset) {
    const double s = metric.score(img);
    lo = std::min(lo, s);
    hi = std::max(hi, s);
  }
  if (!(hi - lo > 1e-12)) {
    throw CalibrationError("metric '" + metric.name() + "' is constant over the "
                           "calibration dataset (range " + std::to_string(hi - lo) + ")");
  }
  RangeBounds r{lo, hi};
  metric.set_declared_range(r);
  return r;
}

// ---- proxies ----------------------------------------------------------------

double mse(const Image& a, const Image& b) {
  if (!a.same_shape(b)) throw ShapeError("mse: shape mismatch");
  return (a.array() - b.array()).square().mean();
}

double psnr_from_mse(double m) {
  if (m < 0.0) throw NumericError("negative mse");
  if (m == 0.0) return std::numeric_limits<double>::infinity();
  return -10.0 * std::log10(m);
}

namespace {

// 1-D Gaussian taps for the standard 11x11, sigma 1.5 SSIM window.
std::vector<double> ssim_window() {
  const int n = 11;
  std::vector<double> w(n);
  double sum = 0.0;
  for (int i = 0; i < n; ++i) {
    const double d = i - (n - 1) / 2.0;
    w[static_cast<size_t>(i)] = std::exp(-d * d / (2.0 * 1.5 * 1.5));
    sum += w[static_cast<size_t>(i)];
  }
  for (double& v : w) v /= sum;
  return w;
}

// Separable valid-region filter for a {H,W,1} plane.
Image filter_valid(const Image& x, const std::vector<double>& taps) {
  const int k = static_cast<int>(taps.size());
  const int H = x.height(), W = x.width();
  const int Ho = H - k + 1, Wo = W - k + 1;
  Image tmp({H, Wo, 1});
  for (int h = 0; h < H; ++h)
    for (int w = 0; w < Wo; ++w) {
      double s = 0.0;
      for (int j = 0; j < k; ++j) s += taps[static_cast<size_t>(j)] * x.at(h, w + j, 0);
      tmp.at(h, w, 0) = s;
    }
  Image out({Ho, Wo, 1});
  for (int h = 0; h < Ho; ++h)
    for (int w = 0; w < Wo; ++w) {
      double s = 0.0;
      for (int i = 0; i < k; ++i) s += taps[static_cast<size_t>(i)] * tmp.at(h + i, w, 0);
      out.at(h, w, 0) = s;
    }
  return out;
}

double ssim_plane(const Image& x, const Image& y) {
  static const std::vector<double> taps = ssim_window();
  const int k = static_cast<int>(taps.size());
  if (x.height() < k || x.width() < k) {
    throw ShapeError("ssim needs images at least 11x11");
  }
  const double C1 = 0.01 * 0.01;
  const double C2 = 0.03 * 0.03;
  Image mu1 = filter_valid(x, taps);
  Image mu2 = filter_valid(y, taps);
  Image x2({x.height(), x.width(), 1}), y2({x.height(), x.width(), 1}),
      xy({x.height(), x.width(), 1});
  x2.array() = x.array().square();
  y2.array() = y.array().square();
  xy.array() = x.array() * y.array();
  Image s11 = filter_valid(x2, taps);
  Image s22 = filter_valid(y2, taps);
  Image s12 = filter_valid(xy, taps);
  double acc = 0.0;
  for (Eigen::Index i = 0; i < mu1.numel(); ++i) {
    const double m1 = mu1.array()[i], m2 = mu2.array()[i];
    const double v1 = s11.array()[i] - m1 * m1;
    const double v2 = s22.array()[i] - m2 * m2;
    const double cov = s12.array()[i] - m1 * m2;
    acc += ((2.0 * m1 * m2 + C1) * (2.0 * cov + C2)) /
           ((m1 * m1 + m2 * m2 + C1) * (v1 + v2 + C2));
  }
  return acc / static_cast<double>(mu1.numel());
}

}  // namespace

double ssim(const Image& a, const Image& b, SsimChannelMode mode) {
  if (!a.same_shape(b)) throw ShapeError("ssim: shape mismatch");
  if (mode == SsimChannelMode::luma601 || a.channels() == 1) {
    return ssim_plane(to_luma(a), to_luma(b));
  }
  double acc = 0.0;
  for (int c = 0; c < a.channels(); ++c) {
    Image pa({a.height(), a.width(), 1}), pb({a.height(), a.width(), 1});
    for (int h = 0; h < a.height(); ++h)
      for (int w = 0; w < a.width(); ++w) {
        pa.at(h, w, 0) = a.at(h, w, c);
        pb.at(h, w, 0) = b.at(h, w, c);
      }
    acc += ssim_plane(pa, pb);
  }
  return acc / a.channels();
}

ProxyScores proxy_scores(const Image& reference, const Image& attacked, SsimChannelMode mode) {
  ProxyScores p;
  p.mse = mse(reference, attacked);
  p.psnr = psnr_from_mse(p.mse);
  p.ssim = ssim(reference, attacked, mode);
  return p;
}

// ---- policy helpers ----------------------------------------------------------

Image center_crop(const Image& img, int size) {
  if (img.height() < size || img.width() < size) {
    throw ShapeError("center_crop: image smaller than crop size");
  }
  const int oh = (img.height() - size) / 2;
  const int ow = (img.width() - size) / 2;
  Image out({size, size, img.channels()});
  for (int h = 0; h < size; ++h)
    for (int w = 0; w < size; ++w)
      for (int c = 0; c < img.channels(); ++c) out.at(h, w, c) = img.at(oh + h, ow + w, c);
  return out;
}

namespace {

struct Tap {
  int i0, i1;
  double w0, w1;
};

// align_corners=false sampling positions, clamped at the borders.
std::vector<Tap> resize_taps(int in_n, int out_n) {
  std::vector<Tap> taps(static_cast<size_t>(out_n));
  const double scale = static_cast<double>(in_n) / out_n;
  for (int o = 0; o < out_n; ++o) {
    double src = (o + 0.5) * scale - 0.5;
    if (src < 0) src = 0;
    if (src > in_n - 1) src = in_n - 1;
    const int i0 = static_cast<int>(std::floor(src));
    const int i1 = std::min(i0 + 1, in_n - 1);
    const double f = src - i0;
    taps[static_cast<size_t>(o)] = {i0, i1, 1.0 - f, f};
  }
  return taps;
}

}  // namespace

Image resize_bilinear(const Image& img, int out_h, int out_w) {
  const auto th = resize_taps(img.height(), out_h);
  const auto tw = resize_taps(img.width(), out_w);
  Image out({out_h, out_w, img.channels()});
  for (int h = 0; h < out_h; ++h) {
    const Tap& a = th[static_cast<size_t>(h)];
    for (int w = 0; w < out_w; ++w) {
      const Tap& b = tw[static_cast<size_t>(w)];
      for (int c = 0; c < img.channels(); ++c) {
        out.at(h, w, c) = a.w0 * (b.w0 * img.at(a.i0, b.i0, c) + b.w1 * img.at(a.i0, b.i1, c)) +
                          a.w1 * (b.w0 * img.at(a.i1, b.i0, c) + b.w1 * img.at(a.i1, b.i1, c));
      }
    }
  }
  return out;
}

Image resize_bilinear_adjoint(const Image& grad_out, int in_h, int in_w) {
  const auto th = resize_taps(in_h, grad_out.height());
  const auto tw = resize_taps(in_w, grad_out.width());
  Image out({in_h, in_w, grad_out.channels()});
  for (int h = 0; h < grad_out.height(); ++h) {
    const Tap& a = th[static_cast<size_t>(h)];
    for (int w = 0; w < grad_out.width(); ++w) {
      const Tap& b = tw[static_cast<size_t>(w)];
      for (int c = 0; c < grad_out.channels(); ++c) {
        const double g = grad_out.at(h, w, c);
        out.at(a.i0, b.i0, c) += a.w0 * b.w0 * g;
        out.at(a.i0, b.i1, c) += a.w0 * b.w1 * g;
        out.at(a.i1, b.i0, c) += a.w1 * b.w0 * g;
        out.at(a.i1, b.i1, c) += a.w1 * b.w1 * g;
      }
    }
  }
  return out;
}

}  // namespace mrb
