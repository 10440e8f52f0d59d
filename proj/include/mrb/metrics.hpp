#pragma once

#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "mrb/engine.hpp"
#include "mrb/graph.hpp"
#include "mrb/tensor.hpp"

namespace mrb {

struct InputPolicy {
  enum class Kind { full_frame, center_crop, resize };
  Kind kind = Kind::full_frame;
  int size = 0;  // crop/resize target (square)

  static InputPolicy full() { return {}; }
  static InputPolicy crop(int s) { return {Kind::center_crop, s}; }
  static InputPolicy resized(int s) { return {Kind::resize, s}; }
};

InputPolicy parse_input_policy(const std::string& s);
std::string input_policy_str(const InputPolicy& p);

struct RangeBounds {
  double min = 0.0;
  double max = 0.0;
  double range() const { return max - min; }
};

// A differentiable scalar-valued function of an image. The graph and weights
// are immutable after construction; score/score_gradient build a fresh Eval,
// so one model can be shared across threads.
class MetricModel {
 public:
  MetricModel(std::string name, Graph graph, std::map<std::string, Tensor> weights,
              InputPolicy policy = InputPolicy::full());

  const std::string& name() const { return name_; }
  const Graph& graph() const { return graph_; }
  const InputPolicy& input_policy() const { return policy_; }
  const std::map<std::string, Tensor>& weights() const { return weights_; }

  double score(const Image& img) const;
  Image score_gradient(const Image& img) const;
  std::pair<double, Image> score_with_gradient(const Image& img) const;

  const std::optional<RangeBounds>& declared_range() const { return range_; }
  void set_declared_range(RangeBounds r);

 private:
  Image apply_policy(const Image& img) const;
  Image unapply_policy(const Tensor& grad, const Image& original) const;

  std::string name_;
  Graph graph_;
  std::map<std::string, Tensor> weights_;
  InputPolicy policy_;
  std::optional<RangeBounds> range_;
};

// Min/max of the metric over the dataset; rejects constant metrics and
// stores the result on the model.
RangeBounds calibrate_range(MetricModel& metric, const std::vector<Image>& dataset);

// ---- Full-reference proxies -------------------------------------------------

enum class SsimChannelMode { luma601, per_channel };

struct ProxyScores {
  double mse = 0.0;
  double psnr = 0.0;  // +inf for identical images
  double ssim = 0.0;
};

double mse(const Image& a, const Image& b);
double psnr_from_mse(double mse_value);  // peak 1.0
// Gaussian 11x11 window, sigma 1.5, K1=0.01, K2=0.03, peak 1.0, valid region.
double ssim(const Image& a, const Image& b, SsimChannelMode mode = SsimChannelMode::luma601);
ProxyScores proxy_scores(const Image& reference, const Image& attacked,
                         SsimChannelMode mode = SsimChannelMode::luma601);

// ---- Policy helpers (exact adjoint pairs) -----------------------------------

Image center_crop(const Image& img, int size);
Image resize_bilinear(const Image& img, int out_h, int out_w);
Image resize_bilinear_adjoint(const Image& grad_out, int in_h, int in_w);

// ---- Registry ---------------------------------------------------------------

// Builds a shipped metric by name. Weighted models need `weights_stem`
// pointing at a weight-file pair; the hand-designed ones ignore it.
std::shared_ptr<MetricModel> build_metric(const std::string& name,
                                          const std::string& weights_stem,
                                          InputPolicy policy = InputPolicy::full());
std::vector<std::string> shipped_metric_names();
bool metric_needs_weights(const std::string& name);

}  // namespace mrb
