#include "mrb/models.hpp"

#include <cmath>

#include "mrb/rng.hpp"

namespace mrb {

namespace {

// 3 conv+ReLU+pool blocks, global average pooling, affine head.
Graph tiny_cnn_graph() {
  Graph g;
  NodeId img = g.input("image");
  NodeId x = g.conv2d(img, g.input("conv1.w"), g.input("conv1.b"));
  x = g.relu(x);
  x = g.avg_pool(x, 2);
  x = g.conv2d(x, g.input("conv2.w"), g.input("conv2.b"));
  x = g.relu(x);
  x = g.avg_pool(x, 2);
  x = g.conv2d(x, g.input("conv3.w"), g.input("conv3.b"));
  x = g.relu(x);
  x = g.global_avg_pool(x);
  x = g.affine(x, g.input("head.w"), g.input("head.b"));
  x = g.sum(x);  // {1} -> scalar
  g.set_output(x);
  return g;
}

// Per-patch scores modulated by a learned spatial weighting map.
Graph patch_weighted_graph() {
  Graph g;
  NodeId img = g.input("image");
  NodeId f = g.conv2d(img, g.input("feat1.w"), g.input("feat1.b"));
  f = g.relu(f);
  f = g.conv2d(f, g.input("feat2.w"), g.input("feat2.b"));
  f = g.relu(f);
  NodeId s = g.conv2d(f, g.input("score.w"), g.input("score.b"));
  NodeId w = g.conv2d(f, g.input("weight.w"), g.input("weight.b"));
  w = g.sigmoid(w);
  NodeId out = g.mean(g.mul(s, w));
  g.set_output(out);
  return g;
}

// Hand-designed score from local mean/variance-normalized statistics.
// Doubles as the AMI-FGSM quality provider: strictly positive on [0,1] images.
Graph naturalness_lite_graph() {
  Graph g;
  NodeId img = g.input("image");
  Tensor luma({1, 1, 3, 1});
  luma.array() << 0.299, 0.587, 0.114;
  NodeId y = g.conv2d(img, g.constant(std::move(luma)));
  NodeId box = g.constant(Tensor::full({5, 5, 1, 1}, 1.0 / 25.0));
  NodeId mu = g.conv2d(y, box);
  NodeId d = g.sub(y, mu);
  NodeId var = g.conv2d(g.square(d), box);
  NodeId sigma = g.sqrt(var, 1e-12);
  NodeId mscn = g.div(d, g.scale(sigma, 1.0, 0.05));
  NodeId m1 = g.mean(sigma);
  NodeId m2 = g.mean(g.square(mscn));
  NodeId out = g.add(g.scale(m1, 16.0, 2.0), g.scale(m2, 4.0, 0.0));
  g.set_output(out);
  return g;
}

Graph linear_mean_graph() {
  Graph g;
  NodeId img = g.input("image");
  g.set_output(g.mean(img));
  return g;
}

}  // namespace

std::vector<ParamSpec> metric_param_specs(const std::string& name) {
  if (name == "tiny-cnn-nr") {
    return {
        {"conv1.w", {3, 3, 3, 8}, "fan-in-uniform"},
        {"conv1.b", {8}, "zero"},
        {"conv2.w", {3, 3, 8, 12}, "fan-in-uniform"},
        {"conv2.b", {12}, "zero"},
        {"conv3.w", {3, 3, 12, 16}, "fan-in-uniform"},
        {"conv3.b", {16}, "zero"},
        {"head.w", {16, 1}, "fan-in-uniform"},
        {"head.b", {1}, "zero"},
    };
  }
  if (name == "patch-weighted") {
    return {
        {"feat1.w", {3, 3, 3, 8}, "fan-in-uniform"},
        {"feat1.b", {8}, "zero"},
        {"feat2.w", {3, 3, 8, 8}, "fan-in-uniform"},
        {"feat2.b", {8}, "zero"},
        {"score.w", {1, 1, 8, 1}, "fan-in-uniform"},
        {"score.b", {1}, "zero"},
        {"weight.w", {1, 1, 8, 1}, "fan-in-uniform"},
        {"weight.b", {1}, "zero"},
    };
  }
  throw ConfigError("metric '" + name + "' has no loadable parameters");
}

WeightFile init_metric_weights(const std::string& name, uint64_t seed) {
  WeightFile w;
  w.model = name;
  w.params = metric_param_specs(name);
  Rng rng(seed);
  for (const ParamSpec& ps : w.params) {
    Tensor t(ps.shape);
    if (ps.initializer == "zero") {
      // biases stay zero
    } else {
      Eigen::Index fan_in = 1;
      for (size_t i = 0; i + 1 < ps.shape.size(); ++i) fan_in *= ps.shape[i];
      const double limit = std::sqrt(6.0 / static_cast<double>(fan_in));
      for (Eigen::Index i = 0; i < t.numel(); ++i) t[i] = rng.uniform(-limit, limit);
    }
    w.tensors.emplace(ps.name, std::move(t));
  }
  return w;
}

std::vector<std::string> shipped_metric_names() {
  return {"tiny-cnn-nr", "patch-weighted", "naturalness-lite", "linear-mean"};
}

bool metric_needs_weights(const std::string& name) {
  return name == "tiny-cnn-nr" || name == "patch-weighted";
}

std::shared_ptr<MetricModel> build_metric(const std::string& name,
                                          const std::string& weights_stem,
                                          InputPolicy policy) {
  if (name == "linear-mean") {
    return std::make_shared<MetricModel>(name, linear_mean_graph(),
                                         std::map<std::string, Tensor>{}, policy);
  }
  if (name == "naturalness-lite") {
    return std::make_shared<MetricModel>(name, naturalness_lite_graph(),
                                         std::map<std::string, Tensor>{}, policy);
  }
  if (name == "tiny-cnn-nr" || name == "patch-weighted") {
    if (weights_stem.empty()) {
      throw ConfigError("metric '" + name + "' needs a weights file");
    }
    WeightFile w = load_weights(weights_stem);
    for (const ParamSpec& ps : metric_param_specs(name)) {
      auto it = w.tensors.find(ps.name);
      if (it == w.tensors.end()) {
        throw IoError("weights for '" + name + "' miss parameter " + ps.name);
      }
      if (it->second.shape() != ps.shape) {
        throw IoError("weights for '" + name + "' have wrong shape for " + ps.name);
      }
    }
    Graph g = (name == "tiny-cnn-nr") ? tiny_cnn_graph() : patch_weighted_graph();
    return std::make_shared<MetricModel>(name, std::move(g), std::move(w.tensors), policy);
  }
  throw ConfigError("unknown metric '" + name + "'");
}

}  // namespace mrb
