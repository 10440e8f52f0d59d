#include <cmath>
#include <sstream>

#include <json.hpp>

#include "mrb/adam.hpp"
#include "mrb/attacks.hpp"
#include "mrb/rng.hpp"
#include "mrb/weights.hpp"

namespace mrb {

using nlohmann::json;

namespace {

void require_uniform_trainset(const std::vector<Image>& trainset) {
  if (trainset.empty()) throw AttackError("UAP training set is empty");
  for (const Image& img : trainset) {
    if (!img.same_shape(trainset.front())) {
      throw AttackError("UAP training images must share one resolution");
    }
  }
}

// Unit L-inf normalization at training end; a zero pattern is flagged, not an error.
void finalize_pattern(Perturbation& p) {
  const double m = p.pattern.array().abs().maxCoeff();
  if (m > 0.0) {
    p.pattern.array() /= m;
  } else {
    p.degenerate = true;
  }
}

std::string trainer_divergence_message(const std::vector<double>& history) {
  std::ostringstream os;
  os << "UAP training diverged (non-finite loss); history tail:";
  const size_t n = history.size();
  for (size_t i = n > 5 ? n - 5 : 0; i < n; ++i) os << ' ' << history[i];
  return os.str();
}

}  // namespace

Perturbation train_uap_cumulative(const MetricModel& metric, const std::vector<Image>& trainset,
                                  const AttackSpec& spec) {
  require_uniform_trainset(trainset);
  Perturbation p;
  p.target_metric = metric.name();
  p.trainer = attack_kind_name(AttackKind::uap_cumulative);
  p.amplitude = spec.amplitude;
  p.seed = spec.seed;
  p.pattern = Tensor::zeros_like(trainset.front());
  // Mean of the one-step signed perturbations -alpha * sign(grad J).
  for (const Image& img : trainset) {
    Image g = attack_loss_gradient(metric, img);
    p.pattern.array() -= spec.alpha * g.array().sign();
  }
  p.pattern.array() /= static_cast<double>(trainset.size());
  finalize_pattern(p);
  return p;
}

Perturbation train_uap_optimized(const MetricModel& metric, const std::vector<Image>& trainset,
                                 const AttackSpec& spec) {
  require_uniform_trainset(trainset);
  if (spec.epochs < 0 || spec.batch_size < 1) {
    throw AttackError("uap-optimized needs epochs >= 0 and batch_size >= 1");
  }
  Perturbation p;
  p.target_metric = metric.name();
  p.trainer = attack_kind_name(AttackKind::uap_optimized);
  p.amplitude = spec.amplitude;
  p.seed = spec.seed;
  p.pattern = Tensor::zeros_like(trainset.front());

  AdamState adam(p.pattern.shape(), spec.lr, spec.beta1, spec.beta2);
  // The pattern lives at unit L-inf and is deployed as amplitude * pattern, so
  // the objective sees the deployment amplitude (1.0 when no sweep is set).
  const double amp = spec.amplitude > 0.0 ? spec.amplitude : 1.0;
  const size_t n = trainset.size();
  const size_t bs = static_cast<size_t>(spec.batch_size);
  for (int epoch = 0; epoch < spec.epochs; ++epoch) {
    for (size_t start = 0; start < n; start += bs) {
      const size_t end = std::min(n, start + bs);
      Tensor grad = Tensor::zeros_like(p.pattern);
      double loss = 0.0;
      try {
        for (size_t i = start; i < end; ++i) {
          Image perturbed(trainset[i].shape(),
                          trainset[i].array() + amp * p.pattern.array());
          auto [score, g] = metric.score_with_gradient(perturbed);
          loss -= score;
          grad.array() -= amp * g.array();
        }
      } catch (const NumericError&) {
        throw AttackError(trainer_divergence_message(p.loss_history));
      }
      const double inv = 1.0 / static_cast<double>(end - start);
      loss *= inv;
      grad.array() *= inv;
      if (!std::isfinite(loss)) throw AttackError(trainer_divergence_message(p.loss_history));
      p.loss_history.push_back(loss);
      p.pattern = adam_step(adam, p.pattern, grad);
      p.pattern.array() = p.pattern.array().max(-1.0).min(1.0);
    }
  }
  finalize_pattern(p);
  return p;
}

namespace {

struct Generator {
  Graph graph;
  std::vector<std::string> weight_names;
  std::map<std::string, Tensor> weights;
  int noise_channels;
};

// Small encoder-decoder, two pooling levels, additive skip connections,
// widths capped at 16 channels. The output head starts at zero so the
// untrained generator emits a zero pattern.
Generator make_generator(int H, int W, int C, int noise_channels, uint64_t seed) {
  if (H % 4 != 0 || W % 4 != 0) {
    throw AttackError("uap-generative needs training resolution divisible by 4");
  }
  Generator gen;
  gen.noise_channels = noise_channels;
  Graph& g = gen.graph;
  auto conv = [&](NodeId x, const char* name, int ci, int co) {
    gen.weight_names.push_back(std::string(name) + ".w");
    gen.weight_names.push_back(std::string(name) + ".b");
    NodeId w = g.input(std::string(name) + ".w");
    NodeId b = g.input(std::string(name) + ".b");
    gen.weights.emplace(std::string(name) + ".w", Tensor({3, 3, ci, co}));
    gen.weights.emplace(std::string(name) + ".b", Tensor({co}));
    return g.conv2d(x, w, b);
  };
  NodeId z = g.input("noise");
  NodeId e1 = g.relu(conv(z, "enc1", noise_channels, 8));
  NodeId p1 = g.avg_pool(e1, 2);
  NodeId e2 = g.relu(conv(p1, "enc2", 8, 16));
  NodeId p2 = g.avg_pool(e2, 2);
  NodeId mid = g.relu(conv(p2, "mid", 16, 16));
  NodeId u1 = g.add(g.upsample2(mid), e2);
  NodeId d1 = g.relu(conv(u1, "dec1", 16, 8));
  NodeId u2 = g.add(g.upsample2(d1), e1);
  NodeId d2 = g.relu(conv(u2, "dec2", 8, 8));
  NodeId head = conv(d2, "head", 8, C);
  g.set_output(g.clamp(head, -1.0, 1.0));

  Rng rng(derive_seed(seed, 1));
  for (const std::string& name : gen.weight_names) {
    Tensor& t = gen.weights.at(name);
    if (name.starts_with("head") || name.ends_with(".b")) continue;  // stay zero
    const auto& s = t.shape();
    Eigen::Index fan_in = 1;
    for (size_t i = 0; i + 1 < s.size(); ++i) fan_in *= s[i];
    const double limit = std::sqrt(6.0 / static_cast<double>(fan_in));
    for (Eigen::Index i = 0; i < t.numel(); ++i) t[i] = rng.uniform(-limit, limit);
  }
  return gen;
}

Image uniform_noise(int H, int W, int C, Rng& rng) {
  Image z({H, W, C});
  for (Eigen::Index i = 0; i < z.numel(); ++i) z[i] = rng.uniform();
  return z;
}

Image run_generator(const Generator& gen, const Image& noise) {
  Inputs in{{"noise", &noise}};
  for (const auto& [k, v] : gen.weights) in[k] = &v;
  return forward(gen.graph, in);
}

}  // namespace

Perturbation train_uap_generative(const MetricModel& metric, const std::vector<Image>& trainset,
                                  const AttackSpec& spec) {
  require_uniform_trainset(trainset);
  if (spec.epochs < 0 || spec.batch_size < 1) {
    throw AttackError("uap-generative needs epochs >= 0 and batch_size >= 1");
  }
  const Image& ref = trainset.front();
  const int H = ref.height(), W = ref.width(), C = ref.channels();
  Generator gen = make_generator(H, W, C, spec.noise_channels, spec.seed);

  Perturbation p;
  p.target_metric = metric.name();
  p.trainer = attack_kind_name(AttackKind::uap_generative);
  p.amplitude = spec.amplitude;
  p.seed = spec.seed;

  std::map<std::string, AdamState> adam;
  for (const std::string& name : gen.weight_names) {
    adam.emplace(name, AdamState(gen.weights.at(name).shape(), spec.lr, spec.beta1, spec.beta2));
  }

  Rng noise_rng(derive_seed(spec.seed, 2));
  const double amp = spec.amplitude > 0.0 ? spec.amplitude : 1.0;
  const size_t n = trainset.size();
  const size_t bs = static_cast<size_t>(spec.batch_size);
  for (int epoch = 0; epoch < spec.epochs; ++epoch) {
    for (size_t start = 0; start < n; start += bs) {
      const size_t end = std::min(n, start + bs);
      Image z = uniform_noise(H, W, spec.noise_channels, noise_rng);
      Inputs gin{{"noise", &z}};
      for (const auto& [k, v] : gen.weights) gin[k] = &v;
      Eval gev(gen.graph);
      const Tensor& pattern = gev.forward(gin);

      Tensor dpattern = Tensor::zeros_like(pattern);
      double loss = 0.0;
      try {
        for (size_t i = start; i < end; ++i) {
          Image perturbed(ref.shape(), trainset[i].array() + amp * pattern.array());
          auto [score, g] = metric.score_with_gradient(perturbed);
          loss -= score;
          dpattern.array() -= amp * g.array();
        }
      } catch (const NumericError&) {
        throw AttackError(trainer_divergence_message(p.loss_history));
      }
      const double inv = 1.0 / static_cast<double>(end - start);
      loss *= inv;
      dpattern.array() *= inv;
      if (!std::isfinite(loss)) throw AttackError(trainer_divergence_message(p.loss_history));
      p.loss_history.push_back(loss);

      gev.backward(dpattern);
      for (const std::string& name : gen.weight_names) {
        gen.weights.at(name) =
            adam_step(adam.at(name), gen.weights.at(name), gev.grad(name));
      }
    }
  }

  // Freeze one pattern from seeded noise.
  Rng frozen_rng(derive_seed(spec.seed, 3));
  Image z = uniform_noise(H, W, spec.noise_channels, frozen_rng);
  p.pattern = run_generator(gen, z);
  finalize_pattern(p);
  return p;
}

Image apply_uap(const Perturbation& p, const Image& image, double amplitude) {
  if (p.pattern.channels() != image.channels()) {
    throw AttackError("UAP channel count does not match image");
  }
  const int H = image.height(), W = image.width(), C = image.channels();
  const int ph = p.pattern.height(), pw = p.pattern.width();
  Image out = image;
  if (ph >= H && pw >= W) {
    const int oh = (ph - H) / 2, ow = (pw - W) / 2;  // center-crop the pattern
    for (int h = 0; h < H; ++h)
      for (int w = 0; w < W; ++w)
        for (int c = 0; c < C; ++c)
          out.at(h, w, c) += amplitude * p.pattern.at(oh + h, ow + w, c);
  } else {  // tile
    for (int h = 0; h < H; ++h)
      for (int w = 0; w < W; ++w)
        for (int c = 0; c < C; ++c)
          out.at(h, w, c) += amplitude * p.pattern.at(h % ph, w % pw, c);
  }
  out.array() = out.array().max(0.0).min(1.0);
  return out;
}

AttackResult evaluate_uap(const MetricModel& metric, const Perturbation& p, const Image& image,
                          double amplitude, const AttackSpec& spec) {
  AttackResult r;
  r.spec_digest = spec.digest();
  r.score_before = metric.score(image);
  r.attacked = apply_uap(p, image, amplitude);
  r.score_after = metric.score(r.attacked);
  r.steps_used = 1;
  r.degenerate = p.degenerate;
  r.noop = p.degenerate || amplitude == 0.0;
  r.proxy = proxy_scores(image, r.attacked);
  r.linf = (r.attacked.array() - image.array()).abs().maxCoeff();
  r.eps_used = amplitude;
  return r;
}

void save_perturbation(const std::string& stem, const Perturbation& p) {
  json meta;
  meta["target_metric"] = p.target_metric;
  meta["trained_on"] = p.trained_on;
  meta["trainer"] = p.trainer;
  meta["amplitude"] = p.amplitude;
  meta["seed"] = p.seed;
  meta["degenerate"] = p.degenerate;
  meta["shape"] = p.pattern.shape();
  meta["loss_history"] = p.loss_history;
  write_file_bytes(stem + ".json", meta.dump(2) + "\n");
  auto bytes = encode_f64le(p.pattern.array());
  write_file_bytes(stem + ".f64", std::string(bytes.begin(), bytes.end()));
}

Perturbation load_perturbation(const std::string& stem) {
  json meta;
  try {
    meta = json::parse(read_file_bytes(stem + ".json"));
  } catch (const json::exception& e) {
    throw IoError("bad perturbation header " + stem + ".json: " + e.what());
  }
  Perturbation p;
  p.target_metric = meta.at("target_metric").get<std::string>();
  p.trained_on = meta.value("trained_on", "");
  p.trainer = meta.at("trainer").get<std::string>();
  p.amplitude = meta.at("amplitude").get<double>();
  p.seed = meta.at("seed").get<uint64_t>();
  p.degenerate = meta.value("degenerate", false);
  if (meta.contains("loss_history")) {
    p.loss_history = meta["loss_history"].get<std::vector<double>>();
  }
  auto shape = meta.at("shape").get<std::vector<int>>();
  std::string blob = read_file_bytes(stem + ".f64");
  Array data = decode_f64le(std::vector<uint8_t>(blob.begin(), blob.end()));
  if (data.size() != shape_numel(shape)) {
    throw IoError("perturbation blob length does not match header shape");
  }
  p.pattern = Tensor(shape, std::move(data));
  return p;
}

}  // namespace mrb
