#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "mrb/metrics.hpp"
#include "mrb/tensor.hpp"

namespace mrb {

enum class AttackKind {
  fgsm,
  ifgsm,
  mifgsm,
  amifgsm,
  uap_cumulative,
  uap_optimized,
  uap_generative,
  korhonen,
  madc,
};

const char* attack_kind_name(AttackKind k);
AttackKind parse_attack_kind(const std::string& s);
bool attack_is_trainable(AttackKind k);

enum class MseUnits { unit, eight_bit };  // squared-error scale: [0,1]^2 or [0,255]^2

struct AttackSpec {
  AttackKind kind = AttackKind::fgsm;
  double epsilon = 4.0 / 255.0;  // L-inf budget in [0,1] pixel units
  double alpha = 1.0 / 255.0;    // per-step size
  int iterations = 10;
  double momentum = 0.9;
  double amplitude = 0.0;        // UAP application amplitude
  uint64_t seed = 0;

  // kind-specific extras
  int epochs = 30;               // UAP trainers
  int batch_size = 4;
  double lr = 1e-3;              // Adam (paper leaves hyperparameters open)
  double beta1 = 0.9;
  double beta2 = 0.999;
  int noise_channels = 2;        // generative trainer
  double mse_budget = 0.001;     // madc target, in mse_units
  double mse_precision = 0.04;   // madc binary-search tolerance, in mse_units
  MseUnits mse_units = MseUnits::unit;
  std::string eps_provider = "naturalness-lite";  // amifgsm

  std::string digest() const;  // stable fingerprint echoed into results
};

struct AttackResult {
  std::string image_id;
  double score_before = 0.0;
  double score_after = 0.0;
  ProxyScores proxy;
  int steps_used = 0;
  double eps_used = 0.0;   // effective L-inf budget (amifgsm records 1/quality)
  double linf = 0.0;       // final max |attacked - original|
  double terminal_mse = 0.0;  // madc, in configured units
  bool noop = false;           // zero gradient at the first step
  bool degenerate = false;     // e.g. cancelled UAP pattern
  bool non_converged = false;  // madc budget unreachable
  bool projection_skipped = false;  // madc parallel-gradient step
  std::string spec_digest;
  Image attacked;
};

// The shared normalized loss J = 1 - score/range; decreasing J raises the
// score. Requires a calibrated metric.
double attack_loss(const MetricModel& metric, const Image& image);
Image attack_loss_gradient(const MetricModel& metric, const Image& image);

AttackResult fgsm(const MetricModel& metric, const Image& image, const AttackSpec& spec);
AttackResult ifgsm(const MetricModel& metric, const Image& image, const AttackSpec& spec);
AttackResult mifgsm(const MetricModel& metric, const Image& image, const AttackSpec& spec);

// Quality-dependent budget: eps = 1 / provider(image).
using EpsProvider = std::function<double(const Image&)>;
AttackResult amifgsm(const MetricModel& metric, const Image& image, const AttackSpec& spec,
                     const EpsProvider& provider);

AttackResult korhonen_attack(const MetricModel& metric, const Image& image,
                             const AttackSpec& spec);
AttackResult madc_attack(const MetricModel& metric, const Image& image,
                         const AttackSpec& spec);

// Sobel-magnitude spatial activity map of the original image, normalized to
// [0,1]; zero map means the attack cannot move anything.
Image spatial_activity_map(const Image& image);

// Removes from g1 its component along g2; returns zero when they are parallel.
Tensor project_out(const Tensor& g1, const Tensor& g2);

// ---- UAP --------------------------------------------------------------------

struct Perturbation {
  Image pattern;           // unit L-inf after training
  std::string trained_on;  // dataset id
  std::string target_metric;
  std::string trainer;     // attack kind name
  double amplitude = 0.0;
  uint64_t seed = 0;
  bool degenerate = false;           // zero pattern
  std::vector<double> loss_history;  // optimized/generative trainers
};

Perturbation train_uap_cumulative(const MetricModel& metric, const std::vector<Image>& trainset,
                                  const AttackSpec& spec);
Perturbation train_uap_optimized(const MetricModel& metric, const std::vector<Image>& trainset,
                                 const AttackSpec& spec);
Perturbation train_uap_generative(const MetricModel& metric, const std::vector<Image>& trainset,
                                  const AttackSpec& spec);

// attacked = clip(image + amplitude * pattern, 0, 1); the pattern is tiled or
// center-cropped to the image size.
Image apply_uap(const Perturbation& p, const Image& image, double amplitude);

void save_perturbation(const std::string& stem, const Perturbation& p);
Perturbation load_perturbation(const std::string& stem);

// Scores an image with the perturbation applied and fills an AttackResult.
AttackResult evaluate_uap(const MetricModel& metric, const Perturbation& p, const Image& image,
                          double amplitude, const AttackSpec& spec);

}  // namespace mrb
