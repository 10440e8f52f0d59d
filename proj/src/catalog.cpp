#include "mrb/catalog.hpp"

#include <sstream>

namespace mrb {

const std::vector<CatalogEntry>& attack_catalog() {
  static const std::vector<CatalogEntry> entries = {
      {"fgsm",
       "One signed gradient step: I' = clip(I - eps * sign(grad J)).",
       "epsilon"},
      {"ifgsm",
       "T signed steps of size alpha, each clipped to the eps ball around the "
       "original and to [0,1].",
       "epsilon, alpha, iterations"},
      {"mifgsm",
       "ifgsm with gradient momentum g_t = grad J + nu * g_{t-1}.",
       "epsilon, alpha, iterations, momentum"},
      {"amifgsm",
       "mifgsm with a per-image budget eps = 1 / quality(I) from a no-reference "
       "quality provider.",
       "alpha, iterations, momentum, eps_provider"},
      {"uap-cumulative",
       "Universal perturbation: mean of one-step signed per-image perturbations "
       "over a training set, normalized to unit L-inf.",
       "alpha, amplitudes, seed"},
      {"uap-optimized",
       "Universal perturbation trained directly with Adam to maximize the mean "
       "metric score; clamped to unit L-inf each step.",
       "epochs, batch_size, lr, amplitudes, seed"},
      {"uap-generative",
       "Small encoder-decoder generator trained with Adam to map uniform noise "
       "to a score-raising pattern; one seeded pattern is frozen after training.",
       "epochs, batch_size, lr, noise_channels, amplitudes, seed"},
      {"korhonen",
       "Gradient descent with per-pixel gradients masked by the Sobel spatial "
       "activity map of the original image, keeping changes in textured regions.",
       "alpha, iterations"},
      {"madc",
       "Projected gradient ascent on the score with MSE held at a fixed budget "
       "via binary search along the MSE gradient.",
       "alpha, iterations, mse_budget, mse_precision, mse_units"},
  };
  return entries;
}

std::string render_attack_docs() {
  std::ostringstream os;
  os << "# Attack catalog\n\n";
  os << "Every attack perturbs an image to raise a no-reference metric's score.\n";
  os << "Budgets and step sizes are in [0,1] pixel units unless noted.\n\n";
  for (const CatalogEntry& e : attack_catalog()) {
    os << "## " << e.name << "\n\n";
    os << e.synopsis << "\n\n";
    os << "Parameters: `" << e.parameters << "`\n\n";
  }
  return os.str();
}

}  // namespace mrb
