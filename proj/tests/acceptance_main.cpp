// Acceptance suite: ten go/no-go checks run end to end against the bundled
// fixtures, one PASS/FAIL line each. Exit code is the number of failures.

#include <array>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <filesystem>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "mrb/attacks.hpp"
#include "mrb/image_io.hpp"
#include "mrb/models.hpp"
#include "mrb/stats.hpp"
#include "mrb/weights.hpp"
#include "oracles.hpp"
#include "test_util.hpp"

using namespace mrb;
using namespace mrb::testutil;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

const std::string kRoot = MRB_FIXTURES_DIR;
const std::string kBin = MRBENCH_BIN;

struct Criterion {
  int number;
  std::string title;
  std::function<bool(std::string&)> run;
};

std::vector<Image> load_dir(const std::string& dir) {
  std::vector<fs::path> files;
  for (const auto& e : fs::directory_iterator(dir)) {
    if (e.path().extension() == ".ppm") files.push_back(e.path());
  }
  std::sort(files.begin(), files.end());
  std::vector<Image> out;
  for (const auto& f : files) out.push_back(load_image(f.string()));
  return out;
}

struct Models {
  std::shared_ptr<MetricModel> tiny, patch, natural, mean;
  std::vector<Image> calib, test, train;
};

Models& models() {
  static Models m = [] {
    Models x;
    x.tiny = build_metric("tiny-cnn-nr", kRoot + "/weights/tiny-cnn-nr");
    x.patch = build_metric("patch-weighted", kRoot + "/weights/patch-weighted");
    x.natural = build_metric("naturalness-lite", "");
    x.mean = build_metric("linear-mean", "");
    x.calib = load_dir(kRoot + "/images/calib");
    x.test = load_dir(kRoot + "/images/test");
    for (const char* t : {"trainA", "trainB", "trainC"}) {
      auto imgs = load_dir(kRoot + "/images/" + t);
      x.train.insert(x.train.end(), imgs.begin(), imgs.end());
    }
    calibrate_range(*x.tiny, x.calib);
    calibrate_range(*x.patch, x.calib);
    calibrate_range(*x.natural, x.calib);
    x.mean->set_declared_range({0.0, 1.0});
    return x;
  }();
  return m;
}

// ---- criterion 1: gradient correctness --------------------------------------

bool c1_gradients(std::string& detail) {
  const auto t0 = std::chrono::steady_clock::now();
  Rng rng(0xC1);
  double worst = 0.0;
  int inputs_checked = 0;

  // all gradcore ops over random graphs
  for (int round = 0; round < 2; ++round) {
    for (Op op : all_checked_ops()) {
      OpCase c = make_op_case(op, rng);
      for (const std::string& wrt : c.wrt) {
        FdReport rep = check_gradient_robust(c.g, c.inputs, wrt, 1e-4, 16, rng.next_u64());
        worst = std::max(worst, rep.max_rel);
      }
      ++inputs_checked;
    }
  }

  // three shipped metrics on random 16x16 inputs
  auto& m = models();
  for (const auto& metric : {m.tiny, m.patch, m.natural}) {
    for (int t = 0; t < 22; ++t) {
      Image img = random_image(16, 16, 3, rng.next_u64());
      worst = std::max(worst, metric_fd_max_rel(*metric, img, 5, rng.next_u64()));
      ++inputs_checked;
    }
  }
  const double secs =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  char buf[160];
  std::snprintf(buf, sizeof(buf), "max rel err %.3g over %d inputs in %.1fs", worst,
                inputs_checked, secs);
  detail = buf;
  return worst < 1e-3 && inputs_checked >= 100 && secs < 120.0;
}

// ---- criterion 2: attack-family identities -----------------------------------

bool c2_identities(std::string& detail) {
  const auto t0 = std::chrono::steady_clock::now();
  auto& m = models();
  Rng rng(0xC2);
  for (int t = 0; t < 20; ++t) {
    const MetricModel& metric = (t % 2 == 0) ? *m.tiny : *m.mean;
    Image img = random_image(12, 12, 3, rng.next_u64());
    AttackSpec spec;
    spec.epsilon = rng.uniform(0.005, 0.1);
    spec.alpha = spec.epsilon;
    spec.iterations = 1;
    spec.momentum = 0.0;
    AttackResult a = fgsm(metric, img, spec);
    AttackResult b = ifgsm(metric, img, spec);
    if (!a.attacked.bit_equal(b.attacked)) {
      detail = "ifgsm(T=1, alpha=eps) != fgsm";
      return false;
    }
    spec.iterations = 4;
    spec.alpha = spec.epsilon / 3.0;
    AttackResult c = ifgsm(metric, img, spec);
    AttackResult d = mifgsm(metric, img, spec);
    if (!c.attacked.bit_equal(d.attacked)) {
      detail = "mifgsm(nu=0) != ifgsm";
      return false;
    }
  }
  const double secs =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  char buf[80];
  std::snprintf(buf, sizeof(buf), "20 triples bitwise in %.1fs", secs);
  detail = buf;
  return secs < 60.0;
}

// ---- criterion 3: linear-metric closed forms ----------------------------------

bool c3_closed_forms(std::string& detail) {
  auto& m = models();
  Image img = random_image(12, 12, 3, 0xC3, 0.15, 0.85);
  AttackSpec spec;
  spec.epsilon = 0.05;
  AttackResult r = fgsm(*m.mean, img, spec);
  if (std::abs((r.score_after - r.score_before) - 0.05) > 1e-12) {
    detail = "fgsm gain != eps";
    return false;
  }
  AttackSpec ispec;
  ispec.alpha = 0.01;
  ispec.iterations = 10;
  ispec.epsilon = 0.05;
  AttackResult ri = ifgsm(*m.mean, img, ispec);
  for (Eigen::Index i = 0; i < img.numel(); ++i) {
    if (std::abs((ri.attacked[i] - img[i]) - 0.05) > 1e-12) {
      detail = "ifgsm displacement != min(T*alpha, eps)";
      return false;
    }
  }
  ispec.iterations = 3;  // T*alpha = 0.03 < eps
  AttackResult r3 = ifgsm(*m.mean, img, ispec);
  for (Eigen::Index i = 0; i < img.numel(); ++i) {
    if (std::abs((r3.attacked[i] - img[i]) - 0.03) > 1e-12) {
      detail = "ifgsm displacement != T*alpha below the budget";
      return false;
    }
  }
  detail = "fgsm gain = eps, ifgsm displacement = min(T*alpha, eps)";
  return true;
}

// ---- criterion 4: budget invariants -------------------------------------------

bool c4_budgets(std::string& detail) {
  auto& m = models();
  Rng rng(0xC4);
  int runs = 0;
  for (int t = 0; t < 350; ++t) {
    const MetricModel& metric = (t % 3 == 0) ? *m.patch : *m.tiny;
    Image img = random_image(12, 12, 3, rng.next_u64(), 0.0, 1.0);
    AttackSpec spec;
    spec.epsilon = rng.uniform(0.002, 0.1);
    spec.alpha = spec.epsilon / (1.0 + rng.index(4));
    spec.iterations = 1 + static_cast<int>(rng.index(6));
    spec.momentum = rng.uniform(0.0, 1.0);
    AttackResult r;
    switch (rng.index(4)) {
      case 0: {
        AttackSpec f = spec;
        f.kind = AttackKind::fgsm;
        r = fgsm(metric, img, f);
        break;
      }
      case 1: r = ifgsm(metric, img, spec); break;
      case 2: r = mifgsm(metric, img, spec); break;
      default: {
        EpsProvider provider = [&](const Image& im) { return models().natural->score(im); };
        r = amifgsm(metric, img, spec, provider);
        spec.epsilon = r.eps_used;
        break;
      }
    }
    const double linf = (r.attacked.array() - img.array()).abs().maxCoeff();
    if (linf > spec.epsilon + 1e-12) {
      detail = "L-inf budget violated";
      return false;
    }
    if (r.attacked.array().minCoeff() < 0.0 || r.attacked.array().maxCoeff() > 1.0) {
      detail = "pixel range violated";
      return false;
    }
    ++runs;
  }

  int converged = 0;
  const int madc_runs = 150;
  for (int t = 0; t < madc_runs; ++t) {
    AttackSpec spec;
    spec.kind = AttackKind::madc;
    spec.alpha = 0.02;
    spec.iterations = 4;
    spec.mse_units = MseUnits::eight_bit;
    spec.mse_budget = rng.uniform(15.0, 90.0);
    spec.mse_precision = 0.04;
    Image img = random_image(12, 12, 3, rng.next_u64(), 0.1, 0.9);
    AttackResult r = madc_attack(*m.tiny, img, spec);
    if (r.attacked.array().minCoeff() < 0.0 || r.attacked.array().maxCoeff() > 1.0) {
      detail = "madc pixel range violated";
      return false;
    }
    const double terminal =
        (r.attacked.array() - img.array()).square().mean() * 255.0 * 255.0;
    if (!r.non_converged && std::abs(terminal - spec.mse_budget) <= 0.04) ++converged;
    ++runs;
  }
  char buf[120];
  std::snprintf(buf, sizeof(buf), "%d runs; madc converged %d/%d", runs, converged,
                madc_runs);
  detail = buf;
  return runs >= 500 && converged >= static_cast<int>(0.95 * madc_runs);
}

// ---- criterion 5: efficacy direction -------------------------------------------

struct UapSet {
  Perturbation cumulative;
  std::map<double, Perturbation> optimized;   // per deployment amplitude
  std::map<double, Perturbation> generative;
};

UapSet& trained_uaps() {
  static UapSet u = [] {
    auto& m = models();
    UapSet x;
    AttackSpec c;
    c.kind = AttackKind::uap_cumulative;
    c.seed = 1;
    x.cumulative = train_uap_cumulative(*m.tiny, m.train, c);
    for (double amp : {0.2, 0.4, 0.8}) {
      AttackSpec o;
      o.kind = AttackKind::uap_optimized;
      o.epochs = 40;
      o.batch_size = 3;
      o.lr = 0.02;
      o.seed = 2;
      o.amplitude = amp;
      x.optimized[amp] = train_uap_optimized(*m.tiny, m.train, o);
      AttackSpec g;
      g.kind = AttackKind::uap_generative;
      g.epochs = 10;
      g.batch_size = 3;
      g.lr = 0.005;
      g.seed = 3;
      g.amplitude = amp;
      x.generative[amp] = train_uap_generative(*m.tiny, m.train, g);
    }
    return x;
  }();
  return u;
}

bool c5_efficacy(std::string& detail) {
  auto& m = models();
  auto& uaps = trained_uaps();
  const double n = static_cast<double>(m.test.size());

  auto mean_gain_per_image = [&](const std::function<AttackResult(const Image&)>& attack) {
    double acc = 0.0;
    for (const Image& img : m.test) {
      AttackResult r = attack(img);
      acc += (r.score_after - r.score_before) / n;
    }
    return acc;
  };

  AttackSpec base;
  base.epsilon = 4.0 / 255.0;
  base.alpha = 1.0 / 255.0;
  base.iterations = 10;
  base.momentum = 0.9;
  EpsProvider provider = [&](const Image& im) { return m.natural->score(im); };
  AttackSpec kor;
  kor.alpha = 2.0;
  kor.iterations = 6;
  AttackSpec madc;
  madc.kind = AttackKind::madc;
  madc.alpha = 0.02;
  madc.iterations = 4;
  madc.mse_units = MseUnits::eight_bit;
  madc.mse_budget = 40.0;

  std::vector<std::pair<std::string, double>> gains;
  gains.emplace_back("fgsm", mean_gain_per_image([&](const Image& i) {
    AttackSpec s = base;
    s.kind = AttackKind::fgsm;
    return fgsm(*m.tiny, i, s);
  }));
  gains.emplace_back("ifgsm", mean_gain_per_image([&](const Image& i) {
    return ifgsm(*m.tiny, i, base);
  }));
  gains.emplace_back("mifgsm", mean_gain_per_image([&](const Image& i) {
    return mifgsm(*m.tiny, i, base);
  }));
  gains.emplace_back("amifgsm", mean_gain_per_image([&](const Image& i) {
    return amifgsm(*m.tiny, i, base, provider);
  }));
  gains.emplace_back("korhonen", mean_gain_per_image([&](const Image& i) {
    return korhonen_attack(*m.tiny, i, kor);
  }));
  gains.emplace_back("madc", mean_gain_per_image([&](const Image& i) {
    return madc_attack(*m.tiny, i, madc);
  }));

  std::map<double, std::pair<double, double>> uap_gain;  // amp -> (cum, opt)
  for (double amp : {0.2, 0.4, 0.8}) {
    double cum = 0.0, opt = 0.0, gen = 0.0;
    for (const Image& img : m.test) {
      const double before = m.tiny->score(img);
      cum += (m.tiny->score(apply_uap(uaps.cumulative, img, amp)) - before) / n;
      opt += (m.tiny->score(apply_uap(uaps.optimized.at(amp), img, amp)) - before) / n;
      gen += (m.tiny->score(apply_uap(uaps.generative.at(amp), img, amp)) - before) / n;
    }
    gains.emplace_back("uap-cumulative@" + std::to_string(amp), cum);
    gains.emplace_back("uap-optimized@" + std::to_string(amp), opt);
    gains.emplace_back("uap-generative@" + std::to_string(amp), gen);
    uap_gain[amp] = {cum, opt};
  }

  std::string worst;
  bool ok = true;
  for (const auto& [name, g] : gains) {
    if (g < 0.0) {
      ok = false;
      worst += " " + name;
    }
  }
  for (const auto& [amp, cg] : uap_gain) {
    if (cg.second < cg.first) {
      ok = false;
      char buf[80];
      std::snprintf(buf, sizeof(buf), " optimized<cumulative@%.1f", amp);
      worst += buf;
    }
  }
  detail = ok ? "all attack kinds raise the tiny-cnn mean score; optimized >= cumulative"
              : "violations:" + worst;
  return ok;
}

// ---- criterion 6: UAP universality + amplitude monotonicity --------------------

bool c6_universality(std::string& detail) {
  auto& m = models();
  auto& uaps = trained_uaps();
  const double n = static_cast<double>(m.test.size());
  double gain = 0.0;
  std::map<double, double> mean_mse;
  const Perturbation& p = uaps.optimized.at(0.4);
  for (const Image& img : m.test) {
    const double before = m.tiny->score(img);
    gain += (m.tiny->score(apply_uap(p, img, 0.4)) - before) / n;
    for (double amp : {0.2, 0.4, 0.8}) {
      mean_mse[amp] += mse(img, apply_uap(p, img, amp)) / n;
    }
  }
  const bool monotone = mean_mse[0.2] < mean_mse[0.4] && mean_mse[0.4] < mean_mse[0.8];
  char buf[160];
  std::snprintf(buf, sizeof(buf), "held-out gain %.4g; mse %.3g < %.3g < %.3g", gain,
                mean_mse[0.2], mean_mse[0.4], mean_mse[0.8]);
  detail = buf;
  return gain > 0.0 && monotone;
}

// ---- criterion 7: evaluation formulas vs oracles -------------------------------

bool c7_formulas(std::string& detail) {
  ScoreSeries s;
  s.before = {0.2, 0.4};
  s.after = {0.5, 0.7};
  Gains g = gains(s);
  if (std::abs(g.abs_gain - 0.3) > 1e-12) {
    detail = "abs gain mismatch";
    return false;
  }
  if (std::abs(g.rel_gain - 0.232142857142857) > 1e-12) {
    detail = "rel gain mismatch";
    return false;
  }
  ScoreSeries rs;
  rs.before = {0.5};
  rs.after = {0.6};
  if (std::abs(r_score(rs).value - std::log10(5.0)) > 1e-12) {
    detail = "r_score mismatch";
    return false;
  }
  Rng rng(0xC7);
  for (int t = 0; t < 40; ++t) {
    const size_t n = 2 + rng.index(7);
    std::vector<double> a, b;
    for (size_t i = 0; i < n; ++i) {
      a.push_back(rng.uniform(0.0, 1.0));
      b.push_back(rng.uniform(0.0, 1.0));
    }
    if (std::abs(w1_sorted(a, b) - w1_bruteforce(a, b)) > 1e-12) {
      detail = "w1 vs permutation transport mismatch";
      return false;
    }
  }
  ScoreSeries pm;
  pm.before = {0.2, 0.2};
  pm.after = {0.9, 0.9};
  if (std::abs(e_score(pm) - std::sqrt(2.0 * 0.7)) > 1e-9) {
    detail = "point-mass e_score mismatch";
    return false;
  }
  int trials = 0;
  for (int t = 0; t < 1000; ++t) {
    const size_t n = 5 + rng.index(6);  // 5..10
    std::vector<double> a, b;
    for (size_t i = 0; i < n; ++i) {
      a.push_back(rng.uniform(0.0, 1.0));
      if (rng.index(5) == 0) b.push_back(a.back());
      else if (rng.index(4) == 0) b.push_back(a.back() + 0.25);
      else b.push_back(rng.uniform(0.0, 1.0));
    }
    WilcoxonResult w = wilcoxon_one_sided(a, b);
    auto o = wilcoxon_oracle(a, b);
    if (!w.defined) {
      if (o.n_used != 0) {
        detail = "wilcoxon undefined disagreement";
        return false;
      }
      continue;
    }
    if (std::abs(w.p_greater - o.p_greater_inclusive) > 1e-12 ||
        std::abs(w.p_less - (1.0 - o.p_greater_inclusive)) > 1e-12) {
      detail = "wilcoxon vs enumeration mismatch";
      return false;
    }
    ++trials;
  }
  char buf[80];
  std::snprintf(buf, sizeof(buf), "all formula oracles agree (%d wilcoxon trials)", trials);
  detail = buf;
  return trials >= 900;
}

// ---- criterion 8: affine invariance ---------------------------------------------

bool c8_affine(std::string& detail) {
  Rng rng(0xC8);
  std::vector<double> before, after, primary;
  for (int i = 0; i < 60; ++i) {
    before.push_back(rng.uniform(-2.0, 4.0));
    after.push_back(before.back() + rng.uniform(-0.3, 1.0));
    primary.push_back(rng.uniform(0.0, 1.0));
  }
  auto measure = [&](const std::vector<double>& b, const std::vector<double>& a) {
    ScoreSeries s;
    s.before = b;
    s.after = a;
    ScoreSeries scaled = minmax_scale(s);
    TransportMap map = fit_transport(scaled.before, primary, 16);
    scaled.before = apply_transport(map, scaled.before);
    scaled.after = apply_transport(map, scaled.after);
    Gains g = gains(scaled);
    RScore r = r_score(scaled);
    return std::array<double, 5>{g.abs_gain, g.rel_gain, r.value, w_score(scaled),
                                 e_score(scaled)};
  };
  const auto base = measure(before, after);
  for (int t = 0; t < 10; ++t) {
    const double a = rng.uniform(0.05, 5.0);
    const double b = rng.uniform(-20.0, 20.0);
    std::vector<double> tb(before.size()), ta(after.size());
    for (size_t i = 0; i < before.size(); ++i) {
      tb[i] = a * before[i] + b;
      ta[i] = a * after[i] + b;
    }
    const auto got = measure(tb, ta);
    for (size_t k = 0; k < base.size(); ++k) {
      if (std::memcmp(&base[k], &got[k], sizeof(double)) != 0) {
        char buf[120];
        std::snprintf(buf, sizeof(buf), "measure %zu differs under a=%.3f b=%.3f", k, a, b);
        detail = buf;
        return false;
      }
    }
  }
  detail = "gains, r, w, e bit-identical under 10 random affine transforms";
  return true;
}

// ---- criterion 9: transport exactness --------------------------------------------

bool c9_transport(std::string& detail) {
  Rng rng(0xC9);
  std::vector<double> sample;
  for (int i = 0; i < 64; ++i) sample.push_back(rng.uniform(-1.0, 2.0));
  TransportMap self = fit_transport(sample, sample, 33);
  for (double v : sample) {
    if (std::abs(apply_transport(self, v) - v) > 1e-9) {
      detail = "self-transport not identity";
      return false;
    }
  }
  std::vector<double> src, dst;
  for (int i = 0; i < 500; ++i) src.push_back(rng.uniform(0.0, 1.0));
  for (double v : src) dst.push_back(2.0 * v);
  TransportMap map = fit_transport(src, dst, 21);
  for (size_t k = 1; k + 1 < map.src.size(); ++k) {
    if (std::abs(apply_transport(map, map.src[k]) - 2.0 * map.src[k]) > 1e-6) {
      detail = "uniform->2x transport off at an interior knot";
      return false;
    }
  }
  for (int t = 0; t < 20; ++t) {
    std::vector<double> xs;
    for (int i = 0; i < 40; ++i) xs.push_back(rng.uniform(-0.5, 1.5));
    std::sort(xs.begin(), xs.end());
    std::vector<double> ys = apply_transport(map, xs);
    if (!std::is_sorted(ys.begin(), ys.end())) {
      detail = "transport broke rank order";
      return false;
    }
  }
  detail = "identity, closed-form 2x, and rank preservation hold";
  return true;
}

// ---- criterion 10: pipeline reproducibility ---------------------------------------

int run_bin(const std::string& env, const std::string& args) {
  const std::string cmd = env + " " + kBin + " " + args + " >/dev/null 2>/dev/null";
  return WEXITSTATUS(std::system(cmd.c_str()));
}

bool c10_pipeline(std::string& detail) {
  const auto t0 = std::chrono::steady_clock::now();
  const fs::path out = fs::temp_directory_path() / "mrb_acceptance_run";
  fs::remove_all(out);
  const std::string cfg = kRoot + "/configs/fixture_run.json";
  const std::string env = "MRB_OUTPUT_DIR=" + out.string() + " MRB_WORKERS=2";

  // interrupted first pass, then a resumed full pass
  if (run_bin(env, "run --config " + cfg + " --stop-after 12") != 0) {
    detail = "interrupted run failed";
    return false;
  }
  if (run_bin(env, "run --config " + cfg) != 0) {
    detail = "resumed run failed";
    return false;
  }
  if (run_bin(env, "report --config " + cfg) != 0) {
    detail = "report failed";
    return false;
  }
  const double secs =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

  const fs::path golden = fs::path(kRoot) / "golden" / "report";
  if (!fs::is_directory(golden)) {
    detail = "golden report directory missing (fixtures not frozen)";
    return false;
  }
  for (const auto& e : fs::directory_iterator(golden)) {
    const std::string name = e.path().filename().string();
    const fs::path produced = out / "report" / name;
    if (!fs::exists(produced)) {
      detail = "missing report file " + name;
      return false;
    }
    if (read_file_bytes(e.path().string()) != read_file_bytes(produced.string())) {
      detail = "report file " + name + " differs from golden";
      return false;
    }
  }
  char buf[120];
  std::snprintf(buf, sizeof(buf),
                "resume + byte-identical golden reports; wall %.0fs (< 1800s)", secs);
  detail = buf;
  return secs < 1800.0;
}

}  // namespace

int main(int argc, char** argv) {
  std::vector<Criterion> criteria = {
      {1, "gradient correctness vs finite differences", c1_gradients},
      {2, "attack-family collapse identities (bitwise)", c2_identities},
      {3, "linear-metric closed forms", c3_closed_forms},
      {4, "eps-ball/range budgets and madc mse precision", c4_budgets},
      {5, "efficacy direction and optimization dominance", c5_efficacy},
      {6, "UAP universality and amplitude monotonicity", c6_universality},
      {7, "evaluation formulas vs independent oracles", c7_formulas},
      {8, "affine invariance of all reported measures", c8_affine},
      {9, "quantile-transport exactness", c9_transport},
      {10, "end-to-end pipeline reproducibility", c10_pipeline},
  };

  int only = -1;
  if (argc > 1) only = std::atoi(argv[1]);
  int failures = 0;
  for (auto& c : criteria) {
    if (only > 0 && c.number != only) continue;
    std::string detail;
    bool ok = false;
    try {
      ok = c.run(detail);
    } catch (const std::exception& e) {
      detail = std::string("exception: ") + e.what();
    }
    std::printf("%s criterion %2d: %s%s%s\n", ok ? "PASS" : "FAIL", c.number,
                c.title.c_str(), detail.empty() ? "" : " -- ", detail.c_str());
    std::fflush(stdout);
    if (!ok) ++failures;
  }
  return failures;
}
