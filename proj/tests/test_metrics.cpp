#include <doctest.h>

#include <filesystem>
#include <fstream>

#include <json.hpp>

#include "mrb/image_io.hpp"
#include "mrb/models.hpp"
#include "mrb/weights.hpp"
#include "test_util.hpp"

using namespace mrb;
using namespace mrb::testutil;

namespace {

const std::string kRoot = MRB_FIXTURES_DIR;

nlohmann::json golden() {
  static nlohmann::json g =
      nlohmann::json::parse(read_file_bytes(kRoot + "/golden/golden_values.json"));
  return g;
}

std::vector<Image> load_calib() {
  std::vector<std::filesystem::path> files;
  for (const auto& e : std::filesystem::directory_iterator(kRoot + "/images/calib")) {
    files.push_back(e.path());
  }
  std::sort(files.begin(), files.end());
  std::vector<Image> out;
  for (const auto& f : files) out.push_back(load_image(f.string()));
  return out;
}

}  // namespace

TEST_CASE("linear-mean metric scores the mean pixel value") {
  auto m = build_metric("linear-mean", "");
  Image img = Tensor::full({8, 8, 3}, 0.5);
  CHECK(m->score(img) == doctest::Approx(0.5).epsilon(1e-15));
  Image g = m->score_gradient(img);
  for (Eigen::Index i = 0; i < g.numel(); ++i) {
    CHECK(g[i] == doctest::Approx(1.0 / 192).epsilon(1e-12));
  }
}

TEST_CASE("scoring is deterministic") {
  auto m = build_metric("tiny-cnn-nr", kRoot + "/weights/tiny-cnn-nr");
  Image img = random_image(20, 20, 3, 31);
  CHECK(m->score(img) == m->score(img));
}

TEST_CASE("metric composed with a saturated clamp has zero gradient") {
  Graph g;
  NodeId x = g.input("image");
  g.set_output(g.mean(g.clamp(x, 0.0, 0.5)));
  MetricModel m("toy-saturated", std::move(g), {});
  Image img = Tensor::full({6, 6, 1}, 0.9);  // everywhere above hi
  Image grad = m.score_gradient(img);
  CHECK(grad.array().abs().maxCoeff() == 0.0);
}

TEST_CASE("golden reference scores for the shipped metrics") {
  const Image ref = load_image(kRoot + "/images/reference/reference.ppm");
  auto tiny = build_metric("tiny-cnn-nr", kRoot + "/weights/tiny-cnn-nr");
  auto patch = build_metric("patch-weighted", kRoot + "/weights/patch-weighted");
  auto natural = build_metric("naturalness-lite", "");
  CHECK(tiny->score(ref) == doctest::Approx(golden()["tiny_cnn_reference_score"].get<double>())
                                .epsilon(1e-12));
  CHECK(patch->score(ref) ==
        doctest::Approx(golden()["patch_weighted_reference_score"].get<double>()).epsilon(1e-12));
  CHECK(natural->score(ref) ==
        doctest::Approx(golden()["naturalness_reference_score"].get<double>()).epsilon(1e-12));
}

TEST_CASE("calibrate_range matches the frozen min/max over the bundled set") {
  auto calib = load_calib();
  CHECK(calib.size() == 32);
  auto tiny = build_metric("tiny-cnn-nr", kRoot + "/weights/tiny-cnn-nr");
  RangeBounds r = calibrate_range(*tiny, calib);
  auto g = golden()["tiny_cnn_calib"];
  CHECK(r.min == doctest::Approx(g[0].get<double>()).epsilon(1e-12));
  CHECK(r.max == doctest::Approx(g[1].get<double>()).epsilon(1e-12));
  CHECK(tiny->declared_range().has_value());
}

TEST_CASE("calibrate_range: toy min/max and degenerate cases") {
  // metric = mean; three constant images give scores {0.2, 0.7, 0.4}
  auto m = build_metric("linear-mean", "");
  std::vector<Image> ds = {Tensor::full({4, 4, 1}, 0.2), Tensor::full({4, 4, 1}, 0.7),
                           Tensor::full({4, 4, 1}, 0.4)};
  RangeBounds r = calibrate_range(*m, ds);
  CHECK(r.min == doctest::Approx(0.2));
  CHECK(r.max == doctest::Approx(0.7));

  auto m2 = build_metric("linear-mean", "");
  std::vector<Image> single = {Tensor::full({4, 4, 1}, 0.3)};
  CHECK_THROWS_AS(calibrate_range(*m2, single), CalibrationError);
  std::vector<Image> none;
  CHECK_THROWS_AS(calibrate_range(*m2, none), CalibrationError);
}

TEST_CASE("shipped metric gradients match finite differences on 16x16 crops") {
  auto tiny = build_metric("tiny-cnn-nr", kRoot + "/weights/tiny-cnn-nr");
  auto patch = build_metric("patch-weighted", kRoot + "/weights/patch-weighted");
  auto natural = build_metric("naturalness-lite", "");
  Rng rng(555);
  for (int trial = 0; trial < 3; ++trial) {
    Image img = random_image(16, 16, 3, rng.next_u64());
    for (const auto& m : {tiny, patch, natural}) {
      INFO("metric ", m->name());
      CHECK(metric_fd_max_rel(*m, img, 10, rng.next_u64()) < 1e-3);
    }
  }
}

TEST_CASE("center-crop policy: gradient lands at the crop, zeros elsewhere") {
  auto m = build_metric("tiny-cnn-nr", kRoot + "/weights/tiny-cnn-nr",
                        InputPolicy::crop(16));
  Image img = random_image(32, 32, 3, 808);
  CHECK(std::isfinite(m->score(img)));
  Image grad = m->score_gradient(img);
  REQUIRE(grad.same_shape(img));
  int nonzero_inside = 0;
  for (int h = 0; h < 32; ++h) {
    for (int w = 0; w < 32; ++w) {
      const bool inside = h >= 8 && h < 24 && w >= 8 && w < 24;
      for (int c = 0; c < 3; ++c) {
        if (!inside) {
          CHECK(grad.at(h, w, c) == 0.0);
        } else if (grad.at(h, w, c) != 0.0) {
          ++nonzero_inside;
        }
      }
    }
  }
  CHECK(nonzero_inside > 0);
}

TEST_CASE("crop and resize policies agree with finite differences") {
  for (InputPolicy policy : {InputPolicy::crop(12), InputPolicy::resized(12)}) {
    auto m = build_metric("tiny-cnn-nr", kRoot + "/weights/tiny-cnn-nr", policy);
    Image img = random_image(18, 18, 3, 909);
    INFO("policy ", input_policy_str(policy));
    CHECK(metric_fd_max_rel(*m, img, 12, 4242) < 1e-3);
  }
}

TEST_CASE("naturalness-lite is strictly positive on valid images") {
  auto m = build_metric("naturalness-lite", "");
  Rng rng(66);
  for (int t = 0; t < 8; ++t) {
    Image img = random_image(24, 24, 3, rng.next_u64(), 0.0, 1.0);
    CHECK(m->score(img) > 0.0);
  }
  CHECK(m->score(Tensor::full({24, 24, 3}, 0.0)) > 0.0);
  CHECK(m->score(Tensor::full({24, 24, 3}, 1.0)) > 0.0);
}

TEST_CASE("input policy strings round-trip") {
  CHECK(input_policy_str(parse_input_policy("full")) == "full");
  CHECK(input_policy_str(parse_input_policy("center-crop(24)")) == "center-crop(24)");
  CHECK(input_policy_str(parse_input_policy("resize(32)")) == "resize(32)");
  CHECK_THROWS_AS(parse_input_policy("windowed(9)"), ConfigError);
}
