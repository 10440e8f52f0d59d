// Mints the deterministic fixture corpus: procedural test images (8-bit PPM),
// metric weight files, and the golden-value file frozen from the reference
// forward passes. Rerunning reproduces every byte.

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "mrb/image_io.hpp"
#include "mrb/models.hpp"
#include "mrb/rng.hpp"
#include "mrb/weights.hpp"

namespace fs = std::filesystem;
using namespace mrb;
using nlohmann::json;

namespace {

constexpr uint64_t kBaseSeed = 0x5eedf00d2024ULL;

Image procedural_image(uint64_t index, int H, int W) {
  Rng rng(derive_seed(kBaseSeed, index));
  Image img({H, W, 3});

  // gradient background between two random colors along a random direction
  double c0[3], c1[3];
  for (int c = 0; c < 3; ++c) {
    c0[c] = rng.uniform(0.15, 0.85);
    c1[c] = rng.uniform(0.15, 0.85);
  }
  const double ang = rng.uniform(0.0, 6.2831853);
  const double dx = std::cos(ang), dy = std::sin(ang);
  for (int h = 0; h < H; ++h)
    for (int w = 0; w < W; ++w) {
      const double t = 0.5 + 0.5 * ((w - W / 2.0) * dx + (h - H / 2.0) * dy) /
                                 std::sqrt(0.25 * (H * H + W * W));
      for (int c = 0; c < 3; ++c) img.at(h, w, c) = c0[c] + (c1[c] - c0[c]) * t;
    }

  // sinusoidal texture
  const double fx = rng.uniform(0.05, 0.45), fy = rng.uniform(0.05, 0.45);
  const double phase = rng.uniform(0.0, 6.2831853);
  const double amp = rng.uniform(0.03, 0.12);
  for (int h = 0; h < H; ++h)
    for (int w = 0; w < W; ++w) {
      const double v = amp * std::sin(6.2831853 * (fx * w + fy * h) + phase);
      for (int c = 0; c < 3; ++c) img.at(h, w, c) += v;
    }

  // a few soft-edged disks
  const int blobs = 2 + static_cast<int>(rng.index(3));
  for (int b = 0; b < blobs; ++b) {
    const double cx = rng.uniform(0.1, 0.9) * W;
    const double cy = rng.uniform(0.1, 0.9) * H;
    const double rad = rng.uniform(0.08, 0.28) * std::min(H, W);
    double col[3];
    for (int c = 0; c < 3; ++c) col[c] = rng.uniform(0.1, 0.9);
    for (int h = 0; h < H; ++h)
      for (int w = 0; w < W; ++w) {
        const double d = std::sqrt((w - cx) * (w - cx) + (h - cy) * (h - cy));
        const double a = 1.0 / (1.0 + std::exp((d - rad) * 1.5));
        for (int c = 0; c < 3; ++c) {
          img.at(h, w, c) = (1.0 - a) * img.at(h, w, c) + a * col[c];
        }
      }
  }

  // mild pixel noise
  const double noise = rng.uniform(0.01, 0.05);
  for (Eigen::Index i = 0; i < img.numel(); ++i) {
    img.array()[i] += noise * (rng.uniform() - 0.5);
  }
  img.array() = img.array().max(0.04).min(0.96);
  return img;
}

void write_set(const fs::path& dir, const std::string& prefix, uint64_t first_index, int count,
               int H, int W) {
  fs::create_directories(dir);
  for (int i = 0; i < count; ++i) {
    char name[64];
    std::snprintf(name, sizeof(name), "%s_%03d.ppm", prefix.c_str(), i);
    save_ppm((dir / name).string(), procedural_image(first_index + static_cast<uint64_t>(i), H, W));
  }
}

std::vector<Image> load_set(const fs::path& dir) {
  std::vector<fs::path> files;
  for (const auto& e : fs::directory_iterator(dir)) {
    if (e.path().extension() == ".ppm") files.push_back(e.path());
  }
  std::sort(files.begin(), files.end());
  std::vector<Image> out;
  for (const auto& f : files) out.push_back(load_image(f.string()));
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Generate the deterministic fixture corpus"};
  std::string out_dir = "fixtures";
  bool golden = false;
  app.add_option("--out", out_dir, "Fixture root directory");
  app.add_flag("--golden", golden, "Also freeze golden reference values");
  CLI11_PARSE(app, argc, argv);

  const fs::path root(out_dir);
  const int H = 48, W = 48;

  write_set(root / "images" / "calib", "calib", 0, 32, H, W);
  write_set(root / "images" / "trainA", "trainA", 100, 6, H, W);
  write_set(root / "images" / "trainB", "trainB", 200, 6, H, W);
  write_set(root / "images" / "trainC", "trainC", 300, 6, H, W);
  write_set(root / "images" / "test", "test", 400, 32, H, W);
  fs::create_directories(root / "images" / "reference");
  save_ppm((root / "images" / "reference" / "reference.ppm").string(),
           procedural_image(999, H, W));

  // frame-sequence fixture (two clips, one at a different resolution)
  write_set(root / "frames" / "seq" / "clipA", "frame", 500, 4, H, W);
  write_set(root / "frames" / "seq" / "clipB", "frame", 520, 4, 32, 64);

  fs::create_directories(root / "weights");
  save_weights((root / "weights" / "tiny-cnn-nr").string(),
               init_metric_weights("tiny-cnn-nr", 7001));
  save_weights((root / "weights" / "patch-weighted").string(),
               init_metric_weights("patch-weighted", 7002));
  std::fprintf(stderr, "fixtures written under %s\n", root.string().c_str());

  if (golden) {
    auto tiny = build_metric("tiny-cnn-nr", (root / "weights" / "tiny-cnn-nr").string());
    auto patch = build_metric("patch-weighted", (root / "weights" / "patch-weighted").string());
    auto natural = build_metric("naturalness-lite", "");
    const Image ref = load_image((root / "images" / "reference" / "reference.ppm").string());
    const auto calib = load_set(root / "images" / "calib");

    json g;
    g["tiny_cnn_reference_score"] = tiny->score(ref);
    g["patch_weighted_reference_score"] = patch->score(ref);
    g["naturalness_reference_score"] = natural->score(ref);
    g["amifgsm_reference_eps"] = 1.0 / natural->score(ref);
    RangeBounds tiny_r = calibrate_range(*tiny, calib);
    RangeBounds patch_r = calibrate_range(*patch, calib);
    RangeBounds nat_r = calibrate_range(*natural, calib);
    g["tiny_cnn_calib"] = {tiny_r.min, tiny_r.max};
    g["patch_weighted_calib"] = {patch_r.min, patch_r.max};
    g["naturalness_calib"] = {nat_r.min, nat_r.max};
    g["calib_count"] = calib.size();
    fs::create_directories(root / "golden");
    write_file_bytes((root / "golden" / "golden_values.json").string(), g.dump(2) + "\n");
    std::fprintf(stderr, "golden values frozen\n");
  }
  return 0;
}
