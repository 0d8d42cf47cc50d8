// SPDX-License-Identifier: Apache-2.0
#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <numeric>

#include "doctest.h"
#include "lags/error.hpp"
#include "lags/gs_utility.hpp"
#include "lags/rng.hpp"

using namespace lags;
namespace fs = std::filesystem;

namespace {

Image random_image(int w, int h, int c, Rng& rng) {
  Image img(w, h, c);
  for (double& v : img.pixels) v = rng.uniform();
  return img;
}

// Direct 2-D windowed SSIM with an explicitly built Gaussian window.
double naive_ssim(const Image& a, const Image& b) {
  const int s = 11;
  double win[11][11];
  double total = 0.0;
  for (int i = 0; i < s; ++i) {
    for (int j = 0; j < s; ++j) {
      win[i][j] = std::exp(-((i - 5.0) * (i - 5.0) + (j - 5.0) * (j - 5.0)) / (2.0 * 1.5 * 1.5));
      total += win[i][j];
    }
  }
  const double c1 = 0.01 * 0.01, c2 = 0.03 * 0.03;
  double sum = 0.0;
  for (int c = 0; c < a.channels; ++c) {
    double acc = 0.0;
    int count = 0;
    for (int y = 0; y + s <= a.height; ++y) {
      for (int x = 0; x + s <= a.width; ++x) {
        double ma = 0, mb = 0, saa = 0, sbb = 0, sab = 0;
        for (int i = 0; i < s; ++i) {
          for (int j = 0; j < s; ++j) {
            const double w = win[i][j] / total;
            const double va = a.at(x + j, y + i, c), vb = b.at(x + j, y + i, c);
            ma += w * va;
            mb += w * vb;
            saa += w * va * va;
            sbb += w * vb * vb;
            sab += w * va * vb;
          }
        }
        const double var_a = saa - ma * ma, var_b = sbb - mb * mb, cov = sab - ma * mb;
        acc += (2 * ma * mb + c1) * (2 * cov + c2) / ((ma * ma + mb * mb + c1) * (var_a + var_b + c2));
        ++count;
      }
    }
    sum += acc / count;
  }
  return sum / a.channels;
}

fs::path scratch_dir(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / ("lags_gs_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

}  // namespace

TEST_CASE("identical images: ssim is one and the loss is zero") {
  Rng rng(1);
  for (int i = 0; i < 10; ++i) {
    const Image v = random_image(12 + i, 20 - i, i % 2 ? 3 : 1, rng);
    CHECK(std::abs(ssim(v, v) - 1.0) <= 1e-12);
    CHECK(std::abs(gs_loss(v, v)) <= 1e-12);
  }
}

TEST_CASE("ssim matches a direct windowed evaluation") {
  Rng rng(2);
  const Image a = random_image(17, 14, 3, rng);
  Image b = a;
  for (double& v : b.pixels) v = std::clamp(v + 0.2 * (rng.uniform() - 0.5), 0.0, 1.0);
  CHECK(ssim(a, b) == doctest::Approx(naive_ssim(a, b)).epsilon(1e-12));
  CHECK(ssim(a, b) < 1.0);
}

TEST_CASE("constant images give the closed-form mixture") {
  for (double ca : {0.0, 0.3, 0.9}) {
    for (double cb : {0.1, 0.5}) {
      const Image a(16, 16, 1, ca), b(16, 16, 1, cb);
      const double c1 = 1e-4;
      const double s = (2 * ca * cb + c1) / (ca * ca + cb * cb + c1);
      CHECK(ssim(a, b) == doctest::Approx(s).epsilon(1e-12));
      CHECK(gs_loss(a, b) == doctest::Approx(0.8 * std::abs(ca - cb) + 0.2 * (1 - s)).epsilon(1e-12));
      CHECK(gs_loss(a, b, 0.0) == doctest::Approx(std::abs(ca - cb)).epsilon(1e-12));
      CHECK(gs_loss(a, b, 1.0) == doctest::Approx(1 - s).epsilon(1e-12));
    }
  }
}

TEST_CASE("images smaller than the window use a clipped window") {
  Rng rng(3);
  const Image a = random_image(6, 9, 1, rng);
  const Image b = random_image(6, 9, 1, rng);
  const double s = ssim(a, b);
  CHECK(std::isfinite(s));
  CHECK(s <= 1.0);
  CHECK(std::abs(ssim(a, a) - 1.0) < 1e-12);
}

TEST_CASE("shape mismatch and bad weights are domain errors") {
  const Image a(8, 8, 1), b(8, 9, 1);
  CHECK_THROWS_AS(ssim(a, b), DomainError);
  CHECK_THROWS_AS(gs_loss(a, a, 1.5), DomainError);
}

TEST_CASE("PNG round trip preserves quantised values") {
  Rng rng(4);
  const auto dir = scratch_dir("png");
  Image img = random_image(7, 5, 3, rng);
  for (double& v : img.pixels) v = std::round(v * 255.0) / 255.0;
  write_png(img, dir / "a.png", 8);
  const Image back = read_png(dir / "a.png");
  REQUIRE(back.same_shape(img));
  for (std::size_t i = 0; i < img.pixels.size(); ++i) CHECK(back.pixels[i] == doctest::Approx(img.pixels[i]));

  Image gray = random_image(4, 4, 1, rng);
  write_png(gray, dir / "g.png", 16);
  const Image g16 = read_png(dir / "g.png");
  for (std::size_t i = 0; i < gray.pixels.size(); ++i) CHECK(std::abs(g16.pixels[i] - gray.pixels[i]) <= 0.5 / 65535);

  CHECK_THROWS_AS(read_png(dir / "missing.png"), IoError);
  std::ofstream(dir / "bad.png") << "not a png";
  CHECK_THROWS_AS(read_png(dir / "bad.png"), IoError);
  fs::remove_all(dir);
}

TEST_CASE("manifest scoring sums per-pair losses") {
  Rng rng(5);
  const auto dir = scratch_dir("manifest");
  const Image t0 = random_image(12, 12, 1, rng), r0 = random_image(12, 12, 1, rng);
  const Image t1 = random_image(12, 12, 1, rng);
  auto q = [](Image im) {
    for (double& v : im.pixels) v = std::round(v * 255.0) / 255.0;
    return im;
  };
  write_png(t0, dir / "t0.png");
  write_png(r0, dir / "r0.png");
  write_png(t1, dir / "t1.png");
  const nlohmann::json j = {
      {"schema_version", 1},
      {"drones",
       {{{"groups",
          {{{"volume_bits", 8e6}, {"pairs", {{{"truth", "t0.png"}, {"rendered", "r0.png"}}, {{"truth", "t1.png"}, {"rendered", "t1.png"}}}}},
           {{"volume_bits", 4e6}, {"pairs", {{{"truth", "t1.png"}, {"rendered", "t1.png"}}}}}}}}}}};
  std::ofstream(dir / "manifest.json") << j.dump();
  const auto m = load_manifest(dir / "manifest.json");
  UtilityOptions opts;
  opts.jobs = 2;
  const auto frag = score_manifest(m, opts);
  REQUIRE(frag.utilities.size() == 1);
  CHECK(frag.utilities[0][0] == doctest::Approx(gs_loss(q(r0), q(t0))).epsilon(1e-12));
  CHECK(frag.utilities[0][1] == 0.0);
  CHECK(frag.volumes[0] == std::vector<double>{8e6, 4e6});
  CHECK(group_utility(m.drones[0][0], m.base_dir) == doctest::Approx(frag.utilities[0][0]));
  opts.normalize_by_count = true;
  CHECK(group_utility(m.drones[0][0], m.base_dir, opts) == doctest::Approx(frag.utilities[0][0] / 2));

  nlohmann::json broken = j;
  broken["drones"][0]["groups"][1]["pairs"][0]["truth"] = "nowhere.png";
  std::ofstream(dir / "broken.json") << broken.dump();
  const auto mb = load_manifest(dir / "broken.json");
  try {
    score_manifest(mb);
    FAIL("expected an I/O error");
  } catch (const IoError& e) {
    CHECK(std::string(e.what()).find("nowhere.png") != std::string::npos);
  }
  fs::remove_all(dir);
}

TEST_CASE("viewpoint clustering finds the optimal split of separated clouds") {
  Rng rng(6);
  std::vector<CameraPose> poses;
  const double centres[3][3] = {{0, 0, 50}, {100, 0, 50}, {0, 100, 60}};
  for (int c = 0; c < 3; ++c) {
    for (int i = 0; i < 4; ++i) {
      CameraPose p;
      for (int d = 0; d < 3; ++d) p.position[d] = centres[c][d] + rng.uniform(-3, 3);
      p.direction = {0.0, 0.0, -1.0};
      poses.push_back(p);
    }
  }
  const auto labels = cluster_viewpoints(poses, 3, 7);
  // Brute-force oracle: the within-cluster scatter of the returned labelling
  // equals the minimum over all 3^12 labellings that use every cluster.
  auto scatter = [&](const std::vector<int>& lab) {
    double cost = 0.0;
    for (int c = 0; c < 3; ++c) {
      double mean[3] = {0, 0, 0};
      int n = 0;
      for (std::size_t i = 0; i < poses.size(); ++i) {
        if (lab[i] != c) continue;
        for (int d = 0; d < 3; ++d) mean[d] += poses[i].position[d];
        ++n;
      }
      if (n == 0) return std::numeric_limits<double>::infinity();
      for (double& v : mean) v /= n;
      for (std::size_t i = 0; i < poses.size(); ++i) {
        if (lab[i] != c) continue;
        for (int d = 0; d < 3; ++d) cost += (poses[i].position[d] - mean[d]) * (poses[i].position[d] - mean[d]);
      }
    }
    return cost;
  };
  double best = std::numeric_limits<double>::infinity();
  std::vector<int> lab(poses.size());
  int total = 1;
  for (std::size_t i = 0; i < poses.size(); ++i) total *= 3;
  for (int code = 0; code < total; ++code) {
    int r = code;
    for (auto& l : lab) {
      l = r % 3;
      r /= 3;
    }
    best = std::min(best, scatter(lab));
  }
  CHECK(scatter(labels) == doctest::Approx(best).epsilon(1e-12));
  CHECK(cluster_viewpoints(poses, 3, 7) == labels);
}

TEST_CASE("clustering uses every label and rejects impossible requests") {
  std::vector<CameraPose> same(5);
  const auto labels = cluster_viewpoints(same, 3, 1);
  for (int c = 0; c < 3; ++c) CHECK(std::count(labels.begin(), labels.end(), c) >= 1);
  CHECK_THROWS_AS(cluster_viewpoints(same, 6, 1), DomainError);
}
