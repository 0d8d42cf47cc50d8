// SPDX-License-Identifier: Apache-2.0
#include "lags/gs_utility.hpp"

#include <png.h>

#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <memory>

#include "lags/error.hpp"
#include "lags/parallel.hpp"
#include "lags/rng.hpp"

namespace lags {

Image::Image(int w, int h, int c, double fill)
    : width(w), height(h), channels(c), pixels(static_cast<std::size_t>(w) * h * c, fill) {}

void Image::validate() const {
  if (width <= 0 || height <= 0) throw DomainError("image dimensions must be positive");
  if (channels != 1 && channels != 3) throw DomainError("images must have 1 or 3 channels");
  if (pixels.size() != static_cast<std::size_t>(width) * height * channels) {
    throw DomainError("image pixel buffer does not match its dimensions");
  }
  for (double v : pixels) {
    if (!(v >= 0.0 && v <= 1.0)) throw DomainError("pixel values must lie in [0, 1]");
  }
}

namespace {

struct FileCloser {
  void operator()(std::FILE* f) const { std::fclose(f); }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

// libpng reports errors by longjmp; keep everything non-trivial outside this frame.
bool read_png_rows(std::FILE* fp, png_structp png, png_infop info) {
  if (setjmp(png_jmpbuf(png))) return false;
  png_init_io(png, fp);
  png_read_png(png, info, PNG_TRANSFORM_EXPAND | PNG_TRANSFORM_STRIP_ALPHA, nullptr);
  return true;
}

bool write_png_rows(std::FILE* fp, png_structp png, png_infop info, png_uint_32 w, png_uint_32 h, int depth,
                    int color, png_bytepp rows) {
  if (setjmp(png_jmpbuf(png))) return false;
  png_init_io(png, fp);
  png_set_IHDR(png, info, w, h, depth, color, PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT,
               PNG_FILTER_TYPE_DEFAULT);
  png_set_rows(png, info, rows);
  png_write_png(png, info, PNG_TRANSFORM_IDENTITY, nullptr);
  return true;
}

}  // namespace

Image read_png(const std::filesystem::path& path) {
  FilePtr fp(std::fopen(path.string().c_str(), "rb"));
  if (!fp) throw IoError("cannot open image '" + path.string() + "'");
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw IoError("libpng initialisation failed for '" + path.string() + "'");
  }
  if (!read_png_rows(fp.get(), png, info)) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw IoError("'" + path.string() + "' is not a readable PNG file");
  }
  const int w = static_cast<int>(png_get_image_width(png, info));
  const int h = static_cast<int>(png_get_image_height(png, info));
  const int depth = png_get_bit_depth(png, info);
  const int color = png_get_color_type(png, info);
  const int channels = (color & PNG_COLOR_MASK_COLOR) ? 3 : 1;
  png_bytepp rows = png_get_rows(png, info);
  Image img(w, h, channels);
  const double scale = depth == 16 ? 65535.0 : 255.0;
  for (int y = 0; y < h; ++y) {
    const png_bytep row = rows[y];
    for (int x = 0; x < w; ++x) {
      for (int c = 0; c < channels; ++c) {
        const std::size_t idx = static_cast<std::size_t>(x) * channels + c;
        const double v = depth == 16 ? static_cast<double>((row[2 * idx] << 8) | row[2 * idx + 1])
                                     : static_cast<double>(row[idx]);
        img.at(x, y, c) = v / scale;
      }
    }
  }
  png_destroy_read_struct(&png, &info, nullptr);
  return img;
}

void write_png(const Image& img, const std::filesystem::path& path, int bit_depth) {
  img.validate();
  if (bit_depth != 8 && bit_depth != 16) throw DomainError("PNG bit depth must be 8 or 16");
  const int bytes = bit_depth / 8;
  const double scale = bit_depth == 16 ? 65535.0 : 255.0;
  std::vector<std::vector<png_byte>> data(img.height,
                                          std::vector<png_byte>(static_cast<std::size_t>(img.width) * img.channels * bytes));
  std::vector<png_bytep> rows(img.height);
  for (int y = 0; y < img.height; ++y) {
    for (int x = 0; x < img.width; ++x) {
      for (int c = 0; c < img.channels; ++c) {
        const auto v = static_cast<unsigned>(std::lround(img.at(x, y, c) * scale));
        const std::size_t idx = (static_cast<std::size_t>(x) * img.channels + c) * bytes;
        if (bytes == 2) {
          data[y][idx] = static_cast<png_byte>(v >> 8);
          data[y][idx + 1] = static_cast<png_byte>(v & 0xff);
        } else {
          data[y][idx] = static_cast<png_byte>(v);
        }
      }
    }
    rows[y] = data[y].data();
  }
  FilePtr fp(std::fopen(path.string().c_str(), "wb"));
  if (!fp) throw IoError("cannot write image '" + path.string() + "'");
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  const bool ok = png && info &&
                  write_png_rows(fp.get(), png, info, img.width, img.height, bit_depth,
                                 img.channels == 3 ? PNG_COLOR_TYPE_RGB : PNG_COLOR_TYPE_GRAY, rows.data());
  png_destroy_write_struct(&png, &info);
  if (!ok) throw IoError("failed writing PNG '" + path.string() + "'");
}

namespace {

std::vector<double> gaussian_kernel(int size) {
  std::vector<double> g(size);
  const double centre = (size - 1) / 2.0;
  double total = 0.0;
  for (int i = 0; i < size; ++i) {
    g[i] = std::exp(-(i - centre) * (i - centre) / (2.0 * kSsimSigma * kSsimSigma));
    total += g[i];
  }
  for (double& v : g) v /= total;
  return g;
}

// Separable "valid" filtering of a single plane.
std::vector<double> filter_valid(const std::vector<double>& plane, int w, int h, const std::vector<double>& g,
                                 int out_w, int out_h) {
  const int s = static_cast<int>(g.size());
  std::vector<double> tmp(static_cast<std::size_t>(h) * out_w);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < out_w; ++x) {
      double acc = 0.0;
      for (int i = 0; i < s; ++i) acc += g[i] * plane[static_cast<std::size_t>(y) * w + x + i];
      tmp[static_cast<std::size_t>(y) * out_w + x] = acc;
    }
  }
  std::vector<double> out(static_cast<std::size_t>(out_h) * out_w);
  for (int y = 0; y < out_h; ++y) {
    for (int x = 0; x < out_w; ++x) {
      double acc = 0.0;
      for (int i = 0; i < s; ++i) acc += g[i] * tmp[static_cast<std::size_t>(y + i) * out_w + x];
      out[static_cast<std::size_t>(y) * out_w + x] = acc;
    }
  }
  return out;
}

void require_same_shape(const Image& a, const Image& b) {
  if (!a.same_shape(b)) {
    throw DomainError("image shapes differ: " + std::to_string(a.width) + "x" + std::to_string(a.height) + "x" +
                      std::to_string(a.channels) + " vs " + std::to_string(b.width) + "x" +
                      std::to_string(b.height) + "x" + std::to_string(b.channels));
  }
}

}  // namespace

double ssim(const Image& a, const Image& b) {
  require_same_shape(a, b);
  const int s = std::min({kSsimWindow, a.width, a.height});
  const auto g = gaussian_kernel(s);
  const int out_w = a.width - s + 1;
  const int out_h = a.height - s + 1;
  const double c1 = kSsimK1 * kSsimK1;
  const double c2 = kSsimK2 * kSsimK2;
  const std::size_t n = static_cast<std::size_t>(a.width) * a.height;
  double total = 0.0;
  for (int c = 0; c < a.channels; ++c) {
    std::vector<double> pa(n), pb(n), aa(n), bb(n), ab(n);
    for (std::size_t i = 0; i < n; ++i) {
      pa[i] = a.pixels[i * a.channels + c];
      pb[i] = b.pixels[i * b.channels + c];
      aa[i] = pa[i] * pa[i];
      bb[i] = pb[i] * pb[i];
      ab[i] = pa[i] * pb[i];
    }
    const auto mu_a = filter_valid(pa, a.width, a.height, g, out_w, out_h);
    const auto mu_b = filter_valid(pb, a.width, a.height, g, out_w, out_h);
    const auto e_aa = filter_valid(aa, a.width, a.height, g, out_w, out_h);
    const auto e_bb = filter_valid(bb, a.width, a.height, g, out_w, out_h);
    const auto e_ab = filter_valid(ab, a.width, a.height, g, out_w, out_h);
    double acc = 0.0;
    for (std::size_t i = 0; i < mu_a.size(); ++i) {
      const double ma = mu_a[i];
      const double mb = mu_b[i];
      const double var_a = e_aa[i] - ma * ma;
      const double var_b = e_bb[i] - mb * mb;
      const double cov = e_ab[i] - ma * mb;
      acc += ((2.0 * ma * mb + c1) * (2.0 * cov + c2)) / ((ma * ma + mb * mb + c1) * (var_a + var_b + c2));
    }
    total += acc / static_cast<double>(mu_a.size());
  }
  return total / a.channels;
}

double mean_abs_error(const Image& a, const Image& b) {
  require_same_shape(a, b);
  double acc = 0.0;
  for (std::size_t i = 0; i < a.pixels.size(); ++i) acc += std::abs(a.pixels[i] - b.pixels[i]);
  return acc / static_cast<double>(a.pixels.size());
}

double gs_loss(const Image& rendered, const Image& truth, double lambda) {
  if (!(lambda >= 0.0 && lambda <= 1.0)) throw DomainError("gs_loss weight must lie in [0, 1]");
  require_same_shape(rendered, truth);
  const double l1 = lambda < 1.0 ? mean_abs_error(rendered, truth) : 0.0;
  const double structural = lambda > 0.0 ? 1.0 - ssim(rendered, truth) : 0.0;
  return (1.0 - lambda) * l1 + lambda * structural;
}

void GroupManifest::validate() const {
  for (std::size_t k = 0; k < drones.size(); ++k) {
    if (drones[k].empty()) throw DataError("manifest drone " + std::to_string(k) + " has no groups");
    for (std::size_t i = 0; i < drones[k].size(); ++i) {
      const auto& g = drones[k][i];
      const std::string where = "manifest group (" + std::to_string(k) + "," + std::to_string(i) + ")";
      if (g.pairs.empty()) throw DataError(where + " has no image pairs");
      if (!(g.volume_bits > 0.0)) throw DataError(where + " needs volume_bits > 0");
    }
  }
  if (drones.empty()) throw DataError("manifest lists no drones");
}

namespace {

CameraPose pose_from_json(const nlohmann::json& j) {
  CameraPose p;
  for (int d = 0; d < 3; ++d) {
    p.position[d] = j.at("position").at(d).get<double>();
    p.direction[d] = j.at("direction").at(d).get<double>();
  }
  return p;
}

}  // namespace

GroupManifest manifest_from_json(const nlohmann::json& j, std::filesystem::path base_dir) {
  GroupManifest m;
  m.base_dir = std::move(base_dir);
  try {
    if (j.at("schema_version").get<int>() != 1) throw DataError("unsupported manifest schema_version");
    for (const auto& drone : j.at("drones")) {
      std::vector<ManifestGroup> groups;
      for (const auto& group : drone.at("groups")) {
        ManifestGroup g;
        g.volume_bits = group.at("volume_bits").get<double>();
        for (const auto& pair : group.at("pairs")) {
          ImagePair ip{pair.at("truth").get<std::string>(), pair.at("rendered").get<std::string>(), std::nullopt};
          if (pair.contains("pose")) ip.pose = pose_from_json(pair.at("pose"));
          g.pairs.push_back(std::move(ip));
        }
        groups.push_back(std::move(g));
      }
      m.drones.push_back(std::move(groups));
    }
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("malformed group manifest: ") + e.what());
  }
  m.validate();
  return m;
}

GroupManifest load_manifest(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read manifest '" + path.string() + "'");
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw DataError("'" + path.string() + "': " + e.what());
  }
  return manifest_from_json(j, path.parent_path());
}

nlohmann::json to_json(const GroupManifest& m) {
  nlohmann::json drones = nlohmann::json::array();
  for (const auto& drone : m.drones) {
    nlohmann::json groups = nlohmann::json::array();
    for (const auto& g : drone) {
      nlohmann::json pairs = nlohmann::json::array();
      for (const auto& p : g.pairs) {
        nlohmann::json pj = {{"truth", p.truth}, {"rendered", p.rendered}};
        if (p.pose) pj["pose"] = {{"position", p.pose->position}, {"direction", p.pose->direction}};
        pairs.push_back(std::move(pj));
      }
      groups.push_back({{"volume_bits", g.volume_bits}, {"pairs", std::move(pairs)}});
    }
    drones.push_back({{"groups", std::move(groups)}});
  }
  return {{"schema_version", 1}, {"drones", std::move(drones)}};
}

namespace {

std::filesystem::path resolve(const std::filesystem::path& base, const std::string& p) {
  const std::filesystem::path path(p);
  return path.is_absolute() ? path : base / path;
}

double pair_loss(const ImagePair& pair, const std::filesystem::path& base_dir, double lambda) {
  const Image truth = read_png(resolve(base_dir, pair.truth));
  const Image rendered = read_png(resolve(base_dir, pair.rendered));
  if (!truth.same_shape(rendered)) {
    throw DataError("image pair '" + pair.truth + "' / '" + pair.rendered + "' differ in shape");
  }
  return gs_loss(rendered, truth, lambda);
}

}  // namespace

double group_utility(const ManifestGroup& group, const std::filesystem::path& base_dir, const UtilityOptions& opts) {
  if (group.pairs.empty()) throw DataError("group has no image pairs");
  std::vector<double> losses(group.pairs.size());
  parallel_for(group.pairs.size(), opts.jobs,
               [&](std::size_t n) { losses[n] = pair_loss(group.pairs[n], base_dir, opts.lambda); });
  double total = 0.0;
  for (double l : losses) total += l;
  return opts.normalize_by_count ? total / static_cast<double>(losses.size()) : total;
}

UtilityFragment score_manifest(const GroupManifest& manifest, const UtilityOptions& opts) {
  manifest.validate();
  struct Job {
    std::size_t drone, group, pair;
  };
  std::vector<Job> jobs;
  UtilityFragment frag;
  std::vector<std::vector<std::vector<double>>> losses(manifest.drones.size());
  for (std::size_t k = 0; k < manifest.drones.size(); ++k) {
    frag.utilities.emplace_back(manifest.drones[k].size(), 0.0);
    frag.volumes.emplace_back();
    losses[k].resize(manifest.drones[k].size());
    for (std::size_t i = 0; i < manifest.drones[k].size(); ++i) {
      frag.volumes[k].push_back(manifest.drones[k][i].volume_bits);
      losses[k][i].resize(manifest.drones[k][i].pairs.size());
      for (std::size_t l = 0; l < manifest.drones[k][i].pairs.size(); ++l) jobs.push_back({k, i, l});
    }
  }
  parallel_for(jobs.size(), opts.jobs, [&](std::size_t n) {
    const auto& j = jobs[n];
    losses[j.drone][j.group][j.pair] =
        pair_loss(manifest.drones[j.drone][j.group].pairs[j.pair], manifest.base_dir, opts.lambda);
  });
  for (std::size_t k = 0; k < losses.size(); ++k) {
    for (std::size_t i = 0; i < losses[k].size(); ++i) {
      double total = 0.0;
      for (double l : losses[k][i]) total += l;
      frag.utilities[k][i] = opts.normalize_by_count ? total / static_cast<double>(losses[k][i].size()) : total;
    }
  }
  return frag;
}

std::vector<int> cluster_viewpoints(const std::vector<CameraPose>& poses, int groups, std::uint64_t seed) {
  const int n = static_cast<int>(poses.size());
  if (groups < 1) throw DomainError("need at least one viewpoint group");
  if (n < groups) {
    throw DomainError("cannot split " + std::to_string(n) + " poses into " + std::to_string(groups) + " groups");
  }
  std::array<double, 3> lo{}, hi{};
  lo.fill(std::numeric_limits<double>::infinity());
  hi.fill(-std::numeric_limits<double>::infinity());
  for (const auto& p : poses) {
    for (int d = 0; d < 3; ++d) {
      lo[d] = std::min(lo[d], p.position[d]);
      hi[d] = std::max(hi[d], p.position[d]);
    }
  }
  double diag = 0.0;
  for (int d = 0; d < 3; ++d) diag += (hi[d] - lo[d]) * (hi[d] - lo[d]);
  diag = std::sqrt(diag);
  if (!(diag > 0.0)) diag = 1.0;

  using Feature = std::array<double, 6>;
  std::vector<Feature> feats(n);
  for (int i = 0; i < n; ++i) {
    const auto& p = poses[i];
    const double dn = std::sqrt(p.direction[0] * p.direction[0] + p.direction[1] * p.direction[1] +
                                p.direction[2] * p.direction[2]);
    if (!(dn > 0.0)) throw DomainError("camera pose " + std::to_string(i) + " has a zero view direction");
    for (int d = 0; d < 3; ++d) {
      feats[i][d] = p.position[d] / diag;
      feats[i][3 + d] = p.direction[d] / dn;
    }
  }
  auto dist2 = [](const Feature& a, const Feature& b) {
    double s = 0.0;
    for (int d = 0; d < 6; ++d) s += (a[d] - b[d]) * (a[d] - b[d]);
    return s;
  };

  // k-means++ seeding.
  Rng rng(seed);
  std::vector<Feature> centres;
  centres.push_back(feats[rng.below(static_cast<std::uint64_t>(n))]);
  std::vector<double> best(n, std::numeric_limits<double>::infinity());
  while (static_cast<int>(centres.size()) < groups) {
    double total = 0.0;
    for (int i = 0; i < n; ++i) {
      best[i] = std::min(best[i], dist2(feats[i], centres.back()));
      total += best[i];
    }
    int pick = 0;
    if (total > 0.0) {
      double r = rng.uniform(0.0, total);
      for (pick = 0; pick < n - 1; ++pick) {
        r -= best[pick];
        if (r < 0.0) break;
      }
    } else {
      pick = static_cast<int>(centres.size());  // all points coincide
    }
    centres.push_back(feats[pick]);
  }

  std::vector<int> label(n, -1);
  for (int iter = 0; iter < 300; ++iter) {
    bool changed = false;
    for (int i = 0; i < n; ++i) {
      int arg = 0;
      double bd = dist2(feats[i], centres[0]);
      for (int c = 1; c < groups; ++c) {
        const double d = dist2(feats[i], centres[c]);
        if (d < bd) {
          bd = d;
          arg = c;
        }
      }
      if (label[i] != arg) {
        label[i] = arg;
        changed = true;
      }
    }
    // Refill empty clusters with the point farthest from its centre.
    std::vector<int> count(groups, 0);
    for (int l : label) ++count[l];
    for (int c = 0; c < groups; ++c) {
      if (count[c] > 0) continue;
      int far = -1;
      double fd = -1.0;
      for (int i = 0; i < n; ++i) {
        if (count[label[i]] <= 1) continue;
        const double d = dist2(feats[i], centres[label[i]]);
        if (d > fd) {
          fd = d;
          far = i;
        }
      }
      --count[label[far]];
      label[far] = c;
      ++count[c];
      changed = true;
    }
    for (int c = 0; c < groups; ++c) {
      Feature mean{};
      for (int i = 0; i < n; ++i) {
        if (label[i] != c) continue;
        for (int d = 0; d < 6; ++d) mean[d] += feats[i][d];
      }
      for (int d = 0; d < 6; ++d) mean[d] /= count[c];
      centres[c] = mean;
    }
    if (!changed) break;
  }
  return label;
}

}  // namespace lags
