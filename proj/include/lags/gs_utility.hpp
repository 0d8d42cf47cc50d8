// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "lags/instance_generator.hpp"

namespace lags {

/// Interleaved row-major image with values in [0, 1].
struct Image {
  int width = 0;
  int height = 0;
  int channels = 1;
  std::vector<double> pixels;

  Image() = default;
  Image(int w, int h, int c, double fill = 0.0);

  double& at(int x, int y, int c) { return pixels[(static_cast<std::size_t>(y) * width + x) * channels + c]; }
  double at(int x, int y, int c) const { return pixels[(static_cast<std::size_t>(y) * width + x) * channels + c]; }
  bool same_shape(const Image& o) const { return width == o.width && height == o.height && channels == o.channels; }
  void validate() const;
};

/// Reads an 8- or 16-bit grayscale/RGB PNG (palette expanded, alpha dropped).
Image read_png(const std::filesystem::path& path);
void write_png(const Image& img, const std::filesystem::path& path, int bit_depth = 8);

inline constexpr int kSsimWindow = 11;
inline constexpr double kSsimSigma = 1.5;
inline constexpr double kSsimK1 = 0.01;
inline constexpr double kSsimK2 = 0.03;
inline constexpr double kDefaultGsLambda = 0.2;

/// Mean SSIM over the valid placements of an 11x11 Gaussian window
/// (sigma 1.5), averaged over channels. Images smaller than the window use a
/// window clipped to the image.
double ssim(const Image& a, const Image& b);

double mean_abs_error(const Image& a, const Image& b);

/// (1 - lambda) * mean|rendered - truth| + lambda * (1 - ssim).
double gs_loss(const Image& rendered, const Image& truth, double lambda = kDefaultGsLambda);

struct CameraPose {
  std::array<double, 3> position{};
  std::array<double, 3> direction{0.0, 0.0, 1.0};
};

struct ImagePair {
  std::string truth;
  std::string rendered;
  std::optional<CameraPose> pose;
};

struct ManifestGroup {
  std::vector<ImagePair> pairs;
  double volume_bits = 0.0;
};

/// Per drone, per group image pairs. Relative paths resolve against `base_dir`.
struct GroupManifest {
  std::vector<std::vector<ManifestGroup>> drones;
  std::filesystem::path base_dir;

  void validate() const;
};

GroupManifest load_manifest(const std::filesystem::path& path);
GroupManifest manifest_from_json(const nlohmann::json& j, std::filesystem::path base_dir);
nlohmann::json to_json(const GroupManifest& m);

struct UtilityOptions {
  double lambda = kDefaultGsLambda;
  bool normalize_by_count = false;
  int jobs = 1;
};

/// Sum of gs_loss over the group's pairs (mean instead when normalize_by_count).
double group_utility(const ManifestGroup& group, const std::filesystem::path& base_dir,
                     const UtilityOptions& opts = {});

/// Scores every group of the manifest; pairs are scored on `opts.jobs` threads.
UtilityFragment score_manifest(const GroupManifest& manifest, const UtilityOptions& opts = {});

/// k-means (k-means++ seeding, single run) on [position / scene diagonal, unit direction].
/// Returns a label in [0, groups) per pose; every label is used.
std::vector<int> cluster_viewpoints(const std::vector<CameraPose>& poses, int groups, std::uint64_t seed);

}  // namespace lags
