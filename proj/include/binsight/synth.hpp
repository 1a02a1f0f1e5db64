#pragma once

// Synthetic bin scenes. Workpieces are stacked on a height field instead of
// being simulated rigid bodies: each new instance rests on the highest point
// under its footprint, rotated about the vertical axis only. A top-down
// orthographic sensor then samples one point per pixel.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"

#include "binsight/geometry.hpp"

namespace binsight {

struct Manifest;

enum class WallProfile { Solid, Lattice };

struct WallDamage {
  int wall_index = 0;  // 0: y-min, 1: x-max, 2: y-max, 3: x-min
  double notch_depth_mm = 40.0;
  double notch_width_mm = 80.0;
};

struct BinSpec {
  std::string name;
  double inner_x_mm = 700.0;
  double inner_y_mm = 900.0;
  double inner_z_mm = 600.0;
  double wall_thickness_mm = 15.0;
  WallProfile wall_profile = WallProfile::Solid;
  std::optional<WallDamage> damage;

  double outer_x_mm() const noexcept { return inner_x_mm + 2.0 * wall_thickness_mm; }
  double outer_y_mm() const noexcept { return inner_y_mm + 2.0 * wall_thickness_mm; }
  void validate() const;
};

enum class WorkpieceShape { FlatPlate, Disc, Ring, Cylinder, GearShaftProfile };

/// dims_mm by shape:
///   FlatPlate        {length, width, thickness}
///   Disc             {radius, thickness}
///   Ring             {outer_radius, inner_radius, thickness}
///   Cylinder         {radius, length}, lying on its side
///   GearShaftProfile {length, r_0, ..., r_n}, equal-length sections lying on their side
struct WorkpieceSpec {
  std::string name;
  WorkpieceShape shape = WorkpieceShape::FlatPlate;
  std::vector<double> dims_mm;
  bool flat = true;

  void validate() const;
  /// Local half extents (along length, across).
  std::pair<double, double> half_extents() const;
  /// Height of the top surface above the resting plane at local (u, v), or
  /// nullopt outside the footprint.
  std::optional<double> thickness_at(double u, double v) const;
  /// Smallest top-surface height anywhere on the footprint (0 for round
  /// profiles, which thin out towards their silhouette).
  double min_thickness() const;
};

struct SceneConfig {
  BinSpec bin;
  WorkpieceSpec workpiece;
  int count_min = 30;
  int count_max = 130;
  double camera_height_mm = 2400.0;
  int image_size = 512;
  double noise_sigma_mm = 1.0;
  double dropout_prob = 0.02;
  std::uint64_t seed = 0;

  void validate() const;
};

inline constexpr std::int32_t kOwnerFloor = -1;
inline constexpr std::int32_t kOwnerWall = -2;

struct PlacedInstance {
  double x_mm = 0.0;
  double y_mm = 0.0;
  double z_mm = 0.0;  // resting plane
  double yaw_rad = 0.0;
};

struct Scene {
  SceneConfig config;
  std::vector<PlacedInstance> instances;
  int size = 0;  // pixels per side
  double pixel_x_mm = 1.0;
  double pixel_y_mm = 1.0;
  std::vector<float> height_field;     // size * size, row-major
  std::vector<std::int32_t> ownership;  // kOwnerFloor, kOwnerWall or instance index

  std::size_t index(int x, int y) const noexcept {
    return static_cast<std::size_t>(y) * size + x;
  }
  double world_x(int px) const noexcept { return (px + 0.5) * pixel_x_mm; }
  double world_y(int py) const noexcept { return (py + 0.5) * pixel_y_mm; }
};

/// Throws WorkpieceDoesNotFit when no yaw lets the footprint inside the bin.
Scene generate_scene(const SceneConfig& config);

/// One point per pixel at the pixel centre, label kWorkpiece iff the pixel is
/// owned by an instance, then z-noise and dropout. noise_seed defaults to a
/// stream derived from the scene seed. source_pixels, when given, receives the
/// raster index each point was sampled from.
PointCloud render_point_cloud(const Scene& scene,
                              std::optional<std::uint64_t> noise_seed = std::nullopt,
                              std::vector<std::uint32_t>* source_pixels = nullptr);

/// `scans` renders of the empty bin of `config`, each with its own noise.
std::vector<PointCloud> render_empty_scans(const SceneConfig& config, int scans);

std::span<const BinSpec> bin_presets();          // five bins
std::span<const BinSpec> damaged_bin_presets();  // two damaged variants
std::span<const WorkpieceSpec> workpiece_presets();  // twelve, ten flat
const BinSpec& find_bin_preset(const std::string& name);
const WorkpieceSpec& find_workpiece_preset(const std::string& name);

nlohmann::json to_json(const SceneConfig& config);
SceneConfig scene_config_from_json(const nlohmann::json& j);

struct DatasetOptions {
  double resolution_mm = 2.0;
  std::string id_prefix = "scene_";
};

/// Writes n_scenes labeled clouds, projected depth maps with masks and mask
/// PNGs into out_dir, plus manifest.json recording each scene's config and
/// seed. Scene i uses configs[i % configs.size()] with a seed derived from
/// that config's seed and i. Scenes are generated in parallel.
Manifest generate_dataset(std::span<const SceneConfig> configs, int n_scenes,
                          const std::filesystem::path& out_dir,
                          const DatasetOptions& options = {});

}  // namespace binsight
