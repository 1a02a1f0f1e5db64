#include "binsight/synth.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <exception>
#include <numbers>

#include "binsight/dataset.hpp"
#include "binsight/errors.hpp"
#include "binsight/rng.hpp"

namespace binsight {

namespace {

constexpr int kYawAttempts = 32;
constexpr double kLatticePitchMm = 120.0;
constexpr double kLatticePostMm = 25.0;
constexpr double kLatticeRailFraction = 0.75;

void require(bool ok, const std::string& what) {
  if (!ok) throw InvalidArgument(what);
}

const char* to_string(WallProfile p) { return p == WallProfile::Solid ? "solid" : "lattice"; }

const char* to_string(WorkpieceShape s) {
  switch (s) {
    case WorkpieceShape::FlatPlate: return "flat_plate";
    case WorkpieceShape::Disc: return "disc";
    case WorkpieceShape::Ring: return "ring";
    case WorkpieceShape::Cylinder: return "cylinder";
    case WorkpieceShape::GearShaftProfile: return "gear_shaft_profile";
  }
  return "?";
}

WorkpieceShape shape_from(const std::string& s) {
  if (s == "flat_plate") return WorkpieceShape::FlatPlate;
  if (s == "disc") return WorkpieceShape::Disc;
  if (s == "ring") return WorkpieceShape::Ring;
  if (s == "cylinder") return WorkpieceShape::Cylinder;
  if (s == "gear_shaft_profile") return WorkpieceShape::GearShaftProfile;
  throw InvalidArgument("unknown workpiece shape '" + s + "'");
}

// Wall top height at world (x, y); the point is known to lie on a wall.
double wall_top(const BinSpec& bin, double x, double y) {
  const double t = bin.wall_thickness_mm;
  const double ox = bin.outer_x_mm(), oy = bin.outer_y_mm();
  double top = bin.inner_z_mm;
  // Distance along the wall, for the lattice pattern.
  const bool x_wall = y < t || y > oy - t;  // walls running along x
  const double along = x_wall ? x : y;
  if (bin.wall_profile == WallProfile::Lattice &&
      std::fmod(along, kLatticePitchMm) >= kLatticePostMm) {
    top = bin.inner_z_mm * kLatticeRailFraction;
  }
  if (bin.damage) {
    const auto& d = *bin.damage;
    const bool on_wall = (d.wall_index == 0 && y < t) || (d.wall_index == 1 && x > ox - t) ||
                         (d.wall_index == 2 && y > oy - t) || (d.wall_index == 3 && x < t);
    const double centre = (d.wall_index % 2 == 0) ? ox / 2.0 : oy / 2.0;
    const double pos = (d.wall_index % 2 == 0) ? x : y;
    if (on_wall && std::abs(pos - centre) <= d.notch_width_mm / 2.0) {
      top = std::max(0.0, top - d.notch_depth_mm);
    }
  }
  return top;
}

}  // namespace

void BinSpec::validate() const {
  require(inner_x_mm > 0 && inner_y_mm > 0 && inner_z_mm > 0,
          "bin '" + name + "' needs positive inner dimensions");
  require(wall_thickness_mm > 0, "bin '" + name + "' needs a positive wall thickness");
  if (damage) {
    require(damage->wall_index >= 0 && damage->wall_index < 4,
            "bin damage wall index must be 0..3");
    require(damage->notch_depth_mm > 0 && damage->notch_width_mm > 0,
            "bin damage notch must have positive depth and width");
  }
}

void WorkpieceSpec::validate() const {
  auto need = [&](std::size_t n) {
    require(dims_mm.size() == n, "workpiece '" + name + "' (" + to_string(shape) + ") needs " +
                                     std::to_string(n) + " dimensions");
  };
  switch (shape) {
    case WorkpieceShape::FlatPlate: need(3); break;
    case WorkpieceShape::Disc: need(2); break;
    case WorkpieceShape::Ring:
      need(3);
      require(dims_mm[1] < dims_mm[0], "ring inner radius must be below the outer radius");
      break;
    case WorkpieceShape::Cylinder: need(2); break;
    case WorkpieceShape::GearShaftProfile:
      require(dims_mm.size() >= 2, "gear shaft needs a length and at least one radius");
      break;
  }
  for (double d : dims_mm) require(d > 0, "workpiece '" + name + "' has a non-positive dimension");
  if (flat) {
    const double thickness = dims_mm.back();
    require(shape != WorkpieceShape::Cylinder && shape != WorkpieceShape::GearShaftProfile,
            "workpiece '" + name + "': round profiles cannot be flat");
    require(thickness <= 15.0, "flat workpiece '" + name + "' must be at most 15 mm thick");
  }
}

std::pair<double, double> WorkpieceSpec::half_extents() const {
  switch (shape) {
    case WorkpieceShape::FlatPlate: return {dims_mm[0] / 2, dims_mm[1] / 2};
    case WorkpieceShape::Disc: return {dims_mm[0], dims_mm[0]};
    case WorkpieceShape::Ring: return {dims_mm[0], dims_mm[0]};
    case WorkpieceShape::Cylinder: return {dims_mm[1] / 2, dims_mm[0]};
    case WorkpieceShape::GearShaftProfile: {
      const double r = *std::max_element(dims_mm.begin() + 1, dims_mm.end());
      return {dims_mm[0] / 2, r};
    }
  }
  return {0, 0};
}

std::optional<double> WorkpieceSpec::thickness_at(double u, double v) const {
  switch (shape) {
    case WorkpieceShape::FlatPlate:
      if (std::abs(u) <= dims_mm[0] / 2 && std::abs(v) <= dims_mm[1] / 2) return dims_mm[2];
      return std::nullopt;
    case WorkpieceShape::Disc:
      if (u * u + v * v <= dims_mm[0] * dims_mm[0]) return dims_mm[1];
      return std::nullopt;
    case WorkpieceShape::Ring: {
      const double rr = u * u + v * v;
      if (rr <= dims_mm[0] * dims_mm[0] && rr >= dims_mm[1] * dims_mm[1]) return dims_mm[2];
      return std::nullopt;
    }
    case WorkpieceShape::Cylinder: {
      const double r = dims_mm[0];
      if (std::abs(u) > dims_mm[1] / 2 || std::abs(v) >= r) return std::nullopt;
      return 2.0 * std::sqrt(r * r - v * v);
    }
    case WorkpieceShape::GearShaftProfile: {
      const double len = dims_mm[0];
      if (std::abs(u) > len / 2) return std::nullopt;
      const std::size_t sections = dims_mm.size() - 1;
      const auto s = std::min(sections - 1, static_cast<std::size_t>((u + len / 2) / len * sections));
      const double r = dims_mm[1 + s];
      const double r_max = half_extents().second;
      if (std::abs(v) >= r) return std::nullopt;
      // Axis at the height of the thickest section, resting on the plane.
      return r_max + std::sqrt(r * r - v * v);
    }
  }
  return std::nullopt;
}

double WorkpieceSpec::min_thickness() const {
  switch (shape) {
    case WorkpieceShape::FlatPlate: return dims_mm[2];
    case WorkpieceShape::Disc: return dims_mm[1];
    case WorkpieceShape::Ring: return dims_mm[2];
    default: return 0.0;
  }
}

void SceneConfig::validate() const {
  bin.validate();
  workpiece.validate();
  require(count_min >= 0 && count_min <= count_max, "count range must satisfy 0 <= min <= max");
  require(image_size >= 1, "image size must be positive");
  require(noise_sigma_mm >= 0, "noise sigma must be non-negative");
  require(dropout_prob >= 0 && dropout_prob < 1, "dropout probability must lie in [0, 1)");
  require(camera_height_mm > bin.inner_z_mm, "camera must sit above the bin");
}

Scene generate_scene(const SceneConfig& config) {
  config.validate();
  const BinSpec& bin = config.bin;
  Scene scene;
  scene.config = config;
  scene.size = config.image_size;
  scene.pixel_x_mm = bin.outer_x_mm() / scene.size;
  scene.pixel_y_mm = bin.outer_y_mm() / scene.size;
  const std::size_t n = static_cast<std::size_t>(scene.size) * scene.size;
  scene.height_field.assign(n, 0.0f);
  scene.ownership.assign(n, kOwnerFloor);

  const double t = bin.wall_thickness_mm;
  const double x0 = t, x1 = t + bin.inner_x_mm, y0 = t, y1 = t + bin.inner_y_mm;
  for (int py = 0; py < scene.size; ++py) {
    for (int px = 0; px < scene.size; ++px) {
      const double x = scene.world_x(px), y = scene.world_y(py);
      if (x >= x0 && x <= x1 && y >= y0 && y <= y1) continue;
      const std::size_t i = scene.index(px, py);
      scene.height_field[i] = static_cast<float>(wall_top(bin, x, y));
      scene.ownership[i] = kOwnerWall;
    }
  }

  const auto [a, b] = config.workpiece.half_extents();
  const bool fits_0 = 2 * a <= bin.inner_x_mm && 2 * b <= bin.inner_y_mm;
  const bool fits_90 = 2 * b <= bin.inner_x_mm && 2 * a <= bin.inner_y_mm;
  if (config.count_max > 0 && !fits_0 && !fits_90) {
    throw WorkpieceDoesNotFit("workpiece '" + config.workpiece.name + "' (" +
                              std::to_string(2 * a) + " x " + std::to_string(2 * b) +
                              " mm) does not fit bin '" + bin.name + "'");
  }

  Rng rng(derive_seed(config.seed, 0));
  const auto count = static_cast<int>(rng.uniform_int(config.count_min, config.count_max));
  std::vector<std::pair<std::size_t, double>> footprint;
  for (int inst = 0; inst < count; ++inst) {
    double yaw = 0, hx = 0, hy = 0;
    bool placed = false;
    for (int attempt = 0; attempt < kYawAttempts && !placed; ++attempt) {
      yaw = attempt + 1 < kYawAttempts ? rng.uniform(0.0, 2.0 * std::numbers::pi)
                                       : (fits_0 ? 0.0 : std::numbers::pi / 2);
      const double c = std::abs(std::cos(yaw)), s = std::abs(std::sin(yaw));
      hx = c * a + s * b;
      hy = s * a + c * b;
      placed = 2 * hx <= bin.inner_x_mm && 2 * hy <= bin.inner_y_mm;
    }
    if (!placed) {
      // Exact 0 / 90 degree fits can fail by rounding in the AABB; nudge inward.
      hx = std::min(hx, bin.inner_x_mm / 2);
      hy = std::min(hy, bin.inner_y_mm / 2);
    }
    const double cx = rng.uniform(x0 + hx, x1 - hx);
    const double cy = rng.uniform(y0 + hy, y1 - hy);
    const double cos_y = std::cos(yaw), sin_y = std::sin(yaw);

    const int px0 = std::max(0, static_cast<int>(std::floor((cx - hx) / scene.pixel_x_mm)));
    const int px1 = std::min(scene.size - 1, static_cast<int>(std::floor((cx + hx) / scene.pixel_x_mm)));
    const int py0 = std::max(0, static_cast<int>(std::floor((cy - hy) / scene.pixel_y_mm)));
    const int py1 = std::min(scene.size - 1, static_cast<int>(std::floor((cy + hy) / scene.pixel_y_mm)));
    footprint.clear();
    float rest = 0.0f;
    for (int py = py0; py <= py1; ++py) {
      for (int px = px0; px <= px1; ++px) {
        const double dx = scene.world_x(px) - cx, dy = scene.world_y(py) - cy;
        const double u = cos_y * dx + sin_y * dy;
        const double v = -sin_y * dx + cos_y * dy;
        const auto th = config.workpiece.thickness_at(u, v);
        if (!th || *th <= 0) continue;
        const std::size_t i = scene.index(px, py);
        footprint.emplace_back(i, *th);
        rest = std::max(rest, scene.height_field[i]);
      }
    }
    scene.instances.push_back({cx, cy, rest, yaw});
    for (const auto& [i, th] : footprint) {
      const float top = static_cast<float>(rest + th);
      if (top > scene.height_field[i]) {
        scene.height_field[i] = top;
        scene.ownership[i] = inst;
      }
    }
  }
  return scene;
}

PointCloud render_point_cloud(const Scene& scene, std::optional<std::uint64_t> noise_seed,
                              std::vector<std::uint32_t>* source_pixels) {
  const SceneConfig& cfg = scene.config;
  Rng rng(noise_seed ? *noise_seed : derive_seed(cfg.seed, 1));
  PointCloud cloud;
  cloud.source_id = "synthetic:" + std::to_string(cfg.seed);
  const std::size_t n = static_cast<std::size_t>(scene.size) * scene.size;
  cloud.points.reserve(n);
  std::vector<std::uint8_t> labels;
  labels.reserve(n);
  if (source_pixels) {
    source_pixels->clear();
    source_pixels->reserve(n);
  }
  for (int py = 0; py < scene.size; ++py) {
    for (int px = 0; px < scene.size; ++px) {
      const std::size_t i = scene.index(px, py);
      // Both draws happen for every ray so noise does not depend on dropout.
      const bool dropped = rng.bernoulli(cfg.dropout_prob);
      const double noise = cfg.noise_sigma_mm * rng.normal();
      if (dropped) continue;
      cloud.points.push_back({static_cast<float>(scene.world_x(px)),
                              static_cast<float>(scene.world_y(py)),
                              static_cast<float>(scene.height_field[i] + noise)});
      labels.push_back(scene.ownership[i] >= 0 ? kWorkpiece : kNonWorkpiece);
      if (source_pixels) source_pixels->push_back(static_cast<std::uint32_t>(i));
    }
  }
  cloud.labels = std::move(labels);
  return cloud;
}

std::vector<PointCloud> render_empty_scans(const SceneConfig& config, int scans) {
  SceneConfig empty = config;
  empty.count_min = empty.count_max = 0;
  const Scene scene = generate_scene(empty);
  std::vector<PointCloud> out;
  for (int s = 0; s < scans; ++s) {
    out.push_back(render_point_cloud(scene, derive_seed(config.seed, 1000 + s)));
    out.back().labels.reset();
    out.back().source_id = "empty:" + config.bin.name + ":" + std::to_string(s);
  }
  return out;
}

std::span<const BinSpec> bin_presets() {
  static const std::array<BinSpec, 5> presets = {{
      {"small_solid", 700, 900, 600, 15, WallProfile::Solid, std::nullopt},
      {"medium_solid", 800, 1000, 700, 15, WallProfile::Solid, std::nullopt},
      {"lattice", 900, 1100, 750, 20, WallProfile::Lattice, std::nullopt},
      {"large_solid", 1000, 1200, 900, 20, WallProfile::Solid, std::nullopt},
      {"shallow_tub", 1000, 1200, 600, 12, WallProfile::Solid, std::nullopt},
  }};
  return presets;
}

std::span<const BinSpec> damaged_bin_presets() {
  static const std::array<BinSpec, 2> presets = {{
      {"small_solid_damaged", 700, 900, 600, 15, WallProfile::Solid, WallDamage{1, 40, 80}},
      {"lattice_damaged", 900, 1100, 750, 20, WallProfile::Lattice, WallDamage{2, 60, 120}},
  }};
  return presets;
}

std::span<const WorkpieceSpec> workpiece_presets() {
  using S = WorkpieceShape;
  static const std::array<WorkpieceSpec, 12> presets = {{
      {"plate_small", S::FlatPlate, {120, 80, 15}, true},
      {"plate_large", S::FlatPlate, {200, 150, 10}, true},
      {"plate_thin", S::FlatPlate, {160, 100, 4}, true},
      {"bracket", S::FlatPlate, {250, 60, 12}, true},
      {"disc_small", S::Disc, {50, 15}, true},
      {"disc_large", S::Disc, {90, 8}, true},
      {"disc_thin", S::Disc, {70, 3}, true},
      {"washer", S::Ring, {60, 25, 15}, true},
      {"ring_thin", S::Ring, {80, 50, 6}, true},
      {"flange", S::Ring, {100, 60, 15}, true},
      {"bolt", S::Cylinder, {25, 180}, false},
      {"gear_shaft", S::GearShaftProfile, {260, 20, 35, 28, 20}, false},
  }};
  return presets;
}

const BinSpec& find_bin_preset(const std::string& name) {
  for (const auto& b : bin_presets()) {
    if (b.name == name) return b;
  }
  for (const auto& b : damaged_bin_presets()) {
    if (b.name == name) return b;
  }
  throw NotFound("no bin preset named '" + name + "'");
}

const WorkpieceSpec& find_workpiece_preset(const std::string& name) {
  for (const auto& w : workpiece_presets()) {
    if (w.name == name) return w;
  }
  throw NotFound("no workpiece preset named '" + name + "'");
}

nlohmann::json to_json(const SceneConfig& c) {
  nlohmann::json bin = {{"name", c.bin.name},
                        {"inner_x_mm", c.bin.inner_x_mm},
                        {"inner_y_mm", c.bin.inner_y_mm},
                        {"inner_z_mm", c.bin.inner_z_mm},
                        {"wall_thickness_mm", c.bin.wall_thickness_mm},
                        {"wall_profile", to_string(c.bin.wall_profile)}};
  if (c.bin.damage) {
    bin["damage"] = {{"wall_index", c.bin.damage->wall_index},
                     {"notch_depth_mm", c.bin.damage->notch_depth_mm},
                     {"notch_width_mm", c.bin.damage->notch_width_mm}};
  }
  return {{"bin", bin},
          {"workpiece",
           {{"name", c.workpiece.name},
            {"shape", to_string(c.workpiece.shape)},
            {"dims_mm", c.workpiece.dims_mm},
            {"flat", c.workpiece.flat}}},
          {"count_range", {c.count_min, c.count_max}},
          {"camera_height_mm", c.camera_height_mm},
          {"image_size", c.image_size},
          {"noise_sigma_mm", c.noise_sigma_mm},
          {"dropout_prob", c.dropout_prob},
          {"seed", c.seed}};
}

SceneConfig scene_config_from_json(const nlohmann::json& j) {
  try {
    SceneConfig c;
    if (j.contains("bin")) {
      const auto& b = j.at("bin");
      if (b.is_string()) {
        c.bin = find_bin_preset(b.get<std::string>());
      } else {
        c.bin.name = b.value("name", std::string("custom"));
        c.bin.inner_x_mm = b.at("inner_x_mm").get<double>();
        c.bin.inner_y_mm = b.at("inner_y_mm").get<double>();
        c.bin.inner_z_mm = b.at("inner_z_mm").get<double>();
        c.bin.wall_thickness_mm = b.value("wall_thickness_mm", 15.0);
        const auto profile = b.value("wall_profile", std::string("solid"));
        if (profile != "solid" && profile != "lattice") {
          throw InvalidArgument("unknown wall profile '" + profile + "'");
        }
        c.bin.wall_profile = profile == "solid" ? WallProfile::Solid : WallProfile::Lattice;
        if (b.contains("damage")) {
          const auto& d = b.at("damage");
          c.bin.damage = WallDamage{d.at("wall_index").get<int>(),
                                    d.at("notch_depth_mm").get<double>(),
                                    d.value("notch_width_mm", 80.0)};
        }
      }
    }
    if (j.contains("workpiece")) {
      const auto& w = j.at("workpiece");
      if (w.is_string()) {
        c.workpiece = find_workpiece_preset(w.get<std::string>());
      } else {
        c.workpiece.name = w.value("name", std::string("custom"));
        c.workpiece.shape = shape_from(w.at("shape").get<std::string>());
        c.workpiece.dims_mm = w.at("dims_mm").get<std::vector<double>>();
        c.workpiece.flat = w.value("flat", true);
      }
    } else {
      c.workpiece = workpiece_presets()[0];
    }
    if (!j.contains("bin")) c.bin = bin_presets()[0];
    if (j.contains("count_range")) {
      c.count_min = j.at("count_range").at(0).get<int>();
      c.count_max = j.at("count_range").at(1).get<int>();
    }
    c.camera_height_mm = j.value("camera_height_mm", c.camera_height_mm);
    c.image_size = j.value("image_size", c.image_size);
    c.noise_sigma_mm = j.value("noise_sigma_mm", c.noise_sigma_mm);
    c.dropout_prob = j.value("dropout_prob", c.dropout_prob);
    c.seed = j.value("seed", c.seed);
    c.validate();
    return c;
  } catch (const nlohmann::json::exception& e) {
    throw InvalidArgument(std::string("scene config: ") + e.what());
  }
}

Manifest generate_dataset(std::span<const SceneConfig> configs, int n_scenes,
                          const std::filesystem::path& out_dir, const DatasetOptions& options) {
  if (n_scenes < 0) throw InvalidArgument("scene count must be non-negative");
  if (n_scenes > 0 && configs.empty()) throw InvalidArgument("no scene configs given");
  for (const auto& c : configs) c.validate();
  std::error_code ec;
  std::filesystem::create_directories(out_dir, ec);
  if (ec) throw IoError("cannot create '" + out_dir.string() + "': " + ec.message());

  Manifest manifest;
  manifest.meta = {{"generator", "synth"},
                   {"resolution_mm", options.resolution_mm},
                   {"scenes", n_scenes}};
  manifest.scans.resize(static_cast<std::size_t>(n_scenes));
  std::vector<std::exception_ptr> errors(static_cast<std::size_t>(n_scenes));

  // Scenes are independent; each is fully determined by its derived seed.
#pragma omp parallel for schedule(dynamic, 1)
  for (int i = 0; i < n_scenes; ++i) {
    try {
      SceneConfig cfg = configs[static_cast<std::size_t>(i) % configs.size()];
      cfg.seed = derive_seed(cfg.seed, static_cast<std::uint64_t>(i));
      char id_buf[32];
      std::snprintf(id_buf, sizeof id_buf, "%04d", i);
      const std::string id = options.id_prefix + id_buf;

      const Scene scene = generate_scene(cfg);
      PointCloud cloud = render_point_cloud(scene);
      cloud.source_id = id;
      const auto projection = project_to_depth_map(cloud, options.resolution_mm);

      ScanEntry e;
      e.id = id;
      e.kind = ScanKind::Synthetic;
      e.cloud_path = id + ".ply";
      e.depthmap_path = id + ".bdm";
      e.mask_path = id + ".mask.png";
      e.sensor = "virtual_orthographic";
      e.bin = cfg.bin.name;
      e.workpiece = cfg.workpiece.name;
      e.extra = {{"seed", cfg.seed},
                 {"config", to_json(cfg)},
                 {"instances", scene.instances.size()},
                 {"resolution_mm", options.resolution_mm}};
      save_cloud(out_dir / e.cloud_path, cloud);
      save_depthmap(out_dir / e.depthmap_path, projection.depth, &*projection.mask);
      export_mask_png(out_dir / e.mask_path, *projection.mask);
      manifest.scans[static_cast<std::size_t>(i)] = std::move(e);
    } catch (...) {
      errors[static_cast<std::size_t>(i)] = std::current_exception();
    }
  }
  for (const auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
  save_manifest(out_dir / "manifest.json", manifest);
  return manifest;
}

}  // namespace binsight
