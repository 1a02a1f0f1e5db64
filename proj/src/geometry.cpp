#include "binsight/geometry.hpp"

#include <algorithm>
#include <atomic>
#include <bit>
#include <cmath>

#include "binsight/errors.hpp"

namespace binsight {

namespace {

constexpr std::size_t kMaxRasterPixels = std::size_t{1} << 28;

bool finite(const Point3& p) {
  return std::isfinite(p.x) && std::isfinite(p.y) && std::isfinite(p.z);
}

// Total order on float heights as unsigned integers: larger key = larger z.
std::uint32_t orderable(float z) {
  z += 0.0f;  // -0 -> +0 so both zeros compare equal
  const auto bits = std::bit_cast<std::uint32_t>(z);
  return (bits & 0x80000000u) ? ~bits : (bits | 0x80000000u);
}

}  // namespace

void PointCloud::check() const {
  if (labels && labels->size() != points.size()) {
    throw InvalidArgument("point cloud '" + source_id + "' has " +
                          std::to_string(points.size()) + " points but " +
                          std::to_string(labels->size()) + " labels");
  }
  if (labels) {
    for (const auto l : *labels) {
      if (l > kWorkpiece) {
        throw InvalidArgument("point cloud '" + source_id + "' has label " +
                              std::to_string(l) + " outside {0, 1}");
      }
    }
  }
}

std::optional<CellIndex> try_cell_of(const Point3& p, double cell_size_mm) noexcept {
  if (!finite(p)) return std::nullopt;
  const double cx = std::floor(static_cast<double>(p.x) / cell_size_mm) + 1.0;
  const double cy = std::floor(static_cast<double>(p.y) / cell_size_mm) + 1.0;
  constexpr double lo = std::numeric_limits<std::int32_t>::min();
  constexpr double hi = std::numeric_limits<std::int32_t>::max();
  if (cx < lo || cx > hi || cy < lo || cy > hi) return std::nullopt;
  return CellIndex{static_cast<std::int32_t>(cx), static_cast<std::int32_t>(cy)};
}

CellIndex cell_of(const Point3& p, double cell_size_mm) {
  if (!(cell_size_mm > 0.0) || !std::isfinite(cell_size_mm)) {
    throw InvalidArgument("cell size must be positive, got " + std::to_string(cell_size_mm));
  }
  if (!finite(p)) throw InvalidPoint("non-finite point coordinate");
  const auto cell = try_cell_of(p, cell_size_mm);
  if (!cell) throw InvalidPoint("point outside the representable cell range");
  return *cell;
}

CellGrid::CellGrid(const PointCloud& cloud, double cell_size_mm) : cell_size_(cell_size_mm) {
  if (!(cell_size_mm > 0.0)) {
    throw InvalidArgument("cell size must be positive, got " + std::to_string(cell_size_mm));
  }
  if (cloud.size() > std::numeric_limits<std::uint32_t>::max()) {
    throw InvalidArgument("cloud too large for a cell grid");
  }
  const auto n = static_cast<std::int64_t>(cloud.size());
  // (packed cell, point index); all pairs distinct so the sort is a total order.
  std::vector<std::pair<CellIndex, std::uint32_t>> keyed(cloud.size());
  bool bad = false;
#pragma omp parallel for schedule(static) reduction(|| : bad)
  for (std::int64_t i = 0; i < n; ++i) {
    const auto cell = try_cell_of(cloud.points[i], cell_size_mm);
    if (!cell) {
      bad = true;
      continue;
    }
    keyed[i] = {*cell, static_cast<std::uint32_t>(i)};
  }
  if (bad) throw InvalidPoint("cloud '" + cloud.source_id + "' has a point with no valid cell");
  std::sort(keyed.begin(), keyed.end());

  indices_.reserve(keyed.size());
  for (std::size_t i = 0; i < keyed.size(); ++i) {
    if (i == 0 || keyed[i].first != keyed[i - 1].first) {
      slot_.emplace(keyed[i].first.packed(), static_cast<std::uint32_t>(cells_.size()));
      cells_.push_back(keyed[i].first);
      offsets_.push_back(static_cast<std::uint32_t>(i));
    }
    indices_.push_back(keyed[i].second);
  }
  offsets_.push_back(static_cast<std::uint32_t>(indices_.size()));
}

std::span<const std::uint32_t> CellGrid::find(CellIndex cell) const {
  const auto it = slot_.find(cell.packed());
  if (it == slot_.end()) return {};
  return points_of(it->second);
}

std::span<const std::uint32_t> CellGrid::points_of(std::size_t cell_slot) const {
  const auto begin = offsets_[cell_slot];
  const auto end = offsets_[cell_slot + 1];
  return {indices_.data() + begin, end - begin};
}

CellGrid build_cell_grid(const PointCloud& cloud, double cell_size_mm) {
  return CellGrid(cloud, cell_size_mm);
}

DepthMap DepthMap::blank(int width, int height, float resolution_mm, float origin_x_mm,
                         float origin_y_mm) {
  DepthMap dm;
  dm.width = width;
  dm.height = height;
  dm.resolution_mm = resolution_mm;
  dm.origin_x_mm = origin_x_mm;
  dm.origin_y_mm = origin_y_mm;
  dm.heights.assign(dm.size(), std::numeric_limits<float>::quiet_NaN());
  dm.valid.assign(dm.size(), 0);
  return dm;
}

std::size_t DepthMap::valid_count() const noexcept {
  return static_cast<std::size_t>(std::count(valid.begin(), valid.end(), std::uint8_t{1}));
}

std::optional<std::pair<int, int>> DepthMap::pixel_of(float x, float y) const noexcept {
  const double fx = (static_cast<double>(x) - origin_x_mm) / resolution_mm;
  const double fy = (static_cast<double>(y) - origin_y_mm) / resolution_mm;
  if (!(fx >= 0.0) || !(fy >= 0.0)) return std::nullopt;
  auto px = static_cast<long long>(std::floor(fx));
  auto py = static_cast<long long>(std::floor(fy));
  if (px == width && fx == static_cast<double>(width)) px = width - 1;
  if (py == height && fy == static_cast<double>(height)) py = height - 1;
  if (px >= width || py >= height) return std::nullopt;
  return std::pair<int, int>{static_cast<int>(px), static_cast<int>(py)};
}

LabelMask LabelMask::blank(int width, int height, std::uint8_t label, bool is_valid) {
  LabelMask m;
  m.width = width;
  m.height = height;
  m.labels.assign(m.size(), label);
  m.valid.assign(m.size(), is_valid ? 1 : 0);
  return m;
}

std::size_t LabelMask::count(std::uint8_t label) const noexcept {
  return static_cast<std::size_t>(std::count(labels.begin(), labels.end(), label));
}

std::pair<int, int> projected_size(const PointCloud& cloud, double resolution_mm) {
  if (cloud.empty()) throw EmptyCloud("cannot project empty cloud '" + cloud.source_id + "'");
  if (!(resolution_mm > 0.0) || !std::isfinite(resolution_mm)) {
    throw InvalidArgument("resolution must be positive, got " + std::to_string(resolution_mm));
  }
  float x_min = cloud.points[0].x, x_max = x_min;
  float y_min = cloud.points[0].y, y_max = y_min;
  for (const auto& p : cloud.points) {
    if (!finite(p)) throw InvalidPoint("cloud '" + cloud.source_id + "' contains a non-finite point");
    x_min = std::min(x_min, p.x);
    x_max = std::max(x_max, p.x);
    y_min = std::min(y_min, p.y);
    y_max = std::max(y_max, p.y);
  }
  const float r = static_cast<float>(resolution_mm);
  const double dx = std::ceil((static_cast<double>(x_max) - x_min) / r);
  const double dy = std::ceil((static_cast<double>(y_max) - y_min) / r);
  const double w = std::max(1.0, dx), h = std::max(1.0, dy);
  if (w * h > static_cast<double>(kMaxRasterPixels)) {
    throw InvalidArgument("projected raster " + std::to_string(w) + "x" + std::to_string(h) +
                          " is too large; increase the resolution factor");
  }
  return {static_cast<int>(w), static_cast<int>(h)};
}

Projection project_to_depth_map(const PointCloud& cloud, double resolution_mm) {
  cloud.check();
  const auto [w, h] = projected_size(cloud, resolution_mm);
  if (cloud.size() > static_cast<std::size_t>(std::numeric_limits<std::int32_t>::max())) {
    throw InvalidArgument("cloud too large to project");
  }
  float x_min = cloud.points[0].x, y_min = cloud.points[0].y;
  for (const auto& p : cloud.points) {
    x_min = std::min(x_min, p.x);
    y_min = std::min(y_min, p.y);
  }
  Projection out;
  out.depth = DepthMap::blank(w, h, static_cast<float>(resolution_mm), x_min, y_min);
  DepthMap& dm = out.depth;

  // Pixel winner packed as (orderable z << 32) | ~index: the maximum is the
  // highest point, then the lowest index. Schedule-independent.
  std::vector<std::uint64_t> best(dm.size(), 0);
  const auto n = static_cast<std::int64_t>(cloud.size());
#pragma omp parallel for schedule(static)
  for (std::int64_t i = 0; i < n; ++i) {
    const Point3& p = cloud.points[i];
    const auto px = dm.pixel_of(p.x, p.y);
    const std::size_t cell = dm.index(px->first, px->second);
    const std::uint64_t key = (static_cast<std::uint64_t>(orderable(p.z)) << 32) |
                              static_cast<std::uint32_t>(~static_cast<std::uint32_t>(i));
    std::atomic_ref<std::uint64_t> slot(best[cell]);
    std::uint64_t cur = slot.load(std::memory_order_relaxed);
    while (key > cur && !slot.compare_exchange_weak(cur, key, std::memory_order_relaxed)) {
    }
  }

  dm.provenance.assign(dm.size(), -1);
  if (cloud.labeled()) out.mask = LabelMask::blank(w, h, kNonWorkpiece, false);
  const auto pixels = static_cast<std::int64_t>(dm.size());
#pragma omp parallel for schedule(static)
  for (std::int64_t c = 0; c < pixels; ++c) {
    if (best[c] == 0) continue;
    const auto idx = static_cast<std::int32_t>(~static_cast<std::uint32_t>(best[c] & 0xffffffffu));
    dm.set(c, cloud.points[idx].z);
    dm.provenance[c] = idx;
    if (out.mask) {
      out.mask->labels[c] = (*cloud.labels)[idx];
      out.mask->valid[c] = 1;
    }
  }
  return out;
}

PointCloud reproject_labels(const PointCloud& cloud, const LabelMask& mask, const DepthMap& dm) {
  if (mask.width != dm.width || mask.height != dm.height) {
    throw ShapeMismatch("mask is " + std::to_string(mask.width) + "x" +
                        std::to_string(mask.height) + " but depth map is " +
                        std::to_string(dm.width) + "x" + std::to_string(dm.height));
  }
  PointCloud out;
  out.points = cloud.points;
  out.source_id = cloud.source_id;
  out.labels.emplace(cloud.size(), kNonWorkpiece);
  auto& labels = *out.labels;
  const auto n = static_cast<std::int64_t>(cloud.size());
#pragma omp parallel for schedule(static)
  for (std::int64_t i = 0; i < n; ++i) {
    const Point3& p = cloud.points[i];
    const auto px = dm.pixel_of(p.x, p.y);
    if (!px) continue;
    const std::size_t c = mask.index(px->first, px->second);
    if (mask.valid[c]) labels[i] = mask.labels[c] ? kWorkpiece : kNonWorkpiece;
  }
  return out;
}

SplitClouds split_cloud(const PointCloud& cloud) {
  if (!cloud.labeled()) throw MissingLabels("cloud '" + cloud.source_id + "' has no labels");
  cloud.check();
  SplitClouds out;
  out.workpiece.source_id = cloud.source_id + "/workpiece";
  out.background.source_id = cloud.source_id + "/background";
  const auto& labels = *cloud.labels;
  const auto ones = static_cast<std::size_t>(std::count(labels.begin(), labels.end(), kWorkpiece));
  out.workpiece.points.reserve(ones);
  out.background.points.reserve(cloud.size() - ones);
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    (labels[i] == kWorkpiece ? out.workpiece : out.background).points.push_back(cloud.points[i]);
  }
  out.workpiece.labels.emplace(out.workpiece.size(), kWorkpiece);
  out.background.labels.emplace(out.background.size(), kNonWorkpiece);
  return out;
}

}  // namespace binsight
