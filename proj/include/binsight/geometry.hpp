#pragma once

#include <cstddef>
#include <cstdint>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

namespace binsight {

/// A point in the fixed bin frame, millimetres.
struct Point3 {
  float x = 0.f;
  float y = 0.f;
  float z = 0.f;

  friend bool operator==(const Point3&, const Point3&) = default;
};

inline constexpr std::uint8_t kNonWorkpiece = 0;
inline constexpr std::uint8_t kWorkpiece = 1;

struct PointCloud {
  std::vector<Point3> points;
  // One entry per point when present; values are kNonWorkpiece / kWorkpiece.
  std::optional<std::vector<std::uint8_t>> labels;
  std::string source_id;

  std::size_t size() const noexcept { return points.size(); }
  bool empty() const noexcept { return points.empty(); }
  bool labeled() const noexcept { return labels.has_value(); }

  /// Throws InvalidArgument if labels length differs from point count.
  void check() const;
};

/// Signed cell index of the sparse X-Y grid.
struct CellIndex {
  std::int32_t x = 0;
  std::int32_t y = 0;

  friend bool operator==(const CellIndex&, const CellIndex&) = default;
  friend auto operator<=>(const CellIndex&, const CellIndex&) = default;

  std::uint64_t packed() const noexcept {
    return (static_cast<std::uint64_t>(static_cast<std::uint32_t>(x)) << 32) |
           static_cast<std::uint32_t>(y);
  }
};

/// (floor(x / s) + 1, floor(y / s) + 1). Throws InvalidPoint for a non-finite
/// point and InvalidArgument for a non-positive cell size.
CellIndex cell_of(const Point3& p, double cell_size_mm);

/// Non-throwing cell_of for hot loops; nullopt for non-finite or out-of-range
/// points. cell_size_mm must already be validated.
std::optional<CellIndex> try_cell_of(const Point3& p, double cell_size_mm) noexcept;

/// Sparse bucketing of point indices by cell_of. Stored as a compressed
/// cell -> index-range table; indices inside a cell are ascending.
class CellGrid {
 public:
  CellGrid() = default;
  CellGrid(const PointCloud& cloud, double cell_size_mm);

  double cell_size_mm() const noexcept { return cell_size_; }
  std::size_t cell_count() const noexcept { return cells_.size(); }
  std::size_t point_count() const noexcept { return indices_.size(); }

  /// Indices of the points in `cell`; empty span if the cell holds none.
  std::span<const std::uint32_t> find(CellIndex cell) const;

  /// Cells in ascending (x, y) order.
  std::span<const CellIndex> cells() const noexcept { return cells_; }
  std::span<const std::uint32_t> points_of(std::size_t cell_slot) const;

 private:
  double cell_size_ = 1.0;
  std::vector<CellIndex> cells_;
  std::vector<std::uint32_t> offsets_;  // cells_.size() + 1
  std::vector<std::uint32_t> indices_;
  std::unordered_map<std::uint64_t, std::uint32_t> slot_;
};

CellGrid build_cell_grid(const PointCloud& cloud, double cell_size_mm);

/// Orthographic top-down height raster. Row-major, index = y * width + x.
/// Invalid pixels hold quiet NaN heights.
struct DepthMap {
  int width = 0;
  int height = 0;
  float resolution_mm = 1.f;
  float origin_x_mm = 0.f;
  float origin_y_mm = 0.f;
  std::vector<float> heights;
  std::vector<std::uint8_t> valid;
  // Index of the maximal-z source point per pixel, -1 where none. Empty when
  // provenance is not tracked.
  std::vector<std::int32_t> provenance;

  static DepthMap blank(int width, int height, float resolution_mm = 1.f,
                        float origin_x_mm = 0.f, float origin_y_mm = 0.f);

  std::size_t size() const noexcept { return static_cast<std::size_t>(width) * height; }
  std::size_t index(int x, int y) const noexcept {
    return static_cast<std::size_t>(y) * width + x;
  }
  std::size_t valid_count() const noexcept;
  void set(std::size_t i, float h) noexcept {
    heights[i] = h;
    valid[i] = 1;
  }
  void invalidate(std::size_t i) noexcept {
    heights[i] = std::numeric_limits<float>::quiet_NaN();
    valid[i] = 0;
  }

  /// Pixel a world (x, y) falls into, or nullopt outside the raster. A
  /// coordinate exactly on the far edge is clamped into the last pixel.
  std::optional<std::pair<int, int>> pixel_of(float x, float y) const noexcept;
};

/// Binary raster aligned with a DepthMap.
struct LabelMask {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> labels;
  std::vector<std::uint8_t> valid;

  static LabelMask blank(int width, int height, std::uint8_t label = kNonWorkpiece,
                         bool valid = true);

  std::size_t size() const noexcept { return static_cast<std::size_t>(width) * height; }
  std::size_t index(int x, int y) const noexcept {
    return static_cast<std::size_t>(y) * width + x;
  }
  std::uint8_t at(int x, int y) const noexcept { return labels[index(x, y)]; }
  std::size_t count(std::uint8_t label) const noexcept;

  friend bool operator==(const LabelMask&, const LabelMask&) = default;
};

struct Projection {
  DepthMap depth;
  std::optional<LabelMask> mask;  // present iff the cloud was labeled
};

/// Raster extent for `cloud` at `resolution_mm`: ceil of the coordinate range
/// over r, at least one pixel per axis.
std::pair<int, int> projected_size(const PointCloud& cloud, double resolution_mm);

/// Highest point wins each pixel; equal heights go to the lowest point index.
/// Throws EmptyCloud, InvalidArgument (r <= 0).
Projection project_to_depth_map(const PointCloud& cloud, double resolution_mm);

/// Copy of `cloud` where every point takes the label of the pixel it projects
/// into; points over invalid pixels or outside the raster become
/// kNonWorkpiece. Throws ShapeMismatch when mask and dm differ in size.
PointCloud reproject_labels(const PointCloud& cloud, const LabelMask& mask,
                            const DepthMap& dm);

struct SplitClouds {
  PointCloud workpiece;
  PointCloud background;
};

/// Partition by label, preserving the original order inside each part.
/// Throws MissingLabels for an unlabeled cloud.
SplitClouds split_cloud(const PointCloud& cloud);

}  // namespace binsight
