#include "binsight/autolabel.hpp"

#include <cmath>
#include <string>

#include "binsight/errors.hpp"

namespace binsight {

namespace {

bool within(const Point3& a, const Point3& b, double d_max_sq) {
  const double dx = static_cast<double>(a.x) - b.x;
  const double dy = static_cast<double>(a.y) - b.y;
  const double dz = static_cast<double>(a.z) - b.z;
  return dx * dx + dy * dy + dz * dz <= d_max_sq;
}

bool near_any(const Point3& p, std::span<const std::uint32_t> candidates,
              const std::vector<Point3>& ref, double d_max_sq) {
  for (const auto j : candidates) {
    if (within(p, ref[j], d_max_sq)) return true;
  }
  return false;
}

}  // namespace

void LabelParams::validate() const {
  if (!(d_max_mm > 0.0) || !std::isfinite(d_max_mm)) {
    throw InvalidArgument("d_max must be positive, got " + std::to_string(d_max_mm));
  }
  if (!(cell_size_mm > 0.0) || !std::isfinite(cell_size_mm)) {
    throw InvalidArgument("cell size must be positive, got " + std::to_string(cell_size_mm));
  }
}

EmptyBinReference::EmptyBinReference(PointCloud merged_cloud, double cell_size_mm)
    : cloud_(std::move(merged_cloud)), grid_(cloud_, cell_size_mm) {}

PointCloud merge_scans(std::span<const PointCloud> scans) {
  if (scans.empty()) throw NoScans("no empty-bin scans given");
  PointCloud merged;
  std::size_t total = 0;
  for (const auto& s : scans) total += s.size();
  merged.points.reserve(total);
  for (const auto& s : scans) {
    merged.points.insert(merged.points.end(), s.points.begin(), s.points.end());
    if (!merged.source_id.empty()) merged.source_id += "+";
    merged.source_id += s.source_id;
  }
  return merged;
}

EmptyBinReference make_reference(std::span<const PointCloud> empty_scans, double cell_size_mm) {
  return EmptyBinReference(merge_scans(empty_scans), cell_size_mm);
}

PointCloud auto_label(const PointCloud& filled, const EmptyBinReference& ref,
                      const LabelParams& params) {
  params.validate();
  if (ref.cell_size_mm() != params.cell_size_mm) {
    throw ParamMismatch("reference grid cell size " + std::to_string(ref.cell_size_mm()) +
                        " mm differs from requested " + std::to_string(params.cell_size_mm) +
                        " mm");
  }
  PointCloud out;
  out.points = filled.points;
  out.source_id = filled.source_id;
  out.labels.emplace(filled.size(), kWorkpiece);
  auto& labels = *out.labels;

  const auto& grid = ref.grid();
  const auto& ref_points = ref.merged_cloud().points;
  const double d_max_sq = params.d_max_mm * params.d_max_mm;
  const auto n = static_cast<std::int64_t>(filled.size());
  bool bad = false;
#pragma omp parallel for schedule(dynamic, 4096) reduction(|| : bad)
  for (std::int64_t i = 0; i < n; ++i) {
    const Point3& p = filled.points[i];
    const auto cell = try_cell_of(p, params.cell_size_mm);
    if (!cell) {
      bad = true;
      continue;
    }
    bool background = near_any(p, grid.find(*cell), ref_points, d_max_sq);
    if (params.neighbor_cells) {
      for (int dy = -1; dy <= 1 && !background; ++dy) {
        for (int dx = -1; dx <= 1 && !background; ++dx) {
          if (dx == 0 && dy == 0) continue;
          const CellIndex other{cell->x + dx, cell->y + dy};
          background = near_any(p, grid.find(other), ref_points, d_max_sq);
        }
      }
    }
    labels[i] = background ? kNonWorkpiece : kWorkpiece;
  }
  if (bad) throw InvalidPoint("filled cloud '" + filled.source_id + "' has a non-finite point");
  return out;
}

std::pair<DepthMap, LabelMask> label_depth_map(const PointCloud& labeled, double resolution_mm) {
  if (!labeled.labeled()) {
    throw MissingLabels("cloud '" + labeled.source_id + "' has no labels to project");
  }
  auto projection = project_to_depth_map(labeled, resolution_mm);
  return {std::move(projection.depth), std::move(*projection.mask)};
}

}  // namespace binsight
