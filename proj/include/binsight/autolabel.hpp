#pragma once

#include <span>
#include <utility>

#include "binsight/geometry.hpp"

namespace binsight {

struct LabelParams {
  double d_max_mm = 5.0;
  double cell_size_mm = 5.0;
  // Search the 3x3 cell neighbourhood instead of only the point's own cell.
  // Off by default; the reference rule compares within the same cell only.
  bool neighbor_cells = false;

  void validate() const;
};

/// Background model built from merged empty-bin scans.
class EmptyBinReference {
 public:
  EmptyBinReference(PointCloud merged_cloud, double cell_size_mm);

  const PointCloud& merged_cloud() const noexcept { return cloud_; }
  const CellGrid& grid() const noexcept { return grid_; }
  double cell_size_mm() const noexcept { return grid_.cell_size_mm(); }

 private:
  PointCloud cloud_;
  CellGrid grid_;
};

/// Concatenates all scans in order, duplicates kept. Throws NoScans.
PointCloud merge_scans(std::span<const PointCloud> scans);

EmptyBinReference make_reference(std::span<const PointCloud> empty_scans, double cell_size_mm);

/// Labels every filled point: kNonWorkpiece if some reference point of the
/// same cell lies within d_max (Euclidean, inclusive), else kWorkpiece. A
/// cell holding no reference points labels kWorkpiece.
///
/// Throws ParamMismatch when the reference grid was built with a different
/// cell size than params.cell_size_mm.
PointCloud auto_label(const PointCloud& filled, const EmptyBinReference& ref,
                      const LabelParams& params);

/// Projection of a labeled cloud; each pixel takes its highest point's label.
std::pair<DepthMap, LabelMask> label_depth_map(const PointCloud& labeled, double resolution_mm);

}  // namespace binsight
