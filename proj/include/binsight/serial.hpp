#pragma once

// Single-threaded reference versions of the OpenMP kernels. They follow the
// textbook definition directly and exist so tests can check the parallel
// kernels bit-for-bit and the benchmark can compare the two.

#include <array>
#include <cstdint>

#include "binsight/autolabel.hpp"
#include "binsight/geometry.hpp"
#include "binsight/rasterops.hpp"

namespace binsight::serial {

Projection project_to_depth_map(const PointCloud& cloud, double resolution_mm);

PointCloud auto_label(const PointCloud& filled, const EmptyBinReference& ref,
                      const LabelParams& params);

/// Plain raster-order scan, no isolated-hole split.
std::size_t inpaint_pass(DepthMap& dm, LabelMask* mask, int k);
InpaintResult inpaint(const DepthMap& dm, int k, const LabelMask* mask = nullptr);

/// Direct k x k window scan.
LabelMask dilate(const LabelMask& mask, int k);
LabelMask erode(const LabelMask& mask, int k);

DepthMap standardize(const DepthMap& dm);

/// confusion[gt][pred] over pixels valid in both masks.
std::array<std::array<std::uint64_t, 2>, 2> confusion(const LabelMask& pred,
                                                      const LabelMask& gt);

}  // namespace binsight::serial
