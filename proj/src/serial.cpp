#include "binsight/serial.hpp"

#include <algorithm>
#include <cmath>

#include "binsight/errors.hpp"

namespace binsight::serial {

Projection project_to_depth_map(const PointCloud& cloud, double resolution_mm) {
  cloud.check();
  const auto [w, h] = projected_size(cloud, resolution_mm);
  float x_min = cloud.points[0].x, y_min = cloud.points[0].y;
  for (const auto& p : cloud.points) {
    x_min = std::min(x_min, p.x);
    y_min = std::min(y_min, p.y);
  }
  Projection out;
  out.depth = DepthMap::blank(w, h, static_cast<float>(resolution_mm), x_min, y_min);
  DepthMap& dm = out.depth;
  dm.provenance.assign(dm.size(), -1);
  if (cloud.labeled()) out.mask = LabelMask::blank(w, h, kNonWorkpiece, false);
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    const Point3& p = cloud.points[i];
    const auto px = dm.pixel_of(p.x, p.y);
    const std::size_t c = dm.index(px->first, px->second);
    // Strictly greater: in index order the first of equal heights is kept.
    if (!dm.valid[c] || p.z > dm.heights[c]) {
      dm.set(c, p.z);
      dm.provenance[c] = static_cast<std::int32_t>(i);
      if (out.mask) {
        out.mask->labels[c] = (*cloud.labels)[i];
        out.mask->valid[c] = 1;
      }
    }
  }
  return out;
}

PointCloud auto_label(const PointCloud& filled, const EmptyBinReference& ref,
                      const LabelParams& params) {
  params.validate();
  if (ref.cell_size_mm() != params.cell_size_mm) {
    throw ParamMismatch("reference grid cell size differs from requested cell size");
  }
  PointCloud out;
  out.points = filled.points;
  out.source_id = filled.source_id;
  out.labels.emplace(filled.size(), kWorkpiece);
  const auto& ref_points = ref.merged_cloud().points;
  const double d_max_sq = params.d_max_mm * params.d_max_mm;
  for (std::size_t i = 0; i < filled.size(); ++i) {
    const Point3& p = filled.points[i];
    const CellIndex cell = cell_of(p, params.cell_size_mm);
    const int reach = params.neighbor_cells ? 1 : 0;
    bool background = false;
    for (int dy = -reach; dy <= reach && !background; ++dy) {
      for (int dx = -reach; dx <= reach && !background; ++dx) {
        for (const auto j : ref.grid().find({cell.x + dx, cell.y + dy})) {
          const double ex = static_cast<double>(p.x) - ref_points[j].x;
          const double ey = static_cast<double>(p.y) - ref_points[j].y;
          const double ez = static_cast<double>(p.z) - ref_points[j].z;
          if (ex * ex + ey * ey + ez * ez <= d_max_sq) {
            background = true;
            break;
          }
        }
      }
    }
    (*out.labels)[i] = background ? kNonWorkpiece : kWorkpiece;
  }
  return out;
}

std::size_t inpaint_pass(DepthMap& dm, LabelMask* mask, int k) {
  const int half = k / 2;
  std::size_t filled = 0;
  for (int y = 0; y < dm.height; ++y) {
    for (int x = 0; x < dm.width; ++x) {
      const std::size_t i = dm.index(x, y);
      if (dm.valid[i]) continue;
      double sum = 0.0;
      int n = 0, ones = 0;
      for (int yy = std::max(0, y - half); yy <= std::min(dm.height - 1, y + half); ++yy) {
        for (int xx = std::max(0, x - half); xx <= std::min(dm.width - 1, x + half); ++xx) {
          const std::size_t j = dm.index(xx, yy);
          if (!dm.valid[j]) continue;
          sum += dm.heights[j];
          ++n;
          if (mask && mask->labels[j] == kWorkpiece) ++ones;
        }
      }
      if (n == 0) continue;
      dm.set(i, static_cast<float>(sum / n));
      if (mask) {
        mask->labels[i] = (2 * ones > n) ? kWorkpiece : kNonWorkpiece;
        mask->valid[i] = 1;
      }
      ++filled;
    }
  }
  return filled;
}

InpaintResult inpaint(const DepthMap& dm, int k, const LabelMask* mask) {
  if (k < 3 || k % 2 == 0) throw InvalidArgument("kernel size must be odd and >= 3");
  if (dm.valid_count() == 0) throw NothingToInpaint("depth map has no valid pixel");
  InpaintResult out;
  out.depth = dm;
  if (mask) out.mask = *mask;
  while (out.depth.valid_count() != out.depth.size()) {
    if (serial::inpaint_pass(out.depth, out.mask ? &*out.mask : nullptr, k) == 0) {
      throw NothingToInpaint("inpaint made no progress");
    }
    ++out.passes;
  }
  return out;
}

namespace {

LabelMask window_op(const LabelMask& mask, int k, bool all) {
  const int half = k / 2;
  LabelMask out = mask;
  for (int y = 0; y < mask.height; ++y) {
    for (int x = 0; x < mask.width; ++x) {
      bool any = false, every = true;
      for (int dy = -half; dy <= half; ++dy) {
        for (int dx = -half; dx <= half; ++dx) {
          const int xx = x + dx, yy = y + dy;
          if (xx < 0 || yy < 0 || xx >= mask.width || yy >= mask.height) continue;
          const bool one = mask.at(xx, yy) == kWorkpiece;
          any = any || one;
          every = every && one;
        }
      }
      out.labels[out.index(x, y)] = (all ? every : any) ? kWorkpiece : kNonWorkpiece;
    }
  }
  return out;
}

}  // namespace

LabelMask dilate(const LabelMask& mask, int k) { return window_op(mask, k, false); }

LabelMask erode(const LabelMask& mask, int k) { return window_op(mask, k, true); }

DepthMap standardize(const DepthMap& dm) {
  if (dm.valid_count() != dm.size()) throw NotInpainted("depth map has invalid pixels");
  double sum = 0.0;
  for (int y = 0; y < dm.height; ++y) {
    double row = 0.0;
    for (int x = 0; x < dm.width; ++x) row += dm.heights[dm.index(x, y)];
    sum += row;
  }
  const double mean = sum / static_cast<double>(dm.size());
  double ss = 0.0;
  for (int y = 0; y < dm.height; ++y) {
    double row = 0.0;
    for (int x = 0; x < dm.width; ++x) {
      const double d = dm.heights[dm.index(x, y)] - mean;
      row += d * d;
    }
    ss += row;
  }
  const double stddev = std::sqrt(ss / static_cast<double>(dm.size()));
  DepthMap out = dm;
  for (std::size_t i = 0; i < dm.size(); ++i) {
    out.heights[i] = stddev < 1e-9 ? 0.0f : static_cast<float>((dm.heights[i] - mean) / stddev);
  }
  return out;
}

std::array<std::array<std::uint64_t, 2>, 2> confusion(const LabelMask& pred,
                                                      const LabelMask& gt) {
  if (pred.width != gt.width || pred.height != gt.height) {
    throw ShapeMismatch("prediction and ground truth differ in size");
  }
  std::array<std::array<std::uint64_t, 2>, 2> c{};
  for (std::size_t i = 0; i < pred.size(); ++i) {
    if (!pred.valid[i] || !gt.valid[i]) continue;
    ++c[gt.labels[i] ? 1 : 0][pred.labels[i] ? 1 : 0];
  }
  return c;
}

}  // namespace binsight::serial
