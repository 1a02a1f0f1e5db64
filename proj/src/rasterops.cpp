#include "binsight/rasterops.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "binsight/errors.hpp"

namespace binsight {

namespace {

void check_kernel(int k) {
  if (k < 3 || k % 2 == 0) {
    throw InvalidArgument("kernel size must be odd and >= 3, got " + std::to_string(k));
  }
}

void check_aligned(const DepthMap& dm, const LabelMask& mask, const char* what) {
  if (dm.width != mask.width || dm.height != mask.height) {
    throw ShapeMismatch(std::string(what) + ": depth map " + std::to_string(dm.width) + "x" +
                        std::to_string(dm.height) + " vs mask " + std::to_string(mask.width) +
                        "x" + std::to_string(mask.height));
  }
}

// Fills pixel (x, y) from the currently valid pixels of its window. Returns
// false if the window holds no valid pixel.
bool fill_from_window(DepthMap& dm, LabelMask* mask, int x, int y, int half) {
  const int y0 = std::max(0, y - half), y1 = std::min(dm.height - 1, y + half);
  const int x0 = std::max(0, x - half), x1 = std::min(dm.width - 1, x + half);
  double sum = 0.0;
  int n = 0;
  int ones = 0;
  for (int yy = y0; yy <= y1; ++yy) {
    for (int xx = x0; xx <= x1; ++xx) {
      const std::size_t j = dm.index(xx, yy);
      if (!dm.valid[j]) continue;
      sum += dm.heights[j];
      ++n;
      if (mask && mask->labels[j] == kWorkpiece) ++ones;
    }
  }
  if (n == 0) return false;
  const std::size_t i = dm.index(x, y);
  dm.set(i, static_cast<float>(sum / n));
  if (mask) {
    mask->labels[i] = (2 * ones > n) ? kWorkpiece : kNonWorkpiece;
    mask->valid[i] = 1;
  }
  return true;
}

bool has_invalid_neighbor(const DepthMap& dm, int x, int y, int half) {
  const int y0 = std::max(0, y - half), y1 = std::min(dm.height - 1, y + half);
  const int x0 = std::max(0, x - half), x1 = std::min(dm.width - 1, x + half);
  for (int yy = y0; yy <= y1; ++yy) {
    for (int xx = x0; xx <= x1; ++xx) {
      if ((xx != x || yy != y) && !dm.valid[dm.index(xx, yy)]) return true;
    }
  }
  return false;
}

// Separable square-kernel pass along rows (horizontal = true) or columns.
// dilate: 1 iff any in-raster window pixel is 1.
// erode:  1 iff every in-raster window pixel is 1.
std::vector<std::uint8_t> morph_pass(const std::vector<std::uint8_t>& src, int w, int h,
                                     int k, bool erode_op, bool horizontal) {
  const int half = k / 2;
  std::vector<std::uint8_t> dst(src.size(), 0);
  const int lines = horizontal ? h : w;
  const int len = horizontal ? w : h;
#pragma omp parallel
  {
    std::vector<int> prefix(len + 1);
#pragma omp for schedule(static)
    for (int line = 0; line < lines; ++line) {
      auto at = [&](int t) -> std::size_t {
        return horizontal ? static_cast<std::size_t>(line) * w + t
                          : static_cast<std::size_t>(t) * w + line;
      };
      prefix[0] = 0;
      for (int t = 0; t < len; ++t) prefix[t + 1] = prefix[t] + (src[at(t)] ? 1 : 0);
      for (int t = 0; t < len; ++t) {
        const int lo = t - half, hi = t + half;
        const int a = std::max(0, lo), b = std::min(len - 1, hi);
        const int ones = prefix[b + 1] - prefix[a];
        dst[at(t)] = (erode_op ? ones == b - a + 1 : ones > 0) ? 1 : 0;
      }
    }
  }
  return dst;
}

LabelMask morph(const LabelMask& mask, int k, bool erode_op) {
  check_kernel(k);
  LabelMask out = mask;
  const auto rows = morph_pass(mask.labels, mask.width, mask.height, k, erode_op, true);
  out.labels = morph_pass(rows, mask.width, mask.height, k, erode_op, false);
  return out;
}

}  // namespace

std::size_t inpaint_pass(DepthMap& dm, LabelMask* mask, int k) {
  check_kernel(k);
  if (mask) check_aligned(dm, *mask, "inpaint");
  const int half = k / 2;

  std::vector<std::int64_t> holes;
  for (std::size_t i = 0; i < dm.size(); ++i) {
    if (!dm.valid[i]) holes.push_back(static_cast<std::int64_t>(i));
  }
  const auto n_holes = static_cast<std::int64_t>(holes.size());
  std::vector<std::uint8_t> isolated(holes.size(), 0);
#pragma omp parallel for schedule(static)
  for (std::int64_t h = 0; h < n_holes; ++h) {
    const int x = static_cast<int>(holes[h] % dm.width);
    const int y = static_cast<int>(holes[h] / dm.width);
    isolated[h] = has_invalid_neighbor(dm, x, y, half) ? 0 : 1;
  }

  std::size_t filled = 0;
#pragma omp parallel for schedule(static) reduction(+ : filled)
  for (std::int64_t h = 0; h < n_holes; ++h) {
    if (!isolated[h]) continue;
    const int x = static_cast<int>(holes[h] % dm.width);
    const int y = static_cast<int>(holes[h] / dm.width);
    if (fill_from_window(dm, mask, x, y, half)) ++filled;
  }
  for (std::int64_t h = 0; h < n_holes; ++h) {
    if (isolated[h]) continue;
    const int x = static_cast<int>(holes[h] % dm.width);
    const int y = static_cast<int>(holes[h] / dm.width);
    if (fill_from_window(dm, mask, x, y, half)) ++filled;
  }
  return filled;
}

InpaintResult inpaint(const DepthMap& dm, int k, const LabelMask* mask) {
  check_kernel(k);
  if (mask) check_aligned(dm, *mask, "inpaint");
  if (dm.size() == 0 || dm.valid_count() == 0) {
    throw NothingToInpaint("depth map has no valid pixel to inpaint from");
  }
  InpaintResult out;
  out.depth = dm;
  if (mask) out.mask = *mask;
  LabelMask* m = out.mask ? &*out.mask : nullptr;
  std::size_t remaining = dm.size() - dm.valid_count();
  while (remaining > 0) {
    const std::size_t filled = inpaint_pass(out.depth, m, k);
    ++out.passes;
    if (filled == 0) throw NothingToInpaint("inpaint made no progress");
    remaining -= filled;
  }
  return out;
}

LabelMask dilate(const LabelMask& mask, int k) { return morph(mask, k, false); }

LabelMask erode(const LabelMask& mask, int k) { return morph(mask, k, true); }

LabelMask close(const LabelMask& mask, int k) { return erode(dilate(mask, k), k); }

LabelMask open(const LabelMask& mask, int k) { return dilate(erode(mask, k), k); }

LabelMask complement(const LabelMask& mask) {
  LabelMask out = mask;
  for (auto& l : out.labels) l = l ? kNonWorkpiece : kWorkpiece;
  return out;
}

ResizeRecord make_resize_record(int width, int height, int target_size) {
  if (target_size <= 0) {
    throw InvalidArgument("target size must be positive, got " + std::to_string(target_size));
  }
  ResizeRecord rec;
  rec.original_w = width;
  rec.original_h = height;
  rec.target_size = target_size;
  if (width < target_size) rec.pad_right = target_size - width;
  else rec.crop_right = width - target_size;
  if (height < target_size) rec.pad_bottom = target_size - height;
  else rec.crop_bottom = height - target_size;
  return rec;
}

Resized resize_with_record(const DepthMap& dm, const LabelMask* mask, int target_size) {
  if (mask) check_aligned(dm, *mask, "resize");
  Resized out;
  out.record = make_resize_record(dm.width, dm.height, target_size);
  const int s = target_size;
  out.depth = DepthMap::blank(s, s, dm.resolution_mm, dm.origin_x_mm, dm.origin_y_mm);
  const bool prov = !dm.provenance.empty();
  if (prov) out.depth.provenance.assign(out.depth.size(), -1);
  if (mask) out.mask = LabelMask::blank(s, s, kNonWorkpiece, true);
  const int keep_w = std::min(dm.width, s), keep_h = std::min(dm.height, s);
#pragma omp parallel for schedule(static)
  for (int y = 0; y < s; ++y) {
    for (int x = 0; x < s; ++x) {
      const std::size_t o = out.depth.index(x, y);
      if (x < keep_w && y < keep_h) {
        const std::size_t i = dm.index(x, y);
        out.depth.heights[o] = dm.heights[i];
        out.depth.valid[o] = dm.valid[i];
        if (prov) out.depth.provenance[o] = dm.provenance[i];
        if (mask) {
          out.mask->labels[o] = mask->labels[i];
          out.mask->valid[o] = mask->valid[i];
        }
      } else {
        out.depth.set(o, 0.0f);
      }
    }
  }
  return out;
}

LabelMask inverse_resize(const LabelMask& mask_r, const ResizeRecord& rec) {
  if (mask_r.width != rec.target_size || mask_r.height != rec.target_size) {
    throw ShapeMismatch("mask is " + std::to_string(mask_r.width) + "x" +
                        std::to_string(mask_r.height) + " but the resize record targets " +
                        std::to_string(rec.target_size) + "x" + std::to_string(rec.target_size));
  }
  LabelMask out = LabelMask::blank(rec.original_w, rec.original_h, kNonWorkpiece, false);
  const int keep_w = std::min(rec.original_w, rec.target_size);
  const int keep_h = std::min(rec.original_h, rec.target_size);
#pragma omp parallel for schedule(static)
  for (int y = 0; y < keep_h; ++y) {
    for (int x = 0; x < keep_w; ++x) {
      const std::size_t i = mask_r.index(x, y), o = out.index(x, y);
      out.labels[o] = mask_r.labels[i];
      out.valid[o] = mask_r.valid[i];
    }
  }
  return out;
}

DepthMap standardize(const DepthMap& dm) {
  if (dm.size() == 0) throw InvalidArgument("cannot standardize an empty depth map");
  if (dm.valid_count() != dm.size()) {
    throw NotInpainted("depth map has " + std::to_string(dm.size() - dm.valid_count()) +
                       " invalid pixels; inpaint before standardizing");
  }
  // Row partials summed in row order: identical result for any thread count.
  std::vector<double> partial(dm.height);
#pragma omp parallel for schedule(static)
  for (int y = 0; y < dm.height; ++y) {
    double s = 0.0;
    for (int x = 0; x < dm.width; ++x) s += dm.heights[dm.index(x, y)];
    partial[y] = s;
  }
  double sum = 0.0;
  for (const double s : partial) sum += s;
  const double mean = sum / static_cast<double>(dm.size());
#pragma omp parallel for schedule(static)
  for (int y = 0; y < dm.height; ++y) {
    double s = 0.0;
    for (int x = 0; x < dm.width; ++x) {
      const double d = dm.heights[dm.index(x, y)] - mean;
      s += d * d;
    }
    partial[y] = s;
  }
  double ss = 0.0;
  for (const double s : partial) ss += s;
  const double stddev = std::sqrt(ss / static_cast<double>(dm.size()));

  DepthMap out = dm;
  const auto n = static_cast<std::int64_t>(dm.size());
  if (stddev < 1e-9) {
    std::fill(out.heights.begin(), out.heights.end(), 0.0f);
    return out;
  }
#pragma omp parallel for schedule(static)
  for (std::int64_t i = 0; i < n; ++i) {
    out.heights[i] = static_cast<float>((dm.heights[i] - mean) / stddev);
  }
  return out;
}

void AugmentSpec::validate() const {
  if (rotation_deg != 0 && rotation_deg != 90 && rotation_deg != 180 && rotation_deg != 270) {
    throw InvalidArgument("rotation must be 0, 90, 180 or 270 degrees, got " +
                          std::to_string(rotation_deg));
  }
  if (!(scale >= 0.5 && scale <= 2.0)) {
    throw InvalidArgument("scale must lie in [0.5, 2.0], got " + std::to_string(scale));
  }
}

namespace {

// Rebuilds both rasters at out_w x out_h, pulling pixel (x, y) from src_of(x, y).
template <typename SourceOf>
Augmented gather(const Augmented& in, int out_w, int out_h, SourceOf src_of) {
  Augmented out;
  out.depth = DepthMap::blank(out_w, out_h, in.depth.resolution_mm, in.depth.origin_x_mm,
                              in.depth.origin_y_mm);
  out.mask = LabelMask::blank(out_w, out_h, kNonWorkpiece, false);
#pragma omp parallel for schedule(static)
  for (int y = 0; y < out_h; ++y) {
    for (int x = 0; x < out_w; ++x) {
      const auto [sx, sy] = src_of(x, y);
      const std::size_t i = in.depth.index(sx, sy), o = out.depth.index(x, y);
      out.depth.heights[o] = in.depth.heights[i];
      out.depth.valid[o] = in.depth.valid[i];
      out.mask.labels[o] = in.mask.labels[i];
      out.mask.valid[o] = in.mask.valid[i];
    }
  }
  return out;
}

}  // namespace

Augmented augment(const DepthMap& dm, const LabelMask& mask, const AugmentSpec& spec) {
  spec.validate();
  check_aligned(dm, mask, "augment");
  Augmented cur{dm, mask};
  cur.depth.provenance.clear();
  const int w = dm.width, h = dm.height;
  if (spec.flip_h) {
    cur = gather(cur, w, h, [w](int x, int y) { return std::pair{w - 1 - x, y}; });
  }
  if (spec.flip_v) {
    cur = gather(cur, w, h, [h](int x, int y) { return std::pair{x, h - 1 - y}; });
  }
  for (int r = 0; r < spec.rotation_deg / 90; ++r) {
    const int cw = cur.depth.width, ch = cur.depth.height;
    // Clockwise: source top-left lands at the top-right.
    cur = gather(cur, ch, cw, [ch](int x, int y) { return std::pair{y, ch - 1 - x}; });
  }
  if (spec.scale != 1.0) {
    const int cw = cur.depth.width, ch = cur.depth.height;
    const double s = spec.scale;
    const int nw = std::max(1, static_cast<int>(std::lround(cw * s)));
    const int nh = std::max(1, static_cast<int>(std::lround(ch * s)));
    cur = gather(cur, nw, nh, [=](int x, int y) {
      const int sx = std::min(cw - 1, static_cast<int>(std::floor((x + 0.5) / s)));
      const int sy = std::min(ch - 1, static_cast<int>(std::floor((y + 0.5) / s)));
      return std::pair{sx, sy};
    });
    cur.depth.resolution_mm = static_cast<float>(cur.depth.resolution_mm / s);
  }
  return cur;
}

}  // namespace binsight
