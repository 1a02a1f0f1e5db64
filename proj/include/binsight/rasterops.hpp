#pragma once

#include <optional>

#include "binsight/geometry.hpp"

namespace binsight {

// ---------------------------------------------------------------------------
// Hole filling
// ---------------------------------------------------------------------------

struct InpaintResult {
  DepthMap depth;
  std::optional<LabelMask> mask;
  int passes = 0;
};

/// One raster-scan pass, top-left to bottom-right. Each invalid pixel with at
/// least one valid pixel in its k x k window takes the mean of those pixels;
/// pixels filled earlier in the same pass count as valid. When `mask` is
/// given, a filled pixel takes the majority label of the same neighbours,
/// ties going to kNonWorkpiece. Returns the number of pixels filled.
///
/// Isolated holes (no other invalid pixel in their window) cannot influence or
/// be influenced by any other hole in the pass, so they are filled in
/// parallel; the remaining holes are filled in raster order. The result is
/// identical to a purely sequential scan.
std::size_t inpaint_pass(DepthMap& dm, LabelMask* mask, int k);

/// Repeats inpaint_pass until every pixel is valid. Originally valid pixels
/// are returned bit-identical.
///
/// Throws InvalidArgument (k even or < 3), NothingToInpaint (no valid pixel),
/// ShapeMismatch (mask size differs).
InpaintResult inpaint(const DepthMap& dm, int k, const LabelMask* mask = nullptr);

// ---------------------------------------------------------------------------
// Binary morphology with a k x k square over the part of the window inside the
// raster: dilation looks for any 1 there, erosion needs all 1s. Closing thus
// never removes a 1 and opening never adds one, borders included. Validity
// rasters pass through untouched.
// ---------------------------------------------------------------------------

LabelMask dilate(const LabelMask& mask, int k);
LabelMask erode(const LabelMask& mask, int k);
/// erode(dilate(m)). Fills holes smaller than the kernel, keeps isolated specks.
LabelMask close(const LabelMask& mask, int k);
/// dilate(erode(m)). Removes specks smaller than the kernel.
LabelMask open(const LabelMask& mask, int k);
LabelMask complement(const LabelMask& mask);

// ---------------------------------------------------------------------------
// Fixed-size resizing by zero padding / cropping, anchored at the top-left.
// ---------------------------------------------------------------------------

struct ResizeRecord {
  int original_w = 0;
  int original_h = 0;
  int target_size = 0;
  int pad_right = 0;
  int pad_bottom = 0;
  int crop_right = 0;
  int crop_bottom = 0;

  bool cropped() const noexcept { return crop_right > 0 || crop_bottom > 0; }
  bool identity() const noexcept {
    return pad_right == 0 && pad_bottom == 0 && crop_right == 0 && crop_bottom == 0;
  }
  friend bool operator==(const ResizeRecord&, const ResizeRecord&) = default;
};

ResizeRecord make_resize_record(int width, int height, int target_size);

struct Resized {
  DepthMap depth;
  std::optional<LabelMask> mask;
  ResizeRecord record;
};

/// Pads with valid zero-height, label-0 pixels on the right/bottom or crops
/// the right/bottom, per axis, to target_size x target_size.
Resized resize_with_record(const DepthMap& dm, const LabelMask* mask, int target_size);

/// Undoes resize_with_record on a mask: padding is cut away, cropped regions
/// come back as invalid label-0 pixels. Throws ShapeMismatch.
LabelMask inverse_resize(const LabelMask& mask_r, const ResizeRecord& rec);

// ---------------------------------------------------------------------------
// Standardization and augmentation
// ---------------------------------------------------------------------------

/// (h - mean) / std over all pixels, population std. A constant raster
/// (std below 1e-9) maps to zeros. Throws NotInpainted if any pixel is invalid.
DepthMap standardize(const DepthMap& dm);

struct AugmentSpec {
  bool flip_h = false;
  bool flip_v = false;
  int rotation_deg = 0;  // 0, 90, 180 or 270, clockwise
  double scale = 1.0;    // [0.5, 2.0], nearest neighbour

  void validate() const;
};

struct Augmented {
  DepthMap depth;
  LabelMask mask;
};

/// Flips, then rotation, then scaling, applied identically to both rasters.
/// Provenance is dropped since pixels no longer map to source points.
Augmented augment(const DepthMap& dm, const LabelMask& mask, const AugmentSpec& spec);

}  // namespace binsight
