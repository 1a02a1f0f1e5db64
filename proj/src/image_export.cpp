#include <png.h>

#include <algorithm>
#include <cmath>

#include "binsight/dataset.hpp"
#include "binsight/errors.hpp"

namespace binsight {

namespace {

// Encodes rows of `bytes_per_row` bytes; 16-bit samples must already be big-endian.
std::vector<std::uint8_t> encode(int width, int height, int bit_depth, int color_type,
                                 const std::vector<std::uint8_t>& data, std::size_t bytes_per_row) {
  if (width <= 0 || height <= 0) throw InvalidArgument("cannot encode an empty image");
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  if (!png) throw IoError("png: cannot create writer");
  png_infop info = png_create_info_struct(png);
  if (!info) {
    png_destroy_write_struct(&png, nullptr);
    throw IoError("png: cannot create info struct");
  }
  std::vector<std::uint8_t> out;
  std::vector<png_bytep> rows(static_cast<std::size_t>(height));
  for (int y = 0; y < height; ++y) {
    rows[static_cast<std::size_t>(y)] =
        const_cast<png_bytep>(data.data() + static_cast<std::size_t>(y) * bytes_per_row);
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw IoError("png: encoding failed");
  }
  png_set_write_fn(
      png, &out,
      [](png_structp p, png_bytep buf, png_size_t n) {
        auto* v = static_cast<std::vector<std::uint8_t>*>(png_get_io_ptr(p));
        v->insert(v->end(), buf, buf + n);
      },
      nullptr);
  png_set_IHDR(png, info, static_cast<png_uint_32>(width), static_cast<png_uint_32>(height),
               bit_depth, color_type, PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT,
               PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  png_write_image(png, rows.data());
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
  return out;
}

}  // namespace

std::vector<std::uint8_t> encode_png(const RgbImage& image) {
  if (image.pixels.size() != static_cast<std::size_t>(image.width) * image.height * 3) {
    throw InvalidArgument("RGB buffer does not match the image size");
  }
  return encode(image.width, image.height, 8, PNG_COLOR_TYPE_RGB, image.pixels,
                static_cast<std::size_t>(image.width) * 3);
}

void write_png(const std::filesystem::path& path, const RgbImage& image) {
  write_file(path, encode_png(image));
}

void export_png(const std::filesystem::path& path, const DepthMap& dm) {
  float lo = INFINITY, hi = -INFINITY;
  for (std::size_t i = 0; i < dm.size(); ++i) {
    if (!dm.valid[i]) continue;
    lo = std::min(lo, dm.heights[i]);
    hi = std::max(hi, dm.heights[i]);
  }
  std::vector<std::uint8_t> data(dm.size() * 2, 0);
  for (std::size_t i = 0; i < dm.size(); ++i) {
    if (!dm.valid[i]) continue;
    const double t = hi > lo ? (dm.heights[i] - lo) / static_cast<double>(hi - lo) : 1.0;
    const auto v = static_cast<std::uint16_t>(1 + std::lround(t * 65534.0));
    data[2 * i] = static_cast<std::uint8_t>(v >> 8);
    data[2 * i + 1] = static_cast<std::uint8_t>(v & 0xff);
  }
  write_file(path, encode(dm.width, dm.height, 16, PNG_COLOR_TYPE_GRAY, data,
                         static_cast<std::size_t>(dm.width) * 2));
}

void export_mask_png(const std::filesystem::path& path, const LabelMask& mask) {
  std::vector<std::uint8_t> data(mask.size());
  for (std::size_t i = 0; i < mask.size(); ++i) data[i] = mask.labels[i] ? 255 : 0;
  write_file(path, encode(mask.width, mask.height, 8, PNG_COLOR_TYPE_GRAY, data,
                         static_cast<std::size_t>(mask.width)));
}

}  // namespace binsight
