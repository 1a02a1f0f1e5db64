#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"

#include "binsight/geometry.hpp"

namespace binsight {

// ---------------------------------------------------------------------------
// PLY point clouds
//
// Written as ASCII: one `vertex` element with float x, y, z and, for labeled
// clouds, uchar label. Loading also accepts binary_little_endian files, extra
// scalar vertex properties (ignored) and further elements after `vertex`.
// ---------------------------------------------------------------------------

void save_cloud(const std::filesystem::path& path, const PointCloud& cloud);
PointCloud load_cloud(const std::filesystem::path& path);

std::string encode_ply(const PointCloud& cloud);
PointCloud decode_ply(std::span<const char> bytes, const std::string& name);

// ---------------------------------------------------------------------------
// BDM1 depth maps
//
//   "BDM1" | u32 width | u32 height | f32 resolution_mm | f32 origin_x |
//   f32 origin_y | u8 has_mask | width*height f32 heights | [width*height u8]
//
// Little-endian, row-major, quiet NaN marks invalid pixels. 25-byte header.
// ---------------------------------------------------------------------------

inline constexpr std::size_t kDepthMapHeaderBytes = 25;

struct DepthMapFile {
  DepthMap depth;
  std::optional<LabelMask> mask;  // validity follows the depth map
};

std::vector<std::uint8_t> encode_depthmap(const DepthMap& dm, const LabelMask* mask = nullptr);
DepthMapFile decode_depthmap(std::span<const std::uint8_t> bytes, const std::string& name);

void save_depthmap(const std::filesystem::path& path, const DepthMap& dm,
                   const LabelMask* mask = nullptr);
DepthMapFile load_depthmap(const std::filesystem::path& path);

// ---------------------------------------------------------------------------
// PNG exports, for people to look at. Nothing is loaded back from them.
// ---------------------------------------------------------------------------

struct RgbImage {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> pixels;  // r, g, b interleaved, row-major

  friend bool operator==(const RgbImage&, const RgbImage&) = default;
};

std::vector<std::uint8_t> encode_png(const RgbImage& image);
/// 16-bit grayscale, valid heights min-max scaled to [1, 65535], invalid 0.
void export_png(const std::filesystem::path& path, const DepthMap& dm);
/// 8-bit grayscale, workpiece 255, background 0.
void export_mask_png(const std::filesystem::path& path, const LabelMask& mask);
void write_png(const std::filesystem::path& path, const RgbImage& image);

// ---------------------------------------------------------------------------
// Manifest
// ---------------------------------------------------------------------------

enum class ScanKind { Real, Synthetic };
enum class Split { Train, Val, Test, Unassigned };

const char* to_string(ScanKind kind);
const char* to_string(Split split);

struct ScanEntry {
  std::string id;
  ScanKind kind = ScanKind::Synthetic;
  // Relative to the manifest's directory unless absolute.
  std::string cloud_path;
  std::string depthmap_path;
  std::string mask_path;
  std::string sensor;
  std::string bin;
  std::string workpiece;
  Split split = Split::Unassigned;
  bool corrected = false;
  nlohmann::json extra = nlohmann::json::object();  // generator record, if any
};

struct Manifest {
  std::vector<ScanEntry> scans;
  nlohmann::json meta = nlohmann::json::object();

  const ScanEntry* find(const std::string& id) const;
  ScanEntry* find(const std::string& id);
};

nlohmann::json to_json(const Manifest& manifest);
/// Throws ParseError on malformed JSON structure or duplicate ids.
Manifest manifest_from_json(const nlohmann::json& j, const std::string& name);

/// One message per broken entry (missing file, ...); empty when consistent.
std::vector<std::string> validate_manifest(const Manifest& manifest,
                                           const std::filesystem::path& base_dir);

void save_manifest(const std::filesystem::path& path, const Manifest& manifest);
/// Throws ParseError listing every broken entry when validate_files is set.
Manifest load_manifest(const std::filesystem::path& path, bool validate_files = true);

std::filesystem::path resolve(const std::filesystem::path& base_dir, const std::string& p);

struct SplitFractions {
  double train = 0.8;
  double val = 0.1;
  double test = 0.1;
};

/// Seeded, stratified by workpiece: the test share is spread evenly over all
/// workpieces, validation is drawn at random from the rest. Throws
/// InvalidArgument for fractions not summing to 1 and StratifyError when some
/// workpiece cannot supply its test quota.
Manifest split_dataset(const Manifest& manifest, const SplitFractions& fractions,
                       std::uint64_t seed);

/// Whole-file helpers with errors naming the path.
std::vector<std::uint8_t> read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, std::span<const std::uint8_t> bytes);

}  // namespace binsight
