#include <gtest/gtest.h>

#include <cstring>
#include <fstream>
#include <map>

#include "binsight/dataset.hpp"
#include "binsight/errors.hpp"
#include "test_util.hpp"

using namespace binsight;
using binsight::testing::TempDir;
using binsight::testing::random_cloud;
using binsight::testing::random_depth;
using binsight::testing::random_mask;
using binsight::testing::same_bits;

namespace {

PointCloud decode(const std::string& text, const std::string& name = "t.ply") {
  return decode_ply(std::span<const char>(text.data(), text.size()), name);
}

void expect_same_cloud(const PointCloud& a, const PointCloud& b) {
  ASSERT_EQ(a.size(), b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    ASSERT_TRUE(same_bits(a.points[i].x, b.points[i].x) && same_bits(a.points[i].y, b.points[i].y) &&
                same_bits(a.points[i].z, b.points[i].z))
        << i;
  }
  EXPECT_EQ(a.labels, b.labels);
}

ScanEntry entry(const std::string& id, const std::string& wp) {
  ScanEntry e;
  e.id = id;
  e.cloud_path = id + ".ply";
  e.workpiece = wp;
  return e;
}

std::uint32_t be32(const std::vector<std::uint8_t>& b, std::size_t at) {
  return (std::uint32_t(b[at]) << 24) | (std::uint32_t(b[at + 1]) << 16) |
         (std::uint32_t(b[at + 2]) << 8) | b[at + 3];
}

}  // namespace

// ---------------------------------------------------------------------------
// PLY

TEST(Ply, RoundTripIsBitExact) {
  Rng rng(3);
  for (int trial = 0; trial < 30; ++trial) {
    PointCloud c = random_cloud(rng, static_cast<std::size_t>(rng.uniform_int(0, 3000)),
                                rng.uniform(1e-3, 1e4), 1e3, trial % 2 == 0);
    c.source_id = "scan_" + std::to_string(trial);
    if (!c.points.empty()) c.points[0] = {1e-30f, -0.0f, 3.4e38f};
    const auto text = encode_ply(c);
    const auto back = decode(text);
    expect_same_cloud(c, back);
    EXPECT_EQ(back.source_id, c.source_id);
  }
}

TEST(Ply, SaveLoadAndStemAsDefaultId) {
  TempDir dir("ply");
  PointCloud c;
  c.points = {{1.5f, 2.25f, -3}, {0, 0, 0}};
  c.labels = std::vector<std::uint8_t>{1, 0};
  c.source_id = "x";
  save_cloud(dir / "a.ply", c);
  expect_same_cloud(load_cloud(dir / "a.ply"), c);
  const auto plain = decode(
      "ply\nformat ascii 1.0\nelement vertex 1\nproperty float x\nproperty float y\n"
      "property float z\nend_header\n1 2 3\n",
      "/some/dir/stem.ply");
  EXPECT_EQ(plain.source_id, "stem");
  EXPECT_FALSE(plain.labeled());
  EXPECT_THROW(load_cloud(dir / "missing.ply"), IoError);
}

TEST(Ply, TruncatedBodyReportsLine) {
  const std::string text =
      "ply\nformat ascii 1.0\nelement vertex 3\nproperty float x\nproperty float y\n"
      "property float z\nend_header\n0 0 0\n1 1 1\n";
  try {
    decode(text, "trunc.ply");
    FAIL();
  } catch (const ParseError& e) {
    EXPECT_EQ(e.line(), 10u);
    EXPECT_EQ(e.file(), "trunc.ply");
    EXPECT_NE(std::string(e.what()).find("declares 3 rows, file ends after 2"), std::string::npos)
        << e.what();
  }
}

TEST(Ply, MalformedInputs) {
  const std::string head = "ply\nformat ascii 1.0\nelement vertex 1\nproperty float x\n"
                           "property float y\nproperty float z\n";
  EXPECT_THROW(decode("plx\n"), ParseError);
  EXPECT_THROW(decode(head + "end_header\n1 2\n"), ParseError);
  EXPECT_THROW(decode(head + "end_header\n1 2 abc\n"), ParseError);
  EXPECT_THROW(decode(head + "property uchar label\nend_header\n1 2 3 4\n"), ParseError);
  EXPECT_THROW(decode("ply\nformat binary_big_endian 1.0\nend_header\n"), ParseError);
  EXPECT_THROW(decode("ply\nformat ascii 1.0\nelement vertex 1\nproperty float x\nend_header\n1\n"),
               ParseError);
}

TEST(Ply, ExtraPropertiesAndElementsAreIgnored) {
  const auto c = decode(
      "ply\nformat ascii 1.0\ncomment made elsewhere\nelement vertex 2\nproperty double x\n"
      "property double y\nproperty double z\nproperty uchar red\nproperty uchar label\n"
      "element face 1\nproperty list uchar int vertex_indices\nend_header\n"
      "1 2 3 255 1\n4 5 6 0 0\n3 0 1 1\n");
  EXPECT_EQ(c.points, (std::vector<Point3>{{1, 2, 3}, {4, 5, 6}}));
  EXPECT_EQ(*c.labels, (std::vector<std::uint8_t>{1, 0}));
}

TEST(Ply, BinaryLittleEndian) {
  std::string text =
      "ply\nformat binary_little_endian 1.0\nelement vertex 2\nproperty float x\n"
      "property float y\nproperty float z\nproperty uchar label\nend_header\n";
  const float v[6] = {1.25f, -2, 3, 7, 8, 9.5f};
  const std::uint8_t labels[2] = {0, 1};
  for (int i = 0; i < 2; ++i) {
    text.append(reinterpret_cast<const char*>(v + 3 * i), 12);
    text.push_back(static_cast<char>(labels[i]));
  }
  const auto c = decode(text);
  EXPECT_EQ(c.points, (std::vector<Point3>{{1.25f, -2, 3}, {7, 8, 9.5f}}));
  EXPECT_EQ(*c.labels, (std::vector<std::uint8_t>{0, 1}));
  text.pop_back();
  EXPECT_THROW(decode(text), ParseError);
}

TEST(Ply, RejectsNonFiniteOnWrite) {
  PointCloud c;
  c.points = {{0, std::nanf(""), 0}};
  EXPECT_THROW(encode_ply(c), InvalidPoint);
}

// ---------------------------------------------------------------------------
// BDM1

TEST(Bdm, RoundTripWithMaskAndHoles) {
  Rng rng(8);
  for (int trial = 0; trial < 50; ++trial) {
    const int w = static_cast<int>(rng.uniform_int(1, 40)), h = static_cast<int>(rng.uniform_int(1, 40));
    DepthMap dm = random_depth(rng, w, h, 0.3, -50, 50);
    dm.resolution_mm = static_cast<float>(rng.uniform(0.1, 4));
    dm.origin_x_mm = static_cast<float>(rng.uniform(-100, 100));
    dm.origin_y_mm = static_cast<float>(rng.uniform(-100, 100));
    LabelMask mask = random_mask(rng, w, h, 0.5);
    for (std::size_t i = 0; i < mask.size(); ++i) mask.valid[i] = dm.valid[i];
    const bool with_mask = trial % 2 == 0;
    const auto bytes = encode_depthmap(dm, with_mask ? &mask : nullptr);
    ASSERT_EQ(bytes.size(), kDepthMapHeaderBytes + dm.size() * (with_mask ? 5 : 4));
    const auto f = decode_depthmap(bytes, "m.bdm");
    ASSERT_EQ(f.depth.width, w);
    ASSERT_EQ(f.depth.valid, dm.valid);
    EXPECT_TRUE(same_bits(f.depth.resolution_mm, dm.resolution_mm));
    EXPECT_TRUE(same_bits(f.depth.origin_x_mm, dm.origin_x_mm));
    for (std::size_t i = 0; i < dm.size(); ++i) {
      if (dm.valid[i]) ASSERT_TRUE(same_bits(f.depth.heights[i], dm.heights[i]));
      else ASSERT_TRUE(std::isnan(f.depth.heights[i]));
    }
    ASSERT_EQ(f.mask.has_value(), with_mask);
    if (with_mask) {
      EXPECT_EQ(f.mask->labels, mask.labels);
      EXPECT_EQ(f.mask->valid, mask.valid);
    }
    EXPECT_EQ(encode_depthmap(f.depth, f.mask ? &*f.mask : nullptr), bytes);
  }
}

TEST(Bdm, HeaderLayout) {
  DepthMap dm = DepthMap::blank(2, 3, 0.5f, 10.f, 20.f);
  dm.set(0, 1.f);
  const auto b = encode_depthmap(dm);
  EXPECT_EQ(std::memcmp(b.data(), "BDM1", 4), 0);
  EXPECT_EQ(b[4], 2);
  EXPECT_EQ(b[8], 3);
  EXPECT_EQ(b[24], 0);
  std::uint32_t hole;
  std::memcpy(&hole, b.data() + 25 + 4, 4);
  EXPECT_EQ(hole, 0x7fc00000u);
}

TEST(Bdm, CorruptFilesAreRejected) {
  DepthMap dm = DepthMap::blank(4, 4);
  dm.set(3, 2.f);
  LabelMask m = LabelMask::blank(4, 4);
  auto bytes = encode_depthmap(dm, &m);
  auto cut = bytes;
  cut.pop_back();
  try {
    decode_depthmap(cut, "cut.bdm");
    FAIL();
  } catch (const ParseError& e) {
    EXPECT_NE(std::string(e.what()).find("expected 105 bytes, found 104"), std::string::npos) << e.what();
  }
  auto bad = bytes;
  bad[0] = 'X';
  EXPECT_THROW(decode_depthmap(bad, "b"), ParseError);
  bad = bytes;
  bad[24] = 2;
  EXPECT_THROW(decode_depthmap(bad, "b"), ParseError);
  bad = bytes;
  bad.back() = 9;
  EXPECT_THROW(decode_depthmap(bad, "b"), ParseError);
  EXPECT_THROW(decode_depthmap(std::vector<std::uint8_t>(10), "b"), ParseError);
  EXPECT_THROW(encode_depthmap(dm, &*std::make_unique<LabelMask>(LabelMask::blank(3, 4))),
               ShapeMismatch);
}

// ---------------------------------------------------------------------------
// PNG

TEST(Png, ExportHeaders) {
  TempDir dir("png");
  DepthMap dm = DepthMap::blank(5, 3);
  dm.set(0, 1.f);
  dm.set(4, 2.f);
  export_png(dir / "d.png", dm);
  export_mask_png(dir / "m.png", LabelMask::blank(5, 3, kWorkpiece, true));
  for (const auto& [name, depth, color] : {std::tuple{"d.png", 16, 0}, std::tuple{"m.png", 8, 0}}) {
    const auto b = read_file(dir / name);
    ASSERT_GT(b.size(), 33u);
    EXPECT_EQ(std::memcmp(b.data(), "\x89PNG\r\n\x1a\n", 8), 0);
    EXPECT_EQ(be32(b, 16), 5u);
    EXPECT_EQ(be32(b, 20), 3u);
    EXPECT_EQ(b[24], depth);
    EXPECT_EQ(b[25], color);
  }
  RgbImage img{2, 2, std::vector<std::uint8_t>(12, 200)};
  const auto rgb = encode_png(img);
  EXPECT_EQ(rgb[25], 2);
  img.pixels.pop_back();
  EXPECT_THROW(encode_png(img), InvalidArgument);
}

// ---------------------------------------------------------------------------
// Manifest

TEST(Manifest, JsonRoundTripAndValidation) {
  TempDir dir("manifest");
  Manifest m;
  m.meta = {{"who", "test"}};
  auto a = entry("a", "plate");
  a.kind = ScanKind::Real;
  a.split = Split::Val;
  a.corrected = true;
  a.extra = {{"seed", 5}};
  m.scans = {a, entry("b", "disc")};
  const auto back = manifest_from_json(to_json(m), "m.json");
  EXPECT_EQ(to_json(back), to_json(m));
  EXPECT_EQ(back.find("a")->split, Split::Val);
  EXPECT_EQ(back.find("zzz"), nullptr);

  save_manifest(dir / "manifest.json", m);
  EXPECT_EQ(validate_manifest(m, dir.path()).size(), 2u);
  try {
    load_manifest(dir / "manifest.json");
    FAIL();
  } catch (const ParseError& e) {
    EXPECT_NE(std::string(e.what()).find("a.ply"), std::string::npos);
    EXPECT_NE(std::string(e.what()).find("b.ply"), std::string::npos);
  }
  EXPECT_EQ(load_manifest(dir / "manifest.json", false).scans.size(), 2u);
  std::ofstream(dir / "a.ply") << "x";
  std::ofstream(dir / "b.ply") << "x";
  EXPECT_TRUE(validate_manifest(m, dir.path()).empty());
  EXPECT_NO_THROW(load_manifest(dir / "manifest.json"));
}

TEST(Manifest, StructuralErrors) {
  auto j = to_json(Manifest{{entry("a", "p"), entry("b", "p")}, {}});
  auto dup = j;
  dup["scans"][1]["id"] = "a";
  EXPECT_THROW(manifest_from_json(dup, "m"), ParseError);
  auto kind = j;
  kind["scans"][0]["kind"] = "imaginary";
  EXPECT_THROW(manifest_from_json(kind, "m"), ParseError);
  auto split = j;
  split["scans"][0]["split"] = "holdout";
  EXPECT_THROW(manifest_from_json(split, "m"), ParseError);
  EXPECT_THROW(manifest_from_json(nlohmann::json::array(), "m"), ParseError);
  TempDir dir("badjson");
  std::ofstream(dir / "manifest.json") << "{ not json";
  EXPECT_THROW(load_manifest(dir / "manifest.json"), ParseError);
}

// ---------------------------------------------------------------------------
// Split

namespace {
Manifest stratified(int workpieces, int per) {
  Manifest m;
  for (int w = 0; w < workpieces; ++w) {
    for (int k = 0; k < per; ++k) {
      m.scans.push_back(entry("s" + std::to_string(w) + "_" + std::to_string(k), "wp" + std::to_string(w)));
    }
  }
  return m;
}
}  // namespace

TEST(SplitDataset, FractionsAndStratification) {
  const auto m = stratified(12, 40);  // 480 scans
  const auto s = split_dataset(m, {}, 42);
  std::map<Split, int> counts;
  std::map<std::string, int> test_per_wp;
  for (const auto& e : s.scans) {
    ++counts[e.split];
    if (e.split == Split::Test) ++test_per_wp[e.workpiece];
  }
  EXPECT_EQ(counts[Split::Train], 384);
  EXPECT_EQ(counts[Split::Val], 48);
  EXPECT_EQ(counts[Split::Test], 48);
  EXPECT_EQ(test_per_wp.size(), 12u);
  for (const auto& [wp, n] : test_per_wp) EXPECT_EQ(n, 4) << wp;
  EXPECT_EQ(s.meta.at("split").at("counts"), (nlohmann::json{384, 48, 48}));
  // Order and ids are kept; only the split field changes.
  for (std::size_t i = 0; i < m.scans.size(); ++i) EXPECT_EQ(s.scans[i].id, m.scans[i].id);
}

TEST(SplitDataset, SeededAndUneven) {
  const auto m = stratified(3, 7);
  const auto a = split_dataset(m, {0.6, 0.2, 0.2}, 1);
  const auto b = split_dataset(m, {0.6, 0.2, 0.2}, 1);
  EXPECT_EQ(to_json(a), to_json(b));
  const auto c = split_dataset(m, {0.6, 0.2, 0.2}, 2);
  EXPECT_NE(to_json(a), to_json(c));
  std::map<std::string, int> t;
  int test = 0;
  for (const auto& e : a.scans) {
    if (e.split == Split::Test) {
      ++test;
      ++t[e.workpiece];
    }
  }
  EXPECT_EQ(test, 4);  // round(0.2 * 21)
  EXPECT_EQ(t.size(), 3u);
  for (const auto& [wp, n] : t) EXPECT_TRUE(n == 1 || n == 2);
}

TEST(SplitDataset, Errors) {
  const auto m = stratified(12, 3);  // 36 scans: test quota 4 < 12 workpieces
  EXPECT_THROW(split_dataset(m, {}, 0), StratifyError);
  EXPECT_THROW(split_dataset(m, {0.5, 0.5, 0.5}, 0), InvalidArgument);
  EXPECT_THROW(split_dataset(m, {1.2, -0.1, -0.1}, 0), InvalidArgument);
  EXPECT_NO_THROW(split_dataset(m, {1.0, 0.0, 0.0}, 0));
}
