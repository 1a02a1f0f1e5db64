#include "binsight/dataset.hpp"

#include <algorithm>
#include <bit>
#include <charconv>
#include <cmath>
#include <cstring>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <string_view>

#include "binsight/errors.hpp"
#include "binsight/rng.hpp"

namespace binsight {

namespace fs = std::filesystem;

std::vector<std::uint8_t> read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path.string() + "' for reading");
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                  std::istreambuf_iterator<char>());
  if (in.bad()) throw IoError("error while reading '" + path.string() + "'");
  return bytes;
}

void write_file(const fs::path& path, std::span<const std::uint8_t> bytes) {
  // Write next to the target and rename, so readers never see half a file.
  fs::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open '" + tmp.string() + "' for writing");
    out.write(reinterpret_cast<const char*>(bytes.data()),
              static_cast<std::streamsize>(bytes.size()));
    out.flush();
    if (!out) throw IoError("error while writing '" + tmp.string() + "'");
  }
  std::error_code ec;
  fs::rename(tmp, path, ec);
  if (ec) throw IoError("cannot move '" + tmp.string() + "' to '" + path.string() + "': " + ec.message());
}

// ---------------------------------------------------------------------------
// PLY
// ---------------------------------------------------------------------------

namespace {

void append_float(std::string& out, float v) {
  char buf[32];
  const auto r = std::to_chars(buf, buf + sizeof buf, v);
  out.append(buf, r.ptr);
}

enum class PlyType { I8, U8, I16, U16, I32, U32, F32, F64 };

std::optional<PlyType> ply_type(std::string_view s) {
  if (s == "char" || s == "int8") return PlyType::I8;
  if (s == "uchar" || s == "uint8") return PlyType::U8;
  if (s == "short" || s == "int16") return PlyType::I16;
  if (s == "ushort" || s == "uint16") return PlyType::U16;
  if (s == "int" || s == "int32") return PlyType::I32;
  if (s == "uint" || s == "uint32") return PlyType::U32;
  if (s == "float" || s == "float32") return PlyType::F32;
  if (s == "double" || s == "float64") return PlyType::F64;
  return std::nullopt;
}

std::size_t type_size(PlyType t) {
  switch (t) {
    case PlyType::I8: case PlyType::U8: return 1;
    case PlyType::I16: case PlyType::U16: return 2;
    case PlyType::I32: case PlyType::U32: case PlyType::F32: return 4;
    case PlyType::F64: return 8;
  }
  return 0;
}

double read_binary(const char* p, PlyType t) {
  std::uint8_t b[8];
  std::memcpy(b, p, type_size(t));
  auto le = [&](int n) {
    std::uint64_t v = 0;
    for (int i = 0; i < n; ++i) v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
    return v;
  };
  switch (t) {
    case PlyType::I8: return static_cast<std::int8_t>(b[0]);
    case PlyType::U8: return b[0];
    case PlyType::I16: return static_cast<std::int16_t>(le(2));
    case PlyType::U16: return static_cast<std::uint16_t>(le(2));
    case PlyType::I32: return static_cast<std::int32_t>(le(4));
    case PlyType::U32: return static_cast<std::uint32_t>(le(4));
    case PlyType::F32: return std::bit_cast<float>(static_cast<std::uint32_t>(le(4)));
    case PlyType::F64: return std::bit_cast<double>(le(8));
  }
  return 0;
}

struct PlyProperty {
  std::string name;
  PlyType type = PlyType::F32;
  bool list = false;
};

struct PlyElement {
  std::string name;
  std::size_t count = 0;
  std::vector<PlyProperty> properties;
};

std::vector<std::string_view> split_ws(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t i = 0;
  while (i < line.size()) {
    while (i < line.size() && (line[i] == ' ' || line[i] == '\t' || line[i] == '\r')) ++i;
    std::size_t j = i;
    while (j < line.size() && line[j] != ' ' && line[j] != '\t' && line[j] != '\r') ++j;
    if (j > i) out.push_back(line.substr(i, j - i));
    i = j;
  }
  return out;
}

class LineReader {
 public:
  LineReader(std::span<const char> bytes) : data_(bytes.data(), bytes.size()) {}
  bool next(std::string_view& line) {
    if (pos_ >= data_.size()) return false;
    const auto end = data_.find('\n', pos_);
    const auto stop = end == std::string_view::npos ? data_.size() : end;
    line = data_.substr(pos_, stop - pos_);
    pos_ = stop == data_.size() ? stop : stop + 1;
    ++line_no_;
    return true;
  }
  std::size_t line_no() const { return line_no_; }
  std::size_t offset() const { return pos_; }

 private:
  std::string_view data_;
  std::size_t pos_ = 0;
  std::size_t line_no_ = 0;
};

}  // namespace

std::string encode_ply(const PointCloud& cloud) {
  cloud.check();
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    const auto& p = cloud.points[i];
    if (!std::isfinite(p.x) || !std::isfinite(p.y) || !std::isfinite(p.z)) {
      throw InvalidPoint("point " + std::to_string(i) + " is not finite");
    }
  }
  std::string out = "ply\nformat ascii 1.0\n";
  if (!cloud.source_id.empty()) out += "comment source_id " + cloud.source_id + "\n";
  out += "element vertex " + std::to_string(cloud.size()) + "\n";
  out += "property float x\nproperty float y\nproperty float z\n";
  if (cloud.labeled()) out += "property uchar label\n";
  out += "end_header\n";
  out.reserve(out.size() + cloud.size() * 28);
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    const auto& p = cloud.points[i];
    append_float(out, p.x);
    out += ' ';
    append_float(out, p.y);
    out += ' ';
    append_float(out, p.z);
    if (cloud.labeled()) {
      out += ' ';
      out += static_cast<char>('0' + (*cloud.labels)[i]);
    }
    out += '\n';
  }
  return out;
}

PointCloud decode_ply(std::span<const char> bytes, const std::string& name) {
  LineReader reader(bytes);
  std::string_view line;
  auto fail = [&](const std::string& what) -> ParseError {
    return ParseError(name, reader.line_no(), what);
  };
  if (!reader.next(line) || split_ws(line) != std::vector<std::string_view>{"ply"}) {
    throw fail("missing 'ply' magic");
  }
  bool binary = false, have_format = false;
  std::vector<PlyElement> elements;
  PointCloud cloud;
  for (;;) {
    if (!reader.next(line)) throw fail("header ends without 'end_header'");
    const auto tok = split_ws(line);
    if (tok.empty()) continue;
    if (tok[0] == "end_header") break;
    if (tok[0] == "comment" || tok[0] == "obj_info") {
      if (tok.size() >= 3 && tok[1] == "source_id") {
        const auto at = line.find("source_id") + std::strlen("source_id ");
        cloud.source_id = std::string(line.substr(std::min(at, line.size())));
        while (!cloud.source_id.empty() && cloud.source_id.back() == '\r') cloud.source_id.pop_back();
      }
      continue;
    }
    if (tok[0] == "format") {
      if (tok.size() != 3) throw fail("malformed format line");
      if (tok[1] == "ascii") binary = false;
      else if (tok[1] == "binary_little_endian") binary = true;
      else throw fail("unsupported PLY format '" + std::string(tok[1]) + "'");
      have_format = true;
      continue;
    }
    if (tok[0] == "element") {
      if (tok.size() != 3) throw fail("malformed element line");
      std::size_t count = 0;
      const auto r = std::from_chars(tok[2].data(), tok[2].data() + tok[2].size(), count);
      if (r.ec != std::errc() || r.ptr != tok[2].data() + tok[2].size()) {
        throw fail("bad element count '" + std::string(tok[2]) + "'");
      }
      elements.push_back({std::string(tok[1]), count, {}});
      continue;
    }
    if (tok[0] == "property") {
      if (elements.empty()) throw fail("property before any element");
      PlyProperty prop;
      if (tok.size() == 5 && tok[1] == "list") {
        prop.list = true;
        prop.name = tok[4];
        const auto t = ply_type(tok[3]);
        if (!t || !ply_type(tok[2])) throw fail("unknown list property type");
        prop.type = *t;
      } else if (tok.size() == 3) {
        const auto t = ply_type(tok[1]);
        if (!t) throw fail("unknown property type '" + std::string(tok[1]) + "'");
        prop.type = *t;
        prop.name = tok[2];
      } else {
        throw fail("malformed property line");
      }
      elements.back().properties.push_back(prop);
      continue;
    }
    throw fail("unexpected header line '" + std::string(line) + "'");
  }
  if (!have_format) throw fail("header has no format line");

  const auto vit = std::find_if(elements.begin(), elements.end(),
                                [](const PlyElement& e) { return e.name == "vertex"; });
  if (vit == elements.end()) throw fail("no vertex element");
  int ix = -1, iy = -1, iz = -1, il = -1;
  for (std::size_t k = 0; k < vit->properties.size(); ++k) {
    const auto& p = vit->properties[k];
    if (p.list) throw fail("list properties on vertex are not supported");
    const int ki = static_cast<int>(k);
    if (p.name == "x") ix = ki;
    if (p.name == "y") iy = ki;
    if (p.name == "z") iz = ki;
    if (p.name == "label") il = ki;
  }
  if (ix < 0 || iy < 0 || iz < 0) throw fail("vertex element lacks x, y or z");
  const std::size_t n = vit->count;
  cloud.points.resize(n);
  std::vector<std::uint8_t> labels;
  if (il >= 0) labels.resize(n);
  if (cloud.source_id.empty()) cloud.source_id = fs::path(name).stem().string();

  auto store = [&](std::size_t i, const std::vector<double>& v, std::size_t line_no) {
    cloud.points[i] = {static_cast<float>(v[ix]), static_cast<float>(v[iy]),
                       static_cast<float>(v[iz])};
    if (il >= 0) {
      if (v[il] != 0.0 && v[il] != 1.0) {
        throw ParseError(name, line_no, "label " + std::to_string(v[il]) + " is not 0 or 1");
      }
      labels[i] = static_cast<std::uint8_t>(v[il]);
    }
  };

  std::vector<double> values(vit->properties.size());
  if (!binary) {
    for (auto eit = elements.begin(); eit != elements.end(); ++eit) {
      const bool is_vertex = eit == vit;
      for (std::size_t i = 0; i < eit->count; ++i) {
        if (!reader.next(line)) {
          throw ParseError(name, reader.line_no() + 1,
                           "element '" + eit->name + "' declares " + std::to_string(eit->count) +
                               " rows, file ends after " + std::to_string(i));
        }
        if (!is_vertex) continue;
        const auto tok = split_ws(line);
        if (tok.size() != values.size()) {
          throw fail("vertex row has " + std::to_string(tok.size()) + " values, expected " +
                     std::to_string(values.size()));
        }
        for (std::size_t k = 0; k < tok.size(); ++k) {
          const char* b = tok[k].data();
          const char* e = b + tok[k].size();
          std::from_chars_result r;
          if (vit->properties[k].type == PlyType::F32) {
            float f = 0;
            r = std::from_chars(b, e, f);
            values[k] = f;
          } else {
            r = std::from_chars(b, e, values[k]);
          }
          if (r.ec != std::errc() || r.ptr != e) {
            throw fail("bad number '" + std::string(tok[k]) + "'");
          }
        }
        store(i, values, reader.line_no());
      }
    }
    while (reader.next(line)) {
      if (!split_ws(line).empty()) throw fail("unexpected data after the last element");
    }
  } else {
    if (vit != elements.begin()) throw fail("binary PLY must start with the vertex element");
    std::size_t stride = 0;
    for (const auto& p : vit->properties) stride += type_size(p.type);
    const std::size_t start = reader.offset();
    const std::size_t need = start + stride * n;
    if (bytes.size() < need) {
      throw ParseError(name, 0, "binary vertex data truncated: expected " +
                                    std::to_string(stride * n) + " bytes, found " +
                                    std::to_string(bytes.size() - start));
    }
    const char* p = bytes.data() + start;
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t k = 0; k < values.size(); ++k) {
        values[k] = read_binary(p, vit->properties[k].type);
        p += type_size(vit->properties[k].type);
      }
      store(i, values, 0);
    }
  }
  if (il >= 0) cloud.labels = std::move(labels);
  return cloud;
}

void save_cloud(const fs::path& path, const PointCloud& cloud) {
  const std::string text = encode_ply(cloud);
  write_file(path, std::span(reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
}

PointCloud load_cloud(const fs::path& path) {
  const auto bytes = read_file(path);
  return decode_ply(std::span(reinterpret_cast<const char*>(bytes.data()), bytes.size()),
                    path.string());
}

// ---------------------------------------------------------------------------
// BDM1
// ---------------------------------------------------------------------------

namespace {

constexpr char kBdmMagic[4] = {'B', 'D', 'M', '1'};

void put32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int b = 0; b < 4; ++b) out.push_back(static_cast<std::uint8_t>(v >> (8 * b)));
}

std::uint32_t get32(const std::uint8_t* p) {
  std::uint32_t v = 0;
  for (int b = 0; b < 4; ++b) v |= static_cast<std::uint32_t>(p[b]) << (8 * b);
  return v;
}

}  // namespace

std::vector<std::uint8_t> encode_depthmap(const DepthMap& dm, const LabelMask* mask) {
  if (dm.width <= 0 || dm.height <= 0 || dm.heights.size() != dm.size() ||
      dm.valid.size() != dm.size()) {
    throw InvalidArgument("depth map buffers do not match its " + std::to_string(dm.width) + "x" +
                          std::to_string(dm.height) + " shape");
  }
  if (mask && (mask->width != dm.width || mask->height != dm.height)) {
    throw ShapeMismatch("mask is " + std::to_string(mask->width) + "x" +
                        std::to_string(mask->height) + ", depth map is " +
                        std::to_string(dm.width) + "x" + std::to_string(dm.height));
  }
  const std::size_t n = dm.size();
  std::vector<std::uint8_t> out;
  out.reserve(kDepthMapHeaderBytes + 4 * n + (mask ? n : 0));
  out.insert(out.end(), kBdmMagic, kBdmMagic + 4);
  put32(out, static_cast<std::uint32_t>(dm.width));
  put32(out, static_cast<std::uint32_t>(dm.height));
  put32(out, std::bit_cast<std::uint32_t>(dm.resolution_mm));
  put32(out, std::bit_cast<std::uint32_t>(dm.origin_x_mm));
  put32(out, std::bit_cast<std::uint32_t>(dm.origin_y_mm));
  out.push_back(mask ? 1 : 0);
  const float nan = std::numeric_limits<float>::quiet_NaN();
  for (std::size_t i = 0; i < n; ++i) {
    put32(out, std::bit_cast<std::uint32_t>(dm.valid[i] ? dm.heights[i] : nan));
  }
  if (mask) out.insert(out.end(), mask->labels.begin(), mask->labels.end());
  return out;
}

DepthMapFile decode_depthmap(std::span<const std::uint8_t> bytes, const std::string& name) {
  if (bytes.size() < kDepthMapHeaderBytes) {
    throw ParseError(name, 0, "file is " + std::to_string(bytes.size()) +
                                  " bytes, shorter than the " +
                                  std::to_string(kDepthMapHeaderBytes) + "-byte header");
  }
  if (std::memcmp(bytes.data(), kBdmMagic, 4) != 0) throw ParseError(name, 0, "bad magic, expected BDM1");
  const std::uint32_t w = get32(bytes.data() + 4), h = get32(bytes.data() + 8);
  const std::uint8_t has_mask = bytes[24];
  if (has_mask > 1) throw ParseError(name, 0, "has_mask flag is " + std::to_string(has_mask));
  if (w == 0 || h == 0 || static_cast<std::uint64_t>(w) * h > (1ull << 28)) {
    throw ParseError(name, 0, "implausible size " + std::to_string(w) + "x" + std::to_string(h));
  }
  const std::uint64_t n = static_cast<std::uint64_t>(w) * h;
  const std::uint64_t expected = kDepthMapHeaderBytes + 4 * n + has_mask * n;
  if (bytes.size() != expected) {
    throw ParseError(name, 0, "expected " + std::to_string(expected) + " bytes, found " +
                                  std::to_string(bytes.size()));
  }
  DepthMapFile f;
  f.depth = DepthMap::blank(static_cast<int>(w), static_cast<int>(h),
                            std::bit_cast<float>(get32(bytes.data() + 12)),
                            std::bit_cast<float>(get32(bytes.data() + 16)),
                            std::bit_cast<float>(get32(bytes.data() + 20)));
  const std::uint8_t* p = bytes.data() + kDepthMapHeaderBytes;
  for (std::size_t i = 0; i < n; ++i, p += 4) {
    const float v = std::bit_cast<float>(get32(p));
    if (!std::isnan(v)) f.depth.set(i, v);
  }
  if (has_mask) {
    LabelMask m = LabelMask::blank(f.depth.width, f.depth.height, kNonWorkpiece, false);
    for (std::size_t i = 0; i < n; ++i) {
      if (p[i] > kWorkpiece) {
        throw ParseError(name, 0, "label " + std::to_string(p[i]) + " at pixel " +
                                      std::to_string(i) + " is not 0 or 1");
      }
      m.labels[i] = p[i];
      m.valid[i] = f.depth.valid[i];
    }
    f.mask = std::move(m);
  }
  return f;
}

void save_depthmap(const fs::path& path, const DepthMap& dm, const LabelMask* mask) {
  write_file(path, encode_depthmap(dm, mask));
}

DepthMapFile load_depthmap(const fs::path& path) { return decode_depthmap(read_file(path), path.string()); }

// ---------------------------------------------------------------------------
// Manifest
// ---------------------------------------------------------------------------

const char* to_string(ScanKind kind) { return kind == ScanKind::Real ? "real" : "synthetic"; }

const char* to_string(Split split) {
  switch (split) {
    case Split::Train: return "train";
    case Split::Val: return "val";
    case Split::Test: return "test";
    case Split::Unassigned: return "unassigned";
  }
  return "unassigned";
}

const ScanEntry* Manifest::find(const std::string& id) const {
  for (const auto& s : scans) {
    if (s.id == id) return &s;
  }
  return nullptr;
}

ScanEntry* Manifest::find(const std::string& id) {
  return const_cast<ScanEntry*>(std::as_const(*this).find(id));
}

nlohmann::json to_json(const Manifest& m) {
  nlohmann::json scans = nlohmann::json::array();
  for (const auto& s : m.scans) {
    nlohmann::json j = {{"id", s.id},
                        {"kind", to_string(s.kind)},
                        {"cloud_path", s.cloud_path},
                        {"depthmap_path", s.depthmap_path},
                        {"mask_path", s.mask_path},
                        {"sensor", s.sensor},
                        {"bin", s.bin},
                        {"workpiece", s.workpiece},
                        {"split", to_string(s.split)},
                        {"corrected", s.corrected}};
    if (!s.extra.empty()) j["extra"] = s.extra;
    scans.push_back(std::move(j));
  }
  return {{"version", 1}, {"meta", m.meta}, {"scans", scans}};
}

Manifest manifest_from_json(const nlohmann::json& j, const std::string& name) {
  Manifest m;
  if (!j.is_object() || !j.contains("scans") || !j["scans"].is_array()) {
    throw ParseError(name, 0, "manifest must be an object with a 'scans' array");
  }
  if (j.contains("meta")) m.meta = j["meta"];
  std::set<std::string> seen;
  std::size_t index = 0;
  for (const auto& e : j["scans"]) {
    const std::string where = "scan #" + std::to_string(index++);
    try {
      ScanEntry s;
      s.id = e.at("id").get<std::string>();
      if (s.id.empty()) throw ParseError(name, 0, where + ": empty id");
      const auto kind = e.value("kind", std::string("synthetic"));
      if (kind == "real") s.kind = ScanKind::Real;
      else if (kind == "synthetic") s.kind = ScanKind::Synthetic;
      else throw ParseError(name, 0, where + ": unknown kind '" + kind + "'");
      s.cloud_path = e.value("cloud_path", std::string());
      s.depthmap_path = e.value("depthmap_path", std::string());
      s.mask_path = e.value("mask_path", std::string());
      s.sensor = e.value("sensor", std::string());
      s.bin = e.value("bin", std::string());
      s.workpiece = e.value("workpiece", std::string());
      const auto split = e.value("split", std::string("unassigned"));
      if (split == "train") s.split = Split::Train;
      else if (split == "val") s.split = Split::Val;
      else if (split == "test") s.split = Split::Test;
      else if (split == "unassigned") s.split = Split::Unassigned;
      else throw ParseError(name, 0, where + ": unknown split '" + split + "'");
      s.corrected = e.value("corrected", false);
      if (e.contains("extra")) s.extra = e["extra"];
      if (!seen.insert(s.id).second) throw ParseError(name, 0, "duplicate scan id '" + s.id + "'");
      m.scans.push_back(std::move(s));
    } catch (const nlohmann::json::exception& ex) {
      throw ParseError(name, 0, where + ": " + ex.what());
    }
  }
  return m;
}

fs::path resolve(const fs::path& base_dir, const std::string& p) {
  const fs::path path(p);
  return path.is_absolute() ? path : base_dir / path;
}

std::vector<std::string> validate_manifest(const Manifest& m, const fs::path& base_dir) {
  std::vector<std::string> problems;
  std::set<std::string> seen;
  for (const auto& s : m.scans) {
    if (!seen.insert(s.id).second) problems.push_back("duplicate scan id '" + s.id + "'");
    if (s.cloud_path.empty()) problems.push_back("scan '" + s.id + "': no cloud_path");
    for (const auto* p : {&s.cloud_path, &s.depthmap_path, &s.mask_path}) {
      if (!p->empty() && !fs::exists(resolve(base_dir, *p))) {
        problems.push_back("scan '" + s.id + "': missing file '" + *p + "'");
      }
    }
  }
  return problems;
}

void save_manifest(const fs::path& path, const Manifest& m) {
  const std::string text = to_json(m).dump(2) + "\n";
  write_file(path, std::span(reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
}

Manifest load_manifest(const fs::path& path, bool validate_files) {
  const auto bytes = read_file(path);
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(bytes.begin(), bytes.end());
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError(path.string(), 0, e.what());
  }
  Manifest m = manifest_from_json(j, path.string());
  if (validate_files) {
    const auto problems = validate_manifest(m, path.parent_path());
    if (!problems.empty()) {
      std::string what = std::to_string(problems.size()) + " broken entr" +
                         (problems.size() == 1 ? "y" : "ies");
      for (const auto& p : problems) what += "\n  " + p;
      throw ParseError(path.string(), 0, what);
    }
  }
  return m;
}

Manifest split_dataset(const Manifest& manifest, const SplitFractions& f, std::uint64_t seed) {
  if (f.train < 0 || f.val < 0 || f.test < 0 || std::abs(f.train + f.val + f.test - 1.0) > 1e-9) {
    throw InvalidArgument("split fractions must be non-negative and sum to 1");
  }
  Manifest out = manifest;
  const std::size_t n = out.scans.size();
  const auto n_test = static_cast<std::size_t>(std::llround(f.test * static_cast<double>(n)));
  auto n_val = static_cast<std::size_t>(std::llround(f.val * static_cast<double>(n)));
  n_val = std::min(n_val, n - std::min(n, n_test));

  std::map<std::string, std::vector<std::size_t>> strata;
  for (std::size_t i = 0; i < n; ++i) strata[out.scans[i].workpiece].push_back(i);
  for (auto& s : out.scans) s.split = Split::Train;

  Rng rng(seed);
  if (n_test > 0) {
    const std::size_t w = strata.size();
    if (n_test < w) {
      throw StratifyError("test share of " + std::to_string(n_test) + " scans cannot cover " +
                          std::to_string(w) + " workpieces");
    }
    std::vector<std::string> order;
    for (const auto& [k, v] : strata) order.push_back(k);
    rng.shuffle(order);  // who gets the remainder
    for (std::size_t r = 0; r < order.size(); ++r) {
      auto& members = strata[order[r]];
      const std::size_t quota = n_test / w + (r < n_test % w ? 1 : 0);
      if (members.size() < quota) {
        throw StratifyError("workpiece '" + order[r] + "' has " + std::to_string(members.size()) +
                            " scans, test quota is " + std::to_string(quota));
      }
      rng.shuffle(members);
      for (std::size_t k = 0; k < quota; ++k) out.scans[members[k]].split = Split::Test;
    }
  }
  std::vector<std::size_t> rest;
  for (std::size_t i = 0; i < n; ++i) {
    if (out.scans[i].split != Split::Test) rest.push_back(i);
  }
  rng.shuffle(rest);
  for (std::size_t k = 0; k < n_val; ++k) out.scans[rest[k]].split = Split::Val;
  out.meta["split"] = {{"seed", seed},
                       {"fractions", {f.train, f.val, f.test}},
                       {"counts", {n - n_test - n_val, n_val, n_test}}};
  return out;
}

}  // namespace binsight
