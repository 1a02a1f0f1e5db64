#include "binsight/service.hpp"

#include <algorithm>
#include <cmath>

#include "httplib.h"

#include "binsight/errors.hpp"

namespace binsight {

namespace fs = std::filesystem;

RgbImage render_rgb(const DepthMap& dm, const LabelMask& mask) {
  if (mask.width != dm.width || mask.height != dm.height) {
    throw ShapeMismatch("mask is " + std::to_string(mask.width) + "x" +
                        std::to_string(mask.height) + ", depth map is " +
                        std::to_string(dm.width) + "x" + std::to_string(dm.height));
  }
  float lo = INFINITY, hi = -INFINITY;
  for (std::size_t i = 0; i < dm.size(); ++i) {
    if (!dm.valid[i]) continue;
    lo = std::min(lo, dm.heights[i]);
    hi = std::max(hi, dm.heights[i]);
  }
  RgbImage img{dm.width, dm.height, std::vector<std::uint8_t>(dm.size() * 3, 0)};
  for (std::size_t i = 0; i < dm.size(); ++i) {
    if (!dm.valid[i] || (!mask.valid.empty() && !mask.valid[i])) continue;
    const double t = hi > lo ? (dm.heights[i] - lo) / static_cast<double>(hi - lo) : 1.0;
    const auto v = static_cast<std::uint8_t>(64 + std::lround(191.0 * t));
    img.pixels[3 * i + (mask.labels[i] == kWorkpiece ? 0 : 2)] = v;
  }
  return img;
}

void CorrectionRect::validate(int width, int height) const {
  if (!(0 <= x0 && x0 < x1 && x1 <= width && 0 <= y0 && y0 < y1 && y1 <= height)) {
    throw BadRectangle("rectangle [" + std::to_string(x0) + ", " + std::to_string(x1) + ") x [" +
                       std::to_string(y0) + ", " + std::to_string(y1) + ") is empty or outside " +
                       std::to_string(width) + "x" + std::to_string(height));
  }
}

CorrectionRect correction_rect_from_json(const nlohmann::json& j) {
  try {
    CorrectionRect r;
    r.x0 = j.at("x0").get<int>();
    r.y0 = j.at("y0").get<int>();
    r.x1 = j.at("x1").get<int>();
    r.y1 = j.at("y1").get<int>();
    const auto action = j.value("action", std::string("to_non_workpiece"));
    if (action == "to_non_workpiece") r.action = CorrectionAction::ToNonWorkpiece;
    else if (action == "to_workpiece") r.action = CorrectionAction::ToWorkpiece;
    else throw BadRectangle("unknown action '" + action + "'");
    return r;
  } catch (const nlohmann::json::exception& e) {
    throw BadRectangle(std::string("malformed rectangle: ") + e.what());
  }
}

nlohmann::json to_json(const CorrectionRect& r) {
  return {{"x0", r.x0}, {"y0", r.y0}, {"x1", r.x1}, {"y1", r.y1},
          {"action", r.action == CorrectionAction::ToWorkpiece ? "to_workpiece" : "to_non_workpiece"}};
}

LabelMask apply_corrections(const LabelMask& mask, const std::vector<CorrectionRect>& rects) {
  for (const auto& r : rects) r.validate(mask.width, mask.height);
  LabelMask out = mask;
  for (const auto& r : rects) {
    const std::uint8_t from = r.action == CorrectionAction::ToNonWorkpiece ? kWorkpiece : kNonWorkpiece;
    const std::uint8_t to = from == kWorkpiece ? kNonWorkpiece : kWorkpiece;
    for (int y = r.y0; y < r.y1; ++y) {
      for (int x = r.x0; x < r.x1; ++x) {
        const std::size_t i = out.index(x, y);
        if (out.valid[i] && out.labels[i] == from) out.labels[i] = to;
      }
    }
  }
  return out;
}

void commit_corrections(const fs::path& dir, Manifest& manifest, const std::string& id,
                        const LabelMask& mask) {
  ScanEntry* e = manifest.find(id);
  if (!e) throw NotFound("no scan '" + id + "'");
  if (e->depthmap_path.empty()) throw NotFound("scan '" + id + "' has no depth map");
  const fs::path dm_path = resolve(dir, e->depthmap_path);
  DepthMapFile f = load_depthmap(dm_path);
  if (mask.width != f.depth.width || mask.height != f.depth.height) {
    throw ShapeMismatch("mask is " + std::to_string(mask.width) + "x" +
                        std::to_string(mask.height) + ", scan '" + id + "' is " +
                        std::to_string(f.depth.width) + "x" + std::to_string(f.depth.height));
  }
  LabelMask stored = mask;
  stored.valid = f.depth.valid;
  const PointCloud cloud = load_cloud(resolve(dir, e->cloud_path));
  PointCloud relabeled = reproject_labels(cloud, stored, f.depth);
  relabeled.source_id = cloud.source_id;
  save_depthmap(dm_path, f.depth, &stored);
  save_cloud(resolve(dir, e->cloud_path), relabeled);
  if (!e->mask_path.empty()) export_mask_png(resolve(dir, e->mask_path), stored);
  e->corrected = true;
}

// ---------------------------------------------------------------------------
// LabelService
// ---------------------------------------------------------------------------

LabelService::LabelService(fs::path dataset_dir) : dir_(std::move(dataset_dir)) {
  manifest_ = load_manifest(dir_ / "manifest.json");
  for (const auto& s : manifest_.scans) sessions_.emplace(s.id, std::make_unique<Session>());
}

std::vector<ScanSummary> LabelService::list() const {
  std::shared_lock lock(manifest_mu_);
  std::vector<ScanSummary> out;
  for (const auto& s : manifest_.scans) out.push_back({s.id, s.corrected, s.workpiece, s.bin});
  return out;
}

LabelService::Session& LabelService::session(const std::string& id) {
  const auto it = sessions_.find(id);
  if (it == sessions_.end()) throw NotFound("no scan '" + id + "'");
  return *it->second;
}

void LabelService::load(const std::string& id, Session& s) {
  if (s.loaded) return;
  std::string path;
  {
    std::shared_lock lock(manifest_mu_);
    path = manifest_.find(id)->depthmap_path;
  }
  if (path.empty()) throw NotFound("scan '" + id + "' has no depth map");
  DepthMapFile f = load_depthmap(resolve(dir_, path));
  s.depth = std::move(f.depth);
  if (f.mask) {
    s.mask = std::move(*f.mask);
  } else {
    s.mask = LabelMask::blank(s.depth.width, s.depth.height, kNonWorkpiece, true);
    s.mask.valid = s.depth.valid;
  }
  s.loaded = true;
}

RgbImage LabelService::render(const std::string& id) {
  Session& s = session(id);
  std::lock_guard lock(s.mu);
  load(id, s);
  return render_rgb(s.depth, s.mask);
}

LabelsView LabelService::labels(const std::string& id) {
  Session& s = session(id);
  std::lock_guard lock(s.mu);
  load(id, s);
  return {s.mask, s.revision};
}

long LabelService::correct(const std::string& id, long revision,
                           const std::vector<CorrectionRect>& rects) {
  Session& s = session(id);
  std::lock_guard lock(s.mu);
  load(id, s);
  if (revision != s.revision) {
    throw Conflict("scan '" + id + "' is at revision " + std::to_string(s.revision) +
                       ", edit was based on " + std::to_string(revision),
                   s.revision);
  }
  s.mask = apply_corrections(s.mask, rects);
  return ++s.revision;
}

long LabelService::commit(const std::string& id, std::optional<long> revision) {
  Session& s = session(id);
  std::lock_guard lock(s.mu);
  load(id, s);
  if (revision && *revision != s.revision) {
    throw Conflict("scan '" + id + "' is at revision " + std::to_string(s.revision) +
                       ", commit was based on " + std::to_string(*revision),
                   s.revision);
  }
  std::unique_lock mlock(manifest_mu_);
  Manifest updated = manifest_;
  commit_corrections(dir_, updated, id, s.mask);
  save_manifest(dir_ / "manifest.json", updated);
  manifest_ = std::move(updated);
  return s.revision;
}

// ---------------------------------------------------------------------------
// HTTP
// ---------------------------------------------------------------------------

namespace {

void send_json(httplib::Response& res, int status, const nlohmann::json& body) {
  res.status = status;
  res.set_content(body.dump(), "application/json");
}

template <typename F>
void guarded(httplib::Response& res, F&& f) {
  try {
    f();
  } catch (const Conflict& e) {
    send_json(res, 409, {{"error", "Conflict"}, {"message", e.what()}, {"revision", e.current_revision()}});
  } catch (const Error& e) {
    int status = 500;
    switch (e.code()) {
      case ErrorCode::NotFound: status = 404; break;
      case ErrorCode::BadRectangle:
      case ErrorCode::ShapeMismatch:
      case ErrorCode::InvalidArgument: status = 400; break;
      default: break;
    }
    send_json(res, status, {{"error", to_string(e.code())}, {"message", e.what()}});
  } catch (const nlohmann::json::exception& e) {
    send_json(res, 400, {{"error", "InvalidArgument"}, {"message", e.what()}});
  } catch (const std::exception& e) {
    send_json(res, 500, {{"error", "Internal"}, {"message", e.what()}});
  }
}

nlohmann::json parse_body(const httplib::Request& req) {
  if (req.body.empty()) return nlohmann::json::object();
  auto j = nlohmann::json::parse(req.body);
  if (!j.is_object()) throw InvalidArgument("request body must be a JSON object");
  return j;
}

}  // namespace

struct LabelServer::Impl {
  explicit Impl(LabelService& s) : service(s) {}
  LabelService& service;
  httplib::Server server;
  bool bound = false;
};

LabelServer::LabelServer(LabelService& service) : impl_(std::make_unique<Impl>(service)) {
  auto& svr = impl_->server;
  LabelService& svc = service;

  svr.Get("/api/scans", [&svc](const httplib::Request&, httplib::Response& res) {
    guarded(res, [&] {
      nlohmann::json out = nlohmann::json::array();
      for (const auto& s : svc.list()) {
        out.push_back({{"id", s.id}, {"corrected", s.corrected}, {"workpiece", s.workpiece}, {"bin", s.bin}});
      }
      send_json(res, 200, out);
    });
  });
  svr.Get(R"(/api/scans/([^/]+)/render\.png)", [&svc](const httplib::Request& req, httplib::Response& res) {
    guarded(res, [&] {
      const auto png = encode_png(svc.render(req.matches[1]));
      res.set_content(std::string(png.begin(), png.end()), "image/png");
    });
  });
  svr.Get(R"(/api/scans/([^/]+)/labels)", [&svc](const httplib::Request& req, httplib::Response& res) {
    guarded(res, [&] {
      const auto view = svc.labels(req.matches[1]);
      const std::string raw(view.mask.labels.begin(), view.mask.labels.end());
      send_json(res, 200,
                {{"width", view.mask.width},
                 {"height", view.mask.height},
                 {"labels", httplib::detail::base64_encode(raw)},
                 {"revision", view.revision}});
    });
  });
  svr.Post(R"(/api/scans/([^/]+)/corrections)", [&svc](const httplib::Request& req, httplib::Response& res) {
    guarded(res, [&] {
      const auto body = parse_body(req);
      const long revision = body.at("revision").get<long>();
      std::vector<CorrectionRect> rects;
      for (const auto& r : body.value("rects", nlohmann::json::array())) {
        rects.push_back(correction_rect_from_json(r));
      }
      send_json(res, 200, {{"revision", svc.correct(req.matches[1], revision, rects)}});
    });
  });
  svr.Post(R"(/api/scans/([^/]+)/commit)", [&svc](const httplib::Request& req, httplib::Response& res) {
    guarded(res, [&] {
      const auto body = parse_body(req);
      std::optional<long> revision;
      if (body.contains("revision")) revision = body["revision"].get<long>();
      const long committed = svc.commit(req.matches[1], revision);
      send_json(res, 200, {{"committed", true}, {"revision", committed}});
    });
  });
}

LabelServer::~LabelServer() { stop(); }

int LabelServer::bind(const std::string& host, int port) {
  int bound = port;
  if (port == 0) {
    bound = impl_->server.bind_to_any_port(host);
    if (bound < 0) throw IoError("cannot bind " + host + " to a free port");
  } else if (!impl_->server.bind_to_port(host, port)) {
    throw IoError("cannot bind " + host + ":" + std::to_string(port));
  }
  impl_->bound = true;
  return bound;
}

void LabelServer::listen() {
  if (!impl_->bound) throw InvalidArgument("listen() before bind()");
  impl_->server.listen_after_bind();
}

void LabelServer::stop() {
  if (impl_) impl_->server.stop();
}

}  // namespace binsight
