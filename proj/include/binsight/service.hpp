#pragma once

// Label correction: red/blue renderings, rectangle edits and committing the
// corrected ground truth back to the dataset, plus the HTTP API the browser
// frontend talks to.

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <shared_mutex>
#include <string>
#include <vector>

#include "json.hpp"

#include "binsight/dataset.hpp"
#include "binsight/geometry.hpp"

namespace binsight {

/// Workpiece pixels in red, the rest in blue, intensity 64..255 from the
/// min-max normalized height; invalid pixels black. Throws ShapeMismatch.
RgbImage render_rgb(const DepthMap& dm, const LabelMask& mask);

enum class CorrectionAction { ToNonWorkpiece, ToWorkpiece };

/// Pixel rectangle [x0, x1) x [y0, y1).
struct CorrectionRect {
  int x0 = 0;
  int y0 = 0;
  int x1 = 0;
  int y1 = 0;
  CorrectionAction action = CorrectionAction::ToNonWorkpiece;

  /// Throws BadRectangle unless 0 <= x0 < x1 <= width and 0 <= y0 < y1 <= height.
  void validate(int width, int height) const;
};

CorrectionRect correction_rect_from_json(const nlohmann::json& j);
nlohmann::json to_json(const CorrectionRect& rect);

/// Applies rects in order. ToNonWorkpiece turns valid label-1 pixels inside
/// the rectangle to 0, ToWorkpiece the reverse; nothing outside the
/// rectangles and no invalid pixel changes. All rects are validated first.
LabelMask apply_corrections(const LabelMask& mask, const std::vector<CorrectionRect>& rects);

/// Persists `mask` into the scan's depth-map file, back-projects it onto the
/// scan's cloud, refreshes the mask PNG and marks the entry corrected. The
/// manifest itself is not written. Throws NotFound, ShapeMismatch.
void commit_corrections(const std::filesystem::path& dataset_dir, Manifest& manifest,
                        const std::string& scan_id, const LabelMask& mask);

struct ScanSummary {
  std::string id;
  bool corrected = false;
  std::string workpiece;
  std::string bin;
};

struct LabelsView {
  LabelMask mask;
  long revision = 0;
};

/// In-memory correction sessions over a dataset directory. Each scan's working
/// mask carries a revision that every accepted edit increments; edits or
/// commits against an older revision throw Conflict. Safe for concurrent use;
/// operations on one scan are serialized.
class LabelService {
 public:
  explicit LabelService(std::filesystem::path dataset_dir);

  std::vector<ScanSummary> list() const;
  RgbImage render(const std::string& id);
  LabelsView labels(const std::string& id);
  /// Returns the new revision.
  long correct(const std::string& id, long revision, const std::vector<CorrectionRect>& rects);
  /// Persists the working mask and rewrites manifest.json. Returns the
  /// committed revision.
  long commit(const std::string& id, std::optional<long> revision = std::nullopt);

  const std::filesystem::path& dataset_dir() const noexcept { return dir_; }

 private:
  struct Session {
    std::mutex mu;
    bool loaded = false;
    DepthMap depth;
    LabelMask mask;
    long revision = 0;
  };
  Session& session(const std::string& id);  // throws NotFound
  void load(const std::string& id, Session& s);

  std::filesystem::path dir_;
  mutable std::shared_mutex manifest_mu_;
  Manifest manifest_;
  std::map<std::string, std::unique_ptr<Session>> sessions_;
};

/// HTTP front of a LabelService:
///   GET  /api/scans
///   GET  /api/scans/{id}/render.png
///   GET  /api/scans/{id}/labels
///   POST /api/scans/{id}/corrections   {revision, rects: [...]}
///   POST /api/scans/{id}/commit        {revision?}
/// Errors come back as {error, message}, 404 / 409 (with revision) / 400 / 500.
class LabelServer {
 public:
  explicit LabelServer(LabelService& service);
  ~LabelServer();
  LabelServer(const LabelServer&) = delete;
  LabelServer& operator=(const LabelServer&) = delete;

  /// Binds to host:port, port 0 picking a free one. Returns the bound port.
  int bind(const std::string& host, int port);
  /// Serves until stop(). Requires a successful bind().
  void listen();
  void stop();

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace binsight
