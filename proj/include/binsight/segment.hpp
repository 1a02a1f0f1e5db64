#pragma once

#include <array>
#include <chrono>
#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "binsight/autolabel.hpp"
#include "binsight/geometry.hpp"
#include "binsight/rasterops.hpp"

namespace binsight {

// ---------------------------------------------------------------------------
// Metrics
// ---------------------------------------------------------------------------

struct SegMetrics {
  double pixel_accuracy = 1.0;
  double iou_workpiece = 1.0;
  double iou_background = 1.0;
  double mean_iou = 1.0;
  // confusion[gt][pred]
  std::array<std::array<std::uint64_t, 2>, 2> confusion{};

  std::uint64_t total() const noexcept {
    return confusion[0][0] + confusion[0][1] + confusion[1][0] + confusion[1][1];
  }
};

/// Accuracy and per-class IoU from confusion counts. A class with no TP, FP
/// or FN has IoU 1; an empty confusion has accuracy 1.
SegMetrics metrics_from_confusion(const std::array<std::array<std::uint64_t, 2>, 2>& confusion);

/// Compares the pixels valid in both masks. Throws ShapeMismatch.
SegMetrics evaluate(const LabelMask& pred, const LabelMask& gt);

/// Metrics of the summed confusion matrices (pixel-weighted) and the plain
/// average of per-scan metrics.
struct AggregateMetrics {
  SegMetrics pooled;
  SegMetrics mean_of_scans;
  std::size_t scans = 0;
};
AggregateMetrics aggregate(const std::vector<SegMetrics>& per_scan);

// ---------------------------------------------------------------------------
// Segmenters
// ---------------------------------------------------------------------------

/// Everything a segmenter may look at. A network-style segmenter only uses
/// `standardized`; the reference-scan baseline also needs the source cloud and
/// how it was rasterized.
struct SegmenterInput {
  const DepthMap& standardized;  // s_r x s_r
  const PointCloud& cloud;       // labels, if any, are ground truth and must be ignored
  const DepthMap& projected;     // before hole filling, carries provenance
  const ResizeRecord& record;
  int k_inpaint;
};

/// Returns an s_r x s_r mask with values in {0, 1}.
class Segmenter {
 public:
  virtual ~Segmenter() = default;
  virtual LabelMask segment(const SegmenterInput& input) = 0;
  virtual std::string name() const = 0;
};

/// Labels every pixel with the same value.
class ConstantSegmenter final : public Segmenter {
 public:
  explicit ConstantSegmenter(std::uint8_t label) : label_(label) {}
  LabelMask segment(const SegmenterInput& input) override;
  std::string name() const override { return "constant-" + std::to_string(label_); }

 private:
  std::uint8_t label_;
};

struct BaselineResult {
  DepthMap depth;
  LabelMask mask;
};

/// Learned-free segmentation: the auto-label rule against an empty-bin
/// reference, then projection. Same result as auto_label + label_depth_map.
BaselineResult baseline_segment(const PointCloud& filled, const EmptyBinReference& ref,
                                const LabelParams& params, double resolution_mm);

/// Pipeline adapter for baseline_segment. Labels are taken through the
/// projection's provenance and pushed through the same hole filling and
/// resizing as the depth map.
class BaselineSegmenter final : public Segmenter {
 public:
  BaselineSegmenter(std::shared_ptr<const EmptyBinReference> ref, LabelParams params);
  LabelMask segment(const SegmenterInput& input) override;
  std::string name() const override { return "baseline"; }

 private:
  std::shared_ptr<const EmptyBinReference> ref_;
  LabelParams params_;
};

// ---------------------------------------------------------------------------
// External segmenter over a child process's standard streams.
//
// Little-endian frames, one request/response per depth map:
//   request : "BSG1" | u32 width | u32 height | width*height f32, row-major
//   response: "BSG1" | u32 width | u32 height | width*height u8 in {0,1}
// Closing the child's stdin ends the session.
// ---------------------------------------------------------------------------

inline constexpr char kFrameMagic[4] = {'B', 'S', 'G', '1'};
inline constexpr std::size_t kFrameHeaderBytes = 12;

std::vector<std::uint8_t> encode_request(const DepthMap& dm);
/// Validates magic, dimensions against the request, and label range.
LabelMask decode_response(std::span<const std::uint8_t> frame, int expected_w, int expected_h);

struct ExternalSegmenterConfig {
  std::vector<std::string> argv;  // argv[0] is looked up on PATH
  std::chrono::milliseconds timeout{10000};
};

/// Owns one child process, started lazily and restarted after a failure.
/// Not safe for concurrent use.
class ExternalSegmenter final : public Segmenter {
 public:
  explicit ExternalSegmenter(ExternalSegmenterConfig config);
  ~ExternalSegmenter() override;
  ExternalSegmenter(const ExternalSegmenter&) = delete;
  ExternalSegmenter& operator=(const ExternalSegmenter&) = delete;

  /// Sends one frame and returns the validated mask. Throws
  /// ExternalSegmenterError on spawn failure, child exit, malformed frame or
  /// timeout; the message carries the child's recent stderr.
  LabelMask run(const DepthMap& dm_r);

  LabelMask segment(const SegmenterInput& input) override { return run(input.standardized); }
  std::string name() const override;

 private:
  void start();
  void stop() noexcept;
  [[noreturn]] void fail(const std::string& what);
  void drain_stderr() noexcept;

  ExternalSegmenterConfig config_;
  int pid_ = -1;
  int to_child_ = -1;
  int from_child_ = -1;
  int child_err_ = -1;
  std::string stderr_tail_;
};

LabelMask external_segment(const DepthMap& dm_r, ExternalSegmenter& endpoint);

// ---------------------------------------------------------------------------
// End-to-end pipeline
// ---------------------------------------------------------------------------

struct PipelineOptions {
  int target_size = 800;      // s_r
  int k_inpaint = 5;
  double resolution_mm = 1.0;  // r
  bool trace = false;
};

struct PipelineTrace {
  DepthMap projected;
  DepthMap inpainted;
  DepthMap resized;
  DepthMap standardized;
  LabelMask mask_resized;
};

struct PipelineResult {
  PointCloud labeled;     // input cloud with predicted labels
  PointCloud workpiece;   // PC_w
  PointCloud background;  // PC_n
  DepthMap depth;         // hole-filled projection at original size
  LabelMask mask;         // prediction at original size
  ResizeRecord record;
  std::optional<LabelMask> ground_truth;  // when the input cloud was labeled
  std::optional<SegMetrics> metrics;
  std::optional<PipelineTrace> trace;
};

/// project -> inpaint -> resize -> standardize -> segment -> inverse resize ->
/// reproject -> split. Failures surface as PipelineError naming the stage.
PipelineResult segment_pipeline(const PointCloud& cloud, Segmenter& segmenter,
                                const PipelineOptions& options);

/// Smallest r (doubling from base_r) such that the projection does not exceed
/// target_size along both axes at once.
double select_resolution(const PointCloud& cloud, int target_size, double base_r);

}  // namespace binsight
