#include "binsight/segment.hpp"

#include <algorithm>
#include <functional>

#include "binsight/errors.hpp"

namespace binsight {

SegMetrics metrics_from_confusion(const std::array<std::array<std::uint64_t, 2>, 2>& c) {
  SegMetrics m;
  m.confusion = c;
  const std::uint64_t total = m.total();
  const std::uint64_t correct = c[0][0] + c[1][1];
  m.pixel_accuracy = total ? static_cast<double>(correct) / static_cast<double>(total) : 1.0;
  auto iou = [](std::uint64_t tp, std::uint64_t fp, std::uint64_t fn) {
    const std::uint64_t denom = tp + fp + fn;
    return denom ? static_cast<double>(tp) / static_cast<double>(denom) : 1.0;
  };
  m.iou_workpiece = iou(c[1][1], c[0][1], c[1][0]);
  m.iou_background = iou(c[0][0], c[1][0], c[0][1]);
  m.mean_iou = (m.iou_workpiece + m.iou_background) / 2.0;
  // Same value as one fraction, so small cases come out correctly rounded
  // (7/12 rather than 1/2 and 2/3 averaged in floating point).
  const std::uint64_t u_w = c[1][1] + c[0][1] + c[1][0], u_b = c[0][0] + c[0][1] + c[1][0];
  if (u_w && u_b) {
    const unsigned __int128 num = static_cast<unsigned __int128>(c[1][1]) * u_b +
                                  static_cast<unsigned __int128>(c[0][0]) * u_w;
    const unsigned __int128 den = static_cast<unsigned __int128>(2) * u_w * u_b;
    constexpr unsigned __int128 exact = static_cast<unsigned __int128>(1) << 53;
    if (num < exact && den < exact) m.mean_iou = static_cast<double>(num) / static_cast<double>(den);
  }
  return m;
}

SegMetrics evaluate(const LabelMask& pred, const LabelMask& gt) {
  if (pred.width != gt.width || pred.height != gt.height) {
    throw ShapeMismatch("prediction " + std::to_string(pred.width) + "x" +
                        std::to_string(pred.height) + " vs ground truth " +
                        std::to_string(gt.width) + "x" + std::to_string(gt.height));
  }
  const auto n = static_cast<std::int64_t>(pred.size());
  std::uint64_t c00 = 0, c01 = 0, c10 = 0, c11 = 0;
#pragma omp parallel for schedule(static) reduction(+ : c00, c01, c10, c11)
  for (std::int64_t i = 0; i < n; ++i) {
    if (!pred.valid[i] || !gt.valid[i]) continue;
    const bool g = gt.labels[i] != 0, p = pred.labels[i] != 0;
    if (g) (p ? c11 : c10)++;
    else (p ? c01 : c00)++;
  }
  return metrics_from_confusion({{{c00, c01}, {c10, c11}}});
}

AggregateMetrics aggregate(const std::vector<SegMetrics>& per_scan) {
  AggregateMetrics out;
  out.scans = per_scan.size();
  out.mean_of_scans.pixel_accuracy = out.mean_of_scans.iou_workpiece = 0.0;
  out.mean_of_scans.iou_background = out.mean_of_scans.mean_iou = 0.0;
  std::array<std::array<std::uint64_t, 2>, 2> pooled{};
  for (const auto& m : per_scan) {
    for (int g = 0; g < 2; ++g) {
      for (int p = 0; p < 2; ++p) pooled[g][p] += m.confusion[g][p];
    }
    out.mean_of_scans.pixel_accuracy += m.pixel_accuracy;
    out.mean_of_scans.iou_workpiece += m.iou_workpiece;
    out.mean_of_scans.iou_background += m.iou_background;
    out.mean_of_scans.mean_iou += m.mean_iou;
  }
  out.pooled = metrics_from_confusion(pooled);
  out.mean_of_scans.confusion = pooled;
  if (!per_scan.empty()) {
    const double n = static_cast<double>(per_scan.size());
    out.mean_of_scans.pixel_accuracy = out.mean_of_scans.pixel_accuracy / n;
    out.mean_of_scans.iou_workpiece = out.mean_of_scans.iou_workpiece / n;
    out.mean_of_scans.iou_background = out.mean_of_scans.iou_background / n;
    out.mean_of_scans.mean_iou = out.mean_of_scans.mean_iou / n;
  } else {
    out.mean_of_scans = out.pooled;
  }
  return out;
}

LabelMask ConstantSegmenter::segment(const SegmenterInput& input) {
  return LabelMask::blank(input.standardized.width, input.standardized.height, label_, true);
}

BaselineResult baseline_segment(const PointCloud& filled, const EmptyBinReference& ref,
                                const LabelParams& params, double resolution_mm) {
  auto [depth, mask] = label_depth_map(auto_label(filled, ref, params), resolution_mm);
  return {std::move(depth), std::move(mask)};
}

BaselineSegmenter::BaselineSegmenter(std::shared_ptr<const EmptyBinReference> ref,
                                     LabelParams params)
    : ref_(std::move(ref)), params_(params) {
  if (!ref_) throw InvalidArgument("baseline segmenter needs an empty-bin reference");
  params_.validate();
}

LabelMask BaselineSegmenter::segment(const SegmenterInput& input) {
  const DepthMap& dm = input.projected;
  if (dm.provenance.size() != dm.size()) {
    throw InvalidArgument("baseline segmenter needs a projection with provenance");
  }
  const PointCloud labeled = auto_label(input.cloud, *ref_, params_);
  LabelMask mask = LabelMask::blank(dm.width, dm.height, kNonWorkpiece, false);
  for (std::size_t i = 0; i < dm.size(); ++i) {
    if (dm.provenance[i] < 0) continue;
    mask.labels[i] = (*labeled.labels)[dm.provenance[i]];
    mask.valid[i] = 1;
  }
  auto filled = inpaint(dm, input.k_inpaint, &mask);
  auto resized = resize_with_record(filled.depth, &*filled.mask, input.record.target_size);
  return std::move(*resized.mask);
}

LabelMask external_segment(const DepthMap& dm_r, ExternalSegmenter& endpoint) {
  return endpoint.run(dm_r);
}

namespace {

template <typename F>
auto stage(const char* name, F&& f) -> decltype(f()) {
  try {
    return f();
  } catch (const PipelineError&) {
    throw;
  } catch (const Error& e) {
    throw PipelineError(name, e.code(), e.what());
  } catch (const std::exception& e) {
    throw PipelineError(name, ErrorCode::InvalidArgument, e.what());
  }
}

void check_segmenter_output(const LabelMask& m, int s) {
  if (m.width != s || m.height != s) {
    throw ShapeMismatch("segmenter returned " + std::to_string(m.width) + "x" +
                        std::to_string(m.height) + ", expected " + std::to_string(s) + "x" +
                        std::to_string(s));
  }
  if (m.labels.size() != m.size() || m.valid.size() != m.size()) {
    throw ShapeMismatch("segmenter returned a mask with inconsistent buffers");
  }
  for (const auto l : m.labels) {
    if (l > kWorkpiece) throw InvalidArgument("segmenter returned label " + std::to_string(l));
  }
}

}  // namespace

PipelineResult segment_pipeline(const PointCloud& cloud, Segmenter& segmenter,
                                const PipelineOptions& options) {
  if (cloud.empty()) {
    throw PipelineError("project", ErrorCode::EmptyCloud, "input cloud '" + cloud.source_id +
                                                             "' is empty");
  }
  PipelineResult out;
  auto projection = stage("project", [&] {
    cloud.check();
    return project_to_depth_map(cloud, options.resolution_mm);
  });
  auto filled = stage("inpaint", [&] {
    return inpaint(projection.depth, options.k_inpaint,
                   projection.mask ? &*projection.mask : nullptr);
  });
  auto resized = stage("resize", [&] {
    return resize_with_record(filled.depth, nullptr, options.target_size);
  });
  auto standardized = stage("standardize", [&] { return standardize(resized.depth); });
  auto mask_r = stage("segment", [&] {
    const SegmenterInput input{standardized, cloud, projection.depth, resized.record,
                               options.k_inpaint};
    auto m = segmenter.segment(input);
    check_segmenter_output(m, options.target_size);
    return m;
  });
  out.mask = stage("inverse_resize", [&] { return inverse_resize(mask_r, resized.record); });
  out.labeled = stage("reproject", [&] {
    return reproject_labels(cloud, out.mask, projection.depth);
  });
  auto parts = stage("split", [&] { return split_cloud(out.labeled); });
  out.workpiece = std::move(parts.workpiece);
  out.background = std::move(parts.background);
  out.record = resized.record;
  if (filled.mask) {
    out.ground_truth = std::move(*filled.mask);
    out.metrics = stage("evaluate", [&] { return evaluate(out.mask, *out.ground_truth); });
  }
  if (options.trace) {
    out.trace = PipelineTrace{projection.depth, filled.depth, resized.depth, standardized,
                              mask_r};
  }
  out.depth = std::move(filled.depth);
  return out;
}

double select_resolution(const PointCloud& cloud, int target_size, double base_r) {
  if (!(base_r > 0.0)) throw InvalidArgument("base resolution must be positive");
  double r = base_r;
  for (int i = 0; i < 32; ++i) {
    const auto [w, h] = projected_size(cloud, r);
    if (w <= target_size || h <= target_size) return r;
    r *= 2.0;
  }
  return r;
}

}  // namespace binsight
