#include <gtest/gtest.h>

#include <chrono>

#include "binsight/errors.hpp"
#include "binsight/segment.hpp"
#include "binsight/serial.hpp"
#include "binsight/synth.hpp"
#include "test_util.hpp"

using namespace binsight;
using binsight::testing::random_mask;

namespace {

LabelMask row_mask(std::vector<std::uint8_t> labels) {
  LabelMask m = LabelMask::blank(static_cast<int>(labels.size()), 1, kNonWorkpiece, true);
  m.labels = std::move(labels);
  return m;
}

ExternalSegmenterConfig stub(const std::string& mode, int timeout_ms = 3000) {
  ExternalSegmenterConfig c;
  c.argv = {BINSIGHT_STUB_SEGMENTER, mode};
  c.timeout = std::chrono::milliseconds(timeout_ms);
  return c;
}

DepthMap signed_map(int w, int h) {
  DepthMap dm = DepthMap::blank(w, h);
  for (std::size_t i = 0; i < dm.size(); ++i) dm.set(i, (i % 3 == 0) ? 1.5f : -0.5f);
  return dm;
}

}  // namespace

// ---------------------------------------------------------------------------
// Metrics

TEST(Metrics, WorkedExample) {
  const auto m = evaluate(row_mask({1, 0, 0, 0}), row_mask({1, 1, 0, 0}));
  EXPECT_EQ(m.pixel_accuracy, 0.75);
  EXPECT_EQ(m.iou_workpiece, 0.5);
  EXPECT_DOUBLE_EQ(m.iou_background, 2.0 / 3.0);
  EXPECT_EQ(m.mean_iou, 7.0 / 12.0);
  EXPECT_EQ(m.confusion[1][0], 1u);
}

TEST(Metrics, AbsentClassCountsAsPerfect) {
  const auto m = evaluate(row_mask({0, 0}), row_mask({0, 0}));
  EXPECT_EQ(m.iou_workpiece, 1.0);
  EXPECT_EQ(m.mean_iou, 1.0);
  EXPECT_THROW(evaluate(row_mask({0}), row_mask({0, 0})), ShapeMismatch);
}

TEST(Metrics, OnlyPixelsValidInBothCount) {
  LabelMask pred = row_mask({1, 1, 0});
  LabelMask gt = row_mask({0, 1, 0});
  pred.valid[0] = 0;
  const auto m = evaluate(pred, gt);
  EXPECT_EQ(m.total(), 2u);
  EXPECT_EQ(m.pixel_accuracy, 1.0);
}

TEST(Metrics, MatchesBruteForceCounting) {
  Rng rng(16);
  for (int trial = 0; trial < 200; ++trial) {
    const auto pred = random_mask(rng, 16, 16, rng.uniform01(), 0.1);
    const auto gt = random_mask(rng, 16, 16, rng.uniform01(), 0.1);
    std::uint64_t c[2][2] = {};
    for (std::size_t i = 0; i < 256; ++i) {
      if (pred.valid[i] && gt.valid[i]) ++c[gt.labels[i]][pred.labels[i]];
    }
    const auto m = evaluate(pred, gt);
    for (int g = 0; g < 2; ++g) {
      for (int p = 0; p < 2; ++p) ASSERT_EQ(m.confusion[g][p], c[g][p]);
    }
    ASSERT_EQ(serial::confusion(pred, gt), m.confusion);
    const double n = double(c[0][0] + c[0][1] + c[1][0] + c[1][1]);
    const double iou_w = c[1][1] + c[0][1] + c[1][0] ? double(c[1][1]) / double(c[1][1] + c[0][1] + c[1][0]) : 1.0;
    const double iou_b = c[0][0] + c[0][1] + c[1][0] ? double(c[0][0]) / double(c[0][0] + c[0][1] + c[1][0]) : 1.0;
    ASSERT_EQ(m.pixel_accuracy, n ? double(c[0][0] + c[1][1]) / n : 1.0);
    ASSERT_EQ(m.iou_workpiece, iou_w);
    ASSERT_EQ(m.iou_background, iou_b);
    ASSERT_NEAR(m.mean_iou, (iou_w + iou_b) / 2, 1e-15);
  }
}

TEST(Metrics, AggregatePoolsAndAverages) {
  const auto a = evaluate(row_mask({1, 0, 0, 0}), row_mask({1, 1, 0, 0}));
  const auto b = evaluate(row_mask({1, 1}), row_mask({1, 1}));
  const auto agg = aggregate({a, b});
  EXPECT_EQ(agg.scans, 2u);
  EXPECT_EQ(agg.pooled.total(), 6u);
  EXPECT_DOUBLE_EQ(agg.pooled.pixel_accuracy, 5.0 / 6.0);
  EXPECT_DOUBLE_EQ(agg.mean_of_scans.pixel_accuracy, (0.75 + 1.0) / 2);
}

// ---------------------------------------------------------------------------
// Pipeline

TEST(Pipeline, ConstantSegmenterPartitionsCloud) {
  Rng rng(1);
  auto cloud = binsight::testing::random_cloud(rng, 3000, 40, 10, true);
  ConstantSegmenter ones(kWorkpiece);
  PipelineOptions opts;
  opts.target_size = 64;
  opts.trace = true;
  const auto r = segment_pipeline(cloud, ones, opts);
  EXPECT_EQ(r.workpiece.size() + r.background.size(), cloud.size());
  EXPECT_EQ(r.labeled.points, cloud.points);
  EXPECT_TRUE(r.record.cropped());
  ASSERT_TRUE(r.trace.has_value());
  EXPECT_EQ(r.trace->standardized.width, 64);
  ASSERT_TRUE(r.metrics.has_value());
  EXPECT_EQ(r.depth.valid_count(), r.depth.size());
  // Points outside the kept 64 x 64 window fall on invalid pixels.
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    const auto px = r.depth.pixel_of(cloud.points[i].x, cloud.points[i].y);
    const bool kept = px->first < 64 && px->second < 64;
    ASSERT_EQ((*r.labeled.labels)[i], kept ? kWorkpiece : kNonWorkpiece);
  }
}

TEST(Pipeline, StageErrorsNameTheStage) {
  PointCloud empty;
  ConstantSegmenter zeros(kNonWorkpiece);
  try {
    segment_pipeline(empty, zeros, {});
    FAIL();
  } catch (const PipelineError& e) {
    EXPECT_EQ(e.stage(), "project");
    EXPECT_EQ(e.cause(), ErrorCode::EmptyCloud);
  }
  PointCloud c;
  c.points = {{0, 0, 0}, {5, 5, 1}};
  PipelineOptions opts;
  opts.k_inpaint = 4;
  try {
    segment_pipeline(c, zeros, opts);
    FAIL();
  } catch (const PipelineError& e) {
    EXPECT_EQ(e.stage(), "inpaint");
  }
}

namespace {
class WrongSize final : public Segmenter {
 public:
  LabelMask segment(const SegmenterInput&) override { return LabelMask::blank(3, 3); }
  std::string name() const override { return "wrong"; }
};
}  // namespace

TEST(Pipeline, SegmenterOutputIsChecked) {
  PointCloud c;
  c.points = {{0, 0, 0}, {5, 5, 1}};
  WrongSize bad;
  PipelineOptions opts;
  opts.target_size = 8;
  try {
    segment_pipeline(c, bad, opts);
    FAIL();
  } catch (const PipelineError& e) {
    EXPECT_EQ(e.stage(), "segment");
    EXPECT_EQ(e.cause(), ErrorCode::ShapeMismatch);
  }
}

TEST(Pipeline, BaselineAgreesWithDirectBaselineSegment) {
  SceneConfig cfg;
  cfg.bin = find_bin_preset("small_solid");
  cfg.workpiece = find_workpiece_preset("plate_small");
  cfg.image_size = 128;
  cfg.count_min = 5;
  cfg.count_max = 10;
  cfg.seed = 3;
  const auto empties = render_empty_scans(cfg, 2);
  auto ref = std::make_shared<const EmptyBinReference>(make_reference(empties, 5.0));
  const auto cloud = render_point_cloud(generate_scene(cfg));
  BaselineSegmenter seg(ref, LabelParams{});
  PipelineOptions opts;
  opts.resolution_mm = 8.0;
  opts.target_size = 128;
  const auto r = segment_pipeline(cloud, seg, opts);
  PointCloud unlabeled = cloud;
  unlabeled.labels.reset();
  const auto direct = baseline_segment(unlabeled, *ref, LabelParams{}, 8.0);
  const auto filled = inpaint(direct.depth, 5, &direct.mask);
  EXPECT_EQ(r.mask.labels, filled.mask->labels);
  EXPECT_GT(r.metrics->mean_iou, 0.8);
}

TEST(SelectResolution, DoublesUntilOneAxisFits) {
  PointCloud c;
  c.points = {{0, 0, 0}, {1000, 3000, 0}};
  EXPECT_EQ(select_resolution(c, 800, 1.0), 2.0);
  EXPECT_EQ(select_resolution(c, 2000, 1.0), 1.0);
  EXPECT_THROW(select_resolution(c, 800, 0.0), InvalidArgument);
}

// ---------------------------------------------------------------------------
// External segmenter

TEST(Framing, RequestLayoutAndResponseChecks) {
  DepthMap dm = DepthMap::blank(2, 1);
  dm.set(0, 1.0f);
  dm.set(1, -2.0f);
  const auto req = encode_request(dm);
  ASSERT_EQ(req.size(), 12u + 8u);
  EXPECT_EQ(std::string(req.begin(), req.begin() + 4), "BSG1");
  EXPECT_EQ(req[4], 2);
  EXPECT_EQ(req[8], 1);
  EXPECT_EQ(req[12 + 3], 0x3f);  // 1.0f little-endian high byte

  std::vector<std::uint8_t> ok = {'B', 'S', 'G', '1', 2, 0, 0, 0, 1, 0, 0, 0, 1, 0};
  EXPECT_EQ(decode_response(ok, 2, 1).labels, (std::vector<std::uint8_t>{1, 0}));
  auto bad = ok;
  bad[13] = 7;
  EXPECT_THROW(decode_response(bad, 2, 1), ExternalSegmenterError);
  bad = ok;
  bad[0] = 'X';
  EXPECT_THROW(decode_response(bad, 2, 1), ExternalSegmenterError);
  EXPECT_THROW(decode_response(ok, 3, 1), ExternalSegmenterError);
  bad = ok;
  bad.pop_back();
  EXPECT_THROW(decode_response(bad, 2, 1), ExternalSegmenterError);
}

TEST(External, ThresholdStubAnswersSeveralFrames) {
  ExternalSegmenter seg(stub("threshold"));
  for (int size : {4, 16, 64}) {
    const DepthMap dm = signed_map(size, size);
    const LabelMask m = seg.run(dm);
    ASSERT_EQ(m.width, size);
    for (std::size_t i = 0; i < dm.size(); ++i) ASSERT_EQ(m.labels[i], dm.heights[i] > 0 ? 1 : 0);
  }
}

TEST(External, LargeFrameDoesNotDeadlock) {
  ExternalSegmenter seg(stub("ones"));
  const LabelMask m = seg.run(signed_map(800, 800));
  EXPECT_EQ(m.count(kWorkpiece), 800u * 800u);
}

TEST(External, MalformedResponsesAreRejected) {
  for (const std::string mode : {"wrong-size", "wrong-value", "bad-magic", "short"}) {
    ExternalSegmenter seg(stub(mode));
    EXPECT_THROW(seg.run(signed_map(8, 8)), ExternalSegmenterError) << mode;
  }
}

TEST(External, CrashCarriesStderr) {
  ExternalSegmenter seg(stub("crash"));
  try {
    seg.run(signed_map(8, 8));
    FAIL();
  } catch (const ExternalSegmenterError& e) {
    EXPECT_NE(std::string(e.what()).find("boom"), std::string::npos) << e.what();
  }
  // The next call starts a fresh child.
  EXPECT_THROW(seg.run(signed_map(8, 8)), ExternalSegmenterError);
}

TEST(External, TimeoutKillsHungChild) {
  ExternalSegmenter seg(stub("hang", 300));
  const auto t0 = std::chrono::steady_clock::now();
  EXPECT_THROW(seg.run(signed_map(8, 8)), ExternalSegmenterError);
  EXPECT_LT(std::chrono::steady_clock::now() - t0, std::chrono::seconds(3));
}

TEST(External, MissingProgram) {
  ExternalSegmenterConfig c;
  c.argv = {"/nonexistent/segmenter"};
  ExternalSegmenter seg(c);
  EXPECT_THROW(seg.run(signed_map(2, 2)), ExternalSegmenterError);
  EXPECT_THROW(ExternalSegmenter(ExternalSegmenterConfig{}), InvalidArgument);
}

TEST(External, InsidePipeline) {
  Rng rng(9);
  const auto cloud = binsight::testing::random_cloud(rng, 2000, 30, 10, true);
  ExternalSegmenter seg(stub("threshold"));
  PipelineOptions opts;
  opts.target_size = 64;
  const auto r = segment_pipeline(cloud, seg, opts);
  EXPECT_EQ(r.workpiece.size() + r.background.size(), cloud.size());
  ExternalSegmenter broken(stub("wrong-value"));
  try {
    segment_pipeline(cloud, broken, opts);
    FAIL();
  } catch (const PipelineError& e) {
    EXPECT_EQ(e.stage(), "segment");
    EXPECT_EQ(e.cause(), ErrorCode::ExternalSegmenterError);
  }
}
