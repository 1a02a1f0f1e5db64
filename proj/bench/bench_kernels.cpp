// Serial reference kernels against their OpenMP counterparts on 800 x 800
// sized inputs. Thread count follows OMP_NUM_THREADS.

#include <benchmark/benchmark.h>

#include "binsight/autolabel.hpp"
#include "binsight/rasterops.hpp"
#include "binsight/rng.hpp"
#include "binsight/segment.hpp"
#include "binsight/serial.hpp"
#include "binsight/synth.hpp"

using namespace binsight;

namespace {

SceneConfig frame_config(double noise, double dropout) {
  SceneConfig c;
  c.bin = {"frame_800", 761, 761, 600, 20, WallProfile::Solid, std::nullopt};
  c.workpiece = find_workpiece_preset("plate_small");
  c.image_size = 801;
  c.noise_sigma_mm = noise;
  c.dropout_prob = dropout;
  c.seed = 1;
  return c;
}

const PointCloud& frame_cloud() {
  static const PointCloud cloud = render_point_cloud(generate_scene(frame_config(1.0, 0.1)));
  return cloud;
}

const EmptyBinReference& frame_reference() {
  static const EmptyBinReference ref = make_reference(render_empty_scans(frame_config(1.0, 0.1), 1), 5.0);
  return ref;
}

const Projection& frame_projection() {
  static const Projection p = project_to_depth_map(frame_cloud(), 1.0);
  return p;
}

const LabelMask& noisy_mask() {
  static const LabelMask m = [] {
    LabelMask out = LabelMask::blank(800, 800, kNonWorkpiece, true);
    Rng rng(5);
    for (auto& l : out.labels) l = rng.bernoulli(0.3) ? kWorkpiece : kNonWorkpiece;
    return out;
  }();
  return m;
}

void BM_Project(benchmark::State& st) {
  for (auto _ : st) benchmark::DoNotOptimize(project_to_depth_map(frame_cloud(), 1.0));
}
void BM_ProjectSerial(benchmark::State& st) {
  for (auto _ : st) benchmark::DoNotOptimize(serial::project_to_depth_map(frame_cloud(), 1.0));
}

void BM_AutoLabel(benchmark::State& st) {
  for (auto _ : st) benchmark::DoNotOptimize(auto_label(frame_cloud(), frame_reference(), LabelParams{}));
}
void BM_AutoLabelSerial(benchmark::State& st) {
  for (auto _ : st) benchmark::DoNotOptimize(serial::auto_label(frame_cloud(), frame_reference(), LabelParams{}));
}

void BM_Inpaint(benchmark::State& st) {
  const auto& p = frame_projection();
  for (auto _ : st) benchmark::DoNotOptimize(inpaint(p.depth, 5, &*p.mask));
}
void BM_InpaintSerial(benchmark::State& st) {
  const auto& p = frame_projection();
  for (auto _ : st) benchmark::DoNotOptimize(serial::inpaint(p.depth, 5, &*p.mask));
}

void BM_Close(benchmark::State& st) {
  const int k = static_cast<int>(st.range(0));
  for (auto _ : st) benchmark::DoNotOptimize(erode(dilate(noisy_mask(), k), k));
}
void BM_CloseSerial(benchmark::State& st) {
  const int k = static_cast<int>(st.range(0));
  for (auto _ : st) benchmark::DoNotOptimize(serial::erode(serial::dilate(noisy_mask(), k), k));
}

void BM_Standardize(benchmark::State& st) {
  const auto filled = inpaint(frame_projection().depth, 5).depth;
  for (auto _ : st) benchmark::DoNotOptimize(standardize(filled));
}
void BM_StandardizeSerial(benchmark::State& st) {
  const auto filled = inpaint(frame_projection().depth, 5).depth;
  for (auto _ : st) benchmark::DoNotOptimize(serial::standardize(filled));
}

void BM_Pipeline(benchmark::State& st) {
  PointCloud cloud = frame_cloud();
  cloud.labels.reset();
  ConstantSegmenter seg(kNonWorkpiece);
  for (auto _ : st) benchmark::DoNotOptimize(segment_pipeline(cloud, seg, PipelineOptions{}));
}

}  // namespace

BENCHMARK(BM_Project)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_ProjectSerial)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_AutoLabel)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_AutoLabelSerial)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_Inpaint)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_InpaintSerial)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_Close)->Arg(3)->Arg(15)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_CloseSerial)->Arg(3)->Arg(15)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_Standardize)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_StandardizeSerial)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_Pipeline)->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
