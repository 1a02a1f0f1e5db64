// binsight: command-line front end.
//
//   binsight synth     --scenes N --seed S --out DIR
//   binsight autolabel --empty E.ply... --filled F.ply... [--out-dir DIR]
//   binsight clean     --in X.bdm --out Y.bdm [--k 3] [--open]
//   binsight segment   --in C.ply... --out-dir DIR (--empty E.ply... | --external CMD)
//   binsight eval      --pred P --gt G [--out report.json]
//   binsight augment   --in X.bdm (--out Y.bdm [transform flags] | --count N --seed S --out-dir DIR)
//   binsight split     --manifest M.json --seed S [--fractions 0.8 0.1 0.1]
//   binsight serve     --dataset DIR [--port 8080]
//
// Shared processing parameters come from --config (JSON) and are overridden
// by flags. Errors are printed to stderr as one JSON object; exit status is 1
// for processing failures, 2 for usage errors.

#include <omp.h>

#include <csignal>
#include <cstdlib>
#include <iostream>
#include <map>
#include <memory>
#include <sstream>

#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include "CLI11.hpp"
#include "json.hpp"

#include "binsight/autolabel.hpp"
#include "binsight/dataset.hpp"
#include "binsight/errors.hpp"
#include "binsight/rasterops.hpp"
#include "binsight/rng.hpp"
#include "binsight/run_config.hpp"
#include "binsight/segment.hpp"
#include "binsight/service.hpp"
#include "binsight/synth.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace binsight;

namespace {

void write_text(const fs::path& path, const std::string& text) {
  write_file(path, std::span(reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
}

void ensure_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create '" + dir.string() + "': " + ec.message());
}

std::vector<PointCloud> load_clouds(const std::vector<std::string>& paths) {
  std::vector<PointCloud> out;
  for (const auto& p : paths) out.push_back(load_cloud(p));
  return out;
}

json metrics_json(const SegMetrics& m) {
  return {{"pixel_accuracy", m.pixel_accuracy},
          {"iou_workpiece", m.iou_workpiece},
          {"iou_background", m.iou_background},
          {"mean_iou", m.mean_iou},
          {"confusion", {{m.confusion[0][0], m.confusion[0][1]}, {m.confusion[1][0], m.confusion[1][1]}}}};
}

// ---------------------------------------------------------------------------

struct Globals {
  std::string config_path;
  int jobs = 0;
  RunConfigOverrides overrides;
};

RunConfig resolve_config(const Globals& g) {
  RunConfig c = g.config_path.empty() ? RunConfig{} : load_run_config(g.config_path);
  c = apply_overrides(c, g.overrides);
  c.validate();
  return c;
}

void add_config_flags(CLI::App* cmd, Globals& g) {
  cmd->add_option("--d-max", g.overrides.d_max_mm, "Auto-label distance threshold, mm");
  cmd->add_option("--cell-size", g.overrides.cell_size_mm, "Grid cell size, mm");
  cmd->add_option("-r,--resolution", g.overrides.resolution_mm, "Depth map resolution, mm per pixel");
  cmd->add_option("--k-inpaint", g.overrides.k_inpaint, "Inpainting window, odd");
  cmd->add_option("--target-size", g.overrides.target_size, "Segmenter input size s_r");
}

// ---------------------------------------------------------------------------
// synth

struct SynthArgs {
  int scenes = 10;
  std::uint64_t seed = 0;
  std::string out;
  std::vector<std::string> bins;
  std::vector<std::string> workpieces;
  std::string scene_config;
  int count_min = 30;
  int count_max = 130;
  int image_size = 512;
  double noise = 1.0;
  double dropout = 0.02;
  double dataset_resolution = 2.0;
};

void run_synth(const SynthArgs& a) {
  std::vector<SceneConfig> configs;
  if (!a.scene_config.empty()) {
    const auto bytes = read_file(a.scene_config);
    json j;
    try {
      j = json::parse(bytes.begin(), bytes.end());
    } catch (const json::parse_error& e) {
      throw ParseError(a.scene_config, 0, e.what());
    }
    for (const auto& c : j.is_array() ? j : json::array({j})) {
      configs.push_back(scene_config_from_json(c));
      configs.back().seed = a.seed;
    }
  } else {
    std::vector<BinSpec> bins;
    if (a.bins.empty()) {
      for (const auto& b : bin_presets()) bins.push_back(b);
    }
    for (const auto& n : a.bins) bins.push_back(find_bin_preset(n));
    std::vector<WorkpieceSpec> pieces;
    if (a.workpieces.empty()) {
      for (const auto& w : workpiece_presets()) pieces.push_back(w);
    }
    for (const auto& n : a.workpieces) pieces.push_back(find_workpiece_preset(n));
    // Workpiece-major so consecutive scenes cycle through the bins.
    for (const auto& w : pieces) {
      for (const auto& b : bins) {
        SceneConfig c;
        c.bin = b;
        c.workpiece = w;
        c.count_min = a.count_min;
        c.count_max = a.count_max;
        c.image_size = a.image_size;
        c.noise_sigma_mm = a.noise;
        c.dropout_prob = a.dropout;
        c.seed = a.seed;
        configs.push_back(c);
      }
    }
  }
  DatasetOptions opts;
  opts.resolution_mm = a.dataset_resolution;
  const Manifest m0 = generate_dataset(configs, a.scenes, a.out, opts);
  Manifest m = m0;
  m.meta["command"] = {{"name", "synth"},
                       {"scenes", a.scenes},
                       {"seed", a.seed},
                       {"bins", a.bins},
                       {"workpieces", a.workpieces},
                       {"scene_config", a.scene_config},
                       {"count_range", {a.count_min, a.count_max}},
                       {"image_size", a.image_size},
                       {"noise_sigma_mm", a.noise},
                       {"dropout_prob", a.dropout},
                       {"resolution_mm", a.dataset_resolution}};
  save_manifest(fs::path(a.out) / "manifest.json", m);
  spdlog::info("synth: wrote {} scenes to {}", m.scans.size(), a.out);
}

// ---------------------------------------------------------------------------
// autolabel

struct AutolabelArgs {
  std::vector<std::string> empty;
  std::vector<std::string> filled;
  std::string out_dir = ".";
  bool neighbor_cells = false;
};

void run_autolabel(const AutolabelArgs& a, const RunConfig& cfg) {
  ensure_dir(a.out_dir);
  const auto empties = load_clouds(a.empty);
  LabelParams params = cfg.label_params();
  params.neighbor_cells = a.neighbor_cells;
  const EmptyBinReference ref = make_reference(empties, params.cell_size_mm);
  json scans = json::array();
  for (const auto& path : a.filled) {
    PointCloud filled = load_cloud(path);
    filled.labels.reset();  // any stored labels would be ignored anyway
    const PointCloud labeled = auto_label(filled, ref, params);
    const auto [dm, mask] = label_depth_map(labeled, cfg.resolution_mm);
    const std::string stem = fs::path(path).stem().string() + ".labeled";
    const fs::path base = fs::path(a.out_dir) / stem;
    save_cloud(base.string() + ".ply", labeled);
    save_depthmap(base.string() + ".bdm", dm, &mask);
    export_mask_png(base.string() + ".mask.png", mask);
    std::size_t workpiece = 0;
    for (auto l : *labeled.labels) workpiece += l;
    scans.push_back({{"input", fs::path(path).filename().string()},
                     {"output", stem},
                     {"points", labeled.size()},
                     {"workpiece_points", workpiece},
                     {"size", {dm.width, dm.height}}});
    spdlog::info("autolabel: {} -> {} ({} of {} points workpiece)", path, stem, workpiece, labeled.size());
  }
  json report = {{"command", {{"name", "autolabel"},
                              {"empty", a.empty.size()},
                              {"neighbor_cells", a.neighbor_cells},
                              {"config", to_json(cfg)}}},
                 {"scans", scans}};
  write_text(fs::path(a.out_dir) / "autolabel_report.json", report.dump(2) + "\n");
}

// ---------------------------------------------------------------------------
// clean

struct CleanArgs {
  std::string in;
  std::string out;
  int k = 3;
  bool open = false;
};

void run_clean(const CleanArgs& a) {
  DepthMapFile f = load_depthmap(a.in);
  if (!f.mask) throw MissingLabels("'" + a.in + "' carries no label mask");
  LabelMask m = close(*f.mask, a.k);
  if (a.open) m = open(m, a.k);
  m.valid = f.depth.valid;
  save_depthmap(a.out, f.depth, &m);
  const auto changed = [&] {
    std::size_t n = 0;
    for (std::size_t i = 0; i < m.size(); ++i) n += m.labels[i] != f.mask->labels[i];
    return n;
  }();
  spdlog::info("clean: {} pixels changed", changed);
}

// ---------------------------------------------------------------------------
// segment

struct SegmentArgs {
  std::vector<std::string> in;
  std::string out_dir;
  std::vector<std::string> empty;
  std::string external;
  int timeout_ms = 10000;
  bool auto_resolution = false;
};

std::vector<std::string> split_command(const std::string& cmd) {
  std::istringstream in(cmd);
  std::vector<std::string> argv;
  for (std::string a; in >> a;) argv.push_back(a);
  return argv;
}

void run_segment(const SegmentArgs& a, const RunConfig& cfg) {
  if (a.empty.empty() == a.external.empty()) {
    throw InvalidArgument("give exactly one of --empty and --external");
  }
  ensure_dir(a.out_dir);
  std::unique_ptr<Segmenter> seg;
  if (!a.empty.empty()) {
    const auto empties = load_clouds(a.empty);
    seg = std::make_unique<BaselineSegmenter>(
        std::make_shared<const EmptyBinReference>(make_reference(empties, cfg.cell_size_mm)),
        cfg.label_params());
  } else {
    ExternalSegmenterConfig ec;
    ec.argv = split_command(a.external);
    ec.timeout = std::chrono::milliseconds(a.timeout_ms);
    seg = std::make_unique<ExternalSegmenter>(ec);
  }
  json scans = json::array();
  std::vector<SegMetrics> all;
  for (const auto& path : a.in) {
    const PointCloud cloud = load_cloud(path);
    PipelineOptions opts = cfg.pipeline_options();
    if (a.auto_resolution) opts.resolution_mm = select_resolution(cloud, opts.target_size, opts.resolution_mm);
    const PipelineResult r = segment_pipeline(cloud, *seg, opts);
    const std::string stem = fs::path(path).stem().string();
    const fs::path base = fs::path(a.out_dir) / stem;
    save_cloud(base.string() + ".ply", r.labeled);
    save_cloud(base.string() + ".workpiece.ply", r.workpiece);
    save_cloud(base.string() + ".background.ply", r.background);
    save_depthmap(base.string() + ".bdm", r.depth, &r.mask);
    export_mask_png(base.string() + ".mask.png", r.mask);
    json entry = {{"input", fs::path(path).filename().string()},
                  {"output", stem},
                  {"resolution_mm", opts.resolution_mm},
                  {"size", {r.depth.width, r.depth.height}},
                  {"workpiece_points", r.workpiece.size()},
                  {"background_points", r.background.size()}};
    if (r.metrics) {
      entry["metrics"] = metrics_json(*r.metrics);
      all.push_back(*r.metrics);
    }
    scans.push_back(entry);
    spdlog::info("segment: {} -> {} workpiece / {} background points", path, r.workpiece.size(),
                 r.background.size());
  }
  json report = {{"command", {{"name", "segment"},
                              {"segmenter", seg->name()},
                              {"empty", a.empty.size()},
                              {"auto_resolution", a.auto_resolution},
                              {"config", to_json(cfg)}}},
                 {"scans", scans}};
  if (!all.empty()) {
    const auto agg = aggregate(all);
    report["aggregate"] = {{"pooled", metrics_json(agg.pooled)}, {"mean", metrics_json(agg.mean_of_scans)}};
  }
  write_text(fs::path(a.out_dir) / "segment_report.json", report.dump(2) + "\n");
}

// ---------------------------------------------------------------------------
// eval

struct EvalArgs {
  std::string pred;
  std::string gt;
  std::string out;
};

LabelMask load_mask(const fs::path& p) {
  DepthMapFile f = load_depthmap(p);
  if (!f.mask) throw MissingLabels("'" + p.string() + "' carries no label mask");
  return *f.mask;
}

void run_eval(const EvalArgs& a) {
  std::vector<std::pair<std::string, std::pair<fs::path, fs::path>>> pairs;
  if (fs::is_directory(a.pred) != fs::is_directory(a.gt)) {
    throw InvalidArgument("--pred and --gt must both be files or both be directories");
  }
  if (fs::is_directory(a.pred)) {
    std::map<std::string, fs::path> gt;
    for (const auto& e : fs::directory_iterator(a.gt)) {
      if (e.path().extension() == ".bdm") gt[e.path().filename().string()] = e.path();
    }
    std::map<std::string, fs::path> pred;
    for (const auto& e : fs::directory_iterator(a.pred)) {
      if (e.path().extension() == ".bdm") pred[e.path().filename().string()] = e.path();
    }
    for (const auto& [name, p] : pred) {
      const auto it = gt.find(name);
      if (it == gt.end()) throw NotFound("no ground truth for '" + name + "' in '" + a.gt + "'");
      pairs.push_back({fs::path(name).stem().string(), {p, it->second}});
    }
    if (pairs.empty()) throw NotFound("no .bdm predictions in '" + a.pred + "'");
  } else {
    pairs.push_back({fs::path(a.pred).stem().string(), {a.pred, a.gt}});
  }
  json scans = json::array();
  std::vector<SegMetrics> all;
  for (const auto& [id, paths] : pairs) {
    const SegMetrics m = evaluate(load_mask(paths.first), load_mask(paths.second));
    all.push_back(m);
    json e = metrics_json(m);
    e["id"] = id;
    scans.push_back(e);
  }
  const auto agg = aggregate(all);
  json report = {{"scans", scans},
                 {"mean", metrics_json(agg.mean_of_scans)},
                 {"pooled", metrics_json(agg.pooled)},
                 {"count", agg.scans}};
  const std::string text = report.dump(2) + "\n";
  if (a.out.empty()) {
    std::cout << text;
  } else {
    write_text(a.out, text);
  }
}

// ---------------------------------------------------------------------------
// augment

struct AugmentArgs {
  std::string in;
  std::string out;
  std::string out_dir;
  AugmentSpec spec;
  int count = 0;
  std::uint64_t seed = 0;
};

void run_augment(const AugmentArgs& a) {
  DepthMapFile f = load_depthmap(a.in);
  if (!f.mask) throw MissingLabels("'" + a.in + "' carries no label mask");
  if (a.count > 0) {
    if (a.out_dir.empty()) throw InvalidArgument("--count needs --out-dir");
    ensure_dir(a.out_dir);
    Rng rng(a.seed);
    json records = json::array();
    const std::string stem = fs::path(a.in).stem().string();
    for (int i = 0; i < a.count; ++i) {
      AugmentSpec s;
      s.flip_h = rng.bernoulli(0.5);
      s.flip_v = rng.bernoulli(0.5);
      s.rotation_deg = 90 * static_cast<int>(rng.uniform_int(0, 3));
      s.scale = std::exp(rng.uniform(std::log(0.5), std::log(2.0)));
      const Augmented out = augment(f.depth, *f.mask, s);
      char name[32];
      std::snprintf(name, sizeof name, ".aug%03d.bdm", i);
      save_depthmap(fs::path(a.out_dir) / (stem + name), out.depth, &out.mask);
      records.push_back({{"file", stem + name},
                         {"flip_h", s.flip_h},
                         {"flip_v", s.flip_v},
                         {"rotation_deg", s.rotation_deg},
                         {"scale", s.scale}});
    }
    json report = {{"command", {{"name", "augment"}, {"count", a.count}, {"seed", a.seed}}},
                   {"outputs", records}};
    write_text(fs::path(a.out_dir) / (stem + ".augment.json"), report.dump(2) + "\n");
  } else {
    if (a.out.empty()) throw InvalidArgument("give --out, or --count with --out-dir");
    const Augmented out = augment(f.depth, *f.mask, a.spec);
    save_depthmap(a.out, out.depth, &out.mask);
  }
}

// ---------------------------------------------------------------------------
// split

struct SplitArgs {
  std::string manifest;
  std::string out;
  std::uint64_t seed = 0;
  std::vector<double> fractions = {0.8, 0.1, 0.1};
};

void run_split(const SplitArgs& a) {
  const Manifest m = load_manifest(a.manifest);
  if (a.fractions.size() != 3) throw InvalidArgument("--fractions takes train, val and test");
  const Manifest out = split_dataset(m, {a.fractions[0], a.fractions[1], a.fractions[2]}, a.seed);
  save_manifest(a.out.empty() ? a.manifest : a.out, out);
  spdlog::info("split: {}", out.meta["split"]["counts"].dump());
}

// ---------------------------------------------------------------------------
// serve

struct ServeArgs {
  std::string dataset;
  std::string host = "127.0.0.1";
  int port = 8080;
};

LabelServer* g_server = nullptr;

void run_serve(const ServeArgs& a) {
  LabelService service(a.dataset);
  LabelServer server(service);
  const int port = server.bind(a.host, a.port);
  g_server = &server;
  std::signal(SIGINT, [](int) {
    if (g_server) g_server->stop();
  });
  std::signal(SIGTERM, [](int) {
    if (g_server) g_server->stop();
  });
  // The bound port goes to stdout so scripts using --port 0 can find it.
  std::cout << "listening on http://" << a.host << ":" << port << std::endl;
  spdlog::info("serve: {} scans from {}", service.list().size(), a.dataset);
  server.listen();
  g_server = nullptr;
}

void setup_logging() {
  auto logger = spdlog::stderr_color_mt("binsight");
  spdlog::set_default_logger(logger);
  spdlog::set_pattern("[%l] %v");
  const char* level = std::getenv("BINSIGHT_LOG");
  spdlog::set_level(level ? spdlog::level::from_str(level) : spdlog::level::info);
}

}  // namespace

int main(int argc, char** argv) {
  setup_logging();
  CLI::App app{"Bin-picking point cloud segmentation tools"};
  app.require_subcommand(1);
  Globals g;
  app.add_option("--config", g.config_path, "JSON run config")->check(CLI::ExistingFile);
  app.add_option("-j,--jobs", g.jobs, "Worker threads (default: all cores)")->check(CLI::PositiveNumber);

  SynthArgs synth;
  auto* c_synth = app.add_subcommand("synth", "Generate a synthetic labeled dataset");
  c_synth->add_option("--scenes", synth.scenes, "Number of scenes")->check(CLI::NonNegativeNumber);
  c_synth->add_option("--seed", synth.seed, "Base seed");
  c_synth->add_option("--out", synth.out, "Output directory")->required();
  c_synth->add_option("--bin", synth.bins, "Bin preset(s); default all");
  c_synth->add_option("--workpiece", synth.workpieces, "Workpiece preset(s); default all");
  c_synth->add_option("--scene-config", synth.scene_config, "JSON scene config or array of them")
      ->check(CLI::ExistingFile);
  c_synth->add_option("--count-min", synth.count_min);
  c_synth->add_option("--count-max", synth.count_max);
  c_synth->add_option("--image-size", synth.image_size);
  c_synth->add_option("--noise", synth.noise, "Height noise sigma, mm");
  c_synth->add_option("--dropout", synth.dropout, "Per-point dropout probability");
  c_synth->add_option("--dataset-resolution", synth.dataset_resolution,
                      "Resolution of the stored depth maps, mm per pixel");

  AutolabelArgs al;
  auto* c_al = app.add_subcommand("autolabel", "Label filled scans against empty-bin scans");
  c_al->add_option("--empty", al.empty, "Empty-bin scans")->required()->check(CLI::ExistingFile);
  c_al->add_option("--filled", al.filled, "Filled-bin scans")->required()->check(CLI::ExistingFile);
  c_al->add_option("--out-dir", al.out_dir);
  c_al->add_flag("--neighbor-cells", al.neighbor_cells, "Search the 3x3 cell neighbourhood");
  add_config_flags(c_al, g);

  CleanArgs cl;
  auto* c_cl = app.add_subcommand("clean", "Morphological clean-up of a label mask");
  c_cl->add_option("--in", cl.in)->required()->check(CLI::ExistingFile);
  c_cl->add_option("--out", cl.out)->required();
  c_cl->add_option("--k", cl.k, "Structuring element size, odd");
  c_cl->add_flag("--open", cl.open, "Open after closing");

  SegmentArgs sg;
  auto* c_sg = app.add_subcommand("segment", "Run the segmentation pipeline on point clouds");
  c_sg->add_option("--in", sg.in, "Point clouds")->required()->check(CLI::ExistingFile);
  c_sg->add_option("--out-dir", sg.out_dir)->required();
  c_sg->add_option("--empty", sg.empty, "Empty-bin scans for the baseline segmenter")
      ->check(CLI::ExistingFile);
  c_sg->add_option("--external", sg.external, "External segmenter command line");
  c_sg->add_option("--timeout-ms", sg.timeout_ms, "External segmenter timeout per frame");
  c_sg->add_flag("--auto-resolution", sg.auto_resolution,
                 "Coarsen r until the projection fits the target size");
  add_config_flags(c_sg, g);

  EvalArgs ev;
  auto* c_ev = app.add_subcommand("eval", "Compare predicted and ground-truth masks");
  c_ev->add_option("--pred", ev.pred, "Prediction .bdm or directory")->required()->check(CLI::ExistingPath);
  c_ev->add_option("--gt", ev.gt, "Ground truth .bdm or directory")->required()->check(CLI::ExistingPath);
  c_ev->add_option("--out", ev.out, "Report path; stdout if omitted");

  AugmentArgs au;
  auto* c_au = app.add_subcommand("augment", "Flip, rotate and scale a labeled depth map");
  c_au->add_option("--in", au.in)->required()->check(CLI::ExistingFile);
  c_au->add_option("--out", au.out);
  c_au->add_option("--out-dir", au.out_dir);
  c_au->add_flag("--flip-h", au.spec.flip_h);
  c_au->add_flag("--flip-v", au.spec.flip_v);
  c_au->add_option("--rotate", au.spec.rotation_deg, "Clockwise: 0, 90, 180, 270");
  c_au->add_option("--scale", au.spec.scale, "[0.5, 2]");
  c_au->add_option("--count", au.count, "Random augmentations to draw");
  c_au->add_option("--seed", au.seed);

  SplitArgs sp;
  auto* c_sp = app.add_subcommand("split", "Assign train/val/test splits, stratified by workpiece");
  c_sp->add_option("--manifest", sp.manifest)->required()->check(CLI::ExistingFile);
  c_sp->add_option("--out", sp.out, "Output manifest; in place if omitted");
  c_sp->add_option("--seed", sp.seed);
  c_sp->add_option("--fractions", sp.fractions, "train val test")->expected(3);

  ServeArgs sv;
  auto* c_sv = app.add_subcommand("serve", "Serve the label correction API");
  c_sv->add_option("--dataset", sv.dataset)->required()->check(CLI::ExistingDirectory);
  c_sv->add_option("--host", sv.host);
  c_sv->add_option("--port", sv.port, "0 picks a free port")->check(CLI::Range(0, 65535));

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : 2;
  }
  if (g.jobs > 0) omp_set_num_threads(g.jobs);

  const std::string stage = app.get_subcommands().front()->get_name();
  try {
    if (c_synth->parsed()) run_synth(synth);
    if (c_al->parsed()) run_autolabel(al, resolve_config(g));
    if (c_cl->parsed()) run_clean(cl);
    if (c_sg->parsed()) run_segment(sg, resolve_config(g));
    if (c_ev->parsed()) run_eval(ev);
    if (c_au->parsed()) run_augment(au);
    if (c_sp->parsed()) run_split(sp);
    if (c_sv->parsed()) run_serve(sv);
  } catch (const PipelineError& e) {
    std::cerr << json{{"error", to_string(e.cause())},
                      {"command", stage},
                      {"stage", e.stage()},
                      {"message", e.what()}}.dump()
              << "\n";
    return 1;
  } catch (const Error& e) {
    std::cerr << json{{"error", to_string(e.code())}, {"command", stage}, {"message", e.what()}}.dump()
              << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << json{{"error", "Internal"}, {"command", stage}, {"message", e.what()}}.dump() << "\n";
    return 1;
  }
  return 0;
}
