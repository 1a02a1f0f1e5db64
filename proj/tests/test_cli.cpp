#include <gtest/gtest.h>
#include <signal.h>
#include <sys/wait.h>
#include <unistd.h>

#include <cstdio>
#include <fstream>
#include <sstream>

#include "httplib.h"

#include "binsight/dataset.hpp"
#include "test_util.hpp"

using namespace binsight;
using binsight::testing::TempDir;
namespace fs = std::filesystem;

namespace {

struct Run {
  int status = -1;
  std::string out;
  std::string err;
};

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

Run run(const std::string& args, const TempDir& scratch) {
  const auto out = scratch / "stdout.txt", err = scratch / "stderr.txt";
  const std::string cmd = std::string(BINSIGHT_CLI) + " " + args + " >" + out.string() + " 2>" + err.string();
  const int rc = std::system(cmd.c_str());
  Run r;
  r.status = WIFEXITED(rc) ? WEXITSTATUS(rc) : -1;
  r.out = slurp(out);
  r.err = slurp(err);
  return r;
}

bool same_tree(const fs::path& a, const fs::path& b) {
  std::vector<std::string> names;
  for (const auto& e : fs::directory_iterator(a)) names.push_back(e.path().filename().string());
  std::size_t n_b = std::distance(fs::directory_iterator(b), fs::directory_iterator());
  if (names.size() != n_b) return false;
  for (const auto& n : names) {
    if (slurp(a / n) != slurp(b / n)) {
      ADD_FAILURE() << "differs: " << n;
      return false;
    }
  }
  return true;
}

const std::string kSmall = "--bin small_solid --workpiece plate_small --image-size 64 --count-min 5 --count-max 10";

}  // namespace

TEST(Cli, SynthIsByteDeterministic) {
  TempDir dir("cli_synth");
  const auto a = dir / "a", b = dir / "b";
  ASSERT_EQ(run("synth --scenes 4 --seed 7 --out " + a.string() + " " + kSmall, dir).status, 0);
  ASSERT_EQ(run("synth --scenes 4 --seed 7 --out " + b.string() + " " + kSmall, dir).status, 0);
  EXPECT_TRUE(same_tree(a, b));
  const auto m = load_manifest(a / "manifest.json");
  EXPECT_EQ(m.scans.size(), 4u);
  ASSERT_EQ(run("synth --scenes 4 --seed 8 --out " + (dir / "c").string() + " " + kSmall, dir).status, 0);
  EXPECT_NE(slurp(a / "scene_0000.ply"), slurp(dir / "c" / "scene_0000.ply"));
}

TEST(Cli, AutolabelSegmentEvalSplitAugmentClean) {
  TempDir dir("cli_flow");
  const auto data = dir / "data", empty = dir / "empty";
  ASSERT_EQ(run("synth --scenes 3 --seed 1 --out " + data.string() + " " + kSmall, dir).status, 0);
  ASSERT_EQ(run("synth --scenes 1 --seed 1 --count-min 0 --count-max 0 --out " + empty.string() +
                    " --bin small_solid --workpiece plate_small --image-size 64",
                dir)
                .status,
            0);
  const std::string e0 = (empty / "scene_0000.ply").string();
  const std::string ins = (data / "scene_0000.ply").string() + " " + (data / "scene_0001.ply").string();

  auto r = run("autolabel --empty " + e0 + " --filled " + ins + " -r 16 --out-dir " + (dir / "al").string(), dir);
  ASSERT_EQ(r.status, 0) << r.err;
  EXPECT_TRUE(fs::exists(dir / "al" / "scene_0000.labeled.ply"));
  EXPECT_TRUE(fs::exists(dir / "al" / "scene_0001.labeled.bdm"));
  const auto report = nlohmann::json::parse(slurp(dir / "al" / "autolabel_report.json"));
  EXPECT_EQ(report["scans"].size(), 2u);

  r = run("segment --in " + ins + " --empty " + e0 + " -r 16 --target-size 64 --out-dir " + (dir / "sg").string(), dir);
  ASSERT_EQ(r.status, 0) << r.err;
  for (const auto* suffix : {".ply", ".workpiece.ply", ".background.ply", ".bdm", ".mask.png"}) {
    EXPECT_TRUE(fs::exists(dir / "sg" / (std::string("scene_0000") + suffix))) << suffix;
  }
  const auto seg = nlohmann::json::parse(slurp(dir / "sg" / "segment_report.json"));
  EXPECT_GT(seg["aggregate"]["pooled"]["mean_iou"].get<double>(), 0.5);

  r = run("segment --in " + ins + " --external '" + std::string(BINSIGHT_STUB_SEGMENTER) +
              " threshold' -r 16 --target-size 64 --out-dir " + (dir / "ext").string(),
          dir);
  ASSERT_EQ(r.status, 0) << r.err;

  // Ground truth: the dataset's own projections. Predictions need the same raster.
  fs::create_directories(dir / "pred");
  fs::create_directories(dir / "gt");
  for (const auto* s : {"scene_0000", "scene_0001"}) {
    fs::copy_file(data / (std::string(s) + ".bdm"), dir / "gt" / (std::string(s) + ".bdm"));
    fs::copy_file(data / (std::string(s) + ".bdm"), dir / "pred" / (std::string(s) + ".bdm"));
  }
  r = run("eval --pred " + (dir / "pred").string() + " --gt " + (dir / "gt").string(), dir);
  ASSERT_EQ(r.status, 0) << r.err;
  const auto ev = nlohmann::json::parse(r.out);
  EXPECT_EQ(ev["count"], 2);
  EXPECT_EQ(ev["pooled"]["mean_iou"], 1.0);

  const std::string man = (data / "manifest.json").string();
  r = run("split --manifest " + man + " --fractions 0.34 0.33 0.33 --seed 3 --out " + (dir / "s1.json").string(), dir);
  ASSERT_EQ(r.status, 0) << r.err;
  ASSERT_EQ(run("split --manifest " + man + " --fractions 0.34 0.33 0.33 --seed 3 --out " + (dir / "s2.json").string(), dir).status, 0);
  EXPECT_EQ(slurp(dir / "s1.json"), slurp(dir / "s2.json"));

  const std::string bdm = (data / "scene_0002.bdm").string();
  ASSERT_EQ(run("augment --in " + bdm + " --count 3 --seed 5 --out-dir " + (dir / "au1").string(), dir).status, 0);
  ASSERT_EQ(run("augment --in " + bdm + " --count 3 --seed 5 --out-dir " + (dir / "au2").string(), dir).status, 0);
  EXPECT_TRUE(same_tree(dir / "au1", dir / "au2"));
  r = run("augment --in " + bdm + " --flip-h --rotate 90 --out " + (dir / "one.bdm").string(), dir);
  ASSERT_EQ(r.status, 0) << r.err;
  const auto src = load_depthmap(bdm), rot = load_depthmap(dir / "one.bdm");
  EXPECT_EQ(rot.depth.width, src.depth.height);

  r = run("clean --in " + bdm + " --out " + (dir / "clean.bdm").string() + " --k 3 --open", dir);
  ASSERT_EQ(r.status, 0) << r.err;
  EXPECT_EQ(load_depthmap(dir / "clean.bdm").depth.valid, src.depth.valid);
}

TEST(Cli, ErrorsAreReportedAsJson) {
  TempDir dir("cli_err");
  auto r = run("segment --in /nonexistent.ply --out-dir x --empty /nonexistent.ply", dir);
  EXPECT_EQ(r.status, 2);
  r = run("frobnicate", dir);
  EXPECT_EQ(r.status, 2);

  std::ofstream(dir / "bad.ply") << "ply\nformat ascii 1.0\nelement vertex 2\nproperty float x\n"
                                    "property float y\nproperty float z\nend_header\n0 0 0\n";
  r = run("autolabel --empty " + (dir / "bad.ply").string() + " --filled " + (dir / "bad.ply").string() +
              " --out-dir " + (dir / "o").string(),
          dir);
  EXPECT_EQ(r.status, 1);
  const auto j = nlohmann::json::parse(r.err.substr(r.err.rfind("{\"")));
  EXPECT_EQ(j["error"], "ParseError");
  EXPECT_EQ(j["command"], "autolabel");

  ASSERT_EQ(run("synth --scenes 1 --seed 1 --out " + (dir / "d").string() + " " + kSmall, dir).status, 0);
  const std::string ply = (dir / "d" / "scene_0000.ply").string();
  r = run("segment --in " + ply + " --empty " + ply + " --k-inpaint 4 --out-dir " + (dir / "s").string(), dir);
  EXPECT_EQ(r.status, 1);
  r = run("segment --in " + ply + " --external '" + std::string(BINSIGHT_STUB_SEGMENTER) +
              " wrong-size' -r 16 --target-size 32 --out-dir " + (dir / "s").string(),
          dir);
  EXPECT_EQ(r.status, 1);
  const auto k = nlohmann::json::parse(r.err.substr(r.err.rfind("{\"")));
  EXPECT_EQ(k["stage"], "segment");
}

TEST(Cli, ServeAnswersHttp) {
  TempDir dir("cli_serve");
  ASSERT_EQ(run("synth --scenes 2 --seed 1 --dataset-resolution 8 --out " + dir.path().string() + " " + kSmall, dir)
                .status,
            0);
  int pipefd[2];
  ASSERT_EQ(pipe(pipefd), 0);
  const pid_t pid = fork();
  if (pid == 0) {
    dup2(pipefd[1], 1);
    close(pipefd[0]);
    execl(BINSIGHT_CLI, BINSIGHT_CLI, "serve", "--dataset", dir.path().c_str(), "--port", "0", nullptr);
    _exit(127);
  }
  close(pipefd[1]);
  FILE* f = fdopen(pipefd[0], "r");
  char line[256] = {};
  ASSERT_NE(fgets(line, sizeof line, f), nullptr);
  const std::string s(line);
  const auto colon = s.rfind(':');
  ASSERT_NE(s.find("listening on http://127.0.0.1:"), std::string::npos) << s;
  const int port = std::stoi(s.substr(colon + 1));
  httplib::Client cli("127.0.0.1", port);
  auto res = cli.Get("/api/scans");
  ASSERT_TRUE(res);
  EXPECT_EQ(res->status, 200);
  EXPECT_EQ(nlohmann::json::parse(res->body).size(), 2u);
  kill(pid, SIGTERM);
  int status = 0;
  waitpid(pid, &status, 0);
  fclose(f);
  EXPECT_TRUE(WIFEXITED(status));
  EXPECT_EQ(WEXITSTATUS(status), 0);
}
