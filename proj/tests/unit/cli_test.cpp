#include <gtest/gtest.h>
#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include "trunet/cli/app.hpp"
#include "trunet/cli/run_config.hpp"
#include "trunet/errors.hpp"
#include "trunet/io/dataset.hpp"
#include "trunet/io/netpbm.hpp"
#include "trunet/metrics/report.hpp"

using namespace trunet;
namespace fs = std::filesystem;

namespace {

struct Result {
  int code;
  std::string out, err;
};

Result run(std::vector<std::string> args, std::map<std::string, std::string> env = {}) {
  std::ostringstream out, err;
  const int code = run_cli(args, env, out, err);
  return {code, out.str(), err.str()};
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

std::size_t count_lines(const std::string& s) { return static_cast<std::size_t>(std::count(s.begin(), s.end(), '\n')); }

class Cli : public ::testing::Test {
 protected:
  void SetUp() override {
    root_ = fs::temp_directory_path() /
            ("trunet_cli_test_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
    fs::remove_all(root_);
    fs::create_directories(root_);
    std::ofstream(cfg()) << "width_mult=1/16\nstage_depths=1,1,1,1\nheads=2\ninput_size=32\nmax_tokens=4\n"
                            "epochs=2\npatience=2\nbatch=4\nlr=1e-3\nsynth_n=10\n";
  }
  void TearDown() override { fs::remove_all(root_); }

  fs::path dir(const std::string& name) const { return root_ / name; }
  std::string cfg() const { return (root_ / "micro.cfg").string(); }

  // synth data plus a trained checkpoint
  void trained() {
    ASSERT_EQ(run({"--config", cfg(), "--out", dir("data").string(), "synth"}).code, 0);
    const auto r = run({"--config", cfg(), "--out", dir("run").string(), "train", "--data", dir("data").string()});
    ASSERT_EQ(r.code, 0) << r.err;
  }

  fs::path root_;
};

}  // namespace

TEST_F(Cli, SynthWritesPairsAndManifest) {
  const auto r = run({"--out", dir("a").string(), "--seed", "5", "synth", "--n", "8", "--size", "32"});
  ASSERT_EQ(r.code, 0) << r.err;
  std::size_t files = 0;
  for (const auto* sub : {"images", "masks"})
    for ([[maybe_unused]] const auto& e : fs::directory_iterator(dir("a") / sub)) ++files;
  EXPECT_EQ(files, 16u);
  const auto manifest = slurp(dir("a") / "manifest.txt");
  std::istringstream is(manifest);
  std::set<std::string> ids;
  for (std::string line; std::getline(is, line);) {
    if (line.empty() || line[0] == '#') continue;
    EXPECT_TRUE(ids.insert(line.substr(0, line.find_first_of(" \t"))).second) << line;
  }
  EXPECT_EQ(ids.size(), 8u);
  EXPECT_EQ(read_mask(dir("a") / "masks" / (*ids.begin() + ".pgm")).shape(), (Shape{1, 32, 32}));

  ASSERT_EQ(run({"--out", dir("b").string(), "--seed", "5", "synth", "--n", "8", "--size", "32"}).code, 0);
  for (const auto& e : fs::recursive_directory_iterator(dir("a"))) {
    if (!e.is_regular_file() || e.path().filename() == "config.txt") continue;
    EXPECT_EQ(slurp(e.path()), slurp(dir("b") / fs::relative(e.path(), dir("a")))) << e.path();
  }
}

TEST_F(Cli, SynthRefusesNonEmptyDirWithoutForce) {
  ASSERT_EQ(run({"--out", dir("a").string(), "synth", "--n", "4", "--size", "32"}).code, 0);
  const auto again = run({"--out", dir("a").string(), "synth", "--n", "4", "--size", "32"});
  EXPECT_EQ(again.code, kExitConfig);
  EXPECT_EQ(again.err.rfind("error[config]: ", 0), 0u) << again.err;
  EXPECT_EQ(count_lines(again.err), 1u);
  EXPECT_EQ(run({"--out", dir("a").string(), "synth", "--n", "3", "--size", "32", "--force"}).code, 0);
  EXPECT_EQ(read_id_list(dir("a") / "manifest.txt").size(), 3u);
}

TEST_F(Cli, TrainWritesArtifactsReproducibly) {
  trained();
  for (const auto* f : {"checkpoint.trk", "history.csv", "config.txt", "report.csv", "report.md"}) {
    EXPECT_TRUE(fs::exists(dir("run") / f)) << f;
  }
  const auto history = slurp(dir("run") / "history.csv");
  EXPECT_EQ(count_lines(history), 3u);
  const auto r = run({"--config", cfg(), "--out", dir("run2").string(), "train", "--data", dir("data").string()});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(slurp(dir("run2") / "history.csv"), history);
  EXPECT_EQ(slurp(dir("run2") / "checkpoint.trk"), slurp(dir("run") / "checkpoint.trk"));
}

TEST_F(Cli, TrainWithoutMasksIsDataError) {
  ASSERT_EQ(run({"--config", cfg(), "--out", dir("data").string(), "synth"}).code, 0);
  fs::remove_all(dir("data") / "masks");
  const auto r = run({"--config", cfg(), "--out", dir("run").string(), "train", "--data", dir("data").string()});
  EXPECT_EQ(r.code, kExitData);
  EXPECT_EQ(r.err.rfind("error[data]: ", 0), 0u) << r.err;
}

TEST_F(Cli, EnvOverridesFileAndFlagOverridesEnv) {
  ASSERT_EQ(run({"--config", cfg(), "--out", dir("data").string(), "synth"}).code, 0);
  const auto r = run({"--config", cfg(), "--out", dir("run").string(), "train", "--data", dir("data").string()},
                     {{"TRUN_EPOCHS", "1"}, {"TRUN_PATIENCE", "1"}, {"TRUN_OUT", dir("ignored").string()}});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(count_lines(slurp(dir("run") / "history.csv")), 2u);
  EXPECT_FALSE(fs::exists(dir("ignored")));
  const auto written = slurp(dir("run") / "config.txt");
  EXPECT_NE(written.find("epochs=1\n"), std::string::npos) << written;
  EXPECT_NE(written.find("heads=2\n"), std::string::npos);
}

TEST_F(Cli, IdListsReplaceTheSeededSplit) {
  ASSERT_EQ(run({"--config", cfg(), "--out", dir("data").string(), "synth"}).code, 0);
  const auto ids = read_id_list(dir("data") / "manifest.txt");
  std::ofstream(dir("train.txt")) << ids[0] << '\n' << ids[1] << '\n' << ids[2] << '\n';
  std::ofstream(dir("val.txt")) << ids[3] << '\n';
  std::ofstream(dir("test.txt")) << "# official\n" << ids[4] << '\n' << ids[5] << '\n';
  const std::map<std::string, std::string> env{{"TRUN_DATA_DIR", dir("data").string()},
                                               {"TRUN_TRAIN_LIST", dir("train.txt").string()},
                                               {"TRUN_VAL_LIST", dir("val.txt").string()},
                                               {"TRUN_TEST_LIST", dir("test.txt").string()}};
  auto r = run({"--config", cfg(), "--out", dir("run").string(), "train"}, env);
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_NE(r.out.find("3 train / 1 val / 2 test"), std::string::npos) << r.out;
  r = run({"--config", cfg(), "--out", dir("ev").string(), "eval", "--oracle"}, env);
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(parse_report_csv(r.out).size(), 1u);

  std::ofstream(dir("empty.txt")) << "# nothing\n";
  auto bad = env;
  bad["TRUN_VAL_LIST"] = dir("empty.txt").string();
  EXPECT_EQ(run({"--config", cfg(), "--out", dir("run2").string(), "train"}, bad).code, kExitData);
  bad.erase("TRUN_TEST_LIST");
  EXPECT_EQ(run({"--config", cfg(), "--out", dir("run2").string(), "train"}, bad).code, kExitConfig);
}

TEST_F(Cli, UnknownKeysAreConfigErrors) {
  std::ofstream(dir("bad.cfg")) << "epochs=2\nbogus=1\n";
  auto r = run({"--config", dir("bad.cfg").string(), "--out", dir("x").string(), "synth"});
  EXPECT_EQ(r.code, kExitConfig);
  EXPECT_NE(r.err.find("bad.cfg:2"), std::string::npos) << r.err;
  r = run({"--out", dir("x").string(), "synth"}, {{"TRUN_BOGUS", "1"}});
  EXPECT_EQ(r.code, kExitConfig);
  EXPECT_NE(r.err.find("TRUN_BOGUS"), std::string::npos) << r.err;
  EXPECT_EQ(run({"--precision", "16", "--out", dir("x").string(), "synth"}).code, kExitConfig);
  EXPECT_EQ(run({"--out", dir("x").string(), "nosuch"}).code, kExitConfig);
}

TEST_F(Cli, EvalOracleIsPerfect) {
  ASSERT_EQ(run({"--config", cfg(), "--out", dir("data").string(), "synth"}).code, 0);
  const auto r = run({"--config", cfg(), "--out", dir("ev").string(), "eval", "--oracle", "--data",
                      dir("data").string(), "--format", "csv"});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_NE(r.out.find("oracle,1.0000,1.0000,1.0000,1.0000,1.0000,1.0000,-"), std::string::npos) << r.out;
  EXPECT_EQ(slurp(dir("ev") / "eval.csv"), r.out);
}

TEST_F(Cli, EvalFormatsAgree) {
  trained();
  const std::string ck = (dir("run") / "checkpoint.trk").string();
  const auto csv = run({"--config", cfg(), "--out", dir("ev").string(), "eval", "--checkpoint", ck, "--format", "csv"});
  const auto md =
      run({"--config", cfg(), "--out", dir("ev").string(), "eval", "--checkpoint", ck, "--format", "markdown"});
  ASSERT_EQ(csv.code, 0) << csv.err;
  ASSERT_EQ(md.code, 0) << md.err;
  std::string row = csv.out.substr(csv.out.find('\n') + 1);
  row = row.substr(0, row.find('\n'));
  for (std::size_t at; (at = row.find(',')) != std::string::npos;) row.replace(at, 1, " | ");
  EXPECT_NE(md.out.find("| " + row + " |"), std::string::npos) << md.out;
  EXPECT_TRUE(fs::exists(dir("ev") / "eval.md"));
}

TEST_F(Cli, EvalErrors) {
  trained();
  const std::string ck = (dir("run") / "checkpoint.trk").string();
  auto r = run({"--config", cfg(), "--out", dir("ev").string(), "eval", "--checkpoint", ck},
               {{"TRUN_INPUT_SIZE", "64"}});
  EXPECT_EQ(r.code, kExitConfig) << r.err;
  fs::create_directories(dir("empty") / "images");
  fs::create_directories(dir("empty") / "masks");
  r = run({"--config", cfg(), "--out", dir("ev").string(), "eval", "--checkpoint", ck, "--data",
           dir("empty").string()});
  EXPECT_EQ(r.code, kExitData) << r.err;
  r = run({"--config", cfg(), "--out", dir("ev").string(), "eval", "--checkpoint", ck, "--format", "xml"});
  EXPECT_EQ(r.code, kExitConfig);
  r = run({"--config", cfg(), "--out", dir("ev").string(), "eval", "--checkpoint", dir("none.trk").string()});
  EXPECT_EQ(r.code, kExitData);
}

TEST_F(Cli, InferWritesMasksAndHeatmaps) {
  trained();
  const std::string ck = (dir("run") / "checkpoint.trk").string();
  const auto ids = read_id_list(dir("data") / "manifest.txt");
  std::vector<std::string> args{"--config", cfg(), "--out", dir("inf").string(), "infer", "--checkpoint", ck,
                                "--heatmap"};
  for (int i = 0; i < 2; ++i) args.push_back((dir("data") / "images" / (ids[i] + ".ppm")).string());
  args.push_back((dir("data") / "masks" / (ids[2] + ".pgm")).string());  // grayscale input
  const auto r = run(args);
  ASSERT_EQ(r.code, 0) << r.err;
  for (int i = 0; i < 2; ++i) {
    const auto mask = read_netpbm(dir("inf") / (ids[i] + "_mask.pgm"));
    EXPECT_EQ(mask.shape(), (Shape{1, 32, 32}));
    for (float v : mask.data()) EXPECT_TRUE(v == 0.0f || v == 1.0f);
    EXPECT_EQ(read_netpbm(dir("inf") / (ids[i] + "_heatmap.ppm")).shape(), (Shape{3, 32, 32}));
  }
  std::size_t heatmaps = 0;
  for (const auto& e : fs::directory_iterator(dir("inf"))) heatmaps += e.path().string().ends_with("_heatmap.ppm");
  EXPECT_EQ(heatmaps, 3u);
}

TEST_F(Cli, InferPartialFailure) {
  trained();
  const auto ids = read_id_list(dir("data") / "manifest.txt");
  const auto r = run({"--config", cfg(), "--out", dir("inf").string(), "infer", "--checkpoint",
                      (dir("run") / "checkpoint.trk").string(), (dir("data") / "images" / (ids[0] + ".ppm")).string(),
                      dir("missing.ppm").string()});
  EXPECT_EQ(r.code, kExitInferPartial);
  EXPECT_TRUE(fs::exists(dir("inf") / (ids[0] + "_mask.pgm")));
  EXPECT_NE(r.err.find("missing.ppm"), std::string::npos) << r.err;
  EXPECT_NE(r.err.find("1 of 2"), std::string::npos) << r.err;
}

TEST_F(Cli, BenchDefaultsToThirtyFrames) {
  const auto r = run({"--config", cfg(), "--out", dir("b").string(), "bench"});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto csv = slurp(dir("b") / "bench.csv");
  EXPECT_EQ(csv.rfind("method,width_mult,input_size,params,frames,fps,mean_latency_ms\n", 0), 0u);
  const auto frames_at = csv.find("frame,latency_ms\n");
  ASSERT_NE(frames_at, std::string::npos);
  EXPECT_EQ(count_lines(csv.substr(frames_at)), 31u);
  EXPECT_NE(csv.find(",32,"), std::string::npos);
  EXPECT_EQ(run({"--config", cfg(), "--out", dir("b").string(), "bench", "--frames", "0"}).code, kExitConfig);
}

TEST_F(Cli, GradcheckExitCodes) {
  auto r = run({"--out", dir("g").string(), "gradcheck", "--scope", "primitive"});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(slurp(dir("g") / "gradcheck.csv").rfind("scope,case,max_rel_error,tolerance,status\n", 0), 0u);
  r = run({"--out", dir("g").string(), "gradcheck", "--scope", "primitive", "--inject-fault", "matmul"});
  EXPECT_EQ(r.code, kExitGradcheck);
  EXPECT_EQ(r.err.rfind("error[gradcheck]: ", 0), 0u) << r.err;
  EXPECT_NE(r.err.find("matmul"), std::string::npos);
  EXPECT_EQ(run({"--out", dir("g").string(), "gradcheck", "--scope", "layer"}).code, kExitConfig);
  EXPECT_EQ(run({"--out", dir("g").string(), "gradcheck", "--scope", "primitive", "--inject-fault", "nosuchop"}).code,
            kExitConfig);
}

TEST_F(Cli, ExecutableExitStatus) {
  const std::string tool = TRUNET_TOOL;
  auto status = [&](const std::string& args) {
    const int s = std::system((tool + " " + args + " >/dev/null 2>&1").c_str());
    return WIFEXITED(s) ? WEXITSTATUS(s) : -1;
  };
  EXPECT_EQ(status("--help"), 0);
  EXPECT_EQ(status("--out " + dir("s").string() + " synth --n 3 --size 32"), 0);
  EXPECT_EQ(status("--out " + dir("s").string() + " synth --n 3 --size 32"), kExitConfig);
  EXPECT_EQ(status("--out " + dir("g").string() + " gradcheck --scope primitive --inject-fault relu"), kExitGradcheck);
}
