#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <nlohmann/json.hpp>
#include <sstream>

#include "bpdo/cli.hpp"
#include "bpdo/data_io.hpp"

namespace fs = std::filesystem;

namespace {

struct Run {
  int code;
  std::string out, err;
};

Run run(std::vector<std::string> args) {
  args.insert(args.begin(), "bpdo");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  const int code = bpdo::cli::run(static_cast<int>(argv.size()), argv.data(), out, err);
  return {code, out.str(), err.str()};
}

class Cli : public ::testing::Test {
 protected:
  void SetUp() override {
    dir = fs::temp_directory_path() / ("bpdo_cli_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
    fs::remove_all(dir);
    fs::create_directories(dir);
  }
  void TearDown() override { fs::remove_all(dir); }
  std::string p(const std::string& name) const { return (dir / name).string(); }
  void write(const std::string& name, const std::string& text) const { std::ofstream(dir / name) << text; }
  fs::path dir;
};

std::string fixture(const char* name) { return (fs::path(BPDO_FIXTURE_DIR) / name).string(); }

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  return std::string(std::istreambuf_iterator<char>(in), {});
}

const char* kTinyConfig =
    "c_channels = 8\nrows = 64\ncols = 64\ndom.m_heads = 2\ndom.hidden = 8\ndom.t_iters = 2\n"
    "fit.epochs = 2\nfit.batch_size = 2\n";

}  // namespace

TEST_F(Cli, UsageErrorsExitTwo) {
  EXPECT_EQ(run({}).code, 2);
  EXPECT_EQ(run({"frobnicate"}).code, 2);
  EXPECT_EQ(run({"gradcheck", "--suite", "nope"}).code, 2);
  EXPECT_EQ(run({"labelgen", "--annotations", fixture("ctw1500_sample.txt"), "--format", "icdar", "--out", p("o")}).code, 2);
  EXPECT_EQ(run({"synth", "--count", "0", "--out", p("s")}).code, 2);
  EXPECT_EQ(run({"synth", "--out", p("s")}).code, 2);
  EXPECT_EQ(run({"--help"}).code, 0);
}

TEST_F(Cli, LabelgenFixtures) {
  auto r = run({"labelgen", "--annotations", fixture("ctw1500_sample.txt"), "--format", "ctw1500", "--out", p("ctw")});
  ASSERT_EQ(r.code, 0) << r.err;
  for (const char* s : {"_cls.bpdt", "_dist.bpdt", "_dir_x.bpdt", "_dir_y.bpdt", "_overlay.png"})
    EXPECT_TRUE(fs::exists(dir / "ctw" / (std::string("ctw1500_sample") + s))) << s;
  const auto cls = bpdo::read_container(dir / "ctw" / "ctw1500_sample_cls.bpdt");
  EXPECT_EQ(cls.field.rows(), 128u);
  const auto gt = nlohmann::json::parse(slurp(p("ctw/gt.json")));
  EXPECT_EQ(gt["scenes"][0]["polygons"].size(), 3u);
  r = run({"labelgen", "--annotations", fixture("totaltext_sample.txt"), "--format", "totaltext", "--out", p("tt"), "--rows", "96", "--cols", "64"});
  EXPECT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(bpdo::read_container(dir / "tt" / "totaltext_sample_dist.bpdt").field.cols(), 64u);
  r = run({"labelgen", "--annotations", fixture("msratd500_sample.gt"), "--format", "msratd500", "--out", p("ms")});
  EXPECT_EQ(r.code, 0) << r.err;
}

TEST_F(Cli, LabelgenEmptyAndBadFiles) {
  write("empty.txt", "");
  auto r = run({"labelgen", "--annotations", p("empty.txt"), "--format", "ctw1500", "--out", p("o")});
  EXPECT_EQ(r.code, 0);
  EXPECT_TRUE(fs::is_empty(dir / "o"));
  write("bad.txt", "1,2,3\n");
  r = run({"labelgen", "--annotations", p("bad.txt"), "--format", "ctw1500", "--out", p("o2")});
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.err.find("line 1"), std::string::npos);
  r = run({"labelgen", "--annotations", p("missing.txt"), "--format", "ctw1500", "--out", p("o3")});
  EXPECT_EQ(r.code, 1);
}

TEST_F(Cli, SynthFitDetectEval) {
  write("cfg.txt", kTinyConfig);
  ASSERT_EQ(run({"synth", "--seed", "3", "--count", "3", "--config", p("cfg.txt"), "--out", p("c")}).code, 0);
  ASSERT_EQ(run({"synth", "--seed", "3", "--count", "3", "--config", p("cfg.txt"), "--out", p("c2")}).code, 0);
  EXPECT_EQ(slurp(p("c/gt.json")), slurp(p("c2/gt.json")));
  EXPECT_EQ(slurp(p("c/scenes/scene_0001.bpdt")), slurp(p("c2/scenes/scene_0001.bpdt")));
  auto r = run({"fit", "--corpus", p("c"), "--config", p("cfg.txt"), "--out", p("m.ckpt")});
  ASSERT_EQ(r.code, 0) << r.err;
  const std::string csv = slurp(p("m.ckpt.csv"));
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 3);
  r = run({"detect", "--checkpoint", p("m.ckpt"), "--scenes", p("c"), "--out", p("d")});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto pred = nlohmann::json::parse(slurp(p("d/predictions.json")));
  ASSERT_EQ(pred["scenes"].size(), 3u);
  EXPECT_EQ(pred["scenes"][0]["iterations"].size(), 3u);
  EXPECT_TRUE(fs::exists(dir / "d" / "scene_0000_overlay.png"));
  // Identical predictions and GT.
  r = run({"eval", "--pred", p("c/gt.json"), "--gt", p("c/gt.json"), "--out", p("self.json")});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(nlohmann::json::parse(slurp(p("self.json")))["f_measure"], 1.0);
  r = run({"eval", "--pred", p("c/gt.json"), "--gt", p("c/gt.json"), "--threshold", "1.01", "--out", p("t.json")});
  EXPECT_EQ(nlohmann::json::parse(slurp(p("t.json")))["n_matched"], 0);
  r = run({"eval", "--pred", p("d/predictions.json"), "--gt", p("c/gt.json")});
  EXPECT_EQ(r.code, 0) << r.err;
  EXPECT_NE(r.out.find("f_measure"), std::string::npos);
}

TEST_F(Cli, EvalHandBuiltCase) {
  write("gt.json", R"({"scenes":[{"scene_id":"a","rows":64,"cols":64,"polygons":[[[0,0],[10,0],[10,10],[0,10]],[[20,20],[30,20],[30,30],[20,30]]],"dont_care":[false,false]}]})");
  write("pred.json", R"({"scenes":[{"scene_id":"a","polygons":[[[0,0],[10,0],[10,10],[0,10]]]}]})");
  const auto r = run({"eval", "--pred", p("pred.json"), "--gt", p("gt.json"), "--out", p("rep.json")});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto j = nlohmann::json::parse(slurp(p("rep.json")));
  EXPECT_EQ(j["precision"], 1.0);
  EXPECT_EQ(j["recall"], 0.5);
  write("other.json", R"({"scenes":[{"scene_id":"b","polygons":[]}]})");
  EXPECT_EQ(run({"eval", "--pred", p("other.json"), "--gt", p("gt.json")}).code, 1);
  write("junk.json", "{not json");
  EXPECT_EQ(run({"eval", "--pred", p("junk.json"), "--gt", p("gt.json")}).code, 1);
}

TEST_F(Cli, DetectErrors) {
  write("cfg.txt", kTinyConfig);
  ASSERT_EQ(run({"synth", "--count", "1", "--config", p("cfg.txt"), "--out", p("c")}).code, 0);
  ASSERT_EQ(run({"fit", "--corpus", p("c"), "--config", p("cfg.txt"), "--out", p("m.ckpt"), "--epochs", "1"}).code, 0);
  // Scenes with a different channel count.
  write("cfg16.txt", "c_channels = 16\nrows = 64\ncols = 64\n");
  ASSERT_EQ(run({"synth", "--count", "1", "--config", p("cfg16.txt"), "--out", p("c16")}).code, 0);
  EXPECT_EQ(run({"detect", "--checkpoint", p("m.ckpt"), "--scenes", p("c16"), "--out", p("d")}).code, 1);
  write("bad.ckpt", "garbage");
  EXPECT_EQ(run({"detect", "--checkpoint", p("bad.ckpt"), "--scenes", p("c"), "--out", p("d")}).code, 1);
  EXPECT_EQ(run({"fit", "--corpus", p("nothing"), "--out", p("x.ckpt")}).code, 1);
  write("badcfg.txt", "unknown.key = 3\n");
  EXPECT_EQ(run({"fit", "--corpus", p("c"), "--config", p("badcfg.txt"), "--out", p("x.ckpt")}).code, 1);
}

TEST_F(Cli, GradcheckLossSuite) {
  const auto r = run({"gradcheck", "--suite", "loss"});
  EXPECT_EQ(r.code, 0) << r.out;
  EXPECT_NE(r.out.find("pm_loss"), std::string::npos);
}
