#include <gtest/gtest.h>

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "surfcon/io/bundle.hpp"
#include "test_support.hpp"

#ifndef SURFCON_CLI
#error "SURFCON_CLI must name the command-line binary"
#endif

namespace surfcon {
namespace {

namespace fs = std::filesystem;

int run(const std::string& args) {
  const std::string cmd = std::string(SURFCON_CLI) + " " + args + " > /dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

std::vector<std::string> csv_lines(const fs::path& p) {
  std::vector<std::string> lines;
  std::istringstream in(slurp(p));
  for (std::string l; std::getline(in, l);) lines.push_back(l);
  return lines;
}

std::vector<std::string> split(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  for (std::string t; std::getline(ss, t, ',');) out.push_back(t);
  return out;
}

class CliTest : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() /
           ("surfcon_cli_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
    fs::remove_all(dir_);
    fs::create_directories(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }

  fs::path spec_file(const SceneSpec& s, const std::string& name = "spec.json") {
    const fs::path p = dir_ / name;
    io::write_json_file(p, io::to_json(s));
    return p;
  }

  /// Synthesizes a bundle and returns its directory.
  fs::path bundle(SceneSpec s, const std::string& name) {
    const fs::path out = dir_ / name;
    EXPECT_EQ(run("synth " + spec_file(s, name + ".json").string() + " --out " + out.string()), 0);
    return out;
  }

  static SceneSpec noisy(SurfaceKind kind, int size, std::uint64_t seed = 1) {
    auto s = make_scene(kind, size);
    s.noise = {0.02, 5.0};
    s.seed = seed;
    return s;
  }

  fs::path dir_;
};

TEST_F(CliTest, SynthWritesEightImagesAndAManifest) {
  const auto out = bundle(make_scene(SurfaceKind::TiltedPlane, 16), "b");
  std::size_t images = 0, manifests = 0;
  for (const auto& e : fs::directory_iterator(out)) {
    const auto ext = e.path().extension();
    images += ext == ".pfm" || ext == ".ppm";
    manifests += e.path().filename() == "manifest.json";
  }
  EXPECT_EQ(images, 8u);
  EXPECT_EQ(manifests, 1u);
}

TEST_F(CliTest, SynthIsDeterministic) {
  const auto a = bundle(noisy(SurfaceKind::SineHeightfield, 16), "a");
  const auto b = bundle(noisy(SurfaceKind::SineHeightfield, 16), "b");
  std::size_t compared = 0;
  for (const auto& e : fs::directory_iterator(a)) {
    const auto name = e.path().filename();
    if (name == "manifest.json") {
      auto ma = io::read_json_file(e.path()), mb = io::read_json_file(b / name);
      ma.erase("wall_time_s");
      mb.erase("wall_time_s");
      ma.erase("inputs");
      mb.erase("inputs");
      EXPECT_EQ(ma.dump(), mb.dump());
    } else {
      EXPECT_EQ(slurp(e.path()), slurp(b / name)) << name;
    }
    ++compared;
  }
  EXPECT_EQ(compared, 13u);
}

TEST_F(CliTest, SynthErrors) {
  std::ofstream(dir_ / "blocker") << "x";
  const auto spec = spec_file(make_scene(SurfaceKind::TiltedPlane, 8));
  EXPECT_EQ(run("synth " + spec.string() + " --out " + (dir_ / "blocker" / "sub").string()), 2);
  std::ofstream(dir_ / "bad.json") << R"({"kind":"torus"})";
  EXPECT_EQ(run("synth " + (dir_ / "bad.json").string() + " --out " + (dir_ / "o").string()), 2);
  std::ofstream(dir_ / "broken.json") << "{";
  EXPECT_EQ(run("synth " + (dir_ / "broken.json").string() + " --out " + (dir_ / "o").string()), 2);
  EXPECT_EQ(run("synth"), 2);
  EXPECT_EQ(run("frobnicate"), 2);
}

TEST_F(CliTest, PartitionCheckerAndFlat) {
  const auto b = bundle(make_scene(SurfaceKind::TiltedPlane, 32), "b");
  ASSERT_EQ(run("partition " + (b / "view0_rgb.ppm").string() + " --out " + (dir_ / "p").string()), 0);
  const auto stats = io::read_json_file(dir_ / "p" / "stats.json");
  EXPECT_GE(stats["rich_fraction"].get<double>(), 0.25);
  EXPECT_FALSE(stats["all_tied"].get<bool>());
  EXPECT_TRUE(fs::exists(dir_ / "p" / "rich.pgm"));

  const auto f = bundle(make_scene(SurfaceKind::TiltedPlane, 16, TextureKind::Flat), "f");
  ASSERT_EQ(run("partition " + (f / "view0_rgb.ppm").string() + " --out " + (dir_ / "q").string()), 0);
  const auto flat = io::read_json_file(dir_ / "q" / "stats.json");
  EXPECT_EQ(flat["tau"].get<double>(), 0.0);
  EXPECT_TRUE(flat["all_tied"].get<bool>());
  EXPECT_EQ(flat["rich_fraction"].get<double>(), 1.0);
}

TEST_F(CliTest, PartitionHalfChecker) {
  const auto b = bundle(make_scene(SurfaceKind::TiltedPlane, 64, TextureKind::HalfCheckerHalfFlat), "b");
  ASSERT_EQ(run("partition " + (b / "view0_rgb.ppm").string() + " --out " + (dir_ / "p").string()), 0);
  const auto rich = io::read_pgm(dir_ / "p" / "rich.pgm");
  std::size_t left = 0;
  for (int i = 0; i < 64; ++i) {
    for (int j = 0; j < 32; ++j) left += rich.test(i, j);
  }
  EXPECT_GE(static_cast<double>(left) / static_cast<double>(rich.count()), 0.9);
}

TEST_F(CliTest, PartitionMalformedImage) {
  std::ofstream(dir_ / "bad.ppm") << "P6\n3 3\n255\n";
  EXPECT_EQ(run("partition " + (dir_ / "bad.ppm").string() + " --out " + (dir_ / "p").string()), 2);
}

TEST_F(CliTest, LossOnCleanAndCorruptedBundles) {
  // Fronto-parallel geometry stores exactly in float32.
  auto clean_spec = make_scene(SurfaceKind::TiltedPlane, 24);
  clean_spec.plane = PlaneParams{Eigen::Vector3d(0, 0, -1), -4.0};
  Pose shifted;
  shifted.translation = Eigen::Vector3d(-0.5, 0, 0);
  clean_spec.cameras[1] = make_camera(24, 24, 90.0, shifted);
  const auto clean = bundle(clean_spec, "clean");
  ASSERT_EQ(run("loss " + clean.string() + " --out " + (dir_ / "lc").string()), 0);
  const auto lc = io::read_json_file(dir_ / "lc" / "loss.json");
  for (const auto& r : lc["sv"]) {
    for (const char* k : {"l_svn", "l_cross", "tv_normal", "l_svgeo"}) EXPECT_LT(r[k].get<double>(), 1e-8) << k;
  }
  double clean_mv = 0;
  for (const auto& r : lc["mv"]) {
    EXPECT_LT(r["loss"].get<double>(), 1e-8);
    clean_mv += r["loss"].get<double>();
  }

  auto noisy_spec = clean_spec;
  noisy_spec.noise = {0.02, 0.0};
  const auto noisy_b = bundle(noisy_spec, "noisy");
  ASSERT_EQ(run("loss " + noisy_b.string() + " --out " + (dir_ / "ln").string()), 0);
  double noisy_mv = 0;
  const auto ln = io::read_json_file(dir_ / "ln" / "loss.json");
  for (const auto& r : ln["mv"]) noisy_mv += r["loss"].get<double>();
  EXPECT_GT(noisy_mv, clean_mv);
}

TEST_F(CliTest, LossRejectsBadConfigAndMissingFiles) {
  const auto b = bundle(make_scene(SurfaceKind::TiltedPlane, 12), "b");
  std::ofstream(dir_ / "cfg.json") << R"({"sv":{"theta":1.01}})";
  EXPECT_EQ(run("loss " + b.string() + " --config " + (dir_ / "cfg.json").string()), 2);
  EXPECT_EQ(run("loss " + b.string() + " --theta 1.01"), 2);
  fs::remove(b / "view1_plane.pfm");
  EXPECT_EQ(run("loss " + b.string()), 2);
  EXPECT_EQ(run("loss " + (dir_ / "nowhere").string()), 2);
}

TEST_F(CliTest, OptimizeOneIteration) {
  const auto b = bundle(noisy(SurfaceKind::TiltedPlane, 16), "b");
  ASSERT_EQ(run("optimize " + b.string() + " --iterations 1 --out " + (dir_ / "o").string()), 0);
  const auto lines = csv_lines(dir_ / "o" / "loss_history.csv");
  ASSERT_EQ(lines.size(), 2u);
  EXPECT_EQ(lines[0], "iteration,total,data,svn,cross,tv,mvgeo");
  for (const char* f : {"view0_depth.pfm", "view1_normal.pfm", "summary.json", "manifest.json"}) {
    EXPECT_TRUE(fs::exists(dir_ / "o" / f)) << f;
  }
}

TEST_F(CliTest, OptimizeDefaultHalvesNormalError) {
  const auto b = bundle(noisy(SurfaceKind::TiltedPlane, 48), "b");
  ASSERT_EQ(run("optimize " + b.string() + " --out " + (dir_ / "o").string()), 0);
  const auto summary = io::read_json_file(dir_ / "o" / "summary.json");
  EXPECT_GE(summary["normal_rms_reduction"].get<double>(), 0.5);
  EXPECT_EQ(csv_lines(dir_ / "o" / "loss_history.csv").size(), 201u);
}

TEST_F(CliTest, OptimizeWithEverythingDisabledIsStationary) {
  const auto b = bundle(noisy(SurfaceKind::TiltedPlane, 12), "b");
  std::ofstream(dir_ / "zero.json")
      << R"({"sv":{"lambda1":0,"lambda2":0},"mv":{"lambda3":0},"optim":{"lambda_data":0,"use_svgeo":false}})";
  ASSERT_EQ(run("optimize " + b.string() + " --iterations 3 --config " + (dir_ / "zero.json").string() + " --out " +
                (dir_ / "o").string()),
            0);
  const auto lines = csv_lines(dir_ / "o" / "loss_history.csv");
  ASSERT_EQ(lines.size(), 4u);
  for (std::size_t k = 1; k < lines.size(); ++k) EXPECT_EQ(std::stod(split(lines[k])[1]), 0.0);
  EXPECT_EQ(slurp(dir_ / "o" / "view0_depth.pfm"), slurp(b / "view0_depth.pfm"));
}

TEST_F(CliTest, OptimizeDivergenceExitsThree) {
  const auto b = bundle(noisy(SurfaceKind::TiltedPlane, 12), "b");
  std::ofstream(dir_ / "hot.json") << R"({"optim":{"step":1e6,"depth_step_scale":10,"iterations":20}})";
  EXPECT_EQ(run("optimize " + b.string() + " --config " + (dir_ / "hot.json").string() + " --out " +
                (dir_ / "o").string()),
            3);
  const auto summary = io::read_json_file(dir_ / "o" / "summary.json");
  EXPECT_TRUE(summary["diverged"].get<bool>());
  EXPECT_EQ(csv_lines(dir_ / "o" / "loss_history.csv").size(),
            static_cast<std::size_t>(summary["last_good_iteration"].get<int>()) + 1);
}

TEST_F(CliTest, ManifestReproducesRun) {
  const auto b = bundle(noisy(SurfaceKind::SineHeightfield, 16), "b");
  ASSERT_EQ(run("optimize " + b.string() + " --iterations 5 --s 8 --theta 0.7 --out " + (dir_ / "o1").string()), 0);
  ASSERT_EQ(run("optimize " + b.string() + " --config " + (dir_ / "o1" / "manifest.json").string() + " --out " +
                (dir_ / "o2").string()),
            0);
  for (const char* f : {"loss_history.csv", "view0_depth.pfm", "view1_normal.pfm"}) {
    EXPECT_EQ(slurp(dir_ / "o1" / f), slurp(dir_ / "o2" / f)) << f;
  }
  const auto m = io::read_json_file(dir_ / "o1" / "manifest.json");
  for (const char* k : {"command", "tool_version", "config", "inputs", "outputs", "spec_hash", "wall_time_s"}) {
    EXPECT_TRUE(m.contains(k)) << k;
  }
  EXPECT_EQ(m["config"]["mv"]["S"].get<int>(), 8);
}

TEST_F(CliTest, SweepOverS) {
  const auto b = bundle(noisy(SurfaceKind::TiltedPlane, 16), "b");
  ASSERT_EQ(run("sweep " + b.string() + " --param S --values 0,4,8,16,32,64 --iterations 3 --out " +
                (dir_ / "s.csv").string()),
            0);
  const auto lines = csv_lines(dir_ / "s.csv");
  ASSERT_EQ(lines.size(), 7u);
  EXPECT_EQ(split(lines[0]).front(), "param");
  EXPECT_EQ(split(lines[1])[1], "0");
  EXPECT_EQ(split(lines[6])[1], "64");
  EXPECT_EQ(std::stod(split(lines[1])[7]), 0.0);  // mvgeo off at S = 0
}

TEST_F(CliTest, SweepOverThetaShrinksTrustRegion) {
  const auto b = bundle(noisy(SurfaceKind::TiltedPlane, 16), "b");
  ASSERT_EQ(run("sweep " + b.string() + " --param theta --values 0.5,0.8 --iterations 1 --out " + (dir_ / "t").string()),
            0);
  const auto lines = csv_lines(dir_ / "t" / "sweep.csv");
  ASSERT_EQ(lines.size(), 3u);
  EXPECT_GE(std::stoul(split(lines[1])[8]), std::stoul(split(lines[2])[8]));
}

TEST_F(CliTest, SweepErrors) {
  const auto b = bundle(make_scene(SurfaceKind::TiltedPlane, 12), "b");
  EXPECT_EQ(run("sweep " + b.string() + " --param gamma --values 1 --out " + (dir_ / "x.csv").string()), 2);
  EXPECT_EQ(run("sweep " + b.string() + " --param S --values '' --out " + (dir_ / "x.csv").string()), 2);
  EXPECT_EQ(run("sweep " + b.string() + " --param S --values 1.5 --out " + (dir_ / "x.csv").string()), 2);
  EXPECT_EQ(run("sweep " + b.string() + " --param theta --values 0.5,abc --out " + (dir_ / "x.csv").string()), 2);
}

}  // namespace
}  // namespace surfcon
