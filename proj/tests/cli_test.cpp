#include <gtest/gtest.h>
#include <sys/wait.h>

#include <array>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "biseunet/image_io.hpp"
#include "biseunet/model_config.hpp"
#include "biseunet/weights_io.hpp"
#include "json.hpp"
#include "test_util.hpp"

namespace biseunet {
namespace {

namespace fs = std::filesystem;

struct CliResult {
  int code = -1;
  std::string out;
};

CliResult run(const std::string& args) {
  const std::string cmd = std::string(BISEUNET_CLI_PATH) + " " + args + " 2>&1";
  CliResult r;
  FILE* pipe = popen(cmd.c_str(), "r");
  if (!pipe) return r;
  std::array<char, 4096> buf{};
  std::size_t n = 0;
  while ((n = fread(buf.data(), 1, buf.size(), pipe)) > 0) r.out.append(buf.data(), n);
  const int status = pclose(pipe);
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  return r;
}

std::string read_file(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  std::stringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

const char* kSmallConfig =
    "input_size = 64\n"
    "cp_widths = 4, 6, 8, 10, 12\n"
    "sp_widths = 4, 4, 6\n"
    "sp_proj_channels = 5\n"
    "fuse8_channels = 7\n"
    "decoder_widths = 9, 6, 4\n";

class Cli : public ::testing::Test {
 protected:
  testing::TempDir dir{"cli"};
  std::string path(const std::string& name) const { return (dir / name).string(); }

  void SetUp() override { std::ofstream(dir / "small.cfg") << kSmallConfig; }

  void make_dataset(int n, std::size_t size = 8) {
    fs::create_directories(dir / "images");
    fs::create_directories(dir / "masks");
    for (int i = 0; i < n; ++i) {
      const std::string stem = "img" + std::to_string(1000 + i);
      Image8 img{size, size, 3, std::vector<std::uint8_t>(size * size * 3, static_cast<std::uint8_t>(i))};
      Image8 mask{size, size, 1, std::vector<std::uint8_t>(size * size, 0)};
      for (std::size_t k = 0; k < size * size / 2; ++k) mask.pixels[(k + i) % (size * size)] = 255;
      write_png(dir / ("images/" + stem + ".png"), img);
      write_png(dir / ("masks/" + stem + ".png"), mask);
    }
  }
};

TEST_F(Cli, AnalyzeDefaultsInBand) {
  const CliResult r = run("analyze --format json");
  ASSERT_EQ(r.code, 0) << r.out;
  const auto j = nlohmann::json::parse(r.out);
  EXPECT_GE(j.at("total_params").get<std::uint64_t>(), 2000000u);
  EXPECT_LE(j.at("total_params").get<std::uint64_t>(), 3000000u);
  EXPECT_GE(j.at("total_macs").get<std::uint64_t>(), 600000000u);
  EXPECT_LE(j.at("total_macs").get<std::uint64_t>(), 1300000000u);
}

TEST_F(Cli, AnalyzeCsvHeader) {
  const CliResult r = run("analyze --format csv --config " + path("small.cfg"));
  ASSERT_EQ(r.code, 0) << r.out;
  EXPECT_EQ(r.out.substr(0, r.out.find('\n')), "layer,kind,out_shape,params,macs");
}

TEST_F(Cli, AnalyzeInputSizeOverride) {
  const CliResult r = run("analyze --input-size 320");
  ASSERT_EQ(r.code, 0) << r.out;
  EXPECT_NE(r.out.find("input 320x320"), std::string::npos);
  EXPECT_EQ(run("analyze --input-size 250").code, 2);
}

TEST_F(Cli, AnalyzeConfigErrors) {
  const CliResult missing = run("analyze --config " + path("nope.cfg"));
  EXPECT_EQ(missing.code, 2);
  EXPECT_NE(missing.out.find("nope.cfg"), std::string::npos);
  std::ofstream(dir / "bad.cfg") << "cp_widths = 1, 2\n";
  const CliResult bad = run("analyze --config " + path("bad.cfg"));
  EXPECT_EQ(bad.code, 2);
  EXPECT_NE(bad.out.find("cp_widths"), std::string::npos);
}

TEST_F(Cli, UsageErrors) {
  EXPECT_EQ(run("").code, 2);
  EXPECT_EQ(run("frobnicate").code, 2);
  EXPECT_EQ(run("analyze --format xml").code, 2);
  EXPECT_EQ(run("--help").code, 0);
}

TEST_F(Cli, InitWeightsIsDeterministic) {
  ASSERT_EQ(run("init-weights --config " + path("small.cfg") + " --seed 7 --out " + path("a.bsuw")).code, 0);
  ASSERT_EQ(run("init-weights --config " + path("small.cfg") + " --seed 7 --out " + path("b.bsuw")).code, 0);
  EXPECT_EQ(read_file(dir / "a.bsuw"), read_file(dir / "b.bsuw"));
  EXPECT_EQ(read_file(dir / "a.bsuw").substr(0, 4), "BSUW");
}

TEST_F(Cli, InferWritesMaskAtImageResolution) {
  ASSERT_EQ(run("init-weights --config " + path("small.cfg") + " --out " + path("w.bsuw")).code, 0);
  std::mt19937_64 rng(3);
  Image8 img{100, 75, 3, {}};
  for (int i = 0; i < 100 * 75 * 3; ++i) img.pixels.push_back(static_cast<std::uint8_t>(rng()));
  write_jpeg(dir / "in.jpg", img);
  const CliResult r = run("infer --config " + path("small.cfg") + " --weights " + path("w.bsuw") + " --image " +
                    path("in.jpg") + " --out " + path("mask.png") + " --prob-out " + path("prob.png") +
                    " --raw " + path("prob.bsuw"));
  ASSERT_EQ(r.code, 0) << r.out;
  const Image8 mask = read_image(dir / "mask.png");
  EXPECT_EQ(mask.width, 100u);
  EXPECT_EQ(mask.height, 75u);
  EXPECT_EQ(mask.channels, 1u);
  for (std::uint8_t v : mask.pixels) ASSERT_TRUE(v == 0 || v == 255);
  const Image8 prob = read_image(dir / "prob.png");
  EXPECT_EQ(prob.width, 100u);
  const auto raw = read_tensor_file(dir / "prob.bsuw");
  ASSERT_EQ(raw.size(), 1u);
  EXPECT_EQ(raw[0].dims, (std::vector<std::uint32_t>{1, 1, 75, 100}));
  for (std::size_t i = 0; i < raw[0].data.size(); ++i) {
    ASSERT_EQ(mask.pixels[i] == 255, raw[0].data[i] > 0.5f);
    ASSERT_NEAR(prob.pixels[i], raw[0].data[i] * 255.0f, 0.5f);
  }
}

TEST_F(Cli, InferErrors) {
  write_png(dir / "in.png", Image8{8, 8, 3, std::vector<std::uint8_t>(192, 0)});
  const std::string tail = " --image " + path("in.png") + " --out " + path("m.png");
  EXPECT_EQ(run("infer --weights " + path("missing.bsuw") + tail).code, 2);
  ASSERT_EQ(run("init-weights --config " + path("small.cfg") + " --out " + path("w.bsuw")).code, 0);
  // Weights for another config name the offending layer.
  const CliResult mismatch = run("infer --weights " + path("w.bsuw") + tail);
  EXPECT_EQ(mismatch.code, 2);
  EXPECT_NE(mismatch.out.find("layer '"), std::string::npos);
  const std::string bytes = read_file(dir / "w.bsuw");
  std::ofstream(dir / "cut.bsuw", std::ios::binary) << bytes.substr(0, bytes.size() / 2);
  const CliResult cut = run("infer --config " + path("small.cfg") + " --weights " + path("cut.bsuw") + tail);
  EXPECT_EQ(cut.code, 3);
  EXPECT_NE(cut.out.find("byte offset"), std::string::npos);
  std::ofstream(dir / "junk.png") << "junk";
  EXPECT_EQ(run("infer --config " + path("small.cfg") + " --weights " + path("w.bsuw") + " --image " +
                path("junk.png") + " --out " + path("m.png"))
                .code,
            3);
}

TEST_F(Cli, EvalIdealPredictorScoresOne) {
  make_dataset(20);
  const CliResult r = run("eval --config " + path("small.cfg") + " --images " + path("images") + " --masks " +
                    path("masks") + " --ideal-predictor");
  ASSERT_EQ(r.code, 0) << r.out;
  EXPECT_NE(r.out.find("# mean,1.000000,1.000000,n=3,"), std::string::npos) << r.out;
}

TEST_F(Cli, EvalWithModelAndJson) {
  make_dataset(10);
  ASSERT_EQ(run("init-weights --config " + path("small.cfg") + " --out " + path("w.bsuw")).code, 0);
  const CliResult r = run("eval --config " + path("small.cfg") + " --weights " + path("w.bsuw") + " --images " +
                    path("images") + " --masks " + path("masks") + " --split train --format json --out " +
                    path("scores.json"));
  ASSERT_EQ(r.code, 0) << r.out;
  const auto j = nlohmann::json::parse(read_file(dir / "scores.json"));
  EXPECT_EQ(j.at("per_image").size(), 7u);
  EXPECT_EQ(run("eval --images " + path("images") + " --masks " + path("masks")).code, 2);
}

TEST_F(Cli, EvalThousandPairsAndDeterministicSplit) {
  make_dataset(1000, 4);
  std::ofstream(dir / "masks/orphan.png") << "x";
  const auto listing = [&] {
    std::vector<std::string> v;
    for (const auto& e : fs::recursive_directory_iterator(dir / "masks")) v.push_back(e.path().string());
    std::sort(v.begin(), v.end());
    return v;
  };
  const auto before = listing();
  const CliResult r = run("eval --config " + path("small.cfg") + " --images " + path("images") + " --masks " +
                    path("masks") + " --ideal-predictor --seed 42 --out " + path("s.csv") + " --skip-log " +
                    path("skip.txt"));
  ASSERT_EQ(r.code, 0) << r.out;
  const std::string csv = read_file(dir / "s.csv");
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 152);  // header + 150 rows + summary
  EXPECT_NE(read_file(dir / "skip.txt").find("orphan.png"), std::string::npos);
  EXPECT_EQ(listing(), before);

  const std::string split = "split --images " + path("images") + " --masks " + path("masks") + " --seed 42";
  const CliResult a = run(split), b = run(split);
  ASSERT_EQ(a.code, 0);
  EXPECT_EQ(a.out, b.out);
  EXPECT_NE(a.out, run(split + "3").out);
}

TEST_F(Cli, BenchReports) {
  const CliResult r = run("bench --config " + path("small.cfg") + " --iters 5 --warmup 1 --format json");
  ASSERT_EQ(r.code, 0) << r.out;
  const auto j = nlohmann::json::parse(r.out);
  EXPECT_EQ(j.at("per_iter_ms").size(), 5u);
  EXPECT_NEAR(j.at("fps").get<double>() * j.at("mean_ms").get<double>(), 1000.0, 1.0);
  const CliResult csv = run("bench --config " + path("small.cfg") + " --iters 2 --warmup 0 --format csv --rss");
  ASSERT_EQ(csv.code, 0) << csv.out;
  EXPECT_EQ(csv.out.rfind("input_size,", 0), 0u);
}

TEST_F(Cli, BenchRejectsZeroIterations) {
  EXPECT_EQ(run("bench --config " + path("small.cfg") + " --iters 0").code, 2);
  EXPECT_EQ(run("bench --config " + path("small.cfg") + " --threads 0").code, 2);
}

TEST_F(Cli, Selftest) {
  const CliResult ok = run("selftest");
  EXPECT_EQ(ok.code, 0) << ok.out;
  EXPECT_NE(ok.out.find("all checks passed"), std::string::npos);
  const CliResult bad = run("selftest --inject-fault conv_oracle");
  EXPECT_EQ(bad.code, 1);
  EXPECT_NE(bad.out.find("FAIL conv_oracle"), std::string::npos);
}

}  // namespace
}  // namespace biseunet
