#include <array>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>
#include <sys/wait.h>

#include <gtest/gtest.h>
#include <nlohmann/json.hpp>

#include "ugan/evalsuite.hpp"
#include "ugan/image_io.hpp"
#include "ugan/pairgen.hpp"

namespace fs = std::filesystem;
using namespace ugan;

namespace {

struct Run {
  int code;
  std::string out;
};

// Runs the CLI with stderr merged into the captured output.
Run cli(const std::string& args) {
  const std::string cmd = std::string(UGAN_CLI_PATH) + " " + args + " 2>&1";
  Run r{0, {}};
  FILE* pipe = ::popen(cmd.c_str(), "r");
  std::array<char, 4096> buf{};
  while (std::fgets(buf.data(), buf.size(), pipe)) r.out += buf.data();
  const int status = ::pclose(pipe);
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  return r;
}

fs::path scratch_dir(const std::string& name) {
  auto dir = fs::temp_directory_path() / ("ugan_cli_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

void write_scenes(const fs::path& dir, int count, int size) {
  fs::create_directories(dir);
  for (int i = 0; i < count; ++i) {
    save_image(dir / ("s" + std::to_string(i) + ".png"), pairgen::synthetic_scene({size, size}, i));
  }
}

}  // namespace

TEST(Cli, PrepareDataWritesDeterministicManifest) {
  const auto dir = scratch_dir("prepare");
  write_scenes(dir / "clean", 10, 16);
  write_scenes(dir / "dist", 10, 16);
  const std::string base = "prepare-data --clean-dir " + (dir / "clean").string() +
                           " --distorted-dir " + (dir / "dist").string() + " --seed 3 --out ";
  const auto a = cli(base + (dir / "a.tsv").string());
  ASSERT_EQ(a.code, 0) << a.out;
  ASSERT_EQ(cli(base + (dir / "b.tsv").string()).code, 0);
  EXPECT_EQ(slurp(dir / "a.tsv"), slurp(dir / "b.tsv"));
  EXPECT_FALSE(slurp(dir / "a.tsv").empty());
}

TEST(Cli, PrepareDataWithoutMatchesIsUsageError) {
  const auto dir = scratch_dir("nomatch");
  write_scenes(dir / "clean", 2, 8);
  fs::create_directories(dir / "dist");
  save_image(dir / "dist" / "other.png", pairgen::synthetic_scene({8, 8}, 0));
  const auto r = cli("prepare-data --clean-dir " + (dir / "clean").string() + " --distorted-dir " +
                     (dir / "dist").string() + " --out " + (dir / "m.tsv").string());
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.out.find("no matching pairs"), std::string::npos) << r.out;
}

TEST(Cli, UnknownFlagIsUsageError) {
  EXPECT_EQ(cli("train --no-such-flag 1").code, 2);
  EXPECT_EQ(cli("frobnicate").code, 2);
}

TEST(Cli, DumpConfigPrecedence) {
  const auto dir = scratch_dir("config");
  std::ofstream(dir / "run.cfg") << "# comment\nlr = 0.005\nbatch-size = 8\n";
  const auto r = cli("train --preset desk --config " + (dir / "run.cfg").string() +
                     " --batch-size 2 --dump-config");
  ASSERT_EQ(r.code, 0) << r.out;
  const auto j = nlohmann::json::parse(r.out);
  EXPECT_EQ(j.at("batch_size"), 2);                 // flag beats file
  EXPECT_DOUBLE_EQ(j.at("learning_rate"), 0.005);  // file beats preset
  EXPECT_EQ(j.at("image_size"), 64);               // preset value

  const auto paper = nlohmann::json::parse(cli("train --preset paper --dump-config").out);
  EXPECT_EQ(paper.at("batch_size"), 32);
  EXPECT_EQ(paper.at("image_size"), 256);
  EXPECT_DOUBLE_EQ(paper.at("weights").at("lambda_1"), 100.0);

  std::ofstream(dir / "bad.cfg") << "bogus-key = 1\n";
  EXPECT_EQ(cli("train --config " + (dir / "bad.cfg").string() + " --dump-config").code, 2);
}

TEST(Cli, UganVariantForcesZeroGdlWeight) {
  const auto r = cli("train --variant ugan --lambda2 3 --dump-config");
  ASSERT_EQ(r.code, 0) << r.out;
  const auto json_start = r.out.find('{');
  ASSERT_NE(json_start, std::string::npos);
  const auto j = nlohmann::json::parse(r.out.substr(json_start));
  EXPECT_DOUBLE_EQ(j.at("weights").at("lambda_2"), 0.0);
  const auto p = nlohmann::json::parse(cli("train --variant ugan-p --dump-config").out);
  EXPECT_DOUBLE_EQ(p.at("weights").at("lambda_2"), 1.0);
}

TEST(Cli, SynthDistortWithParamsFile) {
  const auto dir = scratch_dir("synth");
  write_scenes(dir / "clean", 3, 16);
  auto params = pairgen::DistortionParams::underwater_preset();
  params.noise_std = 0.0;
  std::ofstream(dir / "p.txt") << pairgen::format_distortion_params(params);
  const auto r = cli("synth-distort --params-file " + (dir / "p.txt").string() + " --in-dir " +
                     (dir / "clean").string() + " --out-dir " + (dir / "out").string());
  ASSERT_EQ(r.code, 0) << r.out;
  EXPECT_EQ(std::distance(fs::directory_iterator(dir / "out"), fs::directory_iterator{}), 3);
  std::ofstream(dir / "broken.txt") << "garbage";
  EXPECT_EQ(cli("synth-distort --params-file " + (dir / "broken.txt").string() + " --in-dir " +
                (dir / "clean").string() + " --out-dir " + (dir / "out2").string())
                .code,
            2);
}

TEST(Cli, EvaluateIdenticalDirectoriesGivesZeros) {
  const auto dir = scratch_dir("evaluate");
  write_scenes(dir / "orig", 3, 64);
  const auto r = cli("evaluate --original-dir " + (dir / "orig").string() + " --method same=" +
                     (dir / "orig").string() + " --patch c:0,0,32,32 --out-dir " + (dir / "rep").string());
  ASSERT_EQ(r.code, 0) << r.out;
  const auto report = eval::parse_report(slurp(dir / "rep" / "report.tsv"));
  int checked = 0;
  for (const auto& rec : report.records) {
    if (rec.method != "same" || rec.metric == "patch_mean" || rec.metric == "patch_std") continue;
    EXPECT_EQ(rec.value, 0.0) << rec.metric;
    ++checked;
  }
  EXPECT_EQ(checked, 6);
  EXPECT_TRUE(fs::exists(dir / "rep" / "summary.txt"));
}

TEST(Cli, BenchmarkReportsMeanAndFps) {
  const auto r = cli("benchmark --preset desk --trials 10 --json");
  ASSERT_EQ(r.code, 0) << r.out;
  const auto j = nlohmann::json::parse(r.out.substr(r.out.find('{')));
  EXPECT_EQ(j.at("trials"), 10);
  EXPECT_GT(j.at("fps").get<double>(), 0.0);
  EXPECT_DOUBLE_EQ(j.at("fps").get<double>(), 1.0 / j.at("mean_seconds_per_image").get<double>());
  EXPECT_EQ(cli("benchmark --preset desk --trials 3").code, 2);
}

TEST(Cli, TrainThenInfer) {
  const auto dir = scratch_dir("train");
  write_scenes(dir / "clean", 8, 64);
  ASSERT_EQ(cli("synth-distort --in-dir " + (dir / "clean").string() + " --out-dir " +
                (dir / "dist").string())
                .code,
            0);
  ASSERT_EQ(cli("prepare-data --clean-dir " + (dir / "clean").string() + " --distorted-dir " +
                (dir / "dist").string() + " --test-fraction 0.25 --out " + (dir / "m.tsv").string())
                .code,
            0);
  const auto t = cli("train --preset desk --manifest " + (dir / "m.tsv").string() +
                     " --iterations 2 --batch-size 2 --out-dir " + (dir / "run").string());
  ASSERT_EQ(t.code, 0) << t.out;
  EXPECT_TRUE(fs::exists(dir / "run" / "final.ugan"));
  EXPECT_TRUE(fs::exists(dir / "run" / "metrics.jsonl"));
  const auto i = cli("infer --checkpoint " + (dir / "run" / "final.ugan").string() + " --out-dir " +
                     (dir / "restored").string() + " " + (dir / "dist" / "s0.png").string() + " " +
                     (dir / "dist" / "s1.png").string() + " " + (dir / "dist" / "s2.png").string());
  ASSERT_EQ(i.code, 0) << i.out;
  for (int k = 0; k < 3; ++k) {
    EXPECT_TRUE(fs::exists(dir / "restored" / ("s" + std::to_string(k) + ".png")));
  }
  EXPECT_EQ(cli("infer --checkpoint " + (dir / "missing.ugan").string() + " --out-dir " +
                (dir / "x").string() + " " + (dir / "dist" / "s0.png").string())
                .code,
            1);
}
