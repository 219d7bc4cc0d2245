#include "support/tempdir.hpp"

#include "subalign/cli.hpp"
#include "subalign/io.hpp"

#include <gtest/gtest.h>

#include <fstream>

using namespace subalign;
namespace fs = std::filesystem;

namespace {

std::string bytes(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

fs::path small_config(const TempDir& dir, const std::string& extra = "") {
  const fs::path p = dir / "run.cfg";
  io::write_text(p, "d = 4\nsynth_classes = 3\nsynth_dim = 12\nsynth_samples = 40\nsynth_seed = 3\n" + extra);
  return p;
}

int cli(std::vector<std::string> args) {
  args.push_back("--log-level");
  args.push_back("error");
  return run_cli(args);
}

}  // namespace

TEST(Cli, UsageErrors) {
  EXPECT_EQ(cli({}), kExitUsage);
  EXPECT_EQ(cli({"fly"}), kExitUsage);
  EXPECT_EQ(cli({"train"}), kExitUsage);
  EXPECT_EQ(cli({"detect", "--target", "x.json"}), kExitUsage);
  EXPECT_EQ(cli({"detect", "--target", "x.json", "--detectors", "a", "--states", "b"}), kExitUsage);
  EXPECT_EQ(cli({"synth", "--bogus"}), kExitUsage);
  EXPECT_EQ(cli({"--help"}), kExitOk);
}

TEST(Cli, DataErrors) {
  TempDir dir("clidata");
  EXPECT_EQ(cli({"train", "--source", (dir / "absent.json").string(), "--out", dir.path().string()}), kExitData);
  io::write_text(dir / "bad.cfg", "colour = blue\n");
  EXPECT_EQ(cli({"synth", "--config", (dir / "bad.cfg").string(), "--out", dir.path().string()}), kExitData);
  io::write_text(dir / "range.cfg", "gamma = 2\n");
  EXPECT_EQ(cli({"synth", "--config", (dir / "range.cfg").string(), "--out", dir.path().string()}), kExitData);
}

TEST(Cli, StepwiseSubcommands) {
  TempDir dir("clisteps");
  const std::string cfg = small_config(dir).string();
  const std::string out = dir.path().string();
  ASSERT_EQ(cli({"synth", "--config", cfg, "--out", out}), kExitOk);
  const std::string src = (dir / "source" / "manifest.json").string();
  const std::string tgt = (dir / "target" / "manifest.json").string();
  ASSERT_TRUE(fs::exists(dir / "oracle.json"));
  ASSERT_EQ(cli({"train", "--config", cfg, "--source", src, "--out", out}), kExitOk);
  const std::string dets = (dir / "detectors.json").string();
  ASSERT_EQ(cli({"adapt", "--config", cfg, "--source", src, "--target", tgt, "--detectors", dets, "--out", out}),
            kExitOk);
  const std::string states = (dir / "states.json").string();
  ASSERT_EQ(cli({"detect", "--config", cfg, "--target", tgt, "--states", states, "--out", out}), kExitOk);
  ASSERT_TRUE(fs::exists(dir / "detections.csv"));
  ASSERT_EQ(cli({"evaluate", "--config", cfg, "--target", tgt, "--detections", (dir / "detections.json").string(),
                 "--states", states, "--out", out}),
            kExitOk);
  const auto report = io::read_json(dir / "report.json");
  EXPECT_EQ(report["per_class"].size(), 3u);
  EXPECT_TRUE(report["mean_ap"].is_number());
  ASSERT_EQ(cli({"analyze", "--states", states, "--source", src, "--target", tgt, "--detectors", dets, "--out", out}),
            kExitOk);
  EXPECT_TRUE(fs::exists(dir / "similarity.svg"));
  EXPECT_TRUE(fs::exists(dir / "hist_target.svg"));

  // States from a different class list are rejected.
  auto other = io::read_json(dir / "states.json");
  other["states"][0]["class_name"] = "zebra";
  io::write_text(dir / "other.json", io::dump(other));
  EXPECT_EQ(cli({"detect", "--target", tgt, "--states", (dir / "other.json").string(), "--out", out}), kExitData);
}

TEST(Cli, AdaptWithModeNoneKeepsEveryDetector) {
  TempDir dir("clinone");
  const std::string cfg = small_config(dir, "mode = none\n").string();
  const std::string out = dir.path().string();
  ASSERT_EQ(cli({"synth", "--config", cfg, "--out", out}), kExitOk);
  const std::string src = (dir / "source" / "manifest.json").string();
  ASSERT_EQ(cli({"train", "--config", cfg, "--source", src, "--out", out}), kExitOk);
  ASSERT_EQ(cli({"adapt", "--config", cfg, "--source", src, "--target", (dir / "target" / "manifest.json").string(),
                 "--detectors", (dir / "detectors.json").string(), "--out", out}),
            kExitOk);
  const auto report = io::read_json(dir / "adapt_report.json");
  EXPECT_EQ(report["mode"], "none");
  for (const auto& [name, c] : report["per_class"].items()) EXPECT_EQ(c["status"], "pass-through") << name;
}

TEST(Cli, PipelineRunsAreByteIdentical) {
  TempDir dir("clirepeat");
  const std::string cfg = small_config(dir).string();
  ASSERT_EQ(cli({"pipeline", "--config", cfg, "--out", (dir / "a").string()}), kExitOk);
  ASSERT_EQ(cli({"pipeline", "--config", cfg, "--out", (dir / "b").string()}), kExitOk);
  for (const char* f : {"report.json", "detections.json", "detections.csv", "states.json", "detectors.json",
                        "similarity.json", "histograms.json"}) {
    ASSERT_TRUE(fs::exists(dir / "a" / f)) << f;
    EXPECT_EQ(bytes(dir / "a" / f), bytes(dir / "b" / f)) << f;
  }
  EXPECT_TRUE(fs::exists(dir / "a" / "timing.json"));
}
