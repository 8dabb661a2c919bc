#include <filesystem>
#include <fstream>

#include <gtest/gtest.h>
#include <nlohmann/json.hpp>

#include "cli.hpp"
#include "support.hpp"
#include "xdistill/config.hpp"
#include "xdistill/model.hpp"

using namespace xdistill;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

fs::path scratch_dir(const std::string& name) {
  auto dir = fs::temp_directory_path() / ("xdistill_cli_" + std::to_string(::getpid())) / name;
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

int run_cli(std::vector<std::string> args) {
  args.insert(args.begin(), "xdistill");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  return cli::run(static_cast<int>(argv.size()), argv.data());
}

json read_json(const fs::path& p) {
  std::ifstream in(p);
  return json::parse(in);
}

}  // namespace

TEST(Config, Defaults) {
  TrainConfig c;
  EXPECT_EQ(c.learning_rate, 1e-4);
  EXPECT_EQ(c.weight_decay, 1e-8);
  EXPECT_EQ(c.batch_size, 16);
  EXPECT_EQ(c.epochs, 200);
  EXPECT_EQ(c.input_size, 448);
  EXPECT_EQ(c.T, 10);
  EXPECT_EQ(c.tau1, 0.3);
  EXPECT_EQ(c.tau2, 0.7);
  EXPECT_EQ(c.stage_taps, (std::vector<int>{3, 4}));
  EXPECT_NO_THROW(c.validate());
}

TEST(Config, FileThenOverrides) {
  auto dir = scratch_dir("config");
  std::ofstream(dir / "c.json") << "{\n  // desk scale\n  \"epochs\": 3, \"backbone\": \"resnet-tiny\"\n}\n";
  auto c = resolve_config(dir / "c.json", {"epochs=5", "stage_taps=[4]", "distance_norm=l1"});
  EXPECT_EQ(c.epochs, 5);
  EXPECT_EQ(c.backbone, "resnet-tiny");
  EXPECT_EQ(c.stage_taps, (std::vector<int>{4}));
  EXPECT_EQ(c.distance_norm, "l1");
  EXPECT_EQ(c.add_options().norm, DistanceNorm::kL1);
}

TEST(Config, RoundTripsThroughJson) {
  TrainConfig c;
  c.seed = 17;
  c.enable_bi_a = false;
  json j = c;
  auto back = j.get<TrainConfig>();
  EXPECT_EQ(json(back), j);
}

TEST(Config, PsrOffMeansZeroIterations) {
  TrainConfig c;
  c.enable_psr = false;
  EXPECT_EQ(c.srg_options().iterations, 0);
  c.enable_psr = true;
  EXPECT_EQ(c.srg_options().iterations, 10);
}

TEST(Config, Rejections) {
  EXPECT_TRUE(raises(ErrorCode::kConfig, [] { resolve_config("", {"unknown_key=1"}); }));
  EXPECT_TRUE(raises(ErrorCode::kConfig, [] { resolve_config("", {"epochs=many"}); }));
  EXPECT_TRUE(raises(ErrorCode::kConfig, [] { resolve_config("", {"noequals"}); }));
  EXPECT_TRUE(raises(ErrorCode::kConfig, [] { resolve_config("", {"tau1=0.8"}); }));
  EXPECT_TRUE(raises(ErrorCode::kConfig, [] { resolve_config("", {"input_size=100"}); }));
  EXPECT_TRUE(raises(ErrorCode::kConfig, [] { resolve_config("", {"stage_taps=[4,3]"}); }));
  EXPECT_TRUE(raises(ErrorCode::kConfig, [] { resolve_config("", {"backbone=vgg"}); }));
  EXPECT_TRUE(raises(ErrorCode::kMissingFile, [] { resolve_config("/nonexistent.json", {}); }));
}

TEST(Cli, ExitCodes) {
  auto dir = scratch_dir("exit");
  EXPECT_EQ(run_cli({"train-teacher", "--data", (dir / "none.jsonl").string(), "--out", (dir / "t").string()}),
            cli::kMissingInput);
  EXPECT_TRUE(fs::exists(dir / "t" / "error.json"));
  EXPECT_EQ(read_json(dir / "t" / "error.json")["exit_code"].get<int>(), cli::kMissingInput);
  EXPECT_EQ(run_cli({"gen-data", "--out", (dir / "g").string(), "bogus=1"}), cli::kConfigError);
  EXPECT_EQ(run_cli({"gen-data"}), cli::kConfigError);
  EXPECT_EQ(run_cli({"no-such-command"}), cli::kConfigError);
}

TEST(Cli, OracleCheckPasses) { EXPECT_EQ(run_cli({"oracle-check", "--seed", "4"}), cli::kOk); }

TEST(Cli, EndToEndSmoke) {
  auto dir = scratch_dir("e2e");
  const auto data = dir / "data";
  const std::vector<std::string> small{"backbone=resnet-tiny", "input_size=64", "epochs=1", "batch_size=4"};
  auto with = [&](std::vector<std::string> args) {
    args.insert(args.end(), small.begin(), small.end());
    return run_cli(args);
  };
  ASSERT_EQ(with({"gen-data", "--out", data.string(), "--n", "8", "--size", "64"}), cli::kOk);
  EXPECT_TRUE(fs::exists(data / "manifest.jsonl"));
  EXPECT_TRUE(fs::exists(data / "synthetic.json"));
  const auto manifest = (data / "manifest.jsonl").string();

  ASSERT_EQ(with({"train-teacher", "--data", manifest, "--out", (dir / "t").string()}), cli::kOk);
  const auto teacher = dir / "t" / "teacher.pt";
  EXPECT_TRUE(fs::exists(teacher));
  EXPECT_TRUE(fs::exists(dir / "t" / "resolved_config.json"));
  EXPECT_TRUE(fs::exists(dir / "t" / "loss.jsonl"));

  ASSERT_EQ(with({"train-student", "--data", manifest, "--teacher", teacher.string(), "--out", (dir / "s").string()}),
            cli::kOk);
  auto record = read_json(dir / "s" / "manifest.json");
  EXPECT_EQ(record["teacher_checksum_before"], record["teacher_checksum_after"]);
  EXPECT_TRUE(record.contains("determinism"));
  auto resolved = read_json(dir / "s" / "resolved_config.json");
  EXPECT_EQ(resolved["backbone"], "resnet-tiny");
  const auto student = dir / "s" / "student.pt";
  auto loaded = Classifier::load(student, true);
  EXPECT_EQ(loaded.spec().input_size, 64);

  ASSERT_EQ(with({"evaluate", "--data", manifest, "--checkpoint", student.string(), "--out", (dir / "e").string()}),
            cli::kOk);
  auto metrics = read_json(dir / "e" / "metrics.json");
  EXPECT_TRUE(metrics["mean"].contains("auc"));
  EXPECT_TRUE(metrics["fold"].contains("0"));

  ASSERT_EQ(with({"visualize", "--data", manifest, "--student", student.string(), "--teacher", teacher.string(),
                  "--out", (dir / "v").string(), "--limit", "2"}),
            cli::kOk);
  EXPECT_TRUE(fs::exists(dir / "v" / "cam_overlays.png"));
  EXPECT_TRUE(fs::exists(dir / "v" / "srg" / "pair00000.png"));
}
