#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <sys/wait.h>

#include "i2v/error.hpp"
#include "i2v/harness.hpp"
#include "i2v/report.hpp"

using namespace i2v;
namespace fs = std::filesystem;

namespace {

fs::path scratch_dir(const std::string& name) {
  auto dir = fs::temp_directory_path() / "i2v_test_harness" / name;
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

std::string slurp(const fs::path& p) {
  std::ifstream is(p, std::ios::binary);
  std::stringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

std::vector<VideoClip> some_clips(std::size_t n) {
  DatasetSpec spec;
  spec.train_per_class = 1;
  spec.val_per_class = 1;
  auto ds = generate_dataset(spec);
  ds.val.resize(n);
  return ds.val;
}

// Dataset small enough to train on in a fraction of a second.
ExperimentConfig tiny_config(const fs::path& out) {
  ExperimentConfig cfg = default_experiment_config();
  cfg.dataset.train_per_class = 2;
  cfg.dataset.val_per_class = 2;
  cfg.models = {{"img-a", 1}, {"vid-a", 1}};
  cfg.attacks = {{"i2v", {"img-a"}, {}}};
  cfg.sweep.source = "img-a";
  cfg.sweep.tap = "block2";
  cfg.analysis.image_taps = {{"img-a", "block1"}};
  cfg.output_dir = out;
  return cfg;
}

int run_cli(const std::string& args) {
  const std::string cmd = std::string(I2V_CLI) + " -q " + args + " > /dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

}  // namespace

TEST(Asr, CountsMisclassifiedClips) {
  Model f = build_model("vid-a", {10, 1, 1});
  auto clips = some_clips(4);
  std::vector<std::size_t> pred;
  for (const auto& c : clips) pred.push_back(f.predict(video_input(c.pixels)));

  auto relabel = [&](auto rule) {
    auto out = clips;
    for (std::size_t i = 0; i < out.size(); ++i) out[i].label = rule(i);
    return out;
  };
  EXPECT_EQ(compute_asr(f, relabel([&](std::size_t i) { return pred[i]; })), 0.0);
  EXPECT_EQ(compute_asr(f, relabel([&](std::size_t i) { return (pred[i] + 1) % 10; })), 100.0);
  EXPECT_EQ(compute_asr(f, relabel([&](std::size_t i) { return i == 2 ? pred[i] : (pred[i] + 3) % 10; })), 75.0);
  EXPECT_THROW(compute_asr(f, std::vector<VideoClip>{}), ConfigError);
}

TEST(AsrTable, JsonRoundTripAndCsvShape) {
  AsrTable t;
  t.targets = {"vid-a", "vid-b", "vid-c"};
  t.rows.push_back({"i2v", "img-a", {10.0, 20.0, 60.0}, 30.0, 0, ""});
  t.rows.push_back({"dr", "img-b", {0.0, 12.5, 7.25}, 6.583333333333333, 1, "clip 3: boom"});
  AsrTable back = AsrTable::from_json(t.to_json());
  EXPECT_EQ(back.to_json(), t.to_json());
  EXPECT_EQ(back.row("dr", "img-b").cells[2], 7.25);
  EXPECT_TRUE(back.row("dr", "img-b").flagged());
  EXPECT_THROW(back.row("ens-i2v", "img-a"), ConfigError);

  std::istringstream csv(t.to_csv());
  std::string line;
  std::size_t lines = 0;
  while (std::getline(csv, line)) {
    ++lines;
    EXPECT_GE(std::count(line.begin(), line.end(), ','), 4) << line;
  }
  EXPECT_EQ(lines, 3u);
}

TEST(Config, JsonRoundTripIsCanonical) {
  ExperimentConfig cfg = default_experiment_config();
  cfg.eval_seed = 99;
  cfg.attacks[0].config.taps = {"block3"};
  cfg.video_train.warmup_steps = 12;
  const std::string once = canonical_dump(cfg);
  const auto back = experiment_config_from_json(nlohmann::json::parse(once));
  EXPECT_EQ(canonical_dump(back), once);
  EXPECT_EQ(back.eval_seed, 99u);
  EXPECT_EQ(back.video_train.warmup_steps, 12u);
}

TEST(Config, UnknownKeysAndBadValuesAreConfigErrors) {
  auto j = to_json(default_experiment_config());
  j["typo"] = 1;
  EXPECT_THROW(experiment_config_from_json(j), ConfigError);

  j = to_json(default_experiment_config());
  j["white_box"]["epsilon"] = -1.0;
  EXPECT_THROW(experiment_config_from_json(j), ConfigError);

  j = to_json(default_experiment_config());
  j["models"][0]["arch"] = "resnet";
  EXPECT_THROW(experiment_config_from_json(j), ConfigError);

  j = to_json(default_experiment_config());
  j["attacks"][0]["method"] = "pgd";
  EXPECT_THROW(experiment_config_from_json(j), ConfigError);
}

TEST(Config, MissingKeysTakeDefaults) {
  auto cfg = experiment_config_from_json(nlohmann::json::object());
  EXPECT_EQ(canonical_dump(cfg), canonical_dump(default_experiment_config()));
}

TEST(Config, DefaultRosterIsTwoImageThreeVideo) {
  auto cfg = default_experiment_config();
  EXPECT_EQ(cfg.archs(Modality::kImage).size(), 2u);
  EXPECT_EQ(cfg.archs(Modality::kVideo).size(), 3u);
  EXPECT_NEAR(cfg.white_box.epsilon, 16.0 / 255.0, 1e-15);
  for (const auto& a : cfg.attacks) {
    EXPECT_NEAR(a.config.epsilon, 16.0 / 255.0, 1e-15);
    EXPECT_EQ(a.config.step_size, 0.005);
    EXPECT_EQ(a.config.iterations, 60u);
  }
}

TEST(Config, FileRoundTrip) {
  auto dir = scratch_dir("config");
  auto cfg = tiny_config(dir / "out");
  save_experiment_config(cfg, dir / "cfg.json");
  EXPECT_EQ(canonical_dump(load_experiment_config(dir / "cfg.json")), canonical_dump(cfg));
  EXPECT_THROW(load_experiment_config(dir / "missing.json"), ConfigError);
}

TEST(Report, AtomicWriteLeavesNoTemporary) {
  auto dir = scratch_dir("atomic");
  report::write_atomic(dir / "sub" / "a.txt", "first");
  report::write_atomic(dir / "sub" / "a.txt", "second");
  EXPECT_EQ(slurp(dir / "sub" / "a.txt"), "second");
  std::size_t files = 0;
  for (const auto& e : fs::directory_iterator(dir / "sub")) {
    ++files;
    EXPECT_EQ(e.path().filename(), "a.txt");
  }
  EXPECT_EQ(files, 1u);
}

TEST(Report, CsvQuotesAwkwardFields) {
  report::Csv csv{{"name", "value"}, {{"a,b", "1"}, {"say \"hi\"", "2"}}};
  EXPECT_EQ(csv.str(), "name,value\n\"a,b\",1\n\"say \"\"hi\"\"\",2\n");
}

TEST(Report, HeatmapMarksMissingCells) {
  auto svg = report::svg_heatmap("t", {"r"}, {"c1", "c2"}, {{0.5, std::nullopt}}, -1.0, 1.0);
  EXPECT_NE(svg.find("<svg"), std::string::npos);
  EXPECT_NE(svg.find("n/a"), std::string::npos);
}

TEST(Lab, DatasetIsPersistedAndReused) {
  auto dir = scratch_dir("lab_dataset");
  {
    Lab lab(tiny_config(dir));
    EXPECT_EQ(lab.dataset().train.size(), 20u);
  }
  const auto first = slurp(dir / "dataset.bin");
  Lab again(tiny_config(dir));
  EXPECT_EQ(again.dataset().val.size(), 20u);
  EXPECT_EQ(slurp(dir / "dataset.bin"), first);
}

TEST(Lab, ModelBelowGateIsRefused) {
  auto dir = scratch_dir("lab_gate");
  auto cfg = tiny_config(dir);
  cfg.image_train.epochs = 0;
  Lab lab(cfg);
  EXPECT_THROW(lab.model("img-a"), GateError);
}

TEST(Lab, UnknownModelIsConfigError) {
  Lab lab(tiny_config(scratch_dir("lab_unknown")));
  EXPECT_THROW(lab.model("vid-c"), ConfigError);
}

TEST(Cli, ExitCodes) {
  auto dir = scratch_dir("cli");
  auto cfg = tiny_config(dir / "out");
  save_experiment_config(cfg, dir / "ok.json");

  EXPECT_EQ(run_cli("report --print-config -c " + (dir / "ok.json").string()), 0);
  EXPECT_EQ(run_cli("gen-data -c " + (dir / "ok.json").string()), 0);
  EXPECT_TRUE(fs::exists(dir / "out" / "dataset.bin"));

  std::ofstream(dir / "typo.json") << R"({"datset": {}})";
  EXPECT_EQ(run_cli("gen-data -c " + (dir / "typo.json").string()), 2);
  EXPECT_EQ(run_cli("frobnicate"), 2);
  EXPECT_EQ(run_cli("attack -m pgd -c " + (dir / "ok.json").string()), 2);

  cfg.image_train.epochs = 0;
  save_experiment_config(cfg, dir / "gate.json");
  EXPECT_EQ(run_cli("train --arch img-a -c " + (dir / "gate.json").string()), 3);

  std::ofstream(dir / "blocker") << "not a directory";
  cfg.output_dir = dir / "blocker";
  save_experiment_config(cfg, dir / "runtime.json");
  EXPECT_EQ(run_cli("gen-data -c " + (dir / "runtime.json").string()), 4);
}
