#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"

#include "i2v/analysis.hpp"
#include "i2v/attacks.hpp"
#include "i2v/dataset.hpp"
#include "i2v/model.hpp"

namespace i2v {

struct ModelEntry {
  std::string arch;
  std::uint64_t seed = 1;
};

struct AttackEntry {
  std::string method;                // i2v | ens-i2v | dr
  std::vector<std::string> sources;  // image arch ids; ens-i2v uses all of them at once
  AttackConfig config;
};

struct WhiteBoxConfig {
  double epsilon = kDefaultEpsilon;
  std::size_t bim_steps = 10;
  double bim_step = 2.0 / 255.0;
};

struct SweepConfig {
  std::string source = "img-b";
  std::string tap = "block4";
  std::vector<double> step_sizes{0.001, 0.005, 0.01};
  std::vector<std::size_t> iterations{1, 20, 60};
};

struct AnalysisConfig {
  // Image tap compared against the video tap in the similarity matrices.
  std::map<std::string, std::string> image_taps{{"img-a", "block1"}, {"img-b", "block2"}};
  std::string video_tap = "block1";
  // White-box video model whose BIM clips drive the channel profiles.
  std::string profile_source = "vid-a";
  std::string profile_tap = "penultimate";
  std::string pcc_video_tap = "block2";
  std::uint64_t control_seed = 9001;
};

struct ExperimentConfig {
  DatasetSpec dataset;
  std::vector<ModelEntry> models;
  TrainConfig image_train;
  TrainConfig video_train;
  double accuracy_gate = 0.9;
  std::vector<AttackEntry> attacks;
  WhiteBoxConfig white_box;
  SweepConfig sweep;
  AnalysisConfig analysis;
  std::uint64_t eval_seed = 7;
  std::filesystem::path output_dir = "i2v-out";

  std::vector<std::string> archs(Modality m) const;
};

// Two image sources, three video targets, I2V and DR per source plus ENS-I2V.
ExperimentConfig default_experiment_config();
void validate(const ExperimentConfig& cfg);
nlohmann::json to_json(const ExperimentConfig& cfg);
// Rejects unknown keys; missing keys take defaults.
ExperimentConfig experiment_config_from_json(const nlohmann::json& j);
// Sorted keys, two-space indent, trailing newline.
std::string canonical_dump(const ExperimentConfig& cfg);
ExperimentConfig load_experiment_config(const std::filesystem::path& path);
void save_experiment_config(const ExperimentConfig& cfg, const std::filesystem::path& path);

// 100 * #{f(x_adv) != y} / #clips. Throws ConfigError on an empty set.
double compute_asr(const Model& f, std::span<const VideoClip> adversarial);

struct AsrRow {
  std::string attack;
  std::string source;
  std::vector<double> cells;  // percent, one per target
  double aasr = 0.0;
  std::size_t failures = 0;  // clips whose attack raised or was flagged
  std::string diagnostics;

  bool flagged() const { return failures > 0; }
};

struct AsrTable {
  std::vector<std::string> targets;
  std::vector<AsrRow> rows;

  const AsrRow& row(const std::string& attack, const std::string& source) const;
  nlohmann::json to_json() const;
  static AsrTable from_json(const nlohmann::json& j);
  std::string to_csv() const;
};

struct AttackOutcome {
  VideoClip adversarial;  // label and id copied from the benign clip
  AttackResult result;
  bool failed = false;  // attack raised; adversarial holds the benign clip
  std::string error;
};

struct ConstraintStats {
  std::size_t clips_checked = 0;
  std::size_t violations = 0;
  double max_linf = 0.0;
  double min_pixel = 1.0;
  double max_pixel = 0.0;
};

// Owns the artifacts of one experiment: dataset, trained models, eval set and
// cached attack outputs. Dataset and weights are persisted under
// output_dir and reused when their fingerprint matches the config.
class Lab {
 public:
  explicit Lab(ExperimentConfig cfg, std::ostream* log = nullptr);

  const ExperimentConfig& config() const { return cfg_; }
  std::filesystem::path report_dir() const { return cfg_.output_dir / "report"; }

  const Dataset& dataset();
  // Loads or trains, then applies the accuracy gate (GateError below it).
  const Model& model(const std::string& arch);
  std::vector<const Model*> models(Modality m);
  const EvalSet& eval_set();

  const std::vector<AttackOutcome>& feature_attack(const AttackEntry& entry, bool record_iterates = false);
  // method is fgsm or bim, crafted on the named video model.
  const std::vector<AttackOutcome>& white_box_attack(const std::string& method, const std::string& arch);

  const ConstraintStats& constraints() const { return constraints_; }

 private:
  void log(const std::string& msg);
  void check_constraints(const std::vector<AttackOutcome>& outcomes, double epsilon);
  std::string model_fingerprint(const ModelEntry& e) const;

  ExperimentConfig cfg_;
  std::ostream* log_;
  std::optional<Dataset> dataset_;
  std::map<std::string, std::unique_ptr<Model>> models_;
  std::optional<EvalSet> eval_;
  std::map<std::string, std::vector<AttackOutcome>> attack_cache_;
  ConstraintStats constraints_;
};

std::string row_source_label(const AttackEntry& entry);
AsrTable run_transfer_experiment(Lab& lab);

struct WhiteBoxRow {
  std::string method;
  std::string source;  // video model used as white box
  double white_box_asr = 0.0;
  std::vector<std::string> targets;  // every other video model
  std::vector<double> cells;
  double aasr = 0.0;
};
std::vector<WhiteBoxRow> run_white_box_baselines(Lab& lab);

struct StepIterGrid {
  std::string source;
  std::string tap;
  std::vector<double> step_sizes;
  std::vector<std::size_t> iterations;
  std::vector<std::vector<double>> aasr;  // [step][iteration]
  std::size_t failures = 0;

  nlohmann::json to_json() const;
};
StepIterGrid sweep_step_iter(Lab& lab, const std::vector<double>& step_sizes,
                             const std::vector<std::size_t>& iterations);

struct LayerSweepRow {
  std::string model;
  std::string tap;
  double aasr = 0.0;
  std::size_t failures = 0;
};
struct LayerSweep {
  std::vector<LayerSweepRow> rows;
  std::map<std::string, std::string> best_tap;

  nlohmann::json to_json() const;
};
LayerSweep sweep_layers(Lab& lab);

struct PccPair {
  std::string image;
  std::string video;
  std::vector<PccReport> clips;
  std::size_t undefined = 0;  // clips whose sequences had zero variance
  double mean_pcc = 0.0;
};

struct AnalysisResults {
  std::vector<SimilarityMatrix> similarity;  // benign, fgsm-adv, bim-adv
  SimilarityMatrix control;                  // benign, random-weight models
  std::vector<ChannelProfile> profiles;
  std::vector<PccPair> pcc;
};
AnalysisResults run_analysis(Lab& lab);

struct Report {
  std::optional<AsrTable> transfer;
  std::optional<std::vector<WhiteBoxRow>> white_box;
  std::optional<StepIterGrid> step_iter;
  std::optional<LayerSweep> layers;
  std::optional<AnalysisResults> analysis;
};

Report run_full_pipeline(Lab& lab);

// Writes every present section under lab.report_dir() as JSON + CSV (+ SVG),
// plus config.json, models.json, constraints.json and summary.json. No
// timings are written, so reruns are byte-identical.
void emit_report(Lab& lab, const Report& report);

}  // namespace i2v
