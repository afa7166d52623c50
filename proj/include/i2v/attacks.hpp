#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"

#include "i2v/dataset.hpp"
#include "i2v/model.hpp"
#include "i2v/tensor.hpp"

namespace i2v {

inline constexpr double kDefaultEpsilon = 16.0 / 255.0;
inline constexpr double kDefaultStepSize = 0.005;
inline constexpr std::size_t kDefaultIterations = 60;
// Constant every feature attack starts its perturbation from.
inline constexpr double kInitialPerturbation = 0.01 / 255.0;

struct AttackConfig {
  double epsilon = kDefaultEpsilon;
  double step_size = kDefaultStepSize;
  std::size_t iterations = kDefaultIterations;
  // Tapped layer name per source model; one entry is broadcast to all models.
  std::vector<std::string> taps{"block2"};
  // Keep x + delta_j for every iteration j (needed for cosine-trend analysis).
  bool record_iterates = false;
};

void validate(const AttackConfig& cfg);
nlohmann::json to_json(const AttackConfig& cfg);

struct AttackResult {
  std::string method;
  Tensor adversarial;   // [T,H,W,C], projected
  Tensor perturbation;  // adversarial - benign
  // trace[frame][j]: objective at delta_j (feature attacks, length I) or the
  // white-box loss at each iterate (fgsm/bim, steps + 1 entries for the clip).
  std::vector<std::vector<double>> trace;
  // Objective re-evaluated on each projected adversarial frame.
  std::vector<double> final_objective;
  // iterates[j]: clip built from x + delta_j (unprojected), when recorded.
  std::vector<Tensor> iterates;
  bool flagged = false;
  std::string diagnostics;
  double elapsed_seconds = 0.0;
};

// One signed-gradient step on the cross-entropy of video model f.
AttackResult fgsm(const Model& f, const VideoClip& x, double epsilon);
// Iterative FGSM with projection onto the epsilon ball after every step.
AttackResult bim(const Model& f, const VideoClip& x, double epsilon, std::size_t steps, double step);

// Per frame: Adam on CosSim(g_l(x^i + delta), g_l(x^i)) from a constant
// delta, then a single projection onto the epsilon ball and [0, 1].
AttackResult i2v_attack(const Model& g, const VideoClip& x, const AttackConfig& cfg);
// As i2v_attack with the sum of cosines over several image models.
AttackResult ens_i2v_attack(std::span<const Model* const> gs, const VideoClip& x, const AttackConfig& cfg);
// As i2v_attack with the standard deviation of g_l(x^i + delta) as objective.
AttackResult dr_attack(const Model& g, const VideoClip& x, const AttackConfig& cfg);

// Writes <stem>.json (metadata, traces, timing) and <stem>.bin (adversarial clip).
void save_attack_result(const AttackResult& r, const nlohmann::json& config, const std::filesystem::path& stem);
// Reads the adversarial clip back from a sidecar file.
Tensor load_tensor_sidecar(const std::filesystem::path& path);
void save_tensor_sidecar(const Tensor& t, const std::filesystem::path& path);

double linf_distance(const Tensor& a, const Tensor& b);

}  // namespace i2v
