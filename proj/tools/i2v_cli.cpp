// Command-line front end. Exit codes: 0 ok, 2 config error, 3 gate failure,
// 4 runtime failure.
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"

#include "i2v/error.hpp"
#include "i2v/harness.hpp"
#include "i2v/report.hpp"

namespace fs = std::filesystem;
using namespace i2v;

namespace {

constexpr int kExitConfig = 2;
constexpr int kExitGate = 3;
constexpr int kExitRuntime = 4;

struct Overrides {
  std::string config_path;
  std::string out;
  std::optional<std::uint64_t> eval_seed;
  std::optional<std::uint64_t> dataset_seed;
  std::optional<double> epsilon;
  std::optional<double> alpha;
  std::optional<std::size_t> iterations;
  std::optional<std::string> tap;
  bool quiet = false;
};

ExperimentConfig resolve_config(const Overrides& o) {
  ExperimentConfig cfg = o.config_path.empty() ? default_experiment_config() : load_experiment_config(o.config_path);
  if (!o.out.empty()) cfg.output_dir = o.out;
  if (o.eval_seed) cfg.eval_seed = *o.eval_seed;
  if (o.dataset_seed) cfg.dataset.seed = *o.dataset_seed;
  for (auto& a : cfg.attacks) {
    if (o.epsilon) a.config.epsilon = *o.epsilon;
    if (o.alpha) a.config.step_size = *o.alpha;
    if (o.iterations) a.config.iterations = *o.iterations;
    if (o.tap) a.config.taps = {*o.tap};
  }
  if (o.epsilon) cfg.white_box.epsilon = *o.epsilon;
  validate(cfg);
  return cfg;
}

void print_table(const AsrTable& t) {
  std::cout << "attack    source         ";
  for (const auto& c : t.targets) std::cout << c << "     ";
  std::cout << "AASR\n";
  for (const auto& r : t.rows) {
    std::printf("%-9s %-14s", r.attack.c_str(), r.source.c_str());
    for (double c : r.cells) std::printf(" %8.2f", c);
    std::printf(" %8.2f%s\n", r.aasr, r.flagged() ? "  (flagged)" : "");
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Image-to-video transfer attack laboratory"};
  app.require_subcommand(1);
  app.fallthrough();
  Overrides o;
  app.add_option("-c,--config", o.config_path, "Experiment config (JSON)")->check(CLI::ExistingFile);
  app.add_option("-o,--out", o.out, "Output directory (overrides config)");
  app.add_option("--eval-seed", o.eval_seed, "Eval-set selection seed");
  app.add_option("--dataset-seed", o.dataset_seed, "Synthetic dataset seed");
  app.add_option("--epsilon", o.epsilon, "L-inf budget for every attack");
  app.add_option("--alpha", o.alpha, "Feature-attack step size");
  app.add_option("--iterations", o.iterations, "Feature-attack iteration count");
  app.add_option("--tap", o.tap, "Tapped layer for feature attacks");
  app.add_flag("-q,--quiet", o.quiet, "Suppress progress output");
  bool print_config = false;

  auto* gen = app.add_subcommand("gen-data", "Generate (or reuse) the synthetic dataset");
  auto* train_cmd = app.add_subcommand("train", "Train and gate the model roster");
  std::vector<std::string> train_archs;
  train_cmd->add_option("--arch", train_archs, "Only these archs (default: whole roster)");

  auto* attack_cmd = app.add_subcommand("attack", "Run one attack on the eval set and save the results");
  std::string method = "i2v";
  std::vector<std::string> sources;
  std::optional<std::size_t> clip_index;
  attack_cmd->add_option("-m,--method", method, "i2v | ens-i2v | dr | fgsm | bim")
      ->check(CLI::IsMember({"i2v", "ens-i2v", "dr", "fgsm", "bim"}));
  attack_cmd->add_option("-s,--source", sources, "Source model(s)")->required();
  attack_cmd->add_option("--clip", clip_index, "Only this eval clip (index)");

  auto* eval_cmd = app.add_subcommand("evaluate", "Transfer ASR table and white-box baselines");
  auto* sweep_cmd = app.add_subcommand("sweep", "Step-size/iteration grid and layer sweep");
  std::string sweep_kind = "all";
  sweep_cmd->add_option("--kind", sweep_kind, "step-iter | layers | all")
      ->check(CLI::IsMember({"step-iter", "layers", "all"}));
  auto* analyze_cmd = app.add_subcommand("analyze", "Similarity matrices, channel profiles, PCC");
  auto* report_cmd = app.add_subcommand("report", "Full pipeline and report");
  report_cmd->add_flag("--print-config", print_config, "Print the resolved config and exit");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitConfig;
  }

  try {
    const ExperimentConfig cfg = resolve_config(o);
    if (print_config) {
      std::cout << canonical_dump(cfg);
      return 0;
    }
    Lab lab(cfg, o.quiet ? nullptr : &std::cerr);

    if (gen->parsed()) {
      const auto& ds = lab.dataset();
      std::cout << "dataset: " << ds.train.size() << " train, " << ds.val.size() << " val clips, "
                << ds.spec.num_classes() << " classes -> " << (cfg.output_dir / "dataset.bin").string() << "\n";
    } else if (train_cmd->parsed()) {
      const auto archs = train_archs.empty() ? [&] {
        std::vector<std::string> all;
        for (const auto& m : cfg.models) all.push_back(m.arch);
        return all;
      }()
                                             : train_archs;
      for (const auto& a : archs) {
        const Model& m = lab.model(a);
        std::cout << a << ": val accuracy " << report::fmt(m.val_accuracy.value_or(0.0)) << "\n";
      }
    } else if (attack_cmd->parsed()) {
      const auto& clips = lab.eval_set().clips;
      const fs::path dir = cfg.output_dir / "attacks";
      fs::create_directories(dir);
      std::vector<AttackOutcome> outcomes;
      nlohmann::json meta;
      if (method == "fgsm" || method == "bim") {
        if (sources.size() != 1) throw ConfigError(method + " takes exactly one video source model");
        outcomes = lab.white_box_attack(method, sources[0]);
        meta = {{"epsilon", cfg.white_box.epsilon}, {"bim_steps", cfg.white_box.bim_steps},
                {"bim_step", cfg.white_box.bim_step}, {"source", sources[0]}};
      } else {
        AttackEntry e{method, sources, {}};
        for (const auto& a : cfg.attacks) {
          if (a.method == method) {
            e.config = a.config;
            break;
          }
        }
        if (o.epsilon) e.config.epsilon = *o.epsilon;
        if (o.alpha) e.config.step_size = *o.alpha;
        if (o.iterations) e.config.iterations = *o.iterations;
        if (o.tap) e.config.taps = {*o.tap};
        outcomes = lab.feature_attack(e);
        meta = to_json(e.config);
        meta["sources"] = sources;
      }
      std::string label;
      for (const auto& s : sources) label += (label.empty() ? "" : "+") + s;
      for (std::size_t k = 0; k < outcomes.size(); ++k) {
        if (clip_index && *clip_index != k) continue;
        const auto& oc = outcomes[k];
        if (oc.failed) {
          std::cout << clips[k].clip_id << ": attack failed: " << oc.error << "\n";
          continue;
        }
        const fs::path stem = dir / (method + "-" + label + "-" + clips[k].clip_id);
        save_attack_result(oc.result, meta, stem);
        std::cout << clips[k].clip_id << ": linf " << report::fmt(linf_distance(oc.result.adversarial, clips[k].pixels))
                  << (oc.result.flagged ? " (flagged: " + oc.result.diagnostics + ")" : "") << " -> "
                  << stem.string() << ".json\n";
      }
      if (clip_index && *clip_index >= outcomes.size()) {
        throw ConfigError("--clip " + std::to_string(*clip_index) + " out of range (" +
                          std::to_string(outcomes.size()) + " eval clips)");
      }
    } else if (eval_cmd->parsed()) {
      Report r;
      r.transfer = run_transfer_experiment(lab);
      r.white_box = run_white_box_baselines(lab);
      emit_report(lab, r);
      print_table(*r.transfer);
    } else if (sweep_cmd->parsed()) {
      Report r;
      if (sweep_kind != "layers") r.step_iter = sweep_step_iter(lab, cfg.sweep.step_sizes, cfg.sweep.iterations);
      if (sweep_kind != "step-iter") r.layers = sweep_layers(lab);
      emit_report(lab, r);
      std::cout << "wrote sweep results to " << lab.report_dir().string() << "\n";
    } else if (analyze_cmd->parsed()) {
      Report r;
      r.analysis = run_analysis(lab);
      emit_report(lab, r);
      for (const auto& p : r.analysis->pcc) {
        std::cout << "PCC " << p.image << " vs " << p.video << ": " << report::fmt(p.mean_pcc) << "\n";
      }
    } else if (report_cmd->parsed()) {
      const Report r = run_full_pipeline(lab);
      emit_report(lab, r);
      print_table(*r.transfer);
      std::cout << "report written to " << lab.report_dir().string() << "\n";
    }
    return 0;
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const TapError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const GateError& e) {
    std::cerr << "gate failure: " << e.what() << "\n";
    return kExitGate;
  } catch (const std::exception& e) {
    std::cerr << "runtime failure: " << e.what() << "\n";
    return kExitRuntime;
  }
}
