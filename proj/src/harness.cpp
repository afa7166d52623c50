#include "i2v/harness.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <set>
#include <sstream>

#include "i2v/error.hpp"
#include "i2v/report.hpp"
#include "i2v/rng.hpp"

namespace i2v {

namespace fs = std::filesystem;
using nlohmann::json;

// ---------------------------------------------------------------- config

std::vector<std::string> ExperimentConfig::archs(Modality m) const {
  std::vector<std::string> out;
  for (const auto& e : models) {
    if (find_arch(e.arch).modality == m) out.push_back(e.arch);
  }
  return out;
}

ExperimentConfig default_experiment_config() {
  ExperimentConfig cfg;
  cfg.models = {{"img-a", 1}, {"img-b", 1}, {"vid-a", 1}, {"vid-b", 1}, {"vid-c", 1}};
  cfg.image_train.epochs = 4;
  cfg.image_train.batch_size = 16;
  cfg.image_train.learning_rate = 3e-3;
  cfg.video_train.epochs = 16;
  cfg.video_train.batch_size = 8;
  cfg.video_train.learning_rate = 5e-3;
  cfg.video_train.warmup_steps = 30;
  // Taps are the per-source winners of the layer sweep.
  AttackConfig on_a, on_b, on_both;
  on_a.taps = {"block3"};
  on_b.taps = {"block4"};
  on_both.taps = {"block3", "block4"};
  cfg.attacks = {{"i2v", {"img-a"}, on_a},
                 {"i2v", {"img-b"}, on_b},
                 {"dr", {"img-a"}, on_a},
                 {"dr", {"img-b"}, on_b},
                 {"ens-i2v", {"img-a", "img-b"}, on_both}};
  return cfg;
}

void validate(const ExperimentConfig& cfg) {
  validate(cfg.dataset);
  validate(cfg.image_train);
  validate(cfg.video_train);
  if (cfg.models.empty()) throw ConfigError("model roster is empty");
  std::set<std::string> seen;
  for (const auto& m : cfg.models) {
    find_arch(m.arch);
    if (!seen.insert(m.arch).second) throw ConfigError("arch " + m.arch + " listed twice in the model roster");
  }
  if (cfg.archs(Modality::kVideo).empty()) throw ConfigError("roster has no video model");
  if (!(cfg.accuracy_gate >= 0.0 && cfg.accuracy_gate <= 1.0)) throw ConfigError("accuracy_gate must be in [0, 1]");
  auto require_image = [&](const std::string& arch, const std::string& where) {
    if (!seen.count(arch)) throw ConfigError(where + ": arch " + arch + " is not in the model roster");
    if (find_arch(arch).modality != Modality::kImage) throw ConfigError(where + ": " + arch + " is not an image model");
  };
  for (const auto& a : cfg.attacks) {
    if (a.method != "i2v" && a.method != "dr" && a.method != "ens-i2v") {
      throw ConfigError("unknown attack method '" + a.method + "' (expected i2v, ens-i2v or dr)");
    }
    if (a.sources.empty()) throw ConfigError(a.method + " attack has no source models");
    for (const auto& s : a.sources) require_image(s, a.method + " attack");
    validate(a.config);
    if (a.config.epsilon > 1.0) throw ConfigError("attack epsilon must be at most 1");
  }
  if (!(cfg.white_box.epsilon > 0.0) || !(cfg.white_box.bim_step > 0.0) || cfg.white_box.bim_steps == 0) {
    throw ConfigError("white_box settings must be positive");
  }
  if (cfg.sweep.step_sizes.empty() || cfg.sweep.iterations.empty()) throw ConfigError("sweep grids must be non-empty");
  for (double s : cfg.sweep.step_sizes) {
    if (!(s > 0.0)) throw ConfigError("sweep step sizes must be positive");
  }
  require_image(cfg.sweep.source, "sweep");
  for (const auto& [arch, tap] : cfg.analysis.image_taps) require_image(arch, "analysis.image_taps");
  if (!seen.count(cfg.analysis.profile_source) ||
      find_arch(cfg.analysis.profile_source).modality != Modality::kVideo) {
    throw ConfigError("analysis.profile_source must be a video model in the roster");
  }
  if (cfg.output_dir.empty()) throw ConfigError("output_dir is empty");
}

namespace {

json train_json(const TrainConfig& t) {
  return {{"epochs", t.epochs},
          {"batch_size", t.batch_size},
          {"learning_rate", t.learning_rate},
          {"cosine_schedule", t.cosine_schedule},
          {"warmup_steps", t.warmup_steps},
          {"seed", t.seed}};
}

void check_keys(const json& j, const std::string& where, std::initializer_list<const char*> allowed) {
  if (!j.is_object()) throw ConfigError(where + " must be an object");
  for (const auto& [key, value] : j.items()) {
    if (std::none_of(allowed.begin(), allowed.end(), [&](const char* a) { return key == a; })) {
      throw ConfigError("unknown key '" + key + "' in " + where);
    }
  }
}

TrainConfig train_from_json(const json& j, const std::string& where, TrainConfig t) {
  check_keys(j, where, {"epochs", "batch_size", "learning_rate", "cosine_schedule", "warmup_steps", "seed"});
  t.epochs = j.value("epochs", t.epochs);
  t.batch_size = j.value("batch_size", t.batch_size);
  t.learning_rate = j.value("learning_rate", t.learning_rate);
  t.cosine_schedule = j.value("cosine_schedule", t.cosine_schedule);
  t.warmup_steps = j.value("warmup_steps", t.warmup_steps);
  t.seed = j.value("seed", t.seed);
  return t;
}

json attack_json(const AttackEntry& a) {
  json j = to_json(a.config);
  j["method"] = a.method;
  j["sources"] = a.sources;
  return j;
}

AttackEntry attack_from_json(const json& j) {
  check_keys(j, "attack entry", {"method", "sources", "epsilon", "step_size", "iterations", "taps"});
  AttackEntry a;
  a.method = j.at("method").get<std::string>();
  a.sources = j.at("sources").get<std::vector<std::string>>();
  a.config.epsilon = j.value("epsilon", a.config.epsilon);
  a.config.step_size = j.value("step_size", a.config.step_size);
  a.config.iterations = j.value("iterations", a.config.iterations);
  a.config.taps = j.value("taps", a.config.taps);
  return a;
}

}  // namespace

json to_json(const ExperimentConfig& cfg) {
  json models = json::array();
  for (const auto& m : cfg.models) models.push_back({{"arch", m.arch}, {"seed", m.seed}});
  json attacks = json::array();
  for (const auto& a : cfg.attacks) attacks.push_back(attack_json(a));
  return {{"dataset", to_json(cfg.dataset)},
          {"models", models},
          {"train", {{"image", train_json(cfg.image_train)}, {"video", train_json(cfg.video_train)}}},
          {"accuracy_gate", cfg.accuracy_gate},
          {"attacks", attacks},
          {"white_box",
           {{"epsilon", cfg.white_box.epsilon},
            {"bim_steps", cfg.white_box.bim_steps},
            {"bim_step", cfg.white_box.bim_step}}},
          {"sweep",
           {{"source", cfg.sweep.source},
            {"tap", cfg.sweep.tap},
            {"step_sizes", cfg.sweep.step_sizes},
            {"iterations", cfg.sweep.iterations}}},
          {"analysis",
           {{"image_taps", cfg.analysis.image_taps},
            {"video_tap", cfg.analysis.video_tap},
            {"profile_source", cfg.analysis.profile_source},
            {"profile_tap", cfg.analysis.profile_tap},
            {"pcc_video_tap", cfg.analysis.pcc_video_tap},
            {"control_seed", cfg.analysis.control_seed}}},
          {"eval_seed", cfg.eval_seed},
          {"output_dir", cfg.output_dir.string()}};
}

ExperimentConfig experiment_config_from_json(const json& j) {
  ExperimentConfig cfg = default_experiment_config();
  try {
    check_keys(j, "config", {"dataset", "models", "train", "accuracy_gate", "attacks", "white_box", "sweep", "analysis",
                             "eval_seed", "output_dir"});
    if (j.contains("dataset")) {
      check_keys(j["dataset"], "dataset",
                 {"frames", "height", "width", "channels", "shapes", "motions", "train_per_class", "val_per_class",
                  "noise", "contrast_min", "contrast_max", "shape_radius", "speed", "seed"});
      cfg.dataset = dataset_spec_from_json(j["dataset"]);
    }
    if (j.contains("models")) {
      cfg.models.clear();
      for (const auto& m : j["models"]) {
        check_keys(m, "model entry", {"arch", "seed"});
        cfg.models.push_back({m.at("arch").get<std::string>(), m.value("seed", std::uint64_t{1})});
      }
    }
    if (j.contains("train")) {
      check_keys(j["train"], "train", {"image", "video"});
      if (j["train"].contains("image")) cfg.image_train = train_from_json(j["train"]["image"], "train.image", cfg.image_train);
      if (j["train"].contains("video")) cfg.video_train = train_from_json(j["train"]["video"], "train.video", cfg.video_train);
    }
    cfg.accuracy_gate = j.value("accuracy_gate", cfg.accuracy_gate);
    if (j.contains("attacks")) {
      cfg.attacks.clear();
      for (const auto& a : j["attacks"]) cfg.attacks.push_back(attack_from_json(a));
    }
    if (j.contains("white_box")) {
      const auto& w = j["white_box"];
      check_keys(w, "white_box", {"epsilon", "bim_steps", "bim_step"});
      cfg.white_box.epsilon = w.value("epsilon", cfg.white_box.epsilon);
      cfg.white_box.bim_steps = w.value("bim_steps", cfg.white_box.bim_steps);
      cfg.white_box.bim_step = w.value("bim_step", cfg.white_box.bim_step);
    }
    if (j.contains("sweep")) {
      const auto& s = j["sweep"];
      check_keys(s, "sweep", {"source", "tap", "step_sizes", "iterations"});
      cfg.sweep.source = s.value("source", cfg.sweep.source);
      cfg.sweep.tap = s.value("tap", cfg.sweep.tap);
      cfg.sweep.step_sizes = s.value("step_sizes", cfg.sweep.step_sizes);
      cfg.sweep.iterations = s.value("iterations", cfg.sweep.iterations);
    }
    if (j.contains("analysis")) {
      const auto& a = j["analysis"];
      check_keys(a, "analysis",
                 {"image_taps", "video_tap", "profile_source", "profile_tap", "pcc_video_tap", "control_seed"});
      if (a.contains("image_taps")) cfg.analysis.image_taps = a["image_taps"].get<std::map<std::string, std::string>>();
      cfg.analysis.video_tap = a.value("video_tap", cfg.analysis.video_tap);
      cfg.analysis.profile_source = a.value("profile_source", cfg.analysis.profile_source);
      cfg.analysis.profile_tap = a.value("profile_tap", cfg.analysis.profile_tap);
      cfg.analysis.pcc_video_tap = a.value("pcc_video_tap", cfg.analysis.pcc_video_tap);
      cfg.analysis.control_seed = a.value("control_seed", cfg.analysis.control_seed);
    }
    cfg.eval_seed = j.value("eval_seed", cfg.eval_seed);
    if (j.contains("output_dir")) cfg.output_dir = j["output_dir"].get<std::string>();
  } catch (const json::exception& e) {
    throw ConfigError(std::string("bad experiment config: ") + e.what());
  }
  validate(cfg);
  return cfg;
}

std::string canonical_dump(const ExperimentConfig& cfg) { return to_json(cfg).dump(2) + "\n"; }

ExperimentConfig load_experiment_config(const fs::path& path) {
  std::ifstream is(path);
  if (!is) throw ConfigError("cannot open config file " + path.string());
  json j;
  try {
    j = json::parse(is);
  } catch (const json::exception& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
  return experiment_config_from_json(j);
}

void save_experiment_config(const ExperimentConfig& cfg, const fs::path& path) {
  report::write_atomic(path, canonical_dump(cfg));
}

// ---------------------------------------------------------------- ASR

double compute_asr(const Model& f, std::span<const VideoClip> adversarial) {
  if (adversarial.empty()) throw ConfigError("compute_asr: empty clip set");
  std::size_t fooled = 0;
  for (const auto& c : adversarial) fooled += f.predict(video_input(c.pixels)) != c.label ? 1 : 0;
  return 100.0 * static_cast<double>(fooled) / static_cast<double>(adversarial.size());
}

const AsrRow& AsrTable::row(const std::string& attack, const std::string& source) const {
  for (const auto& r : rows) {
    if (r.attack == attack && r.source == source) return r;
  }
  throw ConfigError("no ASR row for " + attack + " / " + source);
}

json AsrTable::to_json() const {
  json rs = json::array();
  for (const auto& r : rows) {
    rs.push_back({{"attack", r.attack},
                  {"source", r.source},
                  {"cells", r.cells},
                  {"aasr", r.aasr},
                  {"failures", r.failures},
                  {"diagnostics", r.diagnostics}});
  }
  return {{"targets", targets}, {"rows", rs}};
}

AsrTable AsrTable::from_json(const json& j) {
  AsrTable t;
  try {
    t.targets = j.at("targets").get<std::vector<std::string>>();
    for (const auto& r : j.at("rows")) {
      AsrRow row;
      row.attack = r.at("attack").get<std::string>();
      row.source = r.at("source").get<std::string>();
      row.cells = r.at("cells").get<std::vector<double>>();
      row.aasr = r.at("aasr").get<double>();
      row.failures = r.value("failures", std::size_t{0});
      row.diagnostics = r.value("diagnostics", std::string{});
      t.rows.push_back(std::move(row));
    }
  } catch (const json::exception& e) {
    throw FormatError(std::string("bad ASR table: ") + e.what());
  }
  return t;
}

std::string AsrTable::to_csv() const {
  report::Csv csv;
  csv.header = {"attack", "source"};
  csv.header.insert(csv.header.end(), targets.begin(), targets.end());
  csv.header.insert(csv.header.end(), {"aasr", "failures"});
  for (const auto& r : rows) {
    std::vector<std::string> line{r.attack, r.source};
    for (double c : r.cells) line.push_back(report::fmt(c));
    line.push_back(report::fmt(r.aasr));
    line.push_back(std::to_string(r.failures));
    csv.rows.push_back(std::move(line));
  }
  return csv.str();
}

// ---------------------------------------------------------------- Lab

Lab::Lab(ExperimentConfig cfg, std::ostream* log) : cfg_(std::move(cfg)), log_(log) { validate(cfg_); }

void Lab::log(const std::string& msg) {
  if (log_) *log_ << msg << std::endl;
}

const Dataset& Lab::dataset() {
  if (dataset_) return *dataset_;
  const fs::path path = cfg_.output_dir / "dataset.bin";
  if (fs::exists(path)) {
    try {
      Dataset ds = load_dataset(path);
      if (to_json(ds.spec) == to_json(cfg_.dataset)) {
        dataset_ = std::move(ds);
        log("loaded dataset " + path.string());
        return *dataset_;
      }
      log("dataset at " + path.string() + " was built from a different spec; regenerating");
    } catch (const FormatError& e) {
      log(std::string("ignoring unreadable dataset: ") + e.what());
    }
  }
  dataset_ = generate_dataset(cfg_.dataset);
  fs::create_directories(cfg_.output_dir);
  save_dataset(*dataset_, path);
  log("generated dataset: " + std::to_string(dataset_->train.size()) + " train / " +
      std::to_string(dataset_->val.size()) + " val clips");
  return *dataset_;
}

std::string Lab::model_fingerprint(const ModelEntry& e) const {
  const bool image = find_arch(e.arch).modality == Modality::kImage;
  return json{{"arch", e.arch},
              {"seed", e.seed},
              {"dataset", to_json(cfg_.dataset)},
              {"train", train_json(image ? cfg_.image_train : cfg_.video_train)}}
      .dump();
}

const Model& Lab::model(const std::string& arch) {
  if (auto it = models_.find(arch); it != models_.end()) return *it->second;
  const auto entry = std::find_if(cfg_.models.begin(), cfg_.models.end(), [&](const auto& m) { return m.arch == arch; });
  if (entry == cfg_.models.end()) throw ConfigError("arch " + arch + " is not in the model roster");
  const fs::path dir = cfg_.output_dir / "models";
  const fs::path weights = dir / (arch + ".wts");
  const fs::path stamp = dir / (arch + ".fingerprint");
  const std::string fp = model_fingerprint(*entry);

  std::unique_ptr<Model> m;
  if (fs::exists(weights) && fs::exists(stamp)) {
    std::ifstream is(stamp);
    std::stringstream ss;
    ss << is.rdbuf();
    if (ss.str() == fp) {
      m = std::make_unique<Model>(load_weights(weights, arch));
      log("loaded " + arch + " from " + weights.string());
    }
  }
  if (!m) {
    const Dataset& ds = dataset();
    const bool image = find_arch(arch).modality == Modality::kImage;
    ModelOptions opts{image ? ds.spec.shapes.size() : ds.spec.num_classes(), ds.spec.channels, entry->seed};
    m = std::make_unique<Model>(build_model(arch, opts));
    const auto tr = image ? frame_samples(ds.train) : video_samples(ds.train);
    const auto va = image ? frame_samples(ds.val) : video_samples(ds.val);
    log("training " + arch + " on " + std::to_string(tr.size()) + " samples");
    const TrainReport rep = train(*m, tr, va, image ? cfg_.image_train : cfg_.video_train);
    log(arch + ": train accuracy " + report::fmt(rep.train_accuracy) + ", val accuracy " +
        report::fmt(rep.val_accuracy));
    fs::create_directories(dir);
    save_weights(*m, weights);
    report::write_atomic(stamp, fp);
  }
  const double acc = m->val_accuracy.value_or(0.0);
  if (acc < cfg_.accuracy_gate) {
    throw GateError(arch + " validation accuracy " + report::fmt(acc) + " is below the gate " +
                    report::fmt(cfg_.accuracy_gate));
  }
  return *models_.emplace(arch, std::move(m)).first->second;
}

std::vector<const Model*> Lab::models(Modality m) {
  std::vector<const Model*> out;
  for (const auto& arch : cfg_.archs(m)) out.push_back(&model(arch));
  return out;
}

const EvalSet& Lab::eval_set() {
  if (eval_) return *eval_;
  const auto video = models(Modality::kVideo);
  const auto image = models(Modality::kImage);
  const Dataset& ds = dataset();
  eval_ = select_eval_set(video, image, ds.val, ds.spec.num_classes(), cfg_.eval_seed);
  log("selected " + std::to_string(eval_->clips.size()) + " eval clips");
  return *eval_;
}

void Lab::check_constraints(const std::vector<AttackOutcome>& outcomes, double epsilon) {
  const EvalSet& ev = eval_set();
  for (std::size_t k = 0; k < outcomes.size(); ++k) {
    if (outcomes[k].failed) continue;
    const Tensor& adv = outcomes[k].adversarial.pixels;
    const double linf = linf_distance(adv, ev.clips[k].pixels);
    bool bad = linf > epsilon + 1e-12;
    for (double v : adv.data()) {
      bad |= v < 0.0 || v > 1.0;
      constraints_.min_pixel = std::min(constraints_.min_pixel, v);
      constraints_.max_pixel = std::max(constraints_.max_pixel, v);
    }
    constraints_.max_linf = std::max(constraints_.max_linf, linf);
    constraints_.violations += bad ? 1 : 0;
    ++constraints_.clips_checked;
  }
}

namespace {

std::string attack_key(const AttackEntry& e) { return attack_json(e).dump(); }

}  // namespace

const std::vector<AttackOutcome>& Lab::feature_attack(const AttackEntry& entry, bool record_iterates) {
  const std::string key = attack_key(entry);
  const std::string rec_key = key + "|iterates";
  if (auto it = attack_cache_.find(rec_key); it != attack_cache_.end()) return it->second;
  if (!record_iterates) {
    if (auto it = attack_cache_.find(key); it != attack_cache_.end()) return it->second;
  }
  if ((entry.method == "i2v" || entry.method == "dr") && entry.sources.size() != 1) {
    throw ConfigError(entry.method + " takes exactly one source model");
  }
  std::vector<const Model*> sources;
  for (const auto& s : entry.sources) sources.push_back(&model(s));
  AttackConfig ac = entry.config;
  ac.record_iterates = record_iterates;
  const EvalSet& ev = eval_set();
  log("running " + entry.method + " from " + row_source_label(entry) + " (alpha " + report::fmt(ac.step_size) +
      ", I " + std::to_string(ac.iterations) + ", tap " + ac.taps.front() + ")");

  std::vector<AttackOutcome> out;
  for (const auto& clip : ev.clips) {
    AttackOutcome o;
    try {
      if (entry.method == "i2v") {
        o.result = i2v_attack(*sources[0], clip, ac);
      } else if (entry.method == "dr") {
        o.result = dr_attack(*sources[0], clip, ac);
      } else {
        o.result = ens_i2v_attack(sources, clip, ac);
      }
      o.adversarial = clip;
      o.adversarial.pixels = o.result.adversarial;
      if (o.result.flagged) o.error = o.result.diagnostics;
    } catch (const ConfigError&) {
      throw;
    } catch (const TapError&) {
      throw;
    } catch (const Error& e) {
      o.failed = true;
      o.error = e.what();
      o.adversarial = clip;
    }
    out.push_back(std::move(o));
  }
  check_constraints(out, entry.config.epsilon);
  return attack_cache_[record_iterates ? rec_key : key] = std::move(out);
}

const std::vector<AttackOutcome>& Lab::white_box_attack(const std::string& method, const std::string& arch) {
  const std::string key = "white-box|" + method + "|" + arch;
  if (auto it = attack_cache_.find(key); it != attack_cache_.end()) return it->second;
  const Model& f = model(arch);
  if (f.modality() != Modality::kVideo) throw ConfigError(method + " needs a video model, got " + arch);
  const EvalSet& ev = eval_set();
  const auto& wb = cfg_.white_box;
  log("running " + method + " on " + arch);
  std::vector<AttackOutcome> out;
  for (const auto& clip : ev.clips) {
    AttackOutcome o;
    try {
      if (method == "fgsm") {
        o.result = fgsm(f, clip, wb.epsilon);
      } else if (method == "bim") {
        o.result = bim(f, clip, wb.epsilon, wb.bim_steps, wb.bim_step);
      } else {
        throw ConfigError("unknown white-box method '" + method + "'");
      }
      o.adversarial = clip;
      o.adversarial.pixels = o.result.adversarial;
      if (o.result.flagged) o.error = o.result.diagnostics;
    } catch (const ConfigError&) {
      throw;
    } catch (const Error& e) {
      o.failed = true;
      o.error = e.what();
      o.adversarial = clip;
    }
    out.push_back(std::move(o));
  }
  check_constraints(out, wb.epsilon);
  return attack_cache_[key] = std::move(out);
}

// ---------------------------------------------------------------- experiments

std::string row_source_label(const AttackEntry& entry) {
  std::string s;
  for (const auto& src : entry.sources) s += (s.empty() ? "" : "+") + src;
  return s;
}

namespace {

std::vector<AttackEntry> expand_rows(const std::vector<AttackEntry>& roster) {
  std::vector<AttackEntry> rows;
  for (const auto& a : roster) {
    if (a.method == "ens-i2v") {
      rows.push_back(a);
      continue;
    }
    for (const auto& s : a.sources) {
      AttackEntry one = a;
      one.sources = {s};
      rows.push_back(std::move(one));
    }
  }
  return rows;
}

std::vector<VideoClip> clips_of(const std::vector<AttackOutcome>& outcomes) {
  std::vector<VideoClip> out;
  for (const auto& o : outcomes) out.push_back(o.adversarial);
  return out;
}

std::vector<Tensor> pixels_of(std::span<const VideoClip> clips) {
  std::vector<Tensor> out;
  for (const auto& c : clips) out.push_back(c.pixels);
  return out;
}

AsrRow evaluate_row(Lab& lab, const AttackEntry& entry) {
  const auto& outcomes = lab.feature_attack(entry);
  const auto adv = clips_of(outcomes);
  AsrRow row;
  row.attack = entry.method;
  row.source = row_source_label(entry);
  for (const auto& t : lab.config().archs(Modality::kVideo)) row.cells.push_back(compute_asr(lab.model(t), adv));
  row.aasr = std::accumulate(row.cells.begin(), row.cells.end(), 0.0) / static_cast<double>(row.cells.size());
  for (std::size_t k = 0; k < outcomes.size(); ++k) {
    if (!outcomes[k].failed && outcomes[k].error.empty()) continue;
    ++row.failures;
    row.diagnostics += (row.diagnostics.empty() ? "" : "; ") + outcomes[k].adversarial.clip_id + ": " + outcomes[k].error;
  }
  return row;
}

}  // namespace

AsrTable run_transfer_experiment(Lab& lab) {
  AsrTable t;
  t.targets = lab.config().archs(Modality::kVideo);
  for (const auto& entry : expand_rows(lab.config().attacks)) t.rows.push_back(evaluate_row(lab, entry));
  return t;
}

std::vector<WhiteBoxRow> run_white_box_baselines(Lab& lab) {
  std::vector<WhiteBoxRow> rows;
  const auto videos = lab.config().archs(Modality::kVideo);
  for (const char* method : {"fgsm", "bim"}) {
    for (const auto& src : videos) {
      const auto adv = clips_of(lab.white_box_attack(method, src));
      WhiteBoxRow r;
      r.method = method;
      r.source = src;
      r.white_box_asr = compute_asr(lab.model(src), adv);
      for (const auto& t : videos) {
        if (t == src) continue;
        r.targets.push_back(t);
        r.cells.push_back(compute_asr(lab.model(t), adv));
      }
      r.aasr = r.cells.empty() ? 0.0
                               : std::accumulate(r.cells.begin(), r.cells.end(), 0.0) /
                                     static_cast<double>(r.cells.size());
      rows.push_back(std::move(r));
    }
  }
  return rows;
}

json StepIterGrid::to_json() const {
  return {{"source", source}, {"tap", tap},           {"step_sizes", step_sizes},
          {"iterations", iterations}, {"aasr", aasr}, {"failures", failures}};
}

StepIterGrid sweep_step_iter(Lab& lab, const std::vector<double>& step_sizes,
                             const std::vector<std::size_t>& iterations) {
  StepIterGrid g;
  g.source = lab.config().sweep.source;
  g.tap = lab.config().sweep.tap;
  g.step_sizes = step_sizes;
  g.iterations = iterations;
  for (double a : step_sizes) {
    std::vector<double> line;
    for (std::size_t n : iterations) {
      AttackEntry e{"i2v", {g.source}, {}};
      e.config.step_size = a;
      e.config.iterations = n;
      e.config.taps = {g.tap};
      const AsrRow r = evaluate_row(lab, e);
      line.push_back(r.aasr);
      g.failures += r.failures;
    }
    g.aasr.push_back(std::move(line));
  }
  return g;
}

json LayerSweep::to_json() const {
  json rs = json::array();
  for (const auto& r : rows) rs.push_back({{"model", r.model}, {"tap", r.tap}, {"aasr", r.aasr}, {"failures", r.failures}});
  return {{"rows", rs}, {"best_tap", best_tap}};
}

LayerSweep sweep_layers(Lab& lab) {
  LayerSweep s;
  for (const auto& arch : lab.config().archs(Modality::kImage)) {
    double best = -1.0;
    for (const auto& tap : lab.model(arch).taps()) {
      AttackEntry e{"i2v", {arch}, {}};
      e.config.taps = {tap};
      const AsrRow r = evaluate_row(lab, e);
      s.rows.push_back({arch, tap, r.aasr, r.failures});
      if (r.aasr > best) {
        best = r.aasr;
        s.best_tap[arch] = tap;
      }
    }
  }
  return s;
}

AnalysisResults run_analysis(Lab& lab) {
  const auto& cfg = lab.config();
  const auto& ac = cfg.analysis;
  const EvalSet& ev = lab.eval_set();
  const auto benign = pixels_of(ev.clips);
  const auto videos = cfg.archs(Modality::kVideo);
  AnalysisResults out;

  std::vector<TapRef> rows, cols;
  for (const auto& arch : cfg.archs(Modality::kImage)) {
    if (auto it = ac.image_taps.find(arch); it != ac.image_taps.end()) rows.push_back({&lab.model(arch), it->second});
  }
  for (const auto& arch : videos) cols.push_back({&lab.model(arch), ac.video_tap});

  std::vector<std::vector<Tensor>> same(cols.size(), benign);
  out.similarity.push_back(feature_similarity_matrix(rows, cols, same, "benign"));
  for (const char* method : {"fgsm", "bim"}) {
    std::vector<std::vector<Tensor>> per_col;
    for (const auto& arch : videos) per_col.push_back(pixels_of(clips_of(lab.white_box_attack(method, arch))));
    out.similarity.push_back(feature_similarity_matrix(rows, cols, per_col, std::string(method) + "-adv"));
  }

  // Same architectures and taps, untrained weights.
  std::vector<std::unique_ptr<Model>> controls;
  auto control_of = [&](const TapRef& t) {
    const Model& m = *t.model;
    ModelOptions o{m.num_classes(), m.in_channels(), mix_seed(ac.control_seed, {hash_string(m.arch_id())})};
    controls.push_back(std::make_unique<Model>(build_model(m.arch_id(), o)));
    return TapRef{controls.back().get(), t.tap};
  };
  std::vector<TapRef> control_rows, control_cols;
  for (const auto& r : rows) control_rows.push_back(control_of(r));
  for (const auto& c : cols) control_cols.push_back(control_of(c));
  out.control = feature_similarity_matrix(control_rows, control_cols, same, "benign");
  out.control.condition = "benign-random-weights";

  const auto bim_clips = pixels_of(clips_of(lab.white_box_attack("bim", ac.profile_source)));
  for (const auto& arch : cfg.archs(Modality::kImage)) {
    out.profiles.push_back(channel_profile(lab.model(arch), ac.profile_tap, benign, bim_clips));
  }
  out.profiles.push_back(channel_profile(lab.model(ac.profile_source), ac.profile_tap, benign, bim_clips));

  for (const auto& entry : expand_rows(cfg.attacks)) {
    if (entry.method != "i2v") continue;
    const auto& outcomes = lab.feature_attack(entry, true);
    const TapRef image{&lab.model(entry.sources[0]), entry.config.taps.front()};
    for (const auto& arch : videos) {
      PccPair p;
      p.image = image.label();
      p.video = arch + ":" + ac.pcc_video_tap;
      const TapRef video{&lab.model(arch), ac.pcc_video_tap};
      double sum = 0.0;
      for (std::size_t k = 0; k < outcomes.size(); ++k) {
        if (outcomes[k].result.iterates.empty()) {
          ++p.undefined;
          continue;
        }
        try {
          p.clips.push_back(pcc_of_cosine_trends(image, video, ev.clips[k].pixels, outcomes[k].result,
                                                 ev.clips[k].clip_id));
          sum += p.clips.back().pcc;
        } catch (const NumericError&) {
          ++p.undefined;
        }
      }
      p.mean_pcc = p.clips.empty() ? 0.0 : sum / static_cast<double>(p.clips.size());
      out.pcc.push_back(std::move(p));
    }
  }
  return out;
}

Report run_full_pipeline(Lab& lab) {
  Report r;
  r.transfer = run_transfer_experiment(lab);
  r.white_box = run_white_box_baselines(lab);
  r.step_iter = sweep_step_iter(lab, lab.config().sweep.step_sizes, lab.config().sweep.iterations);
  r.layers = sweep_layers(lab);
  r.analysis = run_analysis(lab);
  return r;
}

// ---------------------------------------------------------------- report

namespace {

std::string safe_name(std::string s) {
  for (char& c : s) {
    if (c == ':' || c == '+' || c == '/') c = '_';
  }
  return s;
}

void emit_matrix(const fs::path& dir, const std::string& stem, const SimilarityMatrix& m) {
  report::write_json(dir / (stem + ".json"), m.to_json());
  report::Csv csv;
  csv.header = {"image_tap"};
  csv.header.insert(csv.header.end(), m.cols.begin(), m.cols.end());
  for (std::size_t i = 0; i < m.rows.size(); ++i) {
    std::vector<std::string> line{m.rows[i]};
    for (const auto& c : m.cells[i]) line.push_back(c ? report::fmt(*c) : "incomparable");
    csv.rows.push_back(std::move(line));
  }
  report::write_atomic(dir / (stem + ".csv"), csv.str());
  report::write_atomic(dir / (stem + ".svg"),
                       report::svg_heatmap("channel-descriptor cosine (" + m.condition + ")", m.rows, m.cols, m.cells,
                                           -1.0, 1.0));
}

json pcc_json(const PccPair& p) {
  json clips = json::array();
  for (const auto& c : p.clips) {
    clips.push_back({{"clip_id", c.clip_id}, {"pcc", c.pcc}, {"image_cosine", c.image_cosine},
                     {"video_cosine", c.video_cosine}});
  }
  return {{"image", p.image}, {"video", p.video}, {"mean_pcc", p.mean_pcc}, {"undefined", p.undefined},
          {"clips", clips}};
}

}  // namespace

void emit_report(Lab& lab, const Report& rep) {
  const fs::path dir = lab.report_dir();
  fs::create_directories(dir);
  json summary;

  {
    // The output location is not part of the experiment.
    json c = to_json(lab.config());
    c.erase("output_dir");
    report::write_json(dir / "config.json", c);
  }
  {
    json models = json::object();
    for (const auto& e : lab.config().models) {
      const Model& m = lab.model(e.arch);
      models[e.arch] = {{"modality", std::string(to_string(m.modality()))},
                        {"seed", e.seed},
                        {"val_accuracy", m.val_accuracy.value_or(0.0)},
                        {"taps", m.taps()}};
    }
    json eval = json::array();
    for (const auto& c : lab.eval_set().clips) eval.push_back({{"clip_id", c.clip_id}, {"label", c.label}});
    report::write_json(dir / "models.json", {{"models", models}, {"eval_set", eval}});
    json clean = json::object();
    const auto& clips = lab.eval_set().clips;
    for (const auto& arch : lab.config().archs(Modality::kVideo)) clean[arch] = compute_asr(lab.model(arch), clips);
    summary["clean_asr"] = clean;
  }

  if (rep.transfer) {
    report::write_json(dir / "transfer.json", rep.transfer->to_json());
    report::write_atomic(dir / "transfer.csv", rep.transfer->to_csv());
    json aasr = json::object();
    for (const auto& r : rep.transfer->rows) aasr[r.attack + ":" + r.source] = r.aasr;
    summary["transfer_aasr"] = aasr;
  }
  if (rep.white_box) {
    json rows = json::array();
    report::Csv csv;
    csv.header = {"method", "white_box_source", "white_box_asr", "black_box_target", "black_box_asr"};
    for (const auto& r : *rep.white_box) {
      rows.push_back({{"method", r.method},
                      {"source", r.source},
                      {"white_box_asr", r.white_box_asr},
                      {"targets", r.targets},
                      {"cells", r.cells},
                      {"aasr", r.aasr}});
      for (std::size_t k = 0; k < r.targets.size(); ++k) {
        csv.rows.push_back({r.method, r.source, report::fmt(r.white_box_asr), r.targets[k], report::fmt(r.cells[k])});
      }
    }
    report::write_json(dir / "white_box.json", rows);
    report::write_atomic(dir / "white_box.csv", csv.str());
  }
  if (rep.step_iter) {
    const auto& g = *rep.step_iter;
    report::write_json(dir / "sweep_step_iter.json", g.to_json());
    report::Csv csv;
    csv.header = {"step_size", "iterations", "aasr"};
    std::vector<std::string> rl, cl;
    std::vector<std::vector<std::optional<double>>> cells;
    for (std::size_t a = 0; a < g.step_sizes.size(); ++a) {
      rl.push_back("alpha=" + report::fmt(g.step_sizes[a]));
      cells.emplace_back();
      for (std::size_t n = 0; n < g.iterations.size(); ++n) {
        csv.rows.push_back({report::fmt(g.step_sizes[a]), std::to_string(g.iterations[n]), report::fmt(g.aasr[a][n])});
        cells.back().push_back(g.aasr[a][n]);
      }
    }
    for (auto n : g.iterations) cl.push_back("I=" + std::to_string(n));
    report::write_atomic(dir / "sweep_step_iter.csv", csv.str());
    report::write_atomic(dir / "sweep_step_iter.svg",
                         report::svg_heatmap("I2V AASR (%) from " + g.source + ":" + g.tap, rl, cl, cells, 0.0, 100.0));
  }
  if (rep.layers) {
    report::write_json(dir / "sweep_layers.json", rep.layers->to_json());
    report::Csv csv;
    csv.header = {"model", "tap", "aasr", "best"};
    std::map<std::string, std::vector<double>> per_model;
    for (const auto& r : rep.layers->rows) {
      csv.rows.push_back({r.model, r.tap, report::fmt(r.aasr), rep.layers->best_tap.at(r.model) == r.tap ? "1" : "0"});
      per_model[r.model].push_back(r.aasr);
    }
    report::write_atomic(dir / "sweep_layers.csv", csv.str());
    std::vector<report::Series> series;
    for (auto& [m, v] : per_model) series.push_back({m, v});
    report::write_atomic(dir / "sweep_layers.svg", report::svg_bar_plot("I2V AASR (%) per tap", series));
    summary["best_tap"] = rep.layers->best_tap;
  }
  if (rep.analysis) {
    const auto& a = *rep.analysis;
    json sim = json::object();
    for (const auto& m : a.similarity) {
      emit_matrix(dir, "similarity_" + m.condition, m);
      sim[m.condition] = m.mean();
    }
    emit_matrix(dir, "similarity_control", a.control);
    sim["control"] = a.control.mean();
    double gap = 0.0;
    for (std::size_t k = 1; k < a.similarity.size(); ++k) {
      for (std::size_t i = 0; i < a.similarity[0].cells.size(); ++i) {
        for (std::size_t j = 0; j < a.similarity[0].cells[i].size(); ++j) {
          const auto& b = a.similarity[0].cells[i][j];
          const auto& x = a.similarity[k].cells[i][j];
          if (b && x) gap = std::max(gap, std::abs(*b - *x));
        }
      }
    }
    sim["max_benign_adversarial_gap"] = gap;
    summary["similarity_mean"] = sim;

    json profiles = json::array();
    report::Csv pcsv;
    pcsv.header = {"model", "rank", "channel", "benign", "adversarial"};
    json l1 = json::object();
    for (const auto& p : a.profiles) {
      profiles.push_back(p.to_json());
      l1[p.model] = p.l1_distance();
      std::vector<double> b, x;
      for (std::size_t r = 0; r < p.order.size(); ++r) {
        const std::size_t c = p.order[r];
        pcsv.rows.push_back({p.model, std::to_string(r), std::to_string(c), report::fmt(p.benign[c]),
                             report::fmt(p.adversarial[c])});
        b.push_back(p.benign[c]);
        x.push_back(p.adversarial[c]);
      }
      report::write_atomic(dir / ("profile_" + safe_name(p.model) + ".svg"),
                           report::svg_bar_plot(p.model + " channel magnitudes (sorted by benign)",
                                                {{"benign", b}, {"bim-adv", x}}));
    }
    report::write_json(dir / "profiles.json", profiles);
    report::write_atomic(dir / "profiles.csv", pcsv.str());
    summary["profile_l1"] = l1;

    json pcc = json::array();
    report::Csv ccsv;
    ccsv.header = {"image", "video", "clip_id", "pcc"};
    json means = json::object();
    for (const auto& p : a.pcc) {
      pcc.push_back(pcc_json(p));
      for (const auto& c : p.clips) ccsv.rows.push_back({p.image, p.video, c.clip_id, report::fmt(c.pcc)});
      means[p.image + "|" + p.video] = p.mean_pcc;
      if (!p.clips.empty()) {
        const auto& c = p.clips.front();
        report::write_atomic(dir / ("pcc_" + safe_name(p.image) + "_" + safe_name(p.video) + ".svg"),
                             report::svg_line_plot("cosine trends, " + c.clip_id + " (PCC " + report::fmt(c.pcc) + ")",
                                                   "iteration", {{p.image, c.image_cosine}, {p.video, c.video_cosine}}));
      }
    }
    report::write_json(dir / "pcc.json", pcc);
    report::write_atomic(dir / "pcc.csv", ccsv.str());
    summary["mean_pcc"] = means;
  }

  const auto& cs = lab.constraints();
  json constraints{{"clips_checked", cs.clips_checked},
                   {"violations", cs.violations},
                   {"max_linf", cs.max_linf},
                   {"min_pixel", cs.min_pixel},
                   {"max_pixel", cs.max_pixel}};
  report::write_json(dir / "constraints.json", constraints);
  summary["constraints"] = constraints;
  report::write_json(dir / "summary.json", summary);
}

}  // namespace i2v
