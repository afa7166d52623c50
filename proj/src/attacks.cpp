#include "i2v/attacks.hpp"

#include <chrono>
#include <cmath>
#include <exception>
#include <fstream>
#include <functional>

#include "i2v/binary_io.hpp"
#include "i2v/error.hpp"
#include "i2v/ops.hpp"
#include "i2v/optim.hpp"

namespace i2v {

void validate(const AttackConfig& cfg) {
  if (!(cfg.epsilon > 0.0)) throw ConfigError("attack epsilon must be positive");
  if (!(cfg.step_size > 0.0)) throw ConfigError("attack step size must be positive");
  if (cfg.taps.empty()) throw ConfigError("attack needs at least one tap");
}

nlohmann::json to_json(const AttackConfig& cfg) {
  return {{"epsilon", cfg.epsilon}, {"step_size", cfg.step_size}, {"iterations", cfg.iterations}, {"taps", cfg.taps}};
}

double linf_distance(const Tensor& a, const Tensor& b) {
  if (a.numel() != b.numel()) throw ShapeError("linf_distance: size mismatch");
  double m = 0.0;
  for (std::size_t i = 0; i < a.numel(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

Tensor sign_of(std::span<const double> g) {
  std::vector<double> s(g.size());
  for (std::size_t i = 0; i < g.size(); ++i) s[i] = g[i] > 0.0 ? 1.0 : (g[i] < 0.0 ? -1.0 : 0.0);
  return Tensor::from({g.size()}, std::move(s));
}

// Loss and input gradient of the cross-entropy of f at a [C,T,H,W] input.
std::pair<double, std::vector<double>> ce_gradient(const Model& f, const Tensor& input, std::size_t label) {
  Tensor leaf = input.clone();
  leaf.set_requires_grad(true);
  Tensor loss = cross_entropy(f.forward(leaf), label);
  loss.backward();
  return {loss.item(), std::vector<double>(leaf.grad().begin(), leaf.grad().end())};
}

// x + step * sign(g), projected into the epsilon ball around x0 and [0, 1].
Tensor signed_step(const Tensor& x, const Tensor& x0, std::span<const double> g, double step, double eps) {
  const Tensor s = sign_of(g);
  std::vector<double> moved(x.numel());
  for (std::size_t i = 0; i < moved.size(); ++i) moved[i] = x[i] + step * s[i];
  return project_linf(Tensor::from(x.shape(), std::move(moved)), x0, eps);
}

Tensor to_clip(const Tensor& video, const Shape& clip_shape) {
  // [C,T,H,W] -> [T,H,W,C]
  const std::size_t C = video.dim(0), T = video.dim(1), H = video.dim(2), W = video.dim(3);
  std::vector<double> out(video.numel());
  for (std::size_t c = 0; c < C; ++c)
    for (std::size_t t = 0; t < T; ++t)
      for (std::size_t y = 0; y < H; ++y)
        for (std::size_t x = 0; x < W; ++x) out[((t * H + y) * W + x) * C + c] = video[((c * T + t) * H + y) * W + x];
  return Tensor::from(clip_shape, std::move(out));
}

AttackResult white_box(const char* method, const Model& f, const VideoClip& x, double eps, std::size_t steps,
                       double step) {
  if (f.modality() != Modality::kVideo) throw ConfigError(std::string(method) + " needs a video model");
  if (!(eps >= 0.0)) throw ConfigError(std::string(method) + ": epsilon must be non-negative");
  const auto t0 = Clock::now();
  AttackResult r;
  r.method = method;
  const Tensor x0 = video_input(x.pixels);
  Tensor cur = x0;
  std::vector<double> losses;
  bool any_gradient = false;
  for (std::size_t s = 0; s < steps; ++s) {
    auto [loss, g] = ce_gradient(f, cur, x.label);
    losses.push_back(loss);
    for (double v : g) any_gradient |= v != 0.0;
    cur = signed_step(cur, x0, g, step, eps);
  }
  losses.push_back(cross_entropy(f.forward(cur), x.label).item());
  if (!any_gradient && steps > 0) {
    r.flagged = true;
    r.diagnostics = "zero input gradient; clip returned unchanged";
  }
  r.adversarial = to_clip(cur, x.pixels.shape());
  r.perturbation = sub(r.adversarial, x.pixels).detach();
  r.trace.push_back(std::move(losses));
  r.final_objective.push_back(r.trace.back().back());
  r.elapsed_seconds = seconds_since(t0);
  return r;
}

// Builds the objective for one frame: receives the benign frame, returns a
// function of the adversarial frame.
using ObjectiveFactory = std::function<std::function<Tensor(const Tensor&)>(const Tensor& benign)>;

AttackResult feature_attack(const char* method, const VideoClip& x, const AttackConfig& cfg,
                            const ObjectiveFactory& make_objective) {
  validate(cfg);
  const auto t0 = Clock::now();
  const std::size_t T = x.pixels.dim(0);
  std::vector<Tensor> adv_frames(T);
  std::vector<std::vector<double>> traces(T);
  std::vector<double> finals(T);
  std::vector<std::vector<Tensor>> iterates(T);
  std::vector<std::string> notes(T);
  std::vector<std::exception_ptr> errors(T);

  // Frames are independent; each iteration owns its slot.
#pragma omp parallel for schedule(dynamic)
  for (std::ptrdiff_t fi = 0; fi < static_cast<std::ptrdiff_t>(T); ++fi) {
    const auto i = static_cast<std::size_t>(fi);
    try {
      const Tensor benign = frame_input(x.pixels, i);
      auto objective = make_objective(benign);
      Tensor delta = Tensor::full(benign.shape(), kInitialPerturbation, true);
      AdamState state;
      for (std::size_t j = 0; j < cfg.iterations; ++j) {
        Tensor adv = add(benign, delta);
        if (cfg.record_iterates) iterates[i].push_back(adv.detach().clone());
        Tensor loss = objective(adv);
        const double value = loss.item();
        if (!std::isfinite(value)) {
          notes[i] = "frame " + std::to_string(i) + ": non-finite objective at iteration " + std::to_string(j) +
                     "; kept last finite iterate";
          break;
        }
        traces[i].push_back(value);
        delta.zero_grad();
        loss.backward();
        adam_step(delta, state, cfg.step_size);
      }
      const Tensor raw = add(benign, delta.detach());
      adv_frames[i] = project_linf(raw, benign, cfg.epsilon);
      finals[i] = objective(adv_frames[i]).item();
    } catch (...) {
      errors[i] = std::current_exception();
    }
  }
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }

  AttackResult r;
  r.method = method;
  r.adversarial = assemble_frames(adv_frames);
  r.perturbation = sub(r.adversarial, x.pixels).detach();
  r.trace = std::move(traces);
  r.final_objective = std::move(finals);
  for (auto& n : notes) {
    if (n.empty()) continue;
    r.flagged = true;
    r.diagnostics += (r.diagnostics.empty() ? "" : "; ") + n;
  }
  if (cfg.record_iterates && !r.flagged) {
    for (std::size_t j = 0; j < cfg.iterations; ++j) {
      std::vector<Tensor> frames(T);
      for (std::size_t i = 0; i < T; ++i) frames[i] = iterates[i][j];
      r.iterates.push_back(assemble_frames(frames));
    }
  }
  r.elapsed_seconds = seconds_since(t0);
  return r;
}

const std::string& tap_for(const AttackConfig& cfg, std::size_t n) {
  return cfg.taps.size() == 1 ? cfg.taps.front() : cfg.taps.at(n);
}

void require_image(const Model& g, const char* method) {
  if (g.modality() != Modality::kImage) {
    throw ConfigError(std::string(method) + " needs an image model, got " + g.arch_id());
  }
}

}  // namespace

AttackResult fgsm(const Model& f, const VideoClip& x, double epsilon) {
  return white_box("fgsm", f, x, epsilon, 1, epsilon);
}

AttackResult bim(const Model& f, const VideoClip& x, double epsilon, std::size_t steps, double step) {
  return white_box("bim", f, x, epsilon, steps, step);
}

AttackResult i2v_attack(const Model& g, const VideoClip& x, const AttackConfig& cfg) {
  const Model* one[] = {&g};
  AttackResult r = ens_i2v_attack(one, x, cfg);
  r.method = "i2v";
  return r;
}

AttackResult ens_i2v_attack(std::span<const Model* const> gs, const VideoClip& x, const AttackConfig& cfg) {
  if (gs.empty()) throw ConfigError("ens-i2v needs at least one image model");
  if (cfg.taps.size() != 1 && cfg.taps.size() != gs.size()) {
    throw ConfigError("ens-i2v: " + std::to_string(cfg.taps.size()) + " taps for " + std::to_string(gs.size()) +
                      " models");
  }
  for (const Model* g : gs) require_image(*g, "ens-i2v");
  return feature_attack("ens-i2v", x, cfg, [&](const Tensor& benign) {
    std::vector<Tensor> refs;
    for (std::size_t n = 0; n < gs.size(); ++n) refs.push_back(gs[n]->features(benign, tap_for(cfg, n)));
    return std::function<Tensor(const Tensor&)>([&gs, &cfg, refs](const Tensor& adv) {
      Tensor total;
      for (std::size_t n = 0; n < gs.size(); ++n) {
        Tensor c = cosine_similarity(gs[n]->features(adv, tap_for(cfg, n)), refs[n]);
        total = total.defined() ? add(total, c) : c;
      }
      return total;
    });
  });
}

AttackResult dr_attack(const Model& g, const VideoClip& x, const AttackConfig& cfg) {
  require_image(g, "dr");
  const std::string tap = tap_for(cfg, 0);
  return feature_attack("dr", x, cfg, [&g, tap](const Tensor&) {
    return std::function<Tensor(const Tensor&)>(
        [&g, tap](const Tensor& adv) { return feature_std(g.features(adv, tap)); });
  });
}

namespace {
constexpr char kTensorMagic[8] = {'I', '2', 'V', 'T', 'N', 'S', 'R', '1'};
}

void save_tensor_sidecar(const Tensor& t, const std::filesystem::path& path) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw Error("cannot open " + path.string() + " for writing");
  os.write(kTensorMagic, sizeof kTensorMagic);
  io::put_tensor(os, t);
  if (!os) throw Error("write failed for " + path.string());
}

Tensor load_tensor_sidecar(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw FormatError("cannot open tensor file " + path.string());
  char magic[8];
  is.read(magic, sizeof magic);
  if (!is || !std::equal(magic, magic + 8, kTensorMagic)) throw FormatError(path.string() + ": bad tensor magic");
  return io::get_tensor(is, "tensor sidecar");
}

void save_attack_result(const AttackResult& r, const nlohmann::json& config, const std::filesystem::path& stem) {
  auto bin = stem;
  bin += ".bin";
  auto meta = stem;
  meta += ".json";
  save_tensor_sidecar(r.adversarial, bin);
  nlohmann::json j{{"method", r.method},
                   {"config", config},
                   {"trace", r.trace},
                   {"final_objective", r.final_objective},
                   {"flagged", r.flagged},
                   {"diagnostics", r.diagnostics},
                   {"elapsed_seconds", r.elapsed_seconds},
                   {"adversarial", {{"file", bin.filename().string()}, {"shape", r.adversarial.shape()}}}};
  std::ofstream os(meta, std::ios::trunc);
  if (!os) throw Error("cannot open " + meta.string() + " for writing");
  os << j.dump(2) << '\n';
}

}  // namespace i2v
