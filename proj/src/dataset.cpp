#include "i2v/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>

#include "i2v/binary_io.hpp"
#include "i2v/error.hpp"
#include "i2v/rng.hpp"

namespace i2v {

namespace {

const std::vector<std::string> kKnownShapes{"square", "circle", "triangle", "cross", "bar"};
const std::vector<std::string> kKnownMotions{"left", "right", "up", "down"};

// Unit-radius shape membership of the offset (dx, dy), both scaled by 1/r.
bool inside(const std::string& shape, double dx, double dy) {
  const double ax = std::abs(dx), ay = std::abs(dy);
  if (shape == "square") return ax <= 0.85 && ay <= 0.85;
  if (shape == "circle") return dx * dx + dy * dy <= 1.0;
  if (shape == "triangle") return dy >= -1.0 && dy <= 1.0 && ax <= (dy + 1.0) * 0.5;
  if (shape == "cross") return (ax <= 1.0 && ay <= 0.3) || (ay <= 1.0 && ax <= 0.3);
  if (shape == "bar") return ax <= 1.0 && ay <= 0.35;
  return false;
}

std::pair<double, double> direction(const std::string& motion) {
  if (motion == "left") return {-1.0, 0.0};
  if (motion == "right") return {1.0, 0.0};
  if (motion == "up") return {0.0, -1.0};
  return {0.0, 1.0};
}

VideoClip render_clip(const DatasetSpec& spec, std::size_t shape, std::size_t motion, bool noisy,
                      std::uint64_t clip_seed, std::string id) {
  Rng rng(clip_seed);
  const auto [vx, vy] = direction(spec.motions[motion]);
  const double r = spec.shape_radius;
  const double half_travel = spec.speed * static_cast<double>(spec.frames - 1) / 2.0;
  const double w = static_cast<double>(spec.width), h = static_cast<double>(spec.height);
  // Mid-clip centre; margins keep the whole trajectory on the canvas.
  const double mx = vx != 0.0 ? r + half_travel : r;
  const double my = vy != 0.0 ? r + half_travel : r;
  const double cx_mid = rng.uniform(mx, w - 1.0 - mx);
  const double cy_mid = rng.uniform(my, h - 1.0 - my);
  const double bg = rng.uniform(0.1, 0.3);
  const double fg = bg + rng.uniform(spec.contrast_min, spec.contrast_max);

  const std::size_t T = spec.frames, H = spec.height, W = spec.width, C = spec.channels;
  std::vector<double> px(T * H * W * C);
  constexpr int kSuper = 4;
  for (std::size_t t = 0; t < T; ++t) {
    const double off = static_cast<double>(t) - static_cast<double>(T - 1) / 2.0;
    const double cx = cx_mid + vx * spec.speed * off;
    const double cy = cy_mid + vy * spec.speed * off;
    for (std::size_t y = 0; y < H; ++y) {
      for (std::size_t x = 0; x < W; ++x) {
        int hits = 0;
        for (int sy = 0; sy < kSuper; ++sy) {
          for (int sx = 0; sx < kSuper; ++sx) {
            const double px_x = static_cast<double>(x) + (sx + 0.5) / kSuper - 0.5;
            const double px_y = static_cast<double>(y) + (sy + 0.5) / kSuper - 0.5;
            hits += inside(spec.shapes[shape], (px_x - cx) / r, (px_y - cy) / r) ? 1 : 0;
          }
        }
        const double cover = static_cast<double>(hits) / (kSuper * kSuper);
        for (std::size_t c = 0; c < C; ++c) {
          double v = bg + (fg - bg) * cover;
          if (noisy) v += rng.uniform(-spec.noise, spec.noise);
          px[((t * H + y) * W + x) * C + c] = std::clamp(v, 0.0, 1.0);
        }
      }
    }
  }
  VideoClip clip;
  clip.pixels = Tensor::from({T, H, W, C}, std::move(px));
  clip.label = spec.label_of(shape, motion);
  clip.frame_label = shape;
  clip.clip_id = std::move(id);
  return clip;
}

}  // namespace

void validate(const DatasetSpec& spec) {
  if (spec.frames < 2 || spec.height == 0 || spec.width == 0 || spec.channels == 0) {
    throw ConfigError("dataset needs T >= 2 and positive H, W, C");
  }
  for (const auto& s : spec.shapes) {
    if (std::find(kKnownShapes.begin(), kKnownShapes.end(), s) == kKnownShapes.end()) {
      throw ConfigError("unknown shape '" + s + "'");
    }
  }
  for (const auto& m : spec.motions) {
    if (std::find(kKnownMotions.begin(), kKnownMotions.end(), m) == kKnownMotions.end()) {
      throw ConfigError("unknown motion '" + m + "'");
    }
  }
  if (spec.shapes.empty() || spec.motions.empty() || spec.num_classes() < 2) {
    throw ConfigError("dataset needs at least 2 classes");
  }
  if (spec.train_per_class + spec.val_per_class < 2) throw ConfigError("need at least 2 clips per class");
  if (!(spec.noise >= 0.0)) throw ConfigError("noise amplitude must be non-negative");
  if (!(spec.contrast_min > 0.0 && spec.contrast_min <= spec.contrast_max && spec.contrast_max <= 0.7)) {
    throw ConfigError("contrast range must satisfy 0 < min <= max <= 0.7");
  }
  if (!(spec.shape_radius > 0.0) || !(spec.speed >= 0.0)) throw ConfigError("shape radius/speed invalid");
  const double travel = spec.speed * static_cast<double>(spec.frames - 1);
  const double need = 2.0 * spec.shape_radius + travel;
  const double along = static_cast<double>(std::min(spec.width, spec.height)) - 1.0;
  if (need > along) {
    throw ConfigError("shape of radius " + std::to_string(spec.shape_radius) + " travelling " +
                      std::to_string(travel) + " px does not fit a " + std::to_string(spec.width) + "x" +
                      std::to_string(spec.height) + " canvas");
  }
}

nlohmann::json to_json(const DatasetSpec& s) {
  return {{"frames", s.frames},
          {"height", s.height},
          {"width", s.width},
          {"channels", s.channels},
          {"shapes", s.shapes},
          {"motions", s.motions},
          {"train_per_class", s.train_per_class},
          {"val_per_class", s.val_per_class},
          {"noise", s.noise},
          {"contrast_min", s.contrast_min},
          {"contrast_max", s.contrast_max},
          {"shape_radius", s.shape_radius},
          {"speed", s.speed},
          {"seed", s.seed}};
}

DatasetSpec dataset_spec_from_json(const nlohmann::json& j) {
  DatasetSpec s;
  try {
    s.frames = j.value("frames", s.frames);
    s.height = j.value("height", s.height);
    s.width = j.value("width", s.width);
    s.channels = j.value("channels", s.channels);
    s.shapes = j.value("shapes", s.shapes);
    s.motions = j.value("motions", s.motions);
    s.train_per_class = j.value("train_per_class", s.train_per_class);
    s.val_per_class = j.value("val_per_class", s.val_per_class);
    s.noise = j.value("noise", s.noise);
    s.contrast_min = j.value("contrast_min", s.contrast_min);
    s.contrast_max = j.value("contrast_max", s.contrast_max);
    s.shape_radius = j.value("shape_radius", s.shape_radius);
    s.speed = j.value("speed", s.speed);
    s.seed = j.value("seed", s.seed);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("bad dataset spec: ") + e.what());
  }
  return s;
}

Dataset generate_dataset(const DatasetSpec& spec) {
  validate(spec);
  Dataset ds;
  ds.spec = spec;
  char id[64];
  for (std::size_t shape = 0; shape < spec.shapes.size(); ++shape) {
    for (std::size_t motion = 0; motion < spec.motions.size(); ++motion) {
      const std::size_t label = spec.label_of(shape, motion);
      for (std::size_t i = 0; i < spec.train_per_class; ++i) {
        std::snprintf(id, sizeof id, "train-c%02zu-%03zu", label, i);
        ds.train.push_back(render_clip(spec, shape, motion, spec.noise > 0.0, mix_seed(spec.seed, {0, label, i}), id));
      }
      for (std::size_t i = 0; i < spec.val_per_class; ++i) {
        std::snprintf(id, sizeof id, "val-c%02zu-%03zu", label, i);
        ds.val.push_back(render_clip(spec, shape, motion, false, mix_seed(spec.seed, {1, label, i}), id));
      }
    }
  }
  return ds;
}

Tensor video_input(const Tensor& pixels) {
  if (pixels.rank() != 4) throw ShapeError("clip pixels must be [T,H,W,C], got " + shape_str(pixels.shape()));
  const std::size_t T = pixels.dim(0), H = pixels.dim(1), W = pixels.dim(2), C = pixels.dim(3);
  std::vector<double> out(pixels.numel());
  const auto p = pixels.data();
  for (std::size_t t = 0; t < T; ++t)
    for (std::size_t y = 0; y < H; ++y)
      for (std::size_t x = 0; x < W; ++x)
        for (std::size_t c = 0; c < C; ++c) out[((c * T + t) * H + y) * W + x] = p[((t * H + y) * W + x) * C + c];
  return Tensor::from({C, T, H, W}, std::move(out));
}

Tensor frame_input(const Tensor& pixels, std::size_t frame) {
  if (pixels.rank() != 4) throw ShapeError("clip pixels must be [T,H,W,C], got " + shape_str(pixels.shape()));
  const std::size_t T = pixels.dim(0), H = pixels.dim(1), W = pixels.dim(2), C = pixels.dim(3);
  if (frame >= T) throw ShapeError("frame " + std::to_string(frame) + " out of range for T=" + std::to_string(T));
  std::vector<double> out(H * W * C);
  const auto p = pixels.data();
  for (std::size_t y = 0; y < H; ++y)
    for (std::size_t x = 0; x < W; ++x)
      for (std::size_t c = 0; c < C; ++c) out[(c * H + y) * W + x] = p[((frame * H + y) * W + x) * C + c];
  return Tensor::from({C, H, W}, std::move(out));
}

Tensor assemble_frames(std::span<const Tensor> frames) {
  if (frames.empty()) throw ShapeError("cannot assemble an empty frame list");
  const auto& s = frames.front().shape();
  if (s.size() != 3) throw ShapeError("frames must be [C,H,W], got " + shape_str(s));
  const std::size_t T = frames.size(), C = s[0], H = s[1], W = s[2];
  std::vector<double> out(T * H * W * C);
  for (std::size_t t = 0; t < T; ++t) {
    if (frames[t].shape() != s) throw ShapeError("frame " + std::to_string(t) + " has a different shape");
    const auto f = frames[t].data();
    for (std::size_t c = 0; c < C; ++c)
      for (std::size_t y = 0; y < H; ++y)
        for (std::size_t x = 0; x < W; ++x) out[((t * H + y) * W + x) * C + c] = f[(c * H + y) * W + x];
  }
  return Tensor::from({T, H, W, C}, std::move(out));
}

std::vector<Sample> video_samples(std::span<const VideoClip> clips) {
  std::vector<Sample> out;
  out.reserve(clips.size());
  for (const auto& c : clips) out.push_back({video_input(c.pixels), c.label});
  return out;
}

std::vector<Sample> frame_samples(std::span<const VideoClip> clips) {
  std::vector<Sample> out;
  for (const auto& c : clips) {
    for (std::size_t t = 0; t < c.pixels.dim(0); ++t) out.push_back({frame_input(c.pixels, t), c.frame_label});
  }
  return out;
}

std::vector<Sample> frame_samples_video_label(std::span<const VideoClip> clips) {
  std::vector<Sample> out;
  for (const auto& c : clips) {
    for (std::size_t t = 0; t < c.pixels.dim(0); ++t) out.push_back({frame_input(c.pixels, t), c.label});
  }
  return out;
}

namespace {
constexpr char kDataMagic[8] = {'I', '2', 'V', 'D', 'A', 'T', 'A', '1'};

void put_clips(std::ostream& os, const std::vector<VideoClip>& clips) {
  for (const auto& c : clips) {
    io::put<std::uint32_t>(os, static_cast<std::uint32_t>(c.label));
    io::put<std::uint32_t>(os, static_cast<std::uint32_t>(c.frame_label));
    io::put_string(os, c.clip_id);
    io::put_tensor(os, c.pixels);
  }
}

std::vector<VideoClip> get_clips(std::istream& is, std::uint32_t n) {
  std::vector<VideoClip> out(n);
  for (auto& c : out) {
    c.label = io::get<std::uint32_t>(is, "clip label");
    c.frame_label = io::get<std::uint32_t>(is, "frame label");
    c.clip_id = io::get_string(is, "clip id", 256);
    c.pixels = io::get_tensor(is, "clip pixels");
  }
  return out;
}
}  // namespace

void save_dataset(const Dataset& ds, const std::filesystem::path& path) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw Error("cannot open " + path.string() + " for writing");
  os.write(kDataMagic, sizeof kDataMagic);
  const std::string header = to_json(ds.spec).dump();
  io::put_string(os, header);
  io::put<std::uint32_t>(os, static_cast<std::uint32_t>(ds.train.size()));
  io::put<std::uint32_t>(os, static_cast<std::uint32_t>(ds.val.size()));
  put_clips(os, ds.train);
  put_clips(os, ds.val);
  if (!os) throw Error("write failed for " + path.string());
}

Dataset load_dataset(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw FormatError("cannot open dataset file " + path.string());
  char magic[8];
  is.read(magic, sizeof magic);
  if (!is || !std::equal(magic, magic + 8, kDataMagic)) {
    throw FormatError(path.string() + " is not a dataset file (bad magic)");
  }
  Dataset ds;
  try {
    ds.spec = dataset_spec_from_json(nlohmann::json::parse(io::get_string(is, "dataset header")));
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("corrupt dataset header: ") + e.what());
  }
  const auto n_train = io::get<std::uint32_t>(is, "train count");
  const auto n_val = io::get<std::uint32_t>(is, "val count");
  ds.train = get_clips(is, n_train);
  ds.val = get_clips(is, n_val);
  return ds;
}

EvalSet select_eval_set(std::span<const Model* const> video_models, std::span<const Model* const> image_models,
                        std::span<const VideoClip> pool, std::size_t num_classes, std::uint64_t seed) {
  EvalSet out;
  for (std::size_t label = 0; label < num_classes; ++label) {
    std::vector<std::size_t> qualifying;
    for (std::size_t i = 0; i < pool.size(); ++i) {
      const auto& clip = pool[i];
      if (clip.label != label) continue;
      bool ok = true;
      const Tensor vin = video_input(clip.pixels);
      for (const Model* m : video_models) {
        if (m->predict(vin) != clip.label) {
          ok = false;
          break;
        }
      }
      for (std::size_t t = 0; ok && t < clip.pixels.dim(0); ++t) {
        const Tensor fin = frame_input(clip.pixels, t);
        for (const Model* m : image_models) {
          if (m->predict(fin) != clip.frame_label) {
            ok = false;
            break;
          }
        }
      }
      if (ok) qualifying.push_back(i);
    }
    if (qualifying.empty()) {
      throw GateError("no clip of class " + std::to_string(label) + " is classified correctly by every model");
    }
    Rng rng(mix_seed(seed, {0xe7a1, label}));
    out.clips.push_back(pool[qualifying[rng.index(qualifying.size())]]);
  }
  return out;
}

}  // namespace i2v
