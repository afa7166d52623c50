#include "i2v/model.hpp"

#include <cmath>
#include <fstream>
#include <numeric>

#include "i2v/binary_io.hpp"
#include "i2v/error.hpp"
#include "i2v/optim.hpp"
#include "i2v/rng.hpp"

namespace i2v {

std::string_view to_string(Modality m) { return m == Modality::kImage ? "image" : "video"; }

const std::vector<ArchSpec>& arch_registry() {
  // Block 1 of every video arch and one block of each image arch carry 8
  // channels so channel descriptors can be compared across modalities.
  static const std::vector<ArchSpec> registry = {
      {"img-a",
       Modality::kImage,
       {{8, {1, 3, 3}, {1, 1, 1}, {1, 2, 2}},
        {16, {1, 3, 3}, {1, 1, 1}, {1, 2, 2}},
        {32, {1, 3, 3}, {1, 1, 1}, {1, 2, 2}}}},
      {"img-b",
       Modality::kImage,
       {{6, {1, 3, 3}, {1, 1, 1}, {1, 2, 2}},
        {8, {1, 3, 3}, {1, 1, 1}, {1, 1, 1}},
        {16, {1, 3, 3}, {1, 1, 1}, {1, 2, 2}},
        {24, {1, 3, 3}, {1, 1, 1}, {1, 2, 2}}}},
      {"vid-a",
       Modality::kVideo,
       {{8, {3, 3, 3}, {2, 1, 1}, {1, 2, 2}},
        {12, {3, 3, 3}, {1, 1, 1}, {2, 2, 2}},
        {16, {3, 3, 3}, {1, 1, 1}, {1, 2, 2}}}},
      {"vid-b",
       Modality::kVideo,
       {{8, {3, 3, 3}, {2, 1, 1}, {1, 2, 2}},
        {12, {1, 3, 3}, {1, 1, 1}, {1, 2, 2}},
        {24, {3, 3, 3}, {1, 1, 1}, {2, 2, 2}}}},
      {"vid-c",
       Modality::kVideo,
       {{8, {1, 3, 3}, {2, 1, 1}, {1, 2, 2}},
        {12, {5, 3, 3}, {1, 1, 1}, {2, 2, 2}},
        {16, {3, 3, 3}, {1, 1, 1}, {1, 2, 2}}}},
  };
  return registry;
}

const ArchSpec& find_arch(std::string_view arch_id) {
  for (const auto& a : arch_registry()) {
    if (a.id == arch_id) return a;
  }
  std::string known;
  for (const auto& a : arch_registry()) known += (known.empty() ? "" : ", ") + a.id;
  throw ConfigError("unknown architecture '" + std::string(arch_id) + "' (known: " + known + ")");
}

namespace {

Tensor uniform_tensor(Shape shape, double bound, Rng& rng) {
  std::vector<double> v(numel_of(shape));
  for (auto& x : v) x = rng.uniform(-bound, bound);
  return Tensor::from(std::move(shape), std::move(v));
}

Layer make_layer(std::string name, LayerKind kind) {
  Layer l;
  l.name = std::move(name);
  l.kind = kind;
  return l;
}

}  // namespace

Model::Model(ArchSpec arch, const ModelOptions& options) : arch_(std::move(arch)), options_(options) {
  if (options_.num_classes < 2) throw ConfigError("a classifier needs at least 2 classes");
  if (options_.in_channels == 0) throw ConfigError("input channel count must be positive");
  const bool video = arch_.modality == Modality::kVideo;
  const std::uint64_t arch_hash = hash_string(arch_.id);
  std::size_t in_c = options_.in_channels;
  std::uint64_t layer_no = 0;

  for (std::size_t b = 0; b < arch_.blocks.size(); ++b) {
    const auto& spec = arch_.blocks[b];
    const std::string prefix = "block" + std::to_string(b + 1);
    const std::size_t kt = video ? spec.kernel[0] : 1;
    Layer conv = make_layer(prefix + ".conv", LayerKind::kConv);
    Shape kshape = video ? Shape{spec.channels, in_c, kt, spec.kernel[1], spec.kernel[2]}
                         : Shape{spec.channels, in_c, spec.kernel[1], spec.kernel[2]};
    const double fan_in = static_cast<double>(in_c * kt * spec.kernel[1] * spec.kernel[2]);
    Rng rng(mix_seed(options_.seed, {arch_hash, layer_no++}));
    conv.weight = uniform_tensor(kshape, std::sqrt(6.0 / fan_in), rng);
    conv.bias = Tensor::zeros({spec.channels});
    conv.conv.stride = {video ? spec.stride[0] : 1, spec.stride[1], spec.stride[2]};
    conv.conv.padding = {video ? kt / 2 : 0, spec.kernel[1] / 2, spec.kernel[2] / 2};
    layers_.push_back(std::move(conv));
    layers_.push_back(make_layer(prefix + ".relu", LayerKind::kRelu));
    const std::array<std::size_t, 3> window{video ? spec.pool[0] : 1, spec.pool[1], spec.pool[2]};
    if (window != std::array<std::size_t, 3>{1, 1, 1}) {
      Layer pool = make_layer(prefix + ".pool", LayerKind::kPool);
      pool.window = window;
      layers_.push_back(std::move(pool));
    }
    in_c = spec.channels;
  }
  layers_.push_back(make_layer(kPenultimateTap, LayerKind::kGlobalPool));
  Layer head = make_layer("head", LayerKind::kDense);
  Rng rng(mix_seed(options_.seed, {arch_hash, layer_no++}));
  head.weight = uniform_tensor({options_.num_classes, in_c},
                               std::sqrt(6.0 / static_cast<double>(in_c + options_.num_classes)), rng);
  head.bias = Tensor::zeros({options_.num_classes});
  layers_.push_back(std::move(head));
}

Model Model::clone() const {
  Model copy(*this);
  for (auto& l : copy.layers_) {
    if (l.weight.defined()) l.weight = l.weight.clone();
    if (l.bias.defined()) l.bias = l.bias.clone();
  }
  return copy;
}

Model build_model(std::string_view arch_id, const ModelOptions& options) {
  return Model(find_arch(arch_id), options);
}

Model build_model(const ArchSpec& arch, const ModelOptions& options) { return Model(arch, options); }

std::vector<std::string> Model::taps() const {
  std::vector<std::string> out;
  for (std::size_t b = 0; b < arch_.blocks.size(); ++b) out.push_back("block" + std::to_string(b + 1));
  out.emplace_back(kPenultimateTap);
  return out;
}

std::size_t Model::resolve_tap(std::string_view tap) const {
  std::size_t found = layers_.size();
  const std::string block_prefix = std::string(tap) + ".";
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    const auto& name = layers_[i].name;
    if (name == tap || name.starts_with(block_prefix)) found = i;  // last layer of the block
  }
  if (found == layers_.size() || tap.empty()) {
    std::string avail;
    for (const auto& t : taps()) avail += (avail.empty() ? "" : ", ") + t;
    throw TapError("model " + arch_.id + " has no tap '" + std::string(tap) + "' (available: " + avail + ")");
  }
  return found;
}

std::size_t Model::tap_channels(std::string_view tap) const {
  const std::size_t idx = resolve_tap(tap);
  std::size_t c = options_.in_channels;
  for (std::size_t i = 0; i <= idx; ++i) {
    if (layers_[i].kind == LayerKind::kConv) c = layers_[i].weight.dim(0);
    if (layers_[i].kind == LayerKind::kDense) c = layers_[i].weight.dim(0);
  }
  return c;
}

const Tensor& Model::head_weights() const { return layers_.back().weight; }

std::vector<std::pair<std::string, Tensor>> Model::named_parameters() const {
  std::vector<std::pair<std::string, Tensor>> out;
  for (const auto& l : layers_) {
    if (l.weight.defined()) out.emplace_back(l.name + ".weight", l.weight);
    if (l.bias.defined()) out.emplace_back(l.name + ".bias", l.bias);
  }
  return out;
}

void Model::set_trainable(bool trainable) {
  for (auto& [name, t] : named_parameters()) {
    t.set_requires_grad(trainable);
    if (!trainable) t.node().grad.clear();
  }
}

void Model::check_input(const Tensor& input) const {
  const std::size_t want_rank = modality() == Modality::kVideo ? 4 : 3;
  if (input.rank() != want_rank || input.dim(0) != options_.in_channels) {
    throw ShapeError("model " + arch_.id + " expects " +
                     (modality() == Modality::kVideo ? "[C,T,H,W]" : "[C,H,W]") + " input with C=" +
                     std::to_string(options_.in_channels) + ", got " + shape_str(input.shape()));
  }
}

Tensor Model::apply(const Layer& layer, const Tensor& x) const {
  switch (layer.kind) {
    case LayerKind::kConv:
      return modality() == Modality::kVideo ? conv3d(x, layer.weight, layer.bias, layer.conv)
                                            : conv2d(x, layer.weight, layer.bias, layer.conv);
    case LayerKind::kRelu:
      return relu(x);
    case LayerKind::kPool:
      return max_pool(x, layer.window);
    case LayerKind::kGlobalPool:
      return global_avg_pool(x);
    case LayerKind::kDense:
      return linear(x, layer.weight, layer.bias);
  }
  throw Error("unreachable layer kind");
}

Tensor Model::normalize(const Tensor& input) const {
  check_input(input);
  return scale(sub(input, Tensor::full(input.shape(), kInputCentre)), kInputGain);
}

Tensor Model::forward(const Tensor& input) const {
  Tensor x = normalize(input);
  for (const auto& l : layers_) x = apply(l, x);
  return x;
}

TapOutput Model::forward_with_tap(const Tensor& input, std::string_view tap) const {
  const std::size_t idx = resolve_tap(tap);
  TapOutput out;
  Tensor x = normalize(input);
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    x = apply(layers_[i], x);
    if (i == idx) out.feature = x;
  }
  out.logits = x;
  return out;
}

Tensor Model::features(const Tensor& input, std::string_view tap) const {
  const std::size_t idx = resolve_tap(tap);
  Tensor x = normalize(input);
  for (std::size_t i = 0; i <= idx; ++i) x = apply(layers_[i], x);
  return x;
}

std::size_t Model::predict(const Tensor& input) const { return argmax(forward(input)); }

void validate(const TrainConfig& cfg) {
  if (cfg.batch_size == 0) throw ConfigError("train batch size must be positive");
  if (!(cfg.learning_rate > 0.0)) throw ConfigError("train learning rate must be positive");
}

double accuracy(const Model& model, std::span<const Sample> samples) {
  if (samples.empty()) return 0.0;
  std::size_t correct = 0;
  for (const auto& s : samples) correct += model.predict(s.input) == s.label ? 1 : 0;
  return static_cast<double>(correct) / static_cast<double>(samples.size());
}

TrainReport train(Model& model, std::span<const Sample> train_set, std::span<const Sample> val_set,
                  const TrainConfig& cfg) {
  validate(cfg);
  for (auto set : {train_set, val_set}) {
    for (const auto& s : set) {
      if (s.label >= model.num_classes()) {
        throw ConfigError("sample label " + std::to_string(s.label) + " out of range for " + model.arch_id());
      }
    }
  }
  TrainReport report;
  auto params = model.named_parameters();
  std::vector<AdamState> states(params.size());
  std::vector<std::size_t> order(train_set.size());
  std::iota(order.begin(), order.end(), 0);
  Rng rng(mix_seed(cfg.seed, {hash_string(model.arch_id()), 0x7a11}));

  model.set_trainable(true);
  std::size_t step = 0;
  try {
    for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
      rng.shuffle(order);
      const double lr = cfg.cosine_schedule ? cfg.learning_rate * 0.5 *
                                                  (1.0 + std::cos(M_PI * static_cast<double>(epoch) /
                                                                  static_cast<double>(cfg.epochs)))
                                            : cfg.learning_rate;
      double epoch_loss = 0.0;
      for (std::size_t start = 0, batch = 0; start < order.size(); start += cfg.batch_size, ++batch, ++step) {
        const std::size_t end = std::min(order.size(), start + cfg.batch_size);
        const double inv = 1.0 / static_cast<double>(end - start);
        for (auto& [name, p] : params) p.mutable_grad(), p.zero_grad();
        double batch_loss = 0.0;
        for (std::size_t k = start; k < end; ++k) {
          const auto& s = train_set[order[k]];
          Tensor loss = scale(cross_entropy(model.forward(s.input), s.label), inv);
          batch_loss += loss.item();
          loss.backward();
        }
        if (!std::isfinite(batch_loss)) {
          throw NumericError("training " + model.arch_id() + " diverged at epoch " + std::to_string(epoch) +
                             ", batch " + std::to_string(batch) + " (loss " + std::to_string(batch_loss) +
                             ", lr " + std::to_string(cfg.learning_rate) + ")");
        }
        const double ramp = step < cfg.warmup_steps ? static_cast<double>(step + 1) /
                                                          static_cast<double>(cfg.warmup_steps)
                                                    : 1.0;
        for (std::size_t i = 0; i < params.size(); ++i) adam_step(params[i].second, states[i], lr * ramp);
        epoch_loss += batch_loss * static_cast<double>(end - start);
      }
      report.epoch_loss.push_back(order.empty() ? 0.0 : epoch_loss / static_cast<double>(order.size()));
    }
  } catch (...) {
    model.set_trainable(false);
    throw;
  }
  model.set_trainable(false);
  report.train_accuracy = accuracy(model, train_set);
  report.val_accuracy = accuracy(model, val_set);
  model.val_accuracy = report.val_accuracy;
  return report;
}

namespace {
constexpr char kWeightMagic[8] = {'I', '2', 'V', 'W', 'G', 'H', 'T', '1'};
constexpr const char* kAccuracyTensor = "meta.val_accuracy";
}  // namespace

void save_weights(const Model& model, const std::filesystem::path& path) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw Error("cannot open " + path.string() + " for writing");
  os.write(kWeightMagic, sizeof kWeightMagic);
  io::put<std::uint32_t>(os, kWeightFormatVersion);
  io::put_string(os, model.arch_id());
  io::put<std::uint64_t>(os, model.seed());
  io::put<std::uint32_t>(os, static_cast<std::uint32_t>(model.num_classes()));
  io::put<std::uint32_t>(os, static_cast<std::uint32_t>(model.in_channels()));
  auto params = model.named_parameters();
  const bool has_acc = model.val_accuracy.has_value();
  io::put<std::uint32_t>(os, static_cast<std::uint32_t>(params.size() + (has_acc ? 1 : 0)));
  for (const auto& [name, t] : params) {
    io::put_string(os, name);
    io::put_tensor(os, t);
  }
  if (has_acc) {
    io::put_string(os, kAccuracyTensor);
    io::put_tensor(os, Tensor::scalar(*model.val_accuracy));
  }
  if (!os) throw Error("write failed for " + path.string());
}

Model load_weights(const std::filesystem::path& path, std::optional<std::string> expected_arch) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw FormatError("cannot open weight file " + path.string());
  char magic[8];
  is.read(magic, sizeof magic);
  if (!is || !std::equal(magic, magic + 8, kWeightMagic)) {
    throw FormatError(path.string() + " is not a weight file (bad magic)");
  }
  const auto version = io::get<std::uint32_t>(is, "version");
  if (version != kWeightFormatVersion) {
    throw FormatError("weight file version " + std::to_string(version) + " unsupported (expected " +
                      std::to_string(kWeightFormatVersion) + ")");
  }
  const std::string arch_id = io::get_string(is, "arch id", 256);
  if (expected_arch && *expected_arch != arch_id) {
    throw ArchMismatchError("weight file " + path.string() + " holds arch '" + arch_id + "', expected '" +
                            *expected_arch + "'");
  }
  ModelOptions opts;
  opts.seed = io::get<std::uint64_t>(is, "seed");
  opts.num_classes = io::get<std::uint32_t>(is, "class count");
  opts.in_channels = io::get<std::uint32_t>(is, "input channels");
  const ArchSpec* arch = nullptr;
  try {
    arch = &find_arch(arch_id);
  } catch (const ConfigError& e) {
    throw ArchMismatchError(std::string("weight file names an unregistered arch: ") + e.what());
  }
  Model model(*arch, opts);
  auto params = model.named_parameters();
  const auto count = io::get<std::uint32_t>(is, "tensor count");
  std::size_t loaded = 0;
  for (std::uint32_t i = 0; i < count; ++i) {
    const std::string name = io::get_string(is, "tensor name", 256);
    Tensor t = io::get_tensor(is, "tensor");
    if (name == kAccuracyTensor) {
      model.val_accuracy = t.item();
      continue;
    }
    auto it = std::find_if(params.begin(), params.end(), [&](const auto& p) { return p.first == name; });
    if (it == params.end()) throw ArchMismatchError("unexpected tensor '" + name + "' for arch " + arch_id);
    if (it->second.shape() != t.shape()) {
      throw ArchMismatchError("tensor '" + name + "' has shape " + shape_str(t.shape()) + ", arch " + arch_id +
                              " needs " + shape_str(it->second.shape()));
    }
    std::copy(t.data().begin(), t.data().end(), it->second.mutable_data().begin());
    ++loaded;
  }
  if (loaded != params.size()) {
    throw FormatError("weight file " + path.string() + " is missing " + std::to_string(params.size() - loaded) +
                      " tensors");
  }
  return model;
}

}  // namespace i2v
