#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "i2v/ops.hpp"
#include "i2v/tensor.hpp"

namespace i2v {

enum class Modality { kImage, kVideo };

std::string_view to_string(Modality m);

// One conv -> relu -> max-pool block. For image archs only the (h, w)
// components of kernel/stride/pool are used.
struct BlockSpec {
  std::size_t channels = 8;
  std::array<std::size_t, 3> kernel{3, 3, 3};
  std::array<std::size_t, 3> stride{1, 1, 1};
  std::array<std::size_t, 3> pool{1, 2, 2};
};

struct ArchSpec {
  std::string id;
  Modality modality = Modality::kImage;
  std::vector<BlockSpec> blocks;
};

// Registered toy architectures: img-a, img-b (image) and vid-a, vid-b, vid-c (video).
const std::vector<ArchSpec>& arch_registry();
const ArchSpec& find_arch(std::string_view arch_id);

enum class LayerKind { kConv, kRelu, kPool, kGlobalPool, kDense };

struct Layer {
  std::string name;
  LayerKind kind = LayerKind::kRelu;
  Tensor weight;  // conv kernel or dense matrix
  Tensor bias;
  ConvParams conv;
  std::array<std::size_t, 3> window{1, 1, 1};
};

struct LayerTap {
  std::string model_arch;
  std::string layer_name;
};

inline constexpr const char* kPenultimateTap = "penultimate";

inline constexpr double kInputCentre = 0.5;
inline constexpr double kInputGain = 4.0;

struct ModelOptions {
  std::size_t num_classes = 10;
  std::size_t in_channels = 1;
  std::uint64_t seed = 0;
};

struct TapOutput {
  Tensor logits;
  Tensor feature;
};

class Model {
 public:
  Model(ArchSpec arch, const ModelOptions& options);

  // Copies share parameter storage (tensors are handles); clone() does not.
  Model clone() const;

  const std::string& arch_id() const { return arch_.id; }
  const ArchSpec& arch() const { return arch_; }
  Modality modality() const { return arch_.modality; }
  std::size_t num_classes() const { return options_.num_classes; }
  std::size_t in_channels() const { return options_.in_channels; }
  std::uint64_t seed() const { return options_.seed; }
  const std::vector<Layer>& layers() const { return layers_; }
  std::vector<Layer>& mutable_layers() { return layers_; }

  // block1..blockN followed by "penultimate".
  std::vector<std::string> taps() const;
  // Channel count of the activation at a tap.
  std::size_t tap_channels(std::string_view tap) const;
  const Tensor& head_weights() const;

  std::vector<std::pair<std::string, Tensor>> named_parameters() const;
  void set_trainable(bool trainable);

  Tensor forward(const Tensor& input) const;
  TapOutput forward_with_tap(const Tensor& input, std::string_view tap) const;
  // Runs only as far as the tap.
  Tensor features(const Tensor& input, std::string_view tap) const;
  std::size_t predict(const Tensor& input) const;

  // Validation accuracy recorded by training, persisted with the weights.
  std::optional<double> val_accuracy;

 private:
  std::size_t resolve_tap(std::string_view tap) const;
  void check_input(const Tensor& input) const;
  // Fixed affine map of [0, 1] pixels to roughly zero-mean, unit-range inputs.
  Tensor normalize(const Tensor& input) const;
  Tensor apply(const Layer& layer, const Tensor& x) const;

  ArchSpec arch_;
  ModelOptions options_;
  std::vector<Layer> layers_;
};

Model build_model(std::string_view arch_id, const ModelOptions& options = {});
Model build_model(const ArchSpec& arch, const ModelOptions& options = {});

struct Sample {
  Tensor input;
  std::size_t label = 0;
};

struct TrainConfig {
  std::size_t epochs = 5;
  std::size_t batch_size = 16;
  double learning_rate = 3e-3;
  // Cosine-anneal the learning rate to zero over the epochs.
  bool cosine_schedule = true;
  // Linear learning-rate ramp over the first optimizer steps.
  std::size_t warmup_steps = 0;
  std::uint64_t seed = 1;
};

struct TrainReport {
  std::vector<double> epoch_loss;
  double train_accuracy = 0.0;
  double val_accuracy = 0.0;
};

void validate(const TrainConfig& cfg);

// Adam on mean cross-entropy over shuffled mini-batches. Throws NumericError
// when the loss turns non-finite.
TrainReport train(Model& model, std::span<const Sample> train_set, std::span<const Sample> val_set,
                  const TrainConfig& cfg);
double accuracy(const Model& model, std::span<const Sample> samples);

// Weight file: "I2VWGHT1" magic, u32 version, arch id, u64 seed, u32 classes,
// u32 input channels, u32 tensor count, then per tensor: name + shape + f64 data.
inline constexpr std::uint32_t kWeightFormatVersion = 1;
void save_weights(const Model& model, const std::filesystem::path& path);
// Rejects a file whose arch id differs from expected_arch when given.
Model load_weights(const std::filesystem::path& path, std::optional<std::string> expected_arch = std::nullopt);

}  // namespace i2v
