#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"

#include "i2v/model.hpp"
#include "i2v/tensor.hpp"

namespace i2v {

struct DatasetSpec {
  std::size_t frames = 8;
  std::size_t height = 32;
  std::size_t width = 32;
  std::size_t channels = 1;
  std::vector<std::string> shapes{"square", "circle", "triangle", "cross", "bar"};
  std::vector<std::string> motions{"left", "right"};
  std::size_t train_per_class = 40;
  std::size_t val_per_class = 8;
  double noise = 0.05;  // uniform amplitude, train split only
  // Foreground minus background intensity, drawn uniformly per clip.
  double contrast_min = 0.2;
  double contrast_max = 0.35;
  double shape_radius = 5.0;
  double speed = 1.0;  // pixels per frame
  std::uint64_t seed = 2022;

  std::size_t num_classes() const { return shapes.size() * motions.size(); }
  std::size_t label_of(std::size_t shape, std::size_t motion) const { return shape * motions.size() + motion; }
};

void validate(const DatasetSpec& spec);
nlohmann::json to_json(const DatasetSpec& spec);
DatasetSpec dataset_spec_from_json(const nlohmann::json& j);

struct VideoClip {
  Tensor pixels;  // [T, H, W, C], values in [0, 1]
  std::size_t label = 0;
  std::size_t frame_label = 0;  // shape index
  std::string clip_id;
};

struct Dataset {
  DatasetSpec spec;
  std::vector<VideoClip> train;
  std::vector<VideoClip> val;
};

// Deterministic in spec.seed. Each clip is one shape translating along its
// motion, centred so that the frame-position distribution is the same for
// opposite motions.
Dataset generate_dataset(const DatasetSpec& spec);

// Layout conversions between the stored [T,H,W,C] clip and model inputs.
Tensor video_input(const Tensor& pixels);                    // -> [C,T,H,W]
Tensor frame_input(const Tensor& pixels, std::size_t frame);  // -> [C,H,W]
// Inverse of frame_input over all frames: T tensors [C,H,W] -> [T,H,W,C].
Tensor assemble_frames(std::span<const Tensor> frames);

std::vector<Sample> video_samples(std::span<const VideoClip> clips);
// One sample per frame, labelled with the shape class.
std::vector<Sample> frame_samples(std::span<const VideoClip> clips);
// One sample per frame, labelled with the full video class.
std::vector<Sample> frame_samples_video_label(std::span<const VideoClip> clips);

// "I2VDATA1" magic, u32 JSON length + spec JSON, u32 train count, u32 val
// count, then per clip: u32 label, u32 frame label, id string, tensor.
void save_dataset(const Dataset& ds, const std::filesystem::path& path);
Dataset load_dataset(const std::filesystem::path& path);

struct EvalSet {
  std::vector<VideoClip> clips;  // one per class, ordered by label
};

// Picks, per class, one clip that every video model classifies correctly and
// every image model classifies correctly (frame label) on every frame.
// Throws GateError naming the first class with no qualifying clip.
EvalSet select_eval_set(std::span<const Model* const> video_models, std::span<const Model* const> image_models,
                        std::span<const VideoClip> pool, std::size_t num_classes, std::uint64_t seed);

}  // namespace i2v
