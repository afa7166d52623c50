#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"

#include "i2v/attacks.hpp"
#include "i2v/model.hpp"
#include "i2v/tensor.hpp"

namespace i2v {

struct TapRef {
  const Model* model = nullptr;
  std::string tap;

  std::string label() const;
};

// Length-C descriptor of a tap for one [T,H,W,C] clip: global average pool
// over space (and time); image models are run per frame and averaged.
std::vector<double> channel_descriptor(const Model& model, const std::string& tap, const Tensor& clip);
// Descriptor averaged over clips.
std::vector<double> mean_descriptor(const Model& model, const std::string& tap, std::span<const Tensor> clips);

// Plain cosine of two descriptors; 0 when either is the zero vector.
double descriptor_cosine(std::span<const double> a, std::span<const double> b);

struct SimilarityMatrix {
  std::string condition;  // benign | fgsm | bim
  std::vector<std::string> rows;
  std::vector<std::string> cols;
  // nullopt marks a pair whose channel counts differ.
  std::vector<std::vector<std::optional<double>>> cells;

  // Mean over comparable cells.
  double mean() const;
  nlohmann::json to_json() const;
};

// clips_per_col[c] is the clip set used for column c (and for every row in
// that column); benign matrices pass the same set for all columns.
SimilarityMatrix feature_similarity_matrix(std::span<const TapRef> rows, std::span<const TapRef> cols,
                                           std::span<const std::vector<Tensor>> clips_per_col,
                                           const std::string& condition);

struct ChannelProfile {
  std::string model;
  std::vector<double> benign;
  std::vector<double> adversarial;
  std::vector<std::size_t> order;  // sorts benign non-increasingly

  double l1_distance() const;
  nlohmann::json to_json() const;
};

ChannelProfile channel_profile(const Model& model, const std::string& tap, std::span<const Tensor> clips,
                               std::span<const Tensor> adversarial_clips);

// Sample Pearson correlation. Throws NumericError on length < 2, length
// mismatch, or a constant sequence.
double pearson(std::span<const double> a, std::span<const double> b);

// Cosine between the tap features of an adversarial and a benign clip. For
// image models this is the mean over frames of the per-frame cosine.
double tap_cosine(const Model& model, const std::string& tap, const Tensor& adversarial, const Tensor& benign);

struct PccReport {
  std::string clip_id;
  std::vector<double> image_cosine;
  std::vector<double> video_cosine;
  double pcc = 0.0;
};

// Uses the recorded iterates of an attack run (AttackConfig::record_iterates).
PccReport pcc_of_cosine_trends(const TapRef& image, const TapRef& video, const Tensor& benign_clip,
                               const AttackResult& attack, const std::string& clip_id = {});

}  // namespace i2v
