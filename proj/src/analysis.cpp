#include "i2v/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "i2v/dataset.hpp"
#include "i2v/error.hpp"
#include "i2v/ops.hpp"

namespace i2v {

std::string TapRef::label() const { return model->arch_id() + ":" + tap; }

std::vector<double> channel_descriptor(const Model& model, const std::string& tap, const Tensor& clip) {
  auto pooled = [](const Tensor& feature) {
    if (feature.rank() == 1) return std::vector<double>(feature.data().begin(), feature.data().end());
    const Tensor g = global_avg_pool(feature);
    return std::vector<double>(g.data().begin(), g.data().end());
  };
  if (model.modality() == Modality::kVideo) return pooled(model.features(video_input(clip), tap));
  const std::size_t T = clip.dim(0);
  std::vector<double> acc;
  for (std::size_t t = 0; t < T; ++t) {
    auto d = pooled(model.features(frame_input(clip, t), tap));
    if (acc.empty()) acc.assign(d.size(), 0.0);
    for (std::size_t c = 0; c < d.size(); ++c) acc[c] += d[c];
  }
  for (auto& v : acc) v /= static_cast<double>(T);
  return acc;
}

std::vector<double> mean_descriptor(const Model& model, const std::string& tap, std::span<const Tensor> clips) {
  if (clips.empty()) throw ConfigError("mean_descriptor needs at least one clip");
  std::vector<double> acc;
  for (const auto& clip : clips) {
    auto d = channel_descriptor(model, tap, clip);
    if (acc.empty()) acc.assign(d.size(), 0.0);
    for (std::size_t c = 0; c < d.size(); ++c) acc[c] += d[c];
  }
  for (auto& v : acc) v /= static_cast<double>(clips.size());
  return acc;
}

double descriptor_cosine(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw ShapeError("descriptor_cosine: length mismatch");
  double dot = 0.0, aa = 0.0, bb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    dot += a[i] * b[i];
    aa += a[i] * a[i];
    bb += b[i] * b[i];
  }
  if (aa == 0.0 || bb == 0.0) return 0.0;
  return std::clamp(dot / (std::sqrt(aa) * std::sqrt(bb)), -1.0, 1.0);
}

double SimilarityMatrix::mean() const {
  double s = 0.0;
  std::size_t n = 0;
  for (const auto& row : cells) {
    for (const auto& c : row) {
      if (c) {
        s += *c;
        ++n;
      }
    }
  }
  return n ? s / static_cast<double>(n) : 0.0;
}

nlohmann::json SimilarityMatrix::to_json() const {
  nlohmann::json grid = nlohmann::json::array();
  for (const auto& row : cells) {
    nlohmann::json r = nlohmann::json::array();
    for (const auto& c : row) r.push_back(c ? nlohmann::json(*c) : nlohmann::json(nullptr));
    grid.push_back(r);
  }
  return {{"condition", condition}, {"rows", rows}, {"cols", cols}, {"cells", grid}};
}

SimilarityMatrix feature_similarity_matrix(std::span<const TapRef> rows, std::span<const TapRef> cols,
                                           std::span<const std::vector<Tensor>> clips_per_col,
                                           const std::string& condition) {
  if (clips_per_col.size() != cols.size()) {
    throw ConfigError("feature_similarity_matrix: need one clip set per column");
  }
  SimilarityMatrix m;
  m.condition = condition;
  for (const auto& r : rows) m.rows.push_back(r.label());
  for (const auto& c : cols) m.cols.push_back(c.label());
  m.cells.assign(rows.size(), std::vector<std::optional<double>>(cols.size()));
  for (std::size_t j = 0; j < cols.size(); ++j) {
    const auto& clips = clips_per_col[j];
    const auto col_desc = mean_descriptor(*cols[j].model, cols[j].tap, clips);
    for (std::size_t i = 0; i < rows.size(); ++i) {
      if (rows[i].model->tap_channels(rows[i].tap) != cols[j].model->tap_channels(cols[j].tap)) continue;
      const auto row_desc = mean_descriptor(*rows[i].model, rows[i].tap, clips);
      m.cells[i][j] = descriptor_cosine(row_desc, col_desc);
    }
  }
  return m;
}

double ChannelProfile::l1_distance() const {
  double d = 0.0;
  for (std::size_t i = 0; i < benign.size(); ++i) d += std::abs(benign[i] - adversarial[i]);
  return d;
}

nlohmann::json ChannelProfile::to_json() const {
  return {{"model", model}, {"benign", benign}, {"adversarial", adversarial}, {"order", order},
          {"l1_distance", l1_distance()}};
}

ChannelProfile channel_profile(const Model& model, const std::string& tap, std::span<const Tensor> clips,
                               std::span<const Tensor> adversarial_clips) {
  ChannelProfile p;
  p.model = model.arch_id() + ":" + tap;
  p.benign = mean_descriptor(model, tap, clips);
  p.adversarial = mean_descriptor(model, tap, adversarial_clips);
  p.order.resize(p.benign.size());
  std::iota(p.order.begin(), p.order.end(), 0);
  std::stable_sort(p.order.begin(), p.order.end(),
                   [&](std::size_t a, std::size_t b) { return p.benign[a] > p.benign[b]; });
  return p;
}

double pearson(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw NumericError("pearson: sequences differ in length");
  if (a.size() < 2) throw NumericError("pearson: need at least two points");
  const double n = static_cast<double>(a.size());
  const double ma = std::accumulate(a.begin(), a.end(), 0.0) / n;
  const double mb = std::accumulate(b.begin(), b.end(), 0.0) / n;
  double sab = 0.0, saa = 0.0, sbb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    sab += (a[i] - ma) * (b[i] - mb);
    saa += (a[i] - ma) * (a[i] - ma);
    sbb += (b[i] - mb) * (b[i] - mb);
  }
  if (saa == 0.0 || sbb == 0.0) throw NumericError("pearson: zero variance, correlation undefined");
  return std::clamp(sab / std::sqrt(saa * sbb), -1.0, 1.0);
}

double tap_cosine(const Model& model, const std::string& tap, const Tensor& adversarial, const Tensor& benign) {
  if (model.modality() == Modality::kVideo) {
    return cosine_similarity(model.features(video_input(adversarial), tap), model.features(video_input(benign), tap))
        .item();
  }
  const std::size_t T = benign.dim(0);
  double s = 0.0;
  for (std::size_t t = 0; t < T; ++t) {
    s += cosine_similarity(model.features(frame_input(adversarial, t), tap),
                           model.features(frame_input(benign, t), tap))
             .item();
  }
  return s / static_cast<double>(T);
}

PccReport pcc_of_cosine_trends(const TapRef& image, const TapRef& video, const Tensor& benign_clip,
                               const AttackResult& attack, const std::string& clip_id) {
  if (attack.iterates.empty()) {
    throw ConfigError("pcc_of_cosine_trends needs an attack run with recorded iterates");
  }
  PccReport r;
  r.clip_id = clip_id;
  for (const auto& it : attack.iterates) {
    r.image_cosine.push_back(tap_cosine(*image.model, image.tap, it, benign_clip));
    r.video_cosine.push_back(tap_cosine(*video.model, video.tap, it, benign_clip));
  }
  r.pcc = pearson(r.image_cosine, r.video_cosine);
  return r;
}

}  // namespace i2v
