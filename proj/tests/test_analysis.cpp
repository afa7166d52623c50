#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <random>

#include "i2v/analysis.hpp"
#include "i2v/attacks.hpp"
#include "i2v/dataset.hpp"
#include "i2v/error.hpp"
#include "support/gradcheck.hpp"

using namespace i2v;

namespace {

const std::vector<Tensor>& clips() {
  static const std::vector<Tensor> c = [] {
    DatasetSpec spec;
    spec.train_per_class = 1;
    spec.val_per_class = 1;
    std::vector<Tensor> out;
    for (const auto& clip : generate_dataset(spec).val) out.push_back(clip.pixels);
    out.resize(4);
    return out;
  }();
  return c;
}

// Reference sample correlation, written out directly.
double oracle_pearson(const std::vector<double>& a, const std::vector<double>& b) {
  const double n = static_cast<double>(a.size());
  double ma = 0, mb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) ma += a[i] / n, mb += b[i] / n;
  double sab = 0, saa = 0, sbb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    sab += (a[i] - ma) * (b[i] - mb);
    saa += (a[i] - ma) * (a[i] - ma);
    sbb += (b[i] - mb) * (b[i] - mb);
  }
  return sab / std::sqrt(saa * sbb);
}

}  // namespace

TEST(Pearson, Examples) {
  std::vector<double> a{1, 2, 3, 4, 5};
  std::vector<double> b;
  for (double v : a) b.push_back(2 * v + 3);
  EXPECT_NEAR(pearson(a, b), 1.0, 1e-12);
  std::vector<double> neg;
  for (double v : a) neg.push_back(-v);
  EXPECT_NEAR(pearson(a, neg), -1.0, 1e-12);
  EXPECT_NEAR(pearson(std::vector<double>{1, 2, 3}, std::vector<double>{1, 3, 2}), 0.5, 1e-12);
}

TEST(Pearson, UndefinedCasesThrow) {
  std::vector<double> a{1, 2, 3};
  EXPECT_THROW(pearson(a, std::vector<double>{4, 4, 4}), NumericError);
  EXPECT_THROW(pearson(std::vector<double>{1}, std::vector<double>{2}), NumericError);
  EXPECT_THROW(pearson(a, std::vector<double>{1, 2}), NumericError);
}

TEST(Pearson, MatchesOracleAndStaysInRange) {
  std::mt19937_64 rng(42);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t n = 2 + rng() % 30;
    auto a = i2v::testing::random_values(rng, n);
    auto b = i2v::testing::random_values(rng, n);
    const double r = pearson(a, b);
    EXPECT_NEAR(r, oracle_pearson(a, b), 1e-12);
    EXPECT_GE(r, -1.0);
    EXPECT_LE(r, 1.0);
  }
}

TEST(Pearson, InvariantToCommonPositiveAffineMap) {
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> scale(0.01, 100.0), shift(-50.0, 50.0);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t n = 3 + rng() % 20;
    auto a = i2v::testing::random_values(rng, n);
    auto b = i2v::testing::random_values(rng, n);
    const double s = scale(rng), c = shift(rng);
    std::vector<double> a2, b2;
    for (double v : a) a2.push_back(s * v + c);
    for (double v : b) b2.push_back(s * v + c);
    EXPECT_NEAR(pearson(a2, b2), pearson(a, b), 1e-9);
  }
}

TEST(Descriptor, LengthIsChannelCount) {
  Model g = build_model("img-b", {5, 1, 1});
  Model f = build_model("vid-c", {10, 1, 1});
  EXPECT_EQ(channel_descriptor(g, "block3", clips()[0]).size(), 16u);
  EXPECT_EQ(channel_descriptor(f, "block1", clips()[0]).size(), 8u);
  EXPECT_EQ(channel_descriptor(f, kPenultimateTap, clips()[0]).size(), 16u);
}

TEST(Descriptor, ImageDescriptorIsFrameAverage) {
  Model g = build_model("img-a", {5, 1, 1});
  const Tensor& clip = clips()[1];
  auto d = channel_descriptor(g, "block2", clip);
  std::vector<double> manual(16, 0.0);
  for (std::size_t t = 0; t < 8; ++t) {
    Tensor feat = g.features(frame_input(clip, t), "block2");
    const std::size_t hw = feat.numel() / 16;
    for (std::size_t c = 0; c < 16; ++c) {
      double s = 0.0;
      for (std::size_t i = 0; i < hw; ++i) s += feat[c * hw + i];
      manual[c] += s / static_cast<double>(hw) / 8.0;
    }
  }
  for (std::size_t c = 0; c < 16; ++c) EXPECT_NEAR(d[c], manual[c], 1e-12);
}

TEST(Descriptor, CosineHandlesZeroVectors) {
  std::vector<double> z{0, 0}, v{1, 2};
  EXPECT_EQ(descriptor_cosine(z, v), 0.0);
  EXPECT_NEAR(descriptor_cosine(v, v), 1.0, 1e-15);
}

TEST(Similarity, SelfSimilarityDiagonalIsOne) {
  Model g = build_model("img-a", {5, 1, 1});
  TapRef rows[] = {{&g, "block1"}, {&g, "block2"}};
  std::vector<std::vector<Tensor>> per_col(2, clips());
  auto m = feature_similarity_matrix(rows, rows, per_col, "benign");
  EXPECT_NEAR(*m.cells[0][0], 1.0, 1e-12);
  EXPECT_NEAR(*m.cells[1][1], 1.0, 1e-12);
  EXPECT_FALSE(m.cells[0][1].has_value());  // 8 vs 16 channels
  EXPECT_FALSE(m.cells[1][0].has_value());
}

TEST(Similarity, SymmetricUnderSwappingRoles) {
  Model a = build_model("img-a", {5, 1, 2});
  Model b = build_model("img-b", {5, 1, 3});
  TapRef ra[] = {{&a, "block1"}};
  TapRef rb[] = {{&b, "block2"}};
  std::vector<std::vector<Tensor>> per_col(1, clips());
  auto ab = feature_similarity_matrix(ra, rb, per_col, "benign");
  auto ba = feature_similarity_matrix(rb, ra, per_col, "benign");
  ASSERT_TRUE(ab.cells[0][0].has_value());
  EXPECT_NEAR(*ab.cells[0][0], *ba.cells[0][0], 1e-15);
}

TEST(Similarity, CompleteGridInRangeWithIncomparableMarked) {
  Model ga = build_model("img-a", {5, 1, 1});
  Model gb = build_model("img-b", {5, 1, 1});
  Model fa = build_model("vid-a", {10, 1, 1});
  Model fb = build_model("vid-b", {10, 1, 1});
  TapRef rows[] = {{&ga, "block1"}, {&gb, "block2"}, {&gb, "block4"}};
  TapRef cols[] = {{&fa, "block1"}, {&fb, "block1"}, {&fb, "block3"}};
  std::vector<std::vector<Tensor>> per_col(3, clips());
  auto m = feature_similarity_matrix(rows, cols, per_col, "benign");
  ASSERT_EQ(m.cells.size(), 3u);
  for (std::size_t r = 0; r < 3; ++r) {
    ASSERT_EQ(m.cells[r].size(), 3u);
    for (std::size_t c = 0; c < 3; ++c) {
      const bool comparable = rows[r].model->tap_channels(rows[r].tap) == cols[c].model->tap_channels(cols[c].tap);
      EXPECT_EQ(m.cells[r][c].has_value(), comparable) << r << "," << c;
      if (m.cells[r][c]) {
        EXPECT_GE(*m.cells[r][c], -1.0);
        EXPECT_LE(*m.cells[r][c], 1.0);
      }
    }
  }
  EXPECT_TRUE(m.cells[2][2].has_value());  // 24 == 24
  auto j = m.to_json();
  EXPECT_TRUE(j.at("cells")[0][2].is_null());
}

TEST(Profile, IdenticalInputsGiveIdenticalProfiles) {
  Model f = build_model("vid-a", {10, 1, 1});
  auto p = channel_profile(f, kPenultimateTap, clips(), clips());
  EXPECT_EQ(p.benign, p.adversarial);
  EXPECT_EQ(p.l1_distance(), 0.0);
}

TEST(Profile, OrderSortsBenignNonIncreasingly) {
  for (const char* arch : {"img-a", "img-b", "vid-b"}) {
    Model m = build_model(arch, {arch[0] == 'v' ? 10u : 5u, 1, 5});
    auto p = channel_profile(m, kPenultimateTap, clips(), std::span(clips()).subspan(2));
    ASSERT_EQ(p.order.size(), p.benign.size());
    ASSERT_EQ(p.adversarial.size(), p.benign.size());
    auto sorted = p.order;
    std::ranges::sort(sorted);
    for (std::size_t i = 0; i < sorted.size(); ++i) EXPECT_EQ(sorted[i], i);
    for (std::size_t i = 1; i < p.order.size(); ++i) EXPECT_GE(p.benign[p.order[i - 1]], p.benign[p.order[i]]);
  }
}

TEST(Profile, ZeroedLastBlockGivesZeroProfile) {
  Model f = build_model("vid-c", {10, 1, 1});
  for (auto& [name, p] : f.named_parameters()) {
    if (name.rfind("block3.conv", 0) == 0) std::ranges::fill(p.mutable_data(), 0.0);
  }
  auto p = channel_profile(f, kPenultimateTap, clips(), clips());
  for (double v : p.benign) EXPECT_EQ(v, 0.0);
}

TEST(Pcc, ImageModelAgainstItselfIsOne) {
  Model g = build_model("img-a", {5, 1, 1});
  DatasetSpec spec;
  spec.train_per_class = 1;
  spec.val_per_class = 1;
  const VideoClip clip = generate_dataset(spec).val[2];
  AttackConfig cfg;
  cfg.iterations = 12;
  cfg.record_iterates = true;
  auto attack = i2v_attack(g, clip, cfg);
  auto rep = pcc_of_cosine_trends({&g, "block2"}, {&g, "block2"}, clip.pixels, attack, clip.clip_id);
  EXPECT_EQ(rep.image_cosine.size(), 12u);
  EXPECT_EQ(rep.video_cosine.size(), 12u);
  EXPECT_NEAR(rep.pcc, 1.0, 1e-12);
  EXPECT_EQ(rep.clip_id, clip.clip_id);
}

TEST(Pcc, CrossModalValueInRange) {
  Model g = build_model("img-a", {5, 1, 1});
  Model f = build_model("vid-a", {10, 1, 1});
  DatasetSpec spec;
  spec.train_per_class = 1;
  spec.val_per_class = 1;
  const VideoClip clip = generate_dataset(spec).val[4];
  AttackConfig cfg;
  cfg.iterations = 10;
  cfg.record_iterates = true;
  auto rep = pcc_of_cosine_trends({&g, "block2"}, {&f, "block2"}, clip.pixels, i2v_attack(g, clip, cfg));
  EXPECT_GE(rep.pcc, -1.0);
  EXPECT_LE(rep.pcc, 1.0);
  EXPECT_NEAR(rep.pcc, oracle_pearson(rep.image_cosine, rep.video_cosine), 1e-12);
}

TEST(Pcc, NeedsRecordedIterates) {
  Model g = build_model("img-a", {5, 1, 1});
  AttackResult empty;
  EXPECT_THROW(pcc_of_cosine_trends({&g, "block2"}, {&g, "block2"}, clips()[0], empty), ConfigError);
}
