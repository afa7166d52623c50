#include <gtest/gtest.h>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <map>

#include "i2v/dataset.hpp"
#include "i2v/error.hpp"
#include "i2v/model.hpp"

using namespace i2v;

namespace {

DatasetSpec small_spec() {
  DatasetSpec spec;
  spec.train_per_class = 3;
  spec.val_per_class = 2;
  return spec;
}

bool same_clips(const std::vector<VideoClip>& a, const std::vector<VideoClip>& b) {
  if (a.size() != b.size()) return false;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (a[i].label != b[i].label || a[i].frame_label != b[i].frame_label || a[i].clip_id != b[i].clip_id) {
      return false;
    }
    if (!std::ranges::equal(a[i].pixels.data(), b[i].pixels.data())) return false;
  }
  return true;
}

// Intensity-weighted horizontal centroid of the foreground of frame t.
double centroid_x(const VideoClip& clip, std::size_t t) {
  const auto& s = clip.pixels.shape();
  const std::size_t H = s[1], W = s[2], C = s[3];
  auto px = clip.pixels.data();
  double lo = 1.0;
  for (std::size_t i = t * H * W * C; i < (t + 1) * H * W * C; ++i) lo = std::min(lo, px[i]);
  double mass = 0.0, moment = 0.0;
  for (std::size_t y = 0; y < H; ++y) {
    for (std::size_t x = 0; x < W; ++x) {
      const double v = px[((t * H + y) * W + x) * C] - lo;
      mass += v;
      moment += v * static_cast<double>(x);
    }
  }
  return moment / mass;
}

Model zero_model(const std::string& arch, std::size_t k) {
  Model m = build_model(arch, {k, 1, 1});
  for (auto& [name, p] : m.named_parameters()) std::ranges::fill(p.mutable_data(), 0.0);
  return m;
}

}  // namespace

TEST(Generate, NoiselessRegenerationIsBitIdentical) {
  DatasetSpec spec = small_spec();
  spec.noise = 0.0;
  auto a = generate_dataset(spec);
  auto b = generate_dataset(spec);
  EXPECT_TRUE(same_clips(a.train, b.train));
  EXPECT_TRUE(same_clips(a.val, b.val));
}

TEST(Generate, NoisyRegenerationIsBitIdentical) {
  auto a = generate_dataset(small_spec());
  auto b = generate_dataset(small_spec());
  EXPECT_TRUE(same_clips(a.train, b.train));
}

TEST(Generate, SeedChangesTheClips) {
  DatasetSpec other = small_spec();
  other.seed += 1;
  EXPECT_FALSE(same_clips(generate_dataset(small_spec()).train, generate_dataset(other).train));
}

TEST(Generate, HorizontalCentroidFollowsMotion) {
  DatasetSpec spec = small_spec();
  spec.noise = 0.0;
  auto ds = generate_dataset(spec);
  std::size_t checked = 0;
  for (const auto& clip : ds.train) {
    const std::string& motion = spec.motions[clip.label % spec.motions.size()];
    for (std::size_t t = 1; t < spec.frames; ++t) {
      const double prev = centroid_x(clip, t - 1), cur = centroid_x(clip, t);
      if (motion == "right") EXPECT_GT(cur, prev) << clip.clip_id << " frame " << t;
      if (motion == "left") EXPECT_LT(cur, prev) << clip.clip_id << " frame " << t;
    }
    ++checked;
  }
  EXPECT_EQ(checked, ds.train.size());
}

TEST(Generate, ClassesAreBalanced) {
  DatasetSpec spec = small_spec();
  auto ds = generate_dataset(spec);
  std::map<std::size_t, std::size_t> train, val;
  for (const auto& c : ds.train) ++train[c.label];
  for (const auto& c : ds.val) ++val[c.label];
  ASSERT_EQ(train.size(), spec.num_classes());
  for (auto [label, n] : train) EXPECT_EQ(n, spec.train_per_class) << label;
  for (auto [label, n] : val) EXPECT_EQ(n, spec.val_per_class) << label;
}

TEST(Generate, LabelsEncodeShapeAndMotion) {
  DatasetSpec spec = small_spec();
  EXPECT_EQ(spec.num_classes(), 10u);
  for (const auto& c : generate_dataset(spec).train) {
    EXPECT_EQ(c.label / spec.motions.size(), c.frame_label);
    EXPECT_LT(c.label, 10u);
  }
}

TEST(Generate, PixelsInUnitRangeWithDeclaredShape) {
  DatasetSpec spec = small_spec();
  spec.noise = 0.3;
  for (const auto& c : generate_dataset(spec).train) {
    EXPECT_EQ(c.pixels.shape(), (Shape{8, 32, 32, 1}));
    for (double v : c.pixels.data()) {
      ASSERT_GE(v, 0.0);
      ASSERT_LE(v, 1.0);
    }
  }
}

TEST(Generate, NoiseOnlyOnTrainSplit) {
  DatasetSpec noisy = small_spec();
  DatasetSpec clean = small_spec();
  clean.noise = 0.0;
  EXPECT_TRUE(same_clips(generate_dataset(noisy).val, generate_dataset(clean).val));
  EXPECT_FALSE(same_clips(generate_dataset(noisy).train, generate_dataset(clean).train));
}

TEST(Generate, TooLargeShapeIsRejected) {
  DatasetSpec spec = small_spec();
  spec.shape_radius = 14.0;
  EXPECT_THROW(generate_dataset(spec), ConfigError);
}

TEST(Generate, NeedsTwoClassesAndTwoClipsPerClass) {
  DatasetSpec spec = small_spec();
  spec.shapes = {"square"};
  spec.motions = {"left"};
  EXPECT_THROW(generate_dataset(spec), ConfigError);
  spec = small_spec();
  spec.train_per_class = 1;
  spec.val_per_class = 0;
  EXPECT_THROW(generate_dataset(spec), ConfigError);
  spec = small_spec();
  spec.shapes = {"hexagon"};
  EXPECT_THROW(generate_dataset(spec), ConfigError);
}

TEST(Layout, FrameInputsReassembleIntoTheClip) {
  auto clip = generate_dataset(small_spec()).train[3];
  std::vector<Tensor> frames;
  for (std::size_t t = 0; t < 8; ++t) frames.push_back(frame_input(clip.pixels, t));
  EXPECT_EQ(frames[0].shape(), (Shape{1, 32, 32}));
  Tensor back = assemble_frames(frames);
  EXPECT_TRUE(std::ranges::equal(back.data(), clip.pixels.data()));

  Tensor v = video_input(clip.pixels);
  EXPECT_EQ(v.shape(), (Shape{1, 8, 32, 32}));
  for (std::size_t t = 0; t < 8; ++t) {
    for (std::size_t i = 0; i < 32 * 32; ++i) ASSERT_EQ(v[t * 1024 + i], frames[t][i]);
  }
}

TEST(Layout, SampleViews) {
  auto ds = generate_dataset(small_spec());
  auto vs = video_samples(ds.train);
  auto fs = frame_samples(ds.train);
  auto fv = frame_samples_video_label(ds.train);
  ASSERT_EQ(vs.size(), ds.train.size());
  ASSERT_EQ(fs.size(), ds.train.size() * 8);
  ASSERT_EQ(fv.size(), fs.size());
  for (std::size_t i = 0; i < fs.size(); ++i) {
    EXPECT_EQ(fs[i].label, ds.train[i / 8].frame_label);
    EXPECT_EQ(fv[i].label, ds.train[i / 8].label);
  }
}

TEST(Persistence, RoundTrip) {
  auto ds = generate_dataset(small_spec());
  auto path = std::filesystem::temp_directory_path() / "i2v_test_dataset.bin";
  save_dataset(ds, path);
  auto back = load_dataset(path);
  EXPECT_EQ(to_json(back.spec), to_json(ds.spec));
  EXPECT_TRUE(same_clips(back.train, ds.train));
  EXPECT_TRUE(same_clips(back.val, ds.val));
}

TEST(Persistence, BadMagicIsRejected) {
  auto path = std::filesystem::temp_directory_path() / "i2v_test_dataset_bad.bin";
  save_dataset(generate_dataset(small_spec()), path);
  {
    std::fstream f(path, std::ios::in | std::ios::out | std::ios::binary);
    f.put('Z');
  }
  EXPECT_THROW(load_dataset(path), FormatError);
}

TEST(Persistence, SpecJsonRoundTrip) {
  DatasetSpec spec = small_spec();
  spec.shapes = {"circle", "cross"};
  spec.speed = 1.5;
  EXPECT_EQ(to_json(dataset_spec_from_json(to_json(spec))), to_json(spec));
}

TEST(EvalSet, WithoutModelsEveryClassIsCovered) {
  auto ds = generate_dataset(small_spec());
  auto a = select_eval_set({}, {}, ds.val, 10, 7);
  auto b = select_eval_set({}, {}, ds.val, 10, 7);
  ASSERT_EQ(a.clips.size(), 10u);
  for (std::size_t k = 0; k < 10; ++k) {
    EXPECT_EQ(a.clips[k].label, k);
    EXPECT_EQ(a.clips[k].clip_id, b.clips[k].clip_id);
  }
}

TEST(EvalSet, AlwaysWrongModelNamesTheClass) {
  auto ds = generate_dataset(small_spec());
  Model zero = zero_model("vid-a", 10);  // ties resolve to class 0
  const Model* videos[] = {&zero};
  try {
    select_eval_set(videos, {}, ds.val, 10, 7);
    FAIL() << "expected GateError";
  } catch (const GateError& e) {
    EXPECT_NE(std::string(e.what()).find("class 1"), std::string::npos) << e.what();
  }
}

TEST(EvalSet, SelectedClipsAreClassifiedCorrectly) {
  auto ds = generate_dataset(small_spec());
  Model video = zero_model("vid-b", 10);
  Model image = zero_model("img-a", 5);
  const Model* videos[] = {&video};
  const Model* images[] = {&image};
  // Only class 0 (shape 0) is predicted right by both constant models.
  auto eval = select_eval_set(videos, images, ds.val, 1, 3);
  ASSERT_EQ(eval.clips.size(), 1u);
  EXPECT_EQ(video.predict(video_input(eval.clips[0].pixels)), eval.clips[0].label);
  EXPECT_EQ(image.predict(frame_input(eval.clips[0].pixels, 0)), eval.clips[0].frame_label);
}
