#include <doctest.h>

#include <cmath>
#include <filesystem>

#include "egovideo/common/error.hpp"
#include "egovideo/corpus/vocabulary.hpp"
#include "egovideo/features/features.hpp"
#include "gradcheck.hpp"

using namespace egovideo;
using namespace egovideo::features;
namespace fs = std::filesystem;

namespace {

struct Fixture {
  corpus::World world;
  encoders::TwoTowerModel model;

  explicit Fixture(double duration_s = 6.0) {
    corpus::WorldConfig c;
    c.seed = 17;
    c.num_clips = 2;
    c.min_duration_s = c.max_duration_s = duration_s;
    c.min_action_s = 1.0;
    c.max_action_s = std::min(2.0, duration_s);
    world = corpus::generate_world(c);
    encoders::EncoderConfig e;
    e.embed_dim = 16;
    e.width = 16;
    model = encoders::TwoTowerModel(e, corpus::Vocabulary::for_world(c), 3);
  }
};

SnippetFeatureTrack track_of(Matrix m, std::string id = "clip0") {
  SnippetFeatureTrack t;
  t.features = std::move(m);
  t.snippet_len = 4;
  t.stride = 2;
  t.fps = 8.0;
  t.clip_id = std::move(id);
  return t;
}

// Piecewise-linear evaluation of row data at a fractional index.
double piecewise(const Matrix& m, int col, double x) {
  const int i = static_cast<int>(x);
  if (i >= m.rows() - 1) return m(m.rows() - 1, col);
  const double w = x - i;
  return m(i, col) * (1 - w) + m(i + 1, col) * w;
}

}  // namespace

TEST_CASE("snippet counts") {
  CHECK(snippet_count(16, 16, 16) == 1);
  CHECK(snippet_count(48, 16, 16) == 3);
  CHECK(snippet_count(47, 16, 16) == 2);
  CHECK(snippet_count(5, 16, 16) == 1);
  CHECK(snippet_count(20, 4, 2) == 9);
  CHECK_THROWS_AS(snippet_count(16, 0, 16), InvalidArgument);
  CHECK_THROWS_AS(snippet_count(16, 16, 0), InvalidArgument);
}

TEST_CASE("snippet count property over random tuples") {
  Rng rng(5);
  for (int trial = 0; trial < 500; ++trial) {
    const int t = 1 + static_cast<int>(rng.uniform_int(200));
    const int s = 1 + static_cast<int>(rng.uniform_int(32));
    const int d = 1 + static_cast<int>(rng.uniform_int(32));
    int expected = 0;
    if (t < s) {
      expected = 1;
    } else {
      for (int start = 0; start + s <= t; start += d) ++expected;
    }
    CHECK(snippet_count(t, s, d) == expected);
  }
}

TEST_CASE("extracted rows equal encodings of manually sliced frames") {
  Fixture f;  // 6 s at 8 fps: 48 frames
  const auto& clip = f.world.clips[0];
  REQUIRE(clip.video.frames == 48);
  const auto track = extract_snippet_track(clip, f.model, 16, 16);
  CHECK(track.length() == 3);
  CHECK(track.clip_id == clip.id);
  for (int i = 0; i < 3; ++i) {
    const auto v = clip.video.view();
    std::vector<uint8_t> copy(v.data.begin() + i * 16 * v.frame_size(), v.data.begin() + (i + 1) * 16 * v.frame_size());
    const corpus::FrameView manual{copy, 16, v.height, v.width, v.channels};
    CHECK((track.features.row(i) - encoders::encode_video(f.model, manual)).norm() < 1e-12);
  }
  CHECK(extract_snippet_track(clip, f.model, 16, 16).features == track.features);
  CHECK(track.snippet_center_s(1) == doctest::Approx(3.0));
}

TEST_CASE("short clips are padded with their last frame") {
  Fixture f(1.5);  // 12 frames
  const auto& clip = f.world.clips[0];
  REQUIRE(clip.video.frames == 12);
  const auto track = extract_snippet_track(clip, f.model, 16, 16);
  CHECK(track.length() == 1);
  const auto v = clip.video.view();
  std::vector<uint8_t> padded(v.data.begin(), v.data.end());
  for (int t = 12; t < 16; ++t) {
    const auto last = v.frame(11);
    padded.insert(padded.end(), last.begin(), last.end());
  }
  const corpus::FrameView manual{padded, 16, v.height, v.width, v.channels};
  CHECK((track.features.row(0) - encoders::encode_video(f.model, manual)).norm() < 1e-12);
}

TEST_CASE("projection") {
  Rng rng(1);
  const auto t = track_of(testing::random_matrix(rng, 3, 8));
  CHECK(project_features(t, Matrix::Identity(8, 8)).features == t.features);
  CHECK(project_features(t, Matrix::Zero(8, 5)).features.isZero(0.0));
  const Matrix w = testing::random_matrix(rng, 8, 4);
  const auto p = project_features(t, w);
  CHECK(p.length() == 3);
  CHECK(p.snippet_len == 4);
  CHECK(p.stride == 2);
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 4; ++j) {
      double s = 0;
      for (int k = 0; k < 8; ++k) s += t.features(i, k) * w(k, j);
      CHECK(std::abs(p.features(i, j) - s) < 1e-12);
    }
  CHECK_THROWS_AS(project_features(t, Matrix::Zero(7, 4)), InvalidArgument);
}

TEST_CASE("concatenation fusion") {
  Rng rng(2);
  const auto a = track_of(testing::random_matrix(rng, 5, 4));
  const auto b = track_of(testing::random_matrix(rng, 5, 6));
  const auto c = track_of(testing::random_matrix(rng, 5, 3));
  CHECK(concat_fuse(std::vector{a}).features == a.features);
  const auto twice = concat_fuse(std::vector{a, a});
  for (int i = 0; i < 5; ++i) CHECK(twice.features.row(i) == (nn::Matrix(1, 8) << a.features.row(i), a.features.row(i)).finished());

  const auto ab = concat_fuse(std::vector{a, b});
  REQUIRE(ab.dim() == 10);
  for (int i = 0; i < 5; ++i)
    for (int col = 0; col < 10; ++col) {
      const double expected = col < 4 ? a.features(i, col) : b.features(i, col - 4);
      CHECK(ab.features(i, col) == expected);
    }
  CHECK(concat_fuse(std::vector{ab, c}).features == concat_fuse(std::vector{a, b, c}).features);

  auto shorter = track_of(testing::random_matrix(rng, 4, 4));
  CHECK_THROWS_AS(concat_fuse(std::vector{a, shorter}), InvalidArgument);
  auto other_stride = b;
  other_stride.stride = 4;
  CHECK_THROWS_AS(concat_fuse(std::vector{a, other_stride}), InvalidArgument);
  auto other_clip = track_of(b.features, "clip1");
  CHECK_THROWS_AS(concat_fuse(std::vector{a, other_clip}), InvalidArgument);
}

TEST_CASE("pyramid fusion") {
  Rng rng(3);
  const Matrix last = testing::random_matrix(rng, 4, 3);
  const Matrix still = testing::random_matrix(rng, 4, 3);
  const std::vector<int> same{4};
  CHECK((pyramid_fuse(last, same, std::vector{still})[0] - (last + still)).norm() < 1e-14);
  CHECK(pyramid_fuse(last, same, std::vector{Matrix(Matrix::Zero(4, 3))})[0] == last);

  const std::vector<int> seven{7};
  const auto up = pyramid_fuse(last, seven, std::vector{Matrix(Matrix::Zero(7, 3))})[0];
  for (int j = 0; j < 7; ++j)
    for (int c = 0; c < 3; ++c) CHECK(std::abs(up(j, c) - piecewise(last, c, j * 3.0 / 6.0)) < 1e-14);

  const std::vector<int> levels{7, 2};
  const auto multi =
      pyramid_fuse(last, levels, std::vector{Matrix(Matrix::Ones(7, 3)), Matrix(Matrix::Zero(2, 3))});
  CHECK(multi.size() == 2);
  CHECK((multi[1].row(0) - last.row(0)).norm() < 1e-14);
  CHECK((multi[1].row(1) - last.row(3)).norm() < 1e-14);

  CHECK_THROWS_AS(pyramid_fuse(last, seven, std::vector{Matrix(Matrix::Zero(6, 3))}), InvalidArgument);
  CHECK_THROWS_AS(pyramid_fuse(last, seven, std::vector{Matrix(Matrix::Zero(7, 2))}), InvalidArgument);
  CHECK_THROWS_AS(pyramid_fuse(last, levels, std::vector{Matrix(Matrix::Zero(7, 3))}), InvalidArgument);
}

TEST_CASE("feature files round trip at float precision") {
  Rng rng(4);
  auto a = track_of(testing::random_matrix(rng, 6, 5), "clipA");
  a.duration_s = 3.5;
  auto b = track_of(testing::random_matrix(rng, 2, 5), "clipB");
  const auto dir = fs::temp_directory_path() / "egovideo_feature_test";
  fs::remove_all(dir);
  write_track_set(dir, std::vector{a, b});
  const auto back = read_track_set(dir);
  REQUIRE(back.size() == 2);
  CHECK(back[0].clip_id == "clipA");
  CHECK(back[0].duration_s == 3.5);
  CHECK(back[0].snippet_len == 4);
  CHECK(back[0].stride == 2);
  CHECK(back[0].fps == 8.0);
  CHECK(back[0].features.cast<float>() == a.features.cast<float>());
  CHECK(back[1].length() == 2);
  CHECK_THROWS_AS(read_track_set(dir / "nope"), MissingDependency);
  fs::remove_all(dir);
}
