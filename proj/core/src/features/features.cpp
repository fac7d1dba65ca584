#include "egovideo/features/features.hpp"

#include <cmath>
#include <fstream>

#include "egovideo/common/binary_io.hpp"
#include "egovideo/common/error.hpp"
#include "egovideo/common/jsonl.hpp"

namespace egovideo::features {

namespace fs = std::filesystem;

double SnippetFeatureTrack::snippet_center_s(int i) const {
  return (static_cast<double>(i) * stride + 0.5 * snippet_len) / fps;
}

int snippet_count(int frames, int snippet_len, int stride) {
  require(snippet_len > 0 && stride > 0, "snippet length and stride must be positive");
  require(frames >= 1, "clip has no frames");
  if (frames < snippet_len) return 1;
  return (frames - snippet_len) / stride + 1;
}

SnippetFeatureTrack extract_snippet_track(const corpus::FrameView& frames, const encoders::TwoTowerModel& encoder,
                                          int snippet_len, int stride, double fps, std::string clip_id) {
  const int n = snippet_count(frames.frames, snippet_len, stride);
  // Short clips repeat their last frame up to one full snippet.
  std::vector<uint8_t> padded;
  corpus::FrameView source = frames;
  if (frames.frames < snippet_len) {
    padded.assign(frames.data.begin(), frames.data.end());
    const auto last = frames.frame(frames.frames - 1);
    for (int t = frames.frames; t < snippet_len; ++t) padded.insert(padded.end(), last.begin(), last.end());
    source = {padded, snippet_len, frames.height, frames.width, frames.channels};
  }

  SnippetFeatureTrack track;
  track.snippet_len = snippet_len;
  track.stride = stride;
  track.fps = fps;
  track.clip_id = std::move(clip_id);
  track.duration_s = fps > 0 ? frames.frames / fps : 0.0;

  std::vector<corpus::FrameView> views;
  views.reserve(n);
  for (int i = 0; i < n; ++i) views.push_back(source.slice(i * stride, snippet_len));
  nn::NoGradGuard no_grad;
  constexpr int kBatch = 64;
  for (int first = 0; first < n; first += kBatch) {
    const int count = std::min(kBatch, n - first);
    const Matrix e = encoder.embed_video(std::span(views).subspan(first, count)).value();
    if (first == 0) track.features.resize(n, e.cols());
    track.features.middleRows(first, count) = e;
  }
  return track;
}

SnippetFeatureTrack extract_snippet_track(const corpus::Clip& clip, const encoders::TwoTowerModel& encoder,
                                          int snippet_len, int stride) {
  auto track = extract_snippet_track(clip.video.view(), encoder, snippet_len, stride, clip.fps, clip.id);
  track.duration_s = clip.duration_s;
  return track;
}

SnippetFeatureTrack project_features(const SnippetFeatureTrack& track, const Matrix& weights) {
  if (weights.rows() != track.features.cols()) {
    throw InvalidArgument("projection expects " + std::to_string(track.features.cols()) + " input rows, got " +
                          std::to_string(weights.rows()));
  }
  SnippetFeatureTrack out = track;
  out.features = track.features * weights;
  return out;
}

SnippetFeatureTrack concat_fuse(std::span<const SnippetFeatureTrack> tracks) {
  require(!tracks.empty(), "concat_fuse needs at least one track");
  const auto& first = tracks.front();
  Eigen::Index width = 0;
  for (const auto& t : tracks) {
    if (t.length() != first.length() || t.snippet_len != first.snippet_len || t.stride != first.stride ||
        t.clip_id != first.clip_id || t.fps != first.fps) {
      throw InvalidArgument("concat_fuse: tracks disagree on length or temporal metadata");
    }
    width += t.features.cols();
  }
  SnippetFeatureTrack out = first;
  out.features.resize(first.length(), width);
  Eigen::Index col = 0;
  for (const auto& t : tracks) {
    out.features.middleCols(col, t.features.cols()) = t.features;
    col += t.features.cols();
  }
  return out;
}

Matrix interpolate_rows(const Matrix& map, int length) {
  require(map.rows() >= 1, "cannot interpolate an empty map");
  require(length >= 1, "target length must be positive");
  const int n = static_cast<int>(map.rows());
  Matrix out(length, map.cols());
  for (int j = 0; j < length; ++j) {
    const double x = length == 1 ? 0.5 * (n - 1) : static_cast<double>(j) * (n - 1) / (length - 1);
    const int lo = std::min(static_cast<int>(std::floor(x)), n - 1);
    const int hi = std::min(lo + 1, n - 1);
    const double frac = x - lo;
    out.row(j) = (1.0 - frac) * map.row(lo) + frac * map.row(hi);
  }
  return out;
}

std::vector<Matrix> pyramid_fuse(const Matrix& last_map, std::span<const int> target_lengths,
                                 std::span<const Matrix> still_pyramid) {
  if (target_lengths.size() != still_pyramid.size()) {
    throw InvalidArgument("pyramid_fuse: " + std::to_string(target_lengths.size()) + " target lengths for " +
                          std::to_string(still_pyramid.size()) + " still levels");
  }
  std::vector<Matrix> fused;
  for (size_t l = 0; l < still_pyramid.size(); ++l) {
    const auto& still = still_pyramid[l];
    if (still.rows() != target_lengths[l] || still.cols() != last_map.cols()) {
      throw InvalidArgument("pyramid_fuse: level " + std::to_string(l) + " shape mismatch");
    }
    fused.push_back(interpolate_rows(last_map, target_lengths[l]) + still);
  }
  return fused;
}

void write_track(const fs::path& path, const SnippetFeatureTrack& track) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InvalidArgument("cannot write " + path.string());
  io::write_magic(out, "EGVF");
  io::write_pod<uint32_t>(out, static_cast<uint32_t>(track.length()));
  io::write_pod<uint32_t>(out, static_cast<uint32_t>(track.dim()));
  io::write_pod<uint32_t>(out, static_cast<uint32_t>(track.snippet_len));
  io::write_pod<uint32_t>(out, static_cast<uint32_t>(track.stride));
  io::write_pod<double>(out, track.fps);
  for (int i = 0; i < track.length(); ++i)
    for (int j = 0; j < track.dim(); ++j) io::write_pod<float>(out, static_cast<float>(track.features(i, j)));
}

SnippetFeatureTrack read_track(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw MissingDependency("feature file not found: " + path.string());
  io::expect_magic(in, "EGVF");
  SnippetFeatureTrack t;
  const auto n = io::read_pod<uint32_t>(in);
  const auto d = io::read_pod<uint32_t>(in);
  t.snippet_len = static_cast<int>(io::read_pod<uint32_t>(in));
  t.stride = static_cast<int>(io::read_pod<uint32_t>(in));
  t.fps = io::read_pod<double>(in);
  t.features.resize(n, d);
  for (uint32_t i = 0; i < n; ++i)
    for (uint32_t j = 0; j < d; ++j) t.features(i, j) = io::read_pod<float>(in);
  return t;
}

void write_track_set(const fs::path& dir, std::span<const SnippetFeatureTrack> tracks) {
  fs::create_directories(dir);
  std::vector<io::Json> manifest;
  for (const auto& t : tracks) {
    const std::string rel = t.clip_id + ".egvf";
    write_track(dir / rel, t);
    manifest.push_back({{"clip_id", t.clip_id}, {"path", rel}, {"duration_s", t.duration_s}});
  }
  io::write_jsonl(dir / "manifest.jsonl", manifest);
}

std::vector<SnippetFeatureTrack> read_track_set(const fs::path& dir) {
  if (!fs::exists(dir / "manifest.jsonl")) throw MissingDependency("feature manifest missing in " + dir.string());
  std::vector<SnippetFeatureTrack> out;
  for (const auto& r : io::read_jsonl(dir / "manifest.jsonl")) {
    auto t = read_track(dir / r.at("path").get<std::string>());
    t.clip_id = r.at("clip_id").get<std::string>();
    t.duration_s = r.value("duration_s", 0.0);
    out.push_back(std::move(t));
  }
  return out;
}

}  // namespace egovideo::features
