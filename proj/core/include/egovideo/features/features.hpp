#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "egovideo/corpus/world.hpp"
#include "egovideo/encoders/model.hpp"

namespace egovideo::features {

using nn::Matrix;

// N x D snippet features. Snippet i covers frames [i*stride, i*stride + snippet_len).
struct SnippetFeatureTrack {
  Matrix features;
  int snippet_len = 16;
  int stride = 16;
  double fps = 0.0;
  std::string clip_id;
  double duration_s = 0.0;

  int length() const { return static_cast<int>(features.rows()); }
  int dim() const { return static_cast<int>(features.cols()); }
  // Centre of snippet i in seconds.
  double snippet_center_s(int i) const;
};

int snippet_count(int frames, int snippet_len, int stride);

SnippetFeatureTrack extract_snippet_track(const corpus::FrameView& frames, const encoders::TwoTowerModel& encoder,
                                          int snippet_len = 16, int stride = 16, double fps = 0.0,
                                          std::string clip_id = {});
SnippetFeatureTrack extract_snippet_track(const corpus::Clip& clip, const encoders::TwoTowerModel& encoder,
                                          int snippet_len = 16, int stride = 16);

// weights: D x out_dim.
SnippetFeatureTrack project_features(const SnippetFeatureTrack& track, const Matrix& weights);
SnippetFeatureTrack concat_fuse(std::span<const SnippetFeatureTrack> tracks);

// Linear resampling of an N x D map to `length` rows; endpoints align.
Matrix interpolate_rows(const Matrix& map, int length);
std::vector<Matrix> pyramid_fuse(const Matrix& last_map, std::span<const int> target_lengths,
                                 std::span<const Matrix> still_pyramid);

void write_track(const std::filesystem::path& path, const SnippetFeatureTrack& track);
SnippetFeatureTrack read_track(const std::filesystem::path& path);

// Writes <dir>/<clip_id>.egvf for every track plus <dir>/manifest.jsonl.
void write_track_set(const std::filesystem::path& dir, std::span<const SnippetFeatureTrack> tracks);
std::vector<SnippetFeatureTrack> read_track_set(const std::filesystem::path& dir);

}  // namespace egovideo::features
