#pragma once

#include <filesystem>
#include <vector>

#include "egovideo/common/jsonl.hpp"
#include "egovideo/corpus/world.hpp"

namespace egovideo::corpus {

// Clip binary: "EGVC" | version u32 | T,H,W,C u32 | T*H*W*C bytes.
inline constexpr uint32_t kClipFileVersion = 1;

void write_clip_file(const std::filesystem::path& path, const VideoTensor& video);
VideoTensor read_clip_file(const std::filesystem::path& path);

// World manifest: one {clip_id, caption, source, quality} record per pair.
void write_manifest(const std::filesystem::path& path, std::span<const ClipTextPair> pairs);
std::vector<ClipTextPair> read_manifest(const std::filesystem::path& path);

io::Json to_json(const WorldConfig& config);
WorldConfig world_config_from_json(const io::Json& j, WorldConfig base = {});

io::Json to_json(const GroundingAnnotation& a);
GroundingAnnotation grounding_annotation_from_json(const io::Json& j);
io::Json to_json(const MomentAnnotation& a);
MomentAnnotation moment_annotation_from_json(const io::Json& j);
io::Json to_json(const AnticipationAnnotation& a);
AnticipationAnnotation anticipation_annotation_from_json(const io::Json& j);
io::Json to_json(const RecognitionAnnotation& a);
RecognitionAnnotation recognition_annotation_from_json(const io::Json& j);

// Directory layout:
//   world.json           generator config
//   clips.jsonl          {clip_id, path, fps, duration_s, script}
//   clips/<id>.egvc      frames
//   pairs.jsonl          world manifest (all generated pairs)
//   annotations/<track>.jsonl
// Returns every file written, relative to dir.
std::vector<std::filesystem::path> write_world(const std::filesystem::path& dir, const World& world);
World read_world(const std::filesystem::path& dir);

}  // namespace egovideo::corpus
