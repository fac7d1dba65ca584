#include "egovideo/corpus/io.hpp"

#include <fstream>

#include "egovideo/common/binary_io.hpp"
#include "egovideo/common/error.hpp"

namespace egovideo::corpus {

namespace fs = std::filesystem;
using io::Json;

void write_clip_file(const fs::path& path, const VideoTensor& video) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InvalidArgument("cannot write " + path.string());
  io::write_magic(out, "EGVC");
  io::write_pod<uint32_t>(out, kClipFileVersion);
  io::write_pod<uint32_t>(out, static_cast<uint32_t>(video.frames));
  io::write_pod<uint32_t>(out, static_cast<uint32_t>(video.height));
  io::write_pod<uint32_t>(out, static_cast<uint32_t>(video.width));
  io::write_pod<uint32_t>(out, static_cast<uint32_t>(video.channels));
  out.write(reinterpret_cast<const char*>(video.data.data()),
            static_cast<std::streamsize>(video.data.size()));
}

VideoTensor read_clip_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw MissingDependency("cannot open " + path.string());
  io::expect_magic(in, "EGVC");
  const auto version = io::read_pod<uint32_t>(in);
  if (version != kClipFileVersion) {
    throw InvalidArgument("unsupported clip file version " + std::to_string(version));
  }
  VideoTensor v;
  v.frames = static_cast<int>(io::read_pod<uint32_t>(in));
  v.height = static_cast<int>(io::read_pod<uint32_t>(in));
  v.width = static_cast<int>(io::read_pod<uint32_t>(in));
  v.channels = static_cast<int>(io::read_pod<uint32_t>(in));
  v.data.resize(static_cast<size_t>(v.frames) * v.height * v.width * v.channels);
  in.read(reinterpret_cast<char*>(v.data.data()), static_cast<std::streamsize>(v.data.size()));
  if (!in) throw InvalidArgument("truncated clip file " + path.string());
  return v;
}

void write_manifest(const fs::path& path, std::span<const ClipTextPair> pairs) {
  std::vector<Json> records;
  records.reserve(pairs.size());
  for (const auto& p : pairs) {
    records.push_back({{"clip_id", p.clip_id},
                       {"caption", p.caption},
                       {"source", to_string(p.source)},
                       {"quality", p.quality}});
  }
  io::write_jsonl(path, records);
}

std::vector<ClipTextPair> read_manifest(const fs::path& path) {
  std::vector<ClipTextPair> pairs;
  for (const auto& r : io::read_jsonl(path)) {
    pairs.push_back({r.at("clip_id").get<std::string>(), r.at("caption").get<std::string>(),
                     source_from_string(r.at("source").get<std::string>()),
                     r.at("quality").get<double>()});
  }
  return pairs;
}

Json to_json(const WorldConfig& c) {
  return {{"seed", c.seed},
          {"num_clips", c.num_clips},
          {"num_verbs", c.num_verbs},
          {"num_nouns", c.num_nouns},
          {"fps", c.fps},
          {"min_duration_s", c.min_duration_s},
          {"max_duration_s", c.max_duration_s},
          {"min_actions", c.min_actions},
          {"max_actions", c.max_actions},
          {"min_action_s", c.min_action_s},
          {"max_action_s", c.max_action_s},
          {"max_gap_s", c.max_gap_s},
          {"height", c.height},
          {"width", c.width},
          {"channels", c.channels},
          {"caption_templates", c.caption_templates},
          {"caption_corruption_prob", c.caption_corruption_prob},
          {"duplicate_prob", c.duplicate_prob},
          {"transition_determinism", c.transition_determinism},
          {"hue_shift_deg", c.hue_shift_deg},
          {"speed_factor", c.speed_factor},
          {"source_probs", c.source_probs},
          {"lta_history", c.lta_history},
          {"lta_future", c.lta_future},
          {"lta_stride", c.lta_stride},
          {"id_prefix", c.id_prefix}};
}

WorldConfig world_config_from_json(const Json& j, WorldConfig c) {
  auto get = [&j](const char* key, auto& field) {
    if (j.contains(key)) j.at(key).get_to(field);
  };
  get("seed", c.seed);
  get("num_clips", c.num_clips);
  get("num_verbs", c.num_verbs);
  get("num_nouns", c.num_nouns);
  get("fps", c.fps);
  get("min_duration_s", c.min_duration_s);
  get("max_duration_s", c.max_duration_s);
  get("min_actions", c.min_actions);
  get("max_actions", c.max_actions);
  get("min_action_s", c.min_action_s);
  get("max_action_s", c.max_action_s);
  get("max_gap_s", c.max_gap_s);
  get("height", c.height);
  get("width", c.width);
  get("channels", c.channels);
  get("caption_templates", c.caption_templates);
  get("caption_corruption_prob", c.caption_corruption_prob);
  get("duplicate_prob", c.duplicate_prob);
  get("transition_determinism", c.transition_determinism);
  get("hue_shift_deg", c.hue_shift_deg);
  get("speed_factor", c.speed_factor);
  get("source_probs", c.source_probs);
  get("lta_history", c.lta_history);
  get("lta_future", c.lta_future);
  get("lta_stride", c.lta_stride);
  get("id_prefix", c.id_prefix);
  return c;
}

namespace {

Json segment_json(const TemporalSegment& s) {
  return {{"start_s", s.start_s}, {"end_s", s.end_s}};
}

TemporalSegment segment_from(const Json& j) {
  TemporalSegment s{j.at("start_s").get<double>(), j.at("end_s").get<double>(), 1.0, std::nullopt};
  if (!s.valid()) throw InvalidArgument("malformed segment: start > end or negative start");
  return s;
}

Json tokens_json(const std::vector<ActionToken>& tokens) {
  Json arr = Json::array();
  for (const auto& t : tokens) arr.push_back({{"verb", t.verb_id}, {"noun", t.noun_id}});
  return arr;
}

std::vector<ActionToken> tokens_from(const Json& arr) {
  std::vector<ActionToken> out;
  for (const auto& t : arr) out.push_back({t.at("verb").get<int>(), t.at("noun").get<int>()});
  return out;
}

}  // namespace

Json to_json(const GroundingAnnotation& a) {
  return {{"query_id", a.query_id}, {"clip_id", a.clip_id}, {"query", a.query_text},
          {"gt", segment_json(a.gt)},  {"verb", a.verb_id},  {"noun", a.noun_id}};
}

GroundingAnnotation grounding_annotation_from_json(const Json& j) {
  return {j.at("query_id").get<std::string>(), j.at("clip_id").get<std::string>(),
          j.at("query").get<std::string>(), segment_from(j.at("gt")), j.value("verb", 0),
          j.value("noun", 0)};
}

Json to_json(const MomentAnnotation& a) {
  Json segs = Json::array();
  for (const auto& s : a.segments) segs.push_back(segment_json(s));
  return {{"clip_id", a.clip_id}, {"category_id", a.category_id}, {"segments", segs}};
}

MomentAnnotation moment_annotation_from_json(const Json& j) {
  MomentAnnotation a{j.at("clip_id").get<std::string>(), j.at("category_id").get<int>(), {}};
  for (const auto& s : j.at("segments")) {
    auto seg = segment_from(s);
    seg.label = a.category_id;
    a.segments.push_back(seg);
  }
  return a;
}

Json to_json(const AnticipationAnnotation& a) {
  Json segs = Json::array();
  for (const auto& s : a.history_segments) segs.push_back(segment_json(s));
  return {{"example_id", a.example_id},
          {"clip_id", a.clip_id},
          {"history", tokens_json(a.history)},
          {"future", tokens_json(a.future)},
          {"history_segments", segs}};
}

AnticipationAnnotation anticipation_annotation_from_json(const Json& j) {
  AnticipationAnnotation a;
  a.example_id = j.at("example_id").get<std::string>();
  a.clip_id = j.at("clip_id").get<std::string>();
  a.history = tokens_from(j.at("history"));
  a.future = tokens_from(j.at("future"));
  for (const auto& s : j.at("history_segments")) a.history_segments.push_back(segment_from(s));
  return a;
}

Json to_json(const RecognitionAnnotation& a) {
  return {{"clip_ref", a.clip_ref}, {"clip_id", a.clip_id}, {"start_s", a.start_s},
          {"end_s", a.end_s},       {"verb", a.verb_id},    {"noun", a.noun_id},
          {"caption", a.caption}};
}

RecognitionAnnotation recognition_annotation_from_json(const Json& j) {
  return {j.at("clip_ref").get<std::string>(), j.at("clip_id").get<std::string>(),
          j.at("start_s").get<double>(),       j.at("end_s").get<double>(),
          j.at("verb").get<int>(),             j.at("noun").get<int>(),
          j.at("caption").get<std::string>()};
}

std::vector<fs::path> write_world(const fs::path& dir, const World& world) {
  fs::create_directories(dir / "clips");
  fs::create_directories(dir / "annotations");
  std::vector<fs::path> written;

  io::write_json(dir / "world.json", to_json(world.config));
  written.emplace_back("world.json");

  std::vector<Json> clip_records;
  for (const auto& c : world.clips) {
    const fs::path rel = fs::path("clips") / (c.id + ".egvc");
    write_clip_file(dir / rel, c.video);
    written.push_back(rel);
    Json script = Json::array();
    for (const auto& e : c.script.entries) {
      script.push_back({{"verb", e.verb_id}, {"noun", e.noun_id}, {"start_s", e.start_s}, {"end_s", e.end_s}});
    }
    clip_records.push_back({{"clip_id", c.id},
                            {"path", rel.generic_string()},
                            {"fps", c.fps},
                            {"duration_s", c.duration_s},
                            {"script", script}});
  }
  io::write_jsonl(dir / "clips.jsonl", clip_records);
  written.emplace_back("clips.jsonl");

  write_manifest(dir / "pairs.jsonl", world.pairs);
  written.emplace_back("pairs.jsonl");

  auto dump = [&](const char* name, const auto& items) {
    std::vector<Json> records;
    for (const auto& a : items) records.push_back(to_json(a));
    const fs::path rel = fs::path("annotations") / (std::string(name) + ".jsonl");
    io::write_jsonl(dir / rel, records);
    written.push_back(rel);
  };
  dump("nlq", world.annotations.nlq);
  dump("goalstep", world.annotations.goalstep);
  dump("moments", world.annotations.moments);
  dump("anticipation", world.annotations.anticipation);
  dump("recognition", world.annotations.recognition);
  return written;
}

World read_world(const fs::path& dir) {
  World world;
  world.config = world_config_from_json(io::read_json_with_comments(dir / "world.json"));
  for (const auto& r : io::read_jsonl(dir / "clips.jsonl")) {
    Clip c;
    c.id = r.at("clip_id").get<std::string>();
    c.fps = r.at("fps").get<double>();
    c.duration_s = r.at("duration_s").get<double>();
    for (const auto& e : r.at("script")) {
      c.script.entries.push_back({e.at("verb").get<int>(), e.at("noun").get<int>(),
                                  e.at("start_s").get<double>(), e.at("end_s").get<double>()});
    }
    c.video = read_clip_file(dir / r.at("path").get<std::string>());
    world.clips.push_back(std::move(c));
  }
  world.pairs = read_manifest(dir / "pairs.jsonl");
  auto load = [&](const char* name, auto parse, auto& out) {
    for (const auto& r : io::read_jsonl(dir / "annotations" / (std::string(name) + ".jsonl"))) {
      out.push_back(parse(r));
    }
  };
  load("nlq", grounding_annotation_from_json, world.annotations.nlq);
  load("goalstep", grounding_annotation_from_json, world.annotations.goalstep);
  load("moments", moment_annotation_from_json, world.annotations.moments);
  load("anticipation", anticipation_annotation_from_json, world.annotations.anticipation);
  load("recognition", recognition_annotation_from_json, world.annotations.recognition);
  return world;
}

}  // namespace egovideo::corpus
