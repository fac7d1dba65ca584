#include "egovideo/encoders/model.hpp"

#include <algorithm>
#include <cmath>

#include "egovideo/common/error.hpp"

namespace egovideo::encoders {

using nn::ForwardContext;
using nn::Index;

void validate(const EncoderConfig& c) {
  require(c.embed_dim >= 8, "embed_dim must be >= 8");
  require(c.width >= 1 && c.heads >= 1 && c.width % c.heads == 0,
          "width must be a positive multiple of heads");
  require(c.patch_size >= 1 && c.height % c.patch_size == 0 && c.width_px % c.patch_size == 0,
          "frame size must be divisible by patch_size");
  require(c.channels >= 1, "channels must be positive");
  require(c.sampled_frames >= 1, "sampled_frames must be >= 1");
  require(c.spatial_depth >= 0 && c.temporal_depth >= 0 && c.text_depth >= 0,
          "depths must be >= 0");
  require(c.max_text_len >= 1, "max_text_len must be >= 1");
  require(c.temperature >= kMinTemperature && c.temperature <= kMaxTemperature,
          "temperature must lie in [1e-3, 1]");
}

io::Json to_json(const EncoderConfig& c) {
  return {{"embed_dim", c.embed_dim},         {"width", c.width},
          {"heads", c.heads},                 {"height", c.height},
          {"width_px", c.width_px},           {"channels", c.channels},
          {"patch_size", c.patch_size},       {"sampled_frames", c.sampled_frames},
          {"spatial_depth", c.spatial_depth}, {"temporal_depth", c.temporal_depth},
          {"max_text_len", c.max_text_len},   {"text_depth", c.text_depth},
          {"temperature", c.temperature},     {"learnable_temperature", c.learnable_temperature},
          {"bf16", c.bf16}};
}

EncoderConfig encoder_config_from_json(const io::Json& j, EncoderConfig c) {
  auto get = [&j](const char* key, auto& field) {
    if (j.contains(key)) j.at(key).get_to(field);
  };
  get("embed_dim", c.embed_dim);
  get("width", c.width);
  get("heads", c.heads);
  get("height", c.height);
  get("width_px", c.width_px);
  get("channels", c.channels);
  get("patch_size", c.patch_size);
  get("sampled_frames", c.sampled_frames);
  get("spatial_depth", c.spatial_depth);
  get("temporal_depth", c.temporal_depth);
  get("max_text_len", c.max_text_len);
  get("text_depth", c.text_depth);
  get("temperature", c.temperature);
  get("learnable_temperature", c.learnable_temperature);
  get("bf16", c.bf16);
  return c;
}

std::vector<int> sample_frame_indices(int total_frames, int count) {
  require(total_frames >= 1, "clip has no frames");
  std::vector<int> idx(static_cast<size_t>(count));
  for (int f = 0; f < count; ++f) {
    const double center = (f + 0.5) * total_frames / count;
    idx[static_cast<size_t>(f)] = std::clamp(static_cast<int>(std::floor(center)), 0, total_frames - 1);
  }
  return idx;
}

Matrix patchify(std::span<const corpus::FrameView> clips, const EncoderConfig& c) {
  const int p = c.patch_size;
  const int gx = c.width_px / p;
  const int per_frame = c.patches_per_frame();
  Matrix out(static_cast<Index>(clips.size()) * c.sampled_frames * per_frame, c.patch_dim());
  Index row = 0;
  for (const auto& clip : clips) {
    if (clip.frames < 1) throw InvalidArgument("encode_video: clip has no frames");
    if (clip.height != c.height || clip.width != c.width_px || clip.channels != c.channels) {
      throw InvalidArgument("encode_video: frame shape " + std::to_string(clip.height) + "x" +
                            std::to_string(clip.width) + "x" + std::to_string(clip.channels) +
                            " does not match the encoder");
    }
    for (int t : sample_frame_indices(clip.frames, c.sampled_frames)) {
      const auto frame = clip.frame(t);
      for (int patch = 0; patch < per_frame; ++patch) {
        const int py = patch / gx, px = patch % gx;
        Index col = 0;
        for (int dy = 0; dy < p; ++dy) {
          for (int dx = 0; dx < p; ++dx) {
            const size_t base = (static_cast<size_t>(py * p + dy) * c.width_px + px * p + dx) * c.channels;
            for (int ch = 0; ch < c.channels; ++ch) {
              out(row, col++) = frame[base + static_cast<size_t>(ch)] / 127.5 - 1.0;
            }
          }
        }
        ++row;
      }
    }
  }
  return out;
}

namespace {

Matrix xavier(int rows, int cols, Rng& rng, double gain = 1.0) {
  const double a = gain * std::sqrt(6.0 / (rows + cols));
  Matrix m(rows, cols);
  for (Index i = 0; i < m.size(); ++i) m.data()[i] = rng.uniform(-a, a);
  return m;
}

Matrix normal_init(int rows, int cols, Rng& rng, double stddev) {
  Matrix m(rows, cols);
  for (Index i = 0; i < m.size(); ++i) m.data()[i] = stddev * rng.normal();
  return m;
}

// groups x (groups * size) averaging matrix.
Matrix group_mean_matrix(Index groups, Index size) {
  Matrix m = Matrix::Zero(groups, groups * size);
  for (Index g = 0; g < groups; ++g) m.block(g, g * size, 1, size).setConstant(1.0 / size);
  return m;
}

std::vector<int> tiled_ids(int period, int repeats) {
  std::vector<int> ids(static_cast<size_t>(period * repeats));
  for (size_t i = 0; i < ids.size(); ++i) ids[i] = static_cast<int>(i % static_cast<size_t>(period));
  return ids;
}

}  // namespace

VideoTower::VideoTower(const EncoderConfig& config, Rng& rng) : config_(config) {
  patch_embed_ = nn::Linear(config.patch_dim(), config.width, rng);
  spatial_pos_ = nn::parameter(normal_init(config.patches_per_frame(), config.width, rng, 0.02));
  temporal_pos_ = nn::parameter(normal_init(config.sampled_frames, config.width, rng, 0.02));
  for (int i = 0; i < config.spatial_depth; ++i) {
    spatial_norms_.emplace_back(config.width);
    spatial_mlps_.emplace_back(config.width, 2 * config.width, config.width, rng);
  }
  for (int i = 0; i < config.temporal_depth; ++i) {
    temporal_blocks_.emplace_back(config.width, config.heads, 2 * config.width, rng);
  }
  final_norm_ = nn::LayerNorm(config.width);
  proj_ = nn::Linear(config.width, config.embed_dim, rng);
}

Var VideoTower::pooled(std::span<const corpus::FrameView> clips, const ForwardContext& ctx) const {
  if (clips.empty()) throw InvalidArgument("encode_video: empty batch");
  const auto b = static_cast<int>(clips.size());
  const int f = config_.sampled_frames;
  const int p = config_.patches_per_frame();

  Var x = patch_embed_.forward(nn::constant(patchify(clips, config_)));
  x = nn::gelu(nn::add(x, nn::gather_rows(spatial_pos_, tiled_ids(p, b * f))));
  for (size_t i = 0; i < spatial_mlps_.size(); ++i) {
    x = nn::add(x, nn::residual_branch(spatial_mlps_[i].forward(spatial_norms_[i].forward(x)), ctx));
  }
  // Mean over the patches of each frame, then add the frame position.
  Var frames = nn::matmul(nn::constant(group_mean_matrix(b * f, p)), x);
  frames = nn::add(frames, nn::gather_rows(temporal_pos_, tiled_ids(f, b)));
  const Matrix mask = nn::block_diagonal_mask(std::vector<int>(static_cast<size_t>(b), f));
  for (const auto& block : temporal_blocks_) frames = block.forward(frames, mask, ctx);
  frames = final_norm_.forward(frames);
  return nn::matmul(nn::constant(group_mean_matrix(b, f)), frames);
}

Var VideoTower::embed(std::span<const corpus::FrameView> clips, const ForwardContext& ctx) const {
  return nn::l2_normalize_rows(proj_.forward(pooled(clips, ctx)));
}

void VideoTower::collect(const std::string& prefix, nn::ParamList& out) const {
  patch_embed_.collect(prefix + ".patch_embed", out);
  out.push_back({prefix + ".spatial_pos", spatial_pos_});
  out.push_back({prefix + ".temporal_pos", temporal_pos_});
  for (size_t i = 0; i < spatial_mlps_.size(); ++i) {
    spatial_norms_[i].collect(prefix + ".spatial." + std::to_string(i) + ".norm", out);
    spatial_mlps_[i].collect(prefix + ".spatial." + std::to_string(i) + ".mlp", out);
  }
  for (size_t i = 0; i < temporal_blocks_.size(); ++i) {
    temporal_blocks_[i].collect(prefix + ".temporal." + std::to_string(i), out);
  }
  final_norm_.collect(prefix + ".norm", out);
  proj_.collect(prefix + ".proj", out);
}

TextTower::TextTower(const EncoderConfig& config, int vocab_size, Rng& rng) : config_(config) {
  token_embed_ = nn::parameter(normal_init(vocab_size, config.width, rng, 0.5));
  pos_embed_ = nn::parameter(normal_init(config.max_text_len, config.width, rng, 0.02));
  for (int i = 0; i < config.text_depth; ++i) {
    blocks_.emplace_back(config.width, config.heads, 2 * config.width, rng);
  }
  final_norm_ = nn::LayerNorm(config.width);
  proj_ = nn::Linear(config.width, config.embed_dim, rng);
}

TextTower::Output TextTower::forward(const std::vector<std::vector<int>>& ids,
                                     const ForwardContext& ctx) const {
  if (ids.empty()) throw InvalidArgument("encode_text: empty batch");
  const int l = config_.max_text_len;
  const auto b = static_cast<Index>(ids.size());
  std::vector<int> flat;
  std::vector<bool> valid;
  Matrix pool = Matrix::Zero(b, b * l);
  for (Index i = 0; i < b; ++i) {
    const auto& seq = ids[static_cast<size_t>(i)];
    if (static_cast<int>(seq.size()) != l) throw InvalidArgument("encode_text: wrong sequence length");
    int n_valid = 0;
    for (int t : seq) n_valid += t != corpus::Vocabulary::kPad;
    for (int k = 0; k < l; ++k) {
      const bool v = seq[static_cast<size_t>(k)] != corpus::Vocabulary::kPad;
      flat.push_back(seq[static_cast<size_t>(k)]);
      valid.push_back(v);
      // An all-padding caption pools over every position.
      if (n_valid == 0) {
        pool(i, i * l + k) = 1.0 / l;
      } else if (v) {
        pool(i, i * l + k) = 1.0 / n_valid;
      }
    }
  }
  Var x = nn::add(nn::gather_rows(token_embed_, flat),
                  nn::gather_rows(pos_embed_, tiled_ids(l, static_cast<int>(b))));
  const Matrix mask = nn::padded_block_mask(std::vector<int>(static_cast<size_t>(b), l), valid);
  for (const auto& block : blocks_) x = block.forward(x, mask, ctx);
  x = final_norm_.forward(x);
  return {x, nn::matmul(nn::constant(std::move(pool)), x)};
}

Var TextTower::embed(const std::vector<std::vector<int>>& ids, const ForwardContext& ctx) const {
  return nn::l2_normalize_rows(proj_.forward(forward(ids, ctx).pooled));
}

void TextTower::collect(const std::string& prefix, nn::ParamList& out) const {
  out.push_back({prefix + ".token_embed", token_embed_});
  out.push_back({prefix + ".pos_embed", pos_embed_});
  for (size_t i = 0; i < blocks_.size(); ++i) blocks_[i].collect(prefix + ".block." + std::to_string(i), out);
  final_norm_.collect(prefix + ".norm", out);
  proj_.collect(prefix + ".proj", out);
}

TwoTowerModel::TwoTowerModel(EncoderConfig config, corpus::Vocabulary vocab, uint64_t seed)
    : config_(config), vocab_(std::move(vocab)), seed_(seed) {
  validate(config_);
  require(vocab_.size() >= 2, "vocabulary must contain at least the special tokens");
  Rng rng(seed);
  video_ = VideoTower(config_, rng);
  text_ = TextTower(config_, vocab_.size(), rng);
  log_tau_ = nn::parameter(Matrix::Constant(1, 1, std::log(config_.temperature)));
}

TwoTowerModel TwoTowerModel::clone() const {
  TwoTowerModel copy(config_, vocab_, seed_);
  nn::copy_parameter_values(parameters(), copy.parameters());
  return copy;
}

Var TwoTowerModel::embed_video(std::span<const corpus::FrameView> clips, const ForwardContext& ctx) const {
  return video_.embed(clips, ctx);
}

Var TwoTowerModel::pooled_video(std::span<const corpus::FrameView> clips, const ForwardContext& ctx) const {
  return video_.pooled(clips, ctx);
}

std::vector<int> TwoTowerModel::tokenize(const std::string& caption) const {
  return vocab_.encode(caption, config_.max_text_len);
}

Var TwoTowerModel::embed_text(std::span<const std::string> captions, const ForwardContext& ctx) const {
  std::vector<std::vector<int>> ids;
  ids.reserve(captions.size());
  for (const auto& c : captions) ids.push_back(tokenize(c));
  return text_.embed(ids, ctx);
}

Var TwoTowerModel::text_tokens(const std::string& caption, const ForwardContext& ctx) const {
  const auto ids = tokenize(caption);
  auto out = text_.forward({ids}, ctx);
  const auto n_valid = std::count_if(ids.begin(), ids.end(), [](int t) { return t != corpus::Vocabulary::kPad; });
  // Encoded captions are left-aligned, so the valid tokens form a prefix.
  return n_valid == 0 ? out.tokens : nn::slice_rows(out.tokens, 0, n_valid);
}

double TwoTowerModel::temperature() const {
  return std::clamp(std::exp(log_tau_.item()), kMinTemperature, kMaxTemperature);
}

void TwoTowerModel::clamp_temperature() const {
  auto& v = log_tau_.mutable_value()(0, 0);
  v = std::clamp(v, std::log(kMinTemperature), std::log(kMaxTemperature));
}

nn::ParamList TwoTowerModel::parameters() const {
  nn::ParamList out;
  video_.collect("video", out);
  text_.collect("text", out);
  out.push_back({"log_tau", log_tau_});
  return out;
}

nn::ParamList TwoTowerModel::trainable_parameters() const {
  auto out = parameters();
  if (!config_.learnable_temperature) out.pop_back();
  return out;
}

nn::ParamList TwoTowerModel::video_parameters() const {
  nn::ParamList out;
  video_.collect("video", out);
  return out;
}

Matrix encode_video(const TwoTowerModel& model, const corpus::FrameView& clip) {
  nn::NoGradGuard guard;
  return model.embed_video(std::span<const corpus::FrameView>(&clip, 1)).value();
}

Matrix encode_text(const TwoTowerModel& model, const std::string& caption) {
  nn::NoGradGuard guard;
  return model.embed_text(std::span<const std::string>(&caption, 1)).value();
}

}  // namespace egovideo::encoders
