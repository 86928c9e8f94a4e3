#pragma once

// Training-tuple construction: flow-gated frame pair sampling, instance
// scoring, Transform-Source / Transform-Target guidance with a trinary mask,
// setting sampling and tuple serialization.

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "guidesynth/geometry_io.hpp"
#include "guidesynth/rng.hpp"
#include "guidesynth/text_format.hpp"

namespace guidesynth {

class Image {
 public:
  Image() = default;
  Image(int width, int height, Rgb8 fill = {0, 0, 0});

  int width() const { return width_; }
  int height() const { return height_; }

  Rgb8 at(int x, int y) const {
    const auto i = 3 * index(x, y);
    return {data_[i], data_[i + 1], data_[i + 2]};
  }
  void set(int x, int y, Rgb8 c) {
    const auto i = 3 * index(x, y);
    data_[i] = c[0];
    data_[i + 1] = c[1];
    data_[i + 2] = c[2];
  }

  const std::vector<std::uint8_t>& bytes() const { return data_; }
  std::vector<std::uint8_t>& bytes() { return data_; }

  bool operator==(const Image&) const = default;

 private:
  std::size_t index(int x, int y) const {
    return static_cast<std::size_t>(y) * static_cast<std::size_t>(width_) + static_cast<std::size_t>(x);
  }

  int width_ = 0;
  int height_ = 0;
  std::vector<std::uint8_t> data_;
};

struct InstanceMask {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> values;  // 0 or 1, row-major
  std::string label;

  InstanceMask() = default;
  InstanceMask(int w, int h, std::string name = {});

  bool at(int x, int y) const { return values[offset(x, y)] != 0; }
  void set(int x, int y, bool v) { values[offset(x, y)] = v ? 1 : 0; }
  std::size_t count() const;

  bool operator==(const InstanceMask&) const = default;

 private:
  std::size_t offset(int x, int y) const {
    return static_cast<std::size_t>(y) * static_cast<std::size_t>(width) + static_cast<std::size_t>(x);
  }
};

struct FlowField {
  int width = 0;
  int height = 0;
  std::vector<double> u;
  std::vector<double> v;

  FlowField() = default;
  FlowField(int w, int h, double u0 = 0.0, double v0 = 0.0);

  std::size_t offset(int x, int y) const {
    return static_cast<std::size_t>(y) * static_cast<std::size_t>(width) + static_cast<std::size_t>(x);
  }
  bool operator==(const FlowField&) const = default;
};

// Per-pixel editing directive: 0.0 inpaint, 0.5 refine rendered content,
// 1.0 preserve.
enum class GuideLevel : std::uint8_t { kHole = 0, kRendered = 1, kKeep = 2 };

double guide_value(GuideLevel level);

class GuidanceMask {
 public:
  GuidanceMask() = default;
  GuidanceMask(int width, int height, GuideLevel fill = GuideLevel::kKeep);

  int width() const { return width_; }
  int height() const { return height_; }
  GuideLevel at(int x, int y) const { return levels_[index(x, y)]; }
  double value(int x, int y) const { return guide_value(at(x, y)); }
  void set(int x, int y, GuideLevel l) { levels_[index(x, y)] = l; }

  // Pixel counts for 0.0, 0.5 and 1.0.
  std::array<std::size_t, 3> counts() const;

  const std::vector<GuideLevel>& levels() const { return levels_; }

  bool operator==(const GuidanceMask&) const = default;

 private:
  std::size_t index(int x, int y) const {
    return static_cast<std::size_t>(y) * static_cast<std::size_t>(width_) + static_cast<std::size_t>(x);
  }

  int width_ = 0;
  int height_ = 0;
  std::vector<GuideLevel> levels_;
};

enum class TrainingSetting { kTransformSource, kTransformTarget, kMagicFixup };

std::string_view to_string(TrainingSetting s);
TrainingSetting parse_training_setting(std::string_view s);

struct Provenance {
  std::string clip_id;
  int src_frame = 0;
  int tgt_frame = 0;

  bool operator==(const Provenance&) const = default;
};

struct GuidanceTuple {
  Image source;
  Image guide;
  GuidanceMask mask;
  Image target;
  TrainingSetting setting = TrainingSetting::kTransformSource;
  Provenance provenance;
  bool drop_source_conditioning = false;

  bool operator==(const GuidanceTuple&) const = default;
};

struct InstanceScore {
  double border = 0.0;  // inverted border score
  double area = 0.0;
  double total = 0.0;
};

inline constexpr Rgb8 kHoleColor = {128, 128, 128};

// Sum over frames of the mean per-pixel flow magnitude.
double accumulate_flow(std::span<const FlowField> flows);

struct FramePair {
  int src = 0;
  int tgt = 0;
  bool operator==(const FramePair&) const = default;
};

// flows[k] maps frame k to frame k + 1. Returns nullopt (discard) when the
// clip's accumulated flow is below `threshold`; otherwise a uniformly drawn
// pair i < j whose in-between accumulated flow is at least threshold / 2.
std::optional<FramePair> select_frame_pair(std::span<const FlowField> flows, double threshold,
                                           std::uint64_t seed);

InstanceScore instance_score(const InstanceMask& mask);

// Index of the highest-scoring mask, lowest index on ties.
std::size_t select_main_instance(std::span<const InstanceMask> masks);

struct Guidance {
  Image image;
  GuidanceMask mask;
};

// Transform Source: the target object is cut out of I_tgt and the render of
// the transformed source mesh is pasted in.
Guidance build_guidance_ts(const Image& render_rgb, const InstanceMask& render_mask, const Image& target,
                           const InstanceMask& target_mask);

struct WarpResult {
  Image image;
  std::vector<std::uint8_t> hole;         // 1 where no source pixel landed
  std::vector<std::int32_t> source_index;  // winning source pixel, -1 on holes
};

// Forward warp of the non-instance pixels of `source`: each pixel splats to the
// nearest destination pixel, the larger flow magnitude wins conflicts and the
// first pixel in raster order wins exact ties. Holes are filled with
// kHoleColor.
WarpResult warp_background(const Image& source, const FlowField& flow, const InstanceMask& source_mask);

// Transform Target: the render is pasted on the flow-warped source background.
Guidance build_guidance_tt(const Image& render_rgb, const InstanceMask& render_mask, const Image& source,
                           const InstanceMask& source_mask, const FlowField& flow);

// Chains flows[from] .. flows[to - 1] by following each pixel through the
// nearest-pixel samples of successive fields.
FlowField compose_flows(std::span<const FlowField> flows, int from, int to);

struct SettingProbabilities {
  double transform_source = 0.35;
  double transform_target = 0.35;
  double magic_fixup = 0.3;

  // Throws Error(kConfigError) unless all are >= 0 and they sum to 1 within 1e-9.
  void validate() const;
};

TrainingSetting sample_training_setting(Rng& rng, const SettingProbabilities& probs = {});

// True with probability `p`: the source-image conditioning is dropped for
// this draw.
bool sample_conditioning_dropout(Rng& rng, double p = 0.2);

// Throws kDimensionMismatch unless every pixel holds one of the three levels
// and dimensions match the images.
void check_guidance_partition(const GuidanceTuple& t);

// Writes source.ppm, guide.ppm, target.ppm, mask.d3fx and manifest.txt into
// `dir` (created if needed) and returns the manifest.
KeyValueDoc serialize_tuple(const GuidanceTuple& t, const std::filesystem::path& dir);
GuidanceTuple load_tuple(const std::filesystem::path& dir);

// Binary PPM (P6) for RGB images and binary PGM (P5) for masks.
std::vector<std::uint8_t> encode_ppm(const Image& img);
Image decode_ppm(const std::vector<std::uint8_t>& bytes);
void write_ppm(const std::filesystem::path& path, const Image& img);
Image read_ppm(const std::filesystem::path& path);

void write_mask_pgm(const std::filesystem::path& path, const InstanceMask& mask);
InstanceMask read_mask_pgm(const std::filesystem::path& path);

// Flow fields travel as two-plane D3FX grids (u then v).
void write_flow(const std::filesystem::path& path, const FlowField& flow);
FlowField read_flow(const std::filesystem::path& path);

}  // namespace guidesynth
