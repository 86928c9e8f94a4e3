#include "guidesynth/dataset.hpp"

#include <algorithm>
#include <cmath>

#include "guidesynth/error.hpp"

namespace guidesynth {

Image::Image(int width, int height, Rgb8 fill) : width_(width), height_(height) {
  if (width <= 0 || height <= 0) {
    throw Error(ErrorCode::kInvalidParams, "image dimensions must be positive");
  }
  data_.resize(3 * static_cast<std::size_t>(width) * static_cast<std::size_t>(height));
  for (std::size_t i = 0; i < data_.size(); i += 3) {
    data_[i] = fill[0];
    data_[i + 1] = fill[1];
    data_[i + 2] = fill[2];
  }
}

InstanceMask::InstanceMask(int w, int h, std::string name)
    : width(w), height(h), values(static_cast<std::size_t>(w) * static_cast<std::size_t>(h), 0), label(std::move(name)) {
  if (w <= 0 || h <= 0) {
    throw Error(ErrorCode::kInvalidParams, "mask dimensions must be positive");
  }
}

std::size_t InstanceMask::count() const {
  return static_cast<std::size_t>(std::count_if(values.begin(), values.end(), [](std::uint8_t v) { return v != 0; }));
}

FlowField::FlowField(int w, int h, double u0, double v0)
    : width(w),
      height(h),
      u(static_cast<std::size_t>(w) * static_cast<std::size_t>(h), u0),
      v(static_cast<std::size_t>(w) * static_cast<std::size_t>(h), v0) {
  if (w <= 0 || h <= 0) {
    throw Error(ErrorCode::kInvalidParams, "flow dimensions must be positive");
  }
}

double guide_value(GuideLevel level) {
  switch (level) {
    case GuideLevel::kHole: return 0.0;
    case GuideLevel::kRendered: return 0.5;
    case GuideLevel::kKeep: return 1.0;
  }
  return 1.0;
}

GuidanceMask::GuidanceMask(int width, int height, GuideLevel fill)
    : width_(width),
      height_(height),
      levels_(static_cast<std::size_t>(width) * static_cast<std::size_t>(height), fill) {
  if (width <= 0 || height <= 0) {
    throw Error(ErrorCode::kInvalidParams, "mask dimensions must be positive");
  }
}

std::array<std::size_t, 3> GuidanceMask::counts() const {
  std::array<std::size_t, 3> c{};
  for (GuideLevel l : levels_) {
    ++c[static_cast<std::size_t>(l)];
  }
  return c;
}

std::string_view to_string(TrainingSetting s) {
  switch (s) {
    case TrainingSetting::kTransformSource: return "TS";
    case TrainingSetting::kTransformTarget: return "TT";
    case TrainingSetting::kMagicFixup: return "MF";
  }
  return "TS";
}

TrainingSetting parse_training_setting(std::string_view s) {
  if (s == "TS") return TrainingSetting::kTransformSource;
  if (s == "TT") return TrainingSetting::kTransformTarget;
  if (s == "MF") return TrainingSetting::kMagicFixup;
  throw Error(ErrorCode::kParseError, "unknown training setting '" + std::string(s) + "'");
}

namespace {

double mean_flow_magnitude(const FlowField& f) {
  if (f.u.empty() || f.u.size() != f.v.size()) {
    throw Error(ErrorCode::kDimensionMismatch, "flow field has inconsistent planes");
  }
  double sum = 0.0;
  for (std::size_t i = 0; i < f.u.size(); ++i) {
    sum += std::hypot(f.u[i], f.v[i]);
  }
  return sum / static_cast<double>(f.u.size());
}

template <typename A, typename B>
void require_same_dims(const A& a, const B& b, const char* what) {
  if (a.width != b.width || a.height != b.height) {
    throw Error(ErrorCode::kDimensionMismatch, what);
  }
}

struct Dims {
  int width;
  int height;
};

Dims dims(const Image& i) { return {i.width(), i.height()}; }
Dims dims(const InstanceMask& m) { return {m.width, m.height}; }
Dims dims(const FlowField& f) { return {f.width, f.height}; }
Dims dims(const GuidanceMask& m) { return {m.width(), m.height()}; }

template <typename First, typename... Rest>
void require_equal_dims(const char* what, const First& first, const Rest&... rest) {
  const Dims d = dims(first);
  for (const Dims& o : {dims(rest)...}) {
    if (o.width != d.width || o.height != d.height) {
      throw Error(ErrorCode::kDimensionMismatch, what);
    }
  }
}

}  // namespace

double accumulate_flow(std::span<const FlowField> flows) {
  if (flows.empty()) {
    throw Error(ErrorCode::kEmptyInput, "no flow fields to accumulate");
  }
  double total = 0.0;
  for (const auto& f : flows) {
    total += mean_flow_magnitude(f);
  }
  return total;
}

std::optional<FramePair> select_frame_pair(std::span<const FlowField> flows, double threshold,
                                           std::uint64_t seed) {
  if (!(threshold > 0.0)) {
    throw Error(ErrorCode::kInvalidParams, "flow threshold must be positive");
  }
  if (accumulate_flow(flows) < threshold) {
    return std::nullopt;
  }
  std::vector<double> means;
  means.reserve(flows.size());
  for (const auto& f : flows) {
    means.push_back(mean_flow_magnitude(f));
  }
  const int frames = static_cast<int>(flows.size()) + 1;
  std::vector<FramePair> eligible;
  for (int i = 0; i < frames; ++i) {
    double acc = 0.0;
    for (int j = i + 1; j < frames; ++j) {
      acc += means[static_cast<std::size_t>(j - 1)];
      if (acc >= threshold / 2.0) {
        eligible.push_back({i, j});
      }
    }
  }
  // (0, frames - 1) always qualifies once the clip passed the gate.
  Rng rng(seed);
  return eligible[rng.uniform_index(eligible.size())];
}

InstanceScore instance_score(const InstanceMask& mask) {
  if (mask.width < 2 || mask.height < 2 || mask.values.size() != static_cast<std::size_t>(mask.width) * mask.height) {
    throw Error(ErrorCode::kInvalidParams, "instance mask must be at least 2x2");
  }
  const std::size_t border_pixels = 2 * static_cast<std::size_t>(mask.width) + 2 * static_cast<std::size_t>(mask.height) - 4;
  std::size_t border_inst = 0;
  std::size_t inst = 0;
  for (int y = 0; y < mask.height; ++y) {
    for (int x = 0; x < mask.width; ++x) {
      if (!mask.at(x, y)) {
        continue;
      }
      ++inst;
      if (x == 0 || y == 0 || x == mask.width - 1 || y == mask.height - 1) {
        ++border_inst;
      }
    }
  }
  InstanceScore s;
  s.border = 1.0 - static_cast<double>(border_inst) / static_cast<double>(border_pixels);
  s.area = static_cast<double>(inst) / static_cast<double>(mask.values.size());
  s.total = 0.6 * s.border + 0.4 * s.area;
  return s;
}

std::size_t select_main_instance(std::span<const InstanceMask> masks) {
  if (masks.empty()) {
    throw Error(ErrorCode::kEmptyInput, "no instance masks");
  }
  std::size_t best = 0;
  double best_score = instance_score(masks[0]).total;
  for (std::size_t i = 1; i < masks.size(); ++i) {
    const double s = instance_score(masks[i]).total;
    if (s > best_score) {
      best_score = s;
      best = i;
    }
  }
  return best;
}

Guidance build_guidance_ts(const Image& render_rgb, const InstanceMask& render_mask, const Image& target,
                           const InstanceMask& target_mask) {
  require_equal_dims("TS guidance inputs differ in size", render_rgb, render_mask, target, target_mask);
  Guidance g{target, GuidanceMask(target.width(), target.height())};
  for (int y = 0; y < target.height(); ++y) {
    for (int x = 0; x < target.width(); ++x) {
      if (render_mask.at(x, y)) {
        g.image.set(x, y, render_rgb.at(x, y));
        g.mask.set(x, y, GuideLevel::kRendered);
      } else if (target_mask.at(x, y)) {
        g.image.set(x, y, kHoleColor);
        g.mask.set(x, y, GuideLevel::kHole);
      }
    }
  }
  return g;
}

WarpResult warp_background(const Image& source, const FlowField& flow, const InstanceMask& source_mask) {
  require_equal_dims("warp inputs differ in size", source, flow, source_mask);
  const int w = source.width();
  const int h = source.height();
  const std::size_t n = static_cast<std::size_t>(w) * static_cast<std::size_t>(h);

  WarpResult out{Image(w, h, kHoleColor), std::vector<std::uint8_t>(n, 1), std::vector<std::int32_t>(n, -1)};
  std::vector<double> winner_magnitude(n, -1.0);

  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      if (source_mask.at(x, y)) {
        continue;
      }
      const std::size_t s = flow.offset(x, y);
      const double u = flow.u[s];
      const double v = flow.v[s];
      const double dx = std::floor(x + u + 0.5);
      const double dy = std::floor(y + v + 0.5);
      if (!(dx >= 0.0 && dx < w && dy >= 0.0 && dy < h)) {
        continue;
      }
      const int tx = static_cast<int>(dx);
      const int ty = static_cast<int>(dy);
      const std::size_t d = flow.offset(tx, ty);
      const double m = std::hypot(u, v);
      if (m > winner_magnitude[d]) {
        winner_magnitude[d] = m;
        out.source_index[d] = static_cast<std::int32_t>(s);
        out.hole[d] = 0;
        out.image.set(tx, ty, source.at(x, y));
      }
    }
  }
  return out;
}

Guidance build_guidance_tt(const Image& render_rgb, const InstanceMask& render_mask, const Image& source,
                           const InstanceMask& source_mask, const FlowField& flow) {
  require_equal_dims("TT guidance inputs differ in size", render_rgb, render_mask, source, source_mask, flow);
  const WarpResult warped = warp_background(source, flow, source_mask);
  Guidance g{warped.image, GuidanceMask(source.width(), source.height())};
  for (int y = 0; y < source.height(); ++y) {
    for (int x = 0; x < source.width(); ++x) {
      if (render_mask.at(x, y)) {
        g.image.set(x, y, render_rgb.at(x, y));
        g.mask.set(x, y, GuideLevel::kRendered);
      } else if (warped.hole[flow.offset(x, y)]) {
        g.mask.set(x, y, GuideLevel::kHole);
      }
    }
  }
  return g;
}

FlowField compose_flows(std::span<const FlowField> flows, int from, int to) {
  if (from < 0 || to > static_cast<int>(flows.size()) || from >= to) {
    throw Error(ErrorCode::kInvalidParams, "invalid frame range for flow composition");
  }
  const FlowField& first = flows[static_cast<std::size_t>(from)];
  FlowField out(first.width, first.height);
  for (int y = 0; y < first.height; ++y) {
    for (int x = 0; x < first.width; ++x) {
      double px = x;
      double py = y;
      for (int f = from; f < to; ++f) {
        const FlowField& field = flows[static_cast<std::size_t>(f)];
        require_same_dims(field, first, "flow fields differ in size");
        const double sx = std::floor(px + 0.5);
        const double sy = std::floor(py + 0.5);
        if (!(sx >= 0.0 && sx < field.width && sy >= 0.0 && sy < field.height)) {
          break;
        }
        const std::size_t i = field.offset(static_cast<int>(sx), static_cast<int>(sy));
        px += field.u[i];
        py += field.v[i];
      }
      const std::size_t o = out.offset(x, y);
      out.u[o] = px - x;
      out.v[o] = py - y;
    }
  }
  return out;
}

void SettingProbabilities::validate() const {
  if (!(transform_source >= 0.0) || !(transform_target >= 0.0) || !(magic_fixup >= 0.0)) {
    throw Error(ErrorCode::kConfigError, "setting probabilities must be non-negative");
  }
  if (std::abs(transform_source + transform_target + magic_fixup - 1.0) > 1e-9) {
    throw Error(ErrorCode::kConfigError, "setting probabilities must sum to 1");
  }
}

TrainingSetting sample_training_setting(Rng& rng, const SettingProbabilities& probs) {
  const double u = rng.uniform();
  if (u < probs.transform_source) {
    return TrainingSetting::kTransformSource;
  }
  if (u < probs.transform_source + probs.transform_target) {
    return TrainingSetting::kTransformTarget;
  }
  return TrainingSetting::kMagicFixup;
}

bool sample_conditioning_dropout(Rng& rng, double p) { return rng.uniform() < p; }

void check_guidance_partition(const GuidanceTuple& t) {
  require_equal_dims("tuple components differ in size", t.source, t.guide, t.target, t.mask);
  const auto c = t.mask.counts();
  if (c[0] + c[1] + c[2] != static_cast<std::size_t>(t.mask.width()) * static_cast<std::size_t>(t.mask.height())) {
    throw Error(ErrorCode::kDimensionMismatch, "guidance mask is not a trinary partition");
  }
}

}  // namespace guidesynth
