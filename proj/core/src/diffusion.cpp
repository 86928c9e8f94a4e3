#include "guidesynth/diffusion.hpp"

#include <array>
#include <cmath>
#include <cstdio>

#include "guidesynth/error.hpp"
#include "guidesynth/text_format.hpp"

namespace guidesynth {

LatentImage::LatentImage(int height, int width, int channels, LatentRole role, double fill)
    : height_(height), width_(width), channels_(channels), role_(role) {
  if (height <= 0 || width <= 0 || channels <= 0) {
    throw Error(ErrorCode::kShapeMismatch, "latent dimensions must be positive");
  }
  data_.assign(static_cast<std::size_t>(height) * static_cast<std::size_t>(width) * static_cast<std::size_t>(channels),
               fill);
}

PlanarGrid latent_to_grid(const LatentImage& img) {
  PlanarGrid g{img.width(), img.height(), img.channels(), {}};
  g.values.reserve(img.values().size());
  for (int c = 0; c < img.channels(); ++c) {
    for (int y = 0; y < img.height(); ++y) {
      for (int x = 0; x < img.width(); ++x) {
        g.values.push_back(static_cast<float>(img.at(y, x, c)));
      }
    }
  }
  return g;
}

LatentImage grid_to_latent(const PlanarGrid& grid, LatentRole role) {
  LatentImage img(grid.height, grid.width, grid.planes, role);
  for (int c = 0; c < grid.planes; ++c) {
    for (int y = 0; y < grid.height; ++y) {
      for (int x = 0; x < grid.width; ++x) {
        const float v = grid.at(c, x, y);
        if (!std::isfinite(v)) {
          throw Error(ErrorCode::kParseError, "latent grid holds a non-finite value");
        }
        img.at(y, x, c) = v;
      }
    }
  }
  return img;
}

void write_latent(const std::filesystem::path& path, const LatentImage& img) {
  write_d3fx(path, latent_to_grid(img));
}

LatentImage read_latent(const std::filesystem::path& path, LatentRole role) {
  return grid_to_latent(read_d3fx(path), role);
}

NoiseSchedule::NoiseSchedule(std::vector<double> alpha) : alpha_(std::move(alpha)) {
  if (alpha_.empty()) {
    throw Error(ErrorCode::kInvalidRange, "schedule needs at least one step");
  }
  alpha_bar_.reserve(alpha_.size());
  double prod = 1.0;
  for (double a : alpha_) {
    if (!(a > 0.0 && a <= 1.0)) {
      throw Error(ErrorCode::kInvalidRange, "alpha values must lie in (0, 1]");
    }
    prod *= a;
    alpha_bar_.push_back(prod);
  }
}

double NoiseSchedule::alpha(int t) const {
  if (t < 1 || t > steps()) {
    throw Error(ErrorCode::kInvalidRange, "timestep " + std::to_string(t) + " outside [1, T]");
  }
  return alpha_[static_cast<std::size_t>(t - 1)];
}

double NoiseSchedule::alpha_bar(int t) const {
  if (t == 0) {
    return 1.0;
  }
  if (t < 0 || t > steps()) {
    throw Error(ErrorCode::kInvalidRange, "timestep " + std::to_string(t) + " outside [0, T]");
  }
  return alpha_bar_[static_cast<std::size_t>(t - 1)];
}

NoiseSchedule linear_alpha_schedule(int steps, double a1, double a_last) {
  if (steps < 2 || !(a_last > 0.0) || !(a_last <= a1) || !(a1 <= 1.0)) {
    throw Error(ErrorCode::kInvalidRange, "need T >= 2 and 0 < aT <= a1 <= 1");
  }
  std::vector<double> alpha(static_cast<std::size_t>(steps));
  for (int t = 1; t <= steps; ++t) {
    const double w = static_cast<double>(t - 1) / static_cast<double>(steps - 1);
    // std::lerp is exact at both ends.
    alpha[static_cast<std::size_t>(t - 1)] = std::lerp(a1, a_last, w);
  }
  return NoiseSchedule(std::move(alpha));
}

NoiseSchedule default_schedule() {
  return linear_alpha_schedule(kDefaultScheduleSteps, kDefaultAlphaFirst, kDefaultAlphaLast);
}

std::string format_schedule(const NoiseSchedule& s) {
  std::string out;
  for (int t = 1; t <= s.steps(); ++t) {
    out += std::to_string(t) + " " + format_double(s.alpha(t)) + " " + format_double(s.alpha_bar(t)) + "\n";
  }
  return out;
}

namespace {

void require_same_shape(const LatentImage& a, const LatentImage& b, const char* what) {
  if (!a.same_shape(b)) {
    throw Error(ErrorCode::kShapeMismatch, what);
  }
}

// a * x + b * y elementwise.
LatentImage axpby(double a, const LatentImage& x, double b, const LatentImage& y, LatentRole role) {
  LatentImage out(x.height(), x.width(), x.channels(), role);
  auto o = out.values();
  auto xs = x.values();
  auto ys = y.values();
  for (std::size_t i = 0; i < o.size(); ++i) {
    o[i] = a * xs[i] + b * ys[i];
  }
  return out;
}

}  // namespace

LatentImage forward_diffuse(const LatentImage& x0, int t, const LatentImage& eps, const NoiseSchedule& s) {
  require_same_shape(x0, eps, "x0 and eps differ in shape");
  if (t < 1 || t > s.steps()) {
    throw Error(ErrorCode::kInvalidRange, "timestep outside [1, T]");
  }
  const double ab = s.alpha_bar(t);
  return axpby(std::sqrt(ab), x0, std::sqrt(1.0 - ab), eps, LatentRole::kXt);
}

LatentImage init_from_guidance(const LatentImage& guide, const NoiseSchedule& s, const LatentImage& eps) {
  LatentImage x = forward_diffuse(guide, s.steps(), eps, s);
  x.set_role(LatentRole::kXt);
  return x;
}

LatentImage noisy_source(const LatentImage& source, int t, const LatentImage& eps, const NoiseSchedule& s) {
  LatentImage x = forward_diffuse(source, t, eps, s);
  x.set_role(LatentRole::kNoisySource);
  return x;
}

LatentImage concat_channels(std::span<const LatentImage* const> parts) {
  if (parts.empty()) {
    throw Error(ErrorCode::kShapeMismatch, "nothing to concatenate");
  }
  const int h = parts.front()->height();
  const int w = parts.front()->width();
  int channels = 0;
  for (const LatentImage* p : parts) {
    if (p->height() != h || p->width() != w) {
      throw Error(ErrorCode::kShapeMismatch, "spatial dimensions differ");
    }
    channels += p->channels();
  }
  LatentImage out(h, w, channels, LatentRole::kXt);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      int c_out = 0;
      for (const LatentImage* p : parts) {
        for (int c = 0; c < p->channels(); ++c) {
          out.at(y, x, c_out++) = p->at(y, x, c);
        }
      }
    }
  }
  return out;
}

FeatureStack extract_detail_features(const LatentImage& noisy_src, const LatentImage& source,
                                     const LatentImage& guide_mask, int t, const FeatureExtractor& extractor) {
  const std::array<const LatentImage*, 3> parts = {&noisy_src, &source, &guide_mask};
  const LatentImage stacked = concat_channels(parts);
  const std::vector<int> dims = extractor.block_dims();
  FeatureStack f = extractor.extract(stacked, t);
  if (f.size() != dims.size()) {
    throw Error(ErrorCode::kBlockCountMismatch, "extractor returned " + std::to_string(f.size()) +
                                                    " blocks, declared " + std::to_string(dims.size()));
  }
  for (std::size_t i = 0; i < dims.size(); ++i) {
    if (f.blocks[i].cols() != dims[i]) {
      throw Error(ErrorCode::kBlockCountMismatch, "block " + std::to_string(i) + " width differs from declaration");
    }
  }
  return f;
}

Eigen::MatrixXd attention_weights(const Eigen::MatrixXd& q, const Eigen::MatrixXd& k) {
  if (q.cols() != k.cols() || q.cols() == 0 || k.rows() == 0) {
    throw Error(ErrorCode::kShapeMismatch, "query and key widths differ or are empty");
  }
  Eigen::MatrixXd logits = (q * k.transpose()) / std::sqrt(static_cast<double>(q.cols()));
  for (Eigen::Index r = 0; r < logits.rows(); ++r) {
    const double m = logits.row(r).maxCoeff();
    logits.row(r) = (logits.row(r).array() - m).exp().matrix();
    logits.row(r) /= logits.row(r).sum();
  }
  return logits;
}

Eigen::MatrixXd scaled_dot_attention(const Eigen::MatrixXd& q, const Eigen::MatrixXd& k, const Eigen::MatrixXd& v) {
  if (k.rows() != v.rows()) {
    throw Error(ErrorCode::kShapeMismatch, "key and value token counts differ");
  }
  return attention_weights(q, k) * v;
}

FeatureStack cross_attend(const FeatureStack& generator, const FeatureStack& detail,
                          std::span<const AttentionProjection> projections) {
  if (generator.size() != detail.size() || generator.size() == 0) {
    throw Error(ErrorCode::kBlockCountMismatch, "generator and detail block counts differ");
  }
  if (!projections.empty() && projections.size() != generator.size()) {
    throw Error(ErrorCode::kBlockCountMismatch, "one projection per block required");
  }
  FeatureStack out;
  out.blocks.reserve(generator.size());
  for (std::size_t i = 0; i < generator.size(); ++i) {
    const Eigen::MatrixXd& g = generator.blocks[i];
    const Eigen::MatrixXd& f = detail.blocks[i];
    if (projections.empty()) {
      out.blocks.push_back(scaled_dot_attention(g, f, f));
      continue;
    }
    const AttentionProjection& p = projections[i];
    if (g.cols() != p.query.rows() || f.cols() != p.key.rows() || f.cols() != p.value.rows() ||
        p.query.cols() != p.key.cols()) {
      throw Error(ErrorCode::kShapeMismatch, "projection shapes do not match block " + std::to_string(i));
    }
    out.blocks.push_back(scaled_dot_attention(g * p.query, f * p.key, f * p.value));
  }
  return out;
}

LatentImage ddim_step(const LatentImage& x_t, const LatentImage& eps_hat, int t, int t_prev,
                      const NoiseSchedule& s) {
  require_same_shape(x_t, eps_hat, "x_t and eps_hat differ in shape");
  if (!(t > t_prev) || t_prev < 0) {
    throw Error(ErrorCode::kBadTimestepOrder,
                "need t > t_prev >= 0, got t=" + std::to_string(t) + " t_prev=" + std::to_string(t_prev));
  }
  if (t > s.steps()) {
    throw Error(ErrorCode::kInvalidRange, "timestep beyond the schedule");
  }
  const double ab_t = s.alpha_bar(t);
  const double ab_prev = s.alpha_bar(t_prev);
  const double sqrt_ab_t = std::sqrt(ab_t);
  const double sigma_t = std::sqrt(1.0 - ab_t);
  const double sqrt_ab_prev = std::sqrt(ab_prev);
  const double sigma_prev = std::sqrt(1.0 - ab_prev);

  LatentImage out(x_t.height(), x_t.width(), x_t.channels(), LatentRole::kXt);
  auto o = out.values();
  auto x = x_t.values();
  auto e = eps_hat.values();
  for (std::size_t i = 0; i < o.size(); ++i) {
    const double x0_hat = (x[i] - sigma_t * e[i]) / sqrt_ab_t;
    o[i] = t_prev == 0 ? x0_hat : sqrt_ab_prev * x0_hat + sigma_prev * e[i];
  }
  return out;
}

std::vector<int> ddim_timesteps(int total_steps, int num_steps) {
  if (num_steps < 1 || num_steps > total_steps) {
    throw Error(ErrorCode::kInvalidRange, "DDIM step count must be in [1, T]");
  }
  if (num_steps == 1) {
    return {total_steps};
  }
  std::vector<int> ts;
  ts.reserve(static_cast<std::size_t>(num_steps));
  const long long span = total_steps - 1;
  const long long denom = num_steps - 1;
  for (long long k = 0; k < num_steps; ++k) {
    // round(k * span / denom) in integer arithmetic
    ts.push_back(total_steps - static_cast<int>((2 * k * span + denom) / (2 * denom)));
  }
  return ts;
}

LatentImage ddim_sample(const NoisePredictor& predictor, const LatentImage& x_T, const LatentImage& guide,
                        const LatentImage& guide_mask, const DetailSource* detail, const DdimConfig& cfg,
                        const NoiseSchedule& s) {
  if (cfg.eta != 0.0) {
    throw Error(ErrorCode::kInvalidRange, "only eta = 0 sampling is supported");
  }
  const std::vector<int> ts = ddim_timesteps(s.steps(), cfg.num_steps);
  LatentImage x = x_T;
  for (std::size_t i = 0; i < ts.size(); ++i) {
    const int t = ts[i];
    const int t_prev = i + 1 < ts.size() ? ts[i + 1] : 0;
    FeatureStack features;
    if (detail != nullptr) {
      const LatentImage i_t = noisy_source(detail->source, t, detail->noise, s);
      features = extract_detail_features(i_t, detail->source, guide_mask, t, detail->extractor);
    }
    const LatentImage eps_hat = predictor.predict(x, guide, guide_mask, features, t);
    x = ddim_step(x, eps_hat, t, t_prev, s);
  }
  return x;
}

}  // namespace guidesynth
