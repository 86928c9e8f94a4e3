#pragma once

// Diffusion process mathematics on generic real-valued H x W x C grids:
// linear alpha schedule, closed-form forward noising, guidance-image
// initialization, detail-feature extraction contract, cross-attention and a
// deterministic (eta = 0) DDIM sampler over a pluggable noise predictor.

#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "guidesynth/geometry_io.hpp"

namespace guidesynth {

enum class LatentRole { kXt, kGuide, kSource, kNoisySource, kEpsilon, kMask };

class LatentImage {
 public:
  LatentImage() = default;
  LatentImage(int height, int width, int channels, LatentRole role = LatentRole::kXt, double fill = 0.0);

  int height() const { return height_; }
  int width() const { return width_; }
  int channels() const { return channels_; }
  LatentRole role() const { return role_; }
  void set_role(LatentRole r) { role_ = r; }

  double& at(int y, int x, int c) { return data_[index(y, x, c)]; }
  double at(int y, int x, int c) const { return data_[index(y, x, c)]; }

  std::span<double> values() { return data_; }
  std::span<const double> values() const { return data_; }

  bool same_shape(const LatentImage& o) const {
    return height_ == o.height_ && width_ == o.width_ && channels_ == o.channels_;
  }

  bool operator==(const LatentImage&) const = default;

 private:
  std::size_t index(int y, int x, int c) const {
    return (static_cast<std::size_t>(y) * static_cast<std::size_t>(width_) + static_cast<std::size_t>(x)) *
               static_cast<std::size_t>(channels_) +
           static_cast<std::size_t>(c);
  }

  int height_ = 0;
  int width_ = 0;
  int channels_ = 0;
  LatentRole role_ = LatentRole::kXt;
  std::vector<double> data_;
};

// LatentImage files use the D3FX container with one plane per channel. Values
// are stored as f32.
PlanarGrid latent_to_grid(const LatentImage& img);
LatentImage grid_to_latent(const PlanarGrid& grid, LatentRole role = LatentRole::kXt);
void write_latent(const std::filesystem::path& path, const LatentImage& img);
LatentImage read_latent(const std::filesystem::path& path, LatentRole role = LatentRole::kXt);

// alpha_t and alpha_bar_t = prod_{s <= t} alpha_s for t in [1, T];
// alpha_bar(0) is 1.
class NoiseSchedule {
 public:
  NoiseSchedule(std::vector<double> alpha);

  int steps() const { return static_cast<int>(alpha_.size()); }
  double alpha(int t) const;
  double alpha_bar(int t) const;

  const std::vector<double>& alphas() const { return alpha_; }
  const std::vector<double>& alpha_bars() const { return alpha_bar_; }

 private:
  std::vector<double> alpha_;
  std::vector<double> alpha_bar_;
};

inline constexpr int kDefaultScheduleSteps = 1000;
inline constexpr double kDefaultAlphaFirst = 0.9999;
inline constexpr double kDefaultAlphaLast = 0.98;

// alpha_t interpolated linearly from a1 (t = 1) to aT (t = T). Throws
// kInvalidRange unless 0 < aT <= a1 <= 1 and T >= 2.
NoiseSchedule linear_alpha_schedule(int steps, double a1, double a_last);
NoiseSchedule default_schedule();

// "t alpha alpha_bar" per line, shortest round-trip decimals.
std::string format_schedule(const NoiseSchedule& s);

// sqrt(alpha_bar_t) * x0 + sqrt(1 - alpha_bar_t) * eps. Throws kShapeMismatch
// and kInvalidRange (t outside [1, T]).
LatentImage forward_diffuse(const LatentImage& x0, int t, const LatentImage& eps, const NoiseSchedule& s);

// x_T from the guidance image.
LatentImage init_from_guidance(const LatentImage& guide, const NoiseSchedule& s, const LatentImage& eps);

// I_t from the source image.
LatentImage noisy_source(const LatentImage& source, int t, const LatentImage& eps, const NoiseSchedule& s);

// Per attention block token matrices, block i of shape tokens_i x d_i.
struct FeatureStack {
  std::vector<Eigen::MatrixXd> blocks;

  std::size_t size() const { return blocks.size(); }
};

class FeatureExtractor {
 public:
  virtual ~FeatureExtractor() = default;
  // Feature width d_i of every block; the block count n is its size.
  virtual std::vector<int> block_dims() const = 0;
  virtual FeatureStack extract(const LatentImage& stacked, int t) const = 0;
};

// Concatenates (I_t, I_src, M_guide) along channels and runs the extractor.
// Throws kShapeMismatch on spatial mismatch and kBlockCountMismatch when the
// output disagrees with the extractor's declared blocks.
FeatureStack extract_detail_features(const LatentImage& noisy_src, const LatentImage& source,
                                     const LatentImage& guide_mask, int t, const FeatureExtractor& extractor);

// Channel concatenation of equally sized grids.
LatentImage concat_channels(std::span<const LatentImage* const> parts);

// Row-wise softmax(Q K^T / sqrt(d)) with row-max subtraction.
Eigen::MatrixXd attention_weights(const Eigen::MatrixXd& q, const Eigen::MatrixXd& k);
Eigen::MatrixXd scaled_dot_attention(const Eigen::MatrixXd& q, const Eigen::MatrixXd& k, const Eigen::MatrixXd& v);

// Fixed query/key/value maps for one attention block.
struct AttentionProjection {
  Eigen::MatrixXd query;  // d_gen x d
  Eigen::MatrixXd key;    // d_detail x d
  Eigen::MatrixXd value;  // d_detail x d_v
};

// Block-wise attention with queries from the generator features and keys and
// values from the detail features. Without projections the features are used
// directly.
FeatureStack cross_attend(const FeatureStack& generator, const FeatureStack& detail,
                          std::span<const AttentionProjection> projections = {});

class NoisePredictor {
 public:
  virtual ~NoisePredictor() = default;
  virtual LatentImage predict(const LatentImage& x_t, const LatentImage& guide, const LatentImage& guide_mask,
                              const FeatureStack& features, int t) const = 0;
};

struct DdimConfig {
  int num_steps = 100;
  double eta = 0.0;  // only the deterministic sampler is implemented
};

// One eta = 0 DDIM update from t to t_prev (t_prev may be 0).
LatentImage ddim_step(const LatentImage& x_t, const LatentImage& eps_hat, int t, int t_prev,
                      const NoiseSchedule& s);

// Descending timesteps T = t_0 > ... > t_{n-1} = 1 on a uniform stride
// (just {T} for a single step). Sampling walks these and finishes at 0.
std::vector<int> ddim_timesteps(int total_steps, int num_steps);

// Source of the per-step detail features: I_t is re-noised from `source`
// with the fixed `noise` at every visited timestep.
struct DetailSource {
  const LatentImage& source;
  const FeatureExtractor& extractor;
  const LatentImage& noise;
};

LatentImage ddim_sample(const NoisePredictor& predictor, const LatentImage& x_T, const LatentImage& guide,
                        const LatentImage& guide_mask, const DetailSource* detail, const DdimConfig& cfg,
                        const NoiseSchedule& s);

}  // namespace guidesynth
