#pragma once

// Learning-free predictors and extractors used by tests, benchmarks and the
// ddim-demo command.

#include <cstdint>
#include <vector>

#include "guidesynth/diffusion.hpp"

namespace guidesynth {

// Returns the exact noise that maps a known clean sample to x_t:
// eps = (x_t - sqrt(alpha_bar_t) x0) / sqrt(1 - alpha_bar_t).
class OraclePredictor final : public NoisePredictor {
 public:
  OraclePredictor(LatentImage clean, const NoiseSchedule& schedule) : clean_(std::move(clean)), schedule_(schedule) {}

  LatentImage predict(const LatentImage& x_t, const LatentImage& guide, const LatentImage& guide_mask,
                      const FeatureStack& features, int t) const override;

 private:
  LatentImage clean_;
  const NoiseSchedule& schedule_;
};

class ZeroPredictor final : public NoisePredictor {
 public:
  LatentImage predict(const LatentImage& x_t, const LatentImage& guide, const LatentImage& guide_mask,
                      const FeatureStack& features, int t) const override;
};

// Block i splits the input into non-overlapping patch_i x patch_i tiles and
// emits one token per tile: the tile's values in (row, column, channel) order.
// Image sides must be multiples of every patch size.
class PatchExtractor final : public FeatureExtractor {
 public:
  PatchExtractor(std::vector<int> patch_sizes, int channels);

  std::vector<int> block_dims() const override;
  FeatureStack extract(const LatentImage& stacked, int t) const override;

 private:
  std::vector<int> patch_sizes_;
  int channels_;
};

// Block i maps every pixel's channel vector through a fixed Gaussian matrix
// (channels x d_i) drawn from `seed`; one token per pixel.
class RandomLinearExtractor final : public FeatureExtractor {
 public:
  RandomLinearExtractor(int channels, std::vector<int> dims, std::uint64_t seed);

  std::vector<int> block_dims() const override;
  FeatureStack extract(const LatentImage& stacked, int t) const override;

 private:
  std::vector<Eigen::MatrixXd> maps_;
};

Eigen::MatrixXd random_gaussian_matrix(int rows, int cols, std::uint64_t seed);
LatentImage random_latent(int height, int width, int channels, std::uint64_t seed,
                          LatentRole role = LatentRole::kXt);

}  // namespace guidesynth
