#include "guidesynth/diffusion_fixtures.hpp"

#include <cmath>

#include "guidesynth/error.hpp"
#include "guidesynth/rng.hpp"

namespace guidesynth {

LatentImage OraclePredictor::predict(const LatentImage& x_t, const LatentImage&, const LatentImage&,
                                     const FeatureStack&, int t) const {
  if (!x_t.same_shape(clean_)) {
    throw Error(ErrorCode::kShapeMismatch, "oracle clean sample differs in shape");
  }
  const double ab = schedule_.alpha_bar(t);
  const double a = std::sqrt(ab);
  const double b = std::sqrt(1.0 - ab);
  LatentImage eps(x_t.height(), x_t.width(), x_t.channels(), LatentRole::kEpsilon);
  auto e = eps.values();
  auto x = x_t.values();
  auto c = clean_.values();
  for (std::size_t i = 0; i < e.size(); ++i) {
    e[i] = (x[i] - a * c[i]) / b;
  }
  return eps;
}

LatentImage ZeroPredictor::predict(const LatentImage& x_t, const LatentImage&, const LatentImage&,
                                   const FeatureStack&, int) const {
  return LatentImage(x_t.height(), x_t.width(), x_t.channels(), LatentRole::kEpsilon, 0.0);
}

PatchExtractor::PatchExtractor(std::vector<int> patch_sizes, int channels)
    : patch_sizes_(std::move(patch_sizes)), channels_(channels) {
  if (patch_sizes_.empty() || channels_ <= 0) {
    throw Error(ErrorCode::kInvalidParams, "patch extractor needs blocks and channels");
  }
}

std::vector<int> PatchExtractor::block_dims() const {
  std::vector<int> dims;
  for (int p : patch_sizes_) {
    dims.push_back(p * p * channels_);
  }
  return dims;
}

FeatureStack PatchExtractor::extract(const LatentImage& stacked, int) const {
  if (stacked.channels() != channels_) {
    throw Error(ErrorCode::kShapeMismatch, "patch extractor channel count differs");
  }
  FeatureStack out;
  for (int p : patch_sizes_) {
    if (stacked.height() % p != 0 || stacked.width() % p != 0) {
      throw Error(ErrorCode::kShapeMismatch, "image sides must be multiples of the patch size");
    }
    const int rows = stacked.height() / p;
    const int cols = stacked.width() / p;
    Eigen::MatrixXd block(rows * cols, p * p * channels_);
    for (int ty = 0; ty < rows; ++ty) {
      for (int tx = 0; tx < cols; ++tx) {
        int col = 0;
        for (int y = 0; y < p; ++y) {
          for (int x = 0; x < p; ++x) {
            for (int c = 0; c < channels_; ++c) {
              block(ty * cols + tx, col++) = stacked.at(ty * p + y, tx * p + x, c);
            }
          }
        }
      }
    }
    out.blocks.push_back(std::move(block));
  }
  return out;
}

RandomLinearExtractor::RandomLinearExtractor(int channels, std::vector<int> dims, std::uint64_t seed) {
  for (std::size_t i = 0; i < dims.size(); ++i) {
    maps_.push_back(random_gaussian_matrix(channels, dims[i], mix_seed(seed + i)));
  }
}

std::vector<int> RandomLinearExtractor::block_dims() const {
  std::vector<int> dims;
  for (const auto& m : maps_) {
    dims.push_back(static_cast<int>(m.cols()));
  }
  return dims;
}

FeatureStack RandomLinearExtractor::extract(const LatentImage& stacked, int) const {
  const int pixels = stacked.height() * stacked.width();
  Eigen::MatrixXd tokens(pixels, stacked.channels());
  for (int y = 0; y < stacked.height(); ++y) {
    for (int x = 0; x < stacked.width(); ++x) {
      for (int c = 0; c < stacked.channels(); ++c) {
        tokens(y * stacked.width() + x, c) = stacked.at(y, x, c);
      }
    }
  }
  FeatureStack out;
  for (const auto& m : maps_) {
    if (m.rows() != tokens.cols()) {
      throw Error(ErrorCode::kShapeMismatch, "linear extractor channel count differs");
    }
    out.blocks.push_back(tokens * m);
  }
  return out;
}

Eigen::MatrixXd random_gaussian_matrix(int rows, int cols, std::uint64_t seed) {
  Rng rng(seed);
  Eigen::MatrixXd m(rows, cols);
  for (int r = 0; r < rows; ++r) {
    for (int c = 0; c < cols; ++c) {
      m(r, c) = rng.normal();
    }
  }
  return m;
}

LatentImage random_latent(int height, int width, int channels, std::uint64_t seed, LatentRole role) {
  Rng rng(seed);
  LatentImage out(height, width, channels, role);
  for (double& v : out.values()) {
    v = rng.normal();
  }
  return out;
}

}  // namespace guidesynth
