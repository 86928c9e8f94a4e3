#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include <boost/multiprecision/cpp_dec_float.hpp>

#include "guidesynth/diffusion.hpp"
#include "guidesynth/diffusion_fixtures.hpp"
#include "guidesynth/error.hpp"
#include "guidesynth/rng.hpp"
#include "test_util.hpp"

using namespace guidesynth;
using Big = boost::multiprecision::cpp_dec_float_50;

namespace {

double max_abs_diff(const LatentImage& a, const LatentImage& b) {
  double m = 0.0;
  auto x = a.values();
  auto y = b.values();
  for (std::size_t i = 0; i < x.size(); ++i) m = std::max(m, std::abs(x[i] - y[i]));
  return m;
}

// alpha_bar by direct product in 50 digits, alphas interpolated in the same
// precision from decimal endpoints.
std::vector<Big> big_alpha_bars(int T, const char* a1, const char* aT) {
  const Big first(a1), last(aT);
  std::vector<Big> out;
  Big prod = 1;
  for (int t = 1; t <= T; ++t) {
    const Big a = first + (last - first) * Big(t - 1) / Big(T - 1);
    prod *= a;
    out.push_back(prod);
  }
  return out;
}

class LyingExtractor final : public FeatureExtractor {
 public:
  std::vector<int> block_dims() const override { return {3, 3}; }
  FeatureStack extract(const LatentImage&, int) const override {
    FeatureStack f;
    f.blocks.push_back(Eigen::MatrixXd::Zero(2, 3));
    return f;
  }
};

Eigen::MatrixXd random_matrix(int r, int c, std::mt19937_64& g) {
  std::normal_distribution<double> n;
  Eigen::MatrixXd m(r, c);
  for (int i = 0; i < r; ++i)
    for (int j = 0; j < c; ++j) m(i, j) = n(g);
  return m;
}

}  // namespace

TEST(Schedule, Endpoints) {
  const NoiseSchedule s = default_schedule();
  ASSERT_EQ(s.steps(), 1000);
  EXPECT_EQ(s.alpha(1), 0.9999);
  EXPECT_EQ(s.alpha(1000), 0.98);
  EXPECT_EQ(s.alpha_bar(0), 1.0);
  EXPECT_EQ(s.alpha_bar(1), 0.9999);
}

TEST(Schedule, AllOnes) {
  const NoiseSchedule s = linear_alpha_schedule(2, 1.0, 1.0);
  EXPECT_EQ(s.alpha_bar(1), 1.0);
  EXPECT_EQ(s.alpha_bar(2), 1.0);
}

TEST(Schedule, RatioAndMonotone) {
  const NoiseSchedule s = default_schedule();
  for (int t = 1; t <= 1000; ++t) {
    EXPECT_NEAR(s.alpha_bar(t) / s.alpha_bar(t - 1), s.alpha(t), 1e-12);
    EXPECT_LT(s.alpha_bar(t), s.alpha_bar(t - 1));
    EXPECT_GT(s.alpha_bar(t), 0.0);
  }
}

TEST(Schedule, HighPrecisionOracle) {
  const NoiseSchedule s = default_schedule();
  const auto big = big_alpha_bars(1000, "0.9999", "0.98");
  for (int t = 1; t <= 1000; ++t) {
    const double ref = big[t - 1].convert_to<double>();
    EXPECT_LE(std::abs(s.alpha_bar(t) - ref) / ref, 1e-12) << "t=" << t;
  }
}

TEST(Schedule, InvalidRange) {
  EXPECT_CODE(linear_alpha_schedule(1, 0.9999, 0.98), ErrorCode::kInvalidRange);
  EXPECT_CODE(linear_alpha_schedule(10, 0.98, 0.9999), ErrorCode::kInvalidRange);
  EXPECT_CODE(linear_alpha_schedule(10, 1.1, 0.98), ErrorCode::kInvalidRange);
  EXPECT_CODE(linear_alpha_schedule(10, 0.9, 0.0), ErrorCode::kInvalidRange);
  EXPECT_CODE(default_schedule().alpha(0), ErrorCode::kInvalidRange);
  EXPECT_CODE(default_schedule().alpha_bar(1001), ErrorCode::kInvalidRange);
}

TEST(Schedule, FormatLines) {
  const NoiseSchedule s = linear_alpha_schedule(3, 0.9, 0.5);
  const std::string text = format_schedule(s);
  EXPECT_EQ(std::count(text.begin(), text.end(), '\n'), 3);
  EXPECT_EQ(text.substr(0, 2), "1 ");
}

TEST(Forward, ZeroNoiseScalesSignal) {
  const NoiseSchedule s = default_schedule();
  const LatentImage x0 = random_latent(4, 5, 3, 11);
  const LatentImage eps(4, 5, 3, LatentRole::kEpsilon, 0.0);
  const LatentImage xt = forward_diffuse(x0, 700, eps, s);
  const double a = std::sqrt(s.alpha_bar(700));
  for (std::size_t i = 0; i < x0.values().size(); ++i) {
    EXPECT_DOUBLE_EQ(xt.values()[i], a * x0.values()[i]);
  }
}

TEST(Forward, FirstStepCoefficients) {
  const NoiseSchedule s = default_schedule();
  const LatentImage x0(1, 1, 1, LatentRole::kXt, 1.0);
  const LatentImage eps(1, 1, 1, LatentRole::kEpsilon, 1.0);
  EXPECT_NEAR(forward_diffuse(x0, 1, eps, s).at(0, 0, 0), std::sqrt(0.9999) + std::sqrt(0.0001), 1e-15);
}

TEST(Forward, MonteCarloMoments) {
  const NoiseSchedule s = default_schedule();
  const int t = 500;
  const LatentImage x0(1, 1, 1, LatentRole::kXt, 0.7);
  Rng rng(99);
  const int n = 10000;
  double sum = 0.0, sq = 0.0;
  for (int i = 0; i < n; ++i) {
    const LatentImage eps(1, 1, 1, LatentRole::kEpsilon, rng.normal());
    const double v = forward_diffuse(x0, t, eps, s).at(0, 0, 0);
    sum += v;
    sq += v * v;
  }
  const double mean = sum / n;
  const double var = sq / n - mean * mean;
  const double want_var = 1.0 - s.alpha_bar(t);
  EXPECT_NEAR(var / want_var, 1.0, 0.03);
  EXPECT_NEAR(mean, std::sqrt(s.alpha_bar(t)) * 0.7, 4.0 * std::sqrt(want_var / n));
}

TEST(Forward, Errors) {
  const NoiseSchedule s = default_schedule();
  const LatentImage a(2, 2, 1), b(2, 3, 1);
  EXPECT_CODE(forward_diffuse(a, 5, b, s), ErrorCode::kShapeMismatch);
  EXPECT_CODE(forward_diffuse(a, 0, a, s), ErrorCode::kInvalidRange);
  EXPECT_CODE(forward_diffuse(a, 1001, a, s), ErrorCode::kInvalidRange);
}

TEST(Init, EqualsForwardAtT) {
  const NoiseSchedule s = default_schedule();
  const LatentImage g = random_latent(3, 3, 2, 5, LatentRole::kGuide);
  const LatentImage eps = random_latent(3, 3, 2, 6, LatentRole::kEpsilon);
  const LatentImage xT = init_from_guidance(g, s, eps);
  EXPECT_EQ(max_abs_diff(xT, forward_diffuse(g, 1000, eps, s)), 0.0);
  EXPECT_EQ(xT.role(), LatentRole::kXt);
  EXPECT_TRUE(xT.same_shape(g));
}

TEST(NoisySource, RoleAndCoefficients) {
  const NoiseSchedule s = default_schedule();
  const LatentImage src(2, 2, 1, LatentRole::kSource, 1.0);
  const LatentImage zero(2, 2, 1, LatentRole::kEpsilon, 0.0);
  const LatentImage one(2, 2, 1, LatentRole::kEpsilon, 1.0);
  double prev_signal = 2.0;
  double prev_noise = -1.0;
  for (int t : {1, 500, 1000}) {
    const LatentImage sig = noisy_source(src, t, zero, s);
    EXPECT_EQ(sig.role(), LatentRole::kNoisySource);
    EXPECT_TRUE(sig.same_shape(src));
    const double noise = noisy_source(LatentImage(2, 2, 1, LatentRole::kSource, 0.0), t, one, s).at(1, 1, 0);
    EXPECT_LT(sig.at(0, 0, 0), prev_signal);
    EXPECT_GT(noise, prev_noise);
    prev_signal = sig.at(0, 0, 0);
    prev_noise = noise;
  }
}

TEST(Features, PatchExtractorHandCase) {
  // 2x2 image, one channel in each of (I_t, I_src, M): stacked channels 3.
  LatentImage it(2, 2, 1), src(2, 2, 1), mask(2, 2, 1);
  for (int y = 0; y < 2; ++y)
    for (int x = 0; x < 2; ++x) {
      it.at(y, x, 0) = 10 * y + x;
      src.at(y, x, 0) = 100 + 10 * y + x;
      mask.at(y, x, 0) = (x == y) ? 1.0 : 0.0;
    }
  const PatchExtractor ex({1, 2}, 3);
  const FeatureStack f = extract_detail_features(it, src, mask, 7, ex);
  ASSERT_EQ(f.size(), 2u);
  ASSERT_EQ(f.blocks[0].rows(), 4);
  ASSERT_EQ(f.blocks[0].cols(), 3);
  // token (y=1, x=0)
  EXPECT_EQ(f.blocks[0](2, 0), 10.0);
  EXPECT_EQ(f.blocks[0](2, 1), 110.0);
  EXPECT_EQ(f.blocks[0](2, 2), 0.0);
  ASSERT_EQ(f.blocks[1].rows(), 1);
  ASSERT_EQ(f.blocks[1].cols(), 12);
  const std::vector<double> want = {0, 100, 1, 1, 101, 0, 10, 110, 0, 11, 111, 1};
  for (int i = 0; i < 12; ++i) EXPECT_EQ(f.blocks[1](0, i), want[i]) << i;
}

TEST(Features, ChannelOrderMatters) {
  const LatentImage a = random_latent(2, 2, 1, 1);
  const LatentImage b = random_latent(2, 2, 1, 2);
  const LatentImage m(2, 2, 1, LatentRole::kMask, 1.0);
  const PatchExtractor ex({1}, 3);
  const FeatureStack f1 = extract_detail_features(a, b, m, 1, ex);
  const FeatureStack f2 = extract_detail_features(b, a, m, 1, ex);
  EXPECT_FALSE(f1.blocks[0].isApprox(f2.blocks[0]));
  EXPECT_EQ(f1.blocks[0].col(0), f2.blocks[0].col(1));
}

TEST(Features, Errors) {
  const LatentImage a(2, 2, 1), b(2, 3, 1);
  EXPECT_CODE(extract_detail_features(a, a, a, 1, LyingExtractor{}), ErrorCode::kBlockCountMismatch);
  EXPECT_CODE(extract_detail_features(a, b, a, 1, PatchExtractor({1}, 3)), ErrorCode::kShapeMismatch);
}

TEST(Attention, SingleKeyReturnsValue) {
  std::mt19937_64 g(1);
  const Eigen::MatrixXd q = random_matrix(5, 4, g);
  const Eigen::MatrixXd k = random_matrix(1, 4, g);
  const Eigen::MatrixXd v = random_matrix(1, 3, g);
  const Eigen::MatrixXd out = scaled_dot_attention(q, k, v);
  for (int i = 0; i < 5; ++i) EXPECT_LT((out.row(i) - v.row(0)).norm(), 1e-15);
}

TEST(Attention, EqualLogitsAverage) {
  const Eigen::MatrixXd q = Eigen::MatrixXd::Zero(2, 3);
  std::mt19937_64 g(2);
  const Eigen::MatrixXd k = random_matrix(4, 3, g);
  const Eigen::MatrixXd v = random_matrix(4, 2, g);
  const Eigen::MatrixXd out = scaled_dot_attention(q, k, v);
  const Eigen::RowVectorXd mean = v.colwise().mean();
  for (int i = 0; i < 2; ++i) EXPECT_LT((out.row(i) - mean).norm(), 1e-14);
}

TEST(Attention, HandCase) {
  Eigen::MatrixXd q(1, 2), k(2, 2), v(2, 1);
  q << 1, 0;
  k << 1, 0, 0, 1;
  v << 1, 0;
  const double e = std::exp(1.0 / std::sqrt(2.0));
  const double w0 = e / (e + 1.0);
  const Eigen::MatrixXd w = attention_weights(q, k);
  EXPECT_NEAR(w(0, 0), w0, 1e-12);
  EXPECT_NEAR(w(0, 1), 1.0 - w0, 1e-12);
  EXPECT_NEAR(scaled_dot_attention(q, k, v)(0, 0), w0, 1e-12);
}

TEST(Attention, LargeLogitsStayFinite) {
  Eigen::MatrixXd q(1, 1), k(2, 1);
  q << 1e4;
  k << 1e4, -1e4;
  const Eigen::MatrixXd w = attention_weights(q, k);
  EXPECT_EQ(w(0, 0), 1.0);
  EXPECT_EQ(w(0, 1), 0.0);
}

TEST(Attention, RowStochasticHullAndPermutation) {
  std::mt19937_64 g(3);
  for (int trial = 0; trial < 50; ++trial) {
    const int nq = 1 + trial % 7, nk = 1 + (trial * 3) % 9, d = 1 + trial % 5, dv = 1 + trial % 4;
    const Eigen::MatrixXd q = random_matrix(nq, d, g);
    const Eigen::MatrixXd k = random_matrix(nk, d, g);
    const Eigen::MatrixXd v = random_matrix(nk, dv, g);
    const Eigen::MatrixXd w = attention_weights(q, k);
    const Eigen::MatrixXd out = scaled_dot_attention(q, k, v);
    for (int i = 0; i < nq; ++i) {
      EXPECT_NEAR(w.row(i).sum(), 1.0, 1e-12);
      EXPECT_GE(w.row(i).minCoeff(), 0.0);
      for (int c = 0; c < dv; ++c) {
        EXPECT_GE(out(i, c), v.col(c).minCoeff() - 1e-12);
        EXPECT_LE(out(i, c), v.col(c).maxCoeff() + 1e-12);
      }
    }
    std::vector<int> perm(static_cast<std::size_t>(nk));
    std::iota(perm.begin(), perm.end(), 0);
    std::shuffle(perm.begin(), perm.end(), g);
    Eigen::MatrixXd kp(nk, d), vp(nk, dv);
    for (int r = 0; r < nk; ++r) {
      kp.row(r) = k.row(perm[r]);
      vp.row(r) = v.row(perm[r]);
    }
    EXPECT_LT((scaled_dot_attention(q, kp, vp) - out).cwiseAbs().maxCoeff(), 1e-12);
  }
}

TEST(Attention, ShapeErrors) {
  EXPECT_CODE(attention_weights(Eigen::MatrixXd::Zero(2, 3), Eigen::MatrixXd::Zero(2, 4)), ErrorCode::kShapeMismatch);
  EXPECT_CODE(scaled_dot_attention(Eigen::MatrixXd::Zero(2, 3), Eigen::MatrixXd::Zero(2, 3), Eigen::MatrixXd::Zero(3, 1)),
              ErrorCode::kShapeMismatch);
}

TEST(CrossAttend, OneDetailToken) {
  FeatureStack gen, det;
  std::mt19937_64 g(4);
  gen.blocks.push_back(random_matrix(6, 3, g));
  det.blocks.push_back(random_matrix(1, 3, g));
  const FeatureStack out = cross_attend(gen, det);
  ASSERT_EQ(out.size(), 1u);
  for (int i = 0; i < 6; ++i) EXPECT_LT((out.blocks[0].row(i) - det.blocks[0].row(0)).norm(), 1e-15);
}

TEST(CrossAttend, Projections) {
  FeatureStack gen, det;
  std::mt19937_64 g(5);
  gen.blocks.push_back(random_matrix(4, 3, g));
  det.blocks.push_back(random_matrix(5, 2, g));
  AttentionProjection p{random_matrix(3, 6, g), random_matrix(2, 6, g), random_matrix(2, 7, g)};
  const FeatureStack out = cross_attend(gen, det, std::span<const AttentionProjection>(&p, 1));
  const Eigen::MatrixXd want =
      scaled_dot_attention(gen.blocks[0] * p.query, det.blocks[0] * p.key, det.blocks[0] * p.value);
  EXPECT_LT((out.blocks[0] - want).cwiseAbs().maxCoeff(), 1e-14);
}

TEST(CrossAttend, BlockCountMismatch) {
  FeatureStack gen, det;
  gen.blocks.push_back(Eigen::MatrixXd::Zero(2, 2));
  det.blocks.push_back(Eigen::MatrixXd::Zero(2, 2));
  det.blocks.push_back(Eigen::MatrixXd::Zero(2, 2));
  EXPECT_CODE(cross_attend(gen, det), ErrorCode::kBlockCountMismatch);
}

TEST(Ddim, StepInvertsForward) {
  const NoiseSchedule s = default_schedule();
  const LatentImage x0 = random_latent(4, 4, 2, 7);
  const LatentImage eps = random_latent(4, 4, 2, 8, LatentRole::kEpsilon);
  for (auto [t, tp] : std::vector<std::pair<int, int>>{{1000, 900}, {500, 499}, {37, 1}, {2, 1}}) {
    const LatentImage xt = forward_diffuse(x0, t, eps, s);
    EXPECT_LT(max_abs_diff(ddim_step(xt, eps, t, tp, s), forward_diffuse(x0, tp, eps, s)), 1e-10);
  }
}

TEST(Ddim, StepToZeroIsCleanEstimate) {
  const NoiseSchedule s = default_schedule();
  const LatentImage x0 = random_latent(3, 3, 1, 9);
  const LatentImage eps = random_latent(3, 3, 1, 10, LatentRole::kEpsilon);
  EXPECT_LT(max_abs_diff(ddim_step(forward_diffuse(x0, 250, eps, s), eps, 250, 0, s), x0), 1e-12);
}

TEST(Ddim, StepOrderErrors) {
  const NoiseSchedule s = default_schedule();
  const LatentImage x(2, 2, 1);
  EXPECT_CODE(ddim_step(x, x, 10, 10, s), ErrorCode::kBadTimestepOrder);
  EXPECT_CODE(ddim_step(x, x, 10, 20, s), ErrorCode::kBadTimestepOrder);
  EXPECT_CODE(ddim_step(x, LatentImage(2, 3, 1), 10, 5, s), ErrorCode::kShapeMismatch);
}

TEST(Ddim, Timesteps) {
  EXPECT_EQ(ddim_timesteps(1000, 1), std::vector<int>{1000});
  EXPECT_EQ(ddim_timesteps(1000, 2), (std::vector<int>{1000, 1}));
  EXPECT_EQ(ddim_timesteps(10, 10), (std::vector<int>{10, 9, 8, 7, 6, 5, 4, 3, 2, 1}));
  for (int n : {3, 10, 100, 1000}) {
    const auto ts = ddim_timesteps(1000, n);
    ASSERT_EQ(static_cast<int>(ts.size()), n);
    EXPECT_EQ(ts.front(), 1000);
    EXPECT_EQ(ts.back(), 1);
    for (std::size_t i = 1; i < ts.size(); ++i) EXPECT_LT(ts[i], ts[i - 1]);
  }
  EXPECT_CODE(ddim_timesteps(10, 0), ErrorCode::kInvalidRange);
  EXPECT_CODE(ddim_timesteps(10, 11), ErrorCode::kInvalidRange);
}

TEST(Ddim, OracleRecoversClean) {
  const NoiseSchedule s = default_schedule();
  const LatentImage clean = random_latent(8, 8, 4, 21);
  const LatentImage guide = clean;
  const LatentImage eps = random_latent(8, 8, 4, 22, LatentRole::kEpsilon);
  const LatentImage mask(8, 8, 1, LatentRole::kMask, 1.0);
  const LatentImage src = random_latent(8, 8, 4, 23, LatentRole::kSource);
  const LatentImage src_noise = random_latent(8, 8, 4, 24, LatentRole::kEpsilon);
  const RandomLinearExtractor ex(9, {8, 8}, 25);
  const DetailSource detail{src, ex, src_noise};
  const OraclePredictor oracle(clean, s);
  const LatentImage xT = init_from_guidance(guide, s, eps);
  for (int n : {1, 10, 100}) {
    const LatentImage out = ddim_sample(oracle, xT, guide, mask, &detail, DdimConfig{n, 0.0}, s);
    EXPECT_LT(max_abs_diff(out, clean), 1e-6) << n;
  }
}

TEST(Ddim, ZeroPredictorTelescopes) {
  const NoiseSchedule s = default_schedule();
  const LatentImage xT = random_latent(3, 3, 2, 31);
  const LatentImage mask(3, 3, 1, LatentRole::kMask, 1.0);
  const double scale = 1.0 / std::sqrt(s.alpha_bar(1000));
  for (int n : {1, 7, 100}) {
    const LatentImage out = ddim_sample(ZeroPredictor{}, xT, xT, mask, nullptr, DdimConfig{n, 0.0}, s);
    for (std::size_t i = 0; i < out.values().size(); ++i) {
      EXPECT_NEAR(out.values()[i], scale * xT.values()[i], 1e-12 * scale * std::abs(xT.values()[i]) + 1e-15);
    }
  }
}

TEST(Ddim, SingleStepMatchesDirectStep) {
  const NoiseSchedule s = default_schedule();
  const LatentImage clean = random_latent(4, 4, 1, 41);
  const LatentImage xT = random_latent(4, 4, 1, 42);
  const LatentImage mask(4, 4, 1, LatentRole::kMask, 1.0);
  const OraclePredictor oracle(clean, s);
  const LatentImage direct = ddim_step(xT, oracle.predict(xT, xT, mask, {}, 1000), 1000, 0, s);
  const LatentImage sampled = ddim_sample(oracle, xT, xT, mask, nullptr, DdimConfig{1, 0.0}, s);
  EXPECT_EQ(max_abs_diff(direct, sampled), 0.0);
}

TEST(Ddim, NonzeroEtaRejected) {
  const NoiseSchedule s = default_schedule();
  const LatentImage x(2, 2, 1);
  EXPECT_CODE(ddim_sample(ZeroPredictor{}, x, x, x, nullptr, DdimConfig{10, 0.5}, s), ErrorCode::kInvalidRange);
}

TEST(LatentIo, RoundTripAtFloatPrecision) {
  const LatentImage a = random_latent(5, 3, 4, 51);
  const std::filesystem::path p = guidesynth::testing::scratch_dir("latent") / "a.d3fx";
  write_latent(p, a);
  const LatentImage b = read_latent(p);
  ASSERT_TRUE(a.same_shape(b));
  for (std::size_t i = 0; i < a.values().size(); ++i) {
    EXPECT_EQ(b.values()[i], static_cast<double>(static_cast<float>(a.values()[i])));
  }
  EXPECT_EQ(latent_to_grid(a).planes, 4);
}
