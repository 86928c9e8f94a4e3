#include <algorithm>
#include <cmath>

#include <Eigen/Geometry>
#include <gtest/gtest.h>

#include "guidesynth/estimation.hpp"
#include "guidesynth/rng.hpp"
#include "guidesynth/synthetic.hpp"
#include "test_util.hpp"

namespace guidesynth {
namespace {

const CameraIntrinsics kCam{300.0, 300.0, 160.0, 120.0, 320, 240};

// Exact 3D problem: a random cloud around Z = 5 and its image under t.
struct Problem {
  std::vector<Point3> src;
  std::vector<Point3> tgt;
  std::vector<Pixel> px;
};

Problem make_problem(const RigidTransform& t, int n, std::uint64_t seed) {
  Rng rng(seed);
  Problem p;
  for (int i = 0; i < n; ++i) {
    const Point3 s(rng.uniform() - 0.5, rng.uniform() - 0.5, 5.0 + rng.uniform() - 0.5);
    p.src.push_back(s);
    p.tgt.push_back(t(s));
    p.px.push_back(project(t(s), kCam));
  }
  return p;
}

// Rotation about the object's centroid (0, 0, 5) so points stay in view.
RigidTransform about_center(const Eigen::Matrix3d& r, const Eigen::Vector3d& shift = Eigen::Vector3d::Zero()) {
  const Eigen::Vector3d c(0, 0, 5);
  RigidTransform t;
  t.rotation = r;
  t.translation = c + shift - r * c;
  return t;
}

// Independent loss: straight sum with explicit division, no early exit.
double oracle_loss(const Eigen::Matrix3d& r, const Problem& p) {
  Eigen::Vector3d cs = Eigen::Vector3d::Zero(), ct = Eigen::Vector3d::Zero();
  for (std::size_t i = 0; i < p.src.size(); ++i) {
    cs += p.src[i];
    ct += p.tgt[i];
  }
  cs /= static_cast<double>(p.src.size());
  ct /= static_cast<double>(p.src.size());
  long double sum = 0;
  for (std::size_t i = 0; i < p.src.size(); ++i) {
    const Eigen::Vector3d q = r * p.src[i] + ct - r * cs;
    if (q.z() <= 1e-6) {
      sum += kCam.diagonal_sq();
      continue;
    }
    const double u = kCam.fx * q.x() / q.z() + kCam.cx;
    const double v = kCam.fy * q.y() / q.z() + kCam.cy;
    sum += (u - p.px[i].x()) * (u - p.px[i].x()) + (v - p.px[i].y()) * (v - p.px[i].y());
  }
  return static_cast<double>(sum);
}

TEST(Lift, FiltersByVisibilityAndDepth) {
  DepthMap d(320, 240);
  for (int y = 0; y < 240; ++y)
    for (int x = 0; x < 320; ++x) d.set(x, y, 4.0);
  CorrespondenceSet c;
  for (int i = 0; i < 5; ++i) c.push_back({10.0 * i, 20.0}, {10.0 * i + 1, 21.0}, true, true);
  EXPECT_EQ(lift_correspondences(c, d, d, kCam).p_src.size(), 5u);

  c.v_tgt[2] = 0;
  const auto lifted = lift_correspondences(c, d, d, kCam);
  ASSERT_EQ(lifted.p_src.size(), 4u);
  EXPECT_EQ(lifted.target_pixels[2], Pixel(31, 21));

  // invalid depth at one end drops the pair
  d.invalidate(40, 20);
  d.invalidate(41, 20);
  d.invalidate(40, 21);
  d.invalidate(41, 21);
  c.p_src[4] = {40.5, 20.5};
  EXPECT_EQ(lift_correspondences(c, d, d, kCam).p_src.size(), 3u);

  c.v_src[0] = 0;
  EXPECT_CODE(lift_correspondences(c, d, d, kCam), ErrorCode::kTooFewCorrespondences);

  c.v_src.pop_back();
  EXPECT_CODE(lift_correspondences(c, d, d, kCam), ErrorCode::kDimensionMismatch);
}

TEST(InitTranslation, Examples) {
  const std::vector<Point3> s = {{0, 0, 1}, {1, 0, 1}};
  const std::vector<Point3> t = {{1, 1, 1}, {2, 1, 1}};
  EXPECT_EQ(init_translation(s, t), Eigen::Vector3d(1, 1, 0));
  EXPECT_EQ(init_translation(s, s), Eigen::Vector3d::Zero());
  EXPECT_CODE(init_translation({}, {}), ErrorCode::kEmptyInput);
  EXPECT_CODE(init_translation(s, std::vector<Point3>{{0, 0, 1}}), ErrorCode::kDimensionMismatch);
}

TEST(InitTranslation, MatchesLongDoubleResummation) {
  Rng rng(21);
  std::vector<Point3> s, t;
  for (int i = 0; i < 777; ++i) {
    s.emplace_back(rng.normal(), rng.normal(), 3 + rng.normal());
    t.emplace_back(rng.normal(), rng.normal(), 9 + rng.normal());
  }
  long double acc[3] = {0, 0, 0};
  for (std::size_t i = 0; i < s.size(); ++i)
    for (int c = 0; c < 3; ++c) acc[c] += static_cast<long double>(t[i][c]) - s[i][c];
  const Eigen::Vector3d got = init_translation(s, t);
  for (int c = 0; c < 3; ++c) EXPECT_NEAR(got[c], static_cast<double>(acc[c] / s.size()), 1e-12);
}

TEST(InitTranslation, PureTranslationIsSolvedExactly) {
  const RigidTransform truth = about_center(Eigen::Matrix3d::Identity(), {0.3, -0.2, 0.4});
  const Problem p = make_problem(truth, 200, 4);
  RigidTransform t;
  t.translation = init_translation(p.src, p.tgt);
  EXPECT_LT(reprojection_loss(t, p.src, p.px, kCam), 1e-9);
}

TEST(ReprojectionLoss, Examples) {
  const RigidTransform truth = about_center(euler_to_rotation({10, 20, 30}));
  Problem p = make_problem(truth, 50, 8);
  EXPECT_LT(reprojection_loss(truth, p.src, p.px, kCam), 1e-18);

  for (auto& q : p.px) q.x() += 1.0;
  EXPECT_NEAR(reprojection_loss(truth, p.src, p.px, kCam), 50.0, 1e-9);

  std::vector<Point3> src = p.src;
  std::vector<Pixel> px = p.px;
  std::reverse(src.begin(), src.end());
  std::reverse(px.begin(), px.end());
  EXPECT_NEAR(reprojection_loss(truth, src, px, kCam), reprojection_loss(truth, p.src, p.px, kCam), 1e-9);
}

TEST(ReprojectionLoss, BehindCameraCostsDiagonalSquared) {
  const std::vector<Point3> src = {{0, 0, -1}, {0, 0, 2}};
  const std::vector<Pixel> px = {{0, 0}, {160, 121}};
  EXPECT_DOUBLE_EQ(reprojection_loss(RigidTransform{}, src, px, kCam), 320.0 * 320 + 240 * 240 + 1.0);
  const std::vector<double> w = {0.5, 2.0};
  EXPECT_DOUBLE_EQ(reprojection_loss(RigidTransform{}, src, px, kCam, w), 0.5 * (320.0 * 320 + 240 * 240) + 2.0);
}

TEST(GridSearch, ThirtyAboutY) {
  const Problem p = make_problem(about_center(euler_to_rotation({0, 30, 0})), 100, 1);
  const EulerAngles a = grid_search_rotation(p.src, p.tgt, p.px, kCam, {});
  EXPECT_EQ(a, (EulerAngles{0, 30, 0}));
}

TEST(GridSearch, IdentityTieBreak) {
  const Problem p = make_problem(RigidTransform{}, 100, 2);
  EXPECT_EQ(grid_search_rotation(p.src, p.tgt, p.px, kCam, {}), (EulerAngles{0, 0, 0}));
}

TEST(GridSearch, ArgminOverExhaustiveOracle) {
  EstimationConfig cfg;
  cfg.grid_step_deg = 30.0;
  Rng rng(77);
  for (int trial = 0; trial < 4; ++trial) {
    // off-grid truth so the minimum is not trivially zero
    const RigidTransform truth =
        about_center(euler_to_rotation({360 * rng.uniform(), 360 * rng.uniform(), 360 * rng.uniform()}));
    const Problem p = make_problem(truth, 60, 100 + trial);
    const EulerAngles got = grid_search_rotation(p.src, p.tgt, p.px, kCam, cfg);
    const double got_loss = oracle_loss(euler_to_rotation(got), p);
    double best = std::numeric_limits<double>::infinity();
    for (int x = 0; x < 12; ++x)
      for (int y = 0; y < 12; ++y)
        for (int z = 0; z < 12; ++z) best = std::min(best, oracle_loss(euler_to_rotation({30.0 * x, 30.0 * y, 30.0 * z}), p));
    EXPECT_LE(got_loss, best * (1 + 1e-9));
  }
}

TEST(GridSearch, ThreadCountAndWeightScaleDoNotMatter) {
  const Problem p = make_problem(about_center(euler_to_rotation({12, 47, 200})), 80, 9);
  EstimationConfig one;
  one.threads = 1;
  one.grid_step_deg = 20.0;
  EstimationConfig four = one;
  four.threads = 4;
  const EulerAngles a = grid_search_rotation(p.src, p.tgt, p.px, kCam, one);
  EXPECT_EQ(grid_search_rotation(p.src, p.tgt, p.px, kCam, four), a);
  const std::vector<double> w(p.src.size(), 7.5);
  EXPECT_EQ(grid_search_rotation(p.src, p.tgt, p.px, kCam, one, w), a);
}

TEST(GridSearch, InputErrors) {
  const Problem p = make_problem(RigidTransform{}, 2, 3);
  EXPECT_CODE(grid_search_rotation(p.src, p.tgt, p.px, kCam, {}), ErrorCode::kTooFewCorrespondences);
  EstimationConfig bad;
  bad.grid_step_deg = 7.0;
  EXPECT_CODE(bad.validate(), ErrorCode::kInvalidParams);
  bad = {};
  bad.max_refine_iters = 0;
  EXPECT_CODE(bad.validate(), ErrorCode::kInvalidParams);
}

TEST(Refine, AtOptimumStaysPut) {
  const RigidTransform truth = about_center(euler_to_rotation({5, 15, 25}), {0.1, 0, 0});
  const Problem p = make_problem(truth, 100, 5);
  const EstimationResult r = refine_transform(truth, p.src, p.px, kCam, {});
  EXPECT_LE(r.iterations, 1);
  EXPECT_LT(r.final_loss, 1e-12);
  EXPECT_LT((r.transform.rotation - truth.rotation).norm(), 1e-9);
  EXPECT_LT((r.transform.translation - truth.translation).norm(), 1e-9);
}

TEST(Refine, RecoversOffGridAngleFromGridStart) {
  const RigidTransform truth = about_center(euler_to_rotation({0, 34.7, 0}), {0.05, -0.02, 0.1});
  const Problem p = make_problem(truth, 300, 6);
  const RigidTransform t0 = transform_for_rotation(euler_to_rotation({0, 30, 0}), p.src, p.tgt);
  const EstimationResult r = refine_transform(t0, p.src, p.px, kCam, {});
  EXPECT_LT(rotation_geodesic_deg(r.transform.rotation, truth.rotation), 0.5);
  EXPECT_LT((r.transform.translation - truth.translation).norm(), 1e-3);
  EXPECT_TRUE(is_rotation(r.transform.rotation));
  EXPECT_LE(r.final_loss, r.loss_history.front());
}

TEST(Refine, LossHistoryNonIncreasingOnRandomProblems) {
  Rng rng(99);
  for (int trial = 0; trial < 30; ++trial) {
    const RigidTransform truth =
        about_center(euler_to_rotation({360 * rng.uniform(), 360 * rng.uniform(), 360 * rng.uniform()}));
    Problem p = make_problem(truth, 40, 200 + trial);
    for (auto& q : p.px) q += Pixel(rng.normal(), rng.normal());
    const RigidTransform t0 = about_center(truth.rotation * euler_to_rotation({8 * rng.normal(), 8 * rng.normal(), 0}));
    const EstimationResult r = refine_transform(t0, p.src, p.px, kCam, {});
    ASSERT_GE(r.loss_history.size(), 1u);
    for (std::size_t i = 1; i < r.loss_history.size(); ++i) EXPECT_LE(r.loss_history[i], r.loss_history[i - 1]);
    EXPECT_EQ(r.final_loss, r.loss_history.back());
    EXPECT_TRUE(is_rotation(r.transform.rotation));
  }
}

TEST(Refine, NonFiniteInputIsNumericalFailure) {
  Problem p = make_problem(RigidTransform{}, 10, 3);
  p.px[3].x() = std::numeric_limits<double>::quiet_NaN();
  EXPECT_CODE(refine_transform(RigidTransform{}, p.src, p.px, kCam, {}), ErrorCode::kNumericalFailure);
}

TEST(Estimate, SyntheticRigEndToEnd) {
  RigParams rp;
  rp.seed = 3;
  const RigInstance rig = make_estimation_rig(rp);
  const EstimationResult r = estimate_transform(rig.correspondences, rig.depth_src, rig.depth_tgt, rig.camera, {});
  EXPECT_LT(rotation_geodesic_deg(r.transform.rotation, rig.truth.rotation), 0.5);
  EXPECT_LT((r.transform.translation - rig.truth.translation).norm(), 1e-3);
  EXPECT_EQ(estimate_transform(rig.correspondences, rig.depth_src, rig.depth_tgt, rig.camera, {}), r);
}

TEST(Estimate, SurvivesTwentyPercentInvisible) {
  RigParams rp;
  rp.seed = 4;
  RigInstance rig = make_estimation_rig(rp);
  Rng rng(1);
  std::size_t hidden = 0;
  for (std::size_t i = 0; i < rig.correspondences.size(); ++i) {
    if (rig.correspondences.v_src[i] && rig.correspondences.v_tgt[i] && rng.uniform() < 0.2) {
      rig.correspondences.v_tgt[i] = 0;
      ++hidden;
    }
  }
  ASSERT_GT(hidden, 50u);
  const EstimationResult r = estimate_transform(rig.correspondences, rig.depth_src, rig.depth_tgt, rig.camera, {});
  EXPECT_LT(rotation_geodesic_deg(r.transform.rotation, rig.truth.rotation), 0.5);
  EXPECT_LT((r.transform.translation - rig.truth.translation).norm(), 1e-3);
}

TEST(EstimationIo, CorrespondenceRoundTripAndErrors) {
  CorrespondenceSet c;
  c.push_back({1.25, 2.5}, {3.125, 4.0625}, true, false);
  c.push_back({0.1, 1.0 / 3.0}, {5, 6}, false, true);
  const CorrespondenceSet back = parse_correspondences(format_correspondences(c));
  EXPECT_EQ(back.p_src, c.p_src);
  EXPECT_EQ(back.p_tgt, c.p_tgt);
  EXPECT_EQ(back.v_src, c.v_src);
  EXPECT_EQ(back.v_tgt, c.v_tgt);
  EXPECT_CODE(parse_correspondences("2\n1 2 3 4 1 1\n"), ErrorCode::kParseError);
  EXPECT_CODE(parse_correspondences("1\n1 2 3 4 1 2\n"), ErrorCode::kParseError);
  EXPECT_CODE(parse_correspondences(""), ErrorCode::kParseError);
}

TEST(EstimationIo, ResultRoundTrip) {
  EstimationResult r;
  r.transform = about_center(euler_to_rotation({1, 2, 3}), {0.1, 0.2, 0.3});
  r.final_loss = 0.125;
  r.iterations = 7;
  r.grid_best = {0, 10, 350};
  r.inlier_count = 42;
  const EstimationResult back = parse_estimation_result(format_estimation_result(r));
  EXPECT_EQ(back.transform, r.transform);
  EXPECT_EQ(back.final_loss, r.final_loss);
  EXPECT_EQ(back.iterations, r.iterations);
  EXPECT_EQ(back.grid_best, r.grid_best);
  EXPECT_EQ(back.inlier_count, r.inlier_count);
}

}  // namespace
}  // namespace guidesynth
