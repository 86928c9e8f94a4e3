#pragma once

// Rigid transform estimation from tracked 2D correspondences and rendered
// depth: lift to 3D, centroid translation, joint Euler grid search, then
// Levenberg-Marquardt refinement of the reprojection loss.

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "guidesynth/geometry.hpp"

namespace guidesynth {

struct CorrespondenceSet {
  std::vector<Pixel> p_src;
  std::vector<Pixel> p_tgt;
  std::vector<std::uint8_t> v_src;
  std::vector<std::uint8_t> v_tgt;

  std::size_t size() const { return p_src.size(); }
  void push_back(const Pixel& src, const Pixel& tgt, bool vis_src, bool vis_tgt);
  // Throws Error(kDimensionMismatch) when the four arrays differ in length.
  void validate() const;
};

struct EstimationConfig {
  double grid_step_deg = 10.0;
  int max_refine_iters = 200;
  double loss_tol = 1e-9;       // px^2, absolute loss change
  double damping_init = 1e-3;
  // Worker threads for the grid search; 0 picks hardware concurrency. The
  // result does not depend on this value.
  int threads = 0;

  // Throws Error(kInvalidParams).
  void validate() const;
};

struct EstimationResult {
  RigidTransform transform;
  double final_loss = 0.0;
  int iterations = 0;
  EulerAngles grid_best;
  std::size_t inlier_count = 0;
  // Loss before refinement followed by the loss after every accepted step.
  std::vector<double> loss_history;

  bool operator==(const EstimationResult&) const = default;
};

struct LiftedCorrespondences {
  std::vector<Point3> p_src;
  std::vector<Point3> p_tgt;
  std::vector<Pixel> target_pixels;
};

// Keeps pairs visible in both frames whose depth can be sampled at both ends.
// Throws kTooFewCorrespondences when fewer than three survive.
LiftedCorrespondences lift_correspondences(const CorrespondenceSet& c, const DepthMap& depth_src,
                                           const DepthMap& depth_tgt, const CameraIntrinsics& k);

// mean(P_tgt) - mean(P_src). Throws kEmptyInput / kDimensionMismatch.
Eigen::Vector3d init_translation(std::span<const Point3> p_src, std::span<const Point3> p_tgt);

// Sum of (weighted) squared pixel residuals between the targets and the
// projections of T * P_src. A transformed point with Z <= 1e-6 contributes the
// squared image diagonal instead of a residual. Empty weights mean all ones.
double reprojection_loss(const RigidTransform& t, std::span<const Point3> p_src, std::span<const Pixel> p_tgt,
                         const CameraIntrinsics& k, std::span<const double> weights = {});

// Exhaustive search over the joint (360 / step)^3 Euler grid. Every candidate
// rotation R is paired with t = mean(P_tgt) - R mean(P_src). Returns the
// candidate with the smallest loss; losses within a relative 1e-9 of each
// other count as tied and the lexicographically smallest (rx, ry, rz) wins.
EulerAngles grid_search_rotation(std::span<const Point3> p_src, std::span<const Point3> p_tgt,
                                 std::span<const Pixel> p_tgt_px, const CameraIntrinsics& k,
                                 const EstimationConfig& cfg, std::span<const double> weights = {});

// Rigid transform associated with a grid candidate.
RigidTransform transform_for_rotation(const Eigen::Matrix3d& rotation, std::span<const Point3> p_src,
                                      std::span<const Point3> p_tgt);

// Levenberg-Marquardt over a left-multiplied axis-angle rotation update and a
// translation update. The returned loss never exceeds the loss of t0.
// Throws kNumericalFailure if no finite step can be computed.
EstimationResult refine_transform(const RigidTransform& t0, std::span<const Point3> p_src,
                                  std::span<const Pixel> p_tgt, const CameraIntrinsics& k,
                                  const EstimationConfig& cfg);

EstimationResult estimate_transform(const CorrespondenceSet& c, const DepthMap& depth_src,
                                    const DepthMap& depth_tgt, const CameraIntrinsics& k,
                                    const EstimationConfig& cfg);

// Correspondence file: header line "N", then N lines
// "px_src py_src px_tgt py_tgt v_src v_tgt".
CorrespondenceSet parse_correspondences(const std::string& text);
std::string format_correspondences(const CorrespondenceSet& c);
CorrespondenceSet read_correspondences(const std::filesystem::path& path);
void write_correspondences(const std::filesystem::path& path, const CorrespondenceSet& c);

// Key/value document with rotation (row-major), translation, final_loss,
// iterations, grid_best and inlier_count.
std::string format_estimation_result(const EstimationResult& r);
EstimationResult parse_estimation_result(const std::string& text);

}  // namespace guidesynth
