#pragma once

// Synthetic moving-object scenes standing in for video, segmentation, tracking
// and mesh reconstruction. The object is three mutually orthogonal two-sided
// plates of different sizes, so every viewing direction sees some surface and
// large rotations keep shared visible points.

#include <cstdint>
#include <filesystem>
#include <vector>

#include "guidesynth/dataset.hpp"
#include "guidesynth/estimation.hpp"
#include "guidesynth/geometry_io.hpp"

namespace guidesynth {

CameraIntrinsics default_camera();

// Object-frame plate mesh with seeded flat face colors.
ColoredMesh make_plate_object(std::uint64_t texture_seed);

// Plate index of a triangle of make_plate_object().
int plate_of_triangle(int triangle);

struct SurfaceSample {
  Point3 position;  // object frame
  int plate = 0;
};

// samples_per_side^2 points per plate on a regular grid.
std::vector<SurfaceSample> plate_surface_samples(int samples_per_side);

// Pixel of every sample under `pose` with a visibility flag: inside the
// image, the four bilinear neighbors all drawn by the sample's own plate, and
// the plate not seen at a grazing angle.
struct TrackFrame {
  std::vector<Pixel> pixels;
  std::vector<std::uint8_t> visible;
};

TrackFrame track_samples(std::span<const SurfaceSample> samples, const RigidTransform& pose, const Raster& raster,
                         const CameraIntrinsics& k);

// Renders flat face colors; mask marks covered pixels.
struct Render {
  Image rgb;
  InstanceMask mask;
  Raster raster;
};

Render render_mesh(const ColoredMesh& mesh, const CameraIntrinsics& k, Rgb8 background = {0, 0, 0});

ColoredMesh pose_mesh(const ColoredMesh& mesh, const RigidTransform& pose);

RigidTransform random_rotation_transform(Rng& rng);

// Rigid motion between the first and last frame expressed in the camera frame
// with the object's origin moving from the source pose along a straight line.
struct SceneParams {
  CameraIntrinsics camera = default_camera();
  RigidTransform source_pose;  // object -> camera at frame 0
  RigidTransform motion;       // camera-frame transform from frame 0 to the last frame
  int frames = 5;
  std::uint64_t texture_seed = 1;
  int samples_per_side = 24;
};

SceneParams default_scene_params();

// Object pose at frame k: rotation and origin interpolated linearly in the
// axis-angle of `motion`.
RigidTransform object_pose(const SceneParams& p, int frame);

struct SceneFrame {
  Image image;
  std::vector<InstanceMask> instances;  // [object, distractor]
  Raster raster;
  ColoredMesh mesh;  // object posed in this frame's camera coordinates
  TrackFrame tracks;
};

struct SyntheticScene {
  SceneParams params;
  ColoredMesh object;
  std::vector<SceneFrame> frames;
  std::vector<FlowField> flows;  // frame k -> k + 1
};

SyntheticScene generate_scene(const SceneParams& p);

CorrespondenceSet scene_correspondences(const SyntheticScene& s, int src, int tgt);

// Writes the clip directory read by build-dataset plus depth maps,
// correspondences (first -> last frame) and the ground-truth transform.
// Returns the path of the clip manifest.
std::filesystem::path write_scene(const SyntheticScene& s, const std::string& clip_id,
                                  const std::filesystem::path& dir, std::uint64_t clip_seed);

// Estimation test rig: correspondences between two poses of the plate object,
// with depths rasterized from the posed meshes.
struct RigParams {
  std::uint64_t seed = 0;
  double max_angle_deg = 180.0;
  double noise_sigma_px = 0.0;
  // Tracker noise lands on the tracked (target) position; the source pixel is
  // the exact query point unless this is set.
  bool noise_on_source = false;
  std::size_t min_visible = 500;
  int samples_per_side = 32;
  // When set, the motion rotation is this exact Euler triple instead of a
  // random axis-angle draw.
  const EulerAngles* fixed_rotation = nullptr;
};

struct RigInstance {
  CameraIntrinsics camera;
  RigidTransform truth;
  CorrespondenceSet correspondences;
  DepthMap depth_src;
  DepthMap depth_tgt;
  std::size_t visible_both = 0;
};

RigInstance make_estimation_rig(const RigParams& p);

// Track file: "M F" header, then M lines of F "px py v" triples.
std::string format_tracks(const std::vector<TrackFrame>& frames);
std::vector<TrackFrame> parse_tracks(const std::string& text);

}  // namespace guidesynth
