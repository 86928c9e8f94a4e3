#pragma once

// Batch entry points behind the guidesynth command line tool. Every cmd_*
// function catches library errors, prints a one-line message to `log` and
// returns the mapped exit code.

#include <array>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "guidesynth/dataset.hpp"
#include "guidesynth/diffusion.hpp"
#include "guidesynth/estimation.hpp"
#include "guidesynth/synthetic.hpp"

namespace guidesynth {

// Config file keys (all optional):
//   fx fy cx cy width height            intrinsics for `estimate`
//   grid_step_deg max_refine_iters loss_tol damping_init
//   flow_threshold p_ts p_tt p_mf dropout_prob mf_dir
//   schedule_steps alpha_first alpha_last ddim_steps
//   latent_height latent_width latent_channels
//   seed
// Unknown keys are a ConfigError.
struct PipelineConfig {
  CameraIntrinsics intrinsics = default_camera();
  double grid_step_deg = 10.0;
  int max_refine_iters = 200;
  double loss_tol = 1e-9;
  double damping_init = 1e-3;
  double flow_threshold = 5.0;
  SettingProbabilities probs;
  double dropout_prob = 0.2;
  std::string mf_dir;  // pool of externally produced tuples for the MF setting
  int schedule_steps = kDefaultScheduleSteps;
  double alpha_first = kDefaultAlphaFirst;
  double alpha_last = kDefaultAlphaLast;
  int ddim_steps = 100;
  int latent_height = 16;
  int latent_width = 16;
  int latent_channels = 4;
  std::uint64_t seed = 0;

  static PipelineConfig from_doc(const KeyValueDoc& doc);
  static PipelineConfig load(const std::filesystem::path& path);
  // Throws Error(kConfigError) on any out-of-range value.
  void validate() const;

  EstimationConfig estimation() const;
  NoiseSchedule schedule() const;
};

// One clip as listed by a clip manifest (see write_scene).
struct Clip {
  std::string id;
  std::uint64_t seed = 0;  // optional manifest key, folded into the clip seed
  CameraIntrinsics camera;
  std::vector<Image> frames;
  std::vector<FlowField> flows;
  std::vector<std::vector<InstanceMask>> masks;  // per frame, per instance
  std::vector<ColoredMesh> meshes;
  std::vector<TrackFrame> tracks;
};

// Throws kCorruptManifest for missing keys or files and the owning module's
// errors for unreadable payloads.
Clip load_clip(const std::filesystem::path& manifest);

// A clip list is either a single clip manifest or a text file naming one
// manifest per line (relative to the list's directory; '#' comments allowed).
std::vector<std::filesystem::path> read_clip_list(const std::filesystem::path& path);

// Per-clip seed, independent of processing order.
std::uint64_t clip_seed(std::uint64_t run_seed, const std::string& clip_id, std::uint64_t manifest_seed = 0);

enum class ClipStatus { kTuple, kDiscarded, kMagicFixupUnavailable, kFailed };

struct ClipOutcome {
  std::string clip_id;
  ClipStatus status = ClipStatus::kFailed;
  std::optional<TrainingSetting> setting;
  bool dropout = false;
  std::optional<FramePair> pair;
  std::array<std::size_t, 3> mask_counts{};
  std::string message;
};

// Runs one clip end to end and writes its tuple into out_dir / clip_id.
// Errors are returned inside the outcome rather than thrown.
ClipOutcome process_clip(const std::filesystem::path& manifest, const PipelineConfig& cfg,
                         const std::filesystem::path& out_dir);

std::string format_report(const std::vector<ClipOutcome>& outcomes);

struct EstimateArgs {
  std::filesystem::path correspondences;
  std::filesystem::path depth_src;
  std::filesystem::path depth_tgt;
  std::filesystem::path intrinsics;  // optional key = value file with fx fy cx cy width height
  std::filesystem::path config;
  std::filesystem::path out;
};

struct BuildDatasetArgs {
  std::filesystem::path clips;
  std::filesystem::path config;
  std::filesystem::path out;
  std::optional<std::uint64_t> seed;
  int jobs = 1;
};

struct SynthSceneArgs {
  std::filesystem::path out;
  std::string clip_id = "clip";
  std::uint64_t seed = 0;  // texture seed; geometry does not depend on it
  EulerAngles rotation{0.0, 30.0, 0.0};
  Eigen::Vector3d translation{1.0, 0.3, 0.0};
  int frames = 5;
  bool is_static = false;
  int count = 1;  // > 1 writes clip_000 .. and a clips.txt list
};

struct DdimDemoArgs {
  std::filesystem::path config;
  std::filesystem::path out;
  std::optional<std::uint64_t> seed;
  std::optional<int> ddim_steps;
};

struct ScheduleDumpArgs {
  std::filesystem::path config;
  std::filesystem::path out;  // empty writes to `out`
};

int cmd_estimate(const EstimateArgs& a, std::ostream& out, std::ostream& log);
int cmd_build_dataset(const BuildDatasetArgs& a, std::ostream& out, std::ostream& log);
int cmd_synth_scene(const SynthSceneArgs& a, std::ostream& out, std::ostream& log);
int cmd_ddim_demo(const DdimDemoArgs& a, std::ostream& out, std::ostream& log);
int cmd_schedule_dump(const ScheduleDumpArgs& a, std::ostream& out, std::ostream& log);

// Scene parameters used by synth-scene for a motion given as Euler angles and
// a translation of the object's origin.
SceneParams scene_params_for(const EulerAngles& rotation, const Eigen::Vector3d& translation, int frames,
                             std::uint64_t texture_seed);

}  // namespace guidesynth
