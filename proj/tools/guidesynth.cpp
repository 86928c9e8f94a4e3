// guidesynth command line tool. Exit codes follow guidesynth::exit_code();
// 2 means the command line itself was malformed.

#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "guidesynth/pipeline.hpp"

namespace {

using guidesynth::EulerAngles;

std::optional<EulerAngles> parse_euler(const std::vector<double>& v) {
  if (v.empty()) return std::nullopt;
  return EulerAngles{v[0], v[1], v[2]};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"guidesynth: training-tuple synthesis and diffusion sampling toolkit"};
  app.require_subcommand(1);

  std::string config;
  std::string out;
  std::optional<std::uint64_t> seed;
  int jobs = 1;

  auto add_common = [&](CLI::App* cmd) {
    cmd->add_option("--config", config, "key = value config file")->check(CLI::ExistingFile);
    cmd->add_option("--out", out, "output file or directory");
  };

  guidesynth::EstimateArgs est;
  auto* estimate = app.add_subcommand("estimate", "estimate the rigid transform between two frames");
  add_common(estimate);
  estimate->add_option("--correspondences", est.correspondences, "correspondence file")->required();
  estimate->add_option("--depth-src", est.depth_src, "source depth map (D3FX)")->required();
  estimate->add_option("--depth-tgt", est.depth_tgt, "target depth map (D3FX)")->required();
  estimate->add_option("--intrinsics", est.intrinsics, "key = value file with fx fy cx cy width height");

  guidesynth::BuildDatasetArgs build;
  auto* build_cmd = app.add_subcommand("build-dataset", "turn clips into serialized training tuples");
  add_common(build_cmd);
  build_cmd->add_option("--clips", build.clips, "clip manifest or clip list")->required();
  build_cmd->add_option("--seed", seed, "run seed (overrides the config)");
  build_cmd->add_option("--jobs", jobs, "worker threads")->check(CLI::PositiveNumber);

  guidesynth::SynthSceneArgs synth;
  std::vector<double> rotation;
  std::vector<double> translation;
  auto* synth_cmd = app.add_subcommand("synth-scene", "write a synthetic moving-object clip");
  synth_cmd->add_option("--out", out, "output directory")->required();
  synth_cmd->add_option("--seed", synth.seed, "texture seed");
  synth_cmd->add_option("--clip-id", synth.clip_id, "clip id (prefix when --count > 1)");
  synth_cmd->add_option("--rotation", rotation, "motion as rx ry rz degrees")->expected(3);
  synth_cmd->add_option("--translation", translation, "motion of the object origin")->expected(3);
  synth_cmd->add_option("--frames", synth.frames, "frame count");
  synth_cmd->add_option("--count", synth.count, "number of clips");
  synth_cmd->add_flag("--static", synth.is_static, "no motion at all");

  guidesynth::DdimDemoArgs ddim;
  std::optional<int> ddim_steps;
  auto* ddim_cmd = app.add_subcommand("ddim-demo", "oracle-predictor DDIM round trip");
  add_common(ddim_cmd);
  ddim_cmd->add_option("--seed", seed, "latent seed (overrides the config)");
  ddim_cmd->add_option("--ddim-steps", ddim_steps, "sampling steps (overrides the config)");

  guidesynth::ScheduleDumpArgs dump;
  auto* dump_cmd = app.add_subcommand("schedule-dump", "print t, alpha_t, alpha_bar_t");
  add_common(dump_cmd);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }

  if (*estimate) {
    est.config = config;
    est.out = out;
    return guidesynth::cmd_estimate(est, std::cout, std::cerr);
  }
  if (*build_cmd) {
    build.config = config;
    build.out = out;
    build.seed = seed;
    build.jobs = jobs;
    return guidesynth::cmd_build_dataset(build, std::cout, std::cerr);
  }
  if (*synth_cmd) {
    synth.out = out;
    if (auto r = parse_euler(rotation)) synth.rotation = *r;
    if (!translation.empty()) synth.translation = {translation[0], translation[1], translation[2]};
    return guidesynth::cmd_synth_scene(synth, std::cout, std::cerr);
  }
  if (*ddim_cmd) {
    ddim.config = config;
    ddim.out = out;
    ddim.seed = seed;
    ddim.ddim_steps = ddim_steps;
    return guidesynth::cmd_ddim_demo(ddim, std::cout, std::cerr);
  }
  dump.config = config;
  dump.out = out;
  return guidesynth::cmd_schedule_dump(dump, std::cout, std::cerr);
}
