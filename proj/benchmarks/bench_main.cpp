#include <benchmark/benchmark.h>

#include "guidesynth/diffusion.hpp"
#include "guidesynth/diffusion_fixtures.hpp"
#include "guidesynth/estimation.hpp"
#include "guidesynth/synthetic.hpp"

using namespace guidesynth;

namespace {

const RigInstance& rig() {
  static const RigInstance r = [] {
    RigParams p;
    p.seed = 3;
    return make_estimation_rig(p);
  }();
  return r;
}

void BM_GridSearch(benchmark::State& state) {
  const RigInstance& r = rig();
  const LiftedCorrespondences l = lift_correspondences(r.correspondences, r.depth_src, r.depth_tgt, r.camera);
  EstimationConfig cfg;
  cfg.grid_step_deg = static_cast<double>(state.range(0));
  cfg.threads = 1;
  for (auto _ : state) {
    benchmark::DoNotOptimize(grid_search_rotation(l.p_src, l.p_tgt, l.target_pixels, r.camera, cfg));
  }
  state.counters["points"] = static_cast<double>(l.p_src.size());
}
BENCHMARK(BM_GridSearch)->Arg(30)->Arg(10)->Unit(benchmark::kMillisecond);

void BM_EstimateTransform(benchmark::State& state) {
  const RigInstance& r = rig();
  EstimationConfig cfg;
  cfg.threads = 1;
  for (auto _ : state) {
    benchmark::DoNotOptimize(estimate_transform(r.correspondences, r.depth_src, r.depth_tgt, r.camera, cfg));
  }
}
BENCHMARK(BM_EstimateTransform)->Unit(benchmark::kMillisecond);

void BM_Rasterize(benchmark::State& state) {
  const SceneParams p = default_scene_params();
  const ColoredMesh mesh = pose_mesh(make_plate_object(1), p.source_pose);
  for (auto _ : state) {
    benchmark::DoNotOptimize(rasterize(mesh.mesh, p.camera));
  }
}
BENCHMARK(BM_Rasterize)->Unit(benchmark::kMicrosecond);

void BM_Attention(benchmark::State& state) {
  const int n = static_cast<int>(state.range(0));
  const Eigen::MatrixXd q = random_gaussian_matrix(n, 64, 1);
  const Eigen::MatrixXd k = random_gaussian_matrix(n, 64, 2);
  const Eigen::MatrixXd v = random_gaussian_matrix(n, 64, 3);
  for (auto _ : state) {
    benchmark::DoNotOptimize(scaled_dot_attention(q, k, v));
  }
}
BENCHMARK(BM_Attention)->Arg(64)->Arg(256)->Arg(1024)->Unit(benchmark::kMicrosecond);

void BM_DdimSample(benchmark::State& state) {
  const NoiseSchedule s = default_schedule();
  const LatentImage clean = random_latent(32, 32, 4, 1);
  const LatentImage eps = random_latent(32, 32, 4, 2, LatentRole::kEpsilon);
  const LatentImage mask(32, 32, 1, LatentRole::kMask, 1.0);
  const RandomLinearExtractor ex(9, {16, 16}, 3);
  const DetailSource detail{clean, ex, eps};
  const OraclePredictor oracle(clean, s);
  const LatentImage xT = init_from_guidance(clean, s, eps);
  const int steps = static_cast<int>(state.range(0));
  for (auto _ : state) {
    benchmark::DoNotOptimize(ddim_sample(oracle, xT, clean, mask, &detail, {steps, 0.0}, s));
  }
}
BENCHMARK(BM_DdimSample)->Arg(10)->Arg(100)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
