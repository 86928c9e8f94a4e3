#include "guidesynth/pipeline.hpp"

#include <algorithm>
#include <cctype>
#include <cstdio>
#include <atomic>
#include <cmath>
#include <fstream>
#include <map>
#include <ostream>
#include <set>
#include <thread>

#include "guidesynth/diffusion_fixtures.hpp"
#include "guidesynth/error.hpp"

namespace guidesynth {

namespace {

template <class F>
void as_config_error(F&& f) {
  try {
    f();
  } catch (const Error& e) {
    if (e.code() == ErrorCode::kConfigError) throw;
    throw Error(ErrorCode::kConfigError, e.what());
  }
}

template <class F>
int run_command(std::ostream& log, F&& f) {
  try {
    return f();
  } catch (const Error& e) {
    log << "error [" << to_string(e.code()) << "]: " << e.what() << "\n";
    return exit_code(e.code());
  } catch (const std::exception& e) {
    log << "error: " << e.what() << "\n";
    return 1;
  }
}

CameraIntrinsics intrinsics_from_doc(const KeyValueDoc& doc, CameraIntrinsics k) {
  if (auto v = doc.find("fx")) k.fx = parse_double(*v);
  if (auto v = doc.find("fy")) k.fy = parse_double(*v);
  if (auto v = doc.find("cx")) k.cx = parse_double(*v);
  if (auto v = doc.find("cy")) k.cy = parse_double(*v);
  if (auto v = doc.find("width")) k.width = static_cast<int>(parse_int(*v));
  if (auto v = doc.find("height")) k.height = static_cast<int>(parse_int(*v));
  return k;
}

void write_or_print(const std::filesystem::path& path, const std::string& text, std::ostream& out) {
  if (path.empty()) {
    out << text;
    return;
  }
  if (path.has_parent_path()) {
    std::error_code ec;
    std::filesystem::create_directories(path.parent_path(), ec);
  }
  write_text_file(path, text);
}

std::string_view to_string(ClipStatus s) {
  switch (s) {
    case ClipStatus::kTuple: return "tuple";
    case ClipStatus::kDiscarded: return "discarded";
    case ClipStatus::kMagicFixupUnavailable: return "mf_unavailable";
    case ClipStatus::kFailed: return "failed";
  }
  return "?";
}

std::vector<std::string> split_on(std::string_view text, char sep) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    const std::size_t pos = text.find(sep, start);
    out.emplace_back(text.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

bool safe_clip_id(const std::string& id) {
  if (id.empty() || id == "." || id == "..") return false;
  return std::all_of(id.begin(), id.end(), [](char c) {
    return std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '-' || c == '.';
  });
}

std::size_t main_instance(const Clip& clip) {
  const std::size_t n = clip.masks.front().size();
  std::size_t best = 0;
  double best_score = -1.0;
  for (std::size_t m = 0; m < n; ++m) {
    double sum = 0.0;
    for (const auto& frame : clip.masks) {
      sum += instance_score(frame[m]).total;
    }
    const double mean = sum / static_cast<double>(clip.masks.size());
    if (mean > best_score) {
      best_score = mean;
      best = m;
    }
  }
  return best;
}

std::vector<std::filesystem::path> magic_fixup_pool(const std::string& dir) {
  std::vector<std::filesystem::path> pool;
  if (dir.empty() || !std::filesystem::is_directory(dir)) {
    return pool;
  }
  for (const auto& entry : std::filesystem::directory_iterator(dir)) {
    if (entry.is_directory() && std::filesystem::is_regular_file(entry.path() / "manifest.txt")) {
      pool.push_back(entry.path());
    }
  }
  std::sort(pool.begin(), pool.end());
  return pool;
}

}  // namespace

PipelineConfig PipelineConfig::from_doc(const KeyValueDoc& doc) {
  PipelineConfig c;
  for (const auto& [key, value] : doc.entries()) {
    as_config_error([&] {
      if (key == "fx") c.intrinsics.fx = parse_double(value);
      else if (key == "fy") c.intrinsics.fy = parse_double(value);
      else if (key == "cx") c.intrinsics.cx = parse_double(value);
      else if (key == "cy") c.intrinsics.cy = parse_double(value);
      else if (key == "width") c.intrinsics.width = static_cast<int>(parse_int(value));
      else if (key == "height") c.intrinsics.height = static_cast<int>(parse_int(value));
      else if (key == "grid_step_deg") c.grid_step_deg = parse_double(value);
      else if (key == "max_refine_iters") c.max_refine_iters = static_cast<int>(parse_int(value));
      else if (key == "loss_tol") c.loss_tol = parse_double(value);
      else if (key == "damping_init") c.damping_init = parse_double(value);
      else if (key == "flow_threshold") c.flow_threshold = parse_double(value);
      else if (key == "p_ts") c.probs.transform_source = parse_double(value);
      else if (key == "p_tt") c.probs.transform_target = parse_double(value);
      else if (key == "p_mf") c.probs.magic_fixup = parse_double(value);
      else if (key == "dropout_prob") c.dropout_prob = parse_double(value);
      else if (key == "mf_dir") c.mf_dir = value;
      else if (key == "schedule_steps") c.schedule_steps = static_cast<int>(parse_int(value));
      else if (key == "alpha_first") c.alpha_first = parse_double(value);
      else if (key == "alpha_last") c.alpha_last = parse_double(value);
      else if (key == "ddim_steps") c.ddim_steps = static_cast<int>(parse_int(value));
      else if (key == "latent_height") c.latent_height = static_cast<int>(parse_int(value));
      else if (key == "latent_width") c.latent_width = static_cast<int>(parse_int(value));
      else if (key == "latent_channels") c.latent_channels = static_cast<int>(parse_int(value));
      else if (key == "seed") c.seed = parse_u64(value);
      else throw Error(ErrorCode::kConfigError, "unknown config key '" + key + "'");
    });
  }
  c.validate();
  return c;
}

PipelineConfig PipelineConfig::load(const std::filesystem::path& path) {
  KeyValueDoc doc;
  try {
    doc = KeyValueDoc::load(path);
  } catch (const Error& e) {
    if (e.code() == ErrorCode::kIoError) throw;
    throw Error(ErrorCode::kConfigError, path.string() + ": " + e.what());
  }
  return from_doc(doc);
}

void PipelineConfig::validate() const {
  as_config_error([&] {
    intrinsics.validate();
    estimation().validate();
    probs.validate();
    (void)schedule();
  });
  if (!(dropout_prob >= 0.0 && dropout_prob <= 1.0)) {
    throw Error(ErrorCode::kConfigError, "dropout_prob must lie in [0, 1]");
  }
  if (!(flow_threshold > 0.0) || !std::isfinite(flow_threshold)) {
    throw Error(ErrorCode::kConfigError, "flow_threshold must be positive");
  }
  if (ddim_steps < 1 || ddim_steps > schedule_steps) {
    throw Error(ErrorCode::kConfigError, "ddim_steps must lie in [1, schedule_steps]");
  }
  if (latent_height < 1 || latent_width < 1 || latent_channels < 1 || latent_height > 4096 || latent_width > 4096 ||
      latent_channels > 256) {
    throw Error(ErrorCode::kConfigError, "latent dimensions out of range");
  }
}

EstimationConfig PipelineConfig::estimation() const {
  EstimationConfig e;
  e.grid_step_deg = grid_step_deg;
  e.max_refine_iters = max_refine_iters;
  e.loss_tol = loss_tol;
  e.damping_init = damping_init;
  return e;
}

NoiseSchedule PipelineConfig::schedule() const { return linear_alpha_schedule(schedule_steps, alpha_first, alpha_last); }

Clip load_clip(const std::filesystem::path& manifest) {
  KeyValueDoc doc;
  try {
    doc = KeyValueDoc::load(manifest);
  } catch (const Error& e) {
    if (e.code() == ErrorCode::kIoError) throw;
    throw Error(ErrorCode::kCorruptManifest, manifest.string() + ": " + e.what());
  }
  const std::filesystem::path dir = manifest.parent_path();
  auto require = [&](std::string_view key) -> const std::string& {
    if (!doc.contains(key)) {
      throw Error(ErrorCode::kCorruptManifest, manifest.string() + " lacks '" + std::string(key) + "'");
    }
    return doc.require(key);
  };
  auto file = [&](const std::string& name) {
    const std::filesystem::path p = dir / name;
    if (!std::filesystem::is_regular_file(p)) {
      throw Error(ErrorCode::kCorruptManifest, manifest.string() + " lists missing file " + name);
    }
    return p;
  };

  Clip clip;
  clip.id = require("clip_id");
  if (!safe_clip_id(clip.id)) {
    throw Error(ErrorCode::kCorruptManifest, "clip id '" + clip.id + "' is not a plain file name");
  }
  if (doc.contains("seed")) {
    try {
      clip.seed = parse_u64(doc.require("seed"));
    } catch (const Error& e) {
      throw Error(ErrorCode::kCorruptManifest, manifest.string() + ": bad seed: " + e.what());
    }
  }
  try {
    clip.camera = intrinsics_from_doc(doc, {});
    for (const char* key : {"fx", "fy", "cx", "cy", "width", "height"}) require(key);
    clip.camera.validate();
  } catch (const Error& e) {
    if (e.code() == ErrorCode::kCorruptManifest) throw;
    throw Error(ErrorCode::kCorruptManifest, manifest.string() + ": " + e.what());
  }

  const auto frames = split_whitespace(require("frames"));
  const auto flows = split_whitespace(require("flows"));
  const auto masks = split_whitespace(require("masks"));
  const auto meshes = split_whitespace(require("meshes"));
  if (frames.size() < 2 || flows.size() + 1 != frames.size() || masks.size() != frames.size() ||
      meshes.size() != frames.size()) {
    throw Error(ErrorCode::kCorruptManifest, manifest.string() + ": frame, flow, mask and mesh counts disagree");
  }
  const int w = clip.camera.width;
  const int h = clip.camera.height;
  for (const auto& f : frames) {
    clip.frames.push_back(read_ppm(file(f)));
    if (clip.frames.back().width() != w || clip.frames.back().height() != h) {
      throw Error(ErrorCode::kCorruptManifest, f + " does not match the clip resolution");
    }
  }
  for (const auto& f : flows) {
    clip.flows.push_back(read_flow(file(f)));
    if (clip.flows.back().width != w || clip.flows.back().height != h) {
      throw Error(ErrorCode::kCorruptManifest, f + " does not match the clip resolution");
    }
  }
  for (const auto& group : masks) {
    std::vector<InstanceMask> per_frame;
    for (const auto& f : split_on(group, ',')) {
      per_frame.push_back(read_mask_pgm(file(f)));
      if (per_frame.back().width != w || per_frame.back().height != h) {
        throw Error(ErrorCode::kCorruptManifest, f + " does not match the clip resolution");
      }
    }
    if (!clip.masks.empty() && per_frame.size() != clip.masks.front().size()) {
      throw Error(ErrorCode::kCorruptManifest, "instance count differs between frames");
    }
    clip.masks.push_back(std::move(per_frame));
  }
  for (const auto& f : meshes) {
    clip.meshes.push_back(read_off(file(f)));
  }
  clip.tracks = parse_tracks(read_text_file(file(require("tracks"))));
  if (clip.tracks.size() != frames.size()) {
    throw Error(ErrorCode::kCorruptManifest, "track file frame count differs from the clip");
  }
  return clip;
}

std::vector<std::filesystem::path> read_clip_list(const std::filesystem::path& path) {
  const std::string text = read_text_file(path);
  try {
    if (KeyValueDoc::parse(text).contains("clip_id")) {
      return {path};
    }
  } catch (const Error&) {
    // not a manifest; read it as a list
  }
  std::vector<std::filesystem::path> out;
  for (auto line : split_on(text, '\n')) {
    const auto tok = split_whitespace(line);
    if (tok.empty() || tok.front().front() == '#') continue;
    if (tok.size() != 1) {
      throw Error(ErrorCode::kConfigError, "clip list lines must hold exactly one path");
    }
    out.push_back(path.parent_path() / tok.front());
  }
  if (out.empty()) {
    throw Error(ErrorCode::kConfigError, "clip list " + path.string() + " is empty");
  }
  return out;
}

std::uint64_t clip_seed(std::uint64_t run_seed, const std::string& clip_id, std::uint64_t manifest_seed) {
  std::uint64_t h = 0xcbf29ce484222325ull;  // FNV-1a
  for (unsigned char c : clip_id) {
    h = (h ^ c) * 0x100000001b3ull;
  }
  return mix_seed(run_seed ^ mix_seed(h ^ mix_seed(manifest_seed)));
}

ClipOutcome process_clip(const std::filesystem::path& manifest, const PipelineConfig& cfg,
                         const std::filesystem::path& out_dir) {
  ClipOutcome o;
  // Until the manifest loads, name the clip after its directory.
  o.clip_id = manifest.parent_path().filename().string();
  if (o.clip_id.empty() || !safe_clip_id(o.clip_id)) o.clip_id = manifest.stem().string();
  try {
    const Clip clip = load_clip(manifest);
    o.clip_id = clip.id;
    const std::uint64_t seed = clip_seed(cfg.seed, clip.id, clip.seed);

    const auto pair = select_frame_pair(clip.flows, cfg.flow_threshold, mix_seed(seed ^ 0x9a1full));
    if (!pair) {
      o.status = ClipStatus::kDiscarded;
      return o;
    }
    o.pair = pair;
    const auto i = static_cast<std::size_t>(pair->src);
    const auto j = static_cast<std::size_t>(pair->tgt);

    Rng rng(seed);
    const TrainingSetting setting = sample_training_setting(rng, cfg.probs);
    o.setting = setting;
    o.dropout = sample_conditioning_dropout(rng, cfg.dropout_prob);

    GuidanceTuple t;
    if (setting == TrainingSetting::kMagicFixup) {
      const auto pool = magic_fixup_pool(cfg.mf_dir);
      if (pool.empty()) {
        o.status = ClipStatus::kMagicFixupUnavailable;
        return o;
      }
      t = load_tuple(pool[static_cast<std::size_t>(rng.uniform_index(pool.size()))]);
      t.setting = TrainingSetting::kMagicFixup;
      t.drop_source_conditioning = o.dropout;
    } else {
      const std::size_t inst = main_instance(clip);
      const CameraIntrinsics& k = clip.camera;

      CorrespondenceSet c;
      for (std::size_t n = 0; n < clip.tracks[i].pixels.size(); ++n) {
        c.push_back(clip.tracks[i].pixels[n], clip.tracks[j].pixels[n], clip.tracks[i].visible[n] != 0,
                    clip.tracks[j].visible[n] != 0);
      }
      EstimationConfig ecfg = cfg.estimation();
      ecfg.threads = 1;  // clips already run in parallel
      const DepthMap depth_i = rasterize_depth(clip.meshes[i].mesh, k);
      const DepthMap depth_j = rasterize_depth(clip.meshes[j].mesh, k);
      const EstimationResult est = estimate_transform(c, depth_i, depth_j, k, ecfg);

      Guidance g;
      if (setting == TrainingSetting::kTransformSource) {
        const Render r = render_mesh(pose_mesh(clip.meshes[i], est.transform), k);
        g = build_guidance_ts(r.rgb, r.mask, clip.frames[j], clip.masks[j][inst]);
      } else {
        const Render r = render_mesh(clip.meshes[j], k);
        const FlowField flow = compose_flows(clip.flows, pair->src, pair->tgt);
        g = build_guidance_tt(r.rgb, r.mask, clip.frames[i], clip.masks[i][inst], flow);
      }
      t.source = clip.frames[i];
      t.guide = std::move(g.image);
      t.mask = std::move(g.mask);
      t.target = clip.frames[j];
      t.setting = setting;
      t.provenance = {clip.id, pair->src, pair->tgt};
      t.drop_source_conditioning = o.dropout;
    }
    serialize_tuple(t, out_dir / clip.id);
    o.mask_counts = t.mask.counts();
    o.status = ClipStatus::kTuple;
  } catch (const Error& e) {
    o.status = ClipStatus::kFailed;
    o.message = std::string(to_string(e.code())) + ": " + e.what();
  } catch (const std::exception& e) {
    o.status = ClipStatus::kFailed;
    o.message = e.what();
  }
  return o;
}

std::string format_report(const std::vector<ClipOutcome>& outcomes) {
  std::map<ClipStatus, std::size_t> by_status;
  std::map<TrainingSetting, std::size_t> by_setting;
  std::size_t dropped = 0;
  std::array<std::size_t, 3> mask_total{};
  for (const auto& o : outcomes) {
    ++by_status[o.status];
    if (o.status == ClipStatus::kTuple) {
      ++by_setting[*o.setting];
      dropped += o.dropout ? 1 : 0;
      for (int l = 0; l < 3; ++l) mask_total[l] += o.mask_counts[l];
    }
  }
  KeyValueDoc doc;
  doc.set("clips", std::to_string(outcomes.size()));
  doc.set("tuples", std::to_string(by_status[ClipStatus::kTuple]));
  doc.set("discarded", std::to_string(by_status[ClipStatus::kDiscarded]));
  doc.set("mf_unavailable", std::to_string(by_status[ClipStatus::kMagicFixupUnavailable]));
  doc.set("failed", std::to_string(by_status[ClipStatus::kFailed]));
  for (TrainingSetting s :
       {TrainingSetting::kTransformSource, TrainingSetting::kTransformTarget, TrainingSetting::kMagicFixup}) {
    doc.set("setting_" + std::string(to_string(s)), std::to_string(by_setting[s]));
  }
  doc.set("source_dropout", std::to_string(dropped));
  doc.set("mask_counts", std::to_string(mask_total[0]) + " " + std::to_string(mask_total[1]) + " " +
                             std::to_string(mask_total[2]));
  for (const auto& o : outcomes) {
    std::string line(to_string(o.status));
    if (o.status == ClipStatus::kTuple) {
      line += " " + std::string(to_string(*o.setting)) + " " + std::to_string(o.pair->src) + " " +
              std::to_string(o.pair->tgt) + " dropout=" + (o.dropout ? "1" : "0") + " mask=" +
              std::to_string(o.mask_counts[0]) + "," + std::to_string(o.mask_counts[1]) + "," +
              std::to_string(o.mask_counts[2]);
    } else if (o.status == ClipStatus::kFailed) {
      line += " " + o.message;
    }
    doc.set("clip." + o.clip_id, line);
  }
  return doc.str();
}

int cmd_estimate(const EstimateArgs& a, std::ostream& out, std::ostream& log) {
  return run_command(log, [&] {
    const PipelineConfig cfg = a.config.empty() ? PipelineConfig{} : PipelineConfig::load(a.config);
    CameraIntrinsics k = cfg.intrinsics;
    if (!a.intrinsics.empty()) {
      k = intrinsics_from_doc(KeyValueDoc::load(a.intrinsics), k);
    }
    k.validate();
    const CorrespondenceSet c = read_correspondences(a.correspondences);
    const DepthMap ds = read_depth_map(a.depth_src);
    const DepthMap dt = read_depth_map(a.depth_tgt);
    const EstimationResult r = estimate_transform(c, ds, dt, k, cfg.estimation());
    write_or_print(a.out, format_estimation_result(r), out);
    return 0;
  });
}

int cmd_build_dataset(const BuildDatasetArgs& a, std::ostream& out, std::ostream& log) {
  return run_command(log, [&] {
    PipelineConfig cfg = a.config.empty() ? PipelineConfig{} : PipelineConfig::load(a.config);
    if (a.seed) cfg.seed = *a.seed;
    if (a.jobs < 1) {
      throw Error(ErrorCode::kConfigError, "--jobs must be at least 1");
    }
    if (a.out.empty()) {
      throw Error(ErrorCode::kConfigError, "--out is required");
    }
    const auto manifests = read_clip_list(a.clips);

    // Clip ids key the output directories, so they must be unique.
    std::set<std::string> ids;
    for (const auto& m : manifests) {
      std::optional<std::string> id;
      try {
        id = KeyValueDoc::load(m).find("clip_id");
      } catch (const Error&) {
        continue;  // reported as a failed clip below
      }
      if (id && !ids.insert(*id).second) {
        throw Error(ErrorCode::kConfigError, "clip id '" + *id + "' appears twice");
      }
    }

    std::error_code ec;
    std::filesystem::create_directories(a.out, ec);
    if (ec) {
      throw Error(ErrorCode::kIoError, "cannot create " + a.out.string() + ": " + ec.message());
    }

    std::vector<ClipOutcome> outcomes(manifests.size());
    std::atomic<std::size_t> next{0};
    auto worker = [&] {
      for (std::size_t n = next++; n < manifests.size(); n = next++) {
        outcomes[n] = process_clip(manifests[n], cfg, a.out);
      }
    };
    {
      std::vector<std::jthread> pool;
      const int workers = std::min<int>(a.jobs, static_cast<int>(manifests.size()));
      for (int w = 1; w < workers; ++w) pool.emplace_back(worker);
      worker();
    }

    for (const auto& o : outcomes) {
      if (o.status == ClipStatus::kFailed) {
        log << "clip " << o.clip_id << " failed: " << o.message << "\n";
      }
    }
    const std::string report = format_report(outcomes);
    write_text_file(a.out / "report.txt", report);
    out << report;
    return 0;
  });
}

SceneParams scene_params_for(const EulerAngles& rotation, const Eigen::Vector3d& translation, int frames,
                             std::uint64_t texture_seed) {
  SceneParams p = default_scene_params();
  p.frames = frames;
  p.texture_seed = texture_seed;
  p.motion.rotation = euler_to_rotation(rotation);
  const Eigen::Vector3d c1 = p.source_pose.translation + translation;
  p.motion.translation = c1 - p.motion.rotation * p.source_pose.translation;
  return p;
}

int cmd_synth_scene(const SynthSceneArgs& a, std::ostream& out, std::ostream& log) {
  return run_command(log, [&] {
    if (a.out.empty()) throw Error(ErrorCode::kInvalidParams, "--out is required");
    if (a.frames < 2 || a.frames > 1000) throw Error(ErrorCode::kInvalidParams, "--frames must lie in [2, 1000]");
    if (a.count < 1 || a.count > 10000) throw Error(ErrorCode::kInvalidParams, "--count must lie in [1, 10000]");
    if (!safe_clip_id(a.clip_id)) throw Error(ErrorCode::kInvalidParams, "clip id must be a plain file name");
    if (!a.translation.allFinite() || !std::isfinite(a.rotation.rx) || !std::isfinite(a.rotation.ry) ||
        !std::isfinite(a.rotation.rz)) {
      throw Error(ErrorCode::kInvalidParams, "motion must be finite");
    }

    auto make = [&](const EulerAngles& rot, std::uint64_t texture_seed) {
      if (a.is_static) {
        return scene_params_for({0.0, 0.0, 0.0}, Eigen::Vector3d::Zero(), a.frames, texture_seed);
      }
      return scene_params_for(rot, a.translation, a.frames, texture_seed);
    };

    if (a.count == 1) {
      const auto manifest = write_scene(generate_scene(make(a.rotation, a.seed)), a.clip_id, a.out, a.seed);
      out << manifest.string() << "\n";
      return 0;
    }
    std::string list;
    for (int n = 0; n < a.count; ++n) {
      char id[32];
      std::snprintf(id, sizeof(id), "%s_%03d", a.clip_id.c_str(), n);
      // Vary the motion across clips so the batch is not one scene repeated.
      EulerAngles rot = a.rotation;
      rot.ry += 5.0 * (n % 5);
      rot.rx += 5.0 * ((n / 5) % 3);
      const std::uint64_t seed = mix_seed(a.seed + static_cast<std::uint64_t>(n));
      write_scene(generate_scene(make(rot, seed)), id, a.out / id, seed);
      list += std::string(id) + "/clip.txt\n";
    }
    write_text_file(a.out / "clips.txt", list);
    out << (a.out / "clips.txt").string() << "\n";
    return 0;
  });
}

int cmd_ddim_demo(const DdimDemoArgs& a, std::ostream& out, std::ostream& log) {
  return run_command(log, [&] {
    PipelineConfig cfg = a.config.empty() ? PipelineConfig{} : PipelineConfig::load(a.config);
    if (a.seed) cfg.seed = *a.seed;
    if (a.ddim_steps) cfg.ddim_steps = *a.ddim_steps;
    cfg.validate();
    const NoiseSchedule s = cfg.schedule();
    const int h = cfg.latent_height;
    const int w = cfg.latent_width;
    const int ch = cfg.latent_channels;

    const LatentImage clean = random_latent(h, w, ch, mix_seed(cfg.seed), LatentRole::kGuide);
    const LatentImage eps = random_latent(h, w, ch, mix_seed(cfg.seed + 1), LatentRole::kEpsilon);
    const LatentImage src_noise = random_latent(h, w, ch, mix_seed(cfg.seed + 2), LatentRole::kEpsilon);
    const LatentImage mask(h, w, 1, LatentRole::kMask, 1.0);
    const LatentImage x_T = init_from_guidance(clean, s, eps);
    const RandomLinearExtractor extractor(2 * ch + 1, {8, 8}, mix_seed(cfg.seed + 3));
    const DetailSource detail{clean, extractor, src_noise};
    const OraclePredictor oracle(clean, s);

    const LatentImage x0 = ddim_sample(oracle, x_T, clean, mask, &detail, {cfg.ddim_steps, 0.0}, s);
    double err = 0.0;
    for (std::size_t n = 0; n < x0.values().size(); ++n) {
      err = std::max(err, std::abs(x0.values()[n] - clean.values()[n]));
    }

    KeyValueDoc result;
    result.set("seed", std::to_string(cfg.seed));
    result.set("schedule_steps", std::to_string(cfg.schedule_steps));
    result.set("ddim_steps", std::to_string(cfg.ddim_steps));
    result.set("latent_shape", std::to_string(h) + " " + std::to_string(w) + " " + std::to_string(ch));
    result.set("max_abs_error", format_double(err));
    if (a.out.empty()) {
      out << result.str();
    } else {
      std::error_code ec;
      std::filesystem::create_directories(a.out, ec);
      result.save(a.out / "result.txt");
      write_text_file(a.out / "schedule.txt", format_schedule(s));
      write_latent(a.out / "x0.d3fx", x0);
      out << "max_abs_error = " << format_double(err) << "\n";
    }
    return 0;
  });
}

int cmd_schedule_dump(const ScheduleDumpArgs& a, std::ostream& out, std::ostream& log) {
  return run_command(log, [&] {
    const PipelineConfig cfg = a.config.empty() ? PipelineConfig{} : PipelineConfig::load(a.config);
    write_or_print(a.out, format_schedule(cfg.schedule()), out);
    return 0;
  });
}

}  // namespace guidesynth
