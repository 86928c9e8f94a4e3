#include "guidesynth/synthetic.hpp"

#include <cmath>
#include <cstdio>
#include <numbers>

#include <Eigen/Geometry>

#include "guidesynth/error.hpp"
#include "guidesynth/text_format.hpp"

namespace guidesynth {

namespace {

constexpr int kCellsPerSide = 4;
constexpr int kTrianglesPerPlate = 2 * kCellsPerSide * kCellsPerSide;
constexpr double kMinFacingCos = 0.25;

struct PlateSpec {
  Eigen::Vector3d u_axis;
  Eigen::Vector3d v_axis;
  Eigen::Vector3d normal;
  double half_u;
  double half_v;
};

const std::array<PlateSpec, 3>& plates() {
  static const std::array<PlateSpec, 3> specs = {{
      {Eigen::Vector3d::UnitX(), Eigen::Vector3d::UnitY(), Eigen::Vector3d::UnitZ(), 1.0, 0.8},
      {Eigen::Vector3d::UnitX(), Eigen::Vector3d::UnitZ(), Eigen::Vector3d::UnitY(), 0.9, 0.7},
      {Eigen::Vector3d::UnitY(), Eigen::Vector3d::UnitZ(), Eigen::Vector3d::UnitX(), 0.8, 0.6},
  }};
  return specs;
}

Rgb8 random_color(Rng& rng) {
  return {static_cast<std::uint8_t>(40 + rng.uniform_index(200)), static_cast<std::uint8_t>(40 + rng.uniform_index(200)),
          static_cast<std::uint8_t>(40 + rng.uniform_index(200))};
}

std::string frame_name(const char* prefix, int k, const char* ext) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%s_%03d%s", prefix, k, ext);
  return buf;
}

Eigen::Vector3d uniform_unit_vector(Rng& rng) {
  Eigen::Vector3d v;
  do {
    v = {rng.normal(), rng.normal(), rng.normal()};
  } while (v.norm() < 1e-12);
  return v.normalized();
}

// Background texture and a static distractor rectangle touching the bottom
// border.
Image background_image(const CameraIntrinsics& k, std::uint64_t texture_seed, InstanceMask* distractor) {
  Rng rng(mix_seed(texture_seed ^ 0x5bd1e995ull));
  const int blocks_x = (k.width + 7) / 8;
  const int blocks_y = (k.height + 7) / 8;
  std::vector<Rgb8> block_colors;
  for (int i = 0; i < blocks_x * blocks_y; ++i) {
    const auto g = static_cast<std::uint8_t>(60 + rng.uniform_index(60));
    block_colors.push_back({g, static_cast<std::uint8_t>(g + 10), static_cast<std::uint8_t>(g + 20)});
  }
  const Rgb8 distractor_color = random_color(rng);
  Image img(k.width, k.height);
  const int dx_end = k.width / 5;
  const int dy_begin = k.height - k.height / 6;
  for (int y = 0; y < k.height; ++y) {
    for (int x = 0; x < k.width; ++x) {
      const bool in_distractor = x < dx_end && y >= dy_begin;
      img.set(x, y, in_distractor ? distractor_color : block_colors[static_cast<std::size_t>((y / 8) * blocks_x + x / 8)]);
      if (distractor != nullptr) {
        distractor->set(x, y, in_distractor);
      }
    }
  }
  return img;
}

}  // namespace

CameraIntrinsics default_camera() { return {300.0, 300.0, 160.0, 120.0, 320, 240}; }

int plate_of_triangle(int triangle) { return triangle / kTrianglesPerPlate; }

ColoredMesh make_plate_object(std::uint64_t texture_seed) {
  Rng rng(mix_seed(texture_seed));
  ColoredMesh out;
  for (const auto& plate : plates()) {
    const int base = static_cast<int>(out.mesh.vertices.size());
    for (int j = 0; j <= kCellsPerSide; ++j) {
      for (int i = 0; i <= kCellsPerSide; ++i) {
        const double su = -plate.half_u + 2.0 * plate.half_u * i / kCellsPerSide;
        const double sv = -plate.half_v + 2.0 * plate.half_v * j / kCellsPerSide;
        out.mesh.vertices.push_back(su * plate.u_axis + sv * plate.v_axis);
      }
    }
    for (int j = 0; j < kCellsPerSide; ++j) {
      for (int i = 0; i < kCellsPerSide; ++i) {
        const int v00 = base + j * (kCellsPerSide + 1) + i;
        const int v10 = v00 + 1;
        const int v01 = v00 + kCellsPerSide + 1;
        const int v11 = v01 + 1;
        const Rgb8 c = random_color(rng);
        out.mesh.triangles.push_back({v00, v10, v11});
        out.mesh.triangles.push_back({v00, v11, v01});
        out.face_colors.push_back(c);
        out.face_colors.push_back(c);
      }
    }
  }
  return out;
}

std::vector<SurfaceSample> plate_surface_samples(int samples_per_side) {
  if (samples_per_side < 1) {
    throw Error(ErrorCode::kInvalidParams, "samples_per_side must be positive");
  }
  std::vector<SurfaceSample> out;
  for (int p = 0; p < 3; ++p) {
    const auto& plate = plates()[static_cast<std::size_t>(p)];
    for (int j = 0; j < samples_per_side; ++j) {
      for (int i = 0; i < samples_per_side; ++i) {
        const double su = plate.half_u * (-1.0 + (2.0 * i + 1.0) / samples_per_side);
        const double sv = plate.half_v * (-1.0 + (2.0 * j + 1.0) / samples_per_side);
        out.push_back({su * plate.u_axis + sv * plate.v_axis, p});
      }
    }
  }
  return out;
}

TrackFrame track_samples(std::span<const SurfaceSample> samples, const RigidTransform& pose, const Raster& raster,
                         const CameraIntrinsics& k) {
  TrackFrame out;
  out.pixels.reserve(samples.size());
  out.visible.reserve(samples.size());
  for (const auto& s : samples) {
    const Point3 q = pose(s.position);
    if (q.z() <= 0.0) {
      out.pixels.emplace_back(-1.0, -1.0);
      out.visible.push_back(0);
      continue;
    }
    const Pixel px = project(q, k);
    out.pixels.push_back(px);
    bool visible = px.x() >= 0.0 && px.x() < k.width - 1 && px.y() >= 0.0 && px.y() < k.height - 1;
    if (visible) {
      const Eigen::Vector3d n = pose.rotation * plates()[static_cast<std::size_t>(s.plate)].normal;
      visible = std::abs(n.dot(q.normalized())) > kMinFacingCos;
    }
    if (visible) {
      const int x0 = static_cast<int>(std::floor(px.x()));
      const int y0 = static_cast<int>(std::floor(px.y()));
      for (int dy = 0; dy <= 1 && visible; ++dy) {
        for (int dx = 0; dx <= 1 && visible; ++dx) {
          const std::int32_t tri = raster.triangle_at(x0 + dx, y0 + dy);
          visible = tri >= 0 && plate_of_triangle(tri) == s.plate;
        }
      }
    }
    out.visible.push_back(visible ? 1 : 0);
  }
  return out;
}

Render render_mesh(const ColoredMesh& mesh, const CameraIntrinsics& k, Rgb8 background) {
  Render out{Image(k.width, k.height, background), InstanceMask(k.width, k.height, "render"), rasterize(mesh.mesh, k)};
  const bool colored = mesh.face_colors.size() == mesh.mesh.triangles.size();
  for (int y = 0; y < k.height; ++y) {
    for (int x = 0; x < k.width; ++x) {
      const std::int32_t tri = out.raster.triangle_at(x, y);
      if (tri < 0) {
        continue;
      }
      out.mask.set(x, y, true);
      out.rgb.set(x, y, colored ? mesh.face_colors[static_cast<std::size_t>(tri)] : Rgb8{200, 200, 200});
    }
  }
  return out;
}

ColoredMesh pose_mesh(const ColoredMesh& mesh, const RigidTransform& pose) {
  ColoredMesh out = mesh;
  out.mesh.vertices = apply_transform(pose, mesh.mesh.vertices);
  return out;
}

RigidTransform random_rotation_transform(Rng& rng) {
  Eigen::Quaterniond q(rng.normal(), rng.normal(), rng.normal(), rng.normal());
  q.normalize();
  RigidTransform t;
  t.rotation = q.toRotationMatrix();
  return t;
}

SceneParams default_scene_params() {
  SceneParams p;
  p.source_pose.rotation = euler_to_rotation({20.0, 30.0, 10.0});
  p.source_pose.translation = {0.0, 0.0, 5.0};
  p.motion.rotation = euler_to_rotation({0.0, 30.0, 0.0});
  const Eigen::Vector3d c1(0.2, 0.0, 5.0);
  p.motion.translation = c1 - p.motion.rotation * p.source_pose.translation;
  return p;
}

RigidTransform object_pose(const SceneParams& p, int frame) {
  if (p.frames < 2) {
    throw Error(ErrorCode::kInvalidParams, "a scene needs at least two frames");
  }
  if (frame == 0) {
    return p.source_pose;
  }
  const RigidTransform last = p.motion * p.source_pose;
  if (frame == p.frames - 1) {
    return last;
  }
  const double s = static_cast<double>(frame) / (p.frames - 1);
  const Eigen::AngleAxisd aa(p.motion.rotation);
  RigidTransform pose;
  pose.rotation = Eigen::AngleAxisd(s * aa.angle(), aa.axis()).toRotationMatrix() * p.source_pose.rotation;
  pose.translation = p.source_pose.translation + s * (last.translation - p.source_pose.translation);
  return pose;
}

SyntheticScene generate_scene(const SceneParams& p) {
  p.camera.validate();
  if (p.frames < 2) {
    throw Error(ErrorCode::kInvalidParams, "a scene needs at least two frames");
  }
  SyntheticScene scene;
  scene.params = p;
  scene.object = make_plate_object(p.texture_seed);
  const auto samples = plate_surface_samples(p.samples_per_side);
  const CameraIntrinsics& k = p.camera;

  std::vector<RigidTransform> poses;
  for (int f = 0; f < p.frames; ++f) {
    poses.push_back(object_pose(p, f));
  }

  for (int f = 0; f < p.frames; ++f) {
    SceneFrame frame;
    frame.mesh = pose_mesh(scene.object, poses[static_cast<std::size_t>(f)]);
    InstanceMask distractor(k.width, k.height, "distractor");
    frame.image = background_image(k, p.texture_seed, &distractor);
    const Render r = render_mesh(frame.mesh, k);
    InstanceMask object_mask = r.mask;
    object_mask.label = "object";
    for (int y = 0; y < k.height; ++y) {
      for (int x = 0; x < k.width; ++x) {
        if (r.mask.at(x, y)) {
          frame.image.set(x, y, r.rgb.at(x, y));
          distractor.set(x, y, false);
        }
      }
    }
    frame.raster = r.raster;
    frame.tracks = track_samples(samples, poses[static_cast<std::size_t>(f)], frame.raster, k);
    frame.instances = {std::move(object_mask), std::move(distractor)};
    scene.frames.push_back(std::move(frame));
  }

  for (int f = 0; f + 1 < p.frames; ++f) {
    FlowField flow(k.width, k.height);
    const RigidTransform& a = poses[static_cast<std::size_t>(f)];
    const RigidTransform& b = poses[static_cast<std::size_t>(f + 1)];
    if (!(a == b)) {
      const RigidTransform step = b * a.inverse();
      const Raster& raster = scene.frames[static_cast<std::size_t>(f)].raster;
      for (int y = 0; y < k.height; ++y) {
        for (int x = 0; x < k.width; ++x) {
          if (!raster.depth.valid(x, y)) {
            continue;
          }
          const Point3 q = unproject(Pixel(x, y), raster.depth, k);
          const Point3 moved = step(q);
          if (moved.z() <= 0.0) {
            continue;
          }
          const Pixel to = project(moved, k);
          flow.u[flow.offset(x, y)] = to.x() - x;
          flow.v[flow.offset(x, y)] = to.y() - y;
        }
      }
    }
    scene.flows.push_back(std::move(flow));
  }
  return scene;
}

CorrespondenceSet scene_correspondences(const SyntheticScene& s, int src, int tgt) {
  const auto& a = s.frames.at(static_cast<std::size_t>(src)).tracks;
  const auto& b = s.frames.at(static_cast<std::size_t>(tgt)).tracks;
  CorrespondenceSet c;
  for (std::size_t i = 0; i < a.pixels.size(); ++i) {
    c.push_back(a.pixels[i], b.pixels[i], a.visible[i] != 0, b.visible[i] != 0);
  }
  return c;
}

std::string format_tracks(const std::vector<TrackFrame>& frames) {
  if (frames.empty()) {
    return "0 0\n";
  }
  const std::size_t m = frames.front().pixels.size();
  std::string out = std::to_string(m) + " " + std::to_string(frames.size()) + "\n";
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t f = 0; f < frames.size(); ++f) {
      if (f != 0) out += ' ';
      out += format_double(frames[f].pixels[i].x()) + " " + format_double(frames[f].pixels[i].y()) + " " +
             std::to_string(static_cast<int>(frames[f].visible[i]));
    }
    out += '\n';
  }
  return out;
}

std::vector<TrackFrame> parse_tracks(const std::string& text) {
  const auto tok = split_whitespace(text);
  if (tok.size() < 2) {
    throw Error(ErrorCode::kParseError, "track file lacks its header");
  }
  const long long m = parse_int(tok[0]);
  const long long f = parse_int(tok[1]);
  if (m < 0 || f < 0 || tok.size() != 2 + 3 * static_cast<std::size_t>(m) * static_cast<std::size_t>(f)) {
    throw Error(ErrorCode::kParseError, "track file size does not match its header");
  }
  std::vector<TrackFrame> frames(static_cast<std::size_t>(f));
  std::size_t cursor = 2;
  for (long long i = 0; i < m; ++i) {
    for (long long k = 0; k < f; ++k) {
      auto& fr = frames[static_cast<std::size_t>(k)];
      fr.pixels.emplace_back(parse_double(tok[cursor]), parse_double(tok[cursor + 1]));
      fr.visible.push_back(parse_int(tok[cursor + 2]) != 0 ? 1 : 0);
      cursor += 3;
    }
  }
  return frames;
}

std::filesystem::path write_scene(const SyntheticScene& s, const std::string& clip_id,
                                  const std::filesystem::path& dir, std::uint64_t clip_seed) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) {
    throw Error(ErrorCode::kIoError, "cannot create " + dir.string() + ": " + ec.message());
  }
  const CameraIntrinsics& k = s.params.camera;
  std::string frames, flows, masks, meshes, depths;
  std::vector<TrackFrame> tracks;
  for (std::size_t f = 0; f < s.frames.size(); ++f) {
    const int fi = static_cast<int>(f);
    const SceneFrame& frame = s.frames[f];
    const std::string img = frame_name("frame", fi, ".ppm");
    write_ppm(dir / img, frame.image);
    frames += (f ? " " : "") + img;

    std::string mask_list;
    for (std::size_t m = 0; m < frame.instances.size(); ++m) {
      const std::string name = frame_name("mask", fi, ("_" + std::to_string(m) + ".pgm").c_str());
      write_mask_pgm(dir / name, frame.instances[m]);
      mask_list += (m ? "," : "") + name;
    }
    masks += (f ? " " : "") + mask_list;

    const std::string mesh = frame_name("mesh", fi, ".off");
    write_off(dir / mesh, frame.mesh);
    meshes += (f ? " " : "") + mesh;

    const std::string depth = frame_name("depth", fi, ".d3fx");
    write_depth_map(dir / depth, frame.raster.depth);
    depths += (f ? " " : "") + depth;

    tracks.push_back(frame.tracks);
  }
  for (std::size_t f = 0; f < s.flows.size(); ++f) {
    const std::string name = frame_name("flow", static_cast<int>(f), ".d3fx");
    write_flow(dir / name, s.flows[f]);
    flows += (f ? " " : "") + name;
  }
  write_text_file(dir / "tracks.txt", format_tracks(tracks));
  write_correspondences(dir / "correspondences.txt",
                        scene_correspondences(s, 0, static_cast<int>(s.frames.size()) - 1));

  KeyValueDoc truth;
  std::vector<double> rot;
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) rot.push_back(s.params.motion.rotation(i, j));
  truth.set("rotation", format_doubles(rot));
  const auto& t = s.params.motion.translation;
  truth.set("translation", format_doubles({t.x(), t.y(), t.z()}));
  truth.set("texture_seed", std::to_string(s.params.texture_seed));
  truth.save(dir / "truth.txt");

  KeyValueDoc clip;
  clip.set("clip_id", clip_id);
  clip.set("seed", std::to_string(clip_seed));
  clip.set("fx", format_double(k.fx));
  clip.set("fy", format_double(k.fy));
  clip.set("cx", format_double(k.cx));
  clip.set("cy", format_double(k.cy));
  clip.set("width", std::to_string(k.width));
  clip.set("height", std::to_string(k.height));
  clip.set("frames", frames);
  clip.set("flows", flows);
  clip.set("masks", masks);
  clip.set("meshes", meshes);
  clip.set("depths", depths);
  clip.set("tracks", "tracks.txt");
  const auto manifest = dir / "clip.txt";
  clip.save(manifest);
  return manifest;
}

RigInstance make_estimation_rig(const RigParams& p) {
  Rng rng(mix_seed(p.seed ^ 0x2545f4914f6cdd1dull));
  const CameraIntrinsics k = default_camera();
  const ColoredMesh object = make_plate_object(p.seed);
  const auto samples = plate_surface_samples(p.samples_per_side);

  for (int attempt = 0; attempt < 1000; ++attempt) {
    RigidTransform src_pose = random_rotation_transform(rng);
    src_pose.translation = {0.6 * rng.uniform() - 0.3, 0.4 * rng.uniform() - 0.2, 5.0 + 0.6 * rng.uniform() - 0.3};

    Eigen::Matrix3d r;
    if (p.fixed_rotation != nullptr) {
      r = euler_to_rotation(*p.fixed_rotation);
    } else {
      const Eigen::Vector3d axis = uniform_unit_vector(rng);
      const double angle = rng.uniform() * p.max_angle_deg * std::numbers::pi / 180.0;
      r = Eigen::AngleAxisd(angle, axis).toRotationMatrix();
    }
    const Eigen::Vector3d c1(0.6 * rng.uniform() - 0.3, 0.4 * rng.uniform() - 0.2, 5.0 + 0.6 * rng.uniform() - 0.3);
    RigidTransform truth;
    truth.rotation = r;
    truth.translation = c1 - r * src_pose.translation;
    const RigidTransform tgt_pose = truth * src_pose;

    const Raster ra = rasterize(pose_mesh(object, src_pose).mesh, k);
    const Raster rb = rasterize(pose_mesh(object, tgt_pose).mesh, k);
    const TrackFrame ta = track_samples(samples, src_pose, ra, k);
    const TrackFrame tb = track_samples(samples, tgt_pose, rb, k);

    RigInstance rig{k, truth, {}, ra.depth, rb.depth, 0};
    for (std::size_t i = 0; i < samples.size(); ++i) {
      Pixel ps = ta.pixels[i];
      Pixel pt = tb.pixels[i];
      const bool both = ta.visible[i] && tb.visible[i];
      if (both) {
        ++rig.visible_both;
        if (p.noise_sigma_px > 0.0) {
          if (p.noise_on_source) ps += p.noise_sigma_px * Pixel(rng.normal(), rng.normal());
          pt += p.noise_sigma_px * Pixel(rng.normal(), rng.normal());
        }
      }
      rig.correspondences.push_back(ps, pt, ta.visible[i] != 0, tb.visible[i] != 0);
    }
    if (rig.visible_both >= p.min_visible) {
      return rig;
    }
  }
  throw Error(ErrorCode::kInvalidParams, "could not place the rig with enough shared visible points");
}

}  // namespace guidesynth
