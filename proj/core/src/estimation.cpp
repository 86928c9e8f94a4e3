#include "guidesynth/estimation.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <thread>

#include <Eigen/Cholesky>

#include "guidesynth/error.hpp"
#include "guidesynth/text_format.hpp"

namespace guidesynth {

namespace {

constexpr double kMinDepth = 1e-6;
constexpr double kTieRelTol = 1e-9;
constexpr double kMaxDamping = 1e16;

bool better(double candidate, double best) {
  if (!(candidate < best)) {
    return false;
  }
  if (!std::isfinite(best)) {
    return true;
  }
  return best - candidate > kTieRelTol * std::max(std::abs(best), std::abs(candidate));
}

Eigen::Vector3d centroid(std::span<const Point3> pts) {
  Eigen::Vector3d c = Eigen::Vector3d::Zero();
  for (const auto& p : pts) {
    c += p;
  }
  return c / static_cast<double>(pts.size());
}

double weight_at(std::span<const double> weights, std::size_t i) { return weights.empty() ? 1.0 : weights[i]; }

void check_lengths(std::span<const Point3> p_src, std::span<const Pixel> p_tgt, std::span<const double> weights) {
  if (p_src.size() != p_tgt.size() || (!weights.empty() && weights.size() != p_src.size())) {
    throw Error(ErrorCode::kDimensionMismatch, "point, target and weight counts differ");
  }
}

// Loss of rotation R with translation t; stops early once the partial sum
// reaches `abort_at`.
double candidate_loss(const Eigen::Matrix3d& r, const Eigen::Vector3d& t, std::span<const Point3> p_src,
                      std::span<const Pixel> p_tgt, const CameraIntrinsics& k, std::span<const double> weights,
                      double abort_at) {
  const double penalty = k.diagonal_sq();
  double loss = 0.0;
  for (std::size_t i = 0; i < p_src.size(); ++i) {
    const Eigen::Vector3d q = r * p_src[i] + t;
    double term;
    if (q.z() <= kMinDepth) {
      term = penalty;
    } else {
      const double inv_z = 1.0 / q.z();
      const double du = p_tgt[i].x() - (k.fx * q.x() * inv_z + k.cx);
      const double dv = p_tgt[i].y() - (k.fy * q.y() * inv_z + k.cy);
      term = du * du + dv * dv;
    }
    loss += weight_at(weights, i) * term;
    if (loss >= abort_at) {
      return loss;
    }
  }
  return loss;
}

struct GridBest {
  double loss = std::numeric_limits<double>::infinity();
  int ix = -1, iy = -1, iz = -1;
};

}  // namespace

void CorrespondenceSet::push_back(const Pixel& src, const Pixel& tgt, bool vis_src, bool vis_tgt) {
  p_src.push_back(src);
  p_tgt.push_back(tgt);
  v_src.push_back(vis_src ? 1 : 0);
  v_tgt.push_back(vis_tgt ? 1 : 0);
}

void CorrespondenceSet::validate() const {
  const auto n = p_src.size();
  if (p_tgt.size() != n || v_src.size() != n || v_tgt.size() != n) {
    throw Error(ErrorCode::kDimensionMismatch, "correspondence arrays differ in length");
  }
}

void EstimationConfig::validate() const {
  if (!(grid_step_deg > 0.0) || grid_step_deg > 360.0) {
    throw Error(ErrorCode::kInvalidParams, "grid step must be in (0, 360]");
  }
  const double steps = 360.0 / grid_step_deg;
  if (std::abs(steps - std::round(steps)) > 1e-9) {
    throw Error(ErrorCode::kInvalidParams, "360 must be divisible by the grid step");
  }
  if (max_refine_iters < 1) {
    throw Error(ErrorCode::kInvalidParams, "max_refine_iters must be at least 1");
  }
  if (!(loss_tol >= 0.0) || !(damping_init > 0.0)) {
    throw Error(ErrorCode::kInvalidParams, "loss_tol must be >= 0 and damping_init > 0");
  }
}

LiftedCorrespondences lift_correspondences(const CorrespondenceSet& c, const DepthMap& depth_src,
                                           const DepthMap& depth_tgt, const CameraIntrinsics& k) {
  c.validate();
  LiftedCorrespondences out;
  for (std::size_t i = 0; i < c.size(); ++i) {
    if (!c.v_src[i] || !c.v_tgt[i]) {
      continue;
    }
    try {
      const Point3 ps = unproject(c.p_src[i], depth_src, k);
      const Point3 pt = unproject(c.p_tgt[i], depth_tgt, k);
      out.p_src.push_back(ps);
      out.p_tgt.push_back(pt);
      out.target_pixels.push_back(c.p_tgt[i]);
    } catch (const Error& e) {
      if (e.code() != ErrorCode::kInvalidDepth && e.code() != ErrorCode::kOutOfBounds) {
        throw;
      }
    }
  }
  if (out.p_src.size() < 3) {
    throw Error(ErrorCode::kTooFewCorrespondences,
                std::to_string(out.p_src.size()) + " usable correspondences, need at least 3");
  }
  return out;
}

Eigen::Vector3d init_translation(std::span<const Point3> p_src, std::span<const Point3> p_tgt) {
  if (p_src.empty() || p_tgt.empty()) {
    throw Error(ErrorCode::kEmptyInput, "centroid of an empty point set");
  }
  if (p_src.size() != p_tgt.size()) {
    throw Error(ErrorCode::kDimensionMismatch, "point sets differ in size");
  }
  return centroid(p_tgt) - centroid(p_src);
}

double reprojection_loss(const RigidTransform& t, std::span<const Point3> p_src, std::span<const Pixel> p_tgt,
                         const CameraIntrinsics& k, std::span<const double> weights) {
  check_lengths(p_src, p_tgt, weights);
  return candidate_loss(t.rotation, t.translation, p_src, p_tgt, k, weights,
                        std::numeric_limits<double>::infinity());
}

RigidTransform transform_for_rotation(const Eigen::Matrix3d& rotation, std::span<const Point3> p_src,
                                      std::span<const Point3> p_tgt) {
  if (p_src.empty() || p_tgt.empty()) {
    throw Error(ErrorCode::kEmptyInput, "centroid of an empty point set");
  }
  RigidTransform t;
  t.rotation = rotation;
  t.translation = centroid(p_tgt) - rotation * centroid(p_src);
  return t;
}

EulerAngles grid_search_rotation(std::span<const Point3> p_src, std::span<const Point3> p_tgt,
                                 std::span<const Pixel> p_tgt_px, const CameraIntrinsics& k,
                                 const EstimationConfig& cfg, std::span<const double> weights) {
  cfg.validate();
  if (p_src.size() < 3) {
    throw Error(ErrorCode::kTooFewCorrespondences, "grid search needs at least 3 correspondences");
  }
  if (p_src.size() != p_tgt.size()) {
    throw Error(ErrorCode::kDimensionMismatch, "point sets differ in size");
  }
  check_lengths(p_src, p_tgt_px, weights);

  const int steps = static_cast<int>(std::lround(360.0 / cfg.grid_step_deg));
  const Eigen::Vector3d c_src = centroid(p_src);
  const Eigen::Vector3d c_tgt = centroid(p_tgt);

  // One chunk per rx value; chunks are merged in order so the result is the
  // same for every thread count.
  std::vector<GridBest> chunk_best(static_cast<std::size_t>(steps));
  auto run_chunk = [&](int ix) {
    GridBest best;
    for (int iy = 0; iy < steps; ++iy) {
      for (int iz = 0; iz < steps; ++iz) {
        const EulerAngles a{ix * cfg.grid_step_deg, iy * cfg.grid_step_deg, iz * cfg.grid_step_deg};
        const Eigen::Matrix3d r = euler_to_rotation(a);
        const Eigen::Vector3d t = c_tgt - r * c_src;
        const double abort_at =
            std::isfinite(best.loss) ? best.loss - kTieRelTol * std::abs(best.loss)
                                     : std::numeric_limits<double>::infinity();
        const double loss = candidate_loss(r, t, p_src, p_tgt_px, k, weights, abort_at);
        if (better(loss, best.loss)) {
          best = {loss, ix, iy, iz};
        }
      }
    }
    chunk_best[static_cast<std::size_t>(ix)] = best;
  };

  int threads = cfg.threads > 0 ? cfg.threads : static_cast<int>(std::thread::hardware_concurrency());
  threads = std::clamp(threads, 1, steps);
  if (threads == 1) {
    for (int ix = 0; ix < steps; ++ix) {
      run_chunk(ix);
    }
  } else {
    std::vector<std::thread> pool;
    pool.reserve(static_cast<std::size_t>(threads));
    for (int w = 0; w < threads; ++w) {
      pool.emplace_back([&, w] {
        for (int ix = w; ix < steps; ix += threads) {
          run_chunk(ix);
        }
      });
    }
    for (auto& th : pool) {
      th.join();
    }
  }

  GridBest best;
  for (const auto& cb : chunk_best) {
    if (cb.ix >= 0 && better(cb.loss, best.loss)) {
      best = cb;
    }
  }
  if (best.ix < 0) {
    // Every candidate evaluated to NaN; fall back to the first grid point.
    return {};
  }
  return {best.ix * cfg.grid_step_deg, best.iy * cfg.grid_step_deg, best.iz * cfg.grid_step_deg};
}

EstimationResult refine_transform(const RigidTransform& t0, std::span<const Point3> p_src,
                                  std::span<const Pixel> p_tgt, const CameraIntrinsics& k,
                                  const EstimationConfig& cfg) {
  cfg.validate();
  check_lengths(p_src, p_tgt, {});

  EstimationResult result;
  result.transform = t0;
  result.inlier_count = p_src.size();
  double loss = reprojection_loss(t0, p_src, p_tgt, k);
  result.loss_history.push_back(loss);

  double damping = cfg.damping_init;
  using Mat6 = Eigen::Matrix<double, 6, 6>;
  using Vec6 = Eigen::Matrix<double, 6, 1>;

  for (int iter = 0; iter < cfg.max_refine_iters; ++iter) {
    Mat6 jtj = Mat6::Zero();
    Vec6 jtr = Vec6::Zero();
    const RigidTransform& t = result.transform;
    for (std::size_t i = 0; i < p_src.size(); ++i) {
      const Eigen::Vector3d q = t(p_src[i]);
      if (q.z() <= kMinDepth) {
        continue;  // constant penalty term, zero gradient
      }
      const double inv_z = 1.0 / q.z();
      const double u = k.fx * q.x() * inv_z + k.cx;
      const double v = k.fy * q.y() * inv_z + k.cy;
      Eigen::Matrix<double, 2, 3> dproj;
      dproj << k.fx * inv_z, 0.0, -k.fx * q.x() * inv_z * inv_z, 0.0, k.fy * inv_z, -k.fy * q.y() * inv_z * inv_z;
      // d(exp(w) q)/dw at w = 0 is -[q]x; the translation enters directly.
      Eigen::Matrix<double, 3, 6> dq;
      dq << 0.0, q.z(), -q.y(), 1.0, 0.0, 0.0,  //
          -q.z(), 0.0, q.x(), 0.0, 1.0, 0.0,    //
          q.y(), -q.x(), 0.0, 0.0, 0.0, 1.0;
      const Eigen::Matrix<double, 2, 6> j = dproj * dq;
      const Eigen::Vector2d r(p_tgt[i].x() - u, p_tgt[i].y() - v);
      jtj.noalias() += j.transpose() * j;
      jtr.noalias() += j.transpose() * r;
    }
    if (!jtj.allFinite() || !jtr.allFinite()) {
      throw Error(ErrorCode::kNumericalFailure, "non-finite normal equations");
    }
    if (jtr.cwiseAbs().maxCoeff() == 0.0) {
      break;  // stationary point
    }

    bool accepted = false;
    bool any_finite_step = false;
    while (damping <= kMaxDamping) {
      Mat6 a = jtj;
      for (int d = 0; d < 6; ++d) {
        a(d, d) += damping * std::max(jtj(d, d), 1e-12);
      }
      const Eigen::LDLT<Mat6> ldlt(a);
      const Vec6 delta = ldlt.solve(jtr);
      if (ldlt.info() != Eigen::Success || !delta.allFinite()) {
        damping *= 10.0;
        continue;
      }
      any_finite_step = true;
      RigidTransform candidate;
      candidate.rotation = axis_angle_to_rotation(delta.head<3>()) * t.rotation;
      candidate.translation = axis_angle_to_rotation(delta.head<3>()) * t.translation + delta.tail<3>();
      const double new_loss = reprojection_loss(candidate, p_src, p_tgt, k);
      if (new_loss < loss) {
        const double change = loss - new_loss;
        result.transform = candidate;
        loss = new_loss;
        result.loss_history.push_back(loss);
        damping = std::max(damping / 10.0, 1e-12);
        accepted = true;
        ++result.iterations;
        if (change < cfg.loss_tol) {
          result.final_loss = loss;
          return result;
        }
        break;
      }
      damping *= 10.0;
    }
    if (!any_finite_step) {
      throw Error(ErrorCode::kNumericalFailure, "normal equations singular at maximum damping");
    }
    if (!accepted) {
      break;
    }
  }
  result.final_loss = loss;
  return result;
}

EstimationResult estimate_transform(const CorrespondenceSet& c, const DepthMap& depth_src,
                                    const DepthMap& depth_tgt, const CameraIntrinsics& k,
                                    const EstimationConfig& cfg) {
  k.validate();
  cfg.validate();
  const LiftedCorrespondences lifted = lift_correspondences(c, depth_src, depth_tgt, k);
  const EulerAngles best = grid_search_rotation(lifted.p_src, lifted.p_tgt, lifted.target_pixels, k, cfg);
  const RigidTransform t0 = transform_for_rotation(euler_to_rotation(best), lifted.p_src, lifted.p_tgt);
  EstimationResult result = refine_transform(t0, lifted.p_src, lifted.target_pixels, k, cfg);
  result.grid_best = best;
  return result;
}

CorrespondenceSet parse_correspondences(const std::string& text) {
  const auto tok = split_whitespace(text);
  if (tok.empty()) {
    throw Error(ErrorCode::kParseError, "correspondence file is empty");
  }
  const long long n = parse_int(tok[0]);
  if (n < 0 || tok.size() != 1 + 6 * static_cast<std::size_t>(n)) {
    throw Error(ErrorCode::kParseError, "correspondence file: expected " + std::to_string(n) + " rows of 6 fields");
  }
  CorrespondenceSet c;
  for (long long i = 0; i < n; ++i) {
    const std::size_t b = 1 + 6 * static_cast<std::size_t>(i);
    const long long vs = parse_int(tok[b + 4]);
    const long long vt = parse_int(tok[b + 5]);
    if ((vs != 0 && vs != 1) || (vt != 0 && vt != 1)) {
      throw Error(ErrorCode::kParseError, "visibility flags must be 0 or 1");
    }
    c.push_back({parse_double(tok[b]), parse_double(tok[b + 1])}, {parse_double(tok[b + 2]), parse_double(tok[b + 3])},
                vs == 1, vt == 1);
  }
  return c;
}

std::string format_correspondences(const CorrespondenceSet& c) {
  c.validate();
  std::string out = std::to_string(c.size()) + "\n";
  for (std::size_t i = 0; i < c.size(); ++i) {
    out += format_double(c.p_src[i].x()) + " " + format_double(c.p_src[i].y()) + " " +
           format_double(c.p_tgt[i].x()) + " " + format_double(c.p_tgt[i].y()) + " " +
           std::to_string(static_cast<int>(c.v_src[i])) + " " + std::to_string(static_cast<int>(c.v_tgt[i])) + "\n";
  }
  return out;
}

CorrespondenceSet read_correspondences(const std::filesystem::path& path) {
  return parse_correspondences(read_text_file(path));
}

void write_correspondences(const std::filesystem::path& path, const CorrespondenceSet& c) {
  write_text_file(path, format_correspondences(c));
}

std::string format_estimation_result(const EstimationResult& r) {
  KeyValueDoc doc;
  std::vector<double> rot;
  for (int i = 0; i < 3; ++i) {
    for (int j = 0; j < 3; ++j) {
      rot.push_back(r.transform.rotation(i, j));
    }
  }
  doc.set("rotation", format_doubles(rot));
  doc.set("translation",
          format_doubles({r.transform.translation.x(), r.transform.translation.y(), r.transform.translation.z()}));
  doc.set("final_loss", format_double(r.final_loss));
  doc.set("iterations", std::to_string(r.iterations));
  doc.set("grid_best", format_doubles({r.grid_best.rx, r.grid_best.ry, r.grid_best.rz}));
  doc.set("inlier_count", std::to_string(r.inlier_count));
  return doc.str();
}

EstimationResult parse_estimation_result(const std::string& text) {
  const KeyValueDoc doc = KeyValueDoc::parse(text);
  EstimationResult r;
  const auto rot = doc.require_doubles("rotation");
  const auto tr = doc.require_doubles("translation");
  const auto grid = doc.require_doubles("grid_best");
  if (rot.size() != 9 || tr.size() != 3 || grid.size() != 3) {
    throw Error(ErrorCode::kParseError, "estimation result has malformed vectors");
  }
  for (int i = 0; i < 3; ++i) {
    for (int j = 0; j < 3; ++j) {
      r.transform.rotation(i, j) = rot[static_cast<std::size_t>(3 * i + j)];
    }
  }
  r.transform.translation = {tr[0], tr[1], tr[2]};
  r.final_loss = doc.require_double("final_loss");
  r.iterations = static_cast<int>(doc.require_int("iterations"));
  r.grid_best = {grid[0], grid[1], grid[2]};
  if (const auto n = doc.find("inlier_count")) {
    r.inlier_count = static_cast<std::size_t>(parse_int(*n));
  }
  return r;
}

}  // namespace guidesynth
