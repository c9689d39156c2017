#pragma once

// Synthetic multi-camera rig: generates ground-truth correspondences for the
// moving-ball grid and the translated checkerboard, answers oracle queries,
// and provides the known-parameter triangulation baseline.

#include <Eigen/Dense>
#include <array>
#include <cmath>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "icalib/camera.hpp"
#include "icalib/correspondence.hpp"
#include "icalib/error.hpp"

namespace icalib::sim {

struct RigConfig {
  std::vector<CameraModel> cameras;
  double pixel_noise_std = 0.3;
  std::uint64_t seed = 0;

  int camera_count() const { return static_cast<int>(cameras.size()); }

  void validate() const {
    if (cameras.empty()) throw InvalidArgument("rig needs at least one camera");
    if (!(pixel_noise_std >= 0.0) || !std::isfinite(pixel_noise_std)) {
      throw InvalidArgument("pixel noise std must be non-negative");
    }
    for (const auto& c : cameras) c.validate();
  }
};

struct GridSpec {
  std::array<int, 3> counts{5, 5, 7};
  Eigen::Vector3d origin{-80.0, -80.0, 480.0};
  Eigen::Vector3d spacing{40.0, 40.0, 40.0};

  std::size_t size() const {
    return static_cast<std::size_t>(counts[0]) * static_cast<std::size_t>(counts[1]) *
           static_cast<std::size_t>(counts[2]);
  }

  void validate() const {
    for (int c : counts) {
      if (c < 1) throw InvalidArgument("grid counts must be at least 1");
    }
    if (!(spacing.array() > 0.0).all()) throw InvalidArgument("grid spacing must be positive");
  }

  /// Raster order: x fastest, then y, then z.
  std::vector<WorldPoint> points() const {
    std::vector<WorldPoint> out;
    out.reserve(size());
    for (int k = 0; k < counts[2]; ++k)
      for (int j = 0; j < counts[1]; ++j)
        for (int i = 0; i < counts[0]; ++i)
          out.push_back(origin + Eigen::Vector3d(i * spacing.x(), j * spacing.y(), k * spacing.z()));
    return out;
  }
};

struct CheckerboardSpec {
  int rows = 8;
  int cols = 11;
  double square_size = 13.29;  // mm
  int positions = 20;
  double step = 10.0;          // mm along the board normal, position 0 nearest the cameras

  void validate() const {
    if (rows < 2 || cols < 2) throw InvalidArgument("checkerboard needs at least 2x2 corners");
    if (positions < 1) throw InvalidArgument("checkerboard needs at least one position");
    if (!(square_size > 0.0) || !(step > 0.0)) throw InvalidArgument("square size and step must be positive");
  }

  WorldPoint corner(int row, int col, int position) const {
    return {col * square_size, row * square_size, position * step};
  }
};

/// Observation of one world point by every camera, with optional Gaussian pixel noise.
/// Returns the visibility issues instead of throwing so callers can aggregate them.
inline PixelObservation observe(const RigConfig& rig, const WorldPoint& p, std::mt19937_64* rng,
                                std::vector<VisibilityIssue>* issues, std::size_t point_index = 0) {
  PixelObservation obs(2 * rig.camera_count());
  std::normal_distribution<double> noise(0.0, 1.0);
  for (std::size_t c = 0; c < rig.cameras.size(); ++c) {
    const Projection pr = project_point(rig.cameras[c], p);
    if (!pr.visible() && issues) issues->push_back({point_index, c, pr.visibility});
    Eigen::Vector2d px = pr.pixel;
    if (rng && rig.pixel_noise_std > 0.0) {
      const double du = noise(*rng), dv = noise(*rng);
      px += rig.pixel_noise_std * Eigen::Vector2d(du, dv);
    }
    obs.segment(2 * static_cast<Eigen::Index>(c), 2) = px;
  }
  return obs;
}

namespace detail {

inline CorrespondenceSet generate(const RigConfig& rig, const std::vector<WorldPoint>& points,
                                  const std::vector<int>* boards) {
  rig.validate();
  if (points.empty()) throw InvalidArgument("no points to generate");
  std::mt19937_64 rng(rig.seed);
  std::vector<VisibilityIssue> issues;
  CorrespondenceSet out;
  out.observations.resize(static_cast<Eigen::Index>(points.size()), 2 * rig.camera_count());
  out.points.resize(static_cast<Eigen::Index>(points.size()), 3);
  for (std::size_t i = 0; i < points.size(); ++i) {
    const auto r = static_cast<Eigen::Index>(i);
    out.observations.row(r) = observe(rig, points[i], &rng, &issues, i).transpose();
    out.points.row(r) = points[i].transpose();
  }
  if (!issues.empty()) throw VisibilityError(std::move(issues));
  if (boards) out.board_index = *boards;
  return out;
}

}  // namespace detail

/// Projects every grid node through every camera, in raster order.
inline CorrespondenceSet generate_grid_dataset(const RigConfig& rig, const GridSpec& grid) {
  grid.validate();
  return detail::generate(rig, grid.points(), nullptr);
}

/// Corners ordered by (position, row, col); each row tagged with its board position.
inline CorrespondenceSet generate_checkerboard_dataset(const RigConfig& rig, const CheckerboardSpec& board) {
  board.validate();
  std::vector<WorldPoint> pts;
  std::vector<int> tags;
  for (int pos = 0; pos < board.positions; ++pos)
    for (int r = 0; r < board.rows; ++r)
      for (int c = 0; c < board.cols; ++c) {
        pts.push_back(board.corner(r, c, pos));
        tags.push_back(pos);
      }
  return detail::generate(rig, pts, &tags);
}

/// Source of truth for new samples: noisy projections of requested world points.
class Oracle {
 public:
  explicit Oracle(RigConfig rig) : rig_(std::move(rig)), rng_(rig_.seed) { rig_.validate(); }

  /// Noisy observation of `p`; throws VisibilityError naming the cameras that miss it.
  PixelObservation query(const WorldPoint& p) {
    std::vector<VisibilityIssue> issues;
    PixelObservation obs = observe(rig_, p, &rng_, &issues);
    if (!issues.empty()) throw VisibilityError(std::move(issues));
    return obs;
  }

  const RigConfig& rig() const { return rig_; }

 private:
  RigConfig rig_;
  std::mt19937_64 rng_;
};

/// Ground truth stored for a candidate observation drawn from `pool`.
inline WorldPoint query_oracle(const CorrespondenceSet& pool, const PixelObservation& obs) {
  if (obs.size() != pool.observations.cols()) throw InvalidArgument("observation width does not match the pool");
  for (Eigen::Index r = 0; r < pool.size(); ++r) {
    if (pool.observations.row(r) == obs.transpose()) return pool.points.row(r).transpose();
  }
  throw NotInPool("observation is not in the candidate pool");
}

inline WorldPoint query_oracle(const CorrespondenceSet& pool, std::size_t index) {
  if (index >= static_cast<std::size_t>(pool.size())) {
    throw NotInPool("candidate index " + std::to_string(index) + " is outside the pool");
  }
  return pool.points.row(static_cast<Eigen::Index>(index)).transpose();
}

/// Linear multi-view triangulation with the rig's known parameters.
/// Each view contributes the two algebraic constraints x_n (r3.X + t3) = r1.X + t1 and y_n (r3.X + t3) = r2.X + t2.
inline WorldPoint triangulate_baseline(const RigConfig& rig, const PixelObservation& obs) {
  if (rig.camera_count() < 2) throw InvalidArgument("triangulation needs at least two cameras");
  if (obs.size() != 2 * rig.camera_count()) throw InvalidArgument("observation width does not match the rig");
  if (!obs.allFinite()) throw InvalidArgument("observation contains non-finite entries");
  Eigen::Matrix3d normal = Eigen::Matrix3d::Zero();
  Eigen::Vector3d rhs = Eigen::Vector3d::Zero();
  for (int c = 0; c < rig.camera_count(); ++c) {
    const CameraModel& cam = rig.cameras[static_cast<std::size_t>(c)];
    const Eigen::Vector2d xn = pixel_to_normalized(cam, obs.segment(2 * c, 2));
    const Eigen::Matrix3d& r = cam.rotation;
    const Eigen::Vector3d& t = cam.translation;
    const Eigen::RowVector3d a1 = xn.x() * r.row(2) - r.row(0);
    const Eigen::RowVector3d a2 = xn.y() * r.row(2) - r.row(1);
    const double b1 = t(0) - xn.x() * t(2);
    const double b2 = t(1) - xn.y() * t(2);
    normal += a1.transpose() * a1 + a2.transpose() * a2;
    rhs += a1.transpose() * b1 + a2.transpose() * b2;
  }
  const Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d> eig(normal);
  const double lo = eig.eigenvalues().minCoeff(), hi = eig.eigenvalues().maxCoeff();
  if (!(lo > 0.0) || hi / lo > 1e12) throw DegenerateGeometry("triangulation rays are (nearly) parallel");
  return normal.ldlt().solve(rhs);
}

// --------------------------------------------------------------- default rig

/// Camera subsets of the six-camera bar: two regular lenses, plus two or four wide-angle lenses.
enum class CameraSet { k2R, k2R2W, k2R4W };

inline const char* to_string(CameraSet s) {
  switch (s) {
    case CameraSet::k2R: return "2R";
    case CameraSet::k2R2W: return "2R2W";
    case CameraSet::k2R4W: return "2R4W";
  }
  return "?";
}

inline std::vector<int> camera_indices(CameraSet s) {
  switch (s) {
    case CameraSet::k2R: return {1, 2};
    case CameraSet::k2R2W: return {1, 2, 3, 4};
    case CameraSet::k2R4W: return {0, 1, 2, 3, 4, 5};
  }
  return {};
}

/// Six cameras on a bar at 120 mm spacing, 1280x800 images, aimed at `target`.
/// Cameras 2 and 3 (indices 1, 2) carry regular lenses with Brown-Conrady distortion;
/// the rest are wide-angle with equidistant distortion. The bar runs along world x through `bar_center`.
inline std::vector<CameraModel> six_camera_bar(const Eigen::Vector3d& bar_center, const Eigen::Vector3d& target) {
  // Focal lengths follow 1.55, 2.8, 2.8, 1.85, 2.2, 1.3 mm lenses on a 2.8 um pixel pitch.
  struct Lens {
    double f;
    Distortion dist;
    double bar_x;
    double dcx, dcy;
  };
  const std::array<Lens, 6> lenses{{
      {553.6, Equidistant{0.060, -0.012, 0.0020, 0.0}, -300.0, 3.1, -2.4},
      {1000.0, BrownConrady{-0.12, 0.05, 3e-4, -2e-4, 0.0}, -60.0, -4.2, 1.8},
      {1000.0, BrownConrady{-0.10, 0.03, -2e-4, 1e-4, 0.0}, 60.0, 2.7, 3.3},
      {660.7, Equidistant{0.050, -0.010, 0.0020, 0.0}, -180.0, -1.9, -3.6},
      {785.7, Equidistant{0.030, -0.005, 0.0, 0.0}, 180.0, 1.2, 2.2},
      {464.3, Equidistant{0.080, -0.020, 0.0040, -0.0005}, 300.0, -2.8, 0.9},
  }};
  std::vector<CameraModel> cams;
  for (const Lens& l : lenses) {
    CameraModel c;
    c.width = 1280;
    c.height = 800;
    c.fx = l.f;
    c.fy = l.f * 1.0005;
    c.cx = 640.0 + l.dcx;
    c.cy = 400.0 + l.dcy;
    c.distortion = l.dist;
    look_at(c, bar_center + Eigen::Vector3d(l.bar_x, 0.0, 0.0), target);
    cams.push_back(c);
  }
  return cams;
}

inline RigConfig select_cameras(const std::vector<CameraModel>& all, CameraSet set, double noise, std::uint64_t seed) {
  RigConfig rig;
  for (int i : camera_indices(set)) rig.cameras.push_back(all[static_cast<std::size_t>(i)]);
  rig.pixel_noise_std = noise;
  rig.seed = seed;
  return rig;
}

/// Bar at the world origin looking at the centre of the default 5x5x7 grid.
inline RigConfig default_grid_rig(CameraSet set = CameraSet::k2R, double noise = 0.3, std::uint64_t seed = 0) {
  return select_cameras(six_camera_bar(Eigen::Vector3d::Zero(), Eigen::Vector3d(0.0, 0.0, 600.0)), set, noise, seed);
}

/// Bar 300 mm in front of the nearest board position, centred on the board.
inline RigConfig default_checkerboard_rig(CameraSet set = CameraSet::k2R, double noise = 0.3, std::uint64_t seed = 0,
                                          const CheckerboardSpec& board = {}) {
  const Eigen::Vector3d centre((board.cols - 1) * board.square_size / 2.0, (board.rows - 1) * board.square_size / 2.0,
                               0.0);
  const Eigen::Vector3d target = centre + Eigen::Vector3d(0.0, 0.0, (board.positions - 1) * board.step / 2.0);
  return select_cameras(six_camera_bar(centre - Eigen::Vector3d(0.0, 0.0, 300.0), target), set, noise, seed);
}

}  // namespace icalib::sim
