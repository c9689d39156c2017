#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "icalib/rig.hpp"
#include "oracles.hpp"

namespace icalib::sim {
namespace {

CameraModel simple_camera() {
  CameraModel c;
  c.fx = 800.0;
  c.fy = 800.0;
  c.cx = 640.0;
  c.cy = 400.0;
  c.width = 1280;
  c.height = 800;
  return c;
}

TEST(ProjectPoint, OpticalAxisHitsPrincipalPoint) {
  const Projection p = project_point(simple_camera(), {0.0, 0.0, 1000.0});
  ASSERT_TRUE(p.visible());
  EXPECT_DOUBLE_EQ(p.pixel.x(), 640.0);
  EXPECT_DOUBLE_EQ(p.pixel.y(), 400.0);
}

TEST(ProjectPoint, PinholeOffset) {
  const Projection p = project_point(simple_camera(), {100.0, 0.0, 1000.0});
  EXPECT_DOUBLE_EQ(p.pixel.x(), 720.0);
  EXPECT_DOUBLE_EQ(p.pixel.y(), 400.0);
}

TEST(ProjectPoint, BrownConradyMatchesScalarEvaluation) {
  CameraModel c = simple_camera();
  c.distortion = BrownConrady{-0.1, 0.0, 0.0, 0.0, 0.0};
  const Projection p = project_point(c, {100.0, 0.0, 1000.0});
  // x = 0.1, y = 0: r^2 = 0.01, factor = 1 - 0.1 * 0.01 = 0.999, u = 800 * 0.0999 + 640.
  const double x = 100.0 / 1000.0;
  const double r2 = x * x;
  const double factor = 1.0 + (-0.1) * r2;
  EXPECT_NEAR(p.pixel.x(), 800.0 * x * factor + 640.0, 1e-12);
  EXPECT_NEAR(p.pixel.x(), 719.92, 1e-9);
  EXPECT_NEAR(p.pixel.y(), 400.0, 1e-12);

  // Full model with tangential terms against a hand-expanded scalar evaluation.
  c.distortion = BrownConrady{-0.12, 0.05, 3e-4, -2e-4, 0.01};
  const Eigen::Vector3d w(-130.0, 85.0, 700.0);
  const double xn = w.x() / w.z(), yn = w.y() / w.z();
  const double rr = xn * xn + yn * yn;
  const double radial = 1.0 - 0.12 * rr + 0.05 * rr * rr + 0.01 * rr * rr * rr;
  const double xd = xn * radial + 2.0 * 3e-4 * xn * yn + (-2e-4) * (rr + 2.0 * xn * xn);
  const double yd = yn * radial + 3e-4 * (rr + 2.0 * yn * yn) + 2.0 * (-2e-4) * xn * yn;
  const Projection q = project_point(c, w);
  EXPECT_NEAR(q.pixel.x(), 800.0 * xd + 640.0, 1e-10);
  EXPECT_NEAR(q.pixel.y(), 800.0 * yd + 400.0, 1e-10);
}

TEST(ProjectPoint, EquidistantMatchesScalarEvaluation) {
  CameraModel c = simple_camera();
  c.distortion = Equidistant{0.05, -0.01, 0.002, -0.0005};
  const Eigen::Vector3d w(300.0, -200.0, 500.0);
  const double r = std::hypot(w.x() / w.z(), w.y() / w.z());
  const double th = std::atan(r);
  const double thd = th * (1 + 0.05 * std::pow(th, 2) - 0.01 * std::pow(th, 4) + 0.002 * std::pow(th, 6) -
                           0.0005 * std::pow(th, 8));
  const Projection q = project_point(c, w);
  EXPECT_NEAR(q.pixel.x(), 800.0 * thd / r * w.x() / w.z() + 640.0, 1e-10);
  EXPECT_NEAR(q.pixel.y(), 800.0 * thd / r * w.y() / w.z() + 400.0, 1e-10);
}

TEST(ProjectPoint, VisibilityStates) {
  const CameraModel c = simple_camera();
  EXPECT_EQ(project_point(c, {0.0, 0.0, -10.0}).visibility, Visibility::kBehindCamera);
  EXPECT_EQ(project_point(c, {0.0, 0.0, 0.0}).visibility, Visibility::kBehindCamera);
  EXPECT_EQ(project_point(c, {5000.0, 0.0, 100.0}).visibility, Visibility::kOutOfFrame);
}

TEST(Distortion, RoundTripBothFamilies) {
  const std::vector<Distortion> models{BrownConrady{-0.12, 0.05, 3e-4, -2e-4, 0.0},
                                       BrownConrady{0.08, -0.02, -5e-4, 4e-4, 0.003},
                                       Equidistant{0.06, -0.012, 0.002, 0.0},
                                       Equidistant{0.08, -0.02, 0.004, -0.0005}};
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(-0.7, 0.7);
  for (const auto& m : models) {
    for (int i = 0; i < 500; ++i) {
      const Eigen::Vector2d p(u(rng), u(rng) * 0.65);
      const Eigen::Vector2d back = undistort(m, distort(m, p));
      EXPECT_LT((back - p).norm(), 1e-9);
    }
  }
}

TEST(Distortion, UndistortFailsLoudly) {
  // Strong barrel distortion folds back beyond its maximum; no preimage exists there.
  const Distortion m = BrownConrady{-1.0, 0.0, 0.0, 0.0, 0.0};
  EXPECT_THROW(undistort(m, Eigen::Vector2d(2.0, 0.0)), ConvergenceError);
  // A distorted angle past 90 degrees has no forward-facing ray.
  EXPECT_THROW(undistort(Equidistant{}, Eigen::Vector2d(2.0, 0.0)), ConvergenceError);
}

TEST(Projection, InvariantToWorldFrame) {
  const RigConfig rig = default_grid_rig(CameraSet::k2R4W, 0.0);
  const Eigen::Matrix3d r = icalib::testing::rotation_about({0.3, -1.0, 0.5}, 0.7);
  const Eigen::Vector3d t(120.0, -40.0, 35.0);
  for (const auto& cam : rig.cameras) {
    // World' = R world + t, so the camera pose becomes rotation * R^T and translation - rotation R^T t.
    CameraModel moved = cam;
    moved.rotation = cam.rotation * r.transpose();
    moved.translation = cam.translation - moved.rotation * t;
    for (const auto& p : GridSpec{}.points()) {
      const Projection a = project_point(cam, p);
      const Projection b = project_point(moved, r * p + t);
      EXPECT_LT((a.pixel - b.pixel).norm(), 1e-9);
    }
  }
}

TEST(GridDataset, SizesAndLayout) {
  const RigConfig rig = default_grid_rig(CameraSet::k2R, 0.3, 1);
  const CorrespondenceSet data = generate_grid_dataset(rig, GridSpec{});
  EXPECT_EQ(data.size(), 175);
  EXPECT_EQ(data.observations.cols(), 4);
  EXPECT_EQ(data.camera_count(), 2);
  // Raster order, x fastest.
  EXPECT_TRUE(data.points.row(0).isApprox(Eigen::RowVector3d(-80, -80, 480)));
  EXPECT_TRUE(data.points.row(1).isApprox(Eigen::RowVector3d(-40, -80, 480)));
  EXPECT_TRUE(data.points.row(5).isApprox(Eigen::RowVector3d(-80, -40, 480)));

  GridSpec one;
  one.counts = {1, 1, 1};
  EXPECT_EQ(generate_grid_dataset(rig, one).size(), 1);
}

TEST(GridDataset, Deterministic) {
  for (double noise : {0.0, 0.3}) {
    const RigConfig rig = default_grid_rig(CameraSet::k2R2W, noise, 17);
    const CorrespondenceSet a = generate_grid_dataset(rig, GridSpec{});
    const CorrespondenceSet b = generate_grid_dataset(rig, GridSpec{});
    EXPECT_EQ(a.observations, b.observations);
    EXPECT_EQ(a.points, b.points);
  }
  const CorrespondenceSet c = generate_grid_dataset(default_grid_rig(CameraSet::k2R, 0.3, 1), GridSpec{});
  const CorrespondenceSet d = generate_grid_dataset(default_grid_rig(CameraSet::k2R, 0.3, 2), GridSpec{});
  EXPECT_NE(c.observations, d.observations);
}

TEST(GridDataset, AllDefaultRigsSeeTheWholeGrid) {
  for (CameraSet s : {CameraSet::k2R, CameraSet::k2R2W, CameraSet::k2R4W}) {
    EXPECT_NO_THROW(generate_grid_dataset(default_grid_rig(s, 0.0), GridSpec{})) << to_string(s);
  }
}

TEST(GridDataset, ReportsVisibilityViolations) {
  GridSpec g;
  g.origin = {-80.0, -80.0, -500.0};  // part of the grid behind the bar
  try {
    generate_grid_dataset(default_grid_rig(CameraSet::k2R, 0.0), g);
    FAIL() << "expected VisibilityError";
  } catch (const VisibilityError& e) {
    EXPECT_FALSE(e.issues().empty());
    EXPECT_EQ(e.issues().front().state, Visibility::kBehindCamera);
  }
  GridSpec empty;
  empty.counts = {0, 5, 7};
  EXPECT_THROW(generate_grid_dataset(default_grid_rig(), empty), InvalidArgument);
}

TEST(CheckerboardDataset, LayoutMatchesBoardConvention) {
  const CheckerboardSpec board;
  const CorrespondenceSet data = generate_checkerboard_dataset(default_checkerboard_rig(CameraSet::k2R4W), board);
  EXPECT_EQ(data.size(), 1760);
  ASSERT_EQ(data.board_index.size(), 1760u);
  EXPECT_TRUE(data.points.row(0).isZero());
  EXPECT_EQ(data.board_index.front(), 0);
  EXPECT_EQ(data.board_index.back(), 19);
  // board 5, row 2, col 3
  const Eigen::Index idx = 5 * 88 + 2 * 11 + 3;
  EXPECT_NEAR(data.points(idx, 0), 39.87, 1e-12);
  EXPECT_NEAR(data.points(idx, 1), 26.58, 1e-12);
  EXPECT_NEAR(data.points(idx, 2), 50.0, 1e-12);
  EXPECT_EQ(data.board_index[static_cast<std::size_t>(idx)], 5);
}

TEST(CheckerboardDataset, NearestBoardIsClosestToCameras) {
  const RigConfig rig = default_checkerboard_rig(CameraSet::k2R);
  for (const auto& cam : rig.cameras) {
    EXPECT_LT(cam.to_camera({0, 0, 0}).z(), cam.to_camera({0, 0, 190}).z());
  }
}

TEST(Oracle, WorldQueryMatchesGeneratedRow) {
  const RigConfig rig = default_grid_rig(CameraSet::k2R2W, 0.0);
  const CorrespondenceSet data = generate_grid_dataset(rig, GridSpec{});
  Oracle oracle(rig);
  for (Eigen::Index i : {0, 42, 174}) {
    const PixelObservation obs = oracle.query(data.points.row(i).transpose());
    EXPECT_EQ(obs, data.observations.row(i).transpose());
  }
}

TEST(Oracle, PoolLookup) {
  const CorrespondenceSet pool = generate_grid_dataset(default_grid_rig(), GridSpec{});
  EXPECT_EQ(query_oracle(pool, PixelObservation(pool.observations.row(42).transpose())),
            WorldPoint(pool.points.row(42).transpose()));
  EXPECT_EQ(query_oracle(pool, std::size_t{42}), WorldPoint(pool.points.row(42).transpose()));
  PixelObservation missing = pool.observations.row(0).transpose();
  missing(0) += 0.5;
  EXPECT_THROW(query_oracle(pool, missing), NotInPool);
  EXPECT_THROW(query_oracle(pool, std::size_t{175}), NotInPool);
}

TEST(Oracle, BehindCameraNamesTheCamera) {
  RigConfig rig = default_grid_rig(CameraSet::k2R, 0.0);
  Oracle oracle(rig);
  // Directly behind camera 1 but in front of nothing else is impossible on a bar; put it behind both.
  try {
    oracle.query({0.0, 0.0, -100.0});
    FAIL() << "expected VisibilityError";
  } catch (const VisibilityError& e) {
    ASSERT_FALSE(e.issues().empty());
    EXPECT_EQ(e.issues().front().camera_index, 0u);
    EXPECT_NE(std::string(e.what()).find("camera 1"), std::string::npos);
  }
}

TEST(Triangulation, NoiselessRoundTrip) {
  for (CameraSet s : {CameraSet::k2R, CameraSet::k2R2W, CameraSet::k2R4W}) {
    const RigConfig rig = default_grid_rig(s, 0.0);
    Oracle oracle(rig);
    const WorldPoint p(100.0, -50.0, 900.0);
    EXPECT_LT((triangulate_baseline(rig, oracle.query(p)) - p).norm(), 1e-6);
    for (const auto& q : GridSpec{}.points()) {
      EXPECT_LT((triangulate_baseline(rig, oracle.query(q)) - q).norm(), 1e-6);
    }
  }
}

TEST(Triangulation, NoisyGridHasFinitePositiveError) {
  const RigConfig rig = default_grid_rig(CameraSet::k2R, 0.5, 3);
  const CorrespondenceSet data = generate_grid_dataset(rig, GridSpec{});
  double sq = 0.0;
  for (Eigen::Index i = 0; i < data.size(); ++i) {
    sq += (triangulate_baseline(rig, data.observations.row(i).transpose()) - data.points.row(i).transpose())
              .squaredNorm();
  }
  const double rmse = std::sqrt(sq / data.size());
  EXPECT_GT(rmse, 0.0);
  EXPECT_TRUE(std::isfinite(rmse));
}

TEST(Triangulation, Errors) {
  RigConfig one = default_grid_rig(CameraSet::k2R, 0.0);
  one.cameras.pop_back();
  EXPECT_THROW(triangulate_baseline(one, PixelObservation::Constant(2, 500.0)), InvalidArgument);

  // Two cameras at the same centre give parallel rays.
  RigConfig same = default_grid_rig(CameraSet::k2R, 0.0);
  same.cameras[1] = same.cameras[0];
  Oracle oracle(same);
  EXPECT_THROW(triangulate_baseline(same, oracle.query({0.0, 0.0, 600.0})), DegenerateGeometry);
}

TEST(CameraModel, ValidatesRotation) {
  CameraModel c = simple_camera();
  c.rotation(0, 0) = -1.0;  // reflection
  EXPECT_THROW(c.validate(), InvalidArgument);
  c = simple_camera();
  c.fx = 0.0;
  EXPECT_THROW(c.validate(), InvalidArgument);
}

}  // namespace
}  // namespace icalib::sim
