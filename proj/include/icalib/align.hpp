#pragma once

// Rigid registration of point clouds: closed-form Kabsch for known
// correspondences and point-to-point ICP on top of it.

#include <Eigen/Dense>
#include <Eigen/SVD>
#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include "icalib/error.hpp"

namespace icalib {

struct RigidTransform {
  Eigen::Matrix3d rotation = Eigen::Matrix3d::Identity();
  Eigen::Vector3d translation = Eigen::Vector3d::Zero();

  Eigen::Vector3d apply(const Eigen::Vector3d& p) const { return rotation * p + translation; }

  Eigen::MatrixX3d apply(const Eigen::MatrixX3d& points) const {
    return ((points * rotation.transpose()).rowwise() + translation.transpose());
  }

  RigidTransform compose(const RigidTransform& inner) const {
    return {rotation * inner.rotation, rotation * inner.translation + translation};
  }
};

struct AlignmentReport {
  RigidTransform transform;
  double pre_rmse = 0.0;
  double post_rmse = 0.0;
  int iterations = 0;
  std::vector<double> rmse_history;  // matched-pair RMSE after each iteration
};

/// Least-squares rigid transform with R * source_i + t ~ target_i (SVD, reflection-corrected).
inline RigidTransform kabsch_align(const Eigen::MatrixX3d& source, const Eigen::MatrixX3d& target) {
  if (source.rows() != target.rows()) throw InvalidArgument("point lists differ in length");
  if (source.rows() < 3) throw DegenerateGeometry("rigid alignment needs at least 3 point pairs");
  const Eigen::RowVector3d cs = source.colwise().mean();
  const Eigen::RowVector3d ct = target.colwise().mean();
  const Eigen::MatrixX3d s = source.rowwise() - cs;
  const Eigen::MatrixX3d t = target.rowwise() - ct;
  const Eigen::Matrix3d h = s.transpose() * t;

  const Eigen::JacobiSVD<Eigen::Matrix3d> svd(h, Eigen::ComputeFullU | Eigen::ComputeFullV);
  const Eigen::Vector3d sv = svd.singularValues();
  const double spread = std::max(s.norm(), t.norm());
  if (!(sv(0) > 0.0) || sv(1) <= 1e-9 * sv(0) || spread == 0.0) {
    throw DegenerateGeometry("point configuration is collinear or coincident");
  }
  Eigen::Matrix3d d = Eigen::Matrix3d::Identity();
  d(2, 2) = (svd.matrixV() * svd.matrixU().transpose()).determinant() < 0.0 ? -1.0 : 1.0;
  RigidTransform out;
  out.rotation = svd.matrixV() * d * svd.matrixU().transpose();
  out.translation = ct.transpose() - out.rotation * cs.transpose();
  return out;
}

namespace detail {

inline double paired_rmse(const Eigen::MatrixX3d& a, const Eigen::MatrixX3d& b) {
  return std::sqrt((a - b).squaredNorm() / static_cast<double>(a.rows()));
}

/// Exhaustive nearest neighbour of every row of `query` among the rows of `cloud`.
inline Eigen::MatrixX3d nearest_neighbours(const Eigen::MatrixX3d& query, const Eigen::MatrixX3d& cloud) {
  Eigen::MatrixX3d out(query.rows(), 3);
  for (Eigen::Index i = 0; i < query.rows(); ++i) {
    Eigen::Index best = 0;
    (cloud.rowwise() - query.row(i)).rowwise().squaredNorm().minCoeff(&best);
    out.row(i) = cloud.row(best);
  }
  return out;
}

}  // namespace detail

/// Point-to-point ICP. Stops when the matched-pair RMSE improves by less than `tol` or after `max_iter`.
inline AlignmentReport icp_align(const Eigen::MatrixX3d& source, const Eigen::MatrixX3d& target, int max_iter = 100,
                                 double tol = 1e-9) {
  if (source.rows() == 0 || target.rows() == 0) throw InvalidArgument("ICP needs non-empty clouds");
  AlignmentReport rep;
  Eigen::MatrixX3d matched = detail::nearest_neighbours(source, target);
  double current = detail::paired_rmse(source, matched);
  rep.pre_rmse = current;
  rep.post_rmse = current;
  for (int it = 0; it < max_iter; ++it) {
    const RigidTransform candidate = kabsch_align(source, matched);
    const Eigen::MatrixX3d moved = candidate.apply(source);
    const Eigen::MatrixX3d next_match = detail::nearest_neighbours(moved, target);
    const double next = detail::paired_rmse(moved, next_match);
    rep.iterations = it + 1;
    // Kabsch minimizes the error to the old matches and re-matching can only lower it further.
    if (next > current) break;
    rep.transform = candidate;
    rep.rmse_history.push_back(next);
    const double improvement = current - next;
    current = next;
    matched = next_match;
    if (improvement < tol) break;
  }
  rep.post_rmse = current;
  return rep;
}

}  // namespace icalib
