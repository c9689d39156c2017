#pragma once

// Pinhole cameras with Brown-Conrady or equidistant (Kannala-Brandt) lens
// distortion, world-to-camera pose, and numeric undistortion.

#include <Eigen/Dense>
#include <cmath>
#include <limits>
#include <numbers>
#include <string>
#include <variant>

#include "icalib/error.hpp"

namespace icalib::sim {

struct NoDistortion {};

/// Radial k1, k2, k3 and tangential p1, p2 on normalized coordinates (OpenCV ordering k1,k2,p1,p2,k3).
struct BrownConrady {
  double k1 = 0.0, k2 = 0.0, p1 = 0.0, p2 = 0.0, k3 = 0.0;
};

/// theta_d = theta * (1 + k1 theta^2 + k2 theta^4 + k3 theta^6 + k4 theta^8).
struct Equidistant {
  double k1 = 0.0, k2 = 0.0, k3 = 0.0, k4 = 0.0;
};

using Distortion = std::variant<NoDistortion, BrownConrady, Equidistant>;

namespace detail {

inline double kb_theta_d(const Equidistant& d, double theta) {
  const double t2 = theta * theta;
  return theta * (1.0 + t2 * (d.k1 + t2 * (d.k2 + t2 * (d.k3 + t2 * d.k4))));
}

inline double kb_theta_d_derivative(const Equidistant& d, double theta) {
  const double t2 = theta * theta;
  return 1.0 + t2 * (3.0 * d.k1 + t2 * (5.0 * d.k2 + t2 * (7.0 * d.k3 + t2 * 9.0 * d.k4)));
}

inline Eigen::Vector2d bc_apply(const BrownConrady& d, const Eigen::Vector2d& p) {
  const double x = p.x(), y = p.y();
  const double r2 = x * x + y * y;
  const double radial = 1.0 + r2 * (d.k1 + r2 * (d.k2 + r2 * d.k3));
  return {x * radial + 2.0 * d.p1 * x * y + d.p2 * (r2 + 2.0 * x * x),
          y * radial + d.p1 * (r2 + 2.0 * y * y) + 2.0 * d.p2 * x * y};
}

inline Eigen::Matrix2d bc_jacobian(const BrownConrady& d, const Eigen::Vector2d& p) {
  const double x = p.x(), y = p.y();
  const double r2 = x * x + y * y;
  const double radial = 1.0 + r2 * (d.k1 + r2 * (d.k2 + r2 * d.k3));
  const double dradial = d.k1 + r2 * (2.0 * d.k2 + 3.0 * r2 * d.k3);  // d radial / d r2
  Eigen::Matrix2d j;
  j(0, 0) = radial + 2.0 * x * x * dradial + 2.0 * d.p1 * y + 6.0 * d.p2 * x;
  j(0, 1) = 2.0 * x * y * dradial + 2.0 * d.p1 * x + 2.0 * d.p2 * y;
  j(1, 0) = 2.0 * x * y * dradial + 2.0 * d.p1 * x + 2.0 * d.p2 * y;
  j(1, 1) = radial + 2.0 * y * y * dradial + 6.0 * d.p1 * y + 2.0 * d.p2 * x;
  return j;
}

}  // namespace detail

/// Maps ideal normalized coordinates (X/Z, Y/Z) to distorted normalized coordinates.
inline Eigen::Vector2d distort(const Distortion& model, const Eigen::Vector2d& p) {
  return std::visit(
      [&](const auto& d) -> Eigen::Vector2d {
        using T = std::decay_t<decltype(d)>;
        if constexpr (std::is_same_v<T, NoDistortion>) {
          return p;
        } else if constexpr (std::is_same_v<T, BrownConrady>) {
          return detail::bc_apply(d, p);
        } else {
          const double r = p.norm();
          if (r < 1e-15) return p;
          return p * (detail::kb_theta_d(d, std::atan(r)) / r);
        }
      },
      model);
}

struct UndistortOptions {
  int max_iterations = 50;
  double tolerance = 1e-12;
};

/// Inverts `distort` by Newton iteration. Throws ConvergenceError when it does not settle.
inline Eigen::Vector2d undistort(const Distortion& model, const Eigen::Vector2d& distorted,
                                 const UndistortOptions& opts = {}) {
  return std::visit(
      [&](const auto& d) -> Eigen::Vector2d {
        using T = std::decay_t<decltype(d)>;
        if constexpr (std::is_same_v<T, NoDistortion>) {
          return distorted;
        } else if constexpr (std::is_same_v<T, BrownConrady>) {
          Eigen::Vector2d p = distorted;
          for (int it = 0; it < opts.max_iterations; ++it) {
            const Eigen::Vector2d residual = detail::bc_apply(d, p) - distorted;
            if (residual.norm() < opts.tolerance) {
              // A root on the far side of the optical axis is a fold of the polynomial, not a preimage.
              if (p.dot(distorted) < 0.0) break;
              return p;
            }
            const Eigen::Vector2d step = detail::bc_jacobian(d, p).partialPivLu().solve(residual);
            if (!step.allFinite()) break;
            p -= step;
          }
          throw ConvergenceError("Brown-Conrady undistortion did not converge");
        } else {
          const double rd = distorted.norm();
          if (rd < 1e-15) return distorted;
          double theta = rd;
          for (int it = 0; it < opts.max_iterations; ++it) {
            const double residual = detail::kb_theta_d(d, theta) - rd;
            if (std::abs(residual) < opts.tolerance) {
              if (!(theta >= 0.0 && theta < 0.5 * std::numbers::pi)) break;
              return distorted * (std::tan(theta) / rd);
            }
            const double deriv = detail::kb_theta_d_derivative(d, theta);
            if (!(std::abs(deriv) > 0.0)) break;
            theta -= residual / deriv;
          }
          throw ConvergenceError("equidistant undistortion did not converge");
        }
      },
      model);
}

struct CameraModel {
  double fx = 1.0, fy = 1.0, cx = 0.0, cy = 0.0;
  int width = 1, height = 1;
  Distortion distortion = NoDistortion{};
  Eigen::Matrix3d rotation = Eigen::Matrix3d::Identity();  // world -> camera
  Eigen::Vector3d translation = Eigen::Vector3d::Zero();   // mm, world -> camera

  void validate() const {
    if (!(fx > 0.0) || !(fy > 0.0)) throw InvalidArgument("focal lengths must be positive");
    if (width <= 0 || height <= 0) throw InvalidArgument("image size must be positive");
    if (!rotation.allFinite() || !translation.allFinite()) throw InvalidArgument("pose contains non-finite values");
    const double ortho = (rotation.transpose() * rotation - Eigen::Matrix3d::Identity()).cwiseAbs().maxCoeff();
    if (ortho > 1e-9 || std::abs(rotation.determinant() - 1.0) > 1e-9) {
      throw InvalidArgument("rotation must be orthonormal with determinant +1");
    }
  }

  Eigen::Vector3d to_camera(const Eigen::Vector3d& world) const { return rotation * world + translation; }
  Eigen::Vector3d center() const { return -rotation.transpose() * translation; }

  bool in_frame(const Eigen::Vector2d& px) const {
    return px.x() >= 0.0 && px.x() <= width && px.y() >= 0.0 && px.y() <= height;
  }
};

struct Projection {
  Visibility visibility = Visibility::kVisible;
  Eigen::Vector2d pixel = Eigen::Vector2d::Constant(std::numeric_limits<double>::quiet_NaN());

  bool visible() const { return visibility == Visibility::kVisible; }
};

/// World point to pixel. Behind-camera and out-of-frame are reported, not thrown.
inline Projection project_point(const CameraModel& cam, const Eigen::Vector3d& world) {
  const Eigen::Vector3d pc = cam.to_camera(world);
  Projection out;
  if (!(pc.z() > 0.0)) {
    out.visibility = Visibility::kBehindCamera;
    return out;
  }
  const Eigen::Vector2d d = distort(cam.distortion, Eigen::Vector2d(pc.x() / pc.z(), pc.y() / pc.z()));
  out.pixel = {cam.fx * d.x() + cam.cx, cam.fy * d.y() + cam.cy};
  if (!cam.in_frame(out.pixel)) out.visibility = Visibility::kOutOfFrame;
  return out;
}

/// Pixel to ideal (undistorted) normalized coordinates.
inline Eigen::Vector2d pixel_to_normalized(const CameraModel& cam, const Eigen::Vector2d& px,
                                           const UndistortOptions& opts = {}) {
  const Eigen::Vector2d d((px.x() - cam.cx) / cam.fx, (px.y() - cam.cy) / cam.fy);
  return undistort(cam.distortion, d, opts);
}

/// World-to-camera pose for a camera at `position` looking at `target`; image y points along `down`.
inline void look_at(CameraModel& cam, const Eigen::Vector3d& position, const Eigen::Vector3d& target,
                    const Eigen::Vector3d& down = Eigen::Vector3d::UnitY()) {
  const Eigen::Vector3d z = (target - position).normalized();
  const Eigen::Vector3d x = down.cross(z).normalized();
  const Eigen::Vector3d y = z.cross(x);
  cam.rotation.row(0) = x.transpose();
  cam.rotation.row(1) = y.transpose();
  cam.rotation.row(2) = z.transpose();
  cam.translation = -cam.rotation * position;
}

}  // namespace icalib::sim
