#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <limits>

#include "icalib/error.hpp"

namespace icalib::optim {

struct BfgsOptions {
  int max_iterations = 200;
  /// Stop once an accepted step changes the objective by less than this.
  double f_tolerance = 1e-6;
  /// Stop once the projected gradient's inf-norm falls below this.
  double g_tolerance = 1e-9;
  /// Largest inf-norm of the very first (steepest-descent) step.
  double initial_step = 1.0;
  int max_backtracks = 40;
};

struct BfgsResult {
  Eigen::VectorXd x;
  double f = std::numeric_limits<double>::infinity();
  double f_initial = std::numeric_limits<double>::infinity();
  int iterations = 0;
  bool converged = false;
};

/// Box-constrained BFGS minimizer with projected Armijo backtracking.
///
/// `objective(x, grad)` returns f(x) and writes the gradient when `grad` is
/// non-null; line-search trial points are evaluated without it. It may throw
/// NumericalError at trial points; those are treated as +inf during the line
/// search. A throw at the starting point propagates.
template <typename Objective>
BfgsResult minimize_bfgs(Objective&& objective, Eigen::VectorXd x0, const Eigen::VectorXd& lower,
                         const Eigen::VectorXd& upper, const BfgsOptions& opts = {}) {
  const Eigen::Index n = x0.size();
  auto project = [&](Eigen::VectorXd v) { return v.cwiseMax(lower).cwiseMin(upper).eval(); };
  // Gradient components that push against an active bound are dropped.
  auto projected_gradient = [&](const Eigen::VectorXd& x, const Eigen::VectorXd& g) {
    Eigen::VectorXd pg = g;
    for (Eigen::Index i = 0; i < n; ++i) {
      if ((x(i) <= lower(i) && g(i) > 0.0) || (x(i) >= upper(i) && g(i) < 0.0)) pg(i) = 0.0;
    }
    return pg;
  };

  BfgsResult res;
  Eigen::VectorXd x = project(std::move(x0));
  Eigen::VectorXd g(n);
  double f = objective(x, &g);
  if (!std::isfinite(f) || !g.allFinite()) throw NumericalError("objective is not finite at the starting point");
  res.f_initial = f;

  Eigen::MatrixXd h = Eigen::MatrixXd::Identity(n, n);
  bool fresh_h = true;
  Eigen::VectorXd g_new(n);

  for (int it = 0; it < opts.max_iterations; ++it) {
    res.iterations = it + 1;
    Eigen::VectorXd pg = projected_gradient(x, g);
    if (pg.lpNorm<Eigen::Infinity>() < opts.g_tolerance) {
      res.converged = true;
      break;
    }

    Eigen::VectorXd dir = -(h * pg);
    for (Eigen::Index i = 0; i < n; ++i) {
      if (pg(i) == 0.0 && g(i) != 0.0) dir(i) = 0.0;
    }
    if (dir.dot(pg) >= 0.0) {
      h.setIdentity();
      fresh_h = true;
      dir = -pg;
    }
    if (fresh_h) {
      const double m = dir.lpNorm<Eigen::Infinity>();
      if (m > opts.initial_step) dir *= opts.initial_step / m;
    }

    double step = 1.0;
    bool accepted = false;
    Eigen::VectorXd x_new;
    double f_new = 0.0;
    for (int bt = 0; bt < opts.max_backtracks; ++bt, step *= 0.5) {
      x_new = project(x + step * dir);
      const Eigen::VectorXd s = x_new - x;
      const double decrease = g.dot(s);
      if (s.squaredNorm() == 0.0) break;
      try {
        f_new = objective(x_new, nullptr);
        if (!(std::isfinite(f_new) && f_new <= f + 1e-4 * std::min(decrease, 0.0))) continue;
        f_new = objective(x_new, &g_new);
      } catch (const NumericalError&) {
        continue;
      }
      if (std::isfinite(f_new) && g_new.allFinite()) {
        accepted = true;
        break;
      }
    }
    if (!accepted) {
      if (!fresh_h) {
        // Retry once along steepest descent before giving up.
        h.setIdentity();
        fresh_h = true;
        continue;
      }
      res.converged = true;
      break;
    }

    const Eigen::VectorXd s = x_new - x;
    const Eigen::VectorXd y = g_new - g;
    const double delta_f = f - f_new;
    x = x_new;
    f = f_new;
    g = g_new;

    const double sy = s.dot(y);
    if (sy > 1e-12 * s.norm() * y.norm() && sy > 0.0) {
      if (fresh_h) {
        h *= sy / y.squaredNorm();
        fresh_h = false;
      }
      const double rho = 1.0 / sy;
      const Eigen::MatrixXd ident = Eigen::MatrixXd::Identity(n, n);
      h = (ident - rho * s * y.transpose()) * h * (ident - rho * y * s.transpose()) + rho * s * s.transpose();
    }

    if (std::abs(delta_f) < opts.f_tolerance) {
      res.converged = true;
      break;
    }
  }

  res.x = x;
  res.f = f;
  return res;
}

}  // namespace icalib::optim
