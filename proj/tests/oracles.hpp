#pragma once

// Independent reference implementations used only by the tests. They follow
// the textbook formulas with explicit inverses and scalar loops and share no
// code with the library paths they check.

#include <Eigen/Dense>
#include <cmath>
#include <numbers>
#include <random>

namespace icalib::testing {

inline double se_ard_scalar(double sf2, const Eigen::VectorXd& l, const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
  double s = 0.0;
  for (Eigen::Index j = 0; j < a.size(); ++j) {
    const double ls = l.size() == 1 ? l(0) : l(j);
    s += (a(j) - b(j)) * (a(j) - b(j)) / (ls * ls);
  }
  return sf2 * std::exp(-0.5 * s);
}

inline Eigen::MatrixXd dense_gram(double sf2, const Eigen::VectorXd& l, const Eigen::MatrixXd& a,
                                  const Eigen::MatrixXd& b) {
  Eigen::MatrixXd k(a.rows(), b.rows());
  for (Eigen::Index i = 0; i < a.rows(); ++i)
    for (Eigen::Index j = 0; j < b.rows(); ++j)
      k(i, j) = se_ard_scalar(sf2, l, a.row(i).transpose(), b.row(j).transpose());
  return k;
}

/// log N(y | 0, K + (noise + jitter) I) via explicit inverse and determinant.
inline double dense_lml(double sf2, const Eigen::VectorXd& l, double noise, double jitter, const Eigen::MatrixXd& x,
                        const Eigen::VectorXd& y) {
  const Eigen::Index n = x.rows();
  Eigen::MatrixXd k = dense_gram(sf2, l, x, x);
  k += (noise + jitter) * Eigen::MatrixXd::Identity(n, n);
  const Eigen::MatrixXd kinv = k.inverse();
  return -0.5 * y.dot(kinv * y) - 0.5 * std::log(k.determinant()) -
         0.5 * static_cast<double>(n) * std::log(2.0 * std::numbers::pi);
}

struct DensePosterior {
  double mean;
  double variance;
};

/// Standardized-space posterior via explicit inverse.
inline DensePosterior dense_posterior(double sf2, const Eigen::VectorXd& l, double noise, double jitter,
                                      const Eigen::MatrixXd& x, const Eigen::VectorXd& y, const Eigen::VectorXd& q) {
  const Eigen::Index n = x.rows();
  Eigen::MatrixXd k = dense_gram(sf2, l, x, x);
  k += (noise + jitter) * Eigen::MatrixXd::Identity(n, n);
  const Eigen::MatrixXd kinv = k.inverse();
  Eigen::VectorXd ks(n);
  for (Eigen::Index i = 0; i < n; ++i) ks(i) = se_ard_scalar(sf2, l, x.row(i).transpose(), q);
  return {ks.dot(kinv * y), se_ard_scalar(sf2, l, q, q) - ks.dot(kinv * ks)};
}

inline Eigen::MatrixXd random_matrix(std::mt19937_64& rng, Eigen::Index rows, Eigen::Index cols, double lo = -2.0,
                                     double hi = 2.0) {
  std::uniform_real_distribution<double> u(lo, hi);
  Eigen::MatrixXd m(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i)
    for (Eigen::Index j = 0; j < cols; ++j) m(i, j) = u(rng);
  return m;
}

inline Eigen::Matrix3d rotation_about(const Eigen::Vector3d& axis, double angle) {
  return Eigen::AngleAxisd(angle, axis.normalized()).toRotationMatrix();
}

}  // namespace icalib::testing
