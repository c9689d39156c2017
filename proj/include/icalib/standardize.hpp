#pragma once

#include <Eigen/Dense>
#include <cmath>

namespace icalib {

/// Per-column affine scaling to zero mean and unit (population) variance.
/// Constant columns keep scale 1 so they map to all-zero columns.
struct ColumnScaling {
  Eigen::VectorXd mean;
  Eigen::VectorXd scale;

  static ColumnScaling fit(const Eigen::MatrixXd& data) {
    ColumnScaling s;
    const Eigen::Index n = data.rows();
    s.mean = data.colwise().mean().transpose();
    s.scale.resize(data.cols());
    for (Eigen::Index j = 0; j < data.cols(); ++j) {
      const double var = (data.col(j).array() - s.mean(j)).square().sum() / static_cast<double>(n);
      const double sd = std::sqrt(var);
      s.scale(j) = sd > 1e-12 * std::max(1.0, std::abs(s.mean(j))) ? sd : 1.0;
    }
    return s;
  }

  static ColumnScaling identity(Eigen::Index dim) {
    return {Eigen::VectorXd::Zero(dim), Eigen::VectorXd::Ones(dim)};
  }

  Eigen::Index dim() const { return mean.size(); }

  Eigen::MatrixXd apply(const Eigen::MatrixXd& data) const {
    return (data.rowwise() - mean.transpose()).array().rowwise() / scale.transpose().array();
  }

  Eigen::RowVectorXd apply_row(const Eigen::Ref<const Eigen::RowVectorXd>& row) const {
    return (row - mean.transpose()).array() / scale.transpose().array();
  }

  Eigen::MatrixXd invert(const Eigen::MatrixXd& data) const {
    return (data.array().rowwise() * scale.transpose().array()).matrix().rowwise() + mean.transpose();
  }
};

}  // namespace icalib
