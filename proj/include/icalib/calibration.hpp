#pragma once

// Implicit multi-camera calibration: three independent GPs map the
// concatenated pixel coordinates of all cameras to world x, y and z.

#include <Eigen/Dense>
#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <optional>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "icalib/correspondence.hpp"
#include "icalib/error.hpp"
#include "icalib/gp.hpp"

namespace icalib {

struct PredictedPoint {
  WorldPoint mean = WorldPoint::Zero();
  Eigen::Vector3d std = Eigen::Vector3d::Zero();  // per-axis posterior std, mm
  double combined_std = 0.0;                      // mean of the three per-axis stds, mm
};

/// Combined uncertainty of one prediction: arithmetic mean of the per-axis stds.
inline double combine_std(const Eigen::Vector3d& per_axis) { return per_axis.mean(); }

class ImplicitCalibration {
 public:
  ImplicitCalibration(std::array<gp::FittedGP, 3> axes, int camera_count, std::vector<std::string> warnings = {})
      : axes_(std::move(axes)), camera_count_(camera_count), warnings_(std::move(warnings)) {
    for (const auto& a : axes_) {
      if (a.input_dim() != 2 * camera_count_) throw InvalidArgument("axis GP input dimension must be 2 * cameras");
    }
  }

  const gp::FittedGP& axis(int k) const { return axes_.at(static_cast<std::size_t>(k)); }
  const gp::FittedGP& gp_x() const { return axes_[0]; }
  const gp::FittedGP& gp_y() const { return axes_[1]; }
  const gp::FittedGP& gp_z() const { return axes_[2]; }
  int camera_count() const { return camera_count_; }
  Eigen::Index input_dim() const { return 2 * camera_count_; }
  Eigen::Index training_size() const { return axes_[0].raw_data().size(); }
  const std::vector<std::string>& warnings() const { return warnings_; }

  /// Training set in correspondence form (shared inputs, per-axis targets).
  CorrespondenceSet training_data() const {
    CorrespondenceSet out;
    out.observations = axes_[0].raw_data().inputs;
    out.points.resize(out.observations.rows(), 3);
    for (int k = 0; k < 3; ++k) out.points.col(k) = axes_[static_cast<std::size_t>(k)].raw_data().targets;
    return out;
  }

  /// Mean of the three prior stds in mm; far from the data combined_std reverts to this.
  double prior_combined_std() const {
    return (axes_[0].prior_std() + axes_[1].prior_std() + axes_[2].prior_std()) / 3.0;
  }

 private:
  std::array<gp::FittedGP, 3> axes_;
  int camera_count_;
  std::vector<std::string> warnings_;
};

namespace detail {

inline gp::Dataset axis_dataset(const CorrespondenceSet& data, int axis) {
  return {data.observations, data.points.col(axis)};
}

}  // namespace detail

/// Fits one GP per world axis on identical inputs. The axes never share information.
inline ImplicitCalibration train_calibration(const CorrespondenceSet& data,
                                             gp::KernelFamily family = gp::KernelFamily::kSEArd,
                                             const gp::FitConfig& config = {}) {
  data.validate();
  const int cams = data.camera_count();
  if (data.size() < 2) {
    throw InsufficientData("calibration needs at least 2 correspondences, got " + std::to_string(data.size()));
  }
  std::vector<std::string> warnings;
  const Eigen::Index recommended = 2 * (2 * cams) + 1;
  if (data.size() < recommended) {
    warnings.push_back("only " + std::to_string(data.size()) + " correspondences for a " + std::to_string(2 * cams) +
                       "-dimensional input; at least " + std::to_string(recommended) + " are recommended");
  }
  const gp::KernelSpec spec{family, 2 * cams};
  std::array<gp::FittedGP, 3> axes{gp::fit(detail::axis_dataset(data, 0), spec, config),
                                   gp::fit(detail::axis_dataset(data, 1), spec, config),
                                   gp::fit(detail::axis_dataset(data, 2), spec, config)};
  return ImplicitCalibration(std::move(axes), cams, std::move(warnings));
}

/// Re-optimizes every axis starting from the previous optimum of that axis plus
/// `config.restarts` fresh starts.
inline ImplicitCalibration refit_calibration(const ImplicitCalibration& previous, const CorrespondenceSet& data,
                                             gp::FitConfig config) {
  data.validate();
  if (data.camera_count() != previous.camera_count()) throw InvalidArgument("camera count mismatch");
  std::array<std::optional<gp::FittedGP>, 3> fitted;
  for (int k = 0; k < 3; ++k) {
    config.warm_start = previous.axis(k).hyper();
    fitted[static_cast<std::size_t>(k)] = gp::fit(detail::axis_dataset(data, k), previous.axis(k).kernel(), config);
  }
  return ImplicitCalibration({std::move(*fitted[0]), std::move(*fitted[1]), std::move(*fitted[2])},
                             previous.camera_count());
}

/// Refits with frozen hyperparameters and standardization (no optimization).
inline ImplicitCalibration condition_calibration(const ImplicitCalibration& model, const CorrespondenceSet& data) {
  data.validate();
  if (data.camera_count() != model.camera_count()) throw InvalidArgument("camera count mismatch");
  std::array<gp::FittedGP, 3> axes{gp::condition_on(model.gp_x(), detail::axis_dataset(data, 0)),
                                   gp::condition_on(model.gp_y(), detail::axis_dataset(data, 1)),
                                   gp::condition_on(model.gp_z(), detail::axis_dataset(data, 2))};
  return ImplicitCalibration(std::move(axes), model.camera_count());
}

inline std::vector<PredictedPoint> predict_points(const ImplicitCalibration& model, const Eigen::MatrixXd& observations) {
  if (observations.cols() != model.input_dim()) {
    throw InvalidArgument("observation has " + std::to_string(observations.cols()) + " entries, model expects " +
                          std::to_string(model.input_dim()));
  }
  std::vector<PredictedPoint> out(static_cast<std::size_t>(observations.rows()));
  for (int k = 0; k < 3; ++k) {
    const auto post = gp::posterior_predict_batch(model.axis(k), observations);
    for (std::size_t i = 0; i < out.size(); ++i) {
      out[i].mean(k) = post[i].mean;
      out[i].std(k) = post[i].std();
    }
  }
  for (auto& p : out) p.combined_std = combine_std(p.std);
  return out;
}

inline PredictedPoint predict_point(const ImplicitCalibration& model, const PixelObservation& obs) {
  return predict_points(model, obs.transpose()).front();
}

struct RmseReport {
  double rmse = 0.0;                                   // sqrt(mean squared 3D distance)
  Eigen::Vector3d per_axis = Eigen::Vector3d::Zero();  // per-axis RMSE
  std::vector<double> errors;                          // per-point Euclidean error
};

inline RmseReport evaluate_rmse(const Eigen::MatrixX3d& predictions, const Eigen::MatrixX3d& truth) {
  if (predictions.rows() != truth.rows()) throw InvalidArgument("prediction and truth counts differ");
  if (predictions.rows() == 0) throw InvalidArgument("cannot compute RMSE of an empty set");
  const Eigen::MatrixX3d diff = predictions - truth;
  const double n = static_cast<double>(diff.rows());
  RmseReport r;
  r.errors.resize(static_cast<std::size_t>(diff.rows()));
  for (Eigen::Index i = 0; i < diff.rows(); ++i) r.errors[static_cast<std::size_t>(i)] = diff.row(i).norm();
  r.rmse = std::sqrt(diff.squaredNorm() / n);
  r.per_axis = (diff.colwise().squaredNorm() / n).cwiseSqrt().transpose();
  return r;
}

inline RmseReport evaluate_rmse(const std::vector<WorldPoint>& predictions, const std::vector<WorldPoint>& truth) {
  auto stack = [](const std::vector<WorldPoint>& v) {
    Eigen::MatrixX3d m(static_cast<Eigen::Index>(v.size()), 3);
    for (std::size_t i = 0; i < v.size(); ++i) m.row(static_cast<Eigen::Index>(i)) = v[i].transpose();
    return m;
  };
  if (predictions.size() != truth.size()) throw InvalidArgument("prediction and truth counts differ");
  return evaluate_rmse(stack(predictions), stack(truth));
}

/// Number of training rows for a split: nearest integer with halves rounded down, clamped to [2, n-1].
inline std::size_t train_size_for(std::size_t n, double train_fraction) {
  const double exact = static_cast<double>(n) * train_fraction;
  auto k = static_cast<std::size_t>(std::max(0.0, std::ceil(exact - 0.5)));
  k = std::max<std::size_t>(k, 2);
  return std::min(k, n - 1);
}

struct Split {
  CorrespondenceSet train;
  CorrespondenceSet test;
  std::vector<std::size_t> train_rows;
  std::vector<std::size_t> test_rows;
};

/// Seeded random partition into train and test rows.
inline Split split_dataset(const CorrespondenceSet& data, double train_fraction, std::uint64_t seed) {
  if (!(train_fraction > 0.0 && train_fraction < 1.0)) {
    throw InvalidArgument("train fraction must lie strictly between 0 and 1");
  }
  const auto n = static_cast<std::size_t>(data.size());
  if (n < 3) throw InsufficientData("splitting needs at least 3 rows");
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::mt19937_64 rng(seed);
  std::shuffle(order.begin(), order.end(), rng);
  const std::size_t k = train_size_for(n, train_fraction);
  Split s;
  s.train_rows.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(k));
  s.test_rows.assign(order.begin() + static_cast<std::ptrdiff_t>(k), order.end());
  s.train = data.subset(s.train_rows);
  s.test = data.subset(s.test_rows);
  return s;
}

}  // namespace icalib
