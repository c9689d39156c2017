#pragma once

// Uncertainty sampling: repeatedly query the pool candidate whose prediction
// has the largest combined posterior std, add it to the training set, retrain.

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "icalib/calibration.hpp"
#include "icalib/correspondence.hpp"
#include "icalib/error.hpp"
#include "icalib/gp.hpp"
#include "icalib/rig.hpp"

namespace icalib::al {

/// Finite candidate set in pixel space. The world points are hidden ground truth
/// that only the oracle reveals.
class CandidatePool {
 public:
  explicit CandidatePool(CorrespondenceSet candidates)
      : data_(std::move(candidates)), consumed_(static_cast<std::size_t>(data_.size()), false) {
    data_.validate();
  }

  std::size_t size() const { return consumed_.size(); }
  std::size_t remaining() const { return static_cast<std::size_t>(std::count(consumed_.begin(), consumed_.end(), false)); }
  bool consumed(std::size_t i) const { return consumed_.at(i); }
  const CorrespondenceSet& candidates() const { return data_; }
  PixelObservation observation(std::size_t i) const { return data_.observations.row(static_cast<Eigen::Index>(i)).transpose(); }

  void consume(std::size_t i) {
    if (i >= consumed_.size()) throw NotInPool("candidate " + std::to_string(i) + " is not in the pool");
    if (consumed_[i]) throw InvalidArgument("candidate " + std::to_string(i) + " was already consumed");
    consumed_[i] = true;
  }

  /// Unconsumed indices in increasing order.
  std::vector<std::size_t> open_indices() const {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < consumed_.size(); ++i) {
      if (!consumed_[i]) out.push_back(i);
    }
    return out;
  }

 private:
  CorrespondenceSet data_;
  std::vector<bool> consumed_;
};

struct Acquisition {
  std::size_t index = 0;
  double value = 0.0;  // combined_std at selection, mm
};

/// Argmax of combined_std over unconsumed candidates; ties go to the lowest index.
inline Acquisition acquire_next(const ImplicitCalibration& model, const CandidatePool& pool) {
  const auto open = pool.open_indices();
  if (open.empty()) throw InvalidArgument("candidate pool is exhausted");
  Eigen::MatrixXd obs(static_cast<Eigen::Index>(open.size()), model.input_dim());
  for (std::size_t r = 0; r < open.size(); ++r) {
    obs.row(static_cast<Eigen::Index>(r)) = pool.candidates().observations.row(static_cast<Eigen::Index>(open[r]));
  }
  const auto pred = predict_points(model, obs);
  Acquisition best{open.front(), pred.front().combined_std};
  for (std::size_t r = 1; r < open.size(); ++r) {
    if (pred[r].combined_std > best.value) best = {open[r], pred[r].combined_std};
  }
  return best;
}

struct AlConfig {
  double seed_fraction = 0.2;
  int max_iterations = 100;
  int repeats = 5;
  std::optional<double> stop_threshold;  // on mean pool combined_std, mm
  std::uint64_t seed = 0;
  /// Condition on the grown set with the seed-set hyperparameters instead of refitting.
  bool freeze_hyperparameters = false;
  gp::KernelFamily kernel = gp::KernelFamily::kSEArd;
  gp::FitConfig fit;
  /// Fresh restarts per refit, in addition to the warm start from the previous optimum.
  int refit_restarts = 1;

  void validate() const {
    if (!(seed_fraction > 0.0 && seed_fraction < 1.0)) throw InvalidArgument("seed fraction must lie in (0, 1)");
    if (max_iterations < 1) throw InvalidArgument("max iterations must be at least 1");
    if (repeats < 1) throw InvalidArgument("repeats must be at least 1");
    if (refit_restarts < 0) throw InvalidArgument("refit restarts must be non-negative");
    if (stop_threshold && !(*stop_threshold >= 0.0)) throw InvalidArgument("stop threshold must be non-negative");
  }
};

struct AlRecord {
  int iteration = 0;
  std::size_t selected_index = 0;
  double acquisition_value = 0.0;
  /// combined_std at the acquired observation after retraining.
  double post_acquisition_std = 0.0;
  double mean_pool_std = 0.0;  // over candidates still open after this step
  double test_rmse = std::numeric_limits<double>::quiet_NaN();
};

struct AlTrace {
  int repeat = 0;
  std::uint64_t seed = 0;
  std::vector<std::size_t> seed_indices;
  double initial_mean_pool_std = 0.0;
  double initial_test_rmse = std::numeric_limits<double>::quiet_NaN();
  std::vector<AlRecord> records;
  bool complete = true;
  std::string failure;

  double final_mean_pool_std() const { return records.empty() ? initial_mean_pool_std : records.back().mean_pool_std; }
};

namespace detail {

struct PoolStats {
  double mean_std = std::numeric_limits<double>::quiet_NaN();
  double rmse = std::numeric_limits<double>::quiet_NaN();
};

/// Uncertainty and error over the open candidates; their stored world points are
/// used for scoring only, never for training.
inline PoolStats pool_stats(const ImplicitCalibration& model, const CandidatePool& pool) {
  const auto open = pool.open_indices();
  PoolStats s;
  if (open.empty()) return s;
  const CorrespondenceSet rest = pool.candidates().subset(open);
  const auto pred = predict_points(model, rest.observations);
  Eigen::MatrixX3d means(rest.size(), 3);
  double total = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    means.row(static_cast<Eigen::Index>(i)) = pred[i].mean.transpose();
    total += pred[i].combined_std;
  }
  s.mean_std = total / static_cast<double>(pred.size());
  s.rmse = evaluate_rmse(means, rest.points).rmse;
  return s;
}

}  // namespace detail

/// One repeat: seed subset drawn with `config.seed + repeat`, the rest forms the pool.
inline AlTrace run_active_learning_repeat(const CorrespondenceSet& dataset, const AlConfig& config, int repeat) {
  config.validate();
  dataset.validate();
  const auto n = static_cast<std::size_t>(dataset.size());
  const std::size_t n_seed = train_size_for(n, config.seed_fraction);
  if (n < 3 || n_seed < 2) throw InsufficientData("dataset too small for the requested seed fraction");

  AlTrace trace;
  trace.repeat = repeat;
  trace.seed = config.seed + static_cast<std::uint64_t>(repeat);
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::mt19937_64 rng(trace.seed);
  std::shuffle(order.begin(), order.end(), rng);
  trace.seed_indices.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_seed));
  std::vector<std::size_t> pool_rows(order.begin() + static_cast<std::ptrdiff_t>(n_seed), order.end());
  std::sort(pool_rows.begin(), pool_rows.end());

  CorrespondenceSet train = dataset.subset(trace.seed_indices);
  CandidatePool pool(dataset.subset(pool_rows));

  gp::FitConfig fit_config = config.fit;
  fit_config.seed = trace.seed;
  std::optional<ImplicitCalibration> model;
  try {
    model = train_calibration(train, config.kernel, fit_config);
  } catch (const NumericalError& e) {
    trace.complete = false;
    trace.failure = e.what();
    return trace;
  }
  const auto initial = detail::pool_stats(*model, pool);
  trace.initial_mean_pool_std = initial.mean_std;
  trace.initial_test_rmse = initial.rmse;
  if (config.stop_threshold && initial.mean_std <= *config.stop_threshold) return trace;

  gp::FitConfig refit_config = fit_config;
  refit_config.restarts = config.refit_restarts;
  for (int it = 1; it <= config.max_iterations && pool.remaining() > 0; ++it) {
    const Acquisition acq = acquire_next(*model, pool);
    const PixelObservation obs = pool.observation(acq.index);
    const WorldPoint truth = sim::query_oracle(pool.candidates(), obs);
    pool.consume(acq.index);
    train.append(obs, truth);
    refit_config.seed = trace.seed + static_cast<std::uint64_t>(it);
    try {
      model = config.freeze_hyperparameters ? condition_calibration(*model, train)
                                            : refit_calibration(*model, train, refit_config);
    } catch (const NumericalError& e) {
      trace.complete = false;
      trace.failure = "iteration " + std::to_string(it) + ": " + e.what();
      return trace;
    }
    AlRecord rec;
    rec.iteration = it;
    rec.selected_index = pool_rows[acq.index];
    rec.acquisition_value = acq.value;
    rec.post_acquisition_std = predict_point(*model, obs).combined_std;
    const auto stats = detail::pool_stats(*model, pool);
    rec.mean_pool_std = stats.mean_std;
    rec.test_rmse = stats.rmse;
    trace.records.push_back(rec);
    if (config.stop_threshold && stats.mean_std <= *config.stop_threshold) break;
  }
  return trace;
}

inline std::vector<AlTrace> run_active_learning(const CorrespondenceSet& dataset, const AlConfig& config) {
  config.validate();
  std::vector<AlTrace> traces;
  for (int r = 0; r < config.repeats; ++r) traces.push_back(run_active_learning_repeat(dataset, config, r));
  return traces;
}

}  // namespace icalib::al
