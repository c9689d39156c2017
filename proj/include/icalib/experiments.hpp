#pragma once

// Experiment drivers shared by the CLI and the acceptance runs: per-method
// train/evaluate, the split-ratio sweep and the translated-checkerboard study.

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "icalib/align.hpp"
#include "icalib/calibration.hpp"
#include "icalib/correspondence.hpp"
#include "icalib/error.hpp"
#include "icalib/gp.hpp"
#include "icalib/mlp.hpp"
#include "icalib/rig.hpp"

namespace icalib::exp {

enum class Method { kGp, kMlp, kTriangulation };

inline const char* to_string(Method m) {
  switch (m) {
    case Method::kGp:
      return "gp";
    case Method::kMlp:
      return "mlp";
    case Method::kTriangulation:
      return "triangulation";
  }
  return "?";
}

inline Method parse_method(const std::string& s) {
  if (s == "gp") return Method::kGp;
  if (s == "mlp") return Method::kMlp;
  if (s == "triangulation") return Method::kTriangulation;
  throw ConfigError("unknown method '" + s + "' (expected gp, mlp or triangulation)");
}

inline gp::KernelFamily parse_kernel(const std::string& s) {
  if (s == "se") return gp::KernelFamily::kSE;
  if (s == "se-ard") return gp::KernelFamily::kSEArd;
  throw ConfigError("unknown kernel '" + s + "' (expected se or se-ard)");
}

inline sim::CameraSet parse_camera_set(const std::string& s) {
  if (s == "2R") return sim::CameraSet::k2R;
  if (s == "2R2W") return sim::CameraSet::k2R2W;
  if (s == "2R4W") return sim::CameraSet::k2R4W;
  throw ConfigError("unknown camera set '" + s + "' (expected 2R, 2R2W or 2R4W)");
}

/// Nine train fractions, 90/10 down to 10/90.
inline std::vector<double> default_ratios() { return {0.9, 0.8, 0.7, 0.6, 0.5, 0.4, 0.3, 0.2, 0.1}; }

struct MethodSettings {
  gp::KernelFamily kernel = gp::KernelFamily::kSEArd;
  gp::FitConfig fit;
  mlp::MlpSpec mlp_spec;
  mlp::MlpTrainConfig mlp_train;
};

struct MethodResult {
  Method method = Method::kGp;
  Eigen::MatrixX3d truth;
  Eigen::MatrixX3d predictions;
  std::optional<Eigen::MatrixX3d> stds;        // per-axis posterior std, GP only
  std::optional<Eigen::VectorXd> combined_std; // GP only
  RmseReport rmse;
  double mean_std = std::numeric_limits<double>::quiet_NaN();
  double pre_alignment_rmse = std::numeric_limits<double>::quiet_NaN();  // triangulation only
  std::optional<ImplicitCalibration> gp_model;
  std::optional<mlp::MlpModel> mlp_model;
  std::vector<std::string> warnings;
};

inline MethodResult run_gp(const CorrespondenceSet& train, const CorrespondenceSet& test, const MethodSettings& s,
                           std::uint64_t seed) {
  gp::FitConfig cfg = s.fit;
  cfg.seed = seed;
  ImplicitCalibration model = train_calibration(train, s.kernel, cfg);
  const auto pred = predict_points(model, test.observations);
  MethodResult r;
  r.method = Method::kGp;
  r.truth = test.points;
  r.predictions.resize(test.size(), 3);
  Eigen::MatrixX3d stds(test.size(), 3);
  Eigen::VectorXd comb(test.size());
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const auto row = static_cast<Eigen::Index>(i);
    r.predictions.row(row) = pred[i].mean.transpose();
    stds.row(row) = pred[i].std.transpose();
    comb(row) = pred[i].combined_std;
  }
  r.rmse = evaluate_rmse(r.predictions, r.truth);
  r.mean_std = comb.mean();
  r.stds = std::move(stds);
  r.combined_std = std::move(comb);
  r.warnings = model.warnings();
  r.gp_model = std::move(model);
  return r;
}

inline MethodResult run_mlp(const CorrespondenceSet& train, const CorrespondenceSet& test, const MethodSettings& s,
                            std::uint64_t seed) {
  mlp::MlpTrainConfig cfg = s.mlp_train;
  cfg.seed = seed;
  mlp::MlpModel model = mlp::mlp_train(train, s.mlp_spec, cfg);
  MethodResult r;
  r.method = Method::kMlp;
  r.truth = test.points;
  r.predictions = mlp::mlp_predict_batch(model, test.observations);
  r.rmse = evaluate_rmse(r.predictions, r.truth);
  r.mlp_model = std::move(model);
  return r;
}

/// Known-parameter triangulation of every row. The reconstruction is expressed in
/// the first camera's frame (as an explicit calibration would report it) and then
/// rigidly aligned to the ground truth with known correspondences.
inline MethodResult run_triangulation(const sim::RigConfig& rig, const CorrespondenceSet& data) {
  data.validate();
  if (data.camera_count() != rig.camera_count()) throw InvalidArgument("dataset and rig camera counts differ");
  const auto& cam0 = rig.cameras.front();
  Eigen::MatrixX3d in_camera(data.size(), 3);
  for (Eigen::Index i = 0; i < data.size(); ++i) {
    const WorldPoint p = sim::triangulate_baseline(rig, data.observations.row(i).transpose());
    in_camera.row(i) = cam0.to_camera(p).transpose();
  }
  MethodResult r;
  r.method = Method::kTriangulation;
  r.truth = data.points;
  r.pre_alignment_rmse = evaluate_rmse(in_camera, data.points).rmse;
  const RigidTransform t = kabsch_align(in_camera, data.points);
  r.predictions = t.apply(in_camera);
  r.rmse = evaluate_rmse(r.predictions, r.truth);
  return r;
}

inline MethodResult run_method(Method m, const sim::RigConfig* rig, const CorrespondenceSet& all, const Split& split,
                               const MethodSettings& s, std::uint64_t seed) {
  switch (m) {
    case Method::kGp:
      return run_gp(split.train, split.test, s, seed);
    case Method::kMlp:
      return run_mlp(split.train, split.test, s, seed);
    case Method::kTriangulation:
      if (rig == nullptr) throw ConfigError("triangulation needs the rig parameters");
      return run_triangulation(*rig, all);
  }
  throw InvalidArgument("unknown method");
}

// ---- split-ratio sweep ----

struct SweepRow {
  Method method = Method::kGp;
  double ratio = 0.0;
  std::uint64_t seed = 0;
  double rmse = std::numeric_limits<double>::quiet_NaN();
  double mean_std = std::numeric_limits<double>::quiet_NaN();
  std::string status = "ok";
};

struct SweepConfig {
  std::vector<Method> methods{Method::kGp, Method::kMlp, Method::kTriangulation};
  std::vector<double> ratios = default_ratios();
  int runs = 10;
  std::uint64_t seed = 0;
  MethodSettings settings;
};

/// Rows are ordered method, ratio, run. Run r uses seed `config.seed + r` for the split and
/// the model. A failing cell is recorded with its error and the sweep continues.
inline std::vector<SweepRow> run_sweep(const CorrespondenceSet& data, const sim::RigConfig* rig, const SweepConfig& config) {
  if (config.runs < 1) throw ConfigError("runs must be at least 1");
  for (double r : config.ratios) {
    if (!(r > 0.0 && r < 1.0)) throw ConfigError("split ratios must lie strictly between 0 and 1");
  }
  std::vector<SweepRow> rows;
  std::optional<MethodResult> triangulation;
  for (Method m : config.methods) {
    for (double ratio : config.ratios) {
      for (int run = 0; run < config.runs; ++run) {
        SweepRow row;
        row.method = m;
        row.ratio = ratio;
        row.seed = config.seed + static_cast<std::uint64_t>(run);
        try {
          if (m == Method::kTriangulation) {
            // No training involved: every cell reports the same all-points evaluation.
            if (!triangulation) {
              if (rig == nullptr) throw ConfigError("triangulation needs the rig parameters");
              triangulation = run_triangulation(*rig, data);
            }
            row.rmse = triangulation->rmse.rmse;
          } else {
            const Split split = split_dataset(data, ratio, row.seed);
            const MethodResult res = run_method(m, rig, data, split, config.settings, row.seed);
            row.rmse = res.rmse.rmse;
            row.mean_std = res.mean_std;
          }
        } catch (const ConfigError&) {
          throw;
        } catch (const Error& e) {
          row.status = std::string("error: ") + e.what();
        }
        rows.push_back(row);
      }
    }
  }
  return rows;
}

// ---- translated checkerboard ----

/// Board positions used for training when `count` boards are kept: both ends first, then
/// floor midpoints between neighbours until the count is reached (2, 3, 5, 9, ...).
inline std::vector<int> board_subset(int positions, int count) {
  if (positions < 2) throw InvalidArgument("need at least two board positions");
  if (count < 2 || count > positions) throw InvalidArgument("board count must lie in [2, positions]");
  std::vector<int> chosen{0, positions - 1};
  while (static_cast<int>(chosen.size()) < count) {
    std::vector<int> next;
    bool grew = false;
    for (std::size_t i = 0; i + 1 < chosen.size(); ++i) {
      next.push_back(chosen[i]);
      const int mid = (chosen[i] + chosen[i + 1]) / 2;
      if (static_cast<int>(next.size() + (chosen.size() - i)) <= count && mid != chosen[i] && mid != chosen[i + 1]) {
        next.push_back(mid);
        grew = true;
      }
    }
    next.push_back(chosen.back());
    if (!grew) throw InvalidArgument("cannot place " + std::to_string(count) + " boards by bisection");
    chosen = std::move(next);
  }
  return chosen;
}

struct BoardSplit {
  CorrespondenceSet train;
  CorrespondenceSet test;
};

inline BoardSplit split_by_boards(const CorrespondenceSet& data, const std::vector<int>& boards) {
  if (!data.has_board_index()) throw InvalidArgument("dataset has no board index column");
  const std::set<int> keep(boards.begin(), boards.end());
  std::vector<std::size_t> tr, te;
  for (std::size_t i = 0; i < data.board_index.size(); ++i) (keep.count(data.board_index[i]) ? tr : te).push_back(i);
  if (tr.empty() || te.empty()) throw InvalidArgument("board split leaves an empty train or test set");
  return {data.subset(tr), data.subset(te)};
}

struct ScenarioRun {
  sim::CameraSet camera_set = sim::CameraSet::k2R;
  int boards = 2;
  Method method = Method::kGp;
  int repeat = 0;
  std::uint64_t seed = 0;
  MethodResult result;
};

struct ScenarioSummary {
  std::string scenario;  // e.g. "2R-5cb"
  Method method = Method::kGp;
  double rmse_mean = 0.0, rmse_std = 0.0;
  double avg_std_mean = std::numeric_limits<double>::quiet_NaN();
  double avg_std_std = std::numeric_limits<double>::quiet_NaN();
  double rmse_median = 0.0;
  int runs = 0;
};

struct CheckerboardConfig {
  std::vector<sim::CameraSet> camera_sets{sim::CameraSet::k2R, sim::CameraSet::k2R2W, sim::CameraSet::k2R4W};
  std::vector<int> board_counts{2, 3, 5, 9};
  std::vector<Method> methods{Method::kGp, Method::kMlp};
  /// Restrict a method to some board counts (empty = all); used to keep the MLP to the
  /// largest scenario in time-boxed runs.
  std::vector<std::pair<Method, std::vector<int>>> method_board_counts;
  int repeats = 3;
  double pixel_noise_std = 0.3;
  std::uint64_t seed = 0;
  sim::CheckerboardSpec board;
  MethodSettings settings;
};

inline std::string scenario_name(sim::CameraSet set, int boards) {
  return std::string(sim::to_string(set)) + "-" + std::to_string(boards) + "cb";
}

namespace detail {

inline double sample_std(const std::vector<double>& v) {
  if (v.size() < 2) return 0.0;
  double m = 0.0;
  for (double x : v) m += x;
  m /= static_cast<double>(v.size());
  double ss = 0.0;
  for (double x : v) ss += (x - m) * (x - m);
  return std::sqrt(ss / static_cast<double>(v.size() - 1));
}

inline double mean_of(const std::vector<double>& v) {
  double m = 0.0;
  for (double x : v) m += x;
  return v.empty() ? std::numeric_limits<double>::quiet_NaN() : m / static_cast<double>(v.size());
}

}  // namespace detail

inline double median(std::vector<double> v) {
  if (v.empty()) throw InvalidArgument("median of an empty list");
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 == 1 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

/// Repeat r regenerates the dataset with pixel-noise seed `seed + r` and fits with the same seed.
inline std::vector<ScenarioRun> run_checkerboard(const CheckerboardConfig& config) {
  if (config.repeats < 1) throw ConfigError("repeats must be at least 1");
  std::vector<ScenarioRun> runs;
  for (sim::CameraSet set : config.camera_sets) {
    for (int rep = 0; rep < config.repeats; ++rep) {
      const std::uint64_t seed = config.seed + static_cast<std::uint64_t>(rep);
      const sim::RigConfig rig = sim::default_checkerboard_rig(set, config.pixel_noise_std, seed, config.board);
      const CorrespondenceSet data = sim::generate_checkerboard_dataset(rig, config.board);
      for (int count : config.board_counts) {
        const BoardSplit split = split_by_boards(data, board_subset(config.board.positions, count));
        for (Method m : config.methods) {
          bool allowed = true;
          for (const auto& [method, counts] : config.method_board_counts) {
            if (method == m && !counts.empty()) allowed = std::find(counts.begin(), counts.end(), count) != counts.end();
          }
          if (!allowed) continue;
          MethodResult res = m == Method::kGp    ? run_gp(split.train, split.test, config.settings, seed)
                             : m == Method::kMlp ? run_mlp(split.train, split.test, config.settings, seed)
                                                 : run_triangulation(rig, split.test);
          runs.push_back({set, count, m, rep, seed, std::move(res)});
        }
      }
    }
  }
  return runs;
}

/// Table-shaped aggregation over repeats, one row per (scenario, method).
inline std::vector<ScenarioSummary> summarize(const std::vector<ScenarioRun>& runs) {
  std::vector<ScenarioSummary> out;
  std::vector<std::string> keys;
  for (const auto& r : runs) {
    const std::string key = scenario_name(r.camera_set, r.boards) + "/" + to_string(r.method);
    if (std::find(keys.begin(), keys.end(), key) != keys.end()) continue;
    keys.push_back(key);
    std::vector<double> rmse, stds;
    for (const auto& q : runs) {
      if (q.camera_set == r.camera_set && q.boards == r.boards && q.method == r.method) {
        rmse.push_back(q.result.rmse.rmse);
        if (std::isfinite(q.result.mean_std)) stds.push_back(q.result.mean_std);
      }
    }
    ScenarioSummary s;
    s.scenario = scenario_name(r.camera_set, r.boards);
    s.method = r.method;
    s.runs = static_cast<int>(rmse.size());
    s.rmse_mean = detail::mean_of(rmse);
    s.rmse_std = detail::sample_std(rmse);
    s.rmse_median = median(rmse);
    if (!stds.empty()) {
      s.avg_std_mean = detail::mean_of(stds);
      s.avg_std_std = detail::sample_std(stds);
    }
    out.push_back(s);
  }
  return out;
}

}  // namespace icalib::exp
