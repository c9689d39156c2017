#pragma once

// Command-line front end: simulate, train, sweep, active-learn and
// checkerboard-eval. Data files are deterministic given the config and seed;
// only manifest timestamps vary between runs.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <ctime>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "icalib/active_learning.hpp"
#include "icalib/calibration.hpp"
#include "icalib/error.hpp"
#include "icalib/experiments.hpp"
#include "icalib/io.hpp"
#include "icalib/rig.hpp"

namespace icalib::cli {

using json = nlohmann::json;
namespace fs = std::filesystem;

inline constexpr const char* kVersion = "1.0.0";

enum ExitCode : int { kOk = 0, kConfigError = 1, kNumericalFailure = 2, kIoFailure = 3 };

struct ExperimentConfig {
  std::string experiment = "grid";  // grid | checkerboard | active_learning
  std::optional<std::string> rig_path;
  std::optional<std::string> data_path;
  sim::CameraSet camera_set = sim::CameraSet::k2R;
  double pixel_noise_std = 0.3;
  std::uint64_t seed = 0;
  sim::GridSpec grid;
  sim::CheckerboardSpec board;
  exp::Method method = exp::Method::kGp;
  exp::MethodSettings settings;
  double ratio = 0.9;
  std::vector<exp::Method> sweep_methods{exp::Method::kGp, exp::Method::kMlp, exp::Method::kTriangulation};
  std::vector<double> sweep_ratios = exp::default_ratios();
  int runs = 10;
  al::AlConfig al;
  exp::CheckerboardConfig checkerboard;
};

namespace detail {

template <typename T>
T get_or(const json& j, const char* key, T fallback, const std::string& where) {
  if (!j.contains(key) || j.at(key).is_null()) return fallback;
  try {
    return j.at(key).get<T>();
  } catch (const json::exception&) {
    throw ConfigError(where + "." + key + " has the wrong type");
  }
}

inline std::vector<exp::Method> parse_methods(const std::vector<std::string>& names) {
  std::vector<exp::Method> out;
  for (const auto& n : names) out.push_back(exp::parse_method(n));
  if (out.empty()) throw ConfigError("method list is empty");
  return out;
}

inline std::vector<std::string> method_names(const std::vector<exp::Method>& ms) {
  std::vector<std::string> out;
  for (auto m : ms) out.emplace_back(exp::to_string(m));
  return out;
}

inline Eigen::Vector3d vec3(const json& j, const char* key, const Eigen::Vector3d& fallback, const std::string& where) {
  const auto v = get_or<std::vector<double>>(j, key, {fallback.x(), fallback.y(), fallback.z()}, where);
  if (v.size() != 3) throw ConfigError(where + "." + key + " needs 3 numbers");
  return {v[0], v[1], v[2]};
}

inline json vec3_json(const Eigen::Vector3d& v) { return {v.x(), v.y(), v.z()}; }

inline std::string iso_utc_now() {
  const std::time_t t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

inline std::string num_or_empty(double v) { return std::isfinite(v) ? io::format_double(v) : std::string(); }

}  // namespace detail

inline ExperimentConfig config_from_json(const json& j) {
  if (!j.is_object()) throw ConfigError("config must be a JSON object");
  ExperimentConfig c;
  const std::string w = "config";
  c.experiment = detail::get_or<std::string>(j, "experiment", c.experiment, w);
  if (c.experiment != "grid" && c.experiment != "checkerboard" && c.experiment != "active_learning") {
    throw ConfigError("config.experiment must be grid, checkerboard or active_learning");
  }
  if (j.contains("rig") && !j.at("rig").is_null()) c.rig_path = detail::get_or<std::string>(j, "rig", "", w);
  if (j.contains("data") && !j.at("data").is_null()) c.data_path = detail::get_or<std::string>(j, "data", "", w);
  c.camera_set = exp::parse_camera_set(detail::get_or<std::string>(j, "camera_set", "2R", w));
  c.pixel_noise_std = detail::get_or<double>(j, "pixel_noise_std", c.pixel_noise_std, w);
  c.seed = detail::get_or<std::uint64_t>(j, "seed", c.seed, w);
  c.method = exp::parse_method(detail::get_or<std::string>(j, "method", "gp", w));
  c.settings.kernel = exp::parse_kernel(detail::get_or<std::string>(j, "kernel", "se-ard", w));

  if (j.contains("grid")) {
    const json& g = j.at("grid");
    const auto counts = detail::get_or<std::vector<int>>(g, "counts", {5, 5, 7}, "config.grid");
    if (counts.size() != 3) throw ConfigError("config.grid.counts needs 3 integers");
    c.grid.counts = {counts[0], counts[1], counts[2]};
    c.grid.origin = detail::vec3(g, "origin", c.grid.origin, "config.grid");
    c.grid.spacing = detail::vec3(g, "spacing", c.grid.spacing, "config.grid");
  }
  if (j.contains("checkerboard")) {
    const json& b = j.at("checkerboard");
    const std::string bw = "config.checkerboard";
    c.board.rows = detail::get_or<int>(b, "rows", c.board.rows, bw);
    c.board.cols = detail::get_or<int>(b, "cols", c.board.cols, bw);
    c.board.square_size = detail::get_or<double>(b, "square_size", c.board.square_size, bw);
    c.board.positions = detail::get_or<int>(b, "positions", c.board.positions, bw);
    c.board.step = detail::get_or<double>(b, "step", c.board.step, bw);
  }
  if (j.contains("fit")) {
    const json& f = j.at("fit");
    auto& fc = c.settings.fit;
    fc.restarts = detail::get_or<int>(f, "restarts", fc.restarts, "config.fit");
    fc.max_iterations = detail::get_or<int>(f, "max_iterations", fc.max_iterations, "config.fit");
    fc.tolerance = detail::get_or<double>(f, "tolerance", fc.tolerance, "config.fit");
    fc.noise_floor = detail::get_or<double>(f, "noise_floor", fc.noise_floor, "config.fit");
  }
  if (j.contains("mlp")) {
    const json& m = j.at("mlp");
    auto& mc = c.settings.mlp_train;
    mc.epochs = detail::get_or<int>(m, "epochs", mc.epochs, "config.mlp");
    mc.learning_rate = detail::get_or<double>(m, "learning_rate", mc.learning_rate, "config.mlp");
    mc.batch_size = detail::get_or<int>(m, "batch_size", mc.batch_size, "config.mlp");
    c.settings.mlp_spec.dropout = detail::get_or<double>(m, "dropout", c.settings.mlp_spec.dropout, "config.mlp");
    c.settings.mlp_spec.negative_slope =
        detail::get_or<double>(m, "negative_slope", c.settings.mlp_spec.negative_slope, "config.mlp");
    c.settings.mlp_spec.hidden = detail::get_or<std::vector<int>>(m, "hidden", c.settings.mlp_spec.hidden, "config.mlp");
  }
  if (j.contains("split")) c.ratio = detail::get_or<double>(j.at("split"), "ratio", c.ratio, "config.split");
  if (j.contains("sweep")) {
    const json& s = j.at("sweep");
    c.sweep_ratios = detail::get_or<std::vector<double>>(s, "ratios", c.sweep_ratios, "config.sweep");
    c.runs = detail::get_or<int>(s, "runs", c.runs, "config.sweep");
    if (s.contains("methods")) {
      c.sweep_methods = detail::parse_methods(detail::get_or<std::vector<std::string>>(s, "methods", {}, "config.sweep"));
    }
  }
  if (j.contains("al")) {
    const json& a = j.at("al");
    c.al.seed_fraction = detail::get_or<double>(a, "seed_fraction", c.al.seed_fraction, "config.al");
    c.al.max_iterations = detail::get_or<int>(a, "max_iterations", c.al.max_iterations, "config.al");
    c.al.repeats = detail::get_or<int>(a, "repeats", c.al.repeats, "config.al");
    c.al.freeze_hyperparameters =
        detail::get_or<bool>(a, "freeze_hyperparameters", c.al.freeze_hyperparameters, "config.al");
    c.al.refit_restarts = detail::get_or<int>(a, "refit_restarts", c.al.refit_restarts, "config.al");
    if (a.contains("stop_threshold") && !a.at("stop_threshold").is_null()) {
      c.al.stop_threshold = detail::get_or<double>(a, "stop_threshold", 0.0, "config.al");
    }
  }
  if (j.contains("checkerboard_eval")) {
    const json& e = j.at("checkerboard_eval");
    const std::string ew = "config.checkerboard_eval";
    if (e.contains("camera_sets")) {
      c.checkerboard.camera_sets.clear();
      for (const auto& s : detail::get_or<std::vector<std::string>>(e, "camera_sets", {}, ew)) {
        c.checkerboard.camera_sets.push_back(exp::parse_camera_set(s));
      }
    }
    c.checkerboard.board_counts = detail::get_or<std::vector<int>>(e, "board_counts", c.checkerboard.board_counts, ew);
    c.checkerboard.repeats = detail::get_or<int>(e, "repeats", c.checkerboard.repeats, ew);
    if (e.contains("methods")) {
      c.checkerboard.methods = detail::parse_methods(detail::get_or<std::vector<std::string>>(e, "methods", {}, ew));
    }
    if (e.contains("mlp_board_counts")) {
      c.checkerboard.method_board_counts = {
          {exp::Method::kMlp, detail::get_or<std::vector<int>>(e, "mlp_board_counts", {}, ew)}};
    }
  }
  return c;
}

/// Effective configuration, echoed into every manifest.
inline json config_to_json(const ExperimentConfig& c) {
  json cams = json::array();
  for (auto s : c.checkerboard.camera_sets) cams.push_back(sim::to_string(s));
  json mlp_counts = nullptr;
  for (const auto& [m, counts] : c.checkerboard.method_board_counts) {
    if (m == exp::Method::kMlp) mlp_counts = counts;
  }
  const auto& f = c.settings.fit;
  const auto& mt = c.settings.mlp_train;
  return {
      {"experiment", c.experiment},
      {"rig", c.rig_path ? json(*c.rig_path) : json(nullptr)},
      {"data", c.data_path ? json(*c.data_path) : json(nullptr)},
      {"camera_set", sim::to_string(c.camera_set)},
      {"pixel_noise_std", c.pixel_noise_std},
      {"seed", c.seed},
      {"method", exp::to_string(c.method)},
      {"kernel", gp::to_string(c.settings.kernel)},
      {"grid",
       {{"counts", {c.grid.counts[0], c.grid.counts[1], c.grid.counts[2]}},
        {"origin", detail::vec3_json(c.grid.origin)},
        {"spacing", detail::vec3_json(c.grid.spacing)}}},
      {"checkerboard",
       {{"rows", c.board.rows},
        {"cols", c.board.cols},
        {"square_size", c.board.square_size},
        {"positions", c.board.positions},
        {"step", c.board.step}}},
      {"fit",
       {{"restarts", f.restarts},
        {"max_iterations", f.max_iterations},
        {"tolerance", f.tolerance},
        {"noise_floor", f.noise_floor},
        {"initial_outputscale", f.initial_outputscale},
        {"initial_noise", f.initial_noise},
        {"init_lengthscale_range", {f.init_lengthscale_low, f.init_lengthscale_high}}}},
      {"mlp",
       {{"hidden", c.settings.mlp_spec.hidden},
        {"negative_slope", c.settings.mlp_spec.negative_slope},
        {"dropout", c.settings.mlp_spec.dropout},
        {"optimizer", "adam"},
        {"learning_rate", mt.learning_rate},
        {"epochs", mt.epochs},
        {"batch_size", mt.batch_size}}},
      {"split", {{"ratio", c.ratio}}},
      {"sweep", {{"ratios", c.sweep_ratios}, {"runs", c.runs}, {"methods", detail::method_names(c.sweep_methods)}}},
      {"al",
       {{"seed_fraction", c.al.seed_fraction},
        {"max_iterations", c.al.max_iterations},
        {"repeats", c.al.repeats},
        {"stop_threshold", c.al.stop_threshold ? json(*c.al.stop_threshold) : json(nullptr)},
        {"freeze_hyperparameters", c.al.freeze_hyperparameters},
        {"refit_restarts", c.al.refit_restarts}}},
      {"checkerboard_eval",
       {{"camera_sets", cams},
        {"board_counts", c.checkerboard.board_counts},
        {"repeats", c.checkerboard.repeats},
        {"methods", detail::method_names(c.checkerboard.methods)},
        {"mlp_board_counts", mlp_counts}}},
  };
}

/// Collects output files and writes the manifest last.
class RunRecorder {
 public:
  RunRecorder(fs::path out_dir, std::string command, const ExperimentConfig& config)
      : out_(std::move(out_dir)), command_(std::move(command)), config_(config_to_json(config)),
        started_(detail::iso_utc_now()) {
    std::error_code ec;
    fs::create_directories(out_, ec);
    if (ec) throw IoError("cannot create output directory " + out_.string() + ": " + ec.message());
  }

  void write(const std::string& name, const std::string& content) {
    io::atomic_write(out_ / name, content);
    files_.push_back({{"path", name}, {"bytes", content.size()}, {"sha256", io::sha256_hex(content)}});
  }

  json& metrics() { return metrics_; }
  json& seeds() { return seeds_; }
  void note(std::string n) { notes_.push_back(std::move(n)); }

  void finish() {
    const json manifest = {{"tool", "icalib"},
                           {"version", kVersion},
                           {"command", command_},
                           {"config", config_},
                           {"seeds", seeds_},
                           {"started_at", started_},
                           {"finished_at", detail::iso_utc_now()},
                           {"metrics", metrics_},
                           {"notes", notes_},
                           {"files", files_}};
    io::atomic_write(out_ / "manifest.json", manifest.dump(2) + "\n");
  }

 private:
  fs::path out_;
  std::string command_;
  json config_;
  std::string started_;
  json metrics_ = json::object();
  json seeds_ = json::object();
  json files_ = json::array();
  std::vector<std::string> notes_;
};

namespace detail {

inline const char* kLatentNote = "posterior std is latent-function uncertainty and excludes observation noise";
inline const char* kCombinedNote = "combined_std is the arithmetic mean of the per-axis posterior stds";
inline const char* kTriangulationNote =
    "triangulation uses the simulator's exact camera parameters in place of an explicit calibration, then a "
    "known-correspondence rigid alignment from the first camera's frame";

inline sim::RigConfig build_rig(const ExperimentConfig& c) {
  if (c.rig_path) return io::load_rig(*c.rig_path);
  if (c.experiment == "checkerboard") return sim::default_checkerboard_rig(c.camera_set, c.pixel_noise_std, c.seed, c.board);
  return sim::default_grid_rig(c.camera_set, c.pixel_noise_std, c.seed);
}

inline CorrespondenceSet simulate(const ExperimentConfig& c, const sim::RigConfig& rig) {
  try {
    return c.experiment == "checkerboard" ? sim::generate_checkerboard_dataset(rig, c.board)
                                          : sim::generate_grid_dataset(rig, c.grid);
  } catch (const InvalidArgument& e) {
    throw ConfigError(std::string("simulation: ") + e.what());
  } catch (const VisibilityError& e) {
    throw ConfigError(std::string("simulation: ") + e.what());
  }
}

/// Dataset from --data when given, otherwise simulated from the rig.
inline CorrespondenceSet obtain_dataset(const ExperimentConfig& c, const std::optional<sim::RigConfig>& rig) {
  if (c.data_path) return io::load_correspondence_csv(*c.data_path);
  return simulate(c, *rig);
}

inline std::string predictions_csv(const exp::MethodResult& r) {
  std::string out = "x,y,z,pred_x,pred_y,pred_z,std_x,std_y,std_z,combined_std\n";
  for (Eigen::Index i = 0; i < r.truth.rows(); ++i) {
    for (int k = 0; k < 3; ++k) out += io::format_double(r.truth(i, k)) + ",";
    for (int k = 0; k < 3; ++k) out += io::format_double(r.predictions(i, k)) + ",";
    if (r.stds) {
      for (int k = 0; k < 3; ++k) out += io::format_double((*r.stds)(i, k)) + ",";
      out += io::format_double((*r.combined_std)(i));
    } else {
      out += ",,,";
    }
    out += "\n";
  }
  return out;
}

inline json nullable(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

}  // namespace detail

// ---- commands ----

inline void cmd_simulate(const ExperimentConfig& c, const fs::path& out) {
  const sim::RigConfig rig = detail::build_rig(c);
  const CorrespondenceSet data = detail::simulate(c, rig);
  RunRecorder rec(out, "simulate", c);
  rec.write("dataset.csv", io::write_correspondence_csv(data));
  rec.write("rig.json", io::rig_to_json(rig).dump(2) + "\n");
  rec.seeds()["pixel_noise"] = rig.seed;
  rec.metrics() = {{"rows", data.size()}, {"cameras", data.camera_count()}, {"experiment", c.experiment}};
  rec.finish();
}

inline void cmd_train(const ExperimentConfig& c, const fs::path& out) {
  std::optional<sim::RigConfig> rig;
  if (!c.data_path || c.rig_path) rig = detail::build_rig(c);
  if (c.method == exp::Method::kTriangulation && !rig) throw ConfigError("triangulation needs --rig when --data is given");
  const CorrespondenceSet data = detail::obtain_dataset(c, rig);
  if (rig && rig->camera_count() != data.camera_count()) throw ConfigError("rig and dataset camera counts differ");

  const Split split = split_dataset(data, c.ratio, c.seed);
  const exp::MethodResult res = exp::run_method(c.method, rig ? &*rig : nullptr, data, split, c.settings, c.seed);

  RunRecorder rec(out, "train", c);
  json model;
  if (res.gp_model) {
    model = io::calibration_to_json(*res.gp_model);
  } else if (res.mlp_model) {
    model = io::mlp_to_json(*res.mlp_model);
  } else {
    model = {{"format", "icalib-triangulation"}, {"version", io::kModelFormatVersion}, {"rig", io::rig_to_json(*rig)}};
  }
  rec.write("model.json", model.dump(2) + "\n");
  rec.write("predictions.csv", detail::predictions_csv(res));

  const bool tri = c.method == exp::Method::kTriangulation;
  json metrics = {{"method", exp::to_string(c.method)},
                  {"ratio", c.ratio},
                  {"seed", c.seed},
                  {"n_train", tri ? 0 : split.train.size()},
                  {"n_test", res.truth.rows()},
                  {"rmse", res.rmse.rmse},
                  {"rmse_per_axis", {res.rmse.per_axis.x(), res.rmse.per_axis.y(), res.rmse.per_axis.z()}},
                  {"mean_combined_std", detail::nullable(res.mean_std)},
                  {"warnings", res.warnings}};
  if (c.method == exp::Method::kGp) {
    metrics["kernel"] = gp::to_string(c.settings.kernel);
    metrics["uncertainty"] = detail::kLatentNote;
    metrics["combined_std_rule"] = detail::kCombinedNote;
  }
  if (tri) {
    metrics["pre_alignment_rmse"] = res.pre_alignment_rmse;
    metrics["evaluated_on"] = "all points (no training involved)";
  }
  rec.write("metrics.json", metrics.dump(2) + "\n");
  rec.metrics() = metrics;
  rec.seeds() = {{"split", c.seed}, {"model", c.seed}, {"pixel_noise", rig ? json(rig->seed) : json(nullptr)}};
  if (c.method == exp::Method::kGp) {
    rec.note(detail::kLatentNote);
    rec.note(detail::kCombinedNote);
  }
  if (tri) rec.note(detail::kTriangulationNote);
  rec.finish();
}

inline void cmd_sweep(const ExperimentConfig& c, const fs::path& out) {
  std::optional<sim::RigConfig> rig;
  if (!c.data_path || c.rig_path) rig = detail::build_rig(c);
  const CorrespondenceSet data = detail::obtain_dataset(c, rig);
  exp::SweepConfig sc;
  sc.methods = c.sweep_methods;
  sc.ratios = c.sweep_ratios;
  sc.runs = c.runs;
  sc.seed = c.seed;
  sc.settings = c.settings;
  if (!rig && std::find(sc.methods.begin(), sc.methods.end(), exp::Method::kTriangulation) != sc.methods.end()) {
    throw ConfigError("triangulation needs --rig when --data is given");
  }
  const auto rows = exp::run_sweep(data, rig ? &*rig : nullptr, sc);

  std::string csv = "method,ratio,seed,rmse,mean_std,status\n";
  int failures = 0;
  for (const auto& r : rows) {
    std::string status = r.status;
    for (char& ch : status) {
      if (ch == ',' || ch == '\n') ch = ';';
    }
    failures += r.status != "ok";
    csv += std::string(exp::to_string(r.method)) + "," + io::format_double(r.ratio) + "," + std::to_string(r.seed) + "," +
           detail::num_or_empty(r.rmse) + "," + detail::num_or_empty(r.mean_std) + "," + status + "\n";
  }
  RunRecorder rec(out, "sweep", c);
  rec.write("sweep.csv", csv);
  json medians = json::object();
  for (auto m : sc.methods) {
    for (double ratio : sc.ratios) {
      std::vector<double> v;
      for (const auto& r : rows) {
        if (r.method == m && r.ratio == ratio && std::isfinite(r.rmse)) v.push_back(r.rmse);
      }
      if (!v.empty()) medians[exp::to_string(m)][io::format_double(ratio)] = exp::median(v);
    }
  }
  rec.metrics() = {{"rows", rows.size()}, {"failed_cells", failures}, {"median_rmse", medians}};
  rec.seeds() = {{"runs", "seed + run index for split and model"}, {"base", c.seed},
                 {"pixel_noise", rig ? json(rig->seed) : json(nullptr)}};
  rec.note(detail::kLatentNote);
  rec.note(detail::kCombinedNote);
  rec.note(detail::kTriangulationNote);
  rec.finish();
}

/// Returns false when any repeat stopped early on a numerical failure.
inline bool cmd_active_learn(const ExperimentConfig& c, const fs::path& out) {
  std::optional<sim::RigConfig> rig;
  if (!c.data_path) rig = detail::build_rig(c);
  const CorrespondenceSet data = detail::obtain_dataset(c, rig);
  al::AlConfig cfg = c.al;
  cfg.seed = c.seed;
  cfg.kernel = c.settings.kernel;
  cfg.fit = c.settings.fit;
  const auto traces = al::run_active_learning(data, cfg);

  RunRecorder rec(out, "active-learn", c);
  json summary = json::array();
  bool all_complete = true;
  for (const auto& t : traces) {
    std::string csv = "repeat,iteration,selected_index,acquisition_value,mean_pool_std,test_rmse\n";
    for (const auto& r : t.records) {
      csv += std::to_string(t.repeat) + "," + std::to_string(r.iteration) + "," + std::to_string(r.selected_index) + "," +
             io::format_double(r.acquisition_value) + "," + detail::num_or_empty(r.mean_pool_std) + "," +
             detail::num_or_empty(r.test_rmse) + "\n";
    }
    rec.write("al_trace_repeat" + std::to_string(t.repeat) + ".csv", csv);
    all_complete = all_complete && t.complete;
    summary.push_back({{"repeat", t.repeat},
                       {"seed", t.seed},
                       {"seed_indices", t.seed_indices},
                       {"iterations", t.records.size()},
                       {"initial_mean_pool_std", detail::nullable(t.initial_mean_pool_std)},
                       {"final_mean_pool_std", detail::nullable(t.final_mean_pool_std())},
                       {"initial_test_rmse", detail::nullable(t.initial_test_rmse)},
                       {"final_test_rmse", detail::nullable(t.records.empty() ? t.initial_test_rmse : t.records.back().test_rmse)},
                       {"complete", t.complete},
                       {"failure", t.failure}});
  }
  rec.write("al_summary.json", summary.dump(2) + "\n");
  rec.metrics() = {{"repeats", summary}};
  rec.seeds() = {{"repeats", "seed + repeat index for the seed subset and fits"}, {"base", c.seed},
                 {"pixel_noise", rig ? json(rig->seed) : json(nullptr)}};
  rec.note(detail::kLatentNote);
  rec.note(detail::kCombinedNote);
  rec.note("candidate pool is the stored set of non-seed dataset rows; the oracle reveals their world points");
  rec.finish();
  return all_complete;
}

inline void cmd_checkerboard_eval(const ExperimentConfig& c, const fs::path& out) {
  if (c.rig_path || c.data_path) {
    throw ConfigError("checkerboard-eval simulates the default bar for each camera set; --rig/--data are not used");
  }
  exp::CheckerboardConfig cfg = c.checkerboard;
  cfg.pixel_noise_std = c.pixel_noise_std;
  cfg.seed = c.seed;
  cfg.board = c.board;
  cfg.settings = c.settings;
  const auto runs = exp::run_checkerboard(cfg);
  const auto rows = exp::summarize(runs);

  RunRecorder rec(out, "checkerboard-eval", c);
  std::string csv = "scenario,method,rmse_mean,rmse_std,avg_std_mean,avg_std_std\n";
  json metrics = json::array();
  for (const auto& r : rows) {
    csv += r.scenario + "," + exp::to_string(r.method) + "," + io::format_double(r.rmse_mean) + "," +
           io::format_double(r.rmse_std) + "," + detail::num_or_empty(r.avg_std_mean) + "," +
           detail::num_or_empty(r.avg_std_std) + "\n";
    metrics.push_back({{"scenario", r.scenario},
                       {"method", exp::to_string(r.method)},
                       {"runs", r.runs},
                       {"rmse_mean", r.rmse_mean},
                       {"rmse_median", r.rmse_median},
                       {"avg_std_mean", detail::nullable(r.avg_std_mean)}});
  }
  rec.write("checkerboard_metrics.csv", csv);
  for (const auto& run : runs) {
    if (run.repeat != 0) continue;
    rec.write("predictions_" + exp::scenario_name(run.camera_set, run.boards) + "_" + exp::to_string(run.method) + ".csv",
              detail::predictions_csv(run.result));
  }
  rec.metrics() = {{"scenarios", metrics}};
  rec.seeds() = {{"repeats", "seed + repeat index for pixel noise and fits"}, {"base", c.seed}};
  rec.note(detail::kLatentNote);
  rec.note(detail::kCombinedNote);
  rec.note("each scenario is tested on every board position that is not in its training set");
  rec.finish();
}

// ---- entry point ----

/// Parses arguments, runs one subcommand and maps failures to exit codes:
/// 0 success, 1 config or input-data error, 2 numerical failure, 3 I/O error.
inline int run_cli(int argc, const char* const* argv, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
  CLI::App app{"Implicit multi-camera calibration with Gaussian processes"};
  app.require_subcommand(1);
  app.set_version_flag("--version", kVersion);

  std::string config_path, out_dir = "out", method, kernel, data_path, rig_path;
  std::optional<std::uint64_t> seed;
  std::optional<double> ratio;
  std::optional<int> runs;

  const std::vector<std::pair<std::string, std::string>> commands = {
      {"simulate", "Generate a correspondence dataset from the synthetic rig"},
      {"train", "Split, train one method, write model, predictions and metrics"},
      {"sweep", "Train/test ratio sweep over methods and seeds"},
      {"active-learn", "Uncertainty-sampling active learning"},
      {"checkerboard-eval", "Translated-checkerboard board-count study"}};
  for (const auto& [name, help] : commands) {
    CLI::App* sub = app.add_subcommand(name, help);
    sub->add_option("--config", config_path, "Experiment config JSON");
    sub->add_option("--out", out_dir, "Output directory")->capture_default_str();
    sub->add_option("--seed", seed, "Seed for every stochastic step");
    sub->add_option("--method", method, "gp | mlp | triangulation");
    sub->add_option("--kernel", kernel, "se | se-ard");
    sub->add_option("--ratio", ratio, "Train fraction for train");
    sub->add_option("--runs", runs, "Runs per sweep cell");
    sub->add_option("--data", data_path, "Correspondence CSV instead of simulating");
    sub->add_option("--rig", rig_path, "Rig JSON instead of the default bar");
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kOk : kConfigError;
  }

  try {
    for (const std::string* p : {&config_path, &data_path, &rig_path}) {
      if (!p->empty() && !fs::is_regular_file(*p)) throw ConfigError("referenced file does not exist: " + *p);
    }
    ExperimentConfig c;
    if (!config_path.empty()) c = config_from_json(io::parse_json(io::read_file(config_path), config_path));
    if (seed) c.seed = *seed;
    if (!method.empty()) c.method = exp::parse_method(method);
    if (!kernel.empty()) c.settings.kernel = exp::parse_kernel(kernel);
    if (ratio) c.ratio = *ratio;
    if (runs) c.runs = *runs;
    if (!data_path.empty()) c.data_path = data_path;
    if (!rig_path.empty()) c.rig_path = rig_path;
    for (const auto& p : {c.data_path, c.rig_path}) {
      if (p && !fs::is_regular_file(*p)) throw ConfigError("referenced file does not exist: " + *p);
    }
    if (!(c.ratio > 0.0 && c.ratio < 1.0)) throw ConfigError("--ratio must lie strictly between 0 and 1");
    if (c.runs < 1) throw ConfigError("--runs must be at least 1");

    const std::string cmd = app.get_subcommands().front()->get_name();
    if (cmd == "simulate") {
      cmd_simulate(c, out_dir);
    } else if (cmd == "train") {
      cmd_train(c, out_dir);
    } else if (cmd == "sweep") {
      cmd_sweep(c, out_dir);
    } else if (cmd == "active-learn") {
      if (!cmd_active_learn(c, out_dir)) {
        err << "error: at least one active-learning repeat stopped early; see al_summary.json\n";
        return kNumericalFailure;
      }
    } else {
      cmd_checkerboard_eval(c, out_dir);
    }
    out << cmd << ": wrote " << fs::path(out_dir) / "manifest.json" << "\n";
    return kOk;
  } catch (const IoError& e) {
    err << "error: " << e.what() << "\n";
    return kIoFailure;
  } catch (const NumericalError& e) {
    err << "error: numerical failure: " << e.what() << "\n";
    return kNumericalFailure;
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return kConfigError;
  } catch (const nlohmann::json::exception& e) {
    err << "error: config: " << e.what() << "\n";
    return kConfigError;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kNumericalFailure;
  }
}

}  // namespace icalib::cli
