// Acceptance checks. Prints one PASS/FAIL line per criterion and exits non-zero
// if any criterion fails. Optional arguments select criteria by number.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <iostream>
#include <numbers>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "icalib/active_learning.hpp"
#include "icalib/align.hpp"
#include "icalib/calibration.hpp"
#include "icalib/cli.hpp"
#include "icalib/experiments.hpp"
#include "icalib/gp.hpp"
#include "icalib/io.hpp"
#include "icalib/rig.hpp"
#include "oracles.hpp"

namespace {

using namespace icalib;
namespace fs = std::filesystem;

struct Outcome {
  bool pass = false;
  std::string detail;
};

struct Criterion {
  int id;
  std::string name;
  double limit_seconds;
  std::function<Outcome()> run;
};

// ---- pinned settings ----
constexpr double kPosteriorTol = 1e-10;
constexpr double kGradientRelTol = 1e-4;
constexpr double kInterpTol = 1e-6;
constexpr double kDistortionTol = 1e-9;
constexpr double kTriangulationTol = 1e-6;
constexpr double kKabschTol = 1e-9;
constexpr double kAlFinalFraction = 0.5;
constexpr double kAlSpread = 0.2;
constexpr double kPixelNoise = 0.3;
constexpr std::uint64_t kRigSeed = 0;
constexpr int kSeeds = 10;              // seeds 1..10 for grid cells
constexpr int kCheckerboardRepeats = 3;  // noise/fit seeds 0..2
constexpr int kCheckerboardRestarts = 2;

std::string fmt(double v, int prec = 4) {
  std::ostringstream s;
  s.precision(prec);
  s << v;
  return s.str();
}

CorrespondenceSet grid_data(sim::CameraSet set, double noise = kPixelNoise) {
  return sim::generate_grid_dataset(sim::default_grid_rig(set, noise, kRigSeed), {});
}

struct CellStats {
  std::vector<double> rmse, mean_std;
};

CellStats grid_cell(const CorrespondenceSet& data, exp::Method method, double ratio) {
  CellStats c;
  const exp::MethodSettings settings;
  for (int seed = 1; seed <= kSeeds; ++seed) {
    const Split split = split_dataset(data, ratio, static_cast<std::uint64_t>(seed));
    const auto r = method == exp::Method::kGp ? exp::run_gp(split.train, split.test, settings, static_cast<std::uint64_t>(seed))
                                              : exp::run_mlp(split.train, split.test, settings, static_cast<std::uint64_t>(seed));
    c.rmse.push_back(r.rmse.rmse);
    c.mean_std.push_back(r.mean_std);
  }
  return c;
}

// ---- 1 ----
Outcome gp_numerics() {
  using namespace icalib::gp;
  using icalib::testing::dense_posterior;
  using icalib::testing::random_matrix;
  std::mt19937_64 rng(2024);
  std::uniform_int_distribution<int> nd(1, 8), dd(1, 4);
  std::uniform_real_distribution<double> lsf(std::log(0.3), std::log(3.0)), lnoise(std::log(1e-2), std::log(0.5));
  auto draw_hyper = [&](Eigen::Index m) {
    Hyperparameters h;
    h.outputscale = std::exp(lsf(rng));
    h.lengthscales.resize(m);
    for (Eigen::Index j = 0; j < m; ++j) h.lengthscales(j) = std::exp(lsf(rng));
    h.noise_variance = std::exp(lnoise(rng));
    return h;
  };

  double worst_post = 0.0;
  for (int trial = 0; trial < 50; ++trial) {
    const int n = nd(rng), d = dd(rng);
    const Dataset data{random_matrix(rng, n, d, -50, 50), random_matrix(rng, n, 1, 100, 300).col(0)};
    const KernelSpec spec{trial % 3 == 0 ? KernelFamily::kSE : KernelFamily::kSEArd, d};
    const Hyperparameters h = draw_hyper(spec.lengthscale_count());
    const auto scaling = StandardizationParams::fit(data);
    const FittedGP m = FittedGP::build(data, spec, h, scaling);
    const Eigen::MatrixXd xs = scaling.inputs.apply(data.inputs);
    const Eigen::VectorXd ys = (data.targets.array() - scaling.target_mean) / scaling.target_scale;
    const Eigen::MatrixXd queries = random_matrix(rng, 4, d, -60, 60);
    const auto post = posterior_predict_batch(m, queries);
    for (Eigen::Index q = 0; q < queries.rows(); ++q) {
      const Eigen::VectorXd qs = scaling.inputs.apply_row(queries.row(q)).transpose();
      const auto ref = dense_posterior(h.outputscale, h.lengthscales, h.noise_variance, m.jitter_used(), xs, ys, qs);
      const double ts = scaling.target_scale;
      worst_post = std::max(worst_post, std::abs((post[static_cast<std::size_t>(q)].mean - scaling.target_mean) / ts - ref.mean));
      worst_post = std::max(worst_post, std::abs(post[static_cast<std::size_t>(q)].variance / (ts * ts) - std::max(0.0, ref.variance)));
    }
  }

  double worst_grad = 0.0;
  const double step = 1e-5;
  for (int draw = 0; draw < 20; ++draw) {
    const KernelSpec spec{draw % 4 == 0 ? KernelFamily::kSE : KernelFamily::kSEArd, 3};
    const Dataset data{random_matrix(rng, 8, 3), random_matrix(rng, 8, 1).col(0)};
    const Hyperparameters h = draw_hyper(spec.lengthscale_count());
    const Eigen::VectorXd g = mll_gradient(data, spec, h);
    const Eigen::VectorXd x0 = to_log_params(h);
    for (Eigen::Index k = 0; k < x0.size(); ++k) {
      Eigen::VectorXd xp = x0, xm = x0;
      xp(k) += step;
      xm(k) -= step;
      const double fd = (log_marginal_likelihood(data, spec, from_log_params(xp)) -
                         log_marginal_likelihood(data, spec, from_log_params(xm))) / (2.0 * step);
      worst_grad = std::max(worst_grad, std::abs(g(k) - fd) / std::max({std::abs(fd), std::abs(g(k)), 1e-3}));
    }
  }
  return {worst_post <= kPosteriorTol && worst_grad <= kGradientRelTol,
          "max posterior deviation " + fmt(worst_post) + " (tol 1e-10), max gradient relative error " + fmt(worst_grad) +
              " (tol 1e-4)"};
}

// ---- 2 ----
Outcome interpolation() {
  const CorrespondenceSet data = grid_data(sim::CameraSet::k2R, 0.0);
  const gp::FitConfig cfg;
  double worst_mean = 0.0, worst_var = 0.0, worst_alpha = 0.0;
  for (int k = 0; k < 3; ++k) {
    const gp::Dataset ds{data.observations, data.points.col(k)};
    const gp::FittedGP fitted = gp::fit(ds, {gp::KernelFamily::kSEArd, data.observations.cols()}, cfg);
    gp::Hyperparameters h = fitted.hyper();
    h.noise_variance = cfg.noise_floor;
    const gp::FittedGP m = gp::FittedGP::build(ds, fitted.kernel(), h, fitted.standardization());
    const double ts = m.standardization().target_scale;
    const auto post = gp::posterior_predict_batch(m, data.observations);
    for (std::size_t i = 0; i < post.size(); ++i) {
      worst_mean = std::max(worst_mean, std::abs(post[i].mean - ds.targets(static_cast<Eigen::Index>(i))) / ts);
      worst_var = std::max(worst_var, post[i].variance / (ts * ts));
    }
    worst_alpha = std::max(worst_alpha, m.alpha().cwiseAbs().maxCoeff());
  }
  return {worst_mean <= kInterpTol && worst_var <= kInterpTol,
          "175-point noiseless grid, noise 1e-8: max |mean - target| " + fmt(worst_mean) + ", max variance " +
              fmt(worst_var) + " (standardized, tol 1e-6); max |alpha| " + fmt(worst_alpha)};
}

// ---- 3 ----
Outcome gp_vs_mlp() {
  const auto data = grid_data(sim::CameraSet::k2R);
  bool pass = true;
  std::string detail;
  for (double ratio : {0.9, 0.5}) {
    const double gp_med = exp::median(grid_cell(data, exp::Method::kGp, ratio).rmse);
    const double nn_med = exp::median(grid_cell(data, exp::Method::kMlp, ratio).rmse);
    pass = pass && gp_med < nn_med;
    detail += "ratio " + fmt(ratio, 2) + ": gp " + fmt(gp_med) + " mm vs mlp " + fmt(nn_med) + " mm; ";
  }
  return {pass, detail};
}

// ---- 4 ----
Outcome more_data() {
  const auto data = grid_data(sim::CameraSet::k2R);
  std::vector<double> med;
  std::string detail = "median gp rmse";
  for (double ratio : {0.9, 0.5, 0.1}) {
    med.push_back(exp::median(grid_cell(data, exp::Method::kGp, ratio).rmse));
    detail += " " + fmt(ratio, 2) + ": " + fmt(med.back()) + " mm";
  }
  return {med[0] < med[1] && med[1] < med[2], detail};
}

// ---- 5 ----
Outcome more_cameras() {
  std::vector<double> med;
  std::string detail = "median mean combined_std at 0.9";
  for (auto set : {sim::CameraSet::k2R, sim::CameraSet::k2R2W, sim::CameraSet::k2R4W}) {
    med.push_back(exp::median(grid_cell(grid_data(set), exp::Method::kGp, 0.9).mean_std));
    detail += " " + std::string(sim::to_string(set)) + ": " + fmt(med.back()) + " mm";
  }
  return {med[0] > med[1] && med[1] > med[2], detail};
}

// ---- 6 ----
Outcome al_convergence() {
  al::AlConfig cfg;  // 5 repeats, 20% seed, 100 iterations
  const auto traces = al::run_active_learning(grid_data(sim::CameraSet::k2R), cfg);
  bool pass = traces.size() == 5;
  std::vector<double> finals;
  std::string detail;
  for (const auto& t : traces) {
    const double fin = t.final_mean_pool_std();
    finals.push_back(fin);
    pass = pass && t.complete && t.records.size() == 100 && fin < kAlFinalFraction * t.initial_mean_pool_std;
    detail += fmt(t.initial_mean_pool_std) + "->" + fmt(fin) + " ";
  }
  const double med = exp::median(finals);
  const double spread = (*std::max_element(finals.begin(), finals.end()) - *std::min_element(finals.begin(), finals.end())) / med;
  pass = pass && spread <= kAlSpread;
  return {pass, "mean pool std per repeat " + detail + "; final spread " + fmt(spread) + " of median (tol 0.2)"};
}

// ---- 7 ----
Outcome variance_collapse() {
  al::AlConfig cfg;
  cfg.repeats = 1;
  cfg.max_iterations = 20;
  cfg.freeze_hyperparameters = true;
  const auto trace = al::run_active_learning_repeat(grid_data(sim::CameraSet::k2R), cfg, 0);
  int collapsed = 0;
  double worst_ratio = 0.0;
  for (const auto& r : trace.records) {
    collapsed += r.post_acquisition_std < r.acquisition_value;
    worst_ratio = std::max(worst_ratio, r.post_acquisition_std / r.acquisition_value);
  }
  return {trace.complete && trace.records.size() == 20 && collapsed == 20,
          std::to_string(collapsed) + "/" + std::to_string(trace.records.size()) +
              " steps collapsed; worst after/before ratio " + fmt(worst_ratio)};
}

// ---- 8 ----
Outcome checkerboard_trend() {
  exp::CheckerboardConfig cfg;
  cfg.camera_sets = {sim::CameraSet::k2R, sim::CameraSet::k2R2W, sim::CameraSet::k2R4W};
  cfg.board_counts = {2, 3, 5, 9};
  cfg.methods = {exp::Method::kGp, exp::Method::kMlp};
  cfg.method_board_counts = {{exp::Method::kMlp, {9}}};
  cfg.repeats = kCheckerboardRepeats;
  cfg.pixel_noise_std = kPixelNoise;
  cfg.seed = 0;
  cfg.settings.fit.restarts = kCheckerboardRestarts;
  const auto summary = exp::summarize(exp::run_checkerboard(cfg));
  auto median_of = [&](const std::string& scenario, exp::Method m) {
    for (const auto& s : summary) {
      if (s.scenario == scenario && s.method == m) return s.rmse_median;
    }
    return std::numeric_limits<double>::quiet_NaN();
  };
  bool pass = true;
  std::string detail;
  for (auto set : cfg.camera_sets) {
    std::vector<double> med;
    detail += std::string(sim::to_string(set)) + " gp";
    for (int b : cfg.board_counts) {
      med.push_back(median_of(exp::scenario_name(set, b), exp::Method::kGp));
      detail += " " + fmt(med.back());
    }
    const double nn = median_of(exp::scenario_name(set, 9), exp::Method::kMlp);
    detail += " mlp9 " + fmt(nn) + "; ";
    for (std::size_t i = 1; i < med.size(); ++i) pass = pass && med[i] < med[i - 1];
    pass = pass && med.back() < nn;
  }
  return {pass, "median rmse mm over 2/3/5/9 boards: " + detail};
}

// ---- 9 ----
Outcome near_camera_uncertainty() {
  exp::CheckerboardConfig cfg;
  cfg.camera_sets = {sim::CameraSet::k2R, sim::CameraSet::k2R2W, sim::CameraSet::k2R4W};
  cfg.board_counts = {5};
  cfg.methods = {exp::Method::kGp};
  cfg.repeats = 1;
  cfg.pixel_noise_std = kPixelNoise;
  cfg.settings.fit.restarts = kCheckerboardRestarts;
  bool pass = true;
  std::string detail;
  for (const auto& run : exp::run_checkerboard(cfg)) {
    const auto& r = run.result;
    std::vector<Eigen::Index> order(static_cast<std::size_t>(r.truth.rows()));
    std::iota(order.begin(), order.end(), Eigen::Index{0});
    // Boards sit at increasing z in front of a bar at negative z.
    std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) { return r.truth(a, 2) < r.truth(b, 2); });
    const std::size_t third = order.size() / 3;
    double near = 0.0, far = 0.0;
    for (std::size_t i = 0; i < third; ++i) {
      near += (*r.combined_std)(order[i]);
      far += (*r.combined_std)(order[order.size() - 1 - i]);
    }
    near /= static_cast<double>(third);
    far /= static_cast<double>(third);
    pass = pass && near > far;
    detail += std::string(sim::to_string(run.camera_set)) + " near " + fmt(near) + " far " + fmt(far) + "; ";
  }
  return {pass, "mean combined_std mm, 5 boards: " + detail};
}

// ---- 10 ----
Outcome geometry() {
  std::mt19937_64 rng(10);
  std::uniform_real_distribution<double> u(-0.6, 0.6);
  double worst_dist = 0.0;
  const auto rig = sim::default_grid_rig(sim::CameraSet::k2R4W, 0.0, 0);
  std::vector<sim::Distortion> models;
  for (const auto& c : rig.cameras) models.push_back(c.distortion);
  models.push_back(sim::BrownConrady{-0.12, 0.05, 3e-4, -2e-4, 0.0});
  models.push_back(sim::Equidistant{0.08, -0.02, 0.004, -0.0005});
  for (const auto& m : models) {
    for (int i = 0; i < 1000; ++i) {
      const Eigen::Vector2d p(u(rng), u(rng));
      worst_dist = std::max(worst_dist, (sim::undistort(m, sim::distort(m, p)) - p).norm());
    }
  }

  double worst_tri = 0.0;
  for (auto set : {sim::CameraSet::k2R, sim::CameraSet::k2R2W, sim::CameraSet::k2R4W}) {
    const auto data = grid_data(set, 0.0);
    const auto r = sim::default_grid_rig(set, 0.0, 0);
    for (Eigen::Index i = 0; i < data.size(); ++i) {
      const WorldPoint est = sim::triangulate_baseline(r, data.observations.row(i).transpose());
      worst_tri = std::max(worst_tri, (est - data.points.row(i).transpose()).norm());
    }
  }

  Eigen::MatrixX3d src(40, 3);
  std::uniform_real_distribution<double> w(-100.0, 100.0);
  for (Eigen::Index i = 0; i < src.rows(); ++i) src.row(i) = Eigen::RowVector3d(w(rng), w(rng), w(rng));
  const RigidTransform truth{Eigen::AngleAxisd(std::numbers::pi / 6.0, Eigen::Vector3d::UnitZ()).toRotationMatrix(),
                             {10.0, 20.0, 30.0}};
  const RigidTransform est = kabsch_align(src, truth.apply(src));
  const double kabsch_err = std::max((est.rotation - truth.rotation).cwiseAbs().maxCoeff(),
                                     (est.translation - truth.translation).cwiseAbs().maxCoeff());

  int monotone = 0;
  std::normal_distribution<double> jitter(0.0, 0.5);
  for (int c = 0; c < 10; ++c) {
    Eigen::MatrixX3d cloud(150, 3);
    for (Eigen::Index i = 0; i < cloud.rows(); ++i) cloud.row(i) = Eigen::RowVector3d(w(rng), w(rng), w(rng));
    const Eigen::Vector3d axis = Eigen::Vector3d(w(rng), w(rng), w(rng)).normalized();
    const RigidTransform motion{Eigen::AngleAxisd(0.02 * (c + 1), axis).toRotationMatrix(),
                                Eigen::Vector3d(w(rng), w(rng), w(rng)) * 0.05};
    Eigen::MatrixX3d moved = motion.apply(cloud);
    for (Eigen::Index i = 0; i < moved.size(); ++i) moved(i) += jitter(rng);
    const auto rep = icp_align(moved, cloud);
    bool ok = rep.post_rmse <= rep.pre_rmse + 1e-12;
    double prev = rep.pre_rmse;
    for (double h : rep.rmse_history) {
      ok = ok && h <= prev + 1e-12;
      prev = h;
    }
    monotone += ok;
  }
  return {worst_dist <= kDistortionTol && worst_tri <= kTriangulationTol && kabsch_err <= kKabschTol && monotone == 10,
          "distortion " + fmt(worst_dist) + " (tol 1e-9), triangulation " + fmt(worst_tri) + " mm (tol 1e-6), kabsch " +
              fmt(kabsch_err) + " (tol 1e-9), icp monotone " + std::to_string(monotone) + "/10"};
}

// ---- 11 ----
int cli(const std::vector<std::string>& args) {
  std::vector<const char*> argv{"icalib"};
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  return cli::run_cli(static_cast<int>(argv.size()), argv.data(), out, err);
}

Outcome determinism() {
  const fs::path root = fs::temp_directory_path() / "icalib_acceptance_determinism";
  fs::remove_all(root);
  int codes = 0;
  for (const char* run : {"a", "b"}) {
    codes += cli({"simulate", "--seed", "7", "--out", (root / run / "sim").string()});
    codes += cli({"train", "--seed", "7", "--out", (root / run / "train").string()});
  }
  int compared = 0, identical = 0;
  for (const char* sub : {"sim", "train"}) {
    for (const auto& entry : fs::directory_iterator(root / "a" / sub)) {
      const std::string name = entry.path().filename().string();
      if (name == "manifest.json") continue;
      ++compared;
      const fs::path other = root / "b" / sub / name;
      identical += fs::exists(other) && io::read_file(entry.path()) == io::read_file(other);
    }
  }
  fs::remove_all(root);
  return {codes == 0 && compared == 5 && identical == compared,
          std::to_string(identical) + "/" + std::to_string(compared) + " data files byte-identical, exit codes sum " +
              std::to_string(codes)};
}

}  // namespace

int main(int argc, char** argv) {
  const std::vector<Criterion> criteria = {
      {1, "GP numerical correctness", 10, gp_numerics},
      {2, "interpolation at the noise floor", 5, interpolation},
      {3, "GP beats MLP on the grid", 600, gp_vs_mlp},
      {4, "more training data lowers GP RMSE", 600, more_data},
      {5, "more cameras lower uncertainty", 900, more_cameras},
      {6, "active learning converges", 1200, al_convergence},
      {7, "variance collapse at acquired point", 120, variance_collapse},
      {8, "checkerboard board-count trend", 900, checkerboard_trend},
      {9, "near-camera uncertainty", 300, near_camera_uncertainty},
      {10, "geometry round trips", 60, geometry},
      {11, "CLI determinism", 60, determinism},
  };
  std::set<int> selected;
  for (int i = 1; i < argc; ++i) selected.insert(std::atoi(argv[i]));

  int failures = 0;
  for (const auto& c : criteria) {
    if (!selected.empty() && !selected.count(c.id)) continue;
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    const bool in_time = secs < c.limit_seconds;
    const bool pass = o.pass && in_time;
    failures += !pass;
    std::cout << "criterion " << c.id << " " << (pass ? "PASS" : "FAIL") << " | " << c.name << " | " << fmt(secs, 3)
              << " s (limit " << c.limit_seconds << " s" << (in_time ? "" : ", EXCEEDED") << ") | " << o.detail
              << std::endl;
  }
  std::cout << (failures == 0 ? "all selected criteria passed" : std::to_string(failures) + " criteria failed") << std::endl;
  return failures == 0 ? 0 : 1;
}
