#pragma once

// Exact Gaussian-process regression with squared-exponential kernels.
//
// Inputs and targets are standardized before training, so the prior mean is
// the constant 0 in standardized space (the training-target mean in original
// units). Hyperparameters always live in standardized units.

#include <Eigen/Cholesky>
#include <Eigen/Dense>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numbers>
#include <optional>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "icalib/bfgs.hpp"
#include "icalib/error.hpp"
#include "icalib/standardize.hpp"

namespace icalib::gp {

enum class KernelFamily { kSE, kSEArd };

inline const char* to_string(KernelFamily f) { return f == KernelFamily::kSE ? "se" : "se-ard"; }

struct KernelSpec {
  KernelFamily family = KernelFamily::kSEArd;
  Eigen::Index input_dim = 0;

  Eigen::Index lengthscale_count() const { return family == KernelFamily::kSE ? 1 : input_dim; }
};

struct Hyperparameters {
  double outputscale = 1.0;       // sigma_f^2
  Eigen::VectorXd lengthscales;   // one entry for SE, input_dim entries for SE-ARD
  double noise_variance = 0.0;    // sigma_eps^2

  /// Per-dimension lengthscale, regardless of kernel family.
  double lengthscale(const KernelSpec& spec, Eigen::Index dim) const {
    return spec.family == KernelFamily::kSE ? lengthscales(0) : lengthscales(dim);
  }
};

inline void validate(const KernelSpec& spec, const Hyperparameters& hyper) {
  if (spec.input_dim < 1) throw InvalidArgument("kernel input dimension must be positive");
  if (hyper.lengthscales.size() != spec.lengthscale_count()) {
    throw InvalidArgument("expected " + std::to_string(spec.lengthscale_count()) + " lengthscale(s), got " +
                          std::to_string(hyper.lengthscales.size()));
  }
  if (!(hyper.outputscale > 0.0) || !std::isfinite(hyper.outputscale)) {
    throw InvalidArgument("outputscale must be positive and finite");
  }
  if (!(hyper.lengthscales.array() > 0.0).all() || !hyper.lengthscales.allFinite()) {
    throw InvalidArgument("lengthscales must be positive and finite");
  }
  if (!(hyper.noise_variance >= 0.0) || !std::isfinite(hyper.noise_variance)) {
    throw InvalidArgument("noise variance must be non-negative and finite");
  }
}

struct Dataset {
  Eigen::MatrixXd inputs;   // n x d
  Eigen::VectorXd targets;  // n

  Eigen::Index size() const { return inputs.rows(); }
  Eigen::Index dim() const { return inputs.cols(); }

  void validate() const {
    if (inputs.rows() < 1 || inputs.cols() < 1) throw InvalidArgument("dataset is empty");
    if (targets.size() != inputs.rows()) throw InvalidArgument("inputs and targets differ in length");
    if (!inputs.allFinite() || !targets.allFinite()) throw InvalidArgument("dataset contains non-finite entries");
  }
};

struct StandardizationParams {
  ColumnScaling inputs;
  double target_mean = 0.0;
  double target_scale = 1.0;

  static StandardizationParams fit(const Dataset& data) {
    StandardizationParams s;
    s.inputs = ColumnScaling::fit(data.inputs);
    const double n = static_cast<double>(data.size());
    s.target_mean = data.targets.mean();
    const double sd = std::sqrt((data.targets.array() - s.target_mean).square().sum() / n);
    s.target_scale = sd > 1e-12 * std::max(1.0, std::abs(s.target_mean)) ? sd : 1.0;
    return s;
  }

  static StandardizationParams identity(Eigen::Index dim) {
    return {ColumnScaling::identity(dim), 0.0, 1.0};
  }

  Dataset apply(const Dataset& raw) const {
    return {inputs.apply(raw.inputs), ((raw.targets.array() - target_mean) / target_scale).matrix()};
  }
};

struct Posterior {
  double mean = 0.0;
  double variance = 0.0;  // latent-function variance, excludes observation noise

  double std() const { return std::sqrt(variance); }
};

namespace detail {

inline void check_dim(const KernelSpec& spec, Eigen::Index cols, const char* what) {
  if (cols != spec.input_dim) {
    throw InvalidArgument(std::string(what) + " has dimension " + std::to_string(cols) + ", kernel expects " +
                          std::to_string(spec.input_dim));
  }
}

inline Eigen::VectorXd inverse_lengthscales(const KernelSpec& spec, const Hyperparameters& hyper) {
  Eigen::VectorXd inv(spec.input_dim);
  for (Eigen::Index j = 0; j < spec.input_dim; ++j) inv(j) = 1.0 / hyper.lengthscale(spec, j);
  return inv;
}

}  // namespace detail

/// k(a, b) = sf2 * exp(-0.5 * sum_j ((a_j - b_j) / l_j)^2).
template <typename DerivedA, typename DerivedB>
double kernel_eval(const KernelSpec& spec, const Hyperparameters& hyper, const Eigen::MatrixBase<DerivedA>& a,
                   const Eigen::MatrixBase<DerivedB>& b) {
  validate(spec, hyper);
  detail::check_dim(spec, a.size(), "first argument");
  detail::check_dim(spec, b.size(), "second argument");
  double r2 = 0.0;
  for (Eigen::Index j = 0; j < spec.input_dim; ++j) {
    const double diff = (a(j) - b(j)) / hyper.lengthscale(spec, j);
    r2 += diff * diff;
  }
  return hyper.outputscale * std::exp(-0.5 * r2);
}

/// Cross-covariance matrix between the rows of `a` and the rows of `b`.
inline Eigen::MatrixXd gram_matrix(const KernelSpec& spec, const Hyperparameters& hyper, const Eigen::MatrixXd& a,
                                   const Eigen::MatrixXd& b) {
  validate(spec, hyper);
  detail::check_dim(spec, a.cols(), "first matrix");
  detail::check_dim(spec, b.cols(), "second matrix");
  const Eigen::VectorXd inv_l = detail::inverse_lengthscales(spec, hyper);
  // Scale to unit lengthscales once; column-major rows are contiguous per point after transposing.
  const Eigen::MatrixXd as = (a * inv_l.asDiagonal()).transpose();
  const Eigen::MatrixXd bs = (b * inv_l.asDiagonal()).transpose();
  Eigen::MatrixXd k(a.rows(), b.rows());
  for (Eigen::Index j = 0; j < bs.cols(); ++j) {
    for (Eigen::Index i = 0; i < as.cols(); ++i) {
      k(i, j) = hyper.outputscale * std::exp(-0.5 * (as.col(i) - bs.col(j)).squaredNorm());
    }
  }
  return k;
}

/// Symmetric gram matrix of `a` with itself; exactly symmetric with sf2 on the diagonal.
inline Eigen::MatrixXd gram_matrix(const KernelSpec& spec, const Hyperparameters& hyper, const Eigen::MatrixXd& a) {
  validate(spec, hyper);
  detail::check_dim(spec, a.cols(), "input matrix");
  const Eigen::VectorXd inv_l = detail::inverse_lengthscales(spec, hyper);
  const Eigen::MatrixXd as = (a * inv_l.asDiagonal()).transpose();
  const Eigen::Index n = a.rows();
  Eigen::MatrixXd k(n, n);
  for (Eigen::Index j = 0; j < n; ++j) {
    k(j, j) = hyper.outputscale;
    for (Eigen::Index i = j + 1; i < n; ++i) {
      const double v = hyper.outputscale * std::exp(-0.5 * (as.col(i) - as.col(j)).squaredNorm());
      k(i, j) = v;
      k(j, i) = v;
    }
  }
  return k;
}

/// Cholesky factor of K + noise*I + jitter*I together with the solve against y.
struct Factorization {
  Eigen::MatrixXd chol;  // lower triangular
  Eigen::VectorXd alpha;
  double jitter = 0.0;

  double log_det() const { return 2.0 * chol.diagonal().array().log().sum(); }
};

/// Jitter starts at 1e-8 * mean(diag K) and grows tenfold up to 1e-4 * sf2.
inline Factorization factorize(const Eigen::MatrixXd& kernel_gram, double noise_variance, double outputscale,
                               const Eigen::VectorXd& targets) {
  const Eigen::Index n = kernel_gram.rows();
  const double max_jitter = 1e-4 * outputscale * (1.0 + 1e-12);
  double jitter = 1e-8 * kernel_gram.diagonal().mean();
  Eigen::MatrixXd a = kernel_gram;
  for (; jitter <= max_jitter; jitter *= 10.0) {
    a.diagonal() = kernel_gram.diagonal().array() + noise_variance + jitter;
    Eigen::LLT<Eigen::MatrixXd> llt(a);
    if (llt.info() != Eigen::Success) continue;
    Factorization f;
    f.chol = llt.matrixL();
    if (!(f.chol.diagonal().array() > 0.0).all() || !f.chol.allFinite()) continue;
    f.alpha = llt.solve(targets);
    if (!f.alpha.allFinite()) continue;
    f.jitter = jitter;
    return f;
  }
  throw IllConditioned("Cholesky factorization of the " + std::to_string(n) + "x" + std::to_string(n) +
                       " kernel matrix failed even with jitter " + std::to_string(max_jitter));
}

inline double log_likelihood_from(const Factorization& f, const Eigen::VectorXd& targets) {
  const double n = static_cast<double>(targets.size());
  return -0.5 * targets.dot(f.alpha) - 0.5 * f.log_det() - 0.5 * n * std::log(2.0 * std::numbers::pi);
}

struct LikelihoodEvaluation {
  double value = 0.0;
  /// d value / d log(theta), ordered [outputscale, lengthscales..., noise].
  Eigen::VectorXd gradient;
  double jitter = 0.0;
};

inline LikelihoodEvaluation evaluate_likelihood(const Dataset& data, const KernelSpec& spec, const Hyperparameters& hyper,
                                                bool with_gradient) {
  data.validate();
  validate(spec, hyper);
  detail::check_dim(spec, data.dim(), "dataset");
  const Eigen::MatrixXd kf = gram_matrix(spec, hyper, data.inputs);
  const Factorization f = factorize(kf, hyper.noise_variance, hyper.outputscale, data.targets);

  LikelihoodEvaluation out;
  out.value = log_likelihood_from(f, data.targets);
  out.jitter = f.jitter;
  if (!with_gradient) return out;

  const Eigen::Index n = data.size();
  const Eigen::Index m = spec.lengthscale_count();
  // W = alpha alpha^T - K^{-1}; only the lower triangle is read below.
  Eigen::MatrixXd l_inv = Eigen::MatrixXd::Identity(n, n);
  f.chol.triangularView<Eigen::Lower>().solveInPlace(l_inv);
  Eigen::MatrixXd w = Eigen::MatrixXd::Zero(n, n);
  w.selfadjointView<Eigen::Lower>().rankUpdate(l_inv.transpose(), -1.0);
  w.selfadjointView<Eigen::Lower>().rankUpdate(f.alpha, 1.0);

  const Eigen::VectorXd inv_l = detail::inverse_lengthscales(spec, hyper);
  const Eigen::MatrixXd xs = (data.inputs * inv_l.asDiagonal()).transpose();  // d x n
  const Eigen::Index d = spec.input_dim;

  double g_outputscale = 0.0;
  double trace_w = 0.0;
  Eigen::VectorXd g_dims = Eigen::VectorXd::Zero(d);
  for (Eigen::Index k = 0; k < n; ++k) {
    trace_w += w(k, k);
    g_outputscale += w(k, k) * kf(k, k);
    for (Eigen::Index i = k + 1; i < n; ++i) {
      const double wk = 2.0 * w(i, k) * kf(i, k);
      g_outputscale += wk;
      for (Eigen::Index j = 0; j < d; ++j) {
        const double diff = xs(j, i) - xs(j, k);
        g_dims(j) += wk * diff * diff;
      }
    }
  }

  out.gradient.resize(m + 2);
  // Jitter is proportional to mean(diag K) = sf2, so it moves with log sf2 too.
  out.gradient(0) = 0.5 * (g_outputscale + f.jitter * trace_w);
  if (spec.family == KernelFamily::kSE) {
    out.gradient(1) = 0.5 * g_dims.sum();
  } else {
    out.gradient.segment(1, m) = 0.5 * g_dims;
  }
  out.gradient(m + 1) = 0.5 * hyper.noise_variance * trace_w;
  return out;
}

/// Full Gaussian log-density log N(y | 0, K + noise*I), including the -(n/2) log(2 pi) term.
inline double log_marginal_likelihood(const Dataset& data, const KernelSpec& spec, const Hyperparameters& hyper) {
  return evaluate_likelihood(data, spec, hyper, false).value;
}

/// Gradient of log_marginal_likelihood with respect to the log-hyperparameters,
/// ordered [outputscale, lengthscales..., noise].
inline Eigen::VectorXd mll_gradient(const Dataset& data, const KernelSpec& spec, const Hyperparameters& hyper) {
  return evaluate_likelihood(data, spec, hyper, true).gradient;
}

inline Eigen::VectorXd to_log_params(const Hyperparameters& h) {
  const Eigen::Index m = h.lengthscales.size();
  Eigen::VectorXd x(m + 2);
  x(0) = std::log(h.outputscale);
  x.segment(1, m) = h.lengthscales.array().log().matrix();
  x(m + 1) = std::log(h.noise_variance);
  return x;
}

inline Hyperparameters from_log_params(const Eigen::VectorXd& x) {
  const Eigen::Index m = x.size() - 2;
  Hyperparameters h;
  h.outputscale = std::exp(x(0));
  h.lengthscales = x.segment(1, m).array().exp().matrix();
  h.noise_variance = std::exp(x(m + 1));
  return h;
}

struct FitConfig {
  int restarts = 5;
  int max_iterations = 200;
  double tolerance = 1e-6;
  double noise_floor = 1e-8;
  double initial_outputscale = 1.0;
  double initial_noise = 0.01;
  double init_lengthscale_low = 0.1;
  double init_lengthscale_high = 10.0;
  // Search box, standardized units.
  double min_lengthscale = 1e-3;
  double max_lengthscale = 1e4;
  double min_outputscale = 1e-4;
  double max_outputscale = 1e4;
  double max_noise = 10.0;
  std::uint64_t seed = 0;
  /// Extra restart started from these values (e.g. a previous optimum).
  std::optional<Hyperparameters> warm_start;
};

struct FitSummary {
  double log_marginal_likelihood = 0.0;
  /// Log marginal likelihood at the starting point of the winning restart.
  double initial_log_marginal_likelihood = 0.0;
  int best_restart = -1;
  int iterations = 0;
  int failed_restarts = 0;
};

class FittedGP;
inline FittedGP fit(const Dataset& raw, const KernelSpec& spec, const FitConfig& config = {});

/// A trained (or conditioned) GP. Immutable; safe for concurrent prediction.
class FittedGP {
 public:
  /// Factorizes the kernel matrix of `raw` under the given hyperparameters and scaling.
  static FittedGP build(Dataset raw, const KernelSpec& spec, const Hyperparameters& hyper,
                        const StandardizationParams& scaling) {
    raw.validate();
    validate(spec, hyper);
    detail::check_dim(spec, raw.dim(), "dataset");
    if (scaling.inputs.dim() != raw.dim()) throw InvalidArgument("standardization dimension mismatch");
    FittedGP m;
    m.standardized_ = scaling.apply(raw);
    m.raw_ = std::move(raw);
    m.spec_ = spec;
    m.hyper_ = hyper;
    m.scaling_ = scaling;
    Factorization f = factorize(gram_matrix(spec, hyper, m.standardized_.inputs), hyper.noise_variance,
                                hyper.outputscale, m.standardized_.targets);
    m.lml_ = log_likelihood_from(f, m.standardized_.targets);
    m.chol_ = std::move(f.chol);
    m.alpha_ = std::move(f.alpha);
    m.jitter_ = f.jitter;
    return m;
  }

  const Dataset& raw_data() const { return raw_; }
  const Dataset& data() const { return standardized_; }
  const KernelSpec& kernel() const { return spec_; }
  const Hyperparameters& hyper() const { return hyper_; }
  const StandardizationParams& standardization() const { return scaling_; }
  const Eigen::MatrixXd& chol() const { return chol_; }
  const Eigen::VectorXd& alpha() const { return alpha_; }
  double jitter_used() const { return jitter_; }
  double log_marginal_likelihood() const { return lml_; }
  const FitSummary& summary() const { return summary_; }
  Eigen::Index input_dim() const { return spec_.input_dim; }

  /// Prior standard deviation in original target units.
  double prior_std() const { return std::sqrt(hyper_.outputscale) * scaling_.target_scale; }

 private:
  friend FittedGP fit(const Dataset&, const KernelSpec&, const FitConfig&);

  Dataset raw_;
  Dataset standardized_;
  KernelSpec spec_;
  Hyperparameters hyper_;
  StandardizationParams scaling_;
  Eigen::MatrixXd chol_;
  Eigen::VectorXd alpha_;
  double jitter_ = 0.0;
  double lml_ = 0.0;
  FitSummary summary_;
};

/// Same hyperparameters and scaling, new training data (no re-optimization).
inline FittedGP condition_on(const FittedGP& model, Dataset raw) {
  return FittedGP::build(std::move(raw), model.kernel(), model.hyper(), model.standardization());
}

/// Multi-start BFGS ascent of the log marginal likelihood in log-hyperparameter space.
inline FittedGP fit(const Dataset& raw, const KernelSpec& spec, const FitConfig& config) {
  raw.validate();
  detail::check_dim(spec, raw.dim(), "dataset");
  if (raw.size() < 2) throw InsufficientData("GP fit needs at least 2 points, got " + std::to_string(raw.size()));
  if (config.restarts < 0 || (config.restarts == 0 && !config.warm_start)) {
    throw InvalidArgument("fit needs at least one restart");
  }

  const StandardizationParams scaling = StandardizationParams::fit(raw);
  const Dataset data = scaling.apply(raw);
  const Eigen::Index m = spec.lengthscale_count();
  const double noise_floor = std::max(config.noise_floor, 1e-300);

  Eigen::VectorXd lower(m + 2), upper(m + 2);
  lower(0) = std::log(config.min_outputscale);
  upper(0) = std::log(config.max_outputscale);
  lower.segment(1, m).setConstant(std::log(config.min_lengthscale));
  upper.segment(1, m).setConstant(std::log(config.max_lengthscale));
  lower(m + 1) = std::log(noise_floor);
  upper(m + 1) = std::log(std::max(config.max_noise, noise_floor));

  // All starting points are drawn before any optimization so the result only depends on the seed.
  std::vector<Eigen::VectorXd> starts;
  if (config.warm_start) {
    Hyperparameters w = *config.warm_start;
    validate(spec, Hyperparameters{w.outputscale, w.lengthscales, std::max(w.noise_variance, noise_floor)});
    w.noise_variance = std::max(w.noise_variance, noise_floor);
    starts.push_back(to_log_params(w));
  }
  std::mt19937_64 rng(config.seed);
  std::uniform_real_distribution<double> log_l(std::log(config.init_lengthscale_low),
                                               std::log(config.init_lengthscale_high));
  for (int r = 0; r < config.restarts; ++r) {
    Hyperparameters h;
    h.outputscale = config.initial_outputscale;
    h.noise_variance = std::max(config.initial_noise, noise_floor);
    h.lengthscales.resize(m);
    for (Eigen::Index j = 0; j < m; ++j) h.lengthscales(j) = std::exp(log_l(rng));
    starts.push_back(to_log_params(h));
  }

  auto objective = [&](const Eigen::VectorXd& x, Eigen::VectorXd* grad) {
    const LikelihoodEvaluation e = evaluate_likelihood(data, spec, from_log_params(x), grad != nullptr);
    if (grad) *grad = -e.gradient;
    return -e.value;
  };

  optim::BfgsOptions opts;
  opts.max_iterations = config.max_iterations;
  opts.f_tolerance = config.tolerance;

  FitSummary summary;
  std::optional<optim::BfgsResult> best;
  for (std::size_t r = 0; r < starts.size(); ++r) {
    try {
      optim::BfgsResult res = optim::minimize_bfgs(objective, starts[r], lower, upper, opts);
      if (!best || res.f < best->f) {
        best = std::move(res);
        summary.best_restart = static_cast<int>(r);
      }
    } catch (const NumericalError&) {
      ++summary.failed_restarts;
    }
  }
  if (!best) {
    throw IllConditioned("all " + std::to_string(starts.size()) + " restarts failed to factorize the kernel matrix");
  }

  FittedGP model = FittedGP::build(raw, spec, from_log_params(best->x), scaling);
  summary.log_marginal_likelihood = model.log_marginal_likelihood();
  summary.initial_log_marginal_likelihood = -best->f_initial;
  summary.iterations = best->iterations;
  model.summary_ = summary;
  return model;
}

namespace detail {

inline void check_query(const FittedGP& model, Eigen::Index cols, bool finite) {
  check_dim(model.kernel(), cols, "query");
  if (!finite) throw InvalidArgument("query contains non-finite entries");
}

}  // namespace detail

/// Posterior mean and latent variance for each row of `queries`, in original units.
inline std::vector<Posterior> posterior_predict_batch(const FittedGP& model, const Eigen::MatrixXd& queries) {
  detail::check_query(model, queries.cols(), queries.allFinite());
  const Eigen::MatrixXd qs = model.standardization().inputs.apply(queries);
  const Eigen::MatrixXd k_star = gram_matrix(model.kernel(), model.hyper(), model.data().inputs, qs);  // n x m
  const Eigen::VectorXd mean = k_star.transpose() * model.alpha();
  const Eigen::MatrixXd v = model.chol().triangularView<Eigen::Lower>().solve(k_star);
  const Eigen::VectorXd reduction = v.colwise().squaredNorm().transpose();

  const auto& s = model.standardization();
  const double scale2 = s.target_scale * s.target_scale;
  std::vector<Posterior> out(static_cast<std::size_t>(queries.rows()));
  for (Eigen::Index i = 0; i < queries.rows(); ++i) {
    const double var = std::max(0.0, model.hyper().outputscale - reduction(i));
    out[static_cast<std::size_t>(i)] = {mean(i) * s.target_scale + s.target_mean, var * scale2};
  }
  return out;
}

template <typename Derived>
Posterior posterior_predict(const FittedGP& model, const Eigen::MatrixBase<Derived>& query) {
  Eigen::MatrixXd q(1, query.size());
  for (Eigen::Index j = 0; j < query.size(); ++j) q(0, j) = query(j);
  return posterior_predict_batch(model, q).front();
}

}  // namespace icalib::gp
