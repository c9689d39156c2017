#pragma once

// Fully connected regression network used as the learned baseline:
// leaky-ReLU hidden layers with dropout, linear output, Adam on MSE.

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <random>
#include <string>
#include <vector>

#include "icalib/correspondence.hpp"
#include "icalib/error.hpp"
#include "icalib/standardize.hpp"

namespace icalib::mlp {

struct MlpSpec {
  int input_dim = 4;
  std::vector<int> hidden{128, 128, 64};
  int output_dim = 3;
  double negative_slope = 0.01;
  double dropout = 0.2;

  void validate() const {
    if (input_dim <= 0 || output_dim <= 0) throw InvalidArgument("network dimensions must be positive");
    for (int h : hidden) {
      if (h <= 0) throw InvalidArgument("hidden widths must be positive");
    }
    if (!(dropout >= 0.0 && dropout < 1.0)) throw InvalidArgument("dropout must lie in [0, 1)");
    if (!(negative_slope >= 0.0)) throw InvalidArgument("negative slope must be non-negative");
  }

  /// Layer widths from input to output.
  std::vector<int> widths() const {
    std::vector<int> w{input_dim};
    w.insert(w.end(), hidden.begin(), hidden.end());
    w.push_back(output_dim);
    return w;
  }
};

struct MlpTrainConfig {
  double learning_rate = 1e-3;
  int epochs = 2000;
  int batch_size = 256;  // datasets smaller than this train full-batch
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  std::uint64_t seed = 0;
};

struct Layer {
  Eigen::MatrixXd weight;  // out x in
  Eigen::VectorXd bias;
};

struct MlpModel {
  MlpSpec spec;
  MlpTrainConfig config;
  std::vector<Layer> layers;
  ColumnScaling input_scaling;
  ColumnScaling target_scaling;
  std::vector<double> loss_history;  // mean training loss per epoch, standardized units

  std::size_t parameter_count() const {
    std::size_t n = 0;
    for (const auto& l : layers) n += static_cast<std::size_t>(l.weight.size() + l.bias.size());
    return n;
  }
};

/// Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) for weights and biases.
inline std::vector<Layer> init_layers(const MlpSpec& spec, std::mt19937_64& rng) {
  const auto w = spec.widths();
  std::vector<Layer> layers;
  for (std::size_t k = 0; k + 1 < w.size(); ++k) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(w[k]));
    std::uniform_real_distribution<double> u(-bound, bound);
    Layer l;
    l.weight.resize(w[k + 1], w[k]);
    l.bias.resize(w[k + 1]);
    for (Eigen::Index c = 0; c < l.weight.cols(); ++c)
      for (Eigen::Index r = 0; r < l.weight.rows(); ++r) l.weight(r, c) = u(rng);
    for (Eigen::Index r = 0; r < l.bias.size(); ++r) l.bias(r) = u(rng);
    layers.push_back(std::move(l));
  }
  return layers;
}

/// Network with every weight and bias zero (outputs the target mean).
inline MlpModel zero_model(const MlpSpec& spec) {
  spec.validate();
  MlpModel m;
  m.spec = spec;
  const auto w = spec.widths();
  for (std::size_t k = 0; k + 1 < w.size(); ++k) {
    m.layers.push_back({Eigen::MatrixXd::Zero(w[k + 1], w[k]), Eigen::VectorXd::Zero(w[k + 1])});
  }
  m.input_scaling = ColumnScaling::identity(spec.input_dim);
  m.target_scaling = ColumnScaling::identity(spec.output_dim);
  return m;
}

namespace detail {

inline Eigen::MatrixXd leaky(const Eigen::MatrixXd& z, double slope) {
  return z.unaryExpr([slope](double v) { return v > 0.0 ? v : slope * v; });
}

}  // namespace detail

/// Forward pass on standardized inputs (one sample per column). No dropout.
inline Eigen::MatrixXd forward(const MlpModel& model, const Eigen::MatrixXd& x) {
  Eigen::MatrixXd a = x;
  for (std::size_t k = 0; k < model.layers.size(); ++k) {
    Eigen::MatrixXd z = (model.layers[k].weight * a).colwise() + model.layers[k].bias;
    a = k + 1 < model.layers.size() ? detail::leaky(z, model.spec.negative_slope) : std::move(z);
  }
  return a;
}

struct LossGradient {
  double loss = 0.0;
  std::vector<Layer> gradient;  // same shapes as the model layers
};

/// Mean squared error over all outputs of a batch and its gradient by backpropagation.
/// Inputs and targets are standardized, one sample per column. Dropout masks are drawn
/// from `dropout_rng` when it is non-null and the rate is positive.
inline LossGradient loss_and_gradient(const MlpModel& model, const Eigen::MatrixXd& x, const Eigen::MatrixXd& y,
                                      std::mt19937_64* dropout_rng = nullptr) {
  const std::size_t L = model.layers.size();
  const double slope = model.spec.negative_slope;
  const double rate = model.spec.dropout;
  const bool drop = dropout_rng != nullptr && rate > 0.0;

  std::vector<Eigen::MatrixXd> inputs(L);  // activation fed into layer k
  std::vector<Eigen::MatrixXd> pre(L);     // pre-activation of layer k
  std::vector<Eigen::MatrixXd> masks(L);   // scaled dropout mask applied after layer k (hidden only)
  Eigen::MatrixXd a = x;
  for (std::size_t k = 0; k < L; ++k) {
    inputs[k] = a;
    pre[k] = (model.layers[k].weight * a).colwise() + model.layers[k].bias;
    if (k + 1 == L) {
      a = pre[k];
      break;
    }
    a = detail::leaky(pre[k], slope);
    if (drop) {
      std::bernoulli_distribution keep(1.0 - rate);
      masks[k].resize(a.rows(), a.cols());
      for (Eigen::Index c = 0; c < a.cols(); ++c)
        for (Eigen::Index r = 0; r < a.rows(); ++r) masks[k](r, c) = keep(*dropout_rng) ? 1.0 / (1.0 - rate) : 0.0;
      a = a.cwiseProduct(masks[k]);
    }
  }

  const double count = static_cast<double>(y.size());
  const Eigen::MatrixXd diff = a - y;
  LossGradient out;
  out.loss = diff.squaredNorm() / count;
  out.gradient.resize(L);

  Eigen::MatrixXd delta = diff * (2.0 / count);  // d loss / d pre-activation of the current layer
  for (std::size_t k = L; k-- > 0;) {
    out.gradient[k].weight = delta * inputs[k].transpose();
    out.gradient[k].bias = delta.rowwise().sum();
    if (k == 0) break;
    Eigen::MatrixXd back = model.layers[k].weight.transpose() * delta;
    if (drop) back = back.cwiseProduct(masks[k - 1]);
    const Eigen::MatrixXd& z = pre[k - 1];
    delta = back.binaryExpr(z, [slope](double g, double v) { return v > 0.0 ? g : slope * g; });
  }
  return out;
}

/// Trains on `data` with Adam. Deterministic given config.seed.
inline MlpModel mlp_train(const CorrespondenceSet& data, MlpSpec spec, const MlpTrainConfig& config = {}) {
  data.validate();
  if (data.size() < 2) throw InsufficientData("MLP training needs at least 2 correspondences");
  spec.input_dim = static_cast<int>(data.observations.cols());
  spec.output_dim = 3;
  spec.validate();
  if (config.epochs < 1 || config.batch_size < 1 || !(config.learning_rate > 0.0)) {
    throw InvalidArgument("invalid MLP training configuration");
  }

  std::mt19937_64 rng(config.seed);
  MlpModel model;
  model.spec = spec;
  model.config = config;
  model.layers = init_layers(spec, rng);
  model.input_scaling = ColumnScaling::fit(data.observations);
  const Eigen::MatrixXd targets = data.points;
  model.target_scaling = ColumnScaling::fit(targets);
  const Eigen::MatrixXd x = model.input_scaling.apply(data.observations).transpose();
  const Eigen::MatrixXd y = model.target_scaling.apply(targets).transpose();

  std::vector<Layer> m1(model.layers.size()), m2(model.layers.size());
  for (std::size_t k = 0; k < model.layers.size(); ++k) {
    m1[k] = {Eigen::MatrixXd::Zero(model.layers[k].weight.rows(), model.layers[k].weight.cols()),
             Eigen::VectorXd::Zero(model.layers[k].bias.size())};
    m2[k] = m1[k];
  }

  const auto n = static_cast<std::size_t>(data.size());
  const std::size_t batch = n < static_cast<std::size_t>(config.batch_size) ? n : static_cast<std::size_t>(config.batch_size);
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  long step = 0;
  model.loss_history.reserve(static_cast<std::size_t>(config.epochs));

  auto adam = [&](auto& p, const auto& g, auto& m, auto& v) {
    m = config.beta1 * m + (1.0 - config.beta1) * g;
    v = config.beta2 * v + (1.0 - config.beta2) * g.cwiseAbs2();
    const double c1 = 1.0 - std::pow(config.beta1, static_cast<double>(step));
    const double c2 = 1.0 - std::pow(config.beta2, static_cast<double>(step));
    p.array() -= config.learning_rate * (m.array() / c1) / ((v.array() / c2).sqrt() + config.epsilon);
  };

  for (int epoch = 1; epoch <= config.epochs; ++epoch) {
    if (batch < n) std::shuffle(order.begin(), order.end(), rng);
    double epoch_loss = 0.0;
    for (std::size_t start = 0; start < n; start += batch) {
      const std::size_t len = std::min(batch, n - start);
      Eigen::MatrixXd xb(x.rows(), static_cast<Eigen::Index>(len)), yb(y.rows(), static_cast<Eigen::Index>(len));
      for (std::size_t j = 0; j < len; ++j) {
        xb.col(static_cast<Eigen::Index>(j)) = x.col(static_cast<Eigen::Index>(order[start + j]));
        yb.col(static_cast<Eigen::Index>(j)) = y.col(static_cast<Eigen::Index>(order[start + j]));
      }
      LossGradient lg = loss_and_gradient(model, xb, yb, &rng);
      if (!std::isfinite(lg.loss)) {
        throw TrainingDiverged(epoch, "MLP loss became non-finite at epoch " + std::to_string(epoch));
      }
      epoch_loss += lg.loss * static_cast<double>(len);
      ++step;
      for (std::size_t k = 0; k < model.layers.size(); ++k) {
        adam(model.layers[k].weight, lg.gradient[k].weight, m1[k].weight, m2[k].weight);
        adam(model.layers[k].bias, lg.gradient[k].bias, m1[k].bias, m2[k].bias);
      }
    }
    model.loss_history.push_back(epoch_loss / static_cast<double>(n));
  }
  return model;
}

/// Batch prediction in world units, one row per observation.
inline Eigen::MatrixX3d mlp_predict_batch(const MlpModel& model, const Eigen::MatrixXd& observations) {
  if (observations.cols() != model.spec.input_dim) {
    throw InvalidArgument("observation has " + std::to_string(observations.cols()) + " entries, network expects " +
                          std::to_string(model.spec.input_dim));
  }
  if (!observations.allFinite()) throw InvalidArgument("observation contains non-finite values");
  const Eigen::MatrixXd out = forward(model, model.input_scaling.apply(observations).transpose()).transpose();
  return model.target_scaling.invert(out);
}

inline WorldPoint mlp_predict(const MlpModel& model, const PixelObservation& obs) {
  return mlp_predict_batch(model, obs.transpose()).row(0).transpose();
}

}  // namespace icalib::mlp
