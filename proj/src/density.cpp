#include "drnn/density.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

#include "drnn/errors.hpp"

namespace drnn {
namespace {

void check_shapes(const DensityModel& model, const Matrix& x, const Vector& y) {
  if (x.rows() != y.size()) throw ValidationError("pair loss: X rows and y length differ");
  if (x.cols() != model.basis.p()) {
    throw ValidationError("pair loss: X has " + std::to_string(x.cols()) +
                          " columns, basis expects " + std::to_string(model.basis.p()));
  }
  if (model.head.input_dim() != model.d() + 1) {
    throw ValidationError("pair loss: network input must be d + 1");
  }
}

Vector pair_targets(const Vector& y, const PairIndex& pairs, double h) {
  Vector t(static_cast<Eigen::Index>(pairs.size()));
  for (std::size_t k = 0; k < pairs.size(); ++k) {
    const auto [i, j] = pairs[k];
    t(static_cast<Eigen::Index>(k)) = gaussian_kernel(y(j) - y(i), h);
  }
  return t;
}

}  // namespace

double gaussian_kernel(double u, double h) {
  if (!(h > 0.0)) throw ValidationError("kernel bandwidth must be > 0");
  const double s = u / h;
  return std::exp(-0.5 * s * s) / (h * std::sqrt(2.0 * std::numbers::pi));
}

double silverman_bandwidth(const Vector& y) {
  const Eigen::Index n = y.size();
  if (n < 2) throw ValidationError("silverman bandwidth needs n >= 2");
  const double var = (y.array() - y.mean()).square().sum() / static_cast<double>(n - 1);
  const double sd = std::sqrt(var);
  if (!(sd > 0.0)) throw DegenerateColumnError("response is constant", "y");
  return 1.06 * sd * std::pow(static_cast<double>(n), -0.2);
}

double KernelConfig::resolve(const Vector& y) const {
  if (bandwidth) {
    if (!(*bandwidth > 0.0)) throw ValidationError("kernel bandwidth must be > 0");
    return *bandwidth;
  }
  return silverman_bandwidth(y);
}

double PairBatchPlan::epochs(Eigen::Index n, std::size_t iterations) const {
  const double all = static_cast<double>(n) * static_cast<double>(n);
  return static_cast<double>(iterations) * static_cast<double>(batch_pairs) / all;
}

PairIndex all_pairs(Eigen::Index n) {
  PairIndex pairs;
  pairs.reserve(static_cast<std::size_t>(n * n));
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < n; ++j) pairs.emplace_back(i, j);
  }
  return pairs;
}

Matrix pair_inputs(const DensityModel& model, const Matrix& x, const Vector& y,
                   const PairIndex& pairs) {
  const Eigen::Index d = model.d();
  const Matrix projected = x * model.basis.matrix();
  Matrix input(static_cast<Eigen::Index>(pairs.size()), d + 1);
  for (std::size_t k = 0; k < pairs.size(); ++k) {
    const auto [i, j] = pairs[k];
    const auto row = static_cast<Eigen::Index>(k);
    input.row(row).head(d) = projected.row(j);
    input(row, d) = (y(i) - model.y_mean) / model.y_sd;
  }
  return input;
}

double pair_loss(const DensityModel& model, const Matrix& x, const Vector& y,
                 const KernelConfig& kernel, const PairIndex& pairs) {
  check_shapes(model, x, y);
  if (pairs.empty()) throw ValidationError("pair loss: empty pair set");
  const double h = kernel.resolve(y);
  const Vector fitted = model.head.forward(pair_inputs(model, x, y, pairs));
  return (pair_targets(y, pairs, h) - fitted).squaredNorm() /
         static_cast<double>(pairs.size());
}

DensityModel init_density_model(Eigen::Index p, Eigen::Index d, Eigen::Index h,
                                const Vector& y, RngStream& stream) {
  const Model base = init_model(p, d, h, stream);
  DensityModel model;
  model.basis = base.basis;
  model.head = Mlp::fan_in_init({d + 1, h, h / 2, 1}, stream);
  model.y_mean = y.mean();
  const double var = y.size() > 1
                         ? (y.array() - model.y_mean).square().sum() / static_cast<double>(y.size() - 1)
                         : 0.0;
  model.y_sd = var > 0.0 ? std::sqrt(var) : 1.0;
  return model;
}

DensityFit train_central_subspace(const Dataset& data, Eigen::Index d,
                                  const KernelConfig& kernel,
                                  const TrainConfig& config,
                                  const PairBatchPlan& plan) {
  validate(config);
  if (plan.batch_pairs < 1) throw ValidationError("batch_pairs must be >= 1");
  if (d < 1 || d > data.p()) throw ValidationError("density: need 1 <= d <= p");
  if (data.n() != data.y.size() || data.n() < 2) {
    throw ValidationError("density: X rows and y length differ or n < 2");
  }
  DensityFit fit;
  fit.bandwidth = kernel.resolve(data.y);
  const Eigen::Index h = config.h_override.value_or(default_width(data.n()));
  RngStream init_stream = RngStream(config.seed, 0).derive("density-init");
  DensityModel model = init_density_model(data.p(), d, h, data.y, init_stream);
  check_shapes(model, data.x, data.y);

  RngStream stream = RngStream(config.seed, 0).derive("density-train");
  OptimizerState state(config.optimizer);
  const auto n = static_cast<std::size_t>(data.n());
  PairIndex pairs(plan.batch_pairs);
  Matrix x_batch(static_cast<Eigen::Index>(plan.batch_pairs), data.p());
  MlpGrad grad;
  fit.loss_trace.reserve(config.iterations);

  for (std::size_t it = 0; it < config.iterations; ++it) {
    for (std::size_t k = 0; k < plan.batch_pairs; ++k) {
      pairs[k] = {static_cast<Eigen::Index>(stream.index(n)),
                  static_cast<Eigen::Index>(stream.index(n))};
      x_batch.row(static_cast<Eigen::Index>(k)) = data.x.row(pairs[k].second);
    }
    const Matrix input = pair_inputs(model, data.x, data.y, pairs);
    const Vector targets = pair_targets(data.y, pairs, fit.bandwidth);
    const double loss = mlp_loss_and_grad(model.head, input, targets, grad, true);
    if (!std::isfinite(loss)) {
      throw DivergenceError("density training diverged at iteration " + std::to_string(it),
                            it, fit.loss_trace);
    }
    fit.loss_trace.push_back(loss);

    const double lr = scheduled_learning_rate(config, it);
    state.begin_step();
    const Matrix grad_basis = x_batch.transpose() * grad.input.leftCols(d);
    StiefelStep step = stiefel_step(model.basis, grad_basis, state, 0,
                                    lr * config.basis_lr_scale, stream);
    std::size_t slot = 1;
    for (std::size_t l = 0; l < model.head.layers.size(); ++l) {
      model.head.layers[l].weight += state.displacement(slot++, grad.layers[l].weight, lr);
      model.head.layers[l].bias += state.displacement(slot++, grad.layers[l].bias, lr);
    }
    auto& first = model.head.layers.front().weight;
    first.topRows(d) = step.r * first.topRows(d);
    model.basis = std::move(step.basis);
    fit.retraction_warnings += step.rerandomized_columns;
    fit.max_orthonormality_error =
        std::max(fit.max_orthonormality_error, model.basis.orthonormality_error());
  }
  fit.basis = model.basis;
  fit.model = std::move(model);
  return fit;
}

}  // namespace drnn
