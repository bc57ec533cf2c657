#pragma once

#include <optional>
#include <utility>
#include <vector>

#include "drnn/datagen.hpp"
#include "drnn/network.hpp"

namespace drnn {

// Gaussian kernel K_h(u) = exp(-u^2 / (2 h^2)) / (h sqrt(2 pi)).
double gaussian_kernel(double u, double h);

// 1.06 * sd(y) * n^(-1/5), sample sd.
double silverman_bandwidth(const Vector& y);

struct KernelConfig {
  std::optional<double> bandwidth;  // empty: Silverman's rule on y

  double resolve(const Vector& y) const;
};

struct PairBatchPlan {
  std::size_t batch_pairs = 4096;

  // Passes over the n^2 pair set that `iterations` steps amount to.
  double epochs(Eigen::Index n, std::size_t iterations) const;
};

// (i, j): y_i is the conditioning response, x_j / y_j the target sample.
using PairIndex = std::vector<std::pair<Eigen::Index, Eigen::Index>>;

PairIndex all_pairs(Eigen::Index n);

// f(B^T x_j, y_i): the basis acts on x only; y_i enters z-scored.
struct DensityModel {
  OrthonormalBasis basis;
  Mlp head;  // (d + 1) -> h -> h/2 -> 1
  double y_mean = 0.0;
  double y_sd = 1.0;

  Eigen::Index d() const noexcept { return basis.d(); }
};

// Network inputs for a pair set, one row per pair.
Matrix pair_inputs(const DensityModel& model, const Matrix& x, const Vector& y,
                   const PairIndex& pairs);

// Mean over `pairs` of [K_h(y_j - y_i) - f(B^T x_j, y_i)]^2.
double pair_loss(const DensityModel& model, const Matrix& x, const Vector& y,
                 const KernelConfig& kernel, const PairIndex& pairs);

struct DensityFit {
  DensityModel model;
  OrthonormalBasis basis;
  std::vector<double> loss_trace;  // minibatch pair loss per iteration
  double bandwidth = 0.0;
  double max_orthonormality_error = 0.0;
  int retraction_warnings = 0;
};

DensityModel init_density_model(Eigen::Index p, Eigen::Index d, Eigen::Index h,
                                const Vector& y, RngStream& stream);

// Stochastic minimization of the pairwise kernel loss over uniformly drawn
// ordered pairs, with the QR retraction on B every step.
DensityFit train_central_subspace(const Dataset& data, Eigen::Index d,
                                  const KernelConfig& kernel,
                                  const TrainConfig& config,
                                  const PairBatchPlan& plan = {});

}  // namespace drnn
