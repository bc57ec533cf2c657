#include <gtest/gtest.h>

#include <cmath>
#include <numeric>

#include "drnn/density.hpp"
#include "drnn/errors.hpp"

namespace drnn {
namespace {

Matrix gaussian(RngStream& s, Eigen::Index r, Eigen::Index c) {
  Matrix a(r, c);
  for (Eigen::Index j = 0; j < c; ++j)
    for (Eigen::Index i = 0; i < r; ++i) a(i, j) = s.normal();
  return a;
}

// Independent scalar evaluation of the kernel and of the network.
double kernel_oracle(double u, double h) {
  return std::exp(-u * u / (2 * h * h)) / (h * std::sqrt(2 * M_PI));
}

double loop_loss(const DensityModel& m, const Matrix& x, const Vector& y, double h) {
  const Eigen::Index n = y.size(), d = m.d();
  double acc = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < n; ++j) {
      Matrix in(1, d + 1);
      in.row(0).head(d) = (x.row(j) * m.basis.matrix());
      in(0, d) = (y(i) - m.y_mean) / m.y_sd;
      const double r = kernel_oracle(y(j) - y(i), h) - m.head.forward(in)(0);
      acc += r * r;
    }
  }
  return acc / static_cast<double>(n * n);
}

struct Small {
  DensityModel model;
  Matrix x;
  Vector y;
};

Small small_instance(std::uint64_t seed, Eigen::Index n = 12) {
  RngStream s(seed, 0);
  Small out;
  out.x = gaussian(s, n, 4);
  out.y = gaussian(s, n, 1).col(0);
  out.model = init_density_model(4, 2, 6, out.y, s);
  return out;
}

TEST(Kernel, Values) {
  EXPECT_NEAR(gaussian_kernel(0.0, 1.0), 1.0 / std::sqrt(2 * M_PI), 1e-15);
  EXPECT_NEAR(gaussian_kernel(0.0, 1.0), 0.39894, 1e-5);
  RngStream s(1, 0);
  for (int t = 0; t < 100; ++t) {
    const double u = 3 * s.normal();
    ASSERT_EQ(gaussian_kernel(u, 0.7), gaussian_kernel(-u, 0.7));
    ASSERT_GT(gaussian_kernel(u, 0.7), 0.0);
  }
  EXPECT_THROW(gaussian_kernel(0.0, 0.0), ValidationError);
}

TEST(Kernel, IntegratesToOne) {
  const double h = 0.37;
  const int m = 20000;
  const double a = -8 * h, b = 8 * h, step = (b - a) / m;
  double sum = 0.5 * (gaussian_kernel(a, h) + gaussian_kernel(b, h));
  for (int k = 1; k < m; ++k) sum += gaussian_kernel(a + k * step, h);
  EXPECT_NEAR(sum * step, 1.0, 1e-6);
}

TEST(Silverman, Formula) {
  Vector y(100);
  for (Eigen::Index i = 0; i < 100; ++i) y(i) = (i % 2 == 0) ? 1.0 : -1.0;
  // Sample sd of +-1 alternating over 100 values.
  const double sd = std::sqrt(100.0 / 99.0);
  EXPECT_NEAR(silverman_bandwidth(y), 1.06 * sd * std::pow(100.0, -0.2), 1e-14);
  EXPECT_NEAR(1.06 * std::pow(100.0, -0.2), 0.4220, 1e-4);
  EXPECT_NEAR(silverman_bandwidth(3.5 * y), 3.5 * silverman_bandwidth(y), 1e-14);
  RngStream s(2, 0);
  const Vector small = gaussian(s, 100, 1).col(0);
  const Vector big = gaussian(s, 10000, 1).col(0);
  EXPECT_LT(silverman_bandwidth(big), silverman_bandwidth(small));
  EXPECT_THROW(silverman_bandwidth(Vector::Ones(5)), DegenerateColumnError);
}

TEST(PairLoss, MatchesBruteForceDoubleLoop) {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const Small s = small_instance(seed);
    const KernelConfig kernel;
    const double h = kernel.resolve(s.y);
    const double full = pair_loss(s.model, s.x, s.y, kernel, all_pairs(s.y.size()));
    EXPECT_NEAR(full, loop_loss(s.model, s.x, s.y, h), 1e-12);
  }
}

TEST(PairLoss, ZeroNetworkGivesMeanSquaredKernel) {
  Small s = small_instance(3);
  for (auto& layer : s.model.head.layers) {
    layer.weight.setZero();
    layer.bias.setZero();
  }
  const KernelConfig kernel{0.5};
  double expected = 0.0;
  const Eigen::Index n = s.y.size();
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < n; ++j) expected += std::pow(kernel_oracle(s.y(j) - s.y(i), 0.5), 2);
  expected /= static_cast<double>(n * n);
  EXPECT_NEAR(pair_loss(s.model, s.x, s.y, kernel, all_pairs(n)), expected, 1e-14);
}

TEST(PairLoss, InterpolatingNetworkGivesZero) {
  // Output bias alone reproduces the kernel target when every pair has the
  // same response gap.
  Small s = small_instance(4);
  s.y.setConstant(0.3);
  for (auto& layer : s.model.head.layers) layer.weight.setZero();
  const KernelConfig kernel{0.8};
  s.model.head.layers.back().bias(0) = kernel_oracle(0.0, 0.8);
  EXPECT_NEAR(pair_loss(s.model, s.x, s.y, kernel, all_pairs(s.y.size())), 0.0, 1e-28);
}

TEST(PairLoss, PermutationInvariant) {
  const Small s = small_instance(5);
  std::vector<Eigen::Index> perm(static_cast<std::size_t>(s.y.size()));
  std::iota(perm.begin(), perm.end(), 0);
  std::reverse(perm.begin(), perm.end());
  std::swap(perm[0], perm[4]);
  Matrix xp(s.x.rows(), s.x.cols());
  Vector yp(s.y.size());
  for (std::size_t k = 0; k < perm.size(); ++k) {
    xp.row(static_cast<Eigen::Index>(k)) = s.x.row(perm[k]);
    yp(static_cast<Eigen::Index>(k)) = s.y(perm[k]);
  }
  const KernelConfig kernel{0.6};
  const double a = pair_loss(s.model, s.x, s.y, kernel, all_pairs(s.y.size()));
  const double b = pair_loss(s.model, xp, yp, kernel, all_pairs(s.y.size()));
  EXPECT_NEAR(a, b, 1e-14 * std::max(1.0, a));
}

TEST(PairLoss, MinibatchUnbiased) {
  const Small s = small_instance(6, 30);
  const KernelConfig kernel;
  const double full = pair_loss(s.model, s.x, s.y, kernel, all_pairs(30));
  RngStream r(7, 0);
  constexpr int kBatches = 1000;
  std::vector<double> values;
  for (int b = 0; b < kBatches; ++b) {
    PairIndex pairs(64);
    for (auto& pr : pairs) pr = {static_cast<Eigen::Index>(r.index(30)), static_cast<Eigen::Index>(r.index(30))};
    values.push_back(pair_loss(s.model, s.x, s.y, kernel, pairs));
  }
  const double mean = std::accumulate(values.begin(), values.end(), 0.0) / kBatches;
  double var = 0.0;
  for (double v : values) var += (v - mean) * (v - mean);
  var /= kBatches - 1;
  EXPECT_LT(std::abs(mean - full), 2.0 * std::sqrt(var / kBatches));
}

TEST(PairLoss, DimensionMismatch) {
  const Small s = small_instance(8);
  EXPECT_THROW(pair_loss(s.model, Matrix::Ones(12, 3), s.y, KernelConfig{}, all_pairs(12)),
               ValidationError);
  DensityModel bad = s.model;
  RngStream r(0, 0);
  bad.head = Mlp::fan_in_init({2, 4, 2, 1}, r);
  EXPECT_THROW(pair_loss(bad, s.x, s.y, KernelConfig{}, all_pairs(12)), ValidationError);
}

TEST(PairPlan, Epochs) {
  EXPECT_DOUBLE_EQ(PairBatchPlan{}.epochs(64, 1), 1.0);
  EXPECT_EQ(all_pairs(5).size(), 25u);
}

Dataset heteroscedastic(std::uint64_t seed, Eigen::Index n) {
  RngStream s(seed, 0);
  Dataset d;
  d.x = gaussian(s, n, 5);
  d.y = d.x.col(0).cwiseProduct(gaussian(s, n, 1).col(0));
  d.truth = OrthonormalBasis(Matrix::Identity(5, 1));
  return d;
}

TEST(TrainDensity, StiefelInvariantAndDeterminism) {
  const Dataset data = heteroscedastic(1, 200);
  TrainConfig cfg;
  cfg.iterations = 100;
  cfg.seed = 3;
  const DensityFit a = train_central_subspace(data, 1, KernelConfig{}, cfg, PairBatchPlan{512});
  const DensityFit b = train_central_subspace(data, 1, KernelConfig{}, cfg, PairBatchPlan{512});
  EXPECT_LT(a.max_orthonormality_error, 1e-8);
  EXPECT_EQ(a.basis.matrix(), b.basis.matrix());
  EXPECT_EQ(a.loss_trace, b.loss_trace);
  EXPECT_EQ(a.loss_trace.size(), 100u);
  EXPECT_GT(a.bandwidth, 0.0);
}

TEST(TrainDensity, LocationModel) {
  RngStream s(11, 0);
  Dataset data;
  data.x = gaussian(s, 1000, 5);
  data.y = data.x.col(0) + 0.2 * gaussian(s, 1000, 1).col(0);
  TrainConfig cfg;
  cfg.seed = 2;
  const DensityFit fit = train_central_subspace(data, 1, KernelConfig{}, cfg);
  EXPECT_LT(proj_distance(fit.basis, OrthonormalBasis(Matrix::Identity(5, 1))), 0.4);
}

TEST(TrainDensity, Validation) {
  const Dataset data = heteroscedastic(2, 50);
  TrainConfig cfg;
  EXPECT_THROW(train_central_subspace(data, 6, KernelConfig{}, cfg), ValidationError);
  EXPECT_THROW(train_central_subspace(data, 1, KernelConfig{-1.0}, cfg), ValidationError);
  EXPECT_THROW(train_central_subspace(data, 1, KernelConfig{}, cfg, PairBatchPlan{0}), ValidationError);
}

}  // namespace
}  // namespace drnn
