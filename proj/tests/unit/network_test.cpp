#include <gtest/gtest.h>

#include <cmath>
#include <numeric>

#include "drnn/errors.hpp"
#include "drnn/network.hpp"

namespace drnn {
namespace {

Matrix gaussian(RngStream& s, Eigen::Index r, Eigen::Index c) {
  Matrix a(r, c);
  for (Eigen::Index j = 0; j < c; ++j)
    for (Eigen::Index i = 0; i < r; ++i) a(i, j) = s.normal();
  return a;
}

// Loss evaluated from an ambient (possibly non-orthonormal) first layer.
double ambient_loss(const Matrix& b, const Mlp& head, const Matrix& x, const Vector& y) {
  return (head.forward(x * b) - y).squaredNorm() / static_cast<double>(y.size());
}

double rel_err(double a, double f) {
  return std::abs(a - f) / std::max({std::abs(a), std::abs(f), 1e-6});
}

Dataset setting1(std::uint64_t seed, Eigen::Index n, Eigen::Index p = 10) {
  SettingSpec s = SettingSpec::defaults(SettingId::kOne, n);
  s.p = p;
  RngStream stream(seed, 0);
  return generate_setting(s, stream);
}

double mean_of(const std::vector<double>& v, std::size_t lo, std::size_t hi) {
  return std::accumulate(v.begin() + lo, v.begin() + hi, 0.0) / static_cast<double>(hi - lo);
}

TEST(InitModel, LayerShapes) {
  RngStream s(1, 0);
  const Model m = init_model(10, 2, 64, s);
  using Shape = std::pair<Eigen::Index, Eigen::Index>;
  const std::vector<Shape> expected{{10, 2}, {2, 64}, {64, 32}, {32, 1}};
  EXPECT_EQ(m.layer_shapes(), expected);
  const Matrix& b = m.basis.matrix();
  EXPECT_LT((b.transpose() * b - Matrix::Identity(2, 2)).norm(), 1e-12);
  for (const auto& layer : m.head.layers) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(layer.weight.rows()));
    EXPECT_LE(layer.bias.cwiseAbs().maxCoeff(), bound);
    EXPECT_GT(layer.bias.norm(), 0.0);
  }
}

TEST(InitModel, SameStreamSameModel) {
  RngStream a(3, 4);
  RngStream b(3, 4);
  const Model ma = init_model(6, 3, 8, a);
  const Model mb = init_model(6, 3, 8, b);
  EXPECT_EQ(ma.basis.matrix(), mb.basis.matrix());
  for (std::size_t k = 0; k < ma.head.layers.size(); ++k) {
    EXPECT_EQ(ma.head.layers[k].weight, mb.head.layers[k].weight);
  }
}

TEST(InitModel, FanInUniformVariance) {
  RngStream s(5, 0);
  const Model m = init_model(10, 4, 400, s);
  const Matrix& w = m.head.layers[1].weight;  // fan_in 400
  // Uniform on +-1/20 has variance (1/20)^2 / 3.
  EXPECT_NEAR(w.array().square().mean(), 1.0 / 1200.0, 0.05 / 1200.0);
  EXPECT_LE(w.cwiseAbs().maxCoeff(), 1.0 / 20.0);
}

TEST(InitModel, DLargerThanPRejected) {
  RngStream s(0, 0);
  EXPECT_THROW(init_model(3, 4, 8, s), ValidationError);
}

TEST(Forward, ZeroWeightsGiveZero) {
  RngStream s(2, 0);
  Model m = init_model(5, 2, 8, s);
  for (auto& layer : m.head.layers) {
    layer.weight.setZero();
    layer.bias.setZero();
  }
  EXPECT_EQ(forward(m, gaussian(s, 7, 5)).cwiseAbs().maxCoeff(), 0.0);
}

TEST(Forward, ReluIdentityConstruction) {
  Model m;
  m.basis = OrthonormalBasis(Matrix::Ones(1, 1));
  m.head.layers = {DenseLayer{Matrix::Ones(1, 1), Vector::Zero(1)},
                   DenseLayer{Matrix::Ones(1, 1), Vector::Zero(1)}};
  Matrix x(2, 1);
  x << 2, -3;
  const Vector out = forward(m, x);
  EXPECT_EQ(out(0), 2.0);
  EXPECT_EQ(out(1), 0.0);
  EXPECT_EQ(predict(m, x), out);
}

TEST(Forward, RotationInvariance) {
  RngStream s(6, 0);
  for (int t = 0; t < 10; ++t) {
    Model m = init_model(7, 3, 10, s);
    const Matrix x = gaussian(s, 20, 7);
    const Matrix q = OrthonormalBasis::from_span(gaussian(s, 3, 3)).matrix();
    Model r = m;
    r.basis = OrthonormalBasis(m.basis.matrix() * q);
    r.head.layers.front().weight = q.transpose() * m.head.layers.front().weight;
    ASSERT_LT((forward(m, x) - forward(r, x)).cwiseAbs().maxCoeff(), 1e-10);
  }
}

TEST(Forward, DimensionMismatch) {
  RngStream s(7, 0);
  const Model m = init_model(5, 2, 8, s);
  EXPECT_THROW(forward(m, Matrix::Ones(3, 4)), ValidationError);
}

TEST(LossAndGrad, ExactFitHasZeroLossAndGrad) {
  RngStream s(8, 0);
  const Model m = init_model(4, 2, 6, s);
  const Matrix x = gaussian(s, 8, 4);
  const LossAndGrad lg = loss_and_grad(m, x, forward(m, x));
  EXPECT_EQ(lg.loss, 0.0);
  EXPECT_EQ(lg.grad.basis.norm(), 0.0);
  for (const auto& layer : lg.grad.head.layers) {
    EXPECT_EQ(layer.weight.norm(), 0.0);
    EXPECT_EQ(layer.bias.norm(), 0.0);
  }
}

TEST(LossAndGrad, ScalarCalculus) {
  // Linear path: B = 1, both weights positive so ReLU is active; d/dw (y - w x)^2
  // at x = 1, y = 1, with the output weight playing w near 0.
  Model m;
  m.basis = OrthonormalBasis(Matrix::Ones(1, 1));
  m.head.layers = {DenseLayer{Matrix::Ones(1, 1), Vector::Zero(1)},
                   DenseLayer{Matrix::Zero(1, 1), Vector::Zero(1)}};
  const LossAndGrad lg = loss_and_grad(m, Matrix::Ones(1, 1), Vector::Ones(1));
  EXPECT_DOUBLE_EQ(lg.loss, 1.0);
  EXPECT_DOUBLE_EQ(lg.grad.head.layers[1].weight(0, 0), -2.0);
}

TEST(LossAndGrad, FiniteDifferenceOnMicroInstances) {
  constexpr double kStep = 1e-5;
  double worst = 0.0;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    RngStream s(100 + seed, 0);
    const Eigen::Index p = 2 + static_cast<Eigen::Index>(seed % 3);
    const Eigen::Index d = 1 + static_cast<Eigen::Index>(seed % static_cast<std::uint64_t>(p));
    const Eigen::Index h = 2 + 2 * static_cast<Eigen::Index>(seed % 3);
    const Eigen::Index n = 3 + static_cast<Eigen::Index>(seed % 6);
    Model m = init_model(p, d, h, s);
    for (auto& layer : m.head.layers) {
      for (Eigen::Index i = 0; i < layer.bias.size(); ++i) layer.bias(i) = 0.1 * s.normal();
    }
    const Matrix x = gaussian(s, n, p);
    const Vector y = gaussian(s, n, 1).col(0);
    const LossAndGrad lg = loss_and_grad(m, x, y);
    ASSERT_NEAR(lg.loss, ambient_loss(m.basis.matrix(), m.head, x, y), 1e-14);

    Matrix b = m.basis.matrix();
    for (Eigen::Index i = 0; i < p; ++i) {
      for (Eigen::Index j = 0; j < d; ++j) {
        Matrix bp = b, bm = b;
        bp(i, j) += kStep;
        bm(i, j) -= kStep;
        const double fd = (ambient_loss(bp, m.head, x, y) - ambient_loss(bm, m.head, x, y)) / (2 * kStep);
        worst = std::max(worst, rel_err(lg.grad.basis(i, j), fd));
      }
    }
    for (std::size_t k = 0; k < m.head.layers.size(); ++k) {
      const Matrix& w = m.head.layers[k].weight;
      for (Eigen::Index i = 0; i < w.rows(); ++i) {
        for (Eigen::Index j = 0; j < w.cols(); ++j) {
          Mlp hp = m.head, hm = m.head;
          hp.layers[k].weight(i, j) += kStep;
          hm.layers[k].weight(i, j) -= kStep;
          const double fd = (ambient_loss(b, hp, x, y) - ambient_loss(b, hm, x, y)) / (2 * kStep);
          worst = std::max(worst, rel_err(lg.grad.head.layers[k].weight(i, j), fd));
        }
      }
      for (Eigen::Index i = 0; i < m.head.layers[k].bias.size(); ++i) {
        Mlp hp = m.head, hm = m.head;
        hp.layers[k].bias(i) += kStep;
        hm.layers[k].bias(i) -= kStep;
        const double fd = (ambient_loss(b, hp, x, y) - ambient_loss(b, hm, x, y)) / (2 * kStep);
        worst = std::max(worst, rel_err(lg.grad.head.layers[k].bias(i), fd));
      }
    }
  }
  EXPECT_LT(worst, 1e-4);
}

TEST(LossAndGrad, NonFiniteForwardIsDivergence) {
  RngStream s(9, 0);
  const Model m = init_model(3, 1, 4, s);
  Matrix x = gaussian(s, 4, 3);
  x(2, 1) = std::numeric_limits<double>::infinity();
  EXPECT_THROW(loss_and_grad(m, x, Vector::Zero(4)), DivergenceError);
}

TEST(StiefelStep, ZeroGradientIsFixedPoint) {
  RngStream s(10, 0);
  const OrthonormalBasis b = OrthonormalBasis::from_span(gaussian(s, 6, 2));
  OptimizerState state(AdamConfig{});
  state.begin_step();
  const StiefelStep step = stiefel_step(b, Matrix::Zero(6, 2), state, 0, 1e-2, s);
  EXPECT_LT((step.basis.matrix() - b.matrix()).norm(), 1e-14);
  EXPECT_EQ(step.rerandomized_columns, 0);
}

TEST(StiefelStep, NormalizesSingleColumn) {
  const double delta = 0.3;
  Matrix b(2, 1);
  b << 1, 0;
  Matrix g(2, 1);
  g << 0, -delta;  // SGD with lr 1 moves B to (1, delta)
  OptimizerState state(SgdConfig{});
  state.begin_step();
  RngStream s(0, 0);
  const StiefelStep step = stiefel_step(OrthonormalBasis(b), g, state, 0, 1.0, s);
  const double norm = std::sqrt(1 + delta * delta);
  EXPECT_NEAR(step.basis.matrix()(0, 0), 1 / norm, 1e-15);
  EXPECT_NEAR(step.basis.matrix()(1, 0), delta / norm, 1e-15);
  EXPECT_NEAR(step.r(0, 0), norm, 1e-15);
}

TEST(StiefelStep, AlwaysOrthonormal) {
  RngStream s(11, 0);
  for (int t = 0; t < 100; ++t) {
    const Eigen::Index p = 3 + t % 6;
    const Eigen::Index d = 1 + t % p;
    const OrthonormalBasis b = OrthonormalBasis::from_span(gaussian(s, p, d));
    OptimizerState state(t % 2 ? OptimizerSpec{AdamConfig{}} : OptimizerSpec{SgdConfig{0.5}});
    state.begin_step();
    const StiefelStep step = stiefel_step(b, gaussian(s, p, d) * (1 + t), state, 0, 0.5, s);
    const Matrix& q = step.basis.matrix();
    ASSERT_LT((q.transpose() * q - Matrix::Identity(d, d)).norm(), 1e-10);
  }
}

TEST(Retract, CollapsedColumnIsRerandomized) {
  Matrix a(4, 2);
  a << 1, 2, 0, 0, 0, 0, 0, 0;  // second column parallel to the first
  RngStream s(12, 0);
  const StiefelStep step = retract(a, s);
  const Matrix& q = step.basis.matrix();
  EXPECT_EQ(step.rerandomized_columns, 1);
  EXPECT_LT((q.transpose() * q - Matrix::Identity(2, 2)).norm(), 1e-10);
  EXPECT_NEAR(std::abs(q(0, 0)), 1.0, 1e-12);
}

TEST(Train, NoiselessLinearRecovered) {
  SettingSpec s = SettingSpec::defaults(SettingId::kOne, 500);
  RngStream stream(21, 0);
  Dataset data = generate_setting(s, stream);
  data.y = data.x.col(0);
  TrainConfig cfg;
  cfg.seed = 1;
  const FitResult fit = train(data, 1, cfg);
  EXPECT_LT(fit.final_train_mse, 1e-3);
  EXPECT_LT(proj_distance(fit.basis, *data.truth), 0.05);
}

TEST(Train, Setting1TraceDecreasesAndStaysOnManifold) {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const Dataset data = setting1(seed, 100);
    TrainConfig cfg;
    cfg.seed = seed;
    const FitResult fit = train(data, 1, cfg);
    const auto& tr = fit.loss_trace;
    ASSERT_EQ(tr.size(), cfg.iterations);
    const std::size_t q = tr.size() / 4;
    EXPECT_LE(mean_of(tr, tr.size() - q, tr.size()), mean_of(tr, 0, q)) << "seed " << seed;
    EXPECT_LT(fit.max_orthonormality_error, 1e-8);
    for (double v : tr) ASSERT_TRUE(std::isfinite(v));
  }
}

TEST(Train, Deterministic) {
  const Dataset data = setting1(3, 80);
  TrainConfig cfg;
  cfg.iterations = 200;
  cfg.seed = 42;
  const FitResult a = train(data, 1, cfg);
  const FitResult b = train(data, 1, cfg);
  EXPECT_EQ(a.basis.matrix(), b.basis.matrix());
  EXPECT_EQ(a.loss_trace, b.loss_trace);
  EXPECT_EQ(a.final_train_mse, b.final_train_mse);
  EXPECT_EQ(model_to_json(a.model, cfg).dump(), model_to_json(b.model, cfg).dump());
}

TEST(Train, SgdRotationEquivariance) {
  // Rotating the covariates x -> x O and the basis B -> O^T B leaves every
  // SGD step and QR retraction equivariant, so the fitted spans agree.
  const Dataset data = setting1(4, 60, 10);
  SettingSpec s3 = SettingSpec::defaults(SettingId::kThree, 60);
  RngStream ds(4, 1);
  const Dataset multi = generate_setting(s3, ds);
  for (const Dataset* d : {&data, &multi}) {
    const Eigen::Index dim = d->truth->d();
    RngStream init(9, 0);
    const Model m = init_model(d->p(), dim, 16, init);
    const Matrix o = OrthonormalBasis::from_span(gaussian(init, d->p(), d->p())).matrix();
    Dataset rotated = *d;
    rotated.x = d->x * o;
    Model r = m;
    r.basis = OrthonormalBasis(o.transpose() * m.basis.matrix());
    TrainConfig cfg;
    cfg.iterations = 300;
    cfg.optimizer = SgdConfig{};
    cfg.learning_rate = 1e-2;
    cfg.seed = 5;
    const FitResult a = train_from(*d, m, cfg);
    const FitResult b = train_from(rotated, r, cfg);
    EXPECT_LT((o * b.basis.matrix() - a.basis.matrix()).norm(), 1e-8);
    EXPECT_GT(proj_distance(a.basis, m.basis), 1e-3);  // training actually moved
  }
}

TEST(Train, Validation) {
  const Dataset data = setting1(0, 30);
  TrainConfig cfg;
  EXPECT_THROW(train(data, 11, cfg), ValidationError);
  EXPECT_THROW(train(data, 0, cfg), ValidationError);
  cfg.learning_rate = -1;
  EXPECT_THROW(train(data, 1, cfg), ValidationError);
  cfg = TrainConfig{};
  cfg.restarts = 0;
  EXPECT_THROW(train(data, 1, cfg), ValidationError);
}

TEST(Train, DivergenceCarriesTrace) {
  // Residuals near 1e200 overflow the squared loss on the first step.
  Dataset data = setting1(1, 50);
  data.y.setConstant(1e200);
  TrainConfig cfg;
  cfg.standardize_response = false;
  cfg.restarts = 1;
  try {
    train(data, 1, cfg);
    FAIL() << "expected DivergenceError";
  } catch (const DivergenceError& e) {
    EXPECT_EQ(e.trace_prefix().size(), e.iteration());
    EXPECT_LT(e.iteration(), cfg.iterations);
  }
}

TEST(Train, WidthRule) {
  EXPECT_EQ(default_width(999), 64);
  EXPECT_EQ(default_width(1000), 128);
  EXPECT_EQ(default_width(2000), 128);
}

TEST(ModelJson, RoundTrip) {
  RngStream s(13, 0);
  const Model m = init_model(5, 2, 6, s);
  const nlohmann::json doc = model_to_json(m, TrainConfig{});
  EXPECT_EQ(doc.at("version"), "drnn-model/1");
  const Model back = model_from_json(nlohmann::json::parse(doc.dump()));
  const Matrix x = gaussian(s, 9, 5);
  EXPECT_EQ(forward(m, x), forward(back, x));
}

TEST(Toy, CosinesInRangeAndFullRankProjection) {
  ToyConfig cfg;
  cfg.train.iterations = 300;
  RngStream s(14, 0);
  const auto diags = toy_diagnostics(300, {1, 10}, s, cfg);
  ASSERT_EQ(diags.size(), 2u);
  for (const auto& d : diags) {
    EXPECT_GE(d.cosine_projection, 0.0);
    EXPECT_LE(d.cosine_projection, 1.0 + 1e-12);
    EXPECT_GE(d.cosine_leading_eigvec, 0.0);
    EXPECT_LE(d.cosine_leading_eigvec, 1.0);
  }
  EXPECT_NEAR(diags[1].cosine_projection, 1.0, 1e-6);
  RngStream bad(0, 0);
  EXPECT_THROW(toy_diagnostics(50, {11}, bad, cfg), ValidationError);
}

}  // namespace
}  // namespace drnn
