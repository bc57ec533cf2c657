#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include <nlohmann/json.hpp>

#include "drnn/datagen.hpp"
#include "drnn/metrics.hpp"
#include "drnn/numerics.hpp"

namespace drnn {

// phi(z) = W^T z + b with W stored fan_in x fan_out, as in the layer shape
// lists (p x d), (d x h), (h x h/2), (h/2 x 1).
struct DenseLayer {
  Matrix weight;
  Vector bias;
};

// Dense stack with ReLU on every hidden layer and identity on the output.
struct Mlp {
  std::vector<DenseLayer> layers;

  Eigen::Index input_dim() const;
  Eigen::Index parameter_count() const;
  // Rows of `input` are samples; returns one output per row.
  Vector forward(const Matrix& input) const;

  // Weights and biases uniform on +-1/sqrt(fan_in). He-normal weights with
  // zero biases trained markedly worse on the multi-index settings.
  static Mlp fan_in_init(const std::vector<Eigen::Index>& widths, RngStream& stream);
};

struct MlpGrad {
  std::vector<DenseLayer> layers;
  Matrix input;  // d loss / d input, filled when requested
};

// Mean squared error of `head` on (input, y) and its exact reverse-mode
// gradient. ReLU at exactly zero passes a zero subgradient.
double mlp_loss_and_grad(const Mlp& head, const Matrix& input, const Vector& y,
                         MlpGrad& grad, bool want_input_grad);

// The constrained network x -> head(B^T x), with B on the Stiefel manifold
// and no first-layer bias.
struct Model {
  OrthonormalBasis basis;
  Mlp head;

  Eigen::Index p() const noexcept { return basis.p(); }
  Eigen::Index d() const noexcept { return basis.d(); }
  Eigen::Index parameter_count() const;
  // Layer shapes starting with the basis: (p x d), (d x h), ...
  std::vector<std::pair<Eigen::Index, Eigen::Index>> layer_shapes() const;
};

struct ModelGrad {
  Matrix basis;  // ambient (unconstrained) gradient, p x d
  MlpGrad head;
};

Model init_model(Eigen::Index p, Eigen::Index d, Eigen::Index h,
                 RngStream& stream);

Vector forward(const Model& model, const Matrix& x);
inline Vector predict(const Model& model, const Matrix& x) {
  return forward(model, x);
}

struct LossAndGrad {
  double loss = 0.0;
  ModelGrad grad;
};

// Throws DivergenceError when the forward pass is not finite.
LossAndGrad loss_and_grad(const Model& model, const Matrix& x, const Vector& y);

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

struct SgdConfig {
  double momentum = 0.0;
};

using OptimizerSpec = std::variant<AdamConfig, SgdConfig>;

// First/second moment buffers keyed by parameter slot.
class OptimizerState {
 public:
  explicit OptimizerState(OptimizerSpec spec = AdamConfig{});

  // Begins a new step (advances Adam's bias-correction counter).
  void begin_step();
  // Returns the displacement to add to the parameter stored in `slot`.
  Matrix displacement(std::size_t slot, const Matrix& grad, double lr);
  Vector displacement(std::size_t slot, const Vector& grad, double lr);

  const OptimizerSpec& spec() const noexcept { return spec_; }

 private:
  Eigen::ArrayXd displacement_flat(std::size_t slot,
                                   const Eigen::Ref<const Eigen::ArrayXd>& grad,
                                   double lr);

  OptimizerSpec spec_;
  std::vector<Eigen::ArrayXd> first_;
  std::vector<Eigen::ArrayXd> second_;
  long step_ = 0;
};

struct StiefelStep {
  OrthonormalBasis basis;
  Matrix r;  // ambient update = basis * r
  int rerandomized_columns = 0;
};

// Optimizer update of B in ambient space followed by the QR retraction
// (positive R diagonal). A collapsed column is replaced with a random
// direction orthogonal to the others, counted in rerandomized_columns.
StiefelStep stiefel_step(const OrthonormalBasis& basis,
                         const Matrix& ambient_grad, OptimizerState& state,
                         std::size_t slot, double lr, RngStream& stream);

// QR retraction of an arbitrary ambient point, same collapse handling.
StiefelStep retract(const Matrix& ambient, RngStream& stream);

struct TrainConfig {
  std::size_t iterations = 1000;
  double learning_rate = 1e-2;
  OptimizerSpec optimizer = AdamConfig{};
  // Rows per step, sampled without replacement; 0 or >= n means full batch.
  std::size_t batch_size = 0;
  std::uint64_t seed = 0;
  std::optional<Eigen::Index> h_override;
  // Train against the z-scored response and fold the scale back into the
  // output layer afterwards; the returned model predicts raw y.
  bool standardize_response = true;
  // Step size of the basis relative to learning_rate.
  double basis_lr_scale = 30.0;
  // Independent inits trained for pilot_fraction of the iterations; the one
  // with the lowest empirical loss is trained to completion. Much shorter
  // pilots tended to pick inits that fit fast inside a wrong subspace.
  std::size_t restarts = 6;
  double pilot_fraction = 0.5;
  // Cosine decay of both step sizes from learning_rate to
  // final_lr_fraction * learning_rate over the run; false keeps them constant.
  bool cosine_decay = true;
  double final_lr_fraction = 0.01;
};

void validate(const TrainConfig& config);

// Head step size at iteration t under the config's schedule; the basis uses
// basis_lr_scale times this.
double scheduled_learning_rate(const TrainConfig& config, std::size_t t);

// h = 64 below 1000 samples, 128 otherwise.
Eigen::Index default_width(Eigen::Index n);

struct FitResult {
  Model model;
  OrthonormalBasis basis;
  std::vector<double> loss_trace;  // per iteration, raw-response units
  double final_train_mse = 0.0;
  double max_orthonormality_error = 0.0;
  int retraction_warnings = 0;
};

FitResult train(const Dataset& data, Eigen::Index d, const TrainConfig& config);

// As `train`, but starting from a caller-supplied model.
FitResult train_from(const Dataset& data, Model model, const TrainConfig& config);

// Unconstrained regressor input -> widths -> 1 (the vanilla baseline and the
// second stage of SDR-then-regress pipelines).
struct MlpFit {
  Mlp head;
  std::vector<double> loss_trace;
  double final_train_mse = 0.0;
};

MlpFit train_mlp(const Matrix& input, const Vector& y, Eigen::Index h,
                 const TrainConfig& config);

struct ToyDiagnostic {
  Eigen::Index q = 0;
  double cosine_projection = 0.0;
  double cosine_leading_eigvec = 0.0;
};

inline TrainConfig toy_train_config() {
  TrainConfig cfg;
  cfg.iterations = 3000;
  return cfg;
}

struct ToyConfig {
  TrainConfig train = toy_train_config();
  Eigen::Index hidden = 64;
};

// Trains y = (b0^T x)^3 + noise with a rank-q factorized first layer
// W1 = W11 W12 (no orthonormality) for each q and reports the two cosines.
std::vector<ToyDiagnostic> toy_diagnostics(Eigen::Index n,
                                           const std::vector<Eigen::Index>& q_range,
                                           RngStream& stream,
                                           const ToyConfig& config = {});

// "drnn-model/1" documents.
nlohmann::json model_to_json(const Model& model, const TrainConfig& config);
Model model_from_json(const nlohmann::json& doc);

std::string optimizer_name(const OptimizerSpec& spec);

}  // namespace drnn
