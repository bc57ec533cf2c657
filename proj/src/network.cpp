#include "drnn/network.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <optional>
#include <string>

#include "drnn/errors.hpp"

namespace drnn {
namespace {

struct Tape {
  std::vector<Matrix> pre;   // pre-activation of each layer
  std::vector<Matrix> post;  // post[0] is the input, post[l+1] = relu(pre[l])
};

Vector forward_taped(const Mlp& head, const Matrix& input, Tape* tape) {
  Matrix h = input;
  const std::size_t depth = head.layers.size();
  if (tape) {
    tape->pre.clear();
    tape->post.clear();
    tape->post.push_back(input);
  }
  for (std::size_t l = 0; l < depth; ++l) {
    const DenseLayer& layer = head.layers[l];
    Matrix a = h * layer.weight;
    a.rowwise() += layer.bias.transpose();
    if (l + 1 < depth) {
      h = a.cwiseMax(0.0);
      if (tape) {
        tape->pre.push_back(std::move(a));
        tape->post.push_back(h);
      }
    } else {
      h = std::move(a);
      if (tape) tape->pre.push_back(h);
    }
  }
  return h.col(0);
}

void check_input(const Mlp& head, const Matrix& input) {
  if (head.layers.empty()) throw ValidationError("network has no layers");
  if (input.cols() != head.input_dim()) {
    throw ValidationError("input has " + std::to_string(input.cols()) +
                          " columns, network expects " +
                          std::to_string(head.input_dim()));
  }
}

// Backward pass from d loss / d output.
void backward(const Mlp& head, const Tape& tape, const Vector& d_out,
              MlpGrad& grad, bool want_input_grad) {
  const std::size_t depth = head.layers.size();
  grad.layers.resize(depth);
  Matrix delta = d_out;  // n x 1
  for (std::size_t l = depth; l-- > 0;) {
    const Matrix& below = tape.post[l];
    grad.layers[l].weight = below.transpose() * delta;
    grad.layers[l].bias = delta.colwise().sum().transpose();
    if (l == 0 && !want_input_grad) break;
    Matrix d_below = delta * head.layers[l].weight.transpose();
    if (l == 0) {
      grad.input = std::move(d_below);
      break;
    }
    delta = (tape.pre[l - 1].array() > 0.0).select(d_below, 0.0);
  }
}

DenseLayer fan_in_layer(Eigen::Index fan_in, Eigen::Index fan_out,
                    RngStream& stream) {
  DenseLayer layer{Matrix(fan_in, fan_out), Vector(fan_out)};
  const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
  for (Eigen::Index j = 0; j < fan_out; ++j) {
    for (Eigen::Index i = 0; i < fan_in; ++i) layer.weight(i, j) = stream.uniform(-bound, bound);
  }
  for (Eigen::Index j = 0; j < fan_out; ++j) layer.bias(j) = stream.uniform(-bound, bound);
  return layer;
}

Matrix gaussian(Eigen::Index rows, Eigen::Index cols, RngStream& stream) {
  Matrix a(rows, cols);
  for (Eigen::Index j = 0; j < cols; ++j) {
    for (Eigen::Index i = 0; i < rows; ++i) a(i, j) = stream.normal();
  }
  return a;
}

// Gram-Schmidt retraction that survives collapsed columns.
StiefelStep retract_with_fallback(const Matrix& a, RngStream& stream) {
  const Eigen::Index p = a.rows();
  const Eigen::Index d = a.cols();
  Matrix q = Matrix::Zero(p, d);
  Matrix r = Matrix::Zero(d, d);
  int rerandomized = 0;
  const double scale = std::max(1.0, a.colwise().norm().maxCoeff());
  for (Eigen::Index j = 0; j < d; ++j) {
    Vector v = a.col(j);
    for (int pass = 0; pass < 2; ++pass) {
      const Vector c = q.leftCols(j).transpose() * v;
      r.col(j).head(j) += c;
      v -= q.leftCols(j) * c;
    }
    double norm = v.norm();
    if (norm <= 1e-12 * scale) {
      ++rerandomized;
      v = gaussian(p, 1, stream).col(0);
      for (int pass = 0; pass < 2; ++pass) v -= q.leftCols(j) * (q.leftCols(j).transpose() * v);
      norm = 0.0;
      v.normalize();
    } else {
      v /= norm;
    }
    r(j, j) = norm;
    q.col(j) = v;
  }
  return {OrthonormalBasis(std::move(q), 1e-10), std::move(r), rerandomized};
}

double variance_of(const Vector& y) {
  if (y.size() < 2) return 0.0;
  return (y.array() - y.mean()).square().sum() / static_cast<double>(y.size() - 1);
}

struct ResponseScale {
  double mean = 0.0;
  double sd = 1.0;
};

ResponseScale response_scale(const Vector& y, bool enabled) {
  ResponseScale s;
  if (!enabled) return s;
  s.mean = y.mean();
  const double var = variance_of(y);
  s.sd = var > 0.0 ? std::sqrt(var) : 1.0;
  return s;
}

void fold_scale(Mlp& head, const ResponseScale& s) {
  DenseLayer& out = head.layers.back();
  out.weight *= s.sd;
  out.bias = out.bias * s.sd;
  out.bias.array() += s.mean;
}

std::vector<Eigen::Index> batch_rows(Eigen::Index n, std::size_t batch,
                                     RngStream& stream,
                                     std::vector<Eigen::Index>& perm) {
  if (batch == 0 || static_cast<Eigen::Index>(batch) >= n) return {};
  if (perm.size() != static_cast<std::size_t>(n)) {
    perm.resize(static_cast<std::size_t>(n));
    std::iota(perm.begin(), perm.end(), Eigen::Index{0});
  }
  // Partial Fisher-Yates.
  for (std::size_t k = 0; k < batch; ++k) {
    const std::size_t j = k + stream.index(perm.size() - k);
    std::swap(perm[k], perm[j]);
  }
  return {perm.begin(), perm.begin() + static_cast<std::ptrdiff_t>(batch)};
}

Matrix take_rows(const Matrix& m, const std::vector<Eigen::Index>& rows) {
  Matrix out(static_cast<Eigen::Index>(rows.size()), m.cols());
  for (std::size_t k = 0; k < rows.size(); ++k) out.row(static_cast<Eigen::Index>(k)) = m.row(rows[k]);
  return out;
}

Vector take_rows(const Vector& v, const std::vector<Eigen::Index>& rows) {
  Vector out(static_cast<Eigen::Index>(rows.size()));
  for (std::size_t k = 0; k < rows.size(); ++k) out(static_cast<Eigen::Index>(k)) = v(rows[k]);
  return out;
}

void step_head(Mlp& head, const MlpGrad& grad, OptimizerState& state,
               std::size_t first_slot, double lr) {
  std::size_t slot = first_slot;
  for (std::size_t l = 0; l < head.layers.size(); ++l) {
    head.layers[l].weight += state.displacement(slot++, grad.layers[l].weight, lr);
    head.layers[l].bias += state.displacement(slot++, grad.layers[l].bias, lr);
  }
}

[[noreturn]] void diverge(std::size_t iteration, const std::vector<double>& trace) {
  throw DivergenceError("training diverged at iteration " +
                            std::to_string(iteration) + " (non-finite loss)",
                        iteration, trace);
}

std::vector<Eigen::Index> head_widths(Eigen::Index in, Eigen::Index h) {
  return {in, h, h / 2, 1};
}

void validate_width(Eigen::Index h) {
  if (h < 2 || h % 2 != 0) {
    throw ValidationError("hidden width h must be even and >= 2, got " + std::to_string(h));
  }
}

nlohmann::json matrix_json(const Matrix& m) {
  nlohmann::json data = nlohmann::json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    for (Eigen::Index j = 0; j < m.cols(); ++j) data.push_back(m(i, j));
  }
  return {{"rows", m.rows()}, {"cols", m.cols()}, {"data", data}};
}

Matrix matrix_from_json(const nlohmann::json& j) {
  const auto rows = j.at("rows").get<Eigen::Index>();
  const auto cols = j.at("cols").get<Eigen::Index>();
  const auto& data = j.at("data");
  if (static_cast<Eigen::Index>(data.size()) != rows * cols) {
    throw ValidationError("model JSON: matrix data length does not match shape");
  }
  Matrix m(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i) {
    for (Eigen::Index k = 0; k < cols; ++k) m(i, k) = data.at(static_cast<std::size_t>(i * cols + k)).get<double>();
  }
  return m;
}

}  // namespace

Eigen::Index Mlp::input_dim() const {
  return layers.empty() ? 0 : layers.front().weight.rows();
}

Eigen::Index Mlp::parameter_count() const {
  Eigen::Index total = 0;
  for (const auto& l : layers) total += l.weight.size() + l.bias.size();
  return total;
}

Vector Mlp::forward(const Matrix& input) const {
  check_input(*this, input);
  return forward_taped(*this, input, nullptr);
}

Mlp Mlp::fan_in_init(const std::vector<Eigen::Index>& widths, RngStream& stream) {
  if (widths.size() < 2) throw ValidationError("need at least two widths");
  Mlp mlp;
  for (std::size_t l = 0; l + 1 < widths.size(); ++l) {
    mlp.layers.push_back(fan_in_layer(widths[l], widths[l + 1], stream));
  }
  return mlp;
}

double mlp_loss_and_grad(const Mlp& head, const Matrix& input, const Vector& y,
                         MlpGrad& grad, bool want_input_grad) {
  check_input(head, input);
  if (input.rows() != y.size() || y.size() == 0) {
    throw ValidationError("input rows and response length differ");
  }
  Tape tape;
  const Vector out = forward_taped(head, input, &tape);
  const Vector resid = out - y;
  const double n = static_cast<double>(y.size());
  const double loss = resid.squaredNorm() / n;
  if (!std::isfinite(loss)) return loss;
  backward(head, tape, (2.0 / n) * resid, grad, want_input_grad);
  return loss;
}

Eigen::Index Model::parameter_count() const {
  return basis.matrix().size() + head.parameter_count();
}

std::vector<std::pair<Eigen::Index, Eigen::Index>> Model::layer_shapes() const {
  std::vector<std::pair<Eigen::Index, Eigen::Index>> shapes{{p(), d()}};
  for (const auto& l : head.layers) shapes.emplace_back(l.weight.rows(), l.weight.cols());
  return shapes;
}

Model init_model(Eigen::Index p, Eigen::Index d, Eigen::Index h,
                 RngStream& stream) {
  if (d < 1 || d > p) {
    throw ValidationError("init_model requires 1 <= d <= p, got d=" +
                          std::to_string(d) + ", p=" + std::to_string(p));
  }
  validate_width(h);
  Model model;
  model.basis = OrthonormalBasis(thin_qr(gaussian(p, d, stream)).q, 1e-12);
  model.head = Mlp::fan_in_init(head_widths(d, h), stream);
  return model;
}

Vector forward(const Model& model, const Matrix& x) {
  if (x.cols() != model.p()) {
    throw ValidationError("forward: X has " + std::to_string(x.cols()) +
                          " columns, model expects p=" + std::to_string(model.p()));
  }
  return model.head.forward(x * model.basis.matrix());
}

LossAndGrad loss_and_grad(const Model& model, const Matrix& x, const Vector& y) {
  if (x.cols() != model.p()) {
    throw ValidationError("loss_and_grad: X column count differs from p");
  }
  LossAndGrad out;
  const Matrix z = x * model.basis.matrix();
  out.loss = mlp_loss_and_grad(model.head, z, y, out.grad.head, true);
  if (!std::isfinite(out.loss)) {
    throw DivergenceError("loss_and_grad: non-finite forward values", 0, {});
  }
  out.grad.basis = x.transpose() * out.grad.head.input;
  return out;
}

OptimizerState::OptimizerState(OptimizerSpec spec) : spec_(std::move(spec)) {}

void OptimizerState::begin_step() { ++step_; }

Eigen::ArrayXd OptimizerState::displacement_flat(
    std::size_t slot, const Eigen::Ref<const Eigen::ArrayXd>& grad, double lr) {
  if (slot >= first_.size()) {
    first_.resize(slot + 1);
    second_.resize(slot + 1);
  }
  Eigen::ArrayXd& m = first_[slot];
  if (m.size() != grad.size()) m = Eigen::ArrayXd::Zero(grad.size());
  if (const auto* adam = std::get_if<AdamConfig>(&spec_)) {
    Eigen::ArrayXd& v = second_[slot];
    if (v.size() != grad.size()) v = Eigen::ArrayXd::Zero(grad.size());
    m = adam->beta1 * m + (1.0 - adam->beta1) * grad;
    v = adam->beta2 * v + (1.0 - adam->beta2) * grad.square();
    const double t = static_cast<double>(std::max(step_, 1L));
    const double c1 = 1.0 - std::pow(adam->beta1, t);
    const double c2 = 1.0 - std::pow(adam->beta2, t);
    return -lr * (m / c1) / ((v / c2).sqrt() + adam->epsilon);
  }
  const auto& sgd = std::get<SgdConfig>(spec_);
  m = sgd.momentum * m + grad;
  return -lr * m;
}

Matrix OptimizerState::displacement(std::size_t slot, const Matrix& grad, double lr) {
  const Eigen::Map<const Eigen::ArrayXd> flat(grad.data(), grad.size());
  Eigen::ArrayXd step = displacement_flat(slot, flat, lr);
  return Eigen::Map<const Matrix>(step.data(), grad.rows(), grad.cols());
}

Vector OptimizerState::displacement(std::size_t slot, const Vector& grad, double lr) {
  return displacement_flat(slot, grad.array(), lr).matrix();
}

StiefelStep retract(const Matrix& ambient, RngStream& stream) {
  try {
    QrResult qr = thin_qr(ambient);
    return {OrthonormalBasis(std::move(qr.q), 1e-10), std::move(qr.r), 0};
  } catch (const RankDeficiencyError&) {
    return retract_with_fallback(ambient, stream);
  }
}

StiefelStep stiefel_step(const OrthonormalBasis& basis,
                         const Matrix& ambient_grad, OptimizerState& state,
                         std::size_t slot, double lr, RngStream& stream) {
  if (ambient_grad.rows() != basis.p() || ambient_grad.cols() != basis.d()) {
    throw ValidationError("stiefel_step: gradient shape differs from basis");
  }
  const Matrix ambient = basis.matrix() + state.displacement(slot, ambient_grad, lr);
  return retract(ambient, stream);
}

void validate(const TrainConfig& config) {
  if (config.iterations < 1) throw ValidationError("iterations must be >= 1");
  if (!(config.learning_rate > 0.0) || !std::isfinite(config.learning_rate)) {
    throw ValidationError("learning_rate must be > 0");
  }
  if (!(config.basis_lr_scale > 0.0) || !std::isfinite(config.basis_lr_scale)) {
    throw ValidationError("basis_lr_scale must be > 0");
  }
  if (!(config.final_lr_fraction >= 0.0 && config.final_lr_fraction <= 1.0)) {
    throw ValidationError("final_lr_fraction must be in [0, 1]");
  }
  if (config.restarts < 1) throw ValidationError("restarts must be >= 1");
  if (!(config.pilot_fraction > 0.0 && config.pilot_fraction <= 1.0)) {
    throw ValidationError("pilot_fraction must be in (0, 1]");
  }
  if (const auto* sgd = std::get_if<SgdConfig>(&config.optimizer)) {
    if (sgd->momentum < 0.0 || sgd->momentum >= 1.0) {
      throw ValidationError("sgd momentum must be in [0, 1)");
    }
  }
}

Eigen::Index default_width(Eigen::Index n) { return n < 1000 ? 64 : 128; }

double scheduled_learning_rate(const TrainConfig& config, std::size_t t) {
  if (!config.cosine_decay || config.iterations < 2) return config.learning_rate;
  const double frac = static_cast<double>(t) / static_cast<double>(config.iterations - 1);
  const double floor = config.final_lr_fraction;
  return config.learning_rate * (floor + (1.0 - floor) * 0.5 * (1.0 + std::cos(std::numbers::pi * frac)));
}

namespace {

struct Run {
  Model model;
  OptimizerState state;
  RngStream stream;
  std::vector<double> trace;
  double max_orthonormality_error = 0.0;
  int retraction_warnings = 0;
};

Run start_run(Model model, const TrainConfig& config, std::uint64_t stream_id) {
  Run run{std::move(model), OptimizerState(config.optimizer),
          RngStream(config.seed, stream_id).derive("train"), {}, 0.0, 0};
  run.trace.reserve(config.iterations);
  run.max_orthonormality_error = run.model.basis.orthonormality_error();
  return run;
}

void advance(Run& run, const Dataset& data, const Vector& y, double var,
             const TrainConfig& config, std::size_t iterations) {
  std::vector<Eigen::Index> perm;
  Model& model = run.model;
  for (std::size_t k = 0; k < iterations; ++k) {
    const double lr = scheduled_learning_rate(config, run.trace.size());
    const double basis_lr = lr * config.basis_lr_scale;
    const auto rows = batch_rows(data.n(), config.batch_size, run.stream, perm);
    LossAndGrad lg;
    try {
      lg = rows.empty() ? loss_and_grad(model, data.x, y)
                        : loss_and_grad(model, take_rows(data.x, rows), take_rows(y, rows));
    } catch (const DivergenceError&) {
      diverge(run.trace.size(), run.trace);
    }
    run.trace.push_back(lg.loss * var);

    run.state.begin_step();
    StiefelStep step = stiefel_step(model.basis, lg.grad.basis, run.state, 0,
                                    basis_lr, run.stream);
    step_head(model.head, lg.grad.head, run.state, 1, lr);
    model.basis = std::move(step.basis);
    run.retraction_warnings += step.rerandomized_columns;
    run.max_orthonormality_error =
        std::max(run.max_orthonormality_error, model.basis.orthonormality_error());
  }
}

FitResult finish(Run run, const Dataset& data, const ResponseScale& scale,
                 const TrainConfig& config) {
  FitResult result;
  fold_scale(run.model.head, scale);
  const Vector fitted = forward(run.model, data.x);
  result.final_train_mse = (fitted - data.y).squaredNorm() / static_cast<double>(data.n());
  if (!std::isfinite(result.final_train_mse)) diverge(config.iterations, run.trace);
  result.loss_trace = std::move(run.trace);
  result.max_orthonormality_error = run.max_orthonormality_error;
  result.retraction_warnings = run.retraction_warnings;
  result.basis = run.model.basis;
  result.model = std::move(run.model);
  return result;
}

void check_training_data(const Dataset& data, Eigen::Index p) {
  if (data.x.cols() != p) {
    throw ValidationError("train: data has p=" + std::to_string(data.p()) +
                          " but the model expects " + std::to_string(p));
  }
  if (data.n() != data.y.size() || data.n() == 0) {
    throw ValidationError("train: X rows and y length differ or are zero");
  }
}

}  // namespace

FitResult train(const Dataset& data, Eigen::Index d, const TrainConfig& config) {
  validate(config);
  if (d < 1 || d > data.p()) {
    throw ValidationError("train requires 1 <= d <= p, got d=" + std::to_string(d));
  }
  check_training_data(data, data.p());
  const Eigen::Index h = config.h_override.value_or(default_width(data.n()));
  const ResponseScale scale = response_scale(data.y, config.standardize_response);
  const Vector y = (data.y.array() - scale.mean) / scale.sd;
  const double var = scale.sd * scale.sd;

  const std::size_t pilot = std::clamp<std::size_t>(
      static_cast<std::size_t>(std::ceil(config.pilot_fraction * static_cast<double>(config.iterations))),
      1, config.iterations);
  std::optional<Run> best;
  double best_loss = 0.0;
  double worst_orthonormality = 0.0;
  int warnings = 0;
  for (std::size_t r = 0; r < config.restarts; ++r) {
    RngStream init_stream = RngStream(config.seed, r).derive("init");
    Run run = start_run(init_model(data.p(), d, h, init_stream), config, r);
    advance(run, data, y, var, config, config.restarts > 1 ? pilot : config.iterations);
    worst_orthonormality = std::max(worst_orthonormality, run.max_orthonormality_error);
    warnings += run.retraction_warnings;
    // Compare on the current parameters, not the last pre-step loss.
    const double loss = (forward(run.model, data.x) - y).squaredNorm();
    if (!best || loss < best_loss) {
      best_loss = loss;
      best = std::move(run);
    }
  }
  if (config.restarts > 1) advance(*best, data, y, var, config, config.iterations - pilot);
  best->max_orthonormality_error = std::max(worst_orthonormality, best->max_orthonormality_error);
  best->retraction_warnings = warnings;
  return finish(std::move(*best), data, scale, config);
}

FitResult train_from(const Dataset& data, Model model, const TrainConfig& config) {
  validate(config);
  check_training_data(data, model.p());
  const ResponseScale scale = response_scale(data.y, config.standardize_response);
  const Vector y = (data.y.array() - scale.mean) / scale.sd;
  Run run = start_run(std::move(model), config, 0);
  advance(run, data, y, scale.sd * scale.sd, config, config.iterations);
  return finish(std::move(run), data, scale, config);
}

MlpFit train_mlp(const Matrix& input, const Vector& y_raw, Eigen::Index h,
                 const TrainConfig& config) {
  validate(config);
  validate_width(h);
  if (input.rows() != y_raw.size() || input.rows() == 0) {
    throw ValidationError("train_mlp: input rows and response length differ");
  }
  RngStream init_stream = RngStream(config.seed, 0).derive("mlp-init");
  RngStream stream = RngStream(config.seed, 0).derive("mlp-train");
  MlpFit fit;
  fit.head = Mlp::fan_in_init(head_widths(input.cols(), h), init_stream);
  const ResponseScale scale = response_scale(y_raw, config.standardize_response);
  const Vector y = (y_raw.array() - scale.mean) / scale.sd;
  OptimizerState state(config.optimizer);
  std::vector<Eigen::Index> perm;
  MlpGrad grad;
  for (std::size_t it = 0; it < config.iterations; ++it) {
    const auto rows = batch_rows(input.rows(), config.batch_size, stream, perm);
    const double loss =
        rows.empty() ? mlp_loss_and_grad(fit.head, input, y, grad, false)
                     : mlp_loss_and_grad(fit.head, take_rows(input, rows),
                                         take_rows(y, rows), grad, false);
    if (!std::isfinite(loss)) diverge(it, fit.loss_trace);
    fit.loss_trace.push_back(loss * scale.sd * scale.sd);
    state.begin_step();
    step_head(fit.head, grad, state, 0, config.learning_rate);
  }
  fold_scale(fit.head, scale);
  fit.final_train_mse = (fit.head.forward(input) - y_raw).squaredNorm() /
                        static_cast<double>(input.rows());
  return fit;
}

std::vector<ToyDiagnostic> toy_diagnostics(Eigen::Index n,
                                           const std::vector<Eigen::Index>& q_range,
                                           RngStream& stream,
                                           const ToyConfig& config) {
  validate(config.train);
  constexpr Eigen::Index p = 10;
  for (Eigen::Index q : q_range) {
    if (q < 1 || q > p) throw ValidationError("toy q must be in 1..10");
  }
  SettingSpec spec = SettingSpec::defaults(SettingId::kToy, n);
  const Dataset data = generate_setting(spec, stream);
  const Vector b0 = toy_index(p);
  const ResponseScale scale = response_scale(data.y, config.train.standardize_response);
  const Vector y = (data.y.array() - scale.mean) / scale.sd;

  std::vector<ToyDiagnostic> out;
  for (Eigen::Index q : q_range) {
    RngStream init = stream.derive("toy-init-" + std::to_string(q));
    Matrix w11 = gaussian(p, q, init) * std::sqrt(2.0 / p);
    Mlp head = Mlp::fan_in_init({q, config.hidden, config.hidden / 2, 1}, init);
    OptimizerState state(config.train.optimizer);
    MlpGrad grad;
    std::vector<double> trace;
    for (std::size_t it = 0; it < config.train.iterations; ++it) {
      const double loss = mlp_loss_and_grad(head, data.x * w11, y, grad, true);
      if (!std::isfinite(loss)) diverge(it, trace);
      trace.push_back(loss);
      state.begin_step();
      const Matrix g11 = data.x.transpose() * grad.input;
      w11 += state.displacement(0, g11, config.train.learning_rate);
      step_head(head, grad, state, 1, config.train.learning_rate);
    }

    ToyDiagnostic diag;
    diag.q = q;
    // Column space of W11 from its numerically nonzero singular directions.
    const SvdResult s = svd(w11);
    Eigen::Index rank = 0;
    while (rank < s.s.size() && s.s(rank) > 1e-10 * s.s(0)) ++rank;
    const OrthonormalBasis span(s.u.leftCols(rank), 1e-8);
    diag.cosine_projection = cosine_to_subspace(b0, span);
    const Matrix w1 = w11 * head.layers.front().weight;
    const Vector lead = sym_eig(w1 * w1.transpose()).vectors.col(0);
    diag.cosine_leading_eigvec = std::clamp(std::abs(lead.dot(b0)) / b0.norm(), 0.0, 1.0);
    out.push_back(diag);
  }
  return out;
}

std::string optimizer_name(const OptimizerSpec& spec) {
  return std::holds_alternative<AdamConfig>(spec) ? "adam" : "sgd";
}

nlohmann::json model_to_json(const Model& model, const TrainConfig& config) {
  nlohmann::json layers = nlohmann::json::array();
  nlohmann::json widths = nlohmann::json::array({model.p(), model.d()});
  for (const auto& l : model.head.layers) {
    layers.push_back({{"weight", matrix_json(l.weight)},
                      {"bias", std::vector<double>(l.bias.data(), l.bias.data() + l.bias.size())}});
    widths.push_back(l.weight.cols());
  }
  nlohmann::json optimizer = {{"name", optimizer_name(config.optimizer)}};
  if (const auto* adam = std::get_if<AdamConfig>(&config.optimizer)) {
    optimizer["beta1"] = adam->beta1;
    optimizer["beta2"] = adam->beta2;
    optimizer["epsilon"] = adam->epsilon;
  } else {
    optimizer["momentum"] = std::get<SgdConfig>(config.optimizer).momentum;
  }
  return {
      {"version", "drnn-model/1"},
      {"architecture",
       {{"widths", widths},
        {"activation", "relu"},
        {"output_activation", "identity"},
        {"first_layer_bias", false},
        {"parameter_count", model.parameter_count()}}},
      {"basis", matrix_json(model.basis.matrix())},
      {"layers", layers},
      {"config",
       {{"iterations", config.iterations},
        {"learning_rate", config.learning_rate},
        {"optimizer", optimizer},
        {"batch_size", config.batch_size},
        {"seed", config.seed},
        {"standardize_response", config.standardize_response}}},
  };
}

Model model_from_json(const nlohmann::json& doc) {
  if (doc.value("version", "") != "drnn-model/1") {
    throw ValidationError("model JSON: unsupported version");
  }
  Model model;
  model.basis = OrthonormalBasis(matrix_from_json(doc.at("basis")), 1e-8);
  for (const auto& l : doc.at("layers")) {
    DenseLayer layer;
    layer.weight = matrix_from_json(l.at("weight"));
    const auto bias = l.at("bias").get<std::vector<double>>();
    layer.bias = Eigen::Map<const Vector>(bias.data(), static_cast<Eigen::Index>(bias.size()));
    if (layer.bias.size() != layer.weight.cols()) {
      throw ValidationError("model JSON: bias length differs from layer width");
    }
    model.head.layers.push_back(std::move(layer));
  }
  Eigen::Index in = model.d();
  for (const auto& l : model.head.layers) {
    if (l.weight.rows() != in) throw ValidationError("model JSON: layer shapes do not chain");
    in = l.weight.cols();
  }
  if (in != 1) throw ValidationError("model JSON: output width must be 1");
  return model;
}

}  // namespace drnn
