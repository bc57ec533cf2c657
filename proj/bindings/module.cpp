#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "drnn/classical.hpp"
#include "drnn/cli.hpp"
#include "drnn/datagen.hpp"
#include "drnn/density.hpp"
#include "drnn/errors.hpp"
#include "drnn/metrics.hpp"
#include "drnn/network.hpp"
#include "drnn/selection.hpp"

#include <sstream>

namespace py = pybind11;
using namespace drnn;

namespace {

Dataset make_dataset(const Matrix& x, const Vector& y) {
  if (x.rows() != y.size()) throw ValidationError("x rows and y length differ");
  Dataset data;
  data.x = x;
  data.y = y;
  return data;
}

TrainConfig make_config(std::size_t iterations, double lr, std::uint64_t seed,
                        std::size_t restarts, std::optional<Eigen::Index> hidden) {
  TrainConfig cfg;
  cfg.iterations = iterations;
  cfg.learning_rate = lr;
  cfg.seed = seed;
  cfg.restarts = restarts;
  cfg.h_override = hidden;
  return cfg;
}

py::dict generate(const std::string& setting, Eigen::Index n, std::optional<Eigen::Index> p,
                  std::optional<Eigen::Index> d, std::optional<double> sigma, std::uint64_t seed) {
  SettingSpec spec = SettingSpec::defaults(parse_setting(setting), n);
  if (p) spec.p = *p;
  if (d) spec.d = *d;
  if (sigma) {
    if (spec.setting != SettingId::kTwo) throw ValidationError("sigma only applies to setting 2");
    spec.sigma = *sigma;
  }
  validate(spec);
  RngStream stream(seed, 0);
  const Dataset data = generate_setting(spec, stream);
  py::dict out;
  out["x"] = data.x;
  out["y"] = data.y;
  out["truth"] = data.truth->matrix();
  return out;
}

py::dict fit_nn(const Matrix& x, const Vector& y, Eigen::Index d, std::size_t iterations,
                double lr, std::uint64_t seed, std::size_t restarts,
                std::optional<Eigen::Index> hidden) {
  const FitResult fit =
      train(make_dataset(x, y), d, make_config(iterations, lr, seed, restarts, hidden));
  py::dict out;
  out["basis"] = fit.basis.matrix();
  out["loss_trace"] = fit.loss_trace;
  out["train_mse"] = fit.final_train_mse;
  out["max_orthonormality_error"] = fit.max_orthonormality_error;
  out["model_json"] = model_to_json(fit.model, make_config(iterations, lr, seed, restarts, hidden)).dump();
  return out;
}

Matrix classical(const std::string& method, const Matrix& x, const Vector& y, Eigen::Index d,
                 std::optional<Eigen::Index> slices) {
  MethodOptions options;
  if (slices) {
    options.sir_slices = SliceSpec{*slices};
    options.save_slices = SliceSpec{*slices};
  }
  const Method m = parse_method(method);
  if (m == Method::kNn) throw ValidationError("use fit_nn for the neural estimator");
  return estimate_basis(m, x, y, d, options).matrix();
}

py::dict fit_density(const Matrix& x, const Vector& y, Eigen::Index d, std::size_t iterations,
                     double lr, std::uint64_t seed, std::optional<double> bandwidth,
                     std::size_t batch_pairs) {
  KernelConfig kernel;
  kernel.bandwidth = bandwidth;
  TrainConfig cfg = make_config(iterations, lr, seed, 1, std::nullopt);
  const DensityFit fit = train_central_subspace(make_dataset(x, y), d, kernel, cfg, {batch_pairs});
  py::dict out;
  out["basis"] = fit.basis.matrix();
  out["loss_trace"] = fit.loss_trace;
  out["bandwidth"] = fit.bandwidth;
  return out;
}

py::dict cv(const Matrix& x, const Vector& y, const std::vector<Eigen::Index>& d_grid,
            std::size_t folds, std::size_t iterations, double lr, std::uint64_t seed) {
  const CvResult r = cv_select_d(make_dataset(x, y), d_grid, folds,
                                 make_config(iterations, lr, seed, TrainConfig{}.restarts, std::nullopt), nullptr);
  py::dict out;
  out["d_grid"] = r.d_grid;
  out["mean_mse"] = r.mean_mse;
  out["std_mse"] = r.std_mse;
  out["chosen_d"] = r.chosen_d;
  return out;
}

py::tuple run_cli(const std::vector<std::string>& args) {
  std::ostringstream out;
  std::ostringstream err;
  const int code = cli::run(args, out, err);
  return py::make_tuple(code, out.str(), err.str());
}

}  // namespace

PYBIND11_MODULE(_drnn, m) {
  m.doc() = "Sufficient dimension reduction via rank-regularized neural networks";

  auto base = py::register_exception<Error>(m, "DrnnError", PyExc_RuntimeError);
  py::register_exception<ValidationError>(m, "ValidationError", base.ptr());
  py::register_exception<IoError>(m, "IoError", base.ptr());
  py::register_exception<NumericalError>(m, "NumericalError", base.ptr());

  m.def("generate", &generate, py::arg("setting"), py::arg("n"), py::arg("p") = py::none(),
        py::arg("d") = py::none(), py::arg("sigma") = py::none(), py::arg("seed") = 0,
        "Simulate one of the benchmark settings; returns dict(x, y, truth).");
  m.def("fit_nn", &fit_nn, py::arg("x"), py::arg("y"), py::arg("d"),
        py::arg("iterations") = 1000, py::arg("lr") = 1e-2, py::arg("seed") = 0,
        py::arg("restarts") = TrainConfig{}.restarts, py::arg("hidden") = py::none());
  m.def("classical", &classical, py::arg("method"), py::arg("x"), py::arg("y"), py::arg("d"),
        py::arg("slices") = py::none(), "Basis from sir, save, phd or mave.");
  m.def("fit_density", &fit_density, py::arg("x"), py::arg("y"), py::arg("d"),
        py::arg("iterations") = 1000, py::arg("lr") = 1e-2, py::arg("seed") = 0,
        py::arg("bandwidth") = py::none(), py::arg("batch_pairs") = 4096);
  m.def("cv_select_d", &cv, py::arg("x"), py::arg("y"), py::arg("d_grid"), py::arg("folds") = 5,
        py::arg("iterations") = 1000, py::arg("lr") = 1e-2, py::arg("seed") = 0);
  m.def(
      "proj_distance",
      [](const Matrix& a, const Matrix& b) {
        return proj_distance(OrthonormalBasis::from_span(a), OrthonormalBasis::from_span(b));
      },
      py::arg("b1"), py::arg("b2"), "Frobenius distance between the two projections.");
  m.def(
      "procrustes_distance",
      [](const Matrix& a, const Matrix& b0) {
        const auto r = procrustes_distance(OrthonormalBasis(a), OrthonormalBasis(b0));
        return py::make_tuple(r.procrustes_frobenius, r.procrustes_spectral);
      },
      py::arg("b"), py::arg("b0"));
  m.def("run_cli", &run_cli, py::arg("args"),
        "Run the drnn command line in-process; returns (exit_code, stdout, stderr).");
}
