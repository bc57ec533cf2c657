#include "drnn/cli.hpp"

#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <numeric>
#include <sstream>

#include <CLI11.hpp>

#include "drnn/classical.hpp"
#include "drnn/datagen.hpp"
#include "drnn/density.hpp"
#include "drnn/errors.hpp"
#include "drnn/io.hpp"
#include "drnn/metrics.hpp"
#include "drnn/network.hpp"
#include "drnn/selection.hpp"

namespace drnn::cli {
namespace {

namespace fs = std::filesystem;

struct Global {
  std::uint64_t seed = 0;
  std::string out;
  std::string format = "json";
  std::size_t threads = 0;  // 0: DRNN_THREADS or 1
};

struct NnFlags {
  std::size_t iterations = 1000;
  double lr = 1e-2;
  std::string optimizer = "adam";
  double momentum = 0.0;
  std::size_t batch = TrainConfig{}.batch_size;
  Eigen::Index h = 0;  // 0: default width rule
  double basis_lr_scale = TrainConfig{}.basis_lr_scale;
  std::size_t restarts = TrainConfig{}.restarts;

  void add(CLI::App& app) {
    app.add_option("--iterations", iterations, "Training iterations")->check(CLI::PositiveNumber);
    app.add_option("--lr", lr, "Learning rate")->check(CLI::PositiveNumber);
    app.add_option("--optimizer", optimizer, "adam or sgd")->check(CLI::IsMember({"adam", "sgd"}));
    app.add_option("--momentum", momentum, "SGD momentum");
    app.add_option("--batch", batch, "Minibatch rows per step (0 = full batch; default 256)");
    app.add_option("--hidden", h, "Hidden width h (architecture p-d-h-h/2-1)");
    app.add_option("--basis-lr-scale", basis_lr_scale, "Basis step size relative to --lr")
        ->check(CLI::PositiveNumber);
    app.add_option("--restarts", restarts, "Random initializations screened by a short pilot run")
        ->check(CLI::PositiveNumber);
  }

  TrainConfig config(std::uint64_t seed) const {
    TrainConfig cfg;
    cfg.iterations = iterations;
    cfg.learning_rate = lr;
    if (optimizer == "sgd") {
      cfg.optimizer = SgdConfig{momentum};
    }
    cfg.batch_size = batch;
    cfg.basis_lr_scale = basis_lr_scale;
    cfg.restarts = restarts;
    cfg.seed = seed;
    if (h > 0) cfg.h_override = h;
    return cfg;
  }
};

struct SdrFlags {
  Eigen::Index slices = 0;
  int mave_iter = 25;
  double mave_c = 2.34;
  double mave_tol = 1e-4;

  void add(CLI::App& app) {
    app.add_option("--slices", slices, "Slice count for SIR/SAVE (default 10 / rule for SAVE)");
    app.add_option("--mave-iter", mave_iter, "MAVE outer iterations");
    app.add_option("--mave-c", mave_c, "MAVE bandwidth multiplier");
    app.add_option("--mave-tol", mave_tol, "MAVE projection-change tolerance");
  }

  void apply(MethodOptions& options) const {
    if (slices > 0) {
      options.sir_slices = SliceSpec{slices};
      options.save_slices = SliceSpec{slices};
    }
    options.mave = {mave_iter, mave_c, mave_tol};
  }
};

std::size_t resolve_threads(std::size_t flag) {
  if (flag > 0) return flag;
  if (const char* env = std::getenv("DRNN_THREADS")) {
    try {
      const long v = std::stol(env);
      if (v >= 1) return static_cast<std::size_t>(v);
    } catch (const std::exception&) {
    }
    throw ValidationError("DRNN_THREADS must be a positive integer");
  }
  return 1;
}

template <typename T>
std::vector<T> parse_list(const std::string& text) {
  std::vector<T> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (item.empty()) continue;
    std::istringstream in(item);
    T v{};
    if (!(in >> v) || !in.eof()) throw ValidationError("cannot parse list item '" + item + "'");
    out.push_back(v);
  }
  return out;
}

std::vector<Eigen::Index> parse_range(const std::string& text) {
  const auto dots = text.find("..");
  if (dots == std::string::npos) return parse_list<Eigen::Index>(text);
  const auto lo = parse_list<Eigen::Index>(text.substr(0, dots));
  const auto hi = parse_list<Eigen::Index>(text.substr(dots + 2));
  if (lo.size() != 1 || hi.size() != 1 || lo[0] > hi[0]) {
    throw ValidationError("bad range '" + text + "' (expected a..b)");
  }
  std::vector<Eigen::Index> out(static_cast<std::size_t>(hi[0] - lo[0] + 1));
  std::iota(out.begin(), out.end(), lo[0]);
  return out;
}

std::vector<std::string> split_names(const std::string& text) {
  std::vector<std::string> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

std::string out_dir(const Global& g) {
  if (g.out.empty()) throw ValidationError("--out is required");
  return g.out;
}

std::string join(const std::string& dir, const std::string& name) {
  return (fs::path(dir) / name).string();
}

nlohmann::json trace_summary(const std::vector<double>& trace) {
  if (trace.empty()) return nullptr;
  const std::size_t q = std::max<std::size_t>(1, trace.size() / 4);
  const double first = std::accumulate(trace.begin(), trace.begin() + static_cast<std::ptrdiff_t>(q), 0.0) / static_cast<double>(q);
  const double last = std::accumulate(trace.end() - static_cast<std::ptrdiff_t>(q), trace.end(), 0.0) / static_cast<double>(q);
  return {{"length", trace.size()},
          {"first", trace.front()},
          {"last", trace.back()},
          {"min", *std::min_element(trace.begin(), trace.end())},
          {"first_quartile_mean", first},
          {"last_quartile_mean", last}};
}

void emit(std::ostream& out, const Global& g, const nlohmann::json& doc,
          const std::string& csv) {
  if (g.format == "csv" && !csv.empty()) {
    out << csv;
  } else {
    out << doc.dump(2) << '\n';
  }
}

// ---------------------------------------------------------------- generate

struct GenerateFlags {
  std::string setting;
  Eigen::Index n = 0;
  Eigen::Index p = 0;
  Eigen::Index d = 0;
  double sigma = -1.0;
};

int cmd_generate(const Global& g, const GenerateFlags& f, std::ostream& out) {
  SettingSpec spec = SettingSpec::defaults(parse_setting(f.setting), f.n > 0 ? f.n : 100);
  if (f.p > 0) spec.p = f.p;
  if (f.d > 0) spec.d = f.d;
  if (spec.setting == SettingId::kTwo) {
    if (f.sigma < 0.0) throw ValidationError("setting 2 requires --sigma");
    spec.sigma = f.sigma;
  } else if (f.sigma >= 0.0) {
    throw ValidationError("--sigma only applies to setting 2");
  }
  validate(spec);
  if (g.out.empty()) throw ValidationError("--out is required");
  RngStream stream(g.seed, 0);
  const Dataset data = generate_setting(spec, stream);
  const nlohmann::json sidecar = sidecar_json(spec, g.seed, *data.truth);
  write_file_atomic(g.out, dataset_to_csv(data));
  write_file_atomic(sidecar_path(g.out), json_text(sidecar));
  emit(out, g, {{"data", g.out}, {"sidecar", sidecar_path(g.out)}, {"n", spec.n}, {"p", spec.p}}, "");
  return kOk;
}

// --------------------------------------------------------------------- fit

struct FitFlags {
  std::string data;
  std::string target = "y";
  std::string method = "nn";
  Eigen::Index d = 1;
  std::string objective = "mean";
  double bandwidth = 0.0;
  std::size_t batch_pairs = 4096;
  NnFlags nn;
  SdrFlags sdr;
};

int cmd_fit(const Global& g, const FitFlags& f, std::ostream& out) {
  const std::string dir = out_dir(g);
  const CsvLoadResult loaded = load_csv(f.data, f.target);
  Dataset data = loaded.data;
  data.truth = read_sidecar_truth(f.data);
  if (f.d < 1 || f.d > data.p()) {
    throw ValidationError("--d must be in 1.." + std::to_string(data.p()));
  }
  const Method method = parse_method(f.method);
  if (f.objective == "density" && method != Method::kNn) {
    throw ValidationError("--objective density requires --method nn");
  }
  const TrainConfig cfg = f.nn.config(g.seed);

  nlohmann::json metrics = {{"method", f.method},
                            {"objective", f.objective},
                            {"d", f.d},
                            {"n", data.n()},
                            {"p", data.p()},
                            {"dropped_rows", loaded.dropped_rows},
                            {"seed", g.seed}};
  OrthonormalBasis basis;
  std::optional<nlohmann::json> model_doc;

  try {
    if (f.objective == "density") {
      KernelConfig kernel;
      if (f.bandwidth > 0.0) kernel.bandwidth = f.bandwidth;
      const DensityFit fit = train_central_subspace(data, f.d, kernel, cfg, {f.batch_pairs});
      basis = fit.basis;
      metrics["bandwidth"] = fit.bandwidth;
      metrics["loss_trace"] = trace_summary(fit.loss_trace);
      metrics["max_orthonormality_error"] = fit.max_orthonormality_error;
      metrics["retraction_warnings"] = fit.retraction_warnings;
    } else if (method == Method::kNn) {
      const FitResult fit = train(data, f.d, cfg);
      basis = fit.basis;
      metrics["train_mse"] = fit.final_train_mse;
      metrics["loss_trace"] = trace_summary(fit.loss_trace);
      metrics["max_orthonormality_error"] = fit.max_orthonormality_error;
      metrics["retraction_warnings"] = fit.retraction_warnings;
      model_doc = model_to_json(fit.model, cfg);
    } else {
      MethodOptions options;
      options.nn = cfg;
      f.sdr.apply(options);
      basis = estimate_basis(method, data.x, data.y, f.d, options);
    }
  } catch (const ValidationError&) {
    throw;
  } catch (const Error& e) {
    throw NumericalError(std::string("method ") + f.method + " failed: " + e.what());
  }

  if (data.truth) {
    if (data.truth->d() == basis.d()) {
      const SubspaceDistanceReport r = procrustes_distance(basis, *data.truth);
      metrics["proj_frobenius"] = r.proj_frobenius;
      metrics["procrustes_frobenius"] = r.procrustes_frobenius;
      metrics["procrustes_spectral"] = r.procrustes_spectral;
    } else {
      metrics["proj_frobenius"] = proj_distance(basis, *data.truth);
    }
  }
  write_file_atomic(join(dir, "basis.csv"), matrix_to_csv(basis.matrix(), "b"));
  if (model_doc) write_file_atomic(join(dir, "model.json"), json_text(*model_doc));
  write_file_atomic(join(dir, "metrics.json"), json_text(metrics));
  emit(out, g, metrics, "");
  return kOk;
}

// --------------------------------------------------------------- benchmark

struct BenchmarkFlags {
  std::string setting;
  std::string n;
  std::string p;
  std::string d;
  std::string sigma;
  std::string methods = "nn,sir,save,phd,mave";
  std::size_t replicates = 20;
  std::size_t iterations = 0;  // 0: per-setting schedule
  bool timings = false;
  SdrFlags sdr;
};

template <typename T>
T pick(const std::vector<T>& v, std::size_t k) {
  return v.size() == 1 ? v[0] : v[k];
}

std::vector<BenchmarkCell> grid_cells(const BenchmarkFlags& f) {
  const SettingId setting = parse_setting(f.setting);
  if (f.n.empty() && f.p.empty() && f.d.empty() && f.sigma.empty()) {
    return standard_cells(setting);
  }
  const auto ns = parse_list<Eigen::Index>(f.n);
  const auto ps = parse_list<Eigen::Index>(f.p);
  const auto ds = parse_list<Eigen::Index>(f.d);
  const auto sigmas = parse_list<double>(f.sigma);
  std::size_t cells = 1;
  for (std::size_t len : {ns.size(), ps.size(), ds.size(), sigmas.size()}) {
    if (len > 1) {
      if (cells > 1 && len != cells) throw ValidationError("grid lists must have equal lengths or length 1");
      cells = len;
    }
  }
  std::vector<BenchmarkCell> out;
  for (std::size_t k = 0; k < cells; ++k) {
    SettingSpec s = SettingSpec::defaults(setting, ns.empty() ? 200 : pick(ns, k));
    if (!ps.empty()) s.p = pick(ps, k);
    if (!ds.empty()) s.d = pick(ds, k);
    if (!sigmas.empty()) s.sigma = pick(sigmas, k);
    validate(s);
    std::ostringstream label;
    label << "n=" << s.n;
    if (!ps.empty()) label << ";p=" << s.p;
    if (!ds.empty()) label << ";d=" << s.d;
    if (!sigmas.empty()) label << ";sigma=" << s.sigma;
    out.push_back({s, label.str()});
  }
  return out;
}

int cmd_benchmark(const Global& g, const BenchmarkFlags& f, std::ostream& out) {
  const std::string dir = out_dir(g);
  BenchmarkGrid grid;
  grid.cells = grid_cells(f);
  for (const auto& m : split_names(f.methods)) grid.methods.push_back(parse_method(m));
  grid.replicates = f.replicates;
  grid.base_seed = g.seed;
  if (f.iterations > 0) grid.nn_iterations = f.iterations;
  f.sdr.apply(grid.options);
  const BenchmarkReport report = run_benchmark(grid, resolve_threads(g.threads));
  const std::string csv = report_to_csv(report);
  write_file_atomic(join(dir, "report.json"), json_text(report_to_json(report, f.timings)));
  write_file_atomic(join(dir, "report.csv"), csv);
  write_file_atomic(join(dir, "plot.csv"), report_plot_csv(report));
  nlohmann::json summary = nlohmann::json::array();
  for (const auto& a : report.aggregates) {
    summary.push_back({{"cell", report.cells[a.cell].label},
                       {"method", method_name(a.method)},
                       {"mean", a.mean},
                       {"std", a.std},
                       {"failures", a.failures}});
  }
  emit(out, g, summary, csv);
  return kOk;
}

// ---------------------------------------------------------------------- cv

struct CvFlags {
  std::string data;
  std::string target = "y";
  std::string d_range = "1..2";
  std::size_t folds = 5;
  double test_fraction = 0.2;
  std::size_t repeats = 1;
  NnFlags nn;
};

int cmd_cv(const Global& g, const CvFlags& f, std::ostream& out) {
  const std::string dir = out_dir(g);
  const Dataset data = load_csv(f.data, f.target).data;
  const auto grid = parse_range(f.d_range);
  for (Eigen::Index d : grid) {
    if (d < 1 || d > data.p()) {
      throw ValidationError("--d-range entry " + std::to_string(d) + " outside 1.." + std::to_string(data.p()));
    }
  }
  if (f.repeats < 1) throw ValidationError("--repeats must be >= 1");

  nlohmann::json runs = nlohmann::json::array();
  std::vector<double> test_errors;
  double d_sum = 0.0;
  for (std::size_t r = 0; r < f.repeats; ++r) {
    RngStream split_stream(g.seed, r);
    const Split parts = split(data, f.test_fraction, split_stream);
    TrainConfig cfg = f.nn.config(RngStream(g.seed, r).derive("cv-trainer").next_u64());
    CvResult result;
    try {
      result = cv_select_d(parts.train, grid, f.folds, cfg, &parts.test);
    } catch (const ValidationError&) {
      throw;
    } catch (const Error& e) {
      throw NumericalError(std::string("cross-validation failed: ") + e.what());
    }
    nlohmann::json run = cv_to_json(result);
    run["repeat"] = r;
    runs.push_back(std::move(run));
    test_errors.push_back(*result.final_test_mse);
    d_sum += static_cast<double>(result.chosen_d);
  }
  const double mean = std::accumulate(test_errors.begin(), test_errors.end(), 0.0) /
                      static_cast<double>(test_errors.size());
  double var = 0.0;
  for (double e : test_errors) var += (e - mean) * (e - mean);
  const double sd = test_errors.size() > 1 ? std::sqrt(var / static_cast<double>(test_errors.size() - 1)) : 0.0;

  nlohmann::json doc = runs.size() == 1 ? runs[0] : nlohmann::json::object();
  doc["runs"] = runs;
  doc["folds"] = f.folds;
  doc["test_fraction"] = f.test_fraction;
  doc["summary"] = {{"repeats", f.repeats},
                    {"mean_test_mse", mean},
                    {"std_test_mse", sd},
                    {"mean_chosen_d", d_sum / static_cast<double>(f.repeats)}};
  write_file_atomic(join(dir, "cv.json"), json_text(doc));
  emit(out, g, doc["summary"], "");
  return kOk;
}

// ----------------------------------------------------------------- compare

struct CompareFlags {
  std::string data;
  std::string target = "y";
  std::string methods = "all";
  Eigen::Index d = 1;
  double test_fraction = 0.2;
  NnFlags nn;
  SdrFlags sdr;
};

int cmd_compare(const Global& g, const CompareFlags& f, std::ostream& out) {
  const std::string dir = out_dir(g);
  const Dataset data = load_csv(f.data, f.target).data;
  if (f.d < 1 || f.d > data.p()) throw ValidationError("--d must be in 1.." + std::to_string(data.p()));
  std::vector<CompareMethod> methods;
  if (f.methods == "all") {
    methods = all_compare_methods();
  } else {
    for (const auto& m : split_names(f.methods)) methods.push_back(parse_compare_method(m));
  }
  MethodOptions options;
  options.nn = f.nn.config(g.seed);
  f.sdr.apply(options);
  const CompareResult result = compare_methods(data, methods, f.d, f.test_fraction, options, g.seed);
  const nlohmann::json doc = compare_to_json(result);
  write_file_atomic(join(dir, "compare.json"), json_text(doc));
  std::ostringstream csv;
  csv << "method,test_mse\n";
  for (const auto& e : result.entries) {
    csv << compare_method_name(e.method) << ',' << (e.test_mse ? format_double(*e.test_mse) : "") << '\n';
  }
  emit(out, g, doc, csv.str());
  return kOk;
}

void add_global(CLI::App& app, Global& g) {
  app.add_option("--seed", g.seed, "Random seed (default 0)");
  app.add_option("--out", g.out, "Output file (generate) or directory");
  app.add_option("--format", g.format, "Console summary format")->check(CLI::IsMember({"json", "csv"}));
  app.add_option("--threads", g.threads, "Worker threads (default DRNN_THREADS or 1)")
      ->check(CLI::PositiveNumber);
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Sufficient dimension reduction with rank-regularized neural networks", "drnn"};
  app.require_subcommand(1);
  Global g;

  GenerateFlags gen;
  auto* generate = app.add_subcommand("generate", "Simulate a dataset with known truth");
  add_global(*generate, g);
  generate->add_option("--setting", gen.setting, "1, 2, 3, 4 or toy")->required();
  generate->add_option("--n", gen.n, "Sample size");
  generate->add_option("--p", gen.p, "Covariate dimension");
  generate->add_option("--d", gen.d, "Structural dimension");
  generate->add_option("--sigma", gen.sigma, "Noise scale (setting 2)");

  FitFlags fit;
  auto* fit_cmd = app.add_subcommand("fit", "Estimate a basis on a CSV dataset");
  add_global(*fit_cmd, g);
  fit_cmd->add_option("--data", fit.data, "Input CSV")->required();
  fit_cmd->add_option("--target", fit.target, "Response column (default y)");
  fit_cmd->add_option("--method", fit.method, "nn, sir, save, phd, mave")
      ->check(CLI::IsMember({"nn", "sir", "save", "phd", "mave"}));
  fit_cmd->add_option("--d", fit.d, "Dimension of the estimated subspace");
  fit_cmd->add_option("--objective", fit.objective, "mean or density")
      ->check(CLI::IsMember({"mean", "density"}));
  fit_cmd->add_option("--bandwidth", fit.bandwidth, "Kernel bandwidth (density; default Silverman)");
  fit_cmd->add_option("--batch-pairs", fit.batch_pairs, "Pairs per step (density)");
  fit.nn.add(*fit_cmd);
  fit.sdr.add(*fit_cmd);

  BenchmarkFlags bench;
  auto* bench_cmd = app.add_subcommand("benchmark", "Replicated simulation benchmark");
  add_global(*bench_cmd, g);
  bench_cmd->add_option("--setting", bench.setting, "1, 2, 3, 4 or toy")->required();
  bench_cmd->add_option("--n", bench.n, "Comma-separated sample sizes");
  bench_cmd->add_option("--p", bench.p, "Comma-separated p values");
  bench_cmd->add_option("--d", bench.d, "Comma-separated d values");
  bench_cmd->add_option("--sigma", bench.sigma, "Comma-separated noise scales");
  bench_cmd->add_option("--methods", bench.methods, "Comma-separated methods");
  bench_cmd->add_option("--replicates", bench.replicates, "Replicates per cell")->check(CLI::PositiveNumber);
  bench_cmd->add_option("--iterations", bench.iterations, "Override the NN iteration schedule");
  bench_cmd->add_flag("--timings", bench.timings, "Include wall times in report.json");
  bench.sdr.add(*bench_cmd);

  CvFlags cv;
  auto* cv_cmd = app.add_subcommand("cv", "Choose d by k-fold cross-validation");
  add_global(*cv_cmd, g);
  cv_cmd->add_option("--data", cv.data, "Input CSV")->required();
  cv_cmd->add_option("--target", cv.target, "Response column (default y)");
  cv_cmd->add_option("--d-range", cv.d_range, "Candidate d values, a..b or a,b,c");
  cv_cmd->add_option("--folds", cv.folds, "Number of folds");
  cv_cmd->add_option("--test-fraction", cv.test_fraction, "Held-out test fraction");
  cv_cmd->add_option("--repeats", cv.repeats, "Repetitions of split + CV");
  cv.nn.add(*cv_cmd);

  CompareFlags cmp;
  auto* cmp_cmd = app.add_subcommand("compare", "SDR-then-regress comparison on a held-out split");
  add_global(*cmp_cmd, g);
  cmp_cmd->add_option("--data", cmp.data, "Input CSV")->required();
  cmp_cmd->add_option("--target", cmp.target, "Response column (default y)");
  cmp_cmd->add_option("--methods", cmp.methods, "all or nn-rr,nn-vanilla,mave,sir,save,phd");
  cmp_cmd->add_option("--d", cmp.d, "Reduced dimension");
  cmp_cmd->add_option("--test-fraction", cmp.test_fraction, "Held-out test fraction");
  cmp.nn.add(*cmp_cmd);
  cmp.sdr.add(*cmp_cmd);

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp& e) {
    out << app.help();
    return kOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << '\n';
    return e.get_exit_code() == 0 ? kOk : kValidation;
  }

  try {
    if (*generate) return cmd_generate(g, gen, out);
    if (*fit_cmd) return cmd_fit(g, fit, out);
    if (*bench_cmd) return cmd_benchmark(g, bench, out);
    if (*cv_cmd) return cmd_cv(g, cv, out);
    if (*cmp_cmd) return cmd_compare(g, cmp, out);
  } catch (const ValidationError& e) {
    err << "error: " << e.what() << '\n';
    return kValidation;
  } catch (const IoError& e) {
    err << "error: " << e.what() << '\n';
    return kIo;
  } catch (const Error& e) {
    err << "error: " << e.what() << '\n';
    return kNumerical;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kNumerical;
  }
  return kValidation;
}

}  // namespace drnn::cli
