#include "drnn/selection.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <sstream>
#include <thread>

#include "drnn/errors.hpp"

namespace drnn {
namespace {

std::uint64_t derived_seed(std::uint64_t seed, std::uint64_t stream_id,
                           std::string_view tag) {
  return RngStream(seed, stream_id).derive(tag).next_u64();
}

std::string format_number(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.6f", v);
  return buf;
}

double mean_of(const std::vector<double>& v) {
  return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

double sample_sd(const std::vector<double>& v) {
  if (v.size() < 2) return 0.0;
  const double m = mean_of(v);
  double acc = 0.0;
  for (double x : v) acc += (x - m) * (x - m);
  return std::sqrt(acc / static_cast<double>(v.size() - 1));
}

double mse(const Vector& fitted, const Vector& y) {
  return (fitted - y).squaredNorm() / static_cast<double>(y.size());
}

template <typename Task>
void parallel_for(std::size_t count, std::size_t threads, Task&& task) {
  threads = std::max<std::size_t>(1, std::min(threads, count));
  if (threads == 1) {
    for (std::size_t i = 0; i < count; ++i) task(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::thread> pool;
  for (std::size_t t = 0; t < threads; ++t) {
    pool.emplace_back([&] {
      for (std::size_t i = next++; i < count; i = next++) task(i);
    });
  }
  for (auto& th : pool) th.join();
}

}  // namespace

std::string method_name(Method method) {
  switch (method) {
    case Method::kNn: return "nn";
    case Method::kSir: return "sir";
    case Method::kSave: return "save";
    case Method::kPhd: return "phd";
    case Method::kMave: return "mave";
  }
  return "?";
}

Method parse_method(const std::string& text) {
  for (Method m : {Method::kNn, Method::kSir, Method::kSave, Method::kPhd, Method::kMave}) {
    if (method_name(m) == text) return m;
  }
  throw ValidationError("unknown method '" + text + "' (expected nn, sir, save, phd, mave)");
}

OrthonormalBasis estimate_basis(Method method, const Matrix& x, const Vector& y,
                                Eigen::Index d, const MethodOptions& options) {
  switch (method) {
    case Method::kNn: {
      Dataset data;
      data.x = x;
      data.y = y;
      return train(data, d, options.nn).basis;
    }
    case Method::kSir:
      return sir(x, y, d, options.sir_slices.value_or(SliceSpec{10})).basis;
    case Method::kSave:
      return save(x, y, d, options.save_slices.value_or(default_save_slices(x.rows(), x.cols())))
          .basis;
    case Method::kPhd:
      return phd(x, y, d).basis;
    case Method::kMave:
      return mave(x, y, d, options.mave).basis;
  }
  throw ValidationError("unknown method");
}

std::size_t default_iterations(SettingId setting) {
  switch (setting) {
    case SettingId::kThree: return 2000;
    case SettingId::kFour: return 4000;
    default: return 1000;
  }
}

std::vector<BenchmarkCell> standard_cells(SettingId setting) {
  std::vector<BenchmarkCell> cells;
  auto add = [&](SettingSpec spec, std::string label) {
    cells.push_back({spec, std::move(label)});
  };
  switch (setting) {
    case SettingId::kOne:
      for (auto [n, p] : {std::pair{100, 10}, std::pair{200, 30}, std::pair{300, 30}}) {
        SettingSpec s = SettingSpec::defaults(setting, n);
        s.p = p;
        add(s, "(n,p)=(" + std::to_string(n) + "," + std::to_string(p) + ")");
      }
      break;
    case SettingId::kTwo:
      for (double sigma : {0.1, 0.2, 0.5}) {
        SettingSpec s = SettingSpec::defaults(setting, 200);
        s.sigma = sigma;
        std::ostringstream label;
        label << "sigma=" << sigma;
        add(s, label.str());
      }
      break;
    case SettingId::kThree:
      for (int n : {200, 500, 1000}) add(SettingSpec::defaults(setting, n), "n=" + std::to_string(n));
      break;
    case SettingId::kFour:
      for (auto [n, d] : {std::pair{1000, 4}, std::pair{1500, 6}, std::pair{2000, 8}}) {
        SettingSpec s = SettingSpec::defaults(setting, n);
        s.d = d;
        add(s, "(n,d)=(" + std::to_string(n) + "," + std::to_string(d) + ")");
      }
      break;
    case SettingId::kToy:
      add(SettingSpec::defaults(setting, 1000), "n=1000");
      break;
  }
  return cells;
}

void validate(const BenchmarkGrid& grid) {
  if (grid.replicates < 1) throw ValidationError("replicates must be >= 1");
  if (grid.cells.empty()) throw ValidationError("benchmark grid has no cells");
  if (grid.methods.empty()) throw ValidationError("benchmark grid has no methods");
  for (const auto& cell : grid.cells) validate(cell.spec);
  validate(grid.options.nn);
}

const Aggregate& BenchmarkReport::aggregate(std::size_t cell, Method method) const {
  for (const auto& a : aggregates) {
    if (a.cell == cell && a.method == method) return a;
  }
  throw ValidationError("no aggregate for requested cell/method");
}

std::vector<double> BenchmarkReport::distances(std::size_t cell, Method method) const {
  std::vector<double> out;
  for (const auto& r : rows) {
    if (r.cell == cell && r.method == method && r.distance) out.push_back(*r.distance);
  }
  return out;
}

std::vector<Aggregate> aggregate_rows(const std::vector<ReplicateRow>& rows,
                                      std::size_t cells,
                                      const std::vector<Method>& methods) {
  std::vector<Aggregate> out;
  for (std::size_t c = 0; c < cells; ++c) {
    for (Method m : methods) {
      Aggregate a;
      a.cell = c;
      a.method = m;
      std::vector<double> values;
      for (const auto& r : rows) {
        if (r.cell != c || r.method != m) continue;
        if (r.distance) {
          values.push_back(*r.distance);
        } else {
          ++a.failures;
        }
      }
      a.count = values.size();
      if (!values.empty()) a.mean = mean_of(values);
      a.std_defined = values.size() >= 2;
      a.std = sample_sd(values);
      out.push_back(a);
    }
  }
  return out;
}

BenchmarkReport run_benchmark(const BenchmarkGrid& grid, std::size_t threads) {
  validate(grid);
  BenchmarkReport report;
  report.cells = grid.cells;
  report.methods = grid.methods;
  report.replicates = grid.replicates;
  report.base_seed = grid.base_seed;

  const std::size_t tasks = grid.cells.size() * grid.replicates;
  std::vector<std::vector<ReplicateRow>> slots(tasks);

  parallel_for(tasks, threads, [&](std::size_t task) {
    const std::size_t cell = task / grid.replicates;
    const std::size_t rep = task % grid.replicates;
    const SettingSpec& spec = grid.cells[cell].spec;
    const std::uint64_t stream_id = cell * 1'000'000ULL + rep;
    auto& out = slots[task];

    Dataset data;
    std::string data_error;
    try {
      RngStream stream(grid.base_seed, stream_id);
      data = generate_setting(spec, stream);
    } catch (const std::exception& e) {
      data_error = e.what();
    }

    for (Method method : grid.methods) {
      ReplicateRow row;
      row.cell = cell;
      row.method = method;
      row.replicate = rep;
      if (!data_error.empty()) {
        row.error = "data generation failed: " + data_error;
        out.push_back(std::move(row));
        continue;
      }
      const auto start = std::chrono::steady_clock::now();
      try {
        if (method == Method::kNn) {
          TrainConfig cfg = grid.options.nn;
          cfg.iterations = grid.nn_iterations.value_or(default_iterations(spec.setting));
          cfg.seed = derived_seed(grid.base_seed, stream_id, "nn");
          const FitResult fit = train(data, spec.d, cfg);
          row.max_orthonormality_error = fit.max_orthonormality_error;
          row.distance = proj_distance(fit.basis, *data.truth);
        } else {
          const OrthonormalBasis b = estimate_basis(method, data.x, data.y, spec.d, grid.options);
          row.distance = proj_distance(b, *data.truth);
        }
      } catch (const std::exception& e) {
        row.error = e.what();
      }
      row.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
      out.push_back(std::move(row));
    }
  });

  for (auto& slot : slots) {
    for (auto& row : slot) report.rows.push_back(std::move(row));
  }
  report.aggregates = aggregate_rows(report.rows, report.cells.size(), report.methods);
  return report;
}

nlohmann::json report_to_json(const BenchmarkReport& report, bool include_timings) {
  nlohmann::json cells = nlohmann::json::array();
  for (std::size_t c = 0; c < report.cells.size(); ++c) {
    const auto& s = report.cells[c].spec;
    cells.push_back({{"index", c},
                     {"label", report.cells[c].label},
                     {"setting", setting_name(s.setting)},
                     {"n", s.n},
                     {"p", s.p},
                     {"d", s.d},
                     {"sigma", s.sigma}});
  }
  nlohmann::json methods = nlohmann::json::array();
  for (Method m : report.methods) methods.push_back(method_name(m));

  nlohmann::json rows = nlohmann::json::array();
  for (const auto& r : report.rows) {
    nlohmann::json row = {{"cell", r.cell},
                          {"method", method_name(r.method)},
                          {"replicate", r.replicate},
                          {"distance", r.distance ? nlohmann::json(*r.distance) : nlohmann::json()}};
    if (!r.error.empty()) row["error"] = r.error;
    if (include_timings) row["seconds"] = r.seconds;
    rows.push_back(std::move(row));
  }
  nlohmann::json aggregates = nlohmann::json::array();
  for (const auto& a : report.aggregates) {
    aggregates.push_back({{"cell", a.cell},
                          {"method", method_name(a.method)},
                          {"count", a.count},
                          {"failures", a.failures},
                          {"mean", a.mean},
                          {"std", a.std},
                          {"std_defined", a.std_defined}});
  }
  return {{"format", "drnn-benchmark/1"},
          {"base_seed", report.base_seed},
          {"replicates", report.replicates},
          {"methods", methods},
          {"cells", cells},
          {"rows", rows},
          {"aggregates", aggregates}};
}

std::string report_to_csv(const BenchmarkReport& report) {
  std::ostringstream out;
  out << "setting,cell,method,mean,std\n";
  for (const auto& a : report.aggregates) {
    const auto& cell = report.cells[a.cell];
    out << setting_name(cell.spec.setting) << ",\"" << cell.label << "\","
        << method_name(a.method) << ',' << format_number(a.mean) << ','
        << format_number(a.std) << '\n';
  }
  return out.str();
}

std::string report_plot_csv(const BenchmarkReport& report) {
  std::ostringstream out;
  out << "method,n,mean,std\n";
  for (const auto& a : report.aggregates) {
    out << method_name(a.method) << ',' << report.cells[a.cell].spec.n << ','
        << format_number(a.mean) << ',' << format_number(a.std) << '\n';
  }
  return out.str();
}

Split split(const Dataset& data, double test_fraction, RngStream& stream) {
  if (!(test_fraction > 0.0 && test_fraction < 1.0)) {
    throw ValidationError("test_fraction must be in (0, 1)");
  }
  const Eigen::Index n = data.n();
  if (n < 5) throw ValidationError("split needs at least 5 rows");
  const auto n_test = static_cast<Eigen::Index>(std::ceil(static_cast<double>(n) * test_fraction - 1e-12));
  if (n_test < 1 || n_test >= n) throw ValidationError("split leaves an empty part");
  std::vector<Eigen::Index> perm(static_cast<std::size_t>(n));
  std::iota(perm.begin(), perm.end(), Eigen::Index{0});
  std::shuffle(perm.begin(), perm.end(), stream.engine());
  std::vector<Eigen::Index> test(perm.begin(), perm.begin() + n_test);
  std::vector<Eigen::Index> train(perm.begin() + n_test, perm.end());
  std::sort(test.begin(), test.end());
  std::sort(train.begin(), train.end());
  return {data.subset(train), data.subset(test)};
}

std::vector<std::size_t> fold_assignment(Eigen::Index n, std::size_t k_folds,
                                         RngStream& stream) {
  std::vector<Eigen::Index> perm(static_cast<std::size_t>(n));
  std::iota(perm.begin(), perm.end(), Eigen::Index{0});
  std::shuffle(perm.begin(), perm.end(), stream.engine());
  std::vector<std::size_t> fold(static_cast<std::size_t>(n));
  for (std::size_t k = 0; k < perm.size(); ++k) fold[static_cast<std::size_t>(perm[k])] = k % k_folds;
  return fold;
}

Eigen::Index choose_d(const std::vector<Eigen::Index>& d_grid,
                      const std::vector<double>& mean_mse) {
  if (d_grid.empty() || d_grid.size() != mean_mse.size()) {
    throw ValidationError("choose_d: grid and curve sizes differ");
  }
  const double best = *std::min_element(mean_mse.begin(), mean_mse.end());
  Eigen::Index chosen = 0;
  bool found = false;
  for (std::size_t k = 0; k < d_grid.size(); ++k) {
    if (mean_mse[k] <= best + 1e-9 && (!found || d_grid[k] < chosen)) {
      chosen = d_grid[k];
      found = true;
    }
  }
  return chosen;
}

CvResult cv_select_d(const Dataset& train_data, const std::vector<Eigen::Index>& d_grid,
                     std::size_t k_folds, const TrainConfig& trainer_config,
                     const Dataset* test) {
  validate(trainer_config);
  if (k_folds < 2) throw ValidationError("k_folds must be >= 2");
  if (d_grid.empty()) throw ValidationError("d_grid is empty");
  for (Eigen::Index d : d_grid) {
    if (d < 1 || d > train_data.p()) {
      throw ValidationError("d_grid entry " + std::to_string(d) + " outside 1..p");
    }
  }
  const Eigen::Index n = train_data.n();
  const auto smallest_train = n - (n + static_cast<Eigen::Index>(k_folds) - 1) /
                                      static_cast<Eigen::Index>(k_folds);
  if (static_cast<Eigen::Index>(k_folds) > n || smallest_train < train_data.p()) {
    throw ValidationError("cv folds too small: each training part needs n >= p");
  }

  RngStream fold_stream = RngStream(trainer_config.seed, 0).derive("cv-folds");
  const auto fold = fold_assignment(n, k_folds, fold_stream);
  std::vector<std::vector<Eigen::Index>> held(k_folds), kept(k_folds);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (std::size_t f = 0; f < k_folds; ++f) {
      (fold[static_cast<std::size_t>(i)] == f ? held[f] : kept[f]).push_back(i);
    }
  }

  CvResult result;
  result.d_grid = d_grid;
  for (std::size_t k = 0; k < d_grid.size(); ++k) {
    std::vector<double> errors;
    for (std::size_t f = 0; f < k_folds; ++f) {
      TrainConfig cfg = trainer_config;
      cfg.seed = derived_seed(trainer_config.seed, k * 1000 + f, "cv-fit");
      const Dataset fit_part = train_data.subset(kept[f]);
      const Dataset val_part = train_data.subset(held[f]);
      const FitResult fit = train(fit_part, d_grid[k], cfg);
      errors.push_back(mse(predict(fit.model, val_part.x), val_part.y));
    }
    result.mean_mse.push_back(mean_of(errors));
    result.std_mse.push_back(sample_sd(errors));
    result.fold_mse.push_back(std::move(errors));
  }
  result.chosen_d = choose_d(d_grid, result.mean_mse);

  TrainConfig refit_cfg = trainer_config;
  refit_cfg.seed = derived_seed(trainer_config.seed, 0, "cv-refit");
  const FitResult refit = train(train_data, result.chosen_d, refit_cfg);
  if (refit.basis.d() != result.chosen_d) throw NumericalError("refit dimension mismatch");
  result.refit_basis = refit.basis;
  if (test) result.final_test_mse = mse(predict(refit.model, test->x), test->y);
  return result;
}

nlohmann::json cv_to_json(const CvResult& result) {
  nlohmann::json curve = nlohmann::json::array();
  for (std::size_t k = 0; k < result.d_grid.size(); ++k) {
    curve.push_back({{"d", result.d_grid[k]},
                     {"mean_mse", result.mean_mse[k]},
                     {"std_mse", result.std_mse[k]},
                     {"fold_mse", result.fold_mse[k]}});
  }
  nlohmann::json doc = {{"curve", curve}, {"chosen_d", result.chosen_d}};
  doc["test_mse"] = result.final_test_mse ? nlohmann::json(*result.final_test_mse) : nlohmann::json();
  return doc;
}

std::string compare_method_name(CompareMethod method) {
  switch (method) {
    case CompareMethod::kNnRr: return "nn-rr";
    case CompareMethod::kNnVanilla: return "nn-vanilla";
    case CompareMethod::kMave: return "mave";
    case CompareMethod::kSir: return "sir";
    case CompareMethod::kSave: return "save";
    case CompareMethod::kPhd: return "phd";
  }
  return "?";
}

CompareMethod parse_compare_method(const std::string& text) {
  if (text == "nn") return CompareMethod::kNnRr;
  for (CompareMethod m : {CompareMethod::kNnRr, CompareMethod::kNnVanilla, CompareMethod::kMave,
                          CompareMethod::kSir, CompareMethod::kSave, CompareMethod::kPhd}) {
    if (compare_method_name(m) == text) return m;
  }
  throw ValidationError("unknown compare method '" + text + "'");
}

std::vector<CompareMethod> all_compare_methods() {
  return {CompareMethod::kNnRr, CompareMethod::kNnVanilla, CompareMethod::kMave,
          CompareMethod::kSir, CompareMethod::kSave};
}

CompareResult compare_methods(const Dataset& data, const std::vector<CompareMethod>& methods,
                              Eigen::Index d, double test_fraction,
                              const MethodOptions& options, std::uint64_t seed) {
  if (d < 1 || d > data.p()) throw ValidationError("compare: need 1 <= d <= p");
  validate(options.nn);
  RngStream split_stream = RngStream(seed, 0).derive("compare-split");
  const Split parts = split(data, test_fraction, split_stream);
  CompareResult result;
  result.d = d;
  result.n_train = parts.train.n();
  result.n_test = parts.test.n();
  const Eigen::Index h = options.nn.h_override.value_or(default_width(parts.train.n()));

  for (CompareMethod method : methods) {
    CompareEntry entry;
    entry.method = method;
    TrainConfig cfg = options.nn;
    cfg.seed = derived_seed(seed, static_cast<std::uint64_t>(method), "compare-fit");
    try {
      switch (method) {
        case CompareMethod::kNnRr: {
          const FitResult fit = train(parts.train, d, cfg);
          entry.test_mse = mse(predict(fit.model, parts.test.x), parts.test.y);
          break;
        }
        case CompareMethod::kNnVanilla: {
          const MlpFit fit = train_mlp(parts.train.x, parts.train.y, h, cfg);
          entry.test_mse = mse(fit.head.forward(parts.test.x), parts.test.y);
          break;
        }
        default: {
          const Method sdr = method == CompareMethod::kMave   ? Method::kMave
                             : method == CompareMethod::kSir  ? Method::kSir
                             : method == CompareMethod::kSave ? Method::kSave
                                                              : Method::kPhd;
          const OrthonormalBasis b = estimate_basis(sdr, parts.train.x, parts.train.y, d, options);
          const MlpFit fit = train_mlp(parts.train.x * b.matrix(), parts.train.y, h, cfg);
          entry.test_mse = mse(fit.head.forward(parts.test.x * b.matrix()), parts.test.y);
          break;
        }
      }
    } catch (const std::exception& e) {
      entry.error = e.what();
    }
    result.entries.push_back(std::move(entry));
  }
  return result;
}

nlohmann::json compare_to_json(const CompareResult& result) {
  nlohmann::json entries = nlohmann::json::array();
  for (const auto& e : result.entries) {
    nlohmann::json j = {{"method", compare_method_name(e.method)},
                        {"test_mse", e.test_mse ? nlohmann::json(*e.test_mse) : nlohmann::json()}};
    if (!e.error.empty()) j["error"] = e.error;
    entries.push_back(std::move(j));
  }
  return {{"d", result.d}, {"n_train", result.n_train}, {"n_test", result.n_test},
          {"methods", entries}};
}

}  // namespace drnn
