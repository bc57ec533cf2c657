#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "drnn/classical.hpp"
#include "drnn/datagen.hpp"
#include "drnn/network.hpp"

namespace drnn {

enum class Method { kNn, kSir, kSave, kPhd, kMave };

std::string method_name(Method method);
Method parse_method(const std::string& text);

struct MethodOptions {
  TrainConfig nn;  // iterations overridden per setting in benchmarks
  std::optional<SliceSpec> sir_slices;   // default 10
  std::optional<SliceSpec> save_slices;  // default from n and p
  MaveConfig mave;
};

// Runs one SDR method on (x, y) at dimension d.
OrthonormalBasis estimate_basis(Method method, const Matrix& x, const Vector& y,
                                Eigen::Index d, const MethodOptions& options);

// NN iteration schedule: 1000 for settings 1, 2 and the toy model, 2000 for
// setting 3, 4000 for setting 4.
std::size_t default_iterations(SettingId setting);

struct BenchmarkCell {
  SettingSpec spec;
  std::string label;  // e.g. "n=200" or "(n,p)=(100,10)"
};

// The parameter cells of the simulation table for one setting.
std::vector<BenchmarkCell> standard_cells(SettingId setting);

struct BenchmarkGrid {
  std::vector<BenchmarkCell> cells;
  std::vector<Method> methods;
  std::size_t replicates = 20;
  std::uint64_t base_seed = 0;
  MethodOptions options;
  std::optional<std::size_t> nn_iterations;  // overrides the schedule
};

void validate(const BenchmarkGrid& grid);

struct ReplicateRow {
  std::size_t cell = 0;
  Method method = Method::kNn;
  std::size_t replicate = 0;
  std::optional<double> distance;  // empty when the method failed
  std::string error;
  double seconds = 0.0;
  double max_orthonormality_error = 0.0;  // nn only
};

struct Aggregate {
  std::size_t cell = 0;
  Method method = Method::kNn;
  std::size_t count = 0;     // successful replicates
  std::size_t failures = 0;
  double mean = 0.0;
  double std = 0.0;          // sample sd; 0 when undefined
  bool std_defined = false;  // false when count < 2
};

struct BenchmarkReport {
  std::vector<BenchmarkCell> cells;
  std::vector<Method> methods;
  std::size_t replicates = 0;
  std::uint64_t base_seed = 0;
  std::vector<ReplicateRow> rows;  // ordered by (cell, replicate, method)
  std::vector<Aggregate> aggregates;

  const Aggregate& aggregate(std::size_t cell, Method method) const;
  std::vector<double> distances(std::size_t cell, Method method) const;
};

// Aggregates recomputed from rows (mean and n-1 sd per cell and method).
std::vector<Aggregate> aggregate_rows(const std::vector<ReplicateRow>& rows,
                                      std::size_t cells,
                                      const std::vector<Method>& methods);

// Data for replicate r of cell c comes from stream (base_seed, c*1e6 + r).
BenchmarkReport run_benchmark(const BenchmarkGrid& grid, std::size_t threads = 1);

nlohmann::json report_to_json(const BenchmarkReport& report, bool include_timings = false);
std::string report_to_csv(const BenchmarkReport& report);
std::string report_plot_csv(const BenchmarkReport& report);

struct Split {
  Dataset train;
  Dataset test;
};

// Random disjoint partition with ceil(n * test_fraction) test rows.
Split split(const Dataset& data, double test_fraction, RngStream& stream);

// Fold id per row of a seeded k-fold partition.
std::vector<std::size_t> fold_assignment(Eigen::Index n, std::size_t k_folds,
                                         RngStream& stream);

struct CvResult {
  std::vector<Eigen::Index> d_grid;
  std::vector<double> mean_mse;  // per d
  std::vector<double> std_mse;   // per d, across folds
  std::vector<std::vector<double>> fold_mse;  // [d][fold]
  Eigen::Index chosen_d = 0;
  std::optional<double> final_test_mse;
  std::optional<OrthonormalBasis> refit_basis;
};

// argmin of mean MSE; values within 1e-9 of the minimum tie, smallest d wins.
Eigen::Index choose_d(const std::vector<Eigen::Index>& d_grid,
                      const std::vector<double>& mean_mse);

CvResult cv_select_d(const Dataset& train, const std::vector<Eigen::Index>& d_grid,
                     std::size_t k_folds, const TrainConfig& trainer_config,
                     const Dataset* test = nullptr);

nlohmann::json cv_to_json(const CvResult& result);

// SDR-then-regress comparison on a held-out split.
enum class CompareMethod { kNnRr, kNnVanilla, kMave, kSir, kSave, kPhd };

std::string compare_method_name(CompareMethod method);
CompareMethod parse_compare_method(const std::string& text);
std::vector<CompareMethod> all_compare_methods();

struct CompareEntry {
  CompareMethod method = CompareMethod::kNnRr;
  std::optional<double> test_mse;
  std::string error;
};

struct CompareResult {
  Eigen::Index d = 0;
  Eigen::Index n_train = 0;
  Eigen::Index n_test = 0;
  std::vector<CompareEntry> entries;
};

CompareResult compare_methods(const Dataset& data, const std::vector<CompareMethod>& methods,
                              Eigen::Index d, double test_fraction,
                              const MethodOptions& options, std::uint64_t seed);

nlohmann::json compare_to_json(const CompareResult& result);

}  // namespace drnn
