#pragma once

#include <optional>
#include <string>
#include <vector>

#include "drnn/metrics.hpp"
#include "drnn/numerics.hpp"

namespace drnn {

struct Dataset {
  Matrix x;  // n x p
  Vector y;  // n
  std::optional<OrthonormalBasis> truth;
  std::vector<std::string> column_names;  // covariate names, length p

  Eigen::Index n() const noexcept { return x.rows(); }
  Eigen::Index p() const noexcept { return x.cols(); }

  // Rows selected by `rows`, in order; truth and names carried over.
  Dataset subset(const std::vector<Eigen::Index>& rows) const;
};

enum class SettingId { kOne = 1, kTwo = 2, kThree = 3, kFour = 4, kToy = 0 };

struct SettingSpec {
  SettingId setting = SettingId::kOne;
  Eigen::Index n = 100;
  Eigen::Index p = 10;
  Eigen::Index d = 1;
  double sigma = 0.0;  // noise scale, setting 2 only

  // Defaults for p and d per setting (sigma left at 0).
  static SettingSpec defaults(SettingId setting, Eigen::Index n);
};

std::string setting_name(SettingId setting);
SettingId parse_setting(const std::string& text);

// Throws ValidationError for combinations outside the simulation designs.
void validate(const SettingSpec& spec);

// Noise-free regression function E(y | x) of a setting, evaluated at one
// covariate row.
double regression_function(const SettingSpec& spec, const Vector& x);

// Ground-truth central mean subspace basis for a setting.
OrthonormalBasis setting_truth(const SettingSpec& spec);

// The toy model's unnormalized index vector (1, -2, 0, ..., 0).
Vector toy_index(Eigen::Index p = 10);

Dataset generate_setting(const SettingSpec& spec, RngStream& stream);

struct CsvLoadResult {
  Dataset data;
  std::size_t dropped_rows = 0;
  std::string target_column;
};

CsvLoadResult load_csv(const std::string& path,
                       const std::string& target_column);

struct Standardization {
  Vector mean;
  Vector sd;  // sample sd (n-1 denominator)

  Matrix apply(const Matrix& x) const;
};

struct StandardizeResult {
  Dataset data;
  Standardization transform;
};

// z-scores every covariate column. Throws DegenerateColumnError for a
// constant column.
StandardizeResult standardize(const Dataset& data);

}  // namespace drnn
