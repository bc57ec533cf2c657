#include "drnn/datagen.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <numbers>
#include <sstream>
#include <string>

#include "drnn/errors.hpp"

namespace drnn {
namespace {

std::vector<std::string> default_names(Eigen::Index p) {
  std::vector<std::string> names;
  for (Eigen::Index j = 0; j < p; ++j) names.push_back("x" + std::to_string(j + 1));
  return names;
}

Matrix setting3_directions() {
  Matrix beta(6, 3);
  beta.col(0) << -2, -1, 0, 1, 2, 3;
  beta.col(1).setOnes();
  beta.col(2) << 1, -1, 1, -1, 1, -1;
  return beta;
}

// Classical Gram-Schmidt in column order; columns of beta are independent.
Matrix gram_schmidt(const Matrix& a) {
  Matrix q = a;
  for (Eigen::Index j = 0; j < a.cols(); ++j) {
    for (int pass = 0; pass < 2; ++pass) {
      for (Eigen::Index k = 0; k < j; ++k) {
        q.col(j) -= q.col(k).dot(q.col(j)) * q.col(k);
      }
    }
    q.col(j).normalize();
  }
  return q;
}

Matrix setting4_covariance() {
  constexpr Eigen::Index p = 10;
  return Matrix::Identity(p, p) - Matrix::Constant(p, p, 1.0 / 20.0);
}

std::string trim(std::string s) {
  const auto first = s.find_first_not_of(" \t\r\"");
  if (first == std::string::npos) return {};
  const auto last = s.find_last_not_of(" \t\r\"");
  return s.substr(first, last - first + 1);
}

std::vector<std::string> split_fields(const std::string& line) {
  std::vector<std::string> out;
  std::string field;
  std::istringstream in(line);
  while (std::getline(in, field, ',')) out.push_back(trim(field));
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

bool parse_double(const std::string& text, double& value) {
  if (text.empty()) return false;
  const char* begin = text.data();
  const char* end = begin + text.size();
  if (*begin == '+') ++begin;
  const auto [ptr, ec] = std::from_chars(begin, end, value);
  return ec == std::errc() && ptr == end && std::isfinite(value);
}

}  // namespace

Dataset Dataset::subset(const std::vector<Eigen::Index>& rows) const {
  Dataset out;
  out.x.resize(static_cast<Eigen::Index>(rows.size()), p());
  out.y.resize(static_cast<Eigen::Index>(rows.size()));
  for (std::size_t k = 0; k < rows.size(); ++k) {
    const auto i = static_cast<Eigen::Index>(k);
    out.x.row(i) = x.row(rows[k]);
    out.y(i) = y(rows[k]);
  }
  out.truth = truth;
  out.column_names = column_names;
  return out;
}

SettingSpec SettingSpec::defaults(SettingId setting, Eigen::Index n) {
  SettingSpec s;
  s.setting = setting;
  s.n = n;
  switch (setting) {
    case SettingId::kOne: s.p = 10; s.d = 1; break;
    case SettingId::kTwo: s.p = 10; s.d = 2; s.sigma = 0.1; break;
    case SettingId::kThree: s.p = 6; s.d = 3; break;
    case SettingId::kFour: s.p = 10; s.d = 4; break;
    case SettingId::kToy: s.p = 10; s.d = 1; break;
  }
  return s;
}

std::string setting_name(SettingId setting) {
  switch (setting) {
    case SettingId::kOne: return "1";
    case SettingId::kTwo: return "2";
    case SettingId::kThree: return "3";
    case SettingId::kFour: return "4";
    case SettingId::kToy: return "toy";
  }
  return "?";
}

SettingId parse_setting(const std::string& text) {
  if (text == "1") return SettingId::kOne;
  if (text == "2") return SettingId::kTwo;
  if (text == "3") return SettingId::kThree;
  if (text == "4") return SettingId::kFour;
  if (text == "toy") return SettingId::kToy;
  throw ValidationError("unknown setting '" + text + "' (expected 1-4 or toy)");
}

void validate(const SettingSpec& spec) {
  auto fail = [&](const std::string& why) {
    throw ValidationError("setting " + setting_name(spec.setting) + ": " + why);
  };
  if (spec.n < 1) fail("n must be positive");
  switch (spec.setting) {
    case SettingId::kOne:
      if (spec.d != 1) fail("d must be 1");
      if (spec.p != 10 && spec.p != 30) fail("p must be 10 or 30");
      break;
    case SettingId::kTwo:
      if (spec.p != 10 || spec.d != 2) fail("requires p = 10, d = 2");
      if (!(spec.sigma > 0.0) || !std::isfinite(spec.sigma)) fail("sigma must be > 0");
      break;
    case SettingId::kThree:
      if (spec.p != 6 || spec.d != 3) fail("requires p = 6, d = 3");
      break;
    case SettingId::kFour:
      if (spec.p != 10) fail("requires p = 10");
      if (spec.d != 4 && spec.d != 6 && spec.d != 8) fail("d must be 4, 6 or 8");
      break;
    case SettingId::kToy:
      if (spec.p != 10 || spec.d != 1) fail("requires p = 10, d = 1");
      break;
  }
}

double regression_function(const SettingSpec& spec, const Vector& x) {
  switch (spec.setting) {
    case SettingId::kOne:
      return std::pow(x(0), 4);
    case SettingId::kTwo:
      return std::log(x(0) + x(0) * x(1));
    case SettingId::kThree: {
      const Matrix beta = setting3_directions();
      const double a = 1.0 + beta.col(0).dot(x);
      const double b = beta.col(1).dot(x);
      const double c = beta.col(2).dot(x);
      return a * a * std::exp(b) + (c > 0.0 ? 5.0 : 0.0);
    }
    case SettingId::kFour: {
      double acc = 0.0;
      for (Eigen::Index i = 0; i < spec.d; ++i) {
        acc += std::exp(x(i)) / (2.0 + std::sin(std::numbers::pi * x(i)));
      }
      return acc;
    }
    case SettingId::kToy: {
      const double t = toy_index(x.size()).dot(x);
      return t * t * t;
    }
  }
  return 0.0;
}

Vector toy_index(Eigen::Index p) {
  Vector b = Vector::Zero(p);
  b(0) = 1.0;
  b(1) = -2.0;
  return b;
}

OrthonormalBasis setting_truth(const SettingSpec& spec) {
  validate(spec);
  switch (spec.setting) {
    case SettingId::kThree:
      return OrthonormalBasis(gram_schmidt(setting3_directions()), 1e-10);
    case SettingId::kToy:
      return OrthonormalBasis(toy_index(spec.p).normalized(), 1e-10);
    default:
      return OrthonormalBasis(Matrix::Identity(spec.p, spec.d), 1e-10);
  }
}

Dataset generate_setting(const SettingSpec& spec, RngStream& stream) {
  validate(spec);
  const Eigen::Index n = spec.n;
  const Eigen::Index p = spec.p;
  Dataset data;
  data.truth = setting_truth(spec);
  data.column_names = default_names(p);
  data.y.resize(n);

  switch (spec.setting) {
    case SettingId::kOne:
      data.x = Matrix(n, p);
      for (Eigen::Index i = 0; i < n; ++i) {
        data.x.row(i) = sample(stream, dist::StandardNormal{}, p).transpose();
      }
      break;
    case SettingId::kTwo:
      data.x = Matrix(n, p);
      for (Eigen::Index i = 0; i < n; ++i) {
        // x1 (1 + x2) > 0 almost surely; redraw the row otherwise.
        do {
          data.x.row(i) = sample(stream, dist::Uniform{0.0, 1.0}, p).transpose();
        } while (data.x(i, 0) * (1.0 + data.x(i, 1)) < 1e-12);
      }
      break;
    case SettingId::kThree:
      data.x = Matrix(n, p);
      for (Eigen::Index i = 0; i < n; ++i) {
        data.x.row(i) = sample(stream, dist::Uniform{-1.0, 1.0}, p).transpose();
      }
      break;
    case SettingId::kFour:
      try {
        data.x = sample_mvn(stream, Vector::Ones(p), setting4_covariance(), n);
      } catch (const ValidationError& e) {
        throw NumericalError(std::string("internal: setting 4 covariance: ") +
                             e.what());
      }
      break;
    case SettingId::kToy:
      data.x = Matrix(n, p);
      for (Eigen::Index i = 0; i < n; ++i) {
        data.x.row(i) = sample(stream, dist::Uniform{0.0, 1.0}, p).transpose();
      }
      break;
  }

  for (Eigen::Index i = 0; i < n; ++i) {
    data.y(i) = regression_function(spec, data.x.row(i).transpose());
  }

  Vector noise;
  switch (spec.setting) {
    case SettingId::kOne:
      noise = sample(stream, dist::StudentT{5}, n);
      break;
    case SettingId::kTwo:
      noise = spec.sigma * sample(stream, dist::StandardNormal{}, n);
      break;
    case SettingId::kThree:
      noise = sample(stream, dist::ChiSquare{2}, n).array() - 2.0;
      break;
    case SettingId::kFour:
    case SettingId::kToy:
      noise = 0.1 * sample(stream, dist::StandardNormal{}, n);
      break;
  }
  data.y += noise;
  if (!data.y.allFinite()) {
    throw NumericalError("generate_setting produced a non-finite response");
  }
  return data;
}

CsvLoadResult load_csv(const std::string& path,
                       const std::string& target_column) {
  std::ifstream in(path);
  if (!in) throw FileNotFoundError("cannot open data file '" + path + "'");

  std::string line;
  if (!std::getline(in, line)) {
    throw NoUsableRowsError("data file '" + path + "' is empty");
  }
  if (line.size() >= 3 && static_cast<unsigned char>(line[0]) == 0xEF) {
    line.erase(0, 3);  // UTF-8 BOM
  }
  const std::vector<std::string> header = split_fields(line);
  std::size_t target = header.size();
  for (std::size_t j = 0; j < header.size(); ++j) {
    if (header[j] == target_column) target = j;
  }
  if (target == header.size()) {
    throw MissingColumnError("target column '" + target_column +
                             "' not found in '" + path + "'");
  }

  std::vector<std::vector<double>> rows;
  std::size_t dropped = 0;
  while (std::getline(in, line)) {
    if (trim(line).empty()) continue;
    const auto fields = split_fields(line);
    std::vector<double> values(header.size());
    bool ok = fields.size() == header.size();
    for (std::size_t j = 0; ok && j < fields.size(); ++j) {
      ok = parse_double(fields[j], values[j]);
    }
    if (ok) {
      rows.push_back(std::move(values));
    } else {
      ++dropped;
    }
  }
  if (rows.empty()) {
    throw NoUsableRowsError("no usable numeric rows in '" + path + "'");
  }

  CsvLoadResult result;
  result.dropped_rows = dropped;
  result.target_column = target_column;
  const auto n = static_cast<Eigen::Index>(rows.size());
  const auto p = static_cast<Eigen::Index>(header.size() - 1);
  result.data.x.resize(n, p);
  result.data.y.resize(n);
  for (std::size_t j = 0; j < header.size(); ++j) {
    if (j != target) result.data.column_names.push_back(header[j]);
  }
  for (Eigen::Index i = 0; i < n; ++i) {
    Eigen::Index col = 0;
    for (std::size_t j = 0; j < header.size(); ++j) {
      const double v = rows[static_cast<std::size_t>(i)][j];
      if (j == target) {
        result.data.y(i) = v;
      } else {
        result.data.x(i, col++) = v;
      }
    }
  }
  return result;
}

Matrix Standardization::apply(const Matrix& x) const {
  if (x.cols() != mean.size()) {
    throw ValidationError("standardization: column count mismatch");
  }
  Matrix out = x.rowwise() - mean.transpose();
  return out.array().rowwise() / sd.transpose().array();
}

StandardizeResult standardize(const Dataset& data) {
  if (data.n() < 2) throw ValidationError("standardize needs at least 2 rows");
  StandardizeResult result;
  result.transform.mean = column_means(data.x);
  const Matrix centered = data.x.rowwise() - result.transform.mean.transpose();
  result.transform.sd =
      (centered.colwise().squaredNorm() / static_cast<double>(data.n() - 1))
          .cwiseSqrt()
          .transpose();
  for (Eigen::Index j = 0; j < data.p(); ++j) {
    const double sd = result.transform.sd(j);
    const double scale = std::max(1.0, result.transform.mean.cwiseAbs()(j));
    if (!(sd > 1e-14 * scale)) {
      const std::string name = j < static_cast<Eigen::Index>(data.column_names.size())
                                   ? data.column_names[static_cast<std::size_t>(j)]
                                   : "column " + std::to_string(j);
      throw DegenerateColumnError("column '" + name + "' is constant", name);
    }
  }
  result.data = data;
  result.data.x = result.transform.apply(data.x);
  if (data.truth) {
    // B^T x = (diag(sd) B)^T x_std + const, so the span maps through diag(sd).
    result.data.truth = OrthonormalBasis::from_span(result.transform.sd.asDiagonal() * data.truth->matrix());
  }
  return result;
}

}  // namespace drnn
