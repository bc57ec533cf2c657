#include "drnn/io.hpp"

#include <charconv>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "drnn/errors.hpp"

namespace drnn {

namespace fs = std::filesystem;

void write_file_atomic(const std::string& path, const std::string& contents) {
  const fs::path target(path);
  if (target.has_parent_path()) {
    std::error_code ec;
    fs::create_directories(target.parent_path(), ec);
    if (ec) throw IoError("cannot create directory '" + target.parent_path().string() + "'");
  }
  const fs::path tmp = target.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write '" + path + "'");
    out << contents;
    out.flush();
    if (!out) {
      out.close();
      std::error_code ec;
      fs::remove(tmp, ec);
      throw IoError("write failed for '" + path + "'");
    }
  }
  std::error_code ec;
  fs::rename(tmp, target, ec);
  if (ec) {
    fs::remove(tmp, ec);
    throw IoError("cannot move output into place at '" + path + "'");
  }
}

std::string json_text(const nlohmann::json& doc) { return doc.dump(2) + "\n"; }

std::string format_double(double v) {
  char buf[64];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  if (ec != std::errc()) return "nan";
  return std::string(buf, ptr);
}

std::string dataset_to_csv(const Dataset& data, const std::string& target) {
  std::ostringstream out;
  for (Eigen::Index j = 0; j < data.p(); ++j) {
    const bool named = j < static_cast<Eigen::Index>(data.column_names.size());
    out << (named ? data.column_names[static_cast<std::size_t>(j)] : "x" + std::to_string(j + 1))
        << ',';
  }
  out << target << '\n';
  for (Eigen::Index i = 0; i < data.n(); ++i) {
    for (Eigen::Index j = 0; j < data.p(); ++j) out << format_double(data.x(i, j)) << ',';
    out << format_double(data.y(i)) << '\n';
  }
  return out.str();
}

std::string matrix_to_csv(const Matrix& m, const std::string& column_prefix) {
  std::ostringstream out;
  for (Eigen::Index j = 0; j < m.cols(); ++j) {
    out << (j ? "," : "") << column_prefix << (j + 1);
  }
  out << '\n';
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    for (Eigen::Index j = 0; j < m.cols(); ++j) out << (j ? "," : "") << format_double(m(i, j));
    out << '\n';
  }
  return out.str();
}

std::string sidecar_path(const std::string& data_path) {
  fs::path p(data_path);
  p.replace_extension(".json");
  return p.string();
}

nlohmann::json sidecar_json(const SettingSpec& spec, std::uint64_t seed,
                            const OrthonormalBasis& truth) {
  nlohmann::json rows = nlohmann::json::array();
  for (Eigen::Index i = 0; i < truth.p(); ++i) {
    nlohmann::json row = nlohmann::json::array();
    for (Eigen::Index j = 0; j < truth.d(); ++j) row.push_back(truth.matrix()(i, j));
    rows.push_back(std::move(row));
  }
  nlohmann::json doc = {{"format", "drnn-dataset/1"},
                        {"setting", setting_name(spec.setting)},
                        {"n", spec.n},
                        {"p", spec.p},
                        {"d", spec.d},
                        {"seed", seed},
                        {"target", "y"},
                        {"truth", rows}};
  if (spec.setting == SettingId::kTwo) doc["sigma"] = spec.sigma;
  return doc;
}

std::optional<OrthonormalBasis> read_sidecar_truth(const std::string& data_path) {
  const std::string path = sidecar_path(data_path);
  if (path == data_path || !fs::exists(path)) return std::nullopt;
  std::ifstream in(path);
  if (!in) return std::nullopt;
  nlohmann::json doc;
  try {
    in >> doc;
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError("cannot parse sidecar '" + path + "': " + e.what());
  }
  if (!doc.contains("truth")) return std::nullopt;
  const auto& rows = doc.at("truth");
  const auto p = static_cast<Eigen::Index>(rows.size());
  if (p == 0) return std::nullopt;
  const auto d = static_cast<Eigen::Index>(rows.at(0).size());
  Matrix b(p, d);
  for (Eigen::Index i = 0; i < p; ++i) {
    for (Eigen::Index j = 0; j < d; ++j) {
      b(i, j) = rows.at(static_cast<std::size_t>(i)).at(static_cast<std::size_t>(j)).get<double>();
    }
  }
  return OrthonormalBasis(std::move(b), 1e-8);
}

}  // namespace drnn
