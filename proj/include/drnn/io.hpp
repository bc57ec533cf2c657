#pragma once

#include <optional>
#include <string>

#include <nlohmann/json.hpp>

#include "drnn/datagen.hpp"

namespace drnn {

// Writes via a temporary sibling and rename; throws IoError on failure and
// leaves no partial file behind.
void write_file_atomic(const std::string& path, const std::string& contents);

std::string json_text(const nlohmann::json& doc);

// Shortest round-trip decimal representation.
std::string format_double(double v);

// Header x1..xp,y (or the stored column names) then one row per sample.
std::string dataset_to_csv(const Dataset& data, const std::string& target = "y");

std::string matrix_to_csv(const Matrix& m, const std::string& column_prefix);

// Sidecar path for a data file: "data.csv" -> "data.json".
std::string sidecar_path(const std::string& data_path);

nlohmann::json sidecar_json(const SettingSpec& spec, std::uint64_t seed,
                            const OrthonormalBasis& truth);

// Truth basis from a sidecar, if the file exists.
std::optional<OrthonormalBasis> read_sidecar_truth(const std::string& data_path);

}  // namespace drnn
