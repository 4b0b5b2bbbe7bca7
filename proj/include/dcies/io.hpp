#pragma once

// File formats: codes / factors CSV, factor-spec JSON, split CSV, and
// importance matrices as CSV with a JSON sidecar.

#include <json.hpp>

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "dcies/core.hpp"

namespace dcies::io {

struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;
};

CsvTable read_csv(const std::filesystem::path& path);
Matrix numeric_matrix(const CsvTable& table, const std::filesystem::path& source);

std::vector<FactorSpec> read_factor_specs(const std::filesystem::path& path);
std::vector<FactorSpec> factor_specs_from_json(const nlohmann::json& j);
nlohmann::json factor_specs_to_json(const std::vector<FactorSpec>& specs);

void write_codes(const std::filesystem::path& path, const Matrix& codes);
void write_factors(const std::filesystem::path& path, const Matrix& factors, const std::vector<FactorSpec>& specs);
void write_factor_specs(const std::filesystem::path& path, const std::vector<FactorSpec>& specs);
void write_split(const std::filesystem::path& path, const std::vector<Split>& split);

struct DatasetFiles {
  std::filesystem::path codes;
  std::filesystem::path factors;
  std::filesystem::path factor_spec;
  std::optional<std::filesystem::path> split;
};

/// Writes the four dataset files into `dir` and returns their paths.
DatasetFiles write_dataset(const std::filesystem::path& dir, const CodedDataset& data);

struct SplitFallback {
  double train = 0.7;
  double validation = 0.1;
  std::uint64_t seed = 0;
};

/// Loads a raw dataset; without a split file, rows are shuffled with the
/// fallback seed and assigned by the fallback fractions.
CodedDataset load_dataset(const DatasetFiles& files, const SplitFallback& fallback = {});

void write_importance(const std::filesystem::path& csv_path, const ImportanceMatrix& R,
                      const nlohmann::json& sidecar);
ImportanceMatrix read_importance(const std::filesystem::path& csv_path);

/// Writes `text` to `path`, creating parent directories. Throws IoError.
void write_text(const std::filesystem::path& path, const std::string& text);
std::string read_text(const std::filesystem::path& path);

std::string format_double(double v);

}  // namespace dcies::io
