#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "amoe/adaptation.hpp"
#include "amoe/diagnostics.hpp"
#include "amoe/experts.hpp"
#include "amoe/smc.hpp"

namespace amoe {

using Json = nlohmann::json;

Json matrix_to_json(const Matrix& m);
Matrix matrix_from_json(const Json& j);
Json vector_to_json(const Vector& v);
Vector vector_from_json(const Json& j);

Json to_json(const StratumFamily& family);
StratumFamily family_from_json(const Json& j);
Json to_json(const MixtureParams& theta);
MixtureParams mixture_from_json(const Json& j);
Json to_json(const KldEstimate& kld);
Json to_json(const AdaptationTrace& trace, bool include_theta = true);
Json to_json(const FilterTrace& trace);

// CSV table with a header row; numbers are written with full precision.
class CsvTable {
 public:
  explicit CsvTable(std::vector<std::string> header);

  void add_row(const std::vector<double>& values);
  [[nodiscard]] const std::vector<std::string>& header() const { return header_; }
  [[nodiscard]] const std::vector<std::vector<double>>& rows() const { return rows_; }

  void write_csv(const std::filesystem::path& path) const;
  [[nodiscard]] Json to_json() const;

 private:
  std::vector<std::string> header_;
  std::vector<std::vector<double>> rows_;
};

void write_json(const std::filesystem::path& path, const Json& value);
Json read_json(const std::filesystem::path& path);

// One observation per row; a leading header row is skipped.
std::vector<Vector> read_observations_csv(const std::filesystem::path& path, Index obs_dim);
void write_observations_csv(const std::filesystem::path& path, const std::vector<Vector>& observations);

std::string format_double(double value);

}  // namespace amoe
