#include "amoe/serialization.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

#include "amoe/errors.hpp"

namespace amoe {
namespace {

std::ofstream open_output(const std::filesystem::path& path) {
  if (path.has_parent_path()) {
    std::error_code ec;
    std::filesystem::create_directories(path.parent_path(), ec);
  }
  std::ofstream out(path);
  if (!out) {
    throw Error(ErrorCode::kIo, "cannot open '" + path.string() + "' for writing");
  }
  return out;
}

Json number(double value) {
  if (std::isfinite(value)) {
    return value;
  }
  return nullptr;
}

bool parse_row(const std::string& line, std::vector<double>& out) {
  out.clear();
  std::stringstream ss(line);
  std::string cell;
  while (std::getline(ss, cell, ',')) {
    const auto first = cell.find_first_not_of(" \t\r");
    const auto last = cell.find_last_not_of(" \t\r");
    if (first == std::string::npos) {
      return false;
    }
    const std::string trimmed = cell.substr(first, last - first + 1);
    double value = 0.0;
    const auto result = std::from_chars(trimmed.data(), trimmed.data() + trimmed.size(), value);
    if (result.ec != std::errc() || result.ptr != trimmed.data() + trimmed.size()) {
      return false;
    }
    out.push_back(value);
  }
  return !out.empty();
}

}  // namespace

std::string format_double(double value) {
  std::ostringstream os;
  os.precision(17);
  os << value;
  return os.str();
}

Json matrix_to_json(const Matrix& m) {
  Json rows = Json::array();
  for (Index r = 0; r < m.rows(); ++r) {
    Json row = Json::array();
    for (Index c = 0; c < m.cols(); ++c) {
      row.push_back(number(m(r, c)));
    }
    rows.push_back(std::move(row));
  }
  return rows;
}

Matrix matrix_from_json(const Json& j) {
  require(j.is_array() && !j.empty() && j.front().is_array(), "matrix must be a non-empty array of rows");
  const auto rows = static_cast<Index>(j.size());
  const auto cols = static_cast<Index>(j.front().size());
  Matrix m(rows, cols);
  for (Index r = 0; r < rows; ++r) {
    const auto& row = j[static_cast<std::size_t>(r)];
    require(row.is_array() && static_cast<Index>(row.size()) == cols, "matrix rows must have equal length");
    for (Index c = 0; c < cols; ++c) {
      m(r, c) = row[static_cast<std::size_t>(c)].get<double>();
    }
  }
  return m;
}

Json vector_to_json(const Vector& v) {
  Json out = Json::array();
  for (Index i = 0; i < v.size(); ++i) {
    out.push_back(number(v(i)));
  }
  return out;
}

Vector vector_from_json(const Json& j) {
  if (j.is_number()) {
    return Vector::Constant(1, j.get<double>());
  }
  require(j.is_array(), "vector must be an array");
  Vector v(static_cast<Index>(j.size()));
  for (std::size_t i = 0; i < j.size(); ++i) {
    v(static_cast<Index>(i)) = j[i].get<double>();
  }
  return v;
}

Json to_json(const StratumFamily& family) {
  if (family.is_student()) {
    return {{"kind", "student_t"}, {"nu", family.nu}};
  }
  return {{"kind", "gaussian"}};
}

StratumFamily family_from_json(const Json& j) {
  const auto kind = j.at("kind").get<std::string>();
  if (kind == "gaussian") {
    return StratumFamily::gaussian();
  }
  if (kind == "student_t") {
    return StratumFamily::student_t(j.at("nu").get<double>());
  }
  throw Error(ErrorCode::kConfig, "unknown stratum family '" + kind + "'");
}

Json to_json(const MixtureParams& theta) {
  Json experts = Json::array();
  for (const auto& expert : theta.experts) {
    experts.push_back({{"lambda", matrix_to_json(expert.lambda)}, {"sigma", matrix_to_json(expert.sigma)}});
  }
  Json gating;
  if (theta.logistic()) {
    gating = {{"mode", "logistic"}, {"beta", matrix_to_json(std::get<LogisticGating>(theta.gating).beta)}};
  } else {
    gating = {{"mode", "constant"}, {"weights", vector_to_json(std::get<ConstantGating>(theta.gating).weights)}};
  }
  return {{"family", to_json(theta.family)}, {"pooled", theta.pooled}, {"gating", gating}, {"experts", experts}};
}

namespace {

MixtureParams parse_mixture(const Json& j) {
  MixtureParams theta;
  theta.family = family_from_json(j.at("family"));
  theta.pooled = j.value("pooled", false);
  for (const auto& expert : j.at("experts")) {
    theta.experts.push_back({matrix_from_json(expert.at("lambda")), matrix_from_json(expert.at("sigma"))});
  }
  const auto& gating = j.at("gating");
  const auto mode = gating.at("mode").get<std::string>();
  if (mode == "logistic") {
    const Index rows = theta.components() - 1;
    theta.gating = LogisticGating{rows == 0 ? Matrix(0, theta.ancestor_dim() + 1)
                                            : matrix_from_json(gating.at("beta"))};
  } else if (mode == "constant") {
    theta.gating = ConstantGating{vector_from_json(gating.at("weights"))};
  } else {
    throw Error(ErrorCode::kConfig, "unknown gating mode '" + mode + "'");
  }
  validate(theta);
  return theta;
}

}  // namespace

MixtureParams mixture_from_json(const Json& j) {
  try {
    return parse_mixture(j);
  } catch (const Json::exception& e) {
    throw Error(ErrorCode::kConfig, std::string("malformed mixture: ") + e.what());
  }
}

Json to_json(const KldEstimate& kld) {
  Json out = {{"value", number(kld.value_up_to_constant)},
              {"stderr", number(kld.standard_error)},
              {"reference_n", kld.reference_sample_size},
              {"reference_ess", number(kld.reference_ess)},
              {"unreliable", kld.unreliable}};
  if (kld.absolute_value) {
    out["absolute"] = number(*kld.absolute_value);
    out["absolute_stderr"] = number(*kld.absolute_standard_error);
  }
  return out;
}

Json to_json(const AdaptationTrace& trace, bool include_theta) {
  Json rows = Json::array();
  for (const auto& record : trace.iterations) {
    Json row = {{"iteration", record.iteration},
                {"proposal", record.proposal},
                {"weight_sum", number(record.weight_sum)},
                {"ess", number(record.ess)},
                {"draws", record.draws}};
    if (record.kld) {
      row["kld"] = to_json(*record.kld);
    }
    if (include_theta) {
      row["theta"] = to_json(record.theta);
    }
    rows.push_back(std::move(row));
  }
  return rows;
}

Json to_json(const FilterTrace& trace) {
  Json steps = Json::array();
  for (const auto& step : trace.steps) {
    steps.push_back({{"step", step.step},
                     {"ess", number(step.ess)},
                     {"relative_ess", number(step.relative_ess)},
                     {"entropy", number(step.negated_entropy)},
                     {"cpu_ms", number(step.cpu_ms)},
                     {"estimate", vector_to_json(step.estimate)}});
  }
  return {{"steps", steps}, {"collapsed", trace.collapsed}, {"error", trace.error}};
}

CsvTable::CsvTable(std::vector<std::string> header) : header_(std::move(header)) {
  require(!header_.empty(), "a table needs at least one column");
}

void CsvTable::add_row(const std::vector<double>& values) {
  require(values.size() == header_.size(), "row length does not match the header");
  rows_.push_back(values);
}

void CsvTable::write_csv(const std::filesystem::path& path) const {
  auto out = open_output(path);
  for (std::size_t c = 0; c < header_.size(); ++c) {
    out << (c == 0 ? "" : ",") << header_[c];
  }
  out << '\n';
  for (const auto& row : rows_) {
    for (std::size_t c = 0; c < row.size(); ++c) {
      out << (c == 0 ? "" : ",") << format_double(row[c]);
    }
    out << '\n';
  }
  if (!out) {
    throw Error(ErrorCode::kIo, "failed writing '" + path.string() + "'");
  }
}

Json CsvTable::to_json() const {
  Json rows = Json::array();
  for (const auto& row : rows_) {
    Json obj = Json::object();
    for (std::size_t c = 0; c < row.size(); ++c) {
      obj[header_[c]] = number(row[c]);
    }
    rows.push_back(std::move(obj));
  }
  return {{"columns", header_}, {"rows", rows}};
}

void write_json(const std::filesystem::path& path, const Json& value) {
  auto out = open_output(path);
  out << value.dump(2) << '\n';
  if (!out) {
    throw Error(ErrorCode::kIo, "failed writing '" + path.string() + "'");
  }
}

Json read_json(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) {
    throw Error(ErrorCode::kIo, "cannot open '" + path.string() + "'");
  }
  try {
    return Json::parse(in);
  } catch (const Json::exception& e) {
    throw Error(ErrorCode::kConfig, "invalid JSON in '" + path.string() + "': " + e.what());
  }
}

std::vector<Vector> read_observations_csv(const std::filesystem::path& path, Index obs_dim) {
  std::ifstream in(path);
  if (!in) {
    throw Error(ErrorCode::kIo, "cannot open observations '" + path.string() + "'");
  }
  std::vector<Vector> out;
  std::string line;
  std::vector<double> values;
  bool first = true;
  Index line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) {
      continue;
    }
    if (!parse_row(line, values)) {
      if (first) {
        first = false;
        continue;
      }
      throw Error(ErrorCode::kInvalidObservation, "cannot parse observation line " + std::to_string(line_no));
    }
    first = false;
    if (static_cast<Index>(values.size()) != obs_dim) {
      throw Error(ErrorCode::kInvalidObservation,
                  "observation line " + std::to_string(line_no) + " has the wrong number of columns");
    }
    out.push_back(Eigen::Map<const Vector>(values.data(), obs_dim));
  }
  return out;
}

void write_observations_csv(const std::filesystem::path& path, const std::vector<Vector>& observations) {
  require(!observations.empty(), "no observations to write");
  std::vector<std::string> header;
  for (Index c = 0; c < observations.front().size(); ++c) {
    header.push_back("y" + std::to_string(c));
  }
  CsvTable table(header);
  for (const auto& y : observations) {
    table.add_row(std::vector<double>(y.data(), y.data() + y.size()));
  }
  table.write_csv(path);
}

}  // namespace amoe
