#pragma once

#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "glmtilt/diagnostics.hpp"
#include "glmtilt/predictor.hpp"
#include "glmtilt/scalar_system.hpp"
#include "glmtilt/simulator.hpp"

namespace glmtilt::io {

using Json = nlohmann::ordered_json;

/// 17 significant digits; "nan", "inf", "-inf" for non-finite values.
std::string format_double(double x);

/// Serializes with every floating-point value printed at 17 significant
/// digits; non-finite values become null.
std::string dump_json(const Json& j, int indent = 2);

Json to_json(const SolverConfig& config);
Json to_json(const SolutionRecord& record, const std::optional<SolverConfig>& config = {});
SolutionRecord record_from_json(const Json& j);
Json to_json(const ComparisonReport& report);

/// "-" denotes standard output.
void write_text(const std::string& path, const std::string& text);
std::string read_text(const std::string& path);

struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  std::size_t column(const std::string& name) const;
  bool has_column(const std::string& name) const;
  double number(std::size_t row, const std::string& name) const;
};

CsvTable read_csv(const std::string& path);
std::string to_csv(const CsvTable& table);
void write_csv(const std::string& path, const CsvTable& table);

CsvTable mse_table(const std::vector<MseRow>& rows);
CsvTable bayes_table(const std::vector<BayesRow>& rows);
/// Columns chain_id, draw_index, beta_<j> per tracked coordinate, q11, q1star, q12.
CsvTable chain_table(const ChainOutput& chain);
ChainOutput chain_from_table(const CsvTable& table);
CsvTable qq_table(const std::vector<std::pair<double, double>>& qq);
CsvTable density_table(const Eigen::VectorXd& grid, const Eigen::VectorXd& density);

/// Columns kappa, alpha_mle, sigma_mle.
std::vector<MleConstants> read_mle_csv(const std::string& path);

}  // namespace glmtilt::io
