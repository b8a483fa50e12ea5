#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "mplnmix/datagen.hpp"
#include "mplnmix/engine.hpp"

namespace mplnmix {

/// Rows are observations, columns variables; every cell must be a
/// non-negative integer. Throws ParseError (1-based line, column) or
/// FormatError for ragged/empty input.
CountMatrix parse_counts_csv(std::istream& in, bool has_header);
CountMatrix ingest_csv(const std::string& path, bool has_header);

/// One integer label per line, no header.
std::vector<int> read_labels_csv(const std::string& path);

void write_counts_csv(const std::string& path, const CountMatrix& Y);
/// Writes label + offset per line (offset 1 gives 1-based component ids).
void write_labels_csv(const std::string& path, const std::vector<int>& labels, int offset = 1);

inline constexpr int kReportSchemaVersion = 1;

struct ReportCell {
  int G = 0;
  std::string model;
  std::string status;  ///< "ok" or "error"
  std::optional<double> bic;
  std::optional<double> elbo;
  int iterations = 0;
  bool converged = false;
  std::string error;

  bool operator==(const ReportCell&) const = default;
};

struct ReportComponent {
  std::vector<double> mu;
  std::vector<std::vector<double>> sigma;

  bool operator==(const ReportComponent&) const = default;
};

/// Everything `fit` writes. `timings` is excluded from reproducibility
/// comparisons; every other field is a deterministic function of the input
/// data, flags and seed.
struct RunReport {
  int schema_version = kReportSchemaVersion;
  nlohmann::json config;
  std::size_t n = 0;
  std::size_t d = 0;
  std::string data_checksum;
  std::vector<ReportCell> cells;
  std::size_t best_cell = 0;
  int best_G = 0;
  std::string best_model;
  double best_bic = 0.0;
  double best_elbo = 0.0;
  int best_iterations = 0;
  bool best_converged = false;
  std::vector<int> labels;  ///< 1-based
  std::vector<double> weights;
  std::vector<ReportComponent> components;
  std::vector<double> volumes;
  nlohmann::json timings;

  bool operator==(const RunReport&) const = default;
};

nlohmann::json to_json(const RunReport& report);
RunReport report_from_json(const nlohmann::json& j);

/// Hex FNV-1a of the count matrix shape and values.
std::string data_checksum(const CountMatrix& Y);

/// Builds a report from a finished grid search.
RunReport make_report(const CountMatrix& Y, const FitConfig& config, const GridResult& grid,
                      const nlohmann::json& config_echo);

/// Parses "a:b" (inclusive) or a single integer.
std::vector<int> parse_g_range(const std::string& text);
/// "all" or a comma-separated list of model labels.
std::vector<CovarianceModel> parse_models(const std::string& text);

/// Preset-style description of a simulation read from a parameter file.
SimulationPreset preset_from_json(const nlohmann::json& j);
nlohmann::json preset_to_json(const SimulationPreset& p);

/// Entry point shared by the executable and the tests. Returns the exit code:
/// 0 success, 1 usage or input error, 2 grid failure.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace mplnmix
