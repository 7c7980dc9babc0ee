#pragma once

// Internal interface of the confactor command-line experiment runner: config
// parsing and cross-validation, command dispatch, and the output writers
// (JSON / CSV / SVG / manifest).  Not part of the public library headers.

#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "confactor/numerics.hpp"

namespace confactor::cli {

inline constexpr const char* kToolVersion = "0.1.0";

// ----------------------------------------------------------------------------
// Diagnostics.  INFER_LOG in {error, warn, info, debug} selects the threshold
// (default warn); everything goes to standard error, results never do.
// ----------------------------------------------------------------------------
enum class LogLevel { error = 0, warn = 1, info = 2, debug = 3 };
LogLevel log_threshold();
void log(LogLevel level, const std::string& message);

// ----------------------------------------------------------------------------
// Errors.  ConfigInvalid carries the exhaustive issue list (exit code 2);
// IoError marks filesystem failures (exit code 4).  Library errors pass
// through and map to exit code 3.
// ----------------------------------------------------------------------------
struct ConfigInvalid : Error {
  explicit ConfigInvalid(std::vector<std::string> issue_list);
  std::vector<std::string> issues;
};

struct IoError : Error { using Error::Error; };

// ----------------------------------------------------------------------------
// Configuration
// ----------------------------------------------------------------------------
enum class Command { posterior, coverage, fiducial, compare_priors, pit, reduce };

// Truth/data generator for the simulation commands: "fixed" (one value),
// "cycle" (values round-robin per trial), "uniform" (per-trial draw on
// [lo, hi) from the trial's stream).
struct GeneratorSpec {
  std::string kind;
  double value = 0.0;          // fixed
  std::vector<double> values;  // cycle
  double lo = 0.0;             // uniform
  double hi = 0.0;
};

struct ExperimentConfig {
  Command command = Command::posterior;
  std::string command_name;
  std::string family;
  std::optional<std::string> group;  // reduce: defaults to the family's group
  std::string factor;                // resolved label or "custom:<table>"
  std::optional<double> pin;         // pinned coordinate for -location/-scale
  std::vector<double> data;               // list form
  std::optional<GeneratorSpec> generator;  // generator form
  double alpha = 0.05;               // resolved central default (1 - delta)/2
  double delta = 0.90;
  std::uint64_t trials = 1000;
  int n_obs = 1;
  std::uint64_t seed = 1;
  std::uint64_t stream_id = 1;
  int jobs = 0;  // 0: machine parallelism
  std::string output = "run";
  bool emit_plot = false;
  std::string rule_a = "consistency";  // compare-priors
  std::string rule_b = "reference";
  nlohmann::json echo;  // effective values, echoed into the manifest
};

// Scalar overrides from command-line flags (field name, raw value text),
// applied on top of the parsed document before cross-validation.
using Overrides = std::vector<std::pair<std::string, std::string>>;

// Parses and cross-checks the JSON config text.  Collects every problem it
// can find and throws one ConfigInvalid carrying the whole list.
ExperimentConfig validate(const std::string& config_text,
                          const Overrides& overrides = {});

// ----------------------------------------------------------------------------
// Outputs
// ----------------------------------------------------------------------------
struct RunManifest {
  nlohmann::json config_echo;
  std::string tool_version;
  double wall_time_seconds = 0.0;
  std::vector<std::string> output_files;

  std::string to_json() const;
};

// One chart series; markers draws circles at the points instead of a line.
struct Series {
  std::string name;
  std::vector<double> xs;
  std::vector<double> ys;
  bool markers = false;
};

// Self-contained SVG chart (fixed size, embedded styling, no external assets).
std::string svg_chart(const std::string& title, const std::string& x_label,
                      const std::string& y_label, const std::vector<Series>& series);

// CSV with '.' decimals, 17 significant digits, LF line endings.
std::string csv_cell(double v);
std::string csv_table(const std::vector<std::string>& header,
                      const std::vector<std::vector<std::string>>& rows);
std::string csv_table_numeric(const std::vector<std::string>& header,
                              const std::vector<std::vector<double>>& rows);

// Writes via a temp file renamed into place, creating parent directories;
// interrupted runs never leave a partial target file.
void write_file_atomic(const std::string& path, const std::string& content);

// ----------------------------------------------------------------------------
// Execution
// ----------------------------------------------------------------------------
RunManifest run_experiment(const ExperimentConfig& cfg);

// Module-qualified name of a library error, for diagnostics and exit mapping.
std::string classify_error(const Error& e);

}  // namespace confactor::cli
