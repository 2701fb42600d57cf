#pragma once

// CSV (RFC 4180, UTF-8, header row) and SVG artifacts of experiment runs.
// Numbers are printed with 17 significant digits, so identical runs give
// byte-identical files; wall-clock solve times go to a separate file.

#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Core>

#include "safempc/experiment.hpp"

namespace safempc {

/// Quotes a field when it contains a comma, quote, CR or LF.
std::string csv_field(const std::string& text);
std::string format_number(double value);

/// t, theta, theta_dot, u, feasible
void write_trajectory_csv(const RunLog& log, const std::filesystem::path& path);
/// t, feasible, objective, min_margin, u, status, applied_safe, sampled,
/// mutual_information, safety_violation
void write_diagnostics_csv(const RunLog& log, const std::filesystem::path& path);
/// t, solve_seconds
void write_timing_csv(const RunLog& log, const std::filesystem::path& path);

/// One row per sample: z components then raw y components.
void write_dataset_csv(const Eigen::MatrixXd& inputs, const Eigen::MatrixXd& observations,
                       const std::filesystem::path& path);
/// Inverse of write_dataset_csv; `input_dim` splits the columns.
std::pair<Eigen::MatrixXd, Eigen::MatrixXd> read_dataset_csv(const std::filesystem::path& path,
                                                             Eigen::Index input_dim);

struct PlotSeries {
  std::string label;
  std::vector<double> values;  // y at n = 0, 1, ...
};

/// Line plot of mutual information against n, one line per series.
std::string information_svg(const std::vector<PlotSeries>& series, const std::string& title);
void write_text(const std::filesystem::path& path, const std::string& text);

/// I(Z_0) followed by I after every iteration.
std::vector<double> information_curve(const RunLog& log);

/// Reads the mutual_information column of a diagnostics CSV.
std::vector<double> read_information_column(const std::filesystem::path& path);

/// All artifacts of one run into `dir`.
void emit_outputs(const RunLog& log, const std::string& config_json,
                  const std::filesystem::path& dir);

}  // namespace safempc
