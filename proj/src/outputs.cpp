#include "safempc/outputs.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "safempc/errors.hpp"

namespace safempc {

namespace fs = std::filesystem;

namespace {

class CsvWriter {
 public:
  explicit CsvWriter(const fs::path& path) : out_(path, std::ios::binary) {
    if (!out_) throw std::runtime_error("cannot write " + path.string());
  }

  void row(const std::vector<std::string>& fields) {
    for (std::size_t i = 0; i < fields.size(); ++i) {
      if (i) out_ << ',';
      out_ << csv_field(fields[i]);
    }
    out_ << "\r\n";
  }

 private:
  std::ofstream out_;
};

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> fields(1);
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
        fields.back() += '"';
        ++i;
      } else if (c == '"') {
        quoted = false;
      } else {
        fields.back() += c;
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      fields.emplace_back();
    } else if (c != '\r') {
      fields.back() += c;
    }
  }
  return fields;
}

std::vector<std::vector<std::string>> read_csv(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open " + path.string());
  std::vector<std::vector<std::string>> rows;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty() || line == "\r") continue;
    rows.push_back(split_csv_line(line));
  }
  return rows;
}

double parse_number(const std::string& text, const fs::path& path) {
  if (text == "nan") return std::numeric_limits<double>::quiet_NaN();
  try {
    std::size_t used = 0;
    const double v = std::stod(text, &used);
    if (used == text.size()) return v;
  } catch (const std::exception&) {
  }
  throw ConfigError(path.string() + ": not a number: '" + text + "'");
}

std::string flag(bool b) { return b ? "1" : "0"; }

std::string input_text(const RunRecord& r) {
  return r.input.size() ? format_number(r.input(0)) : "nan";
}

}  // namespace

std::string csv_field(const std::string& text) {
  if (text.find_first_of(",\"\r\n") == std::string::npos) return text;
  std::string out = "\"";
  for (const char c : text) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

std::string format_number(double value) {
  if (std::isnan(value)) return "nan";
  if (std::isinf(value)) return value > 0 ? "inf" : "-inf";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", value);
  return buf;
}

void write_trajectory_csv(const RunLog& log, const fs::path& path) {
  CsvWriter csv(path);
  csv.row({"t", "theta", "theta_dot", "u", "feasible"});
  for (const auto& r : log.records) {
    csv.row({std::to_string(r.n), format_number(r.state(0)), format_number(r.state(1)),
             input_text(r), flag(r.feasible)});
  }
}

void write_diagnostics_csv(const RunLog& log, const fs::path& path) {
  CsvWriter csv(path);
  csv.row({"t", "feasible", "objective", "min_margin", "u", "status", "applied_safe", "sampled",
           "mutual_information", "safety_violation"});
  for (const auto& r : log.records) {
    csv.row({std::to_string(r.n), flag(r.feasible), format_number(r.objective),
             format_number(r.min_margin), input_text(r), r.status, flag(r.applied_safe),
             flag(r.sampled), format_number(r.mutual_information), flag(r.safety_violation)});
  }
}

void write_timing_csv(const RunLog& log, const fs::path& path) {
  CsvWriter csv(path);
  csv.row({"t", "solve_seconds"});
  for (const auto& r : log.records) csv.row({std::to_string(r.n), format_number(r.solve_seconds)});
}

void write_dataset_csv(const Eigen::MatrixXd& inputs, const Eigen::MatrixXd& observations,
                       const fs::path& path) {
  if (inputs.rows() != observations.rows()) {
    throw ArgumentError("write_dataset_csv: row counts differ");
  }
  CsvWriter csv(path);
  std::vector<std::string> header;
  for (Eigen::Index i = 0; i < inputs.cols(); ++i) header.push_back("z" + std::to_string(i));
  for (Eigen::Index i = 0; i < observations.cols(); ++i) header.push_back("y" + std::to_string(i));
  csv.row(header);
  for (Eigen::Index r = 0; r < inputs.rows(); ++r) {
    std::vector<std::string> row;
    for (Eigen::Index i = 0; i < inputs.cols(); ++i) row.push_back(format_number(inputs(r, i)));
    for (Eigen::Index i = 0; i < observations.cols(); ++i) {
      row.push_back(format_number(observations(r, i)));
    }
    csv.row(row);
  }
}

std::pair<Eigen::MatrixXd, Eigen::MatrixXd> read_dataset_csv(const fs::path& path,
                                                             Eigen::Index input_dim) {
  const auto rows = read_csv(path);
  if (rows.empty()) throw ConfigError(path.string() + ": missing header row");
  const auto cols = static_cast<Eigen::Index>(rows.front().size());
  if (input_dim < 1 || input_dim >= cols) {
    throw ConfigError(path.string() + ": input dimension does not fit the columns");
  }
  Eigen::MatrixXd z(static_cast<Eigen::Index>(rows.size()) - 1, input_dim);
  Eigen::MatrixXd y(z.rows(), cols - input_dim);
  for (std::size_t r = 1; r < rows.size(); ++r) {
    if (static_cast<Eigen::Index>(rows[r].size()) != cols) {
      throw ConfigError(path.string() + ": row " + std::to_string(r) + " has the wrong width");
    }
    for (Eigen::Index c = 0; c < cols; ++c) {
      const double v = parse_number(rows[r][static_cast<std::size_t>(c)], path);
      const auto i = static_cast<Eigen::Index>(r) - 1;
      if (c < input_dim) {
        z(i, c) = v;
      } else {
        y(i, c - input_dim) = v;
      }
    }
  }
  return {z, y};
}

std::vector<double> information_curve(const RunLog& log) {
  std::vector<double> out{log.initial_information};
  for (const auto& r : log.records) out.push_back(r.mutual_information);
  return out;
}

std::vector<double> read_information_column(const fs::path& path) {
  const auto rows = read_csv(path);
  if (rows.empty()) throw ConfigError(path.string() + ": missing header row");
  const auto& header = rows.front();
  const auto it = std::find(header.begin(), header.end(), "mutual_information");
  if (it == header.end()) throw ConfigError(path.string() + ": no mutual_information column");
  const auto col = static_cast<std::size_t>(it - header.begin());
  std::vector<double> out;
  for (std::size_t r = 1; r < rows.size(); ++r) {
    if (rows[r].size() <= col) throw ConfigError(path.string() + ": short row");
    out.push_back(parse_number(rows[r][col], path));
  }
  return out;
}

std::string information_svg(const std::vector<PlotSeries>& series, const std::string& title) {
  constexpr double kWidth = 640, kHeight = 400;
  constexpr double kLeft = 70, kRight = 150, kTop = 40, kBottom = 50;
  static const char* kColors[] = {"#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd",
                                  "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf"};
  std::size_t max_len = 1;
  double ymin = std::numeric_limits<double>::infinity();
  double ymax = -ymin;
  for (const auto& s : series) {
    max_len = std::max(max_len, s.values.size());
    for (const double v : s.values) {
      if (!std::isfinite(v)) continue;
      ymin = std::min(ymin, v);
      ymax = std::max(ymax, v);
    }
  }
  if (!std::isfinite(ymin)) ymin = 0.0, ymax = 1.0;
  if (ymax - ymin < 1e-12) ymax = ymin + 1.0;
  const double xmax = static_cast<double>(std::max<std::size_t>(max_len - 1, 1));
  const double pw = kWidth - kLeft - kRight;
  const double ph = kHeight - kTop - kBottom;
  auto px = [&](double n) { return kLeft + pw * n / xmax; };
  auto py = [&](double v) { return kTop + ph * (1.0 - (v - ymin) / (ymax - ymin)); };
  auto num = [](double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.2f", v);
    return std::string(buf);
  };
  auto escape = [](const std::string& s) {
    std::string out;
    for (const char c : s) {
      switch (c) {
        case '<': out += "&lt;"; break;
        case '>': out += "&gt;"; break;
        case '&': out += "&amp;"; break;
        case '"': out += "&quot;"; break;
        default: out += c;
      }
    }
    return out;
  };

  std::ostringstream os;
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kWidth << "\" height=\""
     << kHeight << "\" viewBox=\"0 0 " << kWidth << ' ' << kHeight << "\">\n";
  os << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  os << "<text x=\"" << num(kLeft + pw / 2) << "\" y=\"24\" text-anchor=\"middle\" "
     << "font-family=\"sans-serif\" font-size=\"14\">" << escape(title) << "</text>\n";
  os << "<g stroke=\"black\" stroke-width=\"1\">\n";
  os << "<line x1=\"" << kLeft << "\" y1=\"" << kTop + ph << "\" x2=\"" << kLeft + pw
     << "\" y2=\"" << kTop + ph << "\"/>\n";
  os << "<line x1=\"" << kLeft << "\" y1=\"" << kTop << "\" x2=\"" << kLeft << "\" y2=\""
     << kTop + ph << "\"/>\n</g>\n";
  os << "<g font-family=\"sans-serif\" font-size=\"11\">\n";
  for (int k = 0; k <= 5; ++k) {
    const double n = xmax * k / 5.0;
    const double v = ymin + (ymax - ymin) * k / 5.0;
    os << "<text x=\"" << num(px(n)) << "\" y=\"" << num(kTop + ph + 16)
       << "\" text-anchor=\"middle\">" << num(n) << "</text>\n";
    os << "<text x=\"" << num(kLeft - 6) << "\" y=\"" << num(py(v) + 4)
       << "\" text-anchor=\"end\">" << num(v) << "</text>\n";
  }
  os << "<text x=\"" << num(kLeft + pw / 2) << "\" y=\"" << num(kHeight - 10)
     << "\" text-anchor=\"middle\">iteration n</text>\n";
  os << "<text x=\"16\" y=\"" << num(kTop + ph / 2) << "\" text-anchor=\"middle\" "
     << "transform=\"rotate(-90 16 " << num(kTop + ph / 2)
     << ")\">mutual information I</text>\n</g>\n";
  for (std::size_t s = 0; s < series.size(); ++s) {
    const char* color = kColors[s % std::size(kColors)];
    os << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"1.5\" points=\"";
    bool first = true;
    for (std::size_t n = 0; n < series[s].values.size(); ++n) {
      const double v = series[s].values[n];
      if (!std::isfinite(v)) continue;
      os << (first ? "" : " ") << num(px(static_cast<double>(n))) << ',' << num(py(v));
      first = false;
    }
    os << "\"/>\n";
    const double ly = kTop + 14.0 + 18.0 * static_cast<double>(s);
    os << "<line x1=\"" << num(kLeft + pw + 12) << "\" y1=\"" << num(ly - 4) << "\" x2=\""
       << num(kLeft + pw + 32) << "\" y2=\"" << num(ly - 4) << "\" stroke=\"" << color
       << "\" stroke-width=\"2\"/>\n";
    os << "<text x=\"" << num(kLeft + pw + 38) << "\" y=\"" << num(ly)
       << "\" font-family=\"sans-serif\" font-size=\"11\">" << escape(series[s].label)
       << "</text>\n";
  }
  os << "</svg>\n";
  return os.str();
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << text;
}

void emit_outputs(const RunLog& log, const std::string& config_json, const fs::path& dir) {
  fs::create_directories(dir);
  write_trajectory_csv(log, dir / "trajectory.csv");
  write_diagnostics_csv(log, dir / "diagnostics.csv");
  write_timing_csv(log, dir / "timing.csv");
  write_dataset_csv(log.inputs, log.observations, dir / "dataset.csv");
  write_text(dir / "config.json", config_json);
  const std::string label = "T = " + std::to_string(log.horizon);
  const std::string title = std::string(to_string(log.kind)) +
                            (log.kind == ExperimentKind::kDynamic
                                 ? std::string(" (") + to_string(log.mode) + ")"
                                 : std::string()) +
                            " exploration, seed " + std::to_string(log.seed);
  write_text(dir / "information.svg", information_svg({{label, information_curve(log)}}, title));
}

}  // namespace safempc
