// safempc static|dynamic --config <path> --seed <int> --out <dir>
//         [--mode standard|performance] [--horizon T]
// Exit codes: 0 success, 2 configuration error, 3 safety violation.

#include <cstdint>
#include <cstdio>
#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"

#include "safempc/config.hpp"
#include "safempc/errors.hpp"
#include "safempc/experiment.hpp"
#include "safempc/outputs.hpp"

namespace {

constexpr int kConfigError = 2;
constexpr int kSafetyViolation = 3;

struct RunOptions {
  std::string config;
  std::int64_t seed = 0;
  std::string out;
  std::optional<std::string> mode;
  std::optional<int> horizon;
  std::optional<int> iterations;
};

void add_run_options(CLI::App* cmd, RunOptions& opts) {
  cmd->add_option("--config", opts.config, "experiment config (JSON)")->check(CLI::ExistingFile);
  cmd->add_option("--seed", opts.seed, "random seed")->required();
  cmd->add_option("--out", opts.out, "output directory")->required();
  cmd->add_option("--mode", opts.mode, "objective for dynamic runs")
      ->check(CLI::IsMember({"standard", "performance"}));
  cmd->add_option("--horizon", opts.horizon, "safety horizon T")->check(CLI::PositiveNumber);
  cmd->add_option("--iterations", opts.iterations, "override the iteration count")
      ->check(CLI::NonNegativeNumber);
}

int run(safempc::ExperimentKind kind, const RunOptions& opts) {
  using namespace safempc;
  ExperimentConfig cfg = opts.config.empty() ? default_config() : load_config(opts.config);
  cfg.kind = kind;
  if (opts.mode) cfg.mode = *opts.mode == "performance" ? ObjectiveMode::kPerformance
                                                        : ObjectiveMode::kStandard;
  if (opts.horizon) cfg.horizon = *opts.horizon;
  if (opts.iterations) cfg.iterations = *opts.iterations;
  cfg.validate();
  check_safe_set(cfg, lqr_safe_controller(cfg.pendulum).controller);

  const RunLog log = run_experiment(cfg, static_cast<std::uint64_t>(opts.seed));
  emit_outputs(log, dump_config(cfg), opts.out);

  int infeasible = 0;
  for (const auto& r : log.records) infeasible += r.feasible ? 0 : 1;
  std::printf("%s run: T=%d, %zu iterations, %d infeasible, I(Z_0)=%.6g, final I=%.6g, "
              "safety violations=%d\n",
              to_string(kind), cfg.horizon, log.records.size(), infeasible,
              log.initial_information, log.final_information(), log.violations());
  return log.violations() > 0 ? kSafetyViolation : 0;
}

int calibrate(const std::string& config_path, int samples) {
  using namespace safempc;
  const ExperimentConfig cfg = config_path.empty() ? default_config() : load_config(config_path);
  std::mt19937_64 rng(0);
  const VectorXd lo = (VectorXd(3) << cfg.state_lower, -cfg.pendulum.torque_limit).finished();
  const VectorXd hi = (VectorXd(3) << cfg.state_upper, cfg.pendulum.torque_limit).finished();
  const VectorXd lg = estimate_model_error_lipschitz(cfg.pendulum, lo, hi, samples, rng);
  const SafetyDesign design = lqr_safe_controller(cfg.pendulum);
  std::printf("model-error gradient norm over X x U: [%.6g, %.6g]\n", lg(0), lg(1));
  std::printf("safety gain K: [%.6g, %.6g]\n", design.controller.gain(0, 0),
              design.controller.gain(0, 1));
  std::printf("prior LQR cost P: [[%.6g, %.6g], [%.6g, %.6g]]\n", design.riccati(0, 0),
              design.riccati(0, 1), design.riccati(1, 0), design.riccati(1, 1));
  check_safe_set(cfg, design.controller);
  std::printf("safe set invariance check passed\n");
  return 0;
}

int plot(const std::vector<std::string>& series, const std::string& out,
         const std::string& title) {
  std::vector<safempc::PlotSeries> lines;
  for (const auto& item : series) {
    const auto eq = item.find('=');
    if (eq == std::string::npos) {
      throw CLI::ValidationError("--series", "expected LABEL=diagnostics.csv, got " + item);
    }
    lines.push_back({item.substr(0, eq), safempc::read_information_column(item.substr(eq + 1))});
  }
  safempc::write_text(out, safempc::information_svg(lines, title));
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Safe exploration with GP-based ellipsoidal MPC on an inverted pendulum"};
  app.require_subcommand(1);

  RunOptions static_opts, dynamic_opts;
  auto* static_cmd = app.add_subcommand("static", "static exploration (resettable system)");
  add_run_options(static_cmd, static_opts);
  auto* dynamic_cmd = app.add_subcommand("dynamic", "dynamic exploration (receding horizon)");
  add_run_options(dynamic_cmd, dynamic_opts);

  std::string calib_config;
  int calib_samples = 20000;
  auto* calib_cmd = app.add_subcommand(
      "calibrate", "print the model-error Lipschitz estimate and check the safe set");
  calib_cmd->add_option("--config", calib_config)->check(CLI::ExistingFile);
  calib_cmd->add_option("--samples", calib_samples)->check(CLI::PositiveNumber);

  std::vector<std::string> plot_series;
  std::string plot_out, plot_title = "mutual information";
  auto* plot_cmd = app.add_subcommand("plot", "plot I vs n from diagnostics CSV files");
  plot_cmd->add_option("--series", plot_series, "LABEL=path/to/diagnostics.csv")->required();
  plot_cmd->add_option("--out", plot_out, "SVG file")->required();
  plot_cmd->add_option("--title", plot_title);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kConfigError;
  }

  try {
    if (*static_cmd) return run(safempc::ExperimentKind::kStatic, static_opts);
    if (*dynamic_cmd) return run(safempc::ExperimentKind::kDynamic, dynamic_opts);
    if (*calib_cmd) return calibrate(calib_config, calib_samples);
    if (*plot_cmd) return plot(plot_series, plot_out, plot_title);
  } catch (const safempc::ConfigError& e) {
    std::cerr << "configuration error: " << e.what() << "\n";
    return kConfigError;
  } catch (const CLI::ValidationError& e) {
    std::cerr << e.what() << "\n";
    return kConfigError;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
