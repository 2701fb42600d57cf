#include "safempc/config.hpp"

#include <fstream>
#include <set>
#include <sstream>

#include "json.hpp"

#include "safempc/errors.hpp"

namespace safempc {

using nlohmann::json;

namespace {

// A JSON object whose keys must all be consumed; leftovers are errors.
class Section {
 public:
  Section(const json& node, std::string path) : node_(node), path_(std::move(path)) {
    if (!node_.is_object()) fail("", "must be an object");
  }

  ~Section() = default;

  bool has(const std::string& key) const { return node_.contains(key); }

  const json& at(const std::string& key) {
    used_.insert(key);
    return node_.at(key);
  }

  template <typename T>
  void read(const std::string& key, T& out) {
    if (!has(key)) return;
    const json& v = at(key);
    try {
      if constexpr (std::is_same_v<T, bool>) {
        if (!v.is_boolean()) fail(key, "must be a boolean");
        out = v.get<bool>();
      } else if constexpr (std::is_integral_v<T>) {
        if (!v.is_number_integer()) fail(key, "must be an integer");
        out = v.get<T>();
      } else if constexpr (std::is_floating_point_v<T>) {
        if (!v.is_number()) fail(key, "must be a number");
        out = v.get<T>();
      } else {
        if (!v.is_string()) fail(key, "must be a string");
        out = v.get<T>();
      }
    } catch (const json::exception& e) {
      fail(key, e.what());
    }
  }

  void read_vector(const std::string& key, VectorXd& out) {
    if (has(key)) out = to_vector(at(key), key);
  }

  void read_matrix(const std::string& key, MatrixXd& out) {
    if (has(key)) out = to_matrix(at(key), key);
  }

  Section child(const std::string& key) {
    return Section(at(key), path_ + "." + key);
  }

  void finish() const {
    for (const auto& item : node_.items()) {
      if (!used_.count(item.key())) fail(item.key(), "unknown key");
    }
  }

  [[noreturn]] void fail(const std::string& key, const std::string& what) const {
    throw ConfigError("config: " + path_ + (key.empty() ? "" : "." + key) + ": " + what);
  }

  VectorXd to_vector(const json& v, const std::string& key) const {
    if (!v.is_array()) fail(key, "must be an array of numbers");
    VectorXd out(static_cast<Eigen::Index>(v.size()));
    for (std::size_t i = 0; i < v.size(); ++i) {
      if (!v[i].is_number()) fail(key, "must be an array of numbers");
      out(static_cast<Eigen::Index>(i)) = v[i].get<double>();
    }
    return out;
  }

  MatrixXd to_matrix(const json& v, const std::string& key) const {
    if (!v.is_array() || v.empty()) fail(key, "must be a non-empty array of rows");
    const std::size_t cols = v[0].is_array() ? v[0].size() : 0;
    MatrixXd out(static_cast<Eigen::Index>(v.size()), static_cast<Eigen::Index>(cols));
    for (std::size_t r = 0; r < v.size(); ++r) {
      if (!v[r].is_array() || v[r].size() != cols || cols == 0) {
        fail(key, "rows must be non-empty arrays of equal length");
      }
      out.row(static_cast<Eigen::Index>(r)) = to_vector(v[r], key).transpose();
    }
    return out;
  }

  const std::string& path() const { return path_; }

 private:
  const json& node_;
  std::string path_;
  std::set<std::string> used_;
};

template <typename Enum>
Enum parse_enum(Section& s, const std::string& key, Enum current,
                std::initializer_list<std::pair<const char*, Enum>> names) {
  if (!s.has(key)) return current;
  std::string text;
  s.read(key, text);
  for (const auto& [name, value] : names) {
    if (text == name) return value;
  }
  s.fail(key, "unrecognized value '" + text + "'");
}

json vector_json(const VectorXd& v) {
  json out = json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) out.push_back(v(i));
  return out;
}

json matrix_json(const MatrixXd& m) {
  json out = json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) out.push_back(vector_json(m.row(r).transpose()));
  return out;
}

const char* kernel_name(KernelKind kind) {
  switch (kind) {
    case KernelKind::kLinear: return "linear";
    case KernelKind::kMatern52: return "matern52";
    case KernelKind::kLinearPlusMatern52: return "linear+matern52";
  }
  return "unknown";
}

void parse_experiment(Section s, ExperimentConfig& cfg) {
  cfg.kind = parse_enum(s, "kind", cfg.kind,
                        {{"static", ExperimentKind::kStatic}, {"dynamic", ExperimentKind::kDynamic}});
  cfg.mode = parse_enum(s, "mode", cfg.mode,
                        {{"standard", ObjectiveMode::kStandard},
                         {"performance", ObjectiveMode::kPerformance}});
  s.read("iterations", cfg.iterations);
  s.read("horizon", cfg.horizon);
  s.read("performance_horizon", cfg.performance_horizon);
  s.read("shared_controls", cfg.shared_controls);
  s.read("initial_samples", cfg.initial_samples);
  s.read_vector("initial_state", cfg.initial_state);
  s.read_matrix("performance_weight", cfg.performance_weight);
  s.read("static_multi_start", cfg.static_multi_start);
  s.read("dynamic_multi_start", cfg.dynamic_multi_start);
  cfg.gain_policy = parse_enum(s, "gain_policy", cfg.gain_policy,
                               {{"lqr", GainPolicy::kLqr}, {"zero", GainPolicy::kZero}});
  s.finish();
}

void parse_pendulum(Section s, PendulumParams& p) {
  s.read("mass", p.mass);
  s.read("length", p.length);
  s.read("friction", p.friction);
  s.read("gravity", p.gravity);
  s.read("torque_limit", p.torque_limit);
  s.read("dt", p.dt);
  s.read("substeps", p.substeps);
  s.read("noise_std", p.noise_std);
  s.read("prior_mass_factor", p.prior_mass_factor);
  s.read("fall_angle", p.fall_angle);
  s.read_matrix("lqr_state_weight", p.lqr_state_weight);
  s.read_matrix("lqr_input_weight", p.lqr_input_weight);
  s.finish();
}

void parse_constraints(Section s, ExperimentConfig& cfg) {
  s.read_vector("state_lower", cfg.state_lower);
  s.read_vector("state_upper", cfg.state_upper);
  if (s.has("safe_set")) {
    Section ss = s.child("safe_set");
    MatrixXd normals;
    VectorXd offsets;
    if (!ss.has("normals") || !ss.has("offsets")) ss.fail("", "needs 'normals' and 'offsets'");
    ss.read_matrix("normals", normals);
    ss.read_vector("offsets", offsets);
    ss.finish();
    try {
      cfg.safe_set = Polytoped(normals, offsets);
    } catch (const std::exception& e) {
      ss.fail("", e.what());
    }
  }
  s.read("validate_safe_set", cfg.validate_safe_set);
  s.read("validation_samples", cfg.validation_samples);
  s.read("validation_steps", cfg.validation_steps);
  s.finish();
}

void parse_gp(Section s, GpOptions& gp) {
  if (s.has("kernels")) {
    const json& arr = s.at("kernels");
    if (!arr.is_array() || arr.empty()) s.fail("kernels", "must be a non-empty array");
    gp.kernels.clear();
    for (std::size_t j = 0; j < arr.size(); ++j) {
      Section ks(arr[j], s.path() + ".kernels[" + std::to_string(j) + "]");
      Kernel k;
      k.kind = parse_enum(ks, "kind", k.kind,
                          {{"linear", KernelKind::kLinear},
                           {"matern52", KernelKind::kMatern52},
                           {"linear+matern52", KernelKind::kLinearPlusMatern52}});
      ks.read_vector("lengthscales", k.lengthscales);
      ks.read("signal_variance", k.signal_variance);
      ks.read("linear_variance", k.linear_variance);
      ks.finish();
      gp.kernels.push_back(std::move(k));
    }
  }
  if (s.has("beta")) {
    Section bs = s.child("beta");
    gp.confidence.mode = parse_enum(bs, "mode", gp.confidence.mode,
                                    {{"fixed", BetaMode::kFixed},
                                     {"theoretical", BetaMode::kTheoretical}});
    if (bs.has("value")) {
      double v = 0;
      bs.read("value", v);
      gp.confidence.fixed_beta = v;
    }
    if (bs.has("rkhs_bound")) {
      double v = 0;
      bs.read("rkhs_bound", v);
      gp.confidence.rkhs_bound = v;
    }
    if (bs.has("delta")) {
      double v = 0;
      bs.read("delta", v);
      gp.confidence.delta = v;
    }
    bs.finish();
  }
  s.read_vector("lipschitz_g", gp.lipschitz);
  s.finish();
}

void parse_solver(Section s, SolverSettings& st) {
  s.read("max_outer_iterations", st.max_outer_iterations);
  s.read("max_inner_iterations", st.max_inner_iterations);
  s.read("constraint_tolerance", st.constraint_tolerance);
  s.read("optimality_tolerance", st.optimality_tolerance);
  s.read("fd_step", st.fd_step);
  s.read("penalty_growth", st.penalty_growth);
  s.read("initial_penalty", st.initial_penalty);
  s.read("max_penalty", st.max_penalty);
  s.read("lbfgs_memory", st.lbfgs_memory);
  s.finish();
}

}  // namespace

const char* to_string(ExperimentKind kind) {
  return kind == ExperimentKind::kStatic ? "static" : "dynamic";
}

const char* to_string(ObjectiveMode mode) {
  return mode == ObjectiveMode::kStandard ? "standard" : "performance";
}

ExperimentConfig default_config() {
  ExperimentConfig cfg;
  cfg.state_lower = Eigen::Vector2d(-1.0, -3.0);
  cfg.state_upper = Eigen::Vector2d(1.0, 3.0);
  const SafetyDesign design = lqr_safe_controller(cfg.pendulum);
  cfg.safe_set = lyapunov_polygon(design.riccati, 2.0, 8);

  Kernel angle;
  angle.lengthscales = Eigen::Vector3d(0.5, 1.0, 0.5);
  angle.signal_variance = 2.5e-5;
  angle.linear_variance = 4e-4;
  Kernel rate = angle;
  rate.signal_variance = 2.5e-3;
  rate.linear_variance = 0.3;
  cfg.gp.kernels = {angle, rate};
  cfg.gp.confidence.mode = BetaMode::kFixed;
  cfg.gp.confidence.fixed_beta = 2.0;
  cfg.gp.lipschitz = Eigen::Vector2d(0.01, 0.1);
  return cfg;
}

void ExperimentConfig::validate() const {
  pendulum.validate();
  if (!(pendulum.noise_std > 0.0)) {
    throw ConfigError("config: pendulum.noise_std must be positive (it is the GP noise level)");
  }
  if (iterations < 0) throw ConfigError("config: experiment.iterations must be >= 0");
  if (initial_samples < 0) throw ConfigError("config: experiment.initial_samples must be >= 0");
  if (static_multi_start < 1 || dynamic_multi_start < 1) {
    throw ConfigError("config: multi-start counts must be >= 1");
  }
  if (initial_state.size() != 2) throw ConfigError("config: experiment.initial_state needs 2 entries");
  if (performance_weight.rows() != 2 || performance_weight.cols() != 2) {
    throw ConfigError("config: experiment.performance_weight must be 2x2");
  }
  if (state_lower.size() != 2 || state_upper.size() != 2 ||
      !(state_upper.array() > state_lower.array()).all()) {
    throw ConfigError("config: constraints.state_lower/state_upper must be 2-vectors with lower < upper");
  }
  if (validation_samples < 1 || validation_steps < 1) {
    throw ConfigError("config: validation sample and step counts must be >= 1");
  }
  if (gp.kernels.size() != 2) throw ConfigError("config: gp.kernels needs one kernel per state");
  for (const auto& k : gp.kernels) {
    try {
      k.validate(3);
    } catch (const std::exception& e) {
      throw ConfigError(std::string("config: gp.kernels: ") + e.what());
    }
  }
  if (gp.lipschitz.size() != 2 || (gp.lipschitz.array() < 0.0).any()) {
    throw ConfigError("config: gp.lipschitz_g needs 2 nonnegative entries");
  }
  const auto& c = gp.confidence;
  if (c.mode == BetaMode::kFixed && !(c.fixed_beta && *c.fixed_beta > 0.0)) {
    throw ConfigError("config: gp.beta.value must be positive in fixed mode");
  }
  if (c.mode == BetaMode::kTheoretical &&
      !(c.rkhs_bound && *c.rkhs_bound >= 0.0 && c.delta && *c.delta > 0.0 && *c.delta <= 1.0)) {
    throw ConfigError("config: gp.beta needs rkhs_bound >= 0 and delta in (0, 1] in theoretical mode");
  }
  if (!(solver.constraint_tolerance > 0 && solver.optimality_tolerance > 0 && solver.fd_step > 0 &&
        solver.penalty_growth > 1 && solver.initial_penalty > 0 &&
        solver.max_penalty >= solver.initial_penalty && solver.lbfgs_memory >= 1 &&
        solver.max_outer_iterations >= 1 && solver.max_inner_iterations >= 1)) {
    throw ConfigError("config: invalid solver settings");
  }
  mpc_config().validate(2, 1);
  if (!safe_set.contains(initial_state)) {
    throw ConfigError("config: experiment.initial_state lies outside the safe set");
  }
}

SafeMpcConfig ExperimentConfig::mpc_config() const {
  SafeMpcConfig m;
  m.horizon = horizon;
  m.performance_horizon = performance_horizon;
  m.shared_controls = shared_controls;
  m.state_constraints = Polytoped::box(state_lower, state_upper);
  m.input_constraints = Polytoped::box(VectorXd::Constant(1, -pendulum.torque_limit),
                                       VectorXd::Constant(1, pendulum.torque_limit));
  m.safe_set = safe_set;
  m.gain_policy = gain_policy;
  m.lqr_state_weight = pendulum.lqr_state_weight;
  m.lqr_input_weight = pendulum.lqr_input_weight;
  m.solver = solver;
  m.solver.multi_start = kind == ExperimentKind::kStatic ? static_multi_start : dynamic_multi_start;
  m.optimize_initial_state = kind == ExperimentKind::kStatic;
  if (m.optimize_initial_state) {
    m.initial_state_lower = state_lower;
    m.initial_state_upper = state_upper;
  }
  return m;
}

ExperimentConfig parse_config(const std::string& text) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("config: malformed JSON: ") + e.what());
  }
  ExperimentConfig cfg = default_config();
  Section root(doc, "config");
  if (root.has("experiment")) parse_experiment(root.child("experiment"), cfg);
  if (root.has("pendulum")) parse_pendulum(root.child("pendulum"), cfg.pendulum);
  if (root.has("constraints")) parse_constraints(root.child("constraints"), cfg);
  if (root.has("gp")) parse_gp(root.child("gp"), cfg.gp);
  if (root.has("solver")) parse_solver(root.child("solver"), cfg.solver);
  root.finish();
  cfg.validate();
  return cfg;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("config: cannot open " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_config(buf.str());
}

std::string dump_config(const ExperimentConfig& cfg) {
  json doc;
  doc["experiment"] = {
      {"kind", to_string(cfg.kind)},
      {"mode", to_string(cfg.mode)},
      {"iterations", cfg.iterations},
      {"horizon", cfg.horizon},
      {"performance_horizon", cfg.performance_horizon},
      {"shared_controls", cfg.shared_controls},
      {"initial_samples", cfg.initial_samples},
      {"initial_state", vector_json(cfg.initial_state)},
      {"performance_weight", matrix_json(cfg.performance_weight)},
      {"static_multi_start", cfg.static_multi_start},
      {"dynamic_multi_start", cfg.dynamic_multi_start},
      {"gain_policy", cfg.gain_policy == GainPolicy::kLqr ? "lqr" : "zero"},
  };
  const PendulumParams& p = cfg.pendulum;
  doc["pendulum"] = {
      {"mass", p.mass},
      {"length", p.length},
      {"friction", p.friction},
      {"gravity", p.gravity},
      {"torque_limit", p.torque_limit},
      {"dt", p.dt},
      {"substeps", p.substeps},
      {"noise_std", p.noise_std},
      {"prior_mass_factor", p.prior_mass_factor},
      {"fall_angle", p.fall_angle},
      {"lqr_state_weight", matrix_json(p.lqr_state_weight)},
      {"lqr_input_weight", matrix_json(p.lqr_input_weight)},
  };
  doc["constraints"] = {
      {"state_lower", vector_json(cfg.state_lower)},
      {"state_upper", vector_json(cfg.state_upper)},
      {"safe_set",
       {{"normals", matrix_json(cfg.safe_set.normals())},
        {"offsets", vector_json(cfg.safe_set.offsets())}}},
      {"validate_safe_set", cfg.validate_safe_set},
      {"validation_samples", cfg.validation_samples},
      {"validation_steps", cfg.validation_steps},
  };
  json kernels = json::array();
  for (const auto& k : cfg.gp.kernels) {
    kernels.push_back({{"kind", kernel_name(k.kind)},
                       {"lengthscales", vector_json(k.lengthscales)},
                       {"signal_variance", k.signal_variance},
                       {"linear_variance", k.linear_variance}});
  }
  json beta = {{"mode", cfg.gp.confidence.mode == BetaMode::kFixed ? "fixed" : "theoretical"}};
  if (cfg.gp.confidence.fixed_beta) beta["value"] = *cfg.gp.confidence.fixed_beta;
  if (cfg.gp.confidence.rkhs_bound) beta["rkhs_bound"] = *cfg.gp.confidence.rkhs_bound;
  if (cfg.gp.confidence.delta) beta["delta"] = *cfg.gp.confidence.delta;
  doc["gp"] = {{"kernels", kernels}, {"beta", beta}, {"lipschitz_g", vector_json(cfg.gp.lipschitz)}};
  const SolverSettings& s = cfg.solver;
  doc["solver"] = {
      {"max_outer_iterations", s.max_outer_iterations},
      {"max_inner_iterations", s.max_inner_iterations},
      {"constraint_tolerance", s.constraint_tolerance},
      {"optimality_tolerance", s.optimality_tolerance},
      {"fd_step", s.fd_step},
      {"penalty_growth", s.penalty_growth},
      {"initial_penalty", s.initial_penalty},
      {"max_penalty", s.max_penalty},
      {"lbfgs_memory", s.lbfgs_memory},
  };
  return doc.dump(2) + "\n";
}

}  // namespace safempc
