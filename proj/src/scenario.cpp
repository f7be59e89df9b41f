#include "sc3/scenario.hpp"

#include <cstdint>
#include <fstream>
#include <set>
#include <sstream>

#include "json.hpp"

namespace sc3 {

namespace {

using nlohmann::json;

std::string fnv1a_hex(const std::string& bytes) {
  std::uint64_t h = 1469598103934665603ull;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 1099511628211ull;
  }
  std::ostringstream out;
  out << std::hex << h;
  return out.str();
}

void check_keys(const json& j, const std::string& block,
                std::initializer_list<const char*> allowed) {
  if (!j.is_object())
    throw ConfigError("scenario: block '" + block + "' must be an object");
  const std::set<std::string> ok(allowed.begin(), allowed.end());
  for (const auto& [key, value] : j.items()) {
    (void)value;
    if (!ok.count(key))
      throw ConfigError("scenario: unknown key '" + block + "." + key + "'");
  }
}

class Reader {
 public:
  Reader(const json& j, std::string block, std::vector<std::string>& defaults)
      : j_(j), block_(std::move(block)), defaults_(defaults) {}

  template <typename T>
  void opt(const char* key, T& out) {
    if (j_.contains(key)) {
      from(j_.at(key), key, out);
    } else {
      defaults_.push_back(block_ + "." + key);
    }
  }

  template <typename T>
  void req(const char* key, T& out) {
    if (!j_.contains(key))
      throw ConfigError("scenario: missing required field '" + block_ + "." + key + "'");
    from(j_.at(key), key, out);
  }

  bool has(const char* key) const { return j_.contains(key); }
  const json& at(const char* key) const { return j_.at(key); }

 private:
  template <typename T>
  void from(const json& v, const char* key, T& out) {
    try {
      out = v.get<T>();
    } catch (const json::exception&) {
      throw ConfigError("scenario: field '" + block_ + "." + std::string(key) +
                        "' has the wrong type");
    }
  }

  const json& j_;
  std::string block_;
  std::vector<std::string>& defaults_;
};

double read_extended(const json& v, const std::string& where) {
  if (v.is_string() && v.get<std::string>() == "inf")
    return std::numeric_limits<double>::infinity();
  if (v.is_number()) return v.get<double>();
  throw ConfigError("scenario: field '" + where + "' must be a number or \"inf\"");
}

Eigen::MatrixXd read_matrix(const json& v, const std::string& where) {
  if (!v.is_array() || v.empty())
    throw ConfigError("scenario: field '" + where + "' must be a nonempty matrix");
  const std::size_t rows = v.size(), cols = v[0].size();
  Eigen::MatrixXd m(rows, cols);
  for (std::size_t i = 0; i < rows; ++i) {
    if (!v[i].is_array() || v[i].size() != cols)
      throw ConfigError("scenario: ragged matrix at '" + where + "'");
    for (std::size_t c = 0; c < cols; ++c) m(i, c) = v[i][c].get<double>();
  }
  return m;
}

std::vector<Eigen::Vector2d> read_points(const json& v, const std::string& where) {
  std::vector<Eigen::Vector2d> out;
  for (const auto& p : v) {
    if (!p.is_array() || p.size() != 2)
      throw ConfigError("scenario: entries of '" + where + "' must be [x, y] pairs");
    out.emplace_back(p[0].get<double>(), p[1].get<double>());
  }
  return out;
}

LoopCostParams read_control(const json& j, int index) {
  const std::string block = "control[" + std::to_string(index) + "]";
  if (j.contains("A")) {
    check_keys(j, block, {"A", "B", "Q", "R", "Sigma_v"});
    ControlSystem sys;
    sys.A = read_matrix(j.at("A"), block + ".A");
    sys.B = read_matrix(j.at("B"), block + ".B");
    sys.Q = read_matrix(j.at("Q"), block + ".Q");
    sys.R = read_matrix(j.at("R"), block + ".R");
    sys.Sigma_v = read_matrix(j.at("Sigma_v"), block + ".Sigma_v");
    sys.n = static_cast<int>(sys.A.rows());
    sys.m = static_cast<int>(sys.B.cols());
    return loop_cost_params(sys);
  }
  check_keys(j, block, {"e", "n", "negentropy_scale", "det_M_root", "trace_term"});
  LoopCostParams p;
  for (const char* key : {"e", "n", "negentropy_scale", "det_M_root", "trace_term"})
    if (!j.contains(key))
      throw ConfigError("scenario: missing required field '" + block + "." + key + "'");
  p.e = j.at("e").get<double>();
  p.n = j.at("n").get<int>();
  p.negentropy_scale = j.at("negentropy_scale").get<double>();
  p.det_M_root = j.at("det_M_root").get<double>();
  p.trace_term = j.at("trace_term").get<double>();
  return p;
}

}  // namespace

ScenarioConfig parse_scenario(const std::string& text, const std::string& path) {
  json root;
  try {
    root = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError("scenario: " + path + ": parse error at byte " +
                      std::to_string(e.byte) + ": " + e.what());
  }
  check_keys(root, "<root>", {"topology", "env", "budgets", "loop", "control",
                              "solver", "train", "experiment"});
  for (const char* key : {"topology", "budgets", "control"})
    if (!root.contains(key))
      throw ConfigError("scenario: missing required block '" + std::string(key) + "'");

  ScenarioConfig cfg;
  cfg.path = path;
  cfg.file_hash = fnv1a_hex(text);
  auto& dflt = cfg.defaults_used;

  {
    const json& j = root.at("topology");
    check_keys(j, "topology",
               {"region_w", "region_h", "eih_position", "eih_height", "num_sensors",
                "num_actuators", "sensor_positions", "actuator_positions",
                "sensor_range", "p_u_max", "rho", "sensing_rate", "gamma_values",
                "gamma_range", "max_retries"});
    Reader r(j, "topology", dflt);
    TopologyConfig& t = cfg.topology;
    r.opt("region_w", t.region_w);
    r.opt("region_h", t.region_h);
    if (r.has("eih_position")) {
      const auto pts = read_points(json::array({j.at("eih_position")}), "topology.eih_position");
      t.eih_position = pts.front();
    } else {
      dflt.push_back("topology.eih_position");
    }
    r.opt("eih_height", t.eih_height);
    r.opt("num_sensors", t.num_sensors);
    r.opt("num_actuators", t.num_actuators);
    if (r.has("sensor_positions"))
      t.sensor_positions = read_points(j.at("sensor_positions"), "topology.sensor_positions");
    if (r.has("actuator_positions"))
      t.actuator_positions =
          read_points(j.at("actuator_positions"), "topology.actuator_positions");
    r.opt("sensor_range", t.sensor_range);
    r.opt("p_u_max", t.p_u_max);
    r.opt("rho", t.rho);
    if (r.has("sensing_rate"))
      t.sensing_rate = read_extended(j.at("sensing_rate"), "topology.sensing_rate");
    else
      dflt.push_back("topology.sensing_rate");
    if (r.has("gamma_values")) t.gamma_values = j.at("gamma_values").get<std::vector<double>>();
    if (r.has("gamma_range")) {
      const auto& g = j.at("gamma_range");
      if (!g.is_array() || g.size() != 2)
        throw ConfigError("scenario: 'topology.gamma_range' must be [lo, hi]");
      t.gamma_range_lo = g[0].get<double>();
      t.gamma_range_hi = g[1].get<double>();
    } else {
      dflt.push_back("topology.gamma_range");
    }
    r.opt("max_retries", t.max_retries);

    if (!t.sensor_positions.empty())
      t.num_sensors = static_cast<int>(t.sensor_positions.size());
    if (!t.actuator_positions.empty())
      t.num_actuators = static_cast<int>(t.actuator_positions.size());
    if (t.num_sensors <= 0 || t.num_actuators <= 0)
      throw ConfigError("scenario: topology must define sensors and actuators");
    if (!t.gamma_values.empty() &&
        static_cast<int>(t.gamma_values.size()) != t.num_sensors)
      throw ConfigError("scenario: 'topology.gamma_values' size mismatch");
  }

  if (root.contains("env")) {
    const json& j = root.at("env");
    check_keys(j, "env", {"eta_los_db", "eta_nlos_db", "a", "b", "f_c", "c"});
    Reader r(j, "env", dflt);
    r.opt("eta_los_db", cfg.env.eta_los_db);
    r.opt("eta_nlos_db", cfg.env.eta_nlos_db);
    r.opt("a", cfg.env.a);
    r.opt("b", cfg.env.b);
    r.opt("f_c", cfg.env.f_c);
    r.opt("c", cfg.env.c);
  } else {
    dflt.push_back("env");
  }
  cfg.env.h = cfg.topology.eih_height;

  {
    const json& j = root.at("budgets");
    check_keys(j, "budgets", {"B_max", "p_d_max", "f_max", "N0"});
    Reader r(j, "budgets", dflt);
    r.opt("B_max", cfg.budgets.B_max);
    r.opt("p_d_max", cfg.budgets.p_d_max);
    r.opt("f_max", cfg.budgets.f_max);
    r.req("N0", cfg.budgets.N0);
  }

  if (root.contains("loop")) {
    const json& j = root.at("loop");
    check_keys(j, "loop", {"t_u", "t_d", "t_c"});
    Reader r(j, "loop", dflt);
    r.opt("t_u", cfg.loop.t_u);
    r.opt("t_d", cfg.loop.t_d);
    r.opt("t_c", cfg.loop.t_c);
  } else {
    dflt.push_back("loop");
  }

  {
    const json& j = root.at("control");
    if (!j.is_array())
      throw ConfigError("scenario: 'control' must be an array of loop descriptions");
    if (static_cast<int>(j.size()) != cfg.topology.num_actuators)
      throw ConfigError("scenario: 'control' must list one entry per actuator");
    for (std::size_t k = 0; k < j.size(); ++k)
      cfg.topology.controls.push_back(read_control(j[k], static_cast<int>(k)));
  }

  if (root.contains("solver")) {
    const json& j = root.at("solver");
    check_keys(j, "solver",
               {"gap_tol", "feas_tol", "newton_tol", "max_outer", "max_inner",
                "sensing_cap"});
    Reader r(j, "solver", dflt);
    r.opt("gap_tol", cfg.solver.gap_tol);
    r.opt("feas_tol", cfg.solver.feas_tol);
    r.opt("newton_tol", cfg.solver.newton_tol);
    r.opt("max_outer", cfg.solver.max_outer);
    r.opt("max_inner", cfg.solver.max_inner);
    r.opt("sensing_cap", cfg.solver.sensing_cap);
  } else {
    dflt.push_back("solver");
  }

  if (root.contains("train")) {
    const json& j = root.at("train");
    check_keys(j, "train",
               {"I_init", "I_halve_period", "I_min", "N_max", "epochs", "batch",
                "buffer_capacity", "lr_init", "lr_decay_period"});
    Reader r(j, "train", dflt);
    r.opt("I_init", cfg.train.I_init);
    r.opt("I_halve_period", cfg.train.I_halve_period);
    r.opt("I_min", cfg.train.I_min);
    r.opt("N_max", cfg.train.N_max);
    r.opt("epochs", cfg.train.epochs);
    r.opt("batch", cfg.train.batch);
    r.opt("buffer_capacity", cfg.train.buffer_capacity);
    r.opt("lr_init", cfg.train.lr_init);
    r.opt("lr_decay_period", cfg.train.lr_decay_period);
  } else {
    dflt.push_back("train");
  }

  if (root.contains("experiment")) {
    const json& j = root.at("experiment");
    check_keys(j, "experiment",
               {"schemes", "sweep_axis", "sweep_values", "realizations", "master_seed",
                "omega", "delta", "enum_cap", "eval_candidates"});
    Reader r(j, "experiment", dflt);
    ExperimentConfig& e = cfg.experiment;
    r.opt("schemes", e.schemes);
    r.opt("sweep_axis", e.sweep_axis);
    r.opt("sweep_values", e.sweep_values);
    r.opt("realizations", e.realizations);
    r.opt("master_seed", e.master_seed);
    r.opt("omega", e.omega);
    r.opt("delta", e.delta);
    r.opt("enum_cap", e.enum_cap);
    r.opt("eval_candidates", e.eval_candidates);
    if (e.sweep_axis != "B_max" && e.sweep_axis != "f_max" &&
        e.sweep_axis != "sensing_rate")
      throw ConfigError("scenario: unknown sweep_axis '" + e.sweep_axis + "'");
    if (e.realizations < 1)
      throw ConfigError("scenario: 'experiment.realizations' must be >= 1");
  } else {
    dflt.push_back("experiment");
  }

  return cfg;
}

ScenarioConfig load_scenario(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("scenario: cannot open '" + path + "'");
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_scenario(buf.str(), path);
}

std::string scenario_provenance(const ScenarioConfig& cfg) {
  std::ostringstream out;
  out << cfg.path << " hash=" << cfg.file_hash << " defaults=[";
  for (std::size_t i = 0; i < cfg.defaults_used.size(); ++i) {
    if (i) out << ",";
    out << cfg.defaults_used[i];
  }
  out << "]";
  return out.str();
}

}  // namespace sc3
