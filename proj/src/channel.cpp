#include "sc3/channel.hpp"

#include <cmath>
#include <numbers>
#include <sstream>

namespace sc3 {

std::vector<std::vector<int>> effective_sensor_sets(const Topology& topo) {
  const int S = static_cast<int>(topo.sensors.size());
  const int K = static_cast<int>(topo.actuators.size());
  std::vector<std::vector<int>> sets(K);
  for (int k = 0; k < K; ++k) {
    for (int s = 0; s < S; ++s) {
      const double dist = (topo.sensors[s].position - topo.actuators[k].position).norm();
      if (dist <= topo.sensors[s].range) sets[k].push_back(s);
    }
    if (sets[k].empty()) {
      std::ostringstream msg;
      msg << "effective_sensor_sets: actuator " << k << " has no sensor in range";
      throw InfeasibleError(msg.str());
    }
  }
  return sets;
}

double elevation_angle(double d, double h) {
  if (h <= 0.0 || d < h) throw DomainError("elevation_angle: requires d >= h > 0");
  return 180.0 / std::numbers::pi * std::asin(h / d);
}

double large_scale_fading(double d, const EnvParams& env) {
  if (d < env.h) throw DomainError("large_scale_fading: d below EIH height");
  const double rho_deg = elevation_angle(d, env.h);
  const double A = env.eta_los_db - env.eta_nlos_db;
  const double B = 20.0 * std::log10(d) +
                   20.0 * std::log10(4.0 * std::numbers::pi * env.f_c / env.c) +
                   env.eta_nlos_db;
  const double beta_db = A / (1.0 + env.a * std::exp(-env.b * (rho_deg - env.a))) + B;
  return std::pow(10.0, -beta_db / 10.0);
}

double eih_distance(const Topology& topo, const Eigen::Vector2d& p) {
  const double planar = (p - topo.eih_position).norm();
  return std::sqrt(planar * planar + topo.eih_height * topo.eih_height);
}

void large_scale_gains(const Topology& topo, const EnvParams& env,
                       std::vector<double>& ul_beta, std::vector<double>& dl_beta) {
  ul_beta.resize(topo.sensors.size());
  dl_beta.resize(topo.actuators.size());
  for (std::size_t s = 0; s < topo.sensors.size(); ++s)
    ul_beta[s] = large_scale_fading(eih_distance(topo, topo.sensors[s].position), env);
  for (std::size_t k = 0; k < topo.actuators.size(); ++k)
    dl_beta[k] = large_scale_fading(eih_distance(topo, topo.actuators[k].position), env);
}

ChannelRealization realize_channels(const Topology& topo, const EnvParams& env, Rng& rng) {
  std::vector<double> ul_beta, dl_beta;
  large_scale_gains(topo, env, ul_beta, dl_beta);
  ChannelRealization out;
  out.ul_gain_sq.resize(ul_beta.size());
  out.dl_gain_sq.resize(dl_beta.size());
  // alpha ~ CN(0,1): re and im each N(0, 1/2), so |alpha|^2 ~ Exp(1).
  auto draw = [&rng](double beta) {
    const double re = rng.gaussian() * std::numbers::sqrt2 / 2.0;
    const double im = rng.gaussian() * std::numbers::sqrt2 / 2.0;
    return beta * (re * re + im * im);
  };
  for (std::size_t s = 0; s < ul_beta.size(); ++s) out.ul_gain_sq[s] = draw(ul_beta[s]);
  for (std::size_t k = 0; k < dl_beta.size(); ++k) out.dl_gain_sq[k] = draw(dl_beta[k]);
  return out;
}

Topology generate_topology(const TopologyConfig& raw, Rng& rng) {
  TopologyConfig cfg = raw;
  if (!cfg.sensor_positions.empty() && cfg.num_sensors == 0)
    cfg.num_sensors = static_cast<int>(cfg.sensor_positions.size());
  if (!cfg.actuator_positions.empty() && cfg.num_actuators == 0)
    cfg.num_actuators = static_cast<int>(cfg.actuator_positions.size());
  if (cfg.num_actuators <= 0 || cfg.num_sensors <= 0)
    throw DomainError("generate_topology: node counts must be positive");
  if (static_cast<int>(cfg.controls.size()) != cfg.num_actuators)
    throw DomainError("generate_topology: one control block required per actuator");

  Topology topo;
  topo.eih_position = cfg.eih_position;
  topo.eih_height = cfg.eih_height;

  auto sample_point = [&]() {
    return Eigen::Vector2d(rng.uniform(0.0, cfg.region_w), rng.uniform(0.0, cfg.region_h));
  };

  std::vector<double> gammas = cfg.gamma_values;
  if (gammas.empty()) {
    gammas.resize(cfg.num_sensors);
    for (double& g : gammas) g = rng.uniform(cfg.gamma_range_lo, cfg.gamma_range_hi);
  } else if (static_cast<int>(gammas.size()) != cfg.num_sensors) {
    throw DomainError("generate_topology: gamma_values size mismatch");
  }

  const bool explicit_sensors = !cfg.sensor_positions.empty();
  const bool explicit_actuators = !cfg.actuator_positions.empty();
  if (explicit_sensors &&
      static_cast<int>(cfg.sensor_positions.size()) != cfg.num_sensors)
    throw DomainError("generate_topology: sensor_positions size mismatch");
  if (explicit_actuators &&
      static_cast<int>(cfg.actuator_positions.size()) != cfg.num_actuators)
    throw DomainError("generate_topology: actuator_positions size mismatch");

  for (int attempt = 0; attempt <= cfg.max_retries; ++attempt) {
    topo.sensors.clear();
    topo.actuators.clear();
    for (int k = 0; k < cfg.num_actuators; ++k) {
      ActuatorTraits a;
      a.position = explicit_actuators ? cfg.actuator_positions[k] : sample_point();
      a.control = cfg.controls[k];
      topo.actuators.push_back(a);
    }
    for (int s = 0; s < cfg.num_sensors; ++s) {
      SensorTraits t;
      t.position = explicit_sensors ? cfg.sensor_positions[s] : sample_point();
      t.range = cfg.sensor_range;
      t.p_u_max = cfg.p_u_max;
      t.rho = cfg.rho;
      t.sensing_rate = cfg.sensing_rate;
      t.gamma = gammas[s];
      topo.sensors.push_back(t);
    }
    try {
      topo.effective_sets = effective_sensor_sets(topo);
      return topo;
    } catch (const InfeasibleError&) {
      if (explicit_sensors && explicit_actuators) throw;
      // Resample and retry.
    }
  }
  throw InfeasibleError("generate_topology: retry cap exceeded without full coverage");
}

}  // namespace sc3
