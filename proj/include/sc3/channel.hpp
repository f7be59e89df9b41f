#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <limits>
#include <vector>

#include "sc3/errors.hpp"
#include "sc3/model.hpp"
#include "sc3/rng.hpp"

namespace sc3 {

// Air-to-ground propagation constants (sigmoid LOS-probability model).
struct EnvParams {
  double eta_los_db = 0.1;
  double eta_nlos_db = 21.0;
  double a = 5.0188;
  double b = 0.3511;
  double f_c = 2.0e9;   // Hz
  double c = 3.0e8;     // m/s
  double h = 300.0;     // EIH height, m
};

struct SensorTraits {
  Eigen::Vector2d position{0.0, 0.0};
  double range = 0.0;          // sensing range, m
  double p_u_max = 0.0;        // max UL transmit power, W
  double gamma = 0.0;          // CPU cycles per bit
  double rho = 0.0;            // extraction ratio in [0, 1]
  double sensing_rate = std::numeric_limits<double>::infinity();  // bits/cycle
};

struct ActuatorTraits {
  Eigen::Vector2d position{0.0, 0.0};
  LoopCostParams control;
};

struct Topology {
  Eigen::Vector2d eih_position{0.0, 0.0};
  double eih_height = 0.0;
  std::vector<SensorTraits> sensors;
  std::vector<ActuatorTraits> actuators;
  // effective_sets[k] lists the sensors whose range covers actuator k.
  std::vector<std::vector<int>> effective_sets;
};

struct ChannelRealization {
  std::vector<double> ul_gain_sq;  // per sensor, |h|^2 linear
  std::vector<double> dl_gain_sq;  // per actuator
};

struct TopologyConfig {
  double region_w = 4000.0;
  double region_h = 4000.0;
  Eigen::Vector2d eih_position{2000.0, 2000.0};
  double eih_height = 300.0;
  int num_sensors = 0;
  int num_actuators = 0;
  // When non-empty, positions are taken verbatim instead of sampled.
  std::vector<Eigen::Vector2d> sensor_positions;
  std::vector<Eigen::Vector2d> actuator_positions;
  double sensor_range = 1000.0;
  double p_u_max = 0.1;
  double rho = 0.01;
  double sensing_rate = std::numeric_limits<double>::infinity();
  // Per-sensor gamma values; when empty, sampled uniformly from gamma_range.
  std::vector<double> gamma_values;
  double gamma_range_lo = 50.0;
  double gamma_range_hi = 500.0;
  std::vector<LoopCostParams> controls;  // one per actuator
  int max_retries = 1000;
};

// Distance rule of the effective sets. Throws InfeasibleError (naming the
// actuator) when some actuator is covered by no sensor.
std::vector<std::vector<int>> effective_sensor_sets(const Topology& topo);

// Elevation angle in degrees from the 3-D EIH-to-node distance d.
double elevation_angle(double d, double h);

// Large-scale power gain (linear) at 3-D distance d.
double large_scale_fading(double d, const EnvParams& env);

// 3-D EIH distance to a planar point.
double eih_distance(const Topology& topo, const Eigen::Vector2d& p);

// Large-scale gains for every node in the topology.
void large_scale_gains(const Topology& topo, const EnvParams& env,
                       std::vector<double>& ul_beta, std::vector<double>& dl_beta);

// Rayleigh-faded squared channel gains; reproducible given the RNG stream.
ChannelRealization realize_channels(const Topology& topo, const EnvParams& env, Rng& rng);

// Places nodes (or passes through explicit coordinates), resampling until
// every actuator is covered. Throws InfeasibleError past the retry cap.
Topology generate_topology(const TopologyConfig& cfg, Rng& rng);

}  // namespace sc3
