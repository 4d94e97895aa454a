#pragma once

#include <cmath>
#include <numbers>
#include <vector>

#include "dsvb/data.hpp"
#include "dsvb/rng.hpp"

namespace dsvb {

struct UnstableConfig : Error {
  using Error::Error;
};

enum class ContactMode { tip, surface };
enum class ActuationPattern { oscillatory, random_hold };

inline const char* to_string(ContactMode m) { return m == ContactMode::tip ? "tip" : "surface"; }
inline const char* to_string(ActuationPattern a) {
  return a == ActuationPattern::oscillatory ? "oscillatory" : "random";
}

/// Planar serial chain of torsional spring-damper joints driven by
/// pressure-proportional torques, pressed against a compliant circular
/// obstacle. Pressure plus a flex-style curvature sum are the measurements;
/// link endpoints and the two-axis contact force are the states.
struct SynthConfig {
  int n_links = 5;
  double link_length = 0.04;        // m
  double joint_inertia = 1e-4;      // kg m^2
  double joint_stiffness = 0.02;    // N m / rad
  double joint_damping = 3e-3;      // N m s / rad
  double pressure_torque_gain = 1.2e-2;  // N m per unit pressure
  ContactMode contact = ContactMode::tip;
  double contact_stiffness = 3.0;   // N / m penetration
  double bulb_x = 0.05, bulb_z = 0.13, bulb_radius = 0.07;
  // surface mode: monitored point drifts along the chain arclength and the
  // whole finger rides a bounded vertical random walk (arm repositioning)
  double surface_drift_std = 0.004;          // m per output sample
  double surface_min_fraction = 0.55;        // lower arclength bound
  double surface_base_z_std = 1e-3;          // m per output sample
  double surface_base_z_bound = 0.01;        // reflected walk bound
  ActuationPattern actuation = ActuationPattern::oscillatory;
  double pressure_floor = 0.3;
  double osc_frequency_hz = 0.05;
  double osc_amp_min = 0.7, osc_amp_max = 1.0;
  double hold_min_s = 0.5, hold_max_s = 3.0;
  double hold_filter_tau_s = 0.3;
  double flex_noise_std = 0.01;    // rad, added to the curvature sum
  double marker_noise_std = 1.5e-3;  // m, camera-grade noise on marker labels
  double force_noise_std = 2e-3;   // N, load-cell noise on force labels
  std::uint64_t seed = 1;
  Index samples = 5000;
  double sample_rate_hz = 10.0;
  int substeps = 50;
};

/// Defaults tuned so the two contact modes produce clearly distinct pose and
/// force families under the same pressure range.
inline SynthConfig synth_config_for(ContactMode mode, ActuationPattern actuation,
                                    std::uint64_t seed, Index samples) {
  SynthConfig cfg;
  cfg.contact = mode;
  cfg.actuation = actuation;
  cfg.seed = seed;
  cfg.samples = samples;
  if (mode == ContactMode::surface) {
    cfg.bulb_x = 0.085;
    cfg.bulb_z = 0.06;
    cfg.bulb_radius = 0.06;
    cfg.contact_stiffness = 25.0;
  }
  return cfg;
}

/// Per-sample contact internals, recorded for the penalty-contact oracle.
struct SynthTraceStep {
  double gap = 0.0;           // point-to-bulb surface distance; negative = penetration
  double force_x = 0.0;       // force on the chain
  double force_z = 0.0;
  double normal_x = 0.0;      // unit normal (bulb centre -> contact point)
  double normal_z = 0.0;
  double pressure = 0.0;
};

namespace detail {

struct ChainState {
  std::vector<double> theta;  // joint angles
  std::vector<double> omega;  // joint velocities
};

struct ChainGeometry {
  std::vector<double> joint_x, joint_z;  // joint positions (base of each link)
  std::vector<double> end_x, end_z;      // link endpoints
  std::vector<double> cum_angle;
};

inline ChainGeometry chain_geometry(const std::vector<double>& theta, double link_length,
                                    double base_z = 0.0) {
  const int n = static_cast<int>(theta.size());
  ChainGeometry g;
  g.joint_x.resize(n);
  g.joint_z.resize(n);
  g.end_x.resize(n);
  g.end_z.resize(n);
  g.cum_angle.resize(n);
  double x = 0.0, z = base_z, a = 0.0;
  for (int j = 0; j < n; ++j) {
    g.joint_x[j] = x;
    g.joint_z[j] = z;
    a += theta[j];
    g.cum_angle[j] = a;
    x += link_length * std::cos(a);
    z += link_length * std::sin(a);
    g.end_x[j] = x;
    g.end_z[j] = z;
  }
  return g;
}

/// Point at arclength s from the base, plus the index of the link it lies on.
inline void point_at_arclength(const ChainGeometry& g, double link_length, double s, double& px,
                               double& pz, int& link) {
  const int n = static_cast<int>(g.end_x.size());
  link = std::min(static_cast<int>(s / link_length), n - 1);
  const double local = s - link * link_length;
  px = g.joint_x[link] + local * std::cos(g.cum_angle[link]);
  pz = g.joint_z[link] + local * std::sin(g.cum_angle[link]);
}

struct ContactResult {
  double gap = 0.0;
  double fx = 0.0, fz = 0.0;   // force on the chain
  double nx = 0.0, nz = 0.0;
  double px = 0.0, pz = 0.0;   // contact point
  int link = 0;
  bool active = false;
};

inline ContactResult evaluate_contact(const SynthConfig& cfg, const ChainGeometry& g,
                                      double arclength) {
  ContactResult r;
  point_at_arclength(g, cfg.link_length, arclength, r.px, r.pz, r.link);
  const double dx = r.px - cfg.bulb_x, dz = r.pz - cfg.bulb_z;
  const double dist = std::sqrt(dx * dx + dz * dz);
  r.gap = dist - cfg.bulb_radius;
  if (r.gap < 0.0 && dist > 1e-12) {
    r.nx = dx / dist;
    r.nz = dz / dist;
    const double magnitude = cfg.contact_stiffness * (-r.gap);
    r.fx = magnitude * r.nx;
    r.fz = magnitude * r.nz;
    r.active = true;
  }
  return r;
}

/// Pressure command generator for the two actuation patterns.
class PressureSignal {
 public:
  PressureSignal(const SynthConfig& cfg, Rng rng) : cfg_(cfg), rng_(rng) {
    amplitude_ = rng_.uniform(cfg.osc_amp_min, cfg.osc_amp_max);
    hold_level_ = rng_.uniform(0.0, 1.0);
    hold_remaining_ = rng_.uniform(cfg.hold_min_s, cfg.hold_max_s);
    filtered_ = 0.0;
  }

  double sample(double t, double dt) {
    if (cfg_.actuation == ActuationPattern::oscillatory) {
      const double period = 1.0 / cfg_.osc_frequency_hz;
      const int cycle = static_cast<int>(t / period);
      if (cycle != last_cycle_) {
        amplitude_ = rng_.uniform(cfg_.osc_amp_min, cfg_.osc_amp_max);
        last_cycle_ = cycle;
      }
      const double phase = 2.0 * std::numbers::pi * cfg_.osc_frequency_hz * t;
      return cfg_.pressure_floor +
             (amplitude_ - cfg_.pressure_floor) * 0.5 * (1.0 - std::cos(phase));
    }
    hold_remaining_ -= dt;
    if (hold_remaining_ <= 0.0) {
      hold_level_ = rng_.uniform(cfg_.pressure_floor, 1.0);
      hold_remaining_ = rng_.uniform(cfg_.hold_min_s, cfg_.hold_max_s);
    }
    const double alpha = dt / (cfg_.hold_filter_tau_s + dt);
    filtered_ += alpha * (hold_level_ - filtered_);
    return filtered_;
  }

 private:
  SynthConfig cfg_;
  Rng rng_;
  double amplitude_;
  int last_cycle_ = 0;
  double hold_level_;
  double hold_remaining_;
  double filtered_;
};

inline void check_stability(const SynthConfig& cfg) {
  const double dt = 1.0 / (cfg.sample_rate_hz * cfg.substeps);
  const double total_length = cfg.n_links * cfg.link_length;
  const double torsional_contact = cfg.contact_stiffness * total_length * total_length;
  const double omega_max =
      std::sqrt((cfg.joint_stiffness + torsional_contact) / cfg.joint_inertia);
  if (dt * omega_max > 0.25)
    throw UnstableConfig("time step " + std::to_string(dt) + " s too coarse for stiffness (dt*w=" +
                         std::to_string(dt * omega_max) + " > 0.25); raise substeps");
  if (dt * cfg.joint_damping / cfg.joint_inertia > 1.0)
    throw UnstableConfig("time step too coarse for damping");
}

}  // namespace detail

/// Simulates the chain and emits a labeled dataset in the soft-finger
/// schema. Endpoints fill the first n_links marker slots; the rest stay
/// zero. `trace`, when non-null, receives per-sample contact internals.
inline SequenceDataset synth_generate(const SynthConfig& cfg,
                                      std::vector<SynthTraceStep>* trace = nullptr) {
  detail::check_stability(cfg);
  if (cfg.n_links < 1 || cfg.n_links > static_cast<int>(kMarkerCount))
    throw UnstableConfig("n_links must be in [1, 10]");

  Rng base(cfg.seed);
  detail::PressureSignal pressure(cfg, base.fork("pressure"));
  Rng noise_rng = base.fork("flex_noise");
  Rng label_noise_rng = base.fork("label_noise");
  Rng drift_rng = base.fork("contact_drift");

  const double dt = 1.0 / (cfg.sample_rate_hz * cfg.substeps);
  const double total_length = cfg.n_links * cfg.link_length;
  const double min_arclength = cfg.surface_min_fraction * total_length;

  detail::ChainState state;
  state.theta.assign(cfg.n_links, 0.0);
  state.omega.assign(cfg.n_links, 0.0);
  double arclength = cfg.contact == ContactMode::tip
                         ? total_length
                         : 0.5 * (min_arclength + total_length);
  double base_z = 0.0;

  SequenceDataset ds;
  ds.sample_rate_hz = cfg.sample_rate_hz;
  ds.measurements.resize(cfg.samples, kMeasurementDim);
  MatrixRM states(cfg.samples, kStateDim);
  states.setZero();
  if (trace) trace->assign(cfg.samples, SynthTraceStep{});

  double t = 0.0;
  for (Index sample = 0; sample < cfg.samples; ++sample) {
    double p = 0.0;
    for (int sub = 0; sub < cfg.substeps; ++sub) {
      p = pressure.sample(t, dt);
      detail::ChainGeometry geom = detail::chain_geometry(state.theta, cfg.link_length, base_z);
      detail::ContactResult contact = detail::evaluate_contact(cfg, geom, arclength);
      for (int j = 0; j < cfg.n_links; ++j) {
        double torque = cfg.pressure_torque_gain * p - cfg.joint_stiffness * state.theta[j] -
                        cfg.joint_damping * state.omega[j];
        if (contact.active && j <= contact.link) {
          // Jacobian-transpose mapping of the contact force onto joint j:
          // the point rotates about the joint position.
          const double rx = contact.px - geom.joint_x[j];
          const double rz = contact.pz - geom.joint_z[j];
          torque += -rz * contact.fx + rx * contact.fz;
        }
        state.omega[j] += dt * torque / cfg.joint_inertia;
      }
      for (int j = 0; j < cfg.n_links; ++j) state.theta[j] += dt * state.omega[j];
      t += dt;
    }

    // sample the output-rate channels from the post-step configuration
    detail::ChainGeometry geom = detail::chain_geometry(state.theta, cfg.link_length, base_z);
    detail::ContactResult contact = detail::evaluate_contact(cfg, geom, arclength);

    double flex = 0.0;
    for (int j = 0; j < cfg.n_links; ++j) flex += state.theta[j];
    if (cfg.flex_noise_std > 0.0) flex += cfg.flex_noise_std * noise_rng.normal();

    ds.measurements(sample, 0) = p;
    ds.measurements(sample, 1) = flex;
    for (int j = 0; j < cfg.n_links; ++j) {
      states(sample, 2 * j) = geom.end_x[j];
      states(sample, 2 * j + 1) = geom.end_z[j];
      if (cfg.marker_noise_std > 0.0) {
        states(sample, 2 * j) += cfg.marker_noise_std * label_noise_rng.normal();
        states(sample, 2 * j + 1) += cfg.marker_noise_std * label_noise_rng.normal();
      }
    }
    // load-cell reading: reaction force on the obstacle
    states(sample, kStateDim - 2) = -contact.fx;
    states(sample, kStateDim - 1) = -contact.fz;
    if (cfg.force_noise_std > 0.0) {
      states(sample, kStateDim - 2) += cfg.force_noise_std * label_noise_rng.normal();
      states(sample, kStateDim - 1) += cfg.force_noise_std * label_noise_rng.normal();
    }

    if (trace) {
      auto& ts = (*trace)[sample];
      ts.gap = contact.gap;
      ts.force_x = contact.fx;
      ts.force_z = contact.fz;
      ts.normal_x = contact.nx;
      ts.normal_z = contact.nz;
      ts.pressure = p;
    }

    if (cfg.contact == ContactMode::surface) {
      arclength += cfg.surface_drift_std * drift_rng.normal();
      // reflect into the admissible span
      if (arclength > total_length) arclength = 2.0 * total_length - arclength;
      if (arclength < min_arclength) arclength = 2.0 * min_arclength - arclength;
      arclength = std::min(std::max(arclength, min_arclength), total_length);
      base_z += cfg.surface_base_z_std * drift_rng.normal();
      const double bound = cfg.surface_base_z_bound;
      if (base_z > bound) base_z = 2.0 * bound - base_z;
      if (base_z < -bound) base_z = -2.0 * bound - base_z;
      base_z = std::min(std::max(base_z, -bound), bound);
    }
  }
  ds.states = std::move(states);
  return ds;
}

}  // namespace dsvb
