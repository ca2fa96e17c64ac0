#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "lsgate/crystal.hpp"
#include "lsgate/errors.hpp"
#include "lsgate/pulse.hpp"

// Run configuration. Files carry SI-adjacent units (Hz, us, nm, Gauss, W);
// the accessor methods convert to the internal angular/seconds convention so
// the factor of 2pi lives in exactly one place.
namespace lsgate::config {

struct ConfigError : std::runtime_error {
  explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

struct TrapSection {
  double axial_freq_hz = 1.16e6;
  double radial_freq_y_hz = 2.57e6;
  double radial_freq_z_hz = 3.05e6;
  double ion_mass_u = 170.935782;
  double magnetic_field_gauss = 5.57;
};

struct BeamSection {
  double wavelength_nm = 435.5;
  // each beam makes this angle with the trap axis; the pair is mirror
  // symmetric so delta_k stays axial
  double axis_angle_deg = 45.0;
  // orientation of the beam plane's transverse direction between the two
  // radial principal axes; 45 deg spreads recoil over all four radial modes
  double transverse_azimuth_deg = 45.0;
  double coupling_hz = 0.76e6;       // g, single beam to e+-
  double detuning_hz = 7.8e6;        // Delta, mean detuning from e+-
  int sideband_sign = -1;            // -1: beat note below the stretch mode
  double e0_leak_rabi_hz = 0.0;      // full Rabi to e0 on beam A, 0 disables
  bool snap_commensurate = true;     // tune spacing to an integer SDF period
};

struct ScheduleSection {
  int loops = 2;
  double loop_time_us = 45.0;
  double ramp_time_us = 2.0;
  std::string shape = "sin2_ramp";   // or "square"
  std::string envelope_scale = "field";  // ramp profile applied to field or intensity
  bool echo = true;
  bool mw_ideal = true;
  double mw_pi_time_us = 5.0;
};

struct TruncationSection {
  int n_max_gate = 10;
  int n_max_axial_com = 1;
  int n_max_radial = 1;
  int max_dimension = 10000;
};

struct SimulationSection {
  std::string tier = "sdf";          // "lightshift" | "sdf" | "full"
  double tolerance = 1e-10;          // accumulated propagation error target
  int samples_per_fast_period = 20;
  double elimination_ratio_warn = 0.2;
  double thermal_nbar = 0.0;
  bool frame_optimize = false;       // local-Z frame search in fidelities
  double qubit_shift_hz = 0.0;       // static sigma_z detuning, echo studies
};

struct ErrorModelSection {
  double d_lifetime_ms = 52.7;
  double p_linewidth_hz = 19.6e6;
  double p_scatter_coeff = 3.9959229057217e-15;  // eps_gamma^P per rad/s
  int scatter_events = 2;
  double eps_ramsey = 0.21;
  double com_heating_rate = 3e3;     // quanta/s on the axial com
  double gate_heating_rate = 12.0;   // quanta/s on the stretch mode
  double com_coupling = 3e-4;        // error per com quantum
  double laser_power_w = 0.1;
  double microwave_error = 2e-4;
};

struct SrbSection {
  std::vector<int> lengths = {1, 3, 7};
  int sequences_per_length = 33;
  int shots = 500;
  double eps_1q = 9e-5;
  std::string noise = "depolarizing";  // or "none"
  double clifford_error = 1e-2;
};

struct RunConfig {
  int version = 1;
  TrapSection trap;
  BeamSection beams;
  ScheduleSection schedule;
  TruncationSection truncations;
  SimulationSection simulation;
  ErrorModelSection error_model;
  SrbSection srb;
  std::string output_dir = "out";
  std::uint64_t seed = 1;

  // internal-unit views
  crystal::TrapConfig trap_config() const;
  pulse::GateSchedule gate_schedule() const;
  errors::AtomicRates atomic_rates() const;
  double coupling() const;           // rad/s
  double detuning() const;           // rad/s
  double wavenumber() const;         // |k| of one beam, 1/m
  Eigen::Vector3d beam_direction(int which) const;  // 0: A, 1: B, unit
  Eigen::Vector3d delta_k() const;   // k_A - k_B, axial by construction
  double gamma_d() const;            // rad/s
  double mw_pi_time() const;         // s
  double qubit_shift() const;        // rad/s
  double e0_leak_rabi() const;       // rad/s, full Rabi
};

RunConfig paper_defaults();

// strict parse: unknown keys rejected with their dotted path; missing keys
// fall back to paper defaults
RunConfig parse(const nlohmann::json& doc);
RunConfig load(const std::string& path);

nlohmann::ordered_json to_json(const RunConfig& cfg);

// dot-path assignment for --set key=value; the path must exist in the schema
void apply_override(nlohmann::ordered_json& doc, const std::string& path,
                    const std::string& value);

// hash of the semantic content (parse then re-serialize), for manifests
std::string config_hash(const RunConfig& cfg);

}  // namespace lsgate::config
