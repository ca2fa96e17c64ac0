#pragma once

#include <Eigen/Dense>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "lsgate/config.hpp"
#include "lsgate/crystal.hpp"
#include "lsgate/hamiltonian.hpp"
#include "lsgate/pulse.hpp"

namespace lsgate::evolve {

// The propagator reads the ramp convention from the schedule envelope's
// force_power: 2 means the profile multiplies the laser field (smooth
// carrier turn-on, the default), 1 means it multiplies the intensity
// (field = sqrt(profile), which kinks at turn-on and strands ~5e-5 in the
// excited manifold at gate parameters). Both geometries keep the force
// area at t_loop per loop, so the phase-space loops close either way.
struct PropagateOptions {
  double tol = 1e-10;          // local error per step (Richardson checked)
  int samples_per_fast = 20;   // step cap: samples per strongest-term period
  double t0 = 0;               // absolute start time; phasors never reset
  int max_krylov = 48;
  int check_interval = 8;      // accepted steps between error checks
};

struct StepStats {
  long steps = 0;
  long rejected = 0;
  int max_krylov = 0;
  double max_step_error = 0;   // largest accepted Richardson estimate
  void merge(const StepStats& o);
};

// observer(absolute_time, state) after every accepted step and at t0
using Observer = std::function<void(double, const Eigen::VectorXcd&)>;

StepStats propagate(const hamiltonian::OperatorModel& model,
                    Eigen::VectorXcd& psi, const pulse::GateSchedule& schedule,
                    const PropagateOptions& opt = {},
                    const Observer& observer = {});

struct CalibrateOptions {
  double tol_phase = 1e-8;
  int max_iter = 25;
  PropagateOptions prop{.tol = 1e-9};
  bool assume_exchange = true;  // reuse the up-down loop phase for down-up
};

struct CalibrationResult {
  double field_scale = 1;
  double phase = 0;  // per-loop entangling phase at the returned scale
  int iterations = 0;
};

// Fixed point of s -> s (target/Phi(s))^{1/4} on a single unechoed loop;
// Phi is quartic in s for the pure SDF tier and nearly so otherwise.
CalibrationResult calibrate(const hamiltonian::OperatorModel& model,
                            const pulse::GateSchedule& schedule,
                            double target_phase,
                            const CalibrateOptions& opt = {});

struct ProcessOptions {
  PropagateOptions prop;
  double thermal_nbar = 0;    // gate-mode thermal occupation, spectators cold
  double warn_phase = 0.01;   // per-loop deviation triggering the warning
};

struct GateResult {
  // vacuum-to-vacuum spin block, basis {dd, du, ud, uu}
  Eigen::Matrix4cd process = Eigen::Matrix4cd::Zero();
  // {dd, (du+ud)/sqrt2, uu} block of the same channel
  Eigen::Matrix3cd sym_process = Eigen::Matrix3cd::Zero();
  double avg_fidelity_sym = 0;     // vs diag(1, i, 1), leakage aware
  double avg_fidelity_full = 0;    // vs diag(1, i, i, 1)
  double avg_fidelity_sym_framed = 0;   // after frame-Z optimization
  double avg_fidelity_full_framed = 0;
  double leakage = 0;              // mean population left outside the qubits
  double entangling_phase = 0;     // composite theta01+theta10-theta00-theta11
  bool phase_warning = false;
  StepStats stats;
};

// Kraus reconstruction of the gate channel from the four spin basis columns,
// one set per initial gate-mode Fock state when thermal_nbar > 0.
GateResult gate_process(const hamiltonian::OperatorModel& model,
                        const pulse::GateSchedule& schedule,
                        const ProcessOptions& opt = {});

struct TransientTrace {
  std::vector<std::string> channel;   // "d_states", "mode <id>", ...
  std::vector<double> time;           // uniform grid for the filtered rows
  Eigen::MatrixXd filtered;           // time x channel, moving-average pops
  std::vector<double> peak_filtered;  // per channel
  std::vector<double> final_raw;      // unfiltered populations at the end
  StepStats stats;
};

// Channel populations of a probe state (default |++> x vacuum) along the
// schedule, smoothed with a moving average of the given window to strip the
// optical-detuning oscillation. window <= 0 keeps the raw samples.
TransientTrace transient_populations(const hamiltonian::OperatorModel& model,
                                     const pulse::GateSchedule& schedule,
                                     double filter_window,
                                     const PropagateOptions& opt = {},
                                     const Eigen::VectorXcd* probe = nullptr);

// Everything evolve needs from a run configuration, in simulation units.
struct DriveSetup {
  crystal::ModeSpectrum spectrum;
  crystal::LambDickeSet lde;
  hamiltonian::BeamPair beams;
  hamiltonian::LevelScheme scheme;
  hamiltonian::DriveExtras extras;
  pulse::GateSchedule schedule;
  PropagateOptions prop;
  double delta_signed = 0;  // mu - omega_gate, sign from the sideband choice
  double target_phase = 0;  // pi/4 per loop
  double warn_ratio = 0.2;  // g/Delta ratio flagged by the lightshift builder

  hamiltonian::OperatorModel build(hamiltonian::Tier tier,
                                   const hamiltonian::Truncations& trunc) const;
};

DriveSetup drive_setup(const config::RunConfig& cfg);

// gate mode alone, or gate mode plus the axial com spectator
hamiltonian::Truncations gate_truncations(const config::RunConfig& cfg,
                                          const crystal::ModeSpectrum& spectrum,
                                          bool with_axial_com);

struct StagedResult {
  CalibrationResult calibration;
  GateResult stage1;             // gate error with the axial com spectator
  double stage1_error = 0;       // 1 - avg_fidelity_sym
  TransientTrace transient;      // shaped-pulse channel populations
  // final population of each radial mode simulated as the lone spectator
  std::vector<std::pair<std::string, double>> radial_populations;
  double total = 0;              // stage1_error + sum of radial populations
};

// Calibrate with the axial com spectator, take the gate error there, then
// rerun with each radial mode as the lone spectator at the same drive and
// add its final population.
StagedResult staged_error(const config::RunConfig& cfg, int threads = 1);

enum class BeamSelect { a, b, both };

struct LeakageResult {
  int gates = 0;
  double e0_peak = 0;            // max e0 population reached in any gate
  double e0_final_per_gate = 0;  // mean e0 population left per gate
  double out_final_per_gate = 0; // mean population outside the qubits per gate
  std::vector<double> out_after_gate;  // totals after each repetition
  StepStats stats;
};

// Repeat the gate schedule back to back with one or both beams lit and
// follow the excited-state populations; the e0 channel rides on beam a only.
LeakageResult leakage_experiment(const config::RunConfig& cfg, BeamSelect sel,
                                 int gates = 4);

}  // namespace lsgate::evolve
