#pragma once

#include <complex>
#include <functional>
#include <stdexcept>
#include <string>
#include <vector>

// Analytic error-budget formulas and the budget table assembly.
namespace lsgate::errors {

struct AtomicRates {
  double gamma_d = 0;  // rad/s, D-state decay (1 / 52.7 ms default upstream)
  double gamma_p = 0;  // rad/s, P-state decay scale (enters only via the
                       // calibrated Raman coefficient below)
  // eps_P = p_scatter_coeff * Delta at fixed gate time; the coefficient is a
  // calibration input, not an ab-initio atomic prediction
  double p_scatter_coeff = 0;  // 1 / (rad/s)

  void validate() const {
    if (gamma_d <= 0) throw std::invalid_argument("gamma_d must be positive");
  }
};

// eps_gamma^D = 2 pi (Gamma/Delta) sqrt(K) / eta: every D-scatter event
// (Raman or Rayleigh) projects the qubit, so error = total rate x gate time.
double d_scatter_error(double gamma_d, double delta, int loops, double eta);

// Monotone-increasing Raman error off the P states at fixed gate time.
double p_scatter_error(const AtomicRates& rates, double delta);

struct DetuningOptimum {
  double delta_star;      // rad/s
  double eps_min;         // combined spontaneous-emission floor
  double power_required;  // W, from the fixed-gate-time constraint P ~ Delta
};

// Minimizes eps_D(Delta) + eps_P(Delta) by golden section over the bracket.
// power reference: (p_ref, delta_ref) holds the gate time fixed, so P scales
// linearly with Delta.
DetuningOptimum optimize_detuning(double gamma_d, int loops, double eta,
                                  const AtomicRates& rates, double delta_lo,
                                  double delta_hi, double p_ref, double delta_ref);

// P = P0 (eps0 t0) / (eps tg): required power at fixed error target and gate
// time, independent of the linewidth.
double power_scaling(double p0, double eps0, double t0, double eps_target,
                     double t_gate);

// Microscopic required power P ~ Omega Delta / Gamma normalized to a reference
// operating point; invariant under Gamma -> Gamma/s with Delta -> Delta/s.
double required_power(double omega, double delta, double gamma, double p_ref,
                      double omega_ref, double delta_ref, double gamma_ref);

// |int_0^t g(t') e^{i detuning t'} dt'|^2 sampled on a uniform grid
// (second-order perturbation theory for an off-resonant coupling).
std::vector<double> perturbative_population(const std::function<double(double)>& g_of_t,
                                            double detuning, double t_final,
                                            int samples);

// eps_phi = eps_ramsey (4 g^2 / Delta^2)^2: spin-echo-filtered laser phase
// noise enters through the intensity-to-Stark-shift transfer factor squared.
double phase_noise_error(double eps_ramsey, double g, double delta);

// eps_ramsey = int S_phi(w) F(w) dw with the two-arm spin-echo filter function
// F(w) = (8/w^2) sin^4(w T/4) for total free evolution T (normalization
// documented with the implementation).
double ramsey_error_from_spectrum(const std::function<double(double)>& s_phi,
                                  double t_total, double w_max, int samples);

double com_heating_error(double kappa_com, double t_gate, double p_com);

// Stand-in first-order sensitivity of a K-loop gate to single-quantum heating:
// eps = kappa t_gate / (2K), upper-bound semantics.
double gate_mode_heating_error(double kappa_gate, double t_gate, int loops);

enum class Provenance { analytic, simulated, external_input };

struct BudgetEntry {
  std::string mechanism;
  double value;
  Provenance provenance;
};

struct ErrorBudget {
  std::vector<BudgetEntry> top;     // non-technical: spontaneous emission,
                                    // off-resonant + Lamb-Dicke, total, min
  std::vector<BudgetEntry> bottom;  // technical: leakage, phase noise, heating,
                                    // microwaves, total
  double top_total = 0;
  double top_min = 0;
  double bottom_total = 0;
};

struct BudgetInputs {
  double gamma_d = 0;      // rad/s
  double delta = 0;        // rad/s
  int loops = 2;
  double eta = 0;
  AtomicRates rates;
  double offres_ld_error = -1;  // simulated stage total; < 0 marks missing
  bool offres_simulated = true;
  double eps_ramsey = 0;
  double g = 0;            // rad/s
  double kappa_com = 0;    // quanta/s
  double kappa_gate = 0;   // quanta/s
  double p_com = 0;
  double t_gate = 0;       // s
  double leakage = -1;     // external measured preset; < 0 marks missing
  double microwave_error = -1;
  double delta_lo = 0, delta_hi = 0;  // optimization bracket for the min row
  double p_ref = 0, delta_ref = 0;
};

// Builds the two-section budget; throws std::runtime_error naming the first
// missing entry.
ErrorBudget assemble_budget(const BudgetInputs& in);

std::string format_budget(const ErrorBudget& budget);

}  // namespace lsgate::errors
