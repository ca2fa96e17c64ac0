#include "lsgate/errors.hpp"

#include <cmath>
#include <complex>
#include <cstdio>

#include "lsgate/constants.hpp"

namespace lsgate::errors {

namespace cn = lsgate::constants;

double d_scatter_error(double gamma_d, double delta, int loops, double eta) {
  if (gamma_d <= 0 || delta <= 0 || loops < 1 || eta <= 0)
    throw std::invalid_argument("d_scatter_error requires positive inputs");
  return cn::two_pi * (gamma_d / delta) * std::sqrt(static_cast<double>(loops)) / eta;
}

double p_scatter_error(const AtomicRates& rates, double delta) {
  if (delta < 0) throw std::invalid_argument("detuning must be non-negative");
  return rates.p_scatter_coeff * delta;
}

DetuningOptimum optimize_detuning(double gamma_d, int loops, double eta,
                                  const AtomicRates& rates, double delta_lo,
                                  double delta_hi, double p_ref, double delta_ref) {
  if (delta_lo <= 0 || delta_hi <= delta_lo)
    throw std::invalid_argument("bad optimization bracket");
  auto total = [&](double d) {
    return d_scatter_error(gamma_d, d, loops, eta) + p_scatter_error(rates, d);
  };
  // unimodality: decreasing at the left edge, increasing at the right edge
  double h_lo = delta_lo * 1e-6, h_hi = delta_hi * 1e-6;
  if (total(delta_lo + h_lo) >= total(delta_lo) ||
      total(delta_hi) <= total(delta_hi - h_hi))
    throw std::runtime_error(
        "optimization failed: error not unimodal inside the bracket");

  const double gr = 0.5 * (std::sqrt(5.0) - 1.0);
  double a = delta_lo, b = delta_hi;
  double c = b - gr * (b - a), d = a + gr * (b - a);
  double fc = total(c), fd = total(d);
  while (b - a > 1e-10 * b) {
    if (fc < fd) {
      b = d; d = c; fd = fc;
      c = b - gr * (b - a); fc = total(c);
    } else {
      a = c; c = d; fc = fd;
      d = a + gr * (b - a); fd = total(d);
    }
  }
  double dstar = 0.5 * (a + b);
  return {dstar, total(dstar), p_ref * dstar / delta_ref};
}

double power_scaling(double p0, double eps0, double t0, double eps_target,
                     double t_gate) {
  if (eps_target <= 0 || t_gate <= 0)
    throw std::invalid_argument("error target and gate time must be positive");
  return p0 * (eps0 * t0) / (eps_target * t_gate);
}

double required_power(double omega, double delta, double gamma, double p_ref,
                      double omega_ref, double delta_ref, double gamma_ref) {
  // g^2 = Omega Delta and g^2 ~ P Gamma, so P ~ Omega Delta / Gamma
  return p_ref * (omega * delta / gamma) / (omega_ref * delta_ref / gamma_ref);
}

std::vector<double> perturbative_population(const std::function<double(double)>& g_of_t,
                                            double detuning, double t_final,
                                            int samples) {
  if (samples < 2) throw std::invalid_argument("need at least two samples");
  std::vector<double> out(samples);
  double h = t_final / (samples - 1);
  std::complex<double> acc = 0.0;
  double prev = g_of_t(0.0);
  out[0] = 0.0;
  for (int i = 1; i < samples; ++i) {
    double t0 = (i - 1) * h, t1 = i * h, tm = t0 + 0.5 * h;
    double cur = g_of_t(t1);
    // Simpson panel for int g(t) e^{i detuning t} dt
    using namespace std::complex_literals;
    acc += (h / 6.0) * (prev * std::exp(1i * detuning * t0) +
                        4.0 * g_of_t(tm) * std::exp(1i * detuning * tm) +
                        cur * std::exp(1i * detuning * t1));
    prev = cur;
    out[i] = std::norm(acc);
  }
  return out;
}

double phase_noise_error(double eps_ramsey, double g, double delta) {
  if (eps_ramsey < 0 || eps_ramsey > 1)
    throw std::invalid_argument("eps_ramsey must lie in [0,1]");
  double transfer = 4.0 * g * g / (delta * delta);
  return eps_ramsey * transfer * transfer;
}

double ramsey_error_from_spectrum(const std::function<double(double)>& s_phi,
                                  double t_total, double w_max, int samples) {
  // two-arm echo filter: F(w) = (8 / w^2) sin^4(w T / 4)
  auto f = [t_total](double w) {
    double s = std::sin(0.25 * w * t_total);
    return 8.0 * s * s * s * s / (w * w);
  };
  double h = w_max / samples, acc = 0;
  for (int i = 1; i <= samples; ++i) {
    double w = (i - 0.5) * h;
    acc += s_phi(w) * f(w) * h;
  }
  return acc;
}

double com_heating_error(double kappa_com, double t_gate, double p_com) {
  if (kappa_com < 0 || t_gate < 0 || p_com < 0)
    throw std::invalid_argument("heating inputs must be non-negative");
  return kappa_com * t_gate * p_com;
}

double gate_mode_heating_error(double kappa_gate, double t_gate, int loops) {
  if (kappa_gate < 0 || t_gate < 0 || loops < 1)
    throw std::invalid_argument("heating inputs must be non-negative");
  return kappa_gate * t_gate / (2.0 * loops);
}

ErrorBudget assemble_budget(const BudgetInputs& in) {
  auto missing = [](const char* what) {
    throw std::runtime_error(std::string("budget incomplete: missing ") + what);
  };
  if (in.gamma_d <= 0) missing("gamma_d");
  if (in.delta <= 0) missing("delta");
  if (in.eta <= 0) missing("eta");
  if (in.offres_ld_error < 0) missing("off-resonant + Lamb-Dicke entry");
  if (in.leakage < 0) missing("leakage entry");
  if (in.microwave_error < 0) missing("microwave entry");

  ErrorBudget b;
  double eps_d = d_scatter_error(in.gamma_d, in.delta, in.loops, in.eta);
  double eps_p = p_scatter_error(in.rates, in.delta);
  b.top.push_back({"spontaneous emission", eps_d + eps_p, Provenance::analytic});
  b.top.push_back({"off-resonant + Lamb-Dicke", in.offres_ld_error,
                   in.offres_simulated ? Provenance::simulated
                                       : Provenance::external_input});
  b.top_total = eps_d + eps_p + in.offres_ld_error;
  b.top.push_back({"total", b.top_total, Provenance::analytic});

  auto opt = optimize_detuning(in.gamma_d, in.loops, in.eta, in.rates, in.delta_lo,
                               in.delta_hi, in.p_ref, in.delta_ref);
  // floor keeps the simulated off-resonant entry: larger detunings suppress
  // carrier couplings further, so this is conservative
  b.top_min = opt.eps_min + in.offres_ld_error;
  b.top.push_back({"min", b.top_min, Provenance::analytic});

  b.bottom.push_back({"leakage", in.leakage, Provenance::external_input});
  b.bottom.push_back({"laser phase noise",
                      phase_noise_error(in.eps_ramsey, in.g, in.delta),
                      Provenance::analytic});
  b.bottom.push_back({"gate mode heating",
                      gate_mode_heating_error(in.kappa_gate, in.t_gate, in.loops),
                      Provenance::analytic});
  b.bottom.push_back({"com heating",
                      com_heating_error(in.kappa_com, in.t_gate, in.p_com),
                      Provenance::analytic});
  b.bottom.push_back({"microwaves", in.microwave_error, Provenance::external_input});
  for (const auto& e : b.bottom) b.bottom_total += e.value;
  b.bottom.push_back({"total", b.bottom_total, Provenance::analytic});
  return b;
}

std::string format_budget(const ErrorBudget& budget) {
  auto tag = [](Provenance p) {
    switch (p) {
      case Provenance::analytic: return "analytic";
      case Provenance::simulated: return "simulated";
      default: return "external";
    }
  };
  std::string out;
  char line[128];
  out += "mechanism                     error(1e-4)  provenance\n";
  for (const auto& e : budget.top) {
    std::snprintf(line, sizeof line, "%-28s %10.3f   %s\n", e.mechanism.c_str(),
                  e.value * 1e4, tag(e.provenance));
    out += line;
  }
  out += "----\n";
  for (const auto& e : budget.bottom) {
    std::snprintf(line, sizeof line, "%-28s %10.3f   %s\n", e.mechanism.c_str(),
                  e.value * 1e4, tag(e.provenance));
    out += line;
  }
  return out;
}

}  // namespace lsgate::errors
