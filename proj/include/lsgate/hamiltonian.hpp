#pragma once

#include <array>
#include <complex>
#include <cstdint>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "lsgate/crystal.hpp"

// Time-dependent Hamiltonians on the truncated ion (x) phonon space, in the
// interaction picture of the static ion + phonon energies: every matrix
// element carries one net angular frequency, so H(t) is a sparse term list
// weighted by phasors and the large static diagonals never enter the norm.
namespace lsgate::hamiltonian {

using complexd = std::complex<double>;

enum class Tier { full, lightshift, sdf };

// internal level order per ion; two-level tiers use the first two
enum Level : int { lvl_down = 0, lvl_up = 1, lvl_em = 2, lvl_ep = 3, lvl_e0 = 4 };

struct LevelScheme {
  double delta = 0.0;       // rad/s, e+- split to +-delta around e0
  bool include_e0 = false;
  void validate() const;
  int levels() const { return include_e0 ? 5 : 4; }
  // Zeeman relation for the D3/2 stretch states, 1.4 MHz/Gauss
  static LevelScheme from_field(double gauss);
};

struct BeamPair {
  double g_a = 0.0, g_b = 0.0;   // rad/s, |coupling| to each of e+-
  // per-beam coupling phases onto {e-, e+}; the quadrature default makes the
  // eliminated shift a pure travelling sin wave
  std::array<complexd, 2> phase_a{complexd(1, 0), complexd(1, 0)};
  std::array<complexd, 2> phase_b{complexd(0, -1), complexd(0, 1)};
  double mu = 0.0;               // beat angular frequency, rad/s
  double phi_a = 0.0, phi_b = 0.0;
  Eigen::Vector3d k_a = Eigen::Vector3d::Zero();  // rad/m
  Eigen::Vector3d k_b = Eigen::Vector3d::Zero();
  double e0_leak_rabi = 0.0;     // full Rabi to e0, beam A only
  bool symmetric = true;
  bool snap = true;              // commensurate ion-spacing adjustment

  double beat_phase() const { return phi_a - phi_b; }
  static BeamPair standard(double g, double mu, const Eigen::Vector3d& k_a,
                           const Eigen::Vector3d& k_b);
};

// gate mode first, spectators after; (mode id in ModeSpectrum order, n_max)
struct Truncations {
  std::vector<std::pair<int, int>> modes;
  int max_dimension = 10000;
};

// static perturbations shared by all tiers
struct DriveExtras {
  double qubit_shift = 0.0;      // rad/s on the qubit splitting, always on
  double mw_rabi = 0.0;          // rad/s, carrier coupling, microwave channel
};

struct BasisLayout {
  int ion_levels = 4;
  std::vector<int> mode_ids;     // ModeSpectrum indices
  std::vector<int> mode_dims;    // n_max + 1
  int mode_space = 1;
  int dim = 0;

  void finalize();               // fills mode_space and dim
  int fock_index(std::span<const int> n) const;
  int index(int s1, int s2, std::span<const int> n) const;
  void decode(int idx, int& s1, int& s2, std::vector<int>& n) const;
};

enum class Channel : std::uint8_t { laser, microwave, fixed };

// one matrix element of the forward half A of H = A + A^dag; apply() adds the
// mirror, so Hermitian operators store their diagonal at half weight
struct Term {
  int row, col;
  complexd coeff;
  int freq;                      // index into freqs, element factor e^{-i nu t}
  Channel channel;
  std::uint8_t env_power;        // field envelope exponent, 0..2
};

// field-scale envelope values per drive channel at one instant
struct ChannelEnv {
  double laser = 1.0;
  complexd microwave = 0.0;      // magnitude and pulse phase together
};

// a linear combination sum_s scale_s H(t_s), as used by commutator-free steps
struct WeightSample {
  double time;
  double scale;
  ChannelEnv env;
};

struct OperatorModel {
  Tier tier = Tier::sdf;
  BasisLayout layout;
  std::vector<double> freqs;     // rad/s, signed, unique
  std::vector<Term> terms;
  bool elimination_warning = false;

  int dim() const { return layout.dim; }
  void weights(std::span<const WeightSample> samples,
               std::vector<complexd>& w) const;
  // y = sum_k (w_k E_k + conj(w_k) E_k^dag) x
  void apply(const std::vector<complexd>& w, const Eigen::VectorXcd& x,
             Eigen::VectorXcd& y) const;
  Eigen::MatrixXcd dense(double t, const ChannelEnv& env = {1.0, 0.0}) const;
  // laser field rescale: coeff *= s^env_power on laser-channel terms
  OperatorModel scaled(double field_scale) const;
  // drop terms below rel_floor * max |coeff| and re-census the frequencies
  OperatorModel compressed(double rel_floor) const;
  double max_frequency(double coeff_floor_rel = 1e-10) const;
  double one_norm_bound() const;
};

// chi = |dk_x| d / 2pi; integer chi puts both ions at the same SDF phase, so
// |up,up> leaves the stretch mode undriven
struct Commensurability {
  double chi_raw;
  int chi_snapped;
  double factor;                 // wavenumber rescale, chi_snapped / chi_raw
};
Commensurability commensurability(const crystal::ModeSpectrum& spectrum,
                                  const Eigen::Vector3d& delta_k);

// exp(i theta (a + a^dag)) on a truncated Fock space, exact in theta
Eigen::MatrixXcd displacement_phase(double theta, int dim);

// eliminated-shift prefactor 4 g^2 Delta / (Delta^2 - mu^2/4)
double lightshift_prefactor(double g, double delta, double mu);

OperatorModel build_full(const crystal::ModeSpectrum& spectrum,
                         const crystal::LambDickeSet& lde,
                         const BeamPair& beams, const LevelScheme& scheme,
                         const Truncations& trunc,
                         const DriveExtras& extras = {});

OperatorModel build_lightshift(const crystal::ModeSpectrum& spectrum,
                               const crystal::LambDickeSet& lde,
                               const BeamPair& beams, const LevelScheme& scheme,
                               const Truncations& trunc,
                               const DriveExtras& extras = {},
                               double warn_ratio = 0.2);

// delta_signed = mu - w_str; omega is inferred from the beams as kappa/4
OperatorModel build_sdf(const crystal::ModeSpectrum& spectrum,
                        const crystal::LambDickeSet& lde, const BeamPair& beams,
                        const LevelScheme& scheme, const Truncations& trunc,
                        double delta_signed, const DriveExtras& extras = {});

}  // namespace lsgate::hamiltonian
