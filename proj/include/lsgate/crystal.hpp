#pragma once

#include <array>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

// Two-ion crystal geometry, normal modes, and Lamb-Dicke parameters.
namespace lsgate::crystal {

struct TrapConfig {
  double axial_freq = 0;     // rad/s
  double radial_freq_y = 0;  // rad/s
  double radial_freq_z = 0;  // rad/s
  double ion_mass = 0;       // kg
  int ion_count = 2;
  double magnetic_field = 0;  // Gauss

  // throws std::invalid_argument on non-positive frequencies, ion_count != 2,
  // or radial <= axial (zigzag instability of the linear crystal)
  void validate() const;
};

enum class Axis { x = 0, y = 1, z = 2 };
enum class ModeLabel { com = 0, str = 1 };

struct Mode {
  Axis axis;
  ModeLabel label;
  double frequency;            // rad/s
  std::array<double, 2> b;     // participation per ion, unit norm
};

struct ModeSpectrum {
  // fixed order: (x,com),(x,str),(y,com),(y,str),(z,com),(z,str)
  std::vector<Mode> modes;
  std::array<double, 2> positions{};  // equilibrium x_j along the trap axis, m
  double ion_mass = 0;                // kg, carried for Lamb-Dicke evaluation

  double spacing() const { return positions[1] - positions[0]; }
  const Mode& mode(Axis axis, ModeLabel label) const;
  int mode_index(Axis axis, ModeLabel label) const;
};

// Diagonalizes the per-axis 2x2 stiffness matrices about the two-ion equilibrium.
// Equilibrium spacing d = (e^2 / (2 pi eps0 m w_x^2))^(1/3).
ModeSpectrum normal_modes(const TrapConfig& trap);

struct LambDickeSet {
  Eigen::Vector3d delta_k = Eigen::Vector3d::Zero();  // rad/m
  // eta[ion][mode], mode order matching ModeSpectrum::modes
  std::array<std::array<double, 6>, 2> eta{};
  int gate_mode = 1;  // axial stretch index

  // |eta_j| of the gate mode; equals |dk| sqrt(hbar/(4 m w_str)) when |B_j| = 1/sqrt(2)
  double gate_eta() const { return std::abs(eta[0][gate_mode]); }
};

// eta_j^(mode) = (k . axis_unit) B_j sqrt(hbar / (2 m w)) for an arbitrary wavevector.
LambDickeSet lamb_dicke(const ModeSpectrum& spectrum, const Eigen::Vector3d& delta_k);

}  // namespace lsgate::crystal
