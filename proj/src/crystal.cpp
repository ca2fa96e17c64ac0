#include "lsgate/crystal.hpp"

#include <cmath>

#include "lsgate/constants.hpp"

namespace lsgate::crystal {

namespace cn = lsgate::constants;

void TrapConfig::validate() const {
  if (axial_freq <= 0 || radial_freq_y <= 0 || radial_freq_z <= 0)
    throw std::invalid_argument("trap frequencies must be positive");
  if (ion_mass <= 0) throw std::invalid_argument("ion mass must be positive");
  if (ion_count != 2) throw std::invalid_argument("only two-ion crystals are supported");
  if (radial_freq_y <= axial_freq || radial_freq_z <= axial_freq)
    throw std::invalid_argument(
        "structural instability: radial frequency below axial, linear crystal "
        "would buckle into a zigzag");
}

const Mode& ModeSpectrum::mode(Axis axis, ModeLabel label) const {
  return modes[mode_index(axis, label)];
}

int ModeSpectrum::mode_index(Axis axis, ModeLabel label) const {
  return 2 * static_cast<int>(axis) + static_cast<int>(label);
}

namespace {

// Per-axis stiffness/m in units of rad^2/s^2. Coulomb curvature at spacing d is
// e^2/(2 pi eps0 d^3) = m w_x^2 along the axis and half that (opposite sign)
// transverse, giving eigenpairs {w, sqrt(3) w} axial and {w, sqrt(w^2 - w_x^2)}
// radial.
Eigen::Matrix2d axis_stiffness(double trap_w_sq, double coulomb_w_sq, bool axial) {
  double c = axial ? coulomb_w_sq : -0.5 * coulomb_w_sq;
  Eigen::Matrix2d k;
  k << trap_w_sq + c, -c, -c, trap_w_sq + c;
  return k;
}

}  // namespace

ModeSpectrum normal_modes(const TrapConfig& trap) {
  trap.validate();

  double wx2 = trap.axial_freq * trap.axial_freq;
  double d = std::cbrt(cn::elementary_charge * cn::elementary_charge /
                       (2.0 * cn::pi * cn::epsilon0 * trap.ion_mass * wx2));

  ModeSpectrum out;
  out.positions = {-0.5 * d, 0.5 * d};
  out.ion_mass = trap.ion_mass;

  const std::array<double, 3> trap_w = {trap.axial_freq, trap.radial_freq_y,
                                        trap.radial_freq_z};
  for (int ax = 0; ax < 3; ++ax) {
    Eigen::Matrix2d k = axis_stiffness(trap_w[ax] * trap_w[ax], wx2, ax == 0);
    Eigen::SelfAdjointEigenSolver<Eigen::Matrix2d> es(k);
    // classify by eigenvector symmetry, not eigenvalue order: the out-of-phase
    // mode sits above com axially but below it radially
    int com_col = es.eigenvectors()(0, 0) * es.eigenvectors()(1, 0) > 0 ? 0 : 1;
    for (ModeLabel label : {ModeLabel::com, ModeLabel::str}) {
      int col = label == ModeLabel::com ? com_col : 1 - com_col;
      Eigen::Vector2d v = es.eigenvectors().col(col);
      // sign convention: com has both components positive, stretch has B_1 < 0
      // so that B_j = (-1)^j / sqrt(2) with ions numbered from 1
      if (label == ModeLabel::com && v(0) < 0) v = -v;
      if (label == ModeLabel::str && v(0) > 0) v = -v;
      out.modes.push_back(Mode{static_cast<Axis>(ax), label,
                               std::sqrt(es.eigenvalues()(col)), {v(0), v(1)}});
    }
  }
  return out;
}

LambDickeSet lamb_dicke(const ModeSpectrum& spectrum, const Eigen::Vector3d& delta_k) {
  if (delta_k.norm() <= 0) throw std::invalid_argument("wavevector must be nonzero");
  LambDickeSet out;
  out.delta_k = delta_k;
  out.gate_mode = spectrum.mode_index(Axis::x, ModeLabel::str);
  for (int m = 0; m < 6; ++m) {
    const Mode& mode = spectrum.modes[m];
    double k_proj = delta_k(static_cast<int>(mode.axis));
    double zpf = std::sqrt(cn::hbar / (2.0 * spectrum.ion_mass * mode.frequency));
    for (int j = 0; j < 2; ++j) out.eta[j][m] = k_proj * mode.b[j] * zpf;
  }
  return out;
}

}  // namespace lsgate::crystal
