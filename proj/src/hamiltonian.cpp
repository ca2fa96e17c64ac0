#include "lsgate/hamiltonian.hpp"

#include <algorithm>
#include <cmath>
#include <iostream>
#include <map>
#include <stdexcept>

#include "lsgate/constants.hpp"

namespace lsgate::hamiltonian {

namespace cn = lsgate::constants;
using crystal::LambDickeSet;
using crystal::ModeSpectrum;
using Eigen::MatrixXcd;
using Eigen::Vector3d;
using Eigen::VectorXcd;

void LevelScheme::validate() const {
  if (delta <= 0) throw std::invalid_argument("level scheme: delta must be positive");
}

LevelScheme LevelScheme::from_field(double gauss) {
  if (gauss <= 0) throw std::invalid_argument("level scheme: field must be positive");
  return {cn::two_pi * gauss * 1.4e6, false};
}

BeamPair BeamPair::standard(double g, double mu, const Vector3d& k_a,
                            const Vector3d& k_b) {
  BeamPair b;
  b.g_a = b.g_b = g;
  b.mu = mu;
  b.k_a = k_a;
  b.k_b = k_b;
  return b;
}

void BasisLayout::finalize() {
  mode_space = 1;
  for (int d : mode_dims) mode_space *= d;
  dim = ion_levels * ion_levels * mode_space;
}

int BasisLayout::fock_index(std::span<const int> n) const {
  int m = 0;
  for (size_t a = 0; a < mode_dims.size(); ++a) m = m * mode_dims[a] + n[a];
  return m;
}

int BasisLayout::index(int s1, int s2, std::span<const int> n) const {
  return (s1 * ion_levels + s2) * mode_space + fock_index(n);
}

void BasisLayout::decode(int idx, int& s1, int& s2, std::vector<int>& n) const {
  int m = idx % mode_space;
  int s = idx / mode_space;
  s2 = s % ion_levels;
  s1 = s / ion_levels;
  n.assign(mode_dims.size(), 0);
  for (size_t a = mode_dims.size(); a-- > 0;) {
    n[a] = m % mode_dims[a];
    m /= mode_dims[a];
  }
}

Commensurability commensurability(const ModeSpectrum& spectrum,
                                  const Vector3d& delta_k) {
  double chi = std::abs(delta_k[0]) * spectrum.spacing() / cn::two_pi;
  if (chi <= 0)
    throw std::invalid_argument("commensurability: axial delta_k required");
  int snapped = std::max(1, static_cast<int>(std::lround(chi)));
  return {chi, snapped, snapped / chi};
}

MatrixXcd displacement_phase(double theta, int dim) {
  if (dim < 1) throw std::invalid_argument("displacement: empty Fock space");
  Eigen::MatrixXd m = Eigen::MatrixXd::Zero(dim, dim);
  for (int n = 0; n + 1 < dim; ++n)
    m(n, n + 1) = m(n + 1, n) = theta * std::sqrt(n + 1.0);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(m);
  VectorXcd phases(dim);
  for (int i = 0; i < dim; ++i)
    phases(i) = std::exp(complexd(0, es.eigenvalues()(i)));
  return es.eigenvectors() * phases.asDiagonal() *
         es.eigenvectors().transpose();
}

double lightshift_prefactor(double g, double delta, double mu) {
  double denom = delta * delta - 0.25 * mu * mu;
  if (std::abs(denom) <= 1e-9 * delta * delta)
    throw std::domain_error(
        "light shift prefactor singular: |Delta| too close to mu/2");
  return 4.0 * g * g * delta / denom;
}

namespace {

constexpr double ion_energy(const LevelScheme& scheme, int level) {
  return level == lvl_em ? -scheme.delta : level == lvl_ep ? scheme.delta : 0.0;
}

MatrixXcd kron(const MatrixXcd& a, const MatrixXcd& b) {
  MatrixXcd out(a.rows() * b.rows(), a.cols() * b.cols());
  for (int i = 0; i < a.rows(); ++i)
    for (int j = 0; j < a.cols(); ++j)
      out.block(i * b.rows(), j * b.cols(), b.rows(), b.cols()) = a(i, j) * b;
  return out;
}

class model_builder {
 public:
  void add(int row, int col, complexd coeff, double nu, Channel ch, int p) {
    if (coeff == complexd(0, 0)) return;
    rows_.push_back(row);
    cols_.push_back(col);
    coeffs_.push_back(coeff);
    nus_.push_back(nu);
    channels_.push_back(ch);
    powers_.push_back(static_cast<std::uint8_t>(p));
  }

  OperatorModel finish(Tier tier, BasisLayout layout) {
    OperatorModel m;
    m.tier = tier;
    m.layout = std::move(layout);

    double max_c = 0;
    for (const auto& c : coeffs_) max_c = std::max(max_c, std::abs(c));
    double floor = 1e-14 * max_c;

    std::map<double, int> freq_of;
    std::vector<size_t> keep;
    for (size_t k = 0; k < coeffs_.size(); ++k) {
      if (std::abs(coeffs_[k]) < floor) continue;
      freq_of.emplace(nus_[k], 0);
      keep.push_back(k);
    }
    int fi = 0;
    for (auto& [nu, idx] : freq_of) {
      idx = fi++;
      m.freqs.push_back(nu);
    }
    std::stable_sort(keep.begin(), keep.end(), [&](size_t a, size_t b) {
      return std::tie(rows_[a], cols_[a], nus_[a]) <
             std::tie(rows_[b], cols_[b], nus_[b]);
    });
    m.terms.reserve(keep.size());
    for (size_t k : keep)
      m.terms.push_back(Term{rows_[k], cols_[k], coeffs_[k],
                             freq_of.at(nus_[k]), channels_[k], powers_[k]});
    return m;
  }

 private:
  std::vector<int> rows_, cols_;
  std::vector<complexd> coeffs_;
  std::vector<double> nus_;
  std::vector<Channel> channels_;
  std::vector<std::uint8_t> powers_;
};

struct mode_data {
  std::vector<double> freq;   // per layout slot
  std::vector<double> zpf;    // sqrt(hbar / 2 m w)
  std::vector<int> axis;
  std::vector<double> eph;    // Fock-tuple energy, indexed by fock_index
};

BasisLayout make_layout(const ModeSpectrum& spectrum, const Truncations& trunc,
                        int ion_levels) {
  if (trunc.modes.empty())
    throw std::invalid_argument("truncations: at least the gate mode required");
  int gate = spectrum.mode_index(crystal::Axis::x, crystal::ModeLabel::str);
  if (trunc.modes.front().first != gate)
    throw std::invalid_argument(
        "truncations: axial stretch gate mode must come first");
  if (trunc.modes.front().second < 1)
    throw std::invalid_argument("truncations: gate mode cutoff must be >= 1");

  BasisLayout layout;
  layout.ion_levels = ion_levels;
  for (auto [id, nmax] : trunc.modes) {
    if (id < 0 || id >= static_cast<int>(spectrum.modes.size()))
      throw std::invalid_argument("truncations: unknown mode id");
    if (nmax < 0) throw std::invalid_argument("truncations: negative cutoff");
    for (int seen : layout.mode_ids)
      if (seen == id)
        throw std::invalid_argument("truncations: duplicate mode id");
    layout.mode_ids.push_back(id);
    layout.mode_dims.push_back(nmax + 1);
  }
  layout.finalize();
  if (layout.dim > trunc.max_dimension)
    throw std::length_error(
        "state space dimension " + std::to_string(layout.dim) +
        " exceeds the configured limit " + std::to_string(trunc.max_dimension));
  return layout;
}

mode_data collect_modes(const ModeSpectrum& spectrum, const BasisLayout& layout) {
  mode_data md;
  for (int id : layout.mode_ids) {
    const auto& mode = spectrum.modes[id];
    md.freq.push_back(mode.frequency);
    md.zpf.push_back(
        std::sqrt(cn::hbar / (2.0 * spectrum.ion_mass * mode.frequency)));
    md.axis.push_back(static_cast<int>(mode.axis));
  }
  md.eph.assign(layout.mode_space, 0.0);
  std::vector<int> n(layout.mode_dims.size());
  for (int m = 0; m < layout.mode_space; ++m) {
    int rem = m;
    double e = 0;
    for (size_t a = layout.mode_dims.size(); a-- > 0;) {
      n[a] = rem % layout.mode_dims[a];
      rem /= layout.mode_dims[a];
      e += n[a] * md.freq[a];
    }
    md.eph[m] = e;
  }
  return md;
}

// product over modes of exp(i theta_a (a + a^dag)) for one ion/wavevector
MatrixXcd displacement_product(const ModeSpectrum& spectrum,
                               const BasisLayout& layout, const mode_data& md,
                               const Vector3d& k, int ion) {
  MatrixXcd d = MatrixXcd::Identity(1, 1);
  for (size_t a = 0; a < layout.mode_ids.size(); ++a) {
    const auto& mode = spectrum.modes[layout.mode_ids[a]];
    double theta = k[md.axis[a]] * mode.b[ion] * md.zpf[a];
    d = kron(d, displacement_phase(theta, layout.mode_dims[a]));
  }
  return d;
}

void add_extras(model_builder& b, const BasisLayout& layout,
                const DriveExtras& extras) {
  if (extras.qubit_shift != 0.0) {
    auto z = [](int s) { return s == lvl_up ? 1 : s == lvl_down ? -1 : 0; };
    std::vector<int> n;
    int s1, s2;
    for (int idx = 0; idx < layout.dim; ++idx) {
      layout.decode(idx, s1, s2, n);
      double el = 0.5 * extras.qubit_shift * (z(s1) + z(s2));
      // diagonal of a Hermitian operator: half weight, mirror restores it
      if (el != 0.0) b.add(idx, idx, 0.5 * el, 0.0, Channel::fixed, 0);
    }
  }
  if (extras.mw_rabi != 0.0) {
    std::vector<int> n(layout.mode_dims.size());
    for (int m = 0; m < layout.mode_space; ++m) {
      int rem = m;
      for (size_t a = layout.mode_dims.size(); a-- > 0;) {
        n[a] = rem % layout.mode_dims[a];
        rem /= layout.mode_dims[a];
      }
      for (int so = 0; so < layout.ion_levels; ++so) {
        b.add(layout.index(lvl_up, so, n), layout.index(lvl_down, so, n),
              0.5 * extras.mw_rabi, 0.0, Channel::microwave, 1);
        b.add(layout.index(so, lvl_up, n), layout.index(so, lvl_down, n),
              0.5 * extras.mw_rabi, 0.0, Channel::microwave, 1);
      }
    }
  }
}

}  // namespace

void OperatorModel::weights(std::span<const WeightSample> samples,
                            std::vector<complexd>& w) const {
  w.assign(terms.size(), complexd(0, 0));
  std::vector<complexd> phasor(freqs.size());
  for (const auto& s : samples) {
    for (size_t f = 0; f < freqs.size(); ++f)
      phasor[f] = std::exp(complexd(0, -freqs[f] * s.time));
    double el = s.env.laser;
    double el2 = el * el;
    for (size_t k = 0; k < terms.size(); ++k) {
      const Term& t = terms[k];
      complexd fac;
      switch (t.channel) {
        case Channel::laser:
          fac = t.env_power == 2 ? el2 : t.env_power == 1 ? el : 1.0;
          break;
        case Channel::microwave:
          fac = t.env_power == 0 ? complexd(1, 0)
                : t.env_power == 1 ? s.env.microwave
                                   : s.env.microwave * s.env.microwave;
          break;
        case Channel::fixed:
          fac = 1.0;
          break;
      }
      w[k] += s.scale * fac * phasor[t.freq];
    }
  }
  for (size_t k = 0; k < terms.size(); ++k) w[k] *= terms[k].coeff;
}

void OperatorModel::apply(const std::vector<complexd>& w,
                          const Eigen::VectorXcd& x, Eigen::VectorXcd& y) const {
  y.setZero(layout.dim);
  const complexd* xs = x.data();
  complexd* ys = y.data();
  for (size_t k = 0; k < terms.size(); ++k) {
    const Term& t = terms[k];
    const complexd wk = w[k];
    ys[t.row] += wk * xs[t.col];
    ys[t.col] += std::conj(wk) * xs[t.row];
  }
}

MatrixXcd OperatorModel::dense(double t, const ChannelEnv& env) const {
  std::vector<complexd> w;
  WeightSample s{t, 1.0, env};
  weights({&s, 1}, w);
  MatrixXcd h = MatrixXcd::Zero(layout.dim, layout.dim);
  for (size_t k = 0; k < terms.size(); ++k) {
    h(terms[k].row, terms[k].col) += w[k];
    h(terms[k].col, terms[k].row) += std::conj(w[k]);
  }
  return h;
}

OperatorModel OperatorModel::scaled(double field_scale) const {
  OperatorModel out = *this;
  for (auto& t : out.terms)
    if (t.channel == Channel::laser)
      t.coeff *= std::pow(field_scale, static_cast<int>(t.env_power));
  return out;
}

OperatorModel OperatorModel::compressed(double rel_floor) const {
  double max_c = 0;
  for (const auto& t : terms) max_c = std::max(max_c, std::abs(t.coeff));
  OperatorModel out = *this;
  out.terms.clear();
  out.freqs.clear();
  std::map<double, int> slot;
  for (const auto& t : terms) {
    if (std::abs(t.coeff) < rel_floor * max_c) continue;
    double nu = freqs[t.freq];
    auto [it, fresh] = slot.try_emplace(nu, static_cast<int>(out.freqs.size()));
    if (fresh) out.freqs.push_back(nu);
    Term kept = t;
    kept.freq = it->second;
    out.terms.push_back(kept);
  }
  return out;
}

double OperatorModel::max_frequency(double coeff_floor_rel) const {
  double max_c = 0;
  for (const auto& t : terms) max_c = std::max(max_c, std::abs(t.coeff));
  double nu = 0;
  for (const auto& t : terms)
    if (std::abs(t.coeff) >= coeff_floor_rel * max_c)
      nu = std::max(nu, std::abs(freqs[t.freq]));
  return nu;
}

double OperatorModel::one_norm_bound() const {
  double s = 0;
  for (const auto& t : terms) s += 2.0 * std::abs(t.coeff);
  return s;
}

OperatorModel build_full(const ModeSpectrum& spectrum, const LambDickeSet& lde,
                         const BeamPair& beams, const LevelScheme& scheme,
                         const Truncations& trunc, const DriveExtras& extras) {
  scheme.validate();
  if (beams.mu <= 0) throw std::invalid_argument("beams: mu must be positive");
  if (beams.symmetric && beams.g_a != beams.g_b)
    throw std::invalid_argument("beams: symmetric drive requires g_a == g_b");
  Vector3d dk = beams.k_a - beams.k_b;
  if ((dk - lde.delta_k).norm() > 1e-9 * dk.norm())
    throw std::invalid_argument(
        "beams and Lamb-Dicke set disagree on delta_k");

  BasisLayout layout = make_layout(spectrum, trunc, scheme.levels());
  mode_data md = collect_modes(spectrum, layout);
  double scale = beams.snap ? commensurability(spectrum, dk).factor : 1.0;

  model_builder b;
  for (int ion = 0; ion < 2; ++ion) {
    double x_j = spectrum.positions[ion];
    for (int beam = 0; beam < 2; ++beam) {
      Vector3d k = scale * (beam == 0 ? beams.k_a : beams.k_b);
      double g = beam == 0 ? beams.g_a : beams.g_b;
      const auto& phases = beam == 0 ? beams.phase_a : beams.phase_b;
      double phi = beam == 0 ? beams.phi_a : beams.phi_b;
      double nu_drive = beam == 0 ? 0.5 * beams.mu : -0.5 * beams.mu;
      complexd front = std::exp(complexd(0, k[0] * x_j + phi));
      MatrixXcd d = displacement_product(spectrum, layout, md, k, ion);

      struct excited { int level; complexd coupling; };
      std::vector<excited> ups = {{lvl_em, g * phases[0]},
                                  {lvl_ep, g * phases[1]}};
      if (scheme.include_e0 && beams.e0_leak_rabi > 0 && beam == 0)
        ups.push_back({lvl_e0, complexd(0.5 * beams.e0_leak_rabi, 0)});

      for (const auto& [level, coupling] : ups) {
        double e_lvl = ion_energy(scheme, level);
        for (int so = 0; so < layout.ion_levels; ++so) {
          for (int mr = 0; mr < layout.mode_space; ++mr) {
            for (int mc = 0; mc < layout.mode_space; ++mc) {
              complexd el = coupling * front * d(mr, mc);
              if (std::abs(el) < 1e-14 * g) continue;
              int r, c;
              if (ion == 0) {
                r = (level * layout.ion_levels + so) * layout.mode_space + mr;
                c = (lvl_up * layout.ion_levels + so) * layout.mode_space + mc;
              } else {
                r = (so * layout.ion_levels + level) * layout.mode_space + mr;
                c = (so * layout.ion_levels + lvl_up) * layout.mode_space + mc;
              }
              double nu = nu_drive - (e_lvl + md.eph[mr] - md.eph[mc]);
              b.add(r, c, el, nu, Channel::laser, 1);
            }
          }
        }
      }
    }
  }
  add_extras(b, layout, extras);
  return b.finish(Tier::full, layout);
}

OperatorModel build_lightshift(const ModeSpectrum& spectrum,
                               const LambDickeSet& lde, const BeamPair& beams,
                               const LevelScheme& scheme,
                               const Truncations& trunc,
                               const DriveExtras& extras, double warn_ratio) {
  scheme.validate();
  if (beams.mu <= 0) throw std::invalid_argument("beams: mu must be positive");
  double scale = beams.snap ? commensurability(spectrum, lde.delta_k).factor : 1.0;
  double kappa = lightshift_prefactor(std::sqrt(beams.g_a * beams.g_b),
                                      scheme.delta, beams.mu);

  BasisLayout layout = make_layout(spectrum, trunc, 2);
  mode_data md = collect_modes(spectrum, layout);

  OperatorModel out;
  {
    model_builder b;
    for (int ion = 0; ion < 2; ++ion) {
      double phi0 =
          scale * lde.delta_k[0] * spectrum.positions[ion] + beams.beat_phase();
      // forward half (kappa/2i) e^{i mu t} e^{-i phi0} D^dag of the sin drive
      MatrixXcd ddag =
          displacement_product(spectrum, layout, md, -scale * lde.delta_k, ion);
      complexd pref = complexd(0, -0.5) * kappa * std::exp(complexd(0, -phi0));
      for (int so = 0; so < 2; ++so) {
        for (int mr = 0; mr < layout.mode_space; ++mr) {
          for (int mc = 0; mc < layout.mode_space; ++mc) {
            complexd el = pref * ddag(mr, mc);
            if (std::abs(el) < 1e-14 * std::abs(kappa)) continue;
            int r, c;
            if (ion == 0) {
              r = (lvl_up * 2 + so) * layout.mode_space + mr;
              c = (lvl_up * 2 + so) * layout.mode_space + mc;
            } else {
              r = (so * 2 + lvl_up) * layout.mode_space + mr;
              c = (so * 2 + lvl_up) * layout.mode_space + mc;
            }
            double nu = -beams.mu - (md.eph[mr] - md.eph[mc]);
            b.add(r, c, el, nu, Channel::laser, 2);
          }
        }
      }
    }
    add_extras(b, layout, extras);
    out = b.finish(Tier::lightshift, layout);
  }
  double ratio = std::max(beams.g_a, beams.g_b) / scheme.delta;
  if (ratio > warn_ratio) {
    out.elimination_warning = true;
    std::cerr << "warning: g/Delta = " << ratio
              << " strains the adiabatic elimination (threshold " << warn_ratio
              << ")\n";
  }
  return out;
}

OperatorModel build_sdf(const ModeSpectrum& spectrum, const LambDickeSet& lde,
                        const BeamPair& beams, const LevelScheme& scheme,
                        const Truncations& trunc, double delta_signed,
                        const DriveExtras& extras) {
  scheme.validate();
  if (delta_signed == 0)
    throw std::invalid_argument("sdf: detuning must be nonzero");
  if (trunc.modes.size() != 1)
    throw std::invalid_argument("sdf: gate mode only");
  double scale = beams.snap ? commensurability(spectrum, lde.delta_k).factor : 1.0;
  double omega = 0.25 * lightshift_prefactor(std::sqrt(beams.g_a * beams.g_b),
                                             scheme.delta, beams.mu);

  BasisLayout layout = make_layout(spectrum, trunc, 2);
  int nmax = layout.mode_dims[0] - 1;

  model_builder b;
  for (int ion = 0; ion < 2; ++ion) {
    double eta = scale * lde.eta[ion][lde.gate_mode];
    double phi0 =
        scale * lde.delta_k[0] * spectrum.positions[ion] + beams.beat_phase();
    complexd cf = -2.0 * omega * eta * std::exp(complexd(0, -phi0));
    for (int so = 0; so < 2; ++so) {
      for (int n = 0; n < nmax; ++n) {
        int r, c;
        if (ion == 0) {
          r = (lvl_up * 2 + so) * layout.mode_space + n;
          c = (lvl_up * 2 + so) * layout.mode_space + (n + 1);
        } else {
          r = (so * 2 + lvl_up) * layout.mode_space + n;
          c = (so * 2 + lvl_up) * layout.mode_space + (n + 1);
        }
        // a-element at e^{i delta t}: freq -delta under the e^{-i nu t} rule
        b.add(r, c, cf * std::sqrt(n + 1.0), -delta_signed, Channel::laser, 2);
      }
    }
  }
  add_extras(b, layout, extras);
  return b.finish(Tier::sdf, layout);
}

}  // namespace lsgate::hamiltonian
