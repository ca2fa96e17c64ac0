#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <random>

#include "lsgate/config.hpp"
#include "lsgate/constants.hpp"
#include "lsgate/crystal.hpp"
#include "lsgate/hamiltonian.hpp"

using namespace lsgate;
using namespace lsgate::hamiltonian;
using crystal::Axis;
using crystal::ModeLabel;
using Eigen::MatrixXcd;
using Eigen::Vector3d;

namespace {
constexpr double two_pi = constants::two_pi;

struct rig {
  config::RunConfig cfg = config::paper_defaults();
  crystal::ModeSpectrum spectrum;
  crystal::LambDickeSet lde;
  BeamPair beams;
  LevelScheme scheme;
  double delta_signed;

  rig() {
    spectrum = crystal::normal_modes(cfg.trap_config());
    lde = crystal::lamb_dicke(spectrum, cfg.delta_k());
    delta_signed =
        cfg.beams.sideband_sign * two_pi / (cfg.schedule.loop_time_us * 1e-6);
    double mu =
        spectrum.mode(Axis::x, ModeLabel::str).frequency + delta_signed;
    beams = BeamPair::standard(cfg.coupling(), mu,
                               cfg.wavenumber() * cfg.beam_direction(0),
                               cfg.wavenumber() * cfg.beam_direction(1));
    scheme = LevelScheme{cfg.detuning(), false};
  }

  Truncations trunc(int n_gate, int n_com = -1) const {
    Truncations t;
    t.modes.push_back({spectrum.mode_index(Axis::x, ModeLabel::str), n_gate});
    if (n_com >= 0)
      t.modes.push_back({spectrum.mode_index(Axis::x, ModeLabel::com), n_com});
    return t;
  }
};

double hermiticity_defect(const MatrixXcd& h) {
  return (h - h.adjoint()).cwiseAbs().maxCoeff();
}
}  // namespace

TEST_CASE("commensurability of the travelling-wave period with the spacing") {
  rig r;
  auto c = commensurability(r.spectrum, r.cfg.delta_k());
  CHECK(c.chi_raw == doctest::Approx(10.157144625066648).epsilon(1e-12));
  CHECK(c.chi_snapped == 10);
  CHECK(c.factor == doctest::Approx(0.9845286612658016).epsilon(1e-12));
}

TEST_CASE("truncated displacement phase operator") {
  MatrixXcd d = displacement_phase(0.3, 20);
  CHECK((d * d.adjoint() - MatrixXcd::Identity(20, 20)).cwiseAbs().maxCoeff() <
        1e-13);
  // vacuum survival e^{-theta^2/2}, truncation error far below tolerance
  CHECK(std::abs(d(0, 0)) == doctest::Approx(std::exp(-0.045)).epsilon(1e-10));
  CHECK(displacement_phase(0.0, 5).isApprox(MatrixXcd::Identity(5, 5), 1e-15));
}

TEST_CASE("eliminated-shift prefactor") {
  double g = two_pi * 0.76e6, delta = two_pi * 7.8e6;
  CHECK(lightshift_prefactor(g, delta, 0.0) ==
        doctest::Approx(4 * g * g / delta).epsilon(1e-15));
  double mu = two_pi * 2.03e6;
  double x = std::pow(mu / (2 * delta), 2);
  CHECK(lightshift_prefactor(g, delta, mu) / (4 * g * g / delta) - 1 ==
        doctest::Approx(x / (1 - x)).epsilon(1e-12));
  CHECK(lightshift_prefactor(g, delta, mu) / (4 * g * g / delta) - 1 ==
        doctest::Approx(0.01722502718).epsilon(1e-6));
  CHECK_THROWS_AS(lightshift_prefactor(g, delta, 2 * delta),
                  std::domain_error);
}

TEST_CASE("zeeman scale of the excited-state splitting") {
  auto s = LevelScheme::from_field(5.57);
  CHECK(s.delta == doctest::Approx(two_pi * 5.57 * 1.4e6).epsilon(1e-15));
  CHECK(s.delta == doctest::Approx(two_pi * 7.8e6).epsilon(1e-3));
}

TEST_CASE("layout indexing round trip, tensor order ions then modes") {
  BasisLayout l;
  l.ion_levels = 4;
  l.mode_ids = {1, 0, 2};
  l.mode_dims = {11, 2, 3};
  l.finalize();
  CHECK(l.dim == 16 * 66);
  std::mt19937 rng(7);
  std::vector<int> n;
  for (int trial = 0; trial < 50; ++trial) {
    int idx = static_cast<int>(rng() % l.dim);
    int s1, s2;
    l.decode(idx, s1, s2, n);
    CHECK(l.index(s1, s2, n) == idx);
  }
  // leading (gate) mode is the most significant digit of the mode block
  CHECK(l.index(0, 0, std::array{1, 0, 0}) == 6);
  CHECK(l.index(0, 1, std::array{0, 0, 0}) == 66);
}

TEST_CASE("full tier dimension bookkeeping") {
  rig r;
  Truncations t;
  t.modes = {{r.spectrum.mode_index(Axis::x, ModeLabel::str), 10},
             {r.spectrum.mode_index(Axis::x, ModeLabel::com), 1},
             {r.spectrum.mode_index(Axis::y, ModeLabel::com), 1},
             {r.spectrum.mode_index(Axis::y, ModeLabel::str), 1},
             {r.spectrum.mode_index(Axis::z, ModeLabel::com), 1},
             {r.spectrum.mode_index(Axis::z, ModeLabel::str), 1}};
  auto m = build_full(r.spectrum, r.lde, r.beams, r.scheme, t);
  CHECK(m.dim() == 5632);

  t.max_dimension = 5000;
  CHECK_THROWS_AS(build_full(r.spectrum, r.lde, r.beams, r.scheme, t),
                  std::length_error);

  Truncations bad;
  bad.modes = {{r.spectrum.mode_index(Axis::x, ModeLabel::com), 2}};
  CHECK_THROWS_AS(build_full(r.spectrum, r.lde, r.beams, r.scheme, bad),
                  std::invalid_argument);
}

TEST_CASE("undriven full model is empty") {
  rig r;
  r.beams.g_a = r.beams.g_b = 0;
  auto m = build_full(r.spectrum, r.lde, r.beams, r.scheme, r.trunc(2));
  CHECK(m.terms.empty());
  CHECK(m.dense(1e-6).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("hermiticity of all tiers at random times") {
  rig r;
  DriveExtras ex{two_pi * 200.0, two_pi * 1e5};
  auto full = build_full(r.spectrum, r.lde, r.beams, r.scheme, r.trunc(3, 1), ex);
  auto ls = build_lightshift(r.spectrum, r.lde, r.beams, r.scheme, r.trunc(3, 1), ex);
  auto sdf = build_sdf(r.spectrum, r.lde, r.beams, r.scheme, r.trunc(4),
                       r.delta_signed, ex);
  std::mt19937 rng(11);
  std::uniform_real_distribution<double> ut(0, 1e-4), uph(0, two_pi);
  for (int i = 0; i < 100; ++i) {
    double t = ut(rng);
    ChannelEnv env{0.7, std::exp(std::complex<double>(0, -uph(rng)))};
    for (const auto* m : {&full, &ls, &sdf}) {
      MatrixXcd h = m->dense(t, env);
      double scale = h.cwiseAbs().maxCoeff();
      CHECK(hermiticity_defect(h) < 1e-13 * std::max(scale, 1.0));
    }
  }
}

TEST_CASE("full tier couples up only to the excited states of one ion") {
  rig r;
  auto m = build_full(r.spectrum, r.lde, r.beams, r.scheme, r.trunc(2, 1));
  std::vector<int> nr, nc;
  for (const auto& t : m.terms) {
    REQUIRE(t.channel == Channel::laser);
    int r1, r2, c1, c2;
    m.layout.decode(t.row, r1, r2, nr);
    m.layout.decode(t.col, c1, c2, nc);
    bool ion1 = r1 >= lvl_em && c1 == lvl_up && r2 == c2;
    bool ion2 = r2 >= lvl_em && c2 == lvl_up && r1 == c1;
    CHECK(ion1 != ion2);
  }
}

TEST_CASE("second-order up-state shifts from e+ and e- cancel") {
  rig r;
  auto m = build_full(r.spectrum, r.lde, r.beams, r.scheme, r.trunc(3, 1));
  std::vector<int> vac(2, 0);
  int target = m.layout.index(lvl_up, lvl_up, vac);
  // static second-order shift of each coupled channel is |c|^2 / nu
  double clean = 0, clean_abs = 0, all = 0, all_abs = 0;
  std::vector<int> nr;
  for (const auto& t : m.terms) {
    if (t.col != target) continue;
    double s = std::norm(t.coeff) / m.freqs[t.freq];
    all += s;
    all_abs += std::abs(s);
    int r1, r2;
    m.layout.decode(t.row, r1, r2, nr);
    bool carrier = nr[0] == 0 && nr[1] == 0;
    if (carrier) {
      clean += s;
      clean_abs += std::abs(s);
    }
  }
  REQUIRE(all_abs > 0);
  // carrier channels cancel exactly; sideband channels leave O((mu/2D)^2) dust
  CHECK(std::abs(clean) < 1e-12 * clean_abs);
  CHECK(std::abs(all) < 0.02 * all_abs);
}

TEST_CASE("eliminated tier matches its first-order expansion at small eta") {
  rig r;
  // scale the wavevectors down so eta^2 terms drop below the match tolerance
  auto lde = crystal::lamb_dicke(r.spectrum, 1e-4 * r.cfg.delta_k());
  BeamPair beams = r.beams;
  beams.snap = false;
  beams.k_a = Vector3d::Zero();  // unused by this tier
  beams.k_b = Vector3d::Zero();
  auto m = build_lightshift(r.spectrum, lde, beams, r.scheme, r.trunc(2));

  double kappa = lightshift_prefactor(r.beams.g_a, r.scheme.delta, r.beams.mu);
  double w_gate = r.spectrum.mode(Axis::x, ModeLabel::str).frequency;
  int nmax = 2;
  for (double t : {0.0, 0.37e-6, 2.1e-6}) {
    MatrixXcd expect = MatrixXcd::Zero(m.dim(), m.dim());
    for (int ion = 0; ion < 2; ++ion) {
      double eta = lde.eta[ion][lde.gate_mode];
      double phi0 = lde.delta_k[0] * r.spectrum.positions[ion];
      double th = r.beams.mu * t - phi0;
      for (int so = 0; so < 2; ++so) {
        auto at = [&](int s_self, int n1, int n2) {
          std::array<int, 1> a{n1}, b{n2};
          int rr = ion == 0 ? m.layout.index(s_self, so, a)
                            : m.layout.index(so, s_self, a);
          int cc = ion == 0 ? m.layout.index(s_self, so, b)
                            : m.layout.index(so, s_self, b);
          return std::pair{rr, cc};
        };
        for (int n = 0; n <= nmax; ++n) {
          auto [rr, cc] = at(lvl_up, n, n);
          expect(rr, cc) += kappa * std::sin(th);
        }
        for (int n = 0; n < nmax; ++n) {
          auto [rr, cc] = at(lvl_up, n, n + 1);
          std::complex<double> el = -kappa * std::cos(th) * eta *
                                    std::sqrt(n + 1.0) *
                                    std::exp(std::complex<double>(0, -w_gate * t));
          expect(rr, cc) += el;
          expect(cc, rr) += std::conj(el);
        }
      }
    }
    CHECK((m.dense(t) - expect).cwiseAbs().maxCoeff() <
          1e-10 * std::abs(kappa));
  }
}

TEST_CASE("sdf tier: spin-diagonal displacement drive, opposite ion signs") {
  rig r;
  auto m = build_sdf(r.spectrum, r.lde, r.beams, r.scheme, r.trunc(3),
                     r.delta_signed);
  std::vector<int> nr, nc;
  for (const auto& t : m.terms) {
    int r1, r2, c1, c2;
    m.layout.decode(t.row, r1, r2, nr);
    m.layout.decode(t.col, c1, c2, nc);
    CHECK(r1 == c1);
    CHECK(r2 == c2);
    CHECK(std::abs(nr[0] - nc[0]) == 1);
  }
  MatrixXcd h = m.dense(0.3e-6);
  int f = 4;  // fock block size
  auto block = [&](int s1, int s2) {
    return MatrixXcd(h.block((s1 * 2 + s2) * f, (s1 * 2 + s2) * f, f, f));
  };
  double force = block(1, 0).cwiseAbs().maxCoeff();
  CHECK(force > 0);
  // ions drive the stretch mode with opposite signs; both-up cancels exactly
  CHECK((block(1, 0) + block(0, 1)).cwiseAbs().maxCoeff() < 1e-13 * force);
  CHECK(block(0, 0).cwiseAbs().maxCoeff() == 0.0);
  CHECK(block(1, 1).cwiseAbs().maxCoeff() < 1e-13 * force);

  // frozen spot check of the force element 2 Omega eta at g = 2pi x 0.76 MHz
  CHECK(std::abs(block(1, 0)(0, 1)) ==
        doctest::Approx(51540.496154425).epsilon(1e-9));
}

TEST_CASE("static qubit shift and microwave carrier enter all tiers") {
  rig r;
  double qs = two_pi * 150.0, rabi = two_pi * 1e5;
  auto m = build_sdf(r.spectrum, r.lde, r.beams, r.scheme, r.trunc(1),
                     r.delta_signed, DriveExtras{qs, rabi});
  // lasers off: only the static shift and the microwave carrier remain
  MatrixXcd h = m.dense(0.0, ChannelEnv{0.0, 1.0});
  int f = 2;
  CHECK(h(m.layout.index(1, 1, std::array{0}), m.layout.index(1, 1, std::array{0}))
            .real() == doctest::Approx(qs).epsilon(1e-13));
  CHECK(std::abs(h(m.layout.index(1, 0, std::array{0}),
                   m.layout.index(1, 0, std::array{0}))) < 1e-18);
  CHECK(h(m.layout.index(0, 0, std::array{0}), m.layout.index(0, 0, std::array{0}))
            .real() == doctest::Approx(-qs).epsilon(1e-13));
  // carrier = (rabi/2) sum_j sigma_x^j at phase 0
  CHECK(h(m.layout.index(1, 0, std::array{0}), m.layout.index(0, 0, std::array{0})) ==
        std::complex<double>(rabi / 2, 0));
  // phase pi flips the coupling sign
  MatrixXcd hpi = m.dense(0.0, ChannelEnv{0.0, std::exp(std::complex<double>(0, -constants::pi))});
  CHECK(hpi(m.layout.index(1, 0, std::array{0}), m.layout.index(0, 0, std::array{0})).real() ==
        doctest::Approx(-rabi / 2).epsilon(1e-12));
}

TEST_CASE("field rescale: laser terms follow s^env_power, others fixed") {
  rig r;
  DriveExtras ex{two_pi * 100.0, two_pi * 1e5};
  auto sdf = build_sdf(r.spectrum, r.lde, r.beams, r.scheme, r.trunc(2),
                       r.delta_signed, ex);
  auto full = build_full(r.spectrum, r.lde, r.beams, r.scheme, r.trunc(2), ex);
  auto s2 = sdf.scaled(2.0);
  auto f2 = full.scaled(2.0);
  for (size_t k = 0; k < sdf.terms.size(); ++k) {
    double expect = sdf.terms[k].channel == Channel::laser ? 4.0 : 1.0;
    CHECK(std::abs(s2.terms[k].coeff / sdf.terms[k].coeff) ==
          doctest::Approx(expect).epsilon(1e-15));
  }
  for (size_t k = 0; k < full.terms.size(); ++k) {
    double expect = full.terms[k].channel == Channel::laser ? 2.0 : 1.0;
    CHECK(std::abs(f2.terms[k].coeff / full.terms[k].coeff) ==
          doctest::Approx(expect).epsilon(1e-15));
  }
}

TEST_CASE("weighted apply agrees with the dense combination") {
  rig r;
  auto m = build_full(r.spectrum, r.lde, r.beams, r.scheme, r.trunc(2, 1),
                      DriveExtras{two_pi * 100.0, two_pi * 1e5});
  std::vector<WeightSample> samples = {
      {1.3e-6, 0.4, {0.8, std::complex<double>(0, -1)}},
      {2.9e-6, -1.1, {0.3, std::complex<double>(1, 0)}}};
  MatrixXcd ref = samples[0].scale * m.dense(samples[0].time, samples[0].env) +
                  samples[1].scale * m.dense(samples[1].time, samples[1].env);
  std::vector<std::complex<double>> w;
  m.weights(samples, w);
  std::mt19937 rng(3);
  std::normal_distribution<double> gauss;
  Eigen::VectorXcd x(m.dim()), y;
  for (int i = 0; i < m.dim(); ++i)
    x(i) = std::complex<double>(gauss(rng), gauss(rng));
  m.apply(w, x, y);
  CHECK((y - ref * x).cwiseAbs().maxCoeff() <
        1e-12 * ref.cwiseAbs().maxCoeff() * x.norm());
}

TEST_CASE("frequency census of the full tier") {
  rig r;
  auto m = build_full(r.spectrum, r.lde, r.beams, r.scheme, r.trunc(3, 1));
  double delta = r.scheme.delta, mu = r.beams.mu;
  double w_gate = r.spectrum.mode(Axis::x, ModeLabel::str).frequency;
  // dominant elements are the Fock-diagonal carriers at +-(mu/2 +- delta)
  CHECK(m.max_frequency(0.5) == doctest::Approx(delta + 0.5 * mu).epsilon(1e-12));
  // weak phonon sidebands extend the census by a few mode quanta
  double numax = m.max_frequency(1e-3);
  CHECK(numax >= delta + 0.5 * mu);
  CHECK(numax <= delta + 0.5 * mu + 5 * w_gate);
  CHECK(m.max_frequency(1e-14) >= numax);
  CHECK(m.one_norm_bound() > 0);
}
