#include "lsgate/evolve.hpp"

#include <algorithm>
#include <array>
#include <atomic>
#include <cmath>
#include <future>
#include <iostream>
#include <numbers>
#include <sstream>
#include <stdexcept>

namespace lsgate::evolve {

using hamiltonian::BasisLayout;
using hamiltonian::Channel;
using hamiltonian::ChannelEnv;
using hamiltonian::OperatorModel;
using hamiltonian::Tier;
using hamiltonian::WeightSample;
using hamiltonian::complexd;
using Eigen::MatrixXcd;
using Eigen::VectorXcd;

namespace {

constexpr double pi = std::numbers::pi;

// channel envelopes of one schedule segment at absolute time
struct env_spec {
  const pulse::PulseEnvelope* env = nullptr;  // null: laser dark
  double seg_start = 0;
  complexd mw = 0;

  ChannelEnv at(double t) const {
    ChannelEnv e{0.0, mw};
    if (env) {
      // profile^1 is the field for force_power 2, its square for 1
      double p = env->value(t - seg_start);
      e.laser = env->force_power == 1 ? std::sqrt(std::max(p, 0.0)) : p;
    }
    return e;
  }
};

struct krylov_ws {
  std::vector<VectorXcd> V;
  VectorXcd w, x1, xfull, xh1, xh2;
  std::vector<double> alpha, beta;
  VectorXcd coef, coef_prev;
  std::vector<complexd> wts_a, wts_b;
  double h_carry = 0;

  krylov_ws(int dim, int mmax) {
    V.assign(mmax + 1, VectorXcd(dim));
    w.resize(dim);
    x1.resize(dim);
    xfull.resize(dim);
    xh1.resize(dim);
    xh2.resize(dim);
  }
};

// out = exp(-i h M) v for the Hermitian combination M encoded by wts.
// Lanczos with full reorthogonalization; converged once adding a dimension
// stops moving exp(-i h T_m) e1 twice in a row. Returns the Krylov dimension
// or -1 when mmax is hit first.
int expm_krylov(const OperatorModel& m, const std::vector<complexd>& wts,
                double h, const VectorXcd& v, VectorXcd& out, double tol,
                int mmax, krylov_ws& ws) {
  double beta0 = v.norm();
  if (beta0 == 0.0 || h == 0.0) {
    out = v;
    return 0;
  }
  ws.V[0] = v / beta0;
  ws.alpha.clear();
  ws.beta.clear();
  ws.coef_prev.resize(0);
  int good = 0;
  double hscale = 0;
  for (int j = 0; j < mmax; ++j) {
    m.apply(wts, ws.V[j], ws.w);
    double a = std::real(ws.V[j].dot(ws.w));
    ws.w -= a * ws.V[j];
    if (j > 0) ws.w -= ws.beta[j - 1] * ws.V[j - 1];
    for (int k = 0; k <= j; ++k) {  // full reorthogonalization, one pass
      complexd c = ws.V[k].dot(ws.w);
      ws.w -= c * ws.V[k];
      if (k == j) a += std::real(c);
    }
    ws.alpha.push_back(a);
    double b = ws.w.norm();
    hscale = std::max({hscale, std::abs(a), b});

    int n = j + 1;
    Eigen::MatrixXd T = Eigen::MatrixXd::Zero(n, n);
    for (int i = 0; i < n; ++i) {
      T(i, i) = ws.alpha[i];
      if (i + 1 < n) T(i, i + 1) = T(i + 1, i) = ws.beta[i];
    }
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(T);
    const auto& U = es.eigenvectors();
    const auto& lam = es.eigenvalues();
    ws.coef = VectorXcd::Zero(n);
    for (int k = 0; k < n; ++k)
      ws.coef += std::exp(complexd(0, -h * lam[k])) * U(0, k) *
                 U.col(k).cast<complexd>();

    bool happy = b <= 1e-14 * std::max(1.0, hscale);
    if (j > 0) {
      // change of the projected exponential when this dimension was added
      double err = beta0 *
                   std::sqrt((ws.coef.head(j) - ws.coef_prev).squaredNorm() +
                             std::norm(ws.coef[j]));
      good = err <= tol ? good + 1 : 0;
    }
    if (good >= 2 || happy) {
      out.setZero();
      for (int k = 0; k < n; ++k) out += (beta0 * ws.coef[k]) * ws.V[k];
      return n;
    }
    ws.coef_prev = ws.coef;
    if (j + 1 < mmax) {
      if (b == 0.0) {  // exact invariant subspace with no tolerance slack
        out.setZero();
        for (int k = 0; k < n; ++k) out += (beta0 * ws.coef[k]) * ws.V[k];
        return n;
      }
      ws.beta.push_back(b);
      ws.V[j + 1] = ws.w / b;
    }
  }
  return -1;
}

// Gauss nodes and exponent weights of the two-exponential commutator-free
// 4th-order step; the alpha2-weighted-at-node-1 factor acts first.
constexpr double gauss_c1 = 0.5 - 0.2886751345948128823;  // sqrt(3)/6
constexpr double gauss_c2 = 0.5 + 0.2886751345948128823;
constexpr double cf_a1 = 0.25 - 0.2886751345948128823;
constexpr double cf_a2 = 0.25 + 0.2886751345948128823;

bool cf4_apply(const OperatorModel& m, const env_spec& es, double t, double h,
               const VectorXcd& in, VectorXcd& out, double tol_k, int mmax,
               krylov_ws& ws, int& kry_dim) {
  double t1 = t + gauss_c1 * h, t2 = t + gauss_c2 * h;
  ChannelEnv e1 = es.at(t1), e2 = es.at(t2);
  std::array<WeightSample, 2> first{WeightSample{t1, cf_a2, e1},
                                    WeightSample{t2, cf_a1, e2}};
  std::array<WeightSample, 2> second{WeightSample{t1, cf_a1, e1},
                                     WeightSample{t2, cf_a2, e2}};
  m.weights(first, ws.wts_a);
  int k1 = expm_krylov(m, ws.wts_a, h, in, ws.x1, tol_k, mmax, ws);
  if (k1 < 0) return false;
  m.weights(second, ws.wts_b);
  int k2 = expm_krylov(m, ws.wts_b, h, ws.x1, out, tol_k, mmax, ws);
  if (k2 < 0) return false;
  kry_dim = std::max({kry_dim, k1, k2});
  return true;
}

[[noreturn]] void throw_stiff(const OperatorModel& m, double t, double h) {
  std::ostringstream os;
  os << "propagate: time step underflow (h = " << h << " s at t = " << t
     << " s); the strongest retained drive frequency "
     << m.max_frequency(1e-4)
     << " rad/s cannot be resolved within tol, raise tol or lower "
        "samples_per_fast";
  throw std::runtime_error(os.str());
}

void integrate_span(const OperatorModel& m, VectorXcd& psi, double ta,
                    double tb, const env_spec& es, const PropagateOptions& opt,
                    double h_cap, krylov_ws& ws, StepStats& st,
                    const Observer& obs) {
  double span = tb - ta;
  if (span <= 0) return;
  double h = ws.h_carry > 0 ? std::min(ws.h_carry, h_cap) : h_cap;
  h = std::min(h, span);
  const double h_floor = std::max(1e-9 * h_cap, 1e-21);
  const double tol_k = std::max(0.1 * opt.tol, 1e-15);
  double t = ta;
  int since_check = opt.check_interval;  // first step always checked
  int rejections_in_a_row = 0;
  while (true) {
    double rem = tb - t;
    if (rem <= 1e-9 * h) break;
    double hs = std::min(h, rem);
    bool check = since_check >= opt.check_interval;
    int kd = 0;
    bool ok = cf4_apply(m, es, t, hs, psi, ws.xfull, tol_k, opt.max_krylov, ws,
                        kd);
    if (ok && check) {
      ok = cf4_apply(m, es, t, 0.5 * hs, psi, ws.xh1, tol_k, opt.max_krylov,
                     ws, kd) &&
           cf4_apply(m, es, t + 0.5 * hs, 0.5 * hs, ws.xh1, ws.xh2, tol_k,
                     opt.max_krylov, ws, kd);
    }
    if (!ok) {
      ++st.rejected;
      if (++rejections_in_a_row > 60) throw_stiff(m, t, hs);
      h = 0.5 * hs;
      since_check = opt.check_interval;
      if (h < h_floor) throw_stiff(m, t, h);
      continue;
    }
    if (check) {
      double err = (ws.xfull - ws.xh2).norm() / 15.0;
      if (err > opt.tol) {
        ++st.rejected;
        if (++rejections_in_a_row > 60) throw_stiff(m, t, hs);
        h = hs * std::clamp(0.9 * std::pow(opt.tol / err, 0.2), 0.2, 0.9);
        since_check = opt.check_interval;
        if (h < h_floor) throw_stiff(m, t, h);
        continue;
      }
      psi = ws.xh2;  // the halved pair is the better state, keep it
      st.max_step_error = std::max(st.max_step_error, err);
      double fac =
          err > 0 ? std::clamp(0.9 * std::pow(opt.tol / err, 0.2), 0.3, 2.0)
                  : 2.0;
      h = std::min(hs * fac, h_cap);
      since_check = fac < 1.0 ? opt.check_interval : 0;
    } else {
      psi = ws.xfull;
      ++since_check;
    }
    st.max_krylov = std::max(st.max_krylov, kd);
    rejections_in_a_row = 0;
    t += hs;
    ++st.steps;
    if (obs) obs(t, psi);
  }
  ws.h_carry = h;
}

// exact pi rotation about (cos phase, sin phase, 0) on both qubit subspaces
void apply_ideal_pi(VectorXcd& psi, const BasisLayout& lay, double phase) {
  const complexd to_dn = complexd(0, -1) * std::exp(complexd(0, phase));
  const complexd to_up = complexd(0, -1) * std::exp(complexd(0, -phase));
  const int L = lay.ion_levels, M = lay.mode_space;
  for (int s2 = 0; s2 < L; ++s2)
    for (int m = 0; m < M; ++m) {
      int i0 = s2 * M + m, i1 = (L + s2) * M + m;
      complexd a = psi[i0], b = psi[i1];
      psi[i0] = to_dn * b;
      psi[i1] = to_up * a;
    }
  for (int s1 = 0; s1 < L; ++s1)
    for (int m = 0; m < M; ++m) {
      int i0 = s1 * L * M + m, i1 = s1 * L * M + M + m;
      complexd a = psi[i0], b = psi[i1];
      psi[i0] = to_dn * b;
      psi[i1] = to_up * a;
    }
}

double step_cap(const OperatorModel& m, const PropagateOptions& opt,
                double total) {
  double cap = total > 0 ? total : 1.0;
  double nu_strong = m.max_frequency(1e-4);
  double nu_all = m.max_frequency(1e-10);
  if (nu_strong > 0)
    cap = std::min(cap, 2 * pi / nu_strong / std::max(opt.samples_per_fast, 1));
  if (nu_all > 0) cap = std::min(cap, 2 * pi / nu_all / 4);
  return cap;
}

// true when basis state i only touches itself through static diagonals, in
// which case one loop multiplies it by exp(i theta)
bool stationary_phase(const OperatorModel& m, int i, double total,
                      double& theta) {
  double diag = 0;
  for (const auto& t : m.terms) {
    if (t.row != i && t.col != i) continue;
    if (t.row != t.col || t.channel != Channel::fixed ||
        m.freqs[t.freq] != 0.0)
      return false;
    diag += 2.0 * std::real(t.coeff);
  }
  theta = std::remainder(-diag * total, 2 * pi);
  return true;
}

}  // namespace

void StepStats::merge(const StepStats& o) {
  steps += o.steps;
  rejected += o.rejected;
  max_krylov = std::max(max_krylov, o.max_krylov);
  max_step_error = std::max(max_step_error, o.max_step_error);
}

StepStats propagate(const OperatorModel& model, VectorXcd& psi,
                    const pulse::GateSchedule& schedule,
                    const PropagateOptions& opt, const Observer& observer) {
  if (psi.size() != model.dim())
    throw std::invalid_argument("propagate: state dimension mismatch");
  StepStats st;
  double h_cap = step_cap(model, opt, schedule.total_time());
  krylov_ws ws(model.dim(), opt.max_krylov);
  ws.h_carry = h_cap;
  if (observer) observer(opt.t0, psi);
  for (const auto& seg : schedule.segments) {
    double ta = opt.t0 + seg.start, tb = ta + seg.duration;
    if (seg.kind == pulse::SegmentKind::sdf_loop) {
      env_spec es{&schedule.envelope, ta, 0.0};
      integrate_span(model, psi, ta, tb, es, opt, h_cap, ws, st, observer);
    } else if (schedule.mw_ideal) {
      env_spec dark{};
      double tm = 0.5 * (ta + tb);
      integrate_span(model, psi, ta, tm, dark, opt, h_cap, ws, st, observer);
      apply_ideal_pi(psi, model.layout, seg.mw_phase);
      if (observer) observer(tm, psi);
      integrate_span(model, psi, tm, tb, dark, opt, h_cap, ws, st, observer);
    } else {
      env_spec es{nullptr, ta, std::exp(complexd(0, -seg.mw_phase))};
      integrate_span(model, psi, ta, tb, es, opt, h_cap, ws, st, observer);
    }
  }
  return st;
}

CalibrationResult calibrate(const OperatorModel& model,
                            const pulse::GateSchedule& schedule,
                            double target_phase, const CalibrateOptions& opt) {
  if (target_phase == 0.0) return {0.0, 0.0, 0};
  pulse::GateSchedule loop = pulse::make_schedule(
      1, schedule.t_loop, 0.0, false, schedule.envelope, true);
  double T = loop.total_time();
  const auto& lay = model.layout;
  std::vector<int> vac(lay.mode_ids.size(), 0);
  const int idd = lay.index(0, 0, vac), idu = lay.index(0, 1, vac);
  const int iud = lay.index(1, 0, vac), iuu = lay.index(1, 1, vac);

  auto loop_phase = [&](const OperatorModel& m, int i) {
    double th;
    if (stationary_phase(m, i, T, th)) return th;
    VectorXcd psi = VectorXcd::Zero(m.dim());
    psi[i] = 1.0;
    propagate(m, psi, loop, opt.prop);
    complexd a = psi[i];
    if (std::abs(a) < 0.5) {
      std::ostringstream os;
      os << "calibrate: loop failed to close on basis state " << i
         << " (|amplitude| = " << std::abs(a) << ")";
      throw std::runtime_error(os.str());
    }
    return std::arg(a);
  };

  double s = 1.0;
  for (int it = 1; it <= opt.max_iter; ++it) {
    OperatorModel ms = model.scaled(s);
    double t_dd = loop_phase(ms, idd);
    double t_ud = loop_phase(ms, iud);
    double t_du = opt.assume_exchange ? t_ud : loop_phase(ms, idu);
    double t_uu = loop_phase(ms, iuu);
    double phi = 0.5 * (t_du + t_ud - t_dd - t_uu);
    if (!std::isfinite(phi))
      throw std::runtime_error("calibrate: non-finite loop phase");
    if (std::abs(phi - target_phase) <= opt.tol_phase)
      return {s, phi, it};
    if (phi * target_phase <= 0.0) {
      std::ostringstream os;
      os << "calibrate: per-loop phase " << phi
         << " rad cannot reach target " << target_phase
         << " rad by amplitude scaling; check the sideband sign";
      throw std::runtime_error(os.str());
    }
    s *= std::pow(target_phase / phi, 0.25);
    if (!(s > 0) || !std::isfinite(s))
      throw std::runtime_error("calibrate: scale iteration diverged");
  }
  throw std::runtime_error("calibrate: no convergence within max_iter");
}

namespace {

// f(b1, b2) = sum_w w |z0 + e^{-i b2} z1 + e^{-i b1} z2 + e^{-i(b1+b2)} z3|^2
// maximized by alternating exact coordinate updates
double frame_opt_full(const std::vector<double>& wts,
                      const std::vector<std::array<complexd, 4>>& zs) {
  auto value = [&](double b1, double b2) {
    complexd e1 = std::exp(complexd(0, -b1)), e2 = std::exp(complexd(0, -b2));
    double f = 0;
    for (size_t k = 0; k < zs.size(); ++k) {
      const auto& z = zs[k];
      f += wts[k] * std::norm(z[0] + e2 * z[1] + e1 * z[2] + e1 * e2 * z[3]);
    }
    return f;
  };
  double best = 0;
  for (double b1s : {0.0, pi})
    for (double b2s : {0.0, pi}) {
      double b1 = b1s, b2 = b2s;
      for (int round = 0; round < 64; ++round) {
        complexd e1 = std::exp(complexd(0, -b1));
        complexd g2 = 0;
        for (size_t k = 0; k < zs.size(); ++k) {
          const auto& z = zs[k];
          complexd A = z[0] + e1 * z[2], B = z[1] + e1 * z[3];
          g2 += wts[k] * B * std::conj(A);
        }
        if (std::abs(g2) > 0) b2 = std::arg(g2);
        complexd e2 = std::exp(complexd(0, -b2));
        complexd g1 = 0;
        for (size_t k = 0; k < zs.size(); ++k) {
          const auto& z = zs[k];
          complexd A = z[0] + e2 * z[1], B = z[2] + e2 * z[3];
          g1 += wts[k] * B * std::conj(A);
        }
        if (std::abs(g1) > 0) b1 = std::arg(g1);
      }
      best = std::max(best, value(b1, b2));
    }
  return best;
}

// f(b) = sum_w w |z0 + e^{-i b} z1 + e^{-2 i b} z2|^2, scan plus golden refine
double frame_opt_sym(const std::vector<double>& wts,
                     const std::vector<std::array<complexd, 3>>& zs) {
  auto value = [&](double b) {
    complexd e1 = std::exp(complexd(0, -b)), e2 = e1 * e1;
    double f = 0;
    for (size_t k = 0; k < zs.size(); ++k)
      f += wts[k] * std::norm(zs[k][0] + e1 * zs[k][1] + e2 * zs[k][2]);
    return f;
  };
  int n = 2048;
  double best_b = 0, best = value(0);
  for (int k = 1; k < n; ++k) {
    double b = 2 * pi * k / n;
    double f = value(b);
    if (f > best) best = f, best_b = b;
  }
  double lo = best_b - 2 * pi / n, hi = best_b + 2 * pi / n;
  const double gr = 0.5 * (std::sqrt(5.0) - 1.0);
  double x1 = hi - gr * (hi - lo), x2 = lo + gr * (hi - lo);
  double f1 = value(x1), f2 = value(x2);
  for (int it = 0; it < 60; ++it) {
    if (f1 < f2) {
      lo = x1;
      x1 = x2;
      f1 = f2;
      x2 = lo + gr * (hi - lo);
      f2 = value(x2);
    } else {
      hi = x2;
      x2 = x1;
      f2 = f1;
      x1 = hi - gr * (hi - lo);
      f1 = value(x1);
    }
  }
  return std::max({best, f1, f2});
}

}  // namespace

GateResult gate_process(const OperatorModel& model,
                        const pulse::GateSchedule& schedule,
                        const ProcessOptions& opt) {
  const auto& lay = model.layout;
  const int L = lay.ion_levels, M = lay.mode_space;
  GateResult out;

  std::vector<std::pair<int, double>> branches;
  if (opt.thermal_nbar <= 0) {
    branches.emplace_back(0, 1.0);
  } else {
    double nb = opt.thermal_nbar, cum = 0;
    int top = lay.mode_dims[0] - 1;
    for (int n = 0; n <= top && cum < 0.999; ++n) {
      double p = std::pow(nb / (1 + nb), n) / (1 + nb);
      branches.emplace_back(n, p);
      cum += p;
    }
    for (auto& b : branches) b.second /= cum;  // truncated and renormalized
  }

  const complexd iu(0, 1);
  const std::array<complexd, 4> v4{1.0, iu, iu, 1.0};
  const std::array<complexd, 3> v3{1.0, iu, 1.0};
  MatrixXcd S = MatrixXcd::Zero(4, 3);
  S(0, 0) = 1;
  S(1, 1) = S(2, 1) = 1.0 / std::sqrt(2.0);
  S(3, 2) = 1;

  double tr_full = 0, pop_full = 0, tr_sym = 0, pop_sym = 0;
  std::vector<double> zw;
  std::vector<std::array<complexd, 4>> zfull;
  std::vector<std::array<complexd, 3>> zsym;

  for (auto [n0, p] : branches) {
    std::vector<int> fock0(lay.mode_ids.size(), 0);
    fock0[0] = n0;
    std::array<VectorXcd, 4> fin;
    for (int j = 0; j < 4; ++j) {
      VectorXcd psi = VectorXcd::Zero(model.dim());
      psi[lay.index(j >> 1, j & 1, fock0)] = 1.0;
      out.stats.merge(propagate(model, psi, schedule, opt.prop));
      fin[j] = std::move(psi);
    }
    for (int m = 0; m < M; ++m) {
      Eigen::Matrix4cd K;
      for (int r = 0; r < 4; ++r)
        for (int c = 0; c < 4; ++c)
          K(r, c) = fin[c][((r >> 1) * L + (r & 1)) * M + m];
      complexd trf = 0;
      for (int i = 0; i < 4; ++i) trf += std::conj(v4[i]) * K(i, i);
      tr_full += p * std::norm(trf);
      pop_full += p * K.squaredNorm();
      Eigen::Matrix3cd K3 = S.adjoint() * K * S;
      complexd trs = 0;
      for (int i = 0; i < 3; ++i) trs += std::conj(v3[i]) * K3(i, i);
      tr_sym += p * std::norm(trs);
      pop_sym += p * K3.squaredNorm();
      zw.push_back(p);
      zfull.push_back({std::conj(v4[0]) * K(0, 0), std::conj(v4[1]) * K(1, 1),
                       std::conj(v4[2]) * K(2, 2), std::conj(v4[3]) * K(3, 3)});
      zsym.push_back({std::conj(v3[0]) * K3(0, 0),
                      std::conj(v3[1]) * K3(1, 1),
                      std::conj(v3[2]) * K3(2, 2)});
      if (n0 == 0 && m == 0) {
        out.process = K;
        out.sym_process = K3;
      }
    }
  }

  out.avg_fidelity_full = (tr_full + pop_full) / 20.0;
  out.avg_fidelity_sym = (tr_sym + pop_sym) / 12.0;
  out.avg_fidelity_full_framed = (frame_opt_full(zw, zfull) + pop_full) / 20.0;
  out.avg_fidelity_sym_framed = (frame_opt_sym(zw, zsym) + pop_sym) / 12.0;
  out.leakage = 1.0 - pop_full / 4.0;
  out.entangling_phase =
      std::arg(out.process(1, 1)) + std::arg(out.process(2, 2)) -
      std::arg(out.process(0, 0)) - std::arg(out.process(3, 3));
  double per_loop = out.entangling_phase / (2.0 * schedule.loops);
  if (std::abs(per_loop - pi / 4) > opt.warn_phase) {
    out.phase_warning = true;
    std::cerr << "warning: per-loop entangling phase " << per_loop
              << " rad deviates from pi/4 by more than " << opt.warn_phase
              << "; the drive looks uncalibrated\n";
  }
  return out;
}

TransientTrace transient_populations(const OperatorModel& model,
                                     const pulse::GateSchedule& schedule,
                                     double filter_window,
                                     const PropagateOptions& opt,
                                     const VectorXcd* probe) {
  const auto& lay = model.layout;
  TransientTrace out;

  std::vector<std::vector<int>> masks;
  if (lay.ion_levels > 2) {
    out.channel.push_back("d_states");
    masks.emplace_back();
  }
  size_t first_mode = masks.size();
  for (size_t a = 0; a < lay.mode_ids.size(); ++a) {
    out.channel.push_back("mode " + std::to_string(lay.mode_ids[a]));
    masks.emplace_back();
  }
  std::vector<int> fock(lay.mode_ids.size());
  for (int idx = 0; idx < lay.dim; ++idx) {
    int s1, s2;
    lay.decode(idx, s1, s2, fock);
    if (lay.ion_levels > 2 && (s1 >= 2 || s2 >= 2)) masks[0].push_back(idx);
    for (size_t a = 0; a < fock.size(); ++a)
      if (fock[a] >= 1) masks[first_mode + a].push_back(idx);
  }
  const size_t nch = masks.size();

  VectorXcd psi;
  if (probe) {
    psi = *probe;
  } else {
    psi = VectorXcd::Zero(lay.dim);
    std::vector<int> vac(lay.mode_ids.size(), 0);
    for (int s1 = 0; s1 < 2; ++s1)
      for (int s2 = 0; s2 < 2; ++s2) psi[lay.index(s1, s2, vac)] = 0.5;
  }

  std::vector<double> ts;
  std::vector<std::vector<double>> raw(nch);
  Observer obs = [&](double t, const VectorXcd& x) {
    ts.push_back(t);
    for (size_t c = 0; c < nch; ++c) {
      double p = 0;
      for (int i : masks[c]) p += std::norm(x[i]);
      raw[c].push_back(p);
    }
  };
  out.stats = propagate(model, psi, schedule, opt, obs);

  out.peak_filtered.assign(nch, 0.0);
  out.final_raw.assign(nch, 0.0);
  for (size_t c = 0; c < nch; ++c)
    out.final_raw[c] = raw[c].empty() ? 0.0 : raw[c].back();

  if (filter_window <= 0 || ts.size() < 2) {
    out.time = ts;
    out.filtered.resize(static_cast<long>(ts.size()), nch);
    for (size_t c = 0; c < nch; ++c) {
      for (size_t k = 0; k < ts.size(); ++k)
        out.filtered(static_cast<long>(k), static_cast<long>(c)) = raw[c][k];
      out.peak_filtered[c] =
          raw[c].empty() ? 0.0 : *std::max_element(raw[c].begin(), raw[c].end());
    }
    return out;
  }

  // moving average over the window via a cumulative trapezoid integral
  double t0 = ts.front(), t1 = ts.back();
  std::vector<std::vector<double>> cum(nch, std::vector<double>(ts.size()));
  for (size_t c = 0; c < nch; ++c) {
    cum[c][0] = 0;
    for (size_t k = 1; k < ts.size(); ++k)
      cum[c][k] = cum[c][k - 1] +
                  0.5 * (raw[c][k] + raw[c][k - 1]) * (ts[k] - ts[k - 1]);
  }
  auto cum_at = [&](size_t c, double t) {
    if (t <= t0) return 0.0;
    if (t >= t1) return cum[c].back();
    auto it = std::upper_bound(ts.begin(), ts.end(), t);
    size_t k = static_cast<size_t>(it - ts.begin());
    double tl = ts[k - 1], tr = ts[k];
    double frac = tr > tl ? (t - tl) / (tr - tl) : 0.0;
    double pl = raw[c][k - 1], pr = raw[c][k];
    double pm = pl + frac * (pr - pl);
    return cum[c][k - 1] + 0.5 * (pl + pm) * (t - tl);
  };

  double step = filter_window / 4;
  size_t grid = static_cast<size_t>(std::ceil((t1 - t0) / step)) + 1;
  out.time.resize(grid);
  out.filtered.resize(static_cast<long>(grid), nch);
  for (size_t k = 0; k < grid; ++k) {
    double tc = std::min(t0 + step * k, t1);
    out.time[k] = tc;
    double a = std::max(t0, tc - 0.5 * filter_window);
    double b = std::min(t1, tc + 0.5 * filter_window);
    for (size_t c = 0; c < nch; ++c) {
      double v = b > a ? (cum_at(c, b) - cum_at(c, a)) / (b - a)
                       : raw[c].back();
      out.filtered(static_cast<long>(k), static_cast<long>(c)) = v;
      out.peak_filtered[c] = std::max(out.peak_filtered[c], v);
    }
  }
  return out;
}

OperatorModel DriveSetup::build(Tier tier,
                                const hamiltonian::Truncations& trunc) const {
  switch (tier) {
    case Tier::full:
      return hamiltonian::build_full(spectrum, lde, beams, scheme, trunc,
                                     extras);
    case Tier::lightshift:
      return hamiltonian::build_lightshift(spectrum, lde, beams, scheme, trunc,
                                           extras, warn_ratio);
    case Tier::sdf:
      return hamiltonian::build_sdf(spectrum, lde, beams, scheme, trunc,
                                    delta_signed, extras);
  }
  throw std::logic_error("unknown tier");
}

DriveSetup drive_setup(const config::RunConfig& cfg) {
  DriveSetup s;
  s.spectrum = crystal::normal_modes(cfg.trap_config());
  s.lde = crystal::lamb_dicke(s.spectrum, cfg.delta_k());
  s.schedule = cfg.gate_schedule();
  double w_gate = s.spectrum.modes[s.lde.gate_mode].frequency;
  s.delta_signed = cfg.beams.sideband_sign * s.schedule.delta;
  double mu = w_gate + s.delta_signed;
  s.beams = hamiltonian::BeamPair::standard(
      cfg.coupling(), mu, cfg.wavenumber() * cfg.beam_direction(0),
      cfg.wavenumber() * cfg.beam_direction(1));
  s.beams.e0_leak_rabi = cfg.e0_leak_rabi();
  s.beams.snap = cfg.beams.snap_commensurate;
  s.scheme.delta = cfg.detuning();
  s.scheme.include_e0 = cfg.e0_leak_rabi() > 0;
  s.extras.qubit_shift = cfg.qubit_shift();
  s.extras.mw_rabi = (s.schedule.mw_ideal || s.schedule.t_pi <= 0)
                         ? 0.0
                         : pi / s.schedule.t_pi;
  s.prop.tol = cfg.simulation.tolerance;
  s.prop.samples_per_fast = cfg.simulation.samples_per_fast_period;
  s.warn_ratio = cfg.simulation.elimination_ratio_warn;
  s.target_phase = pi / 4;
  return s;
}

hamiltonian::Truncations gate_truncations(const config::RunConfig& cfg,
                                          const crystal::ModeSpectrum& spectrum,
                                          bool with_axial_com) {
  hamiltonian::Truncations t;
  t.max_dimension = cfg.truncations.max_dimension;
  t.modes.emplace_back(
      spectrum.mode_index(crystal::Axis::x, crystal::ModeLabel::str),
      cfg.truncations.n_max_gate);
  if (with_axial_com)
    t.modes.emplace_back(
        spectrum.mode_index(crystal::Axis::x, crystal::ModeLabel::com),
        cfg.truncations.n_max_axial_com);
  return t;
}

namespace {

std::string mode_name(const crystal::Mode& m) {
  std::string axis = m.axis == crystal::Axis::x   ? "x"
                     : m.axis == crystal::Axis::y ? "y"
                                                  : "z";
  return axis + (m.label == crystal::ModeLabel::com ? " com" : " str");
}

VectorXcd plus_plus_probe(const BasisLayout& lay) {
  VectorXcd psi = VectorXcd::Zero(lay.dim);
  std::vector<int> vac(lay.mode_ids.size(), 0);
  for (int s1 = 0; s1 < 2; ++s1)
    for (int s2 = 0; s2 < 2; ++s2) psi[lay.index(s1, s2, vac)] = 0.5;
  return psi;
}

}  // namespace

StagedResult staged_error(const config::RunConfig& cfg, int threads) {
  DriveSetup setup = drive_setup(cfg);
  StagedResult out;

  OperatorModel stage1 =
      setup.build(Tier::full, gate_truncations(cfg, setup.spectrum, true))
          .compressed(1e-10);
  CalibrateOptions copt;
  copt.prop = setup.prop;
  out.calibration = calibrate(stage1, setup.schedule, setup.target_phase, copt);
  OperatorModel cal1 = stage1.scaled(out.calibration.field_scale);

  ProcessOptions popt;
  popt.prop = setup.prop;
  popt.thermal_nbar = cfg.simulation.thermal_nbar;
  out.stage1 = gate_process(cal1, setup.schedule, popt);
  out.stage1_error = 1.0 - out.stage1.avg_fidelity_sym;

  out.transient = transient_populations(cal1, setup.schedule,
                                        2 * pi / cfg.detuning(), setup.prop);

  const std::array<std::pair<crystal::Axis, crystal::ModeLabel>, 4> radial{
      {{crystal::Axis::y, crystal::ModeLabel::com},
       {crystal::Axis::y, crystal::ModeLabel::str},
       {crystal::Axis::z, crystal::ModeLabel::com},
       {crystal::Axis::z, crystal::ModeLabel::str}}};
  out.radial_populations.resize(radial.size());

  auto run_radial = [&](size_t r) {
    auto [axis, label] = radial[r];
    int mode_id = setup.spectrum.mode_index(axis, label);
    hamiltonian::Truncations tr;
    tr.max_dimension = cfg.truncations.max_dimension;
    tr.modes.emplace_back(
        setup.spectrum.mode_index(crystal::Axis::x, crystal::ModeLabel::str),
        cfg.truncations.n_max_gate);
    tr.modes.emplace_back(mode_id, cfg.truncations.n_max_radial);
    OperatorModel m = setup.build(Tier::full, tr)
                          .compressed(1e-10)
                          .scaled(out.calibration.field_scale);
    VectorXcd psi = plus_plus_probe(m.layout);
    propagate(m, psi, setup.schedule, setup.prop);
    double pop = 0;
    std::vector<int> fock(m.layout.mode_ids.size());
    for (int idx = 0; idx < m.layout.dim; ++idx) {
      int s1, s2;
      m.layout.decode(idx, s1, s2, fock);
      if (fock[1] >= 1) pop += std::norm(psi[idx]);
    }
    out.radial_populations[r] = {mode_name(setup.spectrum.modes[mode_id]), pop};
  };

  if (threads <= 1) {
    for (size_t r = 0; r < radial.size(); ++r) run_radial(r);
  } else {
    size_t next = 0;
    while (next < radial.size()) {
      std::vector<std::future<void>> wave;
      for (int k = 0; k < threads && next < radial.size(); ++k, ++next)
        wave.push_back(std::async(std::launch::async, run_radial, next));
      for (auto& f : wave) f.get();
    }
  }

  out.total = out.stage1_error;
  for (const auto& [name, pop] : out.radial_populations) out.total += pop;
  return out;
}

LeakageResult leakage_experiment(const config::RunConfig& cfg, BeamSelect sel,
                                 int gates) {
  if (gates < 1) throw std::invalid_argument("leakage_experiment: gates >= 1");
  DriveSetup setup = drive_setup(cfg);
  if (sel == BeamSelect::a) {
    setup.beams.g_b = 0;
    setup.beams.symmetric = false;
  } else if (sel == BeamSelect::b) {
    setup.beams.g_a = 0;
    setup.beams.e0_leak_rabi = 0;  // the e0 coupling rides on beam a
    setup.beams.symmetric = false;
    setup.scheme.include_e0 = false;
  }
  OperatorModel model =
      setup.build(Tier::full, gate_truncations(cfg, setup.spectrum, false));
  const auto& lay = model.layout;

  std::vector<int> mask_e0, mask_out;
  {
    std::vector<int> fock(lay.mode_ids.size());
    for (int idx = 0; idx < lay.dim; ++idx) {
      int s1, s2;
      lay.decode(idx, s1, s2, fock);
      if (s1 >= 2 || s2 >= 2) mask_out.push_back(idx);
      if (s1 == hamiltonian::lvl_e0 || s2 == hamiltonian::lvl_e0)
        mask_e0.push_back(idx);
    }
  }
  auto pop_of = [](const VectorXcd& x, const std::vector<int>& mask) {
    double p = 0;
    for (int i : mask) p += std::norm(x[i]);
    return p;
  };

  LeakageResult out;
  out.gates = gates;
  VectorXcd psi = VectorXcd::Zero(lay.dim);
  std::vector<int> vac(lay.mode_ids.size(), 0);
  psi[lay.index(1, 1, vac)] = 1.0;  // |up,up>, the beam-a-driven spin state

  double T = setup.schedule.total_time();
  Observer obs = [&](double, const VectorXcd& x) {
    out.e0_peak = std::max(out.e0_peak, pop_of(x, mask_e0));
  };
  for (int k = 0; k < gates; ++k) {
    PropagateOptions po = setup.prop;
    po.t0 = k * T;
    out.stats.merge(propagate(model, psi, setup.schedule, po, obs));
    out.out_after_gate.push_back(pop_of(psi, mask_out));
  }
  out.e0_final_per_gate = pop_of(psi, mask_e0) / gates;
  out.out_final_per_gate = out.out_after_gate.back() / gates;
  return out;
}

}  // namespace lsgate::evolve
