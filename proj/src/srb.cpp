#include "lsgate/srb.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <deque>
#include <future>
#include <istream>
#include <ostream>
#include <random>
#include <sstream>
#include <stdexcept>

namespace lsgate::srb {

namespace {

using Eigen::Matrix3cd;
using Eigen::Vector3d;
using Eigen::VectorXd;
using complexd = std::complex<double>;

constexpr double pi = 3.14159265358979323846;
constexpr double third = 1.0 / 3.0;

const Matrix3cd& jx() {
  static const Matrix3cd m = [] {
    Matrix3cd j = Matrix3cd::Zero();
    double r = std::sqrt(0.5);  // (J+ + J-)/2 with J+ entries sqrt(2)
    j(1, 0) = j(0, 1) = j(2, 1) = j(1, 2) = r;
    return j;
  }();
  return m;
}

const Matrix3cd& jy() {
  static const Matrix3cd m = [] {
    Matrix3cd j = Matrix3cd::Zero();
    complexd r(0, std::sqrt(0.5));  // (J+ - J-)/2i with J+ entries sqrt(2)
    j(1, 0) = j(2, 1) = -r;
    j(0, 1) = j(1, 2) = r;
    return j;
  }();
  return m;
}

const Matrix3cd& jz() {
  static const Matrix3cd m = [] {
    Matrix3cd j = Matrix3cd::Zero();
    j(0, 0) = -1.0;
    j(2, 2) = 1.0;
    return j;
  }();
  return m;
}

// exp(-i v.J) in the spin-1 representation; (n.J)^3 = n.J collapses the series
Matrix3cd rot_axis_angle(const Vector3d& v) {
  double th = v.norm();
  Matrix3cd vj = v.x() * jx() + v.y() * jy() + v.z() * jz();
  if (th < 1e-10)
    return Matrix3cd::Identity() - complexd(0, 1) * vj - 0.5 * (vj * vj);
  Matrix3cd nj = vj / th;
  return Matrix3cd::Identity() - complexd(0, std::sin(th)) * nj +
         (std::cos(th) - 1.0) * (nj * nj);
}

Matrix3cd canon(const Matrix3cd& u) {
  double mx = u.cwiseAbs().maxCoeff();
  for (int r = 0; r < 3; ++r)
    for (int c = 0; c < 3; ++c)
      if (std::abs(u(r, c)) > mx - 1e-6) {
        complexd ph = u(r, c) / std::abs(u(r, c));
        return u / ph;
      }
  return u;
}

// ---- native word synthesis --------------------------------------------------
// A candidate word is R_n LS R_{n-1} ... LS R_0 with each R an arbitrary
// axis-angle rotation block; Levenberg-Marquardt drives the phase-aligned
// difference to zero, random restarts cover the basins.

struct word_value {
  const Matrix3cd& target;
  int n_ls;

  Matrix3cd value(const VectorXd& x) const {
    Matrix3cd u = rot_axis_angle(x.segment<3>(0));
    for (int k = 1; k <= n_ls; ++k)
      u = rot_axis_angle(x.segment<3>(3 * k)) * (ls_gate() * u);
    return u;
  }

  void residual(const VectorXd& x, VectorXd& r) const {
    Matrix3cd u = value(x);
    complexd ov = (target.adjoint() * u).trace();
    complexd ph = std::abs(ov) < 1e-12 ? complexd(1, 0) : ov / std::abs(ov);
    Matrix3cd d = u - ph * target;
    r.resize(18);
    for (int c = 0, k = 0; c < 3; ++c)
      for (int rr = 0; rr < 3; ++rr, k += 2) {
        r[k] = d(rr, c).real();
        r[k + 1] = d(rr, c).imag();
      }
  }
};

bool solve_word(const Matrix3cd& target, int n_ls, std::uint64_t seed,
                int restarts, VectorXd& sol) {
  word_value wp{target, n_ls};
  int np = 3 * (n_ls + 1);
  VectorXd r(18), rt(18), rp(18), rm(18);
  Eigen::MatrixXd jac(18, np);

  for (int rs = 0; rs < restarts; ++rs) {
    VectorXd x = VectorXd::Zero(np);
    if (rs > 0) {
      std::mt19937_64 rng(seed + std::uint64_t(rs));
      for (int k = 0; k < np; ++k)
        x[k] = (double(rng() >> 11) * 0x1.0p-53 * 2.0 - 1.0) * pi;
    }
    wp.residual(x, r);
    double ssr = r.squaredNorm();
    double mu = 1e-3;
    int stall = 0;
    for (int it = 0; it < 120 && stall < 12; ++it) {
      const double h = 1e-6;
      for (int k = 0; k < np; ++k) {
        VectorXd xp = x, xm = x;
        xp[k] += h;
        xm[k] -= h;
        wp.residual(xp, rp);
        wp.residual(xm, rm);
        jac.col(k) = (rp - rm) / (2 * h);
      }
      Eigen::MatrixXd jtj = jac.transpose() * jac;
      VectorXd g = jac.transpose() * r;
      bool moved = false;
      for (int tr = 0; tr < 8; ++tr) {
        Eigen::MatrixXd m = jtj;
        m.diagonal().array() += mu;
        VectorXd dx = m.ldlt().solve(-g);
        VectorXd xt = x + dx;
        // keep rotation angles wrapped so the parameters stay bounded
        for (int s = 0; s <= n_ls; ++s) {
          double th = xt.segment<3>(3 * s).norm();
          if (th > 2 * pi)
            xt.segment<3>(3 * s) *= std::fmod(th, 2 * pi) / th;
        }
        wp.residual(xt, rt);
        double st = rt.squaredNorm();
        if (st < ssr) {
          x = xt;
          r = rt;
          ssr = st;
          mu = std::max(mu / 3.0, 1e-12);
          moved = true;
          break;
        }
        mu *= 4.0;
      }
      stall = moved ? 0 : stall + 1;
      if (ssr < 1e-26) break;
    }
    if (ssr < 1e-22) {
      sol = x;
      return true;
    }
  }
  return false;
}

// ---- quaternion split of a rotation block into equatorial pulses -----------

struct quat {
  double w, x, y, z;
};

quat qmul(const quat& a, const quat& b) {
  return {a.w * b.w - a.x * b.x - a.y * b.y - a.z * b.z,
          a.w * b.x + b.w * a.x + a.y * b.z - a.z * b.y,
          a.w * b.y + b.w * a.y + a.z * b.x - a.x * b.z,
          a.w * b.z + b.w * a.z + a.x * b.y - a.y * b.x};
}

void push_pulse(const quat& q, std::vector<NativeGate>& out) {
  double s = std::hypot(q.x, q.y);
  if (s < 1e-11) return;  // identity in the integer-spin representation
  double angle = 2.0 * std::atan2(s, q.w);
  if (angle < 0) angle += 4 * pi;
  angle = std::fmod(angle, 2 * pi);
  if (angle < 1e-11 || 2 * pi - angle < 1e-11) return;
  out.push_back({false, std::atan2(q.y, q.x), angle});
}

// any SU(2) block factors as (equatorial) x (equatorial about x or y)
void append_rotation_pulses(const Vector3d& v, std::vector<NativeGate>& out) {
  double th = v.norm();
  if (th < 1e-11) return;
  Vector3d n = v / th;
  double c = std::cos(th / 2), s = std::sin(th / 2);
  quat q{c, s * n.x(), s * n.y(), s * n.z()};
  if (std::abs(q.z) < 1e-11) {
    push_pulse(q, out);
    return;
  }
  double eq = std::hypot(q.x, q.y);
  if (eq < 1e-11) {
    // pure z rotation: two pi pulses about axes split by half the angle
    double zeta = 2.0 * std::atan2(q.z, q.w);
    out.push_back({false, 0.0, pi});
    out.push_back({false, zeta / 2.0, pi});
    return;
  }
  double tb = std::abs(q.y) >= std::abs(q.x) ? 2.0 * std::atan2(-q.z, q.y)
                                             : 2.0 * std::atan2(q.z, q.x);
  quat b = std::abs(q.y) >= std::abs(q.x)
               ? quat{std::cos(tb / 2), std::sin(tb / 2), 0, 0}
               : quat{std::cos(tb / 2), 0, std::sin(tb / 2), 0};
  quat a = qmul(q, {b.w, -b.x, -b.y, -b.z});
  if (std::abs(a.z) > 1e-9)
    throw std::runtime_error("equatorial split failed to cancel the z component");
  push_pulse(b, out);
  push_pulse(a, out);
}

std::uint64_t splitmix(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ull;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
  return x ^ (x >> 31);
}

double lambda_of(double eps) {
  if (eps < 0 || eps > 2.0 / 3.0)
    throw std::invalid_argument("depolarizing error must lie in [0, 2/3]");
  return 1.5 * eps;
}

void depolarize(Matrix3cd& rho, double lam) {
  if (lam == 0) return;
  complexd tr = rho.trace();
  rho *= (1.0 - lam);
  rho.diagonal().array() += lam * tr / 3.0;
}

double sample_survival(double prob, int shots, std::uint64_t seed) {
  prob = std::clamp(prob, 0.0, 1.0);
  std::mt19937_64 rng(seed ^ 0xD1B54A32D192ED03ull);
  int hit = 0;
  for (int k = 0; k < shots; ++k)
    if (double(rng() >> 11) * 0x1.0p-53 < prob) ++hit;
  return double(hit) / double(shots);
}

}  // namespace

Eigen::Matrix3cd ls_gate() {
  Matrix3cd u = Matrix3cd::Identity();
  u(1, 1) = complexd(0, 1);
  return u;
}

Eigen::Matrix3cd equatorial_rotation(double axis, double angle) {
  return rot_axis_angle(Vector3d(angle * std::cos(axis), angle * std::sin(axis), 0));
}

Eigen::Matrix3cd recompose(const CompiledClifford& c) {
  Matrix3cd u = Matrix3cd::Identity();
  for (const NativeGate& g : c.gates)
    u = (g.entangler ? ls_gate() : equatorial_rotation(g.axis, g.angle)) * u;
  return u;
}

double phase_distance(const Eigen::Matrix3cd& a, const Eigen::Matrix3cd& b) {
  complexd ov = (b.adjoint() * a).trace();
  complexd ph = std::abs(ov) < 1e-12 ? complexd(1, 0) : ov / std::abs(ov);
  return (a - ph * b).norm();
}

CliffordGroup::CliffordGroup() {
  complexd w = std::exp(complexd(0, 2 * pi / 3));
  Matrix3cd f;
  f << 1, 1, 1, 1, w, w * w, 1, w * w, w;
  f /= std::sqrt(3.0);
  Matrix3cd p = Matrix3cd::Identity();
  p(2, 2) = w;

  elems_.push_back(Matrix3cd::Identity());
  std::deque<int> frontier{0};
  while (!frontier.empty()) {
    Matrix3cd u = elems_[frontier.front()];
    frontier.pop_front();
    for (const Matrix3cd& g : {f, p}) {
      Matrix3cd v = canon(g * u);
      if (find(v) < 0) {
        elems_.push_back(v);
        frontier.push_back(int(elems_.size()) - 1);
      }
    }
  }
  if (size() != 216)
    throw std::runtime_error("qutrit Clifford closure produced " +
                             std::to_string(size()) + " elements, expected 216");

  table_.assign(size_t(size()) * size(), -1);
  inv_.assign(size(), -1);
  for (int a = 0; a < size(); ++a) {
    for (int b = 0; b < size(); ++b) {
      int k = find(elems_[a] * elems_[b]);
      if (k < 0)
        throw std::runtime_error("qutrit Clifford closure violated at product " +
                                 std::to_string(a) + "*" + std::to_string(b));
      table_[size_t(a) * size() + b] = k;
      if (k == 0) inv_[a] = b;
    }
    if (inv_[a] < 0)
      throw std::runtime_error("qutrit Clifford element " + std::to_string(a) +
                               " has no inverse in the closure");
  }
}

int CliffordGroup::find(const Eigen::Matrix3cd& u) const {
  double a00 = std::abs(u(0, 0)), a10 = std::abs(u(1, 0));
  for (int j = 0; j < size(); ++j) {
    const Matrix3cd& e = elems_[j];
    if (std::abs(a00 - std::abs(e(0, 0))) > 1e-3) continue;
    if (std::abs(a10 - std::abs(e(1, 0))) > 1e-3) continue;
    if (phase_distance(u, e) < 1e-6) return j;
  }
  return -1;
}

const CliffordGroup& CliffordGroup::instance() {
  static const CliffordGroup g;
  return g;
}

CompiledCatalog::CompiledCatalog() {
  const CliffordGroup& g = CliffordGroup::instance();
  seq_.resize(g.size());
  const int restarts[5] = {8, 24, 72, 128, 64};
  long n_ls_sum = 0, n_1q_sum = 0;
  for (int i = 0; i < g.size(); ++i) {
    VectorXd sol;
    int used = -1;
    for (int n = 0; n < 5 && used < 0; ++n)
      if (solve_word(g.element(i), n, 0xC11FF0D0ull + 977u * std::uint64_t(i) + n,
                     restarts[n], sol))
        used = n;
    if (used < 0)
      throw std::runtime_error("no native word found for Clifford element " +
                               std::to_string(i));
    CompiledClifford& c = seq_[i];
    for (int k = 0; k <= used; ++k) {
      append_rotation_pulses(sol.segment<3>(3 * k), c.gates);
      if (k < used) c.gates.push_back({true, 0.0, 0.0});
    }
    for (const NativeGate& ng : c.gates) (ng.entangler ? c.n_ls : c.n_1q)++;
    if (c.n_ls != used)
      throw std::runtime_error("entangler count mismatch in compiled element " +
                               std::to_string(i));
    double dist = phase_distance(recompose(c), g.element(i));
    if (dist > 1e-10)
      throw std::runtime_error("compiled element " + std::to_string(i) +
                               " recomposes with distance " + std::to_string(dist));
    stats_.ls_histogram[used]++;
    stats_.max_n_ls = std::max(stats_.max_n_ls, used);
    n_ls_sum += c.n_ls;
    n_1q_sum += c.n_1q;
  }
  stats_.mean_n_ls = double(n_ls_sum) / g.size();
  stats_.mean_n_1q = double(n_1q_sum) / g.size();
}

const CompiledCatalog& CompiledCatalog::instance() {
  static const CompiledCatalog c;
  return c;
}

const CompiledClifford& compile_clifford(int index) {
  return CompiledCatalog::instance().sequence(index);
}

RandomSequence generate_sequence(int length, std::uint64_t seed) {
  if (length < 1) throw std::invalid_argument("sequence length must be >= 1");
  const CliffordGroup& g = CliffordGroup::instance();
  std::mt19937_64 rng(splitmix(seed));
  RandomSequence rs;
  rs.cliffords.reserve(length);
  int acc = 0;  // identity
  for (int k = 0; k < length; ++k) {
    int c = int(rng() % std::uint64_t(g.size()));
    rs.cliffords.push_back(c);
    acc = g.product(c, acc);
  }
  rs.inverter = g.inverse(acc);
  return rs;
}

namespace {

double sequence_probability(const RandomSequence& rs, const NoiseModel& noise) {
  const CliffordGroup& g = CliffordGroup::instance();
  if (const auto* dep = std::get_if<DepolarizingNoise>(&noise)) {
    // every factor is unitary and the ideal product closes, so the survival
    // is the closed form 1/3 + 2/3 prod(1 - lambda)
    double q = std::pow(1.0 - lambda_of(dep->eps_clifford),
                        double(rs.cliffords.size()));
    if (dep->eps_ls > 0 || dep->eps_1q > 0) {
      long nls = 0, n1q = 0;
      for (int c : rs.cliffords) {
        const CompiledClifford& cc = compile_clifford(c);
        nls += cc.n_ls;
        n1q += cc.n_1q;
      }
      q *= std::pow(1.0 - lambda_of(dep->eps_ls), double(nls)) *
           std::pow(1.0 - lambda_of(dep->eps_1q), double(n1q));
    }
    return third + (1.0 - third) * q;
  }
  const auto& pn = std::get<ProcessNoise>(noise);
  double lam = lambda_of(pn.eps_1q);
  Matrix3cd rho = Matrix3cd::Zero();
  rho(0, 0) = 1.0;
  auto apply_compiled = [&](int idx) {
    for (const NativeGate& ng : compile_clifford(idx).gates) {
      if (ng.entangler) {
        rho = pn.ls_process * rho * pn.ls_process.adjoint();
      } else {
        Matrix3cd u = equatorial_rotation(ng.axis, ng.angle);
        rho = u * rho * u.adjoint();
        depolarize(rho, lam);
      }
    }
  };
  for (int c : rs.cliffords) apply_compiled(c);
  apply_compiled(rs.inverter);
  return rho(0, 0).real();
}

}  // namespace

SRBDataset run_srb(const NoiseModel& noise, const std::vector<int>& lengths,
                   int n_seq, int shots, std::uint64_t seed, int threads) {
  if (lengths.empty()) throw std::invalid_argument("no sequence lengths given");
  if (n_seq < 1) throw std::invalid_argument("need at least one sequence");
  if (shots < 0) throw std::invalid_argument("negative shot count");

  SRBDataset data;
  data.lengths = lengths;
  if (const auto* dep = std::get_if<DepolarizingNoise>(&noise)) {
    std::ostringstream lbl;
    lbl << "depolarizing eps_clifford=" << dep->eps_clifford
        << " eps_ls=" << dep->eps_ls << " eps_1q=" << dep->eps_1q;
    data.noise_label = lbl.str();
  } else {
    std::ostringstream lbl;
    lbl << "ls-process eps_1q=" << std::get<ProcessNoise>(noise).eps_1q;
    data.noise_label = lbl.str();
  }

  std::size_t total = lengths.size() * std::size_t(n_seq);
  data.records.resize(total);
  auto fill = [&](std::size_t lo, std::size_t hi) {
    for (std::size_t j = lo; j < hi; ++j) {
      int length = lengths[j / n_seq];
      std::uint64_t rec_seed = splitmix(seed + 0x9E3779B97F4A7C15ull * (j + 1));
      RandomSequence rs = generate_sequence(length, rec_seed);
      double prob = sequence_probability(rs, noise);
      double survival =
          shots > 0 ? sample_survival(prob, shots, rec_seed) : prob;
      data.records[j] = {length, rec_seed, shots, survival};
    }
  };
  int nt = std::max(1, threads);
  if (nt == 1 || total < 2) {
    fill(0, total);
  } else {
    std::vector<std::future<void>> jobs;
    std::size_t chunk = (total + nt - 1) / nt;
    for (std::size_t lo = 0; lo < total; lo += chunk)
      jobs.push_back(std::async(std::launch::async, fill, lo,
                                std::min(lo + chunk, total)));
    for (auto& jb : jobs) jb.get();
  }
  return data;
}

SRBFit fit_srb(const SRBDataset& data, const FitOptions& opt) {
  std::vector<int> uniq = data.lengths;
  std::sort(uniq.begin(), uniq.end());
  uniq.erase(std::unique(uniq.begin(), uniq.end()), uniq.end());
  if (uniq.size() < 2)
    throw std::invalid_argument("fit needs at least two distinct lengths");
  const std::size_t n = data.records.size();
  if (n < 3) throw std::invalid_argument("fit needs at least three records");

  // log-linear seed for the decay from per-length means above the asymptote
  double a0, p0;
  {
    double sl = 0, sy = 0, sll = 0, sly = 0;
    int cnt = 0;
    for (int length : uniq) {
      double mean = 0;
      int m = 0;
      for (const auto& r : data.records)
        if (r.length == length) {
          mean += r.survival;
          ++m;
        }
      mean /= std::max(1, m);
      double y = std::log(std::max(mean - third, 1e-12));
      sl += length;
      sy += y;
      sll += double(length) * length;
      sly += double(length) * y;
      ++cnt;
    }
    double det = cnt * sll - sl * sl;
    double slope = (cnt * sly - sl * sy) / det;
    double icpt = (sy * sll - sl * sly) / det;
    p0 = std::clamp(std::exp(slope), 1e-6, 1.2);
    a0 = std::clamp(std::exp(icpt), 1e-9, 2.0);
  }

  int np = opt.free_asymptote ? 3 : 2;
  VectorXd x(np);
  x[0] = a0;
  x[1] = p0;
  if (np == 3) x[2] = third;

  bool sampled = std::any_of(data.records.begin(), data.records.end(),
                             [](const SequenceRecord& r) { return r.shots > 0; });
  VectorXd wts = VectorXd::Ones(n);
  Eigen::MatrixXd jac(n, np);
  VectorXd res(n);
  Eigen::MatrixXd jtwj;
  double ssr = 0;

  for (int round = 0; round < (sampled ? 2 : 1); ++round) {
    if (round > 0)  // binomial weights from the previous pass
      for (std::size_t i = 0; i < n; ++i) {
        const auto& r = data.records[i];
        double base = np == 3 ? x[2] : third;
        double f = std::clamp(base + x[0] * std::pow(x[1], r.length), 0.0, 1.0);
        wts[i] = r.shots / std::max(1e-6, f * (1.0 - f));
      }
    double mu = 1e-6;
    for (int it = 0; it < 200; ++it) {
      for (std::size_t i = 0; i < n; ++i) {
        const auto& r = data.records[i];
        double base = np == 3 ? x[2] : third;
        double pl = std::pow(x[1], r.length - 1);
        double f = base + x[0] * pl * x[1];
        double sw = std::sqrt(wts[i]);
        res[i] = sw * (f - r.survival);
        jac(i, 0) = sw * pl * x[1];
        jac(i, 1) = sw * x[0] * r.length * pl;
        if (np == 3) jac(i, 2) = sw;
      }
      ssr = res.squaredNorm();
      jtwj = jac.transpose() * jac;
      VectorXd g = jac.transpose() * res;
      VectorXd dx;
      bool moved = false;
      for (int tr = 0; tr < 10; ++tr) {
        Eigen::MatrixXd m = jtwj;
        m.diagonal().array() += mu * jtwj.diagonal().maxCoeff();
        dx = m.ldlt().solve(-g);
        VectorXd xt = x + dx;
        xt[0] = std::clamp(xt[0], 1e-12, 2.0);
        xt[1] = std::clamp(xt[1], 1e-12, 1.5);
        if (np == 3) xt[2] = std::clamp(xt[2], -0.5, 1.0);
        double st = 0;
        for (std::size_t i = 0; i < n; ++i) {
          const auto& r = data.records[i];
          double base = np == 3 ? xt[2] : third;
          double f = base + xt[0] * std::pow(xt[1], r.length);
          st += wts[i] * (f - r.survival) * (f - r.survival);
        }
        if (st <= ssr) {
          moved = st < ssr - 1e-18 * (1 + ssr);
          x = xt;
          ssr = st;
          mu = std::max(mu / 4.0, 1e-14);
          break;
        }
        mu *= 8.0;
      }
      if (!moved && dx.norm() < 1e-12 * (1.0 + x.norm())) break;
      if (!moved) break;
    }
  }

  double p = x[1];
  if (!(p > 0) || p > 1.0 + 1e-6) {
    std::ostringstream msg;
    msg << "srb decay fit outside (0,1]: p=" << p << " amplitude=" << x[0]
        << " weighted rms residual="
        << std::sqrt(ssr / std::max<std::size_t>(1, n));
    throw std::runtime_error(msg.str());
  }
  p = std::min(p, 1.0);

  SRBFit fit;
  fit.p = p;
  fit.amplitude = x[0];
  fit.asymptote = np == 3 ? x[2] : third;
  fit.avg_fidelity_clifford = (1.0 + 2.0 * p) / 3.0;
  fit.eps_clifford = 1.0 - fit.avg_fidelity_clifford;

  double s2 = n > std::size_t(np) ? ssr / double(n - np) : 0.0;
  Eigen::MatrixXd cov =
      jtwj.ldlt().solve(Eigen::MatrixXd::Identity(np, np)) * s2;
  fit.sigma_p = std::sqrt(std::max(0.0, cov(1, 1)));
  fit.sigma_clifford = (2.0 / 3.0) * fit.sigma_p;

  const CatalogStats& st = CompiledCatalog::instance().stats();
  fit.mean_n_ls = st.mean_n_ls;
  fit.mean_n_1q = st.mean_n_1q;
  fit.eps_ls = (fit.eps_clifford - st.mean_n_1q * opt.eps_1q) / st.mean_n_ls;
  fit.avg_fidelity_ls = 1.0 - fit.eps_ls;
  fit.sigma_ls = fit.sigma_clifford / st.mean_n_ls;
  return fit;
}

std::vector<double> gap_survivals(double eps_1q, const std::vector<int>& lengths) {
  // one global pulse drives both ions, so the per-pulse subspace kick is
  // lambda = 3/2 * (2 eps_1q); the closing block costs two more pulses
  double lam = 3.0 * eps_1q;
  if (lam < 0 || lam > 1)
    throw std::invalid_argument("single-qubit error must lie in [0, 1/3]");
  const CatalogStats& st = CompiledCatalog::instance().stats();
  std::vector<double> out;
  out.reserve(lengths.size());
  for (int length : lengths) {
    double pulses = length * st.mean_n_1q + 2.0;
    out.push_back(third + (1.0 - third) * std::pow(1.0 - lam, pulses));
  }
  return out;
}

double gap_calibrate(double survival, int length) {
  if (!(survival > third && survival <= 1.0))
    throw std::invalid_argument("survival must lie in (1/3, 1]");
  const CatalogStats& st = CompiledCatalog::instance().stats();
  double pulses = length * st.mean_n_1q + 2.0;
  double lam = 1.0 - std::exp(std::log((survival - third) * 1.5) / pulses);
  return lam / 3.0;
}

void write_csv(std::ostream& os, const SRBDataset& data) {
  os << "length,seed,shots,survival\n";
  for (const auto& r : data.records) {
    char buf[96];
    std::snprintf(buf, sizeof buf, "%d,%llu,%d,%.17g\n", r.length,
                  static_cast<unsigned long long>(r.seed), r.shots, r.survival);
    os << buf;
  }
}

SRBDataset read_csv(std::istream& is) {
  std::string line;
  if (!std::getline(is, line) || line.rfind("length,seed,shots,survival", 0) != 0)
    throw std::runtime_error("srb csv must start with length,seed,shots,survival");
  SRBDataset data;
  data.noise_label = "csv";
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    SequenceRecord r;
    unsigned long long seed = 0;
    if (std::sscanf(line.c_str(), "%d,%llu,%d,%lg", &r.length, &seed, &r.shots,
                    &r.survival) != 4)
      throw std::runtime_error("bad srb csv row: " + line);
    r.seed = seed;
    if (r.survival < 0 || r.survival > 1)
      throw std::runtime_error("survival outside [0,1] in row: " + line);
    if (std::find(data.lengths.begin(), data.lengths.end(), r.length) ==
        data.lengths.end())
      data.lengths.push_back(r.length);
    data.records.push_back(r);
  }
  return data;
}

}  // namespace lsgate::srb
