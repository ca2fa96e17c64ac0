#include "lsgate/pulse.hpp"

#include <cmath>

namespace lsgate::pulse {

namespace cn = lsgate::constants;

double PulseEnvelope::value(double t) const {
  double wall = wall_duration();
  if (t < 0 || t > wall) return 0.0;
  if (shape == Shape::square || ramp_duration <= 0) return 1.0;
  double tau = ramp_duration;
  if (t < tau) {
    double s = std::sin(0.5 * cn::pi * t / tau);
    return s * s;
  }
  if (t > wall - tau) {
    double s = std::sin(0.5 * cn::pi * (wall - t) / tau);
    return s * s;
  }
  return 1.0;
}

double PulseEnvelope::integral_sq_deficit() const {
  if (shape == Shape::square || ramp_duration <= 0) return 0.0;
  // int_0^tau sin^4 = 3 tau / 8 versus tau/2 up to mid-ramp; sin^2 is exact
  return force_power == 2 ? ramp_duration / 4.0 : 0.0;
}

double GateSchedule::total_time() const {
  return segments.empty() ? 0.0 : segments.back().start + segments.back().duration;
}

GateSchedule make_schedule(int loops, double t_loop, double t_pi, bool echo,
                           PulseEnvelope env, bool mw_ideal) {
  if (loops < 1) throw std::invalid_argument("at least one loop required");
  if (t_loop <= 0) throw std::invalid_argument("loop time must be positive");
  if (env.shape == Shape::sin2_ramp && t_loop <= 2.0 * env.ramp_duration)
    throw std::invalid_argument("no flat top: t_loop must exceed twice the ramp");
  if (echo && loops % 2 != 0)
    throw std::invalid_argument("spin echo requires an even loop count");

  env.loop_duration = t_loop;

  GateSchedule s;
  s.loops = loops;
  s.t_loop = t_loop;
  s.t_pi = t_pi;
  s.delta = cn::two_pi / t_loop;
  s.echo = echo;
  s.mw_ideal = mw_ideal;
  s.envelope = env;

  double t = 0;
  for (int k = 0; k < loops; ++k) {
    s.segments.push_back({SegmentKind::sdf_loop, env.wall_duration(), t, k, 0.0});
    t += env.wall_duration();
    if (echo) {
      // alternating R_x(pi), R_-x(pi) cancels static qubit shifts loop-pairwise
      double phase = (k % 2 == 0) ? 0.0 : cn::pi;
      s.segments.push_back({SegmentKind::microwave_pi, t_pi, t, -1, phase});
      t += t_pi;
    }
  }
  return s;
}

}  // namespace lsgate::pulse
