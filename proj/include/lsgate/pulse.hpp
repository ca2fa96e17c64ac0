#pragma once

#include <stdexcept>
#include <vector>

#include "lsgate/constants.hpp"

// Envelopes and the loop / spin-echo gate schedule.
namespace lsgate::pulse {

enum class Shape { square, sin2_ramp };

// Ramp profile of one SDF loop segment. force_power maps the profile value
// to the optical force: 2 when the profile multiplies the laser field (the
// force then rises as profile^2), 1 when it multiplies the intensity. The
// loop window runs between the area-equivalent edges of the force envelope,
// so the force area over the segment equals loop_duration for either
// convention and delta = 2 pi / loop_duration closes the loops. For
// force_power 1 that timing is exactly mid-rise to mid-fall; for 2 the
// flat top extends by ramp/4 to make up the thinner sin^4 edges.
struct PulseEnvelope {
  Shape shape = Shape::sin2_ramp;
  double ramp_duration = 0;  // s, rise = fall
  double loop_duration = 0;  // s
  int force_power = 2;       // profile exponent giving the force envelope

  double wall_duration() const {
    if (shape == Shape::square) return loop_duration;
    return loop_duration + (force_power == 2 ? 1.25 : 1.0) * ramp_duration;
  }
  // value in [0,1] at segment-local t; sin^2 rise/fall, C1 at the boundaries
  double value(double t) const;
  // force area removed by the sin^(2 force_power) edges relative to square
  // edges at mid-ramp; the wall extension past loop + ramp compensates it
  double integral_sq_deficit() const;
};

enum class SegmentKind { sdf_loop, microwave_pi };

struct Segment {
  SegmentKind kind;
  double duration;   // wall-clock s
  double start;      // absolute s from gate start
  int loop_index;    // 0-based for sdf_loop, -1 otherwise
  double mw_phase;   // rotation axis angle in the equatorial plane: 0 = +x, pi = -x
};

struct GateSchedule {
  int loops = 2;
  double t_loop = 0;   // s
  double t_pi = 0;     // s
  double delta = 0;    // rad/s, 2 pi / t_loop by construction
  bool echo = true;
  bool mw_ideal = true;  // instantaneous pi rotations at mid-segment when true
  PulseEnvelope envelope;
  std::vector<Segment> segments;

  double total_time() const;
  // K (t_loop + t_pi): loop times counted mid-rise to mid-fall, so the ramp
  // tails extending past the nominal window are excluded
  double nominal_gate_time() const { return loops * (t_loop + t_pi); }
  // env^2 shortfall per loop exposed for diagnostics
  double ramp_deficit() const { return envelope.integral_sq_deficit(); }
};

// Echoed default (K even): [loop, R_x(pi), loop, R_-x(pi), ...]; without echo
// the schedule is loops only. The detuning satisfies delta * t_loop = 2 pi.
GateSchedule make_schedule(int loops, double t_loop, double t_pi, bool echo,
                           PulseEnvelope env, bool mw_ideal = true);

}  // namespace lsgate::pulse
