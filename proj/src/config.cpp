#include "lsgate/config.hpp"

#include <cmath>
#include <cstdio>
#include <exception>
#include <fstream>
#include <set>
#include <sstream>

#include "lsgate/constants.hpp"

namespace lsgate::config {

using nlohmann::json;
using nlohmann::ordered_json;

namespace {

constexpr double two_pi = constants::two_pi;

[[noreturn]] void fail(const std::string& path, const std::string& why) {
  throw ConfigError("config: " + path + ": " + why);
}

// Pulls known keys out of a section object and rejects the rest by path.
class section_reader {
 public:
  section_reader(const json& node, std::string prefix)
      : node_(node), prefix_(std::move(prefix)),
        pending_(std::uncaught_exceptions()) {
    if (!node.is_object()) fail(prefix_, "expected an object");
  }

  // unknown-key sweep; skipped when already unwinding from a type error
  ~section_reader() noexcept(false) {
    if (std::uncaught_exceptions() > pending_) return;
    for (auto it = node_.begin(); it != node_.end(); ++it)
      if (!seen_.count(it.key())) fail(prefix_ + it.key(), "unknown key");
  }

  void number(const char* key, double& out) {
    if (const json* v = get(key)) {
      if (!v->is_number()) fail(prefix_ + key, "expected a number");
      out = v->get<double>();
    }
  }

  void integer(const char* key, int& out) {
    if (const json* v = get(key)) {
      if (!v->is_number_integer()) fail(prefix_ + key, "expected an integer");
      out = v->get<int>();
    }
  }

  void uint64(const char* key, std::uint64_t& out) {
    if (const json* v = get(key)) {
      if (!v->is_number_unsigned() && !v->is_number_integer())
        fail(prefix_ + key, "expected an integer");
      out = v->get<std::uint64_t>();
    }
  }

  void boolean(const char* key, bool& out) {
    if (const json* v = get(key)) {
      if (!v->is_boolean()) fail(prefix_ + key, "expected a boolean");
      out = v->get<bool>();
    }
  }

  void text(const char* key, std::string& out) {
    if (const json* v = get(key)) {
      if (!v->is_string()) fail(prefix_ + key, "expected a string");
      out = v->get<std::string>();
    }
  }

  void int_list(const char* key, std::vector<int>& out) {
    if (const json* v = get(key)) {
      if (!v->is_array()) fail(prefix_ + key, "expected an array");
      out.clear();
      for (const auto& e : *v) {
        if (!e.is_number_integer()) fail(prefix_ + key, "expected integers");
        out.push_back(e.get<int>());
      }
    }
  }

  const json* subsection(const char* key) { return get(key); }

 private:
  const json* get(const char* key) {
    seen_.insert(key);
    auto it = node_.find(key);
    return it == node_.end() ? nullptr : &*it;
  }

  const json& node_;
  std::string prefix_;
  int pending_;
  std::set<std::string> seen_;
};

void check_positive(double v, const char* path) {
  if (!(v > 0)) fail(path, "must be positive");
}

void validate(const RunConfig& c) {
  if (c.version != 1) fail("version", "unsupported (expected 1)");
  c.trap_config().validate();
  check_positive(c.trap.ion_mass_u, "trap.ion_mass_u");
  check_positive(c.beams.wavelength_nm, "beams.wavelength_nm");
  if (c.beams.axis_angle_deg <= 0 || c.beams.axis_angle_deg >= 90)
    fail("beams.axis_angle_deg", "must lie in (0, 90)");
  check_positive(c.beams.coupling_hz, "beams.coupling_hz");
  check_positive(c.beams.detuning_hz, "beams.detuning_hz");
  if (c.beams.sideband_sign != 1 && c.beams.sideband_sign != -1)
    fail("beams.sideband_sign", "must be +1 or -1");
  if (c.beams.e0_leak_rabi_hz < 0)
    fail("beams.e0_leak_rabi_hz", "must be non-negative");
  if (c.schedule.loops < 1) fail("schedule.loops", "must be >= 1");
  check_positive(c.schedule.loop_time_us, "schedule.loop_time_us");
  if (c.schedule.ramp_time_us < 0)
    fail("schedule.ramp_time_us", "must be non-negative");
  if (c.schedule.shape != "square" && c.schedule.shape != "sin2_ramp")
    fail("schedule.shape", "must be \"square\" or \"sin2_ramp\"");
  if (c.schedule.envelope_scale != "intensity" &&
      c.schedule.envelope_scale != "field")
    fail("schedule.envelope_scale", "must be \"intensity\" or \"field\"");
  if (c.schedule.mw_pi_time_us < 0)
    fail("schedule.mw_pi_time_us", "must be non-negative");
  if (c.truncations.n_max_gate < 1)
    fail("truncations.n_max_gate", "must be >= 1");
  if (c.truncations.n_max_axial_com < 0)
    fail("truncations.n_max_axial_com", "must be >= 0");
  if (c.truncations.n_max_radial < 0)
    fail("truncations.n_max_radial", "must be >= 0");
  if (c.truncations.max_dimension < 2)
    fail("truncations.max_dimension", "must be >= 2");
  if (c.simulation.tier != "lightshift" && c.simulation.tier != "sdf" &&
      c.simulation.tier != "full")
    fail("simulation.tier", "must be \"lightshift\", \"sdf\" or \"full\"");
  check_positive(c.simulation.tolerance, "simulation.tolerance");
  if (c.simulation.samples_per_fast_period < 4)
    fail("simulation.samples_per_fast_period", "must be >= 4");
  if (c.simulation.thermal_nbar < 0)
    fail("simulation.thermal_nbar", "must be non-negative");
  check_positive(c.error_model.d_lifetime_ms, "error_model.d_lifetime_ms");
  check_positive(c.error_model.p_linewidth_hz, "error_model.p_linewidth_hz");
  if (c.error_model.p_scatter_coeff < 0)
    fail("error_model.p_scatter_coeff", "must be non-negative");
  if (c.error_model.scatter_events < 1)
    fail("error_model.scatter_events", "must be >= 1");
  if (c.srb.lengths.empty()) fail("srb.lengths", "must be non-empty");
  for (int l : c.srb.lengths)
    if (l < 1) fail("srb.lengths", "lengths must be >= 1");
  if (c.srb.sequences_per_length < 1)
    fail("srb.sequences_per_length", "must be >= 1");
  if (c.srb.shots < 0) fail("srb.shots", "must be non-negative");
  if (c.srb.noise != "depolarizing" && c.srb.noise != "none")
    fail("srb.noise", "must be \"depolarizing\" or \"none\"");
  if (c.srb.clifford_error < 0 || c.srb.clifford_error > 2.0 / 3.0)
    fail("srb.clifford_error", "must lie in [0, 2/3]");
}

}  // namespace

crystal::TrapConfig RunConfig::trap_config() const {
  crystal::TrapConfig t;
  t.axial_freq = two_pi * trap.axial_freq_hz;
  t.radial_freq_y = two_pi * trap.radial_freq_y_hz;
  t.radial_freq_z = two_pi * trap.radial_freq_z_hz;
  t.ion_mass = trap.ion_mass_u * constants::atomic_mass_unit;
  t.magnetic_field = trap.magnetic_field_gauss;
  return t;
}

pulse::GateSchedule RunConfig::gate_schedule() const {
  pulse::PulseEnvelope env;
  env.shape = schedule.shape == "square" ? pulse::Shape::square
                                         : pulse::Shape::sin2_ramp;
  env.ramp_duration = schedule.ramp_time_us * 1e-6;
  env.loop_duration = schedule.loop_time_us * 1e-6;
  env.force_power = schedule.envelope_scale == "intensity" ? 1 : 2;
  return pulse::make_schedule(schedule.loops, schedule.loop_time_us * 1e-6,
                              schedule.mw_pi_time_us * 1e-6, schedule.echo,
                              env, schedule.mw_ideal);
}

errors::AtomicRates RunConfig::atomic_rates() const {
  errors::AtomicRates r;
  r.gamma_d = gamma_d();
  r.gamma_p = two_pi * error_model.p_linewidth_hz;
  r.p_scatter_coeff = error_model.p_scatter_coeff;
  return r;
}

double RunConfig::coupling() const { return two_pi * beams.coupling_hz; }
double RunConfig::detuning() const { return two_pi * beams.detuning_hz; }

double RunConfig::wavenumber() const {
  return two_pi / (beams.wavelength_nm * 1e-9);
}

Eigen::Vector3d RunConfig::beam_direction(int which) const {
  double th = beams.axis_angle_deg * constants::pi / 180.0;
  double az = beams.transverse_azimuth_deg * constants::pi / 180.0;
  double ax = std::cos(th) * (which == 0 ? 1.0 : -1.0);
  return {ax, std::sin(th) * std::cos(az), std::sin(th) * std::sin(az)};
}

Eigen::Vector3d RunConfig::delta_k() const {
  return wavenumber() * (beam_direction(0) - beam_direction(1));
}

double RunConfig::gamma_d() const { return 1e3 / error_model.d_lifetime_ms; }
double RunConfig::mw_pi_time() const { return schedule.mw_pi_time_us * 1e-6; }
double RunConfig::qubit_shift() const {
  return two_pi * simulation.qubit_shift_hz;
}
double RunConfig::e0_leak_rabi() const {
  return two_pi * beams.e0_leak_rabi_hz;
}

RunConfig paper_defaults() { return RunConfig{}; }

RunConfig parse(const json& doc) {
  RunConfig c;
  {
    section_reader top(doc, "");
    top.integer("version", c.version);
    if (const json* n = top.subsection("trap")) {
      section_reader s(*n, "trap.");
      s.number("axial_freq_hz", c.trap.axial_freq_hz);
      s.number("radial_freq_y_hz", c.trap.radial_freq_y_hz);
      s.number("radial_freq_z_hz", c.trap.radial_freq_z_hz);
      s.number("ion_mass_u", c.trap.ion_mass_u);
      s.number("magnetic_field_gauss", c.trap.magnetic_field_gauss);
    }
    if (const json* n = top.subsection("beams")) {
      section_reader s(*n, "beams.");
      s.number("wavelength_nm", c.beams.wavelength_nm);
      s.number("axis_angle_deg", c.beams.axis_angle_deg);
      s.number("transverse_azimuth_deg", c.beams.transverse_azimuth_deg);
      s.number("coupling_hz", c.beams.coupling_hz);
      s.number("detuning_hz", c.beams.detuning_hz);
      s.integer("sideband_sign", c.beams.sideband_sign);
      s.number("e0_leak_rabi_hz", c.beams.e0_leak_rabi_hz);
      s.boolean("snap_commensurate", c.beams.snap_commensurate);
    }
    if (const json* n = top.subsection("schedule")) {
      section_reader s(*n, "schedule.");
      s.integer("loops", c.schedule.loops);
      s.number("loop_time_us", c.schedule.loop_time_us);
      s.number("ramp_time_us", c.schedule.ramp_time_us);
      s.text("shape", c.schedule.shape);
      s.text("envelope_scale", c.schedule.envelope_scale);
      s.boolean("echo", c.schedule.echo);
      s.boolean("mw_ideal", c.schedule.mw_ideal);
      s.number("mw_pi_time_us", c.schedule.mw_pi_time_us);
    }
    if (const json* n = top.subsection("truncations")) {
      section_reader s(*n, "truncations.");
      s.integer("n_max_gate", c.truncations.n_max_gate);
      s.integer("n_max_axial_com", c.truncations.n_max_axial_com);
      s.integer("n_max_radial", c.truncations.n_max_radial);
      s.integer("max_dimension", c.truncations.max_dimension);
    }
    if (const json* n = top.subsection("simulation")) {
      section_reader s(*n, "simulation.");
      s.text("tier", c.simulation.tier);
      s.number("tolerance", c.simulation.tolerance);
      s.integer("samples_per_fast_period", c.simulation.samples_per_fast_period);
      s.number("elimination_ratio_warn", c.simulation.elimination_ratio_warn);
      s.number("thermal_nbar", c.simulation.thermal_nbar);
      s.boolean("frame_optimize", c.simulation.frame_optimize);
      s.number("qubit_shift_hz", c.simulation.qubit_shift_hz);
    }
    if (const json* n = top.subsection("error_model")) {
      section_reader s(*n, "error_model.");
      s.number("d_lifetime_ms", c.error_model.d_lifetime_ms);
      s.number("p_linewidth_hz", c.error_model.p_linewidth_hz);
      s.number("p_scatter_coeff", c.error_model.p_scatter_coeff);
      s.integer("scatter_events", c.error_model.scatter_events);
      s.number("eps_ramsey", c.error_model.eps_ramsey);
      s.number("com_heating_rate", c.error_model.com_heating_rate);
      s.number("gate_heating_rate", c.error_model.gate_heating_rate);
      s.number("com_coupling", c.error_model.com_coupling);
      s.number("laser_power_w", c.error_model.laser_power_w);
      s.number("microwave_error", c.error_model.microwave_error);
    }
    if (const json* n = top.subsection("srb")) {
      section_reader s(*n, "srb.");
      s.int_list("lengths", c.srb.lengths);
      s.integer("sequences_per_length", c.srb.sequences_per_length);
      s.integer("shots", c.srb.shots);
      s.number("eps_1q", c.srb.eps_1q);
      s.text("noise", c.srb.noise);
      s.number("clifford_error", c.srb.clifford_error);
    }
    top.text("output_dir", c.output_dir);
    top.uint64("seed", c.seed);
  }
  validate(c);
  return c;
}

RunConfig load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("config: cannot open " + path);
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError("config: " + path + ": " + e.what());
  }
  return parse(doc);
}

ordered_json to_json(const RunConfig& c) {
  ordered_json doc;
  doc["version"] = c.version;
  doc["trap"] = {{"axial_freq_hz", c.trap.axial_freq_hz},
                 {"radial_freq_y_hz", c.trap.radial_freq_y_hz},
                 {"radial_freq_z_hz", c.trap.radial_freq_z_hz},
                 {"ion_mass_u", c.trap.ion_mass_u},
                 {"magnetic_field_gauss", c.trap.magnetic_field_gauss}};
  doc["beams"] = {{"wavelength_nm", c.beams.wavelength_nm},
                  {"axis_angle_deg", c.beams.axis_angle_deg},
                  {"transverse_azimuth_deg", c.beams.transverse_azimuth_deg},
                  {"coupling_hz", c.beams.coupling_hz},
                  {"detuning_hz", c.beams.detuning_hz},
                  {"sideband_sign", c.beams.sideband_sign},
                  {"e0_leak_rabi_hz", c.beams.e0_leak_rabi_hz},
                  {"snap_commensurate", c.beams.snap_commensurate}};
  doc["schedule"] = {{"loops", c.schedule.loops},
                     {"loop_time_us", c.schedule.loop_time_us},
                     {"ramp_time_us", c.schedule.ramp_time_us},
                     {"shape", c.schedule.shape},
                     {"envelope_scale", c.schedule.envelope_scale},
                     {"echo", c.schedule.echo},
                     {"mw_ideal", c.schedule.mw_ideal},
                     {"mw_pi_time_us", c.schedule.mw_pi_time_us}};
  doc["truncations"] = {{"n_max_gate", c.truncations.n_max_gate},
                        {"n_max_axial_com", c.truncations.n_max_axial_com},
                        {"n_max_radial", c.truncations.n_max_radial},
                        {"max_dimension", c.truncations.max_dimension}};
  doc["simulation"] = {
      {"tier", c.simulation.tier},
      {"tolerance", c.simulation.tolerance},
      {"samples_per_fast_period", c.simulation.samples_per_fast_period},
      {"elimination_ratio_warn", c.simulation.elimination_ratio_warn},
      {"thermal_nbar", c.simulation.thermal_nbar},
      {"frame_optimize", c.simulation.frame_optimize},
      {"qubit_shift_hz", c.simulation.qubit_shift_hz}};
  doc["error_model"] = {{"d_lifetime_ms", c.error_model.d_lifetime_ms},
                        {"p_linewidth_hz", c.error_model.p_linewidth_hz},
                        {"p_scatter_coeff", c.error_model.p_scatter_coeff},
                        {"scatter_events", c.error_model.scatter_events},
                        {"eps_ramsey", c.error_model.eps_ramsey},
                        {"com_heating_rate", c.error_model.com_heating_rate},
                        {"gate_heating_rate", c.error_model.gate_heating_rate},
                        {"com_coupling", c.error_model.com_coupling},
                        {"laser_power_w", c.error_model.laser_power_w},
                        {"microwave_error", c.error_model.microwave_error}};
  doc["srb"] = {{"lengths", c.srb.lengths},
                {"sequences_per_length", c.srb.sequences_per_length},
                {"shots", c.srb.shots},
                {"eps_1q", c.srb.eps_1q},
                {"noise", c.srb.noise},
                {"clifford_error", c.srb.clifford_error}};
  doc["output_dir"] = c.output_dir;
  doc["seed"] = c.seed;
  return doc;
}

void apply_override(ordered_json& doc, const std::string& path,
                    const std::string& value) {
  // the full schema (defaults document) decides which paths are assignable
  static const ordered_json schema = to_json(paper_defaults());
  std::vector<std::string> parts;
  std::stringstream ss(path);
  for (std::string p; std::getline(ss, p, '.');) parts.push_back(p);
  if (parts.empty()) fail(path, "empty override path");

  const ordered_json* s = &schema;
  for (const auto& p : parts) {
    if (!s->is_object() || !s->contains(p)) fail(path, "unknown key");
    s = &(*s)[p];
  }
  if (s->is_object()) fail(path, "refers to a section, not a value");

  json parsed = json::parse(value, nullptr, false);
  if (parsed.is_discarded() || parsed.is_object())
    parsed = value;  // bare strings pass through

  ordered_json* d = &doc;
  for (size_t i = 0; i + 1 < parts.size(); ++i) d = &(*d)[parts[i]];
  (*d)[parts.back()] = std::move(parsed);
}

std::string config_hash(const RunConfig& cfg) {
  // FNV-1a over the canonical serialization
  std::string dump = to_json(cfg).dump();
  std::uint64_t h = 1469598103934665603ull;
  for (unsigned char ch : dump) {
    h ^= ch;
    h *= 1099511628211ull;
  }
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx",
                static_cast<unsigned long long>(h));
  return buf;
}

}  // namespace lsgate::config
