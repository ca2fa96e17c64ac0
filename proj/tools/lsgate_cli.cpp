// lsgate command line: config ingestion, subcommand dispatch, artifact files.
// Every run writes plain JSON/CSV artifacts plus manifest.json into the output
// directory; identical config and seed give byte-identical payloads, the
// timestamp lives in the manifest only.
// Exit codes: 0 success, 1 computation error, 2 config or usage error.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <complex>
#include <cstdint>
#include <cstdio>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <future>
#include <iostream>
#include <limits>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "lsgate/config.hpp"
#include "lsgate/constants.hpp"
#include "lsgate/crystal.hpp"
#include "lsgate/errors.hpp"
#include "lsgate/evolve.hpp"
#include "lsgate/hamiltonian.hpp"
#include "lsgate/pulse.hpp"
#include "lsgate/srb.hpp"

namespace fs = std::filesystem;
using nlohmann::ordered_json;
using namespace lsgate;

namespace {

constexpr const char* tool_version = "0.1.0";
// the coupling tracks sqrt(P) around the 0.1 W operating point
constexpr double power_ref_w = 0.1;

std::string fmt_g(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

ordered_json cplx(std::complex<double> z) {
  return ordered_json::array({z.real(), z.imag()});
}

template <typename Mat>
ordered_json matrix_json(const Mat& m) {
  ordered_json rows = ordered_json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    ordered_json row = ordered_json::array();
    for (Eigen::Index c = 0; c < m.cols(); ++c) row.push_back(cplx(m(r, c)));
    rows.push_back(row);
  }
  return rows;
}

Eigen::Matrix3cd matrix3_from_json(const nlohmann::json& rows) {
  if (!rows.is_array() || rows.size() != 3)
    throw std::runtime_error("process matrix: expected 3 rows");
  Eigen::Matrix3cd m;
  for (int r = 0; r < 3; ++r) {
    const auto& row = rows[r];
    if (!row.is_array() || row.size() != 3)
      throw std::runtime_error("process matrix: expected 3 columns");
    for (int c = 0; c < 3; ++c) {
      const auto& z = row[c];
      if (!z.is_array() || z.size() != 2)
        throw std::runtime_error("process matrix: entries are [re, im] pairs");
      m(r, c) = std::complex<double>(z[0].get<double>(), z[1].get<double>());
    }
  }
  return m;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot write " + path.string());
  os << text;
  if (!os.good()) throw std::runtime_error("short write: " + path.string());
}

void write_json_file(const fs::path& path, const ordered_json& doc) {
  write_text(path, doc.dump(2) + "\n");
}

ordered_json stats_json(const evolve::StepStats& s) {
  return {{"steps", s.steps},
          {"rejected", s.rejected},
          {"max_krylov", s.max_krylov},
          {"max_step_error", s.max_step_error}};
}

ordered_json gate_json(const evolve::GateResult& g) {
  return {{"process", matrix_json(g.process)},
          {"sym_process", matrix_json(g.sym_process)},
          {"avg_fidelity_sym", g.avg_fidelity_sym},
          {"avg_fidelity_full", g.avg_fidelity_full},
          {"avg_fidelity_sym_framed", g.avg_fidelity_sym_framed},
          {"avg_fidelity_full_framed", g.avg_fidelity_full_framed},
          {"leakage", g.leakage},
          {"entangling_phase_rad", g.entangling_phase},
          {"phase_warning", g.phase_warning},
          {"stats", stats_json(g.stats)}};
}

const char* axis_name(crystal::Axis a) {
  switch (a) {
    case crystal::Axis::x: return "x";
    case crystal::Axis::y: return "y";
    default: return "z";
  }
}

const char* provenance_name(errors::Provenance p) {
  switch (p) {
    case errors::Provenance::analytic: return "analytic";
    case errors::Provenance::simulated: return "simulated";
    default: return "external";
  }
}

hamiltonian::Tier tier_from(const std::string& name) {
  if (name == "full") return hamiltonian::Tier::full;
  if (name == "lightshift") return hamiltonian::Tier::lightshift;
  return hamiltonian::Tier::sdf;
}

std::string iso8601_utc_now() {
  std::time_t t = std::chrono::system_clock::to_time_t(
      std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

// resolved invocation: effective config doc, parsed config, output directory
struct Cli {
  std::string config_path;
  std::vector<std::string> sets;
  std::string out_flag;
  std::uint64_t seed_flag = 1;
  int threads = 1;

  ordered_json doc;
  config::RunConfig cfg;
  fs::path out;
};

// overrides land in the document before parsing so the manifest hash covers
// the effective configuration, not just the file; --out stays a runtime
// redirect so the hash and payloads are invariant under it
void resolve_config(Cli& cli, bool out_given, bool seed_given) {
  if (cli.config_path.empty()) {
    cli.doc = config::to_json(config::paper_defaults());
  } else {
    std::ifstream in(cli.config_path);
    if (!in)
      throw config::ConfigError("config: cannot open " + cli.config_path);
    try {
      cli.doc = ordered_json::parse(in);
    } catch (const nlohmann::json::parse_error& e) {
      throw config::ConfigError("config: " + cli.config_path + ": " + e.what());
    }
  }
  for (const auto& kv : cli.sets) {
    auto eq = kv.find('=');
    if (eq == std::string::npos)
      throw config::ConfigError("--set expects key=value, got '" + kv + "'");
    config::apply_override(cli.doc, kv.substr(0, eq), kv.substr(eq + 1));
  }
  if (seed_given) cli.doc["seed"] = cli.seed_flag;
  cli.cfg = config::parse(cli.doc);
  cli.out = fs::path(out_given ? cli.out_flag : cli.cfg.output_dir);
  fs::create_directories(cli.out);
}

void write_manifest(const Cli& cli, const std::string& subcommand,
                    double wall_s) {
  ordered_json m;
  m["subcommand"] = subcommand;
  m["config_hash"] = config::config_hash(cli.cfg);
  m["seed"] = cli.cfg.seed;
  m["threads"] = cli.threads;
  m["versions"] = {
      {"lsgate", tool_version},
      {"eigen", std::to_string(EIGEN_WORLD_VERSION) + "." +
                    std::to_string(EIGEN_MAJOR_VERSION) + "." +
                    std::to_string(EIGEN_MINOR_VERSION)},
      {"nlohmann_json", std::to_string(NLOHMANN_JSON_VERSION_MAJOR) + "." +
                            std::to_string(NLOHMANN_JSON_VERSION_MINOR) + "." +
                            std::to_string(NLOHMANN_JSON_VERSION_PATCH)},
      {"compiler", __VERSION__}};
  m["wall_time_s"] = wall_s;
  m["timestamp_utc"] = iso8601_utc_now();
  write_json_file(cli.out / "manifest.json", m);
}

// ---- modes ----------------------------------------------------------------

void cmd_modes(const Cli& cli) {
  auto spectrum = crystal::normal_modes(cli.cfg.trap_config());
  Eigen::Vector3d dk = cli.cfg.delta_k();
  auto lde = crystal::lamb_dicke(spectrum, dk);
  auto comm = hamiltonian::commensurability(spectrum, dk);
  double factor = cli.cfg.beams.snap_commensurate ? comm.factor : 1.0;

  ordered_json j;
  j["ion_positions_um"] = {spectrum.positions[0] * 1e6,
                           spectrum.positions[1] * 1e6};
  j["ion_spacing_um"] = spectrum.spacing() * 1e6;
  ordered_json modes = ordered_json::array();
  for (const auto& m : spectrum.modes) {
    modes.push_back(
        {{"axis", axis_name(m.axis)},
         {"branch", m.label == crystal::ModeLabel::com ? "com" : "str"},
         {"frequency_hz", m.frequency / constants::two_pi},
         {"participation", {m.b[0], m.b[1]}}});
  }
  j["modes"] = modes;
  ordered_json eta = ordered_json::array();
  for (int ion = 0; ion < 2; ++ion)
    eta.push_back(std::vector<double>(lde.eta[ion].begin(),
                                      lde.eta[ion].end()));
  j["lamb_dicke"] = {{"delta_k_rad_per_m", dk.norm()},
                     {"eta", eta},
                     {"gate_mode_index", lde.gate_mode},
                     {"gate_eta", lde.gate_eta()},
                     {"gate_eta_snapped", std::abs(factor) * lde.gate_eta()}};
  j["commensurability"] = {{"chi_raw", comm.chi_raw},
                           {"chi_snapped", comm.chi_snapped},
                           {"wavenumber_factor", comm.factor},
                           {"applied", cli.cfg.beams.snap_commensurate}};
  write_json_file(cli.out / "modes.json", j);
  std::printf("modes.json: %zu modes, gate eta %.6g (snapped %.6g)\n",
              spectrum.modes.size(), lde.gate_eta(),
              std::abs(factor) * lde.gate_eta());
}

// ---- schedule -------------------------------------------------------------

void cmd_schedule(const Cli& cli) {
  auto sched = cli.cfg.gate_schedule();
  ordered_json j;
  j["loops"] = sched.loops;
  j["loop_time_us"] = sched.t_loop * 1e6;
  j["mw_pi_time_us"] = sched.t_pi * 1e6;
  j["sideband_detuning_hz"] = sched.delta / constants::two_pi;
  j["sideband_sign"] = cli.cfg.beams.sideband_sign;
  j["echo"] = sched.echo;
  j["mw_ideal"] = sched.mw_ideal;
  j["shape"] = cli.cfg.schedule.shape;
  j["ramp_time_us"] = sched.envelope.ramp_duration * 1e6;
  j["envelope_scale"] = cli.cfg.schedule.envelope_scale;
  j["nominal_gate_time_us"] = sched.nominal_gate_time() * 1e6;
  j["total_time_us"] = sched.total_time() * 1e6;
  j["ramp_deficit"] = sched.ramp_deficit();
  ordered_json segs = ordered_json::array();
  for (const auto& s : sched.segments) {
    segs.push_back(
        {{"kind", s.kind == pulse::SegmentKind::sdf_loop ? "sdf_loop"
                                                         : "microwave_pi"},
         {"start_us", s.start * 1e6},
         {"duration_us", s.duration * 1e6},
         {"loop_index", s.loop_index},
         {"mw_axis_rad", s.mw_phase}});
  }
  j["segments"] = segs;
  write_json_file(cli.out / "schedule.json", j);
  std::printf("schedule.json: %d loops, %zu segments, %.1f us nominal\n",
              sched.loops, sched.segments.size(),
              sched.nominal_gate_time() * 1e6);
}

// ---- simulate -------------------------------------------------------------

void cmd_simulate(const Cli& cli, bool staged, bool no_calibrate) {
  ordered_json j;
  if (staged) {
    auto res = evolve::staged_error(cli.cfg, cli.threads);
    j["mode"] = "staged";
    j["calibration"] = {{"field_scale", res.calibration.field_scale},
                        {"per_loop_phase_rad", res.calibration.phase},
                        {"iterations", res.calibration.iterations}};
    j["stage1"] = gate_json(res.stage1);
    j["stage1_error"] = res.stage1_error;
    ordered_json rad = ordered_json::array();
    for (const auto& [name, pop] : res.radial_populations)
      rad.push_back({{"mode", name}, {"final_population", pop}});
    j["radial_populations"] = rad;
    j["total_error"] = res.total;
    j["transient"] = {{"channel", res.transient.channel},
                      {"peak_filtered", res.transient.peak_filtered},
                      {"final_raw", res.transient.final_raw}};
    std::printf("staged: stage1 error %.3e, total %.3e, scale %.6f\n",
                res.stage1_error, res.total, res.calibration.field_scale);
  } else {
    auto setup = evolve::drive_setup(cli.cfg);
    auto trunc = evolve::gate_truncations(cli.cfg, setup.spectrum, false);
    auto model = setup.build(tier_from(cli.cfg.simulation.tier), trunc);
    j["mode"] = "single";
    j["tier"] = cli.cfg.simulation.tier;
    if (!no_calibrate) {
      evolve::CalibrateOptions copt;
      copt.prop = setup.prop;
      auto cal = evolve::calibrate(model, setup.schedule, setup.target_phase,
                                   copt);
      model = model.scaled(cal.field_scale);
      j["calibration"] = {{"field_scale", cal.field_scale},
                          {"per_loop_phase_rad", cal.phase},
                          {"iterations", cal.iterations}};
    } else {
      j["calibration"] = nullptr;
    }
    evolve::ProcessOptions popt;
    popt.prop = setup.prop;
    popt.thermal_nbar = cli.cfg.simulation.thermal_nbar;
    auto g = evolve::gate_process(model, setup.schedule, popt);
    j["gate"] = gate_json(g);
    std::printf("gate: F_sym %.9f, F_full %.9f, leakage %.3e\n",
                g.avg_fidelity_sym, g.avg_fidelity_full, g.leakage);
  }
  write_json_file(cli.out / "gate.json", j);
}

// ---- populations ----------------------------------------------------------

std::string csv_token(std::string s) {
  std::replace(s.begin(), s.end(), ' ', '_');
  return s;
}

void cmd_populations(const Cli& cli, double window_us, bool calibrate_first) {
  auto setup = evolve::drive_setup(cli.cfg);
  auto trunc = evolve::gate_truncations(cli.cfg, setup.spectrum, true);
  auto model = setup.build(hamiltonian::Tier::full, trunc);
  if (calibrate_first) {
    evolve::CalibrateOptions copt;
    copt.prop = setup.prop;
    auto cal = evolve::calibrate(model, setup.schedule, setup.target_phase,
                                 copt);
    model = model.scaled(cal.field_scale);
  }
  double window = window_us > 0 ? window_us * 1e-6
                                : constants::two_pi / cli.cfg.detuning();
  auto tr = evolve::transient_populations(model, setup.schedule, window,
                                          setup.prop);

  std::string csv = "time_us";
  for (const auto& ch : tr.channel) csv += "," + csv_token(ch);
  csv += "\n";
  for (size_t i = 0; i < tr.time.size(); ++i) {
    csv += fmt_g(tr.time[i] * 1e6);
    for (Eigen::Index c = 0; c < tr.filtered.cols(); ++c)
      csv += "," + fmt_g(tr.filtered(static_cast<Eigen::Index>(i), c));
    csv += "\n";
  }
  write_text(cli.out / "populations.csv", csv);

  ordered_json names;
  for (size_t a = 0; a < model.layout.mode_ids.size(); ++a) {
    int id = model.layout.mode_ids[a];
    const auto& m = setup.spectrum.modes[id];
    names["mode " + std::to_string(id)] =
        std::string(axis_name(m.axis)) + " " +
        (m.label == crystal::ModeLabel::com ? "com" : "str");
  }
  ordered_json j = {{"channel", tr.channel},
                    {"mode_names", names},
                    {"filter_window_us", window * 1e6},
                    {"calibrated", calibrate_first},
                    {"peak_filtered", tr.peak_filtered},
                    {"final_raw", tr.final_raw},
                    {"stats", stats_json(tr.stats)}};
  write_json_file(cli.out / "populations.json", j);
  std::printf("populations.csv: %zu samples x %zu channels\n", tr.time.size(),
              tr.channel.size());
  for (size_t c = 0; c < tr.channel.size(); ++c)
    std::printf("  %-10s peak %.3e  final %.3e\n", tr.channel[c].c_str(),
                tr.peak_filtered[c], tr.final_raw[c]);
}

// ---- budget ---------------------------------------------------------------

void cmd_budget(const Cli& cli, double offres_preset, double leakage_preset,
                bool simulate_offres) {
  auto spectrum = crystal::normal_modes(cli.cfg.trap_config());
  Eigen::Vector3d dk = cli.cfg.delta_k();
  auto lde = crystal::lamb_dicke(spectrum, dk);
  auto comm = hamiltonian::commensurability(spectrum, dk);
  double factor = cli.cfg.beams.snap_commensurate ? comm.factor : 1.0;

  errors::BudgetInputs in;
  in.gamma_d = cli.cfg.gamma_d();
  in.delta = cli.cfg.detuning();
  in.loops = cli.cfg.schedule.loops;
  in.eta = std::abs(factor) * lde.gate_eta();
  in.rates = cli.cfg.atomic_rates();
  if (simulate_offres) {
    auto staged = evolve::staged_error(cli.cfg, cli.threads);
    in.offres_ld_error = staged.total;
    in.offres_simulated = true;
  } else {
    in.offres_ld_error = offres_preset;
    in.offres_simulated = false;
  }
  in.eps_ramsey = cli.cfg.error_model.eps_ramsey;
  in.g = cli.cfg.coupling();
  in.kappa_com = cli.cfg.error_model.com_heating_rate;
  in.kappa_gate = cli.cfg.error_model.gate_heating_rate;
  in.p_com = cli.cfg.error_model.com_coupling;
  in.t_gate = cli.cfg.gate_schedule().nominal_gate_time();
  in.leakage = leakage_preset;
  in.microwave_error = cli.cfg.error_model.microwave_error;
  in.delta_lo = in.delta / 4;
  in.delta_hi = 100 * in.delta;
  in.p_ref = cli.cfg.error_model.laser_power_w;
  in.delta_ref = in.delta;

  auto budget = errors::assemble_budget(in);
  auto entries = [](const std::vector<errors::BudgetEntry>& v) {
    ordered_json arr = ordered_json::array();
    for (const auto& e : v)
      arr.push_back({{"mechanism", e.mechanism},
                     {"value", e.value},
                     {"provenance", provenance_name(e.provenance)}});
    return arr;
  };
  ordered_json j = {{"top", entries(budget.top)},
                    {"bottom", entries(budget.bottom)},
                    {"top_total", budget.top_total},
                    {"top_min", budget.top_min},
                    {"bottom_total", budget.bottom_total}};
  write_json_file(cli.out / "budget.json", j);
  std::fputs(errors::format_budget(budget).c_str(), stdout);
}

// ---- srb ------------------------------------------------------------------

void cmd_srb_generate(const Cli& cli) {
  const auto& s = cli.cfg.srb;
  // a zero-noise exact run materializes the per-record seed layout cheaply
  auto skeleton = srb::run_srb(srb::DepolarizingNoise{}, s.lengths,
                               s.sequences_per_length, 0, cli.cfg.seed,
                               cli.threads);
  const auto& cat = srb::CompiledCatalog::instance();
  ordered_json recs = ordered_json::array();
  for (const auto& r : skeleton.records) {
    auto rs = srb::generate_sequence(r.length, r.seed);
    int n_ls = 0, n_1q = 0;
    for (int idx : rs.cliffords) {
      n_ls += cat.sequence(idx).n_ls;
      n_1q += cat.sequence(idx).n_1q;
    }
    recs.push_back({{"length", r.length},
                    {"seed", r.seed},
                    {"cliffords", rs.cliffords},
                    {"inverter", rs.inverter},
                    {"n_ls", n_ls},
                    {"n_1q", n_1q}});
  }
  const auto& st = cat.stats();
  ordered_json j = {
      {"lengths", s.lengths},
      {"sequences_per_length", s.sequences_per_length},
      {"seed", cli.cfg.seed},
      {"catalog",
       {{"group_size", srb::CliffordGroup::instance().size()},
        {"max_n_ls", st.max_n_ls},
        {"mean_n_ls", st.mean_n_ls},
        {"mean_n_1q", st.mean_n_1q},
        {"ls_histogram", st.ls_histogram}}},
      {"sequences", recs}};
  write_json_file(cli.out / "sequences.json", j);
  std::printf("sequences.json: %zu sequences over %zu lengths\n",
              skeleton.records.size(), s.lengths.size());
}

Eigen::Matrix3cd load_sym_process(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open process file " + path);
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw std::runtime_error("process file " + path + ": " + e.what());
  }
  for (const char* key : {"gate", "stage1"})
    if (doc.contains(key) && doc[key].contains("sym_process"))
      return matrix3_from_json(doc[key]["sym_process"]);
  if (doc.contains("sym_process")) return matrix3_from_json(doc["sym_process"]);
  throw std::runtime_error("process file " + path +
                           " carries no sym_process block");
}

void cmd_srb_simulate(const Cli& cli, const std::string& process_path) {
  const auto& s = cli.cfg.srb;
  srb::NoiseModel noise;
  if (!process_path.empty()) {
    noise = srb::ProcessNoise{load_sym_process(process_path), s.eps_1q};
  } else if (s.noise == "depolarizing") {
    noise = srb::DepolarizingNoise{s.clifford_error, 0, 0};
  } else if (s.noise == "none") {
    noise = srb::DepolarizingNoise{};
  } else {
    throw config::ConfigError("srb.noise must be 'depolarizing' or 'none'");
  }
  auto data = srb::run_srb(noise, s.lengths, s.sequences_per_length, s.shots,
                           cli.cfg.seed, cli.threads);
  std::ofstream os(cli.out / "dataset.csv", std::ios::binary);
  if (!os) throw std::runtime_error("cannot write dataset.csv");
  srb::write_csv(os, data);
  std::printf("dataset.csv: %zu records (%s)\n", data.records.size(),
              data.noise_label.c_str());
  for (int length : data.lengths) {
    double mean = 0;
    int n = 0;
    for (const auto& r : data.records)
      if (r.length == length) mean += r.survival, ++n;
    std::printf("  L=%-3d mean survival %.5f\n", length, mean / std::max(n, 1));
  }
}

void cmd_srb_fit(const Cli& cli, const std::string& data_path,
                 bool free_asymptote) {
  fs::path dp = data_path.empty() ? cli.out / "dataset.csv"
                                  : fs::path(data_path);
  std::ifstream is(dp);
  if (!is) throw std::runtime_error("cannot open dataset " + dp.string());
  auto data = srb::read_csv(is);
  srb::FitOptions fo;
  fo.free_asymptote = free_asymptote;
  fo.eps_1q = cli.cfg.srb.eps_1q;
  auto fit = srb::fit_srb(data, fo);
  ordered_json j = {{"dataset", dp.string()},
                    {"free_asymptote", fo.free_asymptote},
                    {"eps_1q_input", fo.eps_1q},
                    {"p", fit.p},
                    {"amplitude", fit.amplitude},
                    {"asymptote", fit.asymptote},
                    {"avg_fidelity_clifford", fit.avg_fidelity_clifford},
                    {"eps_clifford", fit.eps_clifford},
                    {"avg_fidelity_ls", fit.avg_fidelity_ls},
                    {"eps_ls", fit.eps_ls},
                    {"sigma_p", fit.sigma_p},
                    {"sigma_clifford", fit.sigma_clifford},
                    {"sigma_ls", fit.sigma_ls},
                    {"mean_n_ls", fit.mean_n_ls},
                    {"mean_n_1q", fit.mean_n_1q}};
  write_json_file(cli.out / "fit.json", j);
  std::printf("fit.json: p = %.6f +- %.6f\n", fit.p, fit.sigma_p);
  std::printf("  F_clifford = %.6f +- %.6f\n", fit.avg_fidelity_clifford,
              fit.sigma_clifford);
  std::printf("  F_ls       = %.6f +- %.6f  (n_ls %.3f, n_1q %.3f per Clifford)\n",
              fit.avg_fidelity_ls, fit.sigma_ls, fit.mean_n_ls, fit.mean_n_1q);
}

// ---- sweep ----------------------------------------------------------------

struct SweepRow {
  double value = 0;
  double gate_eta = 0, loop_phase = 0, eps_d = 0, eps_p = 0, eps_scatter = 0,
         eps_phase = 0;
  std::string error;
};

// cheap analytic observables per grid point; full simulations stay out of the
// sweep loop so a decade of points costs seconds
SweepRow sweep_point(const ordered_json& base, const std::string& param,
                     double v) {
  SweepRow row;
  row.value = v;
  try {
    ordered_json d = base;
    config::apply_override(d, param, fmt_g(v));
    auto cfg = config::parse(d);
    auto setup = evolve::drive_setup(cfg);
    auto comm =
        hamiltonian::commensurability(setup.spectrum, setup.lde.delta_k);
    double factor = cfg.beams.snap_commensurate ? comm.factor : 1.0;
    double eta = std::abs(factor * setup.lde.eta[0][setup.lde.gate_mode]);
    double g_eff = cfg.coupling() *
                   std::sqrt(cfg.error_model.laser_power_w / power_ref_w);
    double omega =
        hamiltonian::lightshift_prefactor(g_eff, cfg.detuning(),
                                          setup.beams.mu) / 4.0;
    double f = 2.0 * omega * eta;
    double dloop = std::abs(setup.delta_signed);
    row.gate_eta = eta;
    row.loop_phase = constants::two_pi * (f / dloop) * (f / dloop);
    row.eps_d = errors::d_scatter_error(cfg.gamma_d(), cfg.detuning(),
                                        cfg.schedule.loops, eta);
    row.eps_p = errors::p_scatter_error(cfg.atomic_rates(), cfg.detuning());
    row.eps_scatter = row.eps_d + row.eps_p;
    row.eps_phase = errors::phase_noise_error(cfg.error_model.eps_ramsey,
                                              g_eff, cfg.detuning());
  } catch (const std::exception& e) {
    double nan = std::numeric_limits<double>::quiet_NaN();
    row.gate_eta = row.loop_phase = row.eps_d = row.eps_p = row.eps_scatter =
        row.eps_phase = nan;
    std::string msg = e.what();
    std::replace(msg.begin(), msg.end(), ',', ';');
    std::replace(msg.begin(), msg.end(), '\n', ';');
    row.error = msg;
  }
  return row;
}

void cmd_sweep(const Cli& cli, const std::string& param,
               const std::string& values_csv, double from, double to,
               int points, bool log_spacing) {
  std::vector<double> grid;
  if (!values_csv.empty()) {
    std::stringstream ss(values_csv);
    for (std::string tok; std::getline(ss, tok, ',');) {
      if (tok.empty()) continue;
      try {
        size_t pos = 0;
        double v = std::stod(tok, &pos);
        if (pos != tok.size()) throw std::invalid_argument(tok);
        grid.push_back(v);
      } catch (const std::exception&) {
        throw config::ConfigError("sweep: bad grid value '" + tok + "'");
      }
    }
  } else if (points > 0) {
    if (log_spacing && (from <= 0 || to <= 0))
      throw config::ConfigError("sweep: log spacing needs positive endpoints");
    for (int i = 0; i < points; ++i) {
      double u = points == 1 ? 0.0 : double(i) / (points - 1);
      grid.push_back(log_spacing
                         ? from * std::pow(to / from, u)
                         : from + (to - from) * u);
    }
  }

  {
    // path check up front: an unknown key is a usage error, not a row failure
    ordered_json probe = cli.doc;
    config::apply_override(probe, param,
                           fmt_g(grid.empty() ? 0.0 : grid.front()));
  }

  std::vector<SweepRow> rows(grid.size());
  auto fill = [&](size_t lo, size_t hi) {
    for (size_t i = lo; i < hi; ++i)
      rows[i] = sweep_point(cli.doc, param, grid[i]);
  };
  size_t nt = std::max(1, cli.threads);
  if (nt <= 1 || grid.size() < 2) {
    fill(0, grid.size());
  } else {
    std::vector<std::future<void>> jobs;
    size_t chunk = (grid.size() + nt - 1) / nt;
    for (size_t lo = 0; lo < grid.size(); lo += chunk)
      jobs.push_back(std::async(std::launch::async, fill, lo,
                                std::min(lo + chunk, grid.size())));
    for (auto& jb : jobs) jb.get();
  }

  std::string csv =
      "param,value,gate_eta,loop_phase_rad,eps_d,eps_p,eps_scatter_total,"
      "eps_phase_noise,error\n";
  for (const auto& r : rows) {
    csv += param + "," + fmt_g(r.value) + "," + fmt_g(r.gate_eta) + "," +
           fmt_g(r.loop_phase) + "," + fmt_g(r.eps_d) + "," + fmt_g(r.eps_p) +
           "," + fmt_g(r.eps_scatter) + "," + fmt_g(r.eps_phase) + "," +
           r.error + "\n";
  }
  write_text(cli.out / "sweep.csv", csv);
  size_t failed = 0;
  for (const auto& r : rows)
    if (!r.error.empty()) ++failed;
  std::printf("sweep.csv: %zu points, %zu failed\n", rows.size(), failed);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"narrow-line light-shift gate toolkit"};
  app.require_subcommand(1);

  Cli cli;
  app.add_option("--config", cli.config_path,
                 "config JSON file; built-in defaults when absent");
  app.add_option("--set", cli.sets,
                 "override a config value, key=value, repeatable");
  auto* out_opt = app.add_option("--out", cli.out_flag,
                                 "output directory (overrides output_dir)");
  auto* seed_opt =
      app.add_option("--seed", cli.seed_flag, "master seed (overrides seed)");
  app.add_option("--threads", cli.threads, "worker threads")
      ->check(CLI::PositiveNumber);

  auto* modes_cmd =
      app.add_subcommand("modes", "normal modes and Lamb-Dicke table");
  auto* schedule_cmd =
      app.add_subcommand("schedule", "resolved loop and echo timeline");
  auto* simulate_cmd = app.add_subcommand(
      "simulate", "calibrate and run the gate, write process matrices");
  bool staged = false, no_calibrate = false;
  simulate_cmd->add_flag("--staged", staged,
                         "staged error pipeline with radial spectators");
  simulate_cmd->add_flag("--no-calibrate", no_calibrate,
                         "run at the nominal drive amplitude");
  auto* populations_cmd = app.add_subcommand(
      "populations", "filtered channel populations along the gate (full tier)");
  double window_us = -1;
  bool pop_calibrate = false;
  populations_cmd->add_option("--window-us", window_us,
                              "moving-average window, default one beat period");
  populations_cmd->add_flag("--calibrate", pop_calibrate,
                            "calibrate the drive before tracing");
  auto* budget_cmd =
      app.add_subcommand("budget", "two-section error budget table");
  double offres_preset = 0.2e-4, leakage_preset = 3e-4;
  bool simulate_offres = false;
  budget_cmd->add_option("--offres", offres_preset,
                         "off-resonant+Lamb-Dicke entry when not simulated");
  budget_cmd->add_option("--leakage", leakage_preset,
                         "measured leakage entry");
  budget_cmd->add_flag("--simulate-offres", simulate_offres,
                       "replace the off-resonant preset with a staged run");
  auto* srb_cmd = app.add_subcommand(
      "srb", "symmetric-subspace randomized benchmarking");
  srb_cmd->require_subcommand(1);
  auto* srb_gen =
      srb_cmd->add_subcommand("generate", "materialize random sequences");
  auto* srb_sim =
      srb_cmd->add_subcommand("simulate", "simulate survivals, write CSV");
  std::string process_path;
  srb_sim->add_option("--process", process_path,
                      "gate.json supplying the entangler process matrix");
  auto* srb_fit = srb_cmd->add_subcommand("fit", "decay fit on a dataset");
  std::string data_path;
  bool free_asymptote = false;
  srb_fit->add_option("--data", data_path,
                      "dataset CSV, default <out>/dataset.csv");
  srb_fit->add_flag("--free-asymptote", free_asymptote,
                    "fit the asymptote instead of pinning 1/3");
  auto* sweep_cmd =
      app.add_subcommand("sweep", "analytic observables over a parameter grid");
  std::string sweep_param, sweep_values;
  double sweep_from = 0, sweep_to = 0;
  int sweep_points = 0;
  bool sweep_log = false;
  sweep_cmd->add_option("--param", sweep_param, "dotted config path")
      ->required();
  sweep_cmd->add_option("--values", sweep_values, "comma-separated grid");
  auto* from_opt = sweep_cmd->add_option("--from", sweep_from, "grid start");
  auto* to_opt = sweep_cmd->add_option("--to", sweep_to, "grid end");
  auto* pts_opt =
      sweep_cmd->add_option("--points", sweep_points, "grid size");
  sweep_cmd->add_flag("--log", sweep_log, "geometric spacing");
  pts_opt->needs(from_opt)->needs(to_opt);

  for (auto* sub : {modes_cmd, schedule_cmd, simulate_cmd, populations_cmd,
                    budget_cmd, srb_cmd, srb_gen, srb_sim, srb_fit, sweep_cmd})
    sub->fallthrough();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }

  auto t_start = std::chrono::steady_clock::now();
  std::string sub;
  try {
    resolve_config(cli, out_opt->count() > 0, seed_opt->count() > 0);
    if (modes_cmd->parsed()) {
      sub = "modes";
      cmd_modes(cli);
    } else if (schedule_cmd->parsed()) {
      sub = "schedule";
      cmd_schedule(cli);
    } else if (simulate_cmd->parsed()) {
      sub = staged ? "simulate --staged" : "simulate";
      cmd_simulate(cli, staged, no_calibrate);
    } else if (populations_cmd->parsed()) {
      sub = "populations";
      cmd_populations(cli, window_us, pop_calibrate);
    } else if (budget_cmd->parsed()) {
      sub = "budget";
      cmd_budget(cli, offres_preset, leakage_preset, simulate_offres);
    } else if (srb_cmd->parsed()) {
      if (srb_gen->parsed()) {
        sub = "srb generate";
        cmd_srb_generate(cli);
      } else if (srb_sim->parsed()) {
        sub = "srb simulate";
        cmd_srb_simulate(cli, process_path);
      } else {
        sub = "srb fit";
        cmd_srb_fit(cli, data_path, free_asymptote);
      }
    } else if (sweep_cmd->parsed()) {
      sub = "sweep";
      cmd_sweep(cli, sweep_param, sweep_values, sweep_from, sweep_to,
                sweep_points, sweep_log);
    }
    write_json_file(cli.out / "config.json", config::to_json(cli.cfg));
    double wall = std::chrono::duration<double>(
                      std::chrono::steady_clock::now() - t_start)
                      .count();
    write_manifest(cli, sub, wall);
  } catch (const config::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
