#include <CLI11.hpp>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <numbers>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "qkdsim/channel.hpp"
#include "qkdsim/csv.hpp"
#include "qkdsim/emitter.hpp"
#include "qkdsim/errors.hpp"
#include "qkdsim/keyrate.hpp"
#include "qkdsim/protocol.hpp"
#include "qkdsim/scenario.hpp"
#include "report.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace qkdsim;

namespace {

enum Exit { kOk = 0, kValidation = 1, kRuntime = 2 };

struct Globals {
  std::string scenario;
  std::optional<std::uint64_t> seed;
  std::string out;
  std::string format;  ///< empty selects the command's native format
};

fs::path resolve_scenario(const std::string& name) {
  if (name.empty()) throw InvalidInput("--scenario is required");
  fs::path p(name);
  if (fs::exists(p)) return p;
#ifdef QKDSIM_SCENARIO_DIR
  fs::path bundled = fs::path(QKDSIM_SCENARIO_DIR) / (name + ".cfg");
  if (fs::exists(bundled)) return bundled;
#endif
  throw InvalidInput("scenario not found: " + name);
}

std::uint64_t require_seed(const Globals& g) {
  if (!g.seed) throw InvalidInput("--seed is required for this command");
  return *g.seed;
}

void require_format(const Globals& g, std::initializer_list<std::string_view> allowed) {
  if (g.format.empty()) return;
  for (auto f : allowed)
    if (g.format == f) return;
  throw InvalidInput("--format " + g.format + " is not supported by this command");
}

std::ifstream open_input(const std::string& path) {
  if (path.empty()) throw InvalidInput("--input is required");
  std::ifstream in(path);
  if (!in) throw InvalidInput("cannot read " + path);
  return in;
}

template <class F>
void emit(const std::string& path, F&& write) {
  if (path.empty() || path == "-") {
    write(std::cout);
    return;
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InvalidInput("cannot write " + path);
  write(out);
}

void emit_json(const std::string& path, const json& j) {
  emit(path, [&](std::ostream& o) { o << j.dump(2) << '\n'; });
}

std::vector<double> parse_number_list(const std::string& text) {
  std::vector<double> values;
  auto parse = [&](const std::string& s) {
    std::size_t used = 0;
    double v = 0.0;
    try {
      v = std::stod(s, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used == 0 || used != s.size()) throw InvalidInput("not a number: '" + s + "'");
    return v;
  };
  if (text.find(':') != std::string::npos) {
    std::vector<double> p;
    std::stringstream ss(text);
    std::string part;
    while (std::getline(ss, part, ':')) p.push_back(parse(part));
    if (p.size() != 3 || p[2] <= 0.0 || p[1] < p[0]) throw InvalidInput("range must be start:stop:step");
    const auto n = static_cast<long>(std::floor((p[1] - p[0]) / p[2] + 1e-9));
    for (long i = 0; i <= n; ++i) values.push_back(p[0] + i * p[2]);
    return values;
  }
  std::stringstream ss(text);
  std::string part;
  while (std::getline(ss, part, ',')) values.push_back(parse(part));
  if (values.empty()) throw InvalidInput("empty number list");
  return values;
}

StokesVector parse_state(const std::string& text) {
  if (text.find(',') == std::string::npos) return stokes_of(parse_state_label(text));
  auto v = parse_number_list(text);
  if (v.size() != 3) throw InvalidInput("Stokes vector needs three components");
  StokesVector s{v[0], v[1], v[2]};
  if (!is_unit(s)) throw InvalidInput("Stokes vector must be unit length");
  return s;
}

KeyTally tally_from_json(const json& j) {
  KeyTally t;
  t.n_key = j.at("n_key").get<double>();
  t.n_check = j.at("n_check").get<double>();
  t.e_key = j.at("e_key").get<double>();
  t.e_check = j.at("e_check").get<double>();
  t.p_key = j.value("p_key", t.p_key);
  t.p_check = j.value("p_check", 1.0 - t.p_key);
  t.p_det = j.at("p_det").get<double>();
  t.p_m = j.value("p_m", 0.0);
  if (t.n_key < 0 || t.n_check < 0 || t.e_key < 0 || t.e_key > 1 || t.e_check < 0 || t.e_check > 1 || t.p_det < 0 ||
      t.p_det > 1 || t.p_m < 0 || t.p_key < 0 || t.p_key > 1 || t.p_check < 0 || t.p_check > 1)
    throw InvalidInput("inconsistent tally: counts must be non-negative and rates within [0,1]");
  if (t.p_m > t.p_det && t.p_det > 0) throw InvalidInput("inconsistent tally: p_m exceeds p_det");
  return t;
}

json evaluate(const KeyTally& t, const SecurityParams& sec, double duration) {
  auto j = report::key_result_json(secure_key_length(t, sec, duration));
  j["tally"] = report::tally_json(t);
  j["duration_s"] = duration;
  return j;
}

json keyrate_reconstruct(const json& in) {
  double l_c = 0.0;
  const auto device = report::device_from_json(in, &l_c);
  const auto sec = report::security_from_json(in);
  const double g2 = in.value("g2_zero", 0.323);
  const auto& o = in.at("reconstruct");
  ObservedSession obs;
  obs.sifted_bps = o.at("sifted_bps").get<double>();
  obs.duration_s = o.at("duration_s").get<double>();
  obs.qber_da = o.at("qber_da").get<double>();
  obs.qber_lr = o.at("qber_lr").get<double>();
  const bool optimize = o.contains("p_key") && o["p_key"].is_string();
  if (optimize && o["p_key"].get<std::string>() != "optimize")
    throw InvalidInput("reconstruct.p_key must be a number or \"optimize\"");
  if (!optimize) obs.p_key = o.value("p_key", 0.5);
  obs.bob_split = o.value("bob_split", 0.5);
  obs.pool_balanced = o.value("pool_balanced", true);
  const auto default_key = parse_basis_label(o.value("key_basis", std::string("DA")));

  json result;
  result["assumptions"] = {{"r_c_at", device.mu_includes_alice_loss ? "alice_output" : "source"},
                           {"p_m_at", "alice_output"},
                           {"p_det", "observed sifted rate / sift fraction / nu_rep"},
                           {"pool_balanced", obs.pool_balanced},
                           {"default_key_basis", std::string(to_string(default_key))}};
  result["device"] = report::device_json(device);
  result["l_c"] = l_c;
  result["security"] = report::security_json(sec);
  for (BasisLabel key : {BasisLabel::DA, BasisLabel::LR}) {
    obs.roles = BasisAssignment(key);
    json entry;
    if (optimize) {
      const auto best = optimize_observed_basis_probability(obs, device, g2, sec);
      obs.p_key = best.p_key;
      entry = evaluate(reconstruct_tally(obs, device, g2), sec, obs.duration_s);
      entry["optimized"] = {{"p_key", best.p_key},
                            {"status", best.status},
                            {"balanced_rate_bps", best.balanced_rate_bps},
                            {"unimodality_violation", best.unimodality_violation}};
    } else {
      entry = evaluate(reconstruct_tally(obs, device, g2), sec, obs.duration_s);
    }
    result["key_basis_" + std::string(to_string(key))] = entry;
  }
  result["default"] = result["key_basis_" + std::string(to_string(default_key))];
  return result;
}

json keyrate_session(const json& in, bool empirical) {
  const auto sec = report::security_from_json(in.value("security", json::object()));
  const auto& s = in.at("sift");
  KeyTally t;
  t.n_key = s.at("n_key").get<double>();
  t.n_check = s.at("n_check").get<double>();
  t.e_key = s.at("e_key").get<double>();
  t.e_check = s.at("e_check").get<double>();
  t.p_key = in.at("alice").at("p_key").get<double>();
  t.p_check = in.at("alice").at("p_check").get<double>();
  t.p_det = empirical ? s.at("p_det").get<double>() : in.at("expected").at("p_det").get<double>();
  t.p_m = in.at("expected").at("p_multi").get<double>();
  auto j = evaluate(t, sec, in.at("duration_s").get<double>());
  j["p_det_source"] = empirical ? "empirical" : "analytic";
  return j;
}

int cmd_simulate(const Globals& g, const std::string& series_path, std::optional<std::uint64_t> n_pulses) {
  require_format(g, {"json", "csv"});
  const auto seed = require_seed(g);
  auto sc = load_scenario(resolve_scenario(g.scenario));
  if (n_pulses) sc.session.n_pulses = *n_pulses;
  sc.session.validate();
  const auto session = run_session(sc.session, seed);
  const auto expected = expected_rates(sc.session);
  if (g.format == "csv") {
    emit(g.out, [&](std::ostream& o) { write_time_series_csv(o, session.series); });
  } else {
    emit_json(g.out, report::session_json(sc, session, expected, seed));
  }
  if (!series_path.empty()) emit(series_path, [&](std::ostream& o) { write_time_series_csv(o, session.series); });
  return kOk;
}

int cmd_keyrate(const Globals& g, const std::string& input, bool empirical) {
  require_format(g, {"json"});
  auto in_file = open_input(input);
  json in;
  try {
    in = json::parse(in_file);
  } catch (const json::parse_error& e) {
    throw InvalidInput(std::string("malformed JSON: ") + e.what());
  }
  json result;
  try {
    if (in.contains("reconstruct")) {
      result = keyrate_reconstruct(in);
    } else if (in.contains("sift")) {
      result = keyrate_session(in, empirical);
    } else {
      auto sec = report::security_from_json(in);
      result = evaluate(tally_from_json(in), sec, in.value("duration_s", 0.0));
      result["security"] = report::security_json(sec);
    }
  } catch (const json::exception& e) {
    throw InvalidInput(std::string("missing or mistyped field: ") + e.what());
  }
  emit_json(g.out, result);
  return kOk;
}

struct SweepArgs {
  std::string state = "D";
  std::string axis;
  double dgd = 0.0;
  double reference = 1310.0;
  double start = 1306.0;
  double stop = 1313.0;
  int points = 71;
  std::string synth;
  double loss = 0.0;
};

int cmd_pmd_sweep(const Globals& g, const SweepArgs& a) {
  require_format(g, {"csv"});
  std::optional<FiberChannel> channel;
  if (!a.axis.empty()) {
    auto v = parse_number_list(a.axis);
    if (v.size() != 3) throw InvalidInput("--axis needs three components");
    channel.emplace(std::vector<FiberSegment>{{StokesVector{v[0], v[1], v[2]}, a.dgd}}, a.loss, 1.0, a.reference);
  } else if (!a.synth.empty()) {
    auto v = parse_number_list(a.synth);
    if (v.size() != 3) throw InvalidInput("--synthesize needs pmd_param,length_km,n_segments");
    channel = synthesize_channel(v[0], v[1], static_cast<int>(v[2]), require_seed(g), a.loss, a.reference);
  } else if (!g.scenario.empty()) {
    channel = load_scenario(resolve_scenario(g.scenario)).session.channel;
  } else {
    throw InvalidInput("pmd sweep needs --axis/--dgd, --synthesize or --scenario");
  }
  const auto points = sweep_trajectory(*channel, parse_state(a.state), a.start, a.stop, a.points);
  emit(g.out, [&](std::ostream& o) { write_trajectory_csv(o, points); });
  return kOk;
}

int cmd_pmd_fit(const Globals& g, const std::string& input) {
  require_format(g, {"json"});
  auto in = open_input(input);
  const auto points = read_trajectory_csv(in);
  if (points.size() < 3) throw InvalidInput("arc fit needs at least 3 points");
  emit_json(g.out, report::arc_fit_json(fit_arc(points), points));
  return kOk;
}

int cmd_pmd_estimate(const Globals& g, double angle_deg, double span, double center, double length) {
  require_format(g, {"json"});
  const double dgd = estimate_dgd(angle_deg * std::numbers::pi / 180.0, span, center);
  json j = {{"dgd_ps", dgd}, {"angle_deg", angle_deg}, {"span_nm", span}, {"center_nm", center}};
  if (length > 0) {
    j["length_km"] = length;
    j["pmd_parameter"] = pmd_parameter(dgd, length);
  }
  emit_json(g.out, j);
  return kOk;
}

int cmd_g2_fit_cw(const Globals& g, const std::string& input) {
  require_format(g, {"json"});
  auto in = open_input(input);
  const auto hist = read_histogram_csv(in);
  emit_json(g.out, report::g2_fit_json(fit_g2_cw(hist)));
  return kOk;
}

int cmd_g2_pulsed(const Globals& g, const std::string& input, double rep_ns, double window_ns) {
  require_format(g, {"json"});
  auto in = open_input(input);
  const auto hist = read_histogram_csv(in);
  emit_json(g.out, report::pulsed_g2_json(pulsed_g2(hist, rep_ns, window_ns)));
  return kOk;
}

int cmd_optimize(const Globals& g, std::optional<double> duration, const std::string& audit_path,
                 const std::string& curve_path, const std::string& losses) {
  require_format(g, {"json"});
  const auto sc = load_scenario(resolve_scenario(g.scenario));
  const double T = duration.value_or(sc.analysis_duration_s);
  if (!(T > 0)) throw InvalidInput("--duration-s must be positive");
  const auto result = optimize_basis_probability(sc.session, sc.security, T);
  auto j = report::optimize_json(result, T);
  j["scenario"] = sc.name;
  emit_json(g.out, j);
  if (!audit_path.empty()) emit(audit_path, [&](std::ostream& o) { write_optimize_audit_csv(o, result.audit); });
  if (!curve_path.empty()) {
    const auto grid = parse_number_list(losses);
    const auto e = expected_rates(sc.session);
    CurveOptions opts;
    opts.duration_s = T;
    opts.p_key = result.positive ? result.p_key : 0.5;
    opts.bob_split = sc.session.bob_split;
    QberModel model{QberModelKind::signal_dark, e.e_key};
    const auto curve = rate_vs_loss_curve(sc.session.device, sc.session.emitter.g2_zero, sc.security, grid, model, opts);
    emit(curve_path, [&](std::ostream& o) { write_rate_curve_csv(o, curve); });
  }
  return kOk;
}

int cmd_rate_curve(const Globals& g, const std::string& losses, const std::string& qber_model, double qber,
                   std::optional<double> duration, std::optional<double> n_key, double p_key) {
  require_format(g, {"csv"});
  DeviceParams device;
  SecurityParams sec;
  double g2 = EmitterModel{}.g2_zero;
  double T = 25200.0;
  double bob = 0.5;
  if (!g.scenario.empty()) {
    const auto sc = load_scenario(resolve_scenario(g.scenario));
    device = sc.session.device;
    sec = sc.security;
    g2 = sc.session.emitter.g2_zero;
    T = sc.analysis_duration_s;
    bob = sc.session.bob_split;
  }
  QberModel model;
  if (qber_model == "constant") {
    model.kind = QberModelKind::constant;
  } else if (qber_model == "signal-dark") {
    model.kind = QberModelKind::signal_dark;
  } else {
    throw InvalidInput("--qber-model must be constant or signal-dark");
  }
  model.e_signal = qber;
  CurveOptions opts;
  opts.duration_s = duration.value_or(T);
  opts.n_key_target = n_key;
  opts.p_key = p_key;
  opts.bob_split = bob;
  const auto grid = parse_number_list(losses);
  const auto curve = rate_vs_loss_curve(device, g2, sec, grid, model, opts);
  emit(g.out, [&](std::ostream& o) { write_rate_curve_csv(o, curve); });
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Single-photon BB84 link simulator and finite-key analysis"};
  app.require_subcommand(1);
  app.fallthrough();
  Globals g;
  app.add_option("--scenario", g.scenario, "Scenario file, or the name of a bundled scenario");
  app.add_option("--seed", g.seed, "Random seed (required by commands that sample)");
  app.add_option("--out", g.out, "Output path (default: stdout)");
  app.add_option("--format", g.format, "Output format")->check(CLI::IsMember({"json", "csv"}));

  int status = kOk;
  std::function<int()> action;

  auto* sim = app.add_subcommand("simulate", "Run a Monte-Carlo session");
  std::string series_path;
  std::optional<std::uint64_t> n_pulses;
  sim->add_option("--series", series_path, "Write the windowed QBER / sifted-rate CSV here");
  sim->add_option("--n-pulses", n_pulses, "Override the scenario pulse count");
  sim->callback([&] { action = [&] { return cmd_simulate(g, series_path, n_pulses); }; });

  auto* kr = app.add_subcommand("keyrate", "Finite-key length from a tally, reconstruction or session JSON");
  std::string kr_input;
  bool empirical = false;
  kr->add_option("--input", kr_input, "Input JSON")->required();
  kr->add_flag("--empirical-pdet", empirical, "Use the measured detection probability of a session");
  kr->callback([&] { action = [&] { return cmd_keyrate(g, kr_input, empirical); }; });

  auto* pmd = app.add_subcommand("pmd", "Polarization mode dispersion tools");
  pmd->require_subcommand(1);
  auto* sweep = pmd->add_subcommand("sweep", "Polarization trajectory versus wavelength");
  SweepArgs sa;
  sweep->add_option("--state", sa.state, "Input state: H,V,D,A,L,R or s1,s2,s3");
  sweep->add_option("--axis", sa.axis, "Single-segment PMD axis s1,s2,s3");
  sweep->add_option("--dgd", sa.dgd, "Single-segment DGD in ps");
  sweep->add_option("--reference-nm", sa.reference, "Reference wavelength");
  sweep->add_option("--synthesize", sa.synth, "Random channel pmd_param,length_km,n_segments");
  sweep->add_option("--loss-db", sa.loss, "Channel loss");
  sweep->add_option("--start-nm", sa.start, "First wavelength");
  sweep->add_option("--stop-nm", sa.stop, "Last wavelength");
  sweep->add_option("--points", sa.points, "Number of samples");
  sweep->callback([&] { action = [&] { return cmd_pmd_sweep(g, sa); }; });

  auto* fit = pmd->add_subcommand("fit", "Fit a circle to a trajectory CSV");
  std::string fit_input;
  fit->add_option("--input", fit_input, "Trajectory CSV")->required();
  fit->callback([&] { action = [&] { return cmd_pmd_fit(g, fit_input); }; });

  auto* est = pmd->add_subcommand("estimate", "DGD from a rotation angle over a span");
  double angle = 0.0, span = 0.0, center = 1310.0, length = 0.0;
  est->add_option("--angle-deg", angle, "Rotation angle")->required();
  est->add_option("--span-nm", span, "Wavelength span")->required();
  est->add_option("--center-nm", center, "Center wavelength");
  est->add_option("--length-km", length, "Fiber length for the PMD parameter");
  est->callback([&] { action = [&] { return cmd_pmd_estimate(g, angle, span, center, length); }; });

  auto* g2 = app.add_subcommand("g2", "Second-order correlation analysis");
  g2->require_subcommand(1);
  auto* cw = g2->add_subcommand("fit-cw", "Three-level model fit of a CW histogram");
  std::string cw_input;
  cw->add_option("--input", cw_input, "Histogram CSV")->required();
  cw->callback([&] { action = [&] { return cmd_g2_fit_cw(g, cw_input); }; });
  auto* pulsed = g2->add_subcommand("pulsed", "Peak-area ratio of a pulsed histogram");
  std::string pulsed_input;
  double rep_ns = 12.5, window_ns = -1.0;
  pulsed->add_option("--input", pulsed_input, "Histogram CSV")->required();
  pulsed->add_option("--rep-period-ns", rep_ns, "Pulse repetition period");
  pulsed->add_option("--window-ns", window_ns, "Integration half-window (default: half the period)");
  pulsed->callback([&] { action = [&] { return cmd_g2_pulsed(g, pulsed_input, rep_ns, window_ns); }; });

  auto* opt = app.add_subcommand("optimize", "Optimize the key-basis probability");
  std::optional<double> opt_duration;
  std::string audit_path, curve_path, opt_losses = "0:15:0.5";
  opt->add_option("--duration-s", opt_duration, "Session duration (default: scenario analysis duration)");
  opt->add_option("--audit", audit_path, "Write every evaluated (p_key, rate) here");
  opt->add_option("--rate-curve", curve_path, "Also write a rate-versus-loss CSV at the optimum");
  opt->add_option("--losses", opt_losses, "Loss grid for --rate-curve, start:stop:step or a list");
  opt->callback([&] { action = [&] { return cmd_optimize(g, opt_duration, audit_path, curve_path, opt_losses); }; });

  auto* rc = app.add_subcommand("rate-curve", "Finite-key and GLLP rates versus channel loss");
  std::string rc_losses = "0:15:0.5", rc_model = "constant";
  double rc_qber = 0.05, rc_p_key = 0.5;
  std::optional<double> rc_duration, rc_n_key;
  rc->add_option("--losses", rc_losses, "Loss grid, start:stop:step or a list");
  rc->add_option("--qber-model", rc_model, "constant or signal-dark");
  rc->add_option("--qber", rc_qber, "Constant QBER, or signal error rate for signal-dark");
  rc->add_option("--duration-s", rc_duration, "Session duration");
  rc->add_option("--n-key", rc_n_key, "Size every point to this many key-basis counts");
  rc->add_option("--p-key", rc_p_key, "Key-basis probability");
  rc->callback([&] {
    action = [&] { return cmd_rate_curve(g, rc_losses, rc_model, rc_qber, rc_duration, rc_n_key, rc_p_key); };
  });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kValidation;
  }

  try {
    status = action();
  } catch (const ConvergenceError& e) {
    std::cerr << "error: " << e.what() << '\n';
    if (!e.diagnostics().empty()) std::cerr << e.diagnostics() << '\n';
    return kRuntime;
  } catch (const InvalidInput& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kValidation;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kRuntime;
  }
  return status;
}
