#include "qkdsim/scenario.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>

namespace qkdsim {

namespace {

std::string join(const std::vector<std::string>& lines) {
  std::string out;
  for (const auto& l : lines) out += (out.empty() ? "" : "\n") + l;
  return out;
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  return s.substr(b, s.find_last_not_of(" \t\r") - b + 1);
}

double to_double(const std::string& v) {
  double x = 0.0;
  const auto res = std::from_chars(v.data(), v.data() + v.size(), x);
  if (res.ec != std::errc{} || res.ptr != v.data() + v.size()) throw InvalidInput("expected a number, got '" + v + "'");
  return x;
}

std::uint64_t to_u64(const std::string& v) {
  std::uint64_t x = 0;
  const auto res = std::from_chars(v.data(), v.data() + v.size(), x);
  if (res.ec == std::errc{} && res.ptr == v.data() + v.size()) return x;
  // Accept integral values written in exponent form, e.g. 1e7.
  const double d = to_double(v);
  if (d < 0.0 || d != std::floor(d) || d > 1.8e19) throw InvalidInput("expected a non-negative integer, got '" + v + "'");
  return static_cast<std::uint64_t>(d);
}

bool to_bool(const std::string& v) {
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  throw InvalidInput("expected true/false, got '" + v + "'");
}

std::vector<FiberSegment> parse_segments(const std::string& v) {
  std::vector<FiberSegment> segs;
  std::stringstream all(v);
  std::string item;
  while (std::getline(all, item, ';')) {
    item = trim(item);
    if (item.empty()) continue;
    std::istringstream fields(item);
    std::vector<std::string> parts;
    std::string p;
    while (fields >> p) parts.push_back(p);
    if (parts.size() != 4) throw InvalidInput("each segment needs 's1 s2 s3 dgd_ps', got '" + item + "'");
    const StokesVector axis{to_double(parts[0]), to_double(parts[1]), to_double(parts[2])};
    if (!is_unit(axis)) throw InvalidInput("segment axis must be a unit vector: '" + item + "'");
    segs.push_back({axis, to_double(parts[3])});
  }
  if (segs.empty()) throw InvalidInput("no segments given");
  return segs;
}

}  // namespace

ScenarioError::ScenarioError(std::vector<std::string> diagnostics)
    : InvalidInput(join(diagnostics)), diagnostics_(std::move(diagnostics)) {}

Scenario parse_scenario(const std::string& text, const std::filesystem::path& base_dir) {
  Scenario sc;
  auto& s = sc.session;
  auto& d = s.device;
  std::vector<std::string> errors;

  std::optional<std::vector<FiberSegment>> segments;
  SynthesisSpec synth;
  bool synth_given = false;
  double loss_db = 0.0;
  double length_km = 1.0;
  std::optional<double> reference_nm;
  std::optional<std::filesystem::path> pattern_file;
  std::string pattern_format = "hex";
  std::optional<double> duration_s;
  std::optional<std::uint64_t> n_pulses;

  using Setter = std::function<void(const std::string&)>;
  const std::map<std::string, Setter> setters = {
      {"name", [&](const std::string& v) { sc.name = v; }},
      {"device.nu_rep", [&](const std::string& v) { d.rep_rate_hz = to_double(v); }},
      {"device.r_c", [&](const std::string& v) { d.source_mu = to_double(v); }},
      {"device.eta_det", [&](const std::string& v) { d.det_efficiency = to_double(v); }},
      {"device.p_dark", [&](const std::string& v) { d.dark_prob = to_double(v); }},
      {"device.e0", [&](const std::string& v) { d.intrinsic_qber = to_double(v); }},
      {"device.l_a", [&](const std::string& v) { d.alice_loss_db = to_double(v); }},
      {"device.l_b", [&](const std::string& v) { d.bob_loss_db = to_double(v); }},
      {"device.r_c_includes_alice_loss", [&](const std::string& v) { d.mu_includes_alice_loss = to_bool(v); }},
      {"channel.l_c", [&](const std::string& v) { loss_db = to_double(v); }},
      {"channel.length_km", [&](const std::string& v) { length_km = to_double(v); }},
      {"channel.reference_nm", [&](const std::string& v) { reference_nm = to_double(v); }},
      {"channel.segments", [&](const std::string& v) { segments = parse_segments(v); }},
      {"channel.synthesize.pmd_param", [&](const std::string& v) { synth.pmd_param = to_double(v); synth_given = true; }},
      {"channel.synthesize.n_segments",
       [&](const std::string& v) { synth.n_segments = static_cast<int>(to_u64(v)); synth_given = true; }},
      {"channel.synthesize.seed", [&](const std::string& v) { synth.seed = to_u64(v); synth_given = true; }},
      {"emitter.center_nm", [&](const std::string& v) { s.emitter.spectrum.center_nm = to_double(v); }},
      {"emitter.fwhm_nm", [&](const std::string& v) { s.emitter.spectrum.fwhm_nm = to_double(v); }},
      {"emitter.shape", [&](const std::string& v) { s.emitter.spectrum.shape = parse_spectrum_shape(v); }},
      {"emitter.g2_zero", [&](const std::string& v) { s.emitter.g2_zero = to_double(v); }},
      {"alice.p_key", [&](const std::string& v) { s.alice.p_key = to_double(v); }},
      {"alice.key_basis", [&](const std::string& v) { s.alice.roles = BasisAssignment(parse_basis_label(v)); }},
      {"alice.pattern_file", [&](const std::string& v) { pattern_file = v; }},
      {"alice.pattern_format",
       [&](const std::string& v) {
         if (v != "hex" && v != "binary") throw InvalidInput("expected hex or binary");
         pattern_format = v;
       }},
      {"bob.split", [&](const std::string& v) { s.bob_split = to_double(v); }},
      {"bob.double_click",
       [&](const std::string& v) {
         if (v == "discard") s.double_click = DoubleClickPolicy::discard;
         else if (v == "random_bit") s.double_click = DoubleClickPolicy::random_bit;
         else throw InvalidInput("expected discard or random_bit");
       }},
      {"security.eps_sec", [&](const std::string& v) { sc.security.eps_sec = to_double(v); }},
      {"security.eps_cor", [&](const std::string& v) { sc.security.eps_cor = to_double(v); }},
      {"security.f", [&](const std::string& v) { sc.security.f_ec = to_double(v); }},
      {"session.n_pulses", [&](const std::string& v) { n_pulses = to_u64(v); }},
      {"session.duration_s", [&](const std::string& v) { duration_s = to_double(v); }},
      {"session.window_s", [&](const std::string& v) { s.window_s = to_double(v); }},
      {"session.block_size", [&](const std::string& v) { s.block_size = to_u64(v); }},
      {"analysis.duration_s", [&](const std::string& v) { sc.analysis_duration_s = to_double(v); }},
      {"calibration.sifted_bps", [&](const std::string& v) { sc.calibrate_sifted_bps = to_double(v); }},
  };

  std::istringstream in(text);
  std::string line;
  int line_no = 0;
  std::map<std::string, int> seen;
  while (std::getline(in, line)) {
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      errors.push_back("line " + std::to_string(line_no) + ": expected 'key = value'");
      continue;
    }
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    const auto it = setters.find(key);
    if (it == setters.end()) {
      errors.push_back("line " + std::to_string(line_no) + ": unknown key '" + key + "'");
      continue;
    }
    if (seen.contains(key)) {
      errors.push_back("line " + std::to_string(line_no) + ": '" + key + "' repeats line " + std::to_string(seen[key]));
      continue;
    }
    seen[key] = line_no;
    try {
      it->second(value);
    } catch (const std::exception& e) {
      errors.push_back("line " + std::to_string(line_no) + ": " + key + ": " + e.what());
    }
  }

  if (segments && synth_given) errors.push_back("channel: give either channel.segments or channel.synthesize.*, not both");
  if (!segments && !synth_given) errors.push_back("channel: missing channel.segments or channel.synthesize.*");
  if (duration_s && n_pulses) errors.push_back("session: give either session.n_pulses or session.duration_s, not both");
  if (!errors.empty()) throw ScenarioError(std::move(errors));

  const double ref = reference_nm.value_or(s.emitter.spectrum.center_nm);
  try {
    if (segments) {
      s.channel = FiberChannel(*segments, loss_db, length_km, ref);
    } else {
      s.channel = synthesize_channel(synth.pmd_param, length_km, synth.n_segments, synth.seed, loss_db, ref);
      sc.synthesis = synth;
    }
  } catch (const std::exception& e) {
    errors.push_back(std::string("channel: ") + e.what());
  }
  if (n_pulses) s.n_pulses = *n_pulses;
  if (duration_s) s.n_pulses = static_cast<std::uint64_t>(std::llround(*duration_s * d.rep_rate_hz));
  if (pattern_file) {
    try {
      const auto path = pattern_file->is_absolute() ? *pattern_file : base_dir / *pattern_file;
      s.alice.pattern = PulsePattern::load(path, pattern_format == "hex");
    } catch (const std::exception& e) {
      errors.push_back(std::string("alice.pattern_file: ") + e.what());
    }
  }

  const auto check = [&](const char* what, const std::function<void()>& fn) {
    try {
      fn();
    } catch (const std::exception& e) {
      errors.push_back(std::string(what) + ": " + e.what());
    }
  };
  check("device", [&] { d.validate(); });
  check("emitter", [&] {
    s.emitter.spectrum.validate();
    PhotonStatistics{d.source_mu, s.emitter.g2_zero}.validate();
  });
  check("alice", [&] { s.alice.validate(); });
  check("security", [&] { sc.security.validate(); });
  check("bob", [&] {
    if (!(s.bob_split >= 0.0 && s.bob_split <= 1.0)) throw InvalidInput("bob.split must lie in [0, 1]");
  });
  check("session", [&] {
    if (!(s.window_s > 0.0)) throw InvalidInput("session.window_s must be > 0");
    if (s.block_size < 1) throw InvalidInput("session.block_size must be >= 1");
  });
  check("analysis", [&] {
    if (!(sc.analysis_duration_s > 0.0)) throw InvalidInput("analysis.duration_s must be > 0");
  });
  if (!errors.empty()) throw ScenarioError(std::move(errors));

  if (sc.calibrate_sifted_bps) {
    try {
      s = calibrate_to_sifted_rate(s, *sc.calibrate_sifted_bps);
    } catch (const std::exception& e) {
      throw ScenarioError({std::string("calibration.sifted_bps: ") + e.what()});
    }
  }
  return sc;
}

Scenario load_scenario(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ScenarioError({"cannot open scenario file '" + path.string() + "'"});
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_scenario(buf.str(), path.parent_path());
}

}  // namespace qkdsim
