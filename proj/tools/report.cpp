#include "report.hpp"

#include <cmath>
#include <numbers>

namespace qkdsim::report {

namespace {

double deg(double rad) { return rad * 180.0 / std::numbers::pi; }

}  // namespace

json device_json(const DeviceParams& d) {
  return {{"nu_rep", d.rep_rate_hz}, {"r_c", d.source_mu},         {"eta_det", d.det_efficiency},
          {"p_dark", d.dark_prob},   {"e0", d.intrinsic_qber},     {"l_a", d.alice_loss_db},
          {"l_b", d.bob_loss_db},    {"r_c_includes_alice_loss", d.mu_includes_alice_loss}};
}

json security_json(const SecurityParams& s) {
  return {{"eps_sec", s.eps_sec}, {"eps_cor", s.eps_cor}, {"f", s.f_ec}};
}

json tally_json(const KeyTally& t) {
  return {{"n_key", t.n_key}, {"n_check", t.n_check}, {"e_key", t.e_key}, {"e_check", t.e_check},
          {"p_key", t.p_key}, {"p_check", t.p_check}, {"p_det", t.p_det}, {"p_m", t.p_m}};
}

json key_result_json(const KeyResult& r) {
  const auto& k = r.terms;
  return {{"length_bits", r.length_bits},
          {"rate_bps", r.rate_bps},
          {"status", std::string(to_string(r.status))},
          {"terms",
           {{"A_key", k.a_key},
            {"A_check", k.a_check},
            {"Q_check", k.q_check},
            {"delta", k.delta},
            {"leak_ec", k.leak_ec},
            {"log_term", k.log_term},
            {"raw_length", k.raw_length},
            {"phase_error_clamped", k.phase_error_clamped}}}};
}

json session_json(const Scenario& sc, const SessionResult& session, const ExpectedRates& expected, std::uint64_t seed) {
  const auto& cfg = sc.session;
  const auto& s = session.sift;
  const auto& t = s.tally;
  const double duration = session.pulses_sent / cfg.device.rep_rate_hz;
  json j;
  j["scenario"] = sc.name;
  j["seed"] = seed;
  j["n_pulses"] = session.pulses_sent;
  j["truncated"] = session.truncated;
  j["duration_s"] = duration;
  j["device"] = device_json(cfg.device);
  j["l_c"] = cfg.channel.loss_db();
  j["g2_zero"] = cfg.emitter.g2_zero;
  j["security"] = security_json(sc.security);
  j["alice"] = {{"p_key", cfg.alice.p_key},
                {"p_check", cfg.alice.p_check()},
                {"key_basis", std::string(to_string(cfg.alice.roles.key_basis()))}};
  j["bob_split"] = cfg.bob_split;
  j["sift"] = {{"n_key", s.n_key},
               {"n_check", s.n_check},
               {"e_key", s.e_key},
               {"e_check", s.e_check},
               {"qber_da", s.qber_da},
               {"qber_lr", s.qber_lr},
               {"qber", s.qber},
               {"p_det", s.p_det},
               {"detected_slots", t.detected_slots},
               {"kept_da", t.kept[0]},
               {"kept_lr", t.kept[1]},
               {"errors_da", t.errors[0]},
               {"errors_lr", t.errors[1]},
               {"double_clicks", t.double_clicks},
               {"basis_mismatch", t.basis_mismatch},
               {"ambiguous_basis", t.ambiguous_basis}};
  j["sifted_bps"] = duration > 0 ? (t.kept[0] + t.kept[1]) / duration : 0.0;
  j["expected"] = {{"p_det", expected.p_det},
                   {"p_multi", expected.p_multi},
                   {"qber_da", expected.qber_da()},
                   {"qber_lr", expected.qber_lr()},
                   {"e_key", expected.e_key},
                   {"e_check", expected.e_check},
                   {"sifted_fraction", expected.sifted_fraction},
                   {"sifted_rate_bps", expected.sifted_rate_bps}};
  return j;
}

json arc_fit_json(const ArcFit& fit, std::span<const TrajectoryPoint> points) {
  json j = {{"axis", {fit.axis.s1, fit.axis.s2, fit.axis.s3}},
            {"angular_radius_deg", deg(fit.angular_radius)},
            {"rotation_angle_deg", deg(fit.rotation_angle)},
            {"central_angle_deg", deg(fit.central_angle)},
            {"residual_deg", deg(fit.residual)},
            {"degenerate", fit.degenerate},
            {"n_points", points.size()}};
  if (!points.empty()) {
    double lo = points.front().wavelength_nm;
    double hi = lo;
    for (const auto& p : points) {
      lo = std::min(lo, p.wavelength_nm);
      hi = std::max(hi, p.wavelength_nm);
    }
    j["span_nm"] = hi - lo;
    j["center_nm"] = 0.5 * (lo + hi);
    if (hi > lo && !fit.degenerate) j["dgd_ps"] = estimate_dgd(fit.rotation_angle, hi - lo, 0.5 * (lo + hi));
  }
  return j;
}

json g2_fit_json(const G2Fit& fit) {
  return {{"g2_zero", fit.model.g2_zero},
          {"uncertainty", fit.model.uncertainty},
          {"a", fit.model.a},
          {"tau1_ns", fit.model.tau1_ns},
          {"tau2_ns", fit.model.tau2_ns},
          {"scale", fit.scale},
          {"sigma", {{"g2_zero", fit.model.uncertainty},
                     {"a", fit.a_sigma},
                     {"tau1_ns", fit.tau1_sigma_ns},
                     {"tau2_ns", fit.tau2_sigma_ns},
                     {"scale", fit.scale_sigma}}},
          {"chi2", fit.chi2},
          {"dof", fit.dof},
          {"iterations", fit.iterations},
          {"solver_status", fit.solver_status}};
}

json pulsed_g2_json(const PulsedG2& g2) {
  return {{"g2_zero", g2.g2_zero},
          {"uncertainty", g2.uncertainty},
          {"central_counts", g2.central_counts},
          {"side_mean", g2.side_mean},
          {"side_peaks", g2.side_peaks}};
}

json optimize_json(const OptimizeResult& r, double duration_s) {
  return {{"p_key", r.p_key},
          {"rate_bps", r.rate_bps},
          {"balanced_rate_bps", r.balanced_rate_bps},
          {"duration_s", duration_s},
          {"positive", r.positive},
          {"status", r.status},
          {"unimodality_violation", r.unimodality_violation},
          {"evaluations", r.audit.size()},
          {"key", key_result_json(r.key)}};
}

DeviceParams device_from_json(const json& j, double* channel_loss_db) {
  DeviceParams d;
  d.rep_rate_hz = j.value("nu_rep", d.rep_rate_hz);
  d.source_mu = j.value("r_c", d.source_mu);
  d.det_efficiency = j.value("eta_det", d.det_efficiency);
  d.dark_prob = j.value("p_dark", d.dark_prob);
  d.intrinsic_qber = j.value("e0", d.intrinsic_qber);
  d.alice_loss_db = j.value("l_a", d.alice_loss_db);
  d.bob_loss_db = j.value("l_b", d.bob_loss_db);
  d.mu_includes_alice_loss = j.value("r_c_includes_alice_loss", d.mu_includes_alice_loss);
  if (channel_loss_db) *channel_loss_db = j.value("l_c", 0.0);
  d.validate();
  return d;
}

SecurityParams security_from_json(const json& j) {
  SecurityParams s;
  s.eps_sec = j.value("eps_sec", s.eps_sec);
  s.eps_cor = j.value("eps_cor", s.eps_cor);
  s.f_ec = j.value("f", s.f_ec);
  s.validate();
  return s;
}

}  // namespace qkdsim::report
