#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <string>
#include <tuple>
#include <vector>

#include "qkdsim/channel.hpp"
#include "qkdsim/emitter.hpp"
#include "qkdsim/errors.hpp"
#include "qkdsim/keyrate.hpp"
#include "qkdsim/polarization.hpp"
#include "qkdsim/protocol.hpp"
#include "qkdsim/scenario.hpp"

namespace py = pybind11;
using namespace qkdsim;

namespace {

std::vector<TrajectoryPoint> to_points(const std::vector<std::tuple<double, double, double, double>>& rows) {
  std::vector<TrajectoryPoint> points;
  points.reserve(rows.size());
  for (const auto& [w, s1, s2, s3] : rows) points.push_back({w, {s1, s2, s3}});
  return points;
}

std::vector<HistogramBin> to_bins(const std::vector<double>& tau_ns, const std::vector<double>& counts) {
  if (tau_ns.size() != counts.size()) throw InvalidInput("tau_ns and counts differ in length");
  std::vector<HistogramBin> bins;
  bins.reserve(tau_ns.size());
  for (std::size_t i = 0; i < tau_ns.size(); ++i) bins.push_back({tau_ns[i], counts[i]});
  return bins;
}

}  // namespace

PYBIND11_MODULE(_qkdsim, m) {
  m.doc() = "Polarization BB84 link simulator";

  py::register_exception<InvalidInput>(m, "InvalidInput", PyExc_ValueError);
  py::register_exception<ConvergenceError>(m, "ConvergenceError", PyExc_RuntimeError);

  py::class_<StokesVector>(m, "StokesVector")
      .def(py::init<double, double, double>(), py::arg("s1"), py::arg("s2"), py::arg("s3"))
      .def_readwrite("s1", &StokesVector::s1)
      .def_readwrite("s2", &StokesVector::s2)
      .def_readwrite("s3", &StokesVector::s3)
      .def("dot", &StokesVector::dot)
      .def("norm", &StokesVector::norm)
      .def("normalized", &StokesVector::normalized)
      .def("__iter__", [](const StokesVector& s) { return py::iter(py::make_tuple(s.s1, s.s2, s.s3)); })
      .def("__repr__", [](const StokesVector& s) {
        return "StokesVector(" + std::to_string(s.s1) + ", " + std::to_string(s.s2) + ", " + std::to_string(s.s3) + ")";
      });

  m.def("stokes_of", [](const std::string& label) { return stokes_of(parse_state_label(label)); }, py::arg("label"));
  m.def("phase_to_state", &phase_to_state, py::arg("phi"));
  m.def("rotate", &rotate, py::arg("s"), py::arg("axis"), py::arg("angle"));
  m.def("angle_between", &angle_between);
  m.def("misalignment_error", &misalignment_error, py::arg("s"), py::arg("reference"));

  py::class_<FiberSegment>(m, "FiberSegment")
      .def(py::init([](StokesVector axis, double dgd) { return FiberSegment{axis, dgd}; }), py::arg("axis"),
           py::arg("dgd_ps"))
      .def_readonly("axis", &FiberSegment::axis)
      .def_readonly("dgd_ps", &FiberSegment::dgd_ps);

  py::class_<FiberChannel>(m, "FiberChannel")
      .def(py::init<std::vector<FiberSegment>, double, double, double>(), py::arg("segments"), py::arg("loss_db"),
           py::arg("length_km"), py::arg("reference_nm") = 1310.0)
      .def_property_readonly("segments", &FiberChannel::segments)
      .def_property_readonly("loss_db", &FiberChannel::loss_db)
      .def_property_readonly("length_km", &FiberChannel::length_km)
      .def_property_readonly("reference_nm", &FiberChannel::reference_nm)
      .def("transmittance", &FiberChannel::transmittance)
      .def("first_order_pmd", [](const FiberChannel& c) {
        auto p = c.first_order_pmd();
        return py::make_tuple(p.axis, p.dgd_ps);
      })
      .def("then", &FiberChannel::then);

  m.def("delta_omega", &delta_omega, py::arg("wavelength_nm"), py::arg("reference_nm"));
  m.def("apply_channel", &apply_channel, py::arg("state"), py::arg("channel"), py::arg("wavelength_nm"));
  m.def(
      "sweep_trajectory",
      [](const FiberChannel& c, const StokesVector& s, double start, double end, int n) {
        std::vector<std::tuple<double, double, double, double>> rows;
        for (const auto& p : sweep_trajectory(c, s, start, end, n))
          rows.emplace_back(p.wavelength_nm, p.stokes.s1, p.stokes.s2, p.stokes.s3);
        return rows;
      },
      py::arg("channel"), py::arg("state"), py::arg("start_nm"), py::arg("end_nm"), py::arg("n_points"));

  py::class_<ArcFit>(m, "ArcFit")
      .def_readonly("axis", &ArcFit::axis)
      .def_readonly("angular_radius", &ArcFit::angular_radius)
      .def_readonly("rotation_angle", &ArcFit::rotation_angle)
      .def_readonly("central_angle", &ArcFit::central_angle)
      .def_readonly("residual", &ArcFit::residual)
      .def_readonly("degenerate", &ArcFit::degenerate);
  m.def("fit_arc", [](const std::vector<std::tuple<double, double, double, double>>& rows) {
    auto points = to_points(rows);
    return fit_arc(points);
  }, py::arg("points"));
  m.def("estimate_dgd", &estimate_dgd, py::arg("angle_rad"), py::arg("span_nm"), py::arg("center_nm"));
  m.def("pmd_parameter", &pmd_parameter, py::arg("dgd_ps"), py::arg("length_km"));
  m.def("synthesize_channel", &synthesize_channel, py::arg("pmd_param"), py::arg("length_km"),
        py::arg("n_segments"), py::arg("seed"), py::arg("loss_db") = 0.0, py::arg("reference_nm") = 1310.0);

  py::class_<EmitterSpectrum>(m, "EmitterSpectrum")
      .def(py::init([](double center, double fwhm, const std::string& shape) {
             EmitterSpectrum s{center, fwhm, parse_spectrum_shape(shape)};
             s.validate();
             return s;
           }),
           py::arg("center_nm") = 1309.5, py::arg("fwhm_nm") = 7.0, py::arg("shape") = "gaussian")
      .def_readonly("center_nm", &EmitterSpectrum::center_nm)
      .def_readonly("fwhm_nm", &EmitterSpectrum::fwhm_nm)
      .def("density", &EmitterSpectrum::density);
  m.def("qber_from_pmd", &qber_from_pmd, py::arg("state"), py::arg("channel"), py::arg("spectrum"),
        py::arg("n_nodes") = kDefaultSpectralNodes);

  m.def("p_multi", [](double mu, double g2) { return p_multi({mu, g2}); }, py::arg("mu"), py::arg("g2_zero"));

  py::class_<G2Model>(m, "G2Model")
      .def_readonly("a", &G2Model::a)
      .def_readonly("tau1_ns", &G2Model::tau1_ns)
      .def_readonly("tau2_ns", &G2Model::tau2_ns)
      .def_readonly("g2_zero", &G2Model::g2_zero)
      .def_readonly("uncertainty", &G2Model::uncertainty);
  py::class_<G2Fit>(m, "G2Fit")
      .def_readonly("model", &G2Fit::model)
      .def_readonly("scale", &G2Fit::scale)
      .def_readonly("chi2", &G2Fit::chi2)
      .def_readonly("dof", &G2Fit::dof)
      .def_readonly("solver_status", &G2Fit::solver_status);
  m.def("fit_g2_cw", [](const std::vector<double>& tau, const std::vector<double>& counts) {
    auto bins = to_bins(tau, counts);
    return fit_g2_cw(bins);
  }, py::arg("tau_ns"), py::arg("counts"));

  py::class_<PulsedG2>(m, "PulsedG2")
      .def_readonly("g2_zero", &PulsedG2::g2_zero)
      .def_readonly("uncertainty", &PulsedG2::uncertainty)
      .def_readonly("central_counts", &PulsedG2::central_counts)
      .def_readonly("side_mean", &PulsedG2::side_mean)
      .def_readonly("side_peaks", &PulsedG2::side_peaks);
  m.def("pulsed_g2", [](const std::vector<double>& tau, const std::vector<double>& counts, double period,
                        double half_window) {
    auto bins = to_bins(tau, counts);
    return pulsed_g2(bins, period, half_window);
  }, py::arg("tau_ns"), py::arg("counts"), py::arg("rep_period_ns"), py::arg("half_window_ns") = -1.0);

  py::class_<SecurityParams>(m, "SecurityParams")
      .def(py::init([](double eps_sec, double eps_cor, double f_ec) {
             SecurityParams p{eps_sec, eps_cor, f_ec};
             p.validate();
             return p;
           }),
           py::arg("eps_sec") = 1e-12, py::arg("eps_cor") = 1e-12, py::arg("f_ec") = 1.16)
      .def_readonly("eps_sec", &SecurityParams::eps_sec)
      .def_readonly("eps_cor", &SecurityParams::eps_cor)
      .def_readonly("f_ec", &SecurityParams::f_ec);

  py::class_<KeyTally>(m, "KeyTally")
      .def(py::init<>())
      .def_readwrite("n_key", &KeyTally::n_key)
      .def_readwrite("n_check", &KeyTally::n_check)
      .def_readwrite("e_key", &KeyTally::e_key)
      .def_readwrite("e_check", &KeyTally::e_check)
      .def_readwrite("p_key", &KeyTally::p_key)
      .def_readwrite("p_check", &KeyTally::p_check)
      .def_readwrite("p_det", &KeyTally::p_det)
      .def_readwrite("p_m", &KeyTally::p_m);

  py::class_<KeyTerms>(m, "KeyTerms")
      .def_readonly("a_key", &KeyTerms::a_key)
      .def_readonly("a_check", &KeyTerms::a_check)
      .def_readonly("q_check", &KeyTerms::q_check)
      .def_readonly("delta", &KeyTerms::delta)
      .def_readonly("leak_ec", &KeyTerms::leak_ec)
      .def_readonly("log_term", &KeyTerms::log_term)
      .def_readonly("raw_length", &KeyTerms::raw_length)
      .def_readonly("phase_error_clamped", &KeyTerms::phase_error_clamped);

  py::class_<KeyResult>(m, "KeyResult")
      .def_readonly("length_bits", &KeyResult::length_bits)
      .def_readonly("rate_bps", &KeyResult::rate_bps)
      .def_property_readonly("status", [](const KeyResult& r) { return std::string(to_string(r.status)); })
      .def_readonly("terms", &KeyResult::terms);

  m.def("binary_entropy", &binary_entropy, py::arg("q"));
  m.def("security_log_term", &security_log_term, py::arg("eps_sec"), py::arg("eps_cor"));
  m.def("fluctuation_delta", &fluctuation_delta, py::arg("n_key"), py::arg("n_check"), py::arg("eps_sec"));
  m.def("secure_key_length", [](const KeyTally& t, const SecurityParams& p, double duration, bool zero_fluct) {
    return secure_key_length(t, p, duration, KeyOptions{zero_fluct});
  }, py::arg("tally"), py::arg("params"), py::arg("duration_s") = 0.0, py::arg("zero_fluctuation") = false);

  py::class_<OptimizeResult>(m, "OptimizeResult")
      .def_readonly("p_key", &OptimizeResult::p_key)
      .def_readonly("rate_bps", &OptimizeResult::rate_bps)
      .def_readonly("balanced_rate_bps", &OptimizeResult::balanced_rate_bps)
      .def_readonly("key", &OptimizeResult::key)
      .def_readonly("positive", &OptimizeResult::positive)
      .def_readonly("status", &OptimizeResult::status);

  py::class_<ExpectedRates>(m, "ExpectedRates")
      .def_readonly("p_det", &ExpectedRates::p_det)
      .def_readonly("p_multi", &ExpectedRates::p_multi)
      .def_readonly("sifted_rate_bps", &ExpectedRates::sifted_rate_bps)
      .def_readonly("e_key", &ExpectedRates::e_key)
      .def_readonly("e_check", &ExpectedRates::e_check)
      .def_property_readonly("qber_da", &ExpectedRates::qber_da)
      .def_property_readonly("qber_lr", &ExpectedRates::qber_lr);

  py::class_<SiftResult>(m, "SiftResult")
      .def_readonly("n_key", &SiftResult::n_key)
      .def_readonly("n_check", &SiftResult::n_check)
      .def_readonly("e_key", &SiftResult::e_key)
      .def_readonly("e_check", &SiftResult::e_check)
      .def_readonly("qber_da", &SiftResult::qber_da)
      .def_readonly("qber_lr", &SiftResult::qber_lr)
      .def_readonly("qber", &SiftResult::qber)
      .def_readonly("p_det", &SiftResult::p_det);

  py::class_<Scenario>(m, "Scenario")
      .def_readonly("name", &Scenario::name)
      .def_readonly("security", &Scenario::security)
      .def_readonly("analysis_duration_s", &Scenario::analysis_duration_s)
      .def_property_readonly("channel", [](const Scenario& s) { return s.session.channel; })
      .def_property(
          "n_pulses", [](const Scenario& s) { return s.session.n_pulses; },
          [](Scenario& s, std::uint64_t n) { s.session.n_pulses = n; })
      .def_property(
          "p_key", [](const Scenario& s) { return s.session.alice.p_key; },
          [](Scenario& s, double p) { s.session.alice.p_key = p; })
      .def("expected_rates", [](const Scenario& s) { return expected_rates(s.session); })
      .def("expected_tally", [](const Scenario& s, double duration) { return expected_tally(s.session, duration); },
           py::arg("duration_s"))
      .def("run", [](const Scenario& s, std::uint64_t seed) {
        py::gil_scoped_release release;
        return run_session(s.session, seed).sift;
      }, py::arg("seed"))
      .def("optimize_basis_probability", [](const Scenario& s, std::optional<double> duration) {
        return optimize_basis_probability(s.session, s.security, duration.value_or(s.analysis_duration_s));
      }, py::arg("duration_s") = py::none());

  m.def("load_scenario", &load_scenario, py::arg("path"));
  m.def("parse_scenario", &parse_scenario, py::arg("text"), py::arg("base_dir") = std::filesystem::path{});
}
