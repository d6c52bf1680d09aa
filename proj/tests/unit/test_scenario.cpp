#include <doctest.h>

#include <string>

#include "qkdsim/scenario.hpp"

using namespace qkdsim;

namespace {

const char* kMinimal = R"(
name = t
channel.l_c = 4.0
channel.length_km = 3.5
channel.segments = 0 1 0 0.153
session.n_pulses = 1000
)";

bool mentions(const ScenarioError& e, const std::string& text) {
  for (const auto& d : e.diagnostics())
    if (d.find(text) != std::string::npos) return true;
  return false;
}

}  // namespace

TEST_CASE("minimal scenario takes device defaults") {
  const auto sc = parse_scenario(kMinimal);
  CHECK(sc.name == "t");
  CHECK(sc.session.device.rep_rate_hz == 80e6);
  CHECK(sc.session.device.source_mu == 4.19e-4);
  CHECK(sc.session.channel.loss_db() == 4.0);
  CHECK(sc.session.channel.reference_nm() == 1309.5);
  CHECK(sc.session.n_pulses == 1000);
  CHECK(sc.security.f_ec == 1.16);
}

TEST_CASE("bundled scenarios encode both loss rows") {
  const auto d = load_scenario(QKDSIM_SCENARIO_DIR "/deployed-3p5km.cfg");
  const auto s = load_scenario(QKDSIM_SCENARIO_DIR "/spool-32p5km.cfg");
  CHECK(d.session.channel.loss_db() == 4.0);
  CHECK(d.session.channel.length_km() == 3.5);
  CHECK(s.session.channel.loss_db() == 11.2);
  CHECK(s.session.channel.length_km() == 32.5);
  for (const auto* sc : {&d, &s}) {
    const auto& dev = sc->session.device;
    CHECK(dev.rep_rate_hz == 80e6);
    CHECK(dev.source_mu == 4.19e-4);
    CHECK(dev.det_efficiency == 0.375);
    CHECK(dev.dark_prob == 1e-7);
    CHECK(dev.intrinsic_qber == 0.009);
    CHECK(dev.alice_loss_db == 6.2);
    CHECK(dev.bob_loss_db == 1.7);
    CHECK(sc->session.emitter.g2_zero == 0.323);
    CHECK(sc->security.eps_sec == 1e-12);
    CHECK(sc->security.eps_cor == 1e-12);
    CHECK(sc->security.f_ec == 1.16);
  }
}

TEST_CASE("synthesized channel form") {
  const auto sc = parse_scenario(R"(
channel.l_c = 11.2
channel.length_km = 32.5
channel.synthesize.pmd_param = 0.13
channel.synthesize.n_segments = 12
channel.synthesize.seed = 4
session.duration_s = 0.5
)");
  REQUIRE(sc.synthesis.has_value());
  CHECK(sc.session.channel.segments().size() == 12);
  CHECK(sc.session.n_pulses == 40000000);
}

TEST_CASE("field-level diagnostics") {
  try {
    parse_scenario(R"(
bogus = 1
device.eta_det = 1.5
channel.l_c = 4
channel.l_c = 5
channel.length_km = 3.5
channel.segments = 0 1 0 0.1
channel.synthesize.pmd_param = 0.1
session.n_pulses = lots
)");
    FAIL("expected a ScenarioError");
  } catch (const ScenarioError& e) {
    CHECK(mentions(e, "line 2: unknown key 'bogus'"));
    CHECK(mentions(e, "line 5: 'channel.l_c' repeats line 4"));
    CHECK(mentions(e, "not both"));
    CHECK(mentions(e, "line 9: session.n_pulses"));
  }
  try {
    parse_scenario("channel.length_km = 1\nchannel.segments = 0 1 0 0.1\ndevice.eta_det = 1.5\n");
    FAIL("expected a ScenarioError");
  } catch (const ScenarioError& e) {
    CHECK(mentions(e, "eta_det"));
  }
  CHECK_THROWS_AS(parse_scenario("name = x\n"), ScenarioError);
  CHECK_THROWS_AS(load_scenario("/nonexistent/file.cfg"), ScenarioError);
}

TEST_CASE("calibration is applied last") {
  const auto sc = parse_scenario(std::string(kMinimal) + "calibration.sifted_bps = 1349.6\n");
  CHECK(expected_rates(sc.session).sifted_rate_bps == doctest::Approx(1349.6));
  CHECK(sc.session.device.source_mu != 4.19e-4);
}
