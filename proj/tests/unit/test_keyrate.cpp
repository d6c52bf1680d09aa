#include <doctest.h>

#include <cmath>
#include <random>
#include <sstream>

#include "oracles.hpp"
#include "qkdsim/errors.hpp"
#include "qkdsim/keyrate.hpp"

using namespace qkdsim;
using oracle::Real;

namespace {

KeyTally base_tally() {
  KeyTally t;
  t.n_key = 1e6;
  t.n_check = 1e4;
  t.e_key = 0.02;
  t.e_check = 0.05;
  t.p_key = 0.99;
  t.p_check = 0.01;
  t.p_det = 1e-5;
  t.p_m = 1e-9;
  return t;
}

SessionConfig deployed() {
  SessionConfig c;
  c.channel = FiberChannel({{{0, 1, 0}, 0.153}}, 4.0, 3.5, 1309.5);
  return c;
}

double gllp_threshold(double f) {
  double lo = 0.0, hi = 0.5;
  for (int i = 0; i < 200; ++i) {
    const double m = 0.5 * (lo + hi);
    const Real per = 1 - oracle::h(m) - f * oracle::h(m);
    (per > 0 ? lo : hi) = m;
  }
  return lo;
}

}  // namespace

TEST_CASE("term values from worked examples") {
  CHECK(binary_entropy(0.05) == doctest::Approx(0.286397).epsilon(1e-6));
  CHECK(binary_entropy(0.5) == 1.0);
  CHECK(binary_entropy(0.0) == 0.0);
  CHECK(binary_entropy(1.0) == 0.0);
  CHECK_THROWS_AS(binary_entropy(1.5), InvalidInput);
  CHECK(fluctuation_delta(1e6, 1e4, 1e-12) == doctest::Approx(0.05349).epsilon(1e-4));
  CHECK(security_log_term(1e-12, 1e-12) == doctest::Approx(120.589411).epsilon(1e-8));
  CHECK(multiphoton_correction(0.0, 1e-5, 0.5) == 1.0);
  CHECK(multiphoton_correction(1e-6, 1e-5, 0.05) < 0.0);
  CHECK_THROWS_AS(multiphoton_correction(1e-9, 0.0, 0.5), InvalidInput);
  CHECK_THROWS_AS(fluctuation_delta(0.0, 10.0, 1e-12), InvalidInput);
  CHECK(ec_leakage(1.16, 0.05, 1000.0) == doctest::Approx(1.16 * 0.286397 * 1000.0).epsilon(1e-6));
}

TEST_CASE("terms match high-precision oracles on randomized inputs") {
  std::mt19937_64 rng(31);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  int checked = 0;
  for (int i = 0; i < 300; ++i) {
    const double q = u(rng) * 0.5;
    const double nz = std::pow(10.0, 3 + 7 * u(rng));
    const double nx = std::pow(10.0, 2 + 6 * u(rng));
    const double eps = std::pow(10.0, -3 - 12 * u(rng));
    const double pd = std::pow(10.0, -7 + 4 * u(rng));
    const double pm = pd * 1e-3 * u(rng);
    const double pb = 0.01 + 0.98 * u(rng);
    CHECK(oracle::rel(binary_entropy(q), oracle::h(Real(q))) < 1e-12);
    CHECK(oracle::rel(fluctuation_delta(nz, nx, eps), oracle::delta(nz, nx, eps)) < 1e-12);
    CHECK(oracle::rel(multiphoton_correction(pm, pd, pb), oracle::correction(pm, pd, pb)) < 1e-12);
    CHECK(oracle::rel(ec_leakage(1.16, q, nz), oracle::leak(Real(1.16), Real(q), Real(nz))) < 1e-12);
    ++checked;
  }
  CHECK(checked == 300);
}

TEST_CASE("secure length composition") {
  const auto t = base_tally();
  const SecurityParams sec;
  const auto r = secure_key_length(t, sec, 100.0);
  REQUIRE(r.status == KeyStatus::ok);
  const Real want = oracle::eq3(t.n_key, t.n_check, t.e_key, t.e_check, t.p_key, t.p_check, t.p_det, t.p_m, 1e-12,
                                1e-12, 1.16);
  CHECK(oracle::rel(r.terms.raw_length, want) < 1e-12);
  CHECK(r.length_bits == static_cast<std::int64_t>(std::floor(static_cast<double>(want))));
  CHECK(r.rate_bps == doctest::Approx(r.length_bits / 100.0));
  CHECK(r.length_bits <= t.n_key);
}

TEST_CASE("statuses and clamping") {
  const SecurityParams sec;
  auto t = base_tally();
  t.n_key = 0;
  CHECK(secure_key_length(t, sec).status == KeyStatus::no_counts);
  CHECK(secure_key_length(t, sec).length_bits == 0);
  t = base_tally();
  t.p_m = 1e-6;
  CHECK(secure_key_length(t, sec).status == KeyStatus::multi_photon_dominated);
  t = base_tally();
  t.e_check = 0.48;
  const auto noisy = secure_key_length(t, sec);
  CHECK(noisy.status == KeyStatus::noise_dominated);
  CHECK(noisy.terms.phase_error_clamped);
  CHECK(noisy.length_bits == 0);
  t = base_tally();
  t.n_key = 100;
  t.n_check = 100;
  const auto tiny = secure_key_length(t, sec);
  CHECK(tiny.length_bits == 0);
  CHECK(tiny.status != KeyStatus::ok);
  t = base_tally();
  t.e_key = -0.1;
  CHECK_THROWS_AS(secure_key_length(t, sec), InvalidInput);
  CHECK_THROWS_AS(secure_key_length(base_tally(), SecurityParams{0.0, 1e-12, 1.16}), InvalidInput);
}

TEST_CASE("monotonicity ladders") {
  const SecurityParams sec;
  std::mt19937_64 rng(8);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int trial = 0; trial < 50; ++trial) {
    auto t = base_tally();
    t.e_key = 0.03 * u(rng);
    t.e_check = 0.03 * u(rng);
    t.n_key = std::pow(10.0, 5 + 3 * u(rng));
    t.n_check = t.n_key * (0.01 + 0.5 * u(rng));
    const auto len = [&](const KeyTally& x) { return secure_key_length(x, sec).terms.raw_length; };
    auto up = t;
    up.e_key += 0.01;
    CHECK(len(up) <= len(t));
    up = t;
    up.e_check += 0.01;
    CHECK(len(up) <= len(t));
    up = t;
    up.p_m *= 2;
    CHECK(len(up) <= len(t));
    up = t;
    up.n_key *= 1.5;
    CHECK(len(up) >= len(t));
  }
  auto c = deployed();
  double prev = 1e300;
  for (double loss : {0.0, 2.0, 4.0, 8.0, 12.0}) {
    c.channel = FiberChannel({{{0, 1, 0}, 0.153}}, loss, 3.5, 1309.5);
    const double l = secure_key_length(expected_tally(c, 25200.0), SecurityParams{}).terms.raw_length;
    CHECK(l <= prev);
    prev = l;
  }
}

TEST_CASE("GLLP rate") {
  CHECK(gllp_asymptotic_rate({80e6, 1e-5, 0.0, 0.0, 1.16, 0.5}) == doctest::Approx(80e6 * 1e-5 * 0.5));
  const double thr = gllp_threshold(1.16);
  CHECK(thr == doctest::Approx(0.106).epsilon(0.01));
  CHECK(gllp_asymptotic_rate({80e6, 1e-5, 0.0, thr * 0.99, 1.16, 1.0}) > 0.0);
  CHECK(gllp_asymptotic_rate({80e6, 1e-5, 0.0, thr * 1.01, 1.16, 1.0}) == 0.0);
  CHECK(gllp_asymptotic_rate({80e6, 1e-5, 2e-5, 0.01, 1.16, 1.0}) == 0.0);
  CHECK_THROWS_AS(gllp_asymptotic_rate({80e6, 0.0, 0.0, 0.01, 1.16, 1.0}), InvalidInput);
}

TEST_CASE("rate curve: below GLLP, converging at large blocks, vanishing at high loss") {
  const std::vector<double> losses{0.0, 4.0, 8.0, 12.0, 15.0};
  const auto finite = rate_vs_loss_curve(DeviceParams{}, 0.323, SecurityParams{}, losses, QberModel{}, CurveOptions{});
  for (const auto& p : finite) CHECK(p.finite_bps <= p.gllp_bps);
  CurveOptions big;
  big.n_key_target = 1e10;
  const auto asym = rate_vs_loss_curve(DeviceParams{}, 0.323, SecurityParams{}, losses, QberModel{}, big);
  for (const auto& p : asym) CHECK(p.finite_bps == doctest::Approx(p.gllp_bps).epsilon(0.01));
  const std::vector<double> far{200.0};
  const auto dead = rate_vs_loss_curve(DeviceParams{}, 0.323, SecurityParams{}, far,
                                       QberModel{QberModelKind::signal_dark, 0.02}, CurveOptions{});
  CHECK(dead[0].finite_bps == 0.0);
  CHECK(dead[0].gllp_bps == 0.0);
  std::stringstream ss;
  write_rate_curve_csv(ss, finite);
  std::string header;
  std::getline(ss, header);
  CHECK(header == "loss_db,finite_bps,gllp_bps");
  CHECK_THROWS_AS(rate_vs_loss_curve(DeviceParams{}, 0.323, SecurityParams{}, {}, QberModel{}, CurveOptions{}),
                  InvalidInput);
}

TEST_CASE("reconstructed tally") {
  ObservedSession obs;
  obs.sifted_bps = 1349.6;
  obs.duration_s = 25200;
  obs.qber_da = 0.017;
  obs.qber_lr = 0.083;
  obs.p_key = 0.997;
  const DeviceParams dev;
  const auto t = reconstruct_tally(obs, dev, 0.323);
  CHECK(t.n_key + t.n_check == doctest::Approx(1349.6 * 25200));
  CHECK(t.n_check / t.n_key == doctest::Approx(0.003 / 0.997));
  CHECK(t.e_key == 0.017);
  CHECK(t.e_check == 0.083);
  CHECK(t.p_det == doctest::Approx(1349.6 / 0.5 / 80e6));
  CHECK(t.p_m == doctest::Approx(0.323 * std::pow(4.19e-4 * std::pow(10.0, -0.62), 2) / 2));
  obs.p_key = 0.5;
  const auto bal = reconstruct_tally(obs, dev, 0.323);
  CHECK(bal.e_key == doctest::Approx(0.05));
  CHECK(bal.e_check == doctest::Approx(0.05));
  obs.pool_balanced = false;
  CHECK(reconstruct_tally(obs, dev, 0.323).e_key == 0.017);
  obs.p_key = 1.0;
  CHECK_THROWS_AS(reconstruct_tally(obs, dev, 0.323), InvalidInput);
}

TEST_CASE("optimizer: maximum dominates the audit and beats balanced") {
  const auto res = optimize_basis_probability(deployed(), SecurityParams{}, 25200.0);
  REQUIRE(res.positive);
  CHECK(res.status == "ok");
  for (const auto& p : res.audit) CHECK(res.rate_bps >= p.rate_bps);
  CHECK(res.rate_bps > res.balanced_rate_bps);
  CHECK(res.p_key > 0.9);
  CHECK_FALSE(res.unimodality_violation);
  std::stringstream ss;
  write_optimize_audit_csv(ss, res.audit);
  std::string header;
  std::getline(ss, header);
  CHECK(header == "p_key,rate_bps");
}

TEST_CASE("optimizer: shorter sessions favour more check-basis samples") {
  const auto c = deployed();
  double prev = 1.0;
  for (double T : {25200.0, 3600.0, 600.0, 60.0}) {
    const auto r = optimize_basis_probability(c, SecurityParams{}, T);
    if (!r.positive) continue;
    CHECK(r.p_key <= prev + 1e-6);
    prev = r.p_key;
  }
}

TEST_CASE("optimizer: without fluctuation or multi-photon terms the optimum hits the upper bound") {
  auto c = deployed();
  c.emitter.g2_zero = 0.0;
  OptimizeOptions o;
  o.key.zero_fluctuation = true;
  const auto r = optimize_basis_probability(c, SecurityParams{}, 25200.0, o);
  CHECK(r.p_key == doctest::Approx(o.p_hi).epsilon(1e-6));
}

TEST_CASE("optimizer: no key anywhere is reported") {
  auto c = deployed();
  c.channel = FiberChannel({}, 60.0, 3.5, 1309.5);
  const auto r = optimize_basis_probability(c, SecurityParams{}, 10.0);
  CHECK_FALSE(r.positive);
  CHECK(r.status == "no positive key anywhere");
  CHECK(r.rate_bps == 0.0);
}

TEST_CASE("optimizer on an observed session") {
  ObservedSession obs;
  obs.sifted_bps = 93.3;
  obs.duration_s = 25200;
  obs.qber_da = 0.032;
  obs.qber_lr = 0.032;
  const auto r = optimize_observed_basis_probability(obs, DeviceParams{}, 0.323, SecurityParams{});
  REQUIRE(r.positive);
  for (const auto& p : r.audit) CHECK(r.rate_bps >= p.rate_bps);
  CHECK(r.rate_bps > r.balanced_rate_bps);
}
