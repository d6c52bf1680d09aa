#include <doctest.h>

#include <cmath>
#include <numeric>
#include <sstream>

#include "qkdsim/emitter.hpp"
#include "qkdsim/errors.hpp"
#include "synth.hpp"

using namespace qkdsim;

TEST_CASE("spectrum validation and shapes") {
  CHECK(parse_spectrum_shape("lorentzian") == SpectrumShape::lorentzian);
  CHECK_THROWS_AS(parse_spectrum_shape("voigt"), InvalidInput);
  CHECK_THROWS_AS((EmitterSpectrum{1310.0, 0.0, SpectrumShape::gaussian}.validate()), InvalidInput);
  const EmitterSpectrum g{};
  CHECK(g.support_lo() == doctest::Approx(1309.5 - 21.0));
  CHECK(g.support_hi() == doctest::Approx(1309.5 + 21.0));
  CHECK(g.density(1309.5) > g.density(1312.0));
  CHECK(g.density(1309.5 + 3.5) == doctest::Approx(g.density(1309.5) / 2));
  const EmitterSpectrum r{1310.0, 7.0, SpectrumShape::rectangular};
  CHECK(r.density(1310.0) == doctest::Approx(1.0 / 7.0));
  CHECK(r.density(1314.0) == 0.0);
}

TEST_CASE("spectral quadrature integrates the density") {
  for (auto shape : {SpectrumShape::rectangular, SpectrumShape::gaussian, SpectrumShape::lorentzian}) {
    const EmitterSpectrum s{1309.5, 7.0, shape};
    const auto q = spectral_quadrature(s);
    CHECK(q.weights.size() % 2 == 1);
    CHECK(std::accumulate(q.weights.begin(), q.weights.end(), 0.0) == doctest::Approx(1.0).epsilon(1e-12));
    double mean = 0.0;
    for (std::size_t i = 0; i < q.weights.size(); ++i) mean += q.weights[i] * q.wavelengths_nm[i];
    CHECK(mean == doctest::Approx(1309.5).epsilon(1e-10));
  }
  CHECK(spectral_quadrature(EmitterSpectrum{}, 10).weights.size() >= 201);
}

TEST_CASE("sampled wavelengths follow the line") {
  for (auto shape : {SpectrumShape::rectangular, SpectrumShape::gaussian, SpectrumShape::lorentzian}) {
    const EmitterSpectrum s{1309.5, 7.0, shape};
    auto rng = make_stream(8);
    const int n = 200000;
    double sum = 0.0;
    int inside_half = 0;
    for (int i = 0; i < n; ++i) {
      const double l = sample_wavelength(s, rng);
      REQUIRE(l >= s.support_lo());
      REQUIRE(l <= s.support_hi());
      sum += l;
      if (std::abs(l - 1309.5) <= 3.5) ++inside_half;
    }
    CHECK(sum / n == doctest::Approx(1309.5).epsilon(1e-4));
    // Oracle: mass inside +-FWHM/2 from the quadrature.
    const auto q = spectral_quadrature(s, 4001);
    double mass = 0.0;
    for (std::size_t i = 0; i < q.weights.size(); ++i)
      if (std::abs(q.wavelengths_nm[i] - 1309.5) <= 3.5) mass += q.weights[i];
    CHECK(static_cast<double>(inside_half) / n == doctest::Approx(mass).epsilon(0.02));
  }
}

TEST_CASE("photon statistics") {
  const PhotonStatistics s{0.5, 0.323};
  CHECK(p_multi(s) == doctest::Approx(0.323 * 0.25 / 2));
  CHECK(p_multi(PhotonStatistics{0.5, 0.0}) == 0.0);
  CHECK_THROWS_AS((PhotonStatistics{-0.1, 0.3}.validate()), InvalidInput);
  CHECK_THROWS_AS((PhotonStatistics{0.5, 1.5}.validate()), InvalidInput);
  CHECK_THROWS_AS((PhotonStatistics{3.0, 1.0}.validate()), InvalidInput);
  auto rng = make_stream(1);
  int counts[3] = {0, 0, 0};
  const int n = 1000000;
  for (int i = 0; i < n; ++i) ++counts[sample_photon_number(s, rng)];
  const double p2 = p_multi(s);
  const double p1 = 0.5 - 2 * p2;
  CHECK(std::abs(counts[2] - n * p2) < 4 * std::sqrt(n * p2 * (1 - p2)));
  CHECK(std::abs(counts[1] - n * p1) < 4 * std::sqrt(n * p1 * (1 - p1)));
}

TEST_CASE("three-level model shape") {
  const G2Model m{0.6, 1.5, 20.0, 0.28, 0.0};
  CHECK(g2_three_level(0.0, m) == doctest::Approx(0.28));
  CHECK(g2_three_level(1e4, m) == doctest::Approx(1.0));
  CHECK(g2_three_level(-3.0, m) == g2_three_level(3.0, m));
  CHECK(g2_three_level(8.0, m) > 1.0);
}

TEST_CASE("CW fit recovers a synthetic g2(0)") {
  const G2Model truth{0.5, 1.5, 20.0, 0.28, 0.0};
  const auto hist = synth::cw_histogram(truth, 2000.0, 100.0, 0.25, 17);
  const auto fit = fit_g2_cw(hist);
  CHECK(fit.model.g2_zero == doctest::Approx(0.28).epsilon(0.04 / 0.28));
  CHECK(std::abs(fit.model.g2_zero - 0.28) < 3 * fit.model.uncertainty + 1e-3);
  CHECK(fit.model.uncertainty > 0.0);
  CHECK(fit.scale == doctest::Approx(2000.0).epsilon(0.02));
  CHECK(fit.dof == static_cast<int>(hist.size()) - 5);
  CHECK(fit.chi2 / fit.dof == doctest::Approx(1.0).epsilon(0.2));
}

TEST_CASE("CW fit rejects unusable input") {
  std::vector<HistogramBin> few{{0, 1}, {1, 2}};
  CHECK_THROWS_AS(fit_g2_cw(few), InvalidInput);
  std::vector<HistogramBin> zero;
  for (int i = -20; i <= 20; ++i) zero.push_back({i * 1.0, 0.0});
  CHECK_THROWS_AS(fit_g2_cw(zero), InvalidInput);
}

TEST_CASE("pulsed estimator") {
  SUBCASE("recovers the target at matched statistics") {
    const auto hist = synth::pulsed_histogram(0.323, 2e5, 12.5, 8, 0.05, 0.4, 23);
    const auto g = pulsed_g2(hist, 12.5);
    CHECK(g.g2_zero == doctest::Approx(0.323).epsilon(0.005 / 0.323));
    CHECK(g.side_peaks >= 10);
    CHECK(g.uncertainty < 0.005);
  }
  SUBCASE("noise-free train gives the exact ratio") {
    auto hist = synth::pulsed_histogram(0.5, 1e4, 10.0, 6, 0.05, 0.3, 1);
    for (auto& b : hist) {
      double mean = 0.0;
      for (int k = -7; k <= 7; ++k)
        mean += (k == 0 ? 0.5e4 : 1e4) * 0.05 * std::exp(-std::abs(b.tau_ns - k * 10.0) / 0.3) / 0.6;
      b.counts = mean;
    }
    CHECK(pulsed_g2(hist, 10.0).g2_zero == doctest::Approx(0.5).epsilon(1e-6));
  }
  SUBCASE("input checks") {
    const auto short_hist = synth::pulsed_histogram(0.3, 1e3, 12.5, 3, 0.1, 0.4, 2);
    CHECK_THROWS_AS(pulsed_g2(short_hist, 12.5), InvalidInput);
    CHECK_THROWS_AS(pulsed_g2({}, 12.5), InvalidInput);
    const auto ok = synth::pulsed_histogram(0.3, 1e3, 12.5, 8, 0.1, 0.4, 2);
    CHECK_THROWS_AS(pulsed_g2(ok, 12.5, 7.0), InvalidInput);
    CHECK_THROWS_AS(pulsed_g2(ok, -1.0), InvalidInput);
  }
}

TEST_CASE("histogram CSV round trip and errors") {
  const auto hist = synth::cw_histogram(G2Model{0.3, 1.0, 10.0, 0.2, 0.0}, 50.0, 5.0, 0.5, 4);
  std::stringstream ss;
  write_histogram_csv(ss, hist);
  const auto back = read_histogram_csv(ss);
  REQUIRE(back.size() == hist.size());
  for (std::size_t i = 0; i < hist.size(); ++i) {
    CHECK(back[i].tau_ns == hist[i].tau_ns);
    CHECK(back[i].counts == hist[i].counts);
  }
  std::stringstream empty("");
  CHECK_THROWS_AS(read_histogram_csv(empty), InvalidInput);
  std::stringstream header_only("tau_ns,counts\n");
  CHECK_THROWS_AS(read_histogram_csv(header_only), InvalidInput);
}
