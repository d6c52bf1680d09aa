#pragma once

#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "qkdsim/rng.hpp"

namespace qkdsim {

enum class SpectrumShape { rectangular, gaussian, lorentzian };

SpectrumShape parse_spectrum_shape(std::string_view text);
std::string_view to_string(SpectrumShape shape);

/// Emission line. Gaussian and Lorentzian lines are truncated at +-3 FWHM and
/// renormalized over that support.
struct EmitterSpectrum {
  double center_nm = 1309.5;
  double fwhm_nm = 7.0;
  SpectrumShape shape = SpectrumShape::gaussian;

  void validate() const;
  double support_lo() const;
  double support_hi() const;
  /// Normalized density over [support_lo, support_hi], 1/nm.
  double density(double wavelength_nm) const;
};

/// Weighted wavelength nodes over the spectral support. Weights sum to one.
struct SpectralQuadrature {
  std::vector<double> wavelengths_nm;
  std::vector<double> weights;
};

inline constexpr int kDefaultSpectralNodes = 401;

/// Composite Simpson rule with `n_nodes` points (forced odd, at least 201).
SpectralQuadrature spectral_quadrature(const EmitterSpectrum& spectrum, int n_nodes = kDefaultSpectralNodes);

double sample_wavelength(const EmitterSpectrum& spectrum, Rng& rng);

/// Per-pulse photon statistics at the source.
struct PhotonStatistics {
  double mu = 0.0;
  double g2_zero = 0.0;

  void validate() const;
};

/// Multi-photon probability per pulse, g2(0) mu^2 / 2.
double p_multi(const PhotonStatistics& stats);

/// Photon number truncated at two: P(2) = p_multi, P(1) = mu - 2 p_multi.
int sample_photon_number(const PhotonStatistics& stats, Rng& rng);

/// Three-level correlation model with a residual floor:
///   g2(t) = 1 - (1 + a - g2_zero) exp(-|t|/tau1) + a exp(-|t|/tau2)
/// so that g2(0) = g2_zero and g2 -> 1 for |t| -> inf.
struct G2Model {
  double a = 0.0;
  double tau1_ns = 1.0;
  double tau2_ns = 10.0;
  double g2_zero = 0.0;
  double uncertainty = 0.0;
};

double g2_three_level(double tau_ns, const G2Model& model);

struct HistogramBin {
  double tau_ns;
  double counts;
};

/// Result of a CW fit. `scale` is the coincidence level of uncorrelated light.
struct G2Fit {
  G2Model model;
  double scale = 0.0;
  double scale_sigma = 0.0;
  double a_sigma = 0.0;
  double tau1_sigma_ns = 0.0;
  double tau2_sigma_ns = 0.0;
  double chi2 = 0.0;
  int dof = 0;
  int iterations = 0;
  std::string solver_status;
};

/// Poisson-weighted nonlinear least squares of scale * g2_three_level.
/// Throws ConvergenceError (with solver diagnostics) if the solver does not converge.
G2Fit fit_g2_cw(std::span<const HistogramBin> histogram);

struct PulsedG2 {
  double g2_zero = 0.0;
  double uncertainty = 0.0;
  double central_counts = 0.0;
  double side_mean = 0.0;
  int side_peaks = 0;
};

/// Ratio of the central peak area to the mean side-peak area. `half_window_ns` defaults
/// to rep_period/2 (a negative value selects the default). Requires at least five fully
/// covered side peaks on each side.
PulsedG2 pulsed_g2(std::span<const HistogramBin> histogram, double rep_period_ns, double half_window_ns = -1.0);

/// CSV with header `tau_ns,counts`. Throws InvalidInput with the offending line number.
std::vector<HistogramBin> read_histogram_csv(std::istream& in);
void write_histogram_csv(std::ostream& out, std::span<const HistogramBin> histogram);

}  // namespace qkdsim
