#include "qkdsim/emitter.hpp"

#include <Eigen/Dense>
#include <unsupported/Eigen/LevenbergMarquardt>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <ostream>
#include <sstream>

#include "qkdsim/csv.hpp"
#include "qkdsim/errors.hpp"

namespace qkdsim {

namespace {

constexpr double kTruncationFwhm = 3.0;
const double kFwhmToSigma = 1.0 / (2.0 * std::sqrt(2.0 * std::numbers::ln2));

}  // namespace

SpectrumShape parse_spectrum_shape(std::string_view text) {
  if (text == "rectangular") return SpectrumShape::rectangular;
  if (text == "gaussian") return SpectrumShape::gaussian;
  if (text == "lorentzian") return SpectrumShape::lorentzian;
  throw InvalidInput("unknown spectrum shape '" + std::string(text) + "'");
}

std::string_view to_string(SpectrumShape shape) {
  switch (shape) {
    case SpectrumShape::rectangular: return "rectangular";
    case SpectrumShape::gaussian: return "gaussian";
    case SpectrumShape::lorentzian: return "lorentzian";
  }
  return "?";
}

void EmitterSpectrum::validate() const {
  if (!(fwhm_nm > 0.0) || !std::isfinite(fwhm_nm)) throw InvalidInput("spectrum fwhm must be positive");
  if (!std::isfinite(center_nm) || center_nm <= 0.0) throw InvalidInput("spectrum center must be positive");
}

double EmitterSpectrum::support_lo() const {
  return shape == SpectrumShape::rectangular ? center_nm - fwhm_nm / 2 : center_nm - kTruncationFwhm * fwhm_nm;
}

double EmitterSpectrum::support_hi() const {
  return shape == SpectrumShape::rectangular ? center_nm + fwhm_nm / 2 : center_nm + kTruncationFwhm * fwhm_nm;
}

double EmitterSpectrum::density(double wavelength_nm) const {
  if (wavelength_nm < support_lo() || wavelength_nm > support_hi()) return 0.0;
  const double x = wavelength_nm - center_nm;
  switch (shape) {
    case SpectrumShape::rectangular: return 1.0 / fwhm_nm;
    case SpectrumShape::gaussian: {
      const double sigma = fwhm_nm * kFwhmToSigma;
      const double mass = std::erf(kTruncationFwhm * fwhm_nm / (sigma * std::numbers::sqrt2));
      return std::exp(-0.5 * x * x / (sigma * sigma)) / (sigma * std::sqrt(2.0 * std::numbers::pi) * mass);
    }
    case SpectrumShape::lorentzian: {
      const double gamma = fwhm_nm / 2;
      const double mass = 2.0 / std::numbers::pi * std::atan(kTruncationFwhm * fwhm_nm / gamma);
      return gamma / (std::numbers::pi * (x * x + gamma * gamma)) / mass;
    }
  }
  return 0.0;
}

SpectralQuadrature spectral_quadrature(const EmitterSpectrum& spectrum, int n_nodes) {
  spectrum.validate();
  n_nodes = std::max(n_nodes, 201);
  if (n_nodes % 2 == 0) ++n_nodes;
  const double lo = spectrum.support_lo();
  const double hi = spectrum.support_hi();
  const double h = (hi - lo) / (n_nodes - 1);
  SpectralQuadrature q;
  q.wavelengths_nm.resize(n_nodes);
  q.weights.resize(n_nodes);
  double total = 0.0;
  for (int i = 0; i < n_nodes; ++i) {
    const double lambda = lo + i * h;
    const double simpson = (i == 0 || i == n_nodes - 1) ? 1.0 : (i % 2 ? 4.0 : 2.0);
    q.wavelengths_nm[i] = lambda;
    q.weights[i] = simpson * h / 3.0 * spectrum.density(lambda);
    total += q.weights[i];
  }
  for (auto& w : q.weights) w /= total;
  return q;
}

double sample_wavelength(const EmitterSpectrum& spectrum, Rng& rng) {
  spectrum.validate();
  switch (spectrum.shape) {
    case SpectrumShape::rectangular:
      return spectrum.support_lo() + spectrum.fwhm_nm * uniform01(rng);
    case SpectrumShape::gaussian: {
      std::normal_distribution<double> normal(spectrum.center_nm, spectrum.fwhm_nm * kFwhmToSigma);
      while (true) {
        const double x = normal(rng);
        if (x >= spectrum.support_lo() && x <= spectrum.support_hi()) return x;
      }
    }
    case SpectrumShape::lorentzian: {
      const double gamma = spectrum.fwhm_nm / 2;
      const double edge = std::atan(kTruncationFwhm * spectrum.fwhm_nm / gamma);
      const double u = 2.0 * uniform01(rng) - 1.0;
      return spectrum.center_nm + gamma * std::tan(u * edge);
    }
  }
  return spectrum.center_nm;
}

void PhotonStatistics::validate() const {
  if (!(mu >= 0.0) || !std::isfinite(mu)) throw InvalidInput("mean photon number must be >= 0");
  if (!(g2_zero >= 0.0 && g2_zero <= 1.0)) throw InvalidInput("g2(0) must lie in [0, 1]");
  const double pm = p_multi(*this);
  if (mu - 2.0 * pm < 0.0) throw InvalidInput("inconsistent photon statistics: mu - 2 p_multi < 0");
  if (1.0 - mu + pm < 0.0) throw InvalidInput("inconsistent photon statistics: vacuum probability < 0");
}

double p_multi(const PhotonStatistics& stats) { return stats.g2_zero * stats.mu * stats.mu / 2.0; }

int sample_photon_number(const PhotonStatistics& stats, Rng& rng) {
  stats.validate();
  const double p2 = p_multi(stats);
  const double p1 = stats.mu - 2.0 * p2;
  const double u = uniform01(rng);
  if (u < p2) return 2;
  if (u < p2 + p1) return 1;
  return 0;
}

double g2_three_level(double tau_ns, const G2Model& m) {
  const double t = std::abs(tau_ns);
  return 1.0 - (1.0 + m.a - m.g2_zero) * std::exp(-t / m.tau1_ns) + m.a * std::exp(-t / m.tau2_ns);
}

namespace {

// Parameters: scale, g2_zero, a, ln tau1, ln tau2.
struct G2Residuals : Eigen::DenseFunctor<double> {
  std::span<const HistogramBin> bins;
  std::vector<double> inv_sigma;

  explicit G2Residuals(std::span<const HistogramBin> h)
      : Eigen::DenseFunctor<double>(5, static_cast<int>(h.size())), bins(h) {
    inv_sigma.reserve(h.size());
    for (const auto& b : h) inv_sigma.push_back(1.0 / std::sqrt(std::max(b.counts, 1.0)));
  }

  int operator()(const InputType& x, ValueType& f) const {
    const G2Model m{x[2], std::exp(x[3]), std::exp(x[4]), x[1], 0.0};
    for (std::size_t i = 0; i < bins.size(); ++i)
      f[i] = (x[0] * g2_three_level(bins[i].tau_ns, m) - bins[i].counts) * inv_sigma[i];
    return 0;
  }

  int df(const InputType& x, JacobianType& j) const {
    const double tau1 = std::exp(x[3]);
    const double tau2 = std::exp(x[4]);
    const double b = 1.0 + x[2] - x[1];
    for (std::size_t i = 0; i < bins.size(); ++i) {
      const double t = std::abs(bins[i].tau_ns);
      const double e1 = std::exp(-t / tau1);
      const double e2 = std::exp(-t / tau2);
      const double g = 1.0 - b * e1 + x[2] * e2;
      const double w = inv_sigma[i];
      j(i, 0) = g * w;
      j(i, 1) = x[0] * e1 * w;
      j(i, 2) = x[0] * (e2 - e1) * w;
      j(i, 3) = -x[0] * b * e1 * (t / tau1) * w;
      j(i, 4) = x[0] * x[2] * e2 * (t / tau2) * w;
    }
    return 0;
  }
};

std::string status_name(Eigen::LevenbergMarquardtSpace::Status s) {
  using namespace Eigen::LevenbergMarquardtSpace;
  switch (s) {
    case NotStarted: return "not_started";
    case Running: return "running";
    case ImproperInputParameters: return "improper_input_parameters";
    case RelativeReductionTooSmall: return "relative_reduction_too_small";
    case RelativeErrorTooSmall: return "relative_error_too_small";
    case RelativeErrorAndReductionTooSmall: return "relative_error_and_reduction_too_small";
    case CosinusTooSmall: return "cosinus_too_small";
    case TooManyFunctionEvaluation: return "too_many_function_evaluations";
    case FtolTooSmall: return "ftol_too_small";
    case XtolTooSmall: return "xtol_too_small";
    case GtolTooSmall: return "gtol_too_small";
    case UserAsked: return "user_asked";
  }
  return "unknown";
}

}  // namespace

G2Fit fit_g2_cw(std::span<const HistogramBin> histogram) {
  if (histogram.size() < 10) throw InvalidInput("CW g2 fit needs at least 10 histogram bins");
  double max_abs_tau = 0.0;
  double total = 0.0;
  for (const auto& b : histogram) {
    if (!(b.counts >= 0.0) || !std::isfinite(b.tau_ns)) throw InvalidInput("histogram counts must be >= 0");
    max_abs_tau = std::max(max_abs_tau, std::abs(b.tau_ns));
    total += b.counts;
  }
  if (max_abs_tau <= 0.0) throw InvalidInput("histogram must span nonzero delays");
  if (total <= 0.0) throw InvalidInput("histogram contains no coincidences");

  // Initial guess: scale from the outer fifth of the delay range, floor from the bins
  // nearest zero delay, tau1 from the half-recovery point.
  std::vector<HistogramBin> sorted(histogram.begin(), histogram.end());
  std::sort(sorted.begin(), sorted.end(),
            [](const HistogramBin& l, const HistogramBin& r) { return std::abs(l.tau_ns) < std::abs(r.tau_ns); });
  double outer = 0.0;
  int n_outer = 0;
  for (const auto& b : sorted) {
    if (std::abs(b.tau_ns) >= 0.8 * max_abs_tau) {
      outer += b.counts;
      ++n_outer;
    }
  }
  const double scale0 = std::max(outer / std::max(n_outer, 1), 1e-12);
  const std::size_t n_inner = std::min<std::size_t>(3, sorted.size());
  double inner = 0.0;
  for (std::size_t i = 0; i < n_inner; ++i) inner += sorted[i].counts;
  const double floor0 = std::clamp(inner / n_inner / scale0, 0.0, 1.0);
  double tau1_0 = max_abs_tau / 20;
  for (const auto& b : sorted) {
    if (b.counts / scale0 >= 0.5 * (1.0 + floor0) && std::abs(b.tau_ns) > 0.0) {
      tau1_0 = std::abs(b.tau_ns) / std::numbers::ln2;
      break;
    }
  }
  double peak = 0.0;
  for (const auto& b : sorted) peak = std::max(peak, b.counts / scale0);
  const double a0 = std::max(peak - 1.0, 0.05);
  const double tau2_0 = std::max(10.0 * tau1_0, max_abs_tau / 5);

  Eigen::VectorXd x(5);
  x << scale0, floor0, a0, std::log(tau1_0), std::log(tau2_0);
  G2Residuals functor(histogram);
  Eigen::LevenbergMarquardt<G2Residuals> lm(functor);
  lm.setMaxfev(4000);
  const auto status = lm.minimize(x);

  using namespace Eigen::LevenbergMarquardtSpace;
  const bool converged = status == RelativeReductionTooSmall || status == RelativeErrorTooSmall ||
                         status == RelativeErrorAndReductionTooSmall || status == CosinusTooSmall ||
                         status == FtolTooSmall || status == XtolTooSmall || status == GtolTooSmall;
  std::ostringstream diag;
  diag << "status=" << status_name(status) << " iterations=" << lm.iterations() << " nfev=" << lm.nfev()
       << " params=[" << x.transpose() << "]";
  if (!converged || !x.allFinite()) throw ConvergenceError("CW g2 fit did not converge", diag.str());

  Eigen::MatrixXd jac(functor.values(), 5);
  functor.df(x, jac);
  Eigen::VectorXd resid(functor.values());
  functor(x, resid);
  // Pseudo-inverse handles the unidentifiable lifetimes of a flat histogram.
  const Eigen::MatrixXd cov = (jac.transpose() * jac).completeOrthogonalDecomposition().pseudoInverse();

  G2Fit fit;
  fit.scale = x[0];
  fit.model = G2Model{x[2], std::exp(x[3]), std::exp(x[4]), x[1], std::sqrt(std::max(cov(1, 1), 0.0))};
  fit.scale_sigma = std::sqrt(std::max(cov(0, 0), 0.0));
  fit.a_sigma = std::sqrt(std::max(cov(2, 2), 0.0));
  fit.tau1_sigma_ns = fit.model.tau1_ns * std::sqrt(std::max(cov(3, 3), 0.0));
  fit.tau2_sigma_ns = fit.model.tau2_ns * std::sqrt(std::max(cov(4, 4), 0.0));
  fit.chi2 = resid.squaredNorm();
  fit.dof = functor.values() - 5;
  fit.iterations = static_cast<int>(lm.iterations());
  fit.solver_status = status_name(status);
  return fit;
}

PulsedG2 pulsed_g2(std::span<const HistogramBin> histogram, double rep_period_ns, double half_window_ns) {
  if (!(rep_period_ns > 0.0)) throw InvalidInput("repetition period must be positive");
  if (half_window_ns < 0.0) half_window_ns = rep_period_ns / 2;
  if (half_window_ns > rep_period_ns / 2) throw InvalidInput("peak window wider than the repetition period");
  if (histogram.empty()) throw InvalidInput("empty histogram");

  double lo = histogram.front().tau_ns;
  double hi = lo;
  for (const auto& b : histogram) {
    if (!(b.counts >= 0.0)) throw InvalidInput("histogram counts must be >= 0");
    lo = std::min(lo, b.tau_ns);
    hi = std::max(hi, b.tau_ns);
  }
  // Peak k is usable when its whole window lies inside the histogram range.
  const auto covered = [&](int k) {
    return k * rep_period_ns - half_window_ns >= lo - 1e-9 * rep_period_ns &&
           k * rep_period_ns + half_window_ns <= hi + 1e-9 * rep_period_ns;
  };
  int k_neg = 0;
  while (covered(-(k_neg + 1))) ++k_neg;
  int k_pos = 0;
  while (covered(k_pos + 1)) ++k_pos;
  if (k_neg < 5 || k_pos < 5) {
    throw InvalidInput("pulsed g2 needs at least 5 side peaks on each side (found " + std::to_string(k_neg) + " and " +
                       std::to_string(k_pos) + ")");
  }

  std::vector<double> area(k_neg + k_pos + 1, 0.0);
  for (const auto& b : histogram) {
    const int k = static_cast<int>(std::lround(b.tau_ns / rep_period_ns));
    if (k < -k_neg || k > k_pos) continue;
    const double offset = b.tau_ns - k * rep_period_ns;
    // Half-open window so that a half-period window partitions the bins.
    if (offset >= -half_window_ns && offset < half_window_ns) area[k + k_neg] += b.counts;
  }
  PulsedG2 out;
  out.central_counts = area[k_neg];
  double side_total = 0.0;
  for (int i = 0; i < static_cast<int>(area.size()); ++i)
    if (i != k_neg) side_total += area[i];
  out.side_peaks = k_neg + k_pos;
  out.side_mean = side_total / out.side_peaks;
  if (out.side_mean <= 0.0) throw InvalidInput("side peaks contain no counts");
  out.g2_zero = out.central_counts / out.side_mean;
  // Poisson errors on the central area and on the summed side areas.
  // An empty central peak is given the one-count upper scale.
  if (out.central_counts > 0.0)
    out.uncertainty = out.g2_zero * std::sqrt(1.0 / out.central_counts + 1.0 / side_total);
  else
    out.uncertainty = 1.0 / out.side_mean;
  return out;
}

std::vector<HistogramBin> read_histogram_csv(std::istream& in) {
  const auto rows = csv::read_numeric(in, {"tau_ns", "counts"});
  if (rows.empty()) throw InvalidInput("histogram has a header but no data rows");
  std::vector<HistogramBin> out;
  out.reserve(rows.size());
  for (const auto& r : rows) out.push_back({r[0], r[1]});
  return out;
}

void write_histogram_csv(std::ostream& out, std::span<const HistogramBin> histogram) {
  out << "tau_ns,counts\n";
  for (const auto& b : histogram) out << csv::format(b.tau_ns) << ',' << csv::format(b.counts) << '\n';
}

}  // namespace qkdsim
