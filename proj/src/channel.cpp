#include "qkdsim/channel.hpp"

#include <Eigen/Dense>
#include <unsupported/Eigen/LevenbergMarquardt>
#include <unsupported/Eigen/NumericalDiff>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <ostream>

#include "qkdsim/csv.hpp"
#include "qkdsim/errors.hpp"
#include "qkdsim/rng.hpp"

namespace qkdsim {

FiberChannel::FiberChannel(std::vector<FiberSegment> segments, double loss_db, double length_km, double reference_nm)
    : segments_(std::move(segments)), loss_db_(loss_db), length_km_(length_km), reference_nm_(reference_nm) {
  if (!(loss_db_ >= 0.0) || !std::isfinite(loss_db_)) throw InvalidInput("channel loss_db must be >= 0");
  if (!(length_km_ > 0.0)) throw InvalidInput("channel length_km must be > 0");
  if (!(reference_nm_ > 1000.0 && reference_nm_ < 1700.0))
    throw InvalidInput("channel reference wavelength must lie in (1000, 1700) nm");
  for (std::size_t i = 0; i < segments_.size(); ++i) {
    if (!is_unit(segments_[i].axis))
      throw InvalidInput("segment " + std::to_string(i) + ": axis must be a unit Stokes vector");
    if (!(segments_[i].dgd_ps >= 0.0)) throw InvalidInput("segment " + std::to_string(i) + ": dgd must be >= 0");
  }
}

double FiberChannel::transmittance() const { return std::pow(10.0, -loss_db_ / 10.0); }

PmdVector FiberChannel::first_order_pmd() const {
  StokesVector sum{0, 0, 0};
  for (const auto& s : segments_) sum = sum + s.axis * s.dgd_ps;
  const double dgd = sum.norm();
  if (dgd == 0.0) return {StokesVector{1, 0, 0}, 0.0};
  return {sum * (1.0 / dgd), dgd};
}

FiberChannel FiberChannel::then(const FiberChannel& next) const {
  if (next.reference_nm_ != reference_nm_) throw InvalidInput("cannot concatenate channels with different references");
  auto segs = segments_;
  segs.insert(segs.end(), next.segments_.begin(), next.segments_.end());
  return FiberChannel(std::move(segs), loss_db_ + next.loss_db_, length_km_ + next.length_km_, reference_nm_);
}

double delta_omega(double wavelength_nm, double reference_nm) {
  const auto in_band = [](double l) { return l > 1000.0 && l < 1700.0; };
  if (!in_band(wavelength_nm) || !in_band(reference_nm))
    throw InvalidInput("wavelength outside the (1000, 1700) nm band");
  return 2.0 * std::numbers::pi * kSpeedOfLightNmPerPs * (1.0 / wavelength_nm - 1.0 / reference_nm);
}

StokesVector apply_channel(const StokesVector& state, const FiberChannel& channel, double wavelength_nm) {
  const double dw = delta_omega(wavelength_nm, channel.reference_nm());
  StokesVector s = state;
  for (const auto& seg : channel.segments()) s = rotate(s, seg.axis, seg.dgd_ps * dw);
  return s;
}

std::vector<TrajectoryPoint> sweep_trajectory(const FiberChannel& channel, const StokesVector& state,
                                              double start_nm, double end_nm, int n_points) {
  if (n_points < 2) throw InvalidInput("sweep needs at least 2 points");
  if (!(start_nm != end_nm)) throw InvalidInput("sweep wavelength range is empty");
  std::vector<TrajectoryPoint> out;
  out.reserve(n_points);
  for (int i = 0; i < n_points; ++i) {
    const double lambda = start_nm + (end_nm - start_nm) * i / (n_points - 1);
    out.push_back({lambda, apply_channel(state, channel, lambda)});
  }
  return out;
}

namespace {

Eigen::Vector3d to_eigen(const StokesVector& s) { return {s.s1, s.s2, s.s3}; }
StokesVector to_stokes(const Eigen::Vector3d& v) { return {v[0], v[1], v[2]}; }

double polar_angle(const Eigen::Vector3d& n, const Eigen::Vector3d& p) { return std::atan2(n.cross(p).norm(), n.dot(p)); }

// Angular residuals of a circle (axis n0 + u e1 + v e2, polar radius rho).
struct SphereCircleResiduals : Eigen::DenseFunctor<double> {
  std::vector<Eigen::Vector3d> pts;
  Eigen::Vector3d n0, e1, e2;

  SphereCircleResiduals(std::vector<Eigen::Vector3d> p, Eigen::Vector3d n, Eigen::Vector3d a, Eigen::Vector3d b)
      : Eigen::DenseFunctor<double>(3, static_cast<int>(p.size())), pts(std::move(p)), n0(n), e1(a), e2(b) {}

  Eigen::Vector3d axis(const InputType& x) const { return (n0 + x[0] * e1 + x[1] * e2).normalized(); }

  int operator()(const InputType& x, ValueType& f) const {
    const Eigen::Vector3d n = axis(x);
    for (std::size_t i = 0; i < pts.size(); ++i) f[i] = polar_angle(n, pts[i]) - x[2];
    return 0;
  }
};

Eigen::Vector3d any_perpendicular(const Eigen::Vector3d& n) {
  const Eigen::Vector3d trial = std::abs(n[0]) < 0.9 ? Eigen::Vector3d::UnitX() : Eigen::Vector3d::UnitY();
  return (trial - trial.dot(n) * n).normalized();
}

}  // namespace

ArcFit fit_arc(std::span<const TrajectoryPoint> points) {
  if (points.size() < 3) throw InvalidInput("arc fit needs at least 3 points");
  std::vector<Eigen::Vector3d> pts;
  pts.reserve(points.size());
  for (const auto& p : points) {
    if (!is_unit(p.stokes, 1e-6)) throw InvalidInput("trajectory points must be unit Stokes vectors");
    pts.push_back(to_eigen(p.stokes).normalized());
  }

  ArcFit fit;
  double spread = 0.0;
  for (const auto& p : pts) spread = std::max(spread, polar_angle(pts.front(), p));
  if (spread < 1e-12) {
    fit.axis = to_stokes(pts.front());
    fit.degenerate = true;
    return fit;
  }

  // Plane fit: the circle's plane normal is the least-variance direction of the points.
  Eigen::Vector3d mean = Eigen::Vector3d::Zero();
  for (const auto& p : pts) mean += p;
  mean /= static_cast<double>(pts.size());
  Eigen::Matrix3d cov = Eigen::Matrix3d::Zero();
  for (const auto& p : pts) cov += (p - mean) * (p - mean).transpose();
  Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d> eig(cov);
  if (eig.eigenvalues()[1] < 1e-20 * std::max(eig.eigenvalues()[2], 1e-300)) {
    // Only two distinct directions: any circle through them fits.
    fit.axis = to_stokes(pts.front());
    fit.degenerate = true;
    return fit;
  }
  Eigen::Vector3d n0 = eig.eigenvectors().col(0);
  if (n0.dot(mean) < 0.0) n0 = -n0;

  const Eigen::Vector3d e1 = any_perpendicular(n0);
  const Eigen::Vector3d e2 = n0.cross(e1);
  double rho0 = 0.0;
  for (const auto& p : pts) rho0 += polar_angle(n0, p);
  rho0 /= static_cast<double>(pts.size());

  SphereCircleResiduals base(pts, n0, e1, e2);
  Eigen::NumericalDiff<SphereCircleResiduals, Eigen::Central> functor(base);
  Eigen::LevenbergMarquardt<decltype(functor)> lm(functor);
  lm.setXtol(1e-14);
  lm.setFtol(1e-14);
  Eigen::VectorXd x(3);
  x << 0.0, 0.0, rho0;
  lm.minimize(x);

  Eigen::Vector3d n = base.axis(x);
  double rho = x[2];
  if (!n.allFinite()) {
    n = n0;
    rho = rho0;
  }

  // Angular position of each point about the axis, unwrapped in input order.
  const Eigen::Vector3d u1 = any_perpendicular(n);
  const Eigen::Vector3d u2 = n.cross(u1);
  std::vector<double> psi;
  psi.reserve(pts.size());
  for (const auto& p : pts) {
    double a = std::atan2(p.dot(u2), p.dot(u1));
    if (!psi.empty()) {
      const double prev = psi.back();
      a = prev + std::remainder(a - prev, 2.0 * std::numbers::pi);
    }
    psi.push_back(a);
  }

  // Increasing optical frequency (decreasing wavelength) must be a positive rotation.
  const double d_inv_lambda = 1.0 / points.back().wavelength_nm - 1.0 / points.front().wavelength_nm;
  const double sweep = psi.back() - psi.front();
  if (d_inv_lambda * sweep < 0.0) {
    n = -n;
    rho = std::numbers::pi - rho;
  }

  double ss = 0.0;
  for (const auto& p : pts) {
    const double r = polar_angle(n, p) - rho;
    ss += r * r;
  }
  const auto [lo, hi] = std::minmax_element(psi.begin(), psi.end());
  fit.axis = to_stokes(n);
  fit.angular_radius = rho;
  fit.rotation_angle = *hi - *lo;
  fit.central_angle = fit.rotation_angle * std::sin(rho);
  fit.residual = std::sqrt(ss / static_cast<double>(pts.size()));
  return fit;
}

double estimate_dgd(double angle_rad, double span_nm, double center_nm) {
  if (!(span_nm > 0.0)) throw InvalidInput("wavelength span must be positive");
  const double dw = std::abs(delta_omega(center_nm - span_nm / 2, center_nm + span_nm / 2));
  return std::abs(angle_rad) / dw;
}

double pmd_parameter(double dgd_ps, double length_km) {
  if (!(length_km > 0.0)) throw InvalidInput("length must be positive");
  return dgd_ps / std::sqrt(length_km);
}

double qber_from_pmd(const StokesVector& state, const FiberChannel& channel, const EmitterSpectrum& spectrum,
                     int n_nodes) {
  const auto quad = spectral_quadrature(spectrum, n_nodes);
  const StokesVector reference = apply_channel(state, channel, channel.reference_nm());
  double e = 0.0;
  for (std::size_t i = 0; i < quad.weights.size(); ++i)
    e += quad.weights[i] * misalignment_error(apply_channel(state, channel, quad.wavelengths_nm[i]), reference);
  return e;
}

FiberChannel synthesize_channel(double pmd_param, double length_km, int n_segments, std::uint64_t seed,
                                double loss_db, double reference_nm) {
  if (n_segments < 1) throw InvalidInput("n_segments must be >= 1");
  if (!(pmd_param >= 0.0)) throw InvalidInput("pmd parameter must be >= 0");
  if (!(length_km > 0.0)) throw InvalidInput("length must be positive");
  Rng rng = make_stream(seed);
  const double dgd = pmd_param * std::sqrt(length_km) / std::sqrt(static_cast<double>(n_segments));
  std::vector<FiberSegment> segs;
  segs.reserve(n_segments);
  for (int i = 0; i < n_segments; ++i) {
    const double z = 2.0 * uniform01(rng) - 1.0;
    const double phi = 2.0 * std::numbers::pi * uniform01(rng);
    const double r = std::sqrt(std::max(0.0, 1.0 - z * z));
    segs.push_back({StokesVector{r * std::cos(phi), r * std::sin(phi), z}.normalized(), dgd});
  }
  return FiberChannel(std::move(segs), loss_db, length_km, reference_nm);
}

void write_trajectory_csv(std::ostream& out, std::span<const TrajectoryPoint> points) {
  out << "wavelength_nm,s1,s2,s3\n";
  for (const auto& p : points) {
    out << csv::format(p.wavelength_nm) << ',' << csv::format(p.stokes.s1) << ',' << csv::format(p.stokes.s2) << ','
        << csv::format(p.stokes.s3) << '\n';
  }
}

std::vector<TrajectoryPoint> read_trajectory_csv(std::istream& in) {
  const auto rows = csv::read_numeric(in, {"wavelength_nm", "s1", "s2", "s3"});
  std::vector<TrajectoryPoint> out;
  out.reserve(rows.size());
  for (const auto& r : rows) out.push_back({r[0], StokesVector{r[1], r[2], r[3]}});
  return out;
}

}  // namespace qkdsim
