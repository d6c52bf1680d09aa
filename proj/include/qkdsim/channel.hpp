#pragma once

#include <cstdint>
#include <iosfwd>
#include <span>
#include <vector>

#include "qkdsim/emitter.hpp"
#include "qkdsim/polarization.hpp"

namespace qkdsim {

/// Speed of light in nm/ps, so 2*pi*c/lambda[nm] is an angular frequency in rad/ps.
inline constexpr double kSpeedOfLightNmPerPs = 299792.458;

/// First-order PMD vector. The axis points toward the slower principal state.
struct PmdVector {
  StokesVector axis;
  double dgd_ps = 0.0;
};

/// One birefringent section: rotation about `axis` at rate `dgd_ps` per rad/ps of detuning.
struct FiberSegment {
  StokesVector axis;
  double dgd_ps = 0.0;
};

/// Lossy birefringent fiber. The frequency-independent part of the transformation is
/// normalized to identity at `reference_nm`, so only dispersion changes the state.
class FiberChannel {
 public:
  FiberChannel(std::vector<FiberSegment> segments, double loss_db, double length_km, double reference_nm = 1310.0);

  const std::vector<FiberSegment>& segments() const { return segments_; }
  double loss_db() const { return loss_db_; }
  double length_km() const { return length_km_; }
  double reference_nm() const { return reference_nm_; }

  double transmittance() const;
  /// PMD vector at the reference wavelength. Static rotations are identity there, so this is
  /// the vector sum of the segment contributions.
  PmdVector first_order_pmd() const;

  /// Appends `next` after this channel. Losses and lengths add; reference wavelengths must match.
  FiberChannel then(const FiberChannel& next) const;

 private:
  std::vector<FiberSegment> segments_;
  double loss_db_;
  double length_km_;
  double reference_nm_;
};

/// 2*pi*c (1/lambda - 1/reference) in rad/ps. Both wavelengths must lie in (1000, 1700) nm.
double delta_omega(double wavelength_nm, double reference_nm);

/// Rotates `state` through every segment in order, each by dgd * delta_omega(wavelength).
StokesVector apply_channel(const StokesVector& state, const FiberChannel& channel, double wavelength_nm);

struct TrajectoryPoint {
  double wavelength_nm;
  StokesVector stokes;
};

std::vector<TrajectoryPoint> sweep_trajectory(const FiberChannel& channel, const StokesVector& state,
                                              double start_nm, double end_nm, int n_points);

/// Circle-on-sphere fit of a polarization trajectory.
///
/// `axis` is the rotation axis of the fitted circle, oriented so that increasing optical
/// frequency is a right-hand rotation (matching the segment axis convention).
/// `angular_radius` is the circle's polar angle from the axis. `rotation_angle` is the
/// swept angle about the axis; `central_angle` is the arc subtended at the sphere centre,
/// rotation_angle * sin(angular_radius). `residual` is the RMS great-circle distance of
/// the points from the circle. All angles in radians.
struct ArcFit {
  StokesVector axis;
  double angular_radius = 0.0;
  double rotation_angle = 0.0;
  double central_angle = 0.0;
  double residual = 0.0;
  bool degenerate = false;
};

ArcFit fit_arc(std::span<const TrajectoryPoint> points);

/// Inverts delta_theta = |tau| delta_omega for an angle swept over `span_nm` centred on `center_nm`.
double estimate_dgd(double angle_rad, double span_nm, double center_nm);

/// DGD normalized by sqrt(length), ps/sqrt(km).
double pmd_parameter(double dgd_ps, double length_km);

/// Spectrally averaged error probability of `state` after the channel, relative to its
/// image at the reference wavelength.
double qber_from_pmd(const StokesVector& state, const FiberChannel& channel, const EmitterSpectrum& spectrum,
                     int n_nodes = kDefaultSpectralNodes);

/// Random-waveplate fiber: `n_segments` sections with uniformly random axes, each with
/// dgd pmd_param*sqrt(length)/sqrt(n), so that the ensemble RMS of the total DGD is
/// pmd_param*sqrt(length). Deterministic for a given seed.
FiberChannel synthesize_channel(double pmd_param, double length_km, int n_segments, std::uint64_t seed,
                                double loss_db = 0.0, double reference_nm = 1310.0);

/// CSV columns wavelength_nm,s1,s2,s3.
void write_trajectory_csv(std::ostream& out, std::span<const TrajectoryPoint> points);
std::vector<TrajectoryPoint> read_trajectory_csv(std::istream& in);

}  // namespace qkdsim
