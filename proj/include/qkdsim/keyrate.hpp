#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "qkdsim/protocol.hpp"

namespace qkdsim {

struct SecurityParams {
  double eps_sec = 1e-12;
  double eps_cor = 1e-12;
  double f_ec = 1.16;  ///< error-correction inefficiency

  void validate() const;
};

/// Everything the finite-key bound needs. Counts are doubles so that expected
/// (fractional) counts from the analytic model can be used directly.
struct KeyTally {
  double n_key = 0.0;
  double n_check = 0.0;
  double e_key = 0.0;
  double e_check = 0.0;
  double p_key = 0.5;
  double p_check = 0.5;
  double p_det = 0.0;
  double p_m = 0.0;
};

enum class KeyStatus { ok, no_counts, multi_photon_dominated, noise_dominated, negative_length };

std::string_view to_string(KeyStatus status);

struct KeyTerms {
  double a_key = 0.0;
  double a_check = 0.0;
  double q_check = 0.0;
  double delta = 0.0;
  double leak_ec = 0.0;
  double log_term = 0.0;
  double raw_length = 0.0;
  bool phase_error_clamped = false;  ///< Q_check + delta reached 1/2
};

struct KeyResult {
  std::int64_t length_bits = 0;
  double rate_bps = 0.0;  ///< length / duration, 0 when no duration is given
  KeyStatus status = KeyStatus::ok;
  KeyTerms terms;
};

struct KeyOptions {
  bool zero_fluctuation = false;  ///< force delta = 0 (asymptotic studies)
};

/// h(q) in bits, with h(0) = h(1) = 0.
double binary_entropy(double q);

/// 1 - p_m / (p_det p_basis). Negative values mean the basis cannot yield key.
double multiphoton_correction(double p_m, double p_det, double p_basis);

/// Statistical fluctuation of the phase error estimate:
///   sqrt((n_key + n_check)(n_check + 1) / (n_key n_check^2) * ln(2/eps_sec)).
double fluctuation_delta(double n_key, double n_check, double eps_sec);

/// f h(e_key) n_key.
double ec_leakage(double f_ec, double e_key, double n_key);

/// log2(2 / (eps_sec^2 eps_cor)).
double security_log_term(double eps_sec, double eps_cor);

/// l = n_key A_key (1 - h(Q_check + delta)) - leak_EC - log2(2/(eps_sec^2 eps_cor)),
/// with Q_check = e_check / A_check, floored at zero.
KeyResult secure_key_length(const KeyTally& tally, const SecurityParams& params, double duration_s = 0.0,
                            const KeyOptions& options = {});

struct GllpInputs {
  double nu_rep = 80e6;
  double p_det = 0.0;
  double p_m = 0.0;
  double e = 0.0;
  double f_ec = 1.16;
  double sift_factor = 1.0;
};

/// nu_rep p_det sift_factor [A (1 - h(e/A)) - f h(e)], A = 1 - p_m/p_det, floored at zero.
double gllp_asymptotic_rate(const GllpInputs& in);

/// Observed session summary used to rebuild a tally when raw counts are not available.
struct ObservedSession {
  double sifted_bps = 0.0;
  double duration_s = 0.0;
  double qber_da = 0.0;
  double qber_lr = 0.0;
  double p_key = 0.5;
  BasisAssignment roles;
  double bob_split = 0.5;
  /// With balanced bases both bases carry key symmetrically, so each side of the
  /// bound sees the count-weighted mean error rate.
  bool pool_balanced = true;
};

/// Detection probability from the observed rate; multi-photon probability from the
/// mean photon number leaving Alice's device.
KeyTally reconstruct_tally(const ObservedSession& observed, const DeviceParams& device, double g2_zero);

/// Expected tally for a session of `duration_s` under the analytic model.
KeyTally expected_tally(const SessionConfig& config, double duration_s);

struct OptimizeOptions {
  double p_lo = 0.5;
  double p_hi = 1.0 - 1e-4;
  double tolerance = 1e-7;
  int scan_points = 201;
  double grid_step = 1e-4;
  KeyOptions key;
};

struct OptimizePoint {
  double p_key;
  double rate_bps;
};

struct OptimizeResult {
  double p_key = 0.0;
  double rate_bps = 0.0;
  double balanced_rate_bps = 0.0;
  KeyResult key;
  bool positive = false;
  bool unimodality_violation = false;
  std::string status;
  std::vector<OptimizePoint> audit;  ///< every evaluated point, in evaluation order
};

/// Secure rate as a function of p_key for a session of fixed duration.
double basis_objective(const SessionConfig& config, const SecurityParams& params, double duration_s, double p_key,
                       const KeyOptions& options = {});

/// Golden-section maximization of the secure rate over p_key, audited by a uniform scan;
/// falls back to a fine grid when the scan shows more than one local maximum or beats the
/// golden-section result.
OptimizeResult optimize_basis_probability(const SessionConfig& config, const SecurityParams& params,
                                          double duration_s, const OptimizeOptions& options = {});

/// Same search with the tally rebuilt from an observed session at each p_key; the observed
/// sifted rate and per-basis error rates are held fixed.
OptimizeResult optimize_observed_basis_probability(ObservedSession observed, const DeviceParams& device,
                                                   double g2_zero, const SecurityParams& params,
                                                   const OptimizeOptions& options = {});

enum class QberModelKind { constant, signal_dark };

/// Error rate as a function of loss: a constant, or a signal error rate diluted by
/// dark clicks (which are wrong half the time).
struct QberModel {
  QberModelKind kind = QberModelKind::constant;
  double e_signal = 0.05;
};

struct CurveOptions {
  double duration_s = 25200.0;
  std::optional<double> n_key_target;  ///< size each point to this many key-basis counts
  double p_key = 0.5;
  double bob_split = 0.5;  ///< Bob's probability of measuring in the key basis
  KeyOptions key;
};

struct RatePoint {
  double loss_db;
  double finite_bps;
  double gllp_bps;
  double qber;
  double p_det;
};

std::vector<RatePoint> rate_vs_loss_curve(const DeviceParams& device, double g2_zero, const SecurityParams& security,
                                          std::span<const double> channel_losses_db, const QberModel& qber,
                                          const CurveOptions& options = {});

/// CSV columns loss_db,finite_bps,gllp_bps.
void write_rate_curve_csv(std::ostream& out, std::span<const RatePoint> curve);

void write_optimize_audit_csv(std::ostream& out, std::span<const OptimizePoint> audit);

}  // namespace qkdsim
