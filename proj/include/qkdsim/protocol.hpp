#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <span>
#include <vector>

#include "qkdsim/channel.hpp"
#include "qkdsim/emitter.hpp"
#include "qkdsim/polarization.hpp"
#include "qkdsim/rng.hpp"

namespace qkdsim {

/// Transmitter, receiver and detector constants.
///
/// `source_mu` is the mean photon number per pulse at the source. By default Alice's
/// device loss is applied on top of it; with `mu_includes_alice_loss` set, `source_mu`
/// is taken as the mean photon number entering the channel and `alice_loss_db` is ignored.
struct DeviceParams {
  double rep_rate_hz = 80e6;
  double source_mu = 4.19e-4;
  double det_efficiency = 0.375;
  double dark_prob = 1e-7;  ///< per detector per slot
  double intrinsic_qber = 0.009;
  double alice_loss_db = 6.2;
  double bob_loss_db = 1.7;
  bool mu_includes_alice_loss = false;

  void validate() const;
  double alice_transmittance() const;
  /// Mean photon number leaving Alice's device.
  double channel_input_mu() const;
  /// Probability that one emitted photon is detected, for a channel of `channel_loss_db`.
  double photon_detection_prob(double channel_loss_db) const;
};

/// Pulse pattern of 2-bit symbols (basis, bit); basis 0 is DA and 1 is LR.
/// Four pulses per byte, most significant pair first.
class PulsePattern {
 public:
  PulsePattern() = default;
  explicit PulsePattern(std::vector<std::uint8_t> bytes, std::size_t n_pulses);

  static PulsePattern from_hex(std::string_view text);
  static PulsePattern from_binary(std::span<const std::uint8_t> bytes);
  static PulsePattern load(const std::filesystem::path& path, bool hex);

  std::size_t size() const { return n_pulses_; }
  BasisLabel basis(std::size_t i) const;
  int bit(std::size_t i) const;

 private:
  std::uint8_t symbol(std::size_t i) const;
  std::vector<std::uint8_t> bytes_;
  std::size_t n_pulses_ = 0;
};

struct AliceSettings {
  double p_key = 0.5;  ///< probability of preparing in the key basis; p_check = 1 - p_key
  BasisAssignment roles;
  std::optional<PulsePattern> pattern;

  double p_check() const { return 1.0 - p_key; }
  /// Probability of preparing in the physical basis `b`.
  double p_basis(BasisLabel b) const { return roles.role_of(b) == KeyRole::key ? p_key : p_check(); }
  void validate() const;
};

struct PreparedPulse {
  BasisLabel basis;
  int bit;
  StateLabel state;
  double phi_v;
  StokesVector stokes;
};

PreparedPulse prepare_pulse(const AliceSettings& settings, Rng& rng);
/// Pulse `index` from the pattern, or nullopt when the pattern is exhausted.
std::optional<PreparedPulse> prepare_pulse(const PulsePattern& pattern, std::size_t index);

/// Bob's four detectors as a bit mask.
enum Detector : std::uint8_t { kDetD = 1, kDetA = 2, kDetL = 4, kDetR = 8 };

std::uint8_t detector_for(StateLabel label);

struct EmitterModel {
  double g2_zero = 0.323;
  EmitterSpectrum spectrum;
};

struct MeasureOutcome {
  std::uint8_t detections = 0;
  int photons_emitted = 0;
  int photons_detected = 0;
};

/// One time slot: photon emission, channel transit, passive basis choice at Bob,
/// polarization projection, intrinsic bit flip and per-detector dark counts.
/// `bob_split` is the probability that a photon is routed to the DA analyser.
MeasureOutcome transmit_and_measure(const PreparedPulse& pulse, const EmitterModel& emitter,
                                    const FiberChannel& channel, const DeviceParams& device, double bob_split,
                                    Rng& rng);

struct SlotRecord {
  std::uint64_t slot;
  BasisLabel alice_basis;
  std::uint8_t alice_bit;
  std::uint8_t detections;
};

struct AliceRecord {
  std::uint64_t slot;
  BasisLabel basis;
  std::uint8_t bit;
};

struct BobRecord {
  std::uint64_t slot;
  std::uint8_t detections;
};

enum class DoubleClickPolicy { discard, random_bit };

struct SiftOptions {
  BasisAssignment roles;
  DoubleClickPolicy policy = DoubleClickPolicy::discard;
  std::uint64_t seed = 0;  ///< drives random_bit decisions, hashed with the slot index
};

/// Exact integer tallies; merging two tallies is addition.
struct SiftTally {
  std::uint64_t pulses = 0;
  std::uint64_t detected_slots = 0;
  std::uint64_t kept[2] = {0, 0};    ///< indexed by BasisLabel
  std::uint64_t errors[2] = {0, 0};  ///< indexed by BasisLabel
  std::uint64_t double_clicks = 0;
  std::uint64_t basis_mismatch = 0;
  std::uint64_t ambiguous_basis = 0;

  SiftTally& operator+=(const SiftTally& o);
  bool operator==(const SiftTally&) const = default;
};

struct SiftResult {
  SiftTally tally;
  BasisAssignment roles;
  std::uint64_t n_key = 0;
  std::uint64_t n_check = 0;
  double e_key = 0.0;
  double e_check = 0.0;
  double qber_da = 0.0;
  double qber_lr = 0.0;
  double qber = 0.0;  ///< over all kept slots
  double p_det = 0.0;
};

SiftResult summarize(const SiftTally& tally, const BasisAssignment& roles);

/// Sifts click records of a session of `n_pulses` slots. Slots without a record had no click.
SiftResult sift(std::span<const SlotRecord> records, std::uint64_t n_pulses, const SiftOptions& options);
/// Same, from separate Alice and Bob logs that must cover identical, strictly increasing slots.
SiftResult sift(std::span<const AliceRecord> alice, std::span<const BobRecord> bob, const SiftOptions& options);

struct SessionConfig {
  DeviceParams device;
  EmitterModel emitter;
  FiberChannel channel{{}, 0.0, 1.0};
  AliceSettings alice;
  double bob_split = 0.5;
  DoubleClickPolicy double_click = DoubleClickPolicy::discard;
  std::uint64_t n_pulses = 0;
  double window_s = 20.0;
  std::uint64_t block_size = 1u << 20;
  unsigned threads = 0;  ///< 0 selects hardware concurrency

  void validate() const;
};

struct WindowPoint {
  std::uint64_t window_index;
  double qber;
  double sifted_bps;
};

struct SessionResult {
  std::vector<SlotRecord> records;  ///< slots with at least one click
  SiftResult sift;
  std::vector<WindowPoint> series;
  std::uint64_t pulses_sent = 0;
  bool truncated = false;  ///< pattern ran out before n_pulses
};

/// Runs the session in independent blocks of `block_size` pulses, block b drawing from
/// make_stream(seed, b). Results do not depend on the thread count.
SessionResult run_session(const SessionConfig& config, std::uint64_t seed);

/// Sifted-window time series for a session of `pulses` slots.
std::vector<WindowPoint> time_series(std::span<const SlotRecord> records, std::uint64_t pulses,
                                     const SessionConfig& config, std::uint64_t seed);

void write_time_series_csv(std::ostream& out, std::span<const WindowPoint> series);

/// Closed-form per-pulse rates matching the Monte-Carlo model to first order in the
/// click probabilities.
struct ExpectedRates {
  double p_signal = 0.0;     ///< at least one photon detected
  double p_dark_any = 0.0;   ///< at least one dark click among four detectors
  double p_det = 0.0;        ///< any click
  double p_multi = 0.0;      ///< multi-photon probability entering the channel
  double e_pmd[2] = {0, 0};  ///< channel misalignment per physical basis
  double qber_basis[2] = {0, 0};
  double sifted_basis[2] = {0, 0};  ///< basis-matched kept clicks per pulse
  double sifted_per_pulse = 0.0;
  double sifted_fraction = 0.0;  ///< of detected slots
  double sifted_rate_bps = 0.0;
  double key_sifted_per_pulse = 0.0;
  double check_sifted_per_pulse = 0.0;
  double e_key = 0.0;
  double e_check = 0.0;
  double qber_da() const { return qber_basis[0]; }
  double qber_lr() const { return qber_basis[1]; }
};

ExpectedRates expected_rates(const SessionConfig& config);

/// Rescales device.source_mu so that the analytic sifted rate equals `target_sifted_bps`.
SessionConfig calibrate_to_sifted_rate(SessionConfig config, double target_sifted_bps);

}  // namespace qkdsim
