#include "qkdsim/protocol.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <fstream>
#include <iterator>
#include <ostream>
#include <thread>

#include "qkdsim/csv.hpp"
#include "qkdsim/errors.hpp"

namespace qkdsim {

namespace {

bool is_probability(double p) { return p >= 0.0 && p <= 1.0; }

int index_of(BasisLabel b) { return b == BasisLabel::DA ? 0 : 1; }

constexpr std::uint8_t kDaMask = kDetD | kDetA;
constexpr std::uint8_t kLrMask = kDetL | kDetR;

}  // namespace

void DeviceParams::validate() const {
  if (!(rep_rate_hz > 0.0)) throw InvalidInput("device.nu_rep must be > 0");
  if (!(source_mu >= 0.0) || !std::isfinite(source_mu)) throw InvalidInput("device.r_c must be >= 0");
  if (!is_probability(det_efficiency)) throw InvalidInput("device.eta_det must lie in [0, 1]");
  if (!is_probability(dark_prob)) throw InvalidInput("device.p_dark must lie in [0, 1]");
  if (!is_probability(intrinsic_qber)) throw InvalidInput("device.e0 must lie in [0, 1]");
  if (!(alice_loss_db >= 0.0)) throw InvalidInput("device.l_a must be >= 0");
  if (!(bob_loss_db >= 0.0)) throw InvalidInput("device.l_b must be >= 0");
}

double DeviceParams::alice_transmittance() const {
  return mu_includes_alice_loss ? 1.0 : std::pow(10.0, -alice_loss_db / 10.0);
}

double DeviceParams::channel_input_mu() const { return source_mu * alice_transmittance(); }

double DeviceParams::photon_detection_prob(double channel_loss_db) const {
  return alice_transmittance() * std::pow(10.0, -(channel_loss_db + bob_loss_db) / 10.0) * det_efficiency;
}

PulsePattern::PulsePattern(std::vector<std::uint8_t> bytes, std::size_t n_pulses)
    : bytes_(std::move(bytes)), n_pulses_(n_pulses) {
  if (n_pulses_ > bytes_.size() * 4) throw InvalidInput("pattern shorter than its declared pulse count");
}

PulsePattern PulsePattern::from_hex(std::string_view text) {
  std::vector<std::uint8_t> nibbles;
  for (std::size_t i = 0; i < text.size(); ++i) {
    const char c = text[i];
    if (c == ' ' || c == '\n' || c == '\r' || c == '\t') continue;
    int v = -1;
    if (c >= '0' && c <= '9') v = c - '0';
    if (c >= 'a' && c <= 'f') v = c - 'a' + 10;
    if (c >= 'A' && c <= 'F') v = c - 'A' + 10;
    if (v < 0) throw InvalidInput("pattern: invalid hex character at offset " + std::to_string(i));
    nibbles.push_back(static_cast<std::uint8_t>(v));
  }
  std::vector<std::uint8_t> bytes((nibbles.size() + 1) / 2, 0);
  for (std::size_t i = 0; i < nibbles.size(); ++i)
    bytes[i / 2] |= static_cast<std::uint8_t>(i % 2 == 0 ? nibbles[i] << 4 : nibbles[i]);
  // Each hex digit carries two pulses.
  return PulsePattern(std::move(bytes), nibbles.size() * 2);
}

PulsePattern PulsePattern::from_binary(std::span<const std::uint8_t> bytes) {
  return PulsePattern(std::vector<std::uint8_t>(bytes.begin(), bytes.end()), bytes.size() * 4);
}

PulsePattern PulsePattern::load(const std::filesystem::path& path, bool hex) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InvalidInput("cannot open pattern file '" + path.string() + "'");
  std::vector<char> raw((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (hex) return from_hex(std::string_view(raw.data(), raw.size()));
  std::vector<std::uint8_t> bytes(raw.begin(), raw.end());
  return from_binary(bytes);
}

std::uint8_t PulsePattern::symbol(std::size_t i) const {
  if (i >= n_pulses_) throw InvalidInput("pattern index out of range");
  return static_cast<std::uint8_t>((bytes_[i / 4] >> (6 - 2 * (i % 4))) & 0x3);
}

BasisLabel PulsePattern::basis(std::size_t i) const { return (symbol(i) & 0x2) ? BasisLabel::LR : BasisLabel::DA; }

int PulsePattern::bit(std::size_t i) const { return symbol(i) & 0x1; }

void AliceSettings::validate() const {
  if (!is_probability(p_key)) throw InvalidInput("alice.p_key must lie in [0, 1]");
}

namespace {

PreparedPulse make_pulse(BasisLabel basis, int bit) {
  const StateLabel state = state_for(basis, bit);
  const double phi = phase_for(state);
  return {basis, bit, state, phi, phase_to_state(phi)};
}

}  // namespace

PreparedPulse prepare_pulse(const AliceSettings& settings, Rng& rng) {
  const bool key = uniform01(rng) < settings.p_key;
  const int bit = uniform01(rng) < 0.5 ? 0 : 1;
  return make_pulse(settings.roles.basis_for(key ? KeyRole::key : KeyRole::check), bit);
}

std::optional<PreparedPulse> prepare_pulse(const PulsePattern& pattern, std::size_t index) {
  if (index >= pattern.size()) return std::nullopt;
  return make_pulse(pattern.basis(index), pattern.bit(index));
}

std::uint8_t detector_for(StateLabel label) {
  switch (label) {
    case StateLabel::D: return kDetD;
    case StateLabel::A: return kDetA;
    case StateLabel::L: return kDetL;
    case StateLabel::R: return kDetR;
    default: throw InvalidInput("no detector for H/V");
  }
}

MeasureOutcome transmit_and_measure(const PreparedPulse& pulse, const EmitterModel& emitter,
                                    const FiberChannel& channel, const DeviceParams& device, double bob_split,
                                    Rng& rng) {
  MeasureOutcome out;
  out.photons_emitted = sample_photon_number(PhotonStatistics{device.source_mu, emitter.g2_zero}, rng);
  const double t = device.photon_detection_prob(channel.loss_db());
  for (int k = 0; k < out.photons_emitted; ++k) {
    if (uniform01(rng) >= t) continue;
    ++out.photons_detected;
    // Photons of a pair share the prepared polarization but not the wavelength.
    const double lambda = sample_wavelength(emitter.spectrum, rng);
    const StokesVector s = apply_channel(pulse.stokes, channel, lambda);
    const BasisLabel bob = uniform01(rng) < bob_split ? BasisLabel::DA : BasisLabel::LR;
    const StokesVector zero_state = stokes_of(state_for(bob, 0));
    int bit = uniform01(rng) < 0.5 * (1.0 + s.dot(zero_state)) ? 0 : 1;
    if (uniform01(rng) < device.intrinsic_qber) bit ^= 1;
    out.detections |= detector_for(state_for(bob, bit));
  }
  for (std::uint8_t det : {kDetD, kDetA, kDetL, kDetR})
    if (uniform01(rng) < device.dark_prob) out.detections |= det;
  return out;
}

SiftTally& SiftTally::operator+=(const SiftTally& o) {
  pulses += o.pulses;
  detected_slots += o.detected_slots;
  for (int b = 0; b < 2; ++b) {
    kept[b] += o.kept[b];
    errors[b] += o.errors[b];
  }
  double_clicks += o.double_clicks;
  basis_mismatch += o.basis_mismatch;
  ambiguous_basis += o.ambiguous_basis;
  return *this;
}

namespace {

void classify(const SlotRecord& r, const SiftOptions& options, SiftTally& t) {
  if (r.detections == 0) return;
  ++t.detected_slots;
  const std::uint8_t da = r.detections & kDaMask;
  const std::uint8_t lr = r.detections & kLrMask;
  if (da && lr) {
    ++t.ambiguous_basis;
    return;
  }
  const BasisLabel bob = da ? BasisLabel::DA : BasisLabel::LR;
  if (bob != r.alice_basis) {
    ++t.basis_mismatch;
    return;
  }
  const std::uint8_t clicks = da ? da : lr;
  int bit = 0;
  if (clicks == (da ? kDaMask : kLrMask)) {
    ++t.double_clicks;
    if (options.policy == DoubleClickPolicy::discard) return;
    bit = static_cast<int>(mix64(options.seed ^ mix64(r.slot)) & 1u);
  } else {
    bit = (clicks == kDetD || clicks == kDetL) ? 0 : 1;
  }
  const int b = index_of(bob);
  ++t.kept[b];
  if (bit != r.alice_bit) ++t.errors[b];
}

double ratio(std::uint64_t num, std::uint64_t den) { return den ? static_cast<double>(num) / den : 0.0; }

}  // namespace

SiftResult summarize(const SiftTally& t, const BasisAssignment& roles) {
  SiftResult r;
  r.tally = t;
  r.roles = roles;
  const int k = index_of(roles.key_basis());
  const int c = index_of(roles.check_basis());
  r.n_key = t.kept[k];
  r.n_check = t.kept[c];
  r.e_key = ratio(t.errors[k], t.kept[k]);
  r.e_check = ratio(t.errors[c], t.kept[c]);
  r.qber_da = ratio(t.errors[0], t.kept[0]);
  r.qber_lr = ratio(t.errors[1], t.kept[1]);
  r.qber = ratio(t.errors[0] + t.errors[1], t.kept[0] + t.kept[1]);
  r.p_det = ratio(t.detected_slots, t.pulses);
  return r;
}

SiftResult sift(std::span<const SlotRecord> records, std::uint64_t n_pulses, const SiftOptions& options) {
  SiftTally t;
  t.pulses = n_pulses;
  std::uint64_t prev = 0;
  bool first = true;
  for (const auto& r : records) {
    if ((!first && r.slot <= prev) || r.slot >= n_pulses)
      throw InvalidInput("slot records must be strictly increasing and inside the session");
    first = false;
    prev = r.slot;
    classify(r, options, t);
  }
  return summarize(t, options.roles);
}

SiftResult sift(std::span<const AliceRecord> alice, std::span<const BobRecord> bob, const SiftOptions& options) {
  if (alice.size() != bob.size()) throw InvalidInput("Alice and Bob records have different lengths");
  std::vector<SlotRecord> merged;
  merged.reserve(alice.size());
  for (std::size_t i = 0; i < alice.size(); ++i) {
    if (alice[i].slot != bob[i].slot)
      throw InvalidInput("misaligned records at position " + std::to_string(i) + ": Alice slot " +
                         std::to_string(alice[i].slot) + ", Bob slot " + std::to_string(bob[i].slot));
    merged.push_back({alice[i].slot, alice[i].basis, alice[i].bit, bob[i].detections});
  }
  const std::uint64_t n = merged.empty() ? 0 : merged.back().slot + 1;
  return sift(merged, n, options);
}

void SessionConfig::validate() const {
  device.validate();
  PhotonStatistics{device.source_mu, emitter.g2_zero}.validate();
  emitter.spectrum.validate();
  alice.validate();
  if (!is_probability(bob_split)) throw InvalidInput("bob.split must lie in [0, 1]");
  if (n_pulses < 1) throw InvalidInput("session.n_pulses must be >= 1");
  if (!(window_s > 0.0)) throw InvalidInput("session.window_s must be > 0");
  if (block_size < 1) throw InvalidInput("session.block_size must be >= 1");
}

namespace {

struct BlockOutput {
  std::vector<SlotRecord> records;
};

BlockOutput run_block(const SessionConfig& config, std::uint64_t seed, std::uint64_t block, std::uint64_t begin,
                      std::uint64_t end) {
  BlockOutput out;
  Rng rng = make_stream(seed, block);
  for (std::uint64_t slot = begin; slot < end; ++slot) {
    const PreparedPulse pulse =
        config.alice.pattern ? *prepare_pulse(*config.alice.pattern, slot) : prepare_pulse(config.alice, rng);
    const auto m = transmit_and_measure(pulse, config.emitter, config.channel, config.device, config.bob_split, rng);
    if (m.detections) out.records.push_back({slot, pulse.basis, static_cast<std::uint8_t>(pulse.bit), m.detections});
  }
  return out;
}

}  // namespace

SessionResult run_session(const SessionConfig& config, std::uint64_t seed) {
  config.validate();
  SessionResult result;
  result.pulses_sent = config.n_pulses;
  if (config.alice.pattern && config.alice.pattern->size() < config.n_pulses) {
    result.pulses_sent = config.alice.pattern->size();
    result.truncated = true;
  }
  const std::uint64_t n_blocks = (result.pulses_sent + config.block_size - 1) / config.block_size;
  std::vector<BlockOutput> blocks(n_blocks);
  std::atomic<std::uint64_t> next{0};
  const auto worker = [&] {
    for (std::uint64_t b = next++; b < n_blocks; b = next++) {
      const std::uint64_t begin = b * config.block_size;
      const std::uint64_t end = std::min(result.pulses_sent, begin + config.block_size);
      blocks[b] = run_block(config, seed, b, begin, end);
    }
  };
  unsigned n_threads = config.threads ? config.threads : std::max(1u, std::thread::hardware_concurrency());
  n_threads = static_cast<unsigned>(std::min<std::uint64_t>(n_threads, std::max<std::uint64_t>(n_blocks, 1)));
  if (n_threads <= 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    pool.reserve(n_threads);
    for (unsigned i = 0; i < n_threads; ++i) pool.emplace_back(worker);
  }
  for (auto& b : blocks) std::move(b.records.begin(), b.records.end(), std::back_inserter(result.records));

  const SiftOptions options{config.alice.roles, config.double_click, seed};
  result.sift = sift(result.records, result.pulses_sent, options);
  result.series = time_series(result.records, result.pulses_sent, config, seed);
  return result;
}

std::vector<WindowPoint> time_series(std::span<const SlotRecord> records, std::uint64_t pulses,
                                     const SessionConfig& config, std::uint64_t seed) {
  const auto window_pulses =
      std::max<std::uint64_t>(1, static_cast<std::uint64_t>(std::llround(config.window_s * config.device.rep_rate_hz)));
  const std::uint64_t n_windows = (pulses + window_pulses - 1) / window_pulses;
  std::vector<SiftTally> tallies(n_windows);
  const SiftOptions options{config.alice.roles, config.double_click, seed};
  for (const auto& r : records) classify(r, options, tallies[r.slot / window_pulses]);
  std::vector<WindowPoint> out;
  out.reserve(n_windows);
  for (std::uint64_t w = 0; w < n_windows; ++w) {
    const std::uint64_t len = std::min(window_pulses, pulses - w * window_pulses);
    const auto& t = tallies[w];
    const std::uint64_t kept = t.kept[0] + t.kept[1];
    out.push_back({w, ratio(t.errors[0] + t.errors[1], kept), kept / (len / config.device.rep_rate_hz)});
  }
  return out;
}

void write_time_series_csv(std::ostream& out, std::span<const WindowPoint> series) {
  out << "window_index,qber,sifted_bps\n";
  for (const auto& p : series) out << p.window_index << ',' << csv::format(p.qber) << ',' << csv::format(p.sifted_bps) << '\n';
}

ExpectedRates expected_rates(const SessionConfig& config) {
  config.device.validate();
  config.alice.validate();
  const auto& dev = config.device;
  ExpectedRates r;
  const PhotonStatistics source{dev.source_mu, config.emitter.g2_zero};
  source.validate();
  const double t = dev.photon_detection_prob(config.channel.loss_db());
  const double p2 = p_multi(source);
  const double p1 = dev.source_mu - 2.0 * p2;
  r.p_signal = p1 * t + p2 * (1.0 - (1.0 - t) * (1.0 - t));
  r.p_dark_any = 1.0 - std::pow(1.0 - dev.dark_prob, 4);
  r.p_det = 1.0 - (1.0 - r.p_signal) * (1.0 - r.p_dark_any);
  r.p_multi = p_multi(PhotonStatistics{dev.channel_input_mu(), config.emitter.g2_zero});

  for (BasisLabel b : {BasisLabel::DA, BasisLabel::LR}) {
    const int i = index_of(b);
    const double e0 = qber_from_pmd(stokes_of(state_for(b, 0)), config.channel, config.emitter.spectrum);
    const double e1 = qber_from_pmd(stokes_of(state_for(b, 1)), config.channel, config.emitter.spectrum);
    r.e_pmd[i] = 0.5 * (e0 + e1);
    const double e_signal = r.e_pmd[i] + dev.intrinsic_qber - 2.0 * r.e_pmd[i] * dev.intrinsic_qber;
    const double bob = b == BasisLabel::DA ? config.bob_split : 1.0 - config.bob_split;
    const double signal = r.p_signal * bob;
    const double dark = 2.0 * dev.dark_prob;
    const double kept = signal + dark;
    r.qber_basis[i] = kept > 0.0 ? (signal * e_signal + dev.dark_prob) / kept : 0.0;
    r.sifted_basis[i] = config.alice.p_basis(b) * kept;
  }
  r.sifted_per_pulse = r.sifted_basis[0] + r.sifted_basis[1];
  r.sifted_fraction = r.p_det > 0.0 ? r.sifted_per_pulse / r.p_det : 0.0;
  r.sifted_rate_bps = dev.rep_rate_hz * r.sifted_per_pulse;
  const int k = index_of(config.alice.roles.key_basis());
  const int c = index_of(config.alice.roles.check_basis());
  r.key_sifted_per_pulse = r.sifted_basis[k];
  r.check_sifted_per_pulse = r.sifted_basis[c];
  r.e_key = r.qber_basis[k];
  r.e_check = r.qber_basis[c];
  return r;
}

SessionConfig calibrate_to_sifted_rate(SessionConfig config, double target_sifted_bps) {
  if (!(target_sifted_bps > 0.0)) throw InvalidInput("calibration target must be > 0");
  auto dark_only = config;
  dark_only.device.source_mu = 0.0;
  if (expected_rates(dark_only).sifted_rate_bps >= target_sifted_bps)
    throw InvalidInput("calibration target is below the dark-count floor");
  // The sifted rate is affine in mu to first order; a few proportional updates converge.
  for (int iter = 0; iter < 100; ++iter) {
    const double floor = expected_rates(dark_only).sifted_rate_bps;
    const double current = expected_rates(config).sifted_rate_bps;
    const double next = config.device.source_mu * (target_sifted_bps - floor) / (current - floor);
    if (std::abs(next - config.device.source_mu) <= 1e-14 * next) break;
    config.device.source_mu = next;
  }
  return config;
}

}  // namespace qkdsim
