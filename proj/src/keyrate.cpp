#include "qkdsim/keyrate.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <ostream>

#include "qkdsim/csv.hpp"
#include "qkdsim/errors.hpp"

namespace qkdsim {

void SecurityParams::validate() const {
  if (!(eps_sec > 0.0 && eps_sec < 1.0)) throw InvalidInput("security.eps_sec must lie in (0, 1)");
  if (!(eps_cor > 0.0 && eps_cor < 1.0)) throw InvalidInput("security.eps_cor must lie in (0, 1)");
  if (!(f_ec >= 1.0)) throw InvalidInput("security.f must be >= 1");
}

std::string_view to_string(KeyStatus status) {
  switch (status) {
    case KeyStatus::ok: return "ok";
    case KeyStatus::no_counts: return "no_counts";
    case KeyStatus::multi_photon_dominated: return "multi_photon_dominated";
    case KeyStatus::noise_dominated: return "noise_dominated";
    case KeyStatus::negative_length: return "negative_length";
  }
  return "?";
}

double binary_entropy(double q) {
  if (!(q >= 0.0 && q <= 1.0)) throw InvalidInput("binary entropy argument must lie in [0, 1]");
  if (q == 0.0 || q == 1.0) return 0.0;
  return -q * std::log2(q) - (1.0 - q) * std::log2(1.0 - q);
}

double multiphoton_correction(double p_m, double p_det, double p_basis) {
  const double denom = p_det * p_basis;
  if (!(denom > 0.0)) throw InvalidInput("multi-photon correction needs p_det * p_basis > 0");
  return 1.0 - p_m / denom;
}

double fluctuation_delta(double n_key, double n_check, double eps_sec) {
  if (!(n_key > 0.0 && n_check > 0.0)) throw InvalidInput("fluctuation term needs nonzero counts in both bases");
  if (!(eps_sec > 0.0 && eps_sec < 1.0)) throw InvalidInput("eps_sec must lie in (0, 1)");
  return std::sqrt((n_key + n_check) * (n_check + 1.0) / (n_key * n_check * n_check) * std::log(2.0 / eps_sec));
}

double ec_leakage(double f_ec, double e_key, double n_key) { return f_ec * binary_entropy(e_key) * n_key; }

double security_log_term(double eps_sec, double eps_cor) {
  // log2(2/(eps_sec^2 eps_cor)) expanded to avoid underflow of the product.
  return 1.0 - 2.0 * std::log2(eps_sec) - std::log2(eps_cor);
}

KeyResult secure_key_length(const KeyTally& t, const SecurityParams& params, double duration_s,
                            const KeyOptions& options) {
  params.validate();
  KeyResult r;
  if (!(t.n_key >= 0.0 && t.n_check >= 0.0)) throw InvalidInput("counts must be >= 0");
  if (!(t.e_key >= 0.0 && t.e_key <= 1.0 && t.e_check >= 0.0 && t.e_check <= 1.0))
    throw InvalidInput("error rates must lie in [0, 1]");
  if (!(t.p_m >= 0.0)) throw InvalidInput("p_m must be >= 0");
  if (t.n_key <= 0.0 || t.n_check <= 0.0 || !(t.p_det > 0.0) || !(t.p_key > 0.0) || !(t.p_check > 0.0)) {
    r.status = KeyStatus::no_counts;
    return r;
  }
  auto& k = r.terms;
  k.a_key = multiphoton_correction(t.p_m, t.p_det, t.p_key);
  k.a_check = multiphoton_correction(t.p_m, t.p_det, t.p_check);
  k.delta = options.zero_fluctuation ? 0.0 : fluctuation_delta(t.n_key, t.n_check, params.eps_sec);
  k.leak_ec = ec_leakage(params.f_ec, t.e_key, t.n_key);
  k.log_term = security_log_term(params.eps_sec, params.eps_cor);
  if (k.a_key <= 0.0 || k.a_check <= 0.0) {
    r.status = KeyStatus::multi_photon_dominated;
    return r;
  }
  k.q_check = t.e_check / k.a_check;
  double phase = k.q_check + k.delta;
  if (phase >= 0.5) {
    k.phase_error_clamped = true;
    phase = 0.5;
  }
  k.raw_length = t.n_key * k.a_key * (1.0 - binary_entropy(phase)) - k.leak_ec - k.log_term;
  if (k.phase_error_clamped) {
    r.status = KeyStatus::noise_dominated;
    return r;
  }
  if (k.raw_length <= 0.0) {
    r.status = KeyStatus::negative_length;
    return r;
  }
  r.length_bits = static_cast<std::int64_t>(std::floor(k.raw_length));
  r.rate_bps = duration_s > 0.0 ? static_cast<double>(r.length_bits) / duration_s : 0.0;
  return r;
}

double gllp_asymptotic_rate(const GllpInputs& in) {
  if (!(in.p_det > 0.0)) throw InvalidInput("GLLP rate needs p_det > 0");
  if (!(in.e >= 0.0 && in.e <= 1.0)) throw InvalidInput("error rate must lie in [0, 1]");
  const double a = 1.0 - in.p_m / in.p_det;
  if (a <= 0.0) return 0.0;
  const double phase = in.e / a;
  if (phase >= 0.5) return 0.0;
  const double per_bit = a * (1.0 - binary_entropy(phase)) - in.f_ec * binary_entropy(in.e);
  return std::max(0.0, in.nu_rep * in.p_det * in.sift_factor * per_bit);
}

KeyTally reconstruct_tally(const ObservedSession& obs, const DeviceParams& device, double g2_zero) {
  device.validate();
  if (!(obs.sifted_bps > 0.0)) throw InvalidInput("observed sifted rate must be > 0");
  if (!(obs.duration_s > 0.0)) throw InvalidInput("observed duration must be > 0");
  if (!(obs.p_key > 0.0 && obs.p_key < 1.0)) throw InvalidInput("p_key must lie in (0, 1)");
  const auto bob_prob = [&](BasisLabel b) { return b == BasisLabel::DA ? obs.bob_split : 1.0 - obs.bob_split; };
  const BasisLabel kb = obs.roles.key_basis();
  const BasisLabel cb = obs.roles.check_basis();
  const double key_share = obs.p_key * bob_prob(kb);
  const double check_share = (1.0 - obs.p_key) * bob_prob(cb);
  const double sift_fraction = key_share + check_share;
  const double total = obs.sifted_bps * obs.duration_s;

  KeyTally t;
  t.p_key = obs.p_key;
  t.p_check = 1.0 - obs.p_key;
  t.n_key = total * key_share / sift_fraction;
  t.n_check = total * check_share / sift_fraction;
  const double e_kb = kb == BasisLabel::DA ? obs.qber_da : obs.qber_lr;
  const double e_cb = cb == BasisLabel::DA ? obs.qber_da : obs.qber_lr;
  if (obs.pool_balanced && obs.p_key == 0.5) {
    const double pooled = (t.n_key * e_kb + t.n_check * e_cb) / (t.n_key + t.n_check);
    t.e_key = t.e_check = pooled;
  } else {
    t.e_key = e_kb;
    t.e_check = e_cb;
  }
  t.p_det = obs.sifted_bps / sift_fraction / device.rep_rate_hz;
  t.p_m = p_multi(PhotonStatistics{device.channel_input_mu(), g2_zero});
  return t;
}

KeyTally expected_tally(const SessionConfig& config, double duration_s) {
  if (!(duration_s > 0.0)) throw InvalidInput("duration must be > 0");
  const auto r = expected_rates(config);
  const double pulses = duration_s * config.device.rep_rate_hz;
  KeyTally t;
  t.n_key = pulses * r.key_sifted_per_pulse;
  t.n_check = pulses * r.check_sifted_per_pulse;
  t.e_key = r.e_key;
  t.e_check = r.e_check;
  t.p_key = config.alice.p_key;
  t.p_check = config.alice.p_check();
  t.p_det = r.p_det;
  t.p_m = r.p_multi;
  return t;
}

double basis_objective(const SessionConfig& config, const SecurityParams& params, double duration_s, double p_key,
                       const KeyOptions& options) {
  auto c = config;
  c.alice.p_key = p_key;
  return secure_key_length(expected_tally(c, duration_s), params, duration_s, options).rate_bps;
}

namespace {

// The analytic rates depend on p_key only through Alice's basis weights, so the
// channel integrals are evaluated once.
class BasisObjective {
 public:
  BasisObjective(const SessionConfig& config, const SecurityParams& params, double duration_s, const KeyOptions& opts)
      : params_(params), duration_(duration_s), options_(opts) {
    auto c = config;
    c.alice.p_key = 0.5;
    base_ = expected_tally(c, duration_s);
    // Counts per unit basis probability.
    key_per_p_ = base_.n_key / 0.5;
    check_per_p_ = base_.n_check / 0.5;
  }

  KeyTally tally(double p_key) const {
    KeyTally t = base_;
    t.p_key = p_key;
    t.p_check = 1.0 - p_key;
    t.n_key = key_per_p_ * p_key;
    t.n_check = check_per_p_ * (1.0 - p_key);
    return t;
  }

  KeyResult evaluate(double p_key) const { return secure_key_length(tally(p_key), params_, duration_, options_); }

 private:
  SecurityParams params_;
  double duration_;
  KeyOptions options_;
  KeyTally base_;
  double key_per_p_ = 0.0;
  double check_per_p_ = 0.0;
};

}  // namespace

namespace {

OptimizeResult maximize_over_p_key(const std::function<KeyResult(double)>& objective, const OptimizeOptions& opts) {
  if (!(opts.p_lo > 0.0 && opts.p_lo < opts.p_hi && opts.p_hi < 1.0))
    throw InvalidInput("optimizer interval must satisfy 0 < p_lo < p_hi < 1");
  OptimizeResult out;
  const auto eval = [&](double p) {
    const double rate = objective(p).rate_bps;
    out.audit.push_back({p, rate});
    return rate;
  };

  // Golden-section search for the maximum.
  const double inv_phi = (std::sqrt(5.0) - 1.0) / 2.0;
  double a = opts.p_lo;
  double b = opts.p_hi;
  double c = b - inv_phi * (b - a);
  double d = a + inv_phi * (b - a);
  double fc = eval(c);
  double fd = eval(d);
  while (b - a > opts.tolerance) {
    if (fc >= fd) {
      b = d;
      d = c;
      fd = fc;
      c = b - inv_phi * (b - a);
      fc = eval(c);
    } else {
      a = c;
      c = d;
      fc = fd;
      d = a + inv_phi * (b - a);
      fd = eval(d);
    }
  }
  const double golden_best = std::max(fc, fd);

  // Uniform audit scan; count strict local maxima of the positive part.
  std::vector<OptimizePoint> scan;
  const int n_scan = std::max(opts.scan_points, 3);
  for (int i = 0; i < n_scan; ++i) {
    const double p = opts.p_lo + (opts.p_hi - opts.p_lo) * i / (n_scan - 1);
    scan.push_back({p, eval(p)});
  }
  int local_maxima = 0;
  int trend = 0;
  for (int i = 1; i < n_scan; ++i) {
    const double diff = scan[i].rate_bps - scan[i - 1].rate_bps;
    const int dir = diff > 0 ? 1 : (diff < 0 ? -1 : 0);
    if (dir == 0) continue;
    if (trend == 1 && dir == -1) ++local_maxima;
    trend = dir;
  }
  if (trend == 1) ++local_maxima;
  double scan_best = 0.0;
  for (const auto& s : scan) scan_best = std::max(scan_best, s.rate_bps);
  out.unimodality_violation = local_maxima > 1 || scan_best > golden_best * (1.0 + 1e-9) + 1e-12;
  if (out.unimodality_violation) {
    const auto n_grid = static_cast<int>(std::ceil((opts.p_hi - opts.p_lo) / opts.grid_step));
    for (int i = 0; i <= n_grid; ++i) eval(std::min(opts.p_hi, opts.p_lo + i * opts.grid_step));
  }

  const auto best = std::max_element(out.audit.begin(), out.audit.end(), [](const auto& l, const auto& r) {
    return l.rate_bps < r.rate_bps;
  });
  out.p_key = best->p_key;
  out.rate_bps = best->rate_bps;
  out.key = objective(out.p_key);
  out.balanced_rate_bps = objective(0.5).rate_bps;
  out.positive = out.rate_bps > 0.0;
  out.status = out.positive ? "ok" : "no positive key anywhere";
  return out;
}

}  // namespace

OptimizeResult optimize_basis_probability(const SessionConfig& config, const SecurityParams& params,
                                          double duration_s, const OptimizeOptions& opts) {
  params.validate();
  const BasisObjective objective(config, params, duration_s, opts.key);
  return maximize_over_p_key([&](double p) { return objective.evaluate(p); }, opts);
}

OptimizeResult optimize_observed_basis_probability(ObservedSession observed, const DeviceParams& device,
                                                   double g2_zero, const SecurityParams& params,
                                                   const OptimizeOptions& opts) {
  params.validate();
  return maximize_over_p_key(
      [&](double p) {
        observed.p_key = p;
        return secure_key_length(reconstruct_tally(observed, device, g2_zero), params, observed.duration_s, opts.key);
      },
      opts);
}

std::vector<RatePoint> rate_vs_loss_curve(const DeviceParams& device, double g2_zero, const SecurityParams& security,
                                          std::span<const double> losses, const QberModel& qber,
                                          const CurveOptions& options) {
  device.validate();
  security.validate();
  if (losses.empty()) throw InvalidInput("loss grid is empty");
  if (!(options.p_key > 0.0 && options.p_key < 1.0)) throw InvalidInput("p_key must lie in (0, 1)");
  const PhotonStatistics source{device.source_mu, g2_zero};
  source.validate();
  const double p2 = p_multi(source);
  const double p1 = device.source_mu - 2.0 * p2;
  const double p_m = p_multi(PhotonStatistics{device.channel_input_mu(), g2_zero});
  const double key_share = options.p_key * options.bob_split;
  const double check_share = (1.0 - options.p_key) * (1.0 - options.bob_split);

  std::vector<RatePoint> out;
  out.reserve(losses.size());
  for (double loss : losses) {
    if (!(loss >= 0.0)) throw InvalidInput("loss grid values must be >= 0");
    const double t = device.photon_detection_prob(loss);
    const double signal = p1 * t + p2 * (1.0 - (1.0 - t) * (1.0 - t));
    const double p_det = 1.0 - (1.0 - signal) * std::pow(1.0 - device.dark_prob, 4);
    double e = qber.e_signal;
    if (qber.kind == QberModelKind::signal_dark) {
      const double s = signal * options.bob_split;
      const double kept = s + 2.0 * device.dark_prob;
      e = kept > 0.0 ? (s * qber.e_signal + device.dark_prob) / kept : 0.5;
    }
    const double per_second = device.rep_rate_hz * p_det;
    const double duration = options.n_key_target ? *options.n_key_target / (per_second * key_share) : options.duration_s;
    KeyTally tally;
    tally.n_key = per_second * key_share * duration;
    tally.n_check = per_second * check_share * duration;
    tally.e_key = tally.e_check = e;
    tally.p_key = options.p_key;
    tally.p_check = 1.0 - options.p_key;
    tally.p_det = p_det;
    tally.p_m = p_m;
    const auto key = secure_key_length(tally, security, duration, options.key);
    const double gllp = gllp_asymptotic_rate({device.rep_rate_hz, p_det, p_m, e, security.f_ec, key_share});
    out.push_back({loss, key.rate_bps, gllp, e, p_det});
  }
  return out;
}

void write_rate_curve_csv(std::ostream& out, std::span<const RatePoint> curve) {
  out << "loss_db,finite_bps,gllp_bps\n";
  for (const auto& p : curve)
    out << csv::format(p.loss_db) << ',' << csv::format(p.finite_bps) << ',' << csv::format(p.gllp_bps) << '\n';
}

void write_optimize_audit_csv(std::ostream& out, std::span<const OptimizePoint> audit) {
  out << "p_key,rate_bps\n";
  for (const auto& p : audit) out << csv::format(p.p_key) << ',' << csv::format(p.rate_bps) << '\n';
}

}  // namespace qkdsim
