#pragma once

#include <boost/multiprecision/cpp_bin_float.hpp>

#include <array>
#include <cmath>

namespace oracle {

using Real = boost::multiprecision::cpp_bin_float_50;

inline Real log2r(const Real& x) { return log(x) / log(Real(2)); }

inline Real h(const Real& q) {
  if (q <= 0 || q >= 1) return 0;
  return -q * log2r(q) - (1 - q) * log2r(1 - q);
}

inline Real correction(const Real& p_m, const Real& p_det, const Real& p_basis) {
  return 1 - p_m / (p_det * p_basis);
}

inline Real delta(const Real& nz, const Real& nx, const Real& eps) {
  return sqrt((nz + nx) * (nx + 1) / (nz * nx * nx) * log(2 / eps));
}

inline Real leak(const Real& f, const Real& e, const Real& n) { return f * h(e) * n; }

inline Real log_term(const Real& eps_sec, const Real& eps_cor) {
  return log2r(2 / (eps_sec * eps_sec * eps_cor));
}

/// Unclamped composition n_z A_z (1 - h(Q_x + delta)) - leak - log term.
inline Real eq3(const Real& nz, const Real& nx, const Real& ez, const Real& ex, const Real& pz, const Real& px,
                const Real& p_det, const Real& p_m, const Real& eps_sec, const Real& eps_cor, const Real& f) {
  const Real az = correction(p_m, p_det, pz);
  const Real ax = correction(p_m, p_det, px);
  const Real q = ex / ax;
  return nz * az * (1 - h(q + delta(nz, nx, eps_sec))) - leak(f, ez, nz) - log_term(eps_sec, eps_cor);
}

/// Rotation by matrix exponential of the cross-product generator, summed as a power series.
inline std::array<double, 3> rotate_series(std::array<double, 3> v, std::array<double, 3> k, double angle) {
  using M = std::array<std::array<Real, 3>, 3>;
  M g{};
  g[0] = {0, -Real(k[2]) * angle, Real(k[1]) * angle};
  g[1] = {Real(k[2]) * angle, 0, -Real(k[0]) * angle};
  g[2] = {-Real(k[1]) * angle, Real(k[0]) * angle, 0};
  std::array<Real, 3> term{v[0], v[1], v[2]};
  std::array<Real, 3> sum = term;
  for (int n = 1; n < 80; ++n) {
    std::array<Real, 3> next{};
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j) next[i] += g[i][j] * term[j];
    for (int i = 0; i < 3; ++i) {
      term[i] = next[i] / n;
      sum[i] += term[i];
    }
  }
  return {static_cast<double>(sum[0]), static_cast<double>(sum[1]), static_cast<double>(sum[2])};
}

/// Error probability of an equatorial state rotated uniformly over [-theta/2, theta/2].
inline double rectangular_line_error(double theta) { return 0.5 - std::sin(theta / 2) / theta; }

/// Relative difference in significant-digit terms.
inline double rel(double got, const Real& want) {
  const Real w = abs(want);
  if (w == 0) return std::abs(got);
  return static_cast<double>(abs(Real(got) - want) / w);
}

}  // namespace oracle
