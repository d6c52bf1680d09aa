#include "qkdsim/polarization.hpp"

#include <algorithm>
#include <numbers>
#include <string>

#include "qkdsim/errors.hpp"

namespace qkdsim {

StokesVector StokesVector::normalized() const {
  const double n = norm();
  if (n == 0.0) throw InvalidInput("cannot normalize a zero Stokes vector");
  return {s1 / n, s2 / n, s3 / n};
}

bool is_unit(const StokesVector& s, double tol) { return std::abs(s.norm() - 1.0) <= tol; }

double angle_between(const StokesVector& a, const StokesVector& b) {
  // atan2 form stays accurate for nearly parallel vectors where acos loses digits.
  return std::atan2(a.cross(b).norm(), a.dot(b));
}

StokesVector stokes_of(StateLabel label) {
  switch (label) {
    case StateLabel::H: return {1, 0, 0};
    case StateLabel::V: return {-1, 0, 0};
    case StateLabel::D: return {0, 1, 0};
    case StateLabel::A: return {0, -1, 0};
    case StateLabel::L: return {0, 0, 1};
    case StateLabel::R: return {0, 0, -1};
  }
  throw InvalidInput("unknown polarization label");
}

Bb84State make_state(StateLabel label) { return {label, stokes_of(label)}; }

StateLabel parse_state_label(std::string_view text) {
  if (text == "H") return StateLabel::H;
  if (text == "V") return StateLabel::V;
  if (text == "D") return StateLabel::D;
  if (text == "A") return StateLabel::A;
  if (text == "L") return StateLabel::L;
  if (text == "R") return StateLabel::R;
  throw InvalidInput("unknown polarization label '" + std::string(text) + "'");
}

std::string_view to_string(StateLabel label) {
  switch (label) {
    case StateLabel::H: return "H";
    case StateLabel::V: return "V";
    case StateLabel::D: return "D";
    case StateLabel::A: return "A";
    case StateLabel::L: return "L";
    case StateLabel::R: return "R";
  }
  return "?";
}

BasisLabel parse_basis_label(std::string_view text) {
  if (text == "DA") return BasisLabel::DA;
  if (text == "LR") return BasisLabel::LR;
  throw InvalidInput("unknown basis label '" + std::string(text) + "' (expected DA or LR)");
}

std::string_view to_string(BasisLabel label) { return label == BasisLabel::DA ? "DA" : "LR"; }

StateLabel state_for(BasisLabel basis, int bit) {
  if (basis == BasisLabel::DA) return bit == 0 ? StateLabel::D : StateLabel::A;
  return bit == 0 ? StateLabel::L : StateLabel::R;
}

BasisLabel basis_of(StateLabel label) {
  switch (label) {
    case StateLabel::D:
    case StateLabel::A: return BasisLabel::DA;
    case StateLabel::L:
    case StateLabel::R: return BasisLabel::LR;
    default: throw InvalidInput("H and V are not BB84 protocol states in this setup");
  }
}

StokesVector phase_to_state(double phi_v) {
  const double phi = std::remainder(phi_v, 2.0 * std::numbers::pi);
  return {0.0, std::cos(phi), std::sin(phi)};
}

double phase_for(StateLabel label) {
  using std::numbers::pi;
  switch (label) {
    case StateLabel::D: return 0.0;
    case StateLabel::L: return pi / 2;
    case StateLabel::A: return pi;
    case StateLabel::R: return 3 * pi / 2;
    default: throw InvalidInput("H and V cannot be prepared by the phase modulator");
  }
}

StokesVector rotate(const StokesVector& s, const StokesVector& axis, double angle) {
  if (!is_unit(axis)) throw InvalidInput("rotation axis must be a unit vector");
  const double c = std::cos(angle);
  const double sn = std::sin(angle);
  const StokesVector out = s * c + axis.cross(s) * sn + axis * (axis.dot(s) * (1.0 - c));
  const double n = out.norm();
  return n == 0.0 ? out : out * (s.norm() / n);
}

double misalignment_error(const StokesVector& s, const StokesVector& reference) {
  return std::clamp(0.5 * (1.0 - s.dot(reference)), 0.0, 1.0);
}

}  // namespace qkdsim
