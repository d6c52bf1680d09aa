#pragma once

#include <cmath>
#include <string_view>

namespace qkdsim {

/// Normalized Stokes vector, i.e. a point on the Poincare sphere.
///
/// Embedding convention: H/V on s1, D/A on s2, L/R on s3.
struct StokesVector {
  double s1 = 1.0;
  double s2 = 0.0;
  double s3 = 0.0;

  constexpr double dot(const StokesVector& o) const { return s1 * o.s1 + s2 * o.s2 + s3 * o.s3; }
  constexpr StokesVector cross(const StokesVector& o) const {
    return {s2 * o.s3 - s3 * o.s2, s3 * o.s1 - s1 * o.s3, s1 * o.s2 - s2 * o.s1};
  }
  double norm() const { return std::sqrt(dot(*this)); }
  StokesVector normalized() const;

  constexpr StokesVector operator-() const { return {-s1, -s2, -s3}; }
  constexpr StokesVector operator+(const StokesVector& o) const { return {s1 + o.s1, s2 + o.s2, s3 + o.s3}; }
  constexpr StokesVector operator-(const StokesVector& o) const { return {s1 - o.s1, s2 - o.s2, s3 - o.s3}; }
  constexpr StokesVector operator*(double k) const { return {s1 * k, s2 * k, s3 * k}; }
  constexpr bool operator==(const StokesVector&) const = default;
};

inline constexpr double kUnitTolerance = 1e-9;

bool is_unit(const StokesVector& s, double tol = kUnitTolerance);

/// Great-circle angle between two unit vectors, radians in [0, pi].
double angle_between(const StokesVector& a, const StokesVector& b);

enum class StateLabel { H, V, D, A, L, R };
enum class BasisLabel { DA, LR };
enum class KeyRole { key, check };

struct Bb84State {
  StateLabel label;
  StokesVector stokes;
};

StokesVector stokes_of(StateLabel label);
Bb84State make_state(StateLabel label);

/// Parses "H", "V", "D", "A", "L", "R". Throws InvalidInput otherwise.
StateLabel parse_state_label(std::string_view text);
std::string_view to_string(StateLabel label);

BasisLabel parse_basis_label(std::string_view text);
std::string_view to_string(BasisLabel label);

/// Protocol state for a basis and bit value. Bit 0 is D or L, bit 1 is A or R.
StateLabel state_for(BasisLabel basis, int bit);
BasisLabel basis_of(StateLabel label);

/// Which physical basis carries the key (Z) and which is the check basis (X).
/// Exactly one basis holds the key role.
class BasisAssignment {
 public:
  constexpr BasisAssignment() = default;
  constexpr explicit BasisAssignment(BasisLabel key_basis) : key_basis_(key_basis) {}

  constexpr BasisLabel key_basis() const { return key_basis_; }
  constexpr BasisLabel check_basis() const {
    return key_basis_ == BasisLabel::DA ? BasisLabel::LR : BasisLabel::DA;
  }
  constexpr KeyRole role_of(BasisLabel b) const { return b == key_basis_ ? KeyRole::key : KeyRole::check; }
  constexpr BasisLabel basis_for(KeyRole r) const { return r == KeyRole::key ? key_basis() : check_basis(); }

 private:
  BasisLabel key_basis_ = BasisLabel::DA;
};

/// Output of the Sagnac modulator for phase phi_v: the image of |H> + e^{i phi_v}|V>,
/// i.e. (0, cos phi_v, sin phi_v).
StokesVector phase_to_state(double phi_v);

/// Modulator phase that prepares the given protocol state (D=0, L=pi/2, A=pi, R=3pi/2).
double phase_for(StateLabel label);

/// Right-hand rotation of s about a unit axis (Rodrigues form). The result is renormalized.
/// Throws InvalidInput if the axis is not unit length within 1e-9.
StokesVector rotate(const StokesVector& s, const StokesVector& axis, double angle);

/// Probability of an error click when s is measured in the basis whose correct outcome is
/// reference: (1 - s.reference)/2 clamped to [0, 1].
double misalignment_error(const StokesVector& s, const StokesVector& reference);

}  // namespace qkdsim
