#ifndef GRAINS_GEOMETRY_HPP
#define GRAINS_GEOMETRY_HPP

#include <cmath>
#include <numbers>
#include <stdexcept>
#include <string>

namespace grains {

/// Error raised for contract violations on inputs (bad parameters, malformed configs).
class InvalidArgument : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

inline void require(bool condition, const std::string& message) {
  if (!condition) throw InvalidArgument(message);
}

inline constexpr double kTwoPi = 2.0 * std::numbers::pi;

/// Planar workspace coordinate, meters.
struct Pose2 {
  double x = 0.0;
  double y = 0.0;

  friend constexpr Pose2 operator+(Pose2 a, Pose2 b) { return {a.x + b.x, a.y + b.y}; }
  friend constexpr Pose2 operator-(Pose2 a, Pose2 b) { return {a.x - b.x, a.y - b.y}; }
  friend constexpr Pose2 operator*(double s, Pose2 a) { return {s * a.x, s * a.y}; }
  friend constexpr bool operator==(Pose2 a, Pose2 b) = default;

  [[nodiscard]] bool finite() const { return std::isfinite(x) && std::isfinite(y); }
};

inline double dot(Pose2 a, Pose2 b) { return a.x * b.x + a.y * b.y; }
inline double cross(Pose2 a, Pose2 b) { return a.x * b.y - a.y * b.x; }
inline double norm(Pose2 a) { return std::hypot(a.x, a.y); }
inline double distance(Pose2 a, Pose2 b) { return norm(a - b); }
inline Pose2 unit_from_angle(double angle) { return {std::cos(angle), std::sin(angle)}; }
inline Pose2 lerp(Pose2 a, Pose2 b, double t) { return a + t * (b - a); }

/// Wraps an angle to (-pi, pi].
inline double wrap_angle(double a) {
  a = std::remainder(a, kTwoPi);
  return a <= -std::numbers::pi ? a + kTwoPi : a;
}

/// Axis-aligned rectangle in meters.
struct Rect {
  double min_x = 0.0;
  double min_y = 0.0;
  double max_x = 0.0;
  double max_y = 0.0;

  [[nodiscard]] double width() const { return max_x - min_x; }
  [[nodiscard]] double height() const { return max_y - min_y; }
  [[nodiscard]] bool valid() const { return max_x > min_x && max_y > min_y; }
  [[nodiscard]] bool contains(Pose2 p, double tol = 1e-12) const {
    return p.x >= min_x - tol && p.x <= max_x + tol && p.y >= min_y - tol && p.y <= max_y + tol;
  }
  [[nodiscard]] bool contains(const Rect& r) const {
    return contains(Pose2{r.min_x, r.min_y}) && contains(Pose2{r.max_x, r.max_y});
  }
  [[nodiscard]] Pose2 center() const { return {0.5 * (min_x + max_x), 0.5 * (min_y + max_y)}; }
};

}  // namespace grains

#endif  // GRAINS_GEOMETRY_HPP
