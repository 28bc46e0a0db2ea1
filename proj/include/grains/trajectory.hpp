#ifndef GRAINS_TRAJECTORY_HPP
#define GRAINS_TRAJECTORY_HPP

// Linear and spiral raking paths, and the periodicity prior of a spiral.
//
// A spiral combines linear advancement along the start->goal segment with
// circular motion of radius CR. The base point advances AV per full
// rotation; the probe sits on the circle of radius CR centred on the base
// point. The probe enters the circle with a short radial lead-in from the
// start and leaves it with a radial lead-out onto the goal, so the path
// never strays further than CR from the segment.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <ostream>
#include <vector>

#include "grains/geometry.hpp"

namespace grains {

/// Spiral geometry: circular radius and advance per cycle (meters), and the
/// dimensionless motion velocity.
struct TrajectoryParams {
  double cr = 0.02;
  double av = 0.01;
  double mv = 0.2;

  void validate() const {
    require(std::isfinite(cr) && cr >= 0.0, "trajectory: cr must be >= 0");
    require(std::isfinite(av) && av > 0.0, "trajectory: av must be > 0");
    require(std::isfinite(mv) && mv > 0.0 && mv <= 1.0, "trajectory: mv must lie in (0, 1]");
  }
};

/// Reference probe speed (m/s) at MV = 1 and force sampling frequency (Hz).
struct MotionConstants {
  double v0 = 0.08968;
  double fs = 62.5;

  void validate() const {
    require(std::isfinite(v0) && v0 > 0.0, "motion constants: v0 must be > 0");
    require(std::isfinite(fs) && fs > 0.0, "motion constants: fs must be > 0");
  }
  [[nodiscard]] double speed(double mv) const { return v0 * mv; }
};

/// Default waypoint spacing for generated paths (0.5 mm).
inline constexpr double kDefaultPathStep = 0.0005;
/// Chord spacing used when measuring one spiral cycle for the periodicity prior.
inline constexpr double kPriorStep = 0.002;

struct Path {
  std::vector<Pose2> waypoints;
  std::vector<double> cumulative_arc_length;
  /// Waypoint indices where each full rotation completes.
  std::vector<std::size_t> cycle_boundaries;
  /// Angle of the circular motion at each waypoint (0 on linear paths).
  std::vector<double> rotation_angle;
  /// Force-modulation phase: advances 2 pi per rotation, uniformly in arc
  /// length within a rotation (equal to rotation_angle on linear paths).
  std::vector<double> phase;
  /// Last waypoint of the rotating part of a spiral (before the lead-out).
  std::size_t rotation_end = 0;

  [[nodiscard]] std::size_t size() const { return waypoints.size(); }
  [[nodiscard]] bool empty() const { return waypoints.empty(); }
  [[nodiscard]] double length() const {
    return cumulative_arc_length.empty() ? 0.0 : cumulative_arc_length.back();
  }
  [[nodiscard]] Pose2 start() const { return waypoints.front(); }
  [[nodiscard]] Pose2 goal() const { return waypoints.back(); }
  [[nodiscard]] bool is_spiral() const { return !cycle_boundaries.empty(); }

  /// Number of rotations completed at waypoint i.
  [[nodiscard]] std::size_t cycle_index(std::size_t i) const {
    return static_cast<std::size_t>(
        std::upper_bound(cycle_boundaries.begin(), cycle_boundaries.end(), i) -
        cycle_boundaries.begin());
  }

  void push(Pose2 p, double theta) {
    const double arc =
        waypoints.empty() ? 0.0 : cumulative_arc_length.back() + distance(waypoints.back(), p);
    waypoints.push_back(p);
    cumulative_arc_length.push_back(arc);
    rotation_angle.push_back(theta);
    phase.push_back(theta);
  }
};

namespace detail {

inline std::size_t segments_for(double length, double step) {
  // A small relative slack keeps exact multiples (0.1 / 0.01) from gaining a segment.
  return std::max<std::size_t>(1, static_cast<std::size_t>(std::ceil(length / step - 1e-9)));
}

/// Planar length of one advancing rotation, sampled with n chords.
inline double planar_cycle_length(double cr, double av, std::size_t n) {
  const double a = av / kTwoPi;
  double length = 0.0;
  double px = cr;
  double py = 0.0;
  for (std::size_t k = 1; k <= n; ++k) {
    const double t = kTwoPi * static_cast<double>(k) / static_cast<double>(n);
    const double x = a * t + cr * std::cos(t);
    const double y = cr * std::sin(t);
    length += std::hypot(x - px, y - py);
    px = x;
    py = y;
  }
  return length;
}

inline void append_line(Path& path, Pose2 from, Pose2 to, double step, double theta) {
  const std::size_t n = segments_for(distance(from, to), step);
  for (std::size_t k = 1; k <= n; ++k) {
    path.push(k == n ? to : lerp(from, to, static_cast<double>(k) / static_cast<double>(n)), theta);
  }
}

}  // namespace detail

/// Evenly spaced waypoints on the straight segment start->goal.
inline Path gen_linear(Pose2 start, Pose2 goal, double step = kDefaultPathStep) {
  require(std::isfinite(step) && step > 0.0, "gen_linear: step must be > 0");
  require(start.finite() && goal.finite(), "gen_linear: endpoints must be finite");
  require(!(start == goal), "gen_linear: start and goal coincide");
  Path path;
  path.push(start, 0.0);
  detail::append_line(path, start, goal, step, 0.0);
  return path;
}

/// Spiral raking path. `dwell_cycles` full rotations are performed around
/// the start before the base point begins to advance.
inline Path gen_spiral(Pose2 start, Pose2 goal, const TrajectoryParams& params,
                       double step = kDefaultPathStep, std::size_t dwell_cycles = 0) {
  params.validate();
  require(std::isfinite(step) && step > 0.0, "gen_spiral: step must be > 0");
  require(start.finite() && goal.finite(), "gen_spiral: endpoints must be finite");
  require(!(start == goal), "gen_spiral: start and goal coincide");
  if (params.cr == 0.0) return gen_linear(start, goal, step);

  const double total = distance(start, goal);
  const Pose2 u = (1.0 / total) * (goal - start);
  const Pose2 v{-u.y, u.x};
  const double cr = params.cr;
  const double av = params.av;

  auto on_circle = [&](Pose2 base, double theta) {
    return base + cr * std::cos(theta) * u + cr * std::sin(theta) * v;
  };

  // Advancing rotations. |dp/dtheta| <= av / 2pi + cr bounds the chord length.
  double cycles = total / av;
  if (std::abs(cycles - std::round(cycles)) < 1e-9) cycles = std::round(cycles);
  const auto full_cycles = static_cast<std::size_t>(std::floor(cycles));
  const std::size_t per_cycle = detail::segments_for(av + kTwoPi * cr, step);
  const double advancing_length = detail::planar_cycle_length(cr, av, per_cycle);
  // The dwell circle is as long as one advancing rotation, so the rotation
  // period in samples does not change when the base starts to move.
  const double dwell_radius = advancing_length / kTwoPi;

  Path path;
  path.push(start, 0.0);
  detail::append_line(path, start, start + (dwell_cycles > 0 ? dwell_radius : cr) * u, step, 0.0);
  std::vector<std::size_t> rotation_starts{path.size() - 1};

  // Dwell: rotate around the start without advancing.
  const std::size_t dwell_segments = detail::segments_for(kTwoPi * dwell_radius, step);
  for (std::size_t c = 0; c < dwell_cycles; ++c) {
    for (std::size_t k = 1; k <= dwell_segments; ++k) {
      const double theta = kTwoPi * (static_cast<double>(c) +
                                     static_cast<double>(k) / static_cast<double>(dwell_segments));
      path.push(start + dwell_radius * std::cos(theta) * u + dwell_radius * std::sin(theta) * v, theta);
    }
    path.cycle_boundaries.push_back(path.size() - 1);
  }
  const double theta0 = kTwoPi * static_cast<double>(dwell_cycles);
  auto base_at = [&](double rel_theta) { return start + (av * rel_theta / kTwoPi) * u; };

  for (std::size_t c = 0; c < full_cycles; ++c) {
    for (std::size_t k = 1; k <= per_cycle; ++k) {
      const double rel =
          kTwoPi * (static_cast<double>(c) + static_cast<double>(k) / static_cast<double>(per_cycle));
      path.push(on_circle(base_at(rel), theta0 + rel), theta0 + rel);
    }
    path.cycle_boundaries.push_back(path.size() - 1);
  }

  // Truncated final cycle: rotate until the base point reaches the goal.
  const double rest = cycles - static_cast<double>(full_cycles);
  if (rest > 0.0) {
    const std::size_t n = detail::segments_for(rest * (av + kTwoPi * cr), step);
    for (std::size_t k = 1; k <= n; ++k) {
      const double rel =
          kTwoPi * (static_cast<double>(full_cycles) + rest * static_cast<double>(k) / static_cast<double>(n));
      path.push(on_circle(base_at(rel), theta0 + rel), theta0 + rel);
    }
  }
  const std::size_t rotation_end = path.size() - 1;
  path.rotation_end = rotation_end;

  // Force phase: 2 pi per rotation, spread uniformly over the arc length of
  // each rotation (the probe moves at constant speed, so uniformly in time).
  path.phase = path.rotation_angle;
  const auto& arc = path.cumulative_arc_length;
  for (std::size_t c = 0; c < path.cycle_boundaries.size(); ++c) {
    const std::size_t a = c == 0 ? rotation_starts.front() : path.cycle_boundaries[c - 1];
    const std::size_t b = path.cycle_boundaries[c];
    for (std::size_t i = a + 1; i <= b; ++i) {
      path.phase[i] = kTwoPi * (static_cast<double>(c) + (arc[i] - arc[a]) / (arc[b] - arc[a]));
    }
  }
  const std::size_t tail = path.cycle_boundaries.empty() ? rotation_starts.front() : path.cycle_boundaries.back();
  for (std::size_t i = tail + 1; i <= rotation_end; ++i) {
    path.phase[i] = path.phase[tail] + kTwoPi * (arc[i] - arc[tail]) / advancing_length;
  }

  const double theta_end = path.rotation_angle.back();
  const double phase_end = path.phase.back();
  detail::append_line(path, path.waypoints.back(), goal, step, theta_end);
  std::fill(path.phase.begin() + static_cast<std::ptrdiff_t>(rotation_end) + 1, path.phase.end(), phase_end);
  return path;
}

/// Arc length of one spiral cycle: one turn of the helix of radius CR and
/// pitch AV, measured as a sum of chords no longer than `step`.
inline double cycle_length(const TrajectoryParams& params, double step = kPriorStep) {
  require(std::isfinite(params.cr) && params.cr >= 0.0, "cycle_length: cr must be >= 0");
  require(std::isfinite(params.av) && params.av >= 0.0, "cycle_length: av must be >= 0");
  require(params.cr > 0.0 || params.av > 0.0, "cycle_length: cr and av both zero");
  require(std::isfinite(step) && step > 0.0, "cycle_length: step must be > 0");
  const double turn = std::hypot(kTwoPi * params.cr, params.av);
  const std::size_t n = detail::segments_for(turn, step);
  const double dn = static_cast<double>(n);
  const double chord = std::hypot(2.0 * params.cr * std::sin(std::numbers::pi / dn), params.av / dn);
  return dn * chord;
}

/// Expected number of force samples per spiral cycle.
inline int periodicity_prior(const TrajectoryParams& params, const MotionConstants& consts = {},
                             double step = kPriorStep) {
  params.validate();
  consts.validate();
  const double samples = cycle_length(params, step) / consts.speed(params.mv) * consts.fs;
  return std::max(1, static_cast<int>(std::lround(samples)));
}

/// Position, heading and rotation phase at a given arc length along a path.
struct PathPoint {
  Pose2 pos;
  double heading = 0.0;
  double phase = 0.0;
};

/// Monotone cursor for sampling a path at increasing arc lengths.
class PathCursor {
 public:
  explicit PathCursor(const Path& path) : path_(&path) {
    require(path.size() >= 2, "path cursor: path needs at least two waypoints");
  }

  PathPoint at(double s) {
    const auto& arc = path_->cumulative_arc_length;
    const std::size_t last = arc.size() - 1;
    s = std::clamp(s, 0.0, arc.back());
    while (segment_ + 1 < last && arc[segment_ + 1] < s) ++segment_;
    // Skip zero-length segments for the heading.
    std::size_t a = segment_;
    std::size_t b = segment_ + 1;
    const double span = arc[b] - arc[a];
    const double t = span > 0.0 ? (s - arc[a]) / span : 1.0;
    const Pose2 pa = path_->waypoints[a];
    const Pose2 pb = path_->waypoints[b];
    if (span > 0.0) heading_ = std::atan2(pb.y - pa.y, pb.x - pa.x);
    return {lerp(pa, pb, t), heading_,
            path_->phase[a] + t * (path_->phase[b] - path_->phase[a])};
  }

 private:
  const Path* path_;
  std::size_t segment_ = 0;
  double heading_ = 0.0;
};

/// CSV export: index, x_m, y_m, arc_m, cycle_index.
inline void write_path_csv(std::ostream& out, const Path& path) {
  const auto old_precision = out.precision(9);
  out << "index,x_m,y_m,arc_m,cycle_index\n";
  for (std::size_t i = 0; i < path.size(); ++i) {
    out << i << ',' << path.waypoints[i].x << ',' << path.waypoints[i].y << ','
        << path.cumulative_arc_length[i] << ',' << path.cycle_index(i) << '\n';
  }
  out.precision(old_precision);
}

}  // namespace grains

#endif  // GRAINS_TRAJECTORY_HPP
