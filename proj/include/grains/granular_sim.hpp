#ifndef GRAINS_GRANULAR_SIM_HPP
#define GRAINS_GRANULAR_SIM_HPP

// Synthetic drag-force traces for a probe raking through granular media.
//
// The drag at sample i is the sum of
//   base_drag * (1 + static boost)   static friction decaying after start-up
//   periodic_amplitude * sin(phase)  force modulation of the circular motion
//   eps ~ N(0, sigma(mv))            grain-contact noise
//   J(d)                             jamming force from objects in the wedge
//   swell * s                        surface swell ahead of a linear rake (optional)
// clamped at zero. d is the distance (cm) from the probe to the nearest part
// of any object inside the failure wedge in front of the probe.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numbers>
#include <optional>
#include <ostream>
#include <random>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "grains/geometry.hpp"
#include "grains/trajectory.hpp"

namespace grains {

struct MediumSpec {
  std::string name;
  double grain_diameter = 1.0;       // mm
  double roughness = 0.5;            // [0, 1]
  double base_drag = 5.0;            // N
  double periodic_amplitude = 1.0;   // N
  double noise_std_ref = 0.05;       // N, at the reference grain size and MV
  double jamming_gain = 3.0;         // N
  double rupture_distance = 6.0;     // cm
  double static_friction_factor = 1.0;
  double static_friction_decay = 500.0;  // iterations
  double goal_swell = 0.0;           // N per meter travelled, linear rakes only

  void validate() const {
    require(grain_diameter >= 0.0 && base_drag >= 0.0 && periodic_amplitude >= 0.0 &&
                noise_std_ref >= 0.0 && jamming_gain >= 0.0 && static_friction_decay >= 0.0 &&
                goal_swell >= 0.0,
            "medium '" + name + "': magnitudes must be >= 0");
    require(roughness >= 0.0 && roughness <= 1.0, "medium '" + name + "': roughness must lie in [0, 1]");
    require(rupture_distance > 0.0, "medium '" + name + "': rupture_distance must be > 0");
    require(static_friction_factor >= 1.0, "medium '" + name + "': static_friction_factor must be >= 1");
  }
};

inline constexpr double kReferenceGrainMm = 1.0;
inline constexpr double kReferenceMv = 0.2;

/// Standard deviation of the grain-contact noise at a given MV. Faster
/// probes see fewer independent contacts per sample.
inline double noise_std(const MediumSpec& m, double mv) {
  return m.noise_std_ref * (m.grain_diameter / kReferenceGrainMm) * (kReferenceMv / mv);
}

/// Jamming force at distance d (cm) from the nearest object in the wedge.
inline double jamming_force(const MediumSpec& m, double d_cm) {
  const double r = m.rupture_distance;
  const double depth = std::max(0.0, (r - std::max(0.0, d_cm)) / r);
  return m.jamming_gain * (1.0 + m.roughness) * depth * depth;
}

/// Shipped media, ordered by roughness: sand > cat litter > cassia seed > soybean.
inline std::vector<MediumSpec> medium_presets() {
  return {
      {"sand", 1.0, 0.9, 5.0, 1.0, 0.05, 3.0, 6.0, 1.4, 500.0, 0.0},
      {"cassia_seed", 3.0, 0.4, 4.0, 0.8, 0.03, 3.0, 4.0, 1.3, 500.0, 0.0},
      {"cat_litter", 3.5, 0.7, 4.5, 0.9, 0.03, 3.5, 6.5, 1.35, 500.0, 0.0},
      {"soybean", 6.5, 0.2, 3.5, 0.7, 0.03, 3.0, 2.5, 1.25, 500.0, 0.0},
  };
}

inline MediumSpec medium_preset(std::string_view name) {
  for (auto& m : medium_presets()) {
    if (m.name == name) return m;
  }
  throw InvalidArgument("unknown medium preset '" + std::string(name) + "'");
}

struct Disk {
  Pose2 center;
  double radius = 0.0;
};

/// Convex polygon, vertices in counter-clockwise or clockwise order.
struct Polygon {
  std::vector<Pose2> vertices;
};

struct ObjectSpec {
  std::variant<Disk, Polygon> shape;
  bool rigid = true;

  static ObjectSpec disk(Pose2 center, double radius) { return {Disk{center, radius}, true}; }
  static ObjectSpec polygon(std::vector<Pose2> vertices) { return {Polygon{std::move(vertices)}, true}; }
  /// Axis-aligned square of side `side` centred at `center`.
  static ObjectSpec square(Pose2 center, double side) {
    const double h = 0.5 * side;
    return polygon({{center.x - h, center.y - h},
                    {center.x + h, center.y - h},
                    {center.x + h, center.y + h},
                    {center.x - h, center.y + h}});
  }

  void validate() const;
  [[nodiscard]] bool contains(Pose2 p) const;
  /// Distance (m) to the object; 0 inside or on the boundary.
  [[nodiscard]] double distance_to(Pose2 p) const;
  /// Closest point of the object to p (p itself if inside).
  [[nodiscard]] Pose2 closest_point(Pose2 p) const;
  /// Distance (m) along the ray origin + t * dir (unit dir) to its first point in the object.
  [[nodiscard]] std::optional<double> ray_entry(Pose2 origin, Pose2 dir) const;
  [[nodiscard]] Rect bounds() const;
};

namespace detail {

inline double polygon_orientation(const std::vector<Pose2>& v) {
  double area2 = 0.0;
  for (std::size_t i = 0; i < v.size(); ++i) area2 += cross(v[i], v[(i + 1) % v.size()]);
  return area2;
}

inline Pose2 closest_on_segment(Pose2 a, Pose2 b, Pose2 p) {
  const Pose2 ab = b - a;
  const double len2 = dot(ab, ab);
  const double t = len2 > 0.0 ? std::clamp(dot(p - a, ab) / len2, 0.0, 1.0) : 0.0;
  return a + t * ab;
}

}  // namespace detail

inline void ObjectSpec::validate() const {
  if (const auto* d = std::get_if<Disk>(&shape)) {
    require(d->center.finite() && d->radius > 0.0, "object: disk radius must be > 0");
    return;
  }
  const auto& v = std::get<Polygon>(shape).vertices;
  require(v.size() >= 3, "object: polygon needs at least three vertices");
  const double orient = detail::polygon_orientation(v);
  require(std::abs(orient) > 1e-12, "object: polygon is degenerate");
  for (std::size_t i = 0; i < v.size(); ++i) {
    const Pose2 a = v[i];
    const Pose2 b = v[(i + 1) % v.size()];
    const Pose2 c = v[(i + 2) % v.size()];
    require(cross(b - a, c - b) * orient >= -1e-15, "object: polygon must be convex");
  }
}

inline bool ObjectSpec::contains(Pose2 p) const {
  if (const auto* d = std::get_if<Disk>(&shape)) return distance(p, d->center) <= d->radius;
  const auto& v = std::get<Polygon>(shape).vertices;
  const double orient = detail::polygon_orientation(v) > 0.0 ? 1.0 : -1.0;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (orient * cross(v[(i + 1) % v.size()] - v[i], p - v[i]) < 0.0) return false;
  }
  return true;
}

inline Pose2 ObjectSpec::closest_point(Pose2 p) const {
  if (contains(p)) return p;
  if (const auto* d = std::get_if<Disk>(&shape)) {
    return d->center + (d->radius / distance(p, d->center)) * (p - d->center);
  }
  const auto& v = std::get<Polygon>(shape).vertices;
  Pose2 best = v.front();
  double best_d = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < v.size(); ++i) {
    const Pose2 q = detail::closest_on_segment(v[i], v[(i + 1) % v.size()], p);
    const double dq = distance(p, q);
    if (dq < best_d) {
      best_d = dq;
      best = q;
    }
  }
  return best;
}

inline double ObjectSpec::distance_to(Pose2 p) const {
  if (const auto* d = std::get_if<Disk>(&shape)) return std::max(0.0, distance(p, d->center) - d->radius);
  return distance(p, closest_point(p));
}

inline std::optional<double> ObjectSpec::ray_entry(Pose2 origin, Pose2 dir) const {
  if (contains(origin)) return 0.0;
  if (const auto* d = std::get_if<Disk>(&shape)) {
    const Pose2 oc = origin - d->center;
    const double b = dot(oc, dir);
    const double c = dot(oc, oc) - d->radius * d->radius;
    const double disc = b * b - c;
    if (disc < 0.0) return std::nullopt;
    const double t = -b - std::sqrt(disc);
    if (t < 0.0) return std::nullopt;
    return t;
  }
  // Cyrus-Beck clipping against the convex polygon.
  const auto& v = std::get<Polygon>(shape).vertices;
  const double orient = detail::polygon_orientation(v) > 0.0 ? 1.0 : -1.0;
  double t_enter = 0.0;
  double t_exit = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < v.size(); ++i) {
    const Pose2 edge = v[(i + 1) % v.size()] - v[i];
    // Inward normal.
    const Pose2 n = orient > 0.0 ? Pose2{-edge.y, edge.x} : Pose2{edge.y, -edge.x};
    const double num = dot(n, origin - v[i]);
    const double den = dot(n, dir);
    if (den == 0.0) {
      if (num < 0.0) return std::nullopt;
      continue;
    }
    const double t = -num / den;
    if (den > 0.0) {
      t_enter = std::max(t_enter, t);
    } else {
      t_exit = std::min(t_exit, t);
    }
    if (t_enter > t_exit) return std::nullopt;
  }
  return t_enter;
}

inline Rect ObjectSpec::bounds() const {
  if (const auto* d = std::get_if<Disk>(&shape)) {
    return {d->center.x - d->radius, d->center.y - d->radius, d->center.x + d->radius,
            d->center.y + d->radius};
  }
  const auto& v = std::get<Polygon>(shape).vertices;
  Rect r{v[0].x, v[0].y, v[0].x, v[0].y};
  for (const auto& p : v) {
    r.min_x = std::min(r.min_x, p.x);
    r.min_y = std::min(r.min_y, p.y);
    r.max_x = std::max(r.max_x, p.x);
    r.max_y = std::max(r.max_y, p.y);
  }
  return r;
}

struct Scene {
  Rect workspace;
  std::vector<ObjectSpec> objects;
  Rect search_area;

  void validate() const {
    require(workspace.valid(), "scene: workspace must be a non-empty rectangle");
    require(search_area.valid() && workspace.contains(search_area),
            "scene: search_area must lie inside the workspace");
    for (const auto& o : objects) {
      o.validate();
      require(workspace.contains(o.bounds()), "scene: objects must lie inside the workspace");
    }
  }
};

/// Failure wedge in front of the probe: a sector of half-angle `half_angle`
/// (radians) about the heading, reaching `reach` cm.
struct WedgeParams {
  double half_angle = std::numbers::pi / 6.0;
  double reach = 6.0;

  void validate() const {
    require(half_angle > 0.0 && half_angle < 0.5 * std::numbers::pi,
            "wedge: half_angle must lie in (0, pi/2)");
    require(reach > 0.0, "wedge: reach must be > 0");
  }
};

/// Distance (cm) from pos to the nearest object surface; 0 inside an object,
/// +infinity when the scene has no objects.
inline double min_distance_to_objects(Pose2 pos, const Scene& scene) {
  double best = std::numeric_limits<double>::infinity();
  for (const auto& o : scene.objects) best = std::min(best, 100.0 * o.distance_to(pos));
  return best;
}

inline bool wedge_contains(Pose2 pos, double heading, const WedgeParams& wedge, Pose2 point) {
  const Pose2 d = point - pos;
  const double r = norm(d);
  if (r == 0.0) return true;
  if (100.0 * r > wedge.reach) return false;
  return std::abs(wrap_angle(std::atan2(d.y, d.x) - heading)) <= wedge.half_angle;
}

/// Distance (cm) from pos to the closest point of `object` lying inside the
/// wedge, or nullopt when the wedge does not reach the object.
///
/// Object and sector are both convex, so the closest point of their
/// intersection is either the object's overall closest point (when that lies
/// in the sector) or the entry point of one of the two bounding rays.
inline std::optional<double> wedge_distance(Pose2 pos, double heading, const WedgeParams& wedge,
                                            const ObjectSpec& object) {
  if (object.contains(pos)) return 0.0;
  const Pose2 q = object.closest_point(pos);
  if (wedge_contains(pos, heading, wedge, q)) return 100.0 * distance(pos, q);
  std::optional<double> best;
  for (double side : {-1.0, 1.0}) {
    if (auto t = object.ray_entry(pos, unit_from_angle(heading + side * wedge.half_angle))) {
      const double cm = 100.0 * *t;
      if (cm <= wedge.reach && (!best || cm < *best)) best = cm;
    }
  }
  return best;
}

/// Packing density phi = M / (rho * A * h).
inline double packing_density(double mass, double density, double area, double height) {
  require(mass > 0.0 && density > 0.0 && area > 0.0 && height > 0.0,
          "packing_density: all inputs must be > 0");
  return mass / (density * area * height);
}

struct ForceSample {
  std::size_t iteration = 0;
  double t = 0.0;
  Pose2 pos;
  double drag = 0.0;
};

struct ForceTrace {
  std::vector<ForceSample> samples;
  double fs = 62.5;
  double mv = 0.2;

  [[nodiscard]] std::size_t size() const { return samples.size(); }
  [[nodiscard]] std::vector<double> drags() const {
    std::vector<double> out;
    out.reserve(samples.size());
    for (const auto& s : samples) out.push_back(s.drag);
    return out;
  }
};

struct SimOptions {
  /// Wedge half-angle; the reach always equals the medium's rupture distance.
  double wedge_half_angle = std::numbers::pi / 6.0;
};

inline ForceTrace simulate_rake(const Scene& scene, const MediumSpec& medium, const Path& path,
                                double mv, const MotionConstants& consts, std::uint64_t seed,
                                const SimOptions& options = {}) {
  medium.validate();
  consts.validate();
  require(mv > 0.0 && mv <= 1.0, "simulate_rake: mv must lie in (0, 1]");
  require(path.size() >= 2, "simulate_rake: path needs at least two waypoints");
  for (const auto& p : path.waypoints) {
    require(scene.workspace.contains(p), "simulate_rake: path leaves the workspace");
  }
  require(!(min_distance_to_objects(path.start(), scene) == 0.0),
          "simulate_rake: probe may not start inside an object");
  const WedgeParams wedge{options.wedge_half_angle, medium.rupture_distance};
  wedge.validate();

  std::mt19937_64 rng(seed);
  std::normal_distribution<double> unit_normal(0.0, 1.0);
  // Swell strength varies from rake to rake; drawn from its own stream so the
  // noise sequence is shared between linear and spiral rakes with one seed.
  std::mt19937_64 swell_rng(seed ^ 0x9e3779b97f4a7c15ULL);
  const double swell =
      path.is_spiral() ? 0.0
                       : medium.goal_swell * std::uniform_real_distribution<double>(0.5, 1.5)(swell_rng);

  const double sigma = noise_std(medium, mv);
  const double ds = consts.speed(mv) / consts.fs;
  const auto count = static_cast<std::size_t>(std::floor(path.length() / ds + 1e-9)) + 1;

  ForceTrace trace;
  trace.fs = consts.fs;
  trace.mv = mv;
  trace.samples.reserve(count);
  PathCursor cursor(path);
  for (std::size_t i = 0; i < count; ++i) {
    const double s = static_cast<double>(i) * ds;
    const PathPoint pt = cursor.at(s);

    double boost = 0.0;
    if (static_cast<double>(i) < medium.static_friction_decay) {
      const double remain = 1.0 - static_cast<double>(i) / medium.static_friction_decay;
      boost = (medium.static_friction_factor - 1.0) * remain * remain;
    }

    double jam = 0.0;
    for (const auto& object : scene.objects) {
      if (auto d = wedge_distance(pt.pos, pt.heading, wedge, object)) {
        jam = std::max(jam, jamming_force(medium, *d));
      }
    }

    const double drag = medium.base_drag * (1.0 + boost) +
                        medium.periodic_amplitude * std::sin(pt.phase) + sigma * unit_normal(rng) +
                        jam + swell * s;
    trace.samples.push_back({i, static_cast<double>(i) / consts.fs, pt.pos, std::max(0.0, drag)});
  }
  return trace;
}

/// CSV export: iteration, t_s, x_m, y_m, drag_N.
inline void write_trace_csv(std::ostream& out, const ForceTrace& trace) {
  const auto old_precision = out.precision(9);
  out << "iteration,t_s,x_m,y_m,drag_N\n";
  for (const auto& s : trace.samples) {
    out << s.iteration << ',' << s.t << ',' << s.pos.x << ',' << s.pos.y << ',' << s.drag << '\n';
  }
  out.precision(old_precision);
}

}  // namespace grains

#endif  // GRAINS_GRANULAR_SIM_HPP
