#ifndef GRAINS_BPES_HPP
#define GRAINS_BPES_HPP

// Pre-touch exploration: BOA picks raking goals, the detector turns each
// slide into presence / absence reports, and a penetration routine decides
// where the probe re-enters the medium after a jamming stop.
//
// A slide starts with the probe circling in place (dwell) until the detector
// has settled and filled its training window, then rakes towards the goal.
// While the probe is out of the medium (repositioning) nothing is reported.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "grains/anomaly.hpp"
#include "grains/boa.hpp"
#include "grains/geometry.hpp"
#include "grains/granular_sim.hpp"
#include "grains/trajectory.hpp"

namespace grains {

// ---------------------------------------------------------------------------
// One raking slide
// ---------------------------------------------------------------------------

struct SlideOptions {
  TrajectoryParams trajectory{0.01, 0.01, 0.2};
  MotionConstants consts{};
  DetectorConfig detector{};
  double path_step = kDefaultPathStep;
  bool dwell = true;
  SimOptions sim{};
  /// When set, the detector is replaced by a fixed force threshold (N).
  std::optional<double> fixed_threshold;
  bool record_verdicts = false;
};

struct SlideOutcome {
  Path path;
  std::size_t dwell_cycles = 0;
  std::size_t samples = 0;            // samples consumed
  bool stopped = false;               // halted by a warning (or the fixed threshold)
  bool contact = false;               // probe reached an object
  std::optional<Verdict> warning;
  std::vector<Verdict> verdicts;      // every scored sample, when requested
  Pose2 stop_pos;                     // probe position at the last consumed sample
  double progress = 0.0;              // metres advanced along start->goal
  double stop_clearance_cm = std::numeric_limits<double>::infinity();
  double min_clearance_cm = std::numeric_limits<double>::infinity();
};

/// Dwell rotations needed so scoring begins before the base point advances.
inline std::size_t dwell_cycles_for(const SlideOptions& o) {
  if (!o.dwell || o.trajectory.cr == 0.0) return 0;
  const double ds = o.consts.speed(o.trajectory.mv) / o.consts.fs;
  const double per_cycle = kTwoPi * o.trajectory.cr / ds;
  const double needed = static_cast<double>(o.detector.settle + o.detector.train_window);
  return static_cast<std::size_t>(std::ceil(needed / per_cycle)) + 1;
}

inline SlideOutcome rake_slide(const Scene& scene, const MediumSpec& medium, Pose2 start, Pose2 goal,
                               const SlideOptions& options, std::uint64_t seed) {
  SlideOutcome out;
  out.dwell_cycles = dwell_cycles_for(options);
  out.path = gen_spiral(start, goal, options.trajectory, options.path_step, out.dwell_cycles);
  const ForceTrace trace = simulate_rake(scene, medium, out.path, options.trajectory.mv, options.consts, seed,
                                         options.sim);

  const double total = distance(start, goal);
  const double theta0 = kTwoPi * static_cast<double>(out.dwell_cycles);
  const double ds = options.consts.speed(options.trajectory.mv) / options.consts.fs;
  PathCursor cursor(out.path);
  std::optional<Detector> detector;
  if (!options.fixed_threshold) detector.emplace(options.detector);

  // The lead-out onto the goal is not periodic and is left unscored.
  const double scored_arc =
      out.path.is_spiral() ? out.path.cumulative_arc_length[out.path.rotation_end] : out.path.length();
  for (const auto& s : trace.samples) {
    const double arc = static_cast<double>(s.iteration) * ds;
    if (arc > scored_arc) break;
    const PathPoint pt = cursor.at(arc);
    const double base =
        options.trajectory.cr == 0.0 ? static_cast<double>(s.iteration) * ds
                                     : (pt.phase - theta0) / kTwoPi * options.trajectory.av;
    out.progress = std::clamp(base, 0.0, total);
    out.stop_pos = s.pos;
    out.samples = s.iteration + 1;
    const double clearance = min_distance_to_objects(s.pos, scene);
    out.stop_clearance_cm = clearance;
    out.min_clearance_cm = std::min(out.min_clearance_cm, clearance);
    if (clearance <= 0.0) {
      out.contact = true;
      break;
    }
    if (options.fixed_threshold) {
      if (s.drag >= *options.fixed_threshold) {
        out.stopped = true;
        break;
      }
    } else if (auto v = detector->push(s.drag)) {
      if (options.record_verdicts) out.verdicts.push_back(*v);
      if (v->kind == VerdictKind::JammingWarning) {
        out.stopped = true;
        out.warning = v;
        break;
      }
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Exploration state machine
// ---------------------------------------------------------------------------

struct ExplorationConfig {
  double report_spacing = 0.01;
  double presence_label = kPresenceLabel;
  double absence_label = kAbsenceLabel;
  double proximity_margin = 0.02;
  double step = 0.01;
  std::size_t max_slides = 40;
  double penetration_clearance = 0.015;
  double ei_floor = 1e-6;
  /// Goals closer than this to the probe are skipped by the acquisition.
  double min_goal_distance = 0.02;
  /// Cells this close to an earlier goal are not proposed again. A goal that
  /// could not be reached leaves the posterior unchanged, so without this the
  /// same slide would repeat.
  double revisit_radius = 0.02;

  void validate() const {
    require(report_spacing > 0.0 && proximity_margin > 0.0 && step > 0.0 && penetration_clearance > 0.0 &&
                min_goal_distance > 0.0 && revisit_radius >= 0.0,
            "exploration: distances must be > 0");
    require(max_slides >= 1, "exploration: max_slides must be >= 1");
  }
};

enum class Phase { Raking, Repositioning, Penetrating, Done };

struct ExplorationState {
  Pose2 x_init;
  Pose2 x_g;
  Pose2 x_e;
  Pose2 x_p;
  std::optional<Pose2> x_e1;
  std::size_t slide_count = 0;
  Phase phase = Phase::Raking;
};

enum class EventKind {
  SlideStarted,
  AbsenceReported,
  PresenceReported,
  JammingStop,
  Contact,
  PenetrationAttempt,
  GoalReassigned,
  Finished,
};

inline const char* to_string(EventKind k) {
  switch (k) {
    case EventKind::SlideStarted: return "slide_started";
    case EventKind::AbsenceReported: return "absence_reported";
    case EventKind::PresenceReported: return "presence_reported";
    case EventKind::JammingStop: return "jamming_stop";
    case EventKind::Contact: return "contact";
    case EventKind::PenetrationAttempt: return "penetration_attempt";
    case EventKind::GoalReassigned: return "goal_reassigned";
    case EventKind::Finished: return "finished";
  }
  return "unknown";
}

struct ExplorationEvent {
  EventKind kind = EventKind::SlideStarted;
  std::size_t slide = 0;
  Pose2 pos;
  double z = 0.0;          // JammingStop
  bool success = false;    // PenetrationAttempt
  std::string reason;      // Finished
};

struct ExplorationLog {
  std::vector<ExplorationEvent> events;

  [[nodiscard]] std::size_t count(EventKind k) const {
    return static_cast<std::size_t>(
        std::count_if(events.begin(), events.end(), [k](const auto& e) { return e.kind == k; }));
  }
};

struct ExplorationResult {
  ExplorationLog log;
  StiffnessField field;
  std::vector<StiffnessObservation> observations;
  std::size_t slides = 0;
  std::size_t contacts = 0;
  double min_clearance_cm = std::numeric_limits<double>::infinity();
};

/// Points at multiples of `spacing` from the start of the traversed segment.
inline std::vector<Pose2> quantize_reports(Pose2 start, Pose2 end, double spacing) {
  require(spacing > 0.0, "quantize_reports: spacing must be > 0");
  std::vector<Pose2> out;
  const double length = distance(start, end);
  if (length == 0.0) return out;
  const Pose2 u = (1.0 / length) * (end - start);
  for (std::size_t k = 1;; ++k) {
    const double s = static_cast<double>(k) * spacing;
    if (s > length + 1e-12) break;
    out.push_back(start + s * u);
  }
  return out;
}

/// Cells whose posterior mean reaches `threshold`.
inline std::vector<std::uint8_t> estimate_outline(const StiffnessField& field, double threshold = 3.5) {
  std::vector<std::uint8_t> mask(field.mean.size());
  for (std::size_t i = 0; i < mask.size(); ++i) mask[i] = field.mean[i] >= threshold ? 1 : 0;
  return mask;
}

/// Cells whose centre lies within `dilation` metres of an object.
inline std::vector<std::uint8_t> truth_mask(const Scene& scene, const GridSpec& grid, double dilation) {
  std::vector<std::uint8_t> mask(grid.cells());
  for (std::size_t i = 0; i < mask.size(); ++i) {
    mask[i] = min_distance_to_objects(grid.center(i), scene) <= 100.0 * dilation ? 1 : 0;
  }
  return mask;
}

/// Intersection over union; 1 when both masks are empty.
inline double iou(const std::vector<std::uint8_t>& a, const std::vector<std::uint8_t>& b) {
  require(a.size() == b.size(), "iou: masks differ in size");
  std::size_t inter = 0;
  std::size_t uni = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    inter += (a[i] != 0 && b[i] != 0) ? 1 : 0;
    uni += (a[i] != 0 || b[i] != 0) ? 1 : 0;
  }
  return uni == 0 ? 1.0 : static_cast<double>(inter) / static_cast<double>(uni);
}

struct BpesSetup {
  Pose2 x_init;
  GridSpec grid;
  BoaModel boa{};
  SlideOptions slide{};
  ExplorationConfig exploration{};
};

namespace detail {

inline Pose2 clamp_to(const Rect& r, Pose2 p) {
  return {std::clamp(p.x, r.min_x, r.max_x), std::clamp(p.y, r.min_y, r.max_y)};
}

inline std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t k) {
  std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (k + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

}  // namespace detail

class Bpes {
 public:
  Bpes(const Scene& scene, const MediumSpec& medium, BpesSetup setup, std::uint64_t seed)
      : scene_(scene), medium_(medium), setup_(std::move(setup)), seed_(seed), rng_(seed) {
    scene_.validate();
    setup_.grid.validate();
    setup_.exploration.validate();
    require(setup_.grid.area.contains(setup_.x_init), "bpes: x_init must lie inside the search area");
    require(min_distance_to_objects(setup_.x_init, scene_) > 100.0 * setup_.exploration.penetration_clearance,
            "bpes: objects too close to the initial position");
    state_.x_init = setup_.x_init;
    pos_ = setup_.x_init;
  }

  ExplorationResult run() {
    const auto& cfg = setup_.exploration;
    std::string reason = "max_slides";
    while (state_.slide_count < cfg.max_slides) {
      state_.phase = Phase::Raking;
      const Suggestion s = suggest();
      if (s.ei < cfg.ei_floor) {
        reason = "ei_floor";
        break;
      }
      state_.x_g = s.target;
      goals_.push_back(s.target);
      log(EventKind::GoalReassigned, s.target);
      const Pose2 start = pos_;
      const SlideOutcome out = slide(start, state_.x_g);
      if (!out.stopped && !out.contact) {
        pos_ = state_.x_g;
        continue;
      }
      // Jamming stop: the far end becomes the penetration candidate and the
      // slide start the new goal.
      state_.x_p = out.stop_pos;
      state_.x_e = state_.x_g;
      state_.x_g = start;
      penetrate_and_return();
    }
    state_.phase = Phase::Done;
    log(EventKind::Finished, pos_, 0.0, false, reason);

    ExplorationResult result;
    result.log = std::move(log_);
    result.observations = observations_;
    result.field = export_field(fit_boa(dedupe(observations_, setup_.grid.resolution), setup_.boa), setup_.grid);
    result.slides = state_.slide_count;
    result.contacts = contacts_;
    result.min_clearance_cm = min_clearance_cm_;
    return result;
  }

  [[nodiscard]] const ExplorationState& state() const { return state_; }

 private:
  Suggestion suggest() {
    const auto obs = dedupe(observations_, setup_.grid.resolution);
    // Goals next to the probe would give a degenerate slide; mask them out.
    const BoaFit fit = fit_boa(obs, setup_.boa);
    const double y_plus = incumbent(obs);
    const auto centers = setup_.grid.centers();
    const gp::GpPosterior post = boa_predict(fit, centers);
    double best = -1.0;
    std::vector<std::size_t> tied;
    for (std::size_t i = 0; i < centers.size(); ++i) {
      if (distance(centers[i], pos_) < setup_.exploration.min_goal_distance) continue;
      if (std::any_of(goals_.begin(), goals_.end(), [&](Pose2 g) {
            return distance(centers[i], g) < setup_.exploration.revisit_radius;
          })) {
        continue;
      }
      const double a = ei(post.mean[i], post.std[i], y_plus);
      if (a > best) {
        best = a;
        tied.assign(1, i);
      } else if (a == best) {
        tied.push_back(i);
      }
    }
    require(!tied.empty(), "bpes: no admissible goal in the search area");
    std::size_t pick = tied.front();
    if (tied.size() > 1) pick = tied[std::uniform_int_distribution<std::size_t>(0, tied.size() - 1)(rng_)];
    return {centers[pick], pick, best};
  }

  SlideOutcome slide(Pose2 start, Pose2 goal) {
    const std::size_t index = state_.slide_count++;
    log(EventKind::SlideStarted, start);
    SlideOutcome out = rake_slide(scene_, medium_, start, goal, setup_.slide, detail::mix_seed(seed_, index));
    min_clearance_cm_ = std::min(min_clearance_cm_, out.min_clearance_cm);

    const bool stopped = out.stopped || out.contact;
    // Absence every report_spacing of base-line progress; the last spacing
    // before a stop is left unreported.
    const Pose2 u = (1.0 / distance(start, goal)) * (goal - start);
    const double reported = stopped ? out.progress - setup_.exploration.report_spacing : out.progress;
    if (reported > 0.0) {
      for (const Pose2& p : quantize_reports(start, start + reported * u, setup_.exploration.report_spacing)) {
        report(EventKind::AbsenceReported, p, setup_.exploration.absence_label);
      }
    }
    if (out.contact) {
      ++contacts_;
      log(EventKind::Contact, out.stop_pos);
    } else if (out.stopped) {
      log(EventKind::JammingStop, out.stop_pos, out.warning ? out.warning->zscore : 0.0);
    }
    if (stopped) report(EventKind::PresenceReported, out.stop_pos, setup_.exploration.presence_label);
    return out;
  }

  void penetrate_and_return() {
    const auto& cfg = setup_.exploration;
    state_.phase = Phase::Penetrating;
    for (;;) {
      const bool inside = setup_.grid.area.contains(state_.x_e);
      const bool ok = inside && min_distance_to_objects(state_.x_e, scene_) > 100.0 * cfg.penetration_clearance;
      log(EventKind::PenetrationAttempt, state_.x_e, 0.0, ok);
      if (ok) {
        if (!state_.x_e1) state_.x_e1 = state_.x_e;
        if (state_.slide_count >= cfg.max_slides) {
          pos_ = state_.x_e;
          return;
        }
        state_.phase = Phase::Raking;
        const Pose2 goal = state_.x_g;
        const SlideOutcome back = slide(state_.x_e, goal);
        if (!back.stopped && !back.contact) {
          pos_ = goal;
          return;
        }
        state_.x_p = back.stop_pos;
        reposition();
        return;
      }
      const double remaining = distance(state_.x_e, state_.x_g);
      if (remaining <= cfg.step) {
        reposition();
        return;
      }
      state_.x_e = state_.x_e + (cfg.step / remaining) * (state_.x_g - state_.x_e);
      if (distance(state_.x_e, state_.x_p) <= cfg.proximity_margin) {
        reposition();
        return;
      }
    }
  }

  void reposition() {
    state_.phase = Phase::Repositioning;
    pos_ = state_.x_e1.value_or(state_.x_init);
  }

  void report(EventKind kind, Pose2 p, double value) {
    const Pose2 q = detail::clamp_to(setup_.grid.area, p);
    observations_.push_back({q, value});
    log(kind, q);
  }

  void log(EventKind kind, Pose2 p, double z = 0.0, bool success = false, std::string reason = {}) {
    log_.events.push_back({kind, state_.slide_count, p, z, success, std::move(reason)});
  }

  Scene scene_;
  MediumSpec medium_;
  BpesSetup setup_;
  std::uint64_t seed_;
  std::mt19937_64 rng_;
  ExplorationState state_;
  Pose2 pos_;
  std::vector<StiffnessObservation> observations_;
  std::vector<Pose2> goals_;
  ExplorationLog log_;
  std::size_t contacts_ = 0;
  double min_clearance_cm_ = std::numeric_limits<double>::infinity();
};

inline ExplorationResult run_bpes(const Scene& scene, const MediumSpec& medium, const BpesSetup& setup,
                                  std::uint64_t seed) {
  return Bpes(scene, medium, setup, seed).run();
}

}  // namespace grains

#endif  // GRAINS_BPES_HPP
