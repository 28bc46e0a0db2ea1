#ifndef GRAINS_EXPERIMENT_HPP
#define GRAINS_EXPERIMENT_HPP

// Experiment configuration and per-seed campaigns shared by the CLI and the
// acceptance runner. Configs are a single JSON document; unknown keys are
// rejected with the path of the offending field.

#include <algorithm>
#include <cstdint>
#include <functional>
#include <future>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <thread>
#include <vector>

#include "grains/anomaly.hpp"
#include "grains/boa.hpp"
#include "grains/bpes.hpp"
#include "grains/calibration.hpp"
#include "grains/granular_sim.hpp"
#include "grains/io.hpp"
#include "grains/trajectory.hpp"

namespace grains {

// ---------------------------------------------------------------------------
// Config
// ---------------------------------------------------------------------------

struct RakeSpec {
  Pose2 start{0.05, 0.2};
  Pose2 goal{0.35, 0.2};
  bool dwell = true;
};

struct CalibrationCampaign {
  CalibrationConfig config{};
  std::size_t samples_per_mv = 1'000'000;
  std::uint64_t seed = 1000;
  // Object-free box the calibration rakes run through.
  Rect workspace{0.0, 0.0, 0.9, 0.6};
  Pose2 start{0.05, 0.3};
  Pose2 goal{0.85, 0.3};
};

struct ExplorationSpec {
  Pose2 x_init{0.07, 0.07};
  double resolution = 0.005;
  BoaModel boa{};
  ExplorationConfig config{};
  double outline_threshold = 3.5;
};

struct ExperimentConfig {
  Scene scene{{0.0, 0.0, 0.4, 0.4}, {}, {0.05, 0.05, 0.35, 0.35}};
  MediumSpec medium = medium_preset("sand");
  TrajectoryParams trajectory{0.01, 0.01, 0.2};
  bool mv_from_calibration = true;  // trajectory.mv not given in the file
  RakeSpec rake{};
  DetectorConfig detector{};
  bool threshold_from_calibration = true;  // detector.zs_threshold not given
  bool prior_from_trajectory = true;       // detector.periodicity_prior not given
  CalibrationCampaign calibration{};
  std::optional<std::string> calibration_report;
  ExplorationSpec exploration{};
  std::vector<std::uint64_t> seeds{0};
  std::string output_dir = "out";
  std::size_t workers = 0;  // 0: hardware concurrency
};

namespace detail {

/// Object reader that remembers which keys were consumed.
class Fields {
 public:
  Fields(const io::json& j, std::string path) : j_(j), path_(std::move(path)) {
    require(j_.is_object(), path_ + ": expected an object");
  }

  [[nodiscard]] bool has(const std::string& key) const { return j_.contains(key); }
  [[nodiscard]] std::string at(const std::string& key) const { return path_ + "." + key; }

  const io::json& raw(const std::string& key) {
    require(has(key), at(key) + ": missing");
    used_.insert(key);
    return j_.at(key);
  }

  template <class T>
  T get(const std::string& key) {
    const io::json& v = raw(key);
    try {
      return v.get<T>();
    } catch (const io::json::exception&) {
      throw InvalidArgument(at(key) + ": wrong type");
    }
  }

  template <class T>
  void read(const std::string& key, T& target) {
    if (has(key)) target = get<T>(key);
  }

  void done() const {
    for (const auto& [key, value] : j_.items()) {
      require(used_.count(key) != 0, at(key) + ": unknown field");
    }
  }

 private:
  const io::json& j_;
  std::string path_;
  std::set<std::string> used_;
};

inline Pose2 read_point(const io::json& j, const std::string& path) {
  require(j.is_array() && j.size() == 2 && j[0].is_number() && j[1].is_number(), path + ": expected [x, y]");
  return {j[0].get<double>(), j[1].get<double>()};
}

inline Rect read_rect(const io::json& j, const std::string& path) {
  require(j.is_array() && j.size() == 4, path + ": expected [min_x, min_y, max_x, max_y]");
  for (const auto& v : j) require(v.is_number(), path + ": expected numbers");
  return {j[0].get<double>(), j[1].get<double>(), j[2].get<double>(), j[3].get<double>()};
}

inline ObjectSpec read_object(const io::json& j, const std::string& path) {
  Fields f(j, path);
  ObjectSpec o;
  const std::string type = f.get<std::string>("type");
  if (type == "disk") {
    o = ObjectSpec::disk(read_point(f.raw("center"), f.at("center")), f.get<double>("radius"));
  } else if (type == "square") {
    o = ObjectSpec::square(read_point(f.raw("center"), f.at("center")), f.get<double>("side"));
  } else if (type == "polygon") {
    const io::json& v = f.raw("vertices");
    require(v.is_array(), f.at("vertices") + ": expected an array of points");
    std::vector<Pose2> pts;
    for (std::size_t i = 0; i < v.size(); ++i) pts.push_back(read_point(v[i], f.at("vertices") + "[" + std::to_string(i) + "]"));
    o = ObjectSpec::polygon(std::move(pts));
  } else {
    throw InvalidArgument(f.at("type") + ": unknown object type '" + type + "'");
  }
  f.done();
  o.validate();
  return o;
}

inline MediumSpec read_medium(const io::json& j, const std::string& path) {
  if (j.is_string()) return medium_preset(j.get<std::string>());
  Fields f(j, path);
  MediumSpec m;
  if (f.has("preset")) m = medium_preset(f.get<std::string>("preset"));
  f.read("name", m.name);
  f.read("grain_diameter_mm", m.grain_diameter);
  f.read("roughness", m.roughness);
  f.read("base_drag", m.base_drag);
  f.read("periodic_amplitude", m.periodic_amplitude);
  f.read("noise_std_ref", m.noise_std_ref);
  f.read("jamming_gain", m.jamming_gain);
  f.read("rupture_distance_cm", m.rupture_distance);
  f.read("static_friction_factor", m.static_friction_factor);
  f.read("static_friction_decay", m.static_friction_decay);
  f.read("goal_swell", m.goal_swell);
  f.done();
  m.validate();
  return m;
}

inline void read_window_model(const io::json& j, const std::string& path, WindowModelOptions& m) {
  Fields f(j, path);
  f.read("optimize", m.optimize);
  f.read("restarts", m.optimizer.restarts);
  f.read("warm_restarts", m.warm_restarts);
  f.read("max_evaluations", m.optimizer.max_evaluations);
  f.done();
}

}  // namespace detail

inline ExperimentConfig parse_config(const io::json& root) {
  using detail::Fields;
  ExperimentConfig c;
  Fields top(root, "config");

  if (top.has("scene")) {
    Fields f(top.raw("scene"), "config.scene");
    if (f.has("workspace")) c.scene.workspace = detail::read_rect(f.raw("workspace"), f.at("workspace"));
    if (f.has("search_area")) c.scene.search_area = detail::read_rect(f.raw("search_area"), f.at("search_area"));
    if (f.has("objects")) {
      const io::json& objs = f.raw("objects");
      require(objs.is_array(), f.at("objects") + ": expected an array");
      for (std::size_t i = 0; i < objs.size(); ++i) {
        c.scene.objects.push_back(detail::read_object(objs[i], f.at("objects") + "[" + std::to_string(i) + "]"));
      }
    }
    f.done();
  }
  if (top.has("medium")) c.medium = detail::read_medium(top.raw("medium"), "config.medium");

  if (top.has("trajectory")) {
    Fields f(top.raw("trajectory"), "config.trajectory");
    f.read("cr", c.trajectory.cr);
    f.read("av", c.trajectory.av);
    if (f.has("mv")) {
      c.trajectory.mv = f.get<double>("mv");
      c.mv_from_calibration = false;
    }
    f.done();
  }
  if (top.has("rake")) {
    Fields f(top.raw("rake"), "config.rake");
    if (f.has("start")) c.rake.start = detail::read_point(f.raw("start"), f.at("start"));
    if (f.has("goal")) c.rake.goal = detail::read_point(f.raw("goal"), f.at("goal"));
    f.read("dwell", c.rake.dwell);
    f.done();
  }

  c.detector.settle = 1000;
  if (top.has("detector")) {
    Fields f(top.raw("detector"), "config.detector");
    f.read("train_window", c.detector.train_window);
    f.read("predict_horizon", c.detector.predict_horizon);
    if (f.has("zs_threshold")) {
      c.detector.zs_threshold = f.get<double>("zs_threshold");
      c.threshold_from_calibration = false;
    }
    f.read("debounce", c.detector.debounce);
    f.read("sigma_floor", c.detector.sigma_floor);
    if (f.has("periodicity_prior")) {
      c.detector.periodicity_prior = f.get<double>("periodicity_prior");
      c.prior_from_trajectory = false;
    }
    f.read("settle", c.detector.settle);
    if (f.has("model")) detail::read_window_model(f.raw("model"), f.at("model"), c.detector.model);
    f.done();
  }

  if (top.has("calibration")) {
    Fields f(top.raw("calibration"), "config.calibration");
    auto& cc = c.calibration.config;
    f.read("mv_grid", cc.mv_grid);
    f.read("cr", cc.cr);
    f.read("av", cc.av);
    f.read("segment_length", cc.segment_length);
    f.read("min_segments", cc.min_segments);
    f.read("discard_head", cc.discard_head);
    f.read("sigma_floor", cc.sigma_floor);
    f.read("samples_per_mv", c.calibration.samples_per_mv);
    f.read("seed", c.calibration.seed);
    if (f.has("model")) detail::read_window_model(f.raw("model"), f.at("model"), cc.model);
    if (f.has("report")) c.calibration_report = f.get<std::string>("report");
    f.done();
  }

  if (top.has("exploration")) {
    Fields f(top.raw("exploration"), "config.exploration");
    auto& e = c.exploration;
    if (f.has("x_init")) e.x_init = detail::read_point(f.raw("x_init"), f.at("x_init"));
    f.read("resolution", e.resolution);
    f.read("report_spacing", e.config.report_spacing);
    f.read("presence_label", e.config.presence_label);
    f.read("absence_label", e.config.absence_label);
    f.read("proximity_margin", e.config.proximity_margin);
    f.read("step", e.config.step);
    f.read("max_slides", e.config.max_slides);
    f.read("penetration_clearance", e.config.penetration_clearance);
    f.read("ei_floor", e.config.ei_floor);
    f.read("min_goal_distance", e.config.min_goal_distance);
    f.read("revisit_radius", e.config.revisit_radius);
    f.read("outline_threshold", e.outline_threshold);
    if (f.has("boa")) {
      Fields b(f.raw("boa"), f.at("boa"));
      b.read("variance", e.boa.kernel.variance);
      b.read("length_scale", e.boa.kernel.length_scale);
      b.read("noise_variance", e.boa.noise_variance);
      b.done();
    }
    f.done();
  }

  if (top.has("seeds")) {
    c.seeds = top.get<std::vector<std::uint64_t>>("seeds");
    require(!c.seeds.empty(), "config.seeds: must not be empty");
  }
  top.read("output_dir", c.output_dir);
  top.read("workers", c.workers);
  top.done();

  c.scene.validate();
  c.trajectory.validate();
  c.calibration.config.validate();
  c.exploration.config.validate();
  if (c.prior_from_trajectory) c.detector.periodicity_prior = periodicity_prior(c.trajectory);
  return c;
}

inline ExperimentConfig load_config(const std::string& path) { return parse_config(io::read_json_file(path)); }

/// Fills MV and threshold from a calibration report where the config left
/// them open; the periodicity prior follows the final trajectory.
inline void apply_calibration(ExperimentConfig& c, const CalibrationSelection& s) {
  if (c.mv_from_calibration) c.trajectory.mv = s.mv_star;
  if (c.threshold_from_calibration) c.detector.zs_threshold = s.zs_bar;
  if (c.prior_from_trajectory) c.detector.periodicity_prior = periodicity_prior(c.trajectory);
}

// ---------------------------------------------------------------------------
// Campaign helpers
// ---------------------------------------------------------------------------

/// Object-free calibration rakes for one MV, at least `samples` long in total.
inline std::vector<std::vector<double>> calibration_rakes(const MediumSpec& medium, const CalibrationCampaign& camp,
                                                          double mv) {
  const Scene empty{camp.workspace, {}, camp.workspace};
  const TrajectoryParams tp{camp.config.cr, camp.config.av, mv};
  const Path path = gen_spiral(camp.start, camp.goal, tp);
  std::vector<std::vector<double>> out;
  std::size_t n = 0;
  for (std::uint64_t k = 0; n < camp.samples_per_mv; ++k) {
    out.push_back(simulate_rake(empty, medium, path, mv, {}, camp.seed + k).drags());
    n += out.back().size();
  }
  return out;
}

/// Runs fn(seed) for every seed on up to `workers` threads; results keep seed order.
template <class Fn>
auto for_each_seed(const std::vector<std::uint64_t>& seeds, std::size_t workers, Fn fn) {
  using R = std::invoke_result_t<Fn, std::uint64_t>;
  if (workers == 0) workers = std::max(1u, std::thread::hardware_concurrency());
  std::vector<R> results;
  results.reserve(seeds.size());
  for (std::size_t i = 0; i < seeds.size(); i += workers) {
    std::vector<std::future<R>> batch;
    for (std::size_t j = i; j < std::min(seeds.size(), i + workers); ++j) {
      batch.push_back(std::async(std::launch::async, fn, seeds[j]));
    }
    for (auto& f : batch) results.push_back(f.get());
  }
  return results;
}

inline CalibrationReport run_calibration(const MediumSpec& medium, const CalibrationCampaign& camp,
                                         std::size_t workers = 0) {
  camp.config.validate();
  std::vector<std::uint64_t> idx(camp.config.mv_grid.size());
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
  const auto rows = for_each_seed(idx, workers, [&](std::uint64_t i) {
    const double mv = camp.config.mv_grid[i];
    const auto rakes = calibration_rakes(medium, camp, mv);
    const int t = periodicity_prior({camp.config.cr, camp.config.av, mv});
    const MvEvaluation e = evaluate_mv(std::span<const std::vector<double>>(rakes), t, camp.config);
    return CalibrationRow{mv, t, e.rmse, e.max_abs_z};
  });
  return replay(rows);
}

inline double median(std::vector<double> v) {
  require(!v.empty(), "median: empty input");
  std::sort(v.begin(), v.end());
  const std::size_t m = v.size() / 2;
  return v.size() % 2 == 1 ? v[m] : 0.5 * (v[m - 1] + v[m]);
}

// ---------------------------------------------------------------------------
// Summaries
// ---------------------------------------------------------------------------

struct SeedOutcome {
  std::uint64_t seed = 0;
  bool stopped = false;
  bool contact = false;
  std::optional<std::size_t> warning_iteration;
  double stop_clearance_cm = std::numeric_limits<double>::infinity();
  double min_clearance_cm = std::numeric_limits<double>::infinity();
  std::size_t slides = 0;
  std::optional<double> iou;
};

struct RunSummary {
  std::vector<SeedOutcome> seeds;
  std::optional<double> median_stop_cm;   // over runs that stopped without contact
  std::optional<double> median_slides;
  std::optional<double> median_iou;
  std::size_t contacts = 0;
};

inline RunSummary summarize(std::vector<SeedOutcome> seeds) {
  RunSummary s;
  std::vector<double> stops;
  std::vector<double> slides;
  std::vector<double> ious;
  for (const auto& o : seeds) {
    if (o.contact) ++s.contacts;
    if (o.stopped && !o.contact) stops.push_back(o.stop_clearance_cm);
    if (o.slides > 0) slides.push_back(static_cast<double>(o.slides));
    if (o.iou) ious.push_back(*o.iou);
  }
  if (!stops.empty()) s.median_stop_cm = median(stops);
  if (!slides.empty()) s.median_slides = median(slides);
  if (!ious.empty()) s.median_iou = median(ious);
  s.seeds = std::move(seeds);
  return s;
}

inline io::json to_json(const RunSummary& s) {
  auto opt = [](const auto& v) { return v ? io::num(static_cast<double>(*v)) : io::json(nullptr); };
  io::json seeds = io::json::array();
  for (const auto& o : s.seeds) {
    seeds.push_back({{"seed", o.seed},
                     {"stopped", o.stopped},
                     {"contact", o.contact},
                     {"warning_iteration", opt(o.warning_iteration)},
                     {"stop_clearance_cm", io::num(o.stop_clearance_cm)},
                     {"min_clearance_cm", io::num(o.min_clearance_cm)},
                     {"slides", o.slides},
                     {"iou", opt(o.iou)}});
  }
  return {{"seeds", seeds},
          {"contacts", s.contacts},
          {"median_stop_cm", opt(s.median_stop_cm)},
          {"median_slides", opt(s.median_slides)},
          {"median_iou", opt(s.median_iou)}};
}

// ---------------------------------------------------------------------------
// Campaigns
// ---------------------------------------------------------------------------

inline SlideOptions slide_options(const ExperimentConfig& c) {
  SlideOptions o;
  o.trajectory = c.trajectory;
  o.detector = c.detector;
  o.dwell = c.rake.dwell;
  return o;
}

inline BpesSetup bpes_setup(const ExperimentConfig& c) {
  BpesSetup s;
  s.x_init = c.exploration.x_init;
  s.grid = {c.scene.search_area, c.exploration.resolution};
  s.boa = c.exploration.boa;
  s.slide = slide_options(c);
  s.exploration = c.exploration.config;
  return s;
}

inline SeedOutcome outcome_of(std::uint64_t seed, const SlideOutcome& o) {
  SeedOutcome s;
  s.seed = seed;
  s.stopped = o.stopped;
  s.contact = o.contact;
  if (o.warning) s.warning_iteration = o.warning->iteration;
  if (o.stopped || o.contact) s.stop_clearance_cm = o.stop_clearance_cm;
  s.min_clearance_cm = o.min_clearance_cm;
  return s;
}

struct ExploreRun {
  ExplorationResult result;
  std::vector<std::uint8_t> mask;
  std::vector<std::uint8_t> truth;
  double iou = 0.0;
};

inline ExploreRun explore_seed(const ExperimentConfig& c, std::uint64_t seed) {
  const BpesSetup setup = bpes_setup(c);
  ExploreRun run;
  run.result = run_bpes(c.scene, c.medium, setup, seed);
  run.mask = estimate_outline(run.result.field, c.exploration.outline_threshold);
  run.truth = truth_mask(c.scene, setup.grid, c.medium.rupture_distance / 100.0);
  run.iou = iou(run.mask, run.truth);
  return run;
}

}  // namespace grains

#endif  // GRAINS_EXPERIMENT_HPP
