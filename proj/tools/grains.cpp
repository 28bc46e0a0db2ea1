// grains: experiment runner.
//
//   grains simulate  --config cfg.json [--seed N] [--out DIR]
//   grains calibrate --config cfg.json [--replay-table rows.json]
//   grains detect    --config cfg.json [--baseline-threshold 15]
//   grains explore   --config cfg.json
//   grains report    --out DIR

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"

#include "grains/experiment.hpp"

namespace fs = std::filesystem;
using namespace grains;

namespace {

struct Options {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out;
  std::optional<std::string> replay_table;
  std::optional<double> baseline_threshold;
};

std::string seed_file(const std::string& dir, const std::string& stem, std::uint64_t seed, const char* ext) {
  return (fs::path(dir) / (stem + "_seed" + std::to_string(seed) + ext)).string();
}

ExperimentConfig load(const Options& o) {
  ExperimentConfig c = o.config.empty() ? parse_config(io::json::object()) : load_config(o.config);
  if (o.seed) c.seeds = {*o.seed};
  if (o.out) c.output_dir = *o.out;
  fs::create_directories(c.output_dir);
  return c;
}

std::optional<CalibrationReport> find_calibration(const ExperimentConfig& c) {
  const std::string path = c.calibration_report.value_or((fs::path(c.output_dir) / "calibration.json").string());
  if (!fs::exists(path)) return std::nullopt;
  return io::calibration_from_json(io::read_json_file(path));
}

/// MV and threshold from the calibration report unless the config pins them.
void resolve_calibration(ExperimentConfig& c, bool need_threshold) {
  if (!c.mv_from_calibration && !c.threshold_from_calibration) return;
  if (auto r = find_calibration(c)) {
    apply_calibration(c, r->selected);
    return;
  }
  require(!need_threshold || !c.threshold_from_calibration,
          "missing threshold: run 'grains calibrate' first or set detector.zs_threshold");
}

void print_summary(const char* title, const RunSummary& s) {
  std::printf("%s\n%6s %8s %8s %10s %10s %7s %7s\n", title, "seed", "stopped", "contact", "warn_it", "stop_cm",
              "slides", "iou");
  for (const auto& o : s.seeds) {
    std::printf("%6llu %8s %8s %10s %10s %7zu %7s\n", static_cast<unsigned long long>(o.seed),
                o.stopped ? "yes" : "no", o.contact ? "yes" : "no",
                o.warning_iteration ? std::to_string(*o.warning_iteration).c_str() : "-",
                o.stopped || o.contact ? io::fmt(o.stop_clearance_cm).c_str() : "-", o.slides,
                o.iou ? io::fmt(*o.iou).c_str() : "-");
  }
  auto show = [](const std::optional<double>& v) { return v ? io::fmt(*v) : std::string("-"); };
  std::printf("contacts %zu/%zu  median stop %s cm  median slides %s  median IoU %s\n", s.contacts,
              s.seeds.size(), show(s.median_stop_cm).c_str(), show(s.median_slides).c_str(),
              show(s.median_iou).c_str());
}

int cmd_simulate(const Options& o) {
  ExperimentConfig c = load(o);
  resolve_calibration(c, false);
  const SlideOptions so = slide_options(c);
  const Path path = c.trajectory.cr == 0.0
                        ? gen_linear(c.rake.start, c.rake.goal)
                        : gen_spiral(c.rake.start, c.rake.goal, c.trajectory, so.path_step, dwell_cycles_for(so));
  io::write_file((fs::path(c.output_dir) / "path.csv").string(), [&](std::ostream& out) { write_path_csv(out, path); });
  for_each_seed(c.seeds, c.workers, [&](std::uint64_t seed) {
    const ForceTrace trace = simulate_rake(c.scene, c.medium, path, c.trajectory.mv, so.consts, seed);
    io::write_file(seed_file(c.output_dir, "trace", seed, ".csv"),
                   [&](std::ostream& out) { write_trace_csv(out, trace); });
    return trace.size();
  });
  std::printf("wrote %zu traces to %s\n", c.seeds.size(), c.output_dir.c_str());
  return 0;
}

int cmd_calibrate(const Options& o) {
  ExperimentConfig c = load(o);
  CalibrationReport report;
  if (o.replay_table) {
    report = replay(io::calibration_rows_from_json(io::read_json_file(*o.replay_table)));
  } else {
    report = run_calibration(c.medium, c.calibration, c.workers);
  }
  io::write_file((fs::path(c.output_dir) / "calibration.json").string(),
                 [&](std::ostream& out) { out << io::to_json(report).dump(2) << '\n'; });
  const std::string table = io::render_table(report, c.medium.name);
  io::write_file((fs::path(c.output_dir) / "calibration_table.txt").string(),
                 [&](std::ostream& out) { out << table; });
  std::fputs(table.c_str(), stdout);
  return 0;
}

int cmd_detect(const Options& o) {
  ExperimentConfig c = load(o);
  resolve_calibration(c, true);
  SlideOptions so = slide_options(c);
  so.record_verdicts = true;
  const auto outcomes = for_each_seed(c.seeds, c.workers, [&](std::uint64_t seed) {
    const SlideOutcome r = rake_slide(c.scene, c.medium, c.rake.start, c.rake.goal, so, seed);
    io::write_file(seed_file(c.output_dir, "verdicts", seed, ".jsonl"),
                   [&](std::ostream& out) { io::write_verdicts_jsonl(out, r.verdicts); });
    return outcome_of(seed, r);
  });
  const RunSummary summary = summarize(outcomes);
  io::write_file((fs::path(c.output_dir) / "detect_summary.json").string(),
                 [&](std::ostream& out) { out << to_json(summary).dump(2) << '\n'; });
  std::printf("MV %s, threshold %s, prior %s\n", io::fmt(c.trajectory.mv).c_str(),
              io::fmt(c.detector.zs_threshold).c_str(), io::fmt(c.detector.periodicity_prior).c_str());
  print_summary("detector", summary);

  if (o.baseline_threshold) {
    SlideOptions base = slide_options(c);
    base.fixed_threshold = *o.baseline_threshold;
    const auto b = for_each_seed(c.seeds, c.workers, [&](std::uint64_t seed) {
      return outcome_of(seed, rake_slide(c.scene, c.medium, c.rake.start, c.rake.goal, base, seed));
    });
    const RunSummary bs = summarize(b);
    io::write_file((fs::path(c.output_dir) / "baseline_summary.json").string(),
                   [&](std::ostream& out) { out << to_json(bs).dump(2) << '\n'; });
    std::printf("\n");
    print_summary(("fixed threshold " + io::fmt(*o.baseline_threshold) + " N").c_str(), bs);
  }
  return 0;
}

int cmd_explore(const Options& o) {
  ExperimentConfig c = load(o);
  resolve_calibration(c, true);
  const auto outcomes = for_each_seed(c.seeds, c.workers, [&](std::uint64_t seed) {
    const ExploreRun run = explore_seed(c, seed);
    const GridSpec& grid = run.result.field.grid;
    io::write_file(seed_file(c.output_dir, "events", seed, ".jsonl"),
                   [&](std::ostream& out) { io::write_events_jsonl(out, run.result.log); });
    io::write_file(seed_file(c.output_dir, "field_mean", seed, ".csv"),
                   [&](std::ostream& out) { io::write_grid_csv(out, grid, run.result.field.mean); });
    io::write_file(seed_file(c.output_dir, "field_variance", seed, ".csv"),
                   [&](std::ostream& out) { io::write_grid_csv(out, grid, run.result.field.variance); });
    io::write_file(seed_file(c.output_dir, "mask", seed, ".csv"),
                   [&](std::ostream& out) { io::write_mask_csv(out, grid, run.mask); });
    SeedOutcome s;
    s.seed = seed;
    s.contact = run.result.contacts > 0;
    s.min_clearance_cm = run.result.min_clearance_cm;
    s.slides = run.result.slides;
    s.iou = run.iou;
    return s;
  });
  const RunSummary summary = summarize(outcomes);
  io::write_file((fs::path(c.output_dir) / "explore_summary.json").string(),
                 [&](std::ostream& out) { out << to_json(summary).dump(2) << '\n'; });
  print_summary("exploration", summary);
  return 0;
}

int cmd_report(const Options& o) {
  const std::string dir = o.out.value_or("out");
  bool any = false;
  const fs::path cal = fs::path(dir) / "calibration.json";
  if (fs::exists(cal)) {
    std::fputs(io::render_table(io::calibration_from_json(io::read_json_file(cal.string()))).c_str(), stdout);
    any = true;
  }
  for (const char* name : {"detect_summary.json", "baseline_summary.json", "explore_summary.json"}) {
    const fs::path p = fs::path(dir) / name;
    if (!fs::exists(p)) continue;
    const io::json j = io::read_json_file(p.string());
    std::printf("%s: seeds %zu, contacts %s, median stop %s cm, median IoU %s\n", name, j.at("seeds").size(),
                j.at("contacts").dump().c_str(), j.at("median_stop_cm").dump().c_str(),
                j.at("median_iou").dump().c_str());
    any = true;
  }
  require(any, "report: no results found in '" + dir + "'");
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Pre-touch sensing experiments in simulated granular media"};
  app.require_subcommand(1);
  Options o;
  auto common = [&](CLI::App* sub) {
    sub->add_option("--config", o.config, "experiment config (JSON)")->check(CLI::ExistingFile);
    sub->add_option("--seed", o.seed, "run only this seed");
    sub->add_option("--out", o.out, "output directory");
  };
  auto* simulate = app.add_subcommand("simulate", "write force traces");
  auto* calibrate = app.add_subcommand("calibrate", "choose MV and the z-score threshold");
  auto* detect = app.add_subcommand("detect", "rake towards an object and report the stop");
  auto* explore = app.add_subcommand("explore", "BOA-guided exploration");
  auto* report = app.add_subcommand("report", "summarise results in an output directory");
  for (auto* s : {simulate, calibrate, detect, explore}) common(s);
  report->add_option("--out", o.out, "output directory");
  calibrate->add_option("--replay-table", o.replay_table, "precomputed calibration rows (JSON)")
      ->check(CLI::ExistingFile);
  detect->add_option("--baseline-threshold", o.baseline_threshold, "also run a fixed-force baseline (N)");

  CLI11_PARSE(app, argc, argv);
  try {
    if (simulate->parsed()) return cmd_simulate(o);
    if (calibrate->parsed()) return cmd_calibrate(o);
    if (detect->parsed()) return cmd_detect(o);
    if (explore->parsed()) return cmd_explore(o);
    return cmd_report(o);
  } catch (const std::exception& e) {
    std::fprintf(stderr, "grains: %s\n", e.what());
    return 1;
  }
}
