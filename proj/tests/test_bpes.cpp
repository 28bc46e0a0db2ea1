#include <cmath>

#include <gtest/gtest.h>

#include "grains/bpes.hpp"

using namespace grains;

namespace {

const Rect kBox{0.0, 0.0, 0.4, 0.4};
const Rect kSearch{0.05, 0.05, 0.35, 0.35};

SlideOptions slide_opts(double threshold = 4.88) {
  SlideOptions o;
  o.trajectory = {0.01, 0.01, 0.2};
  o.detector.zs_threshold = threshold;
  o.detector.settle = 1000;
  o.detector.periodicity_prior = periodicity_prior(o.trajectory);
  return o;
}

BpesSetup setup(std::size_t max_slides) {
  BpesSetup s;
  s.x_init = {0.07, 0.07};
  s.grid = {kSearch, 0.005};
  s.boa = {{10.0, 0.04}, 0.01};
  s.slide = slide_opts();
  s.exploration.max_slides = max_slides;
  return s;
}

Scene disk_scene() { return {kBox, {ObjectSpec::disk({0.22, 0.2}, 0.03)}, kSearch}; }

void check_log_invariants(const ExplorationResult& r) {
  // At most one presence per slide, and only right after a stop.
  std::size_t presences_this_slide = 0;
  EventKind prev = EventKind::Finished;
  for (const auto& e : r.log.events) {
    if (e.kind == EventKind::SlideStarted) presences_this_slide = 0;
    if (e.kind == EventKind::PresenceReported) {
      ++presences_this_slide;
      EXPECT_LE(presences_this_slide, 1u);
      EXPECT_TRUE(prev == EventKind::JammingStop || prev == EventKind::Contact);
    }
    prev = e.kind;
  }
  ASSERT_FALSE(r.log.events.empty());
  EXPECT_EQ(r.log.events.back().kind, EventKind::Finished);
  EXPECT_EQ(r.log.count(EventKind::SlideStarted), r.slides);
}

}  // namespace

TEST(QuantizeReports, Examples) {
  const auto five = quantize_reports({0.1, 0.1}, {0.15, 0.1}, 0.01);
  ASSERT_EQ(five.size(), 5u);
  for (std::size_t k = 0; k < 5; ++k) {
    EXPECT_NEAR(five[k].x, 0.1 + 0.01 * double(k + 1), 1e-12);
    EXPECT_EQ(five[k].y, 0.1);
  }
  EXPECT_TRUE(quantize_reports({0, 0}, {0.005, 0}, 0.01).empty());
  EXPECT_TRUE(quantize_reports({0, 0}, {0, 0}, 0.01).empty());
  EXPECT_THROW(quantize_reports({0, 0}, {1, 0}, 0.0), InvalidArgument);
}

TEST(QuantizeReports, PositionsLieOnTheSegment) {
  const Pose2 a{0.05, 0.3};
  const Pose2 b{0.27, 0.11};
  const Pose2 u = (1.0 / distance(a, b)) * (b - a);
  const auto pts = quantize_reports(a, b, 0.013);
  EXPECT_EQ(pts.size(), static_cast<std::size_t>(std::floor(distance(a, b) / 0.013)));
  for (std::size_t k = 0; k < pts.size(); ++k) {
    EXPECT_NEAR(std::abs(cross(u, pts[k] - a)), 0.0, 1e-12);
    EXPECT_NEAR(distance(a, pts[k]), 0.013 * double(k + 1), 1e-12);
  }
}

TEST(EstimateOutline, Examples) {
  const GridSpec g{kSearch, 0.01};
  StiffnessField f{g, std::vector<double>(g.cells(), 0.0), std::vector<double>(g.cells(), 1.0)};
  for (auto v : estimate_outline(f)) EXPECT_EQ(v, 0);
  for (auto v : estimate_outline(f, 0.0)) EXPECT_EQ(v, 1);
  for (std::size_t i = 0; i < g.cells(); ++i) f.mean[i] = double(i % 8);
  const auto mask = estimate_outline(f, 3.5);
  for (std::size_t i = 0; i < g.cells(); ++i) EXPECT_EQ(mask[i], f.mean[i] >= 3.5 ? 1 : 0);
}

TEST(TruthMask, DilatesByTheRuptureDistance) {
  const GridSpec g{kSearch, 0.005};
  const Scene s{kBox, {ObjectSpec::square({0.2, 0.2}, 0.08)}, kSearch};
  const auto raw = truth_mask(s, g, 0.0);
  const auto wide = truth_mask(s, g, 0.06);
  std::size_t n_raw = 0, n_wide = 0;
  for (std::size_t i = 0; i < g.cells(); ++i) {
    n_raw += raw[i];
    n_wide += wide[i];
    if (raw[i]) {
      EXPECT_EQ(wide[i], 1);
    }
  }
  EXPECT_EQ(n_raw, 16u * 16u);
  EXPECT_GT(n_wide, 3 * n_raw);
  EXPECT_EQ(iou(raw, raw), 1.0);
  EXPECT_NEAR(iou(raw, wide), double(n_raw) / double(n_wide), 1e-12);
  EXPECT_EQ(iou(std::vector<std::uint8_t>(4, 0), std::vector<std::uint8_t>(4, 0)), 1.0);
}

TEST(RakeSlide, EmptySceneRunsToTheGoal) {
  const Scene s{kBox, {}, kSearch};
  const SlideOutcome r = rake_slide(s, medium_preset("sand"), {0.07, 0.2}, {0.3, 0.2}, slide_opts(), 1);
  EXPECT_FALSE(r.stopped);
  EXPECT_FALSE(r.contact);
  EXPECT_NEAR(r.progress, 0.23, 0.011);
  EXPECT_TRUE(std::isinf(r.min_clearance_cm));
}

TEST(RakeSlide, StopsShortOfABuriedDisk) {
  int ok = 0;
  for (std::uint64_t seed = 0; seed < 4; ++seed) {
    const SlideOutcome r = rake_slide(disk_scene(), medium_preset("sand"), {0.07, 0.2}, {0.22, 0.2}, slide_opts(), seed);
    EXPECT_FALSE(r.contact);
    ok += r.stopped && r.stop_clearance_cm > 0.0 && r.stop_clearance_cm <= 7.0;
    EXPECT_GT(r.min_clearance_cm, 0.0);
  }
  EXPECT_GE(ok, 3);
}

TEST(RakeSlide, FixedThresholdAboveThePeakMakesContact) {
  SlideOptions o = slide_opts();
  o.fixed_threshold = 15.0;
  const SlideOutcome r = rake_slide(disk_scene(), medium_preset("sand"), {0.07, 0.2}, {0.22, 0.2}, o, 2);
  EXPECT_TRUE(r.contact);
  EXPECT_FALSE(r.stopped);
  EXPECT_EQ(r.stop_clearance_cm, 0.0);
}

TEST(RakeSlide, RecordsVerdictsOnRequest) {
  SlideOptions o = slide_opts();
  o.record_verdicts = true;
  const Scene s{kBox, {}, kSearch};
  const SlideOutcome r = rake_slide(s, medium_preset("sand"), {0.07, 0.2}, {0.2, 0.2}, o, 3);
  ASSERT_FALSE(r.verdicts.empty());
  EXPECT_EQ(r.verdicts.front().iteration, o.detector.settle + o.detector.train_window);
  EXPECT_EQ(r.verdicts.back().iteration + 1, r.samples);
}

TEST(Bpes, EmptySceneMostlyReportsAbsence) {
  // The threshold is the largest |z| of a long calibration record, so an
  // empty slide still trips it now and then. Bound the rate, not each run.
  const Scene s{kBox, {}, kSearch};
  std::size_t slides = 0, presences = 0, absences = 0;
  for (std::uint64_t seed = 0; seed < 6; ++seed) {
    const ExplorationResult r = run_bpes(s, medium_preset("sand"), setup(4), seed);
    check_log_invariants(r);
    EXPECT_EQ(r.contacts, 0u);
    slides += r.slides;
    presences += r.log.count(EventKind::PresenceReported);
    absences += r.log.count(EventKind::AbsenceReported);
  }
  EXPECT_LE(presences * 8, slides);
  EXPECT_GT(absences, 10 * presences);
}

TEST(Bpes, FindsADiskWithoutTouchingIt) {
  const ExplorationResult r = run_bpes(disk_scene(), medium_preset("sand"), setup(10), 1);
  check_log_invariants(r);
  EXPECT_GE(r.log.count(EventKind::PresenceReported), 1u);
  EXPECT_EQ(r.contacts, 0u);
  EXPECT_GT(r.min_clearance_cm, 0.0);
  EXPECT_LE(r.slides, 10u);
}

TEST(Bpes, DeterministicPerSeed) {
  const auto a = run_bpes(disk_scene(), medium_preset("sand"), setup(3), 7);
  const auto b = run_bpes(disk_scene(), medium_preset("sand"), setup(3), 7);
  ASSERT_EQ(a.log.events.size(), b.log.events.size());
  for (std::size_t i = 0; i < a.log.events.size(); ++i) {
    EXPECT_EQ(a.log.events[i].kind, b.log.events[i].kind);
    EXPECT_EQ(a.log.events[i].pos, b.log.events[i].pos);
  }
  EXPECT_EQ(a.field.mean, b.field.mean);
}

TEST(Bpes, RejectsABadStart) {
  BpesSetup s = setup(2);
  s.x_init = {0.01, 0.01};
  EXPECT_THROW(run_bpes(disk_scene(), medium_preset("sand"), s, 0), InvalidArgument);
  s.x_init = {0.2, 0.2};
  EXPECT_THROW(run_bpes(disk_scene(), medium_preset("sand"), s, 0), InvalidArgument);
}
