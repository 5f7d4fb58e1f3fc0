#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "msnet/datagen.hpp"
#include "msnet/error.hpp"
#include "msnet/resample.hpp"
#include "msnet/rng.hpp"

using namespace msnet;

namespace {

LandmarkLayout grid_landmarks(std::int32_t rows, std::int32_t cols, double w, double h) {
  return landmark_layout(GridSpec{rows, cols, w, h});
}

}  // namespace

TEST_CASE("weights always sum to one") {
  const LandmarkLayout landmarks = grid_landmarks(5, 5, 2, 2);
  const RestLayout surrogate = rest_layout({7, 7, 2, 2});
  const ResamplingMap map = build_map(landmarks, surrogate);
  REQUIRE(map.entries.size() == 49);
  for (const auto& e : map.entries)
    CHECK(e.weight[0] + e.weight[1] + e.weight[2] == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("particle coincident with a landmark copies it") {
  const LandmarkLayout landmarks = grid_landmarks(4, 4, 3, 3);
  RestLayout surrogate;
  surrogate.positions.push_back(landmarks.rest[5]);  // exactly on a landmark
  surrogate.positions.push_back({0.1, 0.2});
  const ResamplingMap map = build_map(landmarks, surrogate);

  const auto& e = map.entries[0];
  double w_at_5 = 0.0;
  for (int i = 0; i < 3; ++i) {
    if (e.landmark[static_cast<std::size_t>(i)] == 5) w_at_5 += e.weight[static_cast<std::size_t>(i)];
  }
  CHECK(w_at_5 == doctest::Approx(1.0).epsilon(1e-12));

  std::vector<Vec3> values;
  Rng rng(3);
  for (std::size_t j = 0; j < landmarks.count(); ++j)
    values.push_back({rng.uniform(-2, 2), rng.uniform(-2, 2), rng.uniform(-2, 2)});
  const auto out = resample_frame(map, values);
  CHECK(norm(out[0] - values[5]) < 1e-12);
}

TEST_CASE("particle at the centroid of its nearest triangle gets thirds") {
  LandmarkLayout landmarks;
  landmarks.width = landmarks.height = 2.0;
  landmarks.rest = {{0, 0}, {2, 0}, {1, 2}, {-3, -3}, {5, -3}};
  RestLayout surrogate;
  surrogate.positions.push_back({1.0, 2.0 / 3.0});  // centroid of the first three
  const ResamplingMap map = build_map(landmarks, surrogate);
  const auto& e = map.entries[0];
  for (int i = 0; i < 3; ++i) {
    CHECK(e.landmark[static_cast<std::size_t>(i)] <= 2);
    CHECK(e.weight[static_cast<std::size_t>(i)] == doctest::Approx(1.0 / 3.0).epsilon(1e-9));
  }
}

TEST_CASE("31x31 -> 32x32 map reproduces surrogate rest positions exactly") {
  const LandmarkLayout landmarks = grid_landmarks(31, 31, 15.5, 15.5);
  const RestLayout surrogate = rest_layout({32, 32, 15.5, 15.5});
  const ResamplingMap map = build_map(landmarks, surrogate);

  // identity field: resampling landmark rest positions must give particle
  // rest positions (linear reproduction)
  std::vector<Vec3> rest3;
  for (const Vec2& p : landmarks.rest) rest3.push_back({p.x, p.y, 0.0});
  const auto out = resample_frame(map, rest3);
  for (std::size_t p = 0; p < surrogate.positions.size(); ++p) {
    CHECK(out[p].x == doctest::Approx(surrogate.positions[p].x).epsilon(1e-10));
    CHECK(out[p].y == doctest::Approx(surrogate.positions[p].y).epsilon(1e-10));
    CHECK(std::abs(out[p].z) < 1e-12);
  }
}

TEST_CASE("affine maps of landmarks reproduce affine maps of rest positions") {
  const LandmarkLayout landmarks = grid_landmarks(6, 6, 2, 2);
  const RestLayout surrogate = rest_layout({9, 9, 2, 2});
  const ResamplingMap map = build_map(landmarks, surrogate);

  Rng rng(17);
  for (int trial = 0; trial < 10; ++trial) {
    const Mat3 m = rng.uniform_rotation();
    const Vec3 c{rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1)};
    std::vector<Vec3> mapped;
    for (const Vec2& p : landmarks.rest) mapped.push_back(m * Vec3{p.x, p.y, 0.0} + c);
    const auto out = resample_frame(map, mapped);
    for (std::size_t p = 0; p < surrogate.positions.size(); ++p) {
      const Vec3 want = m * Vec3{surrogate.positions[p].x, surrogate.positions[p].y, 0.0} + c;
      CHECK(norm(out[p] - want) < 1e-10);
    }
  }
}

TEST_CASE("translation of all landmarks translates every target") {
  const LandmarkLayout landmarks = grid_landmarks(4, 4, 1, 1);
  const RestLayout surrogate = rest_layout({5, 5, 1, 1});
  const ResamplingMap map = build_map(landmarks, surrogate);
  std::vector<Vec3> values(landmarks.count(), Vec3{});
  Rng rng(23);
  for (Vec3& v : values) v = {rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1)};
  const Vec3 shift{0.3, -0.7, 1.1};
  std::vector<Vec3> shifted = values;
  for (Vec3& v : shifted) v += shift;
  const auto a = resample_frame(map, values);
  const auto b = resample_frame(map, shifted);
  for (std::size_t p = 0; p < a.size(); ++p) CHECK(norm(b[p] - (a[p] + shift)) < 1e-12);
}

TEST_CASE("resampling frame by frame equals resampling the whole trajectory") {
  const LandmarkLayout landmarks = grid_landmarks(4, 4, 1, 1);
  const RestLayout surrogate = rest_layout({6, 6, 1, 1});
  const ResamplingMap map = build_map(landmarks, surrogate);
  Trajectory3 frames;
  frames.points = static_cast<std::int32_t>(landmarks.count());
  Rng rng(31);
  for (int f = 0; f < 5; ++f) {
    std::vector<Vec3> frame;
    for (std::size_t j = 0; j < landmarks.count(); ++j)
      frame.push_back({rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1)});
    frames.push_frame(frame);
  }
  const Trajectory3 whole = resample_trajectory(map, frames);
  for (std::size_t f = 0; f < frames.frames(); ++f) {
    const auto one = resample_frame(map, frames.frame(f));
    const auto w = whole.frame(f);
    for (std::size_t p = 0; p < one.size(); ++p) CHECK(norm(one[p] - w[p]) == 0.0);
  }
}

TEST_CASE("build_map needs at least 3 landmarks and flags degenerate fallbacks") {
  LandmarkLayout two;
  two.width = two.height = 1.0;
  two.rest = {{0, 0}, {1, 0}};
  CHECK_THROWS_AS(build_map(two, rest_layout({2, 2, 1, 1})), DataError);

  // all landmarks collinear: inverse-distance fallback with the flag set
  LandmarkLayout line;
  line.width = line.height = 1.0;
  line.rest = {{0, 0}, {0.25, 0}, {0.5, 0}, {0.75, 0}, {1.0, 0}};
  RestLayout probe;
  probe.positions.push_back({0.4, 0.3});
  const ResamplingMap map = build_map(line, probe);
  CHECK(map.fallback_used);
  CHECK(map.entries[0].inverse_distance);
  const auto& w = map.entries[0].weight;
  CHECK(w[0] + w[1] + w[2] == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(w[0] >= w[1]);  // closer landmark dominates
}

TEST_CASE("extrapolated particles are flagged when weights blow past 2") {
  LandmarkLayout tight;
  tight.width = tight.height = 1.0;
  tight.rest = {{0, 0}, {0.1, 0}, {0, 0.1}, {0.1, 0.1}};
  RestLayout probe;
  probe.positions.push_back({0.9, 0.9});  // far outside every candidate triangle
  const ResamplingMap map = build_map(tight, probe);
  CHECK(map.entries[0].extrapolated);
  CHECK(map.extrapolation_count() == 1);
}

TEST_CASE("mass rule: rho A / P, uniform") {
  const MassModel m1 = assign_masses(1.0, {2, 2, 1, 1});
  REQUIRE(m1.m.size() == 4);
  for (double m : m1.m) CHECK(m == doctest::Approx(0.25));

  const MassModel m2 = assign_masses(0.1, {32, 32, 15.5, 15.5});
  for (double m : m2.m) CHECK(m == doctest::Approx(0.1 * 240.25 / 1024.0).epsilon(1e-14));

  // total mass is rho * A for any resolution
  for (std::int32_t n : {3, 9, 17}) {
    const MassModel m = assign_masses(0.37, {n, n, 2.5, 1.5});
    CHECK(m.total() == doctest::Approx(0.37 * 2.5 * 1.5).epsilon(1e-12));
  }
  CHECK_THROWS_AS(assign_masses(0.0, {2, 2, 1, 1}), DataError);
}

TEST_CASE("pinned classification follows the dominant weight") {
  const LandmarkLayout landmarks = grid_landmarks(4, 4, 1, 1);
  const RestLayout surrogate = rest_layout({4, 4, 1, 1});  // identical grid
  const ResamplingMap map = build_map(landmarks, surrogate);

  std::vector<std::uint8_t> none(landmarks.count(), 0);
  for (std::uint8_t p : classify_pinned(map, none)) CHECK(p == 0);

  std::vector<std::uint8_t> some(landmarks.count(), 0);
  some[0] = some[5] = 1;
  const auto pinned = classify_pinned(map, some);
  CHECK(pinned[0] == 1);  // coincident particles copy their landmark
  CHECK(pinned[5] == 1);
  CHECK(pinned[10] == 0);
}

TEST_CASE("pinned regions transfer across resolutions within one cell") {
  const GridSpec source_grid{31, 31, 15.5, 15.5};
  const LandmarkLayout landmarks = landmark_layout(source_grid);
  const GridSpec surrogate_grid{32, 32, 15.5, 15.5};
  const RestLayout surrogate = rest_layout(surrogate_grid);
  const ResamplingMap map = build_map(landmarks, surrogate);

  // two anchor neighborhoods in rest space
  RolloutSpec spec;
  spec.anchor_radius = 1.5 * source_grid.cell_width();
  Rng rng(7);
  const auto landmark_pinned = sample_boundary_condition(spec, landmarks, rng);
  const auto particle_pinned = classify_pinned(map, landmark_pinned);

  const double cell = surrogate_grid.cell_width();
  // every pinned particle lies within one cell of a pinned landmark, and
  // every pinned landmark has a pinned particle within one cell
  for (std::size_t p = 0; p < particle_pinned.size(); ++p) {
    if (!particle_pinned[p]) continue;
    double best = 1e9;
    for (std::size_t j = 0; j < landmark_pinned.size(); ++j)
      if (landmark_pinned[j]) best = std::min(best, norm(surrogate.positions[p] - landmarks.rest[j]));
    CHECK(best < cell);
  }
  for (std::size_t j = 0; j < landmark_pinned.size(); ++j) {
    if (!landmark_pinned[j]) continue;
    double best = 1e9;
    for (std::size_t p = 0; p < particle_pinned.size(); ++p)
      if (particle_pinned[p]) best = std::min(best, norm(surrogate.positions[p] - landmarks.rest[j]));
    CHECK(best < cell);
  }
}
