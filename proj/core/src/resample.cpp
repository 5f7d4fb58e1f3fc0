#include "msnet/resample.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "msnet/error.hpp"

namespace msnet {

namespace {

// Barycentric coordinates of p in triangle (a, b, c); returns false when the
// triangle is too poorly conditioned for a stable solve.
bool barycentric(Vec2 p, Vec2 a, Vec2 b, Vec2 c, double min_area, std::array<double, 3>& w) {
  const double area2 = cross(b - a, c - a);
  if (std::abs(area2) < 2.0 * min_area) return false;
  const double inv = 1.0 / area2;
  w[1] = cross(p - a, c - a) * inv;
  w[2] = cross(b - a, p - a) * inv;
  w[0] = 1.0 - w[1] - w[2];
  return true;
}

}  // namespace

ResamplingMap build_map(const LandmarkLayout& landmarks, const RestLayout& surrogate_rest) {
  if (landmarks.count() < 3) throw DataError("build_map: need at least 3 landmarks");

  // conditioning threshold relative to the mean landmark spacing
  const double cell =
      std::sqrt(landmarks.width * landmarks.height / static_cast<double>(landmarks.count()));
  const double min_area = 1e-8 * cell * cell;

  ResamplingMap map;
  map.landmark_count = static_cast<std::int32_t>(landmarks.count());
  map.entries.reserve(surrogate_rest.positions.size());

  std::vector<std::int32_t> order(landmarks.count());
  std::vector<double> dist2(landmarks.count());

  for (const Vec2& p : surrogate_rest.positions) {
    for (std::size_t j = 0; j < landmarks.count(); ++j) {
      const Vec2 d = landmarks.rest[j] - p;
      dist2[j] = dot(d, d);
    }
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](std::int32_t l, std::int32_t r) {
      if (dist2[static_cast<std::size_t>(l)] != dist2[static_cast<std::size_t>(r)])
        return dist2[static_cast<std::size_t>(l)] < dist2[static_cast<std::size_t>(r)];
      return l < r;  // deterministic ties
    });

    ResamplingMap::Entry entry;
    bool found = false;
    // Start from the three nearest neighbors; widen the candidate set one
    // landmark at a time until a well-conditioned triangle appears.
    const std::size_t max_candidates = std::min<std::size_t>(landmarks.count(), 16);
    for (std::size_t k = 2; k < max_candidates && !found; ++k) {
      for (std::size_t i = 0; i < k && !found; ++i) {
        for (std::size_t j = i + 1; j < k && !found; ++j) {
          std::array<std::int32_t, 3> tri{order[i], order[j], order[k]};
          std::array<double, 3> w;
          if (barycentric(p, landmarks.rest[static_cast<std::size_t>(tri[0])],
                          landmarks.rest[static_cast<std::size_t>(tri[1])],
                          landmarks.rest[static_cast<std::size_t>(tri[2])], min_area, w)) {
            // keep the distance-sorted 3-NN triangle layout: (i, j, k) is
            // already ordered by distance
            entry.landmark = tri;
            entry.weight = w;
            found = true;
          }
        }
      }
    }
    if (!found) {
      // every candidate triangle collinear: inverse-distance fallback
      entry.landmark = {order[0], order[1], order[2]};
      entry.inverse_distance = true;
      map.fallback_used = true;
      const double d0 = std::sqrt(dist2[static_cast<std::size_t>(order[0])]);
      if (d0 < 1e-15) {
        entry.weight = {1.0, 0.0, 0.0};
      } else {
        double sum = 0.0;
        std::array<double, 3> inv;
        for (int i = 0; i < 3; ++i) {
          inv[static_cast<std::size_t>(i)] =
              1.0 / std::sqrt(dist2[static_cast<std::size_t>(entry.landmark[static_cast<std::size_t>(i)])]);
          sum += inv[static_cast<std::size_t>(i)];
        }
        for (int i = 0; i < 3; ++i) entry.weight[static_cast<std::size_t>(i)] = inv[static_cast<std::size_t>(i)] / sum;
      }
    }
    for (double w : entry.weight)
      if (std::abs(w) > 2.0) entry.extrapolated = true;
    map.entries.push_back(entry);
  }
  return map;
}

std::vector<Vec3> resample_frame(const ResamplingMap& map, std::span<const Vec3> landmark_values) {
  if (landmark_values.size() != static_cast<std::size_t>(map.landmark_count))
    throw DataError("resample_frame: landmark count mismatch (" +
                    std::to_string(landmark_values.size()) + " vs " +
                    std::to_string(map.landmark_count) + ")");
  std::vector<Vec3> out;
  out.reserve(map.entries.size());
  for (const ResamplingMap::Entry& e : map.entries) {
    out.push_back(e.weight[0] * landmark_values[static_cast<std::size_t>(e.landmark[0])] +
                  e.weight[1] * landmark_values[static_cast<std::size_t>(e.landmark[1])] +
                  e.weight[2] * landmark_values[static_cast<std::size_t>(e.landmark[2])]);
  }
  return out;
}

Trajectory3 resample_trajectory(const ResamplingMap& map, const Trajectory3& landmark_frames) {
  Trajectory3 out;
  out.points = static_cast<std::int32_t>(map.entries.size());
  out.reserve_frames(landmark_frames.frames());
  for (std::size_t f = 0; f < landmark_frames.frames(); ++f) {
    const std::vector<Vec3> frame = resample_frame(map, landmark_frames.frame(f));
    out.push_frame(frame);
  }
  return out;
}

MassModel assign_masses(double density, const GridSpec& spec) {
  if (!(density > 0.0)) throw DataError("assign_masses: density must be positive");
  MassModel model;
  const double per_particle =
      density * spec.width * spec.height / static_cast<double>(spec.particle_count());
  model.m.assign(static_cast<std::size_t>(spec.particle_count()), per_particle);
  return model;
}

std::vector<std::uint8_t> classify_pinned(const ResamplingMap& map,
                                          std::span<const std::uint8_t> landmark_pinned) {
  if (landmark_pinned.size() != static_cast<std::size_t>(map.landmark_count))
    throw DataError("classify_pinned: landmark count mismatch");
  std::vector<std::uint8_t> pinned;
  pinned.reserve(map.entries.size());
  for (const ResamplingMap::Entry& e : map.entries) {
    std::size_t dominant = 0;
    for (std::size_t i = 1; i < 3; ++i)
      if (e.weight[i] > e.weight[dominant]) dominant = i;
    pinned.push_back(landmark_pinned[static_cast<std::size_t>(e.landmark[dominant])]);
  }
  return pinned;
}

}  // namespace msnet
