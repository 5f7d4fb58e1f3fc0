#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <vector>

#include "msnet/lattice.hpp"
#include "msnet/simcore.hpp"
#include "msnet/vec3.hpp"

namespace msnet {

/// Rest positions of the source landmarks in the unrolled rectangle.
struct LandmarkLayout {
  std::vector<Vec2> rest;
  double width = 0.0;
  double height = 0.0;

  std::size_t count() const { return rest.size(); }
};

/// Per surrogate particle: three landmark indices and unclamped barycentric
/// weights of the particle's rest position in that landmark triangle.
/// Weights always sum to 1; negative weights mean extrapolation and are kept
/// so affine fields are reproduced exactly.
struct ResamplingMap {
  struct Entry {
    std::array<std::int32_t, 3> landmark{0, 0, 0};
    std::array<double, 3> weight{0.0, 0.0, 0.0};
    bool inverse_distance = false;  // degenerate fallback used
    bool extrapolated = false;      // some |weight| > 2
  };

  std::vector<Entry> entries;
  std::int32_t landmark_count = 0;
  bool fallback_used = false;

  std::size_t extrapolation_count() const {
    std::size_t n = 0;
    for (const Entry& e : entries) n += e.extrapolated ? 1 : 0;
    return n;
  }
};

/// Per-particle target data resampled from a source rollout.
struct TargetTrajectory {
  Trajectory3 x;                       // frames x particles
  std::vector<std::uint8_t> pinned;    // per particle
  double dt = 0.0;
  ExternalForceSpec external;
  MassModel masses;
};

/// For each surrogate particle, picks its three nearest landmarks in rest
/// space and computes barycentric weights there. Nearly collinear triangles
/// are widened to further neighbors; if every candidate triangle is
/// degenerate the entry falls back to inverse-distance weights and the map
/// is flagged.
ResamplingMap build_map(const LandmarkLayout& landmarks, const RestLayout& surrogate_rest);

/// Affine combination per particle (Eq. applies to positions, velocities and
/// forces alike).
std::vector<Vec3> resample_frame(const ResamplingMap& map, std::span<const Vec3> landmark_values);

Trajectory3 resample_trajectory(const ResamplingMap& map, const Trajectory3& landmark_frames);

/// Uniform particle mass m_p = rho * width * height / P.
MassModel assign_masses(double density, const GridSpec& spec);

/// A particle is pinned iff its dominant-weight landmark is pinned.
std::vector<std::uint8_t> classify_pinned(const ResamplingMap& map,
                                          std::span<const std::uint8_t> landmark_pinned);

}  // namespace msnet
