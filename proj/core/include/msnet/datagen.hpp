#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "msnet/femsrc.hpp"
#include "msnet/lattice.hpp"
#include "msnet/resample.hpp"
#include "msnet/rng.hpp"
#include "msnet/simcore.hpp"

namespace msnet {

/// Rest-space rectangle (normalized to [0,1]^2) carrying a stiffness value.
/// Later regions override earlier ones.
struct StiffnessRegion {
  double x0 = 0, y0 = 0, x1 = 1, y1 = 1;
  double value = 0;

  bool contains(double u, double v) const { return u >= x0 && u <= x1 && v >= y0 && v <= y1; }
};

struct StiffnessLayout {
  std::string name = "uniform";
  double base = 50.0;
  std::vector<StiffnessRegion> regions;

  double value_at(double u, double v) const {
    double out = base;
    for (const StiffnessRegion& r : regions)
      if (r.contains(u, v)) out = r.value;
    return out;
  }

  static StiffnessLayout uniform(double k);
  /// Three vertical bands of equal width (the heterogeneous recovery setup).
  static StiffnessLayout three_band(double k0, double k1, double k2);
  /// Two vertical stripes, one horizontal stripe near the top and a center
  /// patch over a soft base.
  static StiffnessLayout stripes_patch(double base, double stripe, double patch);
};

enum class SourceKind : std::uint8_t { mass_spring = 0, fem = 1 };

const char* to_string(SourceKind k);

struct SourceSpec {
  SourceKind kind = SourceKind::mass_spring;
  GridSpec grid;                      // landmark resolution and physical dimensions
  TopologyFlags topology;             // mass-spring sources
  StiffnessLayout stiffness;          // per-spring k or per-triangle membrane stiffness
  double damping = 6.0;               // uniform per-spring damping (mass-spring)
  double fem_bending = 2e-4;          // uniform per-hinge stiffness (fem)
  double fem_poisson = 0.3;
  DiagonalOrientation diagonal = DiagonalOrientation::uniform;
  double density = 0.1;               // area density (kg/m^2)
  double dt = 1e-3;
  double duration = 8.0;
  ExternalForceSpec external;
};

struct RolloutSpec {
  std::int32_t count = 1;
  std::uint64_t seed = 0;
  double anchor_radius = 0.0;  // rest-space length (m); 0 pins just the two centers
  bool random_angular_velocity = false;
  double max_angular_speed = 0.0;  // rad/s, used when random_angular_velocity
};

struct SourceRollout {
  Trajectory3 y;      // landmark positions, frame-major
  Trajectory3 ydot;   // landmark velocities (same layout); may be empty
  std::vector<std::uint8_t> pinned;
  double density = 0.0;
  double width = 0.0, height = 0.0;
  std::int32_t rows = 0, cols = 0;
  double dt = 0.0;
  ExternalForceSpec external;
  SourceKind kind = SourceKind::mass_spring;
  std::uint64_t seed = 0;      // per-rollout seed
  std::string spec_hash;       // hash of the generating configuration

  std::size_t frames() const { return y.frames(); }
  std::size_t landmarks() const { return static_cast<std::size_t>(y.points); }
};

LandmarkLayout landmark_layout(const GridSpec& grid);

/// Picks two distinct anchor centers uniformly among the landmarks and pins
/// everything within anchor_radius of either. Throws if no landmark stays
/// free.
std::vector<std::uint8_t> sample_boundary_condition(const RolloutSpec& spec,
                                                    const LandmarkLayout& layout, Rng& rng);

/// Random rotation of the flat rest sheet about its centroid; velocities are
/// zero unless the spec asks for a random angular velocity.
void sample_initial_condition(const RolloutSpec& spec, const LandmarkLayout& layout, Rng& rng,
                              std::vector<Vec3>& positions, std::vector<Vec3>& velocities);

/// Per-spring material parameters of a mass-spring source network under a
/// stiffness layout (values looked up at spring midpoints in rest space).
MaterialParams source_spring_params(const SourceSpec& spec, const SpringNetwork& net,
                                    const RestLayout& rest);

/// Per-triangle membrane stiffness of a FEM source under a layout (values at
/// triangle centroids).
FemMaterial source_fem_material(const SourceSpec& spec, const TriMesh& mesh);

struct GenerationResult {
  std::vector<SourceRollout> rollouts;
  std::vector<std::string> diagnostics;  // one entry per aborted rollout
};

/// Simulates `rollouts.count` randomized rollouts with the engine matching
/// the source kind. Each rollout draws from an independent substream of the
/// master seed, so results do not depend on generation order. A diverging
/// rollout is dropped with a diagnostic; generation continues.
GenerationResult generate_rollouts(const SourceSpec& source, const RolloutSpec& rollouts,
                                   bool record_velocities = true);

struct Clip {
  std::int32_t rollout = 0;  // index into the rollout list
  std::int32_t start = 0;    // first frame
  std::int32_t length = 0;   // frames (T)
};

struct ClipSetOptions {
  std::int32_t length = 500;         // T
  double keep_fraction = 0.06;
  double low_velocity_window = 1.0;  // seconds at the end of each rollout
  double low_velocity_keep = 0.5;
  std::uint64_t seed = 0;
};

struct ClipSet {
  std::vector<Clip> general;
  std::vector<Clip> low_velocity;
  std::int32_t length = 0;
  std::uint64_t seed = 0;
};

/// Partitions every rollout into non-overlapping fixed-length clips, keeps a
/// uniform random fraction as the general set, and subsamples clips that
/// overlap the trailing low-velocity window for the stiffness pass.
ClipSet build_clipset(std::span<const SourceRollout> rollouts, const ClipSetOptions& options);

}  // namespace msnet
