#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "msnet/vec3.hpp"

namespace msnet {

/// Regular rectangular surrogate grid. Particles are indexed row-major:
/// id = r * cols + c, with rest position (c * width/(cols-1), r * height/(rows-1)).
struct GridSpec {
  std::int32_t rows = 0;
  std::int32_t cols = 0;
  double width = 0.0;
  double height = 0.0;

  std::int32_t particle_count() const { return rows * cols; }
  double cell_width() const { return width / (cols - 1); }
  double cell_height() const { return height / (rows - 1); }
};

struct TopologyFlags {
  bool structural = true;
  bool shear_main = true;   // cell diagonal (r,c) -- (r+1,c+1)
  bool shear_anti = true;   // cell diagonal (r,c+1) -- (r+1,c)
  bool bending = true;
  std::int32_t bending_stride = 1;  // stride 1 skips one vertex along rows/columns

  bool any() const { return structural || shear_main || shear_anti || bending; }
};

enum class SpringClass : std::uint8_t { structural = 0, shear = 1, bending = 2 };

const char* to_string(SpringClass c);

struct Spring {
  std::int32_t a = 0;
  std::int32_t b = 0;
  double rest_length = 0.0;
  SpringClass cls = SpringClass::structural;
};

/// Mass-spring topology. The signed incidence structure of the network is
/// carried implicitly by the (a, b) endpoint pairs: row s of the incidence
/// matrix has -1 at a and +1 at b.
struct SpringNetwork {
  std::int32_t particle_count = 0;
  std::vector<Spring> springs;

  std::size_t size() const { return springs.size(); }
};

/// 2D rest positions of the surrogate particles in the unrolled rectangle.
struct RestLayout {
  std::vector<Vec2> positions;  // row-major over the grid
};

struct SpringCounts {
  std::size_t structural = 0;
  std::size_t shear = 0;
  std::size_t bending = 0;
  std::size_t total() const { return structural + shear + bending; }
};

RestLayout rest_layout(const GridSpec& spec);

/// Closed-form spring counts for a grid; build_lattice must match these.
SpringCounts expected_spring_counts(const GridSpec& spec, const TopologyFlags& flags);

/// Builds the surrogate network with deterministic spring ordering:
/// structural (row-major, right edge then down edge per particle), then
/// shear (cells row-major, main diagonal then anti diagonal), then bending
/// (rows, then columns). Throws DataError on invalid specs.
SpringNetwork build_lattice(const GridSpec& spec, const TopologyFlags& flags);

/// Per-spring difference of a per-particle field: out[s] = field[b] - field[a].
/// Applied to positions this yields d, to velocities the relative velocity v.
std::vector<Vec3> spring_extension_map(const SpringNetwork& net, std::span<const Vec3> per_particle);

/// Transpose action of the signed incidence map: each spring value f
/// contributes +f to endpoint b and -f to endpoint a.
std::vector<Vec3> accumulate_particle_forces(const SpringNetwork& net, std::span<const Vec3> per_spring);

}  // namespace msnet
