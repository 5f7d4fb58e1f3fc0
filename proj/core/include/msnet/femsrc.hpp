#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <vector>

#include "msnet/simcore.hpp"
#include "msnet/vec3.hpp"

namespace msnet {

enum class DiagonalOrientation : std::uint8_t { uniform = 0, alternating = 1 };

/// Triangulated grid used as a thin-shell source system. Linear (CST)
/// triangles are intentionally locking-prone; that is the phenomenon the
/// fold experiments exercise.
struct TriMesh {
  std::int32_t rows = 0;
  std::int32_t cols = 0;
  double width = 0.0;
  double height = 0.0;
  DiagonalOrientation diagonal = DiagonalOrientation::uniform;

  std::vector<Vec2> rest;                             // row-major vertex rest positions
  std::vector<std::array<std::int32_t, 3>> triangles; // CCW in the rest plane

  struct Hinge {
    std::int32_t e0 = 0, e1 = 0;  // shared edge
    std::int32_t o0 = 0, o1 = 0;  // opposite vertices of the two triangles
    double rest_angle = 0.0;
  };
  std::vector<Hinge> hinges;

  // per-triangle precomputation: rest area and inverse rest-edge matrix
  std::vector<double> rest_area;
  std::vector<std::array<double, 4>> inv_rest;  // row-major 2x2

  std::int32_t vertex_count() const { return rows * cols; }
};

struct FemMaterial {
  std::vector<double> membrane;  // per-triangle stiffness Y*h (N/m)
  std::vector<double> bending;   // per-hinge stiffness (N*m)
  double poisson = 0.3;
  double rayleigh_b = 0.1;

  static FemMaterial uniform(const TriMesh& mesh, double membrane_stiffness,
                             double bending_stiffness);
};

TriMesh build_tri_grid(std::int32_t rows, std::int32_t cols, double width, double height,
                       DiagonalOrientation diagonal);

struct FemForceResult {
  std::vector<Vec3> f;
  std::size_t degenerate = 0;
};

/// Internal force = negative gradient of membrane (plane-stress StVK on
/// constant-strain triangles) plus hinge bending energy 1/2 k (theta-theta0)^2.
FemForceResult fem_internal_forces(const TriMesh& mesh, const FemMaterial& material,
                                   std::span<const Vec3> x);

/// Internal forces plus gravity and Rayleigh damping.
std::vector<Vec3> fem_net_force(const TriMesh& mesh, const FemMaterial& material,
                                const SimState& state, const MassModel& masses,
                                const ExternalForceSpec& ext, std::size_t* degenerate_count = nullptr);

/// Total discrete energy (membrane + bending); fem_internal_forces is its
/// exact negative gradient, which the tests check by finite differences.
double fem_energy(const TriMesh& mesh, const FemMaterial& material, std::span<const Vec3> x);

/// Same integrator and contact handling as the mass-spring engine.
std::vector<SimState> fem_simulate(const TriMesh& mesh, const FemMaterial& material,
                                   const SimState& initial, const MassModel& masses,
                                   const ExternalForceSpec& ext, const ColliderSet& colliders,
                                   std::int64_t steps, double dt);

enum class FoldAlignment : std::uint8_t { aligned = 0, misaligned = 1 };

struct FoldSettings {
  double size = 1.0;           // square cloth side (m)
  double density = 1.0;        // area density (kg/m^2), uniform lumped mass
  double membrane_stiffness = 60.0;
  double bending_stiffness = 2e-4;
  double poisson = 0.3;
  double dt = 1e-3;
  double duration_cap = 40.0;  // s
  double speed_tolerance = 1e-4;  // m/s, max per-vertex speed at equilibrium
  std::int32_t sustain_steps = 200;
  Vec3 gravity{0.0, 0.0, -9.81};
  double rayleigh_b = 0.1;
  std::int32_t record_stride = 0;  // 0 = keep only the final state
};

struct FoldResult {
  std::vector<Vec3> equilibrium;
  double sag = 0.0;   // depth of the lowest free vertex below the pin plane (positive)
  bool converged = false;
  std::int64_t steps = 0;
  std::vector<std::uint8_t> pinned;
  Trajectory3 recorded;  // optional (record_stride > 0)
};

/// Square cloth pinned at two diagonally opposite corners, settling under
/// gravity and Rayleigh damping. With a uniform diagonal split, "aligned"
/// pins the corners the cell diagonals run between; "misaligned" pins the
/// other pair, which makes the fold cross the mesh diagonals.
FoldResult fold_experiment(std::int32_t resolution, FoldAlignment alignment,
                           const FoldSettings& settings);

}  // namespace msnet
