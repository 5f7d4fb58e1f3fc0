#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "msnet/lattice.hpp"
#include "msnet/vec3.hpp"

namespace msnet {

/// Learnable per-spring stiffness (N/m) and damping (N·s/m). Training may
/// transiently visit negative values; the negativity penalties pull them back.
struct MaterialParams {
  std::vector<double> k;
  std::vector<double> b;
};

struct MassModel {
  std::vector<double> m;  // diagonal of the mass matrix, one entry per particle

  double total() const {
    double s = 0;
    for (double v : m) s += v;
    return s;
  }
};

struct ExternalForceSpec {
  Vec3 gravity{0.0, 0.0, -9.81};
  double rayleigh_b = 0.1;  // global velocity-proportional damping, f = -b * xdot
};

struct SimState {
  std::vector<Vec3> x;
  std::vector<Vec3> v;
  std::vector<std::uint8_t> pinned;
  double t = 0.0;

  std::size_t size() const { return x.size(); }
};

struct HalfSpacePlane {
  Vec3 point;
  Vec3 normal;  // unit, outward (cloth stays on the positive side)
};

struct SphereCollider {
  Vec3 center;
  double radius = 0.0;
};

/// Axis-aligned solid box (intersection of six half-spaces); penetrating
/// particles exit through the nearest face.
struct BoxCollider {
  Vec3 lo;
  Vec3 hi;
};

struct ColliderSet {
  std::vector<HalfSpacePlane> planes;
  std::vector<SphereCollider> spheres;
  std::vector<BoxCollider> boxes;

  bool empty() const { return planes.empty() && spheres.empty() && boxes.empty(); }
};

/// Springs shorter than this are treated as force-free for the step.
inline constexpr double kDegenerateSpringLength = 1e-9;

struct SpringForceResult {
  // Per-spring tension vector along d = x_b - x_a: positive factor when the
  // spring is stretched. The restoring force on the endpoints is +t at a and
  // -t at b.
  std::vector<Vec3> tension;
  std::size_t degenerate = 0;
};

/// Spring-frame force: t = k (|d| - l0)/|d| d + b (v·d)/|d|^2 d.
SpringForceResult spring_forces(const SpringNetwork& net, const MaterialParams& params,
                                std::span<const Vec3> x, std::span<const Vec3> v);

/// Net per-particle force: gravity + Rayleigh damping + spring restoring
/// forces. Pinned particles' entries are computed like everyone else's;
/// masking happens at integration and loss stages.
std::vector<Vec3> net_force(const SpringNetwork& net, const MaterialParams& params,
                            const SimState& state, const MassModel& masses,
                            const ExternalForceSpec& ext, std::size_t* degenerate_count = nullptr);

/// Semi-implicit Euler update in place: free particles get
/// v += dt f/m, x += dt v; pinned particles keep their position and zero
/// velocity. Throws NumericalError naming the first particle whose force is
/// non-finite.
void step_semi_implicit(SimState& state, std::span<const Vec3> forces, const MassModel& masses,
                        double dt);

/// Projects penetrating particles to the collider surface and removes the
/// normal velocity component (inelastic, frictionless).
void resolve_contacts(SimState& state, const ColliderSet& colliders);

/// Rolls the network forward; the returned trajectory includes the initial
/// state (length steps + 1). Pure in its inputs.
std::vector<SimState> simulate(const SpringNetwork& net, const MaterialParams& params,
                               const SimState& initial, const MassModel& masses,
                               const ExternalForceSpec& ext, const ColliderSet& colliders,
                               std::int64_t steps, double dt);

double kinetic_energy(const SimState& state, const MassModel& masses);

/// Total elastic energy sum_s 1/2 k_s (|d_s| - l0_s)^2.
double elastic_energy(const SpringNetwork& net, const MaterialParams& params,
                      std::span<const Vec3> x);

}  // namespace msnet
