#include "msnet/simcore.hpp"

#include <cmath>
#include <string>

#include "msnet/error.hpp"

namespace msnet {

SpringForceResult spring_forces(const SpringNetwork& net, const MaterialParams& params,
                                std::span<const Vec3> x, std::span<const Vec3> v) {
  const std::size_t spring_count = net.springs.size();
  if (params.k.size() != spring_count || params.b.size() != spring_count)
    throw DataError("spring_forces: parameter length does not match spring count");
  if (x.size() != static_cast<std::size_t>(net.particle_count) || v.size() != x.size())
    throw DataError("spring_forces: state size does not match particle count");

  SpringForceResult result;
  result.tension.resize(spring_count);
  for (std::size_t s = 0; s < spring_count; ++s) {
    const Spring& sp = net.springs[s];
    const Vec3 d = x[static_cast<std::size_t>(sp.b)] - x[static_cast<std::size_t>(sp.a)];
    const double len = norm(d);
    if (len < kDegenerateSpringLength) {
      ++result.degenerate;
      continue;  // force defined as zero for this step
    }
    const Vec3 rel_v = v[static_cast<std::size_t>(sp.b)] - v[static_cast<std::size_t>(sp.a)];
    const double elastic = params.k[s] * (len - sp.rest_length) / len;
    const double damping = params.b[s] * dot(rel_v, d) / (len * len);
    result.tension[s] = (elastic + damping) * d;
  }
  return result;
}

std::vector<Vec3> net_force(const SpringNetwork& net, const MaterialParams& params,
                            const SimState& state, const MassModel& masses,
                            const ExternalForceSpec& ext, std::size_t* degenerate_count) {
  if (masses.m.size() != state.size())
    throw DataError("net_force: mass model size does not match state");

  std::vector<Vec3> f(state.size());
  for (std::size_t p = 0; p < state.size(); ++p) {
    f[p] = masses.m[p] * ext.gravity - ext.rayleigh_b * state.v[p];
  }

  SpringForceResult springs = spring_forces(net, params, state.x, state.v);
  if (degenerate_count) *degenerate_count += springs.degenerate;
  // Restoring sign: tension t points a->b when stretched, so the spring pulls
  // a towards b (+t) and b towards a (-t).
  for (std::size_t s = 0; s < net.springs.size(); ++s) {
    const Spring& sp = net.springs[s];
    f[static_cast<std::size_t>(sp.a)] += springs.tension[s];
    f[static_cast<std::size_t>(sp.b)] -= springs.tension[s];
  }
  return f;
}

void step_semi_implicit(SimState& state, std::span<const Vec3> forces, const MassModel& masses,
                        double dt) {
  if (forces.size() != state.size())
    throw DataError("step_semi_implicit: force size does not match state");
  if (!(dt > 0.0)) throw DataError("step_semi_implicit: dt must be positive");

  for (std::size_t p = 0; p < state.size(); ++p) {
    if (state.pinned[p]) continue;
    if (!is_finite(forces[p]))
      throw NumericalError("step_semi_implicit: non-finite force on particle " +
                           std::to_string(p));
  }
  for (std::size_t p = 0; p < state.size(); ++p) {
    if (state.pinned[p]) {
      state.v[p] = Vec3{};
      continue;
    }
    state.v[p] += (dt / masses.m[p]) * forces[p];
    state.x[p] += dt * state.v[p];
  }
  state.t += dt;
}

void resolve_contacts(SimState& state, const ColliderSet& colliders) {
  if (colliders.empty()) return;
  for (std::size_t p = 0; p < state.size(); ++p) {
    Vec3& x = state.x[p];
    Vec3& v = state.v[p];

    for (const HalfSpacePlane& plane : colliders.planes) {
      const double depth = dot(x - plane.point, plane.normal);
      if (depth < 0.0) {
        x -= depth * plane.normal;
        v -= dot(v, plane.normal) * plane.normal;
      }
    }
    for (const SphereCollider& sphere : colliders.spheres) {
      const Vec3 r = x - sphere.center;
      const double dist = norm(r);
      if (dist < sphere.radius && dist > 0.0) {
        const Vec3 n = (1.0 / dist) * r;
        x = sphere.center + sphere.radius * n;
        v -= dot(v, n) * n;
      }
    }
    for (const BoxCollider& box : colliders.boxes) {
      const bool inside = x.x > box.lo.x && x.x < box.hi.x && x.y > box.lo.y && x.y < box.hi.y &&
                          x.z > box.lo.z && x.z < box.hi.z;
      if (!inside) continue;
      // exit through the face with the least penetration
      const double pens[6] = {x.x - box.lo.x, box.hi.x - x.x, x.y - box.lo.y,
                              box.hi.y - x.y, x.z - box.lo.z, box.hi.z - x.z};
      const Vec3 normals[6] = {{-1, 0, 0}, {1, 0, 0}, {0, -1, 0}, {0, 1, 0}, {0, 0, -1}, {0, 0, 1}};
      int best = 0;
      for (int i = 1; i < 6; ++i)
        if (pens[i] < pens[best]) best = i;
      x += pens[best] * normals[best];
      v -= dot(v, normals[best]) * normals[best];
    }
  }
}

std::vector<SimState> simulate(const SpringNetwork& net, const MaterialParams& params,
                               const SimState& initial, const MassModel& masses,
                               const ExternalForceSpec& ext, const ColliderSet& colliders,
                               std::int64_t steps, double dt) {
  if (steps < 1) throw DataError("simulate: steps must be >= 1");

  std::vector<SimState> trajectory;
  trajectory.reserve(static_cast<std::size_t>(steps) + 1);
  trajectory.push_back(initial);

  SimState state = initial;
  for (std::int64_t i = 0; i < steps; ++i) {
    const std::vector<Vec3> f = net_force(net, params, state, masses, ext);
    try {
      step_semi_implicit(state, f, masses, dt);
    } catch (const NumericalError& e) {
      throw NumericalError("simulate: diverged at step " + std::to_string(i + 1) + ": " +
                           e.what());
    }
    resolve_contacts(state, colliders);
    trajectory.push_back(state);
  }
  return trajectory;
}

double kinetic_energy(const SimState& state, const MassModel& masses) {
  double e = 0.0;
  for (std::size_t p = 0; p < state.size(); ++p) e += 0.5 * masses.m[p] * squared_norm(state.v[p]);
  return e;
}

double elastic_energy(const SpringNetwork& net, const MaterialParams& params,
                      std::span<const Vec3> x) {
  double e = 0.0;
  for (std::size_t s = 0; s < net.springs.size(); ++s) {
    const Spring& sp = net.springs[s];
    const double len =
        norm(x[static_cast<std::size_t>(sp.b)] - x[static_cast<std::size_t>(sp.a)]);
    const double stretch = len - sp.rest_length;
    e += 0.5 * params.k[s] * stretch * stretch;
  }
  return e;
}

}  // namespace msnet
