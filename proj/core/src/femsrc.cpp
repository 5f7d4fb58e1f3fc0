#include "msnet/femsrc.hpp"

#include <cmath>
#include <map>
#include <string>
#include <utility>

#include "msnet/error.hpp"

namespace msnet {

namespace {
constexpr double kDegenerateArea = 1e-12;  // m^2

struct Dihedral {
  double theta = 0.0;
  Vec3 d_e0, d_e1, d_o0, d_o1;  // gradient of theta wrt the four stencil vertices
  bool degenerate = false;
};

// Signed dihedral angle across the shared edge (e0, e1) with opposite
// vertices o0, o1, and its gradient. theta = 0 when the triangles are
// coplanar with consistent winding.
Dihedral dihedral_angle(const Vec3& p0, const Vec3& p1, const Vec3& q0, const Vec3& q1) {
  Dihedral out;
  const Vec3 e = p1 - p0;
  const double elen = norm(e);
  const Vec3 n0 = cross(e, q0 - p0);   // normal of (p0, p1, q0)
  const Vec3 n1 = cross(q1 - p0, e);   // normal of (p0, q1, p1)
  const double n0sq = squared_norm(n0);
  const double n1sq = squared_norm(n1);
  if (elen < 1e-12 || n0sq < kDegenerateArea * kDegenerateArea ||
      n1sq < kDegenerateArea * kDegenerateArea) {
    out.degenerate = true;
    return out;
  }
  const double cos_t = dot(n0, n1);
  const double sin_t = dot(cross(n0, n1), e) / elen;
  out.theta = std::atan2(sin_t, cos_t);

  const Vec3 g0 = (-1.0 / n0sq) * n0;
  const Vec3 g1 = (-1.0 / n1sq) * n1;
  out.d_o0 = elen * g0;
  out.d_o1 = elen * g1;
  out.d_e0 = (dot(q0 - p1, e) / elen) * g0 + (dot(q1 - p1, e) / elen) * g1;
  out.d_e1 = -(dot(q0 - p0, e) / elen) * g0 - (dot(q1 - p0, e) / elen) * g1;
  return out;
}

void lame_coefficients(double stiffness, double poisson, double& mu, double& lambda) {
  mu = stiffness / (2.0 * (1.0 + poisson));
  lambda = stiffness * poisson / (1.0 - poisson * poisson);
}

}  // namespace

FemMaterial FemMaterial::uniform(const TriMesh& mesh, double membrane_stiffness,
                                 double bending_stiffness) {
  FemMaterial m;
  m.membrane.assign(mesh.triangles.size(), membrane_stiffness);
  m.bending.assign(mesh.hinges.size(), bending_stiffness);
  return m;
}

TriMesh build_tri_grid(std::int32_t rows, std::int32_t cols, double width, double height,
                       DiagonalOrientation diagonal) {
  if (rows < 2 || cols < 2) throw DataError("build_tri_grid: grid must be at least 2x2");
  if (!(width > 0.0) || !(height > 0.0))
    throw DataError("build_tri_grid: nonpositive physical dimensions");

  TriMesh mesh;
  mesh.rows = rows;
  mesh.cols = cols;
  mesh.width = width;
  mesh.height = height;
  mesh.diagonal = diagonal;

  const double dx = width / (cols - 1);
  const double dy = height / (rows - 1);
  mesh.rest.reserve(static_cast<std::size_t>(rows) * cols);
  for (std::int32_t r = 0; r < rows; ++r)
    for (std::int32_t c = 0; c < cols; ++c) mesh.rest.push_back({c * dx, r * dy});

  const auto id = [cols](std::int32_t r, std::int32_t c) { return r * cols + c; };
  for (std::int32_t r = 0; r + 1 < rows; ++r) {
    for (std::int32_t c = 0; c + 1 < cols; ++c) {
      const std::int32_t v00 = id(r, c), v01 = id(r, c + 1);
      const std::int32_t v10 = id(r + 1, c), v11 = id(r + 1, c + 1);
      const bool main_diag =
          diagonal == DiagonalOrientation::uniform || ((r + c) % 2 == 0);
      if (main_diag) {
        mesh.triangles.push_back({v00, v01, v11});
        mesh.triangles.push_back({v00, v11, v10});
      } else {
        mesh.triangles.push_back({v00, v01, v10});
        mesh.triangles.push_back({v01, v11, v10});
      }
    }
  }

  // precompute rest-edge matrices
  mesh.rest_area.reserve(mesh.triangles.size());
  mesh.inv_rest.reserve(mesh.triangles.size());
  for (const auto& tri : mesh.triangles) {
    const Vec2 u0 = mesh.rest[static_cast<std::size_t>(tri[0])];
    const Vec2 u1 = mesh.rest[static_cast<std::size_t>(tri[1])];
    const Vec2 u2 = mesh.rest[static_cast<std::size_t>(tri[2])];
    const Vec2 a = u1 - u0, b = u2 - u0;
    const double det = cross(a, b);
    if (det <= 2.0 * kDegenerateArea) throw DataError("build_tri_grid: degenerate rest triangle");
    mesh.rest_area.push_back(0.5 * det);
    const double inv_det = 1.0 / det;
    mesh.inv_rest.push_back({b.y * inv_det, -b.x * inv_det, -a.y * inv_det, a.x * inv_det});
  }

  // hinges: interior edges, found through edge -> (triangle, opposite vertex)
  std::map<std::pair<std::int32_t, std::int32_t>,
           std::vector<std::pair<std::int32_t, std::int32_t>>>
      edge_map;
  for (std::size_t t = 0; t < mesh.triangles.size(); ++t) {
    const auto& tri = mesh.triangles[t];
    for (int i = 0; i < 3; ++i) {
      const std::int32_t a = tri[static_cast<std::size_t>(i)];
      const std::int32_t b = tri[static_cast<std::size_t>((i + 1) % 3)];
      const std::int32_t opposite = tri[static_cast<std::size_t>((i + 2) % 3)];
      edge_map[{std::min(a, b), std::max(a, b)}].push_back(
          {static_cast<std::int32_t>(t), opposite});
    }
  }
  for (const auto& [edge, tris] : edge_map) {
    if (tris.size() > 2) throw DataError("build_tri_grid: non-manifold edge");
    if (tris.size() != 2) continue;
    TriMesh::Hinge h;
    h.e0 = edge.first;
    h.e1 = edge.second;
    h.o0 = tris[0].second;
    h.o1 = tris[1].second;
    h.rest_angle = 0.0;  // planar rest configuration
    mesh.hinges.push_back(h);
  }
  return mesh;
}

FemForceResult fem_internal_forces(const TriMesh& mesh, const FemMaterial& material,
                                   std::span<const Vec3> x) {
  if (x.size() != static_cast<std::size_t>(mesh.vertex_count()))
    throw DataError("fem_internal_forces: state size does not match mesh");
  if (material.membrane.size() != mesh.triangles.size() ||
      material.bending.size() != mesh.hinges.size())
    throw DataError("fem_internal_forces: material arrays do not match mesh");

  FemForceResult result;
  result.f.resize(x.size());

  // membrane: plane-stress StVK on constant-strain triangles
  for (std::size_t t = 0; t < mesh.triangles.size(); ++t) {
    const auto& tri = mesh.triangles[t];
    const Vec3& x0 = x[static_cast<std::size_t>(tri[0])];
    const Vec3& x1 = x[static_cast<std::size_t>(tri[1])];
    const Vec3& x2 = x[static_cast<std::size_t>(tri[2])];
    const Vec3 d1 = x1 - x0, d2 = x2 - x0;

    if (0.5 * norm(cross(d1, d2)) < kDegenerateArea) {
      ++result.degenerate;
      continue;
    }

    const auto& inv = mesh.inv_rest[t];
    const Vec3 f1c = inv[0] * d1 + inv[2] * d2;  // F column 1
    const Vec3 f2c = inv[1] * d1 + inv[3] * d2;  // F column 2

    const double e11 = 0.5 * (dot(f1c, f1c) - 1.0);
    const double e22 = 0.5 * (dot(f2c, f2c) - 1.0);
    const double e12 = 0.5 * dot(f1c, f2c);

    double mu, lambda;
    lame_coefficients(material.membrane[t], material.poisson, mu, lambda);
    const double trace = e11 + e22;
    const double s11 = 2.0 * mu * e11 + lambda * trace;
    const double s22 = 2.0 * mu * e22 + lambda * trace;
    const double s12 = 2.0 * mu * e12;

    const Vec3 p1 = s11 * f1c + s12 * f2c;  // P = F S, column 1
    const Vec3 p2 = s12 * f1c + s22 * f2c;

    const double a0 = mesh.rest_area[t];
    const Vec3 h1 = a0 * (inv[0] * p1 + inv[1] * p2);  // A0 P Dm^{-T}
    const Vec3 h2 = a0 * (inv[2] * p1 + inv[3] * p2);

    result.f[static_cast<std::size_t>(tri[1])] -= h1;
    result.f[static_cast<std::size_t>(tri[2])] -= h2;
    result.f[static_cast<std::size_t>(tri[0])] += h1 + h2;
  }

  // bending: discrete hinges
  for (std::size_t h = 0; h < mesh.hinges.size(); ++h) {
    const TriMesh::Hinge& hinge = mesh.hinges[h];
    const Dihedral d = dihedral_angle(x[static_cast<std::size_t>(hinge.e0)],
                                      x[static_cast<std::size_t>(hinge.e1)],
                                      x[static_cast<std::size_t>(hinge.o0)],
                                      x[static_cast<std::size_t>(hinge.o1)]);
    if (d.degenerate) {
      ++result.degenerate;
      continue;
    }
    const double moment = material.bending[h] * (d.theta - hinge.rest_angle);
    result.f[static_cast<std::size_t>(hinge.e0)] -= moment * d.d_e0;
    result.f[static_cast<std::size_t>(hinge.e1)] -= moment * d.d_e1;
    result.f[static_cast<std::size_t>(hinge.o0)] -= moment * d.d_o0;
    result.f[static_cast<std::size_t>(hinge.o1)] -= moment * d.d_o1;
  }
  return result;
}

std::vector<Vec3> fem_net_force(const TriMesh& mesh, const FemMaterial& material,
                                const SimState& state, const MassModel& masses,
                                const ExternalForceSpec& ext, std::size_t* degenerate_count) {
  FemForceResult internal = fem_internal_forces(mesh, material, state.x);
  if (degenerate_count) *degenerate_count += internal.degenerate;
  for (std::size_t p = 0; p < state.size(); ++p) {
    internal.f[p] += masses.m[p] * ext.gravity - ext.rayleigh_b * state.v[p];
  }
  return internal.f;
}

double fem_energy(const TriMesh& mesh, const FemMaterial& material, std::span<const Vec3> x) {
  double energy = 0.0;
  for (std::size_t t = 0; t < mesh.triangles.size(); ++t) {
    const auto& tri = mesh.triangles[t];
    const Vec3 d1 = x[static_cast<std::size_t>(tri[1])] - x[static_cast<std::size_t>(tri[0])];
    const Vec3 d2 = x[static_cast<std::size_t>(tri[2])] - x[static_cast<std::size_t>(tri[0])];
    if (0.5 * norm(cross(d1, d2)) < kDegenerateArea) continue;
    const auto& inv = mesh.inv_rest[t];
    const Vec3 f1c = inv[0] * d1 + inv[2] * d2;
    const Vec3 f2c = inv[1] * d1 + inv[3] * d2;
    const double e11 = 0.5 * (dot(f1c, f1c) - 1.0);
    const double e22 = 0.5 * (dot(f2c, f2c) - 1.0);
    const double e12 = 0.5 * dot(f1c, f2c);
    double mu, lambda;
    lame_coefficients(material.membrane[t], material.poisson, mu, lambda);
    const double trace = e11 + e22;
    energy += mesh.rest_area[t] *
              (mu * (e11 * e11 + e22 * e22 + 2.0 * e12 * e12) + 0.5 * lambda * trace * trace);
  }
  for (std::size_t h = 0; h < mesh.hinges.size(); ++h) {
    const TriMesh::Hinge& hinge = mesh.hinges[h];
    const Dihedral d = dihedral_angle(x[static_cast<std::size_t>(hinge.e0)],
                                      x[static_cast<std::size_t>(hinge.e1)],
                                      x[static_cast<std::size_t>(hinge.o0)],
                                      x[static_cast<std::size_t>(hinge.o1)]);
    if (d.degenerate) continue;
    const double dev = d.theta - hinge.rest_angle;
    energy += 0.5 * material.bending[h] * dev * dev;
  }
  return energy;
}

std::vector<SimState> fem_simulate(const TriMesh& mesh, const FemMaterial& material,
                                   const SimState& initial, const MassModel& masses,
                                   const ExternalForceSpec& ext, const ColliderSet& colliders,
                                   std::int64_t steps, double dt) {
  if (steps < 1) throw DataError("fem_simulate: steps must be >= 1");
  std::vector<SimState> trajectory;
  trajectory.reserve(static_cast<std::size_t>(steps) + 1);
  trajectory.push_back(initial);
  SimState state = initial;
  for (std::int64_t i = 0; i < steps; ++i) {
    const std::vector<Vec3> f = fem_net_force(mesh, material, state, masses, ext);
    try {
      step_semi_implicit(state, f, masses, dt);
    } catch (const NumericalError& e) {
      throw NumericalError("fem_simulate: diverged at step " + std::to_string(i + 1) + ": " +
                           e.what());
    }
    resolve_contacts(state, colliders);
    trajectory.push_back(state);
  }
  return trajectory;
}

FoldResult fold_experiment(std::int32_t resolution, FoldAlignment alignment,
                           const FoldSettings& settings) {
  if (resolution < 2) throw DataError("fold_experiment: resolution must be >= 2");

  const TriMesh mesh = build_tri_grid(resolution, resolution, settings.size, settings.size,
                                      DiagonalOrientation::uniform);
  FemMaterial material =
      FemMaterial::uniform(mesh, settings.membrane_stiffness, settings.bending_stiffness);
  material.poisson = settings.poisson;
  material.rayleigh_b = settings.rayleigh_b;

  const std::int32_t n = resolution;
  SimState state;
  state.x.reserve(mesh.rest.size());
  for (const Vec2& r : mesh.rest) state.x.push_back({r.x, r.y, 0.0});
  state.v.assign(mesh.rest.size(), Vec3{});
  state.pinned.assign(mesh.rest.size(), 0);
  if (alignment == FoldAlignment::aligned) {
    // corners joined by the direction the cell diagonals run in
    state.pinned[0] = 1;
    state.pinned[static_cast<std::size_t>(n * n - 1)] = 1;
  } else {
    state.pinned[static_cast<std::size_t>(n - 1)] = 1;
    state.pinned[static_cast<std::size_t>(n * (n - 1))] = 1;
  }

  MassModel masses;
  masses.m.assign(mesh.rest.size(),
                  settings.density * settings.size * settings.size / (n * n));

  ExternalForceSpec ext;
  ext.gravity = settings.gravity;
  ext.rayleigh_b = settings.rayleigh_b;

  FoldResult result;
  result.pinned = state.pinned;
  if (settings.record_stride > 0) {
    result.recorded.points = mesh.vertex_count();
    result.recorded.push_frame(state.x);
  }

  const std::int64_t max_steps =
      static_cast<std::int64_t>(std::llround(settings.duration_cap / settings.dt));
  std::int32_t calm_steps = 0;
  std::int64_t step_index = 0;
  for (; step_index < max_steps; ++step_index) {
    const std::vector<Vec3> f = fem_net_force(mesh, material, state, masses, ext);
    step_semi_implicit(state, f, masses, settings.dt);
    if (settings.record_stride > 0 && (step_index + 1) % settings.record_stride == 0)
      result.recorded.push_frame(state.x);

    double max_speed = 0.0;
    for (std::size_t p = 0; p < state.size(); ++p)
      if (!state.pinned[p]) max_speed = std::max(max_speed, norm(state.v[p]));
    calm_steps = max_speed < settings.speed_tolerance ? calm_steps + 1 : 0;
    if (calm_steps >= settings.sustain_steps) {
      result.converged = true;
      ++step_index;
      break;
    }
  }

  result.steps = step_index;
  result.equilibrium = state.x;
  double min_z = 0.0;
  for (std::size_t p = 0; p < state.size(); ++p)
    if (!state.pinned[p]) min_z = std::min(min_z, state.x[p].z);
  result.sag = -min_z;
  return result;
}

}  // namespace msnet
