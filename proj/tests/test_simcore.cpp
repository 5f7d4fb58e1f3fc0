#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "msnet/error.hpp"
#include "msnet/rng.hpp"
#include "msnet/simcore.hpp"
#include "oracles.hpp"

using namespace msnet;

namespace {

SpringNetwork single_spring(double rest) {
  SpringNetwork net;
  net.particle_count = 2;
  net.springs.push_back({0, 1, rest, SpringClass::structural});
  return net;
}

SimState rest_state(const GridSpec& grid) {
  SimState state;
  for (const Vec2& p : rest_layout(grid).positions) state.x.push_back({p.x, p.y, 0.0});
  state.v.assign(state.x.size(), Vec3{});
  state.pinned.assign(state.x.size(), 0);
  return state;
}

}  // namespace

TEST_CASE("spring force: stretched spring, no damping") {
  const SpringNetwork net = single_spring(1.0);
  MaterialParams p{{10.0}, {0.0}};
  const std::vector<Vec3> x = {{0, 0, 0}, {2, 0, 0}};
  const std::vector<Vec3> v = {{0, 0, 0}, {0, 0, 0}};
  const auto f = spring_forces(net, p, x, v);
  CHECK(f.tension[0].x == doctest::Approx(10.0));
  CHECK(f.tension[0].y == 0.0);
  CHECK(f.tension[0].z == 0.0);
}

TEST_CASE("spring force vanishes at rest length") {
  const SpringNetwork net = single_spring(std::sqrt(2.0));
  MaterialParams p{{123.0}, {0.0}};
  const std::vector<Vec3> x = {{0, 0, 0}, {1, 1, 0}};
  const std::vector<Vec3> v = {{0, 0, 0}, {0, 0, 0}};
  const auto f = spring_forces(net, p, x, v);
  CHECK(norm(f.tension[0]) < 1e-12);
}

TEST_CASE("spring force: pure damping term") {
  const SpringNetwork net = single_spring(1.0);
  MaterialParams p{{0.0}, {6.0}};
  const std::vector<Vec3> x = {{0, 0, 0}, {1, 0, 0}};
  const std::vector<Vec3> v = {{0, 0, 0}, {1, 0, 0}};
  const auto f = spring_forces(net, p, x, v);
  CHECK(f.tension[0].x == doctest::Approx(6.0));
}

TEST_CASE("spring force matches the scalar two-term oracle") {
  const SpringNetwork net = single_spring(0.5);
  MaterialParams p{{50.0}, {6.0}};
  const Vec3 d{0, 0.3, 0.4};
  const Vec3 vrel{0, 1, 0};
  const std::vector<Vec3> x = {{0, 0, 0}, d};
  const std::vector<Vec3> v = {{0, 0, 0}, vrel};
  const auto f = spring_forces(net, p, x, v);
  const Vec3 want = oracle::spring_force_scalar(50.0, 6.0, 0.5, d, vrel);
  CHECK(norm(f.tension[0] - want) < 1e-14);
}

TEST_CASE("degenerate spring yields zero force and bumps the counter") {
  const SpringNetwork net = single_spring(1.0);
  MaterialParams p{{10.0}, {2.0}};
  const std::vector<Vec3> x = {{0, 0, 0}, {0, 0, 1e-10}};
  const std::vector<Vec3> v = {{0, 0, 0}, {1, 0, 0}};
  const auto f = spring_forces(net, p, x, v);
  CHECK(norm(f.tension[0]) == 0.0);
  CHECK(f.degenerate == 1);
}

TEST_CASE("net force: unstretched, resting cloth feels exactly m g") {
  GridSpec grid{3, 3, 1.0, 1.0};
  TopologyFlags flags;
  flags.shear_main = flags.shear_anti = flags.bending = false;
  const SpringNetwork net = build_lattice(grid, flags);
  const MassModel masses = assign_masses(0.25, grid);
  MaterialParams p;
  p.k.assign(net.springs.size(), 40.0);
  p.b.assign(net.springs.size(), 2.0);
  SimState state = rest_state(grid);
  ExternalForceSpec ext;
  const auto f = net_force(net, p, state, masses, ext);
  for (std::size_t i = 0; i < f.size(); ++i) {
    CHECK(f[i].x == 0.0);
    CHECK(f[i].y == 0.0);
    CHECK(f[i].z == doctest::Approx(masses.m[i] * -9.81).epsilon(1e-14));
  }
}

TEST_CASE("net force: no gravity at rest is identically zero") {
  GridSpec grid{3, 3, 1.0, 1.0};
  const SpringNetwork net = build_lattice(grid, TopologyFlags{});
  const MassModel masses = assign_masses(0.25, grid);
  MaterialParams p;
  p.k.assign(net.springs.size(), 40.0);
  p.b.assign(net.springs.size(), 2.0);
  SimState state = rest_state(grid);
  ExternalForceSpec ext;
  ext.gravity = Vec3{};
  ext.rayleigh_b = 0.0;
  for (const Vec3& f : net_force(net, p, state, masses, ext)) CHECK(norm(f) < 1e-12);
}

TEST_CASE("net force matches a dense brute-force recomputation") {
  GridSpec grid{3, 3, 1.0, 1.0};
  const SpringNetwork net = build_lattice(grid, TopologyFlags{});
  const MassModel masses = assign_masses(0.3, grid);
  Rng rng(3);
  MaterialParams p;
  for (std::size_t s = 0; s < net.springs.size(); ++s) {
    p.k.push_back(rng.uniform(5, 60));
    p.b.push_back(rng.uniform(0.5, 4));
  }
  SimState state = rest_state(grid);
  for (std::size_t i = 0; i < state.size(); ++i) {
    state.x[i] += Vec3{rng.uniform(-0.1, 0.1), rng.uniform(-0.1, 0.1), rng.uniform(-0.1, 0.1)};
    state.v[i] = Vec3{rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1)};
  }
  ExternalForceSpec ext;
  const auto got = net_force(net, p, state, masses, ext);

  // brute force: per particle, walk every spring and apply the scalar law
  for (std::size_t i = 0; i < state.size(); ++i) {
    Vec3 want = masses.m[i] * ext.gravity - ext.rayleigh_b * state.v[i];
    for (std::size_t s = 0; s < net.springs.size(); ++s) {
      const Spring& sp = net.springs[s];
      const Vec3 d = state.x[static_cast<std::size_t>(sp.b)] - state.x[static_cast<std::size_t>(sp.a)];
      const Vec3 vrel = state.v[static_cast<std::size_t>(sp.b)] - state.v[static_cast<std::size_t>(sp.a)];
      const Vec3 t = oracle::spring_force_scalar(p.k[s], p.b[s], sp.rest_length, d, vrel);
      if (sp.a == static_cast<std::int32_t>(i)) want += t;
      if (sp.b == static_cast<std::int32_t>(i)) want -= t;
    }
    CHECK(norm(got[i] - want) < 1e-12 * std::max(1.0, norm(want)));
  }
}

TEST_CASE("semi-implicit step: single-particle free fall") {
  SimState state;
  state.x = {{0, 0, 0}};
  state.v = {{0, 0, 0}};
  state.pinned = {0};
  MassModel masses{{2.0}};
  const std::vector<Vec3> f = {{0, 0, 2.0 * -9.81}};
  step_semi_implicit(state, f, masses, 1e-3);
  CHECK(state.v[0].z == doctest::Approx(-9.81e-3).epsilon(1e-14));
  CHECK(state.x[0].z == doctest::Approx(-9.81e-6).epsilon(1e-14));
  CHECK(state.t == doctest::Approx(1e-3));
}

TEST_CASE("pinned particle ignores forces") {
  SimState state;
  state.x = {{1, 2, 3}};
  state.v = {{0, 0, 0}};
  state.pinned = {1};
  MassModel masses{{1.0}};
  const std::vector<Vec3> f = {{100, -50, 77}};
  step_semi_implicit(state, f, masses, 1e-3);
  CHECK(state.x[0].x == 1.0);
  CHECK(state.x[0].y == 2.0);
  CHECK(state.x[0].z == 3.0);
  CHECK(norm(state.v[0]) == 0.0);
}

TEST_CASE("non-finite force is rejected with the particle named") {
  SimState state;
  state.x = {{0, 0, 0}, {1, 0, 0}};
  state.v = {{0, 0, 0}, {0, 0, 0}};
  state.pinned = {0, 0};
  MassModel masses{{1.0, 1.0}};
  const std::vector<Vec3> f = {{0, 0, 0}, {std::nan(""), 0, 0}};
  CHECK_THROWS_WITH_AS(step_semi_implicit(state, f, masses, 1e-3),
                       doctest::Contains("particle 1"), NumericalError);
}

TEST_CASE("two-particle 1D chain matches the scalar recurrence over 100 steps") {
  const SpringNetwork net = single_spring(1.0);
  MaterialParams p{{30.0}, {1.5}};
  MassModel masses{{0.2, 0.4}};
  ExternalForceSpec ext;
  ext.gravity = Vec3{};
  ext.rayleigh_b = 0.0;
  SimState state;
  state.x = {{0, 0, 0}, {1.3, 0, 0}};
  state.v = {{0.1, 0, 0}, {-0.2, 0, 0}};
  state.pinned = {0, 0};
  const double dt = 1e-3;

  // independent scalar recurrence in the x coordinate only
  double xa = 0.0, xb = 1.3, va = 0.1, vb = -0.2;
  const auto trajectory = simulate(net, p, state, masses, ext, ColliderSet{}, 100, dt);
  for (int step = 0; step < 100; ++step) {
    const double d = xb - xa;
    const double tension = 30.0 * (std::abs(d) - 1.0) / std::abs(d) * d +
                           1.5 * ((vb - va) * d) / (d * d) * d;
    va += dt / 0.2 * tension;
    vb += dt / 0.4 * -tension;
    xa += dt * va;
    xb += dt * vb;
  }
  CHECK(trajectory.back().x[0].x == doctest::Approx(xa).epsilon(1e-12));
  CHECK(trajectory.back().x[1].x == doctest::Approx(xb).epsilon(1e-12));
  CHECK(trajectory.back().v[0].x == doctest::Approx(va).epsilon(1e-12));
}

TEST_CASE("contacts: plane projection removes normal velocity") {
  SimState state;
  state.x = {{0.3, 0.7, -0.1}};
  state.v = {{1, 0, -2}};
  state.pinned = {0};
  ColliderSet colliders;
  colliders.planes.push_back({{0, 0, 0}, {0, 0, 1}});
  resolve_contacts(state, colliders);
  CHECK(state.x[0].z == doctest::Approx(0.0));
  CHECK(state.v[0].x == doctest::Approx(1.0));
  CHECK(state.v[0].z == doctest::Approx(0.0));
}

TEST_CASE("contacts: particle outside colliders is untouched") {
  SimState state;
  state.x = {{0, 0, 1.0}};
  state.v = {{0.5, 0, -1}};
  state.pinned = {0};
  ColliderSet colliders;
  colliders.planes.push_back({{0, 0, 0}, {0, 0, 1}});
  colliders.spheres.push_back({{5, 5, 5}, 0.5});
  resolve_contacts(state, colliders);
  CHECK(state.x[0].z == 1.0);
  CHECK(state.v[0].z == -1.0);
}

TEST_CASE("contacts: sphere projection lands on the surface") {
  SimState state;
  state.x = {{0.1, 0.05, 0.48}};
  state.v = {{0, 0, -1}};
  state.pinned = {0};
  ColliderSet colliders;
  colliders.spheres.push_back({{0, 0, 0}, 0.5});
  resolve_contacts(state, colliders);
  CHECK(norm(state.x[0]) == doctest::Approx(0.5).epsilon(1e-12));
  const Vec3 n = (1.0 / norm(state.x[0])) * state.x[0];
  CHECK(std::abs(dot(state.v[0], n)) < 1e-12);
}

TEST_CASE("simulate: equilibrium stays put without gravity") {
  GridSpec grid{4, 4, 1.5, 1.5};
  const SpringNetwork net = build_lattice(grid, TopologyFlags{});
  const MassModel masses = assign_masses(0.3, grid);
  MaterialParams p;
  p.k.assign(net.springs.size(), 20.0);
  p.b.assign(net.springs.size(), 1.0);
  SimState state = rest_state(grid);
  ExternalForceSpec ext;
  ext.gravity = Vec3{};
  const auto trajectory = simulate(net, p, state, masses, ext, ColliderSet{}, 50, 1e-3);
  REQUIRE(trajectory.size() == 51);
  for (std::size_t i = 0; i < state.size(); ++i)
    CHECK(norm(trajectory.back().x[i] - state.x[i]) < 1e-12);
}

TEST_CASE("simulate: two pinned corners settle under Rayleigh damping") {
  GridSpec grid{8, 8, 3.5, 3.5};
  const SpringNetwork net = build_lattice(grid, TopologyFlags{});
  const MassModel masses = assign_masses(0.3, grid);
  MaterialParams p;
  p.k.assign(net.springs.size(), 40.0);
  p.b.assign(net.springs.size(), 2.0);
  SimState state = rest_state(grid);
  state.pinned[0] = 1;
  state.pinned[7] = 1;
  ExternalForceSpec ext;  // gravity + rayleigh 0.1
  const auto trajectory = simulate(net, p, state, masses, ext, ColliderSet{}, 8000, 1e-3);

  double peak = 0.0, last = kinetic_energy(trajectory.back(), masses);
  for (const SimState& s : trajectory) peak = std::max(peak, kinetic_energy(s, masses));
  CHECK(last < 0.01 * peak);
}

TEST_CASE("simulate: unpinned rest cloth free-falls like the closed form") {
  GridSpec grid{3, 3, 1.0, 1.0};
  const SpringNetwork net = build_lattice(grid, TopologyFlags{});
  const MassModel masses = assign_masses(0.5, grid);
  MaterialParams p;
  p.k.assign(net.springs.size(), 50.0);
  p.b.assign(net.springs.size(), 2.0);
  SimState state = rest_state(grid);
  ExternalForceSpec ext;
  ext.rayleigh_b = 0.0;
  const int steps = 200;
  const double dt = 1e-3;
  const auto trajectory = simulate(net, p, state, masses, ext, ColliderSet{}, steps, dt);

  // springs stay unstretched, so every particle follows the semi-implicit
  // free-fall recurrence: z_n = -g dt^2 * n(n+1)/2
  const double g = 9.81;
  const double want_z = -g * dt * dt * (static_cast<double>(steps) * (steps + 1) / 2.0);
  Vec3 com{};
  for (const Vec3& x : trajectory.back().x) com += x;
  com = (1.0 / 9.0) * com;
  CHECK(com.z == doctest::Approx(want_z).epsilon(1e-10));
}

TEST_CASE("property: translation invariance of spring forces") {
  GridSpec grid{4, 4, 1.5, 1.5};
  const SpringNetwork net = build_lattice(grid, TopologyFlags{});
  Rng rng(17);
  MaterialParams p;
  for (std::size_t s = 0; s < net.springs.size(); ++s) {
    p.k.push_back(rng.uniform(5, 80));
    p.b.push_back(rng.uniform(0.2, 5));
  }
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<Vec3> x, v, xt;
    const Vec3 shift{rng.uniform(-5, 5), rng.uniform(-5, 5), rng.uniform(-5, 5)};
    for (std::int32_t i = 0; i < net.particle_count; ++i) {
      x.push_back({rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1)});
      v.push_back({rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1)});
      xt.push_back(x.back() + shift);
    }
    const auto f0 = spring_forces(net, p, x, v);
    const auto f1 = spring_forces(net, p, xt, v);
    // exact up to the rounding of the translated inputs themselves
    double scale = 0.0;
    for (std::size_t s = 0; s < net.springs.size(); ++s) scale = std::max(scale, norm(f0.tension[s]));
    for (std::size_t s = 0; s < net.springs.size(); ++s)
      CHECK(norm(f0.tension[s] - f1.tension[s]) < 1e-12 * std::max(1.0, scale));
  }
}

TEST_CASE("property: rotation equivariance of spring forces") {
  GridSpec grid{3, 4, 1.5, 1.0};
  const SpringNetwork net = build_lattice(grid, TopologyFlags{});
  Rng rng(23);
  MaterialParams p;
  for (std::size_t s = 0; s < net.springs.size(); ++s) {
    p.k.push_back(rng.uniform(5, 80));
    p.b.push_back(rng.uniform(0.2, 5));
  }
  for (int trial = 0; trial < 20; ++trial) {
    const Mat3 R = rng.uniform_rotation();
    std::vector<Vec3> x, v, xr, vr;
    for (std::int32_t i = 0; i < net.particle_count; ++i) {
      x.push_back({rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1)});
      v.push_back({rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1)});
      xr.push_back(R * x.back());
      vr.push_back(R * v.back());
    }
    const auto f = spring_forces(net, p, x, v);
    const auto fr = spring_forces(net, p, xr, vr);
    double scale = 0.0;
    for (std::size_t s = 0; s < net.springs.size(); ++s) scale = std::max(scale, norm(f.tension[s]));
    for (std::size_t s = 0; s < net.springs.size(); ++s)
      CHECK(norm(fr.tension[s] - R * f.tension[s]) < 1e-10 * std::max(1.0, scale));
  }
}

TEST_CASE("property: isolated system conserves momentum over 1000 steps") {
  GridSpec grid{4, 4, 1.5, 1.5};
  const SpringNetwork net = build_lattice(grid, TopologyFlags{});
  const MassModel masses = assign_masses(0.4, grid);
  Rng rng(31);
  MaterialParams p;
  for (std::size_t s = 0; s < net.springs.size(); ++s) {
    p.k.push_back(rng.uniform(5, 50));
    p.b.push_back(rng.uniform(0.2, 3));
  }
  SimState state = rest_state(grid);
  for (std::size_t i = 0; i < state.size(); ++i)
    state.v[i] = Vec3{rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1)};
  ExternalForceSpec ext;
  ext.gravity = Vec3{};
  ext.rayleigh_b = 0.0;

  Vec3 p0{};
  for (std::size_t i = 0; i < state.size(); ++i) p0 += masses.m[i] * state.v[i];
  const auto trajectory = simulate(net, p, state, masses, ext, ColliderSet{}, 1000, 1e-3);
  Vec3 p1{};
  for (std::size_t i = 0; i < state.size(); ++i) p1 += masses.m[i] * trajectory.back().v[i];
  CHECK(norm(p1 - p0) < 1e-10 * std::max(1.0, norm(p0)));
}

TEST_CASE("property: pinned particles never move across a trajectory") {
  GridSpec grid{5, 5, 2.0, 2.0};
  const SpringNetwork net = build_lattice(grid, TopologyFlags{});
  const MassModel masses = assign_masses(0.3, grid);
  MaterialParams p;
  p.k.assign(net.springs.size(), 30.0);
  p.b.assign(net.springs.size(), 1.0);
  SimState state = rest_state(grid);
  state.pinned[0] = state.pinned[4] = state.pinned[12] = 1;
  const auto trajectory =
      simulate(net, p, state, masses, ExternalForceSpec{}, ColliderSet{}, 500, 1e-3);
  for (const SimState& s : trajectory) {
    for (std::size_t i : {0UL, 4UL, 12UL}) {
      CHECK(s.x[i].x == state.x[i].x);  // byte-identical
      CHECK(s.x[i].y == state.x[i].y);
      CHECK(s.x[i].z == state.x[i].z);
    }
  }
}

TEST_CASE("property: elastic force is the negative energy gradient") {
  GridSpec grid{3, 3, 1.0, 1.0};
  const SpringNetwork net = build_lattice(grid, TopologyFlags{});
  Rng rng(41);
  MaterialParams p;
  for (std::size_t s = 0; s < net.springs.size(); ++s) {
    p.k.push_back(rng.uniform(10, 90));
    p.b.push_back(0.0);  // elastic part only
  }
  const MassModel masses = assign_masses(0.3, grid);
  SimState state = rest_state(grid);
  for (std::size_t i = 0; i < state.size(); ++i)
    state.x[i] += Vec3{rng.uniform(-0.05, 0.05), rng.uniform(-0.05, 0.05), rng.uniform(-0.05, 0.05)};
  ExternalForceSpec ext;
  ext.gravity = Vec3{};
  ext.rayleigh_b = 0.0;
  const auto force = net_force(net, p, state, masses, ext);

  const double h = 1e-6;
  for (std::size_t i = 0; i < state.size(); ++i) {
    double* comps[3] = {&state.x[i].x, &state.x[i].y, &state.x[i].z};
    const double fc[3] = {force[i].x, force[i].y, force[i].z};
    for (int c = 0; c < 3; ++c) {
      const double orig = *comps[c];
      *comps[c] = orig + h;
      const double up = elastic_energy(net, p, state.x);
      *comps[c] = orig - h;
      const double down = elastic_energy(net, p, state.x);
      *comps[c] = orig;
      const double fd = -(up - down) / (2.0 * h);
      CHECK(oracle::rel_err(fd, fc[c], 1e-4) < 1e-6);
    }
  }
}
