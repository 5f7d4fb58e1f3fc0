#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <map>

#include "msnet/error.hpp"
#include "msnet/femsrc.hpp"
#include "msnet/rng.hpp"
#include "oracles.hpp"

using namespace msnet;

namespace {

std::vector<Vec3> lift(const TriMesh& mesh) {
  std::vector<Vec3> x;
  x.reserve(mesh.rest.size());
  for (const Vec2& p : mesh.rest) x.push_back({p.x, p.y, 0.0});
  return x;
}

// Euler-style edge census: every undirected edge with its triangle count.
std::map<std::pair<std::int32_t, std::int32_t>, int> edge_census(const TriMesh& mesh) {
  std::map<std::pair<std::int32_t, std::int32_t>, int> edges;
  for (const auto& tri : mesh.triangles) {
    for (int i = 0; i < 3; ++i) {
      const std::int32_t a = tri[static_cast<std::size_t>(i)];
      const std::int32_t b = tri[static_cast<std::size_t>((i + 1) % 3)];
      ++edges[{std::min(a, b), std::max(a, b)}];
    }
  }
  return edges;
}

}  // namespace

TEST_CASE("2x2 grid: two triangles, one hinge") {
  const TriMesh mesh = build_tri_grid(2, 2, 1, 1, DiagonalOrientation::uniform);
  CHECK(mesh.triangles.size() == 2);
  CHECK(mesh.hinges.size() == 1);
}

TEST_CASE("16x16 grid: 450 triangles and hinge count equals interior edges") {
  const TriMesh mesh = build_tri_grid(16, 16, 1, 1, DiagonalOrientation::uniform);
  CHECK(mesh.triangles.size() == 450);
  const auto edges = edge_census(mesh);
  std::size_t interior = 0;
  for (const auto& [edge, count] : edges) {
    CHECK(count <= 2);
    if (count == 2) ++interior;
  }
  CHECK(mesh.hinges.size() == interior);
}

TEST_CASE("61x61 grid has 3721 vertices") {
  const TriMesh mesh = build_tri_grid(61, 61, 1, 1, DiagonalOrientation::uniform);
  CHECK(mesh.vertex_count() == 3721);
  CHECK(mesh.rest.size() == 3721);
}

TEST_CASE("alternating orientation flips cell diagonals checkerboard-style") {
  const TriMesh mesh = build_tri_grid(3, 3, 1, 1, DiagonalOrientation::alternating);
  CHECK(mesh.triangles.size() == 8);
  const auto edges = edge_census(mesh);
  // cell (0,0) is even: main diagonal 0-4 present, anti 1-3 absent
  CHECK(edges.count({0, 4}) == 1);
  CHECK(edges.count({1, 3}) == 0);
  // cell (0,1) is odd: anti diagonal 2-4 present
  CHECK(edges.count({2, 4}) == 1);
  CHECK(edges.count({1, 5}) == 0);
}

TEST_CASE("degenerate grids are rejected") {
  CHECK_THROWS_AS(build_tri_grid(1, 5, 1, 1, DiagonalOrientation::uniform), DataError);
  CHECK_THROWS_AS(build_tri_grid(3, 3, 0, 1, DiagonalOrientation::uniform), DataError);
}

TEST_CASE("internal forces vanish at rest, with or without gravity offsets") {
  const TriMesh mesh = build_tri_grid(4, 4, 1, 1, DiagonalOrientation::uniform);
  const FemMaterial mat = FemMaterial::uniform(mesh, 80.0, 1e-3);
  const auto forces = fem_internal_forces(mesh, mat, lift(mesh));
  for (const Vec3& f : forces.f) CHECK(norm(f) < 1e-10);
}

TEST_CASE("internal forces are invariant under uniform translation") {
  const TriMesh mesh = build_tri_grid(3, 4, 1, 1.5, DiagonalOrientation::uniform);
  const FemMaterial mat = FemMaterial::uniform(mesh, 60.0, 2e-3);
  Rng rng(5);
  std::vector<Vec3> x = lift(mesh);
  for (Vec3& p : x)
    p += Vec3{rng.uniform(-0.05, 0.05), rng.uniform(-0.05, 0.05), rng.uniform(-0.05, 0.05)};
  std::vector<Vec3> xt = x;
  for (Vec3& p : xt) p += Vec3{3.0, -2.0, 5.0};
  const auto f0 = fem_internal_forces(mesh, mat, x);
  const auto f1 = fem_internal_forces(mesh, mat, xt);
  double scale = 0.0;
  for (const Vec3& f : f0.f) scale = std::max(scale, norm(f));
  for (std::size_t i = 0; i < f0.f.size(); ++i)
    CHECK(norm(f0.f[i] - f1.f[i]) < 1e-9 * std::max(1.0, scale));
}

TEST_CASE("internal forces sum to zero over all vertices") {
  const TriMesh mesh = build_tri_grid(5, 5, 1, 1, DiagonalOrientation::alternating);
  const FemMaterial mat = FemMaterial::uniform(mesh, 100.0, 5e-3);
  Rng rng(11);
  std::vector<Vec3> x = lift(mesh);
  for (Vec3& p : x)
    p += Vec3{rng.uniform(-0.08, 0.08), rng.uniform(-0.08, 0.08), rng.uniform(-0.08, 0.08)};
  const auto forces = fem_internal_forces(mesh, mat, x);
  Vec3 total{};
  double scale = 0.0;
  for (const Vec3& f : forces.f) {
    total += f;
    scale += norm(f);
  }
  CHECK(norm(total) < 1e-9 * std::max(1.0, scale));
}

TEST_CASE("forces equal the negative finite-difference energy gradient") {
  const TriMesh mesh = build_tri_grid(3, 3, 1, 1, DiagonalOrientation::uniform);
  FemMaterial mat = FemMaterial::uniform(mesh, 50.0, 2e-2);
  Rng rng(42);
  std::vector<Vec3> x = lift(mesh);
  for (Vec3& p : x)
    p += Vec3{rng.uniform(-0.05, 0.05), rng.uniform(-0.05, 0.05), rng.uniform(-0.05, 0.05)};
  const auto forces = fem_internal_forces(mesh, mat, x);

  const double h = 1e-6;
  for (std::size_t i = 0; i < x.size(); ++i) {
    double* comps[3] = {&x[i].x, &x[i].y, &x[i].z};
    const double fc[3] = {forces.f[i].x, forces.f[i].y, forces.f[i].z};
    for (int c = 0; c < 3; ++c) {
      const double orig = *comps[c];
      *comps[c] = orig + h;
      const double up = fem_energy(mesh, mat, x);
      *comps[c] = orig - h;
      const double down = fem_energy(mesh, mat, x);
      *comps[c] = orig;
      const double fd = -(up - down) / (2.0 * h);
      CHECK(oracle::rel_err(fd, fc[c], 1e-3) < 1e-5);
    }
  }
}

TEST_CASE("fold experiment: locking makes the misaligned case sag less at 16x16") {
  FoldSettings settings;
  settings.membrane_stiffness = 200.0;
  settings.bending_stiffness = 2e-4;
  settings.rayleigh_b = 0.05;
  settings.duration_cap = 30.0;
  const FoldResult aligned = fold_experiment(16, FoldAlignment::aligned, settings);
  const FoldResult misaligned = fold_experiment(16, FoldAlignment::misaligned, settings);
  CHECK(aligned.converged);
  CHECK(misaligned.converged);
  CHECK(misaligned.sag < aligned.sag);
}

TEST_CASE("fold experiment: zero bending stiffness sags strictly more") {
  FoldSettings stiff;
  stiff.membrane_stiffness = 200.0;
  stiff.bending_stiffness = 5e-3;
  stiff.rayleigh_b = 0.05;
  stiff.duration_cap = 30.0;
  FoldSettings floppy = stiff;
  floppy.bending_stiffness = 0.0;
  const FoldResult with_bending = fold_experiment(12, FoldAlignment::aligned, stiff);
  const FoldResult without = fold_experiment(12, FoldAlignment::aligned, floppy);
  CHECK(without.sag > with_bending.sag);
}

TEST_CASE("fold experiment flags non-convergence at a tiny duration cap") {
  FoldSettings settings;
  settings.duration_cap = 0.05;
  const FoldResult r = fold_experiment(8, FoldAlignment::aligned, settings);
  CHECK_FALSE(r.converged);
  CHECK(r.steps == 50);
}
