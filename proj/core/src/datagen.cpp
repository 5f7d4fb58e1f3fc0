#include "msnet/datagen.hpp"

#include <algorithm>
#include <cmath>

#include "msnet/error.hpp"

namespace msnet {

const char* to_string(SourceKind k) {
  return k == SourceKind::mass_spring ? "mass-spring" : "fem";
}

StiffnessLayout StiffnessLayout::uniform(double k) {
  StiffnessLayout l;
  l.name = "uniform";
  l.base = k;
  return l;
}

StiffnessLayout StiffnessLayout::three_band(double k0, double k1, double k2) {
  StiffnessLayout l;
  l.name = "three-band";
  l.base = k0;
  l.regions.push_back({1.0 / 3.0, 0.0, 2.0 / 3.0, 1.0, k1});
  l.regions.push_back({2.0 / 3.0, 0.0, 1.0, 1.0, k2});
  return l;
}

StiffnessLayout StiffnessLayout::stripes_patch(double base, double stripe, double patch) {
  StiffnessLayout l;
  l.name = "stripes-patch";
  l.base = base;
  l.regions.push_back({0.15, 0.0, 0.30, 1.0, stripe});   // vertical stripe
  l.regions.push_back({0.70, 0.0, 0.85, 1.0, stripe});   // vertical stripe
  l.regions.push_back({0.0, 0.80, 1.0, 0.95, stripe});   // horizontal stripe near the top
  l.regions.push_back({0.40, 0.40, 0.60, 0.60, patch});  // center patch
  return l;
}

LandmarkLayout landmark_layout(const GridSpec& grid) {
  LandmarkLayout layout;
  layout.width = grid.width;
  layout.height = grid.height;
  layout.rest = rest_layout(grid).positions;
  return layout;
}

std::vector<std::uint8_t> sample_boundary_condition(const RolloutSpec& spec,
                                                    const LandmarkLayout& layout, Rng& rng) {
  const std::size_t n = layout.count();
  const std::size_t center_a = rng.index(n);
  std::size_t center_b = rng.index(n);
  while (center_b == center_a) center_b = rng.index(n);

  std::vector<std::uint8_t> pinned(n, 0);
  const double r2 = spec.anchor_radius * spec.anchor_radius;
  for (std::size_t j = 0; j < n; ++j) {
    const Vec2 da = layout.rest[j] - layout.rest[center_a];
    const Vec2 db = layout.rest[j] - layout.rest[center_b];
    if (dot(da, da) <= r2 || dot(db, db) <= r2) pinned[j] = 1;
  }
  if (std::find(pinned.begin(), pinned.end(), 0) == pinned.end())
    throw DataError("sample_boundary_condition: anchor radius pins every landmark");
  return pinned;
}

void sample_initial_condition(const RolloutSpec& spec, const LandmarkLayout& layout, Rng& rng,
                              std::vector<Vec3>& positions, std::vector<Vec3>& velocities) {
  const Mat3 rotation = rng.uniform_rotation();
  Vec2 centroid{};
  for (const Vec2& p : layout.rest) centroid = centroid + p;
  centroid = (1.0 / static_cast<double>(layout.count())) * centroid;

  positions.clear();
  velocities.clear();
  positions.reserve(layout.count());
  velocities.assign(layout.count(), Vec3{});
  for (const Vec2& p : layout.rest) {
    const Vec3 local{p.x - centroid.x, p.y - centroid.y, 0.0};
    positions.push_back(rotation * local + Vec3{centroid.x, centroid.y, 0.0});
  }

  if (spec.random_angular_velocity && spec.max_angular_speed > 0.0) {
    const Mat3 axis_rot = rng.uniform_rotation();
    const Vec3 omega = rng.uniform(0.0, spec.max_angular_speed) * (axis_rot * Vec3{0, 0, 1});
    const Vec3 c3{centroid.x, centroid.y, 0.0};
    for (std::size_t i = 0; i < positions.size(); ++i)
      velocities[i] = cross(omega, positions[i] - c3);
  }
}

MaterialParams source_spring_params(const SourceSpec& spec, const SpringNetwork& net,
                                    const RestLayout& rest) {
  MaterialParams params;
  params.k.reserve(net.springs.size());
  params.b.assign(net.springs.size(), spec.damping);
  for (const Spring& s : net.springs) {
    const Vec2 mid = 0.5 * (rest.positions[static_cast<std::size_t>(s.a)] +
                            rest.positions[static_cast<std::size_t>(s.b)]);
    params.k.push_back(
        spec.stiffness.value_at(mid.x / spec.grid.width, mid.y / spec.grid.height));
  }
  return params;
}

FemMaterial source_fem_material(const SourceSpec& spec, const TriMesh& mesh) {
  FemMaterial material;
  material.poisson = spec.fem_poisson;
  material.rayleigh_b = spec.external.rayleigh_b;
  material.bending.assign(mesh.hinges.size(), spec.fem_bending);
  material.membrane.reserve(mesh.triangles.size());
  for (const auto& tri : mesh.triangles) {
    Vec2 centroid{};
    for (std::int32_t v : tri) centroid = centroid + mesh.rest[static_cast<std::size_t>(v)];
    centroid = (1.0 / 3.0) * centroid;
    material.membrane.push_back(
        spec.stiffness.value_at(centroid.x / spec.grid.width, centroid.y / spec.grid.height));
  }
  return material;
}

namespace {

SourceRollout run_one_rollout(const SourceSpec& source, const RolloutSpec& rollouts,
                              const LandmarkLayout& layout, Rng rollout_rng,
                              std::uint64_t rollout_seed, bool record_velocities) {
  SourceRollout out;
  out.density = source.density;
  out.width = source.grid.width;
  out.height = source.grid.height;
  out.rows = source.grid.rows;
  out.cols = source.grid.cols;
  out.dt = source.dt;
  out.external = source.external;
  out.kind = source.kind;
  out.seed = rollout_seed;

  out.pinned = sample_boundary_condition(rollouts, layout, rollout_rng);

  SimState initial;
  sample_initial_condition(rollouts, layout, rollout_rng, initial.x, initial.v);
  initial.pinned = out.pinned;
  for (std::size_t p = 0; p < initial.size(); ++p)
    if (initial.pinned[p]) initial.v[p] = Vec3{};

  const std::int64_t steps = static_cast<std::int64_t>(std::llround(source.duration / source.dt));
  const MassModel masses = assign_masses(source.density, source.grid);
  const ColliderSet no_colliders;

  std::vector<SimState> trajectory;
  if (source.kind == SourceKind::mass_spring) {
    const SpringNetwork net = build_lattice(source.grid, source.topology);
    const RestLayout rest = rest_layout(source.grid);
    const MaterialParams params = source_spring_params(source, net, rest);
    trajectory = simulate(net, params, initial, masses, source.external, no_colliders, steps,
                          source.dt);
  } else {
    const TriMesh mesh = build_tri_grid(source.grid.rows, source.grid.cols, source.grid.width,
                                        source.grid.height, source.diagonal);
    const FemMaterial material = source_fem_material(source, mesh);
    trajectory =
        fem_simulate(mesh, material, initial, masses, source.external, no_colliders, steps,
                     source.dt);
  }

  out.y.points = static_cast<std::int32_t>(initial.size());
  out.y.reserve_frames(trajectory.size());
  if (record_velocities) {
    out.ydot.points = out.y.points;
    out.ydot.reserve_frames(trajectory.size());
  }
  for (const SimState& state : trajectory) {
    out.y.push_frame(state.x);
    if (record_velocities) out.ydot.push_frame(state.v);
  }
  return out;
}

}  // namespace

GenerationResult generate_rollouts(const SourceSpec& source, const RolloutSpec& rollouts,
                                   bool record_velocities) {
  if (rollouts.count < 1) throw DataError("generate_rollouts: count must be >= 1");
  const LandmarkLayout layout = landmark_layout(source.grid);
  if (rollouts.anchor_radius >= 0.5 * std::min(source.grid.width, source.grid.height))
    throw DataError("generate_rollouts: anchor radius must be below half the cloth extent");

  const Rng master(rollouts.seed);
  GenerationResult result;
  result.rollouts.reserve(static_cast<std::size_t>(rollouts.count));
  for (std::int32_t i = 0; i < rollouts.count; ++i) {
    Rng rollout_rng = master.substream(static_cast<std::uint64_t>(i));
    try {
      result.rollouts.push_back(run_one_rollout(source, rollouts, layout, rollout_rng,
                                                rollout_rng.seed(), record_velocities));
    } catch (const NumericalError& e) {
      result.diagnostics.push_back("rollout " + std::to_string(i) + " aborted: " + e.what());
    }
  }
  return result;
}

ClipSet build_clipset(std::span<const SourceRollout> rollouts, const ClipSetOptions& options) {
  if (options.length < 3) throw DataError("build_clipset: clip length must be >= 3");

  std::vector<Clip> all;
  std::vector<Clip> low_candidates;
  for (std::size_t r = 0; r < rollouts.size(); ++r) {
    const std::size_t frames = rollouts[r].frames();
    if (frames < static_cast<std::size_t>(options.length))
      throw DataError("build_clipset: rollout " + std::to_string(r) +
                      " shorter than one clip (" + std::to_string(frames) + " frames)");
    const std::size_t count = frames / static_cast<std::size_t>(options.length);
    const std::int64_t window_frames =
        static_cast<std::int64_t>(std::llround(options.low_velocity_window / rollouts[r].dt));
    const std::int64_t window_start = static_cast<std::int64_t>(frames) - window_frames;
    for (std::size_t c = 0; c < count; ++c) {
      Clip clip{static_cast<std::int32_t>(r),
                static_cast<std::int32_t>(c * static_cast<std::size_t>(options.length)),
                options.length};
      all.push_back(clip);
      if (clip.start + clip.length > window_start) low_candidates.push_back(clip);
    }
  }

  const auto subsample = [](std::vector<Clip>& clips, double fraction, Rng rng) {
    if (fraction >= 1.0) return;
    const std::size_t keep =
        std::max<std::size_t>(1, static_cast<std::size_t>(std::llround(
                                     fraction * static_cast<double>(clips.size()))));
    rng.shuffle(clips);
    clips.resize(std::min(keep, clips.size()));
    std::sort(clips.begin(), clips.end(), [](const Clip& a, const Clip& b) {
      return a.rollout != b.rollout ? a.rollout < b.rollout : a.start < b.start;
    });
  };

  ClipSet set;
  set.length = options.length;
  set.seed = options.seed;
  set.general = all;
  set.low_velocity = low_candidates;
  const Rng master(options.seed);
  subsample(set.general, options.keep_fraction, master.substream(1));
  subsample(set.low_velocity, options.low_velocity_keep, master.substream(2));
  return set;
}

}  // namespace msnet
