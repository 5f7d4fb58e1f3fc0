#include "msnet/train.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <numeric>
#include <thread>

#include "msnet/error.hpp"
#include "msnet/rng.hpp"

namespace msnet {

LossWeights LossWeights::mass_spring_default() {
  LossWeights w;
  w.force = 1.0;
  w.impulse = 10.0;
  w.k_negative = 1.0;
  w.b_negative = 1.0;
  return w;
}

LossWeights LossWeights::fem_stiffness_pass() {
  LossWeights w;
  w.impulse = 1.0;
  w.k_negative = 1.0;
  w.b_negative = 1.0;
  return w;
}

LossWeights LossWeights::fem_damping_pass() {
  LossWeights w;
  w.force = 1.0;
  w.k_negative = 1.0;
  w.b_negative = 1.0;
  return w;
}

bool LossBreakdown::finite() const {
  return std::isfinite(force) && std::isfinite(impulse) && std::isfinite(position) &&
         std::isfinite(k_negative) && std::isfinite(b_negative);
}

const char* to_string(TrainPass pass) {
  switch (pass) {
    case TrainPass::stiffness: return "stiffness";
    case TrainPass::damping: return "damping";
    case TrainPass::joint: return "joint";
  }
  return "?";
}

Trajectory3 target_net_force(const Trajectory3& target_positions, const MassModel& masses,
                             double dt, std::span<const std::uint8_t> pinned) {
  const std::size_t frames = target_positions.frames();
  const std::size_t points = static_cast<std::size_t>(target_positions.points);
  if (frames < 3) throw DataError("target_net_force: need at least 3 frames");
  if (masses.m.size() != points || pinned.size() != points)
    throw DataError("target_net_force: size mismatch");

  Trajectory3 out;
  out.points = target_positions.points;
  out.data.assign(frames * points, Vec3{});
  const double inv_dt2 = 1.0 / (dt * dt);
  for (std::size_t f = 1; f + 1 < frames; ++f) {
    const auto prev = target_positions.frame(f - 1);
    const auto curr = target_positions.frame(f);
    const auto next = target_positions.frame(f + 1);
    auto dst = out.frame(f);
    for (std::size_t p = 0; p < points; ++p) {
      if (pinned[p]) continue;
      dst[p] = (masses.m[p] * inv_dt2) * (next[p] - 2.0 * curr[p] + prev[p]);
    }
  }
  return out;
}

namespace {

void require_same_shape(const Trajectory3& a, const Trajectory3& b,
                        std::span<const std::uint8_t> pinned, const char* who) {
  if (a.points != b.points || a.frames() != b.frames() ||
      pinned.size() != static_cast<std::size_t>(a.points))
    throw DataError(std::string(who) + ": shape mismatch");
}

}  // namespace

double force_loss(const Trajectory3& simulated, const Trajectory3& target,
                  std::span<const std::uint8_t> pinned) {
  require_same_shape(simulated, target, pinned, "force_loss");
  const std::size_t frames = simulated.frames();
  double sum = 0.0;
  for (std::size_t f = 0; f < frames; ++f) {
    const auto fs = simulated.frame(f);
    const auto ft = target.frame(f);
    for (std::size_t p = 0; p < fs.size(); ++p)
      if (!pinned[p]) sum += squared_norm(fs[p] - ft[p]);
  }
  return sum / (static_cast<double>(simulated.points) * static_cast<double>(frames));
}

double impulse_loss(const Trajectory3& simulated, const Trajectory3& target, double dt,
                    std::span<const std::uint8_t> pinned) {
  require_same_shape(simulated, target, pinned, "impulse_loss");
  const std::size_t frames = simulated.frames();
  const std::size_t points = static_cast<std::size_t>(simulated.points);
  if (frames < 2) return 0.0;
  std::vector<Vec3> delta(points);
  for (std::size_t f = 0; f < frames; ++f) {
    const double w = (f == 0 || f + 1 == frames) ? 0.5 * dt : dt;
    const auto fs = simulated.frame(f);
    const auto ft = target.frame(f);
    for (std::size_t p = 0; p < points; ++p)
      if (!pinned[p]) delta[p] += w * (fs[p] - ft[p]);
  }
  double sum = 0.0;
  for (const Vec3& d : delta) sum += squared_norm(d);
  return sum / static_cast<double>(points);
}

double position_loss(const Trajectory3& simulated, const Trajectory3& target,
                     std::span<const std::uint8_t> pinned) {
  require_same_shape(simulated, target, pinned, "position_loss");
  const std::size_t frames = simulated.frames();
  double sum = 0.0;
  for (std::size_t f = 0; f < frames; ++f) {
    const auto xs = simulated.frame(f);
    const auto xt = target.frame(f);
    for (std::size_t p = 0; p < xs.size(); ++p)
      if (!pinned[p]) sum += squared_norm(xs[p] - xt[p]);
  }
  return sum / (static_cast<double>(simulated.points) * static_cast<double>(frames));
}

std::pair<double, double> negativity_penalties(const MaterialParams& params) {
  double k_neg = 0.0, b_neg = 0.0;
  for (double k : params.k)
    if (k < 0.0) k_neg -= k;
  for (double b : params.b)
    if (b < 0.0) b_neg -= b;
  return {k_neg, b_neg};
}

std::size_t ClipTape::memory_bytes() const {
  return (x_store.data.capacity() + v_store.data.capacity() + f_store.data.capacity()) *
             sizeof(Vec3) +
         (impulse_sim.capacity() + impulse_target.capacity()) * sizeof(Vec3) +
         (k.capacity() + b.capacity()) * sizeof(double) + stored_frames.capacity() * 4 +
         pinned.capacity() + masses.m.capacity() * sizeof(double);
}

namespace {

enum class RecordMode { loss_only, tracking, tape };

void validate_clip(const SpringNetwork& net, const MaterialParams& params,
                   const ClipTargets& targets, const MassModel& masses) {
  const std::size_t points = static_cast<std::size_t>(net.particle_count);
  if (!targets.positions) throw DataError("clip rollout: null target trajectory");
  if (targets.length < 3) throw DataError("clip rollout: clip length must be >= 3");
  if (static_cast<std::size_t>(targets.positions->points) != points ||
      masses.m.size() != points || targets.pinned.size() != points)
    throw DataError("clip rollout: particle count mismatch");
  if (static_cast<std::size_t>(targets.start) + static_cast<std::size_t>(targets.length) >
      targets.positions->frames())
    throw DataError("clip rollout: clip window exceeds target trajectory");
  if (params.k.size() != net.springs.size() || params.b.size() != net.springs.size())
    throw DataError("clip rollout: parameter size mismatch");
  if (!(targets.dt > 0.0)) throw DataError("clip rollout: dt must be positive");
}

// Second-difference force target for interior frame j of the clip window.
inline Vec3 target_force_at(const ClipTargets& t, const MassModel& masses, std::size_t p,
                            std::span<const Vec3> prev, std::span<const Vec3> curr,
                            std::span<const Vec3> next) {
  return (masses.m[p] / (t.dt * t.dt)) * (next[p] - 2.0 * curr[p] + prev[p]);
}

struct ForwardResult {
  Trajectory3 trajectory;
  Trajectory3 forces;
  LossBreakdown loss;
  ClipTape tape;
  std::size_t degenerate = 0;
};

// Shared rollout core. Frames are indexed within the clip window; the state
// sequence starts at frame 1 (the initial velocity estimate is the staggered
// velocity into frame 1) and forces are evaluated at frames 1..T-2.
ForwardResult run_clip(const SpringNetwork& net, const MaterialParams& params,
                       const ClipTargets& targets, const MassModel& masses,
                       const ExternalForceSpec& ext, RecordMode mode,
                       const TapeOptions& options) {
  validate_clip(net, params, targets, masses);
  const std::size_t points = static_cast<std::size_t>(net.particle_count);
  const std::int32_t T = targets.length;
  const double dt = targets.dt;
  const std::int32_t stride = std::max<std::int32_t>(1, options.checkpoint_stride);

  const auto target_frame = [&](std::int32_t f) {
    return targets.positions->frame(static_cast<std::size_t>(targets.start + f));
  };

  std::vector<Vec3> x(target_frame(1).begin(), target_frame(1).end());
  std::vector<Vec3> v(points);
  {
    const auto x0 = target_frame(0);
    const auto x1 = target_frame(1);
    for (std::size_t p = 0; p < points; ++p)
      v[p] = targets.pinned[p] ? Vec3{} : (1.0 / dt) * (x1[p] - x0[p]);
  }

  ForwardResult out;
  out.loss.k_negative = negativity_penalties(params).first;
  out.loss.b_negative = negativity_penalties(params).second;

  const bool track = mode != RecordMode::loss_only;
  if (track) {
    out.trajectory.points = net.particle_count;
    out.trajectory.reserve_frames(static_cast<std::size_t>(T));
    out.trajectory.push_frame(target_frame(0));
    out.trajectory.push_frame(x);
    out.forces.points = net.particle_count;
    out.forces.data.assign(static_cast<std::size_t>(T) * points, Vec3{});
  }
  ClipTape& tape = out.tape;
  if (mode == RecordMode::tape) {
    tape.net = &net;
    tape.k = params.k;
    tape.b = params.b;
    tape.masses = masses;
    tape.pinned.assign(targets.pinned.begin(), targets.pinned.end());
    tape.external = ext;
    tape.dt = dt;
    tape.clip_length = T;
    tape.stride = stride;
    tape.targets = targets;
    tape.x_store.points = net.particle_count;
    tape.v_store.points = net.particle_count;
    if (stride == 1) {
      tape.f_store.points = net.particle_count;
      tape.x_store.reserve_frames(static_cast<std::size_t>(T - 2));
      tape.v_store.reserve_frames(static_cast<std::size_t>(T - 2));
      tape.f_store.reserve_frames(static_cast<std::size_t>(T - 2));
    }
    tape.impulse_sim.assign(points, Vec3{});
    tape.impulse_target.assign(points, Vec3{});
  }

  const std::int32_t interior = T - 2;
  const double norm_f = 1.0 / (static_cast<double>(points) * static_cast<double>(interior));
  std::vector<Vec3> force(points);
  std::vector<Vec3> impulse_sim(points), impulse_target(points);
  double force_sum = 0.0, position_sum = 0.0;

  for (std::int32_t j = 1; j <= interior; ++j) {
    if (mode == RecordMode::tape && (j - 1) % stride == 0) {
      tape.stored_frames.push_back(j);
      tape.x_store.push_frame(x);
      tape.v_store.push_frame(v);
    }

    // net force at frame j
    for (std::size_t p = 0; p < points; ++p)
      force[p] = masses.m[p] * ext.gravity - ext.rayleigh_b * v[p];
    for (std::size_t s = 0; s < net.springs.size(); ++s) {
      const Spring& sp = net.springs[s];
      const std::size_t a = static_cast<std::size_t>(sp.a);
      const std::size_t b = static_cast<std::size_t>(sp.b);
      const Vec3 d = x[b] - x[a];
      const double len = norm(d);
      if (len < kDegenerateSpringLength) {
        ++out.degenerate;
        continue;
      }
      const Vec3 rel = v[b] - v[a];
      const double coeff = params.k[s] * (len - sp.rest_length) / len +
                           params.b[s] * dot(rel, d) / (len * len);
      const Vec3 t = coeff * d;
      force[a] += t;
      force[b] -= t;
    }

    const auto prev = target_frame(j - 1);
    const auto curr = target_frame(j);
    const auto next = target_frame(j + 1);
    const double w = interior >= 2 ? ((j == 1 || j == interior) ? 0.5 * dt : dt) : 0.0;
    for (std::size_t p = 0; p < points; ++p) {
      if (targets.pinned[p]) continue;
      const Vec3 fhat = target_force_at(targets, masses, p, prev, curr, next);
      force_sum += squared_norm(force[p] - fhat);
      position_sum += squared_norm(x[p] - curr[p]);
      impulse_sim[p] += w * force[p];
      impulse_target[p] += w * fhat;
    }

    if (mode == RecordMode::tape && stride == 1) tape.f_store.push_frame(force);
    if (track) {
      auto dst = out.forces.frame(static_cast<std::size_t>(j));
      std::copy(force.begin(), force.end(), dst.begin());
    }

    // semi-implicit step to frame j+1
    for (std::size_t p = 0; p < points; ++p) {
      if (targets.pinned[p]) continue;
      if (!is_finite(force[p]))
        throw NumericalError("clip rollout: non-finite force at frame " + std::to_string(j) +
                             ", particle " + std::to_string(p));
      v[p] += (dt / masses.m[p]) * force[p];
      x[p] += dt * v[p];
    }
    if (track) out.trajectory.push_frame(x);
  }

  double impulse_sum = 0.0;
  for (std::size_t p = 0; p < points; ++p)
    impulse_sum += squared_norm(impulse_sim[p] - impulse_target[p]);

  out.loss.force = force_sum * norm_f;
  out.loss.position = position_sum * norm_f;
  out.loss.impulse = impulse_sum / static_cast<double>(points);
  if (mode == RecordMode::tape) {
    tape.impulse_sim = std::move(impulse_sim);
    tape.impulse_target = std::move(impulse_target);
    tape.loss = out.loss;
    tape.degenerate = out.degenerate;
  }
  return out;
}

}  // namespace

ClipRun clip_rollout_with_tape(const SpringNetwork& net, const MaterialParams& params,
                               const ClipTargets& targets, const MassModel& masses,
                               const ExternalForceSpec& ext, const TapeOptions& options) {
  ForwardResult fwd = run_clip(net, params, targets, masses, ext, RecordMode::tape, options);
  ClipRun run;
  run.trajectory = std::move(fwd.trajectory);
  run.forces = std::move(fwd.forces);
  run.loss = fwd.loss;
  run.tape = std::move(fwd.tape);
  return run;
}

LossBreakdown clip_loss(const SpringNetwork& net, const MaterialParams& params,
                        const ClipTargets& targets, const MassModel& masses,
                        const ExternalForceSpec& ext) {
  return run_clip(net, params, targets, masses, ext, RecordMode::loss_only, {}).loss;
}

Trajectory3 rollout_tracking(const SpringNetwork& net, const MaterialParams& params,
                             const ClipTargets& targets, const MassModel& masses,
                             const ExternalForceSpec& ext) {
  return run_clip(net, params, targets, masses, ext, RecordMode::tracking, {}).trajectory;
}

bool ParameterGradients::finite() const {
  for (double g : k)
    if (!std::isfinite(g)) return false;
  for (double g : b)
    if (!std::isfinite(g)) return false;
  return true;
}

double ParameterGradients::norm_k() const {
  double s = 0;
  for (double g : k) s += g * g;
  return std::sqrt(s);
}

double ParameterGradients::norm_b() const {
  double s = 0;
  for (double g : b) s += g * g;
  return std::sqrt(s);
}

ParameterGradients grad_params(const ClipTape& tape, const LossWeights& weights) {
  if (!tape.net || tape.stored_frames.empty())
    throw DataError("grad_params: tape is empty or incomplete");
  const SpringNetwork& net = *tape.net;
  const std::size_t points = static_cast<std::size_t>(net.particle_count);
  const std::size_t springs = net.springs.size();
  const std::int32_t T = tape.clip_length;
  const std::int32_t interior = T - 2;
  const double dt = tape.dt;

  ParameterGradients grads;
  grads.k.assign(springs, 0.0);
  grads.b.assign(springs, 0.0);

  const double coeff_f =
      2.0 * weights.force / (static_cast<double>(points) * static_cast<double>(interior));
  const double coeff_j = 2.0 * weights.impulse / static_cast<double>(points);
  const double coeff_p =
      2.0 * weights.position / (static_cast<double>(points) * static_cast<double>(interior));

  std::vector<Vec3> delta_impulse(points);
  for (std::size_t p = 0; p < points; ++p)
    delta_impulse[p] = tape.impulse_sim[p] - tape.impulse_target[p];

  const auto target_frame = [&](std::int32_t f) {
    return tape.targets.positions->frame(static_cast<std::size_t>(tape.targets.start + f));
  };

  std::vector<Vec3> x_bar(points), v_bar(points), v_tmp(points), f_bar(points);
  std::vector<Vec3> force(points);

  // scratch for recomputed segments (only used when stride > 1)
  const std::size_t max_seg = static_cast<std::size_t>(tape.stride);
  Trajectory3 seg_x, seg_v;
  seg_x.points = net.particle_count;
  seg_v.points = net.particle_count;
  if (tape.stride > 1) {
    seg_x.reserve_frames(max_seg);
    seg_v.reserve_frames(max_seg);
  }

  const auto eval_force = [&](std::span<const Vec3> x, std::span<const Vec3> v,
                              std::vector<Vec3>& dst) {
    for (std::size_t p = 0; p < points; ++p)
      dst[p] = tape.masses.m[p] * tape.external.gravity - tape.external.rayleigh_b * v[p];
    for (std::size_t s = 0; s < springs; ++s) {
      const Spring& sp = net.springs[s];
      const std::size_t a = static_cast<std::size_t>(sp.a);
      const std::size_t b = static_cast<std::size_t>(sp.b);
      const Vec3 d = x[b] - x[a];
      const double len = norm(d);
      if (len < kDegenerateSpringLength) continue;
      const Vec3 rel = v[b] - v[a];
      const double coeff = tape.k[s] * (len - sp.rest_length) / len +
                           tape.b[s] * dot(rel, d) / (len * len);
      const Vec3 t = coeff * d;
      dst[a] += t;
      dst[b] -= t;
    }
  };

  // adjoint update for one frame; (x_bar, v_bar) enter as the adjoints of
  // frame j+1 and leave as the adjoints of frame j
  const auto adjoint_step = [&](std::int32_t j, std::span<const Vec3> x, std::span<const Vec3> v,
                                std::span<const Vec3> f) {
    const auto prev = target_frame(j - 1);
    const auto curr = target_frame(j);
    const auto next = target_frame(j + 1);
    const double w = interior >= 2 ? ((j == 1 || j == interior) ? 0.5 * dt : dt) : 0.0;

    for (std::size_t p = 0; p < points; ++p) {
      if (tape.pinned[p]) {
        v_tmp[p] = Vec3{};
        f_bar[p] = Vec3{};
        continue;
      }
      v_tmp[p] = v_bar[p] + dt * x_bar[p];
      const Vec3 fhat = target_force_at(tape.targets, tape.masses, p, prev, curr, next);
      f_bar[p] = (dt / tape.masses.m[p]) * v_tmp[p] + coeff_f * (f[p] - fhat) +
                 (coeff_j * w) * delta_impulse[p];
      x_bar[p] += coeff_p * (x[p] - curr[p]);
    }
    for (std::size_t p = 0; p < points; ++p)
      v_bar[p] = v_tmp[p] - tape.external.rayleigh_b * f_bar[p];

    for (std::size_t s = 0; s < springs; ++s) {
      const Spring& sp = net.springs[s];
      const std::size_t a = static_cast<std::size_t>(sp.a);
      const std::size_t b = static_cast<std::size_t>(sp.b);
      const Vec3 d = x[b] - x[a];
      const double len = norm(d);
      if (len < kDegenerateSpringLength) continue;
      const Vec3 rel = v[b] - v[a];
      const double len2 = len * len;
      const double c = dot(rel, d);

      const Vec3 t_bar = f_bar[a] - f_bar[b];
      const double td = dot(t_bar, d);
      grads.k[s] += td * (len - sp.rest_length) / len;
      grads.b[s] += td * c / len2;

      const double phi = tape.k[s] * (len - sp.rest_length) / len + tape.b[s] * c / len2;
      const Vec3 dphi_dd = (tape.k[s] * sp.rest_length / (len2 * len)) * d +
                           (tape.b[s] / len2) * rel - (2.0 * tape.b[s] * c / (len2 * len2)) * d;
      const Vec3 d_bar = phi * t_bar + td * dphi_dd;
      const Vec3 rel_bar = (tape.b[s] / len2 * td) * d;

      x_bar[b] += d_bar;
      x_bar[a] -= d_bar;
      v_bar[b] += rel_bar;
      v_bar[a] -= rel_bar;
    }
  };

  const std::size_t segments = tape.stored_frames.size();
  for (std::size_t seg = segments; seg-- > 0;) {
    const std::int32_t seg_start = tape.stored_frames[seg];
    const std::int32_t seg_end =
        seg + 1 < segments ? tape.stored_frames[seg + 1] - 1 : interior;

    if (tape.stride == 1) {
      // states and forces were stored directly
      const std::size_t idx = seg;
      adjoint_step(seg_start, tape.x_store.frame(idx), tape.v_store.frame(idx),
                   tape.f_store.frame(idx));
      continue;
    }

    // recompute the segment forward from its checkpoint
    seg_x.data.clear();
    seg_v.data.clear();
    seg_x.push_frame(tape.x_store.frame(seg));
    seg_v.push_frame(tape.v_store.frame(seg));
    for (std::int32_t j = seg_start; j < seg_end; ++j) {
      const std::size_t i = static_cast<std::size_t>(j - seg_start);
      eval_force(seg_x.frame(i), seg_v.frame(i), force);
      std::vector<Vec3> xn(seg_x.frame(i).begin(), seg_x.frame(i).end());
      std::vector<Vec3> vn(seg_v.frame(i).begin(), seg_v.frame(i).end());
      for (std::size_t p = 0; p < points; ++p) {
        if (tape.pinned[p]) {
          vn[p] = Vec3{};
          continue;
        }
        vn[p] += (dt / tape.masses.m[p]) * force[p];
        xn[p] += dt * vn[p];
      }
      seg_x.push_frame(xn);
      seg_v.push_frame(vn);
    }
    for (std::int32_t j = seg_end; j >= seg_start; --j) {
      const std::size_t i = static_cast<std::size_t>(j - seg_start);
      eval_force(seg_x.frame(i), seg_v.frame(i), force);
      adjoint_step(j, seg_x.frame(i), seg_v.frame(i), force);
    }
  }

  // negativity penalties act on the parameters directly
  for (std::size_t s = 0; s < springs; ++s) {
    if (tape.k[s] < 0.0) grads.k[s] -= weights.k_negative;
    if (tape.b[s] < 0.0) grads.b[s] -= weights.b_negative;
  }
  return grads;
}

void adam_step(std::vector<double>& values, std::span<const double> grads, AdamMoments& state,
               const AdamConfig& config) {
  if (grads.size() != values.size()) throw DataError("adam_step: size mismatch");
  if (state.m.size() != values.size()) state.reset(values.size());
  state.t += 1;
  const double bc1 = 1.0 - std::pow(config.beta1, static_cast<double>(state.t));
  const double bc2 = 1.0 - std::pow(config.beta2, static_cast<double>(state.t));
  for (std::size_t i = 0; i < values.size(); ++i) {
    state.m[i] = config.beta1 * state.m[i] + (1.0 - config.beta1) * grads[i];
    state.v[i] = config.beta2 * state.v[i] + (1.0 - config.beta2) * grads[i] * grads[i];
    const double m_hat = state.m[i] / bc1;
    const double v_hat = state.v[i] / bc2;
    values[i] -= config.learning_rate * m_hat / (std::sqrt(v_hat) + config.epsilon);
  }
}

MaterialParams initialize_params(const SpringNetwork& net, const MassModel& masses,
                                 const ExternalForceSpec& ext, const InitScheme& scheme,
                                 std::uint64_t seed) {
  const std::size_t springs = net.springs.size();
  double k_scale = scheme.k_scale;
  if (!(k_scale > 0.0)) {
    // gravity-balance heuristic at a nominal 5% strain
    k_scale = masses.total() * norm(ext.gravity) / (static_cast<double>(springs) * 0.05);
  }
  const double b_scale = scheme.b_scale >= 0.0 ? scheme.b_scale : 0.1 * k_scale;

  Rng rng = Rng(seed).substream(7);
  MaterialParams params;
  params.k.reserve(springs);
  params.b.assign(springs, b_scale);
  for (std::size_t s = 0; s < springs; ++s)
    params.k.push_back(k_scale * (1.0 + scheme.jitter * (2.0 * rng.uniform01() - 1.0)));
  return params;
}

namespace {

template <typename F>
void parallel_for(std::size_t n, std::int32_t threads, F&& body) {
  if (threads <= 0) threads = static_cast<std::int32_t>(std::thread::hardware_concurrency());
  threads = std::max(1, std::min<std::int32_t>(threads, static_cast<std::int32_t>(n)));
  if (threads == 1) {
    for (std::size_t i = 0; i < n; ++i) body(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i; (i = next.fetch_add(1)) < n;) body(i);
  };
  std::vector<std::thread> pool;
  pool.reserve(static_cast<std::size_t>(threads - 1));
  for (std::int32_t t = 1; t < threads; ++t) pool.emplace_back(worker);
  worker();
  for (std::thread& th : pool) th.join();
}

struct PassPlan {
  TrainPass kind;
  const std::vector<Clip>* clips;
  std::int32_t iterations;
  LossWeights weights;
};

std::vector<std::size_t> pick_batch(std::size_t clip_count, std::int32_t batch, Rng rng) {
  std::vector<std::size_t> indices(clip_count);
  std::iota(indices.begin(), indices.end(), 0);
  if (clip_count <= static_cast<std::size_t>(batch)) return indices;
  for (std::size_t i = 0; i < static_cast<std::size_t>(batch); ++i) {
    const std::size_t j = i + rng.index(clip_count - i);
    std::swap(indices[i], indices[j]);
  }
  indices.resize(static_cast<std::size_t>(batch));
  std::sort(indices.begin(), indices.end());
  return indices;
}

struct ClipOutcome {
  ParameterGradients grads;
  LossBreakdown loss;
  bool ok = false;
  std::string diagnostic;
};

TrainResult run_training(const SpringNetwork& net, const TrainDataset& dataset,
                         const MassModel& masses, const ExternalForceSpec& ext,
                         const TrainConfig& config, std::span<const PassPlan> passes,
                         const TrainerState* resume, const IterationCallback& on_iteration) {
  const std::size_t springs = net.springs.size();
  if (!(dataset.dt > 0.0)) throw DataError("train: dataset dt must be positive");
  for (const PassPlan& pass : passes) {
    if (pass.clips->empty())
      throw DataError(std::string("train: empty clip set for the ") + to_string(pass.kind) +
                      " pass");
  }

  TrainerState state;
  if (resume) {
    state = *resume;
    if (state.params.k.size() != springs || state.params.b.size() != springs)
      throw DataError("train: resume state does not match the network");
  } else {
    state.params = initialize_params(net, masses, ext, config.init, config.seed);
    state.moments_k.reset(springs);
    state.moments_b.reset(springs);
  }

  const Rng master(config.seed);
  TrainResult result;
  std::int64_t global_iter = 0;
  std::int32_t skipped_streak = 0;

  for (std::size_t pass_index = 0; pass_index < passes.size(); ++pass_index) {
    const PassPlan& pass = passes[pass_index];
    const std::vector<Clip>& clips = *pass.clips;
    for (std::int32_t iter = 0; iter < pass.iterations; ++iter, ++global_iter) {
      if (global_iter < state.iteration) continue;  // fast-forward on resume

      const Rng batch_rng = master.substream(
          0x10000000ull * (pass_index + 1) + static_cast<std::uint64_t>(iter));
      const std::vector<std::size_t> batch = pick_batch(clips.size(), config.batch, batch_rng);

      std::vector<ClipOutcome> outcomes(batch.size());
      const MaterialParams& params = state.params;
      parallel_for(batch.size(), config.threads, [&](std::size_t i) {
        ClipOutcome& out = outcomes[i];
        try {
          const ClipTargets view = dataset.view(clips[batch[i]]);
          ClipRun run = clip_rollout_with_tape(net, params, view, masses, ext, config.tape);
          if (!run.loss.finite()) {
            out.diagnostic = "non-finite loss";
            return;
          }
          out.grads = grad_params(run.tape, pass.weights);
          out.loss = run.loss;
          out.ok = true;
        } catch (const std::exception& e) {
          out.diagnostic = e.what();
        }
      });

      ParameterGradients grads;
      grads.k.assign(springs, 0.0);
      grads.b.assign(springs, 0.0);
      LossBreakdown mean_loss;
      std::int32_t used = 0, skipped = 0;
      for (std::size_t i = 0; i < outcomes.size(); ++i) {
        const ClipOutcome& out = outcomes[i];
        if (!out.ok) {
          ++skipped;
          result.diagnostics.push_back("iter " + std::to_string(global_iter) + " clip " +
                                       std::to_string(batch[i]) + ": " + out.diagnostic);
          continue;
        }
        ++used;
        for (std::size_t s = 0; s < springs; ++s) {
          grads.k[s] += out.grads.k[s];
          grads.b[s] += out.grads.b[s];
        }
        mean_loss.force += out.loss.force;
        mean_loss.impulse += out.loss.impulse;
        mean_loss.position += out.loss.position;
        mean_loss.k_negative += out.loss.k_negative;
        mean_loss.b_negative += out.loss.b_negative;
      }

      IterationRecord record;
      record.iteration = global_iter;
      record.pass = pass.kind;
      record.clips_used = used;
      record.clips_skipped = skipped;

      if (used > 0) {
        const double inv = 1.0 / static_cast<double>(used);
        for (std::size_t s = 0; s < springs; ++s) {
          grads.k[s] *= inv;
          grads.b[s] *= inv;
        }
        mean_loss.force *= inv;
        mean_loss.impulse *= inv;
        mean_loss.position *= inv;
        mean_loss.k_negative *= inv;
        mean_loss.b_negative *= inv;
      }

      // freezing contract: the inactive group's gradient is identically zero
      if (pass.kind == TrainPass::stiffness) std::fill(grads.b.begin(), grads.b.end(), 0.0);
      if (pass.kind == TrainPass::damping) std::fill(grads.k.begin(), grads.k.end(), 0.0);

      const bool can_step = used > 0 && grads.finite();
      if (can_step) {
        if (pass.kind != TrainPass::damping)
          adam_step(state.params.k, grads.k, state.moments_k, config.adam_k);
        if (pass.kind != TrainPass::stiffness)
          adam_step(state.params.b, grads.b, state.moments_b, config.adam_b);
        skipped_streak = 0;
      } else {
        record.step_skipped = true;
        ++skipped_streak;
        result.diagnostics.push_back("iter " + std::to_string(global_iter) +
                                     ": step skipped (" +
                                     (used == 0 ? "no usable clips" : "non-finite gradients") +
                                     ")");
        if (skipped_streak >= 10)
          throw NumericalError("train: persistent non-finite losses, aborted at iteration " +
                               std::to_string(global_iter));
      }

      record.loss = mean_loss;
      record.weighted_total = mean_loss.total(pass.weights);
      record.grad_norm_k = grads.norm_k();
      record.grad_norm_b = grads.norm_b();
      const auto stats = [](const std::vector<double>& v, double& mean, double& lo, double& hi) {
        mean = 0;
        lo = v.empty() ? 0 : v[0];
        hi = lo;
        for (double x : v) {
          mean += x;
          lo = std::min(lo, x);
          hi = std::max(hi, x);
        }
        if (!v.empty()) mean /= static_cast<double>(v.size());
      };
      stats(state.params.k, record.k_mean, record.k_min, record.k_max);
      stats(state.params.b, record.b_mean, record.b_min, record.b_max);

      state.pass_index = static_cast<std::int32_t>(pass_index);
      state.iteration = global_iter + 1;
      result.log.push_back(record);
      if (on_iteration) on_iteration(state, record);
    }
  }

  result.params = state.params;
  result.final_state = std::move(state);
  return result;
}

}  // namespace

TrainResult dual_pass_train(const SpringNetwork& net, const TrainDataset& dataset,
                            const MassModel& masses, const ExternalForceSpec& ext,
                            const TrainConfig& config, const TrainerState* resume,
                            const IterationCallback& on_iteration) {
  if (dataset.clips.low_velocity.empty())
    throw DataError("dual_pass_train: the low-velocity clip subset is empty");
  const PassPlan passes[2] = {
      {TrainPass::stiffness, &dataset.clips.low_velocity, config.stiffness_iterations,
       config.stiffness_loss},
      {TrainPass::damping, &dataset.clips.general, config.damping_iterations,
       config.damping_loss},
  };
  return run_training(net, dataset, masses, ext, config, passes, resume, on_iteration);
}

TrainResult single_pass_train(const SpringNetwork& net, const TrainDataset& dataset,
                              const MassModel& masses, const ExternalForceSpec& ext,
                              const TrainConfig& config, const TrainerState* resume,
                              const IterationCallback& on_iteration) {
  const PassPlan passes[1] = {
      {TrainPass::joint, &dataset.clips.general, config.joint_iterations, config.joint_loss},
  };
  return run_training(net, dataset, masses, ext, config, passes, resume, on_iteration);
}

}  // namespace msnet
