#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "msnet/datagen.hpp"
#include "msnet/lattice.hpp"
#include "msnet/simcore.hpp"
#include "msnet/vec3.hpp"

namespace msnet {

struct LossWeights {
  double force = 0.0;      // lambda_f
  double impulse = 0.0;    // lambda_J
  double position = 0.0;   // lambda_pos (position-loss ablation)
  double k_negative = 0.0; // lambda_k  for sum ReLU(-k_s)
  double b_negative = 0.0; // lambda_b  for sum ReLU(-b_s)

  /// Defaults for mass-spring sources: lambda_f = 1, lambda_J = 10.
  static LossWeights mass_spring_default();
  /// FEM sources: impulse-only stiffness pass.
  static LossWeights fem_stiffness_pass();
  /// FEM sources: force-only damping pass.
  static LossWeights fem_damping_pass();
};

/// Unweighted loss components; the training objective is their weighted sum.
struct LossBreakdown {
  double force = 0.0;
  double impulse = 0.0;
  double position = 0.0;
  double k_negative = 0.0;
  double b_negative = 0.0;

  double total(const LossWeights& w) const {
    return w.force * force + w.impulse * impulse + w.position * position +
           w.k_negative * k_negative + w.b_negative * b_negative;
  }
  bool finite() const;
};

/// Net force targets from Newton's second law: central second difference of
/// the target positions, f_i = M (x_{i+1} - 2 x_i + x_{i-1}) / dt^2.
/// The returned trajectory has the same frame count; the first and last
/// frames, and all pinned entries, are zero.
Trajectory3 target_net_force(const Trajectory3& target_positions, const MassModel& masses,
                             double dt, std::span<const std::uint8_t> pinned);

/// Mean squared force error over the supplied frames (the interior frames of
/// a clip): sum over free particles of |f - fhat|^2 / (P * frames).
double force_loss(const Trajectory3& simulated, const Trajectory3& target,
                  std::span<const std::uint8_t> pinned);

/// Squared error of the trapezoid-accumulated impulse over the supplied
/// frames, normalized by the particle count.
double impulse_loss(const Trajectory3& simulated, const Trajectory3& target, double dt,
                    std::span<const std::uint8_t> pinned);

/// Mean squared position error with the same normalization as force_loss.
double position_loss(const Trajectory3& simulated, const Trajectory3& target,
                     std::span<const std::uint8_t> pinned);

/// (sum ReLU(-k_s), sum ReLU(-b_s)); the subgradient at zero is zero.
std::pair<double, double> negativity_penalties(const MaterialParams& params);

/// A window into a resampled target trajectory.
struct ClipTargets {
  const Trajectory3* positions = nullptr;
  std::int32_t start = 0;
  std::int32_t length = 0;  // T, >= 3
  std::span<const std::uint8_t> pinned;
  double dt = 0.0;
};

struct TapeOptions {
  /// 1 stores every simulated state; larger strides store checkpoints and
  /// recompute segments during the backward pass (identical gradients).
  std::int32_t checkpoint_stride = 1;
};

/// Reverse-accumulation record of one clip rollout. States are stored for
/// the frames at which forces were evaluated (or checkpoints thereof); the
/// target window is referenced, not copied, and must outlive the tape.
struct ClipTape {
  const SpringNetwork* net = nullptr;
  std::vector<double> k, b;      // parameter values used in the forward pass
  MassModel masses;
  std::vector<std::uint8_t> pinned;
  ExternalForceSpec external;
  double dt = 0.0;
  std::int32_t clip_length = 0;  // T
  std::int32_t stride = 1;

  ClipTargets targets;

  // states at frames 1..T-2 (stride 1) or at checkpoint frames
  Trajectory3 x_store, v_store;
  std::vector<std::int32_t> stored_frames;

  // forces at frames 1..T-2 (only with stride 1; recomputed otherwise)
  Trajectory3 f_store;

  // forward-pass accumulations needed by the impulse adjoint
  std::vector<Vec3> impulse_sim, impulse_target;

  LossBreakdown loss;
  std::size_t degenerate = 0;

  std::size_t memory_bytes() const;
};

struct ClipRun {
  Trajectory3 trajectory;  // all T frames, frame 0 copied from the targets
  Trajectory3 forces;      // net forces; interior frames 1..T-2 are filled
  LossBreakdown loss;
  ClipTape tape;
};

/// Simulates a clip from its target-derived initial conditions, recording
/// everything reverse accumulation needs. The initial velocity estimate
/// (xhat_1 - xhat_0)/dt is the staggered velocity into frame 1, so the first
/// step is the pure position update; a clip generated by identical
/// parameters is retraced exactly.
ClipRun clip_rollout_with_tape(const SpringNetwork& net, const MaterialParams& params,
                               const ClipTargets& targets, const MassModel& masses,
                               const ExternalForceSpec& ext, const TapeOptions& options = {});

/// Forward-only variant: loss components without tape or trajectory storage.
LossBreakdown clip_loss(const SpringNetwork& net, const MaterialParams& params,
                        const ClipTargets& targets, const MassModel& masses,
                        const ExternalForceSpec& ext);

/// Tracking rollout over the whole window (used by evaluation): returns all
/// `length` frames.
Trajectory3 rollout_tracking(const SpringNetwork& net, const MaterialParams& params,
                             const ClipTargets& targets, const MassModel& masses,
                             const ExternalForceSpec& ext);

struct ParameterGradients {
  std::vector<double> k;
  std::vector<double> b;

  bool finite() const;
  double norm_k() const;
  double norm_b() const;
};

/// Exact reverse-mode gradient of the weighted loss through the
/// semi-implicit Euler recurrence and the spring force law.
ParameterGradients grad_params(const ClipTape& tape, const LossWeights& weights);

struct AdamConfig {
  double learning_rate = 0.5;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

struct AdamMoments {
  std::vector<double> m;
  std::vector<double> v;
  std::int64_t t = 0;

  void reset(std::size_t n) {
    m.assign(n, 0.0);
    v.assign(n, 0.0);
    t = 0;
  }
};

/// Standard Adam update with bias correction, in place.
void adam_step(std::vector<double>& values, std::span<const double> grads, AdamMoments& state,
               const AdamConfig& config);

struct InitScheme {
  double k_scale = 0.0;   // <= 0: gravity-balance heuristic total_mass*g/(S*0.05)
  double b_scale = -1.0;  // < 0: 0.1 * k_scale
  double jitter = 0.5;    // k uniform in [1-jitter, 1+jitter] * k_scale
};

enum class TrainPass : std::uint8_t { stiffness = 0, damping = 1, joint = 2 };

const char* to_string(TrainPass pass);

struct TrainConfig {
  std::int32_t stiffness_iterations = 128;
  std::int32_t damping_iterations = 128;
  std::int32_t joint_iterations = 256;  // single-pass ablation
  std::int32_t batch = 32;
  AdamConfig adam_k;
  AdamConfig adam_b;
  InitScheme init;
  std::uint64_t seed = 0;
  LossWeights stiffness_loss = LossWeights::mass_spring_default();
  LossWeights damping_loss = LossWeights::mass_spring_default();
  LossWeights joint_loss = LossWeights::mass_spring_default();
  TapeOptions tape;
  std::int32_t threads = 0;  // 0: hardware concurrency
};

/// Resampled training data: one target trajectory per rollout plus the clip
/// sets drawn over them.
struct TrainDataset {
  std::vector<Trajectory3> targets;
  std::vector<std::vector<std::uint8_t>> pinned;  // per rollout
  double dt = 0.0;
  ClipSet clips;

  ClipTargets view(const Clip& clip) const {
    return ClipTargets{&targets[static_cast<std::size_t>(clip.rollout)], clip.start, clip.length,
                       pinned[static_cast<std::size_t>(clip.rollout)], dt};
  }
};

struct IterationRecord {
  std::int64_t iteration = 0;   // global, continues across passes and resumes
  TrainPass pass = TrainPass::stiffness;
  LossBreakdown loss;           // batch mean components
  double weighted_total = 0.0;
  double grad_norm_k = 0.0, grad_norm_b = 0.0;
  double k_mean = 0.0, k_min = 0.0, k_max = 0.0;
  double b_mean = 0.0, b_min = 0.0, b_max = 0.0;
  std::int32_t clips_used = 0, clips_skipped = 0;
  bool step_skipped = false;
};

/// Serializable optimizer snapshot; resuming from it reproduces the
/// uninterrupted run exactly (batch selection is stateless per iteration).
struct TrainerState {
  MaterialParams params;
  AdamMoments moments_k, moments_b;
  std::int32_t pass_index = 0;
  std::int64_t iteration = 0;
};

struct TrainResult {
  MaterialParams params;
  std::vector<IterationRecord> log;
  TrainerState final_state;
  std::vector<std::string> diagnostics;
};

using IterationCallback = std::function<void(const TrainerState&, const IterationRecord&)>;

/// Pass 1 trains stiffness on the low-velocity clips with damping frozen;
/// pass 2 trains damping on the general clips with stiffness frozen.
TrainResult dual_pass_train(const SpringNetwork& net, const TrainDataset& dataset,
                            const MassModel& masses, const ExternalForceSpec& ext,
                            const TrainConfig& config, const TrainerState* resume = nullptr,
                            const IterationCallback& on_iteration = {});

/// Ablation: both parameter groups optimized together on the general clips.
TrainResult single_pass_train(const SpringNetwork& net, const TrainDataset& dataset,
                              const MassModel& masses, const ExternalForceSpec& ext,
                              const TrainConfig& config, const TrainerState* resume = nullptr,
                              const IterationCallback& on_iteration = {});

/// Initial parameter draw used by both curricula.
MaterialParams initialize_params(const SpringNetwork& net, const MassModel& masses,
                                 const ExternalForceSpec& ext, const InitScheme& scheme,
                                 std::uint64_t seed);

}  // namespace msnet
