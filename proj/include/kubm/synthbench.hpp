#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "kubm/koopman.hpp"
#include "kubm/planner.hpp"
#include "kubm/random.hpp"

namespace kubm {

// Workspace is the unit square. Pixel coordinates map x -> 16 + 96 x on a
// 128-pixel image.
inline constexpr double kPixelOffset = 16.0;
inline constexpr double kPixelScale = 96.0;

enum class EnvKind { LinearCoupled, ReachGraspMove, PendulumPush };
enum class ObsMode { Pose, Flow };

std::string_view to_string(EnvKind k);
EnvKind env_kind_from_string(std::string_view s);
std::string_view to_string(ObsMode m);
ObsMode obs_mode_from_string(std::string_view s);

struct EnvConfig {
  EnvKind kind = EnvKind::LinearCoupled;
  ObsMode obs = ObsMode::Pose;
  /// Steps per demonstration and per episode.
  std::size_t horizon = 60;
  double success_radius = 0.05;
  /// Emit the goal as a separate `goal` field instead of inside the features.
  bool goal_conditioned = false;
  /// Std of Gaussian noise added to the object displacement each step.
  double object_noise = 0.0;
};

/// Goal jump applied when the environment reaches `step`.
struct GoalJump {
  std::size_t step = 0;
  Eigen::Vector2d goal;
};

/// Coupled robot/object toy task.
///
///   linear-coupled   d_q = 2. The robot starts on the object and drags it:
///                    p' = p + drag (a - p).
///   reach-grasp-move d_q = 3 (x, y, grip). The object sticks to the gripper
///                    when grip > 0.5 within the grasp radius.
///   pendulum-push    d_q = 2. A bob on a circle is pushed along its tangent by
///                    a nearby end effector.
class ToyEnv : public Environment {
 public:
  ToyEnv(EnvConfig config, Eigen::Vector2d object, Eigen::Vector2d goal, std::uint64_t noise_seed = 0);

  /// Random object and goal poses for the configured kind.
  static ToyEnv sample(const EnvConfig& config, Rng& rng);
  /// Default start configuration of the robot.
  static Vec home(EnvKind kind);
  static std::size_t action_dim(EnvKind kind);

  const EnvConfig& config() const { return config_; }
  const Vec& joints() const { return q_; }
  const Eigen::Vector2d& object() const { return object_; }
  const Eigen::Vector2d& goal() const { return goal_; }
  void set_goal_jump(std::optional<GoalJump> jump) { jump_ = std::move(jump); }

  /// Scripted expert command for the current state.
  Vec expert_action() const;

  Vec initial_action() const override { return start_; }
  Observation observe() const override;
  void step(const Vec& action) override;
  std::size_t step_index() const override { return t_; }
  double goal_distance() const override { return (object_ - goal_).norm(); }
  bool success() const override { return goal_distance() < config_.success_radius; }

 private:
  void apply_jump();

  EnvConfig config_;
  Vec q_;
  Vec start_;
  Eigen::Vector2d object_;
  Eigen::Vector2d goal_;
  double angle_ = 0.0;  // pendulum bob angle
  bool attached_ = false;
  std::size_t t_ = 0;
  std::optional<GoalJump> jump_;
  Rng noise_;
};

Eigen::Vector2d to_pixels(const Eigen::Vector2d& p);

/// 128 points on the object disc (rows 0-7 of the 16 x 16 grid) and 128 on the
/// goal marker (rows 8-15), laid out so neighbouring grid cells are
/// neighbouring points.
FlowPoints render_flow(const Eigen::Vector2d& object, const Eigen::Vector2d& goal);

/// Scripted demonstrations from randomized object and goal poses. Failed expert
/// runs are resampled (bounded retries).
Dataset generate_demos(const EnvConfig& config, std::size_t count, std::uint64_t seed);

/// Goal jump at `step` to a point at least `min_distance` from the current
/// goal, drawn from [0.1, 0.9]^2 (the circle for pendulum-push). A zero distance
/// yields no jump.
std::optional<GoalJump> perturb(const ToyEnv& env, std::size_t step, double min_distance, Rng& rng);

/// Blackout interval covering `fraction` of `horizon` steps, starting at step 1.
std::vector<Occlusion> occlude(std::size_t first, std::size_t last);
std::vector<Occlusion> occlusion_fraction(double fraction, std::size_t horizon);

// ---------------------------------------------------------------------------
// Metrics

struct FlowRollout {
  std::vector<FlowPoints> predicted;
  std::vector<FlowPoints> truth;
  bool success = false;
};

/// Decodes an episode's predicted features with `codec` and pairs them with the
/// observed flow.
FlowRollout flow_rollout(const EpisodeResult& episode, const FlowCodec& codec);

struct PercentileCurves {
  std::vector<double> success;  // empty when no rollout succeeded
  std::vector<double> failure;  // empty when no rollout failed
  std::size_t success_count = 0;
  std::size_t failure_count = 0;
};

/// Each rollout's steps are mapped to the nearest of `bins` percentile bins;
/// per-bin RMSE over points is averaged across rollouts. Bins that receive no
/// step repeat the previous bin.
PercentileCurves rmse_by_percentile(std::span<const FlowRollout> rollouts, std::size_t bins = 100);

/// Per-bin mean cosine similarity between predicted and true feature sequences.
std::vector<double> cosine_curve(std::span<const std::vector<Vec>> predicted,
                                 std::span<const std::vector<Vec>> truth, std::size_t bins = 100);

/// Fraction of bins where `upper` >= `lower`.
double dominance_fraction(const std::vector<double>& upper, const std::vector<double>& lower);

// ---------------------------------------------------------------------------
// Suites

struct SuiteOptions {
  EnvConfig env;
  EpisodeOptions episode;
  std::size_t episodes = 30;
  std::uint64_t seed = 0;
  /// Goal jump step and minimum jump distance; distance 0 disables.
  std::size_t perturb_step = 20;
  double perturb_distance = 0.0;
};

/// Runs seeded episodes; episode i uses Rng(derive(seed, i)).
std::vector<EpisodeResult> run_suite(const KoopmanModel& model, const SuiteOptions& options);

double success_rate(std::span<const EpisodeResult> results);

struct AblationRun {
  std::string name;
  TrainConfig config;
  TrainingRecord record;
};

struct AblationReport {
  std::vector<AblationRun> runs;

  /// Columns: config, epoch, loss, batch_loss, spectral_radius.
  std::string csv() const;
  std::string summary_json() const;
  /// Index of the run with the lowest final loss.
  std::size_t best() const;
};

/// Trains {identity+separate, separate-only, identity-only, neither} from the
/// base config. The dataset must be augmented and rescaled.
AblationReport ablation_suite(const Dataset& dataset, const TrainConfig& base,
                              const std::function<void(const std::string&, const EpochReport&)>& on_epoch = nullptr);

struct TimingStats {
  double mean_ms = 0.0;
  double std_ms = 0.0;
  std::size_t queries = 0;
};

/// Wall-clock cost of one policy query (latent step plus action read-out),
/// averaged per episode of `steps` queries. Feature extraction is excluded.
TimingStats timing_probe(const KoopmanModel& model, std::size_t episodes, std::size_t steps, std::uint64_t seed);

}  // namespace kubm
