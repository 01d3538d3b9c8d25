#pragma once

#include <cstddef>
#include <functional>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include "kubm/koopman.hpp"

namespace kubm {

/// Open-loop rollout of a model. Index 0 is the auxiliary initial frame; index
/// k >= 1 is the action executed at global step origin + k - 1 together with the
/// feature predicted for that step's observation.
struct Plan {
  std::vector<Vec> latents;
  std::vector<Vec> actions;
  std::vector<Vec> features;  // un-rescaled
  std::size_t origin = 0;

  std::size_t size() const { return latents.size(); }
};

/// z_0 = z0, z_{t+1} = K z_t; returns T + 1 latents.
std::vector<Vec> rollout(const Mat& K, const Vec& z0, std::size_t horizon);
std::vector<Vec> rollout(const KoopmanModel& model, const Vec& z0, std::size_t horizon);

Plan plan(const KoopmanModel& model, const Vec& a0, const Vec& phi0, const std::optional<Vec>& goal,
          std::size_t horizon, std::size_t origin = 0);

/// Fresh plan from the current observation; `last_action` is the last commanded action.
Plan replan(const KoopmanModel& model, const Vec& last_action, const Vec& phi,
            const std::optional<Vec>& goal, std::size_t horizon, std::size_t origin);

// ---------------------------------------------------------------------------
// Monitoring

enum class MonitorMetric { FlowCentroid, Cosine };

std::string_view to_string(MonitorMetric m);
MonitorMetric monitor_metric_from_string(std::string_view s);

/// Mean point of a point set.
Eigen::Vector2d centroid(const FlowPoints& points);

/// flow-centroid: distance in pixels between centroids of the decoded point
/// sets (needs `codec`). cosine: 1 - cos(predicted, observed).
double monitor_step(const Vec& predicted, const Vec& observed, MonitorMetric metric,
                    const FlowCodec* codec = nullptr);

struct MonitorRecord {
  std::size_t step = 0;
  double error = 0.0;
  bool triggered = false;
};

struct TriggerPolicy {
  enum class Kind { Persistent, Jump };
  Kind kind = Kind::Persistent;
  double threshold = 1.0;
  int persistence = 2;
  /// Jump detector: error_t minus the median of the previous `window` errors.
  int window = 5;
};

/// Persistent: the last m errors all exceed the threshold.
/// Jump: the newest error exceeds the median of the `window` before it by more
/// than the threshold (false until the window is filled).
bool check_trigger(std::span<const MonitorRecord> history, const TriggerPolicy& policy);

/// factor times the given quantile of nominal errors.
double calibrate_threshold(std::vector<double> nominal_errors, double factor = 5.0, double quantile = 0.95);

// ---------------------------------------------------------------------------
// Episodes

struct Observation {
  Vec feature;  // task features (pose features for synthbench)
  std::optional<FlowPoints> flow;
  std::optional<Vec> goal;
  bool blackout = false;
};

/// Something a plan can be executed in.
class Environment {
 public:
  virtual ~Environment() = default;
  /// Joint configuration before the first command (the auxiliary action).
  virtual Vec initial_action() const = 0;
  /// Observation at the current step.
  virtual Observation observe() const = 0;
  virtual void step(const Vec& action) = 0;
  virtual std::size_t step_index() const = 0;
  virtual double goal_distance() const = 0;
  virtual bool success() const = 0;
};

/// Closed step interval whose observations are blacked out.
struct Occlusion {
  std::size_t first = 0;
  std::size_t last = 0;
  bool contains(std::size_t step) const { return step >= first && step <= last; }
};

enum class ExecutionMode { OpenLoop, Monitored };

std::string_view to_string(ExecutionMode m);
ExecutionMode execution_mode_from_string(std::string_view s);

struct EpisodeOptions {
  ExecutionMode mode = ExecutionMode::OpenLoop;
  std::size_t horizon = 60;    // plan length T_H
  std::size_t max_steps = 60;  // env steps executed
  MonitorMetric metric = MonitorMetric::FlowCentroid;
  TriggerPolicy trigger;
  std::vector<Occlusion> occlusions;
};

struct StepLog {
  std::size_t step = 0;
  Vec action;
  std::optional<double> error;  // unset when the step was not monitored
  bool triggered = false;
  bool replanned = false;
};

struct EpisodeResult {
  bool success = false;
  std::size_t steps = 0;
  double final_distance = 0.0;
  std::vector<StepLog> logs;
  std::vector<std::size_t> replans;
  /// Feature predicted for each step by the plan active at that step.
  std::vector<Vec> predicted_features;
  /// Unfiltered flow points of each step when the environment emits them.
  std::vector<FlowPoints> true_flow;
  /// Model feature of each step's observation, recorded before any blackout.
  std::vector<Vec> observed_features;
};

/// Model feature for an observation: codec latent of the flow points when the
/// model carries a codec, else the observation's feature vector.
Vec model_feature(const KoopmanModel& model, const Observation& obs);

EpisodeResult execute_episode(const KoopmanModel& model, Environment& env, const EpisodeOptions& options);

}  // namespace kubm
