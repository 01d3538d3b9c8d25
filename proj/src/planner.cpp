#include "kubm/planner.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "kubm/error.hpp"

namespace kubm {

std::vector<Vec> rollout(const Mat& K, const Vec& z0, std::size_t horizon) {
  if (K.rows() != K.cols() || K.cols() != z0.size()) {
    fail(ErrorCode::DimensionMismatch, "rollout: K and z0 sizes differ");
  }
  std::vector<Vec> z;
  z.reserve(horizon + 1);
  z.push_back(z0);
  for (std::size_t t = 0; t < horizon; ++t) z.push_back(K * z.back());
  return z;
}

std::vector<Vec> rollout(const KoopmanModel& model, const Vec& z0, std::size_t horizon) {
  return rollout(model.K, z0, horizon);
}

Plan plan(const KoopmanModel& model, const Vec& a0, const Vec& phi0, const std::optional<Vec>& goal,
          std::size_t horizon, std::size_t origin) {
  const Vec xi = model.behavioral_state(a0, phi0, goal);
  Plan p;
  p.origin = origin;
  p.latents = rollout(model, model.latent(xi), horizon);
  p.actions.reserve(p.latents.size());
  p.features.reserve(p.latents.size());
  for (const Vec& z : p.latents) {
    p.actions.push_back(model.action(z));
    p.features.push_back(model.feature(z));
  }
  return p;
}

Plan replan(const KoopmanModel& model, const Vec& last_action, const Vec& phi,
            const std::optional<Vec>& goal, std::size_t horizon, std::size_t origin) {
  return plan(model, last_action, phi, goal, horizon, origin);
}

// ---------------------------------------------------------------------------

std::string_view to_string(MonitorMetric m) {
  return m == MonitorMetric::FlowCentroid ? "flow-centroid" : "cosine";
}

MonitorMetric monitor_metric_from_string(std::string_view s) {
  if (s == "flow-centroid") return MonitorMetric::FlowCentroid;
  if (s == "cosine") return MonitorMetric::Cosine;
  fail(ErrorCode::InvalidArgument, "unknown metric '" + std::string(s) + "'");
}

Eigen::Vector2d centroid(const FlowPoints& points) {
  if (points.rows() == 0) fail(ErrorCode::DegenerateMetric, "centroid of an empty point set");
  return points.colwise().mean().transpose();
}

double monitor_step(const Vec& predicted, const Vec& observed, MonitorMetric metric, const FlowCodec* codec) {
  if (predicted.size() != observed.size()) {
    fail(ErrorCode::DimensionMismatch, "predicted and observed features differ in length");
  }
  if (metric == MonitorMetric::Cosine) {
    const double np = predicted.norm();
    const double no = observed.norm();
    if (np == 0.0 || no == 0.0) fail(ErrorCode::DegenerateMetric, "cosine of a zero-norm feature");
    if (predicted == observed) return 0.0;
    return std::max(0.0, 1.0 - predicted.dot(observed) / (np * no));
  }
  if (codec == nullptr) fail(ErrorCode::InvalidArgument, "flow-centroid metric needs a flow codec");
  const FlowPoints p = flow_points_from_feature(predicted, *codec);
  const FlowPoints o = flow_points_from_feature(observed, *codec);
  return (centroid(p) - centroid(o)).norm();
}

bool check_trigger(std::span<const MonitorRecord> history, const TriggerPolicy& policy) {
  if (policy.kind == TriggerPolicy::Kind::Persistent) {
    const auto m = static_cast<std::size_t>(std::max(policy.persistence, 1));
    if (history.size() < m) return false;
    return std::all_of(history.end() - static_cast<std::ptrdiff_t>(m), history.end(),
                       [&](const MonitorRecord& r) { return r.error > policy.threshold; });
  }
  const auto w = static_cast<std::size_t>(std::max(policy.window, 1));
  if (history.size() < w + 1) return false;
  std::vector<double> previous;
  for (std::size_t i = history.size() - 1 - w; i + 1 < history.size(); ++i) previous.push_back(history[i].error);
  std::sort(previous.begin(), previous.end());
  const double median = w % 2 == 1 ? previous[w / 2] : 0.5 * (previous[w / 2 - 1] + previous[w / 2]);
  return history.back().error - median > policy.threshold;
}

double calibrate_threshold(std::vector<double> nominal_errors, double factor, double quantile) {
  if (nominal_errors.empty()) fail(ErrorCode::EmptyDataset, "no nominal errors to calibrate from");
  std::sort(nominal_errors.begin(), nominal_errors.end());
  const double pos = quantile * static_cast<double>(nominal_errors.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, nominal_errors.size() - 1);
  const double q = nominal_errors[lo] + (pos - static_cast<double>(lo)) * (nominal_errors[hi] - nominal_errors[lo]);
  return factor * q;
}

// ---------------------------------------------------------------------------

std::string_view to_string(ExecutionMode m) { return m == ExecutionMode::OpenLoop ? "open-loop" : "monitored"; }

ExecutionMode execution_mode_from_string(std::string_view s) {
  if (s == "open-loop") return ExecutionMode::OpenLoop;
  if (s == "monitored") return ExecutionMode::Monitored;
  fail(ErrorCode::InvalidArgument, "unknown mode '" + std::string(s) + "'");
}

Vec model_feature(const KoopmanModel& model, const Observation& obs) {
  if (obs.blackout) fail(ErrorCode::InvalidArgument, "no feature for a blacked-out observation");
  if (model.codec) {
    if (!obs.flow) fail(ErrorCode::InvalidArgument, "model expects flow observations");
    return flow_feature(*obs.flow, *model.codec);
  }
  return obs.feature;
}

namespace {

std::optional<Vec> model_goal(const KoopmanModel& model, const Observation& obs) {
  if (model.dims.d_g == 0) return std::nullopt;
  if (!obs.goal) fail(ErrorCode::InvalidArgument, "model expects a goal observation");
  return obs.goal;
}

}  // namespace

EpisodeResult execute_episode(const KoopmanModel& model, Environment& env, const EpisodeOptions& options) {
  auto occluded = [&](std::size_t step) {
    return std::any_of(options.occlusions.begin(), options.occlusions.end(),
                       [&](const Occlusion& o) { return o.contains(step); });
  };
  if (occluded(0)) fail(ErrorCode::InvalidArgument, "occlusion may not cover the first step");
  if (options.mode == ExecutionMode::Monitored && options.metric == MonitorMetric::FlowCentroid && !model.codec) {
    fail(ErrorCode::InvalidArgument, "flow-centroid monitoring needs a model with a flow codec");
  }

  EpisodeResult result;
  const Observation first = env.observe();
  Vec last_action = env.initial_action();
  Plan active = plan(model, last_action, model_feature(model, first), model_goal(model, first), options.horizon, 0);
  std::vector<MonitorRecord> history;

  for (std::size_t s = 0; s < options.max_steps; ++s) {
    Observation obs = s == 0 ? first : env.observe();
    if (obs.flow) result.true_flow.push_back(*obs.flow);
    result.observed_features.push_back(model_feature(model, obs));
    if (occluded(s)) obs = Observation{Vec(), std::nullopt, std::nullopt, true};

    StepLog log;
    log.step = s;
    std::size_t index = s - active.origin + 1;
    result.predicted_features.push_back(active.features[std::min(index, active.size() - 1)]);

    if (options.mode == ExecutionMode::Monitored && !obs.blackout && index < active.size()) {
      const Vec phi = model_feature(model, obs);
      MonitorRecord rec{s, monitor_step(active.features[index], phi, options.metric,
                                        model.codec ? &*model.codec : nullptr),
                        false};
      history.push_back(rec);
      rec.triggered = check_trigger(history, options.trigger);
      history.back().triggered = rec.triggered;
      log.error = rec.error;
      log.triggered = rec.triggered;
      if (rec.triggered) {
        active = replan(model, last_action, phi, model_goal(model, obs), options.horizon, s);
        history.clear();
        log.replanned = true;
        result.replans.push_back(s);
        index = 1;
      }
    }

    const Vec& action = active.actions[std::min(index, active.size() - 1)];
    log.action = action;
    env.step(action);
    last_action = action;
    result.logs.push_back(std::move(log));
  }
  result.steps = options.max_steps;
  result.final_distance = env.goal_distance();
  result.success = env.success();
  return result;
}

}  // namespace kubm
