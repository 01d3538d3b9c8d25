#include "kubm/synthbench.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numbers>
#include <sstream>

#include <json.hpp>

#include "kubm/error.hpp"

namespace kubm {

namespace {

using V2 = Eigen::Vector2d;

// linear-coupled
constexpr double kDrag = 0.3;
constexpr double kGoalGain = 0.15;
constexpr double kWaitGain = 0.1;
// reach-grasp-move
constexpr double kGraspRadius = 0.06;
constexpr double kReachGain = 0.35;
constexpr double kCarryGain = 0.25;
// pendulum-push
const V2 kPivot(0.5, 0.5);
constexpr double kArm = 0.3;
constexpr double kPushGain = 0.6;
constexpr double kPushReach = 0.15;
constexpr double kLead = 0.35;
constexpr double kFollowGain = 0.5;

constexpr double kObjectRadius = 0.04;
constexpr double kMarkerRadius = 0.025;
constexpr std::size_t kMaxResample = 200;

V2 bob(double angle) { return kPivot + kArm * V2(std::cos(angle), std::sin(angle)); }

double goal_angle(const V2& goal) { return std::atan2(goal.y() - kPivot.y(), goal.x() - kPivot.x()); }

V2 sample_in(Rng& rng, double lo, double hi) { return {rng.uniform(lo, hi), rng.uniform(lo, hi)}; }

// Square [-1, 1]^2 onto the unit disc, keeping grid neighbours adjacent.
V2 square_to_disc(double u, double v) {
  return {u * std::sqrt(1.0 - 0.5 * v * v), v * std::sqrt(1.0 - 0.5 * u * u)};
}

}  // namespace

std::string_view to_string(EnvKind k) {
  switch (k) {
    case EnvKind::LinearCoupled: return "linear-coupled";
    case EnvKind::ReachGraspMove: return "reach-grasp-move";
    case EnvKind::PendulumPush: return "pendulum-push";
  }
  return "?";
}

EnvKind env_kind_from_string(std::string_view s) {
  if (s == "linear-coupled") return EnvKind::LinearCoupled;
  if (s == "reach-grasp-move") return EnvKind::ReachGraspMove;
  if (s == "pendulum-push") return EnvKind::PendulumPush;
  fail(ErrorCode::InvalidArgument, "unknown env kind '" + std::string(s) + "'");
}

std::string_view to_string(ObsMode m) { return m == ObsMode::Pose ? "pose" : "flow"; }

ObsMode obs_mode_from_string(std::string_view s) {
  if (s == "pose") return ObsMode::Pose;
  if (s == "flow") return ObsMode::Flow;
  fail(ErrorCode::InvalidArgument, "unknown observation mode '" + std::string(s) + "'");
}

// ---------------------------------------------------------------------------
// ToyEnv

ToyEnv::ToyEnv(EnvConfig config, V2 object, V2 goal, std::uint64_t noise_seed)
    : config_(config), q_(home(config.kind)), object_(object), goal_(goal), noise_(noise_seed) {
  if (config_.kind == EnvKind::PendulumPush) {
    angle_ = goal_angle(object);
    object_ = bob(angle_);
    goal_ = bob(goal_angle(goal));
  }
  // The linear-coupled robot starts in contact with the object.
  if (config_.kind == EnvKind::LinearCoupled) q_ = object_;
  start_ = q_;
}

Vec ToyEnv::home(EnvKind kind) {
  switch (kind) {
    case EnvKind::LinearCoupled: return Vec::Constant(2, 0.5);  // replaced by the object pose
    case EnvKind::ReachGraspMove: return (Vec(3) << 0.5, 0.1, 0.0).finished();
    case EnvKind::PendulumPush: return (Vec(2) << 0.5, 0.05).finished();
  }
  return Vec();
}

std::size_t ToyEnv::action_dim(EnvKind kind) { return kind == EnvKind::ReachGraspMove ? 3 : 2; }

ToyEnv ToyEnv::sample(const EnvConfig& config, Rng& rng) {
  V2 object, goal;
  if (config.kind == EnvKind::PendulumPush) {
    const double a = rng.uniform(-std::numbers::pi, std::numbers::pi);
    const double delta = rng.uniform(0.6, 1.5) * (rng.uniform() < 0.5 ? -1.0 : 1.0);
    object = bob(a);
    goal = bob(a + delta);
  } else {
    object = sample_in(rng, 0.2, 0.8);
    do {
      goal = sample_in(rng, 0.1, 0.9);
    } while ((goal - object).norm() < 0.25);
  }
  return ToyEnv(config, object, goal, rng.next());
}

Vec ToyEnv::expert_action() const {
  switch (config_.kind) {
    case EnvKind::LinearCoupled: {
      const V2 q = q_;
      return q + kGoalGain * (goal_ - q) + kWaitGain * (object_ - q);
    }
    case EnvKind::ReachGraspMove: {
      Vec a(3);
      const V2 q = q_.head<2>();
      if (!attached_) {
        const V2 next = q + kReachGain * (object_ - q);
        a << next, (next - object_).norm() < kGraspRadius ? 1.0 : 0.0;
      } else {
        a << q + kCarryGain * (goal_ - q), 1.0;
      }
      return a;
    }
    case EnvKind::PendulumPush: {
      double lead = goal_angle(goal_) - angle_;
      lead = std::remainder(lead, 2.0 * std::numbers::pi);
      const V2 target = bob(angle_ + std::clamp(lead, -kLead, kLead));
      return q_ + kFollowGain * (target - V2(q_));
    }
  }
  return q_;
}

Observation ToyEnv::observe() const {
  Observation obs;
  if (config_.goal_conditioned) {
    obs.feature = object_;
    obs.goal = goal_;
  } else {
    obs.feature.resize(4);
    obs.feature << object_, goal_;
  }
  if (config_.obs == ObsMode::Flow) obs.flow = render_flow(object_, goal_);
  return obs;
}

void ToyEnv::step(const Vec& action) {
  if (static_cast<std::size_t>(action.size()) != action_dim(config_.kind)) {
    fail(ErrorCode::DimensionMismatch, "action has wrong length for " + std::string(to_string(config_.kind)));
  }
  if (!action.allFinite()) fail(ErrorCode::InvalidArgument, "non-finite action");
  V2 noise = V2::Zero();
  if (config_.object_noise > 0.0) noise = V2(noise_.normal(), noise_.normal()) * config_.object_noise;
  switch (config_.kind) {
    case EnvKind::LinearCoupled:
      object_ += kDrag * (V2(action) - object_) + noise;
      break;
    case EnvKind::ReachGraspMove: {
      const V2 a = action.head<2>();
      const bool grip = action(2) > 0.5;
      if (!grip) attached_ = false;
      if (grip && !attached_ && (a - object_).norm() < kGraspRadius) attached_ = true;
      if (attached_) object_ = a;
      object_ += noise;
      break;
    }
    case EnvKind::PendulumPush: {
      const V2 a = action;
      const V2 b = bob(angle_);
      const V2 tangent(-std::sin(angle_), std::cos(angle_));
      const double w = std::exp(-(a - b).squaredNorm() / (kPushReach * kPushReach));
      angle_ += kPushGain * w * tangent.dot(a - b) / kArm + noise.x() / kArm;
      object_ = bob(angle_);
      break;
    }
  }
  q_ = action;
  ++t_;
  apply_jump();
}

void ToyEnv::apply_jump() {
  if (jump_ && jump_->step == t_) {
    goal_ = config_.kind == EnvKind::PendulumPush ? bob(goal_angle(jump_->goal)) : jump_->goal;
  }
}

V2 to_pixels(const V2& p) { return V2::Constant(kPixelOffset) + kPixelScale * p; }

FlowPoints render_flow(const V2& object, const V2& goal) {
  FlowPoints pts(kFlowPointCount, 2);
  for (int j = 0; j < kFlowPointCount; ++j) {
    const int r = j / 16;
    const int c = j % 16;
    const double u = 2.0 * (c + 0.5) / 16.0 - 1.0;
    V2 p;
    if (r < 8) {
      p = object + kObjectRadius * square_to_disc(u, 2.0 * (r + 0.5) / 8.0 - 1.0);
    } else {
      p = goal + kMarkerRadius * square_to_disc(u, 2.0 * (r - 8 + 0.5) / 8.0 - 1.0);
    }
    pts.row(j) = to_pixels(p).transpose();
  }
  return pts;
}

Dataset generate_demos(const EnvConfig& config, std::size_t count, std::uint64_t seed) {
  if (count == 0) fail(ErrorCode::InvalidArgument, "need at least one demonstration");
  if (config.horizon == 0) fail(ErrorCode::InvalidArgument, "horizon must be positive");
  Dataset ds;
  ds.d_q = ToyEnv::action_dim(config.kind);
  ds.d_f = config.goal_conditioned ? 2 : 4;
  ds.d_g = config.goal_conditioned ? 2 : 0;
  Rng rng(seed);
  for (std::size_t i = 0; i < count; ++i) {
    bool done = false;
    for (std::size_t attempt = 0; attempt < kMaxResample && !done; ++attempt) {
      ToyEnv env = ToyEnv::sample(config, rng);
      Demonstration demo;
      demo.initial_joints = env.initial_action();
      if (config.obs == ObsMode::Flow) demo.flow_points.emplace();
      for (std::size_t t = 0; t < config.horizon; ++t) {
        const Observation obs = env.observe();
        const Vec a = env.expert_action();
        demo.actions.push_back(a);
        demo.features.push_back(obs.feature);
        if (obs.flow) demo.flow_points->push_back(*obs.flow);
        if (obs.goal && !demo.goal) demo.goal = obs.goal;
        env.step(a);
      }
      if (env.success()) {
        ds.demos.push_back(std::move(demo));
        done = true;
      }
    }
    if (!done) fail(ErrorCode::NonConvergence, "expert failed on every resampled configuration");
  }
  return ds;
}

std::optional<GoalJump> perturb(const ToyEnv& env, std::size_t step, double min_distance, Rng& rng) {
  if (min_distance <= 0.0) return std::nullopt;
  for (int attempt = 0; attempt < 10000; ++attempt) {
    V2 g;
    if (env.config().kind == EnvKind::PendulumPush) {
      g = bob(rng.uniform(-std::numbers::pi, std::numbers::pi));
    } else {
      g = sample_in(rng, 0.1, 0.9);
    }
    if ((g - env.goal()).norm() >= min_distance) return GoalJump{step, g};
  }
  fail(ErrorCode::InvalidArgument, "no goal in the workspace is that far from the current goal");
}

std::vector<Occlusion> occlude(std::size_t first, std::size_t last) {
  if (last < first) return {};
  return {Occlusion{first, last}};
}

std::vector<Occlusion> occlusion_fraction(double fraction, std::size_t horizon) {
  if (fraction < 0.0 || fraction >= 1.0) fail(ErrorCode::InvalidArgument, "occlusion fraction must be in [0, 1)");
  const auto n = static_cast<std::size_t>(std::lround(fraction * static_cast<double>(horizon)));
  if (n == 0) return {};
  return occlude(1, n);
}

// ---------------------------------------------------------------------------
// Metrics

namespace {

std::size_t nearest_bin(std::size_t i, std::size_t length, std::size_t bins) {
  if (length <= 1) return 0;
  return static_cast<std::size_t>(
      std::lround(static_cast<double>(i) * static_cast<double>(bins - 1) / static_cast<double>(length - 1)));
}

// Fills bins that got no sample with the previous bin's value.
std::vector<double> finish_bins(const std::vector<double>& sum, const std::vector<double>& count) {
  std::vector<double> out(sum.size(), 0.0);
  for (std::size_t b = 0; b < sum.size(); ++b) {
    out[b] = count[b] > 0 ? sum[b] / count[b] : (b > 0 ? out[b - 1] : 0.0);
  }
  return out;
}

}  // namespace

FlowRollout flow_rollout(const EpisodeResult& episode, const FlowCodec& codec) {
  FlowRollout r;
  r.success = episode.success;
  r.truth = episode.true_flow;
  r.predicted.reserve(episode.predicted_features.size());
  for (const Vec& f : episode.predicted_features) r.predicted.push_back(flow_points_from_feature(f, codec));
  return r;
}

PercentileCurves rmse_by_percentile(std::span<const FlowRollout> rollouts, std::size_t bins) {
  if (bins == 0) fail(ErrorCode::InvalidArgument, "bins must be positive");
  PercentileCurves out;
  std::vector<double> acc_s(bins, 0.0), acc_f(bins, 0.0);
  for (const auto& r : rollouts) {
    const std::size_t len = std::min(r.predicted.size(), r.truth.size());
    if (len == 0) fail(ErrorCode::EmptyDataset, "rollout without frames");
    std::vector<double> sq(bins, 0.0), n(bins, 0.0);
    for (std::size_t i = 0; i < len; ++i) {
      if (r.predicted[i].rows() != r.truth[i].rows()) fail(ErrorCode::WrongPointCount, "point counts differ");
      const std::size_t b = nearest_bin(i, len, bins);
      sq[b] += (r.predicted[i] - r.truth[i]).squaredNorm();
      n[b] += static_cast<double>(r.truth[i].rows());
    }
    std::vector<double> curve = finish_bins(sq, n);
    for (double& v : curve) v = std::sqrt(v);
    auto& acc = r.success ? acc_s : acc_f;
    for (std::size_t b = 0; b < bins; ++b) acc[b] += curve[b];
    ++(r.success ? out.success_count : out.failure_count);
  }
  if (out.success_count > 0) {
    out.success = acc_s;
    for (double& v : out.success) v /= static_cast<double>(out.success_count);
  }
  if (out.failure_count > 0) {
    out.failure = acc_f;
    for (double& v : out.failure) v /= static_cast<double>(out.failure_count);
  }
  return out;
}

std::vector<double> cosine_curve(std::span<const std::vector<Vec>> predicted,
                                 std::span<const std::vector<Vec>> truth, std::size_t bins) {
  if (bins == 0) fail(ErrorCode::InvalidArgument, "bins must be positive");
  if (predicted.size() != truth.size()) fail(ErrorCode::DimensionMismatch, "rollout counts differ");
  if (predicted.empty()) fail(ErrorCode::EmptyDataset, "no rollouts");
  std::vector<double> acc(bins, 0.0);
  for (std::size_t k = 0; k < predicted.size(); ++k) {
    const std::size_t len = std::min(predicted[k].size(), truth[k].size());
    if (len == 0) fail(ErrorCode::EmptyDataset, "rollout without frames");
    std::vector<double> sum(bins, 0.0), n(bins, 0.0);
    for (std::size_t i = 0; i < len; ++i) {
      const std::size_t b = nearest_bin(i, len, bins);
      sum[b] += 1.0 - monitor_step(predicted[k][i], truth[k][i], MonitorMetric::Cosine);
      n[b] += 1.0;
    }
    const std::vector<double> curve = finish_bins(sum, n);
    for (std::size_t b = 0; b < bins; ++b) acc[b] += curve[b];
  }
  for (double& v : acc) v /= static_cast<double>(predicted.size());
  return acc;
}

double dominance_fraction(const std::vector<double>& upper, const std::vector<double>& lower) {
  if (upper.size() != lower.size() || upper.empty()) fail(ErrorCode::DimensionMismatch, "curves differ in length");
  std::size_t hits = 0;
  for (std::size_t i = 0; i < upper.size(); ++i) hits += upper[i] >= lower[i] ? 1 : 0;
  return static_cast<double>(hits) / static_cast<double>(upper.size());
}

// ---------------------------------------------------------------------------
// Suites

std::vector<EpisodeResult> run_suite(const KoopmanModel& model, const SuiteOptions& options) {
  std::vector<EpisodeResult> results;
  results.reserve(options.episodes);
  for (std::size_t i = 0; i < options.episodes; ++i) {
    Rng rng(Rng::derive(options.seed, i));
    ToyEnv env = ToyEnv::sample(options.env, rng);
    env.set_goal_jump(perturb(env, options.perturb_step, options.perturb_distance, rng));
    results.push_back(execute_episode(model, env, options.episode));
  }
  return results;
}

double success_rate(std::span<const EpisodeResult> results) {
  if (results.empty()) return 0.0;
  const auto n = std::count_if(results.begin(), results.end(), [](const EpisodeResult& r) { return r.success; });
  return static_cast<double>(n) / static_cast<double>(results.size());
}

std::string AblationReport::csv() const {
  std::ostringstream out;
  out.precision(17);
  out << "config,epoch,loss,batch_loss,spectral_radius\n";
  for (const auto& run : runs) {
    const auto& r = run.record;
    for (std::size_t e = 0; e < r.loss.size(); ++e) {
      out << run.name << ',' << e << ',' << r.loss[e] << ',';
      if (e > 0 && e - 1 < r.batch_loss.size()) out << r.batch_loss[e - 1];
      out << ',' << r.spectral_radius[e] << '\n';
    }
  }
  return out.str();
}

std::size_t AblationReport::best() const {
  if (runs.empty()) fail(ErrorCode::EmptyDataset, "empty ablation report");
  std::size_t best = 0;
  for (std::size_t i = 1; i < runs.size(); ++i) {
    if (runs[i].record.loss.back() < runs[best].record.loss.back()) best = i;
  }
  return best;
}

std::string AblationReport::summary_json() const {
  nlohmann::json j = nlohmann::json::array();
  for (const auto& run : runs) {
    const auto& r = run.record;
    const auto [lo, hi] = std::minmax_element(r.spectral_radius.begin(), r.spectral_radius.end());
    j.push_back({{"config", run.name},
                 {"identity_init", run.config.identity_init},
                 {"separate_lr", run.config.separate_lr},
                 {"epochs", r.epochs},
                 {"initial_loss", r.loss.front()},
                 {"final_loss", r.loss.back()},
                 {"initial_spectral_radius", r.spectral_radius.front()},
                 {"min_spectral_radius", *lo},
                 {"max_spectral_radius", *hi}});
  }
  nlohmann::json out = {{"runs", j}, {"best", runs.empty() ? "" : runs[best()].name}};
  return out.dump(2);
}

AblationReport ablation_suite(const Dataset& dataset, const TrainConfig& base,
                              const std::function<void(const std::string&, const EpochReport&)>& on_epoch) {
  struct Variant {
    const char* name;
    bool identity;
    bool separate;
  };
  const Variant variants[] = {{"identity+separate", true, true},
                              {"separate-only", false, true},
                              {"identity-only", true, false},
                              {"neither", false, false}};
  AblationReport report;
  for (const auto& v : variants) {
    TrainConfig cfg = base;
    cfg.identity_init = v.identity;
    cfg.separate_lr = v.separate;
    EpochCallback cb;
    if (on_epoch) cb = [&](const EpochReport& e) { on_epoch(v.name, e); };
    KoopmanModel m = train(dataset, cfg, cb);
    report.runs.push_back({v.name, cfg, std::move(m.record)});
  }
  return report;
}

TimingStats timing_probe(const KoopmanModel& model, std::size_t episodes, std::size_t steps, std::uint64_t seed) {
  if (episodes == 0 || steps == 0) fail(ErrorCode::InvalidArgument, "timing probe needs episodes and steps");
  using clock = std::chrono::steady_clock;
  Rng rng(seed);
  const auto dz = model.K.rows();
  const auto dq = static_cast<Eigen::Index>(model.dims.d_q);
  Vec z(dz), next(dz), action(dq);
  std::vector<double> per_step;
  double sink = 0.0;
  for (std::size_t e = 0; e < episodes; ++e) {
    for (Eigen::Index i = 0; i < dz; ++i) z(i) = rng.normal();
    z /= z.norm();
    const auto start = clock::now();
    for (std::size_t s = 0; s < steps; ++s) {
      next.noalias() = model.K * z;
      z.swap(next);
      action = z.head(dq);
      sink += action(0);
    }
    const std::chrono::duration<double, std::milli> elapsed = clock::now() - start;
    per_step.push_back(elapsed.count() / static_cast<double>(steps));
  }
  volatile double keep = sink;
  (void)keep;
  TimingStats st;
  st.queries = episodes * steps;
  for (double v : per_step) st.mean_ms += v;
  st.mean_ms /= static_cast<double>(per_step.size());
  for (double v : per_step) st.std_ms += (v - st.mean_ms) * (v - st.mean_ms);
  st.std_ms = std::sqrt(st.std_ms / static_cast<double>(per_step.size()));
  return st;
}

}  // namespace kubm
