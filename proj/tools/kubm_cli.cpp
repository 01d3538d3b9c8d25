#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <limits>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "kubm/config.hpp"
#include "kubm/error.hpp"
#include "kubm/flowcodec.hpp"
#include "kubm/koopman.hpp"
#include "kubm/planner.hpp"
#include "kubm/synthbench.hpp"
#include "kubm/trajdata.hpp"

namespace fs = std::filesystem;
using namespace kubm;

namespace {

constexpr const char* kVersion = "1.0.0";

// Thrown while assembling settings; reported as a usage error.
struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct Common {
  std::string config_file;
  std::vector<std::string> overrides;
  std::optional<std::uint64_t> seed;
  std::string out = ".";
};

void add_common(CLI::App* app, Common& c) {
  app->add_option("--config", c.config_file, "settings file of 'key = value' lines")->check(CLI::ExistingFile);
  app->add_option("--set", c.overrides, "override one setting, key=value (repeatable)");
  app->add_option("--seed", c.seed, "master seed");
  app->add_option("--out", c.out, "output directory")->capture_default_str();
}

Config build_config(const Common& c) {
  Config cfg;
  try {
    if (!c.config_file.empty()) cfg.load_file(c.config_file);
    for (const auto& kv : c.overrides) {
      const auto eq = kv.find('=');
      if (eq == std::string::npos) throw UsageError("--set expects key=value, got '" + kv + "'");
      cfg.set(kv.substr(0, eq), kv.substr(eq + 1));
    }
    if (c.seed) cfg.set("seed", std::to_string(*c.seed));
    // Surface bad values now rather than halfway through a run.
    (void)cfg.train_config();
    (void)cfg.flow_config();
    (void)cfg.env_config();
    (void)cfg.trigger_policy();
  } catch (const UsageError&) {
    throw;
  } catch (const Error& e) {
    throw UsageError(e.what());
  }
  cfg.write_effective(c.out);
  return cfg;
}

fs::path out_file(const Common& c, const std::string& sub, const std::string& name) {
  fs::path dir = fs::path(c.out) / sub;
  fs::create_directories(dir);
  return dir / name;
}

std::ofstream open_out(const fs::path& path) {
  std::ofstream out(path);
  if (!out) fail(ErrorCode::Io, "cannot write '" + path.string() + "'");
  out.precision(17);
  return out;
}

MonitorMetric resolve_metric(const Config& cfg, const KoopmanModel& model) {
  const std::string& m = cfg.get("metric");
  if (m == "auto") return model.codec ? MonitorMetric::FlowCentroid : MonitorMetric::Cosine;
  return monitor_metric_from_string(m);
}

// Featurizes flow datasets: with an explicit codec, or by training one when
// the settings ask for flow observations.
std::optional<FlowCodec> prepare_features(Dataset& ds, const Config& cfg, const std::string& codec_path,
                                          const Common& c) {
  std::optional<FlowCodec> codec;
  if (!codec_path.empty()) {
    codec = load_codec(codec_path);
  } else if (cfg.env_config().obs == ObsMode::Flow) {
    const auto frames = pooled_flow_frames(ds);
    if (frames.empty()) fail(ErrorCode::InvalidArgument, "obs_mode is flow but the dataset has no flow points");
    auto fr = train_flow_ae(frames, cfg.flow_config());
    std::cerr << "flow codec rmse " << reconstruction_rmse(fr.codec, frames) << " px\n";
    save_codec(fr.codec, fs::path(c.out) / "codec.json");
    codec = std::move(fr.codec);
  }
  if (codec) featurize_with_codec(ds, *codec);
  return codec;
}

void prepare_dataset(Dataset& ds) {
  bool augmented = !ds.demos.empty() && ds.demos.front().augmented;
  if (!augmented) augment_all(ds);
  if (!ds.rescale_factor) compute_rescale(ds);
}

EpisodeOptions episode_options(const Config& cfg, const KoopmanModel& model, ExecutionMode mode) {
  EpisodeOptions o;
  o.mode = mode;
  o.horizon = cfg.get_size("env_horizon");
  o.max_steps = o.horizon;
  o.metric = resolve_metric(cfg, model);
  o.trigger = cfg.trigger_policy();
  return o;
}

SuiteOptions suite_options(const Config& cfg, const KoopmanModel& model, ExecutionMode mode, std::size_t episodes) {
  SuiteOptions s;
  s.env = cfg.env_config();
  s.episode = episode_options(cfg, model, mode);
  s.episodes = episodes;
  s.seed = static_cast<std::uint64_t>(cfg.get_size("seed"));
  s.perturb_step = cfg.get_size("perturb_step");
  s.perturb_distance = cfg.get_double("perturb_distance");
  return s;
}

void write_training_csv(const TrainingRecord& r, const fs::path& path) {
  auto out = open_out(path);
  out << "epoch,loss,batch_loss,spectral_radius\n";
  for (std::size_t e = 0; e < r.loss.size(); ++e) {
    out << e << ',' << r.loss[e] << ',';
    if (e > 0 && e - 1 < r.batch_loss.size()) out << r.batch_loss[e - 1];
    out << ',' << r.spectral_radius[e] << '\n';
  }
}

void write_episode_csv(const EpisodeResult& r, const fs::path& path) {
  auto out = open_out(path);
  const auto d = r.logs.empty() ? 0 : r.logs.front().action.size();
  out << "step";
  for (Eigen::Index i = 0; i < d; ++i) out << ",a" << i;
  out << ",error,triggered,replanned\n";
  for (const auto& log : r.logs) {
    out << log.step;
    for (Eigen::Index i = 0; i < d; ++i) out << ',' << log.action(i);
    out << ',';
    if (log.error) out << *log.error;
    out << ',' << log.triggered << ',' << log.replanned << '\n';
  }
}

// ---------------------------------------------------------------------------

int cmd_data_gen(const Common& c, std::size_t demos) {
  const Config cfg = build_config(c);
  const Dataset ds = generate_demos(cfg.env_config(), demos, static_cast<std::uint64_t>(cfg.get_size("seed")));
  const fs::path path = fs::path(c.out) / "dataset.jsonl";
  save_dataset(ds, path);
  std::cout << "wrote " << ds.demos.size() << " demos (" << ds.frame_count() << " frames) to " << path.string()
            << "\n";
  return 0;
}

int cmd_data_info(const std::string& dataset) {
  const Dataset ds = load_dataset(dataset);
  std::cout << "demos " << ds.demos.size() << "\nframes " << ds.frame_count() << "\nd_q " << ds.d_q << "\nd_f "
            << ds.d_f << "\nd_g " << ds.d_g << "\nflow " << (ds.demos.front().flow_points ? "yes" : "no") << "\n";
  return 0;
}

int cmd_flow_train(const Common& c, const std::string& dataset) {
  const Config cfg = build_config(c);
  const Dataset ds = load_dataset(dataset);
  const auto frames = pooled_flow_frames(ds);
  if (frames.empty()) fail(ErrorCode::InvalidArgument, "dataset has no flow points");
  const auto fr = train_flow_ae(frames, cfg.flow_config());
  save_codec(fr.codec, fs::path(c.out) / "codec.json");
  auto out = open_out(out_file(c, "metrics", "flow_ae.csv"));
  out << "epoch,loss\n";
  for (std::size_t e = 0; e < fr.epoch_loss.size(); ++e) out << e + 1 << ',' << fr.epoch_loss[e] << '\n';
  std::cout << "rmse_px " << reconstruction_rmse(fr.codec, frames) << "\n";
  return 0;
}

int cmd_flow_encode(const Common& c, const std::string& dataset, const std::string& codec_path) {
  build_config(c);
  Dataset ds = load_dataset(dataset);
  featurize_with_codec(ds, load_codec(codec_path));
  const fs::path path = fs::path(c.out) / "dataset.encoded.jsonl";
  save_dataset(ds, path);
  std::cout << "wrote " << path.string() << "\n";
  return 0;
}

// Input: one latent per line, 128 comma-separated values.
// Output: frame,point,u,v.
int cmd_flow_decode(const Common& c, const std::string& input, const std::string& codec_path) {
  build_config(c);
  const FlowCodec codec = load_codec(codec_path);
  std::ifstream in(input);
  if (!in) fail(ErrorCode::Io, "cannot open '" + input + "'");
  auto out = open_out(fs::path(c.out) / "decoded.csv");
  out << "frame,point,u,v\n";
  std::string line;
  std::size_t frame = 0, number = 0;
  while (std::getline(in, line)) {
    ++number;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    std::vector<double> values;
    std::stringstream ss(line);
    std::string item;
    while (std::getline(ss, item, ',')) {
      try {
        values.push_back(std::stod(item));
      } catch (const std::exception&) {
        throw ParseError(number, input + ": '" + item + "' is not a number");
      }
    }
    if (values.size() != static_cast<std::size_t>(kLatentSize)) {
      throw ParseError(number, input + ": expected " + std::to_string(kLatentSize) + " values");
    }
    const FlowPoints p = flow_points_from_feature(Eigen::Map<const Vec>(values.data(), kLatentSize), codec);
    for (Eigen::Index j = 0; j < p.rows(); ++j) out << frame << ',' << j << ',' << p(j, 0) << ',' << p(j, 1) << '\n';
    ++frame;
  }
  std::cout << "decoded " << frame << " frames\n";
  return 0;
}

int cmd_train(const Common& c, const std::string& dataset, const std::string& codec_path) {
  const Config cfg = build_config(c);
  Dataset ds = load_dataset(dataset);
  auto codec = prepare_features(ds, cfg, codec_path, c);
  prepare_dataset(ds);
  if (lift_kind_from_string(cfg.get("lift")) != LiftKind::Mlp) {
    throw UsageError("train co-trains an encoder; use 'edmd' for lift = " + cfg.get("lift"));
  }
  KoopmanModel model = train(ds, cfg.train_config(), [](const EpochReport& r) {
    std::cerr << "epoch " << r.epoch << " loss " << r.loss << " rho " << r.spectral_radius << "\n";
  });
  model.codec = codec;
  save_model(model, fs::path(c.out) / "model.kubm");
  write_training_csv(model.record, out_file(c, "metrics", "training.csv"));
  std::cout << "final_loss " << model.record.loss.back() << "\nspectral_radius "
            << model.record.spectral_radius.back() << "\n";
  return 0;
}

int cmd_edmd(const Common& c, const std::string& dataset, const std::string& codec_path, std::string lift) {
  const Config cfg = build_config(c);
  if (lift.empty()) lift = cfg.get("lift");
  LiftKind kind;
  try {
    kind = lift_kind_from_string(lift);
  } catch (const Error& e) {
    throw UsageError(e.what());
  }
  if (kind == LiftKind::Mlp) throw UsageError("edmd needs lift identity, v1, v2 or v3");
  Dataset ds = load_dataset(dataset);
  auto codec = prepare_features(ds, cfg, codec_path, c);
  prepare_dataset(ds);
  KoopmanModel model = fit_edmd_model(ds, kind, cfg.edmd_options());
  model.codec = codec;
  save_model(model, fs::path(c.out) / "model.kubm");
  write_training_csv(model.record, out_file(c, "metrics", "training.csv"));
  std::cout << "loss " << model.record.loss.back() << "\nspectral_radius " << model.record.spectral_radius.back()
            << "\n";
  return 0;
}

Vec json_vec(const nlohmann::json& j, const char* key) {
  if (!j.contains(key) || !j[key].is_array()) fail(ErrorCode::InvalidArgument, std::string("init file needs an array '") + key + "'");
  const auto v = j[key].get<std::vector<double>>();
  return Eigen::Map<const Vec>(v.data(), static_cast<Eigen::Index>(v.size()));
}

// Initial condition from {"action": [...], "feature": [...], "goal": [...]}; the
// feature lives in the model's feature space (flow latents for codec models).
int cmd_plan(const Common& c, const std::string& model_path, const std::string& init_path,
             std::optional<std::size_t> horizon) {
  const Config cfg = build_config(c);
  const KoopmanModel model = load_model(model_path);
  Vec a0, phi0;
  std::optional<Vec> goal;
  if (!init_path.empty()) {
    std::ifstream in(init_path);
    nlohmann::json j;
    try {
      in >> j;
    } catch (const nlohmann::json::exception& e) {
      throw ParseError(0, init_path + ": " + e.what());
    }
    a0 = json_vec(j, "action");
    phi0 = json_vec(j, "feature");
    if (j.contains("goal")) goal = json_vec(j, "goal");
  } else {
    Rng rng(static_cast<std::uint64_t>(cfg.get_size("seed")));
    const ToyEnv env = ToyEnv::sample(cfg.env_config(), rng);
    const Observation obs = env.observe();
    a0 = env.initial_action();
    phi0 = model_feature(model, obs);
    if (model.dims.d_g > 0) goal = obs.goal;
  }
  const Plan p = plan(model, a0, phi0, goal, horizon.value_or(cfg.get_size("env_horizon")), 0);

  auto out = open_out(out_file(c, "episodes", "plan.csv"));
  out << "index";
  for (std::size_t i = 0; i < model.dims.d_q; ++i) out << ",a" << i;
  out << "\n";
  nlohmann::json j;
  j["horizon"] = p.size() - 1;
  j["actions"] = nlohmann::json::array();
  j["features"] = nlohmann::json::array();
  for (std::size_t k = 0; k < p.size(); ++k) {
    out << k;
    for (Eigen::Index i = 0; i < p.actions[k].size(); ++i) out << ',' << p.actions[k](i);
    out << '\n';
    j["actions"].push_back(std::vector<double>(p.actions[k].begin(), p.actions[k].end()));
    j["features"].push_back(std::vector<double>(p.features[k].begin(), p.features[k].end()));
  }
  open_out(out_file(c, "", "plan.json")) << j.dump(1) << "\n";
  std::cout << "planned " << p.size() - 1 << " steps\n";
  return 0;
}

// "a:b" with both halves numeric.
std::pair<double, double> colon_pair(const std::string& text, const char* flag) {
  const auto colon = text.find(':');
  try {
    if (colon == std::string::npos) throw std::invalid_argument(text);
    std::size_t used_a = 0, used_b = 0;
    const std::string a = text.substr(0, colon), b = text.substr(colon + 1);
    const double x = std::stod(a, &used_a), y = std::stod(b, &used_b);
    if (used_a != a.size() || used_b != b.size()) throw std::invalid_argument(text);
    return {x, y};
  } catch (const std::logic_error&) {
    throw UsageError(std::string(flag) + " expects a:b, got '" + text + "'");
  }
}

struct RunArgs {
  std::size_t episodes = 10;
  std::string mode = "open-loop";
  std::size_t calibrate = 0;
  double occlusion = 0.0;
  std::string occlude;  // a:b
  std::string perturb;  // step:distance
};

int cmd_run(const Common& c, const std::string& model_path, const RunArgs& args) {
  Config cfg = build_config(c);
  const std::size_t episodes = args.episodes, calibrate = args.calibrate;
  const std::string& mode_name = args.mode;
  if (!args.perturb.empty()) {
    const auto [step, distance] = colon_pair(args.perturb, "--perturb");
    if (step < 0 || distance < 0 || step != std::floor(step)) throw UsageError("--perturb needs step >= 0 and distance >= 0");
    cfg.set("perturb_step", std::to_string(static_cast<std::size_t>(step)));
    cfg.set("perturb_distance", args.perturb.substr(args.perturb.find(':') + 1));
    cfg.write_effective(c.out);
  }
  const KoopmanModel model = load_model(model_path);
  ExecutionMode mode;
  try {
    mode = execution_mode_from_string(mode_name);
  } catch (const Error& e) {
    throw UsageError(e.what());
  }
  if (calibrate > 0 && mode == ExecutionMode::Monitored) {
    SuiteOptions nominal = suite_options(cfg, model, mode, calibrate);
    nominal.perturb_distance = 0.0;
    nominal.seed = Rng::derive(nominal.seed, 0xca11b);
    nominal.episode.trigger.threshold = std::numeric_limits<double>::infinity();
    std::vector<double> errors;
    for (const auto& r : run_suite(model, nominal))
      for (const auto& log : r.logs)
        if (log.error) errors.push_back(*log.error);
    const double tau = calibrate_threshold(errors);
    std::ostringstream v;
    v.precision(17);
    v << tau;
    cfg.set("trigger_threshold", v.str());
    cfg.write_effective(c.out);
    std::cerr << "calibrated trigger_threshold " << tau << "\n";
  }
  SuiteOptions s = suite_options(cfg, model, mode, episodes);
  if (args.occlusion > 0.0) s.episode.occlusions = occlusion_fraction(args.occlusion, s.episode.max_steps);
  if (!args.occlude.empty()) {
    const auto [first, last] = colon_pair(args.occlude, "--occlude");
    if (first < 1 || last < first || first != std::floor(first) || last != std::floor(last)) {
      throw UsageError("--occlude needs whole steps 1 <= a <= b");
    }
    for (const auto& o : occlude(static_cast<std::size_t>(first), static_cast<std::size_t>(last))) s.episode.occlusions.push_back(o);
  }
  const auto results = run_suite(model, s);
  auto summary = open_out(out_file(c, "metrics", "episodes.csv"));
  summary << "episode,success,final_distance,replans\n";
  for (std::size_t i = 0; i < results.size(); ++i) {
    std::ostringstream name;
    name << "episode_" << std::setw(3) << std::setfill('0') << i << ".csv";
    write_episode_csv(results[i], out_file(c, "episodes", name.str()));
    summary << i << ',' << results[i].success << ',' << results[i].final_distance << ','
            << results[i].replans.size() << '\n';
  }
  std::cout << "success_rate " << success_rate(results) << "\n";
  return 0;
}

int cmd_ablate(const Common& c, const std::string& dataset, const std::string& codec_path) {
  const Config cfg = build_config(c);
  Dataset ds = load_dataset(dataset);
  prepare_features(ds, cfg, codec_path, c);
  prepare_dataset(ds);
  const AblationReport report = ablation_suite(ds, cfg.train_config(), [](const std::string& name, const EpochReport& r) {
    std::cerr << name << " epoch " << r.epoch << " loss " << r.loss << " rho " << r.spectral_radius << "\n";
  });
  open_out(out_file(c, "metrics", "ablation.csv")) << report.csv();
  open_out(out_file(c, "metrics", "ablation_summary.json")) << report.summary_json();
  for (const auto& run : report.runs) std::cout << run.name << " final_loss " << run.record.loss.back() << "\n";
  std::cout << "best " << report.runs[report.best()].name << "\n";
  return 0;
}

int cmd_metrics(const Common& c, const std::string& model_path, std::size_t episodes, const std::string& mode_name,
                std::size_t bins) {
  const Config cfg = build_config(c);
  const KoopmanModel model = load_model(model_path);
  ExecutionMode mode;
  try {
    mode = execution_mode_from_string(mode_name);
  } catch (const Error& e) {
    throw UsageError(e.what());
  }
  const auto results = run_suite(model, suite_options(cfg, model, mode, episodes));

  std::vector<std::vector<Vec>> predicted, observed;
  for (const auto& r : results) {
    predicted.push_back(r.predicted_features);
    observed.push_back(r.observed_features);
  }
  const auto cos = cosine_curve(predicted, observed, bins);
  {
    auto out = open_out(out_file(c, "metrics", "cosine.csv"));
    out << "bin,cosine\n";
    for (std::size_t b = 0; b < cos.size(); ++b) out << b << ',' << cos[b] << '\n';
  }
  if (model.codec) {
    std::vector<FlowRollout> rollouts;
    for (const auto& r : results) rollouts.push_back(flow_rollout(r, *model.codec));
    const auto curves = rmse_by_percentile(rollouts, bins);
    auto out = open_out(out_file(c, "metrics", "rmse_percentile.csv"));
    out << "bin,success,failure\n";
    for (std::size_t b = 0; b < bins; ++b) {
      out << b << ',';
      if (!curves.success.empty()) out << curves.success[b];
      out << ',';
      if (!curves.failure.empty()) out << curves.failure[b];
      out << '\n';
    }
    std::cout << "successful " << curves.success_count << "\nfailed " << curves.failure_count << "\n";
    if (!curves.success.empty() && !curves.failure.empty()) {
      std::cout << "failure_dominance " << dominance_fraction(curves.failure, curves.success) << "\n";
    }
  }
  const TimingStats t = timing_probe(model, 10, cfg.get_size("env_horizon"), static_cast<std::uint64_t>(cfg.get_size("seed")));
  open_out(out_file(c, "metrics", "timing.csv")) << "mean_ms,std_ms,queries\n"
                                                  << t.mean_ms << ',' << t.std_ms << ',' << t.queries << '\n';
  std::cout << "success_rate " << success_rate(results) << "\nmean_query_ms " << t.mean_ms << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Koopman unified behavioral model toolkit"};
  app.require_subcommand(1);
  int status = 0;
  std::function<int()> action;

  // Values bound to options; each subcommand reads only its own.
  Common common;
  std::string dataset, codec, model, lift, mode = "open-loop", input;
  std::size_t demos = 10, episodes = 10, bins = 100;
  std::optional<std::size_t> horizon;
  std::string init;
  RunArgs run_args;

  app.add_subcommand("version", "print the version")->callback([&] {
    action = [] {
      std::cout << "kubm " << kVersion << "\n";
      return 0;
    };
  });

  auto add_gen = [&](CLI::App* sub) {
    add_common(sub, common);
    sub->add_option("--demos", demos, "number of demonstrations")->capture_default_str();
    sub->callback([&] { action = [&] { return cmd_data_gen(common, demos); }; });
  };
  auto add_run = [&](CLI::App* sub) {
    add_common(sub, common);
    sub->add_option("--model", model, "model file")->required()->check(CLI::ExistingFile);
    sub->add_option("--episodes", run_args.episodes, "episodes in the suite")->capture_default_str();
    sub->add_option("--mode", run_args.mode, "open-loop | monitored")->capture_default_str();
    sub->add_option("--calibrate", run_args.calibrate, "nominal episodes used to set trigger_threshold (0 keeps the setting)");
    sub->add_option("--occlusion", run_args.occlusion, "blacked-out fraction of each episode, from step 1")
        ->check(CLI::Range(0.0, 0.99));
    sub->add_option("--occlude", run_args.occlude, "black out steps a through b (a:b)");
    sub->add_option("--perturb", run_args.perturb, "goal jump at a step, at least a distance away (step:distance)");
    sub->callback([&] { action = [&] { return cmd_run(common, model, run_args); }; });
  };
  auto add_ablate = [&](CLI::App* sub) {
    add_common(sub, common);
    sub->add_option("--dataset", dataset, "dataset file")->required()->check(CLI::ExistingFile);
    sub->add_option("--codec", codec, "flow codec file")->check(CLI::ExistingFile);
    sub->callback([&] { action = [&] { return cmd_ablate(common, dataset, codec); }; });
  };
  auto add_metrics = [&](CLI::App* sub) {
    add_common(sub, common);
    sub->add_option("--model", model, "model file")->required()->check(CLI::ExistingFile);
    sub->add_option("--episodes", episodes, "episodes in the suite")->capture_default_str();
    sub->add_option("--mode", mode, "open-loop | monitored")->capture_default_str();
    sub->add_option("--bins", bins, "percentile bins")->capture_default_str()->check(CLI::PositiveNumber);
    sub->callback([&] { action = [&] { return cmd_metrics(common, model, episodes, mode, bins); }; });
  };

  auto* data = app.add_subcommand("data", "generate or inspect demonstration datasets");
  data->require_subcommand(1);
  add_gen(data->add_subcommand("gen", "scripted demonstrations on a toy task"));
  auto* info = data->add_subcommand("info", "summarize a dataset");
  info->add_option("--dataset", dataset, "dataset file")->required()->check(CLI::ExistingFile);
  info->callback([&] { action = [&] { return cmd_data_info(dataset); }; });

  auto* train_cmd = app.add_subcommand("train", "co-train encoder and Koopman matrix");
  add_common(train_cmd, common);
  train_cmd->add_option("--dataset", dataset, "dataset file")->required()->check(CLI::ExistingFile);
  train_cmd->add_option("--codec", codec, "flow codec file")->check(CLI::ExistingFile);
  train_cmd->callback([&] { action = [&] { return cmd_train(common, dataset, codec); }; });

  auto* edmd = app.add_subcommand("edmd", "closed-form fit with a fixed lifting");
  add_common(edmd, common);
  edmd->add_option("--dataset", dataset, "dataset file")->required()->check(CLI::ExistingFile);
  edmd->add_option("--codec", codec, "flow codec file")->check(CLI::ExistingFile);
  edmd->add_option("--lift", lift, "identity | v1 | v2 | v3 (default: setting 'lift')");
  edmd->callback([&] { action = [&] { return cmd_edmd(common, dataset, codec, lift); }; });

  auto* plan_cmd = app.add_subcommand("plan", "roll out a plan from a sampled initial state");
  add_common(plan_cmd, common);
  plan_cmd->add_option("--model", model, "model file")->required()->check(CLI::ExistingFile);
  plan_cmd->add_option("--init", init, "JSON initial condition {action, feature, goal?}; default: a sampled env")
      ->check(CLI::ExistingFile);
  plan_cmd->add_option("--horizon", horizon, "plan length (default: setting 'env_horizon')");
  plan_cmd->callback([&] { action = [&] { return cmd_plan(common, model, init, horizon); }; });

  add_run(app.add_subcommand("run", "execute an episode suite"));
  add_ablate(app.add_subcommand("ablate", "identity-init / separate-LR ablation"));
  add_metrics(app.add_subcommand("metrics", "prediction-quality curves and query timing"));

  auto* bench = app.add_subcommand("bench", "benchmark harness");
  bench->require_subcommand(1);
  add_gen(bench->add_subcommand("gen", "scripted demonstrations on a toy task"));
  add_run(bench->add_subcommand("run", "execute an episode suite"));
  add_ablate(bench->add_subcommand("ablate", "identity-init / separate-LR ablation"));
  add_metrics(bench->add_subcommand("metrics", "prediction-quality curves and query timing"));

  auto* flow = app.add_subcommand("flow-ae", "flow-point autoencoder");
  flow->require_subcommand(1);
  auto* ftrain = flow->add_subcommand("train", "fit the codec on a dataset's flow frames");
  add_common(ftrain, common);
  ftrain->add_option("--dataset", dataset, "dataset file")->required()->check(CLI::ExistingFile);
  ftrain->callback([&] { action = [&] { return cmd_flow_train(common, dataset); }; });
  auto* fenc = flow->add_subcommand("encode", "replace dataset features by codec latents");
  add_common(fenc, common);
  fenc->add_option("--dataset", dataset, "dataset file")->required()->check(CLI::ExistingFile);
  fenc->add_option("--codec", codec, "flow codec file")->required()->check(CLI::ExistingFile);
  fenc->callback([&] { action = [&] { return cmd_flow_encode(common, dataset, codec); }; });
  auto* fdec = flow->add_subcommand("decode", "decode latents (CSV rows of 128) to points");
  add_common(fdec, common);
  fdec->add_option("--input", input, "latent CSV")->required()->check(CLI::ExistingFile);
  fdec->add_option("--codec", codec, "flow codec file")->required()->check(CLI::ExistingFile);
  fdec->callback([&] { action = [&] { return cmd_flow_decode(common, input, codec); }; });

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    std::cerr << "\n" << app.help();
    return 2;
  }

  try {
    status = action ? action() : 2;
  } catch (const UsageError& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return 2;
  } catch (const ParseError& e) {
    std::cerr << "error [" << to_string(e.code()) << "] line " << e.line() << ": " << e.what() << "\n";
    return 1;
  } catch (const Error& e) {
    std::cerr << "error [" << to_string(e.code()) << "]: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return status;
}
