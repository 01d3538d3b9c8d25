#include "kubm/config.hpp"

#include <charconv>
#include <fstream>
#include <sstream>

#include "kubm/error.hpp"

namespace kubm {

const std::vector<ConfigKey>& config_keys() {
  static const std::vector<ConfigKey> keys = {
      {"seed", "0", "master seed for every random stream"},
      {"lift", "mlp", "mlp | identity | v1 | v2 | v3"},
      {"encoder_lr", "5e-4", "encoder learning rate"},
      {"koopman_lr", "5e-5", "Koopman matrix learning rate"},
      {"separate_lr", "true", "false: K uses encoder_lr"},
      {"horizon", "15", "coherence-loss horizon H"},
      {"identity_init", "true", "false: K ~ U(-1/sqrt(d_z), 1/sqrt(d_z))"},
      {"clip", "true", "global gradient-norm clipping"},
      {"clip_max_norm", "1.0", "clipping threshold"},
      {"epochs", "100", "training epochs"},
      {"batch_size", "32", "windows per mini-batch"},
      {"lr_decay", "1.0", "per-epoch factor on both learning rates"},
      {"hidden", "128,256", "encoder hidden widths"},
      {"lifting_dim", "256", "encoder output size d_psi"},
      {"detach_targets", "true", "treat z_{t+l} targets as constants"},
      {"truncate_tail", "true", "tail anchors use a shortened horizon"},
      {"edmd_ridge", "0", "ridge term for closed-form fits"},
      {"env_kind", "linear-coupled", "linear-coupled | reach-grasp-move | pendulum-push"},
      {"obs_mode", "pose", "pose | flow"},
      {"env_horizon", "60", "steps per demonstration and episode"},
      {"success_radius", "0.05", "object-goal distance counted as success"},
      {"goal_conditioned", "false", "emit the goal as a separate field"},
      {"object_noise", "0", "std of per-step object noise"},
      {"metric", "auto", "flow-centroid | cosine | auto (flow-centroid when the model has a codec)"},
      {"trigger_kind", "persistent", "persistent | jump"},
      {"trigger_threshold", "1.0", "trigger threshold tau"},
      {"trigger_persistence", "2", "consecutive exceedances m"},
      {"trigger_window", "5", "jump detector median window"},
      {"perturb_step", "20", "step of the goal jump"},
      {"perturb_distance", "0", "minimum goal jump distance (0 disables)"},
      {"flow_epochs", "200", "flow autoencoder epochs"},
      {"flow_batch_size", "64", "flow autoencoder batch size"},
      {"flow_lr", "1e-2", "flow autoencoder learning rate"},
      {"flow_lr_decay", "0.99", "per-epoch learning-rate factor"},
  };
  return keys;
}

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

[[noreturn]] void bad_value(const std::string& key, const std::string& value, const char* what) {
  fail(ErrorCode::InvalidArgument, "config key '" + key + "': '" + value + "' is not " + what);
}

}  // namespace

Config::Config() {
  for (const auto& k : config_keys()) values_[k.key] = k.default_value;
}

void Config::set(const std::string& key, const std::string& value) {
  auto it = values_.find(key);
  if (it == values_.end()) fail(ErrorCode::InvalidArgument, "unknown config key '" + key + "'");
  it->second = value;
}

void Config::parse(std::istream& in, const std::string& source) {
  std::string line;
  std::size_t number = 0;
  while (std::getline(in, line)) {
    ++number;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ParseError(number, source + ": expected 'key = value'");
    const std::string key = trim(line.substr(0, eq));
    if (!values_.count(key)) throw ParseError(number, source + ": unknown config key '" + key + "'");
    values_[key] = trim(line.substr(eq + 1));
  }
}

void Config::load_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorCode::Io, "cannot open config '" + path.string() + "'");
  parse(in, path.string());
}

const std::string& Config::get(const std::string& key) const {
  auto it = values_.find(key);
  if (it == values_.end()) fail(ErrorCode::InvalidArgument, "unknown config key '" + key + "'");
  return it->second;
}

double Config::get_double(const std::string& key) const {
  const std::string& v = get(key);
  try {
    std::size_t used = 0;
    const double d = std::stod(v, &used);
    if (used != v.size()) bad_value(key, v, "a number");
    return d;
  } catch (const std::logic_error&) {
    bad_value(key, v, "a number");
  }
}

long Config::get_int(const std::string& key) const {
  const std::string& v = get(key);
  long out = 0;
  const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || ptr != v.data() + v.size()) bad_value(key, v, "an integer");
  return out;
}

std::size_t Config::get_size(const std::string& key) const {
  const long v = get_int(key);
  if (v < 0) bad_value(key, get(key), "non-negative");
  return static_cast<std::size_t>(v);
}

bool Config::get_bool(const std::string& key) const {
  const std::string& v = get(key);
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  bad_value(key, v, "a boolean");
}

std::vector<std::size_t> Config::get_list(const std::string& key) const {
  std::vector<std::size_t> out;
  std::stringstream ss(get(key));
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    std::size_t n = 0;
    const auto [ptr, ec] = std::from_chars(item.data(), item.data() + item.size(), n);
    if (item.empty() || ec != std::errc() || ptr != item.data() + item.size()) {
      bad_value(key, get(key), "a comma-separated list of sizes");
    }
    out.push_back(n);
  }
  return out;
}

std::string Config::dump() const {
  std::string out;
  for (const auto& [k, v] : values_) out += k + " = " + v + "\n";
  return out;
}

void Config::write_effective(const std::filesystem::path& dir) const {
  if (!dir.empty()) std::filesystem::create_directories(dir);
  std::ofstream out(dir / "config.effective");
  if (!out) fail(ErrorCode::Io, "cannot write config.effective in '" + dir.string() + "'");
  out << dump();
}

TrainConfig Config::train_config() const {
  TrainConfig c;
  c.encoder_lr = get_double("encoder_lr");
  c.koopman_lr = get_double("koopman_lr");
  c.separate_lr = get_bool("separate_lr");
  c.horizon = static_cast<int>(get_int("horizon"));
  c.identity_init = get_bool("identity_init");
  c.clip = get_bool("clip");
  c.clip_max_norm = get_double("clip_max_norm");
  c.epochs = static_cast<int>(get_int("epochs"));
  c.batch_size = static_cast<int>(get_int("batch_size"));
  c.seed = static_cast<std::uint64_t>(get_size("seed"));
  c.hidden = get_list("hidden");
  c.lifting_dim = get_size("lifting_dim");
  c.detach_targets = get_bool("detach_targets");
  c.truncate_tail = get_bool("truncate_tail");
  c.lr_decay = get_double("lr_decay");
  return c;
}

FlowTrainConfig Config::flow_config() const {
  FlowTrainConfig c;
  c.epochs = static_cast<int>(get_int("flow_epochs"));
  c.batch_size = static_cast<int>(get_int("flow_batch_size"));
  c.learning_rate = get_double("flow_lr");
  c.lr_decay = get_double("flow_lr_decay");
  c.seed = static_cast<std::uint64_t>(get_size("seed"));
  return c;
}

EnvConfig Config::env_config() const {
  EnvConfig c;
  c.kind = env_kind_from_string(get("env_kind"));
  c.obs = obs_mode_from_string(get("obs_mode"));
  c.horizon = get_size("env_horizon");
  c.success_radius = get_double("success_radius");
  c.goal_conditioned = get_bool("goal_conditioned");
  c.object_noise = get_double("object_noise");
  return c;
}

TriggerPolicy Config::trigger_policy() const {
  TriggerPolicy p;
  const std::string& kind = get("trigger_kind");
  if (kind == "persistent") {
    p.kind = TriggerPolicy::Kind::Persistent;
  } else if (kind == "jump") {
    p.kind = TriggerPolicy::Kind::Jump;
  } else {
    bad_value("trigger_kind", kind, "persistent or jump");
  }
  p.threshold = get_double("trigger_threshold");
  p.persistence = static_cast<int>(get_int("trigger_persistence"));
  p.window = static_cast<int>(get_int("trigger_window"));
  if (!(p.threshold > 0.0) || p.persistence < 1 || p.window < 1) {
    fail(ErrorCode::InvalidArgument, "trigger needs threshold > 0, persistence >= 1, window >= 1");
  }
  return p;
}

EdmdOptions Config::edmd_options() const { return EdmdOptions{get_double("edmd_ridge")}; }

}  // namespace kubm
