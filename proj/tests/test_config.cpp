#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "kubm/config.hpp"
#include "kubm/error.hpp"

using namespace kubm;

TEST_CASE("defaults cover every key") {
  const Config c;
  for (const auto& k : config_keys()) CHECK(c.get(k.key) == k.default_value);
  const TrainConfig t = c.train_config();
  CHECK(t.encoder_lr == 5e-4);
  CHECK(t.koopman_lr == 5e-5);
  CHECK(t.horizon == 15);
  CHECK(t.hidden == std::vector<std::size_t>{128, 256});
  CHECK(t.lifting_dim == 256);
  CHECK(t.lr_decay == 1.0);
}

TEST_CASE("parse: comments, blank lines and whitespace") {
  Config c;
  std::istringstream in("# header\n\n  encoder_lr = 1e-3   # inline\nhidden=64, 32\nenv_kind = reach-grasp-move\n");
  c.parse(in);
  CHECK(c.get_double("encoder_lr") == 1e-3);
  CHECK(c.get_list("hidden") == std::vector<std::size_t>{64, 32});
  CHECK(c.env_config().kind == EnvKind::ReachGraspMove);
}

TEST_CASE("parse errors carry the line number") {
  Config c;
  std::istringstream unknown("seed = 1\n\nlerning_rate = 3\n");
  try {
    c.parse(unknown);
    FAIL("expected ParseError");
  } catch (const ParseError& e) {
    CHECK(e.line() == 3);
  }
  std::istringstream no_eq("seed 1\n");
  CHECK_THROWS_AS(c.parse(no_eq), ParseError);
}

TEST_CASE("set and typed getters reject bad input") {
  Config c;
  CHECK_THROWS_AS(c.set("nope", "1"), Error);
  c.set("epochs", "12x");
  CHECK_THROWS_AS(c.get_int("epochs"), Error);
  c.set("encoder_lr", "fast");
  CHECK_THROWS_AS(c.get_double("encoder_lr"), Error);
  c.set("clip", "maybe");
  CHECK_THROWS_AS(c.get_bool("clip"), Error);
  c.set("hidden", "64,,32");
  CHECK_THROWS_AS(c.get_list("hidden"), Error);
  c.set("seed", "-1");
  CHECK_THROWS_AS(c.get_size("seed"), Error);
  c.set("trigger_kind", "sometimes");
  CHECK_THROWS_AS(c.trigger_policy(), Error);
  c.set("trigger_kind", "jump");
  c.set("trigger_threshold", "0");
  CHECK_THROWS_AS(c.trigger_policy(), Error);
}

TEST_CASE("converters map keys onto the structs") {
  Config c;
  c.set("seed", "17");
  c.set("separate_lr", "no");
  c.set("detach_targets", "false");
  c.set("lr_decay", "0.95");
  c.set("obs_mode", "flow");
  c.set("object_noise", "0.02");
  c.set("flow_epochs", "7");
  c.set("trigger_kind", "jump");
  c.set("trigger_threshold", "0.5");
  c.set("trigger_window", "3");
  c.set("edmd_ridge", "1e-6");
  const TrainConfig t = c.train_config();
  CHECK(t.seed == 17);
  CHECK_FALSE(t.separate_lr);
  CHECK_FALSE(t.detach_targets);
  CHECK(t.lr_decay == 0.95);
  const EnvConfig e = c.env_config();
  CHECK(e.obs == ObsMode::Flow);
  CHECK(e.object_noise == 0.02);
  CHECK(c.flow_config().epochs == 7);
  CHECK(c.flow_config().seed == 17);
  const TriggerPolicy p = c.trigger_policy();
  CHECK(p.kind == TriggerPolicy::Kind::Jump);
  CHECK(p.threshold == 0.5);
  CHECK(p.window == 3);
  CHECK(c.edmd_options().ridge == 1e-6);
}

TEST_CASE("dump round-trips through parse and write_effective") {
  Config a;
  a.set("epochs", "3");
  a.set("hidden", "8,8");
  Config b;
  std::istringstream in(a.dump());
  b.parse(in);
  CHECK(b.dump() == a.dump());

  const auto dir = std::filesystem::temp_directory_path() / "kubm_test_config";
  std::filesystem::remove_all(dir);
  a.write_effective(dir);
  Config c;
  c.load_file(dir / "config.effective");
  CHECK(c.dump() == a.dump());
  std::filesystem::remove_all(dir);
  CHECK_THROWS_AS(c.load_file(dir / "missing.conf"), Error);
}
