#include <doctest.h>

#include <cmath>
#include <sstream>

#include "kubm/error.hpp"
#include "kubm/random.hpp"
#include "kubm/trajdata.hpp"

using namespace kubm;

namespace {

Vec vec(std::initializer_list<double> v) {
  Vec out(static_cast<Eigen::Index>(v.size()));
  Eigen::Index i = 0;
  for (double x : v) out(i++) = x;
  return out;
}

ErrorCode code_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("no error raised");
  return ErrorCode::Io;
}

Demonstration random_demo(Rng& rng, std::size_t len, Eigen::Index dq, Eigen::Index df) {
  Demonstration d;
  d.initial_joints = Vec::NullaryExpr(dq, [&] { return rng.uniform(-1, 1); });
  for (std::size_t t = 0; t < len; ++t) {
    d.actions.push_back(Vec::NullaryExpr(dq, [&] { return rng.uniform(-1, 1); }));
    d.features.push_back(Vec::NullaryExpr(df, [&] { return rng.uniform(-3, 3); }));
  }
  return d;
}

}  // namespace

TEST_CASE("two-demo file loads with declared dimensions") {
  std::istringstream in(
      R"({"initial_joints":[0,0,0],"actions":[[1,2,3],[4,5,6]],"features":[[1,0,0,0],[0,1,0,0]]})"
      "\n"
      R"({"initial_joints":[1,1,1],"actions":[[1,1,1]],"features":[[2,2,2,2]]})"
      "\n");
  const Dataset ds = read_dataset(in);
  CHECK(ds.demos.size() == 2);
  CHECK(ds.d_q == 3);
  CHECK(ds.d_f == 4);
  CHECK(ds.d_g == 0);
  CHECK(ds.frame_count() == 3);
}

TEST_CASE("mismatched action widths across demos are rejected") {
  std::istringstream in(
      R"({"initial_joints":[0,0,0],"actions":[[1,2,3]],"features":[[1]]})"
      "\n"
      R"({"initial_joints":[0,0,0,0],"actions":[[1,2,3,4]],"features":[[1]]})"
      "\n");
  CHECK(code_of([&] { read_dataset(in); }) == ErrorCode::DimensionMismatch);
}

TEST_CASE("empty file is an empty dataset error") {
  std::istringstream in("");
  CHECK(code_of([&] { read_dataset(in); }) == ErrorCode::EmptyDataset);
}

TEST_CASE("malformed JSON reports the line") {
  std::istringstream in(R"({"initial_joints":[0],"actions":[[1]],"features":[[1]]})"
                        "\n{not json\n");
  try {
    read_dataset(in);
    FAIL("expected ParseError");
  } catch (const ParseError& e) {
    CHECK(e.line() == 2);
  }
}

TEST_CASE("wrong flow point count is rejected") {
  std::ostringstream row;
  row << R"({"initial_joints":[0],"actions":[[1]],"features":[[1]],"flow_points":[[)";
  for (int i = 0; i < 10; ++i) row << (i ? "," : "") << "[1,2]";
  row << "]]}\n";
  std::istringstream in(row.str());
  CHECK(code_of([&] { read_dataset(in); }) == ErrorCode::WrongPointCount);
}

TEST_CASE("write then read round-trips exactly") {
  Rng rng(11);
  Dataset ds;
  ds.d_q = 3;
  ds.d_f = 5;
  for (int i = 0; i < 4; ++i) ds.demos.push_back(random_demo(rng, 3 + static_cast<std::size_t>(i), 3, 5));
  std::stringstream io;
  write_dataset(ds, io);
  const Dataset back = read_dataset(io);
  REQUIRE(back.demos.size() == ds.demos.size());
  for (std::size_t i = 0; i < ds.demos.size(); ++i) {
    CHECK(back.demos[i].initial_joints == ds.demos[i].initial_joints);
    for (std::size_t t = 0; t < ds.demos[i].length(); ++t) {
      CHECK(back.demos[i].actions[t] == ds.demos[i].actions[t]);
      CHECK(back.demos[i].features[t] == ds.demos[i].features[t]);
    }
  }
}

TEST_CASE("augment_initial prepends the auxiliary frame") {
  Demonstration d;
  d.initial_joints = vec({0.1, 0.2});
  d.actions = {vec({1, 1}), vec({2, 2}), vec({3, 3})};
  d.features = {vec({5}), vec({6}), vec({7})};
  const Demonstration a = augment_initial(d);
  CHECK(a.length() == 4);
  CHECK(a.actions[0] == vec({0.1, 0.2}));
  CHECK(a.features[0] == a.features[1]);
  for (std::size_t t = 0; t < 3; ++t) {
    CHECK(a.actions[t + 1] == d.actions[t]);
    CHECK(a.features[t + 1] == d.features[t]);
  }
  CHECK(code_of([&] { augment_initial(a); }) == ErrorCode::AlreadyAugmented);
}

TEST_CASE("augmenting a single-frame demo duplicates the feature") {
  Demonstration d;
  d.initial_joints = vec({0.0});
  d.actions = {vec({1})};
  d.features = {vec({4, 2})};
  const Demonstration a = augment_initial(d);
  CHECK(a.length() == 2);
  CHECK(a.features[0] == a.features[1]);
}

TEST_CASE("augmentation property: length + 1, frames preserved in order") {
  Rng rng(12);
  for (int trial = 0; trial < 100; ++trial) {
    const Demonstration d = random_demo(rng, 1 + rng.below(8), 1 + static_cast<Eigen::Index>(rng.below(4)),
                                        1 + static_cast<Eigen::Index>(rng.below(4)));
    const Demonstration a = augment_initial(d);
    REQUIRE(a.length() == d.length() + 1);
    CHECK(a.actions.front() == d.initial_joints);
    for (std::size_t t = 0; t < d.length(); ++t) {
      CHECK(a.actions[t + 1] == d.actions[t]);
      CHECK(a.features[t + 1] == d.features[t]);
    }
  }
}

TEST_CASE("rescale of constant norms is their ratio") {
  Dataset ds;
  ds.d_q = 2;
  ds.d_f = 2;
  Demonstration d;
  d.initial_joints = vec({0, 0});
  d.actions = {vec({2, 0}), vec({0, 2})};
  d.features = {vec({4, 0}), vec({0, -4})};
  ds.demos = {d};
  CHECK(compute_rescale(ds) == 0.5);
  CHECK(*ds.rescale_factor == 0.5);
}

TEST_CASE("rescale is 1 when features equal actions") {
  Rng rng(13);
  Dataset ds;
  ds.d_q = ds.d_f = 3;
  for (int i = 0; i < 3; ++i) {
    Demonstration d = random_demo(rng, 5, 3, 3);
    d.features = d.actions;
    ds.demos.push_back(d);
  }
  CHECK(compute_rescale(ds) == doctest::Approx(1.0).epsilon(1e-15));
}

TEST_CASE("rescale matches a two-pass mean-of-norms oracle") {
  Rng rng(14);
  Dataset ds;
  ds.d_q = 2;
  ds.d_f = 6;
  for (int i = 0; i < 3; ++i) ds.demos.push_back(random_demo(rng, 4 + static_cast<std::size_t>(i), 2, 6));
  double sa = 0, sf = 0, n = 0;
  for (const auto& d : ds.demos)
    for (std::size_t t = 0; t < d.length(); ++t) {
      double a2 = 0, f2 = 0;
      for (Eigen::Index k = 0; k < d.actions[t].size(); ++k) a2 += d.actions[t][k] * d.actions[t][k];
      for (Eigen::Index k = 0; k < d.features[t].size(); ++k) f2 += d.features[t][k] * d.features[t][k];
      sa += std::sqrt(a2);
      sf += std::sqrt(f2);
      n += 1;
    }
  CHECK(compute_rescale(ds) == doctest::Approx((sa / n) / (sf / n)).epsilon(1e-13));
}

TEST_CASE("rescale rejects all-zero features and empty datasets") {
  Dataset ds;
  CHECK(code_of([&] { compute_rescale(ds); }) == ErrorCode::EmptyDataset);
  Demonstration d;
  d.initial_joints = vec({0});
  d.actions = {vec({1})};
  d.features = {vec({0, 0})};
  ds.demos = {d};
  ds.d_q = 1;
  ds.d_f = 2;
  CHECK(code_of([&] { compute_rescale(ds); }) == ErrorCode::DegenerateScale);
}

TEST_CASE("behavioral_state concatenates action and scaled feature") {
  CHECK(behavioral_state(vec({1, 0}), vec({2, 2}), std::nullopt, 0.5) == vec({1, 0, 1, 1}));
  CHECK(behavioral_state(vec({3, 4}), vec({0, 0, 0}), std::nullopt, 1.0) == vec({3, 4, 0, 0, 0}));
  const Vec with_goal = behavioral_state(vec({1, 2, 3}), vec({1, 1}), vec({4, 6}), 0.5);
  CHECK(with_goal.size() == 3 + 2 + 2);
  CHECK(with_goal.tail(2) == vec({2, 3}));
}

TEST_CASE("goal-conditioned demos keep their goal through a round trip") {
  std::istringstream in(R"({"initial_joints":[0],"actions":[[1],[2]],"features":[[1],[2]],"goal":[0.5,0.25]})"
                        "\n");
  const Dataset ds = read_dataset(in);
  CHECK(ds.d_g == 2);
  REQUIRE(ds.demos[0].goal);
  CHECK(behavioral_state(ds.demos[0], 1, 2.0) == vec({2, 4, 1, 0.5}));
}
