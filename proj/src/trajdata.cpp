#include "kubm/trajdata.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <istream>
#include <numeric>
#include <ostream>
#include <string>

#include <json.hpp>

#include "kubm/error.hpp"

namespace kubm {

using nlohmann::json;

namespace {

Vec vector_from_json(const json& j, const char* what) {
  if (!j.is_array()) throw std::invalid_argument(std::string(what) + " must be an array");
  Vec v(static_cast<Eigen::Index>(j.size()));
  for (std::size_t i = 0; i < j.size(); ++i) {
    if (!j[i].is_number()) throw std::invalid_argument(std::string(what) + " must hold numbers");
    v(static_cast<Eigen::Index>(i)) = j[i].get<double>();
  }
  return v;
}

std::vector<Vec> sequence_from_json(const json& j, const char* what) {
  if (!j.is_array()) throw std::invalid_argument(std::string(what) + " must be an array of arrays");
  std::vector<Vec> out;
  out.reserve(j.size());
  for (const auto& row : j) out.push_back(vector_from_json(row, what));
  return out;
}

FlowPoints frame_from_json(const json& j) {
  if (!j.is_array()) throw std::invalid_argument("flow frame must be an array");
  FlowPoints p(static_cast<Eigen::Index>(j.size()), 2);
  for (std::size_t i = 0; i < j.size(); ++i) {
    const json& pt = j[i];
    if (!pt.is_array() || pt.size() != 2) throw std::invalid_argument("flow point must be [u, v]");
    p(static_cast<Eigen::Index>(i), 0) = pt[0].get<double>();
    p(static_cast<Eigen::Index>(i), 1) = pt[1].get<double>();
  }
  return p;
}

json vector_to_json(const Vec& v) {
  json j = json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) j.push_back(v(i));
  return j;
}

json demo_to_json(const Demonstration& d) {
  json j;
  j["initial_joints"] = vector_to_json(d.initial_joints);
  json actions = json::array();
  for (const auto& a : d.actions) actions.push_back(vector_to_json(a));
  j["actions"] = std::move(actions);
  json features = json::array();
  for (const auto& f : d.features) features.push_back(vector_to_json(f));
  j["features"] = std::move(features);
  if (d.flow_points) {
    json frames = json::array();
    for (const auto& frame : *d.flow_points) {
      json pts = json::array();
      for (Eigen::Index i = 0; i < frame.rows(); ++i) pts.push_back({frame(i, 0), frame(i, 1)});
      frames.push_back(std::move(pts));
    }
    j["flow_points"] = std::move(frames);
  }
  if (d.goal) j["goal"] = vector_to_json(*d.goal);
  if (d.augmented) j["augmented"] = true;
  return j;
}

Demonstration demo_from_json(const json& j) {
  if (!j.is_object()) throw std::invalid_argument("record must be a JSON object");
  for (const char* key : {"initial_joints", "actions", "features"}) {
    if (!j.contains(key)) throw std::invalid_argument(std::string("missing key '") + key + "'");
  }
  Demonstration d;
  d.initial_joints = vector_from_json(j.at("initial_joints"), "initial_joints");
  d.actions = sequence_from_json(j.at("actions"), "actions");
  d.features = sequence_from_json(j.at("features"), "features");
  if (j.contains("flow_points")) {
    const json& frames = j.at("flow_points");
    if (!frames.is_array()) throw std::invalid_argument("flow_points must be an array");
    std::vector<FlowPoints> out;
    out.reserve(frames.size());
    for (const auto& f : frames) out.push_back(frame_from_json(f));
    d.flow_points = std::move(out);
  }
  if (j.contains("goal")) d.goal = vector_from_json(j.at("goal"), "goal");
  if (j.contains("augmented")) d.augmented = j.at("augmented").get<bool>();
  for (const auto& [key, _] : j.items()) {
    if (key != "initial_joints" && key != "actions" && key != "features" && key != "flow_points" &&
        key != "goal" && key != "augmented") {
      throw std::invalid_argument("unknown key '" + key + "'");
    }
  }
  return d;
}

// Shape checks that do not depend on other demos.
void validate_demo(const Demonstration& d, std::size_t index) {
  const std::string tag = "demo " + std::to_string(index + 1) + ": ";
  if (d.actions.empty()) fail(ErrorCode::DimensionMismatch, tag + "no frames");
  if (d.actions.size() != d.features.size()) {
    fail(ErrorCode::DimensionMismatch, tag + "actions and features differ in length");
  }
  const auto dq = d.actions.front().size();
  const auto df = d.features.front().size();
  for (const auto& a : d.actions)
    if (a.size() != dq) fail(ErrorCode::DimensionMismatch, tag + "ragged action vectors");
  for (const auto& f : d.features)
    if (f.size() != df) fail(ErrorCode::DimensionMismatch, tag + "ragged feature vectors");
  if (d.initial_joints.size() != dq) {
    fail(ErrorCode::DimensionMismatch, tag + "initial_joints length differs from action length");
  }
  if (d.flow_points) {
    if (d.flow_points->size() != d.features.size()) {
      fail(ErrorCode::DimensionMismatch, tag + "flow_points length differs from features");
    }
    for (const auto& frame : *d.flow_points) {
      if (frame.rows() != kFlowPointCount) {
        fail(ErrorCode::WrongPointCount,
             tag + "flow frame has " + std::to_string(frame.rows()) + " points, expected 256");
      }
    }
  }
}

}  // namespace

std::size_t Dataset::frame_count() const {
  std::size_t n = 0;
  for (const auto& d : demos) n += d.length();
  return n;
}

void validate(const Dataset& ds) {
  for (std::size_t i = 0; i < ds.demos.size(); ++i) {
    const Demonstration& d = ds.demos[i];
    validate_demo(d, i);
    const std::string tag = "demo " + std::to_string(i + 1) + ": ";
    if (static_cast<std::size_t>(d.actions.front().size()) != ds.d_q) {
      fail(ErrorCode::DimensionMismatch, tag + "action dimension " +
                                             std::to_string(d.actions.front().size()) +
                                             " differs from " + std::to_string(ds.d_q));
    }
    if (static_cast<std::size_t>(d.features.front().size()) != ds.d_f) {
      fail(ErrorCode::DimensionMismatch, tag + "feature dimension " +
                                             std::to_string(d.features.front().size()) +
                                             " differs from " + std::to_string(ds.d_f));
    }
    const std::size_t dg = d.goal ? static_cast<std::size_t>(d.goal->size()) : 0;
    if (dg != ds.d_g) fail(ErrorCode::DimensionMismatch, tag + "goal presence or size differs");
  }
}

Dataset read_dataset(std::istream& in) {
  Dataset ds;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    Demonstration d;
    try {
      d = demo_from_json(json::parse(line));
    } catch (const json::exception& e) {
      throw ParseError(line_no, e.what());
    } catch (const std::invalid_argument& e) {
      throw ParseError(line_no, e.what());
    }
    validate_demo(d, ds.demos.size());
    if (ds.demos.empty()) {
      ds.d_q = static_cast<std::size_t>(d.actions.front().size());
      ds.d_f = static_cast<std::size_t>(d.features.front().size());
      ds.d_g = d.goal ? static_cast<std::size_t>(d.goal->size()) : 0;
    }
    ds.demos.push_back(std::move(d));
  }
  if (ds.demos.empty()) fail(ErrorCode::EmptyDataset, "no demonstrations found");
  validate(ds);
  return ds;
}

Dataset load_dataset(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorCode::Io, "cannot open dataset '" + path.string() + "'");
  return read_dataset(in);
}

void write_dataset(const Dataset& ds, std::ostream& out) {
  for (const auto& d : ds.demos) out << demo_to_json(d).dump() << '\n';
}

void save_dataset(const Dataset& ds, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) fail(ErrorCode::Io, "cannot write dataset '" + path.string() + "'");
  write_dataset(ds, out);
  if (!out) fail(ErrorCode::Io, "write failed for '" + path.string() + "'");
}

Demonstration augment_initial(const Demonstration& demo) {
  if (demo.augmented) fail(ErrorCode::AlreadyAugmented, "demonstration is already augmented");
  if (demo.actions.empty()) fail(ErrorCode::DimensionMismatch, "cannot augment an empty demo");
  Demonstration out = demo;
  out.actions.insert(out.actions.begin(), demo.initial_joints);
  out.features.insert(out.features.begin(), demo.features.front());
  if (out.flow_points) out.flow_points->insert(out.flow_points->begin(), demo.flow_points->front());
  out.augmented = true;
  return out;
}

void augment_all(Dataset& ds) {
  for (auto& d : ds.demos) d = augment_initial(d);
}

double compute_rescale(Dataset& ds) {
  if (ds.demos.empty()) fail(ErrorCode::EmptyDataset, "cannot rescale an empty dataset");
  std::vector<double> action_norms;
  std::vector<double> feature_norms;
  for (const auto& d : ds.demos) {
    for (std::size_t t = 0; t < d.length(); ++t) {
      action_norms.push_back(d.actions[t].norm());
      feature_norms.push_back(d.features[t].norm());
    }
  }
  // Summing in sorted order makes the result independent of demo order.
  auto sorted_sum = [](std::vector<double>& v) {
    std::sort(v.begin(), v.end());
    return std::accumulate(v.begin(), v.end(), 0.0);
  };
  const double frames = static_cast<double>(action_norms.size());
  const double action_sum = sorted_sum(action_norms);
  const double feature_sum = sorted_sum(feature_norms);
  if (frames == 0.0 || feature_sum == 0.0) {
    fail(ErrorCode::DegenerateScale, "all feature vectors have zero norm");
  }
  const double c = (action_sum / frames) / (feature_sum / frames);
  if (!(c > 0.0) || !std::isfinite(c)) {
    fail(ErrorCode::DegenerateScale, "rescale factor must be positive and finite");
  }
  ds.rescale_factor = c;
  return c;
}

Vec behavioral_state(const Vec& action, const Vec& feature, const std::optional<Vec>& goal,
                     double c) {
  const Eigen::Index dg = goal ? goal->size() : 0;
  Vec xi(action.size() + feature.size() + dg);
  xi.head(action.size()) = action;
  xi.segment(action.size(), feature.size()) = c * feature;
  if (goal) xi.tail(dg) = c * *goal;
  return xi;
}

Vec behavioral_state(const Demonstration& demo, std::size_t t, double c) {
  if (t >= demo.length()) {
    fail(ErrorCode::IndexOutOfRange,
         "frame " + std::to_string(t) + " of a demo with " + std::to_string(demo.length()));
  }
  return behavioral_state(demo.actions[t], demo.features[t], demo.goal, c);
}

}  // namespace kubm
