#pragma once

#include <cstddef>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <vector>

#include <Eigen/Dense>

namespace kubm {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

inline constexpr int kFlowPointCount = 256;

/// 256 tracked image points, one (u, v) pixel pair per row.
using FlowPoints = Eigen::Matrix<double, Eigen::Dynamic, 2>;

/// One demonstration: time-aligned actions and visual features, plus the
/// observed initial joint configuration used for the auxiliary first frame.
struct Demonstration {
  Vec initial_joints;
  std::vector<Vec> actions;
  std::vector<Vec> features;
  std::optional<std::vector<FlowPoints>> flow_points;
  std::optional<Vec> goal;
  bool augmented = false;

  std::size_t length() const { return actions.size(); }
};

struct Dataset {
  std::vector<Demonstration> demos;
  std::size_t d_q = 0;
  std::size_t d_f = 0;
  std::size_t d_g = 0;
  std::optional<double> rescale_factor;

  bool has_goal() const { return d_g > 0; }
  std::size_t state_dim() const { return d_q + d_f + d_g; }
  /// Total number of frames over all demonstrations.
  std::size_t frame_count() const;
};

/// Reads newline-delimited JSON (one demonstration per line). Dimensions are
/// taken from the first record; every later record must agree.
Dataset load_dataset(const std::filesystem::path& path);
Dataset read_dataset(std::istream& in);

void save_dataset(const Dataset& dataset, const std::filesystem::path& path);
void write_dataset(const Dataset& dataset, std::ostream& out);

/// Checks the per-demo and cross-demo shape invariants; throws on violation.
void validate(const Dataset& dataset);

/// Prepends the auxiliary frame (a_0 = initial joints, feature_0 = feature_1).
Demonstration augment_initial(const Demonstration& demo);
void augment_all(Dataset& dataset);

/// c = mean ||a|| / mean ||phi|| pooled over every frame of every demo.
/// Stores the result in `dataset.rescale_factor`.
double compute_rescale(Dataset& dataset);

/// xi_t = [a_t; c * phi_t; c * goal].
Vec behavioral_state(const Demonstration& demo, std::size_t t, double c);
Vec behavioral_state(const Vec& action, const Vec& feature, const std::optional<Vec>& goal,
                     double c);

}  // namespace kubm
