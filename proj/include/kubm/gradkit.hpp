#pragma once

// Small reverse-mode differentiation kernel over dense matrices.
//
// Values are Eigen matrices; a batch of vectors is stored column-wise. Images
// for the convolution ops are flattened channel-major then row-major
// (index = c*H*W + y*W + x), one image per column.

#include <cstddef>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace kubm::grad {

using Mat = Eigen::MatrixXd;

/// Trainable tensor. `grad` accumulates across backward passes until cleared.
struct Parameter {
  std::string name;
  Mat value;
  Mat grad;

  Parameter() = default;
  Parameter(std::string name, Mat init);

  void zero_grad();
  Eigen::Index size() const { return value.size(); }
};

struct ConvGeometry {
  int in_channels = 1;
  int out_channels = 1;
  int height = 1;  // input spatial size
  int width = 1;
  int kernel = 1;
  int stride = 1;
  int padding = 0;
  int output_padding = 0;  // transposed convolution only

  int conv_out_height() const { return (height + 2 * padding - kernel) / stride + 1; }
  int conv_out_width() const { return (width + 2 * padding - kernel) / stride + 1; }
  int transposed_out_height() const {
    return (height - 1) * stride - 2 * padding + kernel + output_padding;
  }
  int transposed_out_width() const {
    return (width - 1) * stride - 2 * padding + kernel + output_padding;
  }
};

class Tape;

/// Handle to a node recorded on a Tape. Cheap to copy; valid while the tape lives.
class Var {
 public:
  Var() = default;
  const Mat& value() const;
  const Mat& grad() const;
  std::size_t id() const { return id_; }

 private:
  friend class Tape;
  Var(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}
  Tape* tape_ = nullptr;
  std::size_t id_ = 0;
};

class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var constant(Mat value);
  /// Leaf bound to a parameter; backward() accumulates into `p.grad`.
  Var param(Parameter& p);

  Var matmul(Var a, Var b);
  Var add(Var a, Var b);
  Var sub(Var a, Var b);
  /// x (m x n) plus a column bias (m x 1) broadcast over columns.
  Var add_bias(Var x, Var bias);
  Var relu(Var x);
  Var scale(Var x, double s);
  /// Elementwise product with a constant matrix of the same shape.
  Var mask(Var x, const Mat& m);
  Var vstack(Var top, Var bottom);
  /// Rows [row, row + rows) of x.
  Var rows(Var x, Eigen::Index row, Eigen::Index rows);
  Var sum_squares(Var x);
  /// <a, b> / (|a| |b|) over all entries; 1 x 1 result.
  Var cosine_similarity(Var a, Var b);
  /// weight: out_channels x (in_channels * k * k); bias: out_channels x 1.
  Var conv2d(Var x, Var weight, Var bias, const ConvGeometry& g);
  /// weight: in_channels x (out_channels * k * k); bias: out_channels x 1.
  Var conv_transpose2d(Var x, Var weight, Var bias, const ConvGeometry& g);
  /// Copy of x that blocks gradient flow.
  Var stop_gradient(Var x);

  /// Reverse sweep from a 1 x 1 loss node.
  void backward(Var loss);

  std::size_t size() const { return nodes_.size(); }

 private:
  friend class Var;
  using BackwardFn = std::function<void(Tape&, std::size_t)>;

  struct Node {
    Mat value;
    Mat grad;
    Parameter* param = nullptr;
    bool requires_grad = false;
    BackwardFn backward;
  };

  Var push(Mat value, bool requires_grad, BackwardFn fn);
  Node& node(Var v);
  const Node& node(Var v) const;
  Mat& grad_ref(std::size_t id);
  bool needs(std::size_t id) const { return nodes_[id].requires_grad; }

  std::vector<Node> nodes_;
};

// Im2col-style helpers shared by the convolution ops and the flow codec.
// `image` is one flattened image of `channels x height x width`; columns of the
// result index output positions (out_h x out_w) and rows index (c, ky, kx).
Mat im2col(const double* image, int channels, int height, int width, int kernel, int stride,
           int padding, int out_h, int out_w);
void col2im_add(const Mat& cols, double* image, int channels, int height, int width, int kernel,
                int stride, int padding, int out_h, int out_w);

// ---------------------------------------------------------------------------
// Optimisation

struct ParamGroup {
  std::string name;
  double learning_rate = 1e-3;
  std::vector<Parameter*> params;
};

struct AdamSettings {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

/// Adaptive-moment optimizer with bias correction and per-group learning rates.
class Adam {
 public:
  explicit Adam(std::vector<ParamGroup> groups, AdamSettings settings = {});

  /// Applies one update from the accumulated gradients. Throws
  /// ErrorCode::PoisonedGradient (leaving parameters and moments untouched)
  /// if any gradient entry is NaN or infinite.
  void step();
  void zero_grad();

  std::size_t steps() const { return steps_; }
  const std::vector<ParamGroup>& groups() const { return groups_; }
  void set_learning_rate(std::size_t group, double lr);
  std::vector<Parameter*> parameters() const;

  const Mat& first_moment(std::size_t flat_index) const { return m_[flat_index]; }
  const Mat& second_moment(std::size_t flat_index) const { return v_[flat_index]; }

 private:
  std::vector<ParamGroup> groups_;
  AdamSettings settings_;
  std::vector<Mat> m_;
  std::vector<Mat> v_;
  std::size_t steps_ = 0;
};

double global_grad_norm(std::span<Parameter* const> params);

/// Rescales all gradients so their joint l2 norm is at most `max_norm`.
/// Returns the norm measured before clipping.
double clip_global_norm(std::span<Parameter* const> params, double max_norm);

// ---------------------------------------------------------------------------
// Verification

using LossBuilder = std::function<Var(Tape&)>;

/// Compares reverse-mode gradients of `build` against central differences.
/// Returns max over coordinates of |analytic - numeric| / max(1, |numeric|).
/// Parameter values are restored and gradients left holding the analytic result.
double finite_diff_check(std::span<Parameter* const> params, const LossBuilder& build,
                         double eps = 1e-6);

}  // namespace kubm::grad
