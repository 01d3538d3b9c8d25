#include "kubm/gradkit.hpp"

#include <cmath>
#include <unordered_set>

#include "kubm/error.hpp"

namespace kubm::grad {

namespace {

using RowMap = Eigen::Map<Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;
using ConstRowMap =
    Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;

void require_same_shape(const Mat& a, const Mat& b, const char* op) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    fail(ErrorCode::DimensionMismatch,
         std::string(op) + ": " + std::to_string(a.rows()) + "x" + std::to_string(a.cols()) +
             " vs " + std::to_string(b.rows()) + "x" + std::to_string(b.cols()));
  }
}

}  // namespace

Parameter::Parameter(std::string name_, Mat init)
    : name(std::move(name_)), value(std::move(init)), grad(Mat::Zero(value.rows(), value.cols())) {}

void Parameter::zero_grad() { grad.setZero(value.rows(), value.cols()); }

const Mat& Var::value() const { return tape_->node(*this).value; }

const Mat& Var::grad() const { return tape_->node(*this).grad; }

Tape::Node& Tape::node(Var v) { return nodes_.at(v.id_); }
const Tape::Node& Tape::node(Var v) const { return nodes_.at(v.id_); }

Mat& Tape::grad_ref(std::size_t id) {
  Node& n = nodes_[id];
  if (n.grad.size() == 0) n.grad.setZero(n.value.rows(), n.value.cols());
  return n.grad;
}

Var Tape::push(Mat value, bool requires_grad, BackwardFn fn) {
  Node n;
  n.value = std::move(value);
  n.requires_grad = requires_grad;
  if (requires_grad) n.backward = std::move(fn);
  nodes_.push_back(std::move(n));
  return Var(this, nodes_.size() - 1);
}

Var Tape::constant(Mat value) { return push(std::move(value), false, nullptr); }

Var Tape::param(Parameter& p) {
  Var v = push(p.value, true, nullptr);
  nodes_[v.id_].param = &p;
  return v;
}

Var Tape::stop_gradient(Var x) { return constant(node(x).value); }

Var Tape::matmul(Var a, Var b) {
  const Mat& av = node(a).value;
  const Mat& bv = node(b).value;
  if (av.cols() != bv.rows()) {
    fail(ErrorCode::DimensionMismatch, "matmul: inner dimensions " + std::to_string(av.cols()) +
                                           " and " + std::to_string(bv.rows()));
  }
  const std::size_t ia = a.id_, ib = b.id_;
  return push(av * bv, needs(ia) || needs(ib), [ia, ib](Tape& t, std::size_t self) {
    const Mat& g = t.nodes_[self].grad;
    if (t.needs(ia)) t.grad_ref(ia).noalias() += g * t.nodes_[ib].value.transpose();
    if (t.needs(ib)) t.grad_ref(ib).noalias() += t.nodes_[ia].value.transpose() * g;
  });
}

Var Tape::add(Var a, Var b) {
  require_same_shape(node(a).value, node(b).value, "add");
  const std::size_t ia = a.id_, ib = b.id_;
  return push(node(a).value + node(b).value, needs(ia) || needs(ib),
              [ia, ib](Tape& t, std::size_t self) {
                const Mat& g = t.nodes_[self].grad;
                if (t.needs(ia)) t.grad_ref(ia) += g;
                if (t.needs(ib)) t.grad_ref(ib) += g;
              });
}

Var Tape::sub(Var a, Var b) {
  require_same_shape(node(a).value, node(b).value, "sub");
  const std::size_t ia = a.id_, ib = b.id_;
  return push(node(a).value - node(b).value, needs(ia) || needs(ib),
              [ia, ib](Tape& t, std::size_t self) {
                const Mat& g = t.nodes_[self].grad;
                if (t.needs(ia)) t.grad_ref(ia) += g;
                if (t.needs(ib)) t.grad_ref(ib) -= g;
              });
}

Var Tape::add_bias(Var x, Var bias) {
  const Mat& xv = node(x).value;
  const Mat& bv = node(bias).value;
  if (bv.cols() != 1 || bv.rows() != xv.rows()) {
    fail(ErrorCode::DimensionMismatch, "add_bias: bias must be " + std::to_string(xv.rows()) + "x1");
  }
  const std::size_t ix = x.id_, ib = bias.id_;
  Mat out = xv.colwise() + bv.col(0);
  return push(std::move(out), needs(ix) || needs(ib), [ix, ib](Tape& t, std::size_t self) {
    const Mat& g = t.nodes_[self].grad;
    if (t.needs(ix)) t.grad_ref(ix) += g;
    if (t.needs(ib)) t.grad_ref(ib) += g.rowwise().sum();
  });
}

Var Tape::relu(Var x) {
  const std::size_t ix = x.id_;
  return push(node(x).value.cwiseMax(0.0), needs(ix), [ix](Tape& t, std::size_t self) {
    const Mat& g = t.nodes_[self].grad;
    const Mat& xv = t.nodes_[ix].value;
    t.grad_ref(ix) += (xv.array() > 0.0).select(g, 0.0);
  });
}

Var Tape::scale(Var x, double s) {
  const std::size_t ix = x.id_;
  return push(node(x).value * s, needs(ix), [ix, s](Tape& t, std::size_t self) {
    t.grad_ref(ix) += s * t.nodes_[self].grad;
  });
}

Var Tape::mask(Var x, const Mat& m) {
  require_same_shape(node(x).value, m, "mask");
  const std::size_t ix = x.id_;
  return push(node(x).value.cwiseProduct(m), needs(ix), [ix, m](Tape& t, std::size_t self) {
    t.grad_ref(ix) += t.nodes_[self].grad.cwiseProduct(m);
  });
}

Var Tape::vstack(Var top, Var bottom) {
  const Mat& tv = node(top).value;
  const Mat& bv = node(bottom).value;
  if (tv.cols() != bv.cols()) fail(ErrorCode::DimensionMismatch, "vstack: column counts differ");
  Mat out(tv.rows() + bv.rows(), tv.cols());
  out << tv, bv;
  const std::size_t it = top.id_, ib = bottom.id_;
  const Eigen::Index split = tv.rows();
  return push(std::move(out), needs(it) || needs(ib), [it, ib, split](Tape& t, std::size_t self) {
    const Mat& g = t.nodes_[self].grad;
    if (t.needs(it)) t.grad_ref(it) += g.topRows(split);
    if (t.needs(ib)) t.grad_ref(ib) += g.bottomRows(g.rows() - split);
  });
}

Var Tape::rows(Var x, Eigen::Index row, Eigen::Index count) {
  const Mat& xv = node(x).value;
  if (row < 0 || count < 0 || row + count > xv.rows()) {
    fail(ErrorCode::IndexOutOfRange, "rows: slice exceeds matrix");
  }
  const std::size_t ix = x.id_;
  return push(xv.middleRows(row, count), needs(ix), [ix, row, count](Tape& t, std::size_t self) {
    t.grad_ref(ix).middleRows(row, count) += t.nodes_[self].grad;
  });
}

Var Tape::sum_squares(Var x) {
  const std::size_t ix = x.id_;
  Mat out(1, 1);
  out(0, 0) = node(x).value.squaredNorm();
  return push(std::move(out), needs(ix), [ix](Tape& t, std::size_t self) {
    const double g = t.nodes_[self].grad(0, 0);
    t.grad_ref(ix) += (2.0 * g) * t.nodes_[ix].value;
  });
}

Var Tape::cosine_similarity(Var a, Var b) {
  const Mat& av = node(a).value;
  const Mat& bv = node(b).value;
  require_same_shape(av, bv, "cosine_similarity");
  const double na = av.norm();
  const double nb = bv.norm();
  if (na == 0.0 || nb == 0.0) fail(ErrorCode::DegenerateMetric, "cosine similarity of a zero vector");
  const double cos = av.cwiseProduct(bv).sum() / (na * nb);
  Mat out(1, 1);
  out(0, 0) = cos;
  const std::size_t ia = a.id_, ib = b.id_;
  return push(std::move(out), needs(ia) || needs(ib),
              [ia, ib, na, nb, cos](Tape& t, std::size_t self) {
                const double g = t.nodes_[self].grad(0, 0);
                const Mat& av = t.nodes_[ia].value;
                const Mat& bv = t.nodes_[ib].value;
                if (t.needs(ia)) t.grad_ref(ia) += g * (bv / (na * nb) - cos * av / (na * na));
                if (t.needs(ib)) t.grad_ref(ib) += g * (av / (na * nb) - cos * bv / (nb * nb));
              });
}

Mat im2col(const double* image, int channels, int height, int width, int kernel, int stride,
           int padding, int out_h, int out_w) {
  Mat cols = Mat::Zero(static_cast<Eigen::Index>(channels) * kernel * kernel,
                       static_cast<Eigen::Index>(out_h) * out_w);
  for (int c = 0; c < channels; ++c) {
    for (int ky = 0; ky < kernel; ++ky) {
      for (int kx = 0; kx < kernel; ++kx) {
        const Eigen::Index row = (static_cast<Eigen::Index>(c) * kernel + ky) * kernel + kx;
        for (int oy = 0; oy < out_h; ++oy) {
          const int iy = oy * stride - padding + ky;
          if (iy < 0 || iy >= height) continue;
          for (int ox = 0; ox < out_w; ++ox) {
            const int ix = ox * stride - padding + kx;
            if (ix < 0 || ix >= width) continue;
            cols(row, static_cast<Eigen::Index>(oy) * out_w + ox) =
                image[(static_cast<std::size_t>(c) * height + iy) * width + ix];
          }
        }
      }
    }
  }
  return cols;
}

void col2im_add(const Mat& cols, double* image, int channels, int height, int width, int kernel,
                int stride, int padding, int out_h, int out_w) {
  for (int c = 0; c < channels; ++c) {
    for (int ky = 0; ky < kernel; ++ky) {
      for (int kx = 0; kx < kernel; ++kx) {
        const Eigen::Index row = (static_cast<Eigen::Index>(c) * kernel + ky) * kernel + kx;
        for (int oy = 0; oy < out_h; ++oy) {
          const int iy = oy * stride - padding + ky;
          if (iy < 0 || iy >= height) continue;
          for (int ox = 0; ox < out_w; ++ox) {
            const int ix = ox * stride - padding + kx;
            if (ix < 0 || ix >= width) continue;
            image[(static_cast<std::size_t>(c) * height + iy) * width + ix] +=
                cols(row, static_cast<Eigen::Index>(oy) * out_w + ox);
          }
        }
      }
    }
  }
}

Var Tape::conv2d(Var x, Var weight, Var bias, const ConvGeometry& g) {
  const Mat& xv = node(x).value;
  const Mat& wv = node(weight).value;
  const Mat& bv = node(bias).value;
  const int oh = g.conv_out_height();
  const int ow = g.conv_out_width();
  const Eigen::Index in_size = static_cast<Eigen::Index>(g.in_channels) * g.height * g.width;
  const Eigen::Index patch = static_cast<Eigen::Index>(g.in_channels) * g.kernel * g.kernel;
  const Eigen::Index positions = static_cast<Eigen::Index>(oh) * ow;
  if (xv.rows() != in_size) fail(ErrorCode::DimensionMismatch, "conv2d: input size");
  if (wv.rows() != g.out_channels || wv.cols() != patch) {
    fail(ErrorCode::DimensionMismatch, "conv2d: weight shape");
  }
  if (bv.rows() != g.out_channels || bv.cols() != 1) fail(ErrorCode::DimensionMismatch, "conv2d: bias");

  Mat out(g.out_channels * positions, xv.cols());
  for (Eigen::Index b = 0; b < xv.cols(); ++b) {
    const Mat cols = im2col(xv.col(b).data(), g.in_channels, g.height, g.width, g.kernel, g.stride,
                            g.padding, oh, ow);
    RowMap y(out.col(b).data(), g.out_channels, positions);
    y.noalias() = wv * cols;
    y.colwise() += bv.col(0);
  }

  const std::size_t ix = x.id_, iw = weight.id_, ib = bias.id_;
  return push(std::move(out), needs(ix) || needs(iw) || needs(ib),
              [ix, iw, ib, g, oh, ow, positions](Tape& t, std::size_t self) {
                const Mat& gy = t.nodes_[self].grad;
                const Mat& xv = t.nodes_[ix].value;
                const Mat& wv = t.nodes_[iw].value;
                for (Eigen::Index b = 0; b < gy.cols(); ++b) {
                  ConstRowMap dy(gy.col(b).data(), g.out_channels, positions);
                  if (t.needs(ib)) t.grad_ref(ib) += dy.rowwise().sum();
                  if (t.needs(iw)) {
                    const Mat cols = im2col(xv.col(b).data(), g.in_channels, g.height, g.width,
                                            g.kernel, g.stride, g.padding, oh, ow);
                    t.grad_ref(iw).noalias() += dy * cols.transpose();
                  }
                  if (t.needs(ix)) {
                    const Mat dcols = wv.transpose() * dy;
                    col2im_add(dcols, t.grad_ref(ix).col(b).data(), g.in_channels, g.height,
                               g.width, g.kernel, g.stride, g.padding, oh, ow);
                  }
                }
              });
}

Var Tape::conv_transpose2d(Var x, Var weight, Var bias, const ConvGeometry& g) {
  const Mat& xv = node(x).value;
  const Mat& wv = node(weight).value;
  const Mat& bv = node(bias).value;
  const int oh = g.transposed_out_height();
  const int ow = g.transposed_out_width();
  const Eigen::Index in_positions = static_cast<Eigen::Index>(g.height) * g.width;
  const Eigen::Index patch = static_cast<Eigen::Index>(g.out_channels) * g.kernel * g.kernel;
  const Eigen::Index out_size = static_cast<Eigen::Index>(g.out_channels) * oh * ow;
  if (xv.rows() != g.in_channels * in_positions) {
    fail(ErrorCode::DimensionMismatch, "conv_transpose2d: input size");
  }
  if (wv.rows() != g.in_channels || wv.cols() != patch) {
    fail(ErrorCode::DimensionMismatch, "conv_transpose2d: weight shape");
  }
  if (bv.rows() != g.out_channels || bv.cols() != 1) {
    fail(ErrorCode::DimensionMismatch, "conv_transpose2d: bias");
  }

  // The transposed op is the adjoint of a stride-s convolution whose input is
  // this op's output: im2col/col2im roles swap.
  Mat out = Mat::Zero(out_size, xv.cols());
  for (Eigen::Index b = 0; b < xv.cols(); ++b) {
    ConstRowMap xin(xv.col(b).data(), g.in_channels, in_positions);
    const Mat cols = wv.transpose() * xin;
    col2im_add(cols, out.col(b).data(), g.out_channels, oh, ow, g.kernel, g.stride, g.padding,
               g.height, g.width);
    RowMap y(out.col(b).data(), g.out_channels, static_cast<Eigen::Index>(oh) * ow);
    y.colwise() += bv.col(0);
  }

  const std::size_t ix = x.id_, iw = weight.id_, ib = bias.id_;
  return push(std::move(out), needs(ix) || needs(iw) || needs(ib),
              [ix, iw, ib, g, oh, ow, in_positions](Tape& t, std::size_t self) {
                const Mat& gy = t.nodes_[self].grad;
                const Mat& xv = t.nodes_[ix].value;
                const Mat& wv = t.nodes_[iw].value;
                for (Eigen::Index b = 0; b < gy.cols(); ++b) {
                  ConstRowMap dy(gy.col(b).data(), g.out_channels,
                                 static_cast<Eigen::Index>(oh) * ow);
                  if (t.needs(ib)) t.grad_ref(ib) += dy.rowwise().sum();
                  const Mat dcols = im2col(gy.col(b).data(), g.out_channels, oh, ow, g.kernel,
                                           g.stride, g.padding, g.height, g.width);
                  if (t.needs(iw)) {
                    ConstRowMap xin(xv.col(b).data(), g.in_channels, in_positions);
                    t.grad_ref(iw).noalias() += xin * dcols.transpose();
                  }
                  if (t.needs(ix)) {
                    RowMap dx(t.grad_ref(ix).col(b).data(), g.in_channels, in_positions);
                    dx.noalias() += wv * dcols;
                  }
                }
              });
}

void Tape::backward(Var loss) {
  Node& root = node(loss);
  if (root.value.rows() != 1 || root.value.cols() != 1) {
    fail(ErrorCode::NonScalarLoss, "backward needs a 1x1 loss, got " +
                                       std::to_string(root.value.rows()) + "x" +
                                       std::to_string(root.value.cols()));
  }
  if (!root.requires_grad) return;
  for (auto& n : nodes_) n.grad.resize(0, 0);
  grad_ref(loss.id_).setOnes();
  for (std::size_t i = loss.id_ + 1; i-- > 0;) {
    Node& n = nodes_[i];
    if (!n.requires_grad || n.grad.size() == 0) continue;
    if (n.param != nullptr) {
      n.param->grad += n.grad;
    } else if (n.backward) {
      n.backward(*this, i);
    }
  }
}

// ---------------------------------------------------------------------------

Adam::Adam(std::vector<ParamGroup> groups, AdamSettings settings)
    : groups_(std::move(groups)), settings_(settings) {
  std::unordered_set<const Parameter*> seen;
  for (const auto& g : groups_) {
    if (!(g.learning_rate > 0.0)) {
      fail(ErrorCode::InvalidArgument, "learning rate of group '" + g.name + "' must be positive");
    }
    for (const Parameter* p : g.params) {
      if (!seen.insert(p).second) {
        fail(ErrorCode::InvalidArgument, "parameter '" + p->name + "' appears in two groups");
      }
      m_.push_back(Mat::Zero(p->value.rows(), p->value.cols()));
      v_.push_back(Mat::Zero(p->value.rows(), p->value.cols()));
    }
  }
}

std::vector<Parameter*> Adam::parameters() const {
  std::vector<Parameter*> out;
  for (const auto& g : groups_) out.insert(out.end(), g.params.begin(), g.params.end());
  return out;
}

void Adam::set_learning_rate(std::size_t group, double lr) {
  if (!(lr > 0.0)) fail(ErrorCode::InvalidArgument, "learning rate must be positive");
  groups_.at(group).learning_rate = lr;
}

void Adam::zero_grad() {
  for (auto& g : groups_)
    for (Parameter* p : g.params) p->zero_grad();
}

void Adam::step() {
  for (const auto& g : groups_) {
    for (const Parameter* p : g.params) {
      if (p->grad.rows() != p->value.rows() || p->grad.cols() != p->value.cols()) {
        fail(ErrorCode::DimensionMismatch, "gradient shape of '" + p->name + "'");
      }
      if (!p->grad.allFinite()) {
        fail(ErrorCode::PoisonedGradient, "non-finite gradient in '" + p->name + "'");
      }
    }
  }
  ++steps_;
  const double b1 = settings_.beta1;
  const double b2 = settings_.beta2;
  const double correction1 = 1.0 - std::pow(b1, static_cast<double>(steps_));
  const double correction2 = 1.0 - std::pow(b2, static_cast<double>(steps_));
  std::size_t k = 0;
  for (auto& g : groups_) {
    const double step_size = g.learning_rate / correction1;
    for (Parameter* p : g.params) {
      Mat& m = m_[k];
      Mat& v = v_[k];
      m = b1 * m + (1.0 - b1) * p->grad;
      v = b2 * v + (1.0 - b2) * p->grad.cwiseAbs2();
      p->value.array() -=
          step_size * m.array() / ((v.array() / correction2).sqrt() + settings_.epsilon);
      ++k;
    }
  }
}

double global_grad_norm(std::span<Parameter* const> params) {
  double sq = 0.0;
  for (const Parameter* p : params) sq += p->grad.squaredNorm();
  return std::sqrt(sq);
}

double clip_global_norm(std::span<Parameter* const> params, double max_norm) {
  if (!(max_norm > 0.0)) fail(ErrorCode::InvalidArgument, "max_norm must be positive");
  const double norm = global_grad_norm(params);
  if (norm > max_norm) {
    const double s = max_norm / norm;
    for (Parameter* p : params) p->grad *= s;
  }
  return norm;
}

// ---------------------------------------------------------------------------

double finite_diff_check(std::span<Parameter* const> params, const LossBuilder& build, double eps) {
  if (!(eps > 0.0)) fail(ErrorCode::InvalidArgument, "finite-difference step must be positive");
  for (Parameter* p : params) p->zero_grad();
  {
    Tape tape;
    Var loss = build(tape);
    tape.backward(loss);
  }
  auto evaluate = [&build]() {
    Tape tape;
    return build(tape).value()(0, 0);
  };
  double worst = 0.0;
  for (Parameter* p : params) {
    for (Eigen::Index i = 0; i < p->value.size(); ++i) {
      double& x = p->value.data()[i];
      const double saved = x;
      x = saved + eps;
      const double up = evaluate();
      x = saved - eps;
      const double down = evaluate();
      x = saved;
      const double numeric = (up - down) / (2.0 * eps);
      const double analytic = p->grad.data()[i];
      const double err = std::abs(analytic - numeric) / std::max(1.0, std::abs(numeric));
      worst = std::max(worst, err);
    }
  }
  return worst;
}

}  // namespace kubm::grad
