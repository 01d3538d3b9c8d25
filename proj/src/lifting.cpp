#include "kubm/lifting.hpp"

#include <cmath>
#include <string>

#include "kubm/error.hpp"
#include "kubm/random.hpp"

namespace kubm {

std::string_view to_string(LiftVariant v) {
  switch (v) {
    case LiftVariant::V1: return "v1";
    case LiftVariant::V2: return "v2";
    case LiftVariant::V3: return "v3";
  }
  return "?";
}

LiftVariant lift_variant_from_string(std::string_view s) {
  if (s == "v1" || s == "V1") return LiftVariant::V1;
  if (s == "v2" || s == "V2") return LiftVariant::V2;
  if (s == "v3" || s == "V3") return LiftVariant::V3;
  fail(ErrorCode::InvalidArgument, "unknown lift variant '" + std::string(s) + "'");
}

std::size_t lifted_dim(std::size_t n_h, std::size_t n_o, LiftVariant variant) {
  const std::size_t base = 2 * n_h + 2 * n_o;
  const std::size_t pairs = n_h * (n_h - 1) / 2;
  switch (variant) {
    case LiftVariant::V1: return base + n_o + pairs + n_h;
    case LiftVariant::V2: return base + pairs + n_h;
    case LiftVariant::V3: return base + pairs + n_h + 2 * n_h + 2 * n_o;
  }
  return 0;
}

Vec lift(const Vec& x_h, const Vec& x_o, LiftVariant variant) {
  const Eigen::Index nh = x_h.size();
  const Eigen::Index no = x_o.size();
  if (nh < 1 || no < 1) fail(ErrorCode::DimensionMismatch, "lift needs non-empty robot and visual states");
  Vec out(static_cast<Eigen::Index>(lifted_dim(static_cast<std::size_t>(nh),
                                               static_cast<std::size_t>(no), variant)));
  Eigen::Index k = 0;
  auto put = [&](const auto& block) {
    out.segment(k, block.size()) = block;
    k += block.size();
  };
  put(x_h);
  put(x_h.array().square().matrix());
  put(x_o);
  put(x_o.array().square().matrix());
  if (variant == LiftVariant::V1) put(x_o.array().cube().matrix());
  for (Eigen::Index i = 0; i < nh; ++i)
    for (Eigen::Index j = i + 1; j < nh; ++j) out(k++) = x_h(i) * x_h(j);
  put(x_h.array().cube().matrix());
  if (variant == LiftVariant::V3) {
    put(x_h.array().cos().matrix());
    put(x_h.array().sin().matrix());
    put(x_o.array().cos().matrix());
    put(x_o.array().sin().matrix());
  }
  return out;
}

SpectralEncoder::SpectralEncoder(std::size_t input_dim, std::vector<std::size_t> hidden,
                                 std::size_t output_dim, std::uint64_t seed)
    : input_dim_(input_dim), output_dim_(output_dim), hidden_(std::move(hidden)) {
  if (input_dim == 0 || output_dim == 0) fail(ErrorCode::InvalidArgument, "encoder widths must be positive");
  Rng rng(seed);
  std::vector<std::size_t> widths{input_dim};
  widths.insert(widths.end(), hidden_.begin(), hidden_.end());
  widths.push_back(output_dim);
  for (std::size_t layer = 0; layer + 1 < widths.size(); ++layer) {
    const auto in = static_cast<Eigen::Index>(widths[layer]);
    const auto out = static_cast<Eigen::Index>(widths[layer + 1]);
    const double bound = 1.0 / std::sqrt(static_cast<double>(in));
    Mat w(out, in);
    for (Eigen::Index i = 0; i < w.size(); ++i) w.data()[i] = rng.uniform(-bound, bound);
    Mat b(out, 1);
    for (Eigen::Index i = 0; i < b.size(); ++i) b.data()[i] = rng.uniform(-bound, bound);
    weights_.emplace_back("encoder.w" + std::to_string(layer), std::move(w));
    biases_.emplace_back("encoder.b" + std::to_string(layer), std::move(b));
  }
}

SpectralEncoder SpectralEncoder::from_weights(std::vector<Mat> weights, std::vector<Mat> biases) {
  if (weights.empty() || weights.size() != biases.size()) {
    fail(ErrorCode::InvalidArgument, "encoder needs matching weight and bias lists");
  }
  SpectralEncoder enc;
  enc.input_dim_ = static_cast<std::size_t>(weights.front().cols());
  enc.output_dim_ = static_cast<std::size_t>(weights.back().rows());
  for (std::size_t i = 0; i < weights.size(); ++i) {
    if (biases[i].rows() != weights[i].rows() || biases[i].cols() != 1) {
      fail(ErrorCode::DimensionMismatch, "encoder bias " + std::to_string(i) + " shape");
    }
    if (i > 0 && weights[i].cols() != enc.weights_[i - 1].value.rows()) {
      fail(ErrorCode::DimensionMismatch, "encoder layer " + std::to_string(i) + " input width");
    }
    if (i + 1 < weights.size()) enc.hidden_.push_back(static_cast<std::size_t>(weights[i].rows()));
    enc.weights_.emplace_back("encoder.w" + std::to_string(i), std::move(weights[i]));
    enc.biases_.emplace_back("encoder.b" + std::to_string(i), std::move(biases[i]));
  }
  return enc;
}

Mat SpectralEncoder::encode_batch(const Mat& xi) const {
  if (static_cast<std::size_t>(xi.rows()) != input_dim_) {
    fail(ErrorCode::DimensionMismatch, "encoder expects " + std::to_string(input_dim_) +
                                           " inputs, got " + std::to_string(xi.rows()));
  }
  Mat h = xi;
  for (std::size_t layer = 0; layer < weights_.size(); ++layer) {
    Mat next = weights_[layer].value * h;
    next.colwise() += biases_[layer].value.col(0);
    if (layer + 1 < weights_.size()) next = next.cwiseMax(0.0);
    h = std::move(next);
  }
  return h;
}

Vec SpectralEncoder::encode(const Vec& xi) const { return encode_batch(xi); }

grad::Var SpectralEncoder::forward(grad::Tape& tape, grad::Var xi) {
  if (static_cast<std::size_t>(xi.value().rows()) != input_dim_) {
    fail(ErrorCode::DimensionMismatch, "encoder input width");
  }
  grad::Var h = xi;
  for (std::size_t layer = 0; layer < weights_.size(); ++layer) {
    h = tape.add_bias(tape.matmul(tape.param(weights_[layer]), h), tape.param(biases_[layer]));
    if (layer + 1 < weights_.size()) h = tape.relu(h);
  }
  return h;
}

std::vector<grad::Parameter*> SpectralEncoder::parameters() {
  std::vector<grad::Parameter*> out;
  for (std::size_t i = 0; i < weights_.size(); ++i) {
    out.push_back(&weights_[i]);
    out.push_back(&biases_[i]);
  }
  return out;
}

Vec assemble_latent(const Vec& xi, const Vec& psi) {
  Vec z(xi.size() + psi.size());
  z << xi, psi;
  return z;
}

Vec extract_action(const Vec& z, std::size_t d_q) {
  if (static_cast<Eigen::Index>(d_q) > z.size()) {
    fail(ErrorCode::DimensionMismatch, "action block longer than latent");
  }
  return z.head(static_cast<Eigen::Index>(d_q));
}

}  // namespace kubm
