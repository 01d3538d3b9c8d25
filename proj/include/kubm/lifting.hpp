#pragma once

#include <cstddef>
#include <cstdint>
#include <string_view>
#include <vector>

#include "kubm/gradkit.hpp"
#include "kubm/trajdata.hpp"

namespace kubm {

/// Hand-crafted polynomial / trigonometric bases.
///
///   base: [x_h, x_h^2, x_o, x_o^2]
///   V1:   base, x_o^3, {x_h,i x_h,j}_{i<j}, x_h^3
///   V2:   base, {x_h,i x_h,j}_{i<j}, x_h^3
///   V3:   V2, cos(x_h), sin(x_h), cos(x_o), sin(x_o)
///
/// Pairwise products are enumerated with i < j in lexicographic order.
enum class LiftVariant { V1, V2, V3 };

std::string_view to_string(LiftVariant v);
LiftVariant lift_variant_from_string(std::string_view s);

std::size_t lifted_dim(std::size_t n_h, std::size_t n_o, LiftVariant variant);

Vec lift(const Vec& x_h, const Vec& x_o, LiftVariant variant);

/// MLP lifting g(xi) = W3 relu(W2 relu(W1 xi + b1) + b2) + b3.
class SpectralEncoder {
 public:
  SpectralEncoder() = default;
  /// Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) initialisation for weights and biases.
  SpectralEncoder(std::size_t input_dim, std::vector<std::size_t> hidden, std::size_t output_dim,
                  std::uint64_t seed);

  std::size_t input_dim() const { return input_dim_; }
  std::size_t output_dim() const { return output_dim_; }
  const std::vector<std::size_t>& hidden() const { return hidden_; }

  Vec encode(const Vec& xi) const;
  /// Column-wise batch encode.
  Mat encode_batch(const Mat& xi) const;
  grad::Var forward(grad::Tape& tape, grad::Var xi);

  std::vector<grad::Parameter>& layers_weights() { return weights_; }
  std::vector<grad::Parameter>& layers_biases() { return biases_; }
  const std::vector<grad::Parameter>& layers_weights() const { return weights_; }
  const std::vector<grad::Parameter>& layers_biases() const { return biases_; }
  std::vector<grad::Parameter*> parameters();

  /// Rebuilds an encoder from explicit weights (W_i is out x in, b_i is out x 1).
  static SpectralEncoder from_weights(std::vector<Mat> weights, std::vector<Mat> biases);

 private:
  std::size_t input_dim_ = 0;
  std::size_t output_dim_ = 0;
  std::vector<std::size_t> hidden_;
  std::vector<grad::Parameter> weights_;
  std::vector<grad::Parameter> biases_;
};

/// z = [xi; psi].
Vec assemble_latent(const Vec& xi, const Vec& psi);

/// Leading d_q entries of a state-inclusive latent.
Vec extract_action(const Vec& z, std::size_t d_q);

}  // namespace kubm
