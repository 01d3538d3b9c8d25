#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "kubm/gradkit.hpp"
#include "kubm/trajdata.hpp"

namespace kubm {

inline constexpr int kGridSide = 16;
inline constexpr int kGridChannels = 2;
inline constexpr int kGridSize = kGridChannels * kGridSide * kGridSide;  // 512
inline constexpr int kLatentSide = 8;
inline constexpr int kLatentChannels = 2;
inline constexpr int kLatentSize = kLatentChannels * kLatentSide * kLatentSide;  // 128
inline constexpr int kHiddenChannels = 8;

/// 2 x 16 x 16 image: channel 0 holds u, channel 1 holds v.
struct FlowGrid {
  Vec values = Vec::Zero(kGridSize);

  double& at(int channel, int row, int col) { return values(index(channel, row, col)); }
  double at(int channel, int row, int col) const { return values(index(channel, row, col)); }
  static Eigen::Index index(int channel, int row, int col) {
    return (static_cast<Eigen::Index>(channel) * kGridSide + row) * kGridSide + col;
  }
};

/// 2 x 8 x 8 code, flattened to 128 values (channel-major).
struct FlowLatent {
  Vec values = Vec::Zero(kLatentSize);
};

/// Point j lands at (row, col) = (j / 16, j % 16).
FlowGrid grid_from_points(const FlowPoints& points);
FlowPoints points_from_grid(const FlowGrid& grid);

/// Convolutional autoencoder for flow grids.
///   encoder: conv 3x3 stride 2 pad 1 (2 -> 8), conv 1x1 (8 -> 2)
///   decoder: transposed 1x1 (2 -> 8), transposed 3x3 stride 2 pad 1
///            output-pad 1 (8 -> 2), relu
struct FlowCodec {
  grad::Parameter enc_w, enc_b;    // 8 x 18, 8 x 1
  grad::Parameter proj_w, proj_b;  // 2 x 8, 2 x 1
  grad::Parameter up_w, up_b;      // 2 x 8, 8 x 1
  grad::Parameter dec_w, dec_b;    // 8 x 18, 2 x 1

  FlowCodec();
  static FlowCodec random(std::uint64_t seed);

  std::vector<grad::Parameter*> parameters();

  Mat encode_batch(const Mat& grids) const;   // 512 x B -> 128 x B
  Mat decode_batch(const Mat& latents) const;  // 128 x B -> 512 x B

  grad::Var encode(grad::Tape& tape, grad::Var grids);
  grad::Var decode(grad::Tape& tape, grad::Var latents);

  static grad::ConvGeometry down_geometry();
  static grad::ConvGeometry proj_geometry();
  static grad::ConvGeometry up_geometry();
  static grad::ConvGeometry dec_geometry();
};

FlowLatent encode_flow(const FlowGrid& grid, const FlowCodec& codec);
FlowGrid decode_flow(const FlowLatent& latent, const FlowCodec& codec);

/// Feature vector for a frame of points (the flattened latent).
Vec flow_feature(const FlowPoints& points, const FlowCodec& codec);
FlowPoints flow_points_from_feature(const Vec& feature, const FlowCodec& codec);

struct FlowTrainConfig {
  int epochs = 200;
  int batch_size = 64;
  double learning_rate = 1e-2;
  double lr_decay = 0.99;  // multiplicative, per epoch
  std::uint64_t seed = 0;
};

struct FlowTrainResult {
  FlowCodec codec;
  std::vector<double> epoch_loss;  // mean squared reconstruction error per frame, per epoch
};

/// Mean over frames of ||decode(encode(x)) - x||^2.
double reconstruction_loss(const FlowCodec& codec, const std::vector<FlowPoints>& frames);
/// Root mean square point error in pixels over all frames and points.
double reconstruction_rmse(const FlowCodec& codec, const std::vector<FlowPoints>& frames);

FlowTrainResult train_flow_ae(const std::vector<FlowPoints>& frames, const FlowTrainConfig& config);

/// Every flow frame of every demo, in order.
std::vector<FlowPoints> pooled_flow_frames(const Dataset& dataset);

/// Replaces each demo's features with codec latents of its flow frames.
void featurize_with_codec(Dataset& dataset, const FlowCodec& codec);

}  // namespace kubm
