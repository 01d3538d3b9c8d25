#include "kubm/flowcodec.hpp"

#include <cmath>
#include <string>

#include "kubm/error.hpp"
#include "kubm/random.hpp"

namespace kubm {

namespace {

void uniform_fill(Mat& m, double bound, Rng& rng) {
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = rng.uniform(-bound, bound);
}

Mat grids_matrix(const std::vector<FlowPoints>& frames) {
  Mat x(kGridSize, static_cast<Eigen::Index>(frames.size()));
  for (std::size_t i = 0; i < frames.size(); ++i) {
    x.col(static_cast<Eigen::Index>(i)) = grid_from_points(frames[i]).values;
  }
  return x;
}

}  // namespace

FlowGrid grid_from_points(const FlowPoints& points) {
  if (points.rows() != kFlowPointCount) {
    fail(ErrorCode::WrongPointCount,
         "expected 256 points, got " + std::to_string(points.rows()));
  }
  FlowGrid grid;
  for (int j = 0; j < kFlowPointCount; ++j) {
    grid.at(0, j / kGridSide, j % kGridSide) = points(j, 0);
    grid.at(1, j / kGridSide, j % kGridSide) = points(j, 1);
  }
  return grid;
}

FlowPoints points_from_grid(const FlowGrid& grid) {
  if (grid.values.size() != kGridSize) fail(ErrorCode::DimensionMismatch, "flow grid must hold 512 values");
  FlowPoints points(kFlowPointCount, 2);
  for (int j = 0; j < kFlowPointCount; ++j) {
    points(j, 0) = grid.at(0, j / kGridSide, j % kGridSide);
    points(j, 1) = grid.at(1, j / kGridSide, j % kGridSide);
  }
  return points;
}

FlowCodec::FlowCodec()
    : enc_w("codec.enc_w", Mat::Zero(kHiddenChannels, kGridChannels * 9)),
      enc_b("codec.enc_b", Mat::Zero(kHiddenChannels, 1)),
      proj_w("codec.proj_w", Mat::Zero(kLatentChannels, kHiddenChannels)),
      proj_b("codec.proj_b", Mat::Zero(kLatentChannels, 1)),
      up_w("codec.up_w", Mat::Zero(kLatentChannels, kHiddenChannels)),
      up_b("codec.up_b", Mat::Zero(kHiddenChannels, 1)),
      dec_w("codec.dec_w", Mat::Zero(kHiddenChannels, kGridChannels * 9)),
      dec_b("codec.dec_b", Mat::Zero(kGridChannels, 1)) {}

FlowCodec FlowCodec::random(std::uint64_t seed) {
  Rng rng(seed);
  FlowCodec c;
  // Bounds use each layer's fan-in: input channels times kernel area.
  uniform_fill(c.enc_w.value, 1.0 / std::sqrt(kGridChannels * 9.0), rng);
  uniform_fill(c.enc_b.value, 1.0 / std::sqrt(kGridChannels * 9.0), rng);
  uniform_fill(c.proj_w.value, 1.0 / std::sqrt(double(kHiddenChannels)), rng);
  uniform_fill(c.proj_b.value, 1.0 / std::sqrt(double(kHiddenChannels)), rng);
  uniform_fill(c.up_w.value, 1.0 / std::sqrt(double(kLatentChannels)), rng);
  uniform_fill(c.up_b.value, 1.0 / std::sqrt(double(kLatentChannels)), rng);
  uniform_fill(c.dec_w.value, 1.0 / std::sqrt(kHiddenChannels * 9.0), rng);
  uniform_fill(c.dec_b.value, 1.0 / std::sqrt(kHiddenChannels * 9.0), rng);
  for (auto* p : c.parameters()) p->zero_grad();
  return c;
}

std::vector<grad::Parameter*> FlowCodec::parameters() {
  return {&enc_w, &enc_b, &proj_w, &proj_b, &up_w, &up_b, &dec_w, &dec_b};
}

grad::ConvGeometry FlowCodec::down_geometry() {
  return {kGridChannels, kHiddenChannels, kGridSide, kGridSide, 3, 2, 1, 0};
}
grad::ConvGeometry FlowCodec::proj_geometry() {
  return {kHiddenChannels, kLatentChannels, kLatentSide, kLatentSide, 1, 1, 0, 0};
}
grad::ConvGeometry FlowCodec::up_geometry() {
  return {kLatentChannels, kHiddenChannels, kLatentSide, kLatentSide, 1, 1, 0, 0};
}
grad::ConvGeometry FlowCodec::dec_geometry() {
  return {kHiddenChannels, kGridChannels, kLatentSide, kLatentSide, 3, 2, 1, 1};
}

grad::Var FlowCodec::encode(grad::Tape& tape, grad::Var grids) {
  grad::Var h = tape.conv2d(grids, tape.param(enc_w), tape.param(enc_b), down_geometry());
  return tape.conv2d(h, tape.param(proj_w), tape.param(proj_b), proj_geometry());
}

grad::Var FlowCodec::decode(grad::Tape& tape, grad::Var latents) {
  grad::Var h = tape.conv_transpose2d(latents, tape.param(up_w), tape.param(up_b), up_geometry());
  h = tape.conv_transpose2d(h, tape.param(dec_w), tape.param(dec_b), dec_geometry());
  return tape.relu(h);
}

// The plain forward passes reuse the tape ops on constants; gradients are not
// recorded for constant inputs.
Mat FlowCodec::encode_batch(const Mat& grids) const {
  if (grids.rows() != kGridSize) fail(ErrorCode::DimensionMismatch, "flow grids must have 512 rows");
  grad::Tape tape;
  grad::Var h = tape.conv2d(tape.constant(grids), tape.constant(enc_w.value),
                            tape.constant(enc_b.value), down_geometry());
  h = tape.conv2d(h, tape.constant(proj_w.value), tape.constant(proj_b.value),
                  proj_geometry());
  return h.value();
}

Mat FlowCodec::decode_batch(const Mat& latents) const {
  if (latents.rows() != kLatentSize) fail(ErrorCode::DimensionMismatch, "flow latents must have 128 rows");
  grad::Tape tape;
  grad::Var h = tape.conv_transpose2d(tape.constant(latents), tape.constant(up_w.value),
                                      tape.constant(up_b.value), up_geometry());
  h = tape.conv_transpose2d(h, tape.constant(dec_w.value), tape.constant(dec_b.value),
                            dec_geometry());
  return tape.relu(h).value();
}

FlowLatent encode_flow(const FlowGrid& grid, const FlowCodec& codec) {
  FlowLatent out;
  out.values = codec.encode_batch(grid.values);
  return out;
}

FlowGrid decode_flow(const FlowLatent& latent, const FlowCodec& codec) {
  FlowGrid out;
  out.values = codec.decode_batch(latent.values);
  return out;
}

Vec flow_feature(const FlowPoints& points, const FlowCodec& codec) {
  return encode_flow(grid_from_points(points), codec).values;
}

FlowPoints flow_points_from_feature(const Vec& feature, const FlowCodec& codec) {
  FlowLatent latent;
  if (feature.size() != kLatentSize) fail(ErrorCode::DimensionMismatch, "flow feature must have 128 entries");
  latent.values = feature;
  return points_from_grid(decode_flow(latent, codec));
}

double reconstruction_loss(const FlowCodec& codec, const std::vector<FlowPoints>& frames) {
  if (frames.empty()) fail(ErrorCode::EmptyDataset, "no flow frames");
  const Mat x = grids_matrix(frames);
  const Mat r = codec.decode_batch(codec.encode_batch(x)) - x;
  return r.squaredNorm() / static_cast<double>(frames.size());
}

double reconstruction_rmse(const FlowCodec& codec, const std::vector<FlowPoints>& frames) {
  // Each point contributes a squared 2-D distance; average per point.
  return std::sqrt(reconstruction_loss(codec, frames) / kFlowPointCount);
}

FlowTrainResult train_flow_ae(const std::vector<FlowPoints>& frames, const FlowTrainConfig& config) {
  if (frames.empty()) fail(ErrorCode::EmptyDataset, "flow autoencoder needs at least one frame");
  if (config.batch_size < 1 || config.epochs < 0) fail(ErrorCode::InvalidArgument, "bad flow training config");
  const Mat x = grids_matrix(frames);
  const auto n = static_cast<std::size_t>(x.cols());

  FlowTrainResult result{FlowCodec::random(config.seed), {}};
  FlowCodec& codec = result.codec;
  // Start the output layer at the per-channel data mean so the final relu is
  // active everywhere from the first step.
  for (int c = 0; c < kGridChannels; ++c) {
    codec.dec_b.value(c, 0) =
        x.middleRows(static_cast<Eigen::Index>(c) * kGridSide * kGridSide, kGridSide * kGridSide).mean();
  }

  grad::Adam opt({grad::ParamGroup{"codec", config.learning_rate, codec.parameters()}});
  Rng rng(Rng::derive(config.seed, 1));
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;

  double lr = config.learning_rate;
  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    rng.shuffle(order);
    double total = 0.0;
    for (std::size_t start = 0; start < n; start += static_cast<std::size_t>(config.batch_size)) {
      const std::size_t stop = std::min(n, start + static_cast<std::size_t>(config.batch_size));
      Mat batch(kGridSize, static_cast<Eigen::Index>(stop - start));
      for (std::size_t i = start; i < stop; ++i) {
        batch.col(static_cast<Eigen::Index>(i - start)) = x.col(static_cast<Eigen::Index>(order[i]));
      }
      opt.zero_grad();
      grad::Tape tape;
      grad::Var in = tape.constant(batch);
      grad::Var recon = codec.decode(tape, codec.encode(tape, in));
      grad::Var loss = tape.scale(tape.sum_squares(tape.sub(recon, in)),
                                  1.0 / static_cast<double>(stop - start));
      const double value = loss.value()(0, 0);
      if (!std::isfinite(value)) {
        fail(ErrorCode::NonFiniteLoss, "flow autoencoder loss diverged at epoch " + std::to_string(epoch));
      }
      total += value * static_cast<double>(stop - start);
      tape.backward(loss);
      opt.step();
    }
    result.epoch_loss.push_back(total / static_cast<double>(n));
    lr *= config.lr_decay;
    opt.set_learning_rate(0, lr);
  }
  for (auto* p : codec.parameters()) p->zero_grad();
  return result;
}

std::vector<FlowPoints> pooled_flow_frames(const Dataset& dataset) {
  std::vector<FlowPoints> frames;
  for (const auto& d : dataset.demos) {
    if (!d.flow_points) continue;
    frames.insert(frames.end(), d.flow_points->begin(), d.flow_points->end());
  }
  return frames;
}

void featurize_with_codec(Dataset& dataset, const FlowCodec& codec) {
  for (std::size_t i = 0; i < dataset.demos.size(); ++i) {
    auto& d = dataset.demos[i];
    if (!d.flow_points) {
      fail(ErrorCode::InvalidArgument, "demo " + std::to_string(i + 1) + " has no flow points");
    }
    for (std::size_t t = 0; t < d.length(); ++t) d.features[t] = flow_feature((*d.flow_points)[t], codec);
  }
  dataset.d_f = kLatentSize;
  dataset.rescale_factor.reset();
}

}  // namespace kubm
