#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "kubm/error.hpp"
#include "kubm/flowcodec.hpp"
#include "kubm/lifting.hpp"
#include "kubm/trajdata.hpp"

namespace kubm {

/// How the behavioral state is lifted into the Koopman latent.
enum class LiftKind { Mlp, Identity, V1, V2, V3 };

std::string_view to_string(LiftKind kind);
LiftKind lift_kind_from_string(std::string_view s);

struct ModelDims {
  std::size_t d_q = 0;
  std::size_t d_f = 0;
  std::size_t d_g = 0;
  std::size_t d_xi = 0;
  std::size_t d_psi = 0;
  std::size_t d_z = 0;
};

struct TrainConfig {
  double encoder_lr = 5e-4;
  double koopman_lr = 5e-5;
  /// When false the Koopman matrix shares the encoder learning rate.
  bool separate_lr = true;
  int horizon = 15;
  bool identity_init = true;
  bool clip = true;
  double clip_max_norm = 1.0;
  int epochs = 100;
  int batch_size = 32;
  std::uint64_t seed = 0;
  std::vector<std::size_t> hidden{128, 256};
  std::size_t lifting_dim = 256;
  /// Targets z_{t+l} are treated as constants in the gradient.
  bool detach_targets = true;
  /// Anchors near a trajectory end use min(H, T - t) steps instead of being dropped.
  bool truncate_tail = true;
  /// Both learning rates are multiplied by this after every epoch (1 = constant).
  double lr_decay = 1.0;
};

struct TrainingRecord {
  int epochs = 0;
  std::uint64_t seed = 0;
  /// Dataset coherence loss: entry 0 before training, entry e after epoch e.
  std::vector<double> loss;
  /// Spectral radius of K aligned with `loss`.
  std::vector<double> spectral_radius;
  /// Mean mini-batch loss during each epoch (length = epochs).
  std::vector<double> batch_loss;
};

struct KoopmanModel {
  LiftKind lift = LiftKind::Mlp;
  ModelDims dims;
  double rescale = 1.0;
  int horizon = 1;
  Mat K;
  std::optional<SpectralEncoder> encoder;  // set for LiftKind::Mlp
  std::optional<FlowCodec> codec;          // set when features are flow latents
  TrainingRecord record;

  Vec behavioral_state(const Vec& action, const Vec& feature, const std::optional<Vec>& goal) const;
  /// Lifts a behavioral state into the latent space.
  Vec latent(const Vec& xi) const;
  Mat latent_batch(const Mat& xi) const;
  Vec action(const Vec& z) const;
  /// Visual feature block of z, un-rescaled.
  Vec feature(const Vec& z) const;
  /// Offset of the rescaled feature block inside z.
  std::size_t feature_offset() const;
};

// ---------------------------------------------------------------------------
// Closed-form fit

struct EdmdOptions {
  double ridge = 0.0;
};

/// Least-squares K with K x_t ~ y_t for columns of X (inputs) and Y (targets).
/// Minimum-Frobenius-norm among minimisers: singular values below
/// sigma_max * d_z * eps are discarded.
Mat fit_edmd(const Mat& X, const Mat& Y, const EdmdOptions& options = {});
Mat fit_edmd(std::span<const std::pair<Vec, Vec>> pairs, const EdmdOptions& options = {});

/// Fits a model with a hand-crafted (or identity) lifting on consecutive frames
/// of each demo; pairs never cross demo boundaries. The dataset must be augmented.
KoopmanModel fit_edmd_model(Dataset dataset, LiftKind lift, const EdmdOptions& options = {});

// ---------------------------------------------------------------------------
// Multi-step loss

/// Mean over anchors t of sum_{l=1..h_t} ||K^l z_t - z_{t+l}||^2, where each
/// trajectory is a d_z x (T+1) matrix. With truncate_tail, h_t = min(H, T - t)
/// for every t < T; otherwise only anchors with a full horizon count.
double coherence_loss(const Mat& K, std::span<const Mat> trajectories, int horizon,
                      bool truncate_tail = true);

/// Latent trajectories of every demo under `model` (dataset augmented + rescaled).
std::vector<Mat> latent_trajectories(const KoopmanModel& model, const Dataset& dataset);

// ---------------------------------------------------------------------------
// Training

/// Raised when training produces a non-finite loss; carries the last state.
class TrainingError : public Error {
 public:
  TrainingError(const std::string& message, int epoch, std::size_t batch, double last_loss,
                double last_spectral_radius);
  int epoch() const { return epoch_; }
  std::size_t batch() const { return batch_; }
  double last_loss() const { return last_loss_; }
  double last_spectral_radius() const { return last_radius_; }

 private:
  int epoch_;
  std::size_t batch_;
  double last_loss_;
  double last_radius_;
};

struct EpochReport {
  int epoch;
  double loss;
  double batch_loss;
  double spectral_radius;
};
using EpochCallback = std::function<void(const EpochReport&)>;

/// Co-trains a spectral encoder and K with the multi-step coherence loss.
/// The dataset must be augmented and rescaled.
KoopmanModel train(const Dataset& dataset, const TrainConfig& config,
                   const EpochCallback& on_epoch = nullptr);

/// Differentiable coherence loss of one mini-batch of windows, for gradient
/// checks and the training loop. `anchors` holds xi_t column-wise; `targets[l-1]`
/// holds xi_{t+l}, and `valid` (H x B) marks which horizon steps count.
grad::Var coherence_loss_graph(grad::Tape& tape, SpectralEncoder& encoder, grad::Parameter& K,
                               const Mat& anchors, const std::vector<Mat>& targets,
                               const Mat& valid, bool detach_targets);

// ---------------------------------------------------------------------------
// Spectral diagnostics

/// Raised when no eigenvalue estimate reached the requested accuracy.
class SpectralError : public Error {
 public:
  SpectralError(const std::string& message, double last_estimate);
  double last_estimate() const { return last_estimate_; }

 private:
  double last_estimate_;
};

/// Largest eigenvalue modulus. Dense eigensolve for d <= 64; otherwise power
/// iteration, falling back to the dense solve when the iterate does not settle.
double spectral_radius(const Mat& K);

// ---------------------------------------------------------------------------
// Persistence

inline constexpr int kModelFormatVersion = 1;

void save_model(const KoopmanModel& model, const std::filesystem::path& path);
KoopmanModel load_model(const std::filesystem::path& path);
std::string model_to_string(const KoopmanModel& model);
KoopmanModel model_from_string(const std::string& text);

void save_codec(const FlowCodec& codec, const std::filesystem::path& path);
FlowCodec load_codec(const std::filesystem::path& path);

}  // namespace kubm
