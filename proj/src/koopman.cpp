#include "kubm/koopman.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>

#include <json.hpp>

#include "kubm/random.hpp"

namespace kubm {

using nlohmann::json;

std::string_view to_string(LiftKind kind) {
  switch (kind) {
    case LiftKind::Mlp: return "mlp";
    case LiftKind::Identity: return "identity";
    case LiftKind::V1: return "v1";
    case LiftKind::V2: return "v2";
    case LiftKind::V3: return "v3";
  }
  return "?";
}

LiftKind lift_kind_from_string(std::string_view s) {
  if (s == "mlp") return LiftKind::Mlp;
  if (s == "identity") return LiftKind::Identity;
  if (s == "v1" || s == "V1") return LiftKind::V1;
  if (s == "v2" || s == "V2") return LiftKind::V2;
  if (s == "v3" || s == "V3") return LiftKind::V3;
  fail(ErrorCode::InvalidArgument, "unknown lift kind '" + std::string(s) + "'");
}

namespace {

LiftVariant variant_of(LiftKind kind) {
  switch (kind) {
    case LiftKind::V1: return LiftVariant::V1;
    case LiftKind::V2: return LiftVariant::V2;
    case LiftKind::V3: return LiftVariant::V3;
    default: break;
  }
  fail(ErrorCode::InvalidArgument, "lift kind has no polynomial variant");
}

bool is_polynomial(LiftKind kind) {
  return kind == LiftKind::V1 || kind == LiftKind::V2 || kind == LiftKind::V3;
}

Mat state_matrix(const Demonstration& demo, double c) {
  const Vec first = behavioral_state(demo, 0, c);
  Mat xi(first.size(), static_cast<Eigen::Index>(demo.length()));
  xi.col(0) = first;
  for (std::size_t t = 1; t < demo.length(); ++t) {
    xi.col(static_cast<Eigen::Index>(t)) = behavioral_state(demo, t, c);
  }
  return xi;
}

void require_prepared(const Dataset& ds) {
  if (ds.demos.empty()) fail(ErrorCode::EmptyDataset, "dataset has no demonstrations");
  for (const auto& d : ds.demos) {
    if (!d.augmented) fail(ErrorCode::InvalidArgument, "dataset must be augmented before fitting");
  }
  if (!ds.rescale_factor) fail(ErrorCode::InvalidArgument, "dataset rescale factor is not set");
}

}  // namespace

// ---------------------------------------------------------------------------
// KoopmanModel

Vec KoopmanModel::behavioral_state(const Vec& action, const Vec& feature,
                                   const std::optional<Vec>& goal) const {
  if (static_cast<std::size_t>(action.size()) != dims.d_q ||
      static_cast<std::size_t>(feature.size()) != dims.d_f ||
      (goal ? static_cast<std::size_t>(goal->size()) : 0) != dims.d_g) {
    fail(ErrorCode::DimensionMismatch, "initial condition does not match model dimensions");
  }
  return kubm::behavioral_state(action, feature, goal, rescale);
}

Vec KoopmanModel::latent(const Vec& xi) const {
  if (static_cast<std::size_t>(xi.size()) != dims.d_xi) {
    fail(ErrorCode::DimensionMismatch, "behavioral state has " + std::to_string(xi.size()) +
                                           " entries, model expects " + std::to_string(dims.d_xi));
  }
  switch (lift) {
    case LiftKind::Mlp: return assemble_latent(xi, encoder->encode(xi));
    case LiftKind::Identity: return xi;
    default: {
      const auto dq = static_cast<Eigen::Index>(dims.d_q);
      return kubm::lift(xi.head(dq), xi.tail(xi.size() - dq), variant_of(lift));
    }
  }
}

Mat KoopmanModel::latent_batch(const Mat& xi) const {
  if (static_cast<std::size_t>(xi.rows()) != dims.d_xi) {
    fail(ErrorCode::DimensionMismatch, "behavioral state batch has wrong row count");
  }
  if (lift == LiftKind::Mlp) {
    Mat z(static_cast<Eigen::Index>(dims.d_z), xi.cols());
    z << xi, encoder->encode_batch(xi);
    return z;
  }
  if (lift == LiftKind::Identity) return xi;
  Mat z(static_cast<Eigen::Index>(dims.d_z), xi.cols());
  for (Eigen::Index c = 0; c < xi.cols(); ++c) z.col(c) = latent(xi.col(c));
  return z;
}

Vec KoopmanModel::action(const Vec& z) const { return extract_action(z, dims.d_q); }

std::size_t KoopmanModel::feature_offset() const {
  return is_polynomial(lift) ? 2 * dims.d_q : dims.d_q;
}

Vec KoopmanModel::feature(const Vec& z) const {
  const auto off = static_cast<Eigen::Index>(feature_offset());
  const auto df = static_cast<Eigen::Index>(dims.d_f);
  if (off + df > z.size()) fail(ErrorCode::DimensionMismatch, "latent too short for feature block");
  return z.segment(off, df) / rescale;
}

// ---------------------------------------------------------------------------
// EDMD

Mat fit_edmd(const Mat& X, const Mat& Y, const EdmdOptions& options) {
  if (X.cols() == 0) fail(ErrorCode::EmptyDataset, "EDMD needs at least one pair");
  if (X.cols() != Y.cols() || X.rows() != Y.rows()) {
    fail(ErrorCode::DimensionMismatch, "EDMD input and target matrices differ in shape");
  }
  if (options.ridge < 0.0) fail(ErrorCode::InvalidArgument, "ridge must be non-negative");
  Eigen::BDCSVD<Mat> svd(X, Eigen::ComputeThinU | Eigen::ComputeThinV);
  const Vec& s = svd.singularValues();
  const double cutoff = (s.size() > 0 ? s(0) : 0.0) * static_cast<double>(X.rows()) *
                        std::numeric_limits<double>::epsilon();
  Vec inv = Vec::Zero(s.size());
  for (Eigen::Index i = 0; i < s.size(); ++i) {
    if (s(i) > cutoff) inv(i) = s(i) / (s(i) * s(i) + options.ridge);
  }
  // K = Y V diag(inv) U^T
  return (Y * svd.matrixV()) * inv.asDiagonal() * svd.matrixU().transpose();
}

Mat fit_edmd(std::span<const std::pair<Vec, Vec>> pairs, const EdmdOptions& options) {
  if (pairs.empty()) fail(ErrorCode::EmptyDataset, "EDMD needs at least one pair");
  const Eigen::Index d = pairs.front().first.size();
  Mat X(d, static_cast<Eigen::Index>(pairs.size()));
  Mat Y(d, static_cast<Eigen::Index>(pairs.size()));
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    if (pairs[i].first.size() != d || pairs[i].second.size() != d) {
      fail(ErrorCode::DimensionMismatch, "EDMD pair " + std::to_string(i) + " has wrong length");
    }
    X.col(static_cast<Eigen::Index>(i)) = pairs[i].first;
    Y.col(static_cast<Eigen::Index>(i)) = pairs[i].second;
  }
  return fit_edmd(X, Y, options);
}

KoopmanModel fit_edmd_model(Dataset ds, LiftKind lift, const EdmdOptions& options) {
  if (lift == LiftKind::Mlp) fail(ErrorCode::InvalidArgument, "EDMD needs a fixed lifting");
  if (!ds.rescale_factor) compute_rescale(ds);
  require_prepared(ds);
  KoopmanModel model;
  model.lift = lift;
  model.rescale = *ds.rescale_factor;
  model.horizon = 1;
  model.dims.d_q = ds.d_q;
  model.dims.d_f = ds.d_f;
  model.dims.d_g = ds.d_g;
  model.dims.d_xi = ds.state_dim();
  model.dims.d_z = lift == LiftKind::Identity
                       ? model.dims.d_xi
                       : lifted_dim(ds.d_q, ds.d_f + ds.d_g, variant_of(lift));
  model.dims.d_psi = model.dims.d_z - model.dims.d_xi;

  const auto trajectories = latent_trajectories(model, ds);
  Eigen::Index pairs = 0;
  for (const auto& z : trajectories) pairs += z.cols() - 1;
  Mat X(static_cast<Eigen::Index>(model.dims.d_z), pairs);
  Mat Y(static_cast<Eigen::Index>(model.dims.d_z), pairs);
  Eigen::Index k = 0;
  for (const auto& z : trajectories) {
    const Eigen::Index n = z.cols() - 1;
    X.middleCols(k, n) = z.leftCols(n);
    Y.middleCols(k, n) = z.rightCols(n);
    k += n;
  }
  model.K = fit_edmd(X, Y, options);
  model.record.loss.push_back(coherence_loss(model.K, trajectories, 1));
  model.record.spectral_radius.push_back(spectral_radius(model.K));
  return model;
}

// ---------------------------------------------------------------------------
// Coherence loss

double coherence_loss(const Mat& K, std::span<const Mat> trajectories, int horizon,
                      bool truncate_tail) {
  if (horizon < 1) fail(ErrorCode::InvalidArgument, "horizon must be at least 1");
  if (K.rows() != K.cols()) fail(ErrorCode::DimensionMismatch, "K must be square");
  double total = 0.0;
  std::size_t anchors = 0;
  for (const Mat& z : trajectories) {
    if (z.rows() != K.rows()) fail(ErrorCode::DimensionMismatch, "latent size differs from K");
    if (z.cols() < 2) fail(ErrorCode::InvalidArgument, "trajectory shorter than 2 frames");
    const Eigen::Index T = z.cols() - 1;
    // Anchor columns: all t < T when truncating, else only t <= T - H.
    const Eigen::Index n_anchor = truncate_tail ? T : std::max<Eigen::Index>(0, T - horizon + 1);
    if (n_anchor == 0) continue;
    Mat p = z.leftCols(n_anchor);
    for (int l = 1; l <= horizon; ++l) {
      const Eigen::Index valid = std::min<Eigen::Index>(n_anchor, T - l + 1);
      if (valid <= 0) break;
      p = K * p.leftCols(valid);
      total += (p - z.middleCols(l, valid)).squaredNorm();
    }
    anchors += static_cast<std::size_t>(n_anchor);
  }
  if (anchors == 0) fail(ErrorCode::InvalidArgument, "no trajectory is long enough for the horizon");
  return total / static_cast<double>(anchors);
}

std::vector<Mat> latent_trajectories(const KoopmanModel& model, const Dataset& ds) {
  std::vector<Mat> out;
  out.reserve(ds.demos.size());
  for (const auto& d : ds.demos) out.push_back(model.latent_batch(state_matrix(d, model.rescale)));
  return out;
}

grad::Var coherence_loss_graph(grad::Tape& tape, SpectralEncoder& encoder, grad::Parameter& K,
                               const Mat& anchors, const std::vector<Mat>& targets,
                               const Mat& valid, bool detach_targets) {
  const Eigen::Index batch = anchors.cols();
  if (batch == 0) fail(ErrorCode::InvalidArgument, "empty batch");
  if (valid.rows() != static_cast<Eigen::Index>(targets.size()) || valid.cols() != batch) {
    fail(ErrorCode::DimensionMismatch, "validity mask shape");
  }
  grad::Var k = tape.param(K);
  grad::Var xi = tape.constant(anchors);
  grad::Var z = tape.vstack(xi, encoder.forward(tape, xi));
  const Eigen::Index dz = z.value().rows();
  grad::Var total = tape.constant(Mat::Zero(1, 1));
  for (std::size_t l = 0; l < targets.size(); ++l) {
    const auto row = valid.row(static_cast<Eigen::Index>(l));
    if ((row.array() == 0.0).all()) break;
    z = tape.matmul(k, z);
    grad::Var target;
    if (detach_targets) {
      Mat tz(dz, batch);
      tz << targets[l], encoder.encode_batch(targets[l]);
      target = tape.constant(std::move(tz));
    } else {
      grad::Var txi = tape.constant(targets[l]);
      target = tape.vstack(txi, encoder.forward(tape, txi));
    }
    grad::Var r = tape.mask(tape.sub(z, target), row.replicate(dz, 1));
    total = tape.add(total, tape.sum_squares(r));
  }
  return tape.scale(total, 1.0 / static_cast<double>(batch));
}

// ---------------------------------------------------------------------------
// Training

TrainingError::TrainingError(const std::string& message, int epoch, std::size_t batch,
                             double last_loss, double last_spectral_radius)
    : Error(ErrorCode::NonFiniteLoss,
            message + " (epoch " + std::to_string(epoch) + ", batch " + std::to_string(batch) +
                ", last loss " + std::to_string(last_loss) + ", spectral radius " +
                std::to_string(last_spectral_radius) + ")"),
      epoch_(epoch),
      batch_(batch),
      last_loss_(last_loss),
      last_radius_(last_spectral_radius) {}

KoopmanModel train(const Dataset& ds, const TrainConfig& config, const EpochCallback& on_epoch) {
  require_prepared(ds);
  if (config.horizon < 1) fail(ErrorCode::InvalidArgument, "horizon must be at least 1");
  if (!(config.encoder_lr > 0.0) || !(config.koopman_lr > 0.0)) {
    fail(ErrorCode::InvalidArgument, "learning rates must be positive");
  }
  if (config.batch_size < 1 || config.epochs < 0) fail(ErrorCode::InvalidArgument, "bad batch size or epochs");
  if (!(config.lr_decay > 0.0 && config.lr_decay <= 1.0)) fail(ErrorCode::InvalidArgument, "lr_decay must be in (0, 1]");
  if (config.clip && !(config.clip_max_norm > 0.0)) fail(ErrorCode::InvalidArgument, "clip norm must be positive");

  KoopmanModel model;
  model.lift = LiftKind::Mlp;
  model.rescale = *ds.rescale_factor;
  model.horizon = config.horizon;
  model.dims.d_q = ds.d_q;
  model.dims.d_f = ds.d_f;
  model.dims.d_g = ds.d_g;
  model.dims.d_xi = ds.state_dim();
  model.dims.d_psi = config.lifting_dim;
  model.dims.d_z = model.dims.d_xi + model.dims.d_psi;
  model.encoder.emplace(model.dims.d_xi, config.hidden, config.lifting_dim, Rng::derive(config.seed, 1));
  model.record.seed = config.seed;

  const auto dz = static_cast<Eigen::Index>(model.dims.d_z);
  grad::Parameter K("koopman.K", Mat::Identity(dz, dz));
  if (!config.identity_init) {
    Rng rng(Rng::derive(config.seed, 2));
    const double bound = 1.0 / std::sqrt(static_cast<double>(dz));
    for (Eigen::Index i = 0; i < K.value.size(); ++i) K.value.data()[i] = rng.uniform(-bound, bound);
  }
  model.K = K.value;

  SpectralEncoder& encoder = *model.encoder;
  const double k_lr = config.separate_lr ? config.koopman_lr : config.encoder_lr;
  grad::Adam opt({grad::ParamGroup{"encoder", config.encoder_lr, encoder.parameters()},
                  grad::ParamGroup{"koopman", k_lr, {&K}}});
  const std::vector<grad::Parameter*> params = opt.parameters();

  std::vector<Mat> states;
  for (const auto& d : ds.demos) states.push_back(state_matrix(d, model.rescale));
  struct Window {
    std::size_t demo;
    Eigen::Index t;
  };
  std::vector<Window> windows;
  for (std::size_t i = 0; i < states.size(); ++i) {
    const Eigen::Index T = states[i].cols() - 1;
    const Eigen::Index last = config.truncate_tail ? T - 1 : T - config.horizon;
    for (Eigen::Index t = 0; t <= last; ++t) windows.push_back({i, t});
  }
  if (windows.empty()) fail(ErrorCode::InvalidArgument, "no training windows: trajectories too short");

  auto evaluate = [&]() {
    return coherence_loss(model.K, latent_trajectories(model, ds), config.horizon, config.truncate_tail);
  };
  model.record.loss.push_back(evaluate());
  model.record.spectral_radius.push_back(spectral_radius(model.K));
  if (on_epoch) {
    on_epoch({0, model.record.loss.back(), model.record.loss.back(), model.record.spectral_radius.back()});
  }

  Rng shuffle_rng(Rng::derive(config.seed, 3));
  const auto dxi = static_cast<Eigen::Index>(model.dims.d_xi);
  const auto H = static_cast<std::size_t>(config.horizon);
  const auto B = static_cast<std::size_t>(config.batch_size);
  for (int epoch = 1; epoch <= config.epochs; ++epoch) {
    shuffle_rng.shuffle(windows);
    double running = 0.0;
    std::size_t batch_index = 0;
    for (std::size_t start = 0; start < windows.size(); start += B, ++batch_index) {
      const std::size_t stop = std::min(windows.size(), start + B);
      const auto n = static_cast<Eigen::Index>(stop - start);
      Mat anchors(dxi, n);
      std::vector<Mat> targets(H, Mat::Zero(dxi, n));
      Mat valid = Mat::Zero(static_cast<Eigen::Index>(H), n);
      for (Eigen::Index b = 0; b < n; ++b) {
        const Window& w = windows[start + static_cast<std::size_t>(b)];
        const Mat& xs = states[w.demo];
        anchors.col(b) = xs.col(w.t);
        for (std::size_t l = 1; l <= H; ++l) {
          const Eigen::Index idx = w.t + static_cast<Eigen::Index>(l);
          if (idx >= xs.cols()) break;
          targets[l - 1].col(b) = xs.col(idx);
          valid(static_cast<Eigen::Index>(l - 1), b) = 1.0;
        }
      }
      opt.zero_grad();
      grad::Tape tape;
      grad::Var loss =
          coherence_loss_graph(tape, encoder, K, anchors, targets, valid, config.detach_targets);
      const double value = loss.value()(0, 0);
      if (!std::isfinite(value)) {
        throw TrainingError("coherence loss is not finite", epoch, batch_index,
                            model.record.loss.back(), model.record.spectral_radius.back());
      }
      tape.backward(loss);
      if (config.clip) grad::clip_global_norm(params, config.clip_max_norm);
      try {
        opt.step();
      } catch (const Error&) {
        throw TrainingError("gradient is not finite", epoch, batch_index, value,
                            model.record.spectral_radius.back());
      }
      running += value * static_cast<double>(n);
    }
    if (config.lr_decay != 1.0) {
      const double f = std::pow(config.lr_decay, epoch);
      opt.set_learning_rate(0, config.encoder_lr * f);
      opt.set_learning_rate(1, k_lr * f);
    }
    model.K = K.value;
    const double eval = evaluate();
    const double rho = std::isfinite(eval) ? spectral_radius(model.K) : std::nan("");
    if (!std::isfinite(eval)) {
      throw TrainingError("dataset loss is not finite", epoch, batch_index, model.record.loss.back(),
                          model.record.spectral_radius.back());
    }
    model.record.batch_loss.push_back(running / static_cast<double>(windows.size()));
    model.record.loss.push_back(eval);
    model.record.spectral_radius.push_back(rho);
    model.record.epochs = epoch;
    if (on_epoch) on_epoch({epoch, eval, model.record.batch_loss.back(), rho});
  }
  for (auto* p : encoder.parameters()) p->zero_grad();
  return model;
}

// ---------------------------------------------------------------------------
// Spectral radius

SpectralError::SpectralError(const std::string& message, double last_estimate)
    : Error(ErrorCode::NonConvergence, message + " (last estimate " + std::to_string(last_estimate) + ")"),
      last_estimate_(last_estimate) {}

namespace {

double dense_spectral_radius(const Mat& K, double last_estimate) {
  Eigen::EigenSolver<Mat> es;
  es.setMaxIterations(1000);
  es.compute(K, false);
  if (es.info() != Eigen::Success) {
    throw SpectralError("dense eigensolver did not converge", last_estimate);
  }
  return es.eigenvalues().cwiseAbs().maxCoeff();
}

}  // namespace

double spectral_radius(const Mat& K) {
  if (K.rows() != K.cols()) fail(ErrorCode::DimensionMismatch, "spectral radius needs a square matrix");
  if (!K.allFinite()) fail(ErrorCode::InvalidArgument, "matrix has non-finite entries");
  const Eigen::Index n = K.rows();
  if (n == 0) return 0.0;
  if (n <= 64) return dense_spectral_radius(K, std::nan(""));

  Vec v(n);
  for (Eigen::Index i = 0; i < n; ++i) v(i) = 1.0 + 0.5 * std::sin(static_cast<double>(i + 1));
  double estimate = std::nan("");
  constexpr int kMaxIterations = 300;
  for (int it = 0; it < kMaxIterations; ++it) {
    const Vec w = K * v;
    const double wn = w.norm();
    if (wn == 0.0) break;
    const double mu = v.dot(w) / v.dot(v);
    estimate = std::abs(mu);
    // A small residual means v is (numerically) a real dominant eigenvector.
    if ((w - mu * v).norm() <= 1e-11 * wn) return estimate;
    v = w / wn;
  }
  return dense_spectral_radius(K, estimate);
}

// ---------------------------------------------------------------------------
// Persistence

namespace {

json matrix_to_json(const Mat& m) {
  json data = json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r)
    for (Eigen::Index c = 0; c < m.cols(); ++c) data.push_back(m(r, c));
  return {{"rows", m.rows()}, {"cols", m.cols()}, {"data", std::move(data)}};
}

Mat matrix_from_json(const json& j) {
  const auto rows = j.at("rows").get<Eigen::Index>();
  const auto cols = j.at("cols").get<Eigen::Index>();
  const json& data = j.at("data");
  if (rows < 0 || cols < 0 || data.size() != static_cast<std::size_t>(rows * cols)) {
    throw std::invalid_argument("matrix payload size mismatch");
  }
  Mat m(rows, cols);
  std::size_t k = 0;
  for (Eigen::Index r = 0; r < rows; ++r)
    for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = data[k++].get<double>();
  return m;
}

json doubles_to_json(const std::vector<double>& v) { return json(v); }

json codec_to_json(const FlowCodec& codec) {
  json j;
  auto& c = const_cast<FlowCodec&>(codec);
  for (const grad::Parameter* p : c.parameters()) j[p->name] = matrix_to_json(p->value);
  return j;
}

FlowCodec codec_from_json(const json& j) {
  FlowCodec codec;
  for (grad::Parameter* p : codec.parameters()) {
    Mat m = matrix_from_json(j.at(p->name));
    if (m.rows() != p->value.rows() || m.cols() != p->value.cols()) {
      throw std::invalid_argument("codec parameter '" + p->name + "' has wrong shape");
    }
    p->value = std::move(m);
    p->zero_grad();
  }
  return codec;
}

json model_to_json(const KoopmanModel& model) {
  json j;
  j["format"] = "kubm-model";
  j["format_version"] = kModelFormatVersion;
  j["lift"] = std::string(to_string(model.lift));
  j["dims"] = {{"d_q", model.dims.d_q},     {"d_f", model.dims.d_f},   {"d_g", model.dims.d_g},
               {"d_xi", model.dims.d_xi},   {"d_psi", model.dims.d_psi}, {"d_z", model.dims.d_z}};
  j["rescale"] = model.rescale;
  j["horizon"] = model.horizon;
  j["K"] = matrix_to_json(model.K);
  if (model.encoder) {
    json weights = json::array();
    json biases = json::array();
    for (const auto& w : model.encoder->layers_weights()) weights.push_back(matrix_to_json(w.value));
    for (const auto& b : model.encoder->layers_biases()) biases.push_back(matrix_to_json(b.value));
    j["encoder"] = {{"weights", std::move(weights)}, {"biases", std::move(biases)}};
  }
  if (model.codec) j["codec"] = codec_to_json(*model.codec);
  j["training"] = {{"epochs", model.record.epochs},
                   {"seed", model.record.seed},
                   {"loss", doubles_to_json(model.record.loss)},
                   {"spectral_radius", doubles_to_json(model.record.spectral_radius)},
                   {"batch_loss", doubles_to_json(model.record.batch_loss)}};
  return j;
}

std::vector<double> doubles_from_json(const json& j) {
  std::vector<double> out;
  for (const auto& x : j) out.push_back(x.is_null() ? std::nan("") : x.get<double>());
  return out;
}

KoopmanModel model_from_json(const json& j) {
  if (!j.is_object() || j.value("format", std::string{}) != "kubm-model") {
    throw std::invalid_argument("not a kubm model file");
  }
  const int version = j.at("format_version").get<int>();
  if (version != kModelFormatVersion) {
    fail(ErrorCode::VersionMismatch, "model format version " + std::to_string(version) +
                                         ", this build reads " + std::to_string(kModelFormatVersion));
  }
  KoopmanModel m;
  m.lift = lift_kind_from_string(j.at("lift").get<std::string>());
  const json& d = j.at("dims");
  m.dims = {d.at("d_q").get<std::size_t>(),  d.at("d_f").get<std::size_t>(),
            d.at("d_g").get<std::size_t>(),  d.at("d_xi").get<std::size_t>(),
            d.at("d_psi").get<std::size_t>(), d.at("d_z").get<std::size_t>()};
  m.rescale = j.at("rescale").get<double>();
  m.horizon = j.at("horizon").get<int>();
  m.K = matrix_from_json(j.at("K"));
  if (j.contains("encoder")) {
    std::vector<Mat> weights, biases;
    for (const auto& w : j.at("encoder").at("weights")) weights.push_back(matrix_from_json(w));
    for (const auto& b : j.at("encoder").at("biases")) biases.push_back(matrix_from_json(b));
    m.encoder = SpectralEncoder::from_weights(std::move(weights), std::move(biases));
  }
  if (j.contains("codec")) m.codec = codec_from_json(j.at("codec"));
  const json& tr = j.at("training");
  m.record.epochs = tr.at("epochs").get<int>();
  m.record.seed = tr.at("seed").get<std::uint64_t>();
  m.record.loss = doubles_from_json(tr.at("loss"));
  m.record.spectral_radius = doubles_from_json(tr.at("spectral_radius"));
  m.record.batch_loss = doubles_from_json(tr.at("batch_loss"));

  const auto dz = static_cast<Eigen::Index>(m.dims.d_z);
  if (m.K.rows() != dz || m.K.cols() != dz) throw std::invalid_argument("K does not match d_z");
  if (m.dims.d_xi != m.dims.d_q + m.dims.d_f + m.dims.d_g) throw std::invalid_argument("inconsistent d_xi");
  if (m.dims.d_z != m.dims.d_xi + m.dims.d_psi) throw std::invalid_argument("inconsistent d_z");
  if (m.lift == LiftKind::Mlp) {
    if (!m.encoder || m.encoder->input_dim() != m.dims.d_xi || m.encoder->output_dim() != m.dims.d_psi) {
      throw std::invalid_argument("encoder does not match model dimensions");
    }
  } else if (is_polynomial(m.lift)) {
    if (m.dims.d_z != lifted_dim(m.dims.d_q, m.dims.d_f + m.dims.d_g, variant_of(m.lift))) {
      throw std::invalid_argument("lifted dimension does not match variant");
    }
  }
  if (!(m.rescale > 0.0)) throw std::invalid_argument("rescale factor must be positive");
  return m;
}

}  // namespace

std::string model_to_string(const KoopmanModel& model) { return model_to_json(model).dump(); }

KoopmanModel model_from_string(const std::string& text) {
  try {
    return model_from_json(json::parse(text));
  } catch (const Error&) {
    throw;
  } catch (const std::exception& e) {
    fail(ErrorCode::CorruptFile, e.what());
  }
}

void save_model(const KoopmanModel& model, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) fail(ErrorCode::Io, "cannot write model '" + path.string() + "'");
  out << model_to_string(model) << '\n';
  if (!out) fail(ErrorCode::Io, "write failed for '" + path.string() + "'");
}

KoopmanModel load_model(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorCode::Io, "cannot open model '" + path.string() + "'");
  std::stringstream buffer;
  buffer << in.rdbuf();
  return model_from_string(buffer.str());
}

void save_codec(const FlowCodec& codec, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) fail(ErrorCode::Io, "cannot write codec '" + path.string() + "'");
  json j = {{"format", "kubm-flow-codec"}, {"format_version", kModelFormatVersion},
            {"params", codec_to_json(codec)}};
  out << j.dump() << '\n';
}

FlowCodec load_codec(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorCode::Io, "cannot open codec '" + path.string() + "'");
  std::stringstream buffer;
  buffer << in.rdbuf();
  try {
    const json j = json::parse(buffer.str());
    if (j.value("format", std::string{}) != "kubm-flow-codec") throw std::invalid_argument("not a codec file");
    if (j.at("format_version").get<int>() != kModelFormatVersion) {
      fail(ErrorCode::VersionMismatch, "codec format version");
    }
    return codec_from_json(j.at("params"));
  } catch (const Error&) {
    throw;
  } catch (const std::exception& e) {
    fail(ErrorCode::CorruptFile, e.what());
  }
}

}  // namespace kubm
