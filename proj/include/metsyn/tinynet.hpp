#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "metsyn/volume.hpp"

namespace metsyn {

/// Multi-channel 3D tensor, channel-major then x-fastest.
struct Tensor4 {
  int channels = 1;
  Index3 dims{1, 1, 1};
  std::vector<double> data;

  Tensor4() : data(1, 0.0) {}
  Tensor4(int c, Index3 d, double fill = 0.0);

  std::size_t voxels() const noexcept {
    return static_cast<std::size_t>(dims[0] * dims[1] * dims[2]);
  }
  std::span<double> channel(int c) {
    return {data.data() + static_cast<std::size_t>(c) * voxels(), voxels()};
  }
  std::span<const double> channel(int c) const {
    return {data.data() + static_cast<std::size_t>(c) * voxels(), voxels()};
  }
};

Tensor4 tensor_from_volume(const Volume &v);
Tensor4 tensor_from_mask(const Mask &m);
/// Image channel followed by a constant channel holding `time_fraction`.
Tensor4 tensor_with_time_channel(const Volume &v, double time_fraction);
/// Channel `c` as a Volume on the given spacing.
Volume tensor_channel_volume(const Tensor4 &t, int c, const Spacing3 &spacing);

/// Plain stack of 3x3x3 convolutions (bias, zero padding 1) with ReLU
/// between consecutive convolutions and none after the last.
///
/// Parameters live in one flat vector, layer by layer, each layer holding
/// its weights [out][in][kz][ky][kx] followed by its biases.
class TinyNet {
public:
  explicit TinyNet(std::vector<int> channel_plan, bool relu = true);

  /// 2 -> 8 -> 8 -> 1: image plus time channel in, predicted noise out.
  static TinyNet denoiser_default();
  /// 1 -> 8 -> 16 -> 8 -> 1: image in, lesion logits out.
  static TinyNet segmenter_default();

  /// He-normal weights (std sqrt(2 / (27 in))) drawn in parameter order.
  /// Biases are zero except the last layer's, which start at output_bias.
  void init(std::uint64_t seed, double output_bias = 0.0);

  const std::vector<int> &channel_plan() const noexcept { return plan_; }
  bool relu() const noexcept { return relu_; }
  std::size_t layer_count() const noexcept { return plan_.size() - 1; }
  std::size_t parameter_count() const noexcept { return params_.size(); }
  static std::size_t expected_parameter_count(const std::vector<int> &plan);

  std::span<double> parameters() noexcept { return params_; }
  std::span<const double> parameters() const noexcept { return params_; }
  void set_parameters(std::span<const double> p);

  std::size_t weight_offset(std::size_t layer) const { return offsets_.at(layer); }
  std::size_t bias_offset(std::size_t layer) const;

  /// Intermediate values kept for backward: the input of every layer and
  /// the pre-activation output of every layer.
  struct Activations {
    std::vector<Tensor4> inputs;
    std::vector<Tensor4> pre;
  };

  Tensor4 forward(const Tensor4 &input) const;
  Tensor4 forward(const Tensor4 &input, Activations &acts) const;
  /// Gradient of the loss w.r.t. every parameter (flat, same layout as
  /// parameters()) given dLoss/dOutput.
  std::vector<double> backward(const Activations &acts, const Tensor4 &upstream) const;

  bool operator==(const TinyNet &) const = default;

private:
  std::vector<int> plan_;
  bool relu_;
  std::vector<std::size_t> offsets_;
  std::vector<double> params_;
};

// ---------------------------------------------------------------------------
// Losses.

constexpr double kDiceSmoothing = 1.0;

struct LossValue {
  double loss = 0.0;
  /// dLoss/dOutput, same shape as the network output.
  Tensor4 grad;
};

/// mean((output - target)^2) over every element.
LossValue mse_loss(const Tensor4 &output, const Tensor4 &target);
/// Soft DICE loss on sigmoid(logits) against a binary target.
LossValue dice_loss_with_logits(const Tensor4 &logits, const Tensor4 &target);
/// 1 - (2 sum(p g) + s) / (sum p + sum g + s), s = kDiceSmoothing.
double dice_loss(std::span<const double> probabilities, const Mask &reference);

// ---------------------------------------------------------------------------
// Optimizers.

enum class OptimizerKind { adam, sgd_momentum };

struct OptimizerSpec {
  OptimizerKind kind = OptimizerKind::adam;
  double lr = 1e-3;
  double momentum = 0.9;
  /// Learning rate is multiplied by this factor after every epoch.
  double decay = 1.0;
};

/// Adam with beta1 = 0.9, beta2 = 0.999, eps = 1e-8 and bias correction.
class Adam {
public:
  explicit Adam(std::size_t n) : m_(n, 0.0), v_(n, 0.0) {}
  void step(std::span<double> params, std::span<const double> grad, double lr);

private:
  std::vector<double> m_, v_;
  std::int64_t t_ = 0;
};

/// v <- momentum * v + g;  p <- p - lr * v.
class SgdMomentum {
public:
  SgdMomentum(std::size_t n, double momentum) : v_(n, 0.0), momentum_(momentum) {}
  void step(std::span<double> params, std::span<const double> grad, double lr);

private:
  std::vector<double> v_;
  double momentum_;
};

// ---------------------------------------------------------------------------
// Training.

enum class LossKind { mse_eps, dice_loss };

struct TrainConfig {
  OptimizerSpec optimizer;
  LossKind loss = LossKind::mse_eps;
  int epochs = 10;
  int patience = 5;
  int batch = 4;
  std::uint64_t seed = 0;

  void validate() const;

  /// Adam, lr 1e-4, decay 0.999, MSE on the noise.
  static TrainConfig full_scale_denoiser();
  /// SGD momentum 0.9, lr 0.025, DICE loss, patience 200; decay 0.999 for
  /// real data and 0.99 for synthetic sets.
  static TrainConfig full_scale_segmenter(bool synthetic_set);
  /// Fine-tuning: lr 0.001, no decay, patience 25.
  static TrainConfig full_scale_finetune();
};

struct TrainingPair {
  Tensor4 input;
  Tensor4 target;
};

struct EpochRecord {
  int epoch = 0;
  double train_loss = 0.0;
  double val_loss = 0.0;
  double lr = 0.0;
};

struct TrainResult {
  TinyNet net;
  std::vector<EpochRecord> history;
  /// Validation loss of the starting parameters.
  double initial_val_loss = 0.0;
  double best_val_loss = 0.0;
  /// -1 when no epoch improved on the starting parameters.
  int best_epoch = -1;
  bool early_stopped = false;
};

/// Mini-batch training with early stopping.
///
/// The dataset is permuted once with Rng(seed) (Fisher-Yates, below(i+1)
/// for i = n-1 .. 1); the last floor(0.2 n) entries validate, the rest train
/// (all entries validate when that is zero). Epoch k reshuffles the training
/// part with Rng(derive(seed, {1, k})), averages per-sample gradients over
/// each batch and steps with lr0 * decay^k. Training stops once validation
/// loss fails to improve for `patience` epochs; the best parameters are
/// returned. A non-finite loss throws NumericError.
TrainResult train(const TinyNet &net, const std::vector<TrainingPair> &dataset,
                  const TrainConfig &cfg);

/// Mean loss of the net over a set of pairs.
double evaluate_loss(const TinyNet &net, const std::vector<TrainingPair> &pairs, LossKind loss);

std::string history_csv(const std::vector<EpochRecord> &history);

/// Binary lesion mask: sigmoid(logit) > 0.5.
Mask segment(const TinyNet &net, const Volume &image);

// Checkpoints: JSON header, '\n', NUL, little-endian f32 parameters.
void save_checkpoint(const TinyNet &net, const std::filesystem::path &path, std::uint64_t seed,
                     int epoch);
TinyNet load_checkpoint(const std::filesystem::path &path);

} // namespace metsyn
