#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "scopeqa/media/frame.hpp"
#include "scopeqa/models/checkpoint.hpp"
#include "scopeqa/nn/ops.hpp"

namespace scopeqa::models {

using nn::BatchNormMode;
using nn::Parameter;
using nn::Tape;
using nn::Tensor;
using nn::Var;

enum class HeadKind { kClassification, kRegression };

struct ResNetConfig {
  std::size_t in_channels = 3;
  std::size_t stem_channels = 16;
  std::size_t stem_stride = 2;
  std::vector<std::size_t> stage_channels = {16, 32, 64};
  std::size_t blocks_per_stage = 2;
  HeadKind head = HeadKind::kClassification;
  std::size_t outputs = 20;
  std::size_t crop = 64;
  double bn_momentum = 0.1;
  double bn_eps = 1e-7;

  std::string variant() const;
  void validate() const;
  nlohmann::json to_json() const;
  static ResNetConfig from_json(const nlohmann::json& j);
};

// Compact residual network: 3x3 stem, stages of basic blocks (two 3x3
// conv-BN pairs with a projected shortcut on stride or width changes),
// stride-2 downsampling at each stage after the first, global average
// pooling, then a fully connected head.
class ResNet {
 public:
  ResNet() = default;
  ResNet(const ResNetConfig& config, std::uint64_t seed);

  const ResNetConfig& config() const { return config_; }
  std::size_t feature_dim() const { return config_.stage_channels.back(); }

  std::vector<Parameter<float>*> parameters();
  std::vector<Parameter<float>*> backbone_parameters();
  std::vector<Parameter<float>*> head_parameters();
  std::vector<const Parameter<float>*> parameters() const;
  std::size_t parameter_count() const;

  // x: N x C x crop x crop. BN statistics update only in train mode.
  Var features(Tape<float>& tape, Var x, BatchNormMode mode, bool trainable = true);
  Var head(Tape<float>& tape, Var features, bool trainable = true);
  Var forward(Tape<float>& tape, Var x, BatchNormMode mode, bool trainable = true);

  // Eval-mode inference without recording.
  Tensor<float> infer_features(const Tensor<float>& x);
  Tensor<float> infer(const Tensor<float>& x);

  // Replaces the running BN statistics with the plain average of batch
  // statistics over `batches` (train-mode forward, no parameter change).
  void recalibrate_batch_norm(std::span<const Tensor<float>> batches);

  // New head with `outputs` units. Regression heads use N(0, weight_std^2)
  // weights; classification heads use a fan-in scaled uniform init.
  void replace_head(HeadKind kind, std::size_t outputs, std::uint64_t seed,
                    double weight_std = 0.01);

  // Tensors are written as prefix + name.
  void export_tensors(Checkpoint& ckpt, const std::string& prefix = "") const;
  void import_tensors(const Checkpoint& ckpt, const std::string& prefix = "");
  Checkpoint to_checkpoint(const nlohmann::json& metadata = nlohmann::json::object()) const;
  static ResNet from_checkpoint(const Checkpoint& ckpt);

 private:
  struct BnLayer {
    std::size_t gamma, beta, stats;
  };
  struct Block {
    std::size_t conv1, conv2, proj = SIZE_MAX;
    BnLayer bn1, bn2, bn_proj{};
    std::size_t stride;
  };

  std::size_t add_param(std::string name, Tensor<float> value);
  BnLayer add_bn(const std::string& name, std::size_t channels);
  Var bn(Tape<float>& tape, Var x, const BnLayer& layer, BatchNormMode mode, bool trainable);

  ResNetConfig config_;
  std::vector<Parameter<float>> params_;
  std::vector<nn::BatchNormStats<float>> stats_;
  std::vector<std::string> stats_names_;
  std::size_t stem_ = 0;
  BnLayer stem_bn_{};
  std::vector<Block> blocks_;
  std::size_t head_w_ = 0, head_b_ = 0;
};

// Stacks equally sized frames into N x 3 x H x W.
Tensor<float> frames_to_tensor(std::span<const media::Frame> frames);

// Center crop to crop x crop; frames smaller than the crop are rejected.
media::Frame fit_to_crop(const media::Frame& frame, std::size_t crop);

// Eval-mode softmax probabilities, N x outputs.
Tensor<float> fdc_forward(ResNet& model, const Tensor<float>& batch);
// Eval-mode regression scores, one per frame.
std::vector<float> fqp_forward(ResNet& model, const Tensor<float>& batch);

// Copies the backbone and attaches a fresh 5-way classification head.
ResNet fine_tune_distortion_only(const ResNet& fdc, std::uint64_t seed);
// Copies the backbone and attaches a single-neuron regression head with
// N(0, 0.01^2) weights and zero bias.
ResNet fqp_from_fdc(const ResNet& fdc, std::uint64_t seed);

}  // namespace scopeqa::models
