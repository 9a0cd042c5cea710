#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "scopeqa/media/manifest.hpp"
#include "scopeqa/models/resnet.hpp"
#include "scopeqa/nn/optim.hpp"
#include "scopeqa/pooling/vqp.hpp"
#include "scopeqa/train/data.hpp"

namespace scopeqa::train {

struct EpochLog {
  int epoch = 0;
  double lr = 0.0;
  double train_loss = 0.0;
  double val_loss = 0.0;
  std::optional<double> accuracy;
};

struct TrainLog {
  std::vector<EpochLog> rows;

  // Columns epoch,lr,train_loss,val_loss[,accuracy].
  std::string to_csv() const;
  void write_csv(const std::filesystem::path& path) const;
  std::vector<double> val_losses() const;
  std::vector<double> train_losses() const;
};

struct TrainConfig {
  double lr = 0.01;
  int epochs = 30;
  std::size_t batch = 32;   // frames for FDC/FQP, clips for VQP
  std::size_t n_f = 25;     // sampled frames per clip
  std::size_t crop = 64;
  bool augment = true;      // random crop + flip for frame-level training
  bool augment_rotations = true;  // adds vertical flips and transposes
  std::uint64_t seed = kDefaultSeed;
  double val_fraction = 0.2;
  int threads = 1;          // frame loading only
  bool plateau = true;
  // Frame training: batches of center crops used to re-estimate the BN
  // running statistics after every epoch (0 keeps the momentum estimates).
  std::size_t bn_recalibration_batches = 8;
  nn::PlateauSchedule schedule;
  std::function<void(const EpochLog&)> on_epoch;  // progress hook
};

// Defaults per task.
TrainConfig fdc_defaults();
TrainConfig fdc5_defaults();
TrainConfig fqp_defaults();
TrainConfig vqp_defaults();

// Training and validation clips of a split manifest: the train split minus a
// content-stratified validation share.
struct TrainData {
  std::vector<ClipSamples> fit;
  std::vector<ClipSamples> val;
};
TrainData load_train_data(const media::DatasetManifest& manifest, const TrainConfig& config);

struct ClassifierResult {
  models::ResNet model;  // best validation checkpoint
  TrainLog log;
  int best_epoch = 0;
  double best_val_loss = 0.0;
};

// 20-class FDC from scratch (or from `init`).
ClassifierResult train_fdc(const TrainData& data, const TrainConfig& config,
                           const models::ResNetConfig& arch = {},
                           const models::ResNet* init = nullptr);
// 5-class distortion-only fine-tune of a trained FDC.
ClassifierResult train_fdc5(const TrainData& data, const models::ResNet& fdc,
                            const TrainConfig& config);

struct RegressionResult {
  models::ResNet model;
  TrainLog log;
  int best_epoch = 0;
  double best_val_loss = 0.0;
  std::size_t skipped_batches = 0;
};

// Pearson-loss fine-tune of the FDC backbone with a single-neuron head.
RegressionResult train_fqp(const TrainData& data, const models::ResNet& fdc,
                           const TrainConfig& config);

enum class VqpMode { kTransfer, kEndToEnd };

struct VqpResult {
  pooling::VqpNet net;  // final epoch
  TrainLog log;         // row 0 holds the pre-training losses
  std::size_t skipped_batches = 0;
};

VqpResult train_vqp(const TrainData& data, const models::ResNet& fqp,
                    const pooling::AggregatorConfig& aggregator, const TrainConfig& config,
                    VqpMode mode);

// Frame batches in clip-major order, chunked to bound memory.
std::vector<int> classify_frames(models::ResNet& model, const nn::Tensor<float>& frames);
std::vector<float> score_frames(models::ResNet& model, const nn::Tensor<float>& frames);

// Fraction of frames whose predicted class matches the clip label; with
// collapse, labels and predictions are distortion types.
double frame_accuracy(models::ResNet& model, const std::vector<ClipSamples>& clips,
                      std::size_t crop, bool collapse);

// Video scores of each clip through a VQP net (center crops).
std::vector<double> vqp_scores(pooling::VqpNet& net, const std::vector<ClipSamples>& clips,
                               std::size_t crop);

// Frame scores of each clip from a frame model (center crops), clip-major.
std::vector<std::vector<double>> clip_frame_scores(models::ResNet& model,
                                                   const std::vector<ClipSamples>& clips,
                                                   std::size_t crop);

}  // namespace scopeqa::train
