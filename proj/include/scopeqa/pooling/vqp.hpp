#pragma once

#include <cstdint>
#include <vector>

#include "scopeqa/models/resnet.hpp"
#include "scopeqa/pooling/pooling.hpp"

namespace scopeqa::pooling {

// Frame quality model followed by the temporal aggregator.
struct VqpNet {
  models::ResNet frame_model;
  FcnnAggregator aggregator;

  std::size_t n_f() const { return aggregator.config().n_f; }

  // frames: (B * N_f) x 3 x crop x crop, clip-major. Returns B x 1. The frame
  // model always runs with eval-mode batch norm; its weights take gradients
  // only when train_frame_model is set.
  nn::Var forward(nn::Tape<float>& tape, nn::Var frames, bool train_frame_model,
                  bool train_aggregator = true);

  // Eval-mode frame scores and the aggregated score of one clip's N_f frames.
  std::vector<float> frame_scores(const nn::Tensor<float>& frames);
  float clip_score(const nn::Tensor<float>& frames);

  models::Checkpoint to_checkpoint(const nlohmann::json& metadata = nlohmann::json::object()) const;
  static VqpNet from_checkpoint(const models::Checkpoint& ckpt);
};

}  // namespace scopeqa::pooling
