#include "scopeqa/pooling/vqp.hpp"

#include "scopeqa/error.hpp"

namespace scopeqa::pooling {

nn::Var VqpNet::forward(nn::Tape<float>& tape, nn::Var frames, bool train_frame_model,
                        bool train_aggregator) {
  const std::size_t total = tape.value(frames).dim(0);
  require(total % n_f() == 0, ErrorCode::kShape,
          "frame batch of " + std::to_string(total) + " is not a multiple of N_f=" +
              std::to_string(n_f()));
  const nn::Var scores =
      frame_model.forward(tape, frames, nn::BatchNormMode::kEval, train_frame_model);
  const nn::Var grid = nn::reshape(tape, scores, nn::Shape{total / n_f(), n_f()});
  return aggregator.forward(tape, grid, train_aggregator);
}

std::vector<float> VqpNet::frame_scores(const nn::Tensor<float>& frames) {
  return models::fqp_forward(frame_model, frames);
}

float VqpNet::clip_score(const nn::Tensor<float>& frames) {
  require(frames.dim(0) == n_f(), ErrorCode::kShape,
          "clip_score expects exactly N_f=" + std::to_string(n_f()) + " frames");
  return aggregator.aggregate(frame_scores(frames));
}

models::Checkpoint VqpNet::to_checkpoint(const nlohmann::json& metadata) const {
  models::Checkpoint ckpt;
  ckpt.config = {{"kind", "vqp"},
                 {"model", frame_model.config().to_json()},
                 {"aggregator", aggregator.config().to_json()}};
  ckpt.metadata = metadata;
  frame_model.export_tensors(ckpt, "frame.");
  aggregator.export_tensors(ckpt, "agg.");
  return ckpt;
}

VqpNet VqpNet::from_checkpoint(const models::Checkpoint& ckpt) {
  require(ckpt.config.value("kind", "") == "vqp", ErrorCode::kPrecondition,
          "checkpoint does not hold a VQP model");
  VqpNet net{models::ResNet(models::ResNetConfig::from_json(ckpt.config.at("model")), 0),
             FcnnAggregator(AggregatorConfig::from_json(ckpt.config.at("aggregator")), 0)};
  require(net.frame_model.config().head == models::HeadKind::kRegression,
          ErrorCode::kPrecondition, "VQP frame model must have a regression head");
  net.frame_model.import_tensors(ckpt, "frame.");
  net.aggregator.import_tensors(ckpt, "agg.");
  return net;
}

}  // namespace scopeqa::pooling
