#include "scopeqa/models/resnet.hpp"

#include <cmath>

#include "scopeqa/error.hpp"
#include "scopeqa/models/encoding.hpp"
#include "scopeqa/rng.hpp"

namespace scopeqa::models {

using nlohmann::json;

std::string ResNetConfig::variant() const {
  return "resnet-compact-" + std::to_string(stage_channels.size()) + "x" +
         std::to_string(blocks_per_stage);
}

void ResNetConfig::validate() const {
  require(in_channels >= 1 && stem_channels >= 1 && stem_stride >= 1, ErrorCode::kPrecondition,
          "invalid stem configuration");
  require(!stage_channels.empty() && blocks_per_stage >= 1, ErrorCode::kPrecondition,
          "resnet needs at least one stage with at least one block");
  for (std::size_t c : stage_channels) {
    require(c >= 1, ErrorCode::kPrecondition, "stage width must be >= 1");
  }
  require(outputs >= 1, ErrorCode::kPrecondition, "head needs >= 1 output");
  require(head != HeadKind::kRegression || outputs == 1, ErrorCode::kPrecondition,
          "regression head must have exactly one output");
  require(crop >= 8, ErrorCode::kPrecondition, "crop must be >= 8");
}

json ResNetConfig::to_json() const {
  return {{"variant", variant()},
          {"in_channels", in_channels},
          {"stem_channels", stem_channels},
          {"stem_stride", stem_stride},
          {"stage_channels", stage_channels},
          {"blocks_per_stage", blocks_per_stage},
          {"head", head == HeadKind::kClassification ? "classification" : "regression"},
          {"outputs", outputs},
          {"crop", crop},
          {"bn_momentum", bn_momentum},
          {"bn_eps", bn_eps}};
}

ResNetConfig ResNetConfig::from_json(const json& j) {
  ResNetConfig c;
  try {
    c.in_channels = j.at("in_channels").get<std::size_t>();
    c.stem_channels = j.at("stem_channels").get<std::size_t>();
    c.stem_stride = j.at("stem_stride").get<std::size_t>();
    c.stage_channels = j.at("stage_channels").get<std::vector<std::size_t>>();
    c.blocks_per_stage = j.at("blocks_per_stage").get<std::size_t>();
    const auto head = j.at("head").get<std::string>();
    require(head == "classification" || head == "regression", ErrorCode::kIo,
            "unknown head kind " + head);
    c.head = head == "classification" ? HeadKind::kClassification : HeadKind::kRegression;
    c.outputs = j.at("outputs").get<std::size_t>();
    c.crop = j.at("crop").get<std::size_t>();
    c.bn_momentum = j.at("bn_momentum").get<double>();
    c.bn_eps = j.at("bn_eps").get<double>();
  } catch (const json::exception& ex) {
    fail(ErrorCode::kIo, std::string("invalid model config: ") + ex.what());
  }
  c.validate();
  return c;
}

namespace {

Tensor<float> he_normal(nn::Shape shape, Rng& rng) {
  const std::size_t fan_in = nn::shape_size(shape) / shape[0];
  std::normal_distribution<double> normal(0.0, std::sqrt(2.0 / double(fan_in)));
  Tensor<float> t(std::move(shape));
  for (float& v : t.values()) v = float(normal(rng));
  return t;
}

}  // namespace

std::size_t ResNet::add_param(std::string name, Tensor<float> value) {
  params_.emplace_back(std::move(name), std::move(value));
  return params_.size() - 1;
}

ResNet::BnLayer ResNet::add_bn(const std::string& name, std::size_t channels) {
  BnLayer l;
  l.gamma = add_param(name + ".gamma", Tensor<float>(nn::Shape{channels}, 1.0f));
  l.beta = add_param(name + ".beta", Tensor<float>(nn::Shape{channels}, 0.0f));
  nn::BatchNormStats<float> s(channels);
  s.momentum = config_.bn_momentum;
  s.eps = config_.bn_eps;
  stats_.push_back(std::move(s));
  stats_names_.push_back(name);
  l.stats = stats_.size() - 1;
  return l;
}

ResNet::ResNet(const ResNetConfig& config, std::uint64_t seed) : config_(config) {
  config_.validate();
  Rng rng(seed);
  const std::size_t cs = config_.stem_channels;
  stem_ = add_param("stem.conv.w", he_normal({cs, config_.in_channels, 3, 3}, rng));
  stem_bn_ = add_bn("stem.bn", cs);
  std::size_t in = cs;
  for (std::size_t s = 0; s < config_.stage_channels.size(); ++s) {
    const std::size_t out = config_.stage_channels[s];
    for (std::size_t b = 0; b < config_.blocks_per_stage; ++b) {
      const std::string p = "s" + std::to_string(s) + ".b" + std::to_string(b);
      Block blk;
      blk.stride = (s > 0 && b == 0) ? 2 : 1;
      blk.conv1 = add_param(p + ".conv1.w", he_normal({out, in, 3, 3}, rng));
      blk.bn1 = add_bn(p + ".bn1", out);
      blk.conv2 = add_param(p + ".conv2.w", he_normal({out, out, 3, 3}, rng));
      blk.bn2 = add_bn(p + ".bn2", out);
      if (blk.stride != 1 || in != out) {
        blk.proj = add_param(p + ".proj.w", he_normal({out, in, 1, 1}, rng));
        blk.bn_proj = add_bn(p + ".bnp", out);
      }
      blocks_.push_back(blk);
      in = out;
    }
  }
  head_w_ = add_param("head.w", Tensor<float>(nn::Shape{config_.outputs, in}));
  head_b_ = add_param("head.b", Tensor<float>(nn::Shape{config_.outputs}));
  replace_head(config_.head, config_.outputs, rng());
}

std::vector<Parameter<float>*> ResNet::parameters() {
  std::vector<Parameter<float>*> out;
  for (auto& p : params_) out.push_back(&p);
  return out;
}

std::vector<const Parameter<float>*> ResNet::parameters() const {
  std::vector<const Parameter<float>*> out;
  for (const auto& p : params_) out.push_back(&p);
  return out;
}

std::vector<Parameter<float>*> ResNet::backbone_parameters() {
  std::vector<Parameter<float>*> out;
  for (std::size_t i = 0; i < params_.size(); ++i) {
    if (i != head_w_ && i != head_b_) out.push_back(&params_[i]);
  }
  return out;
}

std::vector<Parameter<float>*> ResNet::head_parameters() {
  return {&params_[head_w_], &params_[head_b_]};
}

std::size_t ResNet::parameter_count() const {
  std::size_t n = 0;
  for (const auto& p : params_) n += p.value.size();
  return n;
}

Var ResNet::bn(Tape<float>& tape, Var x, const BnLayer& l, BatchNormMode mode, bool trainable) {
  return nn::batch_norm(tape, x, tape.parameter(params_[l.gamma], trainable),
                        tape.parameter(params_[l.beta], trainable), stats_[l.stats], mode);
}

Var ResNet::features(Tape<float>& tape, Var x, BatchNormMode mode, bool trainable) {
  const auto& s = tape.value(x).shape();
  require(s.size() == 4 && s[1] == config_.in_channels && s[2] == config_.crop &&
              s[3] == config_.crop,
          ErrorCode::kShape,
          "model expects N x " + std::to_string(config_.in_channels) + " x " +
              std::to_string(config_.crop) + " x " + std::to_string(config_.crop) + ", got " +
              nn::shape_string(s));
  Var h = nn::conv2d(tape, x, tape.parameter(params_[stem_], trainable), config_.stem_stride, 1);
  h = nn::relu(tape, bn(tape, h, stem_bn_, mode, trainable));
  for (const Block& b : blocks_) {
    Var y = nn::conv2d(tape, h, tape.parameter(params_[b.conv1], trainable), b.stride, 1);
    y = nn::relu(tape, bn(tape, y, b.bn1, mode, trainable));
    y = nn::conv2d(tape, y, tape.parameter(params_[b.conv2], trainable), 1, 1);
    y = bn(tape, y, b.bn2, mode, trainable);
    Var shortcut = h;
    if (b.proj != SIZE_MAX) {
      shortcut = nn::conv2d(tape, h, tape.parameter(params_[b.proj], trainable), b.stride, 0);
      shortcut = bn(tape, shortcut, b.bn_proj, mode, trainable);
    }
    h = nn::relu(tape, nn::add(tape, y, shortcut));
  }
  return nn::global_avg_pool(tape, h);
}

Var ResNet::head(Tape<float>& tape, Var f, bool trainable) {
  return nn::fully_connected(tape, f, tape.parameter(params_[head_w_], trainable),
                             tape.parameter(params_[head_b_], trainable));
}

Var ResNet::forward(Tape<float>& tape, Var x, BatchNormMode mode, bool trainable) {
  return head(tape, features(tape, x, mode, trainable), trainable);
}

Tensor<float> ResNet::infer_features(const Tensor<float>& x) {
  Tape<float> tape(false);
  return tape.value(features(tape, tape.constant(x), BatchNormMode::kEval, false));
}

Tensor<float> ResNet::infer(const Tensor<float>& x) {
  Tape<float> tape(false);
  return tape.value(forward(tape, tape.constant(x), BatchNormMode::kEval, false));
}

void ResNet::recalibrate_batch_norm(std::span<const Tensor<float>> batches) {
  if (batches.empty()) return;
  std::vector<double> momentum;
  for (auto& st : stats_) {
    momentum.push_back(st.momentum);
    std::fill(st.running_mean.values().begin(), st.running_mean.values().end(), 0.0f);
    std::fill(st.running_var.values().begin(), st.running_var.values().end(), 0.0f);
  }
  for (std::size_t k = 0; k < batches.size(); ++k) {
    for (auto& st : stats_) st.momentum = 1.0 / double(k + 1);
    Tape<float> tape(false);
    features(tape, tape.constant(batches[k]), BatchNormMode::kTrain, false);
  }
  for (std::size_t i = 0; i < stats_.size(); ++i) stats_[i].momentum = momentum[i];
}

void ResNet::replace_head(HeadKind kind, std::size_t outputs, std::uint64_t seed,
                          double weight_std) {
  config_.head = kind;
  config_.outputs = outputs;
  config_.validate();
  Rng rng(seed);
  const std::size_t in = feature_dim();
  Tensor<float> w(nn::Shape{outputs, in});
  if (kind == HeadKind::kRegression) {
    std::normal_distribution<double> normal(0.0, weight_std);
    for (float& v : w.values()) v = float(normal(rng));
  } else {
    const double bound = 1.0 / std::sqrt(double(in));
    std::uniform_real_distribution<double> u(-bound, bound);
    for (float& v : w.values()) v = float(u(rng));
  }
  params_[head_w_] = Parameter<float>("head.w", std::move(w));
  params_[head_b_] = Parameter<float>("head.b", Tensor<float>(nn::Shape{outputs}));
}

void ResNet::export_tensors(Checkpoint& ckpt, const std::string& prefix) const {
  for (const auto& p : params_) ckpt.add(prefix + p.name, p.value);
  for (std::size_t i = 0; i < stats_.size(); ++i) {
    ckpt.add(prefix + stats_names_[i] + ".running_mean", stats_[i].running_mean);
    ckpt.add(prefix + stats_names_[i] + ".running_var", stats_[i].running_var);
  }
}

void ResNet::import_tensors(const Checkpoint& ckpt, const std::string& prefix) {
  auto fetch = [&](const std::string& name, const Tensor<float>& like) {
    const Tensor<float>& t = ckpt.tensor(prefix + name);
    require(t.shape() == like.shape(), ErrorCode::kShape,
            "checkpoint tensor " + prefix + name + " has shape " + nn::shape_string(t.shape()) +
                ", model expects " + nn::shape_string(like.shape()));
    return t;
  };
  for (auto& p : params_) {
    p.value = fetch(p.name, p.value);
    p.zero_grad();
  }
  for (std::size_t i = 0; i < stats_.size(); ++i) {
    stats_[i].running_mean = fetch(stats_names_[i] + ".running_mean", stats_[i].running_mean);
    stats_[i].running_var = fetch(stats_names_[i] + ".running_var", stats_[i].running_var);
  }
}

Checkpoint ResNet::to_checkpoint(const json& metadata) const {
  Checkpoint ckpt;
  ckpt.config = {{"kind", "frame"}, {"model", config_.to_json()}};
  ckpt.metadata = metadata;
  export_tensors(ckpt);
  return ckpt;
}

ResNet ResNet::from_checkpoint(const Checkpoint& ckpt) {
  require(ckpt.config.value("kind", "") == "frame", ErrorCode::kPrecondition,
          "checkpoint does not hold a frame model");
  ResNet model(ResNetConfig::from_json(ckpt.config.at("model")), 0);
  model.import_tensors(ckpt);
  return model;
}

Tensor<float> frames_to_tensor(std::span<const media::Frame> frames) {
  require(!frames.empty(), ErrorCode::kPrecondition, "empty frame batch");
  const std::size_t w = frames[0].width(), h = frames[0].height();
  Tensor<float> t(nn::Shape{frames.size(), media::Frame::kChannels, h, w});
  float* dst = t.data();
  for (const auto& f : frames) {
    require(f.width() == w && f.height() == h, ErrorCode::kShape,
            "frame batch mixes dimensions");
    const auto v = f.values();
    std::copy(v.begin(), v.end(), dst);
    dst += v.size();
  }
  return t;
}

media::Frame fit_to_crop(const media::Frame& frame, std::size_t crop) {
  if (frame.width() == crop && frame.height() == crop) return frame;
  return media::center_crop(frame, crop, crop);
}

Tensor<float> fdc_forward(ResNet& model, const Tensor<float>& batch) {
  require(model.config().head == HeadKind::kClassification, ErrorCode::kPrecondition,
          "fdc_forward needs a classification model");
  Tape<float> tape(false);
  const Var logits = model.forward(tape, tape.constant(batch), BatchNormMode::kEval, false);
  return tape.value(nn::softmax(tape, logits));
}

std::vector<float> fqp_forward(ResNet& model, const Tensor<float>& batch) {
  require(model.config().head == HeadKind::kRegression, ErrorCode::kPrecondition,
          "fqp_forward needs a regression model");
  const auto out = model.infer(batch);
  return {out.values().begin(), out.values().end()};
}

ResNet fine_tune_distortion_only(const ResNet& fdc, std::uint64_t seed) {
  require(fdc.config().head == HeadKind::kClassification &&
              fdc.config().outputs == std::size_t(kNumClasses),
          ErrorCode::kPrecondition, "distortion-only fine-tune needs a 20-class FDC model");
  ResNet out = fdc;
  out.replace_head(HeadKind::kClassification, kNumTypes, seed);
  return out;
}

ResNet fqp_from_fdc(const ResNet& fdc, std::uint64_t seed) {
  require(fdc.config().head == HeadKind::kClassification, ErrorCode::kPrecondition,
          "FQP transfer needs a classification (FDC) model");
  ResNet out = fdc;
  out.replace_head(HeadKind::kRegression, 1, seed, 0.01);
  return out;
}

}  // namespace scopeqa::models
