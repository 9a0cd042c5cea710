#include "scopeqa/train/train.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <set>
#include <sstream>

#include "scopeqa/error.hpp"
#include "scopeqa/models/encoding.hpp"

namespace scopeqa::train {

using models::ResNet;
using nn::BatchNormMode;
using nn::Tape;
using nn::Tensor;
using nn::Var;

namespace {

constexpr std::size_t kInferenceChunk = 64;
constexpr std::size_t kMinPearsonClips = 4;
constexpr std::size_t kMinPearsonFrames = 8;

std::string format_double(double v) {
  std::ostringstream os;
  os.precision(9);
  os << v;
  return os.str();
}

}  // namespace

std::string TrainLog::to_csv() const {
  const bool acc = std::any_of(rows.begin(), rows.end(),
                               [](const EpochLog& r) { return r.accuracy.has_value(); });
  std::string out = acc ? "epoch,lr,train_loss,val_loss,accuracy\n" : "epoch,lr,train_loss,val_loss\n";
  for (const auto& r : rows) {
    out += std::to_string(r.epoch) + "," + format_double(r.lr) + "," + format_double(r.train_loss) +
           "," + format_double(r.val_loss);
    if (acc) out += "," + (r.accuracy ? format_double(*r.accuracy) : std::string());
    out += "\n";
  }
  return out;
}

void TrainLog::write_csv(const std::filesystem::path& path) const {
  std::ofstream out(path);
  require(bool(out), ErrorCode::kIo, "cannot write training log " + path.string());
  out << to_csv();
  require(bool(out), ErrorCode::kIo, "short write to " + path.string());
}

std::vector<double> TrainLog::val_losses() const {
  std::vector<double> v;
  for (const auto& r : rows) v.push_back(r.val_loss);
  return v;
}

std::vector<double> TrainLog::train_losses() const {
  std::vector<double> v;
  for (const auto& r : rows) v.push_back(r.train_loss);
  return v;
}

TrainConfig fdc_defaults() { return TrainConfig{}; }

TrainConfig fdc5_defaults() {
  TrainConfig c;
  c.lr = 1e-3;
  c.epochs = 8;
  return c;
}

TrainConfig fqp_defaults() {
  TrainConfig c;
  c.lr = 1e-3;
  c.epochs = 15;
  return c;
}

TrainConfig vqp_defaults() {
  TrainConfig c;
  c.lr = 1e-5;
  c.epochs = 20;
  c.batch = 8;
  c.augment = false;
  return c;
}

TrainData load_train_data(const media::DatasetManifest& manifest, const TrainConfig& config) {
  const auto train = manifest.subset(media::Split::kTrain);
  require(!train.entries.empty(), ErrorCode::kPrecondition,
          "manifest has an empty training split");
  const auto [fit, val] =
      split_validation(train, config.val_fraction, derive_seed(config.seed, {1}));
  return {load_samples(fit, config.n_f, config.threads),
          load_samples(val, config.n_f, config.threads)};
}

std::vector<int> classify_frames(ResNet& model, const Tensor<float>& frames) {
  std::vector<int> out;
  const std::size_t n = frames.dim(0), per = frames.size() / n;
  for (std::size_t s = 0; s < n; s += kInferenceChunk) {
    const std::size_t e = std::min(n, s + kInferenceChunk);
    nn::Shape shape = frames.shape();
    shape[0] = e - s;
    Tensor<float> chunk(shape, std::vector<float>(frames.data() + s * per, frames.data() + e * per));
    const auto logits = model.infer(chunk);
    const std::size_t c = logits.dim(1);
    for (std::size_t i = 0; i < e - s; ++i) {
      out.push_back(models::predict_class(std::span<const float>(logits.data() + i * c, c)));
    }
  }
  return out;
}

std::vector<float> score_frames(ResNet& model, const Tensor<float>& frames) {
  std::vector<float> out;
  const std::size_t n = frames.dim(0), per = frames.size() / n;
  for (std::size_t s = 0; s < n; s += kInferenceChunk) {
    const std::size_t e = std::min(n, s + kInferenceChunk);
    nn::Shape shape = frames.shape();
    shape[0] = e - s;
    Tensor<float> chunk(shape, std::vector<float>(frames.data() + s * per, frames.data() + e * per));
    const auto scores = models::fqp_forward(model, chunk);
    out.insert(out.end(), scores.begin(), scores.end());
  }
  return out;
}

namespace {

int class_of(const ClipSamples& c, bool collapse) {
  const int k = models::encode_label(c.label);
  return collapse ? models::collapse_to_type(k) : k;
}

struct ClassifierEval {
  double loss = 0.0;
  double accuracy = 0.0;
};

ClassifierEval evaluate_classifier(ResNet& model, const Tensor<float>& frames,
                                   const std::vector<std::int32_t>& labels) {
  const std::size_t n = frames.dim(0), per = frames.size() / n;
  double loss = 0.0;
  std::size_t correct = 0;
  for (std::size_t s = 0; s < n; s += kInferenceChunk) {
    const std::size_t e = std::min(n, s + kInferenceChunk);
    nn::Shape shape = frames.shape();
    shape[0] = e - s;
    Tape<float> tape(false);
    const Var x = tape.constant(
        Tensor<float>(shape, std::vector<float>(frames.data() + s * per, frames.data() + e * per)));
    const Var logp = nn::log_softmax(tape, model.forward(tape, x, BatchNormMode::kEval, false));
    const std::span<const std::int32_t> lab(labels.data() + s, e - s);
    loss += double(tape.value(nn::nll_loss(tape, logp, lab))[0]) * double(e - s);
    const auto& lp = tape.value(logp);
    const std::size_t c = lp.dim(1);
    for (std::size_t i = 0; i < e - s; ++i) {
      if (models::predict_class(std::span<const float>(lp.data() + i * c, c)) == lab[i]) ++correct;
    }
  }
  return {loss / double(n), double(correct) / double(n)};
}

std::vector<std::int32_t> frame_labels(const std::vector<ClipSamples>& clips, bool collapse) {
  std::vector<std::int32_t> labels;
  for (const auto& c : clips) labels.insert(labels.end(), c.frames.size(), class_of(c, collapse));
  return labels;
}

// Stacks the given (clip, frame) items, augmenting when requested.
Tensor<float> gather_frames(const std::vector<ClipSamples>& clips,
                            std::span<const std::pair<std::size_t, std::size_t>> items,
                            std::size_t crop, bool augment, Rng& rng, bool rotate = false) {
  std::vector<media::Frame> frames;
  frames.reserve(items.size());
  for (const auto& [c, f] : items) {
    const media::Frame& src = clips[c].frames[f];
    frames.push_back(augment ? augment_frame(src, crop, rng, true, rotate) : media::center_crop(src, crop, crop));
  }
  return models::frames_to_tensor(frames);
}

// Precise BN: running statistics from the epoch's final weights.
void recalibrate(ResNet& model, const std::vector<ClipSamples>& clips,
                 std::span<const std::pair<std::size_t, std::size_t>> items,
                 const TrainConfig& config) {
  if (config.bn_recalibration_batches == 0) return;
  std::vector<Tensor<float>> batches;
  Rng unused(0);
  for (std::size_t s = 0; s < items.size() && batches.size() < config.bn_recalibration_batches;
       s += config.batch) {
    const std::size_t e = std::min(items.size(), s + config.batch);
    if (e - s < 2) break;
    batches.push_back(gather_frames(clips, items.subspan(s, e - s), config.crop, false, unused));
  }
  model.recalibrate_batch_norm(batches);
}

void check_clips(const std::vector<ClipSamples>& clips, const TrainConfig& config) {
  require(!clips.empty(), ErrorCode::kPrecondition, "empty training split");
  require(config.epochs >= 1 && config.lr > 0.0 && config.batch >= 2, ErrorCode::kPrecondition,
          "training needs epochs >= 1, lr > 0 and batch >= 2");
}

ClassifierResult fit_classifier(ResNet model, const TrainData& data, const TrainConfig& config,
                                bool collapse) {
  check_clips(data.fit, config);
  Rng rng(derive_seed(config.seed, {2}));
  nn::Adam<float> opt(model.parameters(), nn::AdamConfig{config.lr});
  nn::PlateauTracker plateau(config.schedule, config.lr);

  std::vector<std::pair<std::size_t, std::size_t>> items;
  for (std::size_t c = 0; c < data.fit.size(); ++c)
    for (std::size_t f = 0; f < data.fit[c].frames.size(); ++f) items.emplace_back(c, f);

  const bool have_val = !data.val.empty();
  Tensor<float> val_frames;
  std::vector<std::int32_t> val_labels;
  if (have_val) {
    val_frames = stack_center_crops(data.val, config.crop);
    val_labels = frame_labels(data.val, collapse);
  }

  ClassifierResult result{model, {}, 0, std::numeric_limits<double>::infinity()};
  for (int epoch = 1; epoch <= config.epochs; ++epoch) {
    std::shuffle(items.begin(), items.end(), rng);
    double loss_sum = 0.0;
    std::size_t seen = 0;
    for (std::size_t s = 0; s < items.size(); s += config.batch) {
      const std::size_t e = std::min(items.size(), s + config.batch);
      if (e - s < 2) break;  // batch norm needs two samples
      const std::span<const std::pair<std::size_t, std::size_t>> batch(items.data() + s, e - s);
      std::vector<std::int32_t> labels;
      for (const auto& [c, f] : batch) labels.push_back(class_of(data.fit[c], collapse));
      const Tensor<float> x = gather_frames(data.fit, batch, config.crop, config.augment, rng, config.augment_rotations);
      Tape<float> tape;
      const Var logits = model.forward(tape, tape.constant(x), BatchNormMode::kTrain);
      const Var loss = nn::nll_loss(tape, nn::log_softmax(tape, logits), labels);
      opt.zero_grad();
      tape.backward(loss);
      opt.step();
      loss_sum += double(tape.value(loss)[0]) * double(e - s);
      seen += e - s;
    }
    recalibrate(model, data.fit, items, config);
    EpochLog row;
    row.epoch = epoch;
    row.lr = opt.lr();
    row.train_loss = loss_sum / double(std::max<std::size_t>(seen, 1));
    if (have_val) {
      const auto ev = evaluate_classifier(model, val_frames, val_labels);
      row.val_loss = ev.loss;
      row.accuracy = ev.accuracy;
    } else {
      row.val_loss = row.train_loss;
    }
    if (row.val_loss < result.best_val_loss) {
      result.best_val_loss = row.val_loss;
      result.best_epoch = epoch;
      result.model = model;
    }
    result.log.rows.push_back(row);
    if (config.on_epoch) config.on_epoch(row);
    if (config.plateau) opt.set_lr(plateau.update(row.val_loss));
  }
  return result;
}

}  // namespace

ClassifierResult train_fdc(const TrainData& data, const TrainConfig& config,
                           const models::ResNetConfig& arch, const ResNet* init) {
  models::ResNetConfig a = arch;
  a.crop = config.crop;
  a.head = models::HeadKind::kClassification;
  a.outputs = models::kNumClasses;
  ResNet model = init ? *init : ResNet(a, derive_seed(config.seed, {0}));
  require(model.config().outputs == std::size_t(models::kNumClasses) &&
              model.config().head == models::HeadKind::kClassification,
          ErrorCode::kPrecondition, "FDC initialization must be a 20-class model");
  return fit_classifier(std::move(model), data, config, false);
}

ClassifierResult train_fdc5(const TrainData& data, const ResNet& fdc, const TrainConfig& config) {
  return fit_classifier(models::fine_tune_distortion_only(fdc, derive_seed(config.seed, {5})),
                        data, config, true);
}

double frame_accuracy(ResNet& model, const std::vector<ClipSamples>& clips, std::size_t crop,
                      bool collapse) {
  require(!clips.empty(), ErrorCode::kPrecondition, "no clips to classify");
  const auto pred = classify_frames(model, stack_center_crops(clips, crop));
  const auto labels = frame_labels(clips, collapse);
  std::size_t correct = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) correct += pred[i] == labels[i];
  return double(correct) / double(pred.size());
}

namespace {

std::vector<double> clip_targets(const std::vector<ClipSamples>& clips, const char* what) {
  std::vector<double> t;
  for (const auto& c : clips) {
    require(c.mos.has_value(), ErrorCode::kPrecondition,
            std::string(what) + " clip without mos (entry " + std::to_string(c.entry) + ")");
    t.push_back(*c.mos);
  }
  return t;
}

bool has_spread(const std::vector<double>& v) {
  return std::any_of(v.begin(), v.end(), [&](double x) { return x != v.front(); });
}

// 1 - r between two vectors in double precision, with the same variance guard
// as the differentiable loss.
double pearson_value(const std::vector<double>& x, const std::vector<double>& y) {
  Tape<double> tape(false);
  const Var p = tape.constant(Tensor<double>(nn::Shape{x.size()}, x));
  return tape.value(nn::pearson_loss<double>(tape, p, y))[0];
}

}  // namespace

RegressionResult train_fqp(const TrainData& data, const ResNet& fdc, const TrainConfig& config) {
  check_clips(data.fit, config);
  const auto targets = clip_targets(data.fit, "training");
  require(has_spread(targets), ErrorCode::kDegenerate,
          "all training clips share one MOS; Pearson loss is undefined");
  const auto val_targets = clip_targets(data.val, "validation");

  ResNet model = models::fqp_from_fdc(fdc, derive_seed(config.seed, {3}));
  Rng rng(derive_seed(config.seed, {6}));
  nn::Adam<float> opt(model.parameters(), nn::AdamConfig{config.lr});
  nn::PlateauTracker plateau(config.schedule, config.lr);

  const bool have_val = data.val.size() >= 2 && has_spread(val_targets);
  Tensor<float> val_frames;
  std::vector<double> val_frame_targets;
  if (have_val) {
    val_frames = stack_center_crops(data.val, config.crop);
    for (const auto& c : data.val) val_frame_targets.insert(val_frame_targets.end(), c.frames.size(), *c.mos);
  }

  RegressionResult result{model, {}, 0, std::numeric_limits<double>::infinity(), 0};
  std::vector<std::size_t> clip_order(data.fit.size());
  std::iota(clip_order.begin(), clip_order.end(), 0);
  for (int epoch = 1; epoch <= config.epochs; ++epoch) {
    // Deal one frame per clip in turn so every batch mixes many clips.
    std::shuffle(clip_order.begin(), clip_order.end(), rng);
    std::vector<std::vector<std::size_t>> queues(data.fit.size());
    for (std::size_t c = 0; c < data.fit.size(); ++c) {
      queues[c].resize(data.fit[c].frames.size());
      std::iota(queues[c].begin(), queues[c].end(), 0);
      std::shuffle(queues[c].begin(), queues[c].end(), rng);
    }
    std::vector<std::pair<std::size_t, std::size_t>> items;
    for (bool any = true; any;) {
      any = false;
      for (std::size_t c : clip_order) {
        if (queues[c].empty()) continue;
        items.emplace_back(c, queues[c].back());
        queues[c].pop_back();
        any = true;
      }
    }
    std::vector<std::pair<std::size_t, std::size_t>> bounds;
    for (std::size_t s = 0; s < items.size(); s += config.batch) {
      const std::size_t e = std::min(items.size(), s + config.batch);
      std::set<std::size_t> distinct;
      for (std::size_t i = s; i < e; ++i) distinct.insert(items[i].first);
      if (!bounds.empty() && (e - s < kMinPearsonFrames || distinct.size() < kMinPearsonClips)) {
        bounds.back().second = e;
      } else {
        bounds.emplace_back(s, e);
      }
    }

    double loss_sum = 0.0;
    std::size_t steps = 0;
    for (const auto& [s, e] : bounds) {
      const std::span<const std::pair<std::size_t, std::size_t>> batch(items.data() + s, e - s);
      std::vector<float> t;
      for (const auto& [c, f] : batch) t.push_back(float(*data.fit[c].mos));
      const Tensor<float> x = gather_frames(data.fit, batch, config.crop, config.augment, rng, config.augment_rotations);
      Tape<float> tape;
      const Var pred = model.forward(tape, tape.constant(x), BatchNormMode::kTrain);
      nn::PearsonDiagnostics diag;
      const Var loss = nn::pearson_loss<float>(tape, pred, t, &diag);
      if (diag.degenerate) {
        ++result.skipped_batches;
        continue;
      }
      opt.zero_grad();
      tape.backward(loss);
      opt.step();
      loss_sum += tape.value(loss)[0];
      ++steps;
    }
    recalibrate(model, data.fit, items, config);
    EpochLog row;
    row.epoch = epoch;
    row.lr = opt.lr();
    row.train_loss = steps ? loss_sum / double(steps) : 0.0;
    if (have_val) {
      const auto scores = score_frames(model, val_frames);
      row.val_loss = pearson_value(std::vector<double>(scores.begin(), scores.end()),
                                   val_frame_targets);
    } else {
      row.val_loss = row.train_loss;
    }
    if (row.val_loss < result.best_val_loss) {
      result.best_val_loss = row.val_loss;
      result.best_epoch = epoch;
      result.model = model;
    }
    result.log.rows.push_back(row);
    if (config.on_epoch) config.on_epoch(row);
    if (config.plateau) opt.set_lr(plateau.update(row.val_loss));
  }
  return result;
}

std::vector<std::vector<double>> clip_frame_scores(ResNet& model,
                                                   const std::vector<ClipSamples>& clips,
                                                   std::size_t crop) {
  std::vector<std::vector<double>> out;
  for (const auto& c : clips) {
    const auto s = score_frames(model, stack_center_crops({c}, crop));
    out.emplace_back(s.begin(), s.end());
  }
  return out;
}

std::vector<double> vqp_scores(pooling::VqpNet& net, const std::vector<ClipSamples>& clips,
                               std::size_t crop) {
  std::vector<double> out;
  for (const auto& c : clips) {
    require(c.frames.size() == net.n_f(), ErrorCode::kShape,
            "clip has " + std::to_string(c.frames.size()) + " sampled frames, model expects " +
                std::to_string(net.n_f()));
    out.push_back(net.clip_score(stack_center_crops({c}, crop)));
  }
  return out;
}

VqpResult train_vqp(const TrainData& data, const ResNet& fqp,
                    const pooling::AggregatorConfig& aggregator, const TrainConfig& config,
                    VqpMode mode) {
  check_clips(data.fit, config);
  require(fqp.config().head == models::HeadKind::kRegression, ErrorCode::kPrecondition,
          "VQP training needs an FQP (regression) checkpoint");
  require(aggregator.n_f == config.n_f, ErrorCode::kPrecondition,
          "aggregator N_f must match the sampled frame count");
  const auto targets = clip_targets(data.fit, "training");
  require(data.fit.size() >= 2 && has_spread(targets), ErrorCode::kDegenerate,
          "VQP training needs at least 2 clips with distinct MOS");
  const auto val_targets = clip_targets(data.val, "validation");
  const bool have_val = data.val.size() >= 2 && has_spread(val_targets);

  pooling::VqpNet net{fqp, pooling::FcnnAggregator(aggregator, derive_seed(config.seed, {4}))};
  const bool e2e = mode == VqpMode::kEndToEnd;
  std::vector<nn::Parameter<float>*> params = net.aggregator.parameters();
  if (e2e) {
    for (auto* p : net.frame_model.parameters()) params.push_back(p);
  }
  nn::Adam<float> opt(params, nn::AdamConfig{config.lr});
  nn::PlateauTracker plateau(config.schedule, config.lr);
  Rng rng(derive_seed(config.seed, {7}));

  std::vector<Tensor<float>> fit_frames;
  for (const auto& c : data.fit) {
    require(c.frames.size() == config.n_f, ErrorCode::kShape, "clip sample count != N_f");
    fit_frames.push_back(stack_center_crops({c}, config.crop));
  }
  // Transfer mode: the frame model is frozen, so its scores are computed once.
  std::vector<std::vector<float>> cached;
  if (!e2e) {
    for (const auto& f : fit_frames) cached.push_back(score_frames(net.frame_model, f));
  }

  auto evaluate = [&](const std::vector<ClipSamples>& clips, const std::vector<double>& t) {
    return pearson_value(vqp_scores(net, clips, config.crop), t);
  };

  VqpResult result{net, {}, 0};
  EpochLog start;
  start.epoch = 0;
  start.lr = opt.lr();
  start.train_loss = evaluate(data.fit, targets);
  start.val_loss = have_val ? evaluate(data.val, val_targets) : start.train_loss;
  result.log.rows.push_back(start);
  if (config.on_epoch) config.on_epoch(start);

  std::vector<std::size_t> order(data.fit.size());
  std::iota(order.begin(), order.end(), 0);
  const std::size_t per = fit_frames.front().size();
  for (int epoch = 1; epoch <= config.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    std::vector<std::pair<std::size_t, std::size_t>> bounds;
    for (std::size_t s = 0; s < order.size(); s += config.batch) {
      const std::size_t e = std::min(order.size(), s + config.batch);
      if (!bounds.empty() && e - s < kMinPearsonClips) {
        bounds.back().second = e;
      } else {
        bounds.emplace_back(s, e);
      }
    }
    double loss_sum = 0.0;
    std::size_t steps = 0;
    for (const auto& [s, e] : bounds) {
      const std::size_t b = e - s;
      std::vector<float> t;
      for (std::size_t i = s; i < e; ++i) t.push_back(float(targets[order[i]]));
      if (std::all_of(t.begin(), t.end(), [&](float v) { return v == t.front(); })) {
        ++result.skipped_batches;
        continue;
      }
      Tape<float> tape;
      Var out;
      if (e2e) {
        Tensor<float> x(nn::Shape{b * config.n_f, media::Frame::kChannels, config.crop, config.crop});
        for (std::size_t i = 0; i < b; ++i) {
          std::copy(fit_frames[order[s + i]].values().begin(), fit_frames[order[s + i]].values().end(),
                    x.data() + i * per);
        }
        out = net.forward(tape, tape.constant(x), true);
      } else {
        Tensor<float> x(nn::Shape{b, config.n_f});
        for (std::size_t i = 0; i < b; ++i) {
          std::copy(cached[order[s + i]].begin(), cached[order[s + i]].end(), x.data() + i * config.n_f);
        }
        out = net.aggregator.forward(tape, tape.constant(x), true);
      }
      nn::PearsonDiagnostics diag;
      const Var loss = nn::pearson_loss<float>(tape, out, t, &diag);
      if (diag.degenerate) {
        ++result.skipped_batches;
        continue;
      }
      opt.zero_grad();
      tape.backward(loss);
      opt.step();
      loss_sum += tape.value(loss)[0];
      ++steps;
    }
    EpochLog row;
    row.epoch = epoch;
    row.lr = opt.lr();
    row.train_loss = steps ? loss_sum / double(steps) : 0.0;
    row.val_loss = have_val ? evaluate(data.val, val_targets) : row.train_loss;
    result.log.rows.push_back(row);
    if (config.on_epoch) config.on_epoch(row);
    if (config.plateau) opt.set_lr(plateau.update(row.val_loss));
  }
  result.net = net;
  return result;
}

}  // namespace scopeqa::train
