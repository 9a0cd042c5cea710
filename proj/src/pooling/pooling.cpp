#include "scopeqa/pooling/pooling.hpp"

#include <algorithm>
#include <cmath>

#include "scopeqa/error.hpp"
#include "scopeqa/rng.hpp"

namespace scopeqa::pooling {

using nlohmann::json;

double pool_conventional(std::span<const double> scores, PoolingMode mode, bool clamp) {
  require(!scores.empty(), ErrorCode::kPrecondition, "cannot pool an empty score vector");
  const double n = double(scores.size());
  auto positive = [&](double v) {
    if (clamp) return std::max(v, kPoolingClamp);
    require(v > 0.0, ErrorCode::kPrecondition,
            "geometric/harmonic pooling needs positive scores");
    return v;
  };
  switch (mode) {
    case PoolingMode::kArithmetic: {
      double s = 0.0;
      for (double v : scores) s += v;
      return s / n;
    }
    case PoolingMode::kGeometric: {
      double s = 0.0;
      for (double v : scores) s += std::log(positive(v));
      return std::exp(s / n);
    }
    case PoolingMode::kHarmonic: {
      double s = 0.0;
      for (double v : scores) s += 1.0 / positive(v);
      return n / s;
    }
    case PoolingMode::kMedian: {
      std::vector<double> v(scores.begin(), scores.end());
      std::sort(v.begin(), v.end());
      const std::size_t m = v.size() / 2;
      return v.size() % 2 ? v[m] : 0.5 * (v[m - 1] + v[m]);
    }
  }
  fail(ErrorCode::kPrecondition, "unknown pooling mode");
}

std::string to_string(PoolingMode mode) {
  switch (mode) {
    case PoolingMode::kArithmetic: return "arith";
    case PoolingMode::kGeometric: return "geo";
    case PoolingMode::kHarmonic: return "harm";
    case PoolingMode::kMedian: return "median";
  }
  return "?";
}

PoolingMode parse_pooling(const std::string& name) {
  if (name == "arith" || name == "arithmetic") return PoolingMode::kArithmetic;
  if (name == "geo" || name == "geometric") return PoolingMode::kGeometric;
  if (name == "harm" || name == "harmonic") return PoolingMode::kHarmonic;
  if (name == "median") return PoolingMode::kMedian;
  fail(ErrorCode::kPrecondition, "unknown pooling mode '" + name + "'");
}

std::string to_string(Activation a) {
  switch (a) {
    case Activation::kLogSoftmax: return "log_softmax";
    case Activation::kRelu: return "relu";
    case Activation::kTanh: return "tanh";
  }
  return "?";
}

Activation parse_activation(const std::string& name) {
  if (name == "log_softmax") return Activation::kLogSoftmax;
  if (name == "relu") return Activation::kRelu;
  if (name == "tanh") return Activation::kTanh;
  fail(ErrorCode::kPrecondition, "unknown activation '" + name + "'");
}

void AggregatorConfig::validate() const {
  require(n_f >= 1, ErrorCode::kPrecondition, "aggregator needs N_f >= 1");
  for (std::size_t h : hidden) require(h >= 1, ErrorCode::kPrecondition, "hidden width must be >= 1");
}

json AggregatorConfig::to_json() const {
  return {{"n_f", n_f}, {"hidden", hidden}, {"activation", to_string(activation)}};
}

AggregatorConfig AggregatorConfig::from_json(const json& j) {
  AggregatorConfig c;
  try {
    c.n_f = j.at("n_f").get<std::size_t>();
    c.hidden = j.at("hidden").get<std::vector<std::size_t>>();
    c.activation = parse_activation(j.at("activation").get<std::string>());
  } catch (const json::exception& ex) {
    fail(ErrorCode::kIo, std::string("invalid aggregator config: ") + ex.what());
  }
  c.validate();
  return c;
}

template <class T>
nn::Var apply_activation(nn::Tape<T>& tape, nn::Var x, Activation a) {
  switch (a) {
    case Activation::kLogSoftmax: return nn::log_softmax(tape, x);
    case Activation::kRelu: return nn::relu(tape, x);
    case Activation::kTanh: return nn::tanh(tape, x);
  }
  fail(ErrorCode::kPrecondition, "unknown activation");
}

template nn::Var apply_activation<float>(nn::Tape<float>&, nn::Var, Activation);
template nn::Var apply_activation<double>(nn::Tape<double>&, nn::Var, Activation);

FcnnAggregator::FcnnAggregator(const AggregatorConfig& config, std::uint64_t seed)
    : config_(config) {
  config_.validate();
  Rng rng(seed);
  std::vector<std::size_t> widths = {config_.n_f};
  widths.insert(widths.end(), config_.hidden.begin(), config_.hidden.end());
  widths.push_back(1);
  for (std::size_t l = 0; l + 1 < widths.size(); ++l) {
    const std::size_t in = widths[l], out = widths[l + 1];
    // Glorot uniform.
    const double bound = std::sqrt(6.0 / double(in + out));
    std::uniform_real_distribution<double> u(-bound, bound);
    nn::Tensor<float> w(nn::Shape{out, in});
    for (float& v : w.values()) v = float(u(rng));
    params_.emplace_back("fc" + std::to_string(l) + ".w", std::move(w));
    params_.emplace_back("fc" + std::to_string(l) + ".b", nn::Tensor<float>(nn::Shape{out}));
  }
}

std::vector<nn::Parameter<float>*> FcnnAggregator::parameters() {
  std::vector<nn::Parameter<float>*> out;
  for (auto& p : params_) out.push_back(&p);
  return out;
}

nn::Var FcnnAggregator::forward(nn::Tape<float>& tape, nn::Var scores, bool trainable) {
  const auto& s = tape.value(scores).shape();
  require(s.size() == 2 && s[1] == config_.n_f, ErrorCode::kShape,
          "aggregator expects B x " + std::to_string(config_.n_f) + " scores, got " +
              nn::shape_string(s));
  nn::Var h = scores;
  const std::size_t n = layers();
  for (std::size_t l = 0; l < n; ++l) {
    h = nn::fully_connected(tape, h, tape.parameter(params_[2 * l], trainable),
                            tape.parameter(params_[2 * l + 1], trainable));
    if (l + 1 < n) h = apply_activation(tape, h, config_.activation);
  }
  return h;
}

float FcnnAggregator::aggregate(std::span<const float> scores) {
  require(scores.size() == config_.n_f, ErrorCode::kShape,
          "expected " + std::to_string(config_.n_f) + " frame scores, got " +
              std::to_string(scores.size()));
  nn::Tape<float> tape(false);
  const nn::Var x = tape.constant(
      nn::Tensor<float>(nn::Shape{1, scores.size()}, std::vector<float>(scores.begin(), scores.end())));
  return tape.value(forward(tape, x, false))[0];
}

void FcnnAggregator::export_tensors(models::Checkpoint& ckpt, const std::string& prefix) const {
  for (const auto& p : params_) ckpt.add(prefix + p.name, p.value);
}

void FcnnAggregator::import_tensors(const models::Checkpoint& ckpt, const std::string& prefix) {
  for (auto& p : params_) {
    const auto& t = ckpt.tensor(prefix + p.name);
    require(t.shape() == p.value.shape(), ErrorCode::kShape,
            "aggregator tensor " + p.name + " has the wrong shape");
    p.value = t;
    p.zero_grad();
  }
}

}  // namespace scopeqa::pooling
