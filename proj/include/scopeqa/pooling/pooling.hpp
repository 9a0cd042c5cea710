#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "scopeqa/models/checkpoint.hpp"
#include "scopeqa/nn/ops.hpp"

namespace scopeqa::pooling {

enum class PoolingMode { kArithmetic, kGeometric, kHarmonic, kMedian };

inline constexpr double kPoolingClamp = 1e-6;

// Geometric and harmonic modes clamp inputs at kPoolingClamp first unless
// clamp is false, in which case nonpositive inputs are rejected.
double pool_conventional(std::span<const double> scores, PoolingMode mode, bool clamp = true);

std::string to_string(PoolingMode mode);
// Accepts arith|geo|harm|median and the long names.
PoolingMode parse_pooling(const std::string& name);

enum class Activation { kLogSoftmax, kRelu, kTanh };

std::string to_string(Activation a);
Activation parse_activation(const std::string& name);

struct AggregatorConfig {
  std::size_t n_f = 25;
  std::vector<std::size_t> hidden = {32, 16, 8};
  Activation activation = Activation::kLogSoftmax;

  void validate() const;
  nlohmann::json to_json() const;
  static AggregatorConfig from_json(const nlohmann::json& j);
};

// Fully connected aggregator: N_f inputs, len(hidden) hidden layers with the
// configured activation (applied row-wise for log-softmax), one linear output.
class FcnnAggregator {
 public:
  FcnnAggregator() = default;
  FcnnAggregator(const AggregatorConfig& config, std::uint64_t seed);

  const AggregatorConfig& config() const { return config_; }
  std::vector<nn::Parameter<float>*> parameters();

  // scores: B x N_f -> B x 1
  nn::Var forward(nn::Tape<float>& tape, nn::Var scores, bool trainable = true);
  float aggregate(std::span<const float> scores);

  void export_tensors(models::Checkpoint& ckpt, const std::string& prefix = "agg.") const;
  void import_tensors(const models::Checkpoint& ckpt, const std::string& prefix = "agg.");

  // Layer l weight (out x in) and bias, for hand-built networks in tests.
  nn::Parameter<float>& weight(std::size_t layer) { return params_[2 * layer]; }
  nn::Parameter<float>& bias(std::size_t layer) { return params_[2 * layer + 1]; }
  std::size_t layers() const { return params_.size() / 2; }

 private:
  AggregatorConfig config_;
  std::vector<nn::Parameter<float>> params_;
};

// Shared activation used by the aggregator.
template <class T>
nn::Var apply_activation(nn::Tape<T>& tape, nn::Var x, Activation a);

}  // namespace scopeqa::pooling
