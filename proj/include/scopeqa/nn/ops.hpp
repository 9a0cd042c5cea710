#pragma once

// Differentiable layer set. Every op reads its inputs from a Tape, records its
// output and (when recording) a backward rule. Instantiated for float
// (training) and double (gradient checking).

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "scopeqa/nn/tape.hpp"

namespace scopeqa::nn {

template <class T>
Var add(Tape<T>& tape, Var a, Var b);
template <class T>
Var sub(Tape<T>& tape, Var a, Var b);
template <class T>
Var mul(Tape<T>& tape, Var a, Var b);
template <class T>
Var scale(Tape<T>& tape, Var a, T factor);
template <class T>
Var square(Tape<T>& tape, Var a);
// Sum of all elements, shape {1}.
template <class T>
Var sum(Tape<T>& tape, Var a);
template <class T>
Var reshape(Tape<T>& tape, Var a, Shape shape);

template <class T>
Var relu(Tape<T>& tape, Var x);
template <class T>
Var tanh(Tape<T>& tape, Var x);

// Cross-correlation. x: N x Cin x H x W, w: Cout x Cin x k x k, no bias.
// Output spatial size floor((H + 2p - k) / s) + 1.
template <class T>
Var conv2d(Tape<T>& tape, Var x, Var w, std::size_t stride, std::size_t padding);

// y = x * W^T + b. x: N x in, w: out x in, b: out (optional).
template <class T>
Var fully_connected(Tape<T>& tape, Var x, Var w, Var b = {});

// N x C x H x W -> N x C
template <class T>
Var global_avg_pool(Tape<T>& tape, Var x);

// Row-wise over the last axis of an N x C tensor.
template <class T>
Var softmax(Tape<T>& tape, Var x);
template <class T>
Var log_softmax(Tape<T>& tape, Var x);

enum class BatchNormMode { kTrain, kEval };

template <class T>
struct BatchNormStats {
  Tensor<T> running_mean;
  Tensor<T> running_var;
  double momentum = 0.1;
  double eps = 1e-7;

  BatchNormStats() = default;
  explicit BatchNormStats(std::size_t channels)
      : running_mean(Shape{channels}, T(0)), running_var(Shape{channels}, T(1)) {}
};

// Per-channel normalization over every axis except 1 (N x C or N x C x H x W).
// Train mode normalizes with biased batch statistics and folds the unbiased
// variance into the running estimates; eval mode uses the running estimates.
template <class T>
Var batch_norm(Tape<T>& tape, Var x, Var gamma, Var beta,
               BatchNormStats<T>& stats, BatchNormMode mode);

// Mean negative log of the true-class probability, probabilities clamped at
// 1e-12. probs: N x C with rows summing to 1.
template <class T>
Var cross_entropy(Tape<T>& tape, Var probs, std::span<const std::int32_t> labels);

// Same objective from log-probabilities (log_softmax output).
template <class T>
Var nll_loss(Tape<T>& tape, Var log_probs, std::span<const std::int32_t> labels);

struct PearsonDiagnostics {
  bool degenerate = false;  // predicted or target variance was exactly zero
};

inline constexpr double kPearsonVarianceGuard = 1e-12;

// 1 - r between the flattened prediction and a constant target vector, with
// kPearsonVarianceGuard added to each (population) variance.
template <class T>
Var pearson_loss(Tape<T>& tape, Var predicted, std::span<const T> target,
                 PearsonDiagnostics* diag = nullptr);

}  // namespace scopeqa::nn
