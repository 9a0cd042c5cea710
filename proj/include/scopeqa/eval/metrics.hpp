#pragma once

#include <array>
#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "scopeqa/media/clip.hpp"
#include "scopeqa/pooling/pooling.hpp"

namespace scopeqa::eval {

double plcc(std::span<const double> x, std::span<const double> y);
double srocc(std::span<const double> x, std::span<const double> y);
// Kendall tau-b.
double krocc(std::span<const double> x, std::span<const double> y);

// 1-based fractional ranks; ties share their average rank.
std::vector<double> average_ranks(std::span<const double> x);

// q(x) = b1 * (1/2 - 1/(1 + exp(b2 * (x - b3)))) + b4 * x + b5
struct Logistic5Params {
  std::array<double, 5> beta{0.0, 0.0, 0.0, 1.0, 0.0};

  double operator()(double x) const;
  std::vector<double> map(std::span<const double> x) const;
};

struct LogisticFit {
  Logistic5Params params;
  bool converged = false;
  int iterations = 0;  // of the winning start
  double rmse = 0.0;
};

inline constexpr int kLogisticMaxIterations = 200;
inline constexpr double kLogisticStepTolerance = 1e-8;

// Levenberg-Marquardt from several starts. The best fit by squared error is
// finished with an affine least-squares refit of its output, so the result
// never correlates worse with mos than the raw scores do.
LogisticFit fit_logistic5(std::span<const double> raw, std::span<const double> mos);

struct ClipRow {
  std::string id;
  double mos = 0.0;
  double raw = 0.0;
  double mapped = 0.0;
};

struct ConfusionMatrix {
  std::size_t classes = 0;
  std::vector<std::size_t> counts;  // row-major, [true][predicted]
  std::size_t total = 0;
  double accuracy = 0.0;

  std::size_t at(std::size_t truth, std::size_t predicted) const {
    return counts[truth * classes + predicted];
  }
  std::string to_csv(const std::vector<std::string>& names = {}) const;
};

ConfusionMatrix confusion_matrix(std::span<const int> predicted, std::span<const int> truth,
                                 std::size_t classes);

struct EvalReport {
  double plcc = 0.0;   // on logistic-mapped scores
  double srocc = 0.0;  // on raw scores
  double krocc = 0.0;  // on raw scores
  double srocc_mapped = 0.0;
  double krocc_mapped = 0.0;
  double plcc_raw = 0.0;
  LogisticFit logistic;
  std::vector<ClipRow> rows;
  std::optional<ConfusionMatrix> confusion;
};

inline constexpr std::size_t kMinEvalClips = 6;

EvalReport evaluate_quality(std::span<const double> predictions, std::span<const double> mos,
                            const std::vector<std::string>& ids = {});

inline constexpr double kPsnrCap = 100.0;

// 10 log10(1 / MSE) on [0,1] pixels, capped at 100 dB.
double psnr(const media::Frame& distorted, const media::Frame& reference);
std::vector<double> psnr_frames(const media::VideoClip& distorted,
                                const media::VideoClip& reference);
double psnr_baseline(const media::VideoClip& distorted, const media::VideoClip& reference,
                     pooling::PoolingMode mode);

}  // namespace scopeqa::eval
