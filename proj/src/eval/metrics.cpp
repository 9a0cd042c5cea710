#include "scopeqa/eval/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "scopeqa/error.hpp"

namespace scopeqa::eval {

namespace {

void check_pair(std::span<const double> x, std::span<const double> y, const char* what) {
  require(x.size() == y.size(), ErrorCode::kShape,
          std::string(what) + ": length mismatch " + std::to_string(x.size()) + " vs " +
              std::to_string(y.size()));
  require(x.size() >= 2, ErrorCode::kPrecondition, std::string(what) + " needs >= 2 points");
}

double mean(std::span<const double> v) {
  return std::accumulate(v.begin(), v.end(), 0.0) / double(v.size());
}

bool all_tied(std::span<const double> v) {
  return std::all_of(v.begin(), v.end(), [&](double a) { return a == v.front(); });
}

double pearson(std::span<const double> x, std::span<const double> y, const char* what) {
  const double mx = mean(x), my = mean(y);
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double dx = x[i] - mx, dy = y[i] - my;
    sxy += dx * dy;
    sxx += dx * dx;
    syy += dy * dy;
  }
  require(sxx > 0.0 && syy > 0.0, ErrorCode::kDegenerate,
          std::string(what) + ": zero variance input");
  return std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
}

int sign(double v) { return (v > 0.0) - (v < 0.0); }

}  // namespace

double plcc(std::span<const double> x, std::span<const double> y) {
  check_pair(x, y, "plcc");
  return pearson(x, y, "plcc");
}

std::vector<double> average_ranks(std::span<const double> x) {
  std::vector<std::size_t> idx(x.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return x[a] < x[b]; });
  std::vector<double> ranks(x.size());
  for (std::size_t i = 0; i < idx.size();) {
    std::size_t j = i;
    while (j + 1 < idx.size() && x[idx[j + 1]] == x[idx[i]]) ++j;
    const double r = 0.5 * double(i + j) + 1.0;
    for (std::size_t k = i; k <= j; ++k) ranks[idx[k]] = r;
    i = j + 1;
  }
  return ranks;
}

double srocc(std::span<const double> x, std::span<const double> y) {
  check_pair(x, y, "srocc");
  require(!all_tied(x) && !all_tied(y), ErrorCode::kDegenerate, "srocc: all-tied input");
  const auto rx = average_ranks(x), ry = average_ranks(y);
  return pearson(rx, ry, "srocc");
}

double krocc(std::span<const double> x, std::span<const double> y) {
  check_pair(x, y, "krocc");
  require(!all_tied(x) && !all_tied(y), ErrorCode::kDegenerate, "krocc: all-tied input");
  long long s = 0, untied_x = 0, untied_y = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    for (std::size_t j = i + 1; j < x.size(); ++j) {
      const int a = sign(x[i] - x[j]), b = sign(y[i] - y[j]);
      s += a * b;
      untied_x += a != 0;
      untied_y += b != 0;
    }
  }
  return std::clamp(double(s) / std::sqrt(double(untied_x) * double(untied_y)), -1.0, 1.0);
}

double Logistic5Params::operator()(double x) const {
  const double t = beta[1] * (x - beta[2]);
  // 1/2 - 1/(1+e^t) written as sigmoid(t) - 1/2, stable for large |t|.
  const double s = t >= 0 ? 1.0 / (1.0 + std::exp(-t)) : std::exp(t) / (1.0 + std::exp(t));
  return beta[0] * (s - 0.5) + beta[3] * x + beta[4];
}

std::vector<double> Logistic5Params::map(std::span<const double> x) const {
  std::vector<double> out;
  out.reserve(x.size());
  for (double v : x) out.push_back((*this)(v));
  return out;
}

namespace {

using Vec5 = std::array<double, 5>;

double sigmoid(double t) {
  return t >= 0 ? 1.0 / (1.0 + std::exp(-t)) : std::exp(t) / (1.0 + std::exp(t));
}

double sse(const Logistic5Params& p, std::span<const double> x, std::span<const double> y) {
  double s = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double r = p(x[i]) - y[i];
    s += r * r;
  }
  return s;
}

// Gaussian elimination with partial pivoting on an n x n system (n <= 5).
template <std::size_t N>
bool solve(std::array<std::array<double, N>, N> a, std::array<double, N> b, std::size_t n,
           std::array<double, N>& out) {
  for (std::size_t c = 0; c < n; ++c) {
    std::size_t piv = c;
    for (std::size_t r = c + 1; r < n; ++r)
      if (std::abs(a[r][c]) > std::abs(a[piv][c])) piv = r;
    if (!(std::abs(a[piv][c]) > 1e-300)) return false;
    std::swap(a[c], a[piv]);
    std::swap(b[c], b[piv]);
    for (std::size_t r = c + 1; r < n; ++r) {
      const double f = a[r][c] / a[c][c];
      for (std::size_t k = c; k < n; ++k) a[r][k] -= f * a[c][k];
      b[r] -= f * b[c];
    }
  }
  for (std::size_t c = n; c-- > 0;) {
    double v = b[c];
    for (std::size_t k = c + 1; k < n; ++k) v -= a[c][k] * out[k];
    out[c] = v / a[c][c];
  }
  return std::all_of(out.begin(), out.begin() + std::ptrdiff_t(n),
                     [](double v) { return std::isfinite(v); });
}

// Least squares for the linear coefficients (b1, b4, b5) with b2, b3 fixed.
// Drops the sigmoid column when it is numerically flat.
Logistic5Params linear_solve(double b2, double b3, std::span<const double> x,
                             std::span<const double> y) {
  std::array<std::array<double, 3>, 3> ata{};
  std::array<double, 3> aty{};
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double row[3] = {sigmoid(b2 * (x[i] - b3)) - 0.5, x[i], 1.0};
    for (int r = 0; r < 3; ++r) {
      for (int c = 0; c < 3; ++c) ata[r][c] += row[r] * row[c];
      aty[r] += row[r] * y[i];
    }
  }
  Logistic5Params p;
  std::array<double, 3> sol{};
  if (solve<3>(ata, aty, 3, sol) && std::abs(sol[0]) < 1e12) {
    p.beta = {sol[0], b2, b3, sol[1], sol[2]};
    return p;
  }
  std::array<std::array<double, 3>, 3> a2{};
  a2[0][0] = ata[1][1];
  a2[0][1] = ata[1][2];
  a2[1][0] = ata[2][1];
  a2[1][1] = ata[2][2];
  std::array<double, 3> b{aty[1], aty[2], 0.0};
  if (!solve<3>(a2, b, 2, sol)) sol = {0.0, mean(y), 0.0};
  p.beta = {0.0, b2, b3, sol[0], sol[1]};
  return p;
}

struct LmRun {
  Logistic5Params params;
  double sse = 0.0;
  bool converged = false;
  int iterations = 0;
};

LmRun levenberg_marquardt(Logistic5Params p, std::span<const double> x,
                          std::span<const double> y) {
  LmRun run{p, sse(p, x, y), false, 0};
  double lambda = 1e-3;
  for (int it = 1; it <= kLogisticMaxIterations; ++it) {
    run.iterations = it;
    std::array<std::array<double, 5>, 5> jtj{};
    Vec5 jtr{};
    const auto& b = run.params.beta;
    for (std::size_t i = 0; i < x.size(); ++i) {
      const double t = b[1] * (x[i] - b[2]);
      const double s = sigmoid(t);
      const double ds = s * (1.0 - s);
      const double j[5] = {s - 0.5, b[0] * ds * (x[i] - b[2]), -b[0] * ds * b[1], x[i], 1.0};
      const double r = run.params(x[i]) - y[i];
      for (int a = 0; a < 5; ++a) {
        for (int c = 0; c < 5; ++c) jtj[a][c] += j[a] * j[c];
        jtr[a] += j[a] * r;
      }
    }
    double max_diag = 0.0;
    for (int a = 0; a < 5; ++a) max_diag = std::max(max_diag, jtj[a][a]);
    bool accepted = false;
    while (lambda < 1e16) {
      auto m = jtj;
      for (int a = 0; a < 5; ++a) m[a][a] += lambda * std::max(jtj[a][a], 1e-12 * max_diag + 1e-300);
      Vec5 neg{}, step{};
      for (int a = 0; a < 5; ++a) neg[a] = -jtr[a];
      if (solve<5>(m, neg, 5, step)) {
        Logistic5Params cand = run.params;
        for (int a = 0; a < 5; ++a) cand.beta[a] += step[a];
        const double e = sse(cand, x, y);
        if (std::isfinite(e) && e <= run.sse) {
          double norm = 0.0;
          for (double v : step) norm += v * v;
          run.params = cand;
          run.sse = e;
          lambda = std::max(lambda * 0.1, 1e-12);
          accepted = true;
          if (std::sqrt(norm) < kLogisticStepTolerance) {
            run.converged = true;
            return run;
          }
          break;
        }
      }
      lambda *= 10.0;
    }
    // No downhill step exists at any damping: a stationary point.
    if (!accepted) {
      run.converged = true;
      return run;
    }
  }
  return run;
}

}  // namespace

LogisticFit fit_logistic5(std::span<const double> raw, std::span<const double> mos) {
  check_pair(raw, mos, "fit_logistic5");
  require(raw.size() >= kMinEvalClips, ErrorCode::kPrecondition,
          "fit_logistic5 needs >= 6 points");
  require(!all_tied(raw), ErrorCode::kDegenerate, "fit_logistic5: constant scores");
  for (std::size_t i = 0; i < raw.size(); ++i)
    require(std::isfinite(raw[i]) && std::isfinite(mos[i]), ErrorCode::kPrecondition,
            "fit_logistic5: non-finite input");

  // Work on standardized scores so the starts are scale free.
  const double mx = mean(raw);
  double var = 0.0;
  for (double v : raw) var += (v - mx) * (v - mx);
  const double sx = std::sqrt(var / double(raw.size()));
  std::vector<double> z(raw.size());
  for (std::size_t i = 0; i < raw.size(); ++i) z[i] = (raw[i] - mx) / sx;

  LmRun best;
  best.sse = std::numeric_limits<double>::infinity();
  const double slopes[] = {0.5, 1.0, 2.0, 4.0, -0.5, -1.0, -2.0, -4.0};
  const double centers[] = {-1.0, 0.0, 1.0};
  for (double b2 : slopes) {
    for (double b3 : centers) {
      const LmRun run = levenberg_marquardt(linear_solve(b2, b3, z, mos), z, mos);
      if (run.sse < best.sse) best = run;
    }
  }

  // Affine refit of the winning curve: q' = a q + c stays in the family.
  Logistic5Params p = best.params;
  {
    const auto q = p.map(z);
    const double mq = mean(q), my = mean(mos);
    double sqq = 0.0, sqy = 0.0;
    for (std::size_t i = 0; i < q.size(); ++i) {
      sqq += (q[i] - mq) * (q[i] - mq);
      sqy += (q[i] - mq) * (mos[i] - my);
    }
    if (sqq > 0.0) {
      const double a = sqy / sqq, c = my - a * mq;
      Logistic5Params polished = p;
      polished.beta = {a * p.beta[0], p.beta[1], p.beta[2], a * p.beta[3], a * p.beta[4] + c};
      if (sse(polished, z, mos) <= best.sse) p = polished;
    }
  }

  // Back to raw units.
  LogisticFit fit;
  const auto& b = p.beta;
  fit.params.beta = {b[0], b[1] / sx, mx + sx * b[2], b[3] / sx, b[4] - b[3] * mx / sx};
  fit.converged = best.converged;
  fit.iterations = best.iterations;
  fit.rmse = std::sqrt(sse(fit.params, raw, mos) / double(raw.size()));
  return fit;
}

ConfusionMatrix confusion_matrix(std::span<const int> predicted, std::span<const int> truth,
                                 std::size_t classes) {
  require(predicted.size() == truth.size(), ErrorCode::kShape,
          "confusion_matrix: length mismatch");
  require(classes >= 1, ErrorCode::kPrecondition, "confusion_matrix: no classes");
  ConfusionMatrix m;
  m.classes = classes;
  m.counts.assign(classes * classes, 0);
  std::size_t correct = 0;
  for (std::size_t i = 0; i < truth.size(); ++i) {
    require(truth[i] >= 0 && std::size_t(truth[i]) < classes && predicted[i] >= 0 &&
                std::size_t(predicted[i]) < classes,
            ErrorCode::kPrecondition,
            "confusion_matrix: label out of range at index " + std::to_string(i));
    ++m.counts[std::size_t(truth[i]) * classes + std::size_t(predicted[i])];
    correct += truth[i] == predicted[i];
  }
  m.total = truth.size();
  m.accuracy = m.total ? double(correct) / double(m.total) : 0.0;
  return m;
}

std::string ConfusionMatrix::to_csv(const std::vector<std::string>& names) const {
  auto name = [&](std::size_t i) { return i < names.size() ? names[i] : std::to_string(i); };
  std::string out = "true\\pred";
  for (std::size_t j = 0; j < classes; ++j) out += "," + name(j);
  out += "\n";
  for (std::size_t i = 0; i < classes; ++i) {
    out += name(i);
    for (std::size_t j = 0; j < classes; ++j) out += "," + std::to_string(at(i, j));
    out += "\n";
  }
  return out;
}

EvalReport evaluate_quality(std::span<const double> predictions, std::span<const double> mos,
                            const std::vector<std::string>& ids) {
  check_pair(predictions, mos, "evaluate_quality");
  require(predictions.size() >= kMinEvalClips, ErrorCode::kPrecondition,
          "evaluation needs >= 6 clips, got " + std::to_string(predictions.size()));
  require(ids.empty() || ids.size() == predictions.size(), ErrorCode::kShape,
          "evaluate_quality: id count mismatch");
  EvalReport r;
  r.logistic = fit_logistic5(predictions, mos);
  const auto mapped = r.logistic.params.map(predictions);
  r.plcc_raw = plcc(predictions, mos);
  r.plcc = all_tied(mapped) ? 0.0 : plcc(mapped, mos);
  r.srocc = srocc(predictions, mos);
  r.krocc = krocc(predictions, mos);
  r.srocc_mapped = all_tied(mapped) ? 0.0 : srocc(mapped, mos);
  r.krocc_mapped = all_tied(mapped) ? 0.0 : krocc(mapped, mos);
  for (std::size_t i = 0; i < predictions.size(); ++i) {
    r.rows.push_back({ids.empty() ? std::to_string(i) : ids[i], mos[i], predictions[i], mapped[i]});
  }
  return r;
}

double psnr(const media::Frame& distorted, const media::Frame& reference) {
  require(distorted.width() == reference.width() && distorted.height() == reference.height(),
          ErrorCode::kShape, "psnr: frame dimensions differ");
  const auto a = distorted.values(), b = reference.values();
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = double(a[i]) - double(b[i]);
    s += d * d;
  }
  const double mse = s / double(a.size());
  if (mse <= 0.0) return kPsnrCap;
  return std::min(kPsnrCap, 10.0 * std::log10(1.0 / mse));
}

std::vector<double> psnr_frames(const media::VideoClip& distorted,
                                const media::VideoClip& reference) {
  require(distorted.frames.size() == reference.frames.size(), ErrorCode::kShape,
          "psnr: frame count " + std::to_string(distorted.frames.size()) + " vs reference " +
              std::to_string(reference.frames.size()));
  require(!distorted.frames.empty(), ErrorCode::kPrecondition, "psnr: empty clip");
  std::vector<double> out;
  for (std::size_t i = 0; i < distorted.frames.size(); ++i)
    out.push_back(psnr(distorted.frames[i], reference.frames[i]));
  return out;
}

double psnr_baseline(const media::VideoClip& distorted, const media::VideoClip& reference,
                     pooling::PoolingMode mode) {
  return pooling::pool_conventional(psnr_frames(distorted, reference), mode);
}

}  // namespace scopeqa::eval
