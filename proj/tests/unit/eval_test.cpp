#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <map>
#include <random>

#include "scopeqa/error.hpp"
#include "scopeqa/eval/metrics.hpp"
#include "scopeqa/eval/report.hpp"

namespace scopeqa::eval {
namespace {

using V = std::vector<double>;

// Computational-formula Pearson in long double.
double pearson_oracle(const V& x, const V& y) {
  const long double n = x.size();
  long double sx = 0, sy = 0, sxx = 0, syy = 0, sxy = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sx += x[i];
    sy += y[i];
    sxx += (long double)x[i] * x[i];
    syy += (long double)y[i] * y[i];
    sxy += (long double)x[i] * y[i];
  }
  return double((n * sxy - sx * sy) / std::sqrt((n * sxx - sx * sx) * (n * syy - sy * sy)));
}

// rank = (#smaller) + (#equal + 1) / 2
V rank_oracle(const V& x) {
  V r;
  for (double a : x) {
    double less = 0, eq = 0;
    for (double b : x) {
      less += b < a;
      eq += b == a;
    }
    r.push_back(less + (eq + 1) / 2);
  }
  return r;
}

// Tau-b from concordant/discordant counts and tie-group corrections.
double kendall_oracle(const V& x, const V& y) {
  long long conc = 0, disc = 0;
  for (std::size_t i = 0; i < x.size(); ++i)
    for (std::size_t j = 0; j < i; ++j) {
      const double p = (x[i] - x[j]) * (y[i] - y[j]);
      conc += p > 0;
      disc += p < 0;
    }
  auto tie_pairs = [](const V& v) {
    std::map<double, long long> groups;
    for (double a : v) ++groups[a];
    long long t = 0;
    for (const auto& [k, c] : groups) t += c * (c - 1) / 2;
    return t;
  };
  const long long n = (long long)x.size(), n0 = n * (n - 1) / 2;
  return double(conc - disc) / std::sqrt(double(n0 - tie_pairs(x)) * double(n0 - tie_pairs(y)));
}

TEST(Correlation, Examples) {
  EXPECT_NEAR(plcc(V{1, 2, 3}, V{3, 5, 7}), 1.0, 1e-15);
  EXPECT_NEAR(plcc(V{1, 2, 3, 4}, V{-1, -2, -3, -4}), -1.0, 1e-15);
  EXPECT_NEAR(srocc(V{1, 2, 3}, V{1, 3, 2}), 0.5, 1e-15);
  EXPECT_NEAR(srocc(V{1, 1, 2}, V{3, 3, 5}), 1.0, 1e-15);
  EXPECT_NEAR(krocc(V{1, 2, 3}, V{1, 3, 2}), 1.0 / 3.0, 1e-15);
  EXPECT_NEAR(krocc(V{1, 2, 3, 4}, V{4, 3, 2, 1}), -1.0, 1e-15);
  EXPECT_NEAR(srocc(V{1, 2, 3, 4}, V{1, 8, 27, 64}), 1.0, 1e-15);
}

TEST(Correlation, Errors) {
  EXPECT_THROW(plcc(V{1, 1, 1}, V{1, 2, 3}), Error);
  EXPECT_THROW(plcc(V{1, 2}, V{1, 2, 3}), Error);
  EXPECT_THROW(srocc(V{2, 2, 2}, V{1, 2, 3}), Error);
  EXPECT_THROW(krocc(V{1, 2, 3}, V{5, 5, 5}), Error);
  EXPECT_THROW(krocc(V{1}, V{1}), Error);
}

TEST(Correlation, MatchesOraclesWithTies) {
  std::mt19937_64 rng(3);
  std::uniform_int_distribution<int> len(3, 50), coarse(0, 5);
  std::normal_distribution<double> g;
  int checked = 0;
  for (int trial = 0; trial < 1000; ++trial) {
    const std::size_t n = std::size_t(len(rng));
    const bool tied = trial % 2;
    V x(n), y(n);
    for (std::size_t i = 0; i < n; ++i) {
      x[i] = tied ? coarse(rng) : g(rng);
      y[i] = tied ? coarse(rng) : 0.5 * x[i] + g(rng);
    }
    if (std::all_of(x.begin(), x.end(), [&](double v) { return v == x[0]; }) ||
        std::all_of(y.begin(), y.end(), [&](double v) { return v == y[0]; }))
      continue;
    ++checked;
    EXPECT_NEAR(plcc(x, y), pearson_oracle(x, y), 1e-10);
    EXPECT_NEAR(srocc(x, y), pearson_oracle(rank_oracle(x), rank_oracle(y)), 1e-10);
    EXPECT_NEAR(krocc(x, y), kendall_oracle(x, y), 1e-10);
  }
  EXPECT_GT(checked, 950);
}

TEST(Correlation, RankMetricsInvariantUnderMonotoneMaps) {
  std::mt19937_64 rng(4);
  std::normal_distribution<double> g;
  for (int trial = 0; trial < 50; ++trial) {
    V x(20), y(20), fx(20);
    for (int i = 0; i < 20; ++i) {
      x[i] = g(rng);
      y[i] = x[i] + g(rng);
      fx[i] = std::exp(2 * x[i]) + 3;
    }
    EXPECT_NEAR(srocc(fx, y), srocc(x, y), 1e-12);
    EXPECT_NEAR(krocc(fx, y), krocc(x, y), 1e-12);
  }
}

TEST(Logistic, IdentityIsExact) {
  V x = {1, 2, 3, 5, 8, 13, 21};
  const auto fit = fit_logistic5(x, x);
  EXPECT_LE(fit.rmse, 1e-8);
  for (double v : x) EXPECT_NEAR(fit.params(v), v, 1e-8);
}

TEST(Logistic, RecoversGeneratingCurve) {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(0, 10);
  const std::array<std::array<double, 5>, 3> truths = {
      {{60, 1.2, 5, 0.5, 40}, {-30, 0.8, 4, 2.0, 50}, {80, 2.0, 6, 0.0, 50}}};
  for (const auto& beta : truths) {
    Logistic5Params truth;
    truth.beta = beta;
    V x(40);
    for (double& v : x) v = u(rng);
    const V y = truth.map(x);
    const auto fit = fit_logistic5(x, y);
    const double range = *std::max_element(y.begin(), y.end()) - *std::min_element(y.begin(), y.end());
    double s = 0;
    for (double v : x) s += std::pow(fit.params(v) - truth(v), 2);
    EXPECT_LE(std::sqrt(s / x.size()), 1e-6 * range);
    EXPECT_TRUE(fit.converged);
  }
}

TEST(Logistic, NeverWorseThanIdentity) {
  std::mt19937_64 rng(6);
  std::normal_distribution<double> g;
  std::uniform_int_distribution<int> len(6, 60);
  for (int trial = 0; trial < 200; ++trial) {
    V x(std::size_t(len(rng))), y(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) {
      x[i] = g(rng) * 3;
      y[i] = (trial % 3 == 0 ? -1 : 1) * std::tanh(x[i]) * 20 + g(rng) * (trial % 7);
    }
    const auto fit = fit_logistic5(x, y);
    const V mapped = fit.params.map(x);
    EXPECT_GE(plcc(mapped, y), plcc(x, y) - 1e-9);
    for (double b : fit.params.beta) EXPECT_TRUE(std::isfinite(b));
  }
}

TEST(Logistic, Errors) {
  EXPECT_THROW(fit_logistic5(V{1, 2, 3}, V{1, 2, 3}), Error);
  EXPECT_THROW(fit_logistic5(V(6, 1.0), V{1, 2, 3, 4, 5, 6}), Error);
}

TEST(Quality, PerfectAndReversed) {
  const V mos = {10, 20, 35, 50, 70, 90, 95};
  const auto r = evaluate_quality(mos, mos);
  EXPECT_NEAR(r.plcc, 1.0, 1e-12);
  EXPECT_NEAR(r.srocc, 1.0, 1e-12);
  EXPECT_NEAR(r.krocc, 1.0, 1e-12);
  ASSERT_EQ(r.rows.size(), mos.size());
  V rev(mos.rbegin(), mos.rend());
  const auto q = evaluate_quality(rev, mos);
  EXPECT_NEAR(q.srocc, -1.0, 1e-12);
  EXPECT_NEAR(q.krocc, -1.0, 1e-12);
  EXPECT_GE(q.plcc, std::abs(q.plcc_raw) - 1e-9);  // the mapping may flip the sign
  EXPECT_THROW(evaluate_quality(V{1, 2, 3, 4, 5}, V{1, 2, 3, 4, 5}), Error);
}

TEST(Confusion, Counting) {
  const std::vector<int> t = {0, 1, 2, 2};
  const auto perfect = confusion_matrix(t, t, 3);
  EXPECT_DOUBLE_EQ(perfect.accuracy, 1.0);
  EXPECT_EQ(perfect.at(2, 2), 2u);
  EXPECT_EQ(perfect.at(0, 1), 0u);
  const std::vector<int> zeros(4, 0);
  const auto col = confusion_matrix(zeros, t, 3);
  for (std::size_t i = 0; i < 3; ++i) {
    std::size_t row = 0;
    for (std::size_t j = 0; j < 3; ++j) row += col.at(i, j);
    EXPECT_EQ(col.at(i, 0), row);
  }
  const auto two = confusion_matrix(std::vector<int>{0, 1, 1}, std::vector<int>{0, 1, 2}, 3);
  EXPECT_NEAR(two.accuracy, 2.0 / 3.0, 1e-15);
  EXPECT_EQ(two.total, 3u);
  EXPECT_THROW(confusion_matrix(std::vector<int>{3}, std::vector<int>{0}, 3), Error);
  EXPECT_EQ(two.to_csv({"a", "b", "c"}).substr(0, 16), "true\\pred,a,b,c\n");
}

media::VideoClip constant_clip(std::size_t frames, float v) {
  media::VideoClip c;
  for (std::size_t i = 0; i < frames; ++i) c.frames.emplace_back(8, 8, v);
  return c;
}

TEST(Psnr, CapAndLogArithmetic) {
  const auto ref = constant_clip(5, 0.5f);
  EXPECT_DOUBLE_EQ(psnr_baseline(ref, ref, pooling::PoolingMode::kArithmetic), 100.0);
  // Offset 0.1 everywhere gives MSE 0.01.
  const auto dist = constant_clip(5, 0.6f);
  for (auto m : {pooling::PoolingMode::kArithmetic, pooling::PoolingMode::kGeometric,
                 pooling::PoolingMode::kHarmonic, pooling::PoolingMode::kMedian})
    EXPECT_NEAR(psnr_baseline(dist, ref, m), 20.0, 1e-5);
  auto outlier = dist;
  outlier.frames[2] = media::Frame(8, 8, 0.5f);
  EXPECT_NEAR(psnr_baseline(outlier, ref, pooling::PoolingMode::kMedian), 20.0, 1e-5);
  EXPECT_NEAR(psnr_baseline(outlier, ref, pooling::PoolingMode::kArithmetic), (4 * 20.0 + 100) / 5,
              1e-4);
  EXPECT_THROW(psnr_baseline(constant_clip(4, 0.5f), ref, pooling::PoolingMode::kMedian), Error);
}

TEST(Report, JsonCsvAndSvg) {
  const V mos = {10, 20, 35, 50, 70, 90};
  const V pred = {1, 2.5, 3, 5, 6, 9};
  auto r = evaluate_quality(pred, mos, {"a", "b", "c", "d", "e", "f"});
  r.confusion = confusion_matrix(std::vector<int>{0, 1}, std::vector<int>{0, 0}, 2);
  const auto j = report_to_json(r);
  for (const char* k : {"plcc", "srocc", "krocc", "logistic", "accuracy"}) EXPECT_TRUE(j.contains(k)) << k;
  const auto csv = report_rows_csv(r);
  EXPECT_EQ(csv.substr(0, 18), "id,mos,raw,mapped\n");
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 7);
  const auto svg = scatter_svg(r, "scatter <test>");
  EXPECT_EQ(svg.rfind("<svg", 0), 0u);
  EXPECT_NE(svg.find("&lt;test&gt;"), std::string::npos);
  EXPECT_EQ(svg.find("<circle") != std::string::npos, true);
  const auto curve = loss_curve_svg({{"TL", {0, 1, 2}, {0.5, 0.3, 0.2}}, {"E2E", {0, 1, 2}, {0.5, 0.2, 0.1}}},
                                    "loss");
  EXPECT_NE(curve.find("E2E"), std::string::npos);
  EXPECT_NE(curve.find("<polyline"), curve.rfind("<polyline"));
  EXPECT_THROW(loss_curve_svg({{"x", {0, 1}, {1}}}, "bad"), Error);
}

}  // namespace
}  // namespace scopeqa::eval
