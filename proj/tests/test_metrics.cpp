#include <gtest/gtest.h>

#include <random>

#include "alfa/metrics.hpp"
#include "oracles.hpp"

using namespace alfa;

namespace {

LabeledScores ls(std::vector<double> s, std::vector<std::uint8_t> y) { return {std::move(s), std::move(y)}; }

PixelEval pe(std::size_t rows, std::size_t cols, std::vector<double> pred, std::vector<std::uint8_t> mask) {
  PixelEval e{Grid(rows, cols), std::move(mask)};
  e.prediction.values = std::move(pred);
  return e;
}

}  // namespace

TEST(ImageMetrics, AurocHandValues) {
  EXPECT_DOUBLE_EQ(auroc(ls({0.1, 0.2, 0.8, 0.9}, {0, 0, 1, 1})), 1.0);
  EXPECT_DOUBLE_EQ(auroc(ls({0.8, 0.9, 0.2, 0.1}, {1, 0, 1, 0})), 0.5);
  EXPECT_DOUBLE_EQ(auroc(ls({0.4, 0.4, 0.4, 0.4}, {1, 0, 1, 0})), 0.5);
  EXPECT_DOUBLE_EQ(auroc(ls({0.9, 0.1}, {0, 1})), 0.0);
}

TEST(ImageMetrics, AuprAndF1HandValues) {
  EXPECT_DOUBLE_EQ(aupr(ls({0.2, 0.8}, {1, 0})), 0.5);
  EXPECT_DOUBLE_EQ(aupr(ls({0.1, 0.9}, {0, 1})), 1.0);
  EXPECT_NEAR(f1_max(ls({0.9, 0.2, 0.5}, {1, 1, 0})), 0.8, 1e-15);
  EXPECT_DOUBLE_EQ(f1_max(ls({0.9, 0.1}, {1, 0})), 1.0);
}

TEST(ImageMetrics, SingleClassOrBadInputRejected) {
  EXPECT_THROW(auroc(ls({0.1, 0.2}, {1, 1})), Error);
  EXPECT_THROW(auroc(ls({0.1, 0.2}, {0, 0})), Error);
  EXPECT_THROW(auroc(ls({0.1, 0.2}, {0})), Error);
  EXPECT_THROW(auroc(ls({}, {})), Error);
}

TEST(ImageMetrics, InvariantUnderMonotoneMaps) {
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> u(0, 1);
  for (int t = 0; t < 200; ++t) {
    std::vector<double> s;
    std::vector<std::uint8_t> y;
    for (int i = 0; i < 30; ++i) {
      s.push_back(std::round(u(rng) * 10) / 10);
      y.push_back(i % 3 == 0);
    }
    std::vector<double> m, neg;
    for (double v : s) {
      m.push_back(std::exp(3 * v) - 7);
      neg.push_back(-v);
    }
    EXPECT_DOUBLE_EQ(auroc(ls(s, y)), auroc(ls(m, y)));
    EXPECT_DOUBLE_EQ(aupr(ls(s, y)), aupr(ls(m, y)));
    EXPECT_DOUBLE_EQ(f1_max(ls(s, y)), f1_max(ls(m, y)));
    EXPECT_NEAR(auroc(ls(s, y)) + auroc(ls(neg, y)), 1.0, 1e-12);
  }
}

TEST(ImageMetrics, MatchOracles) {
  std::mt19937_64 rng(2);
  std::uniform_real_distribution<double> u(0, 1);
  for (int t = 0; t < 300; ++t) {
    const int n = 2 + static_cast<int>(rng() % 120);
    std::vector<double> s;
    std::vector<std::uint8_t> y;
    for (int i = 0; i < n; ++i) {
      s.push_back(t % 2 ? std::round(u(rng) * 8) / 8 : u(rng));
      y.push_back(u(rng) < 0.4);
    }
    y[0] = 0;
    y[1] = 1;
    EXPECT_NEAR(auroc(ls(s, y)), oracle::auroc(s, y), 1e-12);
    EXPECT_NEAR(aupr(ls(s, y)), oracle::aupr(s, y), 1e-12);
    EXPECT_NEAR(f1_max(ls(s, y)), oracle::f1_max(s, y), 1e-12);
  }
}

TEST(Components, EightConnected) {
  // Diagonal touch joins, gap separates.
  std::vector<std::uint8_t> m{1, 0, 0,  //
                              0, 1, 0,  //
                              0, 0, 0,  //
                              1, 1, 0};
  int count = 0;
  auto lab = label_components(m, 4, 3, count);
  EXPECT_EQ(count, 2);
  EXPECT_EQ(lab[0], lab[4]);
  EXPECT_NE(lab[0], lab[9]);
  EXPECT_EQ(lab[9], lab[10]);
  EXPECT_EQ(lab[1], -1);
}

TEST(Components, MatchOracle) {
  std::mt19937_64 rng(3);
  for (int t = 0; t < 200; ++t) {
    auto e = oracle::random_pixel_eval(rng, 8, 8, true);
    int a = 0, b = 0;
    auto got = label_components(e.mask, 8, 8, a);
    auto want = oracle::components(e.mask, 8, 8, b);
    ASSERT_EQ(a, b);
    // Same partition, possibly different ids.
    for (std::size_t p = 0; p < 64; ++p)
      for (std::size_t q = 0; q < 64; ++q) ASSERT_EQ(got[p] == got[q], want[p] == want[q]);
  }
}

TEST(Pro, HandValues) {
  std::vector<PixelEval> perfect{pe(2, 2, {1, 0, 0, 0}, {1, 0, 0, 0})};
  EXPECT_NEAR(pro(perfect), 1.0, 1e-12);
  std::vector<PixelEval> constant{pe(2, 2, {0.5, 0.5, 0.5, 0.5}, {1, 0, 0, 0})};
  EXPECT_NEAR(pro(constant), 0.15, 1e-12);
  // Two regions, only one found before any false positive.
  std::vector<PixelEval> half{pe(1, 5, {1, 0, 0, 0, 0}, {1, 0, 1, 0, 0})};
  EXPECT_NEAR(pro(half), 0.575, 1e-12);
  EXPECT_NEAR(pro(half, 0.3), oracle::pro(half, 0.3), 1e-12);
}

TEST(Pro, CurveStartsAtOriginAndIsMonotone) {
  std::mt19937_64 rng(4);
  std::vector<PixelEval> evals;
  for (int i = 0; i < 5; ++i) evals.push_back(oracle::random_pixel_eval(rng, 8, 8, i % 2 == 0));
  auto curve = pro_curve(evals);
  ASSERT_GE(curve.size(), 2u);
  EXPECT_EQ(curve.front().fpr, 0.0);
  for (std::size_t i = 1; i < curve.size(); ++i) {
    EXPECT_GE(curve[i].fpr, curve[i - 1].fpr);
    EXPECT_GE(curve[i].overlap, curve[i - 1].overlap - 1e-15);
  }
  EXPECT_NEAR(curve.back().fpr, 1.0, 1e-15);
  EXPECT_NEAR(curve.back().overlap, 1.0, 1e-15);
}

TEST(Pro, NeedsADefect) {
  std::vector<PixelEval> clean{pe(1, 2, {0.1, 0.2}, {0, 0})};
  EXPECT_THROW(pro(clean), Error);
  EXPECT_THROW(pro(std::vector<PixelEval>{}), Error);
  std::vector<PixelEval> bad{pe(1, 2, {0.1, 0.2}, {0})};
  EXPECT_THROW(pro(bad), Error);
}

TEST(PixelMetrics, PerfectAndInverted) {
  std::vector<PixelEval> perfect{pe(2, 3, {0.9, 0.8, 0.1, 0.0, 0.2, 0.1}, {1, 1, 0, 0, 0, 0})};
  auto m = pixel_metrics(perfect);
  EXPECT_DOUBLE_EQ(m.pauroc, 1.0);
  EXPECT_NEAR(m.pro, 1.0, 1e-12);
  EXPECT_DOUBLE_EQ(m.pf1_max, 1.0);
  std::vector<PixelEval> inverted{pe(2, 3, {0.0, 0.1, 0.9, 0.8, 0.7, 0.6}, {1, 1, 0, 0, 0, 0})};
  EXPECT_DOUBLE_EQ(pixel_metrics(inverted).pauroc, 0.0);
}

TEST(PixelMetrics, MatchOracles) {
  std::mt19937_64 rng(5);
  for (int t = 0; t < 100; ++t) {
    std::vector<PixelEval> evals;
    const int n = 1 + static_cast<int>(rng() % 4);
    for (int i = 0; i < n; ++i) evals.push_back(oracle::random_pixel_eval(rng, 8, 8, i == 0));
    std::vector<double> s;
    std::vector<std::uint8_t> y;
    oracle::flatten(evals, s, y);
    if (std::count(y.begin(), y.end(), 0) == 0) continue;
    const double limit = t % 3 == 0 ? 1.0 : 0.3;
    auto m = pixel_metrics(evals, limit);
    EXPECT_NEAR(m.pauroc, oracle::auroc(s, y), 1e-9);
    EXPECT_NEAR(m.pf1_max, oracle::f1_max(s, y), 1e-9);
    EXPECT_NEAR(m.pro, oracle::pro(evals, limit), 1e-9) << "instance " << t;
  }
}
