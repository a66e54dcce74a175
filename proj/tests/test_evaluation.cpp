#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <random>

#include "msp/evaluation.hpp"

using namespace msp;

namespace {

Mat random_mat(Eigen::Index r, Eigen::Index c, std::mt19937_64& rng) {
  std::normal_distribution<double> d(0.0, 1.0);
  Mat m(r, c);
  for (Eigen::Index i = 0; i < r; ++i)
    for (Eigen::Index j = 0; j < c; ++j) m(i, j) = d(rng);
  return m;
}

double sorted_quantile(std::vector<double> v, double p) {
  std::sort(v.begin(), v.end());
  const double pos = p * static_cast<double>(v.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, v.size() - 1);
  return v[lo] + (pos - static_cast<double>(lo)) * (v[hi] - v[lo]);
}

/// Returns the measured outputs unchanged.
class EchoModel : public Trainable {
 public:
  explicit EchoModel(int n) : n_(n) { layout_.add("unused", 1); }
  const ParamLayout& layout() const override { return layout_; }
  void init_params(ParamVector&, std::mt19937_64&, double) const override {}
  WindowLoss window_loss(Tape& t, const SampleWindow&, double, double, const DropoutContext*) const override {
    return {t.constant(0.0), 0.0, 0.0};
  }
  Mat predict(const ParamVector&, const SampleWindow& w) const override { return w.pred_y; }
  int output_dim() const override { return n_; }

 private:
  int n_;
  ParamLayout layout_;
};

}  // namespace

TEST(StepError, HandExamples) {
  Vec e(3);
  e << 1, -1, 1;
  EXPECT_EQ(step_error_norm(e), 1.0);
  e << 3, 0, 0;
  EXPECT_EQ(step_error_norm(e), 1.0);
  EXPECT_EQ(step_error_norm(Vec::Zero(3)), 0.0);
  EXPECT_THROW(step_error_norm(Vec::Zero(2)), DimensionError);
  EXPECT_EQ(mean_abs_error(Vec::Constant(5, -2.0)), 2.0);
}

TEST(Rmsse, HandExampleAndHomogeneity) {
  const std::vector<Mat> p{Mat::Constant(4, 2, 1.0)}, t{Mat::Constant(4, 2, -1.0)};
  // each step: |e|^2 = 8
  EXPECT_NEAR(rmsse(p, t), std::sqrt(8.0), 1e-15);
  std::mt19937_64 rng(2);
  const std::vector<Mat> a{random_mat(5, 3, rng), random_mat(5, 3, rng)}, b{random_mat(5, 3, rng), random_mat(5, 3, rng)};
  const std::vector<Mat> a3{3 * a[0], 3 * a[1]}, b3{3 * b[0], 3 * b[1]};
  EXPECT_NEAR(rmsse(a3, b3), 3 * rmsse(a, b), 1e-12);
  EXPECT_EQ(rmsse(a, a), 0.0);
}

TEST(Rmsse, RandomCaseMatchesDirectFormula) {
  std::mt19937_64 rng(7);
  std::vector<Mat> p, t;
  for (int i = 0; i < 6; ++i) {
    p.push_back(random_mat(9, 3, rng));
    t.push_back(random_mat(9, 3, rng));
  }
  double acc = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i)
    for (int k = 0; k < 9; ++k)
      for (int j = 0; j < 3; ++j) acc += (p[i](k, j) - t[i](k, j)) * (p[i](k, j) - t[i](k, j));
  EXPECT_NEAR(rmsse(p, t), std::sqrt(acc / (9.0 * 6.0)), 1e-12);
}

TEST(BoxStats, MatchesSortOracle) {
  std::mt19937_64 rng(5);
  std::exponential_distribution<double> d(1.0);
  std::vector<double> v(137);
  for (double& x : v) x = d(rng);
  v.push_back(40.0);  // outlier
  const BoxStats b = box_stats(v);
  double mean = 0.0;
  for (double x : v) mean += x;
  mean /= static_cast<double>(v.size());
  EXPECT_NEAR(b.mean, mean, 1e-12);
  EXPECT_NEAR(b.q25, sorted_quantile(v, 0.25), 1e-12);
  EXPECT_NEAR(b.median, sorted_quantile(v, 0.5), 1e-12);
  EXPECT_NEAR(b.q75, sorted_quantile(v, 0.75), 1e-12);
  EXPECT_NEAR(b.p99, sorted_quantile(v, 0.99), 1e-12);
  const double iqr = b.q75 - b.q25;
  int outliers = 0;
  double hi = -INFINITY;
  for (double x : v) {
    if (x > b.q75 + 1.5 * iqr || x < b.q25 - 1.5 * iqr) ++outliers;
    else hi = std::max(hi, x);
  }
  EXPECT_EQ(b.outliers, outliers);
  EXPECT_EQ(b.whisker_high, hi);
  EXPECT_GE(outliers, 1);
}

TEST(BoxStats, IdenticalValuesCollapse) {
  const BoxStats b = box_stats(std::vector<double>(10, 2.5));
  EXPECT_EQ(b.q25, 2.5);
  EXPECT_EQ(b.q75, 2.5);
  EXPECT_EQ(b.whisker_low, 2.5);
  EXPECT_EQ(b.whisker_high, 2.5);
  EXPECT_EQ(b.outliers, 0);
  EXPECT_ANY_THROW(box_stats({}));
}

TEST(Distributions, PerStepMeansAndUnitScale) {
  std::mt19937_64 rng(3);
  std::vector<Mat> p, t;
  for (int i = 0; i < 4; ++i) {
    p.push_back(random_mat(6, 3, rng));
    t.push_back(random_mat(6, 3, rng));
  }
  const PredictionReport r = distributions(p, t);
  const PredictionReport deg = distributions(p, t, {}, 180.0 / M_PI);
  ASSERT_EQ(r.steps.size(), 6u);
  EXPECT_EQ(r.windows, 4u);
  for (int k = 0; k < 6; ++k) {
    double m = 0.0;
    for (int i = 0; i < 4; ++i) m += (p[i].row(k) - t[i].row(k)).cwiseAbs().mean();
    EXPECT_NEAR(r.steps[k].mean, m / 4.0, 1e-12);
    EXPECT_NEAR(deg.steps[k].mean, r.steps[k].mean * 180.0 / M_PI, 1e-10);
  }
  EXPECT_NEAR(r.rmsse, rmsse(p, t), 1e-12);
  const PredictionReport one = distributions(p, t, {1});
  double col1 = 0.0;
  for (int i = 0; i < 4; ++i) col1 += std::abs(p[i](0, 1) - t[i](0, 1));
  EXPECT_NEAR(one.steps[0].mean, col1 / 4.0, 1e-12);
}

TEST(Cascade, SubstitutingMeasuredRatesIsBitExact) {
  std::mt19937_64 rng(11);
  SampleWindow vw;
  vw.init = {random_mat(4, 7, rng), random_mat(4, 3, rng)};
  vw.pred_u = random_mat(8, 7, rng);
  vw.pred_y = random_mat(8, 3, rng);
  EXPECT_EQ(substitute_body_rates(vw, vw.pred_u.rightCols(3)).pred_u, vw.pred_u);

  InitializerConfig ic;
  ic.kind = InitKind::kMlp;
  ic.hidden = 5;
  ic.tau = 3;
  const BlackBoxModel vel({PredictorKind::kLstm, 7, 3, {4}}, ic);
  const ParamVector th = vel.fresh_params(1, 0.5);
  const EchoModel perfect(3);
  EXPECT_EQ(cascade_predict(perfect, ParamVector(perfect.layout()), vel, th, vw), vel.predict(th, vw));
  EXPECT_THROW(substitute_body_rates(vw, Mat::Zero(7, 3)), DimensionError);
}

TEST(Compare, Antisymmetric) {
  std::mt19937_64 rng(4);
  std::vector<Mat> p, q, t;
  for (int i = 0; i < 3; ++i) {
    p.push_back(random_mat(5, 3, rng));
    q.push_back(random_mat(5, 3, rng));
    t.push_back(random_mat(5, 3, rng));
  }
  const PredictionReport a = distributions(p, t), b = distributions(q, t);
  const Comparison ab = compare(a, b), ba = compare(b, a);
  for (std::size_t k = 0; k < ab.delta.size(); ++k) {
    EXPECT_EQ(ab.delta[k], -ba.delta[k]);
    if (ab.winner[k] == 'A') {
      EXPECT_EQ(ba.winner[k], 'B');
    }
  }
  EXPECT_NEAR(ab.rmsse_ratio * ba.rmsse_ratio, 1.0, 1e-12);
  EXPECT_EQ(compare(a, a).winner[0], '=');
}
