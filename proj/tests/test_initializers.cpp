#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "msp/initializers.hpp"
#include "msp/training.hpp"
#include "oracles.hpp"

using namespace msp;

namespace {

Mat random_mat(Eigen::Index r, Eigen::Index c, std::mt19937_64& rng, double a = 1.0) {
  std::uniform_real_distribution<double> d(-a, a);
  Mat m(r, c);
  for (Eigen::Index i = 0; i < r; ++i)
    for (Eigen::Index j = 0; j < c; ++j) m(i, j) = d(rng);
  return m;
}

struct Pair {
  ParamLayout layout;
  std::unique_ptr<InitializedRnn> net;
  ParamVector theta;
};

Pair make(PredictorConfig pred, InitializerConfig init, std::uint64_t seed, double scale = 0.5) {
  Pair p;
  p.net = std::make_unique<InitializedRnn>(pred, init, p.layout, "", pred.input_dim, pred.output_dim);
  p.theta = ParamVector(p.layout);
  std::mt19937_64 rng(seed);
  p.net->init_params(p.theta, rng, scale);
  return p;
}

InitSegment random_segment(int tau, int m, int n, std::mt19937_64& rng) {
  return {random_mat(tau + 1, m, rng), random_mat(tau + 1, n, rng)};
}

InitializerConfig mlp(int hidden, int tau) {
  InitializerConfig c;
  c.kind = InitKind::kMlp;
  c.hidden = hidden;
  c.tau = tau;
  return c;
}

InitializerConfig rnn(int hidden, int tau) {
  InitializerConfig c = mlp(hidden, tau);
  c.kind = InitKind::kRnn;
  return c;
}

}  // namespace

TEST(MlpInit, ZeroWeightsGiveZeroState) {
  Pair p = make({PredictorKind::kLstm, 2, 1, {3}}, mlp(5, 4), 1);
  p.theta.values().setZero();
  std::mt19937_64 rng(2);
  const RnnState x = mlp_init(*p.net, p.theta, random_segment(4, 2, 1, rng));
  EXPECT_EQ(x.x(), Vec::Zero(p.net->predictor().state_count()));
}

TEST(MlpInit, DeterministicAndMatchesOracle) {
  const PredictorConfig pred{PredictorKind::kLstm, 2, 2, {3, 2}};
  Pair p = make(pred, mlp(6, 3), 4, 1.0);
  std::mt19937_64 rng(5);
  const InitSegment seg = random_segment(3, 2, 2, rng);
  const RnnState a = mlp_init(*p.net, p.theta, seg);
  EXPECT_EQ(a.x(), mlp_init(*p.net, p.theta, seg).x());
  const Vec bound = p.net->predictor().state_bound(5.0);
  const oracle::V want = oracle::mlp_init(p.theta, "", seg.u, seg.y, oracle::to_v(bound));
  EXPECT_LT((a.x() - oracle::to_vec(want)).cwiseAbs().maxCoeff(), 1e-14);
}

TEST(MlpInit, CellStatesBoundedByCmaxOthersByOne) {
  const PredictorConfig pred{PredictorKind::kLstm, 1, 1, {4}};
  InitializerConfig ic = mlp(4, 2);
  ic.c_max = 3.0;
  Pair p = make(pred, ic, 9, 50.0);  // saturate
  std::mt19937_64 rng(1);
  const RnnState x = mlp_init(*p.net, p.theta, random_segment(2, 1, 1, rng));
  const auto mask = p.net->predictor().cell_state_mask();
  for (Eigen::Index i = 0; i < x.o.size(); ++i) EXPECT_LE(std::abs(x.o(i)), 1.0);
  for (Eigen::Index i = 0; i < x.s.size(); ++i) EXPECT_LE(std::abs(x.s(i)), mask[i] ? 3.0 : 1.0);
  EXPECT_GT(x.s.cwiseAbs().maxCoeff(), 1.0);
}

TEST(MlpInit, SegmentShapeChecked) {
  Pair p = make({PredictorKind::kMlfc, 1, 1, {2}}, mlp(3, 4), 1);
  std::mt19937_64 rng(2);
  EXPECT_THROW(mlp_init(*p.net, p.theta, random_segment(3, 1, 1, rng)), DimensionError);
  EXPECT_THROW(mlp_init(*p.net, p.theta, random_segment(4, 2, 1, rng)), DimensionError);
}

TEST(RnnInit, ZeroSegmentZeroParams) {
  Pair p = make({PredictorKind::kLstm, 1, 1, {2}}, rnn(3, 4), 1);
  p.theta.values().setZero();
  const RnnState x = rnn_init(*p.net, p.theta, {Mat::Zero(5, 1), Mat::Zero(5, 1)});
  EXPECT_EQ(x.x(), Vec::Zero(p.net->predictor().state_count()));
}

TEST(RnnInit, OrderSensitive) {
  Pair p = make({PredictorKind::kLstm, 1, 1, {2}}, rnn(4, 5), 3, 0.8);
  std::mt19937_64 rng(6);
  const InitSegment seg = random_segment(5, 1, 1, rng);
  InitSegment rev = seg;
  rev.u = seg.u.colwise().reverse();
  rev.y = seg.y.colwise().reverse();
  EXPECT_GT((rnn_init(*p.net, p.theta, seg).x() - rnn_init(*p.net, p.theta, rev).x()).norm(), 1e-6);
}

TEST(RnnInit, EarliestInputInfluencesState) {
  Pair p = make({PredictorKind::kLstm, 1, 1, {2}}, rnn(4, 5), 3, 0.8);
  std::mt19937_64 rng(7);
  InitSegment seg = random_segment(5, 1, 1, rng);
  const Vec base = rnn_init(*p.net, p.theta, seg).x();
  seg.u(0, 0) += 1e-6;
  const Vec bumped = rnn_init(*p.net, p.theta, seg).x();
  EXPECT_GT(((bumped - base) / 1e-6).cwiseAbs().maxCoeff(), 1e-6);
}

TEST(Washout, SingleStepEqualsPredictorStepFromZero) {
  const PredictorConfig pred{PredictorKind::kLstm, 2, 1, {3}};
  InitializerConfig ic;
  ic.kind = InitKind::kWashout;
  Pair p = make(pred, ic, 2);
  std::mt19937_64 rng(1);
  const Mat warm = random_mat(1, 2, rng);
  const RnnState w = washout_init(p.net->predictor(), p.theta, warm);
  const auto [x1, y] = predictor_step(p.net->predictor(), p.theta, p.net->predictor().zero_state(), warm.row(0).transpose());
  EXPECT_EQ(w.x(), x1.x());
  EXPECT_THROW(washout_init(p.net->predictor(), p.theta, Mat(0, 2)), DimensionError);
}

TEST(Washout, ZeroParametersStayAtZero) {
  const PredictorConfig pred{PredictorKind::kMlfc, 1, 1, {3}};
  InitializerConfig ic;
  ic.kind = InitKind::kWashout;
  Pair p = make(pred, ic, 2);
  p.theta.values().setZero();
  std::mt19937_64 rng(1);
  EXPECT_EQ(washout_init(p.net->predictor(), p.theta, random_mat(6, 1, rng)).x(), Vec::Zero(4));
}

TEST(Washout, ContractiveMlfcForgetsItsStart) {
  const PredictorConfig pred{PredictorKind::kMlfc, 1, 1, {4}};
  InitializerConfig ic;
  ic.kind = InitKind::kWashout;
  Pair p = make(pred, ic, 8);
  Mat a = p.theta.get("pred.mlfc0.A");
  for (Eigen::Index i = 0; i < a.rows(); ++i) a.row(i) *= 0.5 / a.row(i).cwiseAbs().sum();
  p.theta.set("pred.mlfc0.A", a);
  std::mt19937_64 rng(4);
  const Predictor& net = p.net->predictor();
  RnnState xa = net.zero_state(), xb = net.zero_state();
  xa.s = random_mat(4, 1, rng, 2.0);
  xb.s = random_mat(4, 1, rng, 2.0);
  const double d0 = (xa.s - xb.s).cwiseAbs().maxCoeff();
  const int W = 12;
  const Mat warm = random_mat(W, 1, rng);
  const RnnState fa = rollout_with_state(net, p.theta, xa, warm).first;
  const RnnState fb = rollout_with_state(net, p.theta, xb, warm).first;
  EXPECT_LT((fa.s - fb.s).cwiseAbs().maxCoeff(), std::pow(0.5, W) * d0);
}

TEST(Washout, BlowUpRaisesInstabilityWithStep) {
  const PredictorConfig pred{PredictorKind::kMlfc, 1, 1, {1}, Activation::kIdentity};
  InitializerConfig ic;
  ic.kind = InitKind::kWashout;
  Pair p = make(pred, ic, 1);
  p.theta.set("pred.mlfc0.A", Mat::Constant(1, 1, 1e200));
  p.theta.set("pred.mlfc0.B", Mat::Constant(1, 1, 1.0));
  try {
    washout_init(p.net->predictor(), p.theta, Mat::Ones(5, 1));
    FAIL() << "expected InstabilityError";
  } catch (const InstabilityError& e) {
    EXPECT_GE(e.step(), 1);
  }
}

TEST(StateInitCost, ExactMatchIsZero) {
  Mat as(1, 2), ao(1, 1), b(1, 1);
  as << 1, 2;
  ao << 0.5;
  b << 0.25;
  Vec s(2);
  s << 1, 1;  // A_s s = 3
  Vec u(1), y0(1), yp(1);
  u << 4;
  yp << 2;
  y0 << 3 + 0.5 * 2 + 0.25 * 4;
  EXPECT_EQ(state_init_cost(as, ao, b, s, u, y0, yp), 0.0);
}

TEST(StateInitCost, ZeroWeightsGiveOutputNorm) {
  Vec y0(2);
  y0 << 1, 0;
  EXPECT_EQ(state_init_cost(Mat::Zero(2, 3), Mat::Zero(2, 2), Mat::Zero(2, 1), Vec::Ones(3), Vec::Ones(1), y0,
                            Vec::Ones(2)),
            1.0);
}

TEST(StateInitCost, RandomCaseMatchesDirectFormula) {
  std::mt19937_64 rng(12);
  const Mat as = random_mat(2, 3, rng), ao = random_mat(2, 2, rng), b = random_mat(2, 1, rng);
  const Vec s = random_mat(3, 1, rng), u = random_mat(1, 1, rng), y0 = random_mat(2, 1, rng), yp = random_mat(2, 1, rng);
  double sq = 0.0;
  for (int i = 0; i < 2; ++i) {
    double r = -y0(i);
    for (int j = 0; j < 3; ++j) r += as(i, j) * s(j);
    for (int j = 0; j < 2; ++j) r += ao(i, j) * yp(j);
    r += b(i, 0) * u(0);
    sq += r * r;
  }
  EXPECT_NEAR(state_init_cost(as, ao, b, s, u, y0, yp), std::sqrt(sq), 1e-15);
}

TEST(StateInitCost, TapeVersionAgreesWithPlain) {
  const PredictorConfig pred{PredictorKind::kLstm, 1, 2, {3}};
  Pair p = make(pred, mlp(4, 3), 2, 0.8);
  std::mt19937_64 rng(3);
  const InitSegment seg = random_segment(3, 1, 2, rng);
  Tape t({p.theta.values().data(), p.theta.size()}, false);
  const auto st = p.net->start(t, seg);
  const double tape_cost = p.net->state_init_cost(t, st, seg).scalar();
  const Predictor& net = p.net->predictor();
  const double plain = state_init_cost(p.theta.get("pred.out.As"), p.theta.get("pred.out.Ao"), p.theta.get("pred.out.B"),
                                       st.state.s.value(), seg.u.row(3).transpose(), seg.y.row(3).transpose(),
                                       seg.y.row(2).transpose());
  EXPECT_NEAR(tape_cost, plain, 1e-14);
  (void)net;
}

TEST(Initializers, JointGradientMatchesFiniteDifferences) {
  for (InitKind kind : {InitKind::kMlp, InitKind::kRnn}) {
    InitializerConfig ic = kind == InitKind::kMlp ? mlp(5, 3) : rnn(3, 3);
    BlackBoxModel model({PredictorKind::kLstm, 1, 1, {3}}, ic);
    const ParamVector th = model.fresh_params(3, 0.4);
    std::mt19937_64 rng(8);
    SampleWindow w;
    w.init = random_segment(3, 1, 1, rng);
    w.pred_u = random_mat(5, 1, rng);
    w.pred_y = random_mat(5, 1, rng);
    for (const auto& b : gradient_check(model, th, w, 1.0, 1.0)) {
      EXPECT_LT(b.max_rel_error, 1e-4) << b.block;
    }
  }
}

TEST(Initializers, WashoutLongerThanSegmentRejected) {
  InitializerConfig ic;
  ic.kind = InitKind::kWashout;
  ic.tau = 4;
  ic.washout = 6;
  EXPECT_THROW(make({PredictorKind::kMlfc, 1, 1, {2}}, ic, 1), DimensionError);
}
