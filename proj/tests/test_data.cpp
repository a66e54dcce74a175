#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>

#include "msp/data.hpp"

using namespace msp;
namespace fs = std::filesystem;

namespace {

fs::path temp_dir() {
  const fs::path d = fs::temp_directory_path() / ("msp_data_test_" + std::to_string(::testing::UnitTest::GetInstance()->random_seed()));
  fs::create_directories(d);
  return d;
}

TimeSeries ramp(Eigen::Index n) {
  TimeSeries s;
  s.dt = 0.1;
  s.u = Mat(n, 1);
  s.y = Mat(n, 1);
  for (Eigen::Index k = 0; k < n; ++k) {
    s.u(k, 0) = static_cast<double>(k);
    s.y(k, 0) = -static_cast<double>(k);
  }
  s.aux = Mat(n, 0);
  s.input_names = {"u"};
  s.output_names = {"y"};
  return s;
}

}  // namespace

TEST(Csv, RoundTripIsExact) {
  Table t;
  t.names = {"a", "b"};
  t.data = Mat(3, 2);
  t.data << 0.1, 1.0 / 3.0, -2.5e-17, 1e300, 7, M_PI;
  t.dt = 0.005;
  const fs::path p = temp_dir() / "rt.csv";
  write_csv(p, t);
  const Table r = read_csv(p);
  EXPECT_EQ(r.names, t.names);
  EXPECT_EQ(r.data, t.data);
  ASSERT_TRUE(r.dt.has_value());
  EXPECT_EQ(*r.dt, 0.005);
}

TEST(Csv, BadCellNamesLineAndColumn) {
  const fs::path p = temp_dir() / "bad.csv";
  std::ofstream(p) << "a,b\n1,2\n3,nan\n";
  try {
    read_csv(p);
    FAIL() << "expected ParseError";
  } catch (const ParseError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find(":3"), std::string::npos) << msg;
    EXPECT_NE(msg.find("'b'"), std::string::npos) << msg;
  }
  std::ofstream(p) << "a,b\n1\n";
  EXPECT_THROW(read_csv(p), ParseError);
  std::ofstream(p) << "a,b\n1,x\n";
  EXPECT_THROW(read_csv(p), ParseError);
}

TEST(Csv, QuadrotorLayoutLoadsThroughManifest) {
  const fs::path d = temp_dir();
  SynthSystem sys;
  sys.kind = SynthKind::kSimQuad;
  const TimeSeries q = synth_generate(sys, 60);
  save_csv(d / "quad.csv", q);
  Manifest m;
  m.dt = q.dt;
  m.inputs = quad_motor_columns();
  m.outputs = {"p", "q", "r", "vx", "vy", "vz"};
  m.auxiliary = {"phi", "theta", "psi", "x", "y", "z"};
  m.save(d / "quad.json");
  const TimeSeries r = load_csv(d / "quad.csv", Manifest::load(d / "quad.json"));
  EXPECT_EQ(r.u, q.u);
  EXPECT_EQ(r.y, q.y);
  EXPECT_EQ(r.aux, q.aux);
  EXPECT_EQ(r.dt, q.dt);
  Manifest missing = m;
  missing.outputs.push_back("nope");
  EXPECT_THROW(load_csv(d / "quad.csv", missing), ParseError);
}

TEST(Windowing, CountsAndContents) {
  const TimeSeries s = ramp(50);
  EXPECT_EQ(window(s, 6, 40, 50).size(), 1u);
  const TimeSeries t = ramp(6 + 1 + 40 + 4);
  const auto ws = window(t, 6, 40, 1);
  ASSERT_EQ(ws.size(), 5u);
  EXPECT_EQ(ws[2].source_start, 2);
  EXPECT_EQ(ws[2].init.u(0, 0), 2.0);
  EXPECT_EQ(ws[2].init.u.rows(), 7);
  EXPECT_EQ(ws[2].pred_u(0, 0), 9.0);
  EXPECT_EQ(ws[2].pred_y(39, 0), -48.0);
  EXPECT_THROW(window(ramp(40), 6, 40, 1), DimensionError);
}

TEST(Split, AllTrainKeepsEverything) {
  const auto ws = window(ramp(300), 4, 10, 3);
  const DatasetSplit s = split(ws, {1.0, 0.0, 0.0}, 1);
  EXPECT_EQ(s.train.size(), ws.size());
  EXPECT_TRUE(s.val.empty());
  EXPECT_EQ(s.discarded, 0u);
}

TEST(Split, DeterministicAndDisjointRows) {
  const auto ws = window(ramp(2000), 4, 10, 2);
  const DatasetSplit a = split(ws, {0.7, 0.15, 0.15}, 11), b = split(ws, {0.7, 0.15, 0.15}, 11);
  auto starts = [](const std::vector<SampleWindow>& v) {
    std::vector<Eigen::Index> out;
    for (const auto& w : v) out.push_back(w.source_start);
    return out;
  };
  EXPECT_EQ(starts(a.train), starts(b.train));
  EXPECT_EQ(starts(a.test), starts(b.test));
  EXPECT_FALSE(a.val.empty());
  EXPECT_FALSE(a.test.empty());
  EXPECT_EQ(a.train.size() + a.val.size() + a.test.size() + a.discarded, ws.size());
  std::vector<std::set<Eigen::Index>> rows(3);
  const std::vector<SampleWindow>* parts[3] = {&a.train, &a.val, &a.test};
  for (int p = 0; p < 3; ++p)
    for (const auto& w : *parts[p])
      for (Eigen::Index r = w.source_start; r < w.source_end(); ++r) rows[p].insert(r);
  for (int p = 0; p < 3; ++p)
    for (int q = p + 1; q < 3; ++q)
      for (Eigen::Index r : rows[p]) EXPECT_EQ(rows[q].count(r), 0u) << "row " << r;
  EXPECT_THROW(split(ws, {0.5, 0.6, 0.0}, 1), std::invalid_argument);
}

TEST(Synth, LinearZeroInputGivesZeroOutput) {
  SynthSystem sys;
  const TimeSeries s = synth_generate(sys, Mat::Zero(30, 1));
  EXPECT_EQ(s.y, Mat::Zero(30, 1));
}

TEST(Synth, LinearImpulseMatchesClosedForm) {
  const double r = 0.9, w = 0.4;
  SynthSystem sys;
  sys.a1 = 2 * r * std::cos(w);
  sys.a2 = -r * r;
  sys.b0 = 0.3;
  Mat u = Mat::Zero(60, 1);
  u(0, 0) = 1.0;
  const TimeSeries s = synth_generate(sys, u);
  for (int k = 0; k < 60; ++k) {
    const double h = sys.b0 * std::pow(r, k) * std::sin((k + 1) * w) / std::sin(w);
    EXPECT_NEAR(s.y(k, 0), h, 1e-10) << k;
  }
}

TEST(Synth, SameSeedSameSeries) {
  for (SynthKind k : {SynthKind::kLinear2ndOrder, SynthKind::kVanDerPol, SynthKind::kSimQuad}) {
    SynthSystem sys;
    sys.kind = k;
    sys.measurement_noise = 0.01;
    const TimeSeries a = synth_generate(sys, 200), b = synth_generate(sys, 200);
    EXPECT_EQ(a.u, b.u);
    EXPECT_EQ(a.y, b.y);
    sys.seed = 2;
    EXPECT_NE(a.y, synth_generate(sys, 200).y);
  }
}

TEST(Synth, SimQuadLayout) {
  SynthSystem sys;
  sys.kind = SynthKind::kSimQuad;
  const TimeSeries s = synth_generate(sys, 100);
  EXPECT_EQ(s.u.cols(), 4);
  EXPECT_EQ(s.y.cols(), 6);
  EXPECT_EQ(s.aux.cols(), 6);
  EXPECT_TRUE(s.y.allFinite());
  EXPECT_THROW(synth_generate(sys, Mat::Zero(10, 4)), std::invalid_argument);
}

TEST(Maxima, PerColumnAbsMax) {
  Mat m(3, 3);
  m << 1, -5, 0, -2, 3, 0, 0.5, 4, 0;
  Vec want(3);
  want << 2, 5, 0;
  EXPECT_EQ(compute_maxima(m), want);
  want(2) = 1;
  EXPECT_EQ(compute_maxima(m, true), want);
}

TEST(Normalizer, ApplyAndInvert) {
  const TimeSeries s = ramp(11);
  const Normalizer n = Normalizer::from_maxima(s);
  const TimeSeries z = n.apply(s);
  EXPECT_EQ(z.u.cwiseAbs().maxCoeff(), 1.0);
  EXPECT_LT((n.denormalize_y(z.y) - s.y).cwiseAbs().maxCoeff(), 1e-14);
}

TEST(Tasks, TeacherForcedVelocityAppendsRates) {
  SynthSystem sys;
  sys.kind = SynthKind::kSimQuad;
  const TimeSeries q = synth_generate(sys, 50);
  const TimeSeries v = task_series(q, Task::kVelocity);
  ASSERT_EQ(v.u.cols(), 7);
  EXPECT_EQ(v.u.rightCols(3), q.y.leftCols(3));
  EXPECT_EQ(v.y, q.y.rightCols(3));
  const TimeSeries b = task_series(q, Task::kBodyRate);
  EXPECT_EQ(b.y, q.y.leftCols(3));
  EXPECT_THROW(task_from_string("altitude"), ParseError);
}
