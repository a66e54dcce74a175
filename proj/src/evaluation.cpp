#include "msp/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <thread>

#include <json.hpp>

namespace msp {

double mean_abs_error(const Vec& e) {
  if (e.size() == 0) throw DimensionError("mean_abs_error: empty vector");
  return e.cwiseAbs().sum() / static_cast<double>(e.size());
}

double step_error_norm(const Vec& e) {
  if (e.size() != 3) throw DimensionError("step_error_norm expects 3 components, got " + std::to_string(e.size()));
  return (std::abs(e(0)) + std::abs(e(1)) + std::abs(e(2))) / 3.0;
}

double rmsse(const std::vector<Mat>& predicted, const std::vector<Mat>& target) {
  if (predicted.empty()) throw std::invalid_argument("rmsse: empty test set");
  if (predicted.size() != target.size()) throw DimensionError("rmsse: prediction/target count mismatch");
  const Eigen::Index T = predicted.front().rows();
  double sum = 0.0;
  for (std::size_t i = 0; i < predicted.size(); ++i) {
    if (predicted[i].rows() != T || target[i].rows() != T || predicted[i].cols() != target[i].cols()) {
      throw DimensionError("rmsse: window " + std::to_string(i) + " has mismatched shape");
    }
    sum += (target[i] - predicted[i]).squaredNorm();
  }
  return std::sqrt(sum / (static_cast<double>(T) * static_cast<double>(predicted.size())));
}

double quantile_sorted(const std::vector<double>& sorted, double p) {
  if (sorted.empty()) throw std::invalid_argument("quantile of empty data");
  const double pos = p * static_cast<double>(sorted.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const auto hi = std::min(lo + 1, sorted.size() - 1);
  const double frac = pos - static_cast<double>(lo);
  return sorted[lo] + frac * (sorted[hi] - sorted[lo]);
}

BoxStats box_stats(std::vector<double> v) {
  if (v.empty()) throw std::invalid_argument("box_stats of empty data");
  std::sort(v.begin(), v.end());
  BoxStats b;
  double sum = 0.0;
  for (double x : v) sum += x;
  b.mean = sum / static_cast<double>(v.size());
  b.q25 = quantile_sorted(v, 0.25);
  b.median = quantile_sorted(v, 0.5);
  b.q75 = quantile_sorted(v, 0.75);
  b.p99 = quantile_sorted(v, 0.99);
  const double iqr = b.q75 - b.q25;
  const double lo = b.q25 - 1.5 * iqr, hi = b.q75 + 1.5 * iqr;
  b.whisker_low = b.q25;
  b.whisker_high = b.q75;
  for (double x : v) {
    if (x < lo || x > hi) {
      ++b.outliers;
      continue;
    }
    b.whisker_low = std::min(b.whisker_low, x);
    b.whisker_high = std::max(b.whisker_high, x);
  }
  return b;
}

PredictionReport distributions(const std::vector<Mat>& predicted, const std::vector<Mat>& target,
                               std::vector<int> channels, double unit_scale) {
  if (predicted.empty()) throw std::invalid_argument("distributions: empty test set");
  if (predicted.size() != target.size()) throw DimensionError("distributions: prediction/target count mismatch");
  const Eigen::Index T = predicted.front().rows();
  const Eigen::Index n = predicted.front().cols();
  if (channels.empty())
    for (int c = 0; c < n; ++c) channels.push_back(c);
  for (int c : channels)
    if (c < 0 || c >= n) throw DimensionError("distributions: channel " + std::to_string(c) + " out of range");

  PredictionReport r;
  r.horizon = static_cast<int>(T);
  r.windows = predicted.size();
  r.channels = channels;
  std::vector<Mat> sel_pred, sel_tgt;
  std::vector<double> abs_all;
  std::vector<std::vector<double>> per_step(static_cast<std::size_t>(T));
  for (std::size_t i = 0; i < predicted.size(); ++i) {
    if (predicted[i].rows() != T || target[i].rows() != T || predicted[i].cols() != n || target[i].cols() != n) {
      throw DimensionError("distributions: window " + std::to_string(i) + " has mismatched shape");
    }
    Mat p(T, static_cast<Eigen::Index>(channels.size())), t(T, static_cast<Eigen::Index>(channels.size()));
    for (std::size_t j = 0; j < channels.size(); ++j) {
      p.col(static_cast<Eigen::Index>(j)) = predicted[i].col(channels[j]) * unit_scale;
      t.col(static_cast<Eigen::Index>(j)) = target[i].col(channels[j]) * unit_scale;
    }
    const Mat e = t - p;
    for (Eigen::Index k = 0; k < T; ++k) {
      const Vec ek = e.row(k).transpose();
      per_step[static_cast<std::size_t>(k)].push_back(ek.size() == 3 ? step_error_norm(ek) : mean_abs_error(ek));
      for (Eigen::Index j = 0; j < ek.size(); ++j) abs_all.push_back(std::abs(ek(j)));
    }
    sel_pred.push_back(std::move(p));
    sel_tgt.push_back(std::move(t));
  }
  for (auto& s : per_step) r.steps.push_back(box_stats(std::move(s)));
  r.rmsse = rmsse(sel_pred, sel_tgt);
  std::sort(abs_all.begin(), abs_all.end());
  r.abs_error_p99 = quantile_sorted(abs_all, 0.99);
  return r;
}

Predictions predict_all(const Trainable& model, const ParamVector& theta, const std::vector<SampleWindow>& windows,
                        const Normalizer& normalizer, int workers) {
  Predictions out;
  out.predicted.resize(windows.size());
  out.target.resize(windows.size());
  auto run = [&](std::size_t i) {
    out.predicted[i] = normalizer.denormalize_y(model.predict(theta, windows[i]));
    out.target[i] = normalizer.denormalize_y(model.target(windows[i]));
  };
  const std::size_t w = std::min<std::size_t>(static_cast<std::size_t>(std::max(1, workers)), windows.size());
  if (w <= 1) {
    for (std::size_t i = 0; i < windows.size(); ++i) run(i);
    return out;
  }
  std::vector<std::exception_ptr> errors(w);
  {
    std::vector<std::jthread> pool;
    for (std::size_t t = 0; t < w; ++t) {
      pool.emplace_back([&, t] {
        try {
          for (std::size_t i = t; i < windows.size(); i += w) run(i);
        } catch (...) {
          errors[t] = std::current_exception();
        }
      });
    }
  }
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
  return out;
}

SampleWindow substitute_body_rates(const SampleWindow& w, const Mat& body_rates) {
  if (body_rates.rows() != w.pred_u.rows() || body_rates.cols() > w.pred_u.cols()) {
    throw DimensionError("substitute_body_rates: body rates " + shape_string(body_rates) +
                         " do not fit velocity inputs " + shape_string(w.pred_u));
  }
  SampleWindow out = w;
  out.pred_u.rightCols(body_rates.cols()) = body_rates;
  return out;
}

Mat cascade_predict(const Trainable& bodyrate_model, const ParamVector& bodyrate_theta, const Trainable& velocity_model,
                    const ParamVector& velocity_theta, const SampleWindow& vw) {
  const Eigen::Index nb = bodyrate_model.output_dim();
  const Eigen::Index motors = vw.pred_u.cols() - nb;
  if (motors < 1) {
    throw DimensionError("cascade: velocity inputs (" + std::to_string(vw.pred_u.cols()) +
                         ") cannot hold the body-rate model's " + std::to_string(nb) + " outputs");
  }
  SampleWindow bw;
  bw.init.u = vw.init.u.leftCols(motors);
  bw.init.y = vw.init.u.rightCols(nb);
  bw.pred_u = vw.pred_u.leftCols(motors);
  bw.pred_y = vw.pred_u.rightCols(nb);
  bw.init_aux = vw.init_aux;
  bw.pred_aux = vw.pred_aux;
  bw.source_start = vw.source_start;
  bw.source_id = vw.source_id;
  const Mat rates = bodyrate_model.predict(bodyrate_theta, bw);
  return velocity_model.predict(velocity_theta, substitute_body_rates(vw, rates));
}

Comparison compare(const PredictionReport& a, const PredictionReport& b) {
  if (a.horizon != b.horizon || a.steps.size() != b.steps.size()) {
    throw DimensionError("compare: horizons differ (" + std::to_string(a.horizon) + " vs " +
                         std::to_string(b.horizon) + ")");
  }
  Comparison c;
  for (std::size_t k = 0; k < a.steps.size(); ++k) {
    const double d = a.steps[k].mean - b.steps[k].mean;
    c.delta.push_back(d);
    c.winner.push_back(d < 0.0 ? 'A' : (d > 0.0 ? 'B' : '='));
  }
  c.rmsse_ratio = b.rmsse > 0.0 ? a.rmsse / b.rmsse : (a.rmsse > 0.0 ? INFINITY : 1.0);
  return c;
}

namespace {

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::ofstream open_out(const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write '" + path.string() + "'");
  return out;
}

}  // namespace

void write_report_csv(const std::filesystem::path& path, const PredictionReport& r) {
  auto out = open_out(path);
  out << "step,mean,q25,median,q75,whisker_low,whisker_high,outliers,p99\n";
  for (std::size_t k = 0; k < r.steps.size(); ++k) {
    const auto& s = r.steps[k];
    out << k + 1 << "," << fmt(s.mean) << "," << fmt(s.q25) << "," << fmt(s.median) << "," << fmt(s.q75) << ","
        << fmt(s.whisker_low) << "," << fmt(s.whisker_high) << "," << s.outliers << "," << fmt(s.p99) << "\n";
  }
}

void write_report_summary(const std::filesystem::path& path, const PredictionReport& r) {
  nlohmann::ordered_json j;
  j["model"] = r.model_id;
  j["dataset"] = r.dataset_id;
  j["tau"] = r.tau;
  j["horizon"] = r.horizon;
  j["windows"] = r.windows;
  j["channels"] = r.channels;
  j["unit"] = r.unit;
  j["rmsse"] = r.rmsse;
  j["abs_error_p99"] = r.abs_error_p99;
  j["step1_mean"] = r.steps.empty() ? 0.0 : r.steps.front().mean;
  j["final_step_mean"] = r.steps.empty() ? 0.0 : r.steps.back().mean;
  auto out = open_out(path);
  out << j.dump(2) << "\n";
}

void write_comparison_csv(const std::filesystem::path& path, const Comparison& c) {
  auto out = open_out(path);
  out << "step,delta,winner\n";
  for (std::size_t k = 0; k < c.delta.size(); ++k) out << k + 1 << "," << fmt(c.delta[k]) << "," << c.winner[k] << "\n";
  out << "# rmsse_ratio=" << fmt(c.rmsse_ratio) << "\n";
}

}  // namespace msp
