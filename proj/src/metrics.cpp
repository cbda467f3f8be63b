#include "ecgi/metrics.hpp"

#include <cmath>
#include <cstdio>
#include <limits>
#include <sstream>

#include "ecgi/errors.hpp"

namespace ecgi {

namespace {

constexpr double kNan = std::numeric_limits<double>::quiet_NaN();

// Variance threshold relative to the series scale; exact-constant rows hit
// zero, rows that are constant up to rounding hit ~1e-32.
bool degenerate(double sd, double mean_abs) { return sd <= 1e-12 * (1.0 + mean_abs); }

}  // namespace

CcResult temporal_cc(const Eigen::MatrixXd& pred, const Eigen::MatrixXd& truth) {
  if (pred.rows() != truth.rows() || pred.cols() != truth.cols()) {
    throw DimensionError("temporal_cc: shape mismatch [" + std::to_string(pred.rows()) + "x" +
                         std::to_string(pred.cols()) + "] vs [" + std::to_string(truth.rows()) +
                         "x" + std::to_string(truth.cols()) + "]");
  }
  if (truth.cols() < 2) throw ContractError("temporal_cc: need at least 2 time samples");

  CcResult r;
  const int n = static_cast<int>(truth.rows());
  const int t_len = static_cast<int>(truth.cols());
  r.per_electrode.assign(static_cast<size_t>(n), kNan);
  for (int i = 0; i < n; ++i) {
    Eigen::ArrayXd p = pred.row(i).array();
    Eigen::ArrayXd x = truth.row(i).array();
    double pm = p.mean(), xm = x.mean();
    double psd = std::sqrt((p - pm).square().sum() / t_len);
    double xsd = std::sqrt((x - xm).square().sum() / t_len);
    if (degenerate(xsd, std::abs(xm))) {
      ++r.excluded_truth;
      continue;
    }
    double cc;
    if (degenerate(psd, std::abs(pm))) {
      ++r.degenerate_pred;
      cc = 0.0;
    } else {
      cc = ((p - pm) * (x - xm)).sum() / (t_len * psd * xsd);
      cc = std::clamp(cc, -1.0, 1.0);
    }
    r.per_electrode[static_cast<size_t>(i)] = cc;
    r.mean += cc;
    ++r.n_valid;
  }
  if (r.n_valid == 0) {
    throw UndefinedMetricError("temporal_cc: every electrode has degenerate truth");
  }
  r.mean /= r.n_valid;
  return r;
}

std::pair<double, double> mse_mae(const Eigen::MatrixXd& pred, const Eigen::MatrixXd& truth) {
  if (pred.rows() != truth.rows() || pred.cols() != truth.cols()) {
    throw DimensionError("mse_mae: shape mismatch [" + std::to_string(pred.rows()) + "x" +
                         std::to_string(pred.cols()) + "] vs [" + std::to_string(truth.rows()) +
                         "x" + std::to_string(truth.cols()) + "]");
  }
  Eigen::ArrayXXd d = (pred - truth).array();
  return {d.square().mean(), d.abs().mean()};
}

void MetricsAccumulator::add(int beat_index, int heart_id, const Eigen::MatrixXd& pred,
                             const Eigen::MatrixXd& truth) {
  BeatMetrics bm;
  bm.beat_index = beat_index;
  bm.heart_id = heart_id;
  try {
    CcResult cc = temporal_cc(pred, truth);
    bm.cc = cc.mean;
    cc_sum_ += cc.mean * cc.n_valid;
    cc_count_ += cc.n_valid;
    excluded_truth_ += cc.excluded_truth;
    degenerate_pred_ += cc.degenerate_pred;
  } catch (const UndefinedMetricError&) {
    bm.cc = kNan;
    excluded_truth_ += static_cast<int>(truth.rows());
  }
  auto [mse, mae] = mse_mae(pred, truth);
  bm.mse = mse;
  bm.mae = mae;
  sq_sum_ += mse * static_cast<double>(truth.size());
  abs_sum_ += mae * static_cast<double>(truth.size());
  entries_ += truth.size();
  beats_.push_back(bm);
}

void MetricsAccumulator::fill(MetricsReport& report) const {
  report.n_beats = static_cast<int>(beats_.size());
  report.per_beat = beats_;
  report.n_cc_pairs = cc_count_;
  report.cc_excluded_truth = excluded_truth_;
  report.cc_degenerate_pred = degenerate_pred_;
  if (cc_count_ > 0) {
    report.temporal_cc = cc_sum_ / static_cast<double>(cc_count_);
    report.cc_defined = true;
  } else {
    report.temporal_cc = kNan;
    report.cc_defined = false;
  }
  report.mse = entries_ > 0 ? sq_sum_ / static_cast<double>(entries_) : 0.0;
  report.mae = entries_ > 0 ? abs_sum_ / static_cast<double>(entries_) : 0.0;
}

std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

std::string report_csv_header() {
  return "method,temporal_cc,mse,mae,param_count,n_beats,n_cc_pairs,cc_excluded_truth,"
         "cc_degenerate_pred,epochs,k_samples,seed,split_checksum,config_fingerprint";
}

std::string report_csv_row(const MetricsReport& r) {
  std::ostringstream os;
  os << r.method << ',' << format_double(r.temporal_cc) << ',' << format_double(r.mse) << ','
     << format_double(r.mae) << ',' << r.param_count << ',' << r.n_beats << ',' << r.n_cc_pairs
     << ',' << r.cc_excluded_truth << ',' << r.cc_degenerate_pred << ',' << r.epochs_trained << ','
     << r.k_samples << ',' << r.seed << ',' << r.split_checksum << ',' << r.config_fingerprint;
  return os.str();
}

std::string per_beat_csv(const MetricsReport& r) {
  std::ostringstream os;
  os << "beat_index,heart_id,cc,mse,mae\n";
  for (const BeatMetrics& b : r.per_beat) {
    os << b.beat_index << ',' << b.heart_id << ',' << format_double(b.cc) << ','
       << format_double(b.mse) << ',' << format_double(b.mae) << '\n';
  }
  return os.str();
}

}  // namespace ecgi
