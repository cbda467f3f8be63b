#pragma once

#include <Eigen/Dense>
#include <string>
#include <vector>

namespace ecgi {

// Per-electrode Pearson correlations along time. Electrodes whose true
// series has (numerically) zero variance carry no information and are
// excluded from the mean; a prediction with zero variance against a varying
// truth is scored 0 and counted separately.
struct CcResult {
  std::vector<double> per_electrode;  // NaN where excluded
  double mean = 0.0;
  int n_valid = 0;
  int excluded_truth = 0;    // degenerate truth rows, excluded
  int degenerate_pred = 0;   // degenerate prediction rows, scored 0
};

CcResult temporal_cc(const Eigen::MatrixXd& pred, const Eigen::MatrixXd& truth);

// Means over all entries, in the units of the arguments.
std::pair<double, double> mse_mae(const Eigen::MatrixXd& pred, const Eigen::MatrixXd& truth);

struct BeatMetrics {
  int beat_index = 0;
  int heart_id = 0;
  double cc = 0.0;  // NaN when every electrode of the beat was excluded
  double mse = 0.0;
  double mae = 0.0;
};

struct MetricsReport {
  std::string method;
  double temporal_cc = 0.0;  // pooled mean over (electrode, beat) pairs
  bool cc_defined = true;
  double mse = 0.0;
  double mae = 0.0;
  long param_count = 0;
  int n_beats = 0;
  long n_cc_pairs = 0;
  int cc_excluded_truth = 0;
  int cc_degenerate_pred = 0;
  int epochs_trained = 0;
  int k_samples = 0;
  std::uint64_t seed = 0;
  std::string split_checksum;
  std::string config_fingerprint;
  double wall_clock_s = 0.0;  // informational; not part of CSV reports
  std::vector<BeatMetrics> per_beat;
};

// Accumulates pooled metrics over beats in index order.
class MetricsAccumulator {
 public:
  void add(int beat_index, int heart_id, const Eigen::MatrixXd& pred, const Eigen::MatrixXd& truth);
  void fill(MetricsReport& report) const;

 private:
  std::vector<BeatMetrics> beats_;
  double cc_sum_ = 0.0;
  long cc_count_ = 0;
  int excluded_truth_ = 0;
  int degenerate_pred_ = 0;
  double sq_sum_ = 0.0, abs_sum_ = 0.0;
  long entries_ = 0;
};

// Deterministic CSV surface: a fixed header plus one row per report.
// Wall-clock time is deliberately not a column.
std::string report_csv_header();
std::string report_csv_row(const MetricsReport& r);
std::string per_beat_csv(const MetricsReport& r);

// %.17g formatting so values round-trip exactly and runs diff cleanly.
std::string format_double(double v);

}  // namespace ecgi
