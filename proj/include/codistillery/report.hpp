#pragma once

// Text renderings of results: metrics CSV, summary JSON, the multi-view
// table and the analytic communication-cost report.

#include <cstdint>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "codistillery/harness.hpp"
#include "codistillery/sync.hpp"

namespace codistillery {

inline constexpr const char* kMetricsHeader =
    "seed,iteration,epoch,group,train_loss,supervised,distill,l2,val_acc,dist_from_init,lr,wd,alpha,epsilon,"
    "bits_iter,bits_cum";

/// 17 significant digits; parses back to the identical double.
std::string format_real(double v);

/// Exact decimal expansion when the denominator has no prime factors other
/// than 2 and 5, otherwise "num/den".
std::string exact_decimal(Rational r);

void write_metrics_csv(std::ostream& out, std::span<const MetricsRow> rows);
std::string summary_json(const ExperimentConfig& cfg, const ExperimentResult& result, const Summary& summary);

inline constexpr const char* kMultiviewHeader = "arm,n,mean_acc,stderr,seeds";
void write_multiview_csv(std::ostream& out, const MultiviewResult& result);

struct CommcostInputs {
  std::uint64_t n = 2;
  std::uint64_t period = 1;
  std::uint64_t b_model = 800000000;
  std::uint64_t b_predictions = 32000;
  std::uint64_t batch = 256;
};

struct CommcostLine {
  SyncKind kind;
  std::uint64_t period;
  Rational bits;
};

struct CommcostReport {
  CommcostInputs inputs;
  std::vector<CommcostLine> point;  // all_reduce, checkpoints, predictions
  /// all_reduce bits over prediction bits at the given point.
  Rational ratio_predictions;
  Rational ratio_checkpoints;
  std::vector<CommcostLine> prediction_sweep;  // T in {1, 5, 10, 100}
  std::vector<CommcostLine> checkpoint_sweep;  // T in {625, 1250, 2500, 5000}
};

/// Requires n >= 2 and T, b_model, b_predictions, batch >= 1.
CommcostReport commcost(const CommcostInputs& in);
std::string commcost_table(const CommcostReport& r);
std::string commcost_json(const CommcostReport& r);

}  // namespace codistillery
