#pragma once

// Time-varying hyperparameters, all epoch-denominated and evaluated per
// iteration. Iterations are 1-based: iteration k belongs to epoch
// floor((k - 1) / iterations_per_epoch) and finishes at epoch position
// k / iterations_per_epoch.

#include <cstddef>
#include <optional>
#include <string_view>
#include <vector>

namespace codistillery {

enum class LrKind { step, cosine };
enum class AlphaKind { constant, geometric };

struct LrSchedule {
  LrKind kind = LrKind::step;
  double base = 0.1;
  std::vector<double> milestones;  // epochs, strictly increasing
  double factor = 0.1;
  double warmup_epochs = 0.0;
  double total_epochs = 1.0;
};

struct WeightDecaySchedule {
  /// Value per milestone segment; the last value repeats past the end.
  std::vector<double> values{5e-4, 1e-5, 0.0, 0.0};
};

struct AlphaSchedule {
  AlphaKind kind = AlphaKind::constant;
  double base = 1.0;
  double gamma = 1.1;
};

struct SmoothingSchedule {
  double base = 0.0;
  /// Smoothing drops to 0 once this many milestones have passed.
  std::optional<std::size_t> zero_after_milestone;
};

struct ScheduleSet {
  LrSchedule lr;
  WeightDecaySchedule wd;
  AlphaSchedule alpha;
  SmoothingSchedule smoothing;

  /// Throws ConfigError naming the offending field.
  void validate() const;
};

std::optional<LrKind> parse_lr_kind(std::string_view name);
std::optional<AlphaKind> parse_alpha_kind(std::string_view name);
std::string_view to_string(LrKind kind);
std::string_view to_string(AlphaKind kind);

/// Zero-based epoch of 1-based iteration k.
std::size_t epoch_of(std::size_t k, std::size_t iterations_per_epoch);

/// Number of milestones m with (k - 1) / iterations_per_epoch >= m.
std::size_t milestones_passed(const ScheduleSet& s, std::size_t k, std::size_t iterations_per_epoch);

double lr_at(const ScheduleSet& s, std::size_t k, std::size_t iterations_per_epoch);
double wd_at(const ScheduleSet& s, std::size_t k, std::size_t iterations_per_epoch);
double alpha_at(const ScheduleSet& s, std::size_t epoch);
double smoothing_at(const ScheduleSet& s, std::size_t k, std::size_t iterations_per_epoch);

/// Linear scaling rule for a batch `ratio` times larger: base lr times ratio,
/// every epoch-denominated quantity divided by ratio. Epochs here are counted
/// at the reference (unscaled) batch size.
ScheduleSet scale_for_batch(const ScheduleSet& s, double ratio);

/// floor(total_epochs * iterations_per_epoch).
std::size_t total_iterations(const ScheduleSet& s, std::size_t iterations_per_epoch);

}  // namespace codistillery
