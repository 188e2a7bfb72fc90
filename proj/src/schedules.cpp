#include "codistillery/schedules.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "codistillery/errors.hpp"

namespace codistillery {

void ScheduleSet::validate() const {
  if (!(lr.base > 0.0)) throw ConfigError("must be > 0", "schedules.lr.base");
  if (!(lr.factor > 0.0 && lr.factor <= 1.0)) throw ConfigError("must lie in (0, 1]", "schedules.lr.factor");
  if (!(lr.total_epochs > 0.0)) throw ConfigError("must be > 0", "schedules.lr.total_epochs");
  if (!(lr.warmup_epochs >= 0.0) || lr.warmup_epochs > lr.total_epochs) {
    throw ConfigError("must lie in [0, total_epochs]", "schedules.lr.warmup_epochs");
  }
  for (std::size_t i = 0; i < lr.milestones.size(); ++i) {
    if (lr.milestones[i] < 0.0 || lr.milestones[i] >= lr.total_epochs ||
        (i > 0 && lr.milestones[i] <= lr.milestones[i - 1])) {
      throw ConfigError("milestones must be strictly increasing and below total_epochs",
                        "schedules.lr.milestones");
    }
  }
  if (wd.values.empty()) throw ConfigError("needs at least one value", "schedules.wd.values");
  for (double v : wd.values) {
    if (!(v >= 0.0)) throw ConfigError("weight decay must be >= 0", "schedules.wd.values");
  }
  if (!(alpha.base >= 0.0)) throw ConfigError("must be >= 0", "schedules.alpha.base");
  if (!(alpha.gamma >= 1.0)) throw ConfigError("must be >= 1", "schedules.alpha.gamma");
  if (!(smoothing.base >= 0.0 && smoothing.base < 1.0)) {
    throw ConfigError("must lie in [0, 1)", "schedules.smoothing.base");
  }
}

std::optional<LrKind> parse_lr_kind(std::string_view name) {
  if (name == "step") return LrKind::step;
  if (name == "cosine") return LrKind::cosine;
  return std::nullopt;
}

std::optional<AlphaKind> parse_alpha_kind(std::string_view name) {
  if (name == "constant") return AlphaKind::constant;
  if (name == "geometric") return AlphaKind::geometric;
  return std::nullopt;
}

std::string_view to_string(LrKind kind) { return kind == LrKind::step ? "step" : "cosine"; }
std::string_view to_string(AlphaKind kind) { return kind == AlphaKind::constant ? "constant" : "geometric"; }

std::size_t epoch_of(std::size_t k, std::size_t iterations_per_epoch) {
  if (iterations_per_epoch == 0) throw ContractError("iterations_per_epoch must be positive");
  return k == 0 ? 0 : (k - 1) / iterations_per_epoch;
}

std::size_t milestones_passed(const ScheduleSet& s, std::size_t k, std::size_t iterations_per_epoch) {
  if (iterations_per_epoch == 0) throw ContractError("iterations_per_epoch must be positive");
  // Epoch position at the start of iteration k; equals epoch_of(k) for
  // integral milestones and stays exact for rescaled fractional ones.
  const double e = k == 0 ? 0.0 : static_cast<double>(k - 1) / static_cast<double>(iterations_per_epoch);
  std::size_t passed = 0;
  for (double m : s.lr.milestones) {
    if (e >= m) ++passed;
  }
  return passed;
}

double lr_at(const ScheduleSet& s, std::size_t k, std::size_t iterations_per_epoch) {
  const auto ipe = static_cast<double>(iterations_per_epoch);
  const double position = static_cast<double>(k) / ipe;
  const double warmup = s.lr.warmup_epochs;
  if (warmup > 0.0 && position <= warmup) return s.lr.base * (position / warmup);

  if (s.lr.kind == LrKind::step) {
    return s.lr.base * std::pow(s.lr.factor, static_cast<double>(milestones_passed(s, k, iterations_per_epoch)));
  }
  const double start = warmup * ipe;
  const double span = std::floor(s.lr.total_epochs * ipe) - start;
  double progress = span > 0.0 ? (static_cast<double>(k) - start) / span : 1.0;
  progress = std::clamp(progress, 0.0, 1.0);
  return s.lr.base * 0.5 * (1.0 + std::cos(std::numbers::pi * progress));
}

double wd_at(const ScheduleSet& s, std::size_t k, std::size_t iterations_per_epoch) {
  const std::size_t segment = milestones_passed(s, k, iterations_per_epoch);
  return s.wd.values[std::min(segment, s.wd.values.size() - 1)];
}

double alpha_at(const ScheduleSet& s, std::size_t epoch) {
  if (s.alpha.kind == AlphaKind::constant) return s.alpha.base;
  return s.alpha.base * std::pow(s.alpha.gamma, static_cast<double>(epoch));
}

double smoothing_at(const ScheduleSet& s, std::size_t k, std::size_t iterations_per_epoch) {
  if (s.smoothing.zero_after_milestone &&
      milestones_passed(s, k, iterations_per_epoch) >= *s.smoothing.zero_after_milestone) {
    return 0.0;
  }
  return s.smoothing.base;
}

ScheduleSet scale_for_batch(const ScheduleSet& s, double ratio) {
  if (!(ratio > 0.0)) throw ContractError("batch ratio must be positive");
  ScheduleSet out = s;
  out.lr.base = s.lr.base * ratio;
  out.lr.total_epochs = s.lr.total_epochs / ratio;
  out.lr.warmup_epochs = s.lr.warmup_epochs / ratio;
  for (double& m : out.lr.milestones) m = m / ratio;
  return out;
}

std::size_t total_iterations(const ScheduleSet& s, std::size_t iterations_per_epoch) {
  return static_cast<std::size_t>(std::floor(s.lr.total_epochs * static_cast<double>(iterations_per_epoch)));
}

}  // namespace codistillery
