#pragma once

// The training loop. For every seed and iteration k = 1..K:
//   draw each group's minibatch, run every device's forward pass, gather
//   peer logits, build the codistillation objective with the scheduled
//   lr / wd / alpha / smoothing, backpropagate, average gradients across a
//   group's devices, record a MetricsRow for the pre-update state theta^k,
//   then take the SGD step and let the synchronizer publish checkpoints.
//
// Groups run sequentially in index order; results do not depend on wall
// clock or thread scheduling.

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <vector>

#include "codistillery/data.hpp"
#include "codistillery/losses.hpp"
#include "codistillery/model.hpp"
#include "codistillery/schedules.hpp"
#include "codistillery/sync.hpp"

namespace codistillery {

enum class OptimizerKind { sgd, sgd_momentum };

std::string_view to_string(OptimizerKind kind);
std::optional<OptimizerKind> parse_optimizer_kind(std::string_view name);

struct OptimizerConfig {
  OptimizerKind kind = OptimizerKind::sgd_momentum;
  double momentum = 0.9;
};

struct ExperimentConfig {
  SyncStrategy strategy;
  ScheduleSet schedules;
  /// Multiplies the base learning rate; epochs stay data passes, so a larger
  /// group batch already shortens the run in iterations.
  double batch_ratio = 1.0;
  /// One per group.
  std::vector<ModelSpec> models;
  MultiViewSpec data;
  std::size_t subsample = 1;
  /// Fixed iteration budget; when absent, epochs * subsample passes.
  std::optional<std::size_t> iterations;
  double epochs = 1.0;
  /// Divide the per-model iteration budget by n_groups.
  bool fixed_compute = false;
  OptimizerConfig optimizer;
  DistillKind distill = DistillKind::mse;
  std::vector<std::uint64_t> seeds{0, 1, 2};
  /// Every group starts from the parameters of group 0.
  bool identical_init = false;
  /// Added to the group index when deriving init and sampling seeds, so a
  /// one-group run can replay group g of a larger run.
  std::size_t group_index_offset = 0;
  /// Prediction exchange needs coordinated sampling; with independent
  /// sampling the first exchange raises CoordinatedSamplingError.
  SamplingMode sampling = SamplingMode::independent;
  /// Validation cadence in epochs; always evaluated at k = 1 and k = K.
  std::size_t eval_every = 1;
  std::optional<std::uint64_t> b_model;
  std::optional<std::uint64_t> b_predictions;
  /// Row block for batch reductions on single-device groups (see Tape).
  std::size_t reduction_block = 0;
  /// Starting parameters per group; replaces seeded initialization.
  std::optional<std::vector<Parameters>> initial_parameters;

  /// Throws ConfigError naming the first inconsistency.
  void validate() const;
};

struct MetricsRow {
  std::uint64_t seed = 0;
  std::size_t iteration = 0;
  std::size_t epoch = 0;
  std::size_t group = 0;
  double train_loss = 0.0;
  double supervised = 0.0;
  double distill = 0.0;
  double l2 = 0.0;
  double val_acc = 0.0;
  double dist_from_init = 0.0;
  double lr = 0.0;
  double wd = 0.0;
  double alpha = 0.0;
  double epsilon = 0.0;
  std::uint64_t bits_iter = 0;
  std::uint64_t bits_cum = 0;

  bool operator==(const MetricsRow&) const = default;
};

/// State exposed to an iteration observer, taken after peer gathering and
/// before the update.
struct IterationTrace {
  std::uint64_t seed = 0;
  std::size_t iteration = 0;
  std::span<const Parameters> params;          // theta^k per group
  std::span<const Minibatch> batches;          // per group
  std::span<const std::vector<Tensor>> peers;  // peer logits per group
  /// Checkpoint kind: snapshot label per peer (updates already applied).
  std::span<const std::vector<std::size_t>> sources;
};

using IterationObserver = std::function<void(const IterationTrace&)>;

struct ExperimentResult {
  std::vector<MetricsRow> rows;  // ordered by (seed, iteration, group)
  /// Final parameters, [seed index][group].
  std::vector<std::vector<Parameters>> final_params;
  std::size_t iterations = 0;
  std::size_t iterations_per_epoch = 0;
  std::vector<std::uint64_t> b_model;
  std::vector<std::uint64_t> b_predictions;
};

/// Derived per-group seeds.
std::uint64_t init_seed(std::uint64_t seed, std::size_t group);
std::uint64_t sampling_seed(std::uint64_t seed);
std::uint64_t subsample_seed(std::uint64_t data_seed);

/// K for a validated config.
std::size_t planned_iterations(const ExperimentConfig& cfg, std::size_t iterations_per_epoch);

ExperimentResult run_experiment(const ExperimentConfig& cfg, const IterationObserver& observer = {});

struct Stat {
  double mean = 0.0;
  double std_error = 0.0;
  std::size_t n = 0;
  /// Set when n == 1 and stderr is 0 by convention.
  bool single = false;
};

/// Sample stdev / sqrt(n); 0 for a single value.
Stat mean_stderr(std::span<const double> values);

struct FinalRow {
  std::uint64_t seed = 0;
  std::size_t group = 0;
  double train_loss = 0.0;
  double val_acc = 0.0;
  double dist_from_init = 0.0;
  std::uint64_t bits_total = 0;
};

struct GroupSummary {
  std::size_t group = 0;
  Stat train_loss, val_acc, dist_from_init, bits_total;
};

struct Summary {
  std::vector<FinalRow> finals;  // one per (seed, group), last iteration
  std::vector<GroupSummary> groups;
  /// Per seed the mean over groups, then aggregated over seeds.
  Stat train_loss, val_acc, dist_from_init;
};

/// Throws ContractError on an empty table.
Summary summarize(std::span<const MetricsRow> rows);

struct MultiviewConfig {
  /// Strategy kind (a codistillation kind), data, schedules, optimizer and
  /// models.front() as the unsplit architecture.
  ExperimentConfig base;
  std::vector<SplitArm> arms{SplitArm::frozen, SplitArm::pretrained_not_frozen, SplitArm::random_init};
  std::vector<std::size_t> n_list{1, 2, 4, 8};
  std::size_t pretrain_iterations = 2000;
  std::size_t iterations = 2000;

  void validate() const;
};

struct MultiviewCell {
  SplitArm arm = SplitArm::frozen;
  std::size_t n = 1;
  /// Final accuracy averaged over the n models, per seed.
  std::vector<double> per_seed;
  Stat acc;
};

struct MultiviewResult {
  std::vector<MultiviewCell> cells;  // arm-major, n in n_list order
  std::vector<double> pretrained_acc;  // per seed
};

MultiviewResult run_multiview_suite(const MultiviewConfig& cfg);

}  // namespace codistillery
