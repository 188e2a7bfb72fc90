#pragma once

// Synchronization schemes and their communication accounting.
//
//   all_reduce             one group, gradients averaged across its devices
//                          every iteration; C_AR = 2 * b_model bits/device.
//   codistill_predictions  groups exchange logits on a shared minibatch on
//                          exchange iterations and drop the distillation term
//                          otherwise; (n-1) * b_pred * B / T bits on average.
//   codistill_checkpoints  groups exchange parameter snapshots on exchange
//                          iterations and distill every iteration against
//                          stale local copies; (n-1) * b_model / T on average.
//
// Iterations are 1-based and iteration k exchanges when k % T == 0. Only
// traffic between groups is charged unless count_intra_group is set.

#include <cstddef>
#include <cstdint>
#include <deque>
#include <functional>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include "codistillery/autodiff.hpp"
#include "codistillery/data.hpp"
#include "codistillery/model.hpp"

namespace codistillery {

enum class SyncKind { all_reduce, codistill_predictions, codistill_checkpoints };

std::string_view to_string(SyncKind kind);
std::optional<SyncKind> parse_sync_kind(std::string_view name);

struct SyncStrategy {
  SyncKind kind = SyncKind::codistill_predictions;
  std::size_t n_groups = 2;
  std::size_t devices_per_group = 1;
  std::size_t per_device_batch = 32;
  std::size_t exchange_period = 1;
  std::size_t checkpoint_delay = 0;
  bool count_intra_group = false;

  std::size_t group_batch() const noexcept { return devices_per_group * per_device_batch; }
  bool exchanges_at(std::size_t k) const noexcept { return k % exchange_period == 0; }
  void validate() const;
};

/// Non-negative rational with a positive denominator, kept in lowest terms.
struct Rational {
  std::uint64_t num = 0;
  std::uint64_t den = 1;

  static Rational make(std::uint64_t num, std::uint64_t den);
  double value() const noexcept { return static_cast<double>(num) / static_cast<double>(den); }
  bool operator==(const Rational&) const = default;
};

Rational operator/(Rational a, Rational b);

/// C_AR = 2 * b_model.
std::uint64_t allreduce_bits(std::uint64_t b_model);
/// (n - 1) * b_model / T, per device per iteration on average.
Rational checkpoint_bits(std::uint64_t n, std::uint64_t period, std::uint64_t b_model);
/// (n - 1) * b_predictions * batch / T, per device per iteration on average.
Rational prediction_bits(std::uint64_t n, std::uint64_t period, std::uint64_t b_predictions,
                         std::uint64_t batch);

/// Exact elementwise mean, summed over devices left to right from +0 and then
/// divided by the device count. Throws ContractError on key or shape mismatch.
GradientMap all_reduce_grads(std::span<const GradientMap> grads);

/// Per-group bit counters.
class CommLedger {
 public:
  explicit CommLedger(std::size_t n_groups);

  void begin_iteration();
  void charge(std::size_t group, std::uint64_t bits);

  std::uint64_t bits_this_iteration(std::size_t group) const { return iteration_.at(group); }
  std::uint64_t cumulative(std::size_t group) const { return cumulative_.at(group); }
  std::size_t n_groups() const noexcept { return cumulative_.size(); }

 private:
  std::vector<std::uint64_t> iteration_;
  std::vector<std::uint64_t> cumulative_;
};

/// Parameter snapshots of every group as seen by its peers. A snapshot
/// published at the end of iteration k is labelled k and becomes visible to
/// queries at iterations > k + delay. Snapshots travel through serialize() /
/// deserialize().
class StaleCheckpointStore {
 public:
  StaleCheckpointStore(std::span<const Parameters> initial, std::size_t delay);

  void publish(std::size_t group, const Parameters& params, std::size_t iteration);
  /// Latest snapshot of `group` visible at iteration k.
  const Parameters& copy(std::size_t group, std::size_t k);
  /// Label of the snapshot copy(group, k) returns.
  std::size_t source_iteration(std::size_t group, std::size_t k);

 private:
  struct Snapshot {
    std::size_t iteration;
    Parameters params;
  };
  void settle(std::size_t group, std::size_t k);

  std::vector<std::deque<Snapshot>> snapshots_;
  std::size_t delay_;
};

/// One group's state at the moment peers are gathered.
struct GroupView {
  const ModelSpec* spec = nullptr;
  const Parameters* params = nullptr;
  const Minibatch* batch = nullptr;
  const Tensor* logits = nullptr;  // this group's logits on its batch
};

/// Drives one strategy: gathers peer logits, publishes checkpoints and keeps
/// the ledger. b_model / b_predictions are per group (heterogeneous groups
/// may differ); a group is charged the bits it receives.
class Synchronizer {
 public:
  Synchronizer(SyncStrategy strategy, std::vector<std::uint64_t> b_model, std::vector<std::uint64_t> b_predictions,
               std::span<const Parameters> initial);

  /// Peer logits for every group at iteration k; empty lists on
  /// non-exchange prediction iterations and for all_reduce. Charges
  /// prediction and all_reduce traffic. `sources`, when given, receives for
  /// each group the snapshot label used for every peer (checkpoint kind).
  std::vector<std::vector<Tensor>> gather_peer_logits(std::size_t k, std::span<const GroupView> groups,
                                                      std::vector<std::vector<std::size_t>>* sources = nullptr);

  /// Call after the parameter update of iteration k; publishes checkpoints
  /// and charges their traffic on exchange iterations.
  void end_iteration(std::size_t k, std::span<const Parameters> params);

  CommLedger& ledger() noexcept { return ledger_; }
  const CommLedger& ledger() const noexcept { return ledger_; }
  const SyncStrategy& strategy() const noexcept { return strategy_; }

 private:
  SyncStrategy strategy_;
  std::vector<std::uint64_t> b_model_;
  std::vector<std::uint64_t> b_predictions_;
  CommLedger ledger_;
  std::optional<StaleCheckpointStore> store_;
};

}  // namespace codistillery
