#include "codistillery/sync.hpp"

#include <algorithm>
#include <numeric>
#include <string>

#include "codistillery/errors.hpp"

namespace codistillery {

std::string_view to_string(SyncKind kind) {
  switch (kind) {
    case SyncKind::all_reduce:
      return "all_reduce";
    case SyncKind::codistill_predictions:
      return "codistill_predictions";
    case SyncKind::codistill_checkpoints:
      return "codistill_checkpoints";
  }
  return "?";
}

std::optional<SyncKind> parse_sync_kind(std::string_view name) {
  if (name == "all_reduce") return SyncKind::all_reduce;
  if (name == "codistill_predictions") return SyncKind::codistill_predictions;
  if (name == "codistill_checkpoints") return SyncKind::codistill_checkpoints;
  return std::nullopt;
}

void SyncStrategy::validate() const {
  if (n_groups == 0) throw ConfigError("must be >= 1", "strategy.n_groups");
  if (kind == SyncKind::all_reduce && n_groups != 1) {
    throw ConfigError("all_reduce runs exactly one group", "strategy.n_groups");
  }
  if (kind != SyncKind::all_reduce && n_groups < 2) {
    throw ConfigError("codistillation needs at least two groups", "strategy.n_groups");
  }
  if (devices_per_group == 0) throw ConfigError("must be >= 1", "strategy.devices_per_group");
  if (per_device_batch == 0) throw ConfigError("must be >= 1", "strategy.per_device_batch");
  if (exchange_period == 0) throw ConfigError("must be >= 1", "strategy.exchange_period");
}

Rational Rational::make(std::uint64_t num, std::uint64_t den) {
  if (den == 0) throw ContractError("rational with zero denominator");
  const std::uint64_t g = std::gcd(num, den);
  return g == 0 ? Rational{0, 1} : Rational{num / g, den / g};
}

Rational operator/(Rational a, Rational b) {
  if (b.num == 0) throw ContractError("division by zero rational");
  const std::uint64_t g1 = std::gcd(a.num, b.num);
  const std::uint64_t g2 = std::gcd(b.den, a.den);
  return Rational::make((a.num / std::max<std::uint64_t>(g1, 1)) * (b.den / std::max<std::uint64_t>(g2, 1)),
                        (a.den / std::max<std::uint64_t>(g2, 1)) * (b.num / std::max<std::uint64_t>(g1, 1)));
}

std::uint64_t allreduce_bits(std::uint64_t b_model) { return 2 * b_model; }

Rational checkpoint_bits(std::uint64_t n, std::uint64_t period, std::uint64_t b_model) {
  if (n < 2 || period < 1) throw ContractError("checkpoint_bits needs n >= 2 and T >= 1");
  return Rational::make((n - 1) * b_model, period);
}

Rational prediction_bits(std::uint64_t n, std::uint64_t period, std::uint64_t b_predictions, std::uint64_t batch) {
  if (n < 2 || period < 1) throw ContractError("prediction_bits needs n >= 2 and T >= 1");
  return Rational::make((n - 1) * b_predictions * batch, period);
}

GradientMap all_reduce_grads(std::span<const GradientMap> grads) {
  if (grads.empty()) throw ContractError("all_reduce over zero devices");
  GradientMap out;
  for (const auto& [name, g] : grads.front()) out.emplace(name, Tensor::zeros_like(g));
  for (const GradientMap& device : grads) {
    if (device.size() != out.size()) throw ContractError("all_reduce: devices disagree on gradient keys");
    for (const auto& [name, g] : device) {
      auto it = out.find(name);
      if (it == out.end()) throw ContractError("all_reduce: unexpected gradient " + name);
      if (!it->second.same_shape(g)) throw ContractError("all_reduce: shape mismatch for " + name);
      add_inplace(it->second, g);
    }
  }
  const auto m = static_cast<double>(grads.size());
  for (auto& entry : out) {
    for (double& v : entry.second.data()) v = v / m;
  }
  return out;
}

CommLedger::CommLedger(std::size_t n_groups) : iteration_(n_groups, 0), cumulative_(n_groups, 0) {}

void CommLedger::begin_iteration() { std::fill(iteration_.begin(), iteration_.end(), 0); }

void CommLedger::charge(std::size_t group, std::uint64_t bits) {
  iteration_.at(group) += bits;
  cumulative_.at(group) += bits;
}

StaleCheckpointStore::StaleCheckpointStore(std::span<const Parameters> initial, std::size_t delay)
    : snapshots_(initial.size()), delay_(delay) {
  for (std::size_t g = 0; g < initial.size(); ++g) snapshots_[g].push_back({0, initial[g]});
}

void StaleCheckpointStore::publish(std::size_t group, const Parameters& params, std::size_t iteration) {
  const std::vector<std::uint8_t> wire = serialize(params);
  snapshots_.at(group).push_back({iteration, deserialize(wire)});
}

void StaleCheckpointStore::settle(std::size_t group, std::size_t k) {
  auto& q = snapshots_.at(group);
  // Drop the front while the next snapshot is already visible at k.
  while (q.size() > 1 && k > q[1].iteration + delay_) q.pop_front();
}

const Parameters& StaleCheckpointStore::copy(std::size_t group, std::size_t k) {
  settle(group, k);
  return snapshots_[group].front().params;
}

std::size_t StaleCheckpointStore::source_iteration(std::size_t group, std::size_t k) {
  settle(group, k);
  return snapshots_[group].front().iteration;
}

Synchronizer::Synchronizer(SyncStrategy strategy, std::vector<std::uint64_t> b_model,
                           std::vector<std::uint64_t> b_predictions, std::span<const Parameters> initial)
    : strategy_(strategy),
      b_model_(std::move(b_model)),
      b_predictions_(std::move(b_predictions)),
      ledger_(strategy.n_groups) {
  strategy_.validate();
  if (b_model_.size() != strategy_.n_groups || b_predictions_.size() != strategy_.n_groups ||
      initial.size() != strategy_.n_groups) {
    throw ContractError("synchronizer: one b_model, b_predictions and parameter set per group required");
  }
  if (strategy_.kind == SyncKind::codistill_checkpoints) store_.emplace(initial, strategy_.checkpoint_delay);
}

std::vector<std::vector<Tensor>> Synchronizer::gather_peer_logits(std::size_t k, std::span<const GroupView> groups,
                                                                  std::vector<std::vector<std::size_t>>* sources) {
  const std::size_t n = strategy_.n_groups;
  if (groups.size() != n) throw ContractError("gather_peer_logits: one view per group required");
  ledger_.begin_iteration();
  std::vector<std::vector<Tensor>> peers(n);
  if (sources) sources->assign(n, {});

  const bool intra = strategy_.devices_per_group > 1 &&
                     (strategy_.kind == SyncKind::all_reduce || strategy_.count_intra_group);
  if (intra) {
    for (std::size_t g = 0; g < n; ++g) ledger_.charge(g, allreduce_bits(b_model_[g]));
  }

  switch (strategy_.kind) {
    case SyncKind::all_reduce:
      break;
    case SyncKind::codistill_predictions: {
      if (!strategy_.exchanges_at(k)) break;
      const Minibatch& ref = *groups[0].batch;
      for (std::size_t g = 1; g < n; ++g) {
        const Minibatch& b = *groups[g].batch;
        if (b.indices != ref.indices || !bit_equal(b.x, ref.x) || b.y != ref.y) {
          throw CoordinatedSamplingError("prediction exchange at iteration " + std::to_string(k) + ": group " +
                                         std::to_string(g) + " processed a different minibatch than group 0");
        }
      }
      const std::uint64_t batch = ref.y.size();
      for (std::size_t g = 0; g < n; ++g) {
        std::uint64_t received = 0;
        for (std::size_t j = 0; j < n; ++j) {
          if (j == g) continue;
          peers[g].push_back(*groups[j].logits);
          received += b_predictions_[j] * batch;
        }
        ledger_.charge(g, received);
      }
      break;
    }
    case SyncKind::codistill_checkpoints: {
      for (std::size_t g = 0; g < n; ++g) {
        for (std::size_t j = 0; j < n; ++j) {
          if (j == g) continue;
          peers[g].push_back(predict(*groups[j].spec, store_->copy(j, k), groups[g].batch->x));
          if (sources) (*sources)[g].push_back(store_->source_iteration(j, k));
        }
      }
      break;
    }
  }
  return peers;
}

void Synchronizer::end_iteration(std::size_t k, std::span<const Parameters> params) {
  if (strategy_.kind != SyncKind::codistill_checkpoints || !strategy_.exchanges_at(k)) return;
  const std::size_t n = strategy_.n_groups;
  for (std::size_t g = 0; g < n; ++g) store_->publish(g, params[g], k);
  for (std::size_t g = 0; g < n; ++g) {
    std::uint64_t received = 0;
    for (std::size_t j = 0; j < n; ++j) {
      if (j != g) received += b_model_[j];
    }
    ledger_.charge(g, received);
  }
}

}  // namespace codistillery
