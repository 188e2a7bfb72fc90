#include <doctest.h>

#include <bit>
#include <cstdint>
#include <vector>

#include "codistillery/data.hpp"
#include "codistillery/errors.hpp"
#include "codistillery/model.hpp"
#include "codistillery/rng.hpp"
#include "codistillery/sync.hpp"
#include "support/oracle.hpp"

using namespace codistillery;

namespace {

// Tiny groups sharing one coordinated minibatch, for driving a Synchronizer.
struct Harness {
  ModelSpec spec = oracle::mlp_spec(3, {4}, 2);
  std::vector<Parameters> params;
  Minibatch batch;
  std::vector<Tensor> logits;

  explicit Harness(std::size_t n, std::size_t batch_size = 4) {
    Rng rng(1);
    for (std::size_t g = 0; g < n; ++g) params.push_back(init_parameters(spec, g));
    batch.x = oracle::random_tensor(rng, {batch_size, 3});
    batch.y.assign(batch_size, 0);
    for (std::size_t i = 0; i < batch_size; ++i) batch.indices.push_back(i);
    for (std::size_t g = 0; g < n; ++g) logits.push_back(predict(spec, params[g], batch.x));
  }

  std::vector<GroupView> views() const {
    std::vector<GroupView> out;
    for (std::size_t g = 0; g < params.size(); ++g) out.push_back({&spec, &params[g], &batch, &logits[g]});
    return out;
  }
};

SyncStrategy strategy(SyncKind kind, std::size_t n, std::size_t period) {
  SyncStrategy s;
  s.kind = kind;
  s.n_groups = n;
  s.exchange_period = period;
  return s;
}

}  // namespace

TEST_CASE("all_reduce matches a left-to-right mean") {
  Rng rng(3);
  for (std::size_t m : {1, 2, 3, 4, 7}) {
    std::vector<GradientMap> devices(m);
    for (auto& d : devices) {
      d.emplace("a", oracle::random_tensor(rng, {3, 5}));
      d.emplace("b", oracle::random_tensor(rng, {5}));
    }
    const GradientMap mean = all_reduce_grads(devices);
    for (const char* name : {"a", "b"}) {
      const Tensor& got = mean.at(name);
      for (std::size_t i = 0; i < got.size(); ++i) {
        double acc = 0.0;
        for (const auto& d : devices) acc = acc + d.at(name)[i];
        const double expected = acc / static_cast<double>(m);
        CHECK(std::bit_cast<std::uint64_t>(expected) == std::bit_cast<std::uint64_t>(got[i]));
      }
    }
  }
}

TEST_CASE("all_reduce rejects inconsistent devices") {
  std::vector<GradientMap> devices(2);
  devices[0].emplace("a", Tensor({2}));
  devices[1].emplace("b", Tensor({2}));
  CHECK_THROWS_AS(all_reduce_grads(devices), ContractError);
  devices[1].clear();
  devices[1].emplace("a", Tensor({3}));
  CHECK_THROWS_AS(all_reduce_grads(devices), ContractError);
  devices[1].emplace("c", Tensor({2}));
  CHECK_THROWS_AS(all_reduce_grads(devices), ContractError);
  CHECK_THROWS_AS(all_reduce_grads(std::vector<GradientMap>{}), ContractError);
}

TEST_CASE("communication formulas at the reference point") {
  CHECK(allreduce_bits(800000000) == 1600000000u);
  const Rational pred = prediction_bits(2, 5, 32000, 256);
  CHECK(pred == Rational{1638400, 1});
  const Rational ratio = Rational{allreduce_bits(800000000), 1} / pred;
  CHECK(ratio == Rational{15625, 16});
  CHECK(ratio.value() == 976.5625);
  CHECK(checkpoint_bits(3, 4, 10) == Rational{5, 1});
  CHECK(checkpoint_bits(2, 3, 10) == Rational{10, 3});
  CHECK(Rational::make(6, 4) == Rational{3, 2});
  CHECK_THROWS_AS(checkpoint_bits(1, 1, 10), ContractError);
  CHECK_THROWS_AS(prediction_bits(2, 0, 1, 1), ContractError);
  CHECK_THROWS_AS(Rational::make(1, 0), ContractError);
}

TEST_CASE("cumulative ledger equals iterations times the formula") {
  constexpr std::size_t kIterations = 1000;
  constexpr std::uint64_t kBPred = 64 * 2;
  for (std::size_t n : {2, 3, 4}) {
    for (std::size_t period : {1, 5, 10, 50}) {
      CAPTURE(n);
      CAPTURE(period);
      Harness h(n);
      const std::uint64_t b_model = 8 * serialized_size(h.spec);
      for (SyncKind kind : {SyncKind::codistill_predictions, SyncKind::codistill_checkpoints}) {
        Synchronizer sync(strategy(kind, n, period), std::vector<std::uint64_t>(n, b_model),
                          std::vector<std::uint64_t>(n, kBPred), h.params);
        for (std::size_t k = 1; k <= kIterations; ++k) {
          sync.gather_peer_logits(k, h.views());
          sync.end_iteration(k, h.params);
        }
        const Rational per_iteration = kind == SyncKind::codistill_predictions
                                           ? prediction_bits(n, period, kBPred, h.batch.y.size())
                                           : checkpoint_bits(n, period, b_model);
        for (std::size_t g = 0; g < n; ++g) {
          CHECK(sync.ledger().cumulative(g) * per_iteration.den == kIterations * per_iteration.num);
        }
      }
    }
  }
}

TEST_CASE("prediction traffic is charged only on exchange iterations") {
  Harness h(3);
  Synchronizer sync(strategy(SyncKind::codistill_predictions, 3, 4), {1, 1, 1}, {10, 20, 30}, h.params);
  for (std::size_t k = 1; k <= 8; ++k) {
    const auto peers = sync.gather_peer_logits(k, h.views());
    if (k % 4 == 0) {
      CHECK(peers[0].size() == 2);
      CHECK(bit_equal(peers[0][0], h.logits[1]));
      CHECK(bit_equal(peers[2][1], h.logits[1]));
      // Receivers pay for what their peers send: b_pred of each sender times the batch.
      CHECK(sync.ledger().bits_this_iteration(0) == (20 + 30) * 4u);
      CHECK(sync.ledger().bits_this_iteration(1) == (10 + 30) * 4u);
    } else {
      CHECK(peers[0].empty());
      CHECK(sync.ledger().bits_this_iteration(0) == 0);
    }
  }
  CHECK(sync.ledger().cumulative(2) == 2 * (10 + 20) * 4u);
}

TEST_CASE("all_reduce charges intra-group traffic only with several devices") {
  Harness h(1);
  SyncStrategy s = strategy(SyncKind::all_reduce, 1, 1);
  Synchronizer single(s, {100}, {1}, h.params);
  single.gather_peer_logits(1, h.views());
  CHECK(single.ledger().cumulative(0) == 0);
  s.devices_per_group = 4;
  Synchronizer multi(s, {100}, {1}, h.params);
  for (std::size_t k = 1; k <= 3; ++k) multi.gather_peer_logits(k, h.views());
  CHECK(multi.ledger().cumulative(0) == 3 * 200u);

  Harness two(2);
  SyncStrategy p = strategy(SyncKind::codistill_predictions, 2, 1);
  p.devices_per_group = 2;
  p.count_intra_group = true;
  Synchronizer counted(p, {100, 100}, {1, 1}, two.params);
  counted.gather_peer_logits(1, two.views());
  CHECK(counted.ledger().bits_this_iteration(0) == 200u + 4u);
}

TEST_CASE("checkpoint peers come from the last exchange") {
  for (std::size_t period : {1, 5, 10}) {
    Harness h(2);
    Synchronizer sync(strategy(SyncKind::codistill_checkpoints, 2, period), {1, 1}, {1, 1}, h.params);
    std::vector<std::vector<Parameters>> history{h.params};
    for (std::size_t k = 1; k <= 100; ++k) {
      std::vector<std::vector<std::size_t>> sources;
      const auto peers = sync.gather_peer_logits(k, h.views(), &sources);
      const std::size_t expected = period * ((k - 1) / period);
      CHECK(sources[0] == std::vector<std::size_t>{expected});
      CHECK(sources[1] == std::vector<std::size_t>{expected});
      CHECK(bit_equal(peers[0][0], predict(h.spec, history[expected][1], h.batch.x)));
      for (auto& p : h.params) p.at(bias_name(1))[0] += 0.125;
      history.push_back(h.params);
      sync.end_iteration(k, h.params);
    }
  }
}

TEST_CASE("checkpoint delay postpones visibility") {
  const ModelSpec spec = oracle::mlp_spec(2, {2}, 2);
  std::vector<Parameters> initial{init_parameters(spec, 0), init_parameters(spec, 1)};
  StaleCheckpointStore store(initial, 3);
  Parameters later = init_parameters(spec, 7);
  store.publish(1, later, 5);
  later.at(weight_name(0))[0] = 99.0;
  CHECK(store.source_iteration(1, 8) == 0);
  CHECK(store.source_iteration(1, 9) == 5);
  CHECK(bit_equal(store.copy(1, 9), init_parameters(spec, 7)));
  CHECK(bit_equal(store.copy(0, 9), initial[0]));
}

TEST_CASE("prediction exchange demands coordinated minibatches") {
  Harness h(2);
  Synchronizer sync(strategy(SyncKind::codistill_predictions, 2, 2), {1, 1}, {1, 1}, h.params);
  Minibatch other = h.batch;
  other.indices[0] = 9;
  std::vector<GroupView> views = h.views();
  views[1].batch = &other;
  CHECK_NOTHROW(sync.gather_peer_logits(1, views));
  CHECK_THROWS_AS(sync.gather_peer_logits(2, views), CoordinatedSamplingError);
  other = h.batch;
  other.x.at(0, 0) += 1.0;
  CHECK_THROWS_AS(sync.gather_peer_logits(4, views), CoordinatedSamplingError);
}

TEST_CASE("strategy validation") {
  CHECK_THROWS_AS(strategy(SyncKind::all_reduce, 2, 1).validate(), ConfigError);
  CHECK_THROWS_AS(strategy(SyncKind::codistill_predictions, 1, 1).validate(), ConfigError);
  CHECK_THROWS_AS(strategy(SyncKind::codistill_checkpoints, 2, 0).validate(), ConfigError);
  CHECK(parse_sync_kind("codistill_checkpoints") == SyncKind::codistill_checkpoints);
  CHECK_FALSE(parse_sync_kind("gossip").has_value());
  Harness h(2);
  CHECK_THROWS_AS(Synchronizer(strategy(SyncKind::codistill_predictions, 2, 1), {1}, {1, 1}, h.params), ContractError);
}
