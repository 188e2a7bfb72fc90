#pragma once

// Small experiment builders and exact-equivalence checks shared by the
// harness tests and the acceptance binary.

#include <string>
#include <vector>

#include "codistillery/harness.hpp"

namespace experiments {

using namespace codistillery;

inline ModelSpec mlp(std::size_t input_dim, std::vector<std::size_t> widths, std::size_t classes) {
  ModelSpec spec;
  spec.input_dim = input_dim;
  spec.hidden_widths = std::move(widths);
  spec.num_classes = classes;
  return spec;
}

/// A few-second configuration on a small multi-view task.
inline ExperimentConfig small_config(SyncKind kind, std::size_t n_groups, std::size_t iterations) {
  ExperimentConfig cfg;
  cfg.strategy.kind = kind;
  cfg.strategy.n_groups = n_groups;
  cfg.strategy.per_device_batch = 16;
  cfg.data.n_views = 4;
  cfg.data.dims_per_view = 3;
  cfg.data.num_classes = 3;
  cfg.data.train_size = 320;
  cfg.data.val_size = 200;
  cfg.data.seed = 5;
  cfg.models.assign(n_groups, mlp(cfg.data.input_dim(), {24, 12}, 3));
  cfg.iterations = iterations;
  cfg.schedules.lr.base = 0.05;
  cfg.schedules.lr.total_epochs = 100;
  cfg.seeds = {0};
  if (kind == SyncKind::codistill_predictions) cfg.sampling = SamplingMode::coordinated;
  return cfg;
}

/// Metrics that do not involve communication.
inline bool same_training_metrics(const MetricsRow& a, const MetricsRow& b) {
  return a.seed == b.seed && a.iteration == b.iteration && a.epoch == b.epoch && a.train_loss == b.train_loss &&
         a.supervised == b.supervised && a.l2 == b.l2 && a.val_acc == b.val_acc &&
         a.dist_from_init == b.dist_from_init && a.lr == b.lr && a.wd == b.wd;
}

struct Check {
  bool ok = true;
  std::string detail;

  void fail(std::string why) {
    if (ok) detail = std::move(why);
    ok = false;
  }
};

/// An n-group codistillation run with alpha = 0 against n one-group runs
/// that replay each group's seeds.
inline Check alpha_zero_matches_independent(ExperimentConfig codistill) {
  Check check;
  codistill.schedules.alpha.kind = AlphaKind::constant;
  codistill.schedules.alpha.base = 0.0;
  const ExperimentResult joint = run_experiment(codistill);
  const std::size_t n = codistill.strategy.n_groups;
  for (std::size_t g = 0; g < n; ++g) {
    ExperimentConfig solo = codistill;
    solo.strategy.kind = SyncKind::all_reduce;
    solo.strategy.n_groups = 1;
    solo.models = {codistill.models[g]};
    solo.group_index_offset = g;
    const ExperimentResult alone = run_experiment(solo);
    for (std::size_t s = 0; s < codistill.seeds.size(); ++s) {
      if (!bit_equal(alone.final_params[s][0], joint.final_params[s][g])) {
        check.fail("final parameters differ for seed " + std::to_string(codistill.seeds[s]) + " group " +
                   std::to_string(g));
      }
    }
    std::size_t j = 0;
    for (const MetricsRow& row : joint.rows) {
      if (row.group != g) continue;
      if (!same_training_metrics(row, alone.rows.at(j))) {
        check.fail("metrics differ at iteration " + std::to_string(row.iteration) + " group " + std::to_string(g));
      }
      ++j;
    }
    if (j != alone.rows.size()) check.fail("row counts differ");
  }
  return check;
}

/// all_reduce over m devices of batch b against one device with batch m * b
/// whose reductions are blocked per b rows. Plain SGD.
inline Check large_batch_matches(ExperimentConfig base, std::size_t devices, std::size_t per_device) {
  Check check;
  base.strategy.kind = SyncKind::all_reduce;
  base.strategy.n_groups = 1;
  base.models.resize(1);
  base.optimizer.kind = OptimizerKind::sgd;
  base.optimizer.momentum = 0.0;

  ExperimentConfig multi = base;
  multi.strategy.devices_per_group = devices;
  multi.strategy.per_device_batch = per_device;
  ExperimentConfig single = base;
  single.strategy.devices_per_group = 1;
  single.strategy.per_device_batch = devices * per_device;
  single.reduction_block = per_device;

  const ExperimentResult a = run_experiment(multi);
  const ExperimentResult b = run_experiment(single);
  if (a.rows.size() != b.rows.size()) check.fail("row counts differ");
  for (std::size_t i = 0; i < std::min(a.rows.size(), b.rows.size()); ++i) {
    if (!same_training_metrics(a.rows[i], b.rows[i])) {
      check.fail("metrics differ at iteration " + std::to_string(a.rows[i].iteration));
      break;
    }
  }
  for (std::size_t s = 0; s < base.seeds.size(); ++s) {
    if (!bit_equal(a.final_params[s][0], b.final_params[s][0])) check.fail("final parameters differ");
  }
  return check;
}

}  // namespace experiments
